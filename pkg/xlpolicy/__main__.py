import sys

from xlpolicy.main import main

sys.exit(main())
