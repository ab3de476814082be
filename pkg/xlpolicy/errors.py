"""
Exception hierarchy for xlpolicy

Every error also subclasses the matching builtin so callers that only know
about ValueError / RuntimeError still catch them.
"""
from typing import Any, Dict, Optional


class XlPolicyError(Exception):
    """Base class for all xlpolicy errors"""


class ShapeError(XlPolicyError, ValueError):
    """Tensor or feature widths do not agree"""


class ContractError(XlPolicyError, ValueError):
    """A documented precondition was violated"""


class StateError(XlPolicyError, RuntimeError):
    """An object was used in a state that does not allow the call"""


class ConfigError(XlPolicyError, ValueError):
    """Run configuration is invalid or inconsistent"""


class EpisodeFormatError(XlPolicyError, ValueError):
    """Episode file is malformed or carries an unknown version"""


class CheckpointFormatError(XlPolicyError, ValueError):
    """Checkpoint container is malformed or carries an unknown version"""


class ExpertError(XlPolicyError, RuntimeError):
    """Scripted expert cannot act from the given world state"""


class NonFiniteGradientError(ContractError):
    """
    Gradients handed to the optimizer contain NaN or Inf.

    Attributes:
        diagnostics: parameter name -> count of non-finite entries
    """

    def __init__(self, message: str, diagnostics: Dict[str, int]):
        super().__init__(message)
        self.diagnostics = diagnostics


class DivergenceError(XlPolicyError, RuntimeError):
    """
    Training produced a non-finite loss.

    Attributes:
        diagnostics: phase, batch index and the offending values
        last_good_state: parameter snapshot (name -> array) from the last
            finite update, or None when no update succeeded
    """

    def __init__(
        self,
        message: str,
        diagnostics: Dict[str, Any],
        last_good_state: Optional[Dict[str, Any]] = None,
    ):
        super().__init__(message)
        self.diagnostics = diagnostics
        self.last_good_state = last_good_state
