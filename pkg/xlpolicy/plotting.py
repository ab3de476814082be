"""
Loss-curve SVG: actor and critic loss per batch as two polylines

Every metrics row contributes exactly one point to each polyline, and the
root element records the row count in ``data-rows``.
"""
import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np

from xlpolicy.files import atomic_write_text
from xlpolicy.models import MetricRow

logger = logging.getLogger(__name__)

WIDTH = 640
HEIGHT = 360
MARGIN = 40
SERIES = (("actor_loss", "#1f77b4"), ("critic_loss", "#d62728"))


def _points(values: np.ndarray, low: float, high: float) -> List[Tuple[float, float]]:
    n = values.size
    span_x = WIDTH - 2 * MARGIN
    span_y = HEIGHT - 2 * MARGIN
    scale = (high - low) or 1.0
    xs = MARGIN + (np.arange(n) / max(n - 1, 1)) * span_x
    ys = HEIGHT - MARGIN - ((values - low) / scale) * span_y
    return list(zip(xs.tolist(), ys.tolist()))


def loss_curve_svg(rows: Sequence[MetricRow], title: str = "training losses") -> str:
    series = {name: np.asarray([getattr(r, name) for r in rows], dtype=np.float64) for name, _ in SERIES}
    finite = np.concatenate([v[np.isfinite(v)] for v in series.values()]) if rows else np.zeros(0)
    low, high = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" data-rows="{len(rows)}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<text x="{WIDTH / 2}" y="{MARGIN / 2}" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 8}" text-anchor="middle" font-size="11">batch</text>',
        f'<text x="4" y="{HEIGHT - MARGIN}" font-size="10">{low:.3g}</text>',
        f'<text x="4" y="{MARGIN}" font-size="10">{high:.3g}</text>',
    ]
    for k, (name, color) in enumerate(SERIES):
        values = np.nan_to_num(series[name], nan=high, posinf=high, neginf=low)
        points = " ".join(f"{x:.2f},{y:.2f}" for x, y in _points(values, low, high))
        lines.append(
            f'<polyline class="{name}" fill="none" stroke="{color}" stroke-width="1.5" '
            f'data-points="{values.size}" points="{points}"/>'
        )
        lines.append(
            f'<text x="{WIDTH - MARGIN - 90}" y="{MARGIN + 14 * (k + 1)}" font-size="11" fill="{color}">{name}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_loss_curve(path: Union[str, Path], rows: Sequence[MetricRow], title: str = "training losses") -> Path:
    return atomic_write_text(path, loss_curve_svg(rows, title))
