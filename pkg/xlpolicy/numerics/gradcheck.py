"""
Central finite-difference gradient checks
"""
from typing import Callable, List, Sequence, Tuple

import numpy as np

from xlpolicy.numerics.tensor import Tensor, no_grad


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def numeric_partial(loss_fn: Callable[[], Tensor], tensor: Tensor, flat_index: int, h: float = 1e-5) -> float:
    """d loss / d tensor[flat_index] by central differences (tensor restored afterwards)"""
    view = tensor.data.reshape(-1)
    original = view[flat_index]
    with no_grad():
        view[flat_index] = original + h
        plus = loss_fn().item()
        view[flat_index] = original - h
        minus = loss_fn().item()
    view[flat_index] = original
    return (plus - minus) / (2.0 * h)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    rng: np.random.Generator,
    samples: int = 10,
    h: float = 1e-5,
) -> List[Tuple[int, int, float, float]]:
    """
    Compare analytic and numeric partials at randomly sampled entries.

    ``loss_fn`` must rebuild the loss from the current tensor values. Any
    gradients already on ``tensors`` are cleared first.

    Returns:
        (tensor position, flat index, analytic, numeric) per sample
    """
    for t in tensors:
        t.zero_grad()
    loss_fn().backward()
    analytic = [t.grad.reshape(-1).copy() if t.grad is not None else np.zeros(t.size) for t in tensors]
    for t in tensors:
        t.zero_grad()

    sizes = np.array([t.size for t in tensors], dtype=np.float64)
    results = []
    for _ in range(samples):
        which = int(rng.choice(len(tensors), p=sizes / sizes.sum()))
        index = int(rng.integers(tensors[which].size))
        numeric = numeric_partial(loss_fn, tensors[which], index, h)
        results.append((which, index, float(analytic[which][index]), numeric))
    return results


def max_relative_error(results: Sequence[Tuple[int, int, float, float]], floor: float = 1e-6) -> float:
    return max(relative_error(a, n, floor) for _, _, a, n in results)
