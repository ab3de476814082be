"""
Forward-pass latency benchmark

Modes:
- dense: XL encoder with full causal attention over memory + segment
- sparse: same weights, sliding-window attention
- lstm: single-layer recurrent baseline with the same input/output widths
- cnn: causal dilated temporal-convolution baseline, same widths

Every (mode, length) pair is timed after a warmup with ``time.perf_counter``;
mean and 95th percentile are reported. Before any timing, dense and sparse
outputs are checked for bit-equality with a window that covers every key.
"""
import csv
import io
import logging
import time
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from xlpolicy.config import RunConfig, XlConfig, get_settings
from xlpolicy.errors import ContractError
from xlpolicy.files import atomic_write_text
from xlpolicy.models import BenchRow
from xlpolicy.numerics import Linear, Module, Tensor, as_tensor, concat, linear, make_rng, no_grad, parameter
from xlpolicy.numerics.module import glorot
from xlpolicy.xl_encoder import XlEncoder, XlMemory

logger = logging.getLogger(__name__)

BENCH_MODES = ("dense", "sparse", "lstm", "cnn")
BENCH_CSV_HEADER = ("mode", "seq_len", "mean_s", "p95_s")
DEFAULT_SPARSE_WINDOW = 32
MIN_WARMUP = 5
MIN_REPEATS = 30


class LstmEncoder(Module):
    """Single-layer LSTM: (T, d_in) -> (T, d_model)"""

    def __init__(self, d_in: int, d_model: int, rng: np.random.Generator):
        self.d_model = d_model
        self.weight = parameter(glorot(rng, d_in + d_model, 4 * d_model))
        bias = np.zeros(4 * d_model)
        bias[d_model:2 * d_model] = 1.0  # forget gate
        self.bias = parameter(bias)

    def __call__(self, features) -> Tensor:
        x = as_tensor(features)
        d = self.d_model
        h = Tensor(np.zeros((1, d)))
        c = Tensor(np.zeros((1, d)))
        outputs = []
        for t in range(x.shape[0]):
            z = linear(concat([x[t:t + 1], h], axis=1), self.weight, self.bias)
            i, f = z[:, :d].sigmoid(), z[:, d:2 * d].sigmoid()
            g, o = z[:, 2 * d:3 * d].tanh(), z[:, 3 * d:].sigmoid()
            c = f * c + i * g
            h = o * c.tanh()
            outputs.append(h)
        return concat(outputs, axis=0)


class TemporalConvEncoder(Module):
    """
    Causal 1-D convolutions over time: (T, d_in) -> (T, d_model).

    Each layer sees the current step and ``kernel - 1`` earlier steps spaced
    by its dilation (zero-padded before the start), followed by tanh.
    """

    def __init__(self, d_in: int, d_model: int, rng: np.random.Generator,
                 kernel: int = 3, dilations: Sequence[int] = (1, 2, 4)):
        self.kernel = kernel
        self.dilations = tuple(dilations)
        widths = [d_in] + [d_model] * len(self.dilations)
        self.layers = [Linear(kernel * widths[i], d_model, rng) for i in range(len(self.dilations))]

    def _taps(self, x: Tensor, dilation: int) -> Tensor:
        steps, width = x.shape
        pad = (self.kernel - 1) * dilation
        padded = concat([Tensor(np.zeros((pad, width))), x], axis=0) if pad else x
        taps = [padded[pad - j * dilation:pad - j * dilation + steps] for j in range(self.kernel)]
        return concat(taps, axis=1)

    def __call__(self, features) -> Tensor:
        h = as_tensor(features)
        for layer, dilation in zip(self.layers, self.dilations):
            h = layer(self._taps(h, dilation)).tanh()
        return h


def _xl_config(base: XlConfig, seq_len: int, window) -> XlConfig:
    return base.model_copy(update={"window": window, "max_segment_len": max(base.max_segment_len, seq_len)})


def _full_memory(cfg: XlConfig, seed: int) -> XlMemory:
    rng = make_rng(seed, "bench", "memory")
    layers = [rng.normal(0.0, 1.0, size=(cfg.mem_len, cfg.d_model)) for _ in range(cfg.n_layers)]
    return XlMemory(layers, cfg.fingerprint())


def build_forward(mode: str, config: RunConfig, seq_len: int, seed: int,
                  window: Optional[int] = None) -> Callable[[np.ndarray], np.ndarray]:
    """
    Forward function for one benchmark mode. Dense and sparse encoders are
    built from the same RNG stream, so they share weights.
    """
    d_fused = config.fusion.d_fused
    if mode == "lstm":
        lstm = LstmEncoder(d_fused, config.xl.d_model, make_rng(seed, "bench", "lstm"))
        return lambda features: lstm(features).data
    if mode == "cnn":
        cnn = TemporalConvEncoder(d_fused, config.xl.d_model, make_rng(seed, "bench", "cnn"))
        return lambda features: cnn(features).data

    if mode not in ("dense", "sparse"):
        raise ContractError(f"unknown bench mode {mode!r}; expected one of {BENCH_MODES}")
    if mode == "dense":
        window = "dense"
    elif window is None:
        window = config.xl.window if config.xl.sparse else DEFAULT_SPARSE_WINDOW
    cfg = _xl_config(config.xl, seq_len, window)
    encoder = XlEncoder(cfg, d_fused, make_rng(seed, "bench", "xl"))
    memory = _full_memory(cfg, seed)
    return lambda features: encoder.encode_segment(features, memory)[0].data


def bench_input(config: RunConfig, seq_len: int, seed: int) -> np.ndarray:
    return make_rng(seed, "bench", "input", seq_len).normal(0.0, 1.0, size=(seq_len, config.fusion.d_fused))


def check_equivalence(config: RunConfig, seq_len: int, seed: int) -> None:
    """
    Raises:
        ContractError: dense and sparse (window >= T + mem_len) outputs differ
    """
    features = bench_input(config, seq_len, seed)
    wide = seq_len + config.xl.mem_len
    with no_grad():
        dense = build_forward("dense", config, seq_len, seed)(features)
        sparse = build_forward("sparse", config, seq_len, seed, window=wide)(features)
    if not np.array_equal(dense, sparse):
        diff = float(np.abs(dense - sparse).max())
        raise ContractError(f"sparse (window={wide}) and dense outputs differ at T={seq_len}: max |diff| {diff}")
    logger.info(f"Dense/sparse equivalence holds at T={seq_len} (window={wide})")


def time_forward(forward: Callable[[np.ndarray], np.ndarray], features: np.ndarray,
                 warmup: int, repeats: int) -> Tuple[float, float]:
    """(mean, p95) seconds over ``repeats`` timed calls after ``warmup`` untimed calls"""
    with no_grad():
        for _ in range(warmup):
            forward(features)
        times = np.empty(repeats)
        for r in range(repeats):
            start = time.perf_counter()
            forward(features)
            times[r] = time.perf_counter() - start
    return float(times.mean()), float(np.percentile(times, 95))


def run_bench(config: RunConfig, seq_lens: Sequence[int], modes: Sequence[str] = ("dense", "sparse"),
              seed: Optional[int] = None, warmup: Optional[int] = None,
              repeats: Optional[int] = None) -> List[BenchRow]:
    """
    Time every (mode, length) pair.

    Warmup and repeat counts default to the process settings and are never
    lower than 5 and 30.

    Raises:
        ContractError: unknown mode, non-positive length or failed
            equivalence gate
    """
    settings = get_settings()
    seed = config.seed if seed is None else seed
    warmup = max(MIN_WARMUP, settings.bench_warmup if warmup is None else warmup)
    repeats = max(MIN_REPEATS, settings.bench_repeats if repeats is None else repeats)
    unknown = [m for m in modes if m not in BENCH_MODES]
    if unknown:
        raise ContractError(f"unknown bench modes {unknown}; expected a subset of {BENCH_MODES}")
    if any(int(n) < 1 for n in seq_lens):
        raise ContractError(f"sequence lengths must be positive, got {list(seq_lens)}")

    if "dense" in modes and "sparse" in modes:
        for seq_len in seq_lens:
            check_equivalence(config, int(seq_len), seed)

    rows = []
    for seq_len in seq_lens:
        seq_len = int(seq_len)
        features = bench_input(config, seq_len, seed)
        for mode in modes:
            mean_s, p95_s = time_forward(build_forward(mode, config, seq_len, seed), features, warmup, repeats)
            rows.append(BenchRow(mode=mode, seq_len=seq_len, mean_s=mean_s, p95_s=p95_s))
            logger.info(f"bench {mode} T={seq_len}: mean {mean_s:.6f}s p95 {p95_s:.6f}s")
    return rows


def bench_csv(rows: Sequence[BenchRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(BENCH_CSV_HEADER)
    for row in rows:
        writer.writerow(row.as_csv_fields())
    return buffer.getvalue()


def write_bench_csv(path: Union[str, Path], rows: Sequence[BenchRow]) -> Path:
    return atomic_write_text(path, bench_csv(rows))
