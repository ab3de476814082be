"""
Transformer-XL encoder with segment-level recurrence

Each layer attends over its cached memory (hidden states that entered the
layer during earlier segments) followed by the current segment. Position
information comes from two sources:

- a learned absolute embedding added at input projection, indexed by the
  position inside the current segment
- a learned per-head bias on attention logits, indexed by the key-query
  offset ``(mem + t) - j``

With a finite ``window`` each query only sees the most recent ``window``
positions (memory slots included). Long segments then use a blocked local
kernel so cost grows with ``T * window`` instead of ``T * (mem + T)``.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Tuple, Union

import numpy as np

from xlpolicy.config import XlConfig
from xlpolicy.errors import ConfigError, ContractError, ShapeError, StateError
from xlpolicy.numerics import (
    LayerNorm,
    Linear,
    Module,
    Tensor,
    as_tensor,
    concat,
    masked_fill,
    matmul,
    parameter,
    softmax,
)

logger = logging.getLogger(__name__)

Window = Union[int, str]


@dataclass
class XlMemory:
    """
    Per-layer cache of hidden states from earlier segments.

    Attributes:
        layers: one (mem_len_effective, d_model) array per layer; plain
            arrays, so nothing here is ever part of a gradient graph
        fingerprint: (d_model, n_layers, mem_len) of the producing config
    """
    layers: List[np.ndarray]
    fingerprint: Tuple[int, int, int]

    @classmethod
    def empty(cls, cfg: XlConfig) -> "XlMemory":
        return cls([np.zeros((0, cfg.d_model)) for _ in range(cfg.n_layers)], cfg.fingerprint())

    @property
    def length(self) -> int:
        return self.layers[0].shape[0] if self.layers else 0

    def copy(self) -> "XlMemory":
        return XlMemory([layer.copy() for layer in self.layers], self.fingerprint)


# ============================================================================
# Masks and positional bias
# ============================================================================

def attention_mask(T: int, mem: int, window: Window = "dense") -> np.ndarray:
    """
    Boolean (T, mem + T) mask; True where query t may attend key j.

    Key j is allowed iff j <= mem + t and, for a finite window,
    (mem + t) - j < window.

    Raises:
        ContractError: T < 1 or mem < 0
        ConfigError: finite window below 1
    """
    if T < 1 or mem < 0:
        raise ContractError(f"attention_mask needs T >= 1 and mem >= 0, got T={T}, mem={mem}")
    offsets = relative_offsets(T, mem)
    allowed = offsets >= 0
    if window != "dense":
        if not isinstance(window, (int, np.integer)) or window < 1:
            raise ConfigError(f"attention window must be >= 1 or 'dense', got {window!r}")
        allowed &= offsets < window
    return allowed


def relative_offsets(T: int, mem: int) -> np.ndarray:
    """(T, mem + T) integer offsets (mem + t) - j"""
    return (mem + np.arange(T))[:, None] - np.arange(mem + T)[None, :]


def relative_bias(rel_table: Tensor, offsets: np.ndarray, allowed: np.ndarray) -> Tensor:
    """
    Gather per-head biases for an offset grid; output (H, *offsets.shape).

    Disallowed cells read entry 0 (they are masked afterwards anyway).

    Raises:
        ShapeError: an allowed offset falls outside the table
    """
    n_heads, span = rel_table.shape
    live = offsets[allowed]
    if live.size and (live.min() < 0 or live.max() >= span):
        raise ShapeError(f"relative offsets up to {live.max()} exceed bias table width {span}")
    clipped = np.clip(offsets, 0, span - 1)
    index = np.arange(n_heads).reshape((n_heads,) + (1,) * offsets.ndim) * span + clipped[None]
    return rel_table.take(index)


def _gather_rows(x: Tensor, rows: np.ndarray) -> Tensor:
    """x (H, N, dh) -> (H, *rows.shape, dh) selecting rows along N"""
    n_heads, n, dh = x.shape
    head = np.arange(n_heads).reshape((n_heads,) + (1,) * (rows.ndim + 1))
    index = (head * n + rows[None, ..., None]) * dh + np.arange(dh)
    return x.take(index)


# ============================================================================
# Attention kernels
# ============================================================================

def xl_attention(q: Tensor, k: Tensor, v: Tensor, rel_table: Tensor, mask: np.ndarray) -> Tensor:
    """
    Scaled dot-product attention with additive relative-offset bias.

    Args:
        q: (H, T, dh) queries for the current segment
        k, v: (H, mem + T, dh) keys and values over memory then segment
        rel_table: (H, span) learned bias per head and offset
        mask: (T, mem + T) from ``attention_mask``

    Returns:
        (H, T, dh)

    Raises:
        ContractError: some query row has no allowed key
    """
    n_heads, T, dh = q.shape
    S = k.shape[1]
    if mask.shape != (T, S):
        raise ShapeError(f"mask shape {mask.shape} does not match queries {T} x keys {S}")
    if not mask.any(axis=1).all():
        raise ContractError("attention mask leaves a query row without any key")
    bias = relative_bias(rel_table, relative_offsets(T, S - T), mask)
    logits = matmul(q, k.transpose(0, 2, 1)) * (1.0 / math.sqrt(dh)) + bias
    weights = softmax(masked_fill(logits, mask), axis=-1)
    return matmul(weights, v)


def local_attention(q: Tensor, k: Tensor, v: Tensor, rel_table: Tensor, window: int) -> Tensor:
    """
    Sliding-window attention computed block by block.

    Queries are grouped into blocks of ``window`` rows; block b attends the
    2 * window keys starting at ``mem + (b - 1) * window``, which covers the
    window of every query in the block. Result equals ``xl_attention`` with
    ``attention_mask(T, mem, window)`` up to float rounding.
    """
    n_heads, T, dh = q.shape
    S = k.shape[1]
    mem = S - T
    w = int(window)
    n_blocks = -(-T // w)

    r = np.arange(w)
    i = np.arange(2 * w)
    starts = mem + np.arange(n_blocks) * w - w
    q_rows = np.minimum(np.arange(n_blocks)[:, None] * w + r[None, :], T - 1)
    key_pos = starts[:, None] + i[None, :]
    k_rows = np.clip(key_pos, 0, S - 1)

    in_window = (i[None, :] >= r[:, None] + 1) & (i[None, :] <= w + r[:, None])
    in_range = (key_pos >= 0) & (key_pos < S)
    allowed = in_window[None, :, :] & in_range[:, None, :]
    offsets = w + r[:, None] - i[None, :]

    qb = _gather_rows(q, q_rows)
    kb = _gather_rows(k, k_rows)
    vb = _gather_rows(v, k_rows)
    bias = relative_bias(rel_table, offsets, in_window).reshape(n_heads, 1, w, 2 * w)
    logits = matmul(qb, kb.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dh)) + bias
    weights = softmax(masked_fill(logits, allowed), axis=-1)
    out = matmul(weights, vb).reshape(n_heads, n_blocks * w, dh)
    return out[:, :T]


# ============================================================================
# Layers
# ============================================================================

class XlLayer(Module):
    """Pre-norm attention block followed by a tanh feed-forward block"""

    def __init__(self, cfg: XlConfig, rng: np.random.Generator):
        d = cfg.d_model
        self.n_heads = cfg.n_heads
        self.norm_attn = LayerNorm(d)
        self.query = Linear(d, d, rng)
        self.key = Linear(d, d, rng)
        self.value = Linear(d, d, rng)
        self.out = Linear(d, d, rng)
        self.norm_ff = LayerNorm(d)
        self.ff_in = Linear(d, cfg.ff_mult * d, rng)
        self.ff_out = Linear(cfg.ff_mult * d, d, rng)

    def _split_heads(self, x: Tensor) -> Tensor:
        rows, d = x.shape
        return x.reshape(rows, self.n_heads, d // self.n_heads).transpose(1, 0, 2)

    def __call__(self, h: Tensor, memory: np.ndarray, rel_table: Tensor, window: Window) -> Tensor:
        T, d = h.shape
        mem = memory.shape[0]
        full = concat([Tensor(memory), h], axis=0) if mem else h
        normed = self.norm_attn(full)
        q = self._split_heads(self.query(normed[mem:] if mem else normed))
        k = self._split_heads(self.key(normed))
        v = self._split_heads(self.value(normed))

        if window == "dense" or window >= mem + T:
            attended = xl_attention(q, k, v, rel_table, attention_mask(T, mem, window))
        else:
            attended = local_attention(q, k, v, rel_table, window)

        h = h + self.out(attended.transpose(1, 0, 2).reshape(T, d))
        return h + self.ff_out(self.ff_in(self.norm_ff(h)).tanh())


class XlEncoder(Module):
    """
    Stack of XL layers over fused feature sequences.

    Example:
        >>> encoder = XlEncoder(XlConfig(), d_fused=64, rng=make_rng(0, "xl"))
        >>> memory = encoder.initial_memory()
        >>> hidden, memory = encoder.encode_segment(features, memory)
    """

    def __init__(self, cfg: XlConfig, d_fused: int, rng: np.random.Generator):
        self.cfg = cfg
        self.input_proj = Linear(d_fused, cfg.d_model, rng)
        self.pos_emb = parameter(rng.normal(0.0, 0.02, size=(cfg.max_segment_len, cfg.d_model)))
        self.rel_bias = parameter(rng.normal(0.0, 0.02, size=(cfg.n_heads, cfg.mem_len + cfg.max_segment_len)))
        self.layers = [XlLayer(cfg, rng) for _ in range(cfg.n_layers)]
        self.final_norm = LayerNorm(cfg.d_model)

    @property
    def d_fused(self) -> int:
        return self.input_proj.in_features

    def initial_memory(self) -> XlMemory:
        return XlMemory.empty(self.cfg)

    def project_input(self, features) -> Tensor:
        """
        Affine map to d_model plus the segment-local absolute embedding.

        Raises:
            ShapeError: wrong feature width or segment longer than the
                embedding table
        """
        features = as_tensor(features)
        if features.ndim != 2 or features.shape[1] != self.d_fused:
            raise ShapeError(f"expected features of shape (T, {self.d_fused}), got {features.shape}")
        T = features.shape[0]
        if T > self.cfg.max_segment_len:
            raise ShapeError(f"segment length {T} exceeds max_segment_len {self.cfg.max_segment_len}")
        return self.input_proj(features) + self.pos_emb[:T]

    def check_memory(self, memory: XlMemory) -> None:
        if memory.fingerprint != self.cfg.fingerprint() or len(memory.layers) != self.cfg.n_layers:
            raise StateError(
                f"memory was produced by config {memory.fingerprint}, encoder expects {self.cfg.fingerprint()}"
            )
        if any(layer.shape[0] > self.cfg.mem_len for layer in memory.layers):
            raise StateError(f"memory holds more than mem_len={self.cfg.mem_len} states")

    def encode_segment(self, features, memory: XlMemory) -> Tuple[Tensor, XlMemory]:
        """
        Encode one segment and roll the memory forward.

        Returns:
            (hidden (T, d_model), updated memory); the memory for layer l
            keeps the last mem_len states that entered layer l

        Raises:
            StateError: memory came from a different config
        """
        self.check_memory(memory)
        h = self.project_input(features)
        T = h.shape[0]
        if T == 0:
            return h, memory

        keep = self.cfg.mem_len
        new_layers = []
        for layer, cached in zip(self.layers, memory.layers):
            if keep:
                new_layers.append(np.concatenate([cached, h.data], axis=0)[-keep:].copy())
            else:
                new_layers.append(np.zeros((0, self.cfg.d_model)))
            h = layer(h, cached, self.rel_bias, self.cfg.window)
        return self.final_norm(h), XlMemory(new_layers, memory.fingerprint)

    def __call__(self, features, memory: XlMemory) -> Tuple[Tensor, XlMemory]:
        return self.encode_segment(features, memory)
