"""DeltaLSTM inference.

Each step thresholds the change of the padded state vector ``s = [x; h]``
against a cached copy, feeds only the surviving deltas through the stacked
weights and accumulates the products in per-gate delta memories. With a zero
threshold the delta memories equal the dense pre-activations, so the output
matches :func:`deltasparse.lstm.lstm_forward`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .cbcsc import BankedWeights, CbcscMatrix, spmspv
from .lstm import GATES, LstmLayerParams, StackedWeights, StackLayout, gate_update, stack_weights
from .quant import QuantConfig, quantize


@dataclass(frozen=True)
class DeltaThreshold:
    theta: float
    raw_theta: float | int

    @classmethod
    def make(cls, theta: float, qcfg: QuantConfig | None = None) -> "DeltaThreshold":
        if theta < 0:
            raise ValueError(f"delta threshold must be non-negative, got {theta}")
        if qcfg is None:
            return cls(float(theta), float(theta))
        return cls(float(theta), quantize(theta, qcfg.act))


def _threshold(theta, integer: bool):
    if isinstance(theta, DeltaThreshold):
        return theta.raw_theta if integer else theta.theta
    return theta


@dataclass
class SparseDeltaVector:
    nzv: np.ndarray
    nzi: np.ndarray
    dense_len: int

    def __post_init__(self):
        self.nzv = np.asarray(self.nzv)
        self.nzi = np.asarray(self.nzi, dtype=np.int64)
        if self.nzv.shape != self.nzi.shape or self.nzi.ndim != 1:
            raise ValueError("nzv and nzi must be 1-d arrays of equal length")
        if self.nzi.size > self.dense_len:
            raise ValueError("more nonzeros than dense_len")
        if self.nzi.size and (np.any(np.diff(self.nzi) <= 0) or self.nzi[0] < 0
                              or self.nzi[-1] >= self.dense_len):
            raise ValueError("nzi must be strictly increasing and inside 0..dense_len-1")

    def __len__(self):
        return int(self.nzi.size)

    def dense(self) -> np.ndarray:
        out = np.zeros(self.dense_len, dtype=self.nzv.dtype)
        out[self.nzi] = self.nzv
        return out

    @classmethod
    def empty(cls, dense_len: int, dtype=np.float64) -> "SparseDeltaVector":
        return cls(np.zeros(0, dtype=dtype), np.zeros(0, dtype=np.int64), dense_len)

    @classmethod
    def concat(cls, a: "SparseDeltaVector", b: "SparseDeltaVector") -> "SparseDeltaVector":
        return cls(np.concatenate([a.nzv, b.nzv]), np.concatenate([a.nzi, b.nzi + a.dense_len]),
                   a.dense_len + b.dense_len)


def delta_encode(current, cache, theta) -> tuple[SparseDeltaVector, np.ndarray]:
    """Threshold ``current - cache``; entries that pass update the cache.

    ``theta`` is a :class:`DeltaThreshold` or a bare number in the units of
    the vectors. The comparison is strict: a change equal to the threshold is
    suppressed.
    """
    current = np.asarray(current)
    cache = np.asarray(cache)
    if current.shape != cache.shape or current.ndim != 1:
        raise ValueError(f"current {current.shape} and cache {cache.shape} must be equal-length vectors")
    thr = _threshold(theta, np.issubdtype(current.dtype, np.integer))
    d = current - cache
    nzi = np.flatnonzero(np.abs(d) > thr)
    new_cache = cache.copy()
    new_cache[nzi] = current[nzi]
    return SparseDeltaVector(d[nzi], nzi, current.size), new_cache


@dataclass
class DeltaLayerState:
    x_cache: np.ndarray
    h_cache: np.ndarray
    delta_mem: dict[str, np.ndarray]
    c: np.ndarray
    h: np.ndarray
    layout: StackLayout
    qcfg: QuantConfig | None = None

    def copy(self) -> "DeltaLayerState":
        return DeltaLayerState(self.x_cache.copy(), self.h_cache.copy(),
                               {g: v.copy() for g, v in self.delta_mem.items()},
                               self.c.copy(), self.h.copy(), self.layout, self.qcfg)


def init_delta_state(params: LstmLayerParams, M: int = 1) -> DeltaLayerState:
    """Zero caches and states; delta memories start at the summed biases."""
    lay = StackLayout(params.input_size, params.hidden_size, M)
    dtype = np.int64 if params.quantized else np.float64
    z = lambda n: np.zeros(n, dtype=dtype)
    return DeltaLayerState(
        x_cache=z(lay.padded_input),
        h_cache=z(lay.padded_hidden),
        delta_mem={g: params.bias_sum(g).astype(dtype) for g in GATES},
        c=z(lay.hidden_size),
        h=z(lay.hidden_size),
        layout=lay,
        qcfg=params.qcfg,
    )


def _accumulate(weights, state: DeltaLayerState, delta: SparseDeltaVector) -> dict[str, np.ndarray]:
    lay = state.layout
    if isinstance(weights, StackedWeights):
        if weights.layout != lay:
            raise ValueError("stacked weights do not match the state layout")
        rows = weights.matrix[:, delta.nzi] @ delta.nzv
        return {g: state.delta_mem[g] + rows[lay.rows(g)] for g in GATES}
    if isinstance(weights, (CbcscMatrix, BankedWeights)):
        if weights.Q != lay.Q:
            raise ValueError(f"weights have {weights.Q} columns, state expects {lay.Q}")
        return spmspv(weights, delta, state.delta_mem, lay)
    raise TypeError(f"unsupported weight container {type(weights).__name__}")


def delta_lstm_step(weights, state: DeltaLayerState, x, theta
                    ) -> tuple[np.ndarray, DeltaLayerState, SparseDeltaVector]:
    """Advance one time step.

    ``weights`` is a :class:`StackedWeights`, :class:`CbcscMatrix` or
    :class:`BankedWeights` built for ``state.layout``. Returns the new hidden
    state, the new layer state and the combined ``[dx; dh]`` delta.
    """
    if state.delta_mem is None or set(state.delta_mem) != set(GATES):
        raise ValueError("delta memory is not initialized")
    lay = state.layout
    x = np.asarray(x, dtype=state.x_cache.dtype)
    if x.shape != (lay.input_size,):
        raise ValueError(f"x has shape {x.shape}, expected ({lay.input_size},)")
    xp = np.zeros(lay.padded_input, dtype=x.dtype)
    xp[: lay.input_size] = x
    hp = np.zeros(lay.padded_hidden, dtype=state.h.dtype)
    hp[: lay.hidden_size] = state.h

    dx, x_cache = delta_encode(xp, state.x_cache, theta)
    dh, h_cache = delta_encode(hp, state.h_cache, theta)
    ds = SparseDeltaVector.concat(dx, dh)

    mem = _accumulate(weights, state, ds)
    if state.qcfg is not None:
        acc = state.qcfg.acc
        mem = {g: np.clip(v, acc.min_raw, acc.max_raw) for g, v in mem.items()}
    h, c = gate_update(mem, state.c, state.qcfg)
    new = DeltaLayerState(x_cache, h_cache, mem, c, h, lay, state.qcfg)
    return h, new, ds


@dataclass
class DeltaRun:
    hs: np.ndarray  # (T, hidden)
    cs: np.ndarray
    deltas: list[SparseDeltaVector]
    state: DeltaLayerState


def delta_lstm_forward(params: LstmLayerParams, xs: Sequence, theta, M: int = 1,
                       weights=None, state: DeltaLayerState | None = None) -> DeltaRun:
    """Run a whole sequence; ``weights`` defaults to the dense stacked matrix."""
    if weights is None:
        weights = stack_weights(params, M)
    state = state or init_delta_state(params, M)
    if not isinstance(theta, DeltaThreshold):
        theta = DeltaThreshold.make(theta, params.qcfg)
    hs, cs, deltas = [], [], []
    for x in xs:
        h, state, ds = delta_lstm_step(weights, state, x, theta)
        hs.append(h)
        cs.append(state.c)
        deltas.append(ds)
    dtype = state.h.dtype
    shape = (0, params.hidden_size)
    return DeltaRun(np.array(hs, dtype=dtype).reshape(-1, params.hidden_size) if hs else np.zeros(shape, dtype),
                    np.array(cs, dtype=dtype).reshape(-1, params.hidden_size) if cs else np.zeros(shape, dtype),
                    deltas, state)


class TemporalSparsity(NamedTuple):
    x: float
    h: float
    total: float


def measure_temporal_sparsity(trace: Sequence[SparseDeltaVector], split: int,
                              sizes: tuple[int, int] | None = None) -> TemporalSparsity:
    """Fraction of zero deltas over a trace, for the input block, hidden block and both.

    ``split`` is the first hidden-block index. By default the block lengths
    are ``split`` and ``dense_len - split``; pass ``sizes=(input, hidden)``
    to leave padding columns out of both the counts and the denominators.
    """
    if len(trace) == 0:
        raise ValueError("empty delta trace")
    Q = trace[0].dense_len
    nx, nh = sizes if sizes is not None else (split, Q - split)
    T = len(trace)
    cx = sum(int(np.count_nonzero(d.nzi < nx)) for d in trace)
    ch = sum(int(np.count_nonzero((d.nzi >= split) & (d.nzi < split + nh))) for d in trace)
    sx = 1.0 - cx / (T * nx) if nx else 1.0
    sh = 1.0 - ch / (T * nh) if nh else 1.0
    return TemporalSparsity(sx, sh, 1.0 - (cx + ch) / (T * (nx + nh)))
