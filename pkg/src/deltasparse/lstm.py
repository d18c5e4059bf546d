"""Dense LSTM reference and the gate-stacked weight layout.

Gate names are the single letters ``i``, ``f``, ``g`` and ``o``. Every
consumer addresses gate blocks through :data:`STACK_ORDER` and the accessors
on :class:`StackedWeights`; nothing should rely on raw row offsets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .quant import QuantConfig, dequantize, quantize, requantize

GATES = ("i", "f", "g", "o")
# row-block order of the stacked matrix
STACK_ORDER = ("i", "g", "f", "o")


def round_up(n: int, m: int) -> int:
    return -(-n // m) * m


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class LstmLayerParams:
    """Eight weight matrices and eight bias vectors of one LSTM layer.

    ``w_x[gate]`` is ``W_i<gate>`` (hidden x input), ``w_h[gate]`` is
    ``W_h<gate>`` (hidden x hidden). When ``qcfg`` is set every array holds
    raw integers: weights in ``qcfg.weight`` and biases in ``qcfg.acc``.
    """

    w_x: dict[str, np.ndarray]
    w_h: dict[str, np.ndarray]
    b_x: dict[str, np.ndarray]
    b_h: dict[str, np.ndarray]
    qcfg: QuantConfig | None = None

    def __post_init__(self):
        dtype = np.int64 if self.qcfg else np.float64
        for d in (self.w_x, self.w_h, self.b_x, self.b_h):
            if set(d) != set(GATES):
                raise ValueError(f"expected gates {GATES}, got {sorted(d)}")
            for g in GATES:
                d[g] = np.asarray(d[g], dtype=dtype)
        hidden, inp = self.w_x["i"].shape
        for g in GATES:
            if self.w_x[g].shape != (hidden, inp):
                raise ValueError(f"W_i{g} has shape {self.w_x[g].shape}, expected {(hidden, inp)}")
            if self.w_h[g].shape != (hidden, hidden):
                raise ValueError(f"W_h{g} has shape {self.w_h[g].shape}, expected {(hidden, hidden)}")
            for b, name in ((self.b_x[g], "b_i"), (self.b_h[g], "b_h")):
                if b.shape != (hidden,):
                    raise ValueError(f"{name}{g} has shape {b.shape}, expected {(hidden,)}")

    @property
    def input_size(self) -> int:
        return self.w_x["i"].shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w_x["i"].shape[0]

    @property
    def quantized(self) -> bool:
        return self.qcfg is not None

    @property
    def n_params(self) -> int:
        """Weight count of the layer, biases excluded."""
        return 4 * self.hidden_size * (self.input_size + self.hidden_size)

    def bias_sum(self, gate: str) -> np.ndarray:
        return self.b_x[gate] + self.b_h[gate]

    @classmethod
    def random(cls, input_size: int, hidden_size: int, rng: np.random.Generator | int | None = None,
               scale: float | None = None) -> "LstmLayerParams":
        """Uniform(-k, k) init with ``k = 1/sqrt(hidden)`` unless ``scale`` is given."""
        rng = np.random.default_rng(rng)
        k = 1.0 / np.sqrt(hidden_size) if scale is None else scale
        u = lambda *shape: rng.uniform(-k, k, size=shape)
        return cls(
            w_x={g: u(hidden_size, input_size) for g in GATES},
            w_h={g: u(hidden_size, hidden_size) for g in GATES},
            b_x={g: u(hidden_size) for g in GATES},
            b_h={g: u(hidden_size) for g in GATES},
        )

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmLayerParams":
        return cls(
            w_x={g: np.zeros((hidden_size, input_size)) for g in GATES},
            w_h={g: np.zeros((hidden_size, hidden_size)) for g in GATES},
            b_x={g: np.zeros(hidden_size) for g in GATES},
            b_h={g: np.zeros(hidden_size) for g in GATES},
        )

    def quantize(self, qcfg: QuantConfig) -> "LstmLayerParams":
        if self.quantized:
            raise ValueError("parameters are already quantized")
        wq = lambda d: {g: quantize(d[g], qcfg.weight) for g in GATES}
        bq = lambda d: {g: quantize(d[g], qcfg.acc) for g in GATES}
        return LstmLayerParams(wq(self.w_x), wq(self.w_h), bq(self.b_x), bq(self.b_h), qcfg)

    def dequantize(self) -> "LstmLayerParams":
        if not self.quantized:
            return self
        q = self.qcfg
        wd = lambda d: {g: dequantize(d[g], q.weight) for g in GATES}
        bd = lambda d: {g: dequantize(d[g], q.acc) for g in GATES}
        return LstmLayerParams(wd(self.w_x), wd(self.w_h), bd(self.b_x), bd(self.b_h))

    def arrays(self) -> dict[str, np.ndarray]:
        """Flat name -> array mapping (``W_ii``, ``b_hg``, ...) for serialization."""
        out = {}
        for g in GATES:
            out[f"W_i{g}"] = self.w_x[g]
            out[f"W_h{g}"] = self.w_h[g]
            out[f"b_i{g}"] = self.b_x[g]
            out[f"b_h{g}"] = self.b_h[g]
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], qcfg: QuantConfig | None = None):
        try:
            return cls(
                w_x={g: arrays[f"W_i{g}"] for g in GATES},
                w_h={g: arrays[f"W_h{g}"] for g in GATES},
                b_x={g: arrays[f"b_i{g}"] for g in GATES},
                b_h={g: arrays[f"b_h{g}"] for g in GATES},
                qcfg=qcfg,
            )
        except KeyError as e:
            raise ValueError(f"missing parameter array {e.args[0]}") from None


@dataclass(frozen=True)
class StackLayout:
    """Row/column geometry of the stacked matrix for one layer.

    Columns are ``[x padded to padded_input | h padded to padded_hidden]``.
    ``H`` is ``4 * hidden_size`` rounded up to a multiple of ``M``; padded
    rows and columns never hold weights.
    """

    input_size: int
    hidden_size: int
    M: int = 1

    @property
    def padded_input(self) -> int:
        return round_up(self.input_size, self.M)

    @property
    def padded_hidden(self) -> int:
        return round_up(self.hidden_size, self.M)

    @property
    def split(self) -> int:
        """Column index where the hidden-state block starts."""
        return self.padded_input

    @property
    def Q(self) -> int:
        return self.padded_input + self.padded_hidden

    @property
    def H(self) -> int:
        return round_up(4 * self.hidden_size, self.M)

    @property
    def gate_rows(self) -> int:
        return 4 * self.hidden_size

    def rows(self, gate: str) -> slice:
        k = STACK_ORDER.index(gate)
        return slice(k * self.hidden_size, (k + 1) * self.hidden_size)

    def state_vector(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        """Concatenate ``x`` and ``h`` with the same zero padding as the columns."""
        s = np.zeros(self.Q, dtype=np.result_type(x, h))
        s[: self.input_size] = x
        s[self.split: self.split + self.hidden_size] = h
        return s

    def split_gates(self, rows: np.ndarray) -> dict[str, np.ndarray]:
        return {g: rows[self.rows(g)] for g in GATES}


@dataclass
class StackedWeights:
    """``W_s``: the four gate blocks of ``[W_i<g> | W_h<g>]`` stacked by rows."""

    matrix: np.ndarray
    layout: StackLayout
    qcfg: QuantConfig | None = None

    def __post_init__(self):
        if self.matrix.shape != (self.layout.H, self.layout.Q):
            raise ValueError(f"matrix shape {self.matrix.shape} does not match layout "
                             f"{(self.layout.H, self.layout.Q)}")

    @property
    def H(self) -> int:
        return self.layout.H

    @property
    def Q(self) -> int:
        return self.layout.Q

    @property
    def M(self) -> int:
        return self.layout.M

    @property
    def split(self) -> int:
        return self.layout.split

    def block(self, gate: str, part: str) -> np.ndarray:
        """Read back ``W_i<gate>`` (``part='x'``) or ``W_h<gate>`` (``part='h'``)."""
        lay = self.layout
        r = lay.rows(gate)
        if part == "x":
            return self.matrix[r, : lay.input_size]
        if part == "h":
            return self.matrix[r, lay.split: lay.split + lay.hidden_size]
        raise ValueError(f"part must be 'x' or 'h', got {part!r}")

    def with_matrix(self, matrix: np.ndarray) -> "StackedWeights":
        return StackedWeights(np.asarray(matrix), self.layout, self.qcfg)


def stack_weights(params: LstmLayerParams, M: int = 1) -> StackedWeights:
    if M < 1:
        raise ValueError(f"M must be positive, got {M}")
    lay = StackLayout(params.input_size, params.hidden_size, M)
    nx, nh, px = lay.input_size, lay.hidden_size, lay.padded_input
    W = np.zeros((lay.H, lay.Q), dtype=np.int64 if params.quantized else np.float64)
    for k, g in enumerate(STACK_ORDER):
        W[k * nh:(k + 1) * nh, :nx] = params.w_x[g]
        W[k * nh:(k + 1) * nh, px:px + nh] = params.w_h[g]
    return StackedWeights(W, lay, params.qcfg)


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int, quantized: bool = False) -> "LstmState":
        dtype = np.int64 if quantized else np.float64
        return cls(np.zeros(hidden_size, dtype=dtype), np.zeros(hidden_size, dtype=dtype))


def gate_update(pre: dict[str, np.ndarray], c_prev: np.ndarray,
                qcfg: QuantConfig | None) -> tuple[np.ndarray, np.ndarray]:
    """Nonlinearities and the cell/hidden update shared by dense and delta paths.

    ``pre`` holds gate pre-activations: reals, or raw accumulator values in
    quantized mode.
    """
    if qcfg is None:
        i, f, o = (sigmoid(pre[g]) for g in "ifo")
        g = np.tanh(pre["g"])
        c = f * c_prev + i * g
        return o * np.tanh(c), c
    act = qcfg.act
    lut_in = {k: requantize(v, qcfg.acc.frac_bits, act) for k, v in pre.items()}
    i, f, o = (qcfg.sigmoid(lut_in[k]) for k in "ifo")
    g = qcfg.tanh(lut_in["g"])
    c = requantize(f * c_prev + i * g, 2 * act.frac_bits, act)
    h = requantize(o * qcfg.tanh(c), 2 * act.frac_bits, act)
    return h, c


def lstm_step(params: LstmLayerParams, state: LstmState, x) -> LstmState:
    """One dense LSTM step computed from the eight separate matrices.

    In quantized mode ``x`` and the state are raw activation-format integers;
    products accumulate exactly in int64 and saturate to the accumulator width.
    """
    x = np.asarray(x, dtype=np.int64 if params.quantized else np.float64)
    if x.shape != (params.input_size,):
        raise ValueError(f"x has shape {x.shape}, expected ({params.input_size},)")
    if state.h.shape != (params.hidden_size,) or state.c.shape != (params.hidden_size,):
        raise ValueError("state size does not match hidden_size")
    pre = {}
    for g in GATES:
        acc = params.w_x[g] @ x + params.w_h[g] @ state.h + params.bias_sum(g)
        if params.quantized:
            acc = np.clip(acc, params.qcfg.acc.min_raw, params.qcfg.acc.max_raw)
        pre[g] = acc
    h, c = gate_update(pre, state.c, params.qcfg)
    return LstmState(h, c)


def lstm_forward(params: LstmLayerParams, xs, initial: LstmState | None = None) -> list[LstmState]:
    state = initial or LstmState.zeros(params.hidden_size, params.quantized)
    out = []
    for x in xs:
        state = lstm_step(params, state, x)
        out.append(state)
    return out


__all__ = [
    "GATES", "STACK_ORDER", "LstmLayerParams", "StackLayout", "StackedWeights", "LstmState",
    "stack_weights", "lstm_step", "lstm_forward", "gate_update", "round_up",
]
