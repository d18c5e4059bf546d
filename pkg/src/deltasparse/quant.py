"""Fixed-point formats, rounding and lookup-table nonlinearities.

All raw values are carried as ``int64`` numpy arrays (or Python ints for
scalars). Rounding is round-half-to-even everywhere and out-of-range values
saturate to the nearest representable endpoint.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np

MAX_TOTAL_BITS = 48


class FormatError(ValueError):
    """Raised for an invalid fixed-point format or format combination."""


@dataclass(frozen=True)
class FixedPointFormat:
    total_bits: int
    frac_bits: int
    signed: bool = True

    def __post_init__(self):
        if not self.signed:
            raise FormatError("only signed formats are supported")
        if not 1 < self.total_bits <= MAX_TOTAL_BITS:
            raise FormatError(
                f"total_bits must be in 2..{MAX_TOTAL_BITS}, got {self.total_bits}")
        if not 0 <= self.frac_bits < self.total_bits:
            raise FormatError(
                f"frac_bits must be in 0..{self.total_bits - 1}, got {self.frac_bits}")

    @property
    def min_raw(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def lsb(self) -> float:
        return 1.0 / self.scale

    def __str__(self):
        return f"Q{self.total_bits}.{self.frac_bits}"


def quantize(value, fmt: FixedPointFormat):
    """Round ``value * 2**frac_bits`` to nearest-even and saturate.

    Accepts scalars or arrays; scalars come back as ``int``.
    """
    x = np.asarray(value, dtype=np.float64) * fmt.scale
    x = np.clip(x, fmt.min_raw, fmt.max_raw)
    raw = np.rint(x).astype(np.int64)
    if raw.ndim == 0:
        return int(raw)
    return raw


def dequantize(raw, fmt: FixedPointFormat):
    out = np.asarray(raw, dtype=np.float64) / fmt.scale
    if out.ndim == 0:
        return float(out)
    return out


def saturate(raw, fmt: FixedPointFormat):
    return np.clip(np.asarray(raw, dtype=np.int64), fmt.min_raw, fmt.max_raw)


def shift_round(raw, shift: int):
    """Divide integers by ``2**shift`` with round-half-to-even."""
    x = np.asarray(raw, dtype=np.int64)
    if shift == 0:
        return x.copy()
    if shift < 0:
        return x << -shift
    q = x >> shift  # floor
    r = x - (q << shift)
    half = np.int64(1) << (shift - 1)
    up = (r > half) | ((r == half) & ((q & 1) == 1))
    return q + up.astype(np.int64)


def requantize(raw, from_frac: int, fmt: FixedPointFormat):
    """Move raw values with ``from_frac`` fractional bits into ``fmt``."""
    return saturate(shift_round(raw, from_frac - fmt.frac_bits), fmt)


@dataclass
class QuantizedTensor:
    shape: tuple[int, ...]
    data: np.ndarray
    fmt: FixedPointFormat

    def __post_init__(self):
        self.shape = tuple(int(s) for s in self.shape)
        self.data = np.asarray(self.data, dtype=np.int64).reshape(-1)
        if self.data.size != int(np.prod(self.shape, dtype=np.int64)):
            raise ValueError(f"data length {self.data.size} does not match shape {self.shape}")
        if self.data.size and (self.data.min() < self.fmt.min_raw or self.data.max() > self.fmt.max_raw):
            raise ValueError(f"data exceeds the range of {self.fmt}")

    @classmethod
    def from_real(cls, values, fmt: FixedPointFormat) -> "QuantizedTensor":
        values = np.asarray(values, dtype=np.float64)
        return cls(values.shape, quantize(values.reshape(-1), fmt), fmt)

    def raw(self) -> np.ndarray:
        return self.data.reshape(self.shape)

    def to_real(self) -> np.ndarray:
        return dequantize(self.data, self.fmt).reshape(self.shape)


_FUNCS = {
    "sigmoid": lambda x: 1.0 / (1.0 + np.exp(-x)),
    "tanh": np.tanh,
}


@dataclass(frozen=True)
class ActivationLut:
    """Uniformly sampled sigmoid/tanh table over ``[-input_clip, input_clip]``.

    ``size`` is the number of sampling intervals, so the table holds
    ``size + 1`` entries, placed symmetrically around zero. Lookups clip the
    input and round it to the nearest sample point.
    """

    kind: Literal["sigmoid", "tanh"]
    input_fmt: FixedPointFormat
    output_fmt: FixedPointFormat
    size: int = 1024
    input_clip: float = 8.0
    entries: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in _FUNCS:
            raise FormatError(f"unknown activation {self.kind!r}")
        clip_raw = self.input_clip * self.input_fmt.scale
        if clip_raw != int(clip_raw) or int(clip_raw) > self.input_fmt.max_raw:
            raise FormatError(f"input clip {self.input_clip} not representable in {self.input_fmt}")
        step = 2 * int(clip_raw) / self.size
        if step < 1 or step != int(step):
            raise FormatError(
                f"table size {self.size} does not divide the clipped range into whole input steps")
        xs = np.arange(-(self.size // 2), self.size // 2 + 1) * int(step) / self.input_fmt.scale
        object.__setattr__(self, "entries", quantize(_FUNCS[self.kind](xs), self.output_fmt))
        self.entries.setflags(write=False)

    @cached_property
    def clip_raw(self) -> int:
        return int(self.input_clip * self.input_fmt.scale)

    @cached_property
    def step_raw(self) -> int:
        return 2 * self.clip_raw // self.size

    def input_step(self) -> float:
        return self.step_raw / self.input_fmt.scale

    def lipschitz(self) -> float:
        return 0.25 if self.kind == "sigmoid" else 1.0

    def __call__(self, raw_in):
        return lut_eval(self, raw_in)


def lut_eval(lut: ActivationLut, raw_in):
    x = np.clip(np.asarray(raw_in, dtype=np.int64), -lut.clip_raw, lut.clip_raw)
    idx = np.rint(x / lut.step_raw).astype(np.int64) + lut.size // 2
    out = lut.entries[idx]
    if out.ndim == 0:
        return int(out)
    return out


@dataclass(frozen=True)
class QuantConfig:
    """The set of formats used by a quantized layer.

    Weight x activation products land directly in the accumulator format, so
    ``acc.frac_bits`` must equal ``weight.frac_bits + act.frac_bits``.
    """

    weight: FixedPointFormat = FixedPointFormat(8, 6)
    act: FixedPointFormat = FixedPointFormat(16, 8)
    acc: FixedPointFormat = FixedPointFormat(48, 14)
    lut_size: int = 1024
    lut_clip: float = 8.0

    def __post_init__(self):
        if self.acc.frac_bits != self.weight.frac_bits + self.act.frac_bits:
            raise FormatError(
                f"accumulator frac bits ({self.acc.frac_bits}) must equal weight + activation "
                f"frac bits ({self.weight.frac_bits} + {self.act.frac_bits})")
        if self.acc.total_bits < self.weight.total_bits + self.act.total_bits:
            raise FormatError("accumulator narrower than a single product")

    @cached_property
    def sigmoid(self) -> ActivationLut:
        return ActivationLut("sigmoid", self.act, self.act, self.lut_size, self.lut_clip)

    @cached_property
    def tanh(self) -> ActivationLut:
        return ActivationLut("tanh", self.act, self.act, self.lut_size, self.lut_clip)

    @classmethod
    def from_bits(cls, weight_bits: int = 8, act_bits: int = 16, weight_frac: int | None = None,
                  act_frac: int | None = None, acc_bits: int = 48, **kw) -> "QuantConfig":
        """Build formats from total widths; fractional splits default to w-2 and a/2."""
        wf = weight_bits - 2 if weight_frac is None else weight_frac
        af = act_bits // 2 if act_frac is None else act_frac
        return cls(FixedPointFormat(weight_bits, wf), FixedPointFormat(act_bits, af),
                   FixedPointFormat(acc_bits, wf + af), **kw)

    def to_dict(self) -> dict:
        return {
            "weight": [self.weight.total_bits, self.weight.frac_bits],
            "act": [self.act.total_bits, self.act.frac_bits],
            "acc": [self.acc.total_bits, self.acc.frac_bits],
            "lut_size": self.lut_size,
            "lut_clip": self.lut_clip,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantConfig":
        return cls(FixedPointFormat(*d["weight"]), FixedPointFormat(*d["act"]),
                   FixedPointFormat(*d["acc"]), d.get("lut_size", 1024), d.get("lut_clip", 8.0))
