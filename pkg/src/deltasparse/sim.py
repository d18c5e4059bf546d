"""Cycle-approximate model of the sparse LSTM accelerator.

``N`` MAC arrays of ``M`` PEs each. Nonzero delta columns are dispatched to
array ``j % N`` (the bank holding column ``j``); an array spends ``blen``
cycles per column, one CBCSC entry per PE per cycle, and a timestep ends when
the busiest array finishes, plus a fixed pipeline overhead.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cbcsc import BankedWeights
from .delta import SparseDeltaVector

log = logging.getLogger(__name__)

# pJ per bit for off-chip weight fetches
DRAM_ENERGY_PJ_PER_BIT = {
    "ddr3": 20.3,
    "ddr3l": 16.5,
    "gddr6": 5.5,
    "hbm2": 3.9,
}

DEFAULT_OVERHEAD_CYCLES = 200


@dataclass(frozen=True)
class AcceleratorConfig:
    M: int = 64
    N: int = 8
    f_pl: float = 200e6
    pipeline_overhead: int = DEFAULT_OVERHEAD_CYCLES
    weight_bits: int = 8
    lidx_bits: int = 8
    dram: str = "ddr3"
    # set for configurations that stream weights from DRAM every step
    dram_bits_per_cycle: int | None = None

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be positive")
        if self.M % self.N:
            raise ValueError(f"M={self.M} must be divisible by N={self.N}")
        if self.f_pl <= 0:
            raise ValueError("clock frequency must be positive")
        if self.pipeline_overhead < 0:
            raise ValueError("pipeline overhead must be non-negative")
        if self.dram not in DRAM_ENERGY_PJ_PER_BIT:
            raise ValueError(f"unknown DRAM type {self.dram!r}; choose from {sorted(DRAM_ENERGY_PJ_PER_BIT)}")

    @property
    def bits_per_weight_fetch(self) -> int:
        """Bits of one (val, lidx) pair."""
        return self.weight_bits + self.lidx_bits

    @property
    def dram_energy_pj_per_bit(self) -> float:
        return DRAM_ENERGY_PJ_PER_BIT[self.dram]

    @property
    def segment_length(self) -> int:
        return self.M // self.N

    @classmethod
    def spartus(cls, **kw) -> "AcceleratorConfig":
        """On-chip weights: 64 PEs x 8 arrays at 200 MHz, 8-bit LIDX."""
        return cls(**{**dict(M=64, N=8, f_pl=200e6, lidx_bits=8, dram="ddr3"), **kw})

    @classmethod
    def edge(cls, **kw) -> "AcceleratorConfig":
        """DRAM-streamed weights: 4 PEs x 1 array at 125 MHz, 10-bit LIDX, 72 bits/cycle."""
        return cls(**{**dict(M=4, N=1, f_pl=125e6, lidx_bits=10, dram="ddr3l",
                             dram_bits_per_cycle=72), **kw})


@dataclass
class SimTrace:
    workloads: np.ndarray  # (T, N) nonzero delta columns per array
    cycles: np.ndarray     # (T,)
    blen: int
    M: int
    f_pl: float
    bits_per_fetch: int
    fetched_bits: np.ndarray = field(repr=False, default=None)

    @property
    def T(self) -> int:
        return int(self.cycles.size)

    @property
    def N(self) -> int:
        return int(self.workloads.shape[1])

    @property
    def total_cycles(self) -> int:
        return int(self.cycles.sum())

    @property
    def wall_time_s(self) -> float:
        return self.total_cycles / self.f_pl

    @property
    def latency_s(self) -> float:
        """Mean time per timestep."""
        return self.wall_time_s / self.T if self.T else 0.0

    @property
    def effective_op_count(self) -> int:
        """Multiply-adds actually issued, counted as 2 ops each."""
        return 2 * int(self.workloads.sum()) * self.blen * self.M


def step_cycles(workloads: np.ndarray, blen: int, cfg: AcceleratorConfig) -> tuple[np.ndarray, np.ndarray]:
    wl = np.asarray(workloads, dtype=np.int64)
    compute = wl.max(axis=1, initial=0) * blen
    bits = wl.sum(axis=1) * blen * cfg.M * cfg.bits_per_weight_fetch
    if cfg.dram_bits_per_cycle:
        compute = np.maximum(compute, -(-bits // cfg.dram_bits_per_cycle))
    return compute + cfg.pipeline_overhead, bits


def workloads_from_trace(delta_trace: Sequence, N: int, Q: int) -> np.ndarray:
    wl = np.zeros((len(delta_trace), N), dtype=np.int64)
    for t, d in enumerate(delta_trace):
        if d.dense_len != Q:
            raise ValueError(f"delta at step {t} has length {d.dense_len}, weights have {Q} columns")
        wl[t] = np.bincount(np.asarray(d.nzi) % N, minlength=N)
    return wl


def simulate_workloads(workloads: np.ndarray, blen: int, cfg: AcceleratorConfig) -> SimTrace:
    wl = np.asarray(workloads, dtype=np.int64).reshape(-1, cfg.N)
    cycles, bits = step_cycles(wl, blen, cfg)
    return SimTrace(wl, cycles, blen, cfg.M, cfg.f_pl, cfg.bits_per_weight_fetch, bits)


def simulate_sequence(banks: BankedWeights, delta_trace: Sequence, cfg: AcceleratorConfig) -> SimTrace:
    if banks.N != cfg.N or banks.M != cfg.M:
        raise ValueError(f"banks built for M={banks.M}, N={banks.N} but config has M={cfg.M}, N={cfg.N}")
    wl = workloads_from_trace(delta_trace, cfg.N, banks.Q)
    return simulate_workloads(wl, banks.blen, cfg)


def balance_ratio(trace: SimTrace | np.ndarray) -> float:
    wl = trace.workloads if isinstance(trace, SimTrace) else np.asarray(trace)
    wl = wl.reshape(wl.shape[0], -1)
    total_max = wl.max(axis=1, initial=0).sum() if wl.size else 0
    if total_max == 0:
        log.warning("balance ratio of an all-zero workload is taken as 1")
        return 1.0
    return float(wl.mean(axis=1).sum() / total_max)


def peak_throughput(cfg: AcceleratorConfig) -> float:
    return 2.0 * cfg.f_pl * cfg.M * cfg.N


def effective_throughput(trace: SimTrace, dense_params: int) -> float:
    """Dense-equivalent operations per second delivered by the sparse run."""
    if trace.wall_time_s <= 0:
        raise ValueError("trace has zero wall time")
    return 2.0 * dense_params * trace.T / trace.wall_time_s


def op_saving(weight_sparsity: float, temporal_sparsity: float) -> float:
    for s in (weight_sparsity, temporal_sparsity):
        if not 0.0 <= s < 1.0:
            raise ValueError(f"sparsity must be in [0, 1), got {s}")
    return 1.0 / ((1.0 - weight_sparsity) * (1.0 - temporal_sparsity))


def dram_energy(trace: SimTrace, cfg: AcceleratorConfig) -> float:
    """Joules per frame spent fetching (val, lidx) pairs for the issued columns."""
    bits = int(trace.workloads.sum()) * trace.blen * trace.M * cfg.bits_per_weight_fetch
    frames = max(trace.T, 1)
    return bits * cfg.dram_energy_pj_per_bit * 1e-12 / frames


def dense_step_cycles(H: int, Q: int, cfg: AcceleratorConfig) -> int:
    """Every column at full subcolumn depth: ``ceil(Q/N) * H/M`` plus overhead.

    When weights stream from DRAM the dense matrix (values only, no indices)
    must also fit through the memory port.
    """
    compute = math.ceil(Q / cfg.N) * (H // cfg.M)
    if cfg.dram_bits_per_cycle:
        compute = max(compute, -(-H * Q * cfg.weight_bits // cfg.dram_bits_per_cycle))
    return compute + cfg.pipeline_overhead


def all_columns_trace(T: int, Q: int, blen: int, cfg: AcceleratorConfig) -> SimTrace:
    """Every column issued every step: the pruned run without delta skipping."""
    per = np.bincount(np.arange(Q) % cfg.N, minlength=cfg.N)
    return simulate_workloads(np.tile(per, (T, 1)), blen, cfg)


@dataclass(frozen=True)
class Speedup:
    spatial: float
    temporal: float
    total: float


def speedup_report(dense_cycles: int, sparse_cycles: int, pruned_cycles: int) -> Speedup:
    """Split the total speedup into a pruning part and a delta-skipping part.

    ``pruned_cycles`` is the same pruned network with every column issued.
    """
    if sparse_cycles <= 0 or pruned_cycles <= 0:
        raise ZeroDivisionError("cycle counts must be positive")
    total = dense_cycles / sparse_cycles
    spatial = dense_cycles / pruned_cycles
    return Speedup(spatial, total / spatial, total)


def synthetic_delta_trace(T: int, Q: int, sparsity: float,
                          rng: np.random.Generator | int | None = None) -> list[SparseDeltaVector]:
    """Unit deltas on ``round(Q * (1 - sparsity))`` uniformly drawn columns per step."""
    rng = np.random.default_rng(rng)
    k = int(round(Q * (1.0 - sparsity)))
    out = []
    for _ in range(T):
        nzi = np.sort(rng.choice(Q, size=k, replace=False))
        out.append(SparseDeltaVector(np.ones(k), nzi, Q))
    return out


__all__ = [
    "AcceleratorConfig", "SimTrace", "Speedup", "DRAM_ENERGY_PJ_PER_BIT", "simulate_sequence",
    "simulate_workloads", "balance_ratio", "peak_throughput", "effective_throughput",
    "op_saving", "dram_energy", "dense_step_cycles", "all_columns_trace", "speedup_report",
    "synthetic_delta_trace", "workloads_from_trace",
]
