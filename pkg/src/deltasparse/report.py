"""Report record: stable ``key=value`` lines for golden files plus a human table."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .delta import TemporalSparsity
from .sim import (AcceleratorConfig, SimTrace, all_columns_trace, balance_ratio, dense_step_cycles,
                  dram_energy, effective_throughput, op_saving, peak_throughput, speedup_report)

# (field, label, unit) in output order
FIELDS = [
    ("weight_sparsity", "weight sparsity (structural)", ""),
    ("weight_sparsity_measured", "weight sparsity (measured)", ""),
    ("temporal_sparsity_x", "temporal sparsity dx", ""),
    ("temporal_sparsity_h", "temporal sparsity dh", ""),
    ("temporal_sparsity_total", "temporal sparsity total", ""),
    ("blen", "BLEN", ""),
    ("M", "PEs per array", ""),
    ("N", "MAC arrays", ""),
    ("H", "rows", ""),
    ("Q", "columns", ""),
    ("steps", "timesteps", ""),
    ("freq_mhz", "clock", "MHz"),
    ("overhead_cycles", "overhead per step", "cycles"),
    ("balance_ratio", "balance ratio", ""),
    ("cycles", "cycles", ""),
    ("cycles_per_step", "cycles per step", ""),
    ("latency_us", "latency per step", "us"),
    ("peak_throughput_gops", "peak throughput", "GOp/s"),
    ("effective_throughput_gops", "effective throughput", "GOp/s"),
    ("op_saving", "op saving", "x"),
    ("dense_cycles", "dense baseline cycles", ""),
    ("pruned_cycles", "pruned, all columns cycles", ""),
    ("speedup_spatial", "speedup spatial", "x"),
    ("speedup_temporal", "speedup temporal", "x"),
    ("speedup_total", "speedup total", "x"),
    ("dram", "DRAM", ""),
    ("dram_pj_per_bit", "DRAM access energy", "pJ/bit"),
    ("dram_energy_uj", "DRAM energy per frame", "uJ"),
]
FIELD_NAMES = [f for f, _, _ in FIELDS]


@dataclass(frozen=True)
class ReportInputs:
    trace: SimTrace
    cfg: AcceleratorConfig
    H: int
    Q: int
    dense_params: int
    temporal: TemporalSparsity
    weight_sparsity_measured: float


def build_report(inp: ReportInputs) -> dict:
    tr, cfg = inp.trace, inp.cfg
    T = tr.T
    K = inp.H // cfg.M
    ws = 1.0 - tr.blen / K if K else 0.0
    try:
        saving = op_saving(ws, inp.temporal.total)
    except ValueError:
        saving = math.inf
    dense = dense_step_cycles(inp.H, inp.Q, cfg) * T
    pruned = all_columns_trace(T, inp.Q, tr.blen, cfg).total_cycles
    sp = speedup_report(dense, tr.total_cycles, pruned)
    return {
        "weight_sparsity": ws,
        "weight_sparsity_measured": inp.weight_sparsity_measured,
        "temporal_sparsity_x": inp.temporal.x,
        "temporal_sparsity_h": inp.temporal.h,
        "temporal_sparsity_total": inp.temporal.total,
        "blen": tr.blen,
        "M": cfg.M,
        "N": cfg.N,
        "H": inp.H,
        "Q": inp.Q,
        "steps": T,
        "freq_mhz": cfg.f_pl / 1e6,
        "overhead_cycles": cfg.pipeline_overhead,
        "balance_ratio": balance_ratio(tr),
        "cycles": tr.total_cycles,
        "cycles_per_step": tr.total_cycles / T,
        "latency_us": tr.latency_s * 1e6,
        "peak_throughput_gops": peak_throughput(cfg) / 1e9,
        "effective_throughput_gops": effective_throughput(tr, inp.dense_params) / 1e9,
        "op_saving": saving,
        "dense_cycles": dense,
        "pruned_cycles": pruned,
        "speedup_spatial": sp.spatial,
        "speedup_temporal": sp.temporal,
        "speedup_total": sp.total,
        "dram": cfg.dram,
        "dram_pj_per_bit": cfg.dram_energy_pj_per_bit,
        "dram_energy_uj": dram_energy(tr, cfg) * 1e6,
    }


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        return format(v, ".6g")
    return str(v)


def format_record(rec: dict) -> str:
    return "".join(f"{k}={_fmt(rec[k])}\n" for k in FIELD_NAMES if k in rec)


def parse_record(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        k, sep, v = line.partition("=")
        if not sep:
            raise ValueError(f"malformed record line {line!r}")
        try:
            out[k] = int(v)
        except ValueError:
            try:
                out[k] = float(v)
            except ValueError:
                out[k] = v
    return out


def format_table(rec: dict) -> str:
    rows = [(label, _fmt(rec[k]), unit) for k, label, unit in FIELDS if k in rec]
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows)
    return "".join(f"{a:<{w0}}  {b:>{w1}} {c}".rstrip() + "\n" for a, b, c in rows)
