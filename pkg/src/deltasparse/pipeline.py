"""Pipeline stages on a :class:`Container`: quantize, prune, encode, infer, simulate."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .cbcsc import cbcsc_encode, split_banks
from .cbtd import AlphaSchedule, PruneConfig, iterative_prune, survivors
from .config import ConfigError, RunConfig
from .container import Container, ContainerError, Section
from .delta import DeltaThreshold, SparseDeltaVector, delta_lstm_forward, measure_temporal_sparsity
from .lstm import GATES, LstmLayerParams, StackLayout, stack_weights
from .quant import dequantize, quantize
from .report import ReportInputs, build_report, format_record, parse_record
from .sim import simulate_sequence, simulate_workloads, synthetic_delta_trace, workloads_from_trace
from . import store

# each stage invalidates everything after it
STAGES = ("PARAMS", "STACKED", "CBCSC", "BANKS", "TRACE", "REPORT")


def _invalidate_after(c: Container, name: str):
    i = STAGES.index(name)
    c.drop(*STAGES[i + 1:])


def load_config(c: Container) -> RunConfig:
    if "CONFIG" not in c:
        return RunConfig()
    return RunConfig.from_dict(c.get("CONFIG").meta)


def save_config(c: Container, cfg: RunConfig):
    c.put("CONFIG", Section(cfg.to_dict()))


def init_network(input_size: int, hidden_size: int, cfg: RunConfig, scale: float | None = None) -> Container:
    if input_size < 1 or hidden_size < 1:
        raise ConfigError("layer sizes must be positive")
    params = LstmLayerParams.random(input_size, hidden_size, cfg.seed, scale)
    c = Container()
    save_config(c, cfg)
    c.put("PARAMS", store.params_section(params))
    return c


def params_from_flat(path: str | Path, sidecar: str | Path | None = None) -> LstmLayerParams:
    """Real parameters from a flat little-endian binary plus a JSON sidecar.

    The sidecar holds ``input_size``, ``hidden_size`` and optionally ``dtype``
    (default ``"<f8"``) and ``order``, the tensor names in file order (default
    ``W_i*, W_h*, b_i*, b_h*`` for gates i, f, g, o).
    """
    path = Path(path)
    sidecar = Path(sidecar) if sidecar else path.with_suffix(".json")
    try:
        meta = json.loads(sidecar.read_text())
        I, Hd = int(meta["input_size"]), int(meta["hidden_size"])
    except FileNotFoundError:
        raise ContainerError(f"missing sidecar {sidecar}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
        raise ContainerError(f"malformed sidecar {sidecar}: {e}") from None
    shapes = {}
    for g in GATES:
        shapes[f"W_i{g}"] = (Hd, I)
        shapes[f"W_h{g}"] = (Hd, Hd)
        shapes[f"b_i{g}"] = (Hd,)
        shapes[f"b_h{g}"] = (Hd,)
    default_order = ([f"W_i{g}" for g in GATES] + [f"W_h{g}" for g in GATES]
                     + [f"b_i{g}" for g in GATES] + [f"b_h{g}" for g in GATES])
    order = meta.get("order", default_order)
    if sorted(order) != sorted(shapes):
        raise ContainerError(f"sidecar order must name each of {sorted(shapes)} exactly once")
    flat = np.fromfile(path, dtype=np.dtype(meta.get("dtype", "<f8")))
    need = sum(int(np.prod(shapes[n])) for n in order)
    if flat.size != need:
        raise ContainerError(f"{path} holds {flat.size} values, sizes in the sidecar need {need}")
    arrays, off = {}, 0
    for n in order:
        k = int(np.prod(shapes[n]))
        arrays[n] = flat[off:off + k].astype(np.float64).reshape(shapes[n])
        off += k
    return LstmLayerParams.from_arrays(arrays)


def quantize_params(params: LstmLayerParams, cfg: RunConfig) -> tuple[LstmLayerParams, dict[str, float]]:
    """Quantize and return the max absolute round-trip error per tensor."""
    if params.quantized:
        raise ConfigError("PARAMS are already quantized")
    qcfg = cfg.quant_config()
    q = params.quantize(qcfg)
    errors = {}
    real, raw = params.arrays(), q.arrays()
    for name in real:
        fmt = qcfg.weight if name.startswith("W") else qcfg.acc
        d = np.abs(dequantize(raw[name], fmt) - real[name])
        errors[name] = float(d.max()) if d.size else 0.0
    return q, errors


def quantize_stage(c: Container, cfg: RunConfig, params: LstmLayerParams | None = None) -> dict[str, float]:
    if params is None:
        params = store.params_from_section(c.get("PARAMS", "run `init` or pass a flat parameter file"))
    q, errors = quantize_params(params, cfg)
    save_config(c, cfg)
    c.put("PARAMS", store.params_section(q))
    _invalidate_after(c, "PARAMS")
    return errors


def prune_stage(c: Container, cfg: RunConfig) -> dict:
    params = store.params_from_section(c.get("PARAMS", "run `init` first"))
    w = stack_weights(params, cfg.M)
    pcfg = PruneConfig(cfg.gamma, 1.0, cfg.M, cfg.seed)
    B = iterative_prune(w.matrix, pcfg, AlphaSchedule(cfg.delta_alpha), cfg.epochs)
    lay = w.layout
    real = np.concatenate([B[: 4 * lay.hidden_size, : lay.input_size],
                           B[: 4 * lay.hidden_size, lay.split: lay.split + lay.hidden_size]], axis=1)
    measured = float(1.0 - np.count_nonzero(real) / real.size)
    meta = {"gamma": cfg.gamma, "seed": cfg.seed, "delta_alpha": cfg.delta_alpha, "epochs": cfg.epochs,
            "weight_sparsity_measured": measured}
    save_config(c, cfg)
    c.put("STACKED", store.stacked_section(w.with_matrix(B), **meta))
    _invalidate_after(c, "STACKED")
    return meta


def encode_stage(c: Container, cfg: RunConfig) -> dict:
    sec = c.get("STACKED", "run `prune` first")
    w = store.stacked_from_section(sec)
    if w.M != cfg.M:
        raise ConfigError(f"weights were pruned for M={w.M} but config has M={cfg.M}; re-run `prune`")
    gamma = sec.meta["gamma"]
    # natural and padding zeros leave some subcolumns short; top them up with explicit zeros
    enc = cbcsc_encode(w.matrix, cfg.M, gamma, cfg.lidx_bits, lenient=True)
    banks = split_banks(enc, cfg.N)
    save_config(c, cfg)
    c.put("CBCSC", store.cbcsc_section(enc))
    c.put("BANKS", store.banks_section(banks))
    _invalidate_after(c, "BANKS")
    return {"blen": enc.blen, "H": enc.H, "Q": enc.Q, "M": enc.M, "N": cfg.N, "lidx_bits": enc.lidx_bits}


def synthetic_inputs(T: int, input_size: int, seed: int) -> np.ndarray:
    """Slowly varying sinusoids plus a little noise, roughly unit amplitude."""
    rng = np.random.default_rng(seed)
    freq = rng.uniform(0.01, 0.1, size=input_size)
    phase = rng.uniform(0, 2 * np.pi, size=input_size)
    t = np.arange(T)[:, None]
    return np.sin(2 * np.pi * freq * t + phase) + 0.05 * rng.standard_normal((T, input_size))


def _full_trace(xs_real, hs, lay: StackLayout) -> list[SparseDeltaVector]:
    # every column issued every step, values are the plain state differences
    prev = np.zeros(lay.Q, dtype=hs.dtype)
    h_prev = np.zeros(lay.hidden_size, dtype=hs.dtype)
    out = []
    for x, h in zip(xs_real, hs):
        s = lay.state_vector(x, h_prev)
        out.append(SparseDeltaVector(s - prev, np.arange(lay.Q), lay.Q))
        prev, h_prev = s, h
    return out


def infer_stage(c: Container, cfg: RunConfig, xs: np.ndarray | None = None, steps: int = 50,
                dense: bool = False) -> dict:
    params = store.params_from_section(c.get("PARAMS", "run `init` first"))
    banks_sec = c.get("BANKS", "run `encode` first")
    banks = store.banks_from_section(banks_sec)
    if banks.M != cfg.M or banks.N != cfg.N:
        raise ConfigError(f"weights were encoded for M={banks.M}, N={banks.N} but config has "
                          f"M={cfg.M}, N={cfg.N}; re-run `prune` and `encode`")
    if dense and cfg.theta != 0:
        raise ConfigError("--dense runs without delta skipping and needs theta=0")
    if xs is None:
        xs = synthetic_inputs(steps, params.input_size, cfg.seed)
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != params.input_size:
        raise ConfigError(f"inputs must have shape (T, {params.input_size}), got {xs.shape}")
    if xs.shape[0] == 0:
        raise ConfigError("input sequence is empty")
    xin = quantize(xs, params.qcfg.act) if params.quantized else xs
    theta = DeltaThreshold.make(cfg.theta, params.qcfg)
    run = delta_lstm_forward(params, xin, theta, cfg.M, weights=banks)
    lay = StackLayout(params.input_size, params.hidden_size, cfg.M)
    deltas = _full_trace(xin, run.hs, lay) if dense else run.deltas
    ts = measure_temporal_sparsity(deltas, lay.split, (lay.input_size, lay.hidden_size))
    meta = dict(theta=cfg.theta, dense=dense, split=lay.split, input_size=lay.input_size,
                hidden_size=lay.hidden_size, temporal_x=ts.x, temporal_h=ts.h, temporal_total=ts.total)
    save_config(c, cfg)
    c.put("TRACE", store.trace_section(deltas, Q=lay.Q, inputs=np.asarray(xin), outputs=run.hs, **meta))
    _invalidate_after(c, "TRACE")
    return meta


def _report_section(rec: dict, trace) -> Section:
    return Section({"record": format_record(rec)}, {"workloads": trace.workloads, "cycles": trace.cycles})


def simulate_stage(c: Container, cfg: RunConfig) -> dict:
    params = store.params_from_section(c.get("PARAMS", "run `init` first"))
    banks = store.banks_from_section(c.get("BANKS", "run `encode` first"))
    tsec = c.get("TRACE", "run `infer` first")
    if banks.M != cfg.M or banks.N != cfg.N:
        raise ConfigError(f"weights were encoded for M={banks.M}, N={banks.N} but config has "
                          f"M={cfg.M}, N={cfg.N}; re-run `prune` and `encode`")
    deltas = store.trace_from_section(tsec)
    if not deltas:
        raise ContainerError("TRACE holds no timesteps")
    acfg = cfg.accelerator(banks.banks[0].lidx_bits)
    trace = simulate_sequence(banks, deltas, acfg)
    m = tsec.meta
    ts = measure_temporal_sparsity(deltas, m["split"], (m["input_size"], m["hidden_size"]))
    stacked = c.get("STACKED").meta if "STACKED" in c else {}
    rec = build_report(ReportInputs(trace, acfg, banks.H, banks.Q, params.n_params, ts,
                                    stacked.get("weight_sparsity_measured", float("nan"))))
    save_config(c, cfg)
    c.put("REPORT", _report_section(rec, trace))
    return rec


def simulate_synthetic(c: Container, cfg: RunConfig, rows: int, cols: int, steps: int,
                       sparsity: float) -> dict:
    """Simulate a random delta trace on a rows x cols matrix pruned at ``cfg.gamma``; no weights needed."""
    if rows < 1 or cols < 1 or steps < 1:
        raise ConfigError("rows, cols and steps must be positive")
    if rows % cfg.M:
        raise ConfigError(f"rows={rows} is not divisible by M={cfg.M}")
    if not 0.0 <= sparsity <= 1.0:
        raise ConfigError(f"temporal sparsity must be in [0, 1], got {sparsity}")
    blen = survivors(rows // cfg.M, cfg.gamma)
    lidx_bits = cfg.lidx_bits or max(1, (rows // cfg.M - 1).bit_length())
    acfg = cfg.accelerator(lidx_bits)
    deltas = synthetic_delta_trace(steps, cols, sparsity, cfg.seed)
    trace = simulate_workloads(workloads_from_trace(deltas, cfg.N, cols), blen, acfg)
    split = cols // 2
    ts = measure_temporal_sparsity(deltas, split)
    rec = build_report(ReportInputs(trace, acfg, rows, cols, rows * cols, ts, 1.0 - blen / (rows // cfg.M)))
    save_config(c, cfg)
    c.put("REPORT", _report_section(rec, trace))
    return rec


def load_report(c: Container) -> dict:
    sec = c.get("REPORT", "run `simulate` first")
    return parse_record(sec.meta["record"])
