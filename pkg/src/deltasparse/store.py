"""Domain objects <-> container sections."""
from __future__ import annotations

import numpy as np

from .cbcsc import BankedWeights, CbcscMatrix
from .container import ContainerError, Section
from .delta import SparseDeltaVector
from .lstm import LstmLayerParams, StackedWeights, StackLayout
from .quant import QuantConfig


def params_section(params: LstmLayerParams) -> Section:
    meta = {"input_size": params.input_size, "hidden_size": params.hidden_size,
            "quantized": params.quantized,
            "qcfg": params.qcfg.to_dict() if params.qcfg else None}
    return Section(meta, params.arrays())


def params_from_section(sec: Section) -> LstmLayerParams:
    q = sec.meta.get("qcfg")
    qcfg = QuantConfig.from_dict(q) if q else None
    arrays = sec.arrays
    if qcfg is not None:
        arrays = {k: v.astype(np.int64) for k, v in arrays.items()}
    params = LstmLayerParams.from_arrays(arrays, qcfg)
    if (params.input_size, params.hidden_size) != (sec.meta.get("input_size"), sec.meta.get("hidden_size")):
        raise ContainerError("PARAMS array shapes disagree with the recorded layer sizes")
    return params


def stacked_section(w: StackedWeights, **meta) -> Section:
    lay = w.layout
    meta = {"input_size": lay.input_size, "hidden_size": lay.hidden_size, "M": lay.M,
            "qcfg": w.qcfg.to_dict() if w.qcfg else None, **meta}
    return Section(meta, {"matrix": w.matrix})


def stacked_from_section(sec: Section) -> StackedWeights:
    m = sec.meta
    lay = StackLayout(m["input_size"], m["hidden_size"], m["M"])
    qcfg = QuantConfig.from_dict(m["qcfg"]) if m.get("qcfg") else None
    return StackedWeights(sec.arrays["matrix"], lay, qcfg)


def _val_storage(val: np.ndarray) -> np.ndarray:
    if np.issubdtype(val.dtype, np.integer):
        if val.size and (val.min() < -128 or val.max() > 127):
            raise ContainerError("quantized weights do not fit the 8-bit VAL storage")
        return val.astype(np.int8)
    return val.astype(np.float64)


def _val_load(val: np.ndarray) -> np.ndarray:
    return val.astype(np.int64) if np.issubdtype(val.dtype, np.integer) else val


def _enc_meta(e: CbcscMatrix) -> dict:
    return {"blen": e.blen, "H": e.H, "Q": e.Q, "M": e.M, "gamma": e.gamma, "lidx_bits": e.lidx_bits}


def cbcsc_section(enc: CbcscMatrix, **meta) -> Section:
    if enc.lidx_bits > 16:
        raise ContainerError("LIDX wider than 16 bits cannot be stored")
    return Section({**_enc_meta(enc), **meta},
                   {"val": _val_storage(enc.val), "lidx": enc.lidx.astype(np.uint16)})


def cbcsc_from_section(sec: Section) -> CbcscMatrix:
    m = sec.meta
    return CbcscMatrix(_val_load(sec.arrays["val"]), sec.arrays["lidx"].astype(np.int64),
                       m["blen"], m["H"], m["Q"], m["M"], m["gamma"], m["lidx_bits"])


def banks_section(bw: BankedWeights, **meta) -> Section:
    b0 = bw.banks[0]
    val = np.stack([b.groups()[0] for b in bw.banks])
    lidx = np.stack([b.groups()[1] for b in bw.banks])
    return Section({**_enc_meta(b0), "N": bw.N, "Q": bw.Q, "bank_Q": b0.Q, **meta},
                   {"val": _val_storage(val), "lidx": lidx.astype(np.uint16)})


def banks_from_section(sec: Section) -> BankedWeights:
    m = sec.meta
    val = _val_load(sec.arrays["val"])
    lidx = sec.arrays["lidx"].astype(np.int64)
    banks = [CbcscMatrix(val[n], lidx[n], m["blen"], m["H"], m["bank_Q"], m["M"], m["gamma"],
                         m["lidx_bits"]) for n in range(m["N"])]
    return BankedWeights(banks, m["N"], m["Q"])


def trace_section(deltas: list[SparseDeltaVector], **extra) -> Section:
    """``extra`` arrays (ndarray values) go to the payload; everything else to meta."""
    Q = deltas[0].dense_len if deltas else extra.get("Q", 0)
    counts = np.array([len(d) for d in deltas], dtype=np.int64)
    dtype = deltas[0].nzv.dtype if deltas else np.float64
    nzv = np.concatenate([d.nzv for d in deltas]) if deltas else np.zeros(0, dtype)
    nzi = np.concatenate([d.nzi for d in deltas]) if deltas else np.zeros(0, np.int64)
    arrays = {"counts": counts, "nzv": nzv.astype(dtype), "nzi": nzi.astype(np.int32)}
    meta = {"Q": Q}
    for k, v in extra.items():
        if isinstance(v, np.ndarray):
            arrays[k] = v
        else:
            meta[k] = v
    return Section(meta, arrays)


def trace_from_section(sec: Section) -> list[SparseDeltaVector]:
    counts = sec.arrays["counts"]
    nzv = sec.arrays["nzv"]
    nzi = sec.arrays["nzi"].astype(np.int64)
    if counts.sum() != nzv.size or nzv.size != nzi.size:
        raise ContainerError("TRACE counts disagree with the stored deltas")
    ends = np.cumsum(counts)
    starts = ends - counts
    Q = sec.meta["Q"]
    return [SparseDeltaVector(nzv[a:b], nzi[a:b], Q) for a, b in zip(starts, ends)]
