"""Column-balanced compressed sparse column (CBCSC) storage.

Because every subcolumn holds exactly ``blen`` entries, the entries for
column ``j`` / subcolumn ``m`` start at ``((j * M) + m) * blen`` and no column
pointer array is needed. ``lidx`` is the 0-based position of an entry inside
its subcolumn, so its global row is ``lidx * M + m``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cbtd import BalanceError, from_subcolumns, subcolumns, survivors
from .lstm import GATES, StackLayout


class EncodingError(ValueError):
    pass


@dataclass
class CbcscMatrix:
    val: np.ndarray
    lidx: np.ndarray
    blen: int
    H: int
    Q: int
    M: int
    gamma: float
    lidx_bits: int = 8

    def __post_init__(self):
        self.val = np.asarray(self.val).reshape(-1)
        self.lidx = np.asarray(self.lidx, dtype=np.int64).reshape(-1)
        self.validate()

    @property
    def K(self) -> int:
        return self.H // self.M

    def validate(self):
        if self.M < 1 or self.H % self.M:
            raise EncodingError(f"H={self.H} is not divisible by M={self.M}")
        n = self.Q * self.M * self.blen
        if self.val.size != n or self.lidx.size != n:
            raise EncodingError(
                f"expected {n} entries (Q*M*blen), got val={self.val.size} lidx={self.lidx.size}")
        if not 0 <= self.blen <= self.K:
            raise EncodingError(f"blen={self.blen} outside 0..{self.K}")
        if n == 0:
            return
        if self.lidx.min() < 0 or self.lidx.max() >= self.K:
            raise EncodingError(f"local index out of range 0..{self.K - 1}")
        if self.lidx.max() >= 1 << self.lidx_bits:
            raise EncodingError(f"local index {self.lidx.max()} does not fit {self.lidx_bits} bits")
        groups = self.lidx.reshape(self.Q, self.M, self.blen)
        if np.any(np.diff(groups, axis=2) <= 0):
            raise EncodingError("local indices must be strictly increasing within each subcolumn")

    def groups(self) -> tuple[np.ndarray, np.ndarray]:
        """``(val, lidx)`` reshaped to ``(Q, M, blen)``."""
        shape = (self.Q, self.M, self.blen)
        return self.val.reshape(shape), self.lidx.reshape(shape)

    def column(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Stored values and global rows of column ``j`` (``M * blen`` of each)."""
        v, l = self.groups()
        rows = l[j] * self.M + np.arange(self.M)[:, None]
        return v[j].reshape(-1), rows.reshape(-1)


def cbcsc_encode(B: np.ndarray, M: int, gamma: float, lidx_bits: int | None = None,
                 lenient: bool = False) -> CbcscMatrix:
    """Encode a column-balanced matrix.

    Strict mode demands exactly ``blen`` nonzeros per subcolumn. In lenient
    mode subcolumns with fewer nonzeros are topped up with explicit zero
    entries at their lowest free positions; more than ``blen`` is always an
    error.
    """
    B = np.asarray(B)
    H, Q = B.shape
    try:
        sub = subcolumns(B, M)
    except BalanceError as e:
        raise EncodingError(str(e)) from None
    K = sub.shape[2]
    blen = survivors(K, gamma)
    nz = sub != 0
    counts = nz.sum(axis=2)
    if lenient:
        if np.any(counts > blen):
            j, m = np.argwhere(counts > blen)[0]
            raise EncodingError(
                f"column {j} subcolumn {m} has {counts[j, m]} nonzeros, more than blen={blen}")
        need = blen - counts
        zero_rank = np.cumsum(~nz, axis=2)
        keep = nz | (~nz & (zero_rank <= need[..., None]))
    else:
        if np.any(counts != blen):
            j, m = np.argwhere(counts != blen)[0]
            raise EncodingError(
                f"matrix is not column balanced: column {j} subcolumn {m} has {counts[j, m]} "
                f"nonzeros, expected {blen}")
        keep = nz
    _, _, k = np.nonzero(keep)
    if lidx_bits is None:
        lidx_bits = max(1, (K - 1).bit_length())
    return CbcscMatrix(sub[keep], k, blen, H, Q, M, gamma, lidx_bits)


def cbcsc_decode(enc: CbcscMatrix) -> np.ndarray:
    enc.validate()
    sub = np.zeros((enc.Q, enc.M, enc.K), dtype=enc.val.dtype)
    v, l = enc.groups()
    np.put_along_axis(sub, l, v, axis=2)
    return from_subcolumns(sub)


@dataclass
class BankedWeights:
    """``N`` CBCSC slices; bank ``n`` holds columns ``j`` with ``j % N == n``."""

    banks: list[CbcscMatrix]
    N: int
    Q: int

    @property
    def blen(self) -> int:
        return self.banks[0].blen

    @property
    def M(self) -> int:
        return self.banks[0].M

    @property
    def H(self) -> int:
        return self.banks[0].H

    def bank_of(self, j):
        return np.asarray(j) % self.N


def _pad_columns(enc: CbcscMatrix, Q: int) -> CbcscMatrix:
    extra = Q - enc.Q
    if extra == 0:
        return enc
    v, l = enc.groups()
    pv = np.zeros((extra, enc.M, enc.blen), dtype=v.dtype)
    pl = np.broadcast_to(np.arange(enc.blen), (extra, enc.M, enc.blen))
    return CbcscMatrix(np.concatenate([v, pv]), np.concatenate([l, pl]), enc.blen,
                       enc.H, Q, enc.M, enc.gamma, enc.lidx_bits)


def split_banks(enc: CbcscMatrix, N: int) -> BankedWeights:
    if N < 1:
        raise ValueError(f"N must be positive, got {N}")
    padded = _pad_columns(enc, -(-enc.Q // N) * N)
    v, l = padded.groups()
    banks = [CbcscMatrix(v[n::N].copy(), l[n::N].copy(), enc.blen, enc.H, padded.Q // N,
                         enc.M, enc.gamma, enc.lidx_bits) for n in range(N)]
    return BankedWeights(banks, N, enc.Q)


def merge_banks(bw: BankedWeights) -> CbcscMatrix:
    b0 = bw.banks[0]
    Qp = b0.Q * bw.N
    v = np.zeros((Qp, b0.M, b0.blen), dtype=b0.val.dtype)
    l = np.zeros((Qp, b0.M, b0.blen), dtype=np.int64)
    for n, bank in enumerate(bw.banks):
        bv, bl = bank.groups()
        v[n::bw.N], l[n::bw.N] = bv, bl
    return CbcscMatrix(v[: bw.Q], l[: bw.Q], b0.blen, b0.H, bw.Q, b0.M, b0.gamma, b0.lidx_bits)


def _as_banked(weights) -> BankedWeights:
    if isinstance(weights, CbcscMatrix):
        return BankedWeights([weights], 1, weights.Q)
    return weights


def spmspv_rows(weights, nzv: np.ndarray, nzi: np.ndarray) -> np.ndarray:
    """Sparse-matrix x sparse-vector product as a dense length-``H`` vector."""
    bw = _as_banked(weights)
    nzv = np.asarray(nzv)
    nzi = np.asarray(nzi, dtype=np.int64)
    dtype = np.result_type(bw.banks[0].val.dtype, nzv.dtype)
    out = np.zeros(bw.H, dtype=dtype)
    if nzi.size and (nzi.min() < 0 or nzi.max() >= bw.Q):
        raise IndexError(f"delta index out of range 0..{bw.Q - 1}")
    if bw.blen == 0 or nzi.size == 0:
        return out
    m = np.arange(bw.M)[None, :, None]
    for n, bank in enumerate(bw.banks):
        sel = nzi % bw.N == n
        if not sel.any():
            continue
        local = nzi[sel] // bw.N
        v, l = bank.groups()
        contrib = v[local] * nzv[sel][:, None, None]
        np.add.at(out, (l[local] * bw.M + m).reshape(-1), contrib.reshape(-1))
    return out


def spmspv(weights, delta, accum: dict[str, np.ndarray] | None, layout: StackLayout) -> dict[str, np.ndarray]:
    """Add ``W_s @ delta`` into the four gate accumulators.

    Rows beyond ``4 * hidden_size`` (row padding) are dropped.
    """
    rows = spmspv_rows(weights, delta.nzv, delta.nzi)
    if rows.size != layout.H:
        raise ValueError(f"weights have {rows.size} rows, layout expects {layout.H}")
    if accum is None:
        return layout.split_gates(rows)
    return {g: accum[g] + rows[layout.rows(g)] for g in GATES}
