"""Column-balanced targeted dropout.

Each column of an ``H x Q`` matrix is cut into ``M`` interleaved subcolumns
(row ``r`` belongs to subcolumn ``r % M``), so subcolumn ``m`` is exactly the
set of rows one PE sees. Within every subcolumn the ``floor(K * gamma)``
smallest-magnitude entries (``K = H / M``) are zeroed, each with probability
``alpha``. At ``alpha == 1`` every subcolumn keeps the same number of entries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

_EPS = 1e-9


class BalanceError(ValueError):
    pass


def n_dropped(K: int, gamma: float) -> int:
    """``floor(K * gamma)`` with a small guard against float noise (10 * 0.7 etc.)."""
    return min(K, math.floor(K * gamma + _EPS))


def survivors(K: int, gamma: float) -> int:
    """Entries kept per subcolumn: ``K - floor(K*gamma)``, i.e. ``ceil(K*(1-gamma))``."""
    return K - n_dropped(K, gamma)


def subcolumns(A: np.ndarray, M: int) -> np.ndarray:
    """View ``A`` (H x Q) as ``(Q, M, H // M)``: ``[j, m, k] = A[k*M + m, j]``."""
    H, Q = A.shape
    if M < 1 or H % M:
        raise BalanceError(f"matrix height {H} is not divisible by M={M}")
    return A.reshape(H // M, M, Q).transpose(2, 1, 0)


def from_subcolumns(sub: np.ndarray) -> np.ndarray:
    Q, M, K = sub.shape
    return sub.transpose(2, 1, 0).reshape(K * M, Q)


def pad_rows(A: np.ndarray, M: int) -> np.ndarray:
    H = A.shape[0]
    extra = -H % M
    if not extra:
        return A
    return np.concatenate([A, np.zeros((extra, A.shape[1]), dtype=A.dtype)])


@dataclass(frozen=True)
class PruneConfig:
    gamma: float
    alpha: float = 1.0
    M: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.M < 1:
            raise ValueError(f"M must be positive, got {self.M}")


def _uniforms(shape, seed: int, epoch: int) -> np.ndarray:
    # Philox is counter based: element (j, m, k) always gets the same draw for a
    # given (seed, epoch), however the work is split.
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, epoch], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key)).random(shape)


def cbtd_prune(A: np.ndarray, cfg: PruneConfig, epoch: int = 0) -> np.ndarray:
    A = np.asarray(A)
    sub = subcolumns(A, cfg.M)
    K = sub.shape[2]
    k_drop = n_dropped(K, cfg.gamma)
    out = sub.copy()
    if k_drop == 0 or cfg.alpha == 0.0:
        return from_subcolumns(out)
    # stable sort: equal magnitudes are dropped lowest row first
    order = np.argsort(np.abs(sub), axis=2, kind="stable")[..., :k_drop]
    candidate = np.zeros(sub.shape, dtype=bool)
    np.put_along_axis(candidate, order, True, axis=2)
    if cfg.alpha < 1.0:
        candidate &= _uniforms(sub.shape, cfg.seed, epoch) < cfg.alpha
    out[candidate] = 0
    return from_subcolumns(out)


def verify_balance(B: np.ndarray, M: int, gamma: float, exact: bool = True) -> tuple[bool, np.ndarray]:
    """Check every subcolumn holds ``survivors(H/M, gamma)`` nonzeros.

    Returns ``(ok, counts)`` where ``counts[j, m]`` is the nonzero count of
    subcolumn ``m`` of column ``j``. With ``exact=False`` fewer nonzeros are
    accepted (natural zeros in the kept positions).
    """
    sub = subcolumns(np.asarray(B), M)
    counts = np.count_nonzero(sub, axis=2)
    want = survivors(sub.shape[2], gamma)
    ok = bool(np.all(counts == want) if exact else np.all(counts <= want))
    return ok, counts


@dataclass(frozen=True)
class AlphaSchedule:
    delta_alpha: float
    epochs_elapsed: int = 0

    @property
    def current_alpha(self) -> float:
        a = self.epochs_elapsed * self.delta_alpha
        return 1.0 if a >= 1.0 - _EPS else a


def schedule_step(s: AlphaSchedule) -> AlphaSchedule:
    if s.current_alpha >= 1.0:
        return s
    return replace(s, epochs_elapsed=s.epochs_elapsed + 1)


UpdateHook = Callable[[np.ndarray, int], np.ndarray]


def iterative_prune(A: np.ndarray, cfg: PruneConfig, schedule: AlphaSchedule, epochs: int,
                    update_hook: Optional[UpdateHook] = None) -> np.ndarray:
    """Run the training-loop skeleton with CBTD after every parameter update.

    Each epoch calls ``update_hook(B, epoch)`` (standing in for the gradient
    update), advances the schedule and prunes at the new ``alpha``.
    """
    B = np.array(A, copy=True)
    for epoch in range(epochs):
        if update_hook is not None:
            B = np.asarray(update_hook(B, epoch))
        schedule = schedule_step(schedule)
        B = cbtd_prune(B, replace(cfg, alpha=schedule.current_alpha), epoch=epoch)
    return B
