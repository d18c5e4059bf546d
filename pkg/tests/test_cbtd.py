import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltasparse.cbtd import (AlphaSchedule, BalanceError, PruneConfig, cbtd_prune, from_subcolumns,
                              iterative_prune, n_dropped, schedule_step, subcolumns, survivors,
                              verify_balance)

from oracles import cbtd_bruteforce


def test_blen_examples():
    assert survivors(64, 0.94) == 4
    assert survivors(16, 0.9375) == 1
    assert survivors(10, 0.7) == 3
    assert survivors(8, 0.0) == 8
    assert survivors(8, 1.0) == 0
    assert n_dropped(10, 0.7) == 7


def test_subcolumns_are_interleaved():
    A = np.arange(24).reshape(8, 3)
    sub = subcolumns(A, 4)
    assert sub.shape == (3, 4, 2)
    # column 0, subcolumn 1 = rows 1 and 5
    assert sub[0, 1].tolist() == [A[1, 0], A[5, 0]]
    np.testing.assert_array_equal(from_subcolumns(sub), A)
    with pytest.raises(BalanceError):
        subcolumns(np.zeros((6, 2)), 4)


def test_small_example_by_hand():
    # one column, M=2: subcolumn 0 = rows 0,2,4,6 ; subcolumn 1 = rows 1,3,5,7
    a = np.array([[0.1], [5.0], [-3.0], [0.2], [2.0], [-0.05], [0.4], [1.0]])
    B = cbtd_prune(a, PruneConfig(gamma=0.5, M=2))
    assert B[:, 0].tolist() == [0.0, 5.0, -3.0, 0.0, 2.0, 0.0, 0.0, 1.0]


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([1, 2, 4, 8]), st.integers(1, 8), st.integers(1, 6),
       st.sampled_from([0.0, 0.25, 0.5, 0.75, 0.9375, 1.0]), st.integers(0, 2**31))
def test_alpha_one_matches_bruteforce(M, K, Q, gamma, seed):
    A = np.random.default_rng(seed).normal(size=(K * M, Q))
    B = cbtd_prune(A, PruneConfig(gamma, 1.0, M))
    np.testing.assert_array_equal(B, cbtd_bruteforce(A, M, gamma))
    ok, counts = verify_balance(B, M, gamma)
    assert ok and np.all(counts == survivors(K, gamma))


def test_ties_broken_by_row():
    A = np.ones((4, 1))
    B = cbtd_prune(A, PruneConfig(0.5, M=1))
    assert B[:, 0].tolist() == [0, 0, 1, 1]


def test_alpha_zero_is_identity_and_alpha_half_is_partial():
    A = np.random.default_rng(0).normal(size=(64, 16))
    np.testing.assert_array_equal(cbtd_prune(A, PruneConfig(0.5, 0.0, 4)), A)
    B = cbtd_prune(A, PruneConfig(0.5, 0.5, 4, seed=1), epoch=0)
    dropped = np.count_nonzero(B == 0)
    full = 16 * 4 * n_dropped(16, 0.5)
    assert 0.35 * full < dropped < 0.65 * full
    # pruned entries are always among the smallest in their subcolumn
    ref = cbtd_bruteforce(A, 4, 0.5)
    assert np.all((B == 0) <= (ref == 0))


def test_dropout_mask_is_deterministic_per_seed_and_epoch():
    A = np.random.default_rng(0).normal(size=(32, 8))
    cfg = PruneConfig(0.5, 0.5, 4, seed=7)
    np.testing.assert_array_equal(cbtd_prune(A, cfg, 3), cbtd_prune(A, cfg, 3))
    assert not np.array_equal(cbtd_prune(A, cfg, 3), cbtd_prune(A, cfg, 4))


def test_schedule_reaches_one_in_thirty_epochs():
    s = AlphaSchedule(1 / 30)
    for _ in range(30):
        s = schedule_step(s)
    assert s.current_alpha == 1.0
    assert schedule_step(s) == s
    s = AlphaSchedule(1 / 30)
    for _ in range(29):
        s = schedule_step(s)
    assert s.current_alpha < 1.0


def test_iterative_prune_ends_balanced_with_updates():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(32, 6))
    hook = lambda B, e: B + 0.01 * rng.normal(size=B.shape)  # stand-in for a weight update
    B = iterative_prune(A, PruneConfig(0.75, M=4, seed=3), AlphaSchedule(0.25), 4, hook)
    assert verify_balance(B, 4, 0.75)[0]


def test_prune_config_validation():
    with pytest.raises(ValueError):
        PruneConfig(1.5)
    with pytest.raises(ValueError):
        PruneConfig(0.5, alpha=-0.1)
    with pytest.raises(ValueError):
        PruneConfig(0.5, M=0)


def test_verify_balance_reports_counts():
    B = np.zeros((8, 2))
    B[0, 0] = 1
    ok, counts = verify_balance(B, 4, 0.5)
    assert not ok and counts[0, 0] == 1
    assert verify_balance(B, 4, 0.5, exact=False)[0]
