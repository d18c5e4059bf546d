"""Acceptance criteria. Each test carries a ``criterion`` mark; conftest prints one PASS/FAIL line per criterion.

Run alone with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
"""
import itertools
import math
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from deltasparse.cbcsc import cbcsc_decode, cbcsc_encode, spmspv_rows, split_banks
from deltasparse.cbtd import PruneConfig, cbtd_prune, verify_balance
from deltasparse.delta import SparseDeltaVector, delta_lstm_forward, measure_temporal_sparsity
from deltasparse.lstm import LstmLayerParams, lstm_forward
from deltasparse.report import FIELD_NAMES, ReportInputs, build_report
from deltasparse.sim import (DRAM_ENERGY_PJ_PER_BIT, AcceleratorConfig, all_columns_trace, balance_ratio,
                             dense_step_cycles, dram_energy, effective_throughput, op_saving, peak_throughput,
                             simulate_sequence, simulate_workloads, speedup_report, synthetic_delta_trace,
                             workloads_from_trace)

from oracles import per_pe_event_sim

crit = pytest.mark.criterion


@crit(1, "theta=0 DeltaLSTM equals dense LSTM (50 layers, 1e-9)")
def test_c1_theta_zero_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        n_in, n_h, T = rng.integers(1, 33), rng.integers(1, 33), rng.integers(1, 17)
        M = int(rng.choice([1, 2, 4, 8]))
        p = LstmLayerParams.random(int(n_in), int(n_h), rng)
        xs = rng.normal(size=(T, n_in))
        dense = np.array([s.h for s in lstm_forward(p, xs)])
        delta = delta_lstm_forward(p, xs, 0.0, M).hs
        worst = max(worst, float(np.max(np.abs(delta - dense))))
    assert worst <= 1e-9
    assert time.perf_counter() - t0 < 10


@crit(2, "CBTD at alpha=1 leaves exactly ceil(K(1-gamma)) per subcolumn (100 matrices)")
def test_c2_cbtd_balance():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    for _ in range(100):
        M = int(rng.choice([2, 4, 8, 64]))
        H = int(rng.choice([h for h in range(8, 257) if h % M == 0]))
        gamma = float(rng.choice([0.0, 0.5, 0.9375, 1.0]))
        Q = int(rng.integers(1, 12))
        A = rng.normal(size=(H, Q))
        B = cbtd_prune(A, PruneConfig(gamma, 1.0, M, seed=int(rng.integers(1 << 30))))
        want = math.ceil(Fraction(H, M) * (1 - Fraction(gamma)))
        ok, counts = verify_balance(B, M, gamma)
        assert ok
        assert np.all(counts == want)
    assert time.perf_counter() - t0 < 5


@crit(3, "CBCSC decode(encode) identity and spmspv == dense (1000 + 1000 cases)")
def test_c3_cbcsc_roundtrip_and_spmspv():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    for _ in range(1000):
        M = int(rng.choice([1, 2, 4, 8]))
        K, Q = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        gamma = float(rng.choice([0.0, 0.25, 0.5, 0.75, 0.9375]))
        A = rng.normal(size=(K * M, Q))
        B = cbtd_prune(A, PruneConfig(gamma, 1.0, M))
        assert np.array_equal(cbcsc_decode(cbcsc_encode(B, M, gamma)), B)
    worst = 0.0
    for _ in range(1000):
        M = int(rng.choice([1, 2, 4, 8]))
        N = int(rng.choice([n for n in (1, 2, 4) if M % n == 0]))
        K, Q = int(rng.integers(1, 9)), int(rng.integers(1, 17))
        gamma = float(rng.choice([0.0, 0.5, 0.75]))
        B = cbtd_prune(rng.normal(size=(K * M, Q)), PruneConfig(gamma, 1.0, M))
        bw = split_banks(cbcsc_encode(B, M, gamma), N)
        ds = rng.normal(size=Q) * (rng.random(Q) < rng.random())
        nzi = np.flatnonzero(ds)
        worst = max(worst, float(np.max(np.abs(spmspv_rows(bw, ds[nzi], nzi) - B @ ds), initial=0.0)))
    assert worst <= 1e-12
    assert time.perf_counter() - t0 < 30


@crit(4, "peak throughput 204.8 GOp/s (64x8 @ 200 MHz) and 1.0 GOp/s (4x1 @ 125 MHz)")
def test_c4_peak_throughput():
    assert peak_throughput(AcceleratorConfig(M=64, N=8, f_pl=200e6)) == 204.8e9
    assert peak_throughput(AcceleratorConfig(M=4, N=1, f_pl=125e6)) == 1.0e9


@crit(5, "op saving 16.0x / 170.2x / 62.1x")
def test_c5_op_saving():
    assert op_saving(0.9375, 0.0) == pytest.approx(16.0, abs=0.05)
    assert op_saving(0.9375, 0.9060) == pytest.approx(170.2, abs=0.5)
    assert op_saving(0.9375, 0.7422) == pytest.approx(62.1, abs=0.5)


@crit(6, "balance ratio of [[3,1],[2,2]] is 0.8; exhaustive cycles match per-PE event sim")
def test_c6_balance_ratio_and_event_sim():
    assert balance_ratio(np.array([[3, 1], [2, 2]])) == 0.8
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    checked = 0
    for H, Q, M, N, gamma in itertools.product([8, 16], [1, 3, 8], [2, 4], [1, 2], [0.0, 0.5, 0.75]):
        B = cbtd_prune(rng.normal(size=(H, Q)), PruneConfig(gamma, 1.0, M))
        bw = split_banks(cbcsc_encode(B, M, gamma), N)
        cfg = AcceleratorConfig(M=M, N=N, pipeline_overhead=5)
        for mask in range(1 << Q):
            cols = [j for j in range(Q) if mask >> j & 1]
            vals = rng.normal(size=len(cols))
            want, rows = per_pe_event_sim(bw, cols, 5, vals.tolist())
            tr = simulate_sequence(bw, [SparseDeltaVector(vals, cols, Q)], cfg)
            assert tr.total_cycles == want
            dense = np.zeros(Q)
            dense[cols] = vals
            np.testing.assert_allclose(rows, B @ dense, atol=1e-12)
            checked += 1
    assert checked > 0
    assert time.perf_counter() - t0 < 60


H_TOP, Q_TOP, GAMMA_TOP, TS_TOP, T_TOP = 4096, 2048, 0.94, 0.906, 200


@pytest.fixture(scope="module")
def top_layer():
    cfg = AcceleratorConfig.spartus()
    blen = H_TOP // cfg.M - math.floor(H_TOP // cfg.M * GAMMA_TOP)
    deltas = synthetic_delta_trace(T_TOP, Q_TOP, TS_TOP, rng=0)
    t0 = time.perf_counter()
    tr = simulate_workloads(workloads_from_trace(deltas, cfg.N, Q_TOP), blen, cfg)
    elapsed = time.perf_counter() - t0
    dense = dense_step_cycles(H_TOP, Q_TOP, cfg) * T_TOP
    pruned = all_columns_trace(T_TOP, Q_TOP, blen, cfg).total_cycles
    return dict(cfg=cfg, blen=blen, deltas=deltas, trace=tr, elapsed=elapsed,
                speedup=speedup_report(dense, tr.total_cycles, pruned))


@crit(7, "1024-hidden top layer: latency in [0.5, 2.0] us and effective throughput in [4.7, 18.9] TOp/s")
def test_c7_latency_band(top_layer):
    tr = top_layer["trace"]
    assert top_layer["blen"] == 4
    ts = measure_temporal_sparsity(top_layer["deltas"], Q_TOP // 2)
    assert ts.total == pytest.approx(TS_TOP, abs=1e-3)
    assert 0.69 <= balance_ratio(tr) <= 0.8
    assert 0.5e-6 <= tr.latency_s <= 2.0e-6
    assert 4.7e12 <= effective_throughput(tr, H_TOP * Q_TOP) <= 18.9e12
    assert top_layer["elapsed"] < 10


@crit(8, "1024-hidden top layer: spatial speedup in [10, 16] and total in [30, 60]")
def test_c8_speedup_decomposition(top_layer):
    sp = top_layer["speedup"]
    assert 10 <= sp.spatial <= 16
    assert 30 <= sp.total <= 60
    assert sp.temporal == pytest.approx(sp.total / sp.spatial)


@crit(9, "DRAM energy uses 20.3/16.5/5.5/3.9 pJ/bit and scales linearly with fetched bits")
def test_c9_dram_energy():
    assert DRAM_ENERGY_PJ_PER_BIT == {"ddr3": 20.3, "ddr3l": 16.5, "gddr6": 5.5, "hbm2": 3.9}
    rng = np.random.default_rng(1)
    wl = rng.integers(0, 20, size=(30, 1))
    for dram, pj in DRAM_ENERGY_PJ_PER_BIT.items():
        cfg = AcceleratorConfig.edge(dram=dram)
        tr = simulate_workloads(wl, 4, cfg)
        bits = int(wl.sum()) * 4 * cfg.M * (cfg.weight_bits + cfg.lidx_bits)
        e = dram_energy(tr, cfg)
        assert e == pytest.approx(bits * pj * 1e-12 / 30)
        assert dram_energy(simulate_workloads(2 * wl, 4, cfg), cfg) == pytest.approx(2 * e)
        assert dram_energy(simulate_workloads(0 * wl, 4, cfg), cfg) == 0
        ts = measure_temporal_sparsity([SparseDeltaVector.empty(8)], 4)
        rec = build_report(ReportInputs(tr, cfg, 64, 8, 512, ts, 0.0))
        assert rec["dram_pj_per_bit"] == pj


@crit(10, "accuracy tables are not reproduced (report carries no accuracy fields)")
def test_c10_accuracy_not_reproduced():
    banned = ("per", "wer", "accuracy", "error_rate")
    assert not [f for f in FIELD_NAMES if any(b == f or f.startswith(b + "_") for b in banned)]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
