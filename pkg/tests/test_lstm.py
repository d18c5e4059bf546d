import numpy as np
import pytest

from deltasparse.lstm import (GATES, LstmLayerParams, LstmState, StackLayout, lstm_forward, lstm_step,
                              stack_weights)
from deltasparse.quant import QuantConfig, dequantize, quantize

from oracles import gate_matrices, lstm_scalar


def test_forward_matches_scalar_oracle():
    rng = np.random.default_rng(3)
    p = LstmLayerParams.random(5, 7, rng)
    xs = rng.normal(size=(6, 5))
    got = np.array([s.h for s in lstm_forward(p, xs)])
    W, b = gate_matrices(p)
    want = np.array(lstm_scalar(W, b, xs.tolist(), 7))
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_zero_params_give_known_state():
    p = LstmLayerParams.zeros(3, 4)
    out = lstm_forward(p, np.ones((2, 3)))
    # i = f = o = 0.5, g = 0 -> c stays 0, h stays 0
    assert np.all(out[-1].h == 0) and np.all(out[-1].c == 0)


def test_step_rejects_wrong_shapes():
    p = LstmLayerParams.zeros(3, 4)
    with pytest.raises(ValueError):
        lstm_step(p, LstmState.zeros(4), np.zeros(2))
    with pytest.raises(ValueError):
        lstm_step(p, LstmState.zeros(5), np.zeros(3))


def test_layout_padding():
    lay = StackLayout(5, 7, M=4)
    assert (lay.padded_input, lay.padded_hidden, lay.Q) == (8, 8, 16)
    assert lay.H == 28
    assert lay.split == 8
    lay = StackLayout(5, 7, M=8)
    assert lay.H == 32  # 28 rounded up to a multiple of 8


def test_stacked_blocks_match_gate_matrices():
    rng = np.random.default_rng(0)
    p = LstmLayerParams.random(5, 6, rng)
    w = stack_weights(p, M=4)
    assert w.matrix.shape == (w.layout.H, w.layout.Q)
    for g in GATES:
        np.testing.assert_array_equal(w.block(g, "x"), p.w_x[g])
        np.testing.assert_array_equal(w.block(g, "h"), p.w_h[g])
    # padding columns and rows hold zeros
    assert not w.matrix[:, 5:8].any()
    assert not w.matrix[:, 8 + 6:].any()
    assert not w.matrix[24:].any()


def test_stacked_product_equals_gate_preactivations():
    rng = np.random.default_rng(1)
    p = LstmLayerParams.random(3, 5, rng)
    w = stack_weights(p, M=2)
    x, h = rng.normal(size=3), rng.normal(size=5)
    rows = w.matrix @ w.layout.state_vector(x, h)
    for g, v in w.layout.split_gates(rows).items():
        np.testing.assert_allclose(v, p.w_x[g] @ x + p.w_h[g] @ h, atol=1e-12)


def test_quantized_forward_tracks_real():
    rng = np.random.default_rng(5)
    p = LstmLayerParams.random(4, 6, rng)
    q = p.quantize(QuantConfig())
    xs = rng.uniform(-1, 1, size=(12, 4))
    xq = quantize(xs, q.qcfg.act)
    hq = np.array([s.h for s in lstm_forward(q, xq)])
    href = np.array([s.h for s in lstm_forward(q.dequantize(), dequantize(xq, q.qcfg.act))])
    assert np.max(np.abs(dequantize(hq, q.qcfg.act) - href)) < 2 ** -6


def test_params_serialization_roundtrip():
    p = LstmLayerParams.random(2, 3, 0)
    back = LstmLayerParams.from_arrays(p.arrays())
    for k, v in p.arrays().items():
        np.testing.assert_array_equal(back.arrays()[k], v)
    with pytest.raises(ValueError):
        LstmLayerParams.from_arrays({"W_ii": np.zeros((3, 2))})


def test_n_params():
    assert LstmLayerParams.zeros(8, 16).n_params == 4 * 16 * 24
