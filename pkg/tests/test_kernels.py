import numpy as np
import pytest

import fewsig.gradcore as gc
from fewsig import kernels
from fewsig.kernels import reference

try:
    from fewsig.kernels import _lstm as compiled
except ImportError:
    compiled = None


def _random_case(rng, seq_len=9, d=2, hidden=7):
    return (
        rng.normal(size=(seq_len, d)),
        rng.normal(size=(d, 4 * hidden)) * 0.5,
        rng.normal(size=(hidden, 4 * hidden)) * 0.3,
        rng.normal(size=4 * hidden) * 0.1,
        rng.normal(size=(seq_len, hidden)),
    )


@pytest.mark.skipif(compiled is None, reason="compiled kernel not built")
def test_backends_agree_to_machine_precision():
    rng = np.random.default_rng(0)
    for _ in range(5):
        x, w_x, w_h, b, dh = _random_case(rng)
        h_r, g_r, c_r = reference.lstm_forward(x, w_x, w_h, b)
        h_c, g_c, c_c = (np.asarray(a) for a in compiled.lstm_forward(x, w_x, w_h, b))
        assert np.abs(h_r - h_c).max() < 1e-13
        out_r = reference.lstm_backward(dh, x, w_x, w_h, g_r, c_r)
        out_c = compiled.lstm_backward(dh, x, w_x, w_h, g_c, c_c)
        for a, bb in zip(out_r, out_c):
            assert np.abs(np.asarray(a) - np.asarray(bb)).max() < 1e-12


def test_reverse_mode_equals_manual_flip():
    rng = np.random.default_rng(1)
    x, w_x, w_h, b, _ = _random_case(rng)
    h_rev = gc.lstm_seq(gc.constant(x), gc.constant(w_x), gc.constant(w_h),
                        gc.constant(b), reverse=True).data
    h_manual, _, _ = kernels.lstm_forward(np.ascontiguousarray(x[::-1]), w_x, w_h, b)
    np.testing.assert_allclose(h_rev, np.asarray(h_manual)[::-1], atol=1e-15)


def test_gradcheck_reference_backend(monkeypatch):
    monkeypatch.setattr(gc.kernels, "lstm_forward", reference.lstm_forward)
    monkeypatch.setattr(gc.kernels, "lstm_backward", reference.lstm_backward)
    rng = np.random.default_rng(2)
    x, w_x, w_h, b, _ = _random_case(rng, seq_len=5, hidden=4)

    def f(lv):
        h = gc.lstm_seq(lv["x"], lv["wx"], lv["wh"], lv["b"], reverse=True)
        return gc.sum(gc.tanh(h))

    err = gc.gradcheck(f, {"x": x, "wx": w_x, "wh": w_h, "b": b})
    assert err < 1e-6


def test_single_step_sequence():
    rng = np.random.default_rng(3)
    x, w_x, w_h, b, _ = _random_case(rng, seq_len=1, hidden=4)
    h, gates, c = kernels.lstm_forward(x, w_x, w_h, b)
    assert np.asarray(h).shape == (1, 4)
    # t=0 has no recurrent input: gates depend on x and b alone
    z = x[0] @ w_x + b
    i = 1.0 / (1.0 + np.exp(-z[:4]))
    g = np.tanh(z[8:12])
    o = 1.0 / (1.0 + np.exp(-z[12:]))
    np.testing.assert_allclose(np.asarray(h)[0], o * np.tanh(i * g), atol=1e-14)


def test_backend_selection_is_reported():
    import os

    assert kernels.BACKEND in ("compiled", "reference")
    forced = os.environ.get("FEWSIG_KERNEL", "").lower() in ("reference", "numpy")
    if compiled is not None and not forced:
        assert kernels.BACKEND == "compiled"
    if forced:
        assert kernels.BACKEND == "reference"
