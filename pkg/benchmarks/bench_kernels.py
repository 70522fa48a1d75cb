"""Benchmark the compiled LSTM kernel against the numpy reference.

Times forward and backward-through-time passes on shapes matching the
attention generator (input width 2, 50 hidden units per direction) and
reports the agreement between backends. Run from a built checkout:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from fewsig.kernels import reference

try:
    from fewsig.kernels import _lstm as compiled
except ImportError:
    compiled = None


def time_backend(mod, x, w_x, w_h, b, dh, repeats):
    h, gates, c = mod.lstm_forward(x, w_x, w_h, b)
    mod.lstm_backward(dh, x, w_x, w_h, np.asarray(gates), np.asarray(c))  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        h, gates, c = mod.lstm_forward(x, w_x, w_h, b)
    t_fwd = (time.perf_counter() - t0) / repeats
    gates, c = np.asarray(gates), np.asarray(c)
    t0 = time.perf_counter()
    for _ in range(repeats):
        out = mod.lstm_backward(dh, x, w_x, w_h, gates, c)
    t_bwd = (time.perf_counter() - t0) / repeats
    return t_fwd, t_bwd, np.asarray(h), tuple(np.asarray(a) for a in out)


def main():
    rng = np.random.default_rng(0)
    hidden = 50
    print(f"{'T':>5} {'reference fwd+bwd':>20} {'compiled fwd+bwd':>20} "
          f"{'speedup':>8} {'max |diff|':>12}")
    for seq_len, repeats in ((10, 300), (20, 300), (50, 150), (200, 40)):
        x = rng.normal(size=(seq_len, 2))
        w_x = rng.normal(size=(2, 4 * hidden)) * 0.5
        w_h = rng.normal(size=(hidden, 4 * hidden)) * 0.2
        b = rng.normal(size=4 * hidden) * 0.1
        dh = rng.normal(size=(seq_len, hidden))

        rf, rb, h_ref, g_ref = time_backend(reference, x, w_x, w_h, b, dh, repeats)
        row = f"{seq_len:>5} {1e3 * (rf + rb):>17.3f} ms"
        if compiled is None:
            print(row + "  (compiled kernel not built)")
            continue
        cf, cb, h_cmp, g_cmp = time_backend(compiled, x, w_x, w_h, b, dh, repeats)
        diff = max(
            float(np.abs(h_ref - h_cmp).max()),
            *(float(np.abs(a - b_).max()) for a, b_ in zip(g_ref, g_cmp)),
        )
        row += f" {1e3 * (cf + cb):>17.3f} ms {(rf + rb) / (cf + cb):>7.1f}x {diff:>12.2e}"
        print(row)


if __name__ == "__main__":
    main()
