"""Minimal reverse-mode differentiation on an explicit tape.

Float64 only. A :class:`Tape` owns one sequentially built graph: every op
that touches a tracked tensor appends a backward closure, and
:func:`backward` replays the closures in reverse recording order (a valid
topological order for define-by-run graphs). Tensors with ``tape=None`` are
constants and never receive gradients.

A tape is single-owner: build one per episode, run backward once, read leaf
gradients, throw it away.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from . import kernels


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "tape", "name")

    def __init__(self, data, tape=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.tape = tape
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self):
        tag = "const" if self.tape is None else (self.name or "node")
        return f"Tensor({tag}, shape={self.data.shape})"


class Tape:
    """Ordered record of backward closures for one forward pass."""

    def __init__(self):
        self._records = []
        self.leaves = {}

    def leaf(self, data, name=None) -> Tensor:
        t = Tensor(np.array(data, dtype=np.float64, copy=True), tape=self, name=name)
        if name is not None:
            self.leaves[name] = t
        return t

    def mount(self, arrays: dict) -> dict:
        """Register a dict of named numpy arrays as tracked leaves."""
        return {k: self.leaf(v, name=k) for k, v in arrays.items()}

    def _record(self, backward_fn):
        self._records.append(backward_fn)


def constant(data) -> Tensor:
    return Tensor(data, tape=None)


def _astensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _tape_of(*tensors):
    tape = None
    for t in tensors:
        if t.tape is not None:
            if tape is not None and tape is not t.tape:
                raise ValueError("operands recorded on different tapes")
            tape = t.tape
    return tape


def _unary(a, out_data, grad_fn):
    a = _astensor(a)
    tape = _tape_of(a)
    out = Tensor(out_data, tape)
    if tape is not None:

        def bwd():
            if out.grad is not None:
                a._accum(grad_fn(out.grad))

        tape._record(bwd)
    return out


def backward(tape: Tape, loss: Tensor):
    """Accumulate d(loss)/d(tensor) into ``.grad`` of every tracked tensor."""
    if loss.data.shape != ():
        raise ShapeError(f"loss must be scalar, got shape {loss.data.shape}")
    if loss.tape is not tape:
        raise ValueError("loss was not produced on this tape")
    loss.grad = np.ones_like(loss.data)
    for fn in reversed(tape._records):
        fn()


# ---------------------------------------------------------------------------
# ops


def _addmul_reduce(g, shape):
    """Undo numpy broadcasting: reduce an output gradient to an operand shape."""
    if g.shape == shape:
        return g
    if shape == ():
        return g.sum()
    # row broadcast: (R, C) against (C,)
    return g.sum(axis=0)


def _broadcast_ok(sa, sb):
    if sa == sb or sa == () or sb == ():
        return True
    pair = {len(sa), len(sb)}
    if pair == {1, 2}:  # (R, C) with (C,)
        return sa[-1] == sb[-1]
    return False


def add(a, b):
    """Elementwise add; a scalar or matching row vector broadcasts."""
    a, b = _astensor(a), _astensor(b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"add shapes {a.shape} vs {b.shape}")
    tape = _tape_of(a, b)
    out = Tensor(a.data + b.data, tape)
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            if a.tape is not None:
                a._accum(_addmul_reduce(g, a.shape))
            if b.tape is not None:
                b._accum(_addmul_reduce(g, b.shape))

        tape._record(bwd)
    return out


def mul(a, b):
    """Elementwise product; a scalar or matching row vector broadcasts."""
    a, b = _astensor(a), _astensor(b)
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeError(f"mul shapes {a.shape} vs {b.shape}")
    tape = _tape_of(a, b)
    out = Tensor(a.data * b.data, tape)
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            if a.tape is not None:
                a._accum(_addmul_reduce(g * b.data, a.shape))
            if b.tape is not None:
                b._accum(_addmul_reduce(g * a.data, b.shape))

        tape._record(bwd)
    return out


def scale(a, s):
    """a * s for scalar s (python float or 0-d tensor)."""
    return mul(a, s)


def matmul(a, b):
    a, b = _astensor(a), _astensor(b)
    if a.data.ndim not in (1, 2) or b.data.ndim not in (1, 2):
        raise ShapeError("matmul expects 1-D or 2-D operands")
    if a.data.shape[-1] != (b.data.shape[0] if b.data.ndim >= 1 else None):
        raise ShapeError(f"matmul inner dims {a.shape} vs {b.shape}")
    tape = _tape_of(a, b)
    out = Tensor(a.data @ b.data, tape)
    if tape is not None:
        ad, bd = a.data, b.data

        def bwd():
            g = out.grad
            if g is None:
                return
            if a.tape is not None:
                if ad.ndim == 1 and bd.ndim == 2:
                    a._accum(bd @ g if g.ndim == 1 else g @ bd.T)
                elif ad.ndim == 2 and bd.ndim == 1:
                    a._accum(np.outer(g, bd))
                else:
                    a._accum(g @ bd.T)
            if b.tape is not None:
                if ad.ndim == 1 and bd.ndim == 2:
                    b._accum(np.outer(ad, g))
                elif ad.ndim == 2 and bd.ndim == 1:
                    b._accum(ad.T @ g)
                else:
                    b._accum(ad.T @ g)

        tape._record(bwd)
    return out


def transpose(a):
    a = _astensor(a)
    if a.data.ndim != 2:
        raise ShapeError("transpose expects a matrix")
    return _unary(a, a.data.T.copy(), lambda g: g.T)


def concat(tensors, axis=0):
    tensors = [_astensor(t) for t in tensors]
    tape = _tape_of(*tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tape)
    if tape is not None:
        sizes = [t.data.shape[axis] for t in tensors]
        offsets = np.cumsum([0] + sizes)

        def bwd():
            g = out.grad
            if g is None:
                return
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                if t.tape is not None:
                    idx = [slice(None)] * g.ndim
                    idx[axis] = slice(lo, hi)
                    t._accum(g[tuple(idx)])

        tape._record(bwd)
    return out


def stack(tensors):
    """Stack equal-length 1-D tensors into matrix rows."""
    tensors = [_astensor(t) for t in tensors]
    tape = _tape_of(*tensors)
    out = Tensor(np.stack([t.data for t in tensors], axis=0), tape)
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            for r, t in enumerate(tensors):
                if t.tape is not None:
                    t._accum(g[r])

        tape._record(bwd)
    return out


def exp(a):
    a = _astensor(a)
    y = np.exp(a.data)
    return _unary(a, y, lambda g: g * y)


def log(a):
    a = _astensor(a)
    return _unary(a, np.log(a.data), lambda g: g / a.data)


def tanh(a):
    a = _astensor(a)
    y = np.tanh(a.data)
    return _unary(a, y, lambda g: g * (1.0 - y * y))


def sigmoid(a):
    a = _astensor(a)
    d = a.data
    y = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    return _unary(a, y, lambda g: g * y * (1.0 - y))


def softmax(a):
    """Stable softmax over a 1-D tensor."""
    a = _astensor(a)
    if a.data.ndim != 1:
        raise ShapeError("softmax expects a vector")
    z = a.data - a.data.max()
    e = np.exp(z)
    y = e / e.sum()

    def grad_fn(g):
        return (g - np.dot(g, y)) * y

    return _unary(a, y, grad_fn)


def dropout(a, mask, rate):
    """Inverted dropout with an externally drawn 0/1 mask; rate=0 is identity."""
    a = _astensor(a)
    if rate < 0.0 or rate >= 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return _unary(a, a.data.copy(), lambda g: g)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != a.data.shape:
        raise ShapeError(f"dropout mask shape {mask.shape} vs {a.shape}")
    keep = 1.0 - rate
    return _unary(a, a.data * mask / keep, lambda g: g * mask / keep)


def mean(a):
    a = _astensor(a)
    n = a.data.size
    return _unary(a, np.asarray(a.data.mean()), lambda g: np.full_like(a.data, g / n))


def sum(a):  # noqa: A001 - mirrors np.sum naming
    a = _astensor(a)
    return _unary(a, np.asarray(a.data.sum()), lambda g: np.full_like(a.data, g))


def cross_entropy(logits, onehot):
    """Mean over rows of -log softmax(logits)[true class]; onehot is constant."""
    logits = _astensor(logits)
    y = np.asarray(onehot, dtype=np.float64)
    if logits.data.ndim != 2 or logits.data.shape != y.shape:
        raise ShapeError(f"cross_entropy shapes {logits.shape} vs {y.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    rows = y.shape[0]
    out_val = -(y * logp).sum() / rows
    p = np.exp(logp)
    return _unary(logits, np.asarray(out_val), lambda g: g * (p - y) / rows)


def solve_spd(a, b):
    """X with sym(A) X = B via Cholesky; A must be symmetric positive-definite.

    The forward reads sym(A) = (A + A^T)/2, so the gradient w.r.t. A is the
    symmetrized adjoint; both adjoints are computed by further solves against
    the cached factorization, never an explicit inverse.
    """
    a, b = _astensor(a), _astensor(b)
    ad = a.data
    if ad.ndim != 2 or ad.shape[0] != ad.shape[1]:
        raise ShapeError(f"solve_spd needs a square matrix, got {a.shape}")
    if b.data.shape[0] != ad.shape[0]:
        raise ShapeError(f"solve_spd shapes {a.shape} vs {b.shape}")
    a_sym = 0.5 * (ad + ad.T)
    try:
        factor = scipy.linalg.cho_factor(a_sym, lower=True)
    except scipy.linalg.LinAlgError as e:
        raise FloatingPointError(f"solve_spd: matrix is not positive-definite ({e})")
    x = scipy.linalg.cho_solve(factor, b.data)
    tape = _tape_of(a, b)
    out = Tensor(x, tape)
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            gb = scipy.linalg.cho_solve(factor, g)
            if b.tape is not None:
                b._accum(gb)
            if a.tape is not None:
                m = -np.outer(gb, x) if x.ndim == 1 else -gb @ x.T
                a._accum(0.5 * (m + m.T))

        tape._record(bwd)
    return out


def lstm_seq(x, w_x, w_h, b, reverse=False):
    """Kernel-backed LSTM over a whole sequence; returns per-step hidden states.

    ``reverse=True`` consumes the sequence right-to-left and returns outputs
    aligned to the original positions (the backward half of a biLSTM).
    """
    x, w_x, w_h, b = (_astensor(t) for t in (x, w_x, w_h, b))
    xd = np.ascontiguousarray(x.data[::-1] if reverse else x.data)
    if xd.ndim != 2:
        raise ShapeError("lstm_seq expects a (T, D) input")
    if w_x.data.shape != (xd.shape[1], 4 * w_h.data.shape[0]):
        raise ShapeError(f"lstm_seq weight shapes {w_x.shape} vs input {x.shape}")
    h, gates, c = kernels.lstm_forward(
        xd,
        np.ascontiguousarray(w_x.data),
        np.ascontiguousarray(w_h.data),
        np.ascontiguousarray(b.data),
    )
    h = np.asarray(h)
    out_data = h[::-1].copy() if reverse else h
    tape = _tape_of(x, w_x, w_h, b)
    out = Tensor(out_data, tape)
    if tape is not None:

        def bwd():
            g = out.grad
            if g is None:
                return
            gh = np.ascontiguousarray(g[::-1] if reverse else g)
            dx, dwx, dwh, db = kernels.lstm_backward(
                gh, xd, np.ascontiguousarray(w_x.data),
                np.ascontiguousarray(w_h.data), np.asarray(gates), np.asarray(c),
            )
            if x.tape is not None:
                dx = np.asarray(dx)
                x._accum(dx[::-1] if reverse else dx)
            if w_x.tape is not None:
                w_x._accum(np.asarray(dwx))
            if w_h.tape is not None:
                w_h._accum(np.asarray(dwh))
            if b.tape is not None:
                b._accum(np.asarray(db))

        tape._record(bwd)
    return out


# ---------------------------------------------------------------------------
# finite-difference verification


def gradcheck(f, point, eps=1e-5, max_coords_per_leaf=None, seed=0):
    """Compare reverse-mode gradients of ``f`` against central differences.

    ``f`` receives a dict of tracked leaf tensors (or a single tensor when
    ``point`` is a bare array) and must return a scalar tensor. Returns the
    max over checked coordinates of ``|a - b| / max(1, |a|, |b|)``.

    ``max_coords_per_leaf`` caps how many coordinates of each leaf are probed
    (seeded choice without replacement); None checks all of them.
    """
    single = not isinstance(point, dict)
    arrays = {"x": np.asarray(point, dtype=np.float64)} if single else {
        k: np.asarray(v, dtype=np.float64) for k, v in point.items()
    }

    def call(vals):
        tape = Tape()
        leaves = tape.mount(vals)
        out = f(leaves["x"] if single else leaves)
        return tape, leaves, out

    tape, leaves, out = call(arrays)
    backward(tape, out)
    analytic = {
        k: (leaves[k].grad if leaves[k].grad is not None else np.zeros_like(v))
        for k, v in arrays.items()
    }

    picker = np.random.Generator(np.random.PCG64(seed))
    worst = 0.0
    for name, arr in arrays.items():
        flat_idx = np.arange(arr.size)
        if max_coords_per_leaf is not None and arr.size > max_coords_per_leaf:
            flat_idx = picker.choice(arr.size, size=max_coords_per_leaf, replace=False)
        for i in flat_idx:
            idx = np.unravel_index(i, arr.shape)
            bumped = {k: v.copy() for k, v in arrays.items()}
            bumped[name][idx] += eps
            f_plus = call(bumped)[2].item()
            bumped[name][idx] -= 2 * eps
            f_minus = call(bumped)[2].item()
            numeric = (f_plus - f_minus) / (2 * eps)
            a = float(analytic[name][idx])
            err = np.abs(a - numeric) / max(1.0, np.abs(a), np.abs(numeric))
            worst = max(worst, float(err))
    return worst
