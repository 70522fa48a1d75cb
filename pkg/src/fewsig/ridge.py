"""Differentiable closed-form ridge head.

Per episode the head solves

    min_W ||Phi_S W - Y_S||_F^2 + lambda ||W||_F^2

in closed form through the support-side Gram system (size NK x NK, always
solved, never inverted), then scores queries as a * Phi_Q W + b before the
softmax. The scale a and offset b only calibrate confidence; the argmax is
unaffected. Everything is built from tape ops, so the query cross-entropy
differentiates through the solve into the attention generator and the meta
scalars (lambda and a live in log space to stay positive).
"""

from __future__ import annotations

import numpy as np

from . import gradcore as gc


def init_meta_scalars() -> dict:
    """Neutral start: lambda = 1, a = 1, b = 0."""
    return {
        "log_lambda": np.zeros(()),
        "log_a": np.zeros(()),
        "bias": np.zeros(()),
    }


def fit(phi_s, y_s, lam) -> gc.Tensor:
    """Ridge weights W (E x N) for support representations and one-hot labels.

    ``lam`` may be a positive float or a tracked scalar tensor.
    """
    phi_s = gc._astensor(phi_s)
    lam_t = gc._astensor(lam)
    if not np.isfinite(phi_s.data).all():
        raise FloatingPointError("non-finite support representations")
    if not (np.isfinite(lam_t.data) and lam_t.data > 0):
        raise FloatingPointError("ridge penalty must be positive and finite")
    y_s = np.asarray(y_s, dtype=np.float64)
    nk = phi_s.shape[0]
    gram = gc.matmul(phi_s, gc.transpose(phi_s))
    system = gc.add(gram, gc.mul(gc.constant(np.eye(nk)), lam_t))
    coeff = gc.solve_spd(system, gc.constant(y_s))
    return gc.matmul(gc.transpose(phi_s), coeff)


def predict(phi_q, w, a, b) -> gc.Tensor:
    """Calibrated query logits a * Phi_Q W + b (b added entrywise)."""
    return gc.add(gc.mul(gc.matmul(gc._astensor(phi_q), w), gc._astensor(a)),
                  gc._astensor(b))


def episode_loss(logits, y_q) -> gc.Tensor:
    """Mean query cross-entropy after the softmax."""
    return gc.cross_entropy(logits, y_q)


def accuracy(logits, y_q) -> float:
    """Fraction of query rows whose argmax matches the true class."""
    data = logits.data if isinstance(logits, gc.Tensor) else np.asarray(logits)
    return float((data.argmax(axis=1) == np.asarray(y_q).argmax(axis=1)).mean())


def normal_equations_residual(phi_s, y_s, lam, w) -> float:
    """Relative residual of (Phi^T Phi + lambda I) W = Phi^T Y; zero at the optimum."""
    phi_s = np.asarray(phi_s)
    rhs = phi_s.T @ np.asarray(y_s)
    lhs = (phi_s.T @ phi_s + lam * np.eye(phi_s.shape[1])) @ np.asarray(w)
    return float(np.linalg.norm(lhs - rhs) / (1.0 + np.linalg.norm(rhs)))
