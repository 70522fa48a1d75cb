"""The attention generator: word signatures in, per-token attention out.

Each token contributes its signature row (general importance, rescaled class
importance, or either alone under ablation). A biLSTM with 50 hidden units
per direction fuses the rows across the sequence; the "no recurrence"
ablation replaces it with a per-token two-layer perceptron. A learned
scoring vector and a softmax turn the fused states into attention weights,
which then mix the pre-trained word embeddings into one vector per example.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gradcore as gc
from .corpus import EmbeddingTable
from .signatures import SignatureMatrix

HIDDEN = 50  # per direction
MLP_WIDTH = 50


@dataclass(frozen=True)
class AttentionFlags:
    """Ablation switches for the generator input and fusion layer."""

    use_s: bool = True
    use_t: bool = True
    use_bilstm: bool = True
    rescale_t: bool = True

    def __post_init__(self):
        if not (self.use_s or self.use_t):
            raise ValueError("at least one signature (use_s / use_t) must be active")

    @property
    def input_dim(self) -> int:
        return int(self.use_s) + int(self.use_t)

    @property
    def score_dim(self) -> int:
        return 2 * HIDDEN if self.use_bilstm else MLP_WIDTH


def signature_input(sig: SignatureMatrix, flags: AttentionFlags) -> np.ndarray:
    """Per-token input rows. t is squashed to t/(1+t) so extreme values
    cannot saturate the recurrent gates; ordering is preserved."""
    cols = []
    if flags.use_s:
        cols.append(sig.s)
    if flags.use_t:
        t = sig.t / (1.0 + sig.t) if flags.rescale_t else sig.t
        cols.append(t)
    return np.stack(cols, axis=1)


def init_attention_params(flags: AttentionFlags, rng: np.random.Generator) -> dict:
    """Fresh generator weights.

    Recurrent weights are uniform in +-1/sqrt(fan_in); biases start at zero
    except the forget gate (1.0) so early training keeps cell memory. The
    scoring vector is uniform in +-1/sqrt(len(v)).
    """
    d = flags.input_dim

    def uniform(shape, fan_in):
        lim = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-lim, lim, size=shape)

    params = {}
    if flags.use_bilstm:
        for side in ("fwd", "bwd"):
            b = np.zeros(4 * HIDDEN)
            b[HIDDEN : 2 * HIDDEN] = 1.0
            params[f"attn.{side}.w_x"] = uniform((d, 4 * HIDDEN), d)
            params[f"attn.{side}.w_h"] = uniform((HIDDEN, 4 * HIDDEN), HIDDEN)
            params[f"attn.{side}.b"] = b
    else:
        params["attn.mlp.w1"] = uniform((d, MLP_WIDTH), d)
        params["attn.mlp.b1"] = np.zeros(MLP_WIDTH)
        params["attn.mlp.w2"] = uniform((MLP_WIDTH, MLP_WIDTH), MLP_WIDTH)
        params["attn.mlp.b2"] = np.zeros(MLP_WIDTH)
    params["attn.v"] = uniform((flags.score_dim,), flags.score_dim)
    return params


def attend(sig: SignatureMatrix, leaves: dict, flags: AttentionFlags,
           dropout: float = 0.0, rng: np.random.Generator | None = None) -> gc.Tensor:
    """Attention weights for one example; a tracked (T,) tensor summing to 1.

    ``leaves`` are the generator weights mounted on the active tape.
    Dropout (applied to the fused states) requires an rng to draw the mask;
    rate 0 disables it.
    """
    x = gc.constant(signature_input(sig, flags))
    if x.shape[0] < 1:
        raise ValueError("cannot attend over an empty sequence")
    if flags.use_bilstm:
        h_f = gc.lstm_seq(x, leaves["attn.fwd.w_x"], leaves["attn.fwd.w_h"],
                          leaves["attn.fwd.b"])
        h_b = gc.lstm_seq(x, leaves["attn.bwd.w_x"], leaves["attn.bwd.w_h"],
                          leaves["attn.bwd.b"], reverse=True)
        h = gc.concat([h_f, h_b], axis=1)
    else:
        hidden = gc.tanh(gc.add(gc.matmul(x, leaves["attn.mlp.w1"]), leaves["attn.mlp.b1"]))
        h = gc.add(gc.matmul(hidden, leaves["attn.mlp.w2"]), leaves["attn.mlp.b2"])
    if dropout > 0.0:
        if rng is None:
            raise ValueError("dropout requires an rng for the mask")
        mask = (rng.random(h.shape) >= dropout).astype(np.float64)
        h = gc.dropout(h, mask, dropout)
    scores = gc.matmul(h, leaves["attn.v"])
    return gc.softmax(scores)


def uniform_attention(length: int) -> gc.Tensor:
    """Constant 1/T weights (the unweighted-average ablation)."""
    return gc.constant(np.full(length, 1.0 / length))


def represent(tokens, alpha: gc.Tensor, embeddings: EmbeddingTable) -> gc.Tensor:
    """Attention-weighted sum of the token embeddings, a length-E tensor."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if alpha.shape != (tokens.size,):
        raise gc.ShapeError(f"{alpha.shape[0]} weights for {tokens.size} tokens")
    return gc.matmul(alpha, gc.constant(embeddings.rows(tokens)))
