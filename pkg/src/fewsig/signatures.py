"""Distributional word signatures and frequency-preserving perturbations.

Two per-token statistics drive the attention generator:

* general importance  ``s = eps / (eps + P(w))`` with P estimated over the
  episode's source pool (frequent words score low, unseen words score 1);
* class importance    ``t = 1 / H(P(y | w))`` with the conditional estimated
  from the support set, either by a regularized linear classifier over mean
  embeddings or by raw count ratios.

Both statistics depend on the input only through unigram counts, so they are
exactly invariant under any vocabulary bijection that preserves source-pool
frequencies; ``build_perturbation`` constructs such bijections for the
verification suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import EmbeddingTable, UnigramModel
from .episodes import Episode

EPSILON = 1e-3  # frequency scale in the general-importance statistic
ENTROPY_FLOOR = 1e-3  # keeps t finite on deterministic conditionals


def general_importance(tokens, unigram: UnigramModel) -> np.ndarray:
    """s_i = eps / (eps + P(token_i)); strictly decreasing in P, in (0, 1]."""
    p = unigram.probs(np.asarray(tokens, dtype=np.int64))
    return EPSILON / (EPSILON + p)


@dataclass(frozen=True)
class SupportClassifier:
    """Linear softmax classifier fit on the support set (weights N x E)."""

    weights: np.ndarray
    iterations: int
    grad_norm: float


def _mean_embedding(examples, embeddings: EmbeddingTable) -> np.ndarray:
    return np.stack([embeddings.rows(ex.tokens).mean(axis=0) for ex in examples])


def fit_support_classifier(support, label_map, embeddings: EmbeddingTable,
                           reg: float = 0.1, lr: float = 0.1,
                           grad_tol: float = 0.1, max_iters: int = 1000) -> SupportClassifier:
    """Fit softmax(W psi(x)) on the support set by full-batch Adam.

    psi(x) is the mean word embedding. The objective (mean cross-entropy
    plus reg * ||W||_F^2) is strongly convex, so W starts at zero and
    optimization stops once the gradient Frobenius norm drops below
    ``grad_tol`` (or after ``max_iters`` steps). Deterministic.
    """
    n = len(label_map)
    if n < 2:
        raise ValueError(f"need at least 2 classes, got {n}")
    if embeddings.dim < 1:
        raise ValueError("embedding dimension must be positive")
    feats = _mean_embedding(support, embeddings)  # (M, E)
    labels = np.array([label_map[ex.label] for ex in support])
    onehot = np.eye(n)[labels]
    m = feats.shape[0]

    w = np.zeros((n, embeddings.dim))
    adam_m = np.zeros_like(w)
    adam_v = np.zeros_like(w)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    it = 0
    gnorm = np.inf
    for it in range(1, max_iters + 1):
        z = feats @ w.T
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        grad = (p - onehot).T @ feats / m + 2.0 * reg * w
        gnorm = float(np.sqrt((grad * grad).sum()))
        if gnorm < grad_tol:
            break
        adam_m = beta1 * adam_m + (1 - beta1) * grad
        adam_v = beta2 * adam_v + (1 - beta2) * grad * grad
        mhat = adam_m / (1 - beta1**it)
        vhat = adam_v / (1 - beta2**it)
        w -= lr * mhat / (np.sqrt(vhat) + eps)
    return SupportClassifier(weights=w, iterations=it, grad_norm=gnorm)


class LinearConditional:
    """P(y | word) = softmax(W f_ebd(word)) from a fitted support classifier."""

    def __init__(self, classifier: SupportClassifier, embeddings: EmbeddingTable):
        self.weights = classifier.weights
        self.embeddings = embeddings

    def probs_many(self, tokens) -> np.ndarray:
        z = self.embeddings.rows(tokens) @ self.weights.T
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        return p

    def probs(self, word_id: int) -> np.ndarray:
        return self.probs_many(np.array([word_id]))[0]


class CountConditional:
    """P(y | word) by support occurrence counts; unseen words fall back to uniform.

    Counts are token-level: every occurrence of a word inside a support
    example of class y is one (word, y) event.
    """

    def __init__(self, support, label_map, vocab_size: int):
        self.n = len(label_map)
        self.counts = np.zeros((vocab_size, self.n))
        for ex in support:
            local = label_map[ex.label]
            self.counts[:, local] += np.bincount(ex.tokens, minlength=vocab_size)

    def probs_many(self, tokens) -> np.ndarray:
        rows = self.counts[np.asarray(tokens, dtype=np.int64)]
        totals = rows.sum(axis=1, keepdims=True)
        out = np.full(rows.shape, 1.0 / self.n)
        seen = totals[:, 0] > 0
        out[seen] = rows[seen] / totals[seen]
        return out

    def probs(self, word_id: int) -> np.ndarray:
        return self.probs_many(np.array([word_id]))[0]


def conditional_distribution(word_id: int, source) -> np.ndarray:
    """Class-conditional distribution of one word under either estimator."""
    return source.probs(int(word_id))


def entropy(p: np.ndarray, axis=-1) -> np.ndarray:
    """Natural-log entropy with the 0 log 0 = 0 convention."""
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=axis)


def class_specific_importance(tokens, conditional) -> np.ndarray:
    """t_i = 1 / H(P(y | token_i)), with H floored so t stays finite."""
    p = conditional.probs_many(np.asarray(tokens, dtype=np.int64))
    h = np.maximum(entropy(p), ENTROPY_FLOOR)
    return 1.0 / h


@dataclass(frozen=True)
class SignatureMatrix:
    """Per-token (s, t) statistics for one example."""

    s: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        s, t = np.asarray(self.s), np.asarray(self.t)
        if not (np.isfinite(s).all() and np.isfinite(t).all()):
            raise ValueError("signatures must be finite")
        if (s <= 0).any() or (s > 1).any() or (t < 0).any():
            raise ValueError("signature range violated: s in (0,1], t >= 0")


def signature_matrix(tokens, unigram: UnigramModel, conditional) -> SignatureMatrix:
    return SignatureMatrix(
        s=general_importance(tokens, unigram),
        t=class_specific_importance(tokens, conditional),
    )


@dataclass(frozen=True)
class PerturbationMap:
    """A vocabulary bijection preserving source-pool unigram probabilities."""

    sigma: np.ndarray  # sigma[w] = replacement id

    def __post_init__(self):
        sig = np.asarray(self.sigma, dtype=np.int64)
        object.__setattr__(self, "sigma", sig)
        if np.sort(sig).tolist() != list(range(sig.size)):
            raise ValueError("sigma is not a bijection on the vocabulary")

    def apply_tokens(self, tokens) -> np.ndarray:
        return self.sigma[np.asarray(tokens, dtype=np.int64)]

    def inverse(self) -> "PerturbationMap":
        inv = np.empty_like(self.sigma)
        inv[self.sigma] = np.arange(self.sigma.size)
        return PerturbationMap(inv)


def build_perturbation(unigram: UnigramModel, rng: np.random.Generator) -> PerturbationMap:
    """Uniformly permute words within equal-count groups (identity across groups).

    Equal counts give exactly equal probabilities, so the frequency
    constraint holds with no tolerance.
    """
    counts = unigram.counts
    sigma = np.arange(counts.size, dtype=np.int64)
    order = np.argsort(counts, kind="stable")
    sorted_counts = counts[order]
    start = 0
    while start < counts.size:
        stop = start
        while stop < counts.size and sorted_counts[stop] == sorted_counts[start]:
            stop += 1
        group = order[start:stop]
        if group.size > 1:
            sigma[group] = group[rng.permutation(group.size)]
        start = stop
    return PerturbationMap(sigma)


def apply_perturbation(episode: Episode, pmap: PerturbationMap) -> Episode:
    """Map every support and query token through sigma; the pool is untouched."""
    from .corpus import Example

    def remap(examples):
        return tuple(
            Example(tokens=pmap.apply_tokens(ex.tokens), label=ex.label)
            for ex in examples
        )

    return Episode(
        support=remap(episode.support),
        query=remap(episode.query),
        source_pool=episode.source_pool,
        label_map=dict(episode.label_map),
        classes=episode.classes,
    )


def permute_embedding_rows(table: EmbeddingTable, pmap: PerturbationMap) -> EmbeddingTable:
    """Co-permute embedding rows so word sigma(w) keeps w's vector."""
    matrix = np.empty_like(table.matrix)
    matrix[pmap.sigma] = table.matrix
    return EmbeddingTable(matrix=matrix, dim=table.dim, found=table.found,
                          duplicates=table.duplicates)
