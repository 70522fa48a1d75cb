"""Reference learners sharing the episode harness.

Representations: ``avg`` is the unweighted mean of word embeddings; ``idf``
weights each token by log(D / document-frequency) estimated over all
training documents, normalized by the weight sum (so uniform weights reduce
to avg). Heads: 1-nearest-neighbor under Euclidean distance, or the same
ridge head as the main model fed the fixed representation.
"""

from __future__ import annotations

import numpy as np

from . import gradcore as gc
from . import ridge
from .corpus import Corpus, EmbeddingTable
from .episodes import Episode, relabel


def idf_weights(corpus: Corpus, train_classes) -> np.ndarray:
    """Per-word log(D / df) over training-class documents; df = 0 gives 0."""
    v = corpus.vocab.size
    df = np.zeros(v)
    n_docs = 0
    for c in sorted(train_classes):
        for i in corpus.by_class.get(c, ()):
            df[np.unique(corpus.examples[i].tokens)] += 1.0
            n_docs += 1
    weights = np.zeros(v)
    present = df > 0
    weights[present] = np.log(n_docs / df[present])
    return weights


def baseline_represent(example, mode: str, embeddings: EmbeddingTable,
                       idf=None) -> np.ndarray:
    """Fixed per-example vector for one of the baseline representations.

    idf examples whose tokens all carry zero weight fall back to the plain
    mean (the weighted average is undefined there).
    """
    vecs = embeddings.rows(example.tokens)
    if mode == "avg":
        return vecs.mean(axis=0)
    if mode == "idf":
        if idf is None:
            raise ValueError("idf mode needs precomputed idf weights")
        w = idf[example.tokens]
        total = w.sum()
        if total <= 0:
            return vecs.mean(axis=0)
        return (w[:, None] * vecs).sum(axis=0) / total
    raise ValueError(f"unknown representation mode {mode!r}")


def nn_classify(support_reps: np.ndarray, support_labels, query_rep: np.ndarray) -> int:
    """Label of the Euclidean-nearest support vector; ties keep the lowest index."""
    if len(support_reps) == 0:
        raise ValueError("empty support set")
    d = ((support_reps - query_rep[None, :]) ** 2).sum(axis=1)
    return int(np.asarray(support_labels)[int(np.argmin(d))])


def nn_episode_accuracy(episode: Episode, mode: str, embeddings: EmbeddingTable,
                        idf=None) -> float:
    sup = np.stack([baseline_represent(ex, mode, embeddings, idf) for ex in episode.support])
    sup_labels = [episode.label_map[ex.label] for ex in episode.support]
    hits = 0
    for ex in episode.query:
        q = baseline_represent(ex, mode, embeddings, idf)
        hits += nn_classify(sup, sup_labels, q) == episode.label_map[ex.label]
    return hits / len(episode.query)


def rr_baseline(episode: Episode, mode: str, embeddings: EmbeddingTable,
                lam: float, a: float, b: float, idf=None) -> float:
    """Query accuracy of the ridge head over a fixed baseline representation."""
    phi_s = np.stack([baseline_represent(ex, mode, embeddings, idf) for ex in episode.support])
    phi_q = np.stack([baseline_represent(ex, mode, embeddings, idf) for ex in episode.query])
    y_s, y_q = relabel(episode)
    w = ridge.fit(gc.constant(phi_s), y_s, float(lam))
    logits = ridge.predict(gc.constant(phi_q), w, float(a), float(b))
    return ridge.accuracy(logits, y_q)
