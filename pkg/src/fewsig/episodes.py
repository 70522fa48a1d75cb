"""Episode sampling for N-way K-shot tasks.

One episode bundles a support set (N*K examples), a query set (N*L
examples) and a source-pool reference used for corpus statistics. RNG
consumption order is fixed: first the class draw, then one permutation per
sampled class (support indices before query indices), so identical seeds
give identical episodes everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import ClassSplit, Corpus


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class Episode:
    support: tuple  # N*K examples, grouped by class in sampled order
    query: tuple  # N*L examples, same grouping
    source_pool: tuple  # examples supplying corpus-level statistics
    label_map: dict  # global class id -> local id in [0, N)
    classes: tuple  # sampled global class ids, local order

    @property
    def n_way(self) -> int:
        return len(self.classes)


def sample_episode(corpus: Corpus, split: ClassSplit, phase: str, n_way: int,
                   k_shot: int, l_query: int, rng: np.random.Generator) -> Episode:
    """Draw one episode for the given phase.

    Training episodes pool every example of the non-sampled training
    classes; validation and test episodes pool all training-class examples.
    """
    phase_classes = sorted(split.classes(phase))
    if len(phase_classes) < n_way:
        raise SamplingError(
            f"phase {phase!r} has {len(phase_classes)} classes, need N={n_way}"
        )
    chosen = [int(c) for c in rng.choice(phase_classes, size=n_way, replace=False)]

    support, query = [], []
    for c in chosen:
        idx = corpus.by_class.get(c, ())
        if len(idx) < k_shot + l_query:
            raise SamplingError(
                f"class {corpus.label_names[c]!r} has {len(idx)} examples, "
                f"need K+L={k_shot + l_query}"
            )
        perm = rng.permutation(len(idx))
        support.extend(corpus.examples[idx[j]] for j in perm[:k_shot])
        query.extend(corpus.examples[idx[j]] for j in perm[k_shot : k_shot + l_query])

    if phase == "train":
        pool_classes = sorted(split.train - set(chosen))
    else:
        pool_classes = sorted(split.train)
    pool = tuple(
        corpus.examples[i] for c in pool_classes for i in corpus.by_class.get(c, ())
    )

    return Episode(
        support=tuple(support),
        query=tuple(query),
        source_pool=pool,
        label_map={c: i for i, c in enumerate(chosen)},
        classes=tuple(chosen),
    )


def relabel(episode: Episode):
    """One-hot local-label matrices (Y_support, Y_query), rows in set order."""
    n = episode.n_way
    y_s = np.zeros((len(episode.support), n))
    for r, ex in enumerate(episode.support):
        y_s[r, episode.label_map[ex.label]] = 1.0
    y_q = np.zeros((len(episode.query), n))
    for r, ex in enumerate(episode.query):
        y_q[r, episode.label_map[ex.label]] = 1.0
    return y_s, y_q


def dump_episode(episode: Episode, corpus: Corpus, path):
    """Write support and query examples as corpus JSON-lines plus a role field."""
    with open(path, "w", encoding="utf-8") as fh:
        for role, examples in (("support", episode.support), ("query", episode.query)):
            for ex in examples:
                obj = {
                    "text": [corpus.vocab.word_of(int(t)) for t in ex.tokens],
                    "label": corpus.label_names[ex.label],
                    "role": role,
                }
                fh.write(json.dumps(obj) + "\n")
