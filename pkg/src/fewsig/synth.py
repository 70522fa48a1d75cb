"""Deterministic synthetic corpora for desk-scale end-to-end checks.

Every class owns a disjoint set of planted keywords; each token of a
document is a class keyword with probability ``keyword_rate`` and otherwise
a shared background word drawn from a Zipf(1.0) distribution (frequent
background words mimic stopwords and keep the frequency statistic
informative). Train/val/test splits are class-disjoint, so test-class
keywords never occur in training classes and classification must transfer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import rng as rng_mod
from .corpus import ClassSplit, Corpus, EmbeddingTable, build_corpus


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 20
    docs_per_class: int = 100
    doc_length: int = 20
    keywords_per_class: int = 5
    keyword_rate: float = 0.3
    background_vocab_size: int = 500
    embedding_dim: int = 32
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.keyword_rate <= 1.0:
            raise ValueError(f"keyword_rate must be in (0, 1], got {self.keyword_rate}")
        for name in ("num_classes", "docs_per_class", "doc_length",
                     "keywords_per_class", "background_vocab_size", "embedding_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.num_classes < 4:
            raise ValueError("need at least 4 classes to split into train/val/test")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "num_classes", "docs_per_class", "doc_length", "keywords_per_class",
            "keyword_rate", "background_vocab_size", "embedding_dim", "seed")}


def class_keywords(spec: SynthSpec, class_idx: int):
    return [f"kw{class_idx:02d}_{j}" for j in range(spec.keywords_per_class)]


def generate(spec: SynthSpec):
    """Build (Corpus, EmbeddingTable, ClassSplit) from the settings, reproducibly.

    Classes are named c00, c01, ...; the first half are training classes,
    the next quarter validation, the rest test.
    """
    rng = rng_mod.stream(spec.seed, "synth")

    keywords = [class_keywords(spec, c) for c in range(spec.num_classes)]
    background = [f"bg{i:04d}" for i in range(spec.background_vocab_size)]

    zipf = 1.0 / np.arange(1, spec.background_vocab_size + 1)
    zipf /= zipf.sum()

    token_lists = []
    labels = []
    for c in range(spec.num_classes):
        name = f"c{c:02d}"
        for _ in range(spec.docs_per_class):
            is_kw = rng.random(spec.doc_length) < spec.keyword_rate
            kw_draws = rng.integers(0, spec.keywords_per_class, size=spec.doc_length)
            bg_draws = rng.choice(spec.background_vocab_size, size=spec.doc_length, p=zipf)
            toks = [
                keywords[c][kw_draws[j]] if is_kw[j] else background[bg_draws[j]]
                for j in range(spec.doc_length)
            ]
            token_lists.append(toks)
            labels.append(name)
    # vocabulary ids follow first occurrence, matching what a reload of the
    # emitted corpus file would assign
    corpus, vocab = build_corpus(token_lists, labels)

    matrix = rng.uniform(-0.5, 0.5, size=(vocab.size, spec.embedding_dim))
    matrix[0] = 0.0  # reserved unknown word
    embeddings = EmbeddingTable(matrix=matrix, dim=spec.embedding_dim,
                                found=vocab.size - 1)

    n_train = spec.num_classes // 2
    n_val = max(1, spec.num_classes // 4)
    split = ClassSplit(
        train=frozenset(range(n_train)),
        val=frozenset(range(n_train, n_train + n_val)),
        test=frozenset(range(n_train + n_val, spec.num_classes)),
    )
    return corpus, embeddings, split


def write_files(spec: SynthSpec, corpus: Corpus, embeddings: EmbeddingTable,
                split: ClassSplit, outdir):
    """Emit corpus.jsonl / embeddings.txt / split.json in the standard formats."""
    import os

    from .corpus import write_corpus

    os.makedirs(outdir, exist_ok=True)
    corpus_path = os.path.join(outdir, "corpus.jsonl")
    emb_path = os.path.join(outdir, "embeddings.txt")
    split_path = os.path.join(outdir, "split.json")

    write_corpus(corpus, corpus_path)
    with open(emb_path, "w", encoding="utf-8") as fh:
        for wid in range(1, corpus.vocab.size):  # skip the reserved unknown row
            vec = " ".join(repr(float(v)) for v in embeddings.matrix[wid])
            fh.write(f"{corpus.vocab.word_of(wid)} {vec}\n")
    names = lambda ids: sorted(corpus.label_names[c] for c in ids)  # noqa: E731
    with open(split_path, "w", encoding="utf-8") as fh:
        json.dump({"train": names(split.train), "val": names(split.val),
                   "test": names(split.test)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return corpus_path, emb_path, split_path
