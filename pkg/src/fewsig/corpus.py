"""Corpus ingestion: vocabularies, unigram statistics, embeddings, splits.

File formats (all UTF-8):
  corpus     JSON-lines, one ``{"text": ["tok", ...], "label": "name"}`` per line
  embeddings text, one ``word v1 ... vE`` per line, decimal floats
  split      JSON object ``{"train": ["class", ...], "val": [...], "test": [...]}``

All types here are immutable after construction and safe to share across
concurrent readers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

UNK_WORD = "<unk>"
UNK_ID = 0


class FormatError(ValueError):
    """A data file violated its format contract."""


class Vocabulary:
    """Dense bijective word <-> id map with the unknown word reserved at id 0."""

    def __init__(self, words=()):
        self._words = [UNK_WORD]
        self._ids = {UNK_WORD: UNK_ID}
        for w in words:
            self.add(w)

    def add(self, word: str) -> int:
        wid = self._ids.get(word)
        if wid is None:
            wid = len(self._words)
            self._ids[word] = wid
            self._words.append(word)
        return wid

    def id_of(self, word: str) -> int:
        return self._ids.get(word, UNK_ID)

    def word_of(self, wid: int) -> str:
        return self._words[wid]

    def __contains__(self, word: str) -> bool:
        return word in self._ids

    @property
    def size(self) -> int:
        return len(self._words)

    def __len__(self) -> int:
        return len(self._words)


@dataclass(frozen=True)
class Example:
    """One tokenized document: word ids plus a global class id."""

    tokens: np.ndarray  # int64, length >= 1
    label: int

    def __post_init__(self):
        object.__setattr__(self, "tokens", np.asarray(self.tokens, dtype=np.int64))
        if self.tokens.size < 1:
            raise ValueError("example must contain at least one token")


@dataclass(frozen=True)
class Corpus:
    examples: tuple
    label_names: tuple
    vocab: Vocabulary
    by_class: dict = field(repr=False)  # class id -> tuple of example indices

    @property
    def num_classes(self) -> int:
        return len(self.label_names)

    def class_id(self, name: str) -> int:
        try:
            return self.label_names.index(name)
        except ValueError:
            raise KeyError(f"unknown class {name!r}")


def _index_by_class(examples, num_classes):
    idx = {c: [] for c in range(num_classes)}
    for i, ex in enumerate(examples):
        idx[ex.label].append(i)
    return {c: tuple(v) for c, v in idx.items()}


def build_corpus(token_lists, labels, vocab=None):
    """Assemble a Corpus from in-memory token lists (same semantics as load_corpus)."""
    grow = vocab is None
    if grow:
        vocab = Vocabulary()
    label_names = []
    label_ids = {}
    examples = []
    for toks, label in zip(token_lists, labels):
        if len(toks) == 0:
            raise ValueError("empty example")
        if label not in label_ids:
            label_ids[label] = len(label_names)
            label_names.append(label)
        ids = [vocab.add(t) if grow else vocab.id_of(t) for t in toks]
        examples.append(Example(np.array(ids, dtype=np.int64), label_ids[label]))
    corpus = Corpus(
        examples=tuple(examples),
        label_names=tuple(label_names),
        vocab=vocab,
        by_class=_index_by_class(examples, len(label_names)),
    )
    return corpus, vocab


def load_corpus(path, vocab=None):
    """Read a JSON-lines corpus; returns (Corpus, Vocabulary).

    Without a supplied vocabulary, ids are assigned in first-occurrence order
    after the reserved unknown id 0. With one, out-of-vocabulary words map to
    id 0. Malformed lines and empty token arrays raise FormatError naming the
    line.
    """
    token_lists = []
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                toks = obj["text"]
                label = obj["label"]
            except (json.JSONDecodeError, KeyError, TypeError) as e:
                raise FormatError(f"{path}:{lineno}: malformed corpus line ({e})")
            if not isinstance(toks, list) or not all(isinstance(t, str) for t in toks):
                raise FormatError(f"{path}:{lineno}: 'text' must be an array of strings")
            if len(toks) == 0:
                raise FormatError(f"{path}:{lineno}: empty token array")
            if not isinstance(label, str):
                raise FormatError(f"{path}:{lineno}: 'label' must be a string")
            token_lists.append(toks)
            labels.append(label)
    return build_corpus(token_lists, labels, vocab=vocab)


def write_corpus(corpus: Corpus, path):
    """Write a Corpus back to the JSON-lines format."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in corpus.examples:
            obj = {
                "text": [corpus.vocab.word_of(int(t)) for t in ex.tokens],
                "label": corpus.label_names[ex.label],
            }
            fh.write(json.dumps(obj) + "\n")


class UnigramModel:
    """Maximum-likelihood token frequencies over a document set. No smoothing."""

    def __init__(self, counts: np.ndarray):
        self.counts = np.asarray(counts, dtype=np.float64)
        self.total = float(self.counts.sum())

    def prob(self, word_id: int) -> float:
        if self.total == 0 or word_id >= self.counts.size:
            return 0.0
        return float(self.counts[word_id]) / self.total

    def probs(self, word_ids: np.ndarray) -> np.ndarray:
        """Vectorized prob over an id array."""
        if self.total == 0:
            return np.zeros(len(word_ids))
        return self.counts[np.asarray(word_ids)] / self.total


def unigram_model(examples, vocab_size=None) -> UnigramModel:
    """Count tokens across all given examples; empty input gives an all-zero model."""
    examples = list(examples)
    if vocab_size is None:
        vocab_size = 1 + max(
            (int(ex.tokens.max()) for ex in examples if ex.tokens.size), default=-1
        )
    if not examples:
        return UnigramModel(np.zeros(max(vocab_size, 0)))
    all_tokens = np.concatenate([ex.tokens for ex in examples])
    return UnigramModel(np.bincount(all_tokens, minlength=vocab_size).astype(np.float64))


@dataclass(frozen=True)
class EmbeddingTable:
    """Per-word vectors, one row per vocabulary id; missing words stay zero."""

    matrix: np.ndarray  # (V, E) float64
    dim: int
    found: int = 0
    duplicates: int = 0

    def rows(self, word_ids) -> np.ndarray:
        return self.matrix[np.asarray(word_ids, dtype=np.int64)]


def load_embeddings(path, vocab: Vocabulary) -> EmbeddingTable:
    """Parse a text embedding table; vocab words not in the file get zero rows.

    A word listed twice keeps its last occurrence; the number of such
    overwrites is reported in ``duplicates``.
    """
    dim = None
    matrix = None
    found = set()
    duplicates = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if len(values) == 0:
                raise FormatError(f"{path}:{lineno}: no vector components (dimension 0)")
            if dim is None:
                dim = len(values)
                matrix = np.zeros((vocab.size, dim))
            elif len(values) != dim:
                raise FormatError(
                    f"{path}:{lineno}: dimension {len(values)} != {dim} of first line"
                )
            if word not in vocab:
                continue
            try:
                vec = np.array([float(v) for v in values])
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: bad float ({e})")
            wid = vocab.id_of(word)
            if wid in found:
                duplicates += 1
            found.add(wid)
            matrix[wid] = vec
    if dim is None:
        raise FormatError(f"{path}: embedding file has no vectors")
    matrix[UNK_ID] = 0.0
    if not np.isfinite(matrix).all():
        raise FormatError(f"{path}: non-finite embedding values")
    return EmbeddingTable(matrix=matrix, dim=dim, found=len(found), duplicates=duplicates)


@dataclass(frozen=True)
class ClassSplit:
    """Disjoint train/val/test class-id sets."""

    train: frozenset
    val: frozenset
    test: frozenset

    def __post_init__(self):
        object.__setattr__(self, "train", frozenset(self.train))
        object.__setattr__(self, "val", frozenset(self.val))
        object.__setattr__(self, "test", frozenset(self.test))
        if self.train & self.val or self.train & self.test or self.val & self.test:
            raise ValueError("split class sets must be pairwise disjoint")

    def classes(self, phase: str) -> frozenset:
        if phase not in ("train", "val", "test"):
            raise ValueError(f"unknown phase {phase!r}")
        return getattr(self, phase)


def load_split(path, corpus: Corpus) -> ClassSplit:
    """Read a split file and resolve class names against the corpus."""
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: malformed split file ({e})")
    sets = {}
    for key in ("train", "val", "test"):
        names = obj.get(key)
        if not isinstance(names, list):
            raise FormatError(f"{path}: split file needs a {key!r} array")
        try:
            sets[key] = frozenset(corpus.class_id(n) for n in names)
        except KeyError as e:
            raise FormatError(f"{path}: split names a class absent from the corpus: {e}")
    try:
        return ClassSplit(**sets)
    except ValueError as e:
        raise FormatError(f"{path}: {e}")


def lmi_table(corpus: Corpus):
    """Rank (word, class) pairs by local mutual information.

    LMI(w, c) = P(w, c) * ln(P(w, c) / (P(w) P(c))) with all probabilities
    estimated by token-level counts over the whole corpus. Pairs that never
    co-occur are omitted; rows are sorted by class and descending LMI.
    """
    if not corpus.examples:
        raise ValueError("corpus is empty")
    V = corpus.vocab.size
    per_class = np.zeros((corpus.num_classes, V))
    for ex in corpus.examples:
        per_class[ex.label] += np.bincount(ex.tokens, minlength=V)
    total = per_class.sum()
    p_wc = per_class / total
    p_w = p_wc.sum(axis=0)
    p_c = p_wc.sum(axis=1)

    rows = []
    for c in range(corpus.num_classes):
        entries = []
        for w in np.nonzero(per_class[c])[0]:
            lmi = p_wc[c, w] * math.log(p_wc[c, w] / (p_w[w] * p_c[c]))
            entries.append((corpus.vocab.word_of(int(w)), corpus.label_names[c], lmi, int(w)))
        entries.sort(key=lambda r: (-r[2], r[3]))
        rows.extend((w, cn, v) for w, cn, v, _ in entries)
    return rows
