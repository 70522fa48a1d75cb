import json
import math

import numpy as np
import pytest

from fewsig.corpus import (
    ClassSplit,
    Example,
    FormatError,
    Vocabulary,
    build_corpus,
    lmi_table,
    load_corpus,
    load_embeddings,
    load_split,
    unigram_model,
    write_corpus,
)


def _write_lines(path, objs):
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj) + "\n")


def test_two_line_file(tmp_path):
    path = tmp_path / "c.jsonl"
    _write_lines(path, [
        {"text": ["hello", "world"], "label": "a"},
        {"text": ["bye"], "label": "b"},
    ])
    corpus, vocab = load_corpus(path)
    assert len(corpus.examples) == 2
    assert corpus.num_classes == 2
    assert corpus.label_names == ("a", "b")


def test_empty_text_rejected_with_line_number(tmp_path):
    path = tmp_path / "c.jsonl"
    _write_lines(path, [
        {"text": ["x"], "label": "a"},
        {"text": [], "label": "a"},
    ])
    with pytest.raises(FormatError, match=":2"):
        load_corpus(path)


def test_malformed_line_names_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"text": ["x"], "label": "a"}\nnot json\n')
    with pytest.raises(FormatError, match=":2"):
        load_corpus(path)


def test_first_occurrence_ids_after_reserved_unk(tmp_path):
    path = tmp_path / "c.jsonl"
    _write_lines(path, [{"text": ["grandma", "beauty"], "label": "a"}])
    corpus, vocab = load_corpus(path)
    # re-read the file and confirm ids follow first occurrence after UNK=0
    seen = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            for tok in json.loads(line)["text"]:
                if tok not in seen:
                    seen.append(tok)
    assert [vocab.id_of(w) for w in seen] == [1, 2]
    assert vocab.id_of("<unk>") == 0


def test_supplied_vocab_maps_oov_to_unk(tmp_path):
    vocab = Vocabulary(["known"])
    path = tmp_path / "c.jsonl"
    _write_lines(path, [{"text": ["known", "novel"], "label": "a"}])
    corpus, vocab2 = load_corpus(path, vocab=vocab)
    assert vocab2 is vocab
    assert corpus.examples[0].tokens.tolist() == [vocab.id_of("known"), 0]


def test_load_is_deterministic(tmp_path):
    path = tmp_path / "c.jsonl"
    _write_lines(path, [
        {"text": ["d", "c", "d"], "label": "x"},
        {"text": ["b", "a"], "label": "y"},
    ])
    c1, v1 = load_corpus(path)
    c2, v2 = load_corpus(path)
    assert [v1.word_of(i) for i in range(v1.size)] == \
           [v2.word_of(i) for i in range(v2.size)]
    for e1, e2 in zip(c1.examples, c2.examples):
        assert e1.tokens.tolist() == e2.tokens.tolist()


def test_corpus_roundtrip_through_writer(tmp_path):
    path = tmp_path / "c.jsonl"
    _write_lines(path, [
        {"text": ["u", "v", "u"], "label": "a"},
        {"text": ["w"], "label": "b"},
    ])
    corpus, _ = load_corpus(path)
    out = tmp_path / "out.jsonl"
    write_corpus(corpus, out)
    assert out.read_text() == path.read_text()


def test_vocabulary_roundtrip_invariant():
    vocab = Vocabulary(["q", "r", "s"])
    for i in range(vocab.size):
        assert vocab.id_of(vocab.word_of(i)) == i


def test_unigram_counts():
    exs = [Example(np.array([1, 1, 2]), 0), Example(np.array([3]), 1)]
    model = unigram_model(exs, vocab_size=5)
    assert model.prob(1) == 0.5
    assert model.prob(2) == 0.25
    assert model.prob(3) == 0.25
    assert model.prob(4) == 0.0
    assert abs(model.counts.sum() / model.total - 1.0) < 1e-9


def test_unigram_probs_sum_to_one():
    rng = np.random.default_rng(0)
    exs = [Example(rng.integers(0, 40, size=rng.integers(1, 20)), 0) for _ in range(30)]
    model = unigram_model(exs, vocab_size=40)
    assert abs(sum(model.prob(w) for w in range(40)) - 1.0) < 1e-9


def test_unigram_empty_set():
    model = unigram_model([], vocab_size=4)
    assert model.total == 0
    assert model.prob(2) == 0.0


def test_embeddings_loading(tmp_path):
    vocab = Vocabulary(["alpha", "beta", "gamma"])
    path = tmp_path / "emb.txt"
    path.write_text("alpha 1 2 3\nbeta 4 5 6\nelsewhere 7 8 9\n")
    table = load_embeddings(path, vocab)
    assert table.dim == 3
    assert table.matrix.shape == (vocab.size, 3)
    np.testing.assert_array_equal(table.rows([vocab.id_of("alpha")])[0], [1, 2, 3])
    np.testing.assert_array_equal(table.rows([vocab.id_of("gamma")])[0], [0, 0, 0])
    np.testing.assert_array_equal(table.matrix[0], [0, 0, 0])  # unk row
    assert table.found == 2


def test_embeddings_inconsistent_dim(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("a 1 2 3\nb 1 2 3 4\n")
    with pytest.raises(FormatError, match=":2"):
        load_embeddings(path, Vocabulary(["a", "b"]))


def test_embeddings_zero_dim(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("a\n")
    with pytest.raises(FormatError):
        load_embeddings(path, Vocabulary(["a"]))


def test_embeddings_duplicate_last_wins(tmp_path):
    path = tmp_path / "emb.txt"
    path.write_text("a 1 1\nb 2 2\na 9 9\n")
    table = load_embeddings(path, Vocabulary(["a", "b"]))
    np.testing.assert_array_equal(table.rows([1])[0], [9, 9])
    assert table.duplicates == 1


def test_split_loading(tmp_path):
    corpus, _ = build_corpus([["x"], ["y"], ["z"]], ["a", "b", "c"])
    path = tmp_path / "split.json"
    path.write_text(json.dumps({"train": ["a"], "val": ["b"], "test": ["c"]}))
    split = load_split(path, corpus)
    assert split.train == {0} and split.val == {1} and split.test == {2}

    path.write_text(json.dumps({"train": ["a"], "val": ["a"], "test": ["c"]}))
    with pytest.raises(FormatError, match="disjoint"):
        load_split(path, corpus)

    path.write_text(json.dumps({"train": ["a"], "val": ["b"], "test": ["nope"]}))
    with pytest.raises(FormatError, match="nope"):
        load_split(path, corpus)


def test_split_disjointness_enforced():
    with pytest.raises(ValueError):
        ClassSplit(train={0, 1}, val={1}, test={2})


def _lmi_oracle(docs):
    """Dict-based recount of LMI, independent of the numpy implementation."""
    joint = {}
    word_tot = {}
    class_tot = {}
    total = 0
    for toks, label in docs:
        for w in toks:
            joint[(w, label)] = joint.get((w, label), 0) + 1
            word_tot[w] = word_tot.get(w, 0) + 1
            class_tot[label] = class_tot.get(label, 0) + 1
            total += 1
    out = {}
    for (w, c), n in joint.items():
        pwc = n / total
        out[(w, c)] = pwc * math.log(pwc / ((word_tot[w] / total) * (class_tot[c] / total)))
    return out


def test_lmi_matches_independent_oracle():
    docs = [
        (["u", "u", "v"], "c1"),
        (["v", "w"], "c1"),
        (["w", "w", "v"], "c2"),
        (["u", "w"], "c2"),
    ]
    corpus, _ = build_corpus([d[0] for d in docs], [d[1] for d in docs])
    expected = _lmi_oracle(docs)
    got = {(w, c): v for w, c, v in lmi_table(corpus)}
    assert set(got) == set(expected)
    for key in expected:
        assert got[key] == pytest.approx(expected[key], abs=1e-12)


def test_lmi_single_class_is_zero():
    corpus, _ = build_corpus([["p", "q"], ["q", "r"]], ["only", "only"])
    for _, _, value in lmi_table(corpus):
        assert value == pytest.approx(0.0, abs=1e-15)


def test_lmi_exclusive_beats_uniform():
    # u: 4 occurrences, all in c1; v: 4 occurrences spread evenly
    docs = [
        (["u", "u", "v", "v"], "c1"),
        (["u", "u", "v", "v"], "c1"),
        (["x", "x", "v", "v"], "c2"),
        (["x", "x", "v", "v"], "c2"),
    ]
    corpus, _ = build_corpus([d[0] for d in docs], [d[1] for d in docs])
    got = {(w, c): v for w, c, v in lmi_table(corpus)}
    assert got[("u", "c1")] > got[("v", "c1")]


def test_lmi_within_class_sorted_descending():
    rng = np.random.default_rng(1)
    words = [f"w{i}" for i in range(12)]
    docs = [([words[rng.integers(0, 12)] for _ in range(6)], f"c{rng.integers(0, 3)}")
            for _ in range(40)]
    corpus, _ = build_corpus([d[0] for d in docs], [d[1] for d in docs])
    rows = lmi_table(corpus)
    by_class = {}
    for w, c, v in rows:
        by_class.setdefault(c, []).append(v)
    for values in by_class.values():
        assert values == sorted(values, reverse=True)


def test_lmi_empty_corpus_rejected():
    corpus, _ = build_corpus([["a"]], ["x"])
    empty = corpus.__class__(examples=(), label_names=(), vocab=corpus.vocab, by_class={})
    with pytest.raises(ValueError):
        lmi_table(empty)
