import numpy as np
import pytest

from fewsig import rng as rng_mod
from fewsig.corpus import build_corpus
from fewsig.episodes import SamplingError, dump_episode, relabel, sample_episode


def test_episode_shape(small_setup):
    corpus, _, split = small_setup
    ep = sample_episode(corpus, split, "train", 3, 1, 2, rng_mod.stream(0, "verify"))
    assert len(ep.support) == 3
    assert len(ep.query) == 6
    assert ep.n_way == 3


def test_test_phase_pool_is_all_training_examples(small_setup):
    corpus, _, split = small_setup
    total = sum(len(corpus.by_class[c]) for c in split.train)
    ep = sample_episode(corpus, split, "test", 3, 1, 2, rng_mod.stream(1, "verify"))
    assert len(ep.source_pool) == total
    labels = {ex.label for ex in ep.source_pool}
    assert labels == set(split.train)


def test_train_phase_pool_excludes_sampled_classes(small_setup):
    corpus, _, split = small_setup
    ep = sample_episode(corpus, split, "train", 3, 1, 2, rng_mod.stream(2, "verify"))
    pool_labels = {ex.label for ex in ep.source_pool}
    assert pool_labels == set(split.train) - set(ep.classes)


def test_same_seed_gives_identical_episodes(small_setup):
    corpus, _, split = small_setup

    def grab(seed):
        r = rng_mod.stream(seed, "verify")
        eps = [sample_episode(corpus, split, "train", 3, 2, 2, r) for _ in range(10)]
        return [
            ([ex.tokens.tolist() for ex in e.support],
             [ex.tokens.tolist() for ex in e.query],
             e.classes, sorted(e.label_map.items()))
            for e in eps
        ]

    assert grab(42) == grab(42)
    assert grab(42) != grab(43)


def test_relabel_one_hot():
    corpus, _ = build_corpus(
        [["a"], ["b"], ["c"], ["d"]], ["c7", "c9", "c7", "c9"])
    from fewsig.corpus import ClassSplit

    split = ClassSplit(train={0, 1}, val=set(), test=set())
    ep = sample_episode(corpus, split, "train", 2, 1, 1, rng_mod.stream(3, "verify"))
    y_s, y_q = relabel(ep)
    assert y_s.shape == (2, 2) and y_q.shape == (2, 2)
    # each support row is one-hot at the class's local id, in support order
    for r, ex in enumerate(ep.support):
        assert y_s[r].sum() == 1.0
        assert y_s[r, ep.label_map[ex.label]] == 1.0


def test_relabel_column_sums_equal_k(small_setup):
    corpus, _, split = small_setup
    ep = sample_episode(corpus, split, "train", 3, 4, 2, rng_mod.stream(4, "verify"))
    y_s, y_q = relabel(ep)
    np.testing.assert_array_equal(y_s.sum(axis=0), np.full(3, 4.0))
    np.testing.assert_array_equal(y_q.sum(axis=0), np.full(3, 2.0))
    np.testing.assert_array_equal(y_s.sum(axis=1), np.ones(12))


def test_invariants_over_many_episodes(small_setup):
    corpus, _, split = small_setup
    r = rng_mod.stream(5, "verify")
    for i in range(1000):
        phase = "train" if i % 2 else "val"
        ep = sample_episode(corpus, split, phase, 3, 2, 2, r)
        assert not ({id(e) for e in ep.support} & {id(e) for e in ep.query})
        for c in ep.classes:
            assert sum(e.label == c for e in ep.support) == 2
            assert sum(e.label == c for e in ep.query) == 2
        if phase == "train":
            assert all(e.label not in ep.label_map for e in ep.source_pool)


def test_class_sampling_uniformity(small_setup):
    corpus, _, split = small_setup
    n, trials = 3, 3000
    classes = sorted(split.train)
    counts = {c: 0 for c in classes}
    r = rng_mod.stream(6, "verify")
    for _ in range(trials):
        ep = sample_episode(corpus, split, "train", n, 1, 1, r)
        for c in ep.classes:
            counts[c] += 1
    p = n / len(classes)
    se = np.sqrt(p * (1 - p) / trials)
    for c in classes:
        assert abs(counts[c] / trials - p) <= 3 * se


def test_sampling_errors_name_the_problem():
    corpus, _ = build_corpus([["a"], ["b"], ["c"]], ["x", "x", "y"])
    from fewsig.corpus import ClassSplit

    split = ClassSplit(train={0, 1}, val=set(), test=set())
    with pytest.raises(SamplingError, match="need N=3"):
        sample_episode(corpus, split, "train", 3, 1, 1, rng_mod.stream(7, "verify"))
    with pytest.raises(SamplingError, match="'y'"):
        sample_episode(corpus, split, "train", 2, 1, 1, rng_mod.stream(8, "verify"))


def test_dump_episode_roles(tmp_path, small_setup):
    import json

    corpus, _, split = small_setup
    ep = sample_episode(corpus, split, "train", 3, 1, 2, rng_mod.stream(9, "verify"))
    path = tmp_path / "episode.jsonl"
    dump_episode(ep, corpus, path)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["role"] for r in rows] == ["support"] * 3 + ["query"] * 6
    assert all(isinstance(r["text"], list) and r["label"] for r in rows)
