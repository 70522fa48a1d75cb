import numpy as np
import pytest

import fewsig.gradcore as gc
from fewsig import rng as rng_mod
from fewsig.attention import (
    AttentionFlags,
    attend,
    init_attention_params,
    represent,
    signature_input,
    uniform_attention,
)
from fewsig.corpus import EmbeddingTable
from fewsig.signatures import SignatureMatrix


def _sig(T, rng):
    return SignatureMatrix(s=rng.uniform(0.1, 1.0, size=T),
                           t=rng.uniform(0.0, 3.0, size=T))


def _mounted(flags, seed=0):
    params = init_attention_params(flags, rng_mod.stream(seed, "init"))
    tape = gc.Tape()
    return tape, tape.mount(params)


def test_singleton_sequence_gets_full_weight():
    flags = AttentionFlags()
    tape, leaves = _mounted(flags)
    alpha = attend(_sig(1, np.random.default_rng(0)), leaves, flags)
    np.testing.assert_allclose(alpha.data, [1.0])


def test_zero_scoring_vector_gives_uniform_attention():
    flags = AttentionFlags()
    params = init_attention_params(flags, rng_mod.stream(1, "init"))
    params["attn.v"] = np.zeros_like(params["attn.v"])
    tape = gc.Tape()
    leaves = tape.mount(params)
    alpha = attend(_sig(6, np.random.default_rng(1)), leaves, flags)
    np.testing.assert_allclose(alpha.data, np.full(6, 1 / 6), atol=1e-12)


def test_identical_rows_uniform_without_recurrence():
    flags = AttentionFlags(use_bilstm=False)
    tape, leaves = _mounted(flags, seed=2)
    sig = SignatureMatrix(s=np.full(5, 0.4), t=np.full(5, 1.2))
    alpha = attend(sig, leaves, flags)
    np.testing.assert_allclose(alpha.data, np.full(5, 0.2), atol=1e-12)


def test_permutation_equivariance_without_recurrence():
    flags = AttentionFlags(use_bilstm=False)
    tape, leaves = _mounted(flags, seed=3)
    rng = np.random.default_rng(2)
    sig = _sig(7, rng)
    alpha = attend(sig, leaves, flags).data
    perm = rng.permutation(7)
    sig_p = SignatureMatrix(s=sig.s[perm], t=sig.t[perm])
    alpha_p = attend(sig_p, leaves, flags).data
    np.testing.assert_allclose(alpha_p, alpha[perm], atol=1e-12)


def test_attention_is_a_distribution():
    rng = np.random.default_rng(3)
    for flags in (AttentionFlags(), AttentionFlags(use_bilstm=False),
                  AttentionFlags(use_t=False), AttentionFlags(use_s=False)):
        tape, leaves = _mounted(flags, seed=4)
        alpha = attend(_sig(9, rng), leaves, flags)
        assert (alpha.data >= 0).all()
        assert alpha.data.sum() == pytest.approx(1.0, abs=1e-9)


def test_represent_selection_and_mean():
    emb = EmbeddingTable(matrix=np.arange(12.0).reshape(4, 3), dim=3)
    tokens = np.array([1, 3, 2])
    one_hot = gc.constant(np.array([0.0, 1.0, 0.0]))
    np.testing.assert_array_equal(represent(tokens, one_hot, emb).data, emb.matrix[3])

    uniform = uniform_attention(3)
    np.testing.assert_allclose(represent(tokens, uniform, emb).data,
                               emb.matrix[tokens].mean(axis=0))

    zero_emb = EmbeddingTable(matrix=np.zeros((4, 3)), dim=3)
    np.testing.assert_array_equal(represent(tokens, uniform, zero_emb).data, np.zeros(3))


def test_represent_length_mismatch():
    emb = EmbeddingTable(matrix=np.zeros((4, 3)), dim=3)
    with pytest.raises(gc.ShapeError):
        represent(np.array([1, 2]), uniform_attention(3), emb)


def test_convex_combination_bound():
    rng = np.random.default_rng(4)
    emb = EmbeddingTable(matrix=rng.normal(size=(30, 8)), dim=8)
    flags = AttentionFlags()
    tape, leaves = _mounted(flags, seed=5)
    for _ in range(20):
        tokens = rng.integers(0, 30, size=rng.integers(1, 12))
        alpha = attend(_sig(tokens.size, rng), leaves, flags)
        phi = represent(tokens, alpha, emb)
        norms = np.linalg.norm(emb.matrix[tokens], axis=1)
        assert np.linalg.norm(phi.data) <= norms.max() + 1e-12


def test_signature_input_ablations():
    sig = SignatureMatrix(s=np.array([0.5, 1.0]), t=np.array([3.0, 0.0]))
    both = signature_input(sig, AttentionFlags())
    assert both.shape == (2, 2)
    np.testing.assert_allclose(both[:, 1], sig.t / (1 + sig.t))
    raw = signature_input(sig, AttentionFlags(rescale_t=False))
    np.testing.assert_allclose(raw[:, 1], sig.t)
    only_s = signature_input(sig, AttentionFlags(use_t=False))
    assert only_s.shape == (2, 1)
    with pytest.raises(ValueError):
        AttentionFlags(use_s=False, use_t=False)


def test_rescale_preserves_order():
    t = np.array([0.0, 0.3, 5.0, 1000.0])
    sq = t / (1 + t)
    assert (np.diff(sq) > 0).all()
    assert sq.max() < 1.0


def test_dropout_needs_rng():
    flags = AttentionFlags()
    tape, leaves = _mounted(flags, seed=6)
    with pytest.raises(ValueError):
        attend(_sig(4, np.random.default_rng(5)), leaves, flags, dropout=0.1)


def test_gradcheck_attention_leaves():
    # meta-style loss through attention only, dropout disabled
    rng = np.random.default_rng(6)
    emb = EmbeddingTable(matrix=rng.normal(size=(20, 4)), dim=4)
    tokens = rng.integers(0, 20, size=5)
    sig = _sig(5, rng)
    for flags, seed in ((AttentionFlags(), 7), (AttentionFlags(use_bilstm=False), 8)):
        params = init_attention_params(flags, rng_mod.stream(seed, "init"))

        def f(leaves):
            alpha = attend(sig, leaves, flags)
            phi = represent(tokens, alpha, emb)
            return gc.sum(gc.mul(phi, phi))

        err = gc.gradcheck(f, params, max_coords_per_leaf=30, seed=9)
        assert err < 1e-4
