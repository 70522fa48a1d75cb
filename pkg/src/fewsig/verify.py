"""Named property suites behind the ``verify`` command.

Each check either returns a detail string or raises :class:`CheckFailure`;
``run_all`` prints one PASS/FAIL line per check and reports overall success.
The ``inject`` hooks deliberately corrupt one component (a backward rule, or
the perturbation constructor) so the negative controls can demonstrate the
suite actually detects broken builds.
"""

from __future__ import annotations

import time

import numpy as np

from . import attention, baselines, gradcore as gc, meta, ridge, rng as rng_mod, synth
from .corpus import UnigramModel
from .episodes import sample_episode
from .signatures import (
    CountConditional,
    ENTROPY_FLOOR,
    LinearConditional,
    PerturbationMap,
    apply_perturbation,
    build_perturbation,
    class_specific_importance,
    fit_support_classifier,
    general_importance,
    permute_embedding_rows,
    signature_matrix,
)

INJECTIONS = ("bad-sigma", "bad-backward")


class CheckFailure(AssertionError):
    pass


def _require(cond, message):
    if not cond:
        raise CheckFailure(message)


# ---------------------------------------------------------------------------
# building blocks


def _toy_setup(seed=0, **overrides):
    spec = dict(num_classes=12, docs_per_class=12, doc_length=10,
                keywords_per_class=3, keyword_rate=0.4, background_vocab_size=60,
                embedding_dim=8, seed=seed)
    spec.update(overrides)
    return synth.generate(synth.SynthSpec(**spec))


def check_gradcheck_ops(tolerance=1e-4, points=10):
    """Every differentiable op against central differences at random points."""
    picker = np.random.default_rng(12)
    worst = {}

    def run(name, f, make_point):
        errs = [gc.gradcheck(f, make_point(), seed=k) for k in range(points)]
        worst[name] = max(errs)
        _require(worst[name] < tolerance,
                 f"op {name}: max gradcheck error {worst[name]:.3e} >= {tolerance}")

    run("add", lambda lv: gc.sum(gc.add(lv["a"], lv["b"])),
        lambda: {"a": picker.normal(size=(3, 4)), "b": picker.normal(size=(3, 4))})
    run("add-rowvec", lambda lv: gc.sum(gc.tanh(gc.add(lv["a"], lv["b"]))),
        lambda: {"a": picker.normal(size=(3, 4)), "b": picker.normal(size=4)})
    run("add-scalar", lambda lv: gc.sum(gc.tanh(gc.add(lv["a"], lv["s"]))),
        lambda: {"a": picker.normal(size=(3, 4)), "s": picker.normal(size=())})
    run("mul", lambda lv: gc.sum(gc.mul(lv["a"], lv["b"])),
        lambda: {"a": picker.normal(size=(3, 4)), "b": picker.normal(size=(3, 4))})
    run("scale", lambda lv: gc.sum(gc.scale(lv["a"], lv["s"])),
        lambda: {"a": picker.normal(size=(3, 4)), "s": picker.normal(size=())})
    run("matmul", lambda lv: gc.sum(gc.tanh(gc.matmul(lv["a"], lv["b"]))),
        lambda: {"a": picker.normal(size=(3, 4)), "b": picker.normal(size=(4, 2))})
    run("matmul-vec", lambda lv: gc.sum(gc.matmul(lv["a"], lv["b"])),
        lambda: {"a": picker.normal(size=4), "b": picker.normal(size=(4, 3))})
    run("transpose", lambda lv: gc.sum(gc.mul(gc.transpose(lv["a"]), gc.transpose(lv["a"]))),
        lambda: {"a": picker.normal(size=(3, 4))})
    run("concat", lambda lv: gc.sum(gc.tanh(gc.concat([lv["a"], lv["b"]], axis=1))),
        lambda: {"a": picker.normal(size=(3, 2)), "b": picker.normal(size=(3, 4))})
    run("stack", lambda lv: gc.sum(gc.tanh(gc.stack([lv["a"], lv["b"]]))),
        lambda: {"a": picker.normal(size=5), "b": picker.normal(size=5)})
    run("exp", lambda lv: gc.sum(gc.exp(lv["a"])), lambda: {"a": picker.normal(size=(2, 3))})
    run("log", lambda lv: gc.sum(gc.log(lv["a"])),
        lambda: {"a": picker.uniform(0.5, 3.0, size=(2, 3))})
    run("tanh", lambda lv: gc.sum(gc.tanh(lv["a"])), lambda: {"a": picker.normal(size=(2, 3))})
    run("sigmoid", lambda lv: gc.sum(gc.sigmoid(lv["a"])),
        lambda: {"a": picker.normal(size=(2, 3))})
    run("softmax", lambda lv: gc.sum(gc.mul(gc.softmax(lv["a"]), gc.constant(np.arange(5.0)))),
        lambda: {"a": picker.normal(size=5)})
    run("mean", lambda lv: gc.mean(gc.tanh(lv["a"])), lambda: {"a": picker.normal(size=(3, 4))})

    mask = (np.random.default_rng(4).random((3, 4)) >= 0.4).astype(float)
    run("dropout", lambda lv: gc.sum(gc.dropout(lv["a"], mask, 0.4)),
        lambda: {"a": picker.normal(size=(3, 4))})

    onehot = np.eye(4)[[0, 2, 3]]
    run("cross_entropy", lambda lv: gc.cross_entropy(lv["a"], onehot),
        lambda: {"a": picker.normal(size=(3, 4))})

    def spd_point():
        m = picker.normal(size=(4, 4))
        return {"A": m @ m.T + 4.0 * np.eye(4), "B": picker.normal(size=(4, 2))}

    run("solve_spd", lambda lv: gc.sum(gc.solve_spd(lv["A"], lv["B"])), spd_point)

    def lstm_point():
        return {
            "x": picker.normal(size=(5, 2)),
            "wx": picker.normal(size=(2, 16)) * 0.5,
            "wh": picker.normal(size=(4, 16)) * 0.5,
            "b": picker.normal(size=16) * 0.1,
        }

    run("lstm_seq", lambda lv: gc.sum(gc.tanh(
        gc.lstm_seq(lv["x"], lv["wx"], lv["wh"], lv["b"]))), lstm_point)
    run("lstm_seq-reverse", lambda lv: gc.sum(gc.mul(
        gc.lstm_seq(lv["x"], lv["wx"], lv["wh"], lv["b"], reverse=True),
        gc.lstm_seq(lv["x"], lv["wx"], lv["wh"], lv["b"]))), lstm_point)

    top = max(worst.items(), key=lambda kv: kv[1])
    return f"{len(worst)} ops, worst {top[0]} = {top[1]:.2e}"


def check_gradcheck_pipeline(tolerance=1e-4, coord_budget=60):
    """Central-difference check of the full episode loss w.r.t. every leaf."""
    start = time.time()
    corpus, embeddings, split = _toy_setup(seed=1, embedding_dim=8, doc_length=4)
    spec = meta.ModelSpec(estimator="count")
    ep_rng = rng_mod.stream(11, "verify")
    episode = sample_episode(corpus, split, "train", 2, 1, 1, ep_rng)
    pool = meta.PoolStats(corpus, split, embeddings.matrix.shape[0])
    unigram = pool.unigram(episode, "train")
    sigs = meta.episode_signatures(spec, episode, embeddings, unigram)
    params = meta.init_params(spec, rng_mod.stream(11, "init"))

    def f(leaves):
        loss, _, _ = meta.episode_pipeline(leaves, spec, episode, embeddings,
                                           unigram, sigs=sigs)
        return loss

    err = gc.gradcheck(f, params, max_coords_per_leaf=coord_budget, seed=3)
    elapsed = time.time() - start
    _require(err < tolerance, f"pipeline gradcheck error {err:.3e} >= {tolerance}")
    _require(elapsed < 10.0, f"pipeline gradcheck took {elapsed:.1f}s >= 10s")
    return f"max rel error {err:.2e} in {elapsed:.1f}s"


def _ridge_loss(phi, y, lam, w):
    r = phi @ w - y
    return float((r * r).sum() + lam * (w * w).sum())


def _gd_ridge_oracle(phi, y, lam, tol=1e-12, max_iters=200_000):
    """Plain gradient descent on the regularized squared loss; no solves."""
    lip = 2.0 * (np.linalg.svd(phi, compute_uv=False)[0] ** 2 + lam)
    step = 1.0 / lip
    w = np.zeros((phi.shape[1], y.shape[1]))
    for _ in range(max_iters):
        grad = 2.0 * (phi.T @ (phi @ w - y) + lam * w)
        if np.abs(grad).max() < tol:
            break
        w -= step * grad
    return w


def check_ridge_closed_form(instances=50):
    """Closed form vs gradient-descent oracle, residual, push-through."""
    picker = np.random.default_rng(77)
    worst_gap = worst_res = worst_push = 0.0
    for _ in range(instances):
        nk = int(picker.integers(2, 26))
        e = int(picker.integers(2, 65))
        lam = float(picker.uniform(0.1, 5.0))
        phi = picker.normal(size=(nk, e))
        labels = picker.integers(0, max(2, nk // 2), size=nk)
        y = np.eye(int(labels.max()) + 1)[labels].astype(float)

        w_closed = ridge.fit(gc.constant(phi), y, lam).data
        w_oracle = _gd_ridge_oracle(phi, y, lam)
        gap = abs(_ridge_loss(phi, y, lam, w_closed) - _ridge_loss(phi, y, lam, w_oracle))
        worst_gap = max(worst_gap, gap)

        res = ridge.normal_equations_residual(phi, y, lam, w_closed)
        worst_res = max(worst_res, res)

        left = phi.T @ np.linalg.solve(phi @ phi.T + lam * np.eye(nk), np.eye(nk))
        right = np.linalg.solve(phi.T @ phi + lam * np.eye(e), phi.T)
        worst_push = max(worst_push, float(np.abs(left - right).max()))

    _require(worst_gap < 1e-6, f"loss gap to GD oracle {worst_gap:.3e} >= 1e-6")
    _require(worst_res < 1e-8, f"normal-equations residual {worst_res:.3e} >= 1e-8")
    _require(worst_push < 1e-9, f"push-through violation {worst_push:.3e} >= 1e-9")
    return (f"{instances} instances, loss gap {worst_gap:.1e}, residual "
            f"{worst_res:.1e}, push-through {worst_push:.1e}")


def _attend_all(episode, unigram, conditional, leaves, flags):
    out = []
    for ex in list(episode.support) + list(episode.query):
        sig = signature_matrix(ex.tokens, unigram, conditional)
        out.append(attention.attend(sig, leaves, flags).data)
    return out


def check_invariance_count(pairs=100, tolerance=1e-6, sigma_builder=None):
    """Attention outputs are unchanged under frequency-preserving bijections
    when the class conditional is count-based."""
    sigma_builder = sigma_builder or build_perturbation
    corpus, embeddings, split = _toy_setup(seed=2)
    spec = meta.ModelSpec(estimator="count")
    flags = spec.flags
    params = meta.init_params(spec, rng_mod.stream(21, "init"))
    pool = meta.PoolStats(corpus, split, embeddings.matrix.shape[0])
    ep_rng = rng_mod.stream(22, "verify")
    sig_rng = rng_mod.stream(23, "perturbation")
    vocab_size = embeddings.matrix.shape[0]

    worst = 0.0
    for k in range(pairs):
        phase = "train" if k % 2 == 0 else "test"
        episode = sample_episode(corpus, split, phase, 3, 2, 2, ep_rng)
        unigram = pool.unigram(episode, phase)
        pmap = sigma_builder(unigram, sig_rng)

        sigma = np.asarray(pmap.sigma)
        _require(np.sort(sigma).tolist() == list(range(sigma.size)),
                 "perturbation is not a bijection on the vocabulary")
        _require(np.array_equal(unigram.counts[sigma], unigram.counts),
                 "perturbation does not preserve source-pool frequencies")

        perturbed = apply_perturbation(episode, pmap)
        tape = gc.Tape()
        leaves = tape.mount(params)
        orig = _attend_all(episode, unigram,
                           CountConditional(episode.support, episode.label_map, vocab_size),
                           leaves, flags)
        pert = _attend_all(perturbed, unigram,
                           CountConditional(perturbed.support, perturbed.label_map, vocab_size),
                           leaves, flags)
        for a, b in zip(orig, pert):
            worst = max(worst, float(np.abs(a - b).max()))
        _require(worst < tolerance,
                 f"attention changed by {worst:.3e} under a frequency-preserving bijection")
    return f"{pairs} episode/bijection pairs, max drift {worst:.1e}"


def check_invariance_embedding(pairs=20, tolerance=1e-6, sigma_builder=None):
    """Same invariance with the linear-classifier conditional, which also
    requires co-permuting the embedding rows."""
    sigma_builder = sigma_builder or build_perturbation
    corpus, embeddings, split = _toy_setup(seed=3)
    spec = meta.ModelSpec(estimator="linear")
    flags = spec.flags
    params = meta.init_params(spec, rng_mod.stream(31, "init"))
    pool = meta.PoolStats(corpus, split, embeddings.matrix.shape[0])
    ep_rng = rng_mod.stream(32, "verify")
    sig_rng = rng_mod.stream(33, "perturbation")

    worst_t = worst_a = 0.0
    for _ in range(pairs):
        episode = sample_episode(corpus, split, "train", 3, 2, 2, ep_rng)
        unigram = pool.unigram(episode, "train")
        pmap = sigma_builder(unigram, sig_rng)
        perturbed = apply_perturbation(episode, pmap)
        co_embeddings = permute_embedding_rows(embeddings, pmap)

        cls_orig = fit_support_classifier(episode.support, episode.label_map, embeddings)
        cls_pert = fit_support_classifier(perturbed.support, perturbed.label_map,
                                          co_embeddings)
        cond_orig = LinearConditional(cls_orig, embeddings)
        cond_pert = LinearConditional(cls_pert, co_embeddings)

        examples = list(episode.support) + list(episode.query)
        pert_examples = list(perturbed.support) + list(perturbed.query)
        tape = gc.Tape()
        leaves = tape.mount(params)
        for ex, pex in zip(examples, pert_examples):
            t_orig = class_specific_importance(ex.tokens, cond_orig)
            t_pert = class_specific_importance(pex.tokens, cond_pert)
            worst_t = max(worst_t, float(np.abs(t_orig - t_pert).max()))
            a_orig = attention.attend(signature_matrix(ex.tokens, unigram, cond_orig),
                                      leaves, flags).data
            a_pert = attention.attend(signature_matrix(pex.tokens, unigram, cond_pert),
                                      leaves, flags).data
            worst_a = max(worst_a, float(np.abs(a_orig - a_pert).max()))
        _require(worst_t < tolerance, f"class importance drifted {worst_t:.3e}")
        _require(worst_a < tolerance, f"attention drifted {worst_a:.3e}")
    return f"{pairs} pairs, t drift {worst_t:.1e}, attention drift {worst_a:.1e}"


def check_statistic_values(supports=1000):
    """Closed-form statistic anchors plus the count-conditional oracle."""
    uni = UnigramModel(np.array([0.0, 1.0, 999.0]))  # P(id 1) = 1e-3 exactly
    s = general_importance(np.array([1]), uni)
    _require(s[0] == 0.5, f"s at P=1e-3 is {s[0]!r}, expected exactly 0.5")
    _require(general_importance(np.array([0]), uni)[0] == 1.0, "s at P=0 must be 1")

    class Uniform5:
        def probs_many(self, tokens):
            return np.full((len(tokens), 5), 0.2)

    t = class_specific_importance(np.array([0]), Uniform5())
    _require(abs(t[0] - 1.0 / np.log(5.0)) < 1e-12,
             f"t at the uniform 5-class conditional is {t[0]!r}")

    class Point2:
        def probs_many(self, tokens):
            return np.tile([1.0, 0.0], (len(tokens), 1))

    t = class_specific_importance(np.array([0]), Point2())
    _require(t[0] == 1.0 / ENTROPY_FLOOR, "deterministic conditional must hit the floor")

    # count conditional vs a dict-based brute-force count
    from .corpus import Example

    picker = np.random.default_rng(99)
    for trial in range(supports):
        n = int(picker.integers(2, 6))
        k = int(picker.integers(1, 6))
        vocab = int(picker.integers(4, 30))
        support = []
        label_map = {c: c for c in range(n)}
        for c in range(n):
            for _ in range(k):
                toks = picker.integers(0, vocab, size=int(picker.integers(1, 8)))
                support.append(Example(tokens=toks, label=c))
        cond = CountConditional(support, label_map, vocab)
        brute = {}
        for ex in support:
            for tok in ex.tokens:
                key = int(tok)
                brute.setdefault(key, np.zeros(n))[ex.label] += 1
        for w in range(vocab):
            expected = (brute[w] / brute[w].sum() if w in brute and brute[w].sum() > 0
                        else np.full(n, 1.0 / n))
            got = cond.probs(w)
            _require(np.array_equal(got, expected),
                     f"count conditional mismatch at trial {trial}, word {w}")
    return f"anchors exact; {supports} random supports match the counting oracle"


def check_episode_harness(episodes=10_000):
    """Episode invariants over many samples plus same-seed determinism."""
    corpus, embeddings, split = _toy_setup(seed=4, docs_per_class=15)
    n, k, l = 3, 2, 2
    train_total = sum(len(corpus.by_class[c]) for c in split.train)

    ep_rng = rng_mod.stream(41, "verify")
    for idx in range(episodes):
        phase = "train" if idx % 2 == 0 else "test"
        ep = sample_episode(corpus, split, phase, n, k, l, ep_rng)
        sup_ids = {id(ex) for ex in ep.support}
        qry_ids = {id(ex) for ex in ep.query}
        _require(not (sup_ids & qry_ids), "support and query share an example")
        for c in ep.classes:
            _require(sum(ex.label == c for ex in ep.support) == k,
                     "per-class support count violated")
            _require(sum(ex.label == c for ex in ep.query) == l,
                     "per-class query count violated")
        _require(set(ep.label_map) == set(ep.classes)
                 and sorted(ep.label_map.values()) == list(range(n)),
                 "label map does not cover the sampled classes")
        if phase == "train":
            _require(all(ex.label not in ep.label_map for ex in ep.source_pool),
                     "training source pool leaks an episode class")
        else:
            _require(len(ep.source_pool) == train_total,
                     "test source pool must hold every training example")

    def snapshot(seed):
        r = rng_mod.stream(seed, "verify")
        eps = [sample_episode(corpus, split, "train", n, k, l, r) for _ in range(20)]
        return [
            ([ex.tokens.tolist() for ex in e.support],
             [ex.tokens.tolist() for ex in e.query], e.classes)
            for e in eps
        ]

    _require(snapshot(7) == snapshot(7), "same-seed episodes differ")
    return f"{episodes} episodes, zero violations; same-seed resample identical"


def check_nn_oracle(episodes=1000):
    """1-NN against a brute-force scan; ridge argmax invariance to (a, b)."""
    picker = np.random.default_rng(55)
    for _ in range(episodes):
        m = int(picker.integers(2, 26))
        e = int(picker.integers(2, 17))
        reps = picker.normal(size=(m, e))
        labels = picker.integers(0, 5, size=m)
        query = picker.normal(size=e)
        got = baselines.nn_classify(reps, labels, query)
        best_idx, best_d = 0, np.inf
        for i in range(m):
            d = float(((reps[i] - query) ** 2).sum())
            if d < best_d - 0.0:  # strict: first index wins ties
                best_d, best_idx = d, i
        _require(got == int(labels[best_idx]), "nn_classify disagrees with brute force")

    phi_q = picker.normal(size=(10, 6))
    w = picker.normal(size=(6, 4))
    base = (phi_q @ w).argmax(axis=1)
    for _ in range(20):
        a = float(np.exp(picker.normal()))
        b = float(picker.normal() * 10)
        logits = ridge.predict(gc.constant(phi_q), gc.constant(w), a, b)
        _require(np.array_equal(logits.data.argmax(axis=1), base),
                 f"argmax changed under calibration a={a}, b={b}")
    return f"{episodes} episodes match brute force; argmax stable over 20 calibrations"


# ---------------------------------------------------------------------------
# injections (negative controls)


def _broken_sigma_builder(unigram, rng):
    """Swaps the most and least frequent words: bijective but not
    frequency-preserving (or degenerates to identity when all counts tie)."""
    sigma = np.arange(unigram.counts.size, dtype=np.int64)
    hi = int(np.argmax(unigram.counts))
    lo = int(np.argmin(unigram.counts))
    sigma[hi], sigma[lo] = sigma[lo], sigma[hi]
    return PerturbationMap(sigma)


class _BrokenTanh:
    """Drops the square in the tanh derivative."""

    def __call__(self, a):
        a = gc._astensor(a)
        y = np.tanh(a.data)
        return gc._unary(a, y, lambda g: g * (1.0 - y))


CHECKS = (
    ("gradcheck-ops", check_gradcheck_ops),
    ("gradcheck-pipeline", check_gradcheck_pipeline),
    ("ridge-closed-form", check_ridge_closed_form),
    ("invariance-count", check_invariance_count),
    ("invariance-embedding", check_invariance_embedding),
    ("statistic-values", check_statistic_values),
    ("episode-harness", check_episode_harness),
    ("nn-oracle", check_nn_oracle),
)


def run_all(inject=None, out=print):
    """Run every suite; returns True iff all pass. ``inject`` corrupts one
    component first so the corresponding check must fail."""
    if inject not in (None,) + INJECTIONS:
        raise ValueError(f"unknown injection {inject!r}")
    saved_tanh = gc.tanh
    kwargs_by_name = {}
    try:
        if inject == "bad-backward":
            gc.tanh = _BrokenTanh()
        elif inject == "bad-sigma":
            kwargs_by_name = {
                "invariance-count": {"sigma_builder": _broken_sigma_builder},
                "invariance-embedding": {"sigma_builder": _broken_sigma_builder},
            }

        all_ok = True
        t_total = time.time()
        for name, check in CHECKS:
            t0 = time.time()
            try:
                detail = check(**kwargs_by_name.get(name, {}))
                ok = True
            except CheckFailure as e:
                detail = str(e)
                ok = False
            except Exception as e:  # a crash is a failure, with the reason named
                detail = f"{type(e).__name__}: {e}"
                ok = False
            all_ok &= ok
            out(f"{'PASS' if ok else 'FAIL'}  {name:22s} {time.time() - t0:6.1f}s  {detail}")
        out(f"{'OK' if all_ok else 'FAILED'} in {time.time() - t_total:.1f}s")
        return all_ok
    finally:
        gc.tanh = saved_tanh
