"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run as part of the normal suite (``pytest``) or alone with
``pytest tests/test_acceptance.py -v``. Criteria 6 and 7 meta-train three
models on the standard synthetic transfer corpus and take a few minutes;
everything else finishes in seconds. Thresholds were locked against the
first oracle run and are frozen here.
"""

import time

import pytest

from fewsig import meta, synth, verify
from fewsig.cli import main as cli_main
from fewsig.verify import CheckFailure, _broken_sigma_builder

# one line per criterion; echoed by the pytest_terminal_summary hook in conftest
REPORT_LINES = []


def _report(criterion, ok, detail):
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    REPORT_LINES.append(line)
    print(line)
    assert ok, line


def test_c1_full_pipeline_gradcheck():
    t0 = time.time()
    try:
        detail = verify.check_gradcheck_pipeline(tolerance=1e-4)
        ok = True
    except CheckFailure as e:
        detail, ok = str(e), False
    _report("C1 gradient-correctness", ok and time.time() - t0 < 10.0, detail)


def test_c2_ridge_closed_form():
    try:
        detail = verify.check_ridge_closed_form(instances=50)
        ok = True
    except CheckFailure as e:
        detail, ok = str(e), False
    _report("C2 ridge-closed-form", ok, detail)


def test_c3_substitution_invariance():
    try:
        d1 = verify.check_invariance_count(pairs=100, tolerance=1e-6)
        d2 = verify.check_invariance_embedding(pairs=20, tolerance=1e-6)
        ok = True
        detail = f"{d1}; embedding mode: {d2}"
    except CheckFailure as e:
        detail, ok = str(e), False

    # negative control: a frequency-violating constructor must be caught
    with pytest.raises(CheckFailure):
        verify.check_invariance_count(pairs=10, sigma_builder=_broken_sigma_builder)
    _report("C3 substitution-invariance", ok, detail + "; negative control detected")


def test_c4_statistic_values():
    try:
        detail = verify.check_statistic_values(supports=1000)
        ok = True
    except CheckFailure as e:
        detail, ok = str(e), False
    _report("C4 statistic-values", ok, detail)


def test_c5_episode_harness():
    try:
        detail = verify.check_episode_harness(episodes=10_000)
        ok = True
    except CheckFailure as e:
        detail, ok = str(e), False
    _report("C5 episode-harness", ok, detail)


def test_c8_baseline_oracles():
    try:
        detail = verify.check_nn_oracle(episodes=1000)
        ok = True
    except CheckFailure as e:
        detail, ok = str(e), False
    _report("C8 baseline-oracles", ok, detail)


# ---------------------------------------------------------------------------
# synthetic transfer (criteria 6 and 7): three training runs, shared fixture


TRANSFER_EPISODES = 200
TRANSFER_SEEDS = [0]


@pytest.fixture(scope="module")
def transfer_runs():
    corpus, emb, split = synth.generate(synth.SynthSpec(
        num_classes=20, docs_per_class=100, doc_length=20, keywords_per_class=5,
        keyword_rate=0.3, background_vocab_size=500, embedding_dim=32, seed=0))
    cfg = meta.TrainConfig(n_way=5, k_shot=1, l_query=5, episodes_per_epoch=100,
                           val_episodes=100, max_epochs=30, patience=5)

    def evaluate(params, spec, uniform=False):
        rep = meta.evaluate(params, spec, corpus, split, emb, "test",
                            TRANSFER_EPISODES, TRANSFER_SEEDS, config=cfg,
                            uniform_attention=uniform)
        return rep.mean_acc

    out = {}
    full_spec = meta.ModelSpec()
    t0 = time.time()
    params, log = meta.train(cfg, full_spec, corpus, split, emb, master_seed=0)
    out["train_seconds"] = time.time() - t0
    out["epochs"] = len(log)
    out["full"] = evaluate(params, full_spec)
    out["uniform"] = evaluate(params, full_spec, uniform=True)
    out["avg+nn"] = evaluate(None, meta.ModelSpec(learner="avg+nn"))

    for name, spec in (("wo_s", meta.ModelSpec(use_s=False)),
                       ("wo_t", meta.ModelSpec(use_t=False))):
        p, _ = meta.train(cfg, spec, corpus, split, emb, master_seed=0)
        out[name] = evaluate(p, spec)
    return out


def test_c6_synthetic_transfer(transfer_runs):
    r = transfer_runs
    checks = [
        (r["epochs"] <= 30, f"epochs {r['epochs']} <= 30"),
        (r["train_seconds"] < 600, f"training {r['train_seconds']:.0f}s < 600s"),
        (r["full"] >= 0.20 + 0.10, f"full {r['full']:.3f} >= chance+0.10"),
        (r["full"] >= r["avg+nn"] + 0.10,
         f"full {r['full']:.3f} >= avg+nn {r['avg+nn']:.3f} + 0.10"),
        (r["full"] >= r["uniform"] + 0.05,
         f"full {r['full']:.3f} >= uniform-attention {r['uniform']:.3f} + 0.05"),
    ]
    _report("C6 synthetic-transfer", all(ok for ok, _ in checks),
            "; ".join(d for _, d in checks))


def test_c7_ablation_ordering(transfer_runs):
    r = transfer_runs
    ok = (r["full"] >= r["wo_s"] - 0.01) and (r["full"] >= r["wo_t"] - 0.01)
    _report("C7 ablation-ordering", ok,
            f"full {r['full']:.3f} vs w/o-s {r['wo_s']:.3f}, w/o-t {r['wo_t']:.3f} "
            f"(allowance 1 point)")


def test_c9_verify_command():
    t0 = time.time()
    code = cli_main(["verify"])
    elapsed = time.time() - t0
    ok = code == 0 and elapsed < 300
    _report("C9 verify-command", ok, f"exit {code} in {elapsed:.0f}s (< 300s)")

    assert cli_main(["verify", "--inject", "bad-backward"]) == 1
    assert cli_main(["verify", "--inject", "bad-sigma"]) == 1
    _report("C9 verify-negative-controls", True,
            "both injections exit 1 with a named failing check")
