"""Command-line entry point.

Subcommands: ``synth`` (emit a synthetic dataset), ``train``, ``eval``,
``stats`` (corpus statistics and signature dumps), ``verify`` (property
suites) and ``dump-repr`` (query representations of one episode).

All commands are driven by a JSON config file (unknown keys rejected, paths
checked up front) and are deterministic under a fixed master seed: rerunning
a command writes byte-identical outputs.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 model/architecture mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

from . import meta, model_io, rng as rng_mod, synth, verify as verify_mod
from .corpus import FormatError, lmi_table, load_corpus, load_embeddings, load_split
from .episodes import sample_episode
from .meta import ConfigurationError, ModelSpec, TrainConfig


class ConfigError(ValueError):
    pass


_CONFIG_DEFAULTS = {
    # data paths
    "corpus": None,
    "embeddings": None,
    "split": None,
    "output_dir": None,
    # episode shape
    "n_way": 5,
    "k_shot": 1,
    "l_query": 5,
    # training
    "episodes_per_epoch": 100,
    "patience": 20,
    "lr": 0.001,
    "tasks_per_step": 1,
    "val_episodes": 100,
    "max_epochs": 30,
    "dropout": 0.1,
    # evaluation
    "eval_episodes": 1000,
    "seeds": [0, 1, 2, 3, 4],
    # learner and ablations
    "learner": "main",
    "use_s": True,
    "use_t": True,
    "use_bilstm": True,
    "rescale_t": True,
    "estimator": "linear",
    "uniform_attention": False,
    # reproducibility
    "master_seed": 0,
    # stats command: sample one episode with this seed and dump signatures
    "stats_episode_seed": None,
}
_REQUIRED_PATHS = ("corpus", "embeddings", "split", "output_dir")


@dataclass
class RunConfig:
    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name)

    @property
    def train_config(self) -> TrainConfig:
        v = self.values
        return TrainConfig(
            n_way=v["n_way"], k_shot=v["k_shot"], l_query=v["l_query"],
            episodes_per_epoch=v["episodes_per_epoch"], patience=v["patience"],
            lr=v["lr"], tasks_per_step=v["tasks_per_step"],
            val_episodes=v["val_episodes"], max_epochs=v["max_epochs"],
            dropout=v["dropout"],
        )

    @property
    def model_spec(self) -> ModelSpec:
        v = self.values
        return ModelSpec(
            learner=v["learner"], use_s=v["use_s"], use_t=v["use_t"],
            use_bilstm=v["use_bilstm"], rescale_t=v["rescale_t"],
            estimator=v["estimator"],
        )


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - set(_CONFIG_DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values = dict(_CONFIG_DEFAULTS)
    values.update(raw)
    for key in _REQUIRED_PATHS:
        if values[key] is None:
            raise ConfigError(f"config field {key!r} is required")
    for key in ("corpus", "embeddings", "split"):
        if not os.path.isfile(values[key]):
            raise ConfigError(f"config field {key!r}: no such file {values[key]!r}")
    try:
        cfg = RunConfig(values)
        cfg.train_config  # validate counts eagerly
        cfg.model_spec
    except (ConfigurationError, ValueError) as e:
        raise ConfigError(str(e))
    return cfg


def _load_data(cfg: RunConfig):
    corpus, vocab = load_corpus(cfg.corpus)
    embeddings = load_embeddings(cfg.embeddings, vocab)
    split = load_split(cfg.split, corpus)
    return corpus, embeddings, split


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def _echo_config(cfg: RunConfig):
    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_json(os.path.join(cfg.output_dir, "effective_config.json"), cfg.values)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        raw = json.load(fh)
    spec = synth.SynthSpec(**raw)
    corpus, embeddings, split = synth.generate(spec)
    paths = synth.write_files(spec, corpus, embeddings, split, args.out)
    print("\n".join(paths))
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    corpus, embeddings, split = _load_data(cfg)
    params, log = meta.train(cfg.train_config, cfg.model_spec, corpus, split,
                             embeddings, master_seed=cfg.master_seed)
    _echo_config(cfg)
    model_path = os.path.join(cfg.output_dir, "model.json")
    model_io.save_model(model_path, params, cfg.model_spec)
    with open(os.path.join(cfg.output_dir, "log.jsonl"), "w", encoding="utf-8") as fh:
        for entry in log:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
    best = min(log, key=lambda e: e["val_loss"])
    print(f"trained {len(log)} epochs; best val_loss {best['val_loss']:.4f} "
          f"(epoch {best['epoch']}); model -> {model_path}")
    return 0


def _params_for_eval(cfg: RunConfig, model_path):
    spec = cfg.model_spec
    if spec.learner.endswith("+nn"):
        return None
    if model_path is None:
        return meta.init_params(spec, rng_mod.stream(cfg.master_seed, "init"))
    params, stored_spec = model_io.load_model(model_path)
    model_io.check_architecture(stored_spec, spec)
    return params


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    corpus, embeddings, split = _load_data(cfg)
    params = _params_for_eval(cfg, args.model)
    report = meta.evaluate(
        params, cfg.model_spec, corpus, split, embeddings, phase=args.phase,
        episodes=cfg.eval_episodes, seeds=cfg.seeds, config=cfg.train_config,
        uniform_attention=cfg.uniform_attention,
    )
    _echo_config(cfg)
    _write_json(os.path.join(cfg.output_dir, "report.json"), report.to_dict())
    csv_path = os.path.join(cfg.output_dir, "episodes.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("episode_id,accuracy\n")
        for eid, acc in zip(report.episode_ids, report.per_episode):
            fh.write(f"{eid},{acc!r}\n")
    print(f"{report.learner}: mean_acc {report.mean_acc:.4f} "
          f"+- {report.ci95:.4f} over {len(report.per_episode)} episodes")
    return 0


def cmd_stats(args) -> int:
    cfg = load_config(args.config)
    corpus, embeddings, split = _load_data(cfg)
    _echo_config(cfg)
    lmi_path = os.path.join(cfg.output_dir, "lmi.csv")
    with open(lmi_path, "w", encoding="utf-8") as fh:
        fh.write("class,word,lmi\n")
        for word, cls, value in lmi_table(corpus):
            fh.write(f"{cls},{word},{float(value)!r}\n")
    written = [lmi_path]

    if cfg.stats_episode_seed is not None:
        ep_rng = rng_mod.stream(cfg.stats_episode_seed, "train_episodes")
        episode = sample_episode(corpus, split, "train", cfg.n_way, cfg.k_shot,
                                 cfg.l_query, ep_rng)
        pool = meta.PoolStats(corpus, split, embeddings.matrix.shape[0])
        unigram = pool.unigram(episode, "train")
        sigs = meta.episode_signatures(cfg.model_spec, episode, embeddings, unigram)
        sig_path = os.path.join(cfg.output_dir, "signatures.csv")
        with open(sig_path, "w", encoding="utf-8") as fh:
            fh.write("episode_id,example_id,position,word,s,t\n")
            eid = f"ep{cfg.stats_episode_seed}"
            examples = list(episode.support) + list(episode.query)
            n_support = len(episode.support)
            for i, (ex, sig) in enumerate(zip(examples, sigs)):
                exid = f"s{i}" if i < n_support else f"q{i - n_support}"
                for pos, tok in enumerate(ex.tokens):
                    word = corpus.vocab.word_of(int(tok))
                    fh.write(f"{eid},{exid},{pos},{word},{float(sig.s[pos])!r},{float(sig.t[pos])!r}\n")
        written.append(sig_path)
    print("\n".join(written))
    return 0


def cmd_verify(args) -> int:
    ok = verify_mod.run_all(inject=args.inject)
    return 0 if ok else 1


def cmd_dump_repr(args) -> int:
    cfg = load_config(args.config)
    corpus, embeddings, split = _load_data(cfg)
    params = _params_for_eval(cfg, args.model)
    spec = cfg.model_spec
    if spec.learner.endswith("+nn"):
        raise ConfigError("dump-repr needs a learner with representations "
                          "(main or a ridge baseline)")
    ep_rng = rng_mod.stream(cfg.master_seed, "test_episodes")
    episode = sample_episode(corpus, split, "test", cfg.n_way, cfg.k_shot,
                             cfg.l_query, ep_rng)
    pool = meta.PoolStats(corpus, split, embeddings.matrix.shape[0])
    unigram = pool.unigram(episode, "test")
    idf = None
    if spec.rep_mode == "idf":
        from .baselines import idf_weights

        idf = idf_weights(corpus, split.train)
    _, _, _, extras = meta.episode_forward(
        params, spec, episode, embeddings, unigram, idf=idf,
        uniform_attention=cfg.uniform_attention)

    _echo_config(cfg)
    repr_path = os.path.join(cfg.output_dir, "repr.csv")
    dim = embeddings.dim
    with open(repr_path, "w", encoding="utf-8") as fh:
        cols = ",".join(f"v_{j + 1}" for j in range(dim))
        fh.write(f"example_id,class,{cols}\n")
        for i, ex in enumerate(episode.query):
            vec = extras["phi_q"][i]
            vals = ",".join(repr(float(v)) for v in vec)
            fh.write(f"q{i},{corpus.label_names[ex.label]},{vals}\n")

    attn_path = os.path.join(cfg.output_dir, "attention.csv")
    examples = list(episode.support) + list(episode.query)
    n_support = len(episode.support)
    with open(attn_path, "w", encoding="utf-8") as fh:
        fh.write("episode_id,example_id,position,word,alpha\n")
        eid = f"ep{cfg.master_seed}"
        for i, (ex, alpha) in enumerate(zip(examples, extras["alphas"])):
            exid = f"s{i}" if i < n_support else f"q{i - n_support}"
            for pos, tok in enumerate(ex.tokens):
                word = corpus.vocab.word_of(int(tok))
                fh.write(f"{eid},{exid},{pos},{word},{float(alpha[pos])!r}\n")
    print(repr_path)
    print(attn_path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fewsig",
        description="Few-shot text classification from distributional word signatures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True, help="JSON file of generator settings")
    p.add_argument("--out", required=True, help="directory for corpus/embeddings/split")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="meta-train a learner")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate over fresh episodes")
    p.add_argument("--config", required=True)
    p.add_argument("--model", default=None, help="model file (omit for fresh init)")
    p.add_argument("--phase", default="test", choices=("val", "test"))
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("stats", help="corpus statistics (and signature dumps)")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("verify", help="run the property suites")
    p.add_argument("--inject", default=None, choices=verify_mod.INJECTIONS,
                   help="deliberately break one component (negative control)")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("dump-repr", help="representations of one test episode")
    p.add_argument("--config", required=True)
    p.add_argument("--model", default=None)
    p.set_defaults(fn=cmd_dump_repr)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ConfigurationError, FormatError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except model_io.ModelMismatchError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
