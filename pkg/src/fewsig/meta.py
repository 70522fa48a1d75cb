"""Episodic meta-training and evaluation.

Each training episode runs the full differentiable pipeline (signatures ->
attention -> weighted representations -> ridge fit -> calibrated query
cross-entropy); gradients of the mean loss over ``tasks_per_step`` episodes
drive one Adam update of all meta parameters. After every epoch the model is
scored on fresh validation episodes and training stops once the best
validation loss has not improved for ``patience`` epochs; the best snapshot
is returned.

Evaluation shares one episode stream per seed across learners, so two
learners evaluated with the same seed list see byte-identical episodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attention, baselines, gradcore as gc, ridge, rng as rng_mod
from .attention import AttentionFlags
from .corpus import ClassSplit, Corpus, EmbeddingTable, UnigramModel
from .episodes import Episode, relabel, sample_episode
from .signatures import (
    CountConditional,
    LinearConditional,
    fit_support_classifier,
    signature_matrix,
)

LEARNERS = ("main", "avg+nn", "idf+nn", "avg+rr", "idf+rr")


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """What to train/evaluate: learner type, ablation flags, t estimator."""

    learner: str = "main"
    use_s: bool = True
    use_t: bool = True
    use_bilstm: bool = True
    rescale_t: bool = True
    estimator: str = "linear"  # conditional estimator for t: linear | count

    def __post_init__(self):
        if self.learner not in LEARNERS:
            raise ConfigurationError(f"unknown learner {self.learner!r}")
        if self.estimator not in ("linear", "count"):
            raise ConfigurationError(f"unknown estimator {self.estimator!r}")

    @property
    def flags(self) -> AttentionFlags:
        return AttentionFlags(use_s=self.use_s, use_t=self.use_t,
                              use_bilstm=self.use_bilstm, rescale_t=self.rescale_t)

    @property
    def rep_mode(self):
        """Baseline representation mode, or None for the main model."""
        if self.learner.startswith("avg"):
            return "avg"
        if self.learner.startswith("idf"):
            return "idf"
        return None

    def to_dict(self) -> dict:
        return {
            "learner": self.learner,
            "use_s": self.use_s,
            "use_t": self.use_t,
            "use_bilstm": self.use_bilstm,
            "rescale_t": self.rescale_t,
            "estimator": self.estimator,
        }


@dataclass(frozen=True)
class TrainConfig:
    n_way: int = 5
    k_shot: int = 1
    l_query: int = 5
    episodes_per_epoch: int = 100
    patience: int = 20
    lr: float = 0.001
    tasks_per_step: int = 1
    val_episodes: int = 100
    max_epochs: int = 30
    dropout: float = 0.1

    def __post_init__(self):
        counts = {
            "n_way": self.n_way, "k_shot": self.k_shot, "l_query": self.l_query,
            "episodes_per_epoch": self.episodes_per_epoch, "patience": self.patience,
            "tasks_per_step": self.tasks_per_step, "val_episodes": self.val_episodes,
            "max_epochs": self.max_epochs,
        }
        for name, value in counts.items():
            if value < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {value}")
        if self.lr <= 0:
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.episodes_per_epoch % self.tasks_per_step:
            raise ConfigurationError("episodes_per_epoch must be divisible by tasks_per_step")


def init_params(spec: ModelSpec, rng: np.random.Generator) -> dict:
    """Fresh meta parameters for a trainable learner."""
    params = ridge.init_meta_scalars()
    if spec.learner == "main":
        params.update(attention.init_attention_params(spec.flags, rng))
    return params


# ---------------------------------------------------------------------------
# optimizer


def init_adam_state(params: dict) -> dict:
    return {
        "t": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def adam_step(params: dict, grads: dict, state: dict, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update, in place; returns (params, state).

    Aborts with the offending parameter name if any gradient is non-finite.
    """
    for name in sorted(params):
        if not np.isfinite(grads[name]).all():
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state["t"] += 1
    t = state["t"]
    for name in sorted(params):
        g = grads[name]
        m = state["m"][name]
        v = state["v"][name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        params[name] -= lr * mhat / (np.sqrt(vhat) + eps)
    return params, state


# ---------------------------------------------------------------------------
# episode pipeline


class PoolStats:
    """Cached per-class token counts; source-pool unigrams without rescanning."""

    def __init__(self, corpus: Corpus, split: ClassSplit, vocab_size: int):
        self.vocab_size = vocab_size
        self.class_counts = {}
        for c in sorted(split.train):
            counts = np.zeros(vocab_size)
            for i in corpus.by_class.get(c, ()):
                counts += np.bincount(corpus.examples[i].tokens, minlength=vocab_size)
            self.class_counts[c] = counts
        self.train_total = np.sum(list(self.class_counts.values()), axis=0) \
            if self.class_counts else np.zeros(vocab_size)

    def unigram(self, episode: Episode, phase: str) -> UnigramModel:
        counts = self.train_total.copy()
        if phase == "train":
            for c in episode.classes:
                counts -= self.class_counts[c]
        return UnigramModel(counts)


def _conditional(spec: ModelSpec, episode: Episode, embeddings: EmbeddingTable,
                 vocab_size: int):
    if spec.estimator == "count":
        return CountConditional(episode.support, episode.label_map, vocab_size)
    classifier = fit_support_classifier(episode.support, episode.label_map, embeddings)
    return LinearConditional(classifier, embeddings)


def episode_signatures(spec: ModelSpec, episode: Episode,
                       embeddings: EmbeddingTable, unigram: UnigramModel):
    """Signature matrices for all support then query examples (data only,
    independent of the meta parameters)."""
    vocab_size = embeddings.matrix.shape[0]
    conditional = _conditional(spec, episode, embeddings, vocab_size)
    return [
        signature_matrix(ex.tokens, unigram, conditional)
        for ex in list(episode.support) + list(episode.query)
    ]


def episode_pipeline(leaves: dict, spec: ModelSpec, episode: Episode,
                     embeddings: EmbeddingTable, unigram: UnigramModel,
                     dropout: float = 0.0, drop_rng=None, idf=None,
                     uniform_attention: bool = False, sigs=None):
    """Build the differentiable episode graph on the tape owning ``leaves``.

    Returns (loss tensor, query accuracy, extras); extras holds per-example
    attention weights and the representation matrices for inspection dumps.
    """
    if spec.learner.endswith("+nn"):
        raise ValueError("nearest-neighbor learners have no differentiable pipeline")

    examples = list(episode.support) + list(episode.query)
    alphas = []
    phis = []
    if spec.rep_mode is not None:
        for ex in examples:
            alphas.append(np.full(ex.tokens.size, 1.0 / ex.tokens.size))
            phis.append(gc.constant(
                baselines.baseline_represent(ex, spec.rep_mode, embeddings, idf)))
    elif uniform_attention:
        for ex in examples:
            alpha = attention.uniform_attention(ex.tokens.size)
            alphas.append(alpha.data)
            phis.append(attention.represent(ex.tokens, alpha, embeddings))
    else:
        if sigs is None:
            sigs = episode_signatures(spec, episode, embeddings, unigram)
        for ex, sig in zip(examples, sigs):
            alpha = attention.attend(sig, leaves, spec.flags, dropout=dropout,
                                     rng=drop_rng)
            alphas.append(alpha.data)
            phis.append(attention.represent(ex.tokens, alpha, embeddings))

    n_support = len(episode.support)
    phi_s = gc.stack(phis[:n_support])
    phi_q = gc.stack(phis[n_support:])
    y_s, y_q = relabel(episode)

    lam = gc.exp(leaves["log_lambda"])
    a = gc.exp(leaves["log_a"])
    w = ridge.fit(phi_s, y_s, lam)
    logits = ridge.predict(phi_q, w, a, leaves["bias"])
    loss = ridge.episode_loss(logits, y_q)
    acc = ridge.accuracy(logits, y_q)
    extras = {"alphas": alphas, "phi_s": phi_s.data, "phi_q": phi_q.data,
              "logits": logits.data}
    return loss, acc, extras


def episode_forward(params: dict, spec: ModelSpec, episode: Episode,
                    embeddings: EmbeddingTable, unigram: UnigramModel,
                    dropout: float = 0.0, drop_rng=None, idf=None,
                    uniform_attention: bool = False):
    """Mount the parameters on a fresh tape and run the pipeline.

    Returns (tape, loss tensor, query accuracy, extras).
    """
    tape = gc.Tape()
    leaves = tape.mount(params)
    loss, acc, extras = episode_pipeline(
        leaves, spec, episode, embeddings, unigram, dropout=dropout,
        drop_rng=drop_rng, idf=idf, uniform_attention=uniform_attention)
    return tape, loss, acc, extras


def episode_gradients(params, spec, episode, embeddings, unigram,
                      dropout=0.0, drop_rng=None, idf=None):
    """Loss, accuracy and d(loss)/d(params) for one episode."""
    tape, loss, acc, _ = episode_forward(
        params, spec, episode, embeddings, unigram,
        dropout=dropout, drop_rng=drop_rng, idf=idf)
    gc.backward(tape, loss)
    grads = {
        k: (tape.leaves[k].grad if tape.leaves[k].grad is not None else np.zeros_like(v))
        for k, v in params.items()
    }
    return loss.item(), acc, grads


# ---------------------------------------------------------------------------
# training


def _validate_data(config: TrainConfig, corpus: Corpus, split: ClassSplit):
    need = config.k_shot + config.l_query
    for phase in ("train", "val"):
        classes = split.classes(phase)
        if len(classes) < config.n_way:
            raise ConfigurationError(
                f"{phase} split has {len(classes)} classes, need N={config.n_way}")
        for c in sorted(classes):
            have = len(corpus.by_class.get(c, ()))
            if have < need:
                raise ConfigurationError(
                    f"class {corpus.label_names[c]!r} has {have} examples, "
                    f"need K+L={need}")


def train(config: TrainConfig, spec: ModelSpec, corpus: Corpus, split: ClassSplit,
          embeddings: EmbeddingTable, master_seed: int = 0):
    """Meta-train a learner; returns (best params, per-epoch log entries)."""
    if spec.learner.endswith("+nn"):
        raise ConfigurationError(f"learner {spec.learner!r} has no trainable parameters")
    _validate_data(config, corpus, split)

    init_rng = rng_mod.stream(master_seed, "init")
    train_rng = rng_mod.stream(master_seed, "train_episodes")
    val_rng = rng_mod.stream(master_seed, "val_episodes")
    drop_rng = rng_mod.stream(master_seed, "dropout")

    params = init_params(spec, init_rng)
    state = init_adam_state(params)
    vocab_size = embeddings.matrix.shape[0]
    pool = PoolStats(corpus, split, vocab_size)
    idf = baselines.idf_weights(corpus, split.train) if spec.rep_mode == "idf" else None

    best_loss = np.inf
    best_params = {k: v.copy() for k, v in params.items()}
    epochs_since_best = 0
    log = []

    for epoch in range(1, config.max_epochs + 1):
        train_losses = []
        steps = config.episodes_per_epoch // config.tasks_per_step
        for _ in range(steps):
            grad_sum = {k: np.zeros_like(v) for k, v in params.items()}
            for _ in range(config.tasks_per_step):
                episode = sample_episode(corpus, split, "train", config.n_way,
                                         config.k_shot, config.l_query, train_rng)
                unigram = pool.unigram(episode, "train")
                loss, _, grads = episode_gradients(
                    params, spec, episode, embeddings, unigram,
                    dropout=config.dropout, drop_rng=drop_rng, idf=idf)
                train_losses.append(loss)
                for k in grad_sum:
                    grad_sum[k] += grads[k] / config.tasks_per_step
            adam_step(params, grad_sum, state, config.lr)
        for name in ("log_lambda", "log_a"):
            if not np.isfinite(params[name]).all():
                raise FloatingPointError(f"meta scalar {name!r} left the finite range")

        val_losses = []
        val_accs = []
        for _ in range(config.val_episodes):
            episode = sample_episode(corpus, split, "val", config.n_way,
                                     config.k_shot, config.l_query, val_rng)
            unigram = pool.unigram(episode, "val")
            _, loss_t, acc, _ = episode_forward(params, spec, episode, embeddings,
                                                unigram, idf=idf)
            val_losses.append(loss_t.item())
            val_accs.append(acc)
        val_loss = float(np.mean(val_losses))

        improved = val_loss < best_loss
        if improved:
            best_loss = val_loss
            best_params = {k: v.copy() for k, v in params.items()}
            epochs_since_best = 0
        else:
            epochs_since_best += 1
        log.append({
            "epoch": epoch,
            "train_loss": float(np.mean(train_losses)),
            "val_loss": val_loss,
            "val_acc": float(np.mean(val_accs)),
            "best": improved,
        })
        if epochs_since_best >= config.patience:
            break
    return best_params, log


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class EvalReport:
    mean_acc: float
    std: float  # across seed means
    ci95: float  # half-width, normal approximation over episodes
    per_episode: tuple
    episodes: int
    seeds: tuple
    learner: str
    episode_ids: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {
            "mean_acc": self.mean_acc,
            "std": self.std,
            "ci95": self.ci95,
            "episodes": self.episodes,
            "seeds": list(self.seeds),
            "learner": self.learner,
        }


def evaluate(params, spec: ModelSpec, corpus: Corpus, split: ClassSplit,
             embeddings: EmbeddingTable, phase: str, episodes: int, seeds,
             config: TrainConfig | None = None,
             uniform_attention: bool = False) -> EvalReport:
    """Score a learner over fresh episodes; dropout is disabled.

    Episode sampling depends only on (seed, phase, corpus, split, episode
    shape), never on the learner, so runs with a shared seed list are paired.
    """
    if phase not in ("val", "test"):
        raise ValueError(f"evaluation phase must be val or test, got {phase!r}")
    config = config or TrainConfig()
    vocab_size = embeddings.matrix.shape[0]
    pool = PoolStats(corpus, split, vocab_size)
    idf = baselines.idf_weights(corpus, split.train) if spec.rep_mode == "idf" else None

    accs = []
    ids = []
    seed_means = []
    for seed in seeds:
        ep_rng = rng_mod.stream(seed, f"{phase}_episodes")
        seed_accs = []
        for i in range(episodes):
            episode = sample_episode(corpus, split, phase, config.n_way,
                                     config.k_shot, config.l_query, ep_rng)
            if spec.learner.endswith("+nn"):
                acc = baselines.nn_episode_accuracy(episode, spec.rep_mode,
                                                    embeddings, idf)
            else:
                unigram = pool.unigram(episode, phase)
                _, _, acc, _ = episode_forward(params, spec, episode, embeddings,
                                               unigram, idf=idf,
                                               uniform_attention=uniform_attention)
            seed_accs.append(acc)
            ids.append(f"{seed}-{i:05d}")
        accs.extend(seed_accs)
        seed_means.append(float(np.mean(seed_accs)))

    accs = np.array(accs)
    std = float(np.std(seed_means)) if len(seed_means) > 1 else 0.0
    ci95 = float(1.96 * accs.std() / np.sqrt(len(accs)))
    return EvalReport(
        mean_acc=float(accs.mean()), std=std, ci95=ci95,
        per_episode=tuple(float(a) for a in accs), episodes=episodes,
        seeds=tuple(seeds), learner=spec.learner, episode_ids=tuple(ids),
    )
