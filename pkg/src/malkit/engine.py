"""Training loops, the Adam optimizer, and the active-learning harness.

One experiment is a set of independent per-seed trajectories.  A trajectory
starts from a small labeled pool, trains, then repeats {score, select,
annotate, retrain} for a fixed number of splits, recording held-out accuracy
after every split.  Everything is deterministic in (config, seeds, dataset).
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tensorcore as tc
from .acquisition import (score_unlabeled, select_by_dprob, select_by_entropy,
                          select_kcenter, select_mal, select_mal_two_stage,
                          select_max_entropy, select_random)
from .config import TrainConfig, config_snapshot
from .datagen import Dataset, apply_imbalance, generate_blobs, load_csv, load_idx, split_train_test
from .errors import ConfigError, ContractError, SelectionError, ShapeError
from .networks import (DiscriminatorParams, EncoderParams, ModelBundle,
                       PrototypeClassifier, TaskModelParams, classify,
                       copy_backbone, encode, init_classifier,
                       init_discriminator, init_encoder, init_task_model,
                       save_bundle, task_forward)
from .objectives import cross_entropy, discriminator_bce, minimax_entropy_term
from .pools import (IdealOracle, PoolState, annotate, init_pools,
                    labeled_batch, unlabeled_batch)
from .seeding import seed_for

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def _subseed(base: int, *key) -> int:
    return int(seed_for(base, *key).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Optimizer


def adam_step(value, grad, m, v, t: int, lr: float,
              beta1: float = ADAM_BETA1, beta2: float = ADAM_BETA2,
              eps: float = ADAM_EPS):
    """One Adam update as a pure array function.

    t is the 1-based count of updates including this one.  Returns the new
    (value, m, v) triple without touching the inputs.
    """
    value = np.asarray(value, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != value.shape or m.shape != value.shape or v.shape != value.shape:
        raise ShapeError(f"adam_step: value {value.shape}, grad {grad.shape}, "
                         f"m {m.shape}, v {v.shape} must all match")
    if t < 1:
        raise ContractError("adam_step: t counts from 1")
    m_next = beta1 * m + (1.0 - beta1) * grad
    v_next = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m_next / (1.0 - beta1 ** t)
    v_hat = v_next / (1.0 - beta2 ** t)
    return value - lr * m_hat / (np.sqrt(v_hat) + eps), m_next, v_next


class Adam:
    """Adam over a fixed list of parameter nodes, updated in place."""

    def __init__(self, params, lr: float, beta1: float = ADAM_BETA1,
                 beta2: float = ADAM_BETA2, eps: float = ADAM_EPS):
        if lr < 0:
            raise ConfigError("Adam: lr must be >= 0")
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            new_value, self.m[i], self.v[i] = adam_step(
                p.value, p.grad, self.m[i], self.v[i], self.t,
                self.lr, self.beta1, self.beta2, self.eps)
            p.value[...] = new_value


# ---------------------------------------------------------------------------
# Adversarial semi-supervised training


@dataclass
class OptimizerSet:
    """Optimizer state for one session, carried across splits on warm start."""

    opt_f: Adam
    opt_c: Adam
    opt_d: Adam
    steps_done: int = 0


@dataclass
class TrainReport:
    """Per-epoch monitoring values plus the optimizer state for continuation."""

    opts: OptimizerSet
    ce_per_epoch: list[float] = field(default_factory=list)
    entropy_per_epoch: list[float] = field(default_factory=list)
    bce_per_epoch: list[float] = field(default_factory=list)


def init_models(cfg: TrainConfig, input_dim: int, n_classes: int, seed: int):
    """Fresh encoder, prototype classifier, and labeledness discriminator."""
    enc = init_encoder(_subseed(seed, "encoder"), input_dim,
                       cfg.encoder_hidden, cfg.latent_dim)
    clf = init_classifier(_subseed(seed, "classifier"), cfg.latent_dim,
                          n_classes, cfg.temperature, cfg.normalize_prototypes)
    disc = init_discriminator(_subseed(seed, "discriminator"), cfg.latent_dim,
                              cfg.disc_hidden)
    return enc, clf, disc


def _steps_per_epoch(cfg: TrainConfig, n_labeled: int) -> int:
    if cfg.steps_per_epoch > 0:
        return cfg.steps_per_epoch
    return max(1, math.ceil(n_labeled / cfg.batch_size))


def _zero_grads(*param_owners) -> None:
    for owner in param_owners:
        for p in owner.parameters():
            p.zero_grad()


def train_mal(enc: EncoderParams, clf: PrototypeClassifier,
              disc: DiscriminatorParams, pool: PoolState, cfg: TrainConfig,
              *, seed: int, opts: OptimizerSet | None = None) -> TrainReport:
    """Interleaved three-phase training on the current pool.

    Per step: (1) supervised cosine cross-entropy on a labeled batch updates
    encoder and classifier; (2) the adversarial entropy scalar on an unlabeled
    batch updates both again, the classifier ascending and the encoder
    descending through the reversal layer; (3) labeledness BCE on detached
    features updates the discriminator only.  Ablation flags skip (2) and/or
    (3).  Models are updated in place; the returned report carries optimizer
    state so a later call can continue where this one stopped.
    """
    if pool.n_labeled == 0:
        raise ContractError("train_mal: the labeled pool is empty")
    needs_unlabeled = not (cfg.no_minimax and cfg.no_discriminator)
    if needs_unlabeled and pool.n_unlabeled == 0:
        raise ContractError("train_mal: the unlabeled pool is empty")
    if opts is None:
        opts = OptimizerSet(opt_f=Adam(enc.parameters(), cfg.lr_f),
                            opt_c=Adam(clf.parameters(), cfg.lr_c),
                            opt_d=Adam(disc.parameters(), cfg.lr_d))
    report = TrainReport(opts=opts)
    steps = _steps_per_epoch(cfg, pool.n_labeled)
    for _ in range(cfg.epochs):
        ce_sum = ent_sum = bce_sum = 0.0
        for _ in range(steps):
            k = opts.steps_done
            x_l, y_l = labeled_batch(pool, cfg.batch_size,
                                     _subseed(seed, "mal", "labeled", k))
            if needs_unlabeled:
                x_u = unlabeled_batch(pool, cfg.batch_size,
                                      _subseed(seed, "mal", "unlabeled", k))

            # (1) supervised: encoder and classifier descend the cosine CE
            _zero_grads(enc, clf)
            probs = tc.softmax_rows(classify(clf, encode(enc, x_l)))
            ce = cross_entropy(probs, y_l)
            tc.backward(ce.node)
            opts.opt_f.step()
            opts.opt_c.step()
            clf.renormalize()
            ce_sum += ce.item()

            # (2) adversarial: one scalar, classifier ascends unlabeled
            # entropy while the reversal layer makes the encoder descend it
            if not cfg.no_minimax:
                _zero_grads(enc, clf)
                ent = minimax_entropy_term(enc, clf, x_u, lam=cfg.lam,
                                           weight=cfg.entropy_weight,
                                           sign=cfg.entropy_sign)
                tc.backward(ent.objective)
                opts.opt_f.step()
                opts.opt_c.step()
                clf.renormalize()
                ent_sum += ent.entropy

            # (3) labeledness: discriminator alone learns L-vs-U on
            # detached features
            if not cfg.no_discriminator:
                _zero_grads(disc)
                z_l = tc.l2_normalize_rows(encode(enc, x_l))
                z_u = tc.l2_normalize_rows(encode(enc, x_u))
                bce = discriminator_bce(disc, z_l, z_u)
                tc.backward(bce.node)
                opts.opt_d.step()
                bce_sum += bce.item()

            opts.steps_done += 1
        report.ce_per_epoch.append(ce_sum / steps)
        report.entropy_per_epoch.append(ent_sum / steps)
        report.bce_per_epoch.append(bce_sum / steps)
    return report


def train_task(pool: PoolState, cfg: TrainConfig, dataset: Dataset, *,
               seed: int, backbone: EncoderParams | None = None):
    """Train the task model on the labeled pool; returns (model, accuracy).

    With a backbone the model starts from the trained encoder weights and a
    fresh linear head; without one every layer starts fresh.
    """
    if pool.n_labeled == 0:
        raise ContractError("train_task: the labeled pool is empty")
    task = init_task_model(_subseed(seed, "task"), pool.features.shape[1],
                           dataset.n_classes, cfg.encoder_hidden, cfg.latent_dim)
    if backbone is not None:
        copy_backbone(task, backbone)
    opt = Adam(task.parameters(), cfg.lr_m)
    steps = _steps_per_epoch(cfg, pool.n_labeled)
    count = 0
    for _ in range(cfg.task_epochs):
        for _ in range(steps):
            x_b, y_b = labeled_batch(pool, cfg.batch_size,
                                     _subseed(seed, "task", "labeled", count))
            _zero_grads(task)
            probs = task_forward(task, x_b)
            loss = cross_entropy(probs, y_b)
            tc.backward(loss.node)
            opt.step()
            count += 1
    x_test, y_test = dataset.test_arrays()
    return task, evaluate(task, x_test, y_test)


def evaluate(task: TaskModelParams, x_test, y_test) -> float:
    """Accuracy of argmax predictions; argmax ties go to the lower class id."""
    x = np.asarray(x_test, dtype=np.float64)
    y = np.asarray(y_test, dtype=np.intp)
    if x.shape[0] == 0:
        raise ContractError("evaluate: empty test set")
    if x.shape[0] != y.shape[0]:
        raise ContractError(f"evaluate: {x.shape[0]} rows vs {y.shape[0]} labels")
    probs = task_forward(task, x).value
    pred = np.argmax(probs, axis=1)
    return float(np.mean(pred == y))


# ---------------------------------------------------------------------------
# Experiment harness


@dataclass(frozen=True)
class SplitRow:
    """One measurement: accuracy after training with this many labels."""

    strategy: str
    seed: int
    split: int
    labeled_count: int
    accuracy: float
    wall_ms: float


@dataclass(frozen=True)
class SplitSummary:
    split: int
    labeled_count: int
    accuracy_mean: float
    accuracy_std: float
    wall_ms_total: float


@dataclass(frozen=True)
class ExperimentRecord:
    """All rows of one experiment plus per-split aggregates across seeds."""

    strategy: str
    rows: tuple[SplitRow, ...]
    summaries: tuple[SplitSummary, ...]
    config: dict

    def final_mean_accuracy(self) -> float:
        return self.summaries[-1].accuracy_mean


@dataclass
class SeedRunResult:
    strategy: str
    seed: int
    rows: list[SplitRow]
    split_history: tuple
    bundle: ModelBundle | None


def resolve_budget(budget: float, n_train: int) -> int:
    """Budget given as a fraction (< 1) of the train pool or an absolute count."""
    if budget <= 0:
        raise ConfigError("budget must be > 0")
    if budget < 1.0:
        return max(1, int(n_train * budget))
    b = int(budget)
    if b != budget:
        raise ConfigError(f"absolute budget must be an integer, got {budget}")
    return b


def dataset_from_config(cfg: TrainConfig) -> Dataset:
    """Build or load the dataset a config names.

    `dataset` is "blobs", a .csv path, or "idx:<images-path>:<labels-path>".
    File-backed datasets get a deterministic train/test split; blobs carry
    their own test block.
    """
    if cfg.dataset == "blobs":
        ds = generate_blobs(cfg.blob_k, cfg.blob_per_class, cfg.blob_dim,
                            cfg.blob_spread, cfg.data_seed,
                            test_per_class=cfg.blob_test_per_class)
    elif cfg.dataset.startswith("idx:"):
        parts = cfg.dataset.split(":")
        if len(parts) != 3:
            raise ConfigError("idx dataset must be idx:<images>:<labels>")
        ds = load_idx(parts[1], parts[2])
        ds = split_train_test(ds, cfg.test_fraction, cfg.data_seed)
    elif cfg.dataset.endswith(".csv"):
        ds = load_csv(cfg.dataset)
        ds = split_train_test(ds, cfg.test_fraction, cfg.data_seed)
    else:
        raise ConfigError(f"unknown dataset {cfg.dataset!r}: expected 'blobs', "
                          f"a .csv path, or idx:<images>:<labels>")
    if cfg.imbalance:
        ds = apply_imbalance(ds, cfg.imbalance_ratios, cfg.imbalance_min_keep,
                             cfg.data_seed)
    return ds


def _select_ids(cfg: TrainConfig, pool: PoolState, b: int, seed: int,
                split: int, enc, clf, disc, task) -> list[int]:
    if b > pool.n_unlabeled:
        raise SelectionError(f"budget {b} exceeds the remaining unlabeled "
                             f"pool ({pool.n_unlabeled})")
    if cfg.strategy == "random":
        return select_random(pool, b, _subseed(seed, "select", split))
    if cfg.strategy == "kcenter":
        return select_kcenter(pool.features, pool.labeled_ids,
                              pool.unlabeled_ids, b)
    if cfg.strategy == "entropy":
        x_u = pool.features[list(pool.unlabeled_ids)]
        probs = task_forward(task, x_u).value
        return select_max_entropy(probs, b, ids=pool.unlabeled_ids)
    scores = score_unlabeled(enc, clf, disc, pool)
    if cfg.sample_by_dprob_only:
        return select_by_dprob(scores, b)
    if cfg.sample_by_entropy_only or cfg.no_discriminator:
        # without a trained discriminator only the entropy condition is usable
        return select_by_entropy(scores, b)
    if cfg.mal_selection == "two_stage":
        return select_mal_two_stage(scores, b)
    return select_mal(scores, b)


def run_seed(cfg: TrainConfig, dataset: Dataset, seed: int) -> SeedRunResult:
    """One full active-learning trajectory for one seed.

    Split 0 trains on the initial pool alone; every later split selects b
    ids, annotates them with the ideal oracle, retrains, and measures test
    accuracy.
    """
    label = cfg.strategy_label()
    oracle = IdealOracle(dataset.labels)
    pool = init_pools(dataset, cfg.initial_fraction, seed)
    b = resolve_budget(cfg.budget, len(dataset.train_ids))
    uses_mal = cfg.strategy == "mal"
    enc = clf = disc = None
    opts = None
    task = None
    rows: list[SplitRow] = []

    for split in range(cfg.splits + 1):
        t0 = time.perf_counter()
        if split > 0:
            ids = _select_ids(cfg, pool, b, seed, split, enc, clf, disc, task)
            pool = annotate(pool, ids, oracle)
        if uses_mal:
            if enc is None or cfg.reinit_per_split:
                enc, clf, disc = init_models(cfg, dataset.input_dim,
                                             dataset.n_classes, seed)
                opts = None
            report = train_mal(enc, clf, disc, pool, cfg,
                               seed=_subseed(seed, "fit", split), opts=opts)
            opts = report.opts
            task, acc = train_task(pool, cfg, dataset,
                                   seed=_subseed(seed, "head", split),
                                   backbone=enc)
        else:
            task, acc = train_task(pool, cfg, dataset,
                                   seed=_subseed(seed, "head", split))
        wall_ms = (time.perf_counter() - t0) * 1000.0
        rows.append(SplitRow(strategy=label, seed=seed, split=split,
                             labeled_count=pool.n_labeled, accuracy=acc,
                             wall_ms=wall_ms))

    bundle = None
    if uses_mal:
        bundle = ModelBundle(encoder=enc, classifier=clf, discriminator=disc,
                             task=task,
                             meta={"strategy": label, "seed": seed,
                                   "n_classes": dataset.n_classes,
                                   "dataset": dataset.name,
                                   "labeled_ids": [int(i) for i in pool.labeled_ids]})
    return SeedRunResult(strategy=label, seed=seed, rows=rows,
                         split_history=pool.split_history, bundle=bundle)


def _seed_worker(args) -> SeedRunResult:
    cfg, dataset, seed = args
    return run_seed(cfg, dataset, seed)


def _aggregate(cfg: TrainConfig, results: list[SeedRunResult]) -> ExperimentRecord:
    rows = tuple(row for res in results for row in res.rows)
    summaries = []
    for split in range(cfg.splits + 1):
        at_split = [r for r in rows if r.split == split]
        accs = np.array([r.accuracy for r in at_split], dtype=np.float64)
        summaries.append(SplitSummary(
            split=split,
            labeled_count=at_split[0].labeled_count,
            accuracy_mean=float(accs.mean()),
            accuracy_std=float(accs.std()),
            wall_ms_total=float(sum(r.wall_ms for r in at_split))))
    return ExperimentRecord(strategy=cfg.strategy_label(), rows=rows,
                            summaries=tuple(summaries),
                            config=config_snapshot(cfg))


def run_experiment(cfg: TrainConfig, dataset: Dataset | None = None,
                   out_dir=None, jobs: int = 1) -> ExperimentRecord:
    """Run every seed of one strategy and aggregate the learning curve.

    Seeds are independent; jobs > 1 runs them in worker processes with
    results merged in seed order, so the record does not depend on jobs.
    When out_dir is given the results CSV, timing CSV, curve JSON, split
    history, and per-seed model checkpoints are written there.
    """
    cfg.validate()
    if dataset is None:
        dataset = dataset_from_config(cfg)
    if len(dataset.test_ids) == 0:
        raise ContractError("run_experiment: the dataset has no test split")
    tasks = [(cfg, dataset, seed) for seed in cfg.seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool_exec:
            results = list(pool_exec.map(_seed_worker, tasks))
    else:
        results = [run_seed(*t) for t in tasks]
    record = _aggregate(cfg, results)
    if out_dir is not None:
        write_outputs(out_dir, record, results)
    return record


# ---------------------------------------------------------------------------
# Artifact emission.  Accuracy cells use repr() so files round-trip exactly
# and identical runs produce byte-identical CSVs; wall-clock times never
# enter results.csv because they differ between identical runs.


def results_csv_text(record: ExperimentRecord) -> str:
    lines = ["strategy,seed,split,labeled_count,accuracy"]
    for r in record.rows:
        lines.append(f"{r.strategy},{r.seed},{r.split},{r.labeled_count},"
                     f"{repr(r.accuracy)}")
    return "\n".join(lines) + "\n"


def timings_csv_text(record: ExperimentRecord) -> str:
    lines = ["strategy,seed,split,wall_ms"]
    for r in record.rows:
        lines.append(f"{r.strategy},{r.seed},{r.split},{repr(r.wall_ms)}")
    return "\n".join(lines) + "\n"


def curve_json(record: ExperimentRecord) -> dict:
    return {
        "strategy": record.strategy,
        "points": [{"split": s.split,
                    "labeled_count": s.labeled_count,
                    "accuracy_mean": s.accuracy_mean,
                    "accuracy_std": s.accuracy_std}
                   for s in record.summaries],
        "seeds": list(record.config["seeds"]),
        "config": record.config,
    }


def write_outputs(out_dir, record: ExperimentRecord,
                  results: list[SeedRunResult]) -> dict:
    """Write all artifacts of one experiment; returns {name: path}."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    def emit(name: str, text: str) -> None:
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        paths[name] = path

    emit("results.csv", results_csv_text(record))
    emit("timings.csv", timings_csv_text(record))
    emit("curve.json", json.dumps(curve_json(record), indent=2, sort_keys=True) + "\n")
    for res in results:
        history = [{"split": int(s), "ids": [int(i) for i in ids],
                    "strategy": res.strategy, "seed": res.seed}
                   for s, ids in res.split_history]
        emit(f"splits_seed{res.seed}.jsonl",
             "".join(json.dumps(h, sort_keys=True) + "\n" for h in history))
        if res.bundle is not None:
            path = os.path.join(out_dir, f"checkpoint_seed{res.seed}.json")
            save_bundle(res.bundle, path)
            paths[f"checkpoint_seed{res.seed}.json"] = path
    return paths
