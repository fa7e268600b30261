"""Labeled/unlabeled partition of a dataset, budget bookkeeping, and the
oracle abstraction (ideal ground-truth answers or deferred human answers)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from .errors import ContractError, SelectionError
from .seeding import derive_rng


@dataclass(frozen=True)
class PoolState:
    """Immutable snapshot of the pool partition.

    `features` is the full feature table; ids are row indices.  The pool
    universe is `all_ids` (the training rows); L and U partition it at all
    times.  `true_labels` is consulted only through an oracle.
    """

    features: np.ndarray
    true_labels: np.ndarray
    all_ids: tuple[int, ...]
    labeled_ids: tuple[int, ...]
    unlabeled_ids: tuple[int, ...]
    revealed_labels: dict[int, int]
    split_history: tuple[tuple[int, tuple[int, ...]], ...]

    @property
    def n_labeled(self) -> int:
        return len(self.labeled_ids)

    @property
    def n_unlabeled(self) -> int:
        return len(self.unlabeled_ids)

    def check_partition(self) -> None:
        l, u = set(self.labeled_ids), set(self.unlabeled_ids)
        if l & u:
            raise AssertionError("pool partition violated: L and U overlap")
        if l | u != set(self.all_ids):
            raise AssertionError("pool partition violated: L union U != all ids")


class IdealOracle:
    """Answers synchronously with ground truth."""

    mode = "ideal"

    def __init__(self, true_labels):
        self._labels = np.asarray(true_labels, dtype=np.intp)

    def answer(self, ids) -> dict[int, int] | None:
        return {int(i): int(self._labels[i]) for i in ids}


class HumanOracle:
    """Collects human answers; never fabricates a label.

    `answer` returns None while any requested id is unanswered, leaving the
    request pending until `provide` has covered all of it.
    """

    mode = "human"

    def __init__(self):
        self.pending: list[int] = []
        self._answers: dict[int, int] = {}

    def request(self, ids) -> None:
        self.pending = [int(i) for i in ids]

    def provide(self, sample_id: int, label: int) -> None:
        self._answers[int(sample_id)] = int(label)

    def answer(self, ids) -> dict[int, int] | None:
        ids = [int(i) for i in ids]
        if any(i not in self._answers for i in ids):
            self.request(ids)
            return None
        self.pending = []
        return {i: self._answers[i] for i in ids}


def init_pools(dataset, initial_fraction: float, seed: int) -> PoolState:
    """Label a uniformly random floor(n * fraction) subset of the train rows."""
    if not 0.0 < initial_fraction < 1.0:
        raise ContractError(f"initial_fraction must be in (0, 1), got {initial_fraction}")
    train_ids = tuple(int(i) for i in dataset.train_ids)
    n = len(train_ids)
    n_init = int(n * initial_fraction)
    if n_init == 0:
        raise ContractError(f"initial fraction {initial_fraction} labels 0 of {n} samples")
    rng = derive_rng(seed, "init_pools")
    picked = rng.choice(n, size=n_init, replace=False)
    labeled = tuple(train_ids[i] for i in picked)
    labeled_set = set(labeled)
    unlabeled = tuple(i for i in train_ids if i not in labeled_set)
    revealed = {i: int(dataset.labels[i]) for i in labeled}
    return PoolState(features=dataset.features, true_labels=np.asarray(dataset.labels),
                     all_ids=train_ids, labeled_ids=labeled, unlabeled_ids=unlabeled,
                     revealed_labels=revealed,
                     split_history=((0, labeled),))


def annotate(pool: PoolState, ids, oracle) -> PoolState:
    """Move ids from U to L with labels from the oracle.

    With a human oracle that has unanswered ids the request is registered as
    pending and the pool is returned unchanged; call again once all answers
    arrived.
    """
    ids = [int(i) for i in ids]
    if len(ids) == 0:
        raise ContractError("annotate: budget must be >= 1")
    if len(set(ids)) != len(ids):
        raise SelectionError("annotate: duplicate ids in selection")
    unlabeled = set(pool.unlabeled_ids)
    missing = [i for i in ids if i not in unlabeled]
    if missing:
        raise SelectionError(f"annotate: ids not in the unlabeled pool: {missing}")
    answers = oracle.answer(ids)
    if answers is None:
        return pool  # pending until the human provides every label
    id_set = set(ids)
    revealed = dict(pool.revealed_labels)
    revealed.update(answers)
    split = len(pool.split_history)
    return replace(
        pool,
        labeled_ids=pool.labeled_ids + tuple(ids),
        unlabeled_ids=tuple(u for u in pool.unlabeled_ids if u not in id_set),
        revealed_labels=revealed,
        split_history=pool.split_history + ((split, tuple(ids)),),
    )


def _draw(ids: tuple[int, ...], batch_size: int, seed: int, side: str) -> np.ndarray:
    if len(ids) == 0:
        raise ContractError(f"{side}_batch: the {side} pool is empty")
    if batch_size < 1:
        raise ContractError(f"{side}_batch: batch size must be >= 1")
    rng = derive_rng(seed, side)
    replace_draw = batch_size > len(ids)  # tiny pools early on: documented fallback
    picked = rng.choice(len(ids), size=batch_size, replace=replace_draw)
    return np.asarray(ids, dtype=np.intp)[picked]


def labeled_batch(pool: PoolState, batch_size: int, seed: int):
    """(features, labels) drawn from L; labels come from revealed_labels only."""
    picked = _draw(pool.labeled_ids, batch_size, seed, "labeled")
    x = pool.features[picked]
    y = np.array([pool.revealed_labels[int(i)] for i in picked], dtype=np.intp)
    return x, y


def unlabeled_batch(pool: PoolState, batch_size: int, seed: int) -> np.ndarray:
    """Features drawn from U (never a labeled id)."""
    picked = _draw(pool.unlabeled_ids, batch_size, seed, "unlabeled")
    return pool.features[picked]


def replay_history(dataset, history, oracle) -> PoolState:
    """Reconstruct the PoolState that produced `history`.

    The first entry is the initial labeled set; later entries are annotation
    batches in order.
    """
    if not history:
        raise ContractError("replay_history: empty history")
    train_ids = tuple(int(i) for i in dataset.train_ids)
    _split0, initial = history[0]
    initial = tuple(int(i) for i in initial)
    answers = oracle.answer(initial)
    if answers is None:
        raise ContractError("replay_history: oracle cannot answer the initial pool")
    labeled_set = set(initial)
    pool = PoolState(features=dataset.features,
                     true_labels=np.asarray(dataset.labels),
                     all_ids=train_ids, labeled_ids=initial,
                     unlabeled_ids=tuple(i for i in train_ids if i not in labeled_set),
                     revealed_labels=dict(answers),
                     split_history=((0, initial),))
    for _split, ids in history[1:]:
        pool = annotate(pool, ids, oracle)
    return pool


def export_split_history(pool: PoolState, path, strategy: str, seed: int) -> None:
    """One JSON line per split: {split, ids, strategy, seed, timestamp}."""
    stamp = datetime.now(timezone.utc).isoformat()
    with open(path, "w", encoding="utf-8") as fh:
        for split, ids in pool.split_history:
            fh.write(json.dumps({"split": split, "ids": list(ids),
                                 "strategy": strategy, "seed": seed,
                                 "timestamp": stamp}) + "\n")
