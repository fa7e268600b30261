"""Scoring of unlabeled samples and budget selection: the hybrid
discriminator+entropy rule plus random, max-entropy, and k-center baselines."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from . import tensorcore as tc
from .errors import ContractError, SelectionError
from .networks import EncoderParams, PrototypeClassifier, DiscriminatorParams, \
    cosine_logits, discriminate, encode
from .pools import PoolState
from .seeding import derive_rng
from .tensorcore import LOG_EPS

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AcquisitionScore:
    id: int
    d_prob: float    # discriminator labeledness probability, in (0, 1)
    entropy: float   # classifier predictive entropy, in [0, ln K]


def entropy_of_rows(probs: np.ndarray) -> np.ndarray:
    """Shannon entropy per row, natural log guarded at 1e-12."""
    p = np.asarray(probs, dtype=np.float64)
    return -np.sum(p * np.log(np.maximum(p, LOG_EPS)), axis=1)


def score_unlabeled(enc: EncoderParams, clf: PrototypeClassifier,
                    disc: DiscriminatorParams, pool: PoolState) -> list[AcquisitionScore]:
    """One (d_prob, entropy) pair per unlabeled id, forward passes only."""
    if len(pool.unlabeled_ids) == 0:
        raise ContractError("score_unlabeled: the unlabeled pool is empty")
    x = tc.constant(pool.features[list(pool.unlabeled_ids)])
    feats = tc.l2_normalize_rows(encode(enc, x))
    d_prob = discriminate(disc, feats).value[:, 0]
    probs = tc.softmax_rows(cosine_logits(clf, feats)).value
    ent = entropy_of_rows(probs)
    return [AcquisitionScore(id=i, d_prob=float(p), entropy=float(h))
            for i, p, h in zip(pool.unlabeled_ids, d_prob, ent)]


def _check_budget(b: int, n: int) -> None:
    if not 1 <= b <= n:
        raise SelectionError(f"budget {b} outside [1, {n}]")


def _rank_positions(scores, key) -> dict[int, int]:
    ordered = sorted(scores, key=key)
    return {s.id: pos for pos, s in enumerate(ordered)}


def rank_sums(scores) -> dict[int, int]:
    """rank_D + rank_H per id: ascending-d_prob rank plus descending-entropy rank.

    Ties inside each ranking break by lower id, so the ranking is total and
    runs reproduce.
    """
    rank_d = _rank_positions(scores, key=lambda s: (s.d_prob, s.id))
    rank_h = _rank_positions(scores, key=lambda s: (-s.entropy, s.id))
    return {s.id: rank_d[s.id] + rank_h[s.id] for s in scores}


def select_mal(scores, b: int) -> list[int]:
    """The b ids with the smallest rank_D + rank_H.

    Rank aggregation realizes the two selection conditions (low labeledness,
    high entropy) symmetrically and scale-free; final ties break by lower
    d_prob, then lower id.
    """
    _check_budget(b, len(scores))
    sums = rank_sums(scores)
    ordered = sorted(scores, key=lambda s: (sums[s.id], s.d_prob, s.id))
    return [s.id for s in ordered[:b]]


def select_mal_two_stage(scores, b: int) -> list[int]:
    """Ablation variant: keep the 2b lowest-d_prob ids, then take the b
    highest-entropy among them."""
    _check_budget(b, len(scores))
    stage1 = sorted(scores, key=lambda s: (s.d_prob, s.id))[:min(2 * b, len(scores))]
    stage2 = sorted(stage1, key=lambda s: (-s.entropy, s.id))
    return [s.id for s in stage2[:b]]


def select_by_entropy(scores, b: int) -> list[int]:
    """Top-b by classifier entropy (uncertainty-only sampling)."""
    _check_budget(b, len(scores))
    ordered = sorted(scores, key=lambda s: (-s.entropy, s.id))
    return [s.id for s in ordered[:b]]


def select_by_dprob(scores, b: int) -> list[int]:
    """Bottom-b by labeledness probability (diversity-only sampling)."""
    _check_budget(b, len(scores))
    ordered = sorted(scores, key=lambda s: (s.d_prob, s.id))
    return [s.id for s in ordered[:b]]


def select_random(pool: PoolState, b: int, seed: int) -> list[int]:
    """Uniform without replacement from U, deterministic in seed."""
    _check_budget(b, len(pool.unlabeled_ids))
    rng = derive_rng(seed, "select_random")
    picked = rng.choice(len(pool.unlabeled_ids), size=b, replace=False)
    return [int(pool.unlabeled_ids[i]) for i in picked]


def select_max_entropy(task_probs: np.ndarray, b: int, ids=None) -> list[int]:
    """Top-b rows by task-model predictive entropy; ties break by lower id."""
    probs = np.asarray(task_probs, dtype=np.float64)
    if ids is None:
        ids = list(range(probs.shape[0]))
    ids = [int(i) for i in ids]
    if len(ids) != probs.shape[0]:
        raise ContractError("select_max_entropy: one id per probability row required")
    _check_budget(b, len(ids))
    ent = entropy_of_rows(probs)
    order = sorted(range(len(ids)), key=lambda i: (-ent[i], ids[i]))
    return [ids[i] for i in order[:b]]


def select_kcenter(all_feats: np.ndarray, labeled_ids, unlabeled_ids, b: int) -> list[int]:
    """Greedy farthest-first in raw Euclidean feature space.

    Repeatedly picks the unlabeled id maximizing its minimum distance to the
    labeled-plus-selected set; ties break by lower id.  With an empty labeled
    set the lowest unlabeled id seeds the centers.
    """
    feats = np.asarray(all_feats, dtype=np.float64)
    unlabeled = [int(i) for i in unlabeled_ids]
    labeled = [int(i) for i in labeled_ids]
    _check_budget(b, len(unlabeled))

    cand = np.array(sorted(unlabeled), dtype=np.intp)
    selected: list[int] = []
    if labeled:
        centers = feats[labeled]
        diff = feats[cand][:, None, :] - centers[None, :, :]
        min_dist = np.sqrt((diff ** 2).sum(axis=2)).min(axis=1)
    else:
        seed_center = int(cand[0])
        log.warning("select_kcenter: empty labeled set, seeding with id %d", seed_center)
        selected.append(seed_center)
        keep = cand != seed_center
        min_dist = np.sqrt(((feats[cand[keep]] - feats[seed_center]) ** 2).sum(axis=1))
        cand = cand[keep]

    while len(selected) < b:
        # argmax with ties to the lower id: cand is sorted ascending and
        # argmax returns the first maximum.
        pick_pos = int(np.argmax(min_dist))
        pick = int(cand[pick_pos])
        selected.append(pick)
        keep = np.ones(len(cand), dtype=bool)
        keep[pick_pos] = False
        cand = cand[keep]
        new_dist = np.sqrt(((feats[cand] - feats[pick]) ** 2).sum(axis=1))
        min_dist = np.minimum(min_dist[keep], new_dist)
    return selected


def dump_scores(scores, path) -> None:
    """CSV with columns id,d_prob,entropy — feeds the UI and debugging."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "d_prob", "entropy"])
        for s in scores:
            writer.writerow([s.id, repr(float(s.d_prob)), repr(float(s.entropy))])
