"""The three training objectives: supervised cosine cross-entropy, the
adversarial entropy term between encoder and classifier, and the
discriminator's binary cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensorcore as tc
from .errors import ContractError
from .networks import EncoderParams, PrototypeClassifier, DiscriminatorParams, \
    cosine_logits, discriminate, encode
from .tensorcore import DiffNode


@dataclass
class LossValue:
    node: DiffNode  # 1x1 scalar in the graph
    n_samples: int

    def item(self) -> float:
        return self.node.item()


def cross_entropy(probs: DiffNode, labels) -> LossValue:
    """Mean of -log p[i, label_i] with the log guarded at 1e-12."""
    labels = np.asarray(labels, dtype=np.intp)
    n, k = probs.value.shape
    if labels.shape != (n,):
        raise ContractError(f"cross_entropy: need {n} labels, got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ContractError(f"cross_entropy: label out of range [0, {k})")
    picked = tc.gather_per_row(probs, labels)
    loss = tc.scale(tc.mean(tc.log(picked)), -1.0)
    return LossValue(node=loss, n_samples=n)


def shannon_entropy(probs: DiffNode) -> LossValue:
    """Mean over rows of -sum_k p log p, natural log, guarded."""
    n = probs.value.shape[0]
    plogp = tc.mul(probs, tc.log(probs))
    loss = tc.scale(tc.total(plogp), -1.0 / n)
    return LossValue(node=loss, n_samples=n)


@dataclass
class MinimaxEntropyLoss:
    """One scalar serving both adversarial parameter groups.

    `objective` is descended by the optimizers of both F and C.  Its sign and
    the reversal layer between the normalized features and the classifier
    route the gradients so that, in the default convention, a descent step
    decreases unlabeled entropy through F and increases it through C.  The
    "enc_max" convention flips both directions.
    """

    objective: DiffNode
    entropy: float  # mean unlabeled entropy at evaluation, for monitoring
    n_samples: int


def minimax_entropy_term(enc: EncoderParams, clf: PrototypeClassifier, x_unlabeled,
                         lam: float = 1.0, weight: float = 1.0,
                         sign: str = "clf_max") -> MinimaxEntropyLoss:
    """Adversarial entropy scalar over an unlabeled batch.

    The reversal layer (strength lam) sits between the normalized features
    and the classifier, so F receives the entropy gradient only through the
    reversal path; lam=0 gives F exactly zero adversarial gradient.
    """
    if lam < 0:
        raise ContractError("minimax_entropy_term: lambda must be >= 0")
    if sign not in ("clf_max", "enc_max"):
        raise ContractError(f"minimax_entropy_term: unknown sign convention {sign!r}")
    x = x_unlabeled if isinstance(x_unlabeled, DiffNode) else tc.constant(x_unlabeled)
    if x.value.shape[0] == 0:
        raise ContractError("minimax_entropy_term: empty unlabeled batch")
    feats = tc.l2_normalize_rows(encode(enc, x))
    logits = cosine_logits(clf, tc.grad_reverse(feats, lam))
    probs = tc.softmax_rows(logits)
    ent = shannon_entropy(probs)
    factor = -weight if sign == "clf_max" else weight
    return MinimaxEntropyLoss(objective=tc.scale(ent.node, factor),
                              entropy=ent.item(), n_samples=ent.n_samples)


def discriminator_bce(disc: DiscriminatorParams, feats_labeled: DiffNode,
                      feats_unlabeled: DiffNode) -> LossValue:
    """-mean log D(z_L) - mean log(1 - D(z_U)) on detached features.

    Features are detached before entering D, so this loss never produces
    gradients for encoder or classifier parameters.
    """
    if feats_labeled.value.shape[0] == 0 or feats_unlabeled.value.shape[0] == 0:
        raise ContractError("discriminator_bce: both batches must be non-empty")
    z_l = tc.detach(feats_labeled)
    z_u = tc.detach(feats_unlabeled)
    p_l = discriminate(disc, z_l)
    p_u = discriminate(disc, z_u)
    ones = tc.constant(np.ones_like(p_u.value))
    left = tc.scale(tc.mean(tc.log(p_l)), -1.0)
    right = tc.scale(tc.mean(tc.log(tc.sub(ones, p_u))), -1.0)
    n = feats_labeled.value.shape[0] + feats_unlabeled.value.shape[0]
    return LossValue(node=tc.add(left, right), n_samples=n)
