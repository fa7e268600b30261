"""
One active-learning round, end to end
=====================================

This script walks the full loop once, at desk scale, printing what each
stage produces: pretrain on labeled + unlabeled data, score the unlabeled
pool, pick a batch by summed ranks, annotate it, and retrain the task
model on the grown pool.

Run it from the repo root after `pip install -e .`:

    python3 demos/active_learning_walkthrough.py
"""

import numpy as np

from malkit.acquisition import rank_sums, score_unlabeled, select_mal
from malkit.config import TrainConfig
from malkit.datagen import generate_blobs
from malkit.engine import init_models, resolve_budget, train_mal, train_task
from malkit.pools import IdealOracle, annotate, init_pools

# ---------------------------------------------------------------
# 1. A synthetic problem: 6 gaussian clusters in 12 dimensions.
#    2% of the training rows start out labeled, the rest form the
#    unlabeled pool the strategy gets to pick from.

cfg = TrainConfig(blob_k=6, blob_per_class=200, blob_dim=12, blob_spread=0.22,
                  blob_test_per_class=50, epochs=40, task_epochs=30,
                  initial_fraction=0.02, budget=0.05)
ds = generate_blobs(cfg.blob_k, cfg.blob_per_class, cfg.blob_dim,
                    cfg.blob_spread, seed=0, test_per_class=cfg.blob_test_per_class)
pool = init_pools(ds, cfg.initial_fraction, seed=0)
budget = resolve_budget(cfg.budget, len(ds.train_ids))
print(f"dataset: {ds.n} rows, {len(ds.train_ids)} train / {len(ds.test_ids)} test")
print(f"pools:   {pool.n_labeled} labeled, {pool.n_unlabeled} unlabeled, "
      f"budget {budget} per round")

# ---------------------------------------------------------------
# 2. Adversarial semi-supervised pretraining.  Three phases per step:
#    supervised cross-entropy on L, the entropy scalar on U (encoder
#    descends it, classifier ascends it through the reversal layer),
#    and labeledness BCE on detached features for the discriminator.

enc, clf, disc = init_models(cfg, ds.input_dim, ds.n_classes, seed=0)
report = train_mal(enc, clf, disc, pool, cfg, seed=0)
print("\npretraining (first/last epoch):")
print(f"  supervised CE   {report.ce_per_epoch[0]:.3f} -> {report.ce_per_epoch[-1]:.3f}")
print(f"  mean U entropy  {report.entropy_per_epoch[0]:.3f} -> {report.entropy_per_epoch[-1]:.3f}")
print(f"  labeledness BCE {report.bce_per_epoch[0]:.3f} -> {report.bce_per_epoch[-1]:.3f}")

# ---------------------------------------------------------------
# 3. Score every unlabeled sample: the discriminator's labeledness
#    probability (low = far from the labeled pool) and the classifier's
#    predictive entropy (high = uncertain).  The batch is chosen by the
#    sum of the two ranks.

scores = score_unlabeled(enc, clf, disc, pool)
sums = rank_sums(scores)
picked = select_mal(scores, budget)
by_id = {s.id: s for s in scores}
print(f"\ntop of the selection (of {len(scores)} candidates):")
print("  id    d_prob  entropy  rank sum")
for i in picked[:5]:
    s = by_id[i]
    print(f"  {i:<5d} {s.d_prob:.3f}   {s.entropy:.3f}    {sums[i]}")

# ---------------------------------------------------------------
# 4. Annotate the picked ids (the ideal oracle answers with ground
#    truth) and retrain the task model, warm-started from the
#    pretrained encoder, on the grown labeled pool.

_, acc_before = train_task(pool, cfg, ds, seed=0, backbone=enc)
pool = annotate(pool, picked, IdealOracle(ds.labels))
_, acc_after = train_task(pool, cfg, ds, seed=0, backbone=enc)
print(f"\ntask accuracy: {acc_before:.3f} with {pool.n_labeled - budget} labels "
      f"-> {acc_after:.3f} with {pool.n_labeled}")
