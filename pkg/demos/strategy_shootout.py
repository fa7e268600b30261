"""
Four acquisition strategies on one learning curve
=================================================

Runs the experiment harness for the adversarial strategy and the three
baselines on the same small blobs problem and prints the mean learning
curves side by side, plus a crude ASCII chart.  Takes around a minute.

    python3 demos/strategy_shootout.py
"""

import dataclasses

from malkit.config import TrainConfig
from malkit.datagen import generate_blobs
from malkit.engine import run_experiment

# A deliberately small benchmark: 5 clusters, 150 train rows per class,
# 3% seeded, 3% acquired per split, three splits, three seeds.
base = TrainConfig(blob_k=5, blob_per_class=150, blob_dim=12, blob_spread=0.25,
                   blob_test_per_class=40, epochs=50, task_epochs=30,
                   initial_fraction=0.03, budget=0.03, splits=3,
                   seeds=(0, 1, 2))
ds = generate_blobs(base.blob_k, base.blob_per_class, base.blob_dim,
                    base.blob_spread, seed=0, test_per_class=base.blob_test_per_class)

records = {}
for strategy in ("mal", "random", "entropy", "kcenter"):
    cfg = dataclasses.replace(base, strategy=strategy)
    records[strategy] = run_experiment(cfg, dataset=ds)
    print(f"ran {strategy:8s} final mean accuracy "
          f"{records[strategy].final_mean_accuracy():.4f}")

# Mean accuracy per split, one row per label count.
print("\nlabels  " + "  ".join(f"{name:>8s}" for name in records))
for i, summary in enumerate(records["mal"].summaries):
    cells = "  ".join(f"{records[name].summaries[i].accuracy_mean:8.4f}"
                      for name in records)
    print(f"{summary.labeled_count:<7d} {cells}")

# ASCII chart of the final column span, one row per strategy.
lo = min(r.final_mean_accuracy() for r in records.values())
hi = max(r.final_mean_accuracy() for r in records.values())
span = max(hi - lo, 1e-9)
print("\nfinal accuracy, worst to best:")
for name, rec in sorted(records.items(), key=lambda kv: kv[1].final_mean_accuracy()):
    acc = rec.final_mean_accuracy()
    bar = "#" * (1 + int(round(40 * (acc - lo) / span)))
    print(f"  {name:8s} {acc:.4f} {bar}")
