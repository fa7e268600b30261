"""
Driving the labeling service over HTTP
======================================

Starts the human-in-the-loop service in a background thread, then plays
the part of the human with plain urllib: fetch a round's batch, submit
labels, watch the accuracy curve grow.  Here "the human" reads the ground
truth; a real deployment serves the browser console from frontend/ and a
person clicks the classes instead.

    python3 demos/human_labeling_session.py
"""

import json
import threading
import urllib.request

from malkit.config import TrainConfig
from malkit.datagen import generate_blobs
from malkit.labelserve import LabelSession, make_server

# ---------------------------------------------------------------
# 1. A session owns the pool, the models, and the audit log.  Port 0
#    lets the OS pick a free port.

cfg = TrainConfig(blob_k=4, blob_per_class=40, blob_dim=8, blob_spread=0.2,
                  blob_test_per_class=10, epochs=15, task_epochs=15,
                  initial_fraction=0.05, budget=6, seeds=(0,))
ds = generate_blobs(cfg.blob_k, cfg.blob_per_class, cfg.blob_dim,
                    cfg.blob_spread, seed=0, test_per_class=cfg.blob_test_per_class)
session = LabelSession(cfg, dataset=ds)
server = make_server(session, port=0)
host, port = server.server_address
threading.Thread(target=server.serve_forever, daemon=True).start()
base = f"http://{host}:{port}"
print(f"service on {base}")


def call(path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(base + path, data=data,
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


status = call("/status")
print(f"round {status['round']}: {status['labeled_count']} labeled / "
      f"{status['unlabeled_count']} unlabeled, budget {status['budget']}")

# ---------------------------------------------------------------
# 2. Three rounds: /round/next trains on the current pool and returns
#    the ids worth labeling; /labels commits the batch and advances the
#    round.  The response carries each sample's scores so the console
#    can explain *why* it is asking.

for _ in range(3):
    batch = call("/round/next", body={})["batch"]
    ids = [item["id"] for item in batch]
    print(f"\nround asks for {len(ids)} labels, ids {ids}")
    print("  first pick: d_prob "
          f"{batch[0]['d_prob']:.3f}, entropy {batch[0]['entropy']:.3f}")
    answers = {str(i): int(ds.labels[i]) for i in ids}
    done = call("/labels", body=answers)
    print(f"  committed round {done['round']}, accuracy {done['accuracy']:.3f}")

curve = call("/curve")["points"]
print("\naccuracy curve:")
for pt in curve:
    print(f"  {pt['labeled_count']:3d} labels -> {pt['accuracy']:.3f}")

server.shutdown()
server.server_close()
