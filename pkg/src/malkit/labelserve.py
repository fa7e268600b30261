"""HTTP labeling service: the human-in-the-loop side of the selection loop.

The engine picks which samples to label; a person supplies the labels over
four JSON endpoints.  All mutations go through one lock, labels commit
atomically per round, and every transition lands in an append-only audit log
that `replay_session` can turn back into the same session state.

Endpoints:
    GET  /status      -> {round, labeled_count, unlabeled_count, state, ...}
    POST /round/next  -> {round, batch: [{id, payload, d_prob, entropy}]}
    POST /labels      -> {accepted, remaining} with body {"<id>": class, ...}
    GET  /curve       -> {points: [{round, labeled_count, accuracy}]}
"""

from __future__ import annotations

import json
import os
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .config import TrainConfig, config_snapshot, snapshot_to_config
from .datagen import Dataset
from .engine import (dataset_from_config, init_models, resolve_budget,
                     train_mal, train_task)
from .errors import ContractError, SelectionError, StateConflict
from .acquisition import (score_unlabeled, select_by_dprob, select_by_entropy,
                          select_mal, select_mal_two_stage)
from .pools import PoolState, annotate
from .seeding import derive_rng, seed_for

STATE_IDLE = "idle"
STATE_TRAINING = "training"
STATE_AWAITING = "awaiting_labels"


class _AnswerSheet:
    """Oracle view over an explicit {id: class} mapping."""

    def __init__(self, answers: dict[int, int]):
        self.answers = {int(i): int(c) for i, c in answers.items()}

    def answer(self, ids):
        return {int(i): self.answers[int(i)] for i in ids}


def _projection_2d(features: np.ndarray) -> np.ndarray:
    """Rows projected onto the two main directions, for display only."""
    x = np.asarray(features, dtype=np.float64)
    centered = x - x.mean(axis=0, keepdims=True)
    if x.shape[1] <= 2:
        out = np.zeros((x.shape[0], 2))
        out[:, :x.shape[1]] = centered
        return out
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:2].T


def _initial_pool(dataset: Dataset, cfg: TrainConfig, labeled_ids) -> PoolState:
    labeled = tuple(int(i) for i in labeled_ids)
    labeled_set = set(labeled)
    train_ids = tuple(int(i) for i in dataset.train_ids)
    revealed = {i: int(dataset.labels[i]) for i in labeled}
    return PoolState(features=dataset.features,
                     true_labels=np.asarray(dataset.labels),
                     all_ids=train_ids, labeled_ids=labeled,
                     unlabeled_ids=tuple(i for i in train_ids
                                         if i not in labeled_set),
                     revealed_labels=revealed,
                     split_history=((0, labeled),))


def _draw_initial_ids(dataset: Dataset, cfg: TrainConfig) -> list[int]:
    train_ids = list(dataset.train_ids)
    n_init = int(len(train_ids) * cfg.initial_fraction)
    if n_init == 0:
        raise ContractError("initial pool is empty at this fraction")
    rng = derive_rng(cfg.seeds[0], "init_pools")
    picked = rng.choice(len(train_ids), size=n_init, replace=False)
    return [int(train_ids[i]) for i in picked]


class LabelSession:
    """Single-owner labeling session: pool, round state, and audit log.

    The initial pool is labeled with ground truth (it plays the role of the
    seed set a project starts from); every later label comes from the human
    client.  `audit_path=None` keeps the log in memory only.
    """

    def __init__(self, cfg: TrainConfig, dataset: Dataset | None = None,
                 audit_path=None, _replay: bool = False):
        cfg.validate()
        self.cfg = cfg
        self.dataset = dataset if dataset is not None else dataset_from_config(cfg)
        self.budget = resolve_budget(cfg.budget, len(self.dataset.train_ids))
        self.lock = threading.Lock()
        self.state = STATE_IDLE
        self.round = 0
        self.batch: list[dict] | None = None
        self.pending: dict[int, int] = {}
        self.curve_points: list[dict] = []
        self.audit_path = audit_path
        self.audit_events: list[dict] = []
        self._xy = _projection_2d(self.dataset.features)
        self._models = None
        self._opts = None
        self._image_side = self._detect_image_side()
        if not _replay:
            initial = _draw_initial_ids(self.dataset, cfg)
            self.pool = _initial_pool(self.dataset, cfg, initial)
            # draw order matters: batch sampling indexes the labeled tuple,
            # so replay must rebuild it in exactly this order
            self._log({"event": "session_start",
                       "config": config_snapshot(cfg),
                       "initial_labeled": [int(i) for i in initial]})

    def _detect_image_side(self) -> int | None:
        if not self.cfg.dataset.startswith("idx:"):
            return None
        side = int(round(self.dataset.input_dim ** 0.5))
        return side if side * side == self.dataset.input_dim else None

    # -- audit ---------------------------------------------------------

    def _log(self, event: dict) -> None:
        event = dict(event)
        event["ts"] = time.time()
        self.audit_events.append(event)
        if self.audit_path is not None:
            with open(self.audit_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(event, sort_keys=True) + "\n")

    # -- snapshots -----------------------------------------------------

    def status(self) -> dict:
        with self.lock:
            return {"round": self.round,
                    "labeled_count": self.pool.n_labeled,
                    "unlabeled_count": self.pool.n_unlabeled,
                    "state": self.state,
                    "budget": self.budget,
                    "n_classes": self.dataset.n_classes,
                    "batch_ids": [e["id"] for e in self.batch] if self.batch else []}

    def curve(self) -> dict:
        with self.lock:
            return {"dataset": self.dataset.name,
                    "budget": self.budget,
                    "points": list(self.curve_points)}

    def current_batch(self) -> list[dict]:
        with self.lock:
            if self.state != STATE_AWAITING or self.batch is None:
                raise StateConflict("no batch is awaiting labels")
            return [dict(e) for e in self.batch]

    # -- round flow ------------------------------------------------------

    def _payload(self, sample_id: int) -> dict:
        row = self.dataset.features[sample_id]
        payload = {"xy": [float(self._xy[sample_id, 0]),
                          float(self._xy[sample_id, 1])],
                   "features": [float(v) for v in row]}
        if self._image_side is not None:
            payload["image_side"] = self._image_side
        return payload

    def next_round(self) -> dict:
        """Train on the current pool, score U, select the next batch."""
        with self.lock:
            if self.state != STATE_IDLE:
                raise StateConflict(f"cannot select a batch while {self.state}")
            if self.budget > self.pool.n_unlabeled:
                raise SelectionError(f"budget {self.budget} exceeds the "
                                     f"remaining pool ({self.pool.n_unlabeled})")
            self.state = STATE_TRAINING
            pool = self.pool
        try:
            batch = self._train_and_select(pool)
        except BaseException:
            with self.lock:
                self.state = STATE_IDLE
            raise
        with self.lock:
            self.state = STATE_AWAITING
            self.batch = batch
            self.pending = {}
            self._log({"event": "batch_selected", "round": self.round,
                       "ids": [e["id"] for e in batch]})
            return {"round": self.round, "batch": [dict(e) for e in batch]}

    def _train_and_select(self, pool: PoolState) -> list[dict]:
        cfg = self.cfg
        seed = cfg.seeds[0]
        if self._models is None or cfg.reinit_per_split:
            self._models = init_models(cfg, self.dataset.input_dim,
                                       self.dataset.n_classes, seed)
            self._opts = None
        enc, clf, disc = self._models
        round_seed = int(seed_for(seed, "serve", self.round).generate_state(1)[0])
        report = train_mal(enc, clf, disc, pool, cfg, seed=round_seed,
                           opts=self._opts)
        self._opts = report.opts
        scores = score_unlabeled(enc, clf, disc, pool)
        if cfg.sample_by_dprob_only:
            ids = select_by_dprob(scores, self.budget)
        elif cfg.sample_by_entropy_only or cfg.no_discriminator:
            ids = select_by_entropy(scores, self.budget)
        elif cfg.mal_selection == "two_stage":
            ids = select_mal_two_stage(scores, self.budget)
        else:
            ids = select_mal(scores, self.budget)
        by_id = {s.id: s for s in scores}
        return [{"id": int(i),
                 "d_prob": by_id[i].d_prob,
                 "entropy": by_id[i].entropy,
                 "payload": self._payload(int(i))} for i in ids]

    def submit_labels(self, labels: dict) -> dict:
        """Record labels for the awaiting batch; commit when all arrived."""
        parsed: dict[int, int] = {}
        for key, value in labels.items():
            try:
                sample_id = int(key)
                class_id = int(value)
            except (TypeError, ValueError):
                raise ContractError(f"bad label entry {key!r}: {value!r}") from None
            if not 0 <= class_id < self.dataset.n_classes:
                raise ContractError(f"class {class_id} outside "
                                    f"[0, {self.dataset.n_classes})")
            parsed[sample_id] = class_id
        if not parsed:
            raise ContractError("no labels in request")
        with self.lock:
            if self.state != STATE_AWAITING or self.batch is None:
                raise StateConflict("no batch is awaiting labels")
            batch_ids = {e["id"] for e in self.batch}
            for sample_id in parsed:
                if sample_id not in batch_ids:
                    raise ContractError(f"id {sample_id} is not in the "
                                        f"current batch")
                if sample_id in self.pending:
                    raise ContractError(f"id {sample_id} already labeled "
                                        f"this round")
            for sample_id, class_id in parsed.items():
                self.pending[sample_id] = class_id
                self._log({"event": "label", "round": self.round,
                           "id": sample_id, "class": class_id})
            remaining = len(batch_ids) - len(self.pending)
            if remaining > 0:
                return {"accepted": len(parsed), "remaining": remaining}
            ordered_ids = [e["id"] for e in self.batch]
            pending = dict(self.pending)
            committed_round = self.round
            self.state = STATE_TRAINING
        accuracy = self._commit_round(ordered_ids, pending)
        return {"accepted": len(parsed), "remaining": 0,
                "round": committed_round, "accuracy": accuracy}

    def _commit_round(self, ordered_ids: list[int], pending: dict) -> float | None:
        new_pool = annotate(self.pool, ordered_ids, _AnswerSheet(pending))
        accuracy = None
        if len(self.dataset.test_ids) > 0:
            _, accuracy = train_task(new_pool, self.cfg, self.dataset,
                                     seed=self.cfg.seeds[0] + self.round,
                                     backbone=self._models[0] if self._models else None)
        with self.lock:
            self.pool = new_pool
            self.round += 1
            point = {"round": self.round,
                     "labeled_count": self.pool.n_labeled,
                     "accuracy": accuracy}
            self.curve_points.append(point)
            self._log({"event": "round_committed", "round": self.round - 1,
                       "ids": ordered_ids,
                       "labels": {str(i): pending[i] for i in ordered_ids},
                       "accuracy": accuracy})
            self.batch = None
            self.pending = {}
            self.state = STATE_IDLE
        return accuracy


def replay_session(audit_path, dataset: Dataset | None = None) -> LabelSession:
    """Rebuild a session purely from its audit log.

    Committed rounds are reapplied with their logged labels; a round that was
    awaiting labels at the crash is restored with its partial label set.  No
    training happens during replay.
    """
    events = []
    with open(audit_path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(json.loads(line))
    if not events or events[0].get("event") != "session_start":
        raise ContractError("audit log must start with session_start")
    start = events[0]
    cfg = snapshot_to_config(start["config"])
    session = LabelSession(cfg, dataset=dataset, audit_path=None, _replay=True)
    session.pool = _initial_pool(session.dataset, cfg, start["initial_labeled"])
    session.audit_events = list(events)

    open_batch: list[int] | None = None
    open_labels: dict[int, int] = {}
    for event in events[1:]:
        kind = event.get("event")
        if kind == "batch_selected":
            open_batch = [int(i) for i in event["ids"]]
            open_labels = {}
        elif kind == "label":
            open_labels[int(event["id"])] = int(event["class"])
        elif kind == "round_committed":
            ids = [int(i) for i in event["ids"]]
            labels = {int(k): int(v) for k, v in event["labels"].items()}
            session.pool = annotate(session.pool, ids, _AnswerSheet(labels))
            session.round += 1
            session.curve_points.append({"round": session.round,
                                         "labeled_count": session.pool.n_labeled,
                                         "accuracy": event.get("accuracy")})
            open_batch = None
            open_labels = {}
    if open_batch is not None:
        session.state = STATE_AWAITING
        session.batch = [{"id": i, "d_prob": None, "entropy": None,
                          "payload": session._payload(i)} for i in open_batch]
        session.pending = dict(open_labels)
    else:
        session.state = STATE_IDLE
    session.audit_path = audit_path
    return session


# ---------------------------------------------------------------------------
# HTTP layer


class _Handler(BaseHTTPRequestHandler):
    server_version = "malkit-labelserve/1"
    protocol_version = "HTTP/1.1"

    # set by make_server
    session: LabelSession = None
    static_dir = None

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send_json(self, code: int, body: dict) -> None:
        data = json.dumps(body).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _send_error_json(self, code: int, message: str) -> None:
        self._send_json(code, {"error": message})

    def _read_json(self):
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length) if length else b""
        if not raw:
            return None
        try:
            return json.loads(raw)
        except json.JSONDecodeError:
            return None

    def _serve_static(self, path: str) -> bool:
        if self.static_dir is None:
            return False
        rel = "index.html" if path == "/" else path.lstrip("/")
        full = os.path.realpath(os.path.join(self.static_dir, rel))
        root = os.path.realpath(self.static_dir)
        if not full.startswith(root + os.sep) and full != root:
            return False
        if not os.path.isfile(full):
            return False
        ctype = {"html": "text/html", "js": "text/javascript",
                 "css": "text/css", "map": "application/json",
                 "svg": "image/svg+xml"}.get(full.rsplit(".", 1)[-1],
                                             "application/octet-stream")
        with open(full, "rb") as fh:
            data = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)
        return True

    def do_GET(self):
        path = self.path.split("?", 1)[0]
        if path == "/status":
            self._send_json(200, self.session.status())
        elif path == "/curve":
            self._send_json(200, self.session.curve())
        elif path == "/batch":
            try:
                self._send_json(200, {"round": self.session.round,
                                      "batch": self.session.current_batch()})
            except StateConflict as exc:
                self._send_error_json(409, str(exc))
        elif self._serve_static(path):
            pass
        else:
            self._send_error_json(404, f"no such path: {path}")

    def do_POST(self):
        path = self.path.split("?", 1)[0]
        try:
            if path == "/round/next":
                self._send_json(200, self.session.next_round())
            elif path == "/labels":
                body = self._read_json()
                if not isinstance(body, dict):
                    self._send_error_json(400, "body must be a JSON object "
                                               "of id to class")
                    return
                self._send_json(200, self.session.submit_labels(body))
            else:
                self._send_error_json(404, f"no such path: {path}")
        except StateConflict as exc:
            self._send_error_json(409, str(exc))
        except (ContractError, SelectionError) as exc:
            self._send_error_json(400, str(exc))


def make_server(session: LabelSession, host: str = "127.0.0.1",
                port: int = 0, static_dir=None) -> ThreadingHTTPServer:
    """Bind the service; port 0 picks a free port (see server.server_address)."""
    handler = type("BoundHandler", (_Handler,),
                   {"session": session, "static_dir": static_dir})
    return ThreadingHTTPServer((host, port), handler)


def serve_forever(session: LabelSession, host: str, port: int,
                  static_dir=None) -> None:
    server = make_server(session, host, port, static_dir)
    try:
        server.serve_forever()
    finally:
        server.server_close()
