"""Command line front end.

Subcommands: run, ablate, gen-data, score-dump, serve.  Diagnostics go to
stderr; stdout carries only machine-readable artifact paths or URLs.  Exit
codes: 0 success, 1 runtime failure, 2 invalid configuration or arguments,
3 missing or unreadable dataset.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import (ABLATION_FLAGS, TrainConfig, apply_overrides,
                     config_snapshot, parse_config_file)
from .datagen import save_csv
from .engine import dataset_from_config, run_experiment
from .errors import ConfigError, ParseError
from .networks import load_bundle
from .pools import PoolState
from .acquisition import dump_scores, score_unlabeled

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_DATASET = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="malkit",
        description="Desk-scale active learning with adversarial "
                    "entropy training.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_strategy=True):
        p.add_argument("--config", help="key=value config file")
        if with_strategy:
            p.add_argument("--strategy",
                           choices=("mal", "random", "entropy", "kcenter"))
            p.add_argument("--splits", type=int)
            p.add_argument("--budget", type=float)
            p.add_argument("--seeds", help="comma-separated, e.g. 0,1,2")
            p.add_argument("--flags", default="",
                           help="comma-separated ablation flags: "
                                + ",".join(ABLATION_FLAGS))
        p.add_argument("--out-dir", help="artifact directory "
                                         "(fallback: $MALKIT_OUT_DIR)")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel seed workers")
        p.add_argument("overrides", nargs="*",
                       help="config overrides as key=value")

    p_run = sub.add_parser("run", help="run one strategy across seeds")
    common(p_run)

    p_ablate = sub.add_parser("ablate",
                              help="run the mal strategy with ablation flags")
    common(p_ablate)

    p_gen = sub.add_parser("gen-data", help="write the configured dataset "
                                            "as CSV")
    p_gen.add_argument("--config")
    p_gen.add_argument("--out", required=True, help="output .csv path")
    p_gen.add_argument("overrides", nargs="*")

    p_score = sub.add_parser("score-dump",
                             help="score the unlabeled pool of a checkpoint")
    p_score.add_argument("--checkpoint", required=True)
    p_score.add_argument("--config")
    p_score.add_argument("--out", required=True, help="output .csv path")
    p_score.add_argument("overrides", nargs="*")

    p_serve = sub.add_parser("serve", help="start the labeling service")
    p_serve.add_argument("--config")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8321)
    p_serve.add_argument("--static-dir", help="directory of UI files to serve")
    p_serve.add_argument("--audit-log", help="audit log path (JSON lines)")
    p_serve.add_argument("overrides", nargs="*")

    return parser


def _config_from_args(args) -> TrainConfig:
    cfg = parse_config_file(args.config) if args.config else TrainConfig()
    pairs = []
    if getattr(args, "strategy", None):
        pairs.append(f"strategy={args.strategy}")
    if getattr(args, "splits", None) is not None:
        pairs.append(f"splits={args.splits}")
    if getattr(args, "budget", None) is not None:
        pairs.append(f"budget={args.budget!r}")
    if getattr(args, "seeds", None):
        pairs.append(f"seeds={args.seeds}")
    for flag in _parse_flags(getattr(args, "flags", "")):
        pairs.append(f"{flag}=true")
    pairs.extend(args.overrides or [])
    return apply_overrides(cfg, pairs).validate()


def _parse_flags(text: str) -> list[str]:
    flags = [f.strip() for f in (text or "").split(",") if f.strip()]
    for f in flags:
        if f not in ABLATION_FLAGS:
            raise ConfigError(f"unknown ablation flag {f!r}, expected one "
                              f"of {ABLATION_FLAGS}")
    return flags


def _out_dir(args) -> str:
    out = args.out_dir or os.environ.get("MALKIT_OUT_DIR")
    if not out:
        raise ConfigError("no output directory: pass --out-dir or set "
                          "MALKIT_OUT_DIR")
    return out


def _cmd_run(args, force_mal: bool = False) -> int:
    cfg = _config_from_args(args)
    if force_mal:
        if cfg.strategy != "mal":
            cfg = apply_overrides(cfg, ["strategy=mal"]).validate()
        if cfg.ablation_name() == "full":
            print("ablate: no --flags given, running the full model",
                  file=sys.stderr)
    out_dir = _out_dir(args)
    record = run_experiment(cfg, out_dir=out_dir, jobs=args.jobs)
    for name in sorted(os.listdir(out_dir)):
        print(os.path.join(out_dir, name))
    print(f"{cfg.strategy_label()}: final mean accuracy "
          f"{record.final_mean_accuracy():.4f} over seeds "
          f"{list(cfg.seeds)}", file=sys.stderr)
    return EXIT_OK


def _cmd_gen_data(args) -> int:
    cfg = _config_from_args(args)
    dataset = dataset_from_config(cfg)
    save_csv(dataset, args.out)
    meta = {"n": dataset.n, "n_classes": dataset.n_classes,
            "input_dim": dataset.input_dim,
            "test_ids": [int(i) for i in dataset.test_ids]}
    meta_path = args.out + ".meta.json"
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(args.out)
    print(meta_path)
    return EXIT_OK


def _cmd_score_dump(args) -> int:
    cfg = _config_from_args(args)
    bundle = load_bundle(args.checkpoint)
    dataset = dataset_from_config(cfg)
    labeled = [int(i) for i in bundle.meta.get("labeled_ids", [])]
    labeled_set = set(labeled)
    train_ids = tuple(int(i) for i in dataset.train_ids)
    missing = labeled_set - set(train_ids)
    if missing:
        raise ConfigError(f"checkpoint labels ids missing from the dataset: "
                          f"{sorted(missing)[:5]}...")
    pool = PoolState(features=dataset.features,
                     true_labels=np.asarray(dataset.labels),
                     all_ids=train_ids,
                     labeled_ids=tuple(labeled),
                     unlabeled_ids=tuple(i for i in train_ids
                                         if i not in labeled_set),
                     revealed_labels={i: int(dataset.labels[i])
                                      for i in labeled},
                     split_history=((0, tuple(labeled)),))
    scores = score_unlabeled(bundle.encoder, bundle.classifier,
                             bundle.discriminator, pool)
    dump_scores(scores, args.out)
    print(args.out)
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .labelserve import LabelSession, serve_forever

    cfg = _config_from_args(args)
    session = LabelSession(cfg, audit_path=args.audit_log)
    print(f"http://{args.host}:{args.port}")
    sys.stdout.flush()
    print(f"serving {session.dataset.name}: {session.pool.n_labeled} labeled, "
          f"{session.pool.n_unlabeled} unlabeled, budget {session.budget}",
          file=sys.stderr)
    serve_forever(session, args.host, args.port, static_dir=args.static_dir)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "ablate":
            return _cmd_run(args, force_mal=True)
        if args.command == "gen-data":
            return _cmd_gen_data(args)
        if args.command == "score-dump":
            return _cmd_score_dump(args)
        if args.command == "serve":
            return _cmd_serve(args)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATASET
    except KeyboardInterrupt:
        return EXIT_OK
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
