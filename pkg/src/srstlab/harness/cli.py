"""Command-line entry points.

Subcommands mirror the pipeline stages: split (inspect the data split),
teach (train a teacher, freeze its soft labels), train (train a student
against a store), eval (score a checkpoint), verify-bounds (exact risk
certification sweep), preset (a named experiment grid).  Shared flags:
--config, --seed, --out, --threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .. import oracle, teacher as teacher_mod, trainer
from ..diffcore.network import ScoreNet
from . import data, figures, metrics, presets
from .config import load_config
from .evaluation import MetricsRecord, evaluate


def _shared_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="experiment config file (key = value lines)")
    p.add_argument("--seed", type=int, default=None, help="master seed override")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=None, help="worker threads for grids")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srstlab",
        description="semi-supervised adversarial training laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_split = sub.add_parser("split", help="materialize a dataset split and report counts")
    _shared_flags(p_split)

    p_teach = sub.add_parser("teach", help="train a teacher and export its soft labels")
    _shared_flags(p_teach)

    p_train = sub.add_parser("train", help="train a student objective")
    _shared_flags(p_train)
    p_train.add_argument("--store", default=None,
                         help="existing soft-label store (taught on the fly otherwise)")

    p_eval = sub.add_parser("eval", help="score a trained checkpoint")
    _shared_flags(p_eval)
    p_eval.add_argument("--checkpoint", default=None,
                        help="parameter blob (default: <out>/checkpoint.bin)")

    p_verify = sub.add_parser("verify-bounds",
                              help="exact decomposition and bound checks on random instances")
    _shared_flags(p_verify)
    p_verify.add_argument("--trials", type=int, default=200,
                          help="random instances per family")

    p_preset = sub.add_parser("preset", help="run a named experiment grid")
    _shared_flags(p_preset)
    p_preset.add_argument("name", nargs="?", default=None,
                          help=f"one of {', '.join(sorted(presets.PRESETS))}")
    return parser


def _config(args, **extra):
    overrides = dict(seed=args.seed, out_dir=args.out, threads=args.threads)
    overrides.update(extra)
    return load_config(args.config, **overrides)


def _split_from_config(cfg):
    spec = cfg.dataset_spec()
    x, y = data.load_dataset(spec, cfg.seed)
    return data.make_split(x, y, cfg.split_spec(), cfg.seed, spec.class_count)


def _store_path(out_dir: str) -> str:
    return os.path.join(out_dir, "teacher.rsls")


def cmd_split(args) -> int:
    cfg = _config(args)
    split = _split_from_config(cfg)
    for name, count in split.counts().items():
        print(f"{name}: {count}")
    hist = np.bincount(split.y_labeled, minlength=split.n_classes)
    print("labeled per class:", " ".join(str(int(c)) for c in hist))
    return 0


def cmd_teach(args) -> int:
    cfg = _config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    split = _split_from_config(cfg)
    store, val_acc = presets.build_store(cfg, split, cfg.seed)
    path = _store_path(cfg.out_dir)
    teacher_mod.save_store(store, path)
    print(f"teacher kind={cfg.teacher_kind} val_acc={val_acc:.4f} "
          f"rows={len(store)} -> {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    split = _split_from_config(cfg)
    store = None
    if cfg.objective != "supervised_awr":
        store_path = args.store or _store_path(cfg.out_dir)
        if os.path.exists(store_path):
            store = teacher_mod.load_store(store_path)
        else:
            store, val_acc = presets.build_store(cfg, split, cfg.seed)
            teacher_mod.save_store(store, store_path)
            print(f"taught {cfg.teacher_kind} teacher (val_acc={val_acc:.4f}) "
                  f"-> {store_path}")
    result = trainer.run_training(split, store, cfg.train_config())
    ckpt = os.path.join(cfg.out_dir, "checkpoint.bin")
    trainer.save_checkpoint(ckpt, result.best_params, cfg.train_config(),
                            result.best_epoch, result.best_metric)
    with open(os.path.join(cfg.out_dir, "history.jsonl"), "w") as fh:
        for rec in result.history:
            fh.write(json.dumps(rec) + "\n")
    print(f"objective={cfg.objective} best_epoch={result.best_epoch} "
          f"rob_acc_val={result.best_metric:.4f} -> {ckpt}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    ckpt = args.checkpoint or os.path.join(cfg.out_dir, "checkpoint.bin")
    params, meta = trainer.load_checkpoint(ckpt)
    net = ScoreNet(params.widths(), activation=cfg.activation)
    split = _split_from_config(cfg)
    started = time.perf_counter()
    scores = evaluate(net, params, split.x_test, split.y_test, cfg.eval_config(), cfg.seed)
    rec = MetricsRecord(preset="", method=meta.get("objective", cfg.objective),
                        sweep_param="", sweep_value=None, seed=cfg.seed,
                        wall_seconds=time.perf_counter() - started, **scores)
    metrics.write_metrics([rec], os.path.join(cfg.out_dir, "metrics.jsonl"),
                          os.path.join(cfg.out_dir, "metrics.csv"))
    print(f"method={rec.method} std_acc={rec.std_acc:.4f} "
          f"rob_acc_pgd20={rec.rob_acc_pgd20:.4f} "
          f"multi_restart={rec.rob_acc_multi_restart:.4f} "
          f"black_box={rec.rob_acc_black_box:.4f} masking_gap={rec.masking_gap:+.4f}")
    return 0


def cmd_verify_bounds(args) -> int:
    cfg = _config(args)
    os.makedirs(cfg.out_dir, exist_ok=True)
    figures_dir = os.path.join(cfg.out_dir, "figures")
    os.makedirs(figures_dir, exist_ok=True)
    seeds = range(cfg.seed, cfg.seed + args.trials)
    records = oracle.instance_sweep(seeds) + oracle.binary_sweep(seeds)
    flag_fields = ("decomposition_ok", "bounds_ok", "bounds_alt_ok",
                   "pointwise_ok", "pointwise_binary_equal", "trades_dominates")
    violations = 0
    for rec in records:
        violations += sum(1 for f in flag_fields if f in rec and not rec[f])
    jsonl_path = os.path.join(cfg.out_dir, "bounds.jsonl")
    with open(jsonl_path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    with open(os.path.join(cfg.out_dir, "bounds.csv"), "w") as fh:
        cols = sorted({k for rec in records for k in rec})
        fh.write(",".join(cols) + "\n")
        for rec in records:
            fh.write(",".join("" if rec.get(c) is None else str(rec.get(c, ""))
                              for c in cols) + "\n")
    figures.render_bounds_figure(records, os.path.join(figures_dir, "bounds.png"))
    print(f"instances={len(records)} violations={violations}")
    return 0 if violations == 0 else 1


def cmd_preset(args) -> int:
    name_override = args.name
    cfg = _config(args, preset=name_override)
    if cfg.preset is None:
        print("no preset named: pass a name or set run.preset", file=sys.stderr)
        return 2
    records = presets.run_preset(cfg, cfg.out_dir, threads=cfg.threads)
    by_method = {}
    for rec in records:
        by_method.setdefault(rec["method"], []).append(rec["rob_acc_pgd20"])
    for method in sorted(by_method):
        vals = by_method[method]
        print(f"{cfg.preset} {method}: mean_rob_acc={float(np.mean(vals)):.4f} "
              f"points={len(vals)}")
    return 0


_COMMANDS = {
    "split": cmd_split,
    "teach": cmd_teach,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify-bounds": cmd_verify_bounds,
    "preset": cmd_preset,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
