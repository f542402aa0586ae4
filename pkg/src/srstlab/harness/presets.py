"""Named experiment grids and the resumable runner behind them.

A preset is a sweep (one config knob, a few values) crossed with a list
of method rows and the configured seeds.  Each grid point trains its
teacher and student from scratch under the point's own seed, evaluates
on the held-out test rows, and persists one metrics record.

Point records land in out/points/ first, one file per point written
atomically, so an interrupted run resumes where it stopped and a
finished point is never recomputed.  Teacher parameters are cached per
(kind, seed, labeled-pool) key since sweeps over student knobs reuse
them.  Aggregation then rewrites metrics.jsonl/metrics.csv, a wide
per-sweep-value table, and a rendered figure; the delimited files stay
the record of truth.

Persisted preset records carry wall_seconds = None: timing varies run to
run and would break byte-for-byte reproducibility of the metrics files,
so it goes to run.log instead.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import teacher as teacher_mod
from .. import trainer
from ..diffcore import network
from ..diffcore.network import ScoreNet
from . import data, figures, metrics
from .config import ExperimentConfig
from .evaluation import MetricsRecord, evaluate


@dataclass(frozen=True)
class MethodRow:
    name: str
    objective: str
    teacher_kind: str = "fixmatch"


@dataclass(frozen=True)
class Preset:
    name: str
    sweep_param: str
    default_values: tuple
    methods: tuple


PRESETS = {
    "fig1_labels": Preset(
        name="fig1_labels",
        sweep_param="n_labeled",
        default_values=(10, 20, 50),
        methods=(
            MethodRow("srst_awr", "srst_awr", "fixmatch"),
            MethodRow("trades_rst", "trades_rst", "supervised"),
            MethodRow("uat_pp", "uat_pp", "supervised"),
        ),
    ),
    "fig2_lambda": Preset(
        name="fig2_lambda",
        sweep_param="lam",
        default_values=(1.0, 5.0, 20.0, 50.0),
        methods=(
            MethodRow("srst_awr", "srst_awr", "fixmatch"),
            MethodRow("srst_trades", "srst_trades", "fixmatch"),
            MethodRow("trades_rst", "trades_rst", "supervised"),
        ),
    ),
    "tab5_kd": Preset(
        name="tab5_kd",
        sweep_param="kd_mode",
        default_values=("soft", "hard"),
        methods=(MethodRow("srst_awr", "srst_awr", "fixmatch"),),
    ),
    "sec432_weight": Preset(
        name="sec432_weight",
        sweep_param="lam",
        default_values=(5.0, 20.0),
        methods=(
            MethodRow("srst_awr", "srst_awr", "fixmatch"),
            MethodRow("srst_trades", "srst_trades", "fixmatch"),
        ),
    ),
    "appc3_beta": Preset(
        name="appc3_beta",
        sweep_param="beta",
        default_values=(0.0, 0.25, 0.5, 0.75, 1.0),
        methods=(MethodRow("srst_awr", "srst_awr", "fixmatch"),),
    ),
    "appc4_tau": Preset(
        name="appc4_tau",
        sweep_param="kd_tau",
        default_values=(1.0, 1.2, 2.0, 5.0),
        methods=(MethodRow("srst_awr", "srst_awr", "fixmatch"),),
    ),
}

_SWEEP_FIELDS = {
    "n_labeled": ("n_labeled", int),
    "lam": ("lam", float),
    "beta": ("beta", float),
    "kd_tau": ("kd_tau", float),
    "kd_mode": ("kd_mode", str),
}


def sweep_values_for(preset: Preset, cfg: ExperimentConfig) -> tuple:
    _, coerce = _SWEEP_FIELDS[preset.sweep_param]
    raw = cfg.sweep_values if cfg.sweep_values else preset.default_values
    return tuple(coerce(v) for v in raw)


def point_config(cfg: ExperimentConfig, preset: Preset, method: MethodRow,
                 value) -> ExperimentConfig:
    field, coerce = _SWEEP_FIELDS[preset.sweep_param]
    return dataclasses.replace(cfg, objective=method.objective,
                               teacher_kind=method.teacher_kind,
                               **{field: coerce(value)})


def _teacher_cache_key(cfg: ExperimentConfig, seed: int) -> str:
    affects = {
        "source": cfg.source, "n_points": cfg.n_points, "dimension": cfg.dimension,
        "class_count": cfg.class_count, "noise": cfg.noise, "csv_path": cfg.csv_path,
        "test_fraction": cfg.test_fraction, "val_fraction": cfg.val_fraction,
        "n_labeled": cfg.n_labeled, "kind": cfg.teacher_kind,
        "teacher": dataclasses.asdict(cfg.fixmatch_config()),
        "hidden_widths": list(cfg.hidden_widths), "activation": cfg.activation,
    }
    digest = hashlib.sha256(json.dumps(affects, sort_keys=True).encode()).hexdigest()[:10]
    return f"{cfg.teacher_kind}_s{seed}_n{cfg.n_labeled}_{digest}"


def _train_teacher(cfg: ExperimentConfig, split: data.DataSplit, net: ScoreNet,
                   seed: int) -> network.ParamSet:
    if cfg.teacher_kind == "supervised":
        return teacher_mod.train_supervised_teacher(
            split.x_labeled, split.y_labeled, net, cfg.teacher_config(), seed)
    if cfg.teacher_kind == "fixmatch":
        return teacher_mod.train_fixmatch_teacher(
            split.x_labeled, split.y_labeled, split.x_unlabeled, net,
            cfg.fixmatch_config(), seed)
    raise ValueError(f"unknown teacher kind {cfg.teacher_kind!r}")


def build_store(cfg: ExperimentConfig, split: data.DataSplit, seed: int,
                cache_dir: str | None = None):
    """Teacher soft labels for the split's unlabeled pool, via the
    parameter cache when a directory is given.  Returns (store, teacher
    validation accuracy)."""
    net = ScoreNet((split.x_labeled.shape[1], *cfg.hidden_widths, split.n_classes),
                   activation=cfg.activation)
    params = None
    if cache_dir is not None:
        path = os.path.join(cache_dir, _teacher_cache_key(cfg, seed) + ".bin")
        if os.path.exists(path):
            params = network.load_params(path)
    if params is None:
        params = _train_teacher(cfg, split, net, seed)
        if cache_dir is not None:
            os.makedirs(cache_dir, exist_ok=True)
            tmp = path + ".tmp"
            network.save_params(params, tmp)
            os.replace(tmp, path)
    val_acc = teacher_mod.standard_accuracy(net, params, split.x_val, split.y_val)
    store = teacher_mod.export_soft_labels(net, params, split.x_unlabeled, cfg.kd_tau,
                                           kind=cfg.teacher_kind, seed=seed,
                                           held_out_accuracy=val_acc)
    if cfg.kd_mode == "hard":
        store = teacher_mod.hard_label_store(store)
    return store, val_acc


def run_point(cfg: ExperimentConfig, seed: int, preset_name: str = "",
              method_name: str = "", sweep_param: str = "", sweep_value=None,
              teacher_cache: str | None = None) -> MetricsRecord:
    """Full pipeline for one grid point: data, teacher, student, test
    metrics."""
    spec = cfg.dataset_spec()
    x, y = data.load_dataset(spec, seed)
    split = data.make_split(x, y, cfg.split_spec(), seed, spec.class_count)
    if cfg.objective == "supervised_awr":
        store = None
    else:
        store, _ = build_store(cfg, split, seed, cache_dir=teacher_cache)
    result = trainer.run_training(split, store, cfg.train_config(seed))
    scores = evaluate(result.net, result.best_params, split.x_test, split.y_test,
                      cfg.eval_config(), seed)
    return MetricsRecord(preset=preset_name, method=method_name or cfg.objective,
                         sweep_param=sweep_param, sweep_value=sweep_value, seed=seed,
                         wall_seconds=None, **scores)


def _point_id(method: str, param: str, value, seed: int) -> str:
    token = str(value).replace(os.sep, "-").replace(" ", "")
    return f"{method}__{param}_{token}__s{seed}"


def _write_atomic_text(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _wide_table_path(out_dir: str, preset: Preset) -> str:
    return os.path.join(out_dir, f"plot_{preset.name}.csv")


def _write_wide_table(records: list, preset: Preset, values: tuple, out_dir: str):
    """One row per sweep value, mean over seeds per method and metric."""
    methods = [m.name for m in preset.methods]
    lines = []
    header = [preset.sweep_param]
    for m in methods:
        header += [f"{m}_std_acc", f"{m}_rob_acc"]
    lines.append(",".join(header))
    for v in values:
        cells = [str(v)]
        for m in methods:
            pts = [r for r in records if r["method"] == m and r["sweep_value"] == v]
            for field in ("std_acc", "rob_acc_pgd20"):
                cells.append(repr(float(np.mean([r[field] for r in pts]))) if pts else "")
        lines.append(",".join(cells))
    _write_atomic_text(_wide_table_path(out_dir, preset), "\n".join(lines) + "\n")


def run_preset(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> list:
    """Run (or resume) every grid point of cfg.preset, then aggregate.

    Outputs under out_dir: points/*.jsonl (one record each),
    teachers/*.bin (parameter cache), metrics.jsonl + metrics.csv,
    plot_<preset>.csv, figures/<preset>.png, run.log.
    """
    if cfg.preset not in PRESETS:
        raise ValueError(f"unknown preset {cfg.preset!r}, expected one of {sorted(PRESETS)}")
    preset = PRESETS[cfg.preset]
    values = sweep_values_for(preset, cfg)
    seeds = cfg.seeds if cfg.seeds else (cfg.seed,)
    points_dir = os.path.join(out_dir, "points")
    teachers_dir = os.path.join(out_dir, "teachers")
    figures_dir = os.path.join(out_dir, "figures")
    for d in (out_dir, points_dir, teachers_dir, figures_dir):
        os.makedirs(d, exist_ok=True)
    log_path = os.path.join(out_dir, "run.log")

    grid = [(method, value, seed)
            for method in preset.methods for value in values for seed in seeds]

    def compute(task):
        method, value, seed = task
        pid = _point_id(method.name, preset.sweep_param, value, seed)
        path = os.path.join(points_dir, pid + ".jsonl")
        if os.path.exists(path):
            return metrics.read_metrics(path)[0], pid, None
        pcfg = point_config(cfg, preset, method, value)
        started = time.perf_counter()
        rec = run_point(pcfg, seed, preset_name=preset.name, method_name=method.name,
                        sweep_param=preset.sweep_param, sweep_value=value,
                        teacher_cache=teachers_dir)
        elapsed = time.perf_counter() - started
        d = rec.as_dict()
        line = json.dumps({k: d[k] for k in metrics.FIELD_ORDER})
        _write_atomic_text(path, line + "\n")
        return d, pid, elapsed

    results = []
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(compute, grid))
    else:
        results = [compute(task) for task in grid]

    with open(log_path, "a") as log:
        for _, pid, elapsed in results:
            status = "cached" if elapsed is None else f"{elapsed:.2f}s"
            log.write(f"{preset.name} {pid} {status}\n")

    records = [rec for rec, _, _ in results]
    metrics.write_metrics(records, os.path.join(out_dir, "metrics.jsonl"),
                          os.path.join(out_dir, "metrics.csv"))
    _write_wide_table(records, preset, values, out_dir)
    figures.render_sweep_figure(records, os.path.join(figures_dir, f"{preset.name}.png"),
                                preset.name, preset.sweep_param)
    return records
