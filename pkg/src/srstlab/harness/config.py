"""Experiment configuration: flat `key = value` text files.

One dotted key per line, `#` starts a comment, blank lines skipped.
Unknown keys are an error rather than a silent ignore.  Every knob has a
default, so the empty file is a valid experiment.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .. import teacher as teacher_mod
from ..attacks import AttackConfig
from ..losses import AWRConfig
from ..trainer import TrainConfig
from .data import DatasetSpec, SplitSpec
from .evaluation import EvalConfig


def _parse_bool(tok: str) -> bool:
    low = tok.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {tok!r}")


def _parse_int_tuple(tok: str) -> tuple:
    tok = tok.strip()
    if not tok:
        return ()
    return tuple(int(t.strip()) for t in tok.split(","))


def _parse_float_tuple(tok: str) -> tuple:
    tok = tok.strip()
    if not tok:
        return ()
    return tuple(float(t.strip()) for t in tok.split(","))


def _parse_sweep_values(tok: str) -> tuple:
    vals = []
    for t in tok.split(","):
        t = t.strip()
        if not t:
            continue
        try:
            vals.append(float(t))
        except ValueError:
            vals.append(t)
    return tuple(vals)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs, flattened.  Builder methods assemble the
    per-module config objects."""

    # dataset
    source: str = "synthetic_two_moons"
    n_points: int = 1000
    dimension: int = 2
    class_count: int = 2
    noise: float = 0.1
    csv_path: str | None = None
    # split
    test_fraction: float = 0.2
    val_fraction: float = 0.2
    n_labeled: int = 20
    # teacher
    teacher_kind: str = "fixmatch"
    teacher_epochs: int = 120
    teacher_batch: int = 64
    teacher_lr: float = 0.1
    teacher_lr_drops: tuple = (60, 90)
    teacher_lr_factor: float = 0.1
    teacher_momentum: float = 0.9
    teacher_weight_decay: float = 5e-4
    confidence_threshold: float = 0.95
    unlabeled_weight: float = 1.0
    teacher_unlabeled_batch: int = 128
    weak_noise: float = 0.02
    weak_shift: float = 0.02
    strong_noise: float = 0.1
    strong_shift: float = 0.05
    strong_cutout: float = 0.25
    kd_tau: float = 1.2
    # student
    objective: str = "srst_awr"
    epochs: int = 40
    labeled_batch: int = 64
    unlabeled_batch: int = 128
    initial_lr: float = 0.1
    lr_drop_epochs: tuple = (20, 32)
    lr_drop_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    swa_start_epoch: int = 20
    hidden_widths: tuple = (32, 32)
    activation: str = "relu"
    alpha: float = 0.2
    lam: float = 20.0
    gamma: float = 4.0
    beta: float = 0.5
    detach_weight: bool = True
    detach_clean_in_kl: bool = False
    attack_epsilon: float = 0.1
    attack_nu: float = 0.025
    attack_steps: int = 10
    attack_inner_loss: str = "ce_teacher_label"
    selection_steps: int = 10
    # evaluation
    eval_epsilon: float = 0.1
    eval_nu: float | None = None
    eval_pgd_steps: int = 20
    eval_restarts: int = 5
    eval_black_box_queries: int = 200
    # run
    seed: int = 0
    seeds: tuple = (0,)
    preset: str | None = None
    sweep_values: tuple = ()
    kd_mode: str = "soft"
    out_dir: str | None = None
    threads: int = 1

    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(source=self.source, n_points=self.n_points,
                           dimension=self.dimension, class_count=self.class_count,
                           noise=self.noise, csv_path=self.csv_path)

    def split_spec(self) -> SplitSpec:
        return SplitSpec(test_fraction=self.test_fraction, val_fraction=self.val_fraction,
                         n_labeled=self.n_labeled)

    def teacher_config(self) -> teacher_mod.TeacherConfig:
        return teacher_mod.TeacherConfig(
            epochs=self.teacher_epochs, batch_size=self.teacher_batch,
            initial_lr=self.teacher_lr, lr_drop_epochs=self.teacher_lr_drops,
            lr_drop_factor=self.teacher_lr_factor, momentum=self.teacher_momentum,
            weight_decay=self.teacher_weight_decay)

    def fixmatch_config(self) -> teacher_mod.FixMatchConfig:
        return teacher_mod.FixMatchConfig(
            base=self.teacher_config(),
            confidence_threshold=self.confidence_threshold,
            unlabeled_weight=self.unlabeled_weight,
            unlabeled_batch_size=self.teacher_unlabeled_batch,
            weak=teacher_mod.AugmentSpec(noise=self.weak_noise, shift=self.weak_shift),
            strong=teacher_mod.AugmentSpec(noise=self.strong_noise, shift=self.strong_shift,
                                           cutout_fraction=self.strong_cutout))

    def awr_config(self) -> AWRConfig:
        return AWRConfig(alpha=self.alpha, lam=self.lam, gamma=self.gamma,
                         beta=self.beta, tau=self.kd_tau,
                         detach_weight=self.detach_weight,
                         detach_clean_in_kl=self.detach_clean_in_kl)

    def train_config(self, seed: int | None = None) -> TrainConfig:
        atk = AttackConfig(epsilon=self.attack_epsilon, nu=self.attack_nu,
                           steps=self.attack_steps, inner_loss=self.attack_inner_loss)
        sel = AttackConfig(epsilon=self.attack_epsilon, nu=self.attack_nu,
                           steps=self.selection_steps, inner_loss="ce_true_label")
        return TrainConfig(
            objective=self.objective, epochs=self.epochs,
            labeled_batch=self.labeled_batch, unlabeled_batch=self.unlabeled_batch,
            initial_lr=self.initial_lr, lr_drop_epochs=self.lr_drop_epochs,
            lr_drop_factor=self.lr_drop_factor, momentum=self.momentum,
            weight_decay=self.weight_decay, swa_start_epoch=self.swa_start_epoch,
            hidden_widths=self.hidden_widths, activation=self.activation,
            awr=self.awr_config(), attack=atk, selection_attack=sel,
            seed=self.seed if seed is None else seed)

    def eval_config(self) -> EvalConfig:
        return EvalConfig(epsilon=self.eval_epsilon, nu=self.eval_nu,
                          pgd_steps=self.eval_pgd_steps, restarts=self.eval_restarts,
                          black_box_queries=self.eval_black_box_queries)


def _opt_str(tok: str):
    return None if tok.lower() in ("", "none") else tok


def _opt_float(tok: str):
    return None if tok.lower() in ("", "none") else float(tok)


# dotted config key -> (ExperimentConfig field, parser)
KEYS = {
    "dataset.source": ("source", str),
    "dataset.n_points": ("n_points", int),
    "dataset.dimension": ("dimension", int),
    "dataset.class_count": ("class_count", int),
    "dataset.noise": ("noise", float),
    "dataset.csv_path": ("csv_path", _opt_str),
    "split.test_fraction": ("test_fraction", float),
    "split.val_fraction": ("val_fraction", float),
    "split.n_labeled": ("n_labeled", int),
    "teacher.kind": ("teacher_kind", str),
    "teacher.epochs": ("teacher_epochs", int),
    "teacher.batch_size": ("teacher_batch", int),
    "teacher.initial_lr": ("teacher_lr", float),
    "teacher.lr_drop_epochs": ("teacher_lr_drops", _parse_int_tuple),
    "teacher.lr_drop_factor": ("teacher_lr_factor", float),
    "teacher.momentum": ("teacher_momentum", float),
    "teacher.weight_decay": ("teacher_weight_decay", float),
    "teacher.confidence_threshold": ("confidence_threshold", float),
    "teacher.unlabeled_weight": ("unlabeled_weight", float),
    "teacher.unlabeled_batch_size": ("teacher_unlabeled_batch", int),
    "teacher.weak_noise": ("weak_noise", float),
    "teacher.weak_shift": ("weak_shift", float),
    "teacher.strong_noise": ("strong_noise", float),
    "teacher.strong_shift": ("strong_shift", float),
    "teacher.strong_cutout": ("strong_cutout", float),
    "teacher.kd_tau": ("kd_tau", float),
    "train.objective": ("objective", str),
    "train.epochs": ("epochs", int),
    "train.labeled_batch": ("labeled_batch", int),
    "train.unlabeled_batch": ("unlabeled_batch", int),
    "train.initial_lr": ("initial_lr", float),
    "train.lr_drop_epochs": ("lr_drop_epochs", _parse_int_tuple),
    "train.lr_drop_factor": ("lr_drop_factor", float),
    "train.momentum": ("momentum", float),
    "train.weight_decay": ("weight_decay", float),
    "train.swa_start_epoch": ("swa_start_epoch", int),
    "train.hidden_widths": ("hidden_widths", _parse_int_tuple),
    "train.activation": ("activation", str),
    "train.alpha": ("alpha", float),
    "train.lam": ("lam", float),
    "train.gamma": ("gamma", float),
    "train.beta": ("beta", float),
    "train.detach_weight": ("detach_weight", _parse_bool),
    "train.detach_clean_in_kl": ("detach_clean_in_kl", _parse_bool),
    "train.attack_epsilon": ("attack_epsilon", float),
    "train.attack_nu": ("attack_nu", float),
    "train.attack_steps": ("attack_steps", int),
    "train.attack_inner_loss": ("attack_inner_loss", str),
    "train.selection_steps": ("selection_steps", int),
    "eval.epsilon": ("eval_epsilon", float),
    "eval.nu": ("eval_nu", _opt_float),
    "eval.pgd_steps": ("eval_pgd_steps", int),
    "eval.restarts": ("eval_restarts", int),
    "eval.black_box_queries": ("eval_black_box_queries", int),
    "run.seed": ("seed", int),
    "run.seeds": ("seeds", _parse_int_tuple),
    "run.preset": ("preset", _opt_str),
    "run.sweep_values": ("sweep_values", _parse_sweep_values),
    "run.kd_mode": ("kd_mode", str),
    "run.out_dir": ("out_dir", _opt_str),
    "run.threads": ("threads", int),
}


def parse_config_text(text: str, where: str = "<config>") -> dict:
    """Dotted keys to parsed values; unknown keys and malformed lines are
    errors with the line number."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{where}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in KEYS:
            raise ValueError(f"{where}:{lineno}: unknown config key {key!r}")
        field_name, parse = KEYS[key]
        try:
            out[field_name] = parse(value)
        except ValueError as exc:
            raise ValueError(f"{where}:{lineno}: bad value for {key}: {exc}") from None
    return out


def load_config(path: str | None, **overrides) -> ExperimentConfig:
    """Defaults, overlaid by the file when given, overlaid by keyword
    overrides (None overrides are skipped)."""
    values = {}
    if path is not None:
        with open(path) as fh:
            values.update(parse_config_text(fh.read(), where=path))
    for key, val in overrides.items():
        if val is None:
            continue
        if key not in {f.name for f in dataclasses.fields(ExperimentConfig)}:
            raise ValueError(f"unknown override {key!r}")
        values[key] = val
    return ExperimentConfig(**values)
