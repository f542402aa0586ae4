"""Training objectives: smoothed cross-entropy, KL terms, and the
adaptively weighted robustness risks.

The full student risk combines three pieces:

  * label-smoothed cross-entropy on the labeled batch,
  * a distillation term pulling temperature-scaled student probabilities
    on unlabeled points toward the stored teacher rows, weighted by gamma,
  * a robustness term, lambda times the per-example KL divergence between
    the student's clean and adversarial probabilities, with each example
    scaled by an adaptive weight in [0, 1].

The weight blends agreement between teacher and student on the clean
point with disagreement between teacher and student on the adversarial
point, so confidently consistent examples are regularized hardest and
likely-mislabeled ones are damped.

All loss functions return a scalar `Var`; call .item() for the float or
feed them to grad_params / grad_input for exact gradients.  Logs are
clamped at 1e-12 so no objective ever produces -inf or NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import tape
from .diffcore.network import ScoreNet, forward_var, temp_softmax_var
from .diffcore.tape import Var, as_var

Array = np.ndarray

LOG_FLOOR = 1e-12
SIMPLEX_ATOL = 1e-8


@dataclass(frozen=True)
class AWRConfig:
    """Knobs of the adaptively weighted risk.

    alpha: label smoothing in [0, 1).
    lam: robustness regularization weight, >= 0.
    gamma: distillation weight, >= 0.
    beta: mixing of the two weight terms, in [0, 1].
    tau: distillation temperature, > 0.
    detach_weight: treat the adaptive weight as a constant when
        differentiating (default), or let gradients flow through it.
    detach_clean_in_kl: block the gradient through the clean branch of
        the robustness KL, leaving only the adversarial branch.
    """

    alpha: float = 0.2
    lam: float = 20.0
    gamma: float = 4.0
    beta: float = 0.5
    tau: float = 1.2
    detach_weight: bool = True
    detach_clean_in_kl: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if self.lam < 0.0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if not self.tau > 0.0:
            raise ValueError(f"tau must be > 0, got {self.tau}")


def _check_prob_rows(arr: Array, name: str) -> Array:
    rows = np.asarray(arr, dtype=np.float64)
    flat = rows.reshape(-1, rows.shape[-1])
    if flat.min(initial=0.0) < -SIMPLEX_ATOL:
        raise ValueError(f"{name} has negative entries")
    dev = np.abs(flat.sum(axis=-1) - 1.0).max(initial=0.0)
    if dev > SIMPLEX_ATOL:
        raise ValueError(f"{name} rows deviate from the simplex by {dev:.3e}")
    return rows


@dataclass(frozen=True)
class TeacherOutputs:
    """Teacher predictions for a pool of inputs.

    probs: unit-temperature probability rows, (N, C).
    kd_probs: rows at the distillation temperature, (N, C).
    hard_labels: argmax of probs, (N,).
    """

    probs: Array
    kd_probs: Array
    hard_labels: Array

    def __post_init__(self):
        probs = _check_prob_rows(self.probs, "teacher probs")
        kd = _check_prob_rows(self.kd_probs, "teacher kd rows")
        hard = np.asarray(self.hard_labels, dtype=np.int64)
        if probs.shape != kd.shape:
            raise ValueError(f"probs {probs.shape} and kd rows {kd.shape} disagree")
        if hard.shape != (probs.shape[0],):
            raise ValueError(f"hard labels shape {hard.shape} does not match {probs.shape[0]} rows")
        if not np.array_equal(hard, np.argmax(probs, axis=-1)):
            raise ValueError("hard labels are not the argmax of the probability rows")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "kd_probs", kd)
        object.__setattr__(self, "hard_labels", hard)

    @classmethod
    def from_logits(cls, logits: Array, tau: float) -> "TeacherOutputs":
        from .diffcore.network import softmax, temp_softmax
        probs = softmax(logits)
        return cls(probs=probs, kd_probs=temp_softmax(logits, tau),
                   hard_labels=np.argmax(probs, axis=-1))

    @classmethod
    def from_probs(cls, probs: Array, tau: float) -> "TeacherOutputs":
        """Temperature-rescale probability rows directly: p**(1/tau),
        renormalized, which matches softmax(logits / tau) exactly in
        exact arithmetic."""
        probs = _check_prob_rows(probs, "teacher probs")
        powered = np.power(np.maximum(probs, 0.0), 1.0 / tau)
        kd = powered / powered.sum(axis=-1, keepdims=True)
        return cls(probs=probs, kd_probs=kd, hard_labels=np.argmax(probs, axis=-1))

    @classmethod
    def from_onehot(cls, labels: Array, n_classes: int) -> "TeacherOutputs":
        rows = one_hot(labels, n_classes)
        return cls(probs=rows, kd_probs=rows.copy(), hard_labels=np.asarray(labels, dtype=np.int64))

    def take(self, idx: Array) -> "TeacherOutputs":
        return TeacherOutputs(probs=self.probs[idx], kd_probs=self.kd_probs[idx],
                              hard_labels=self.hard_labels[idx])

    def __len__(self) -> int:
        return self.probs.shape[0]


def one_hot(labels, n_classes: int) -> Array:
    y = np.asarray(labels, dtype=np.int64)
    scalar = y.ndim == 0
    y = np.atleast_1d(y)
    if y.min(initial=0) < 0 or y.max(initial=0) >= n_classes:
        raise ValueError(f"labels out of range [0, {n_classes})")
    rows = np.zeros((y.size, n_classes))
    rows[np.arange(y.size), y] = 1.0
    return rows[0] if scalar else rows


def label_smooth(y: int, n_classes: int, alpha: float) -> Array:
    """Smoothed target: (1 - alpha) on the true class plus alpha spread
    uniformly over all classes."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must be in [0, 1), got {alpha}")
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    return (1.0 - alpha) * one_hot(y, n_classes) + alpha / n_classes


def _target_rows(y, n_classes: int, alpha: float) -> Array:
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    base = one_hot(y, n_classes)
    if alpha == 0.0:
        return base
    return (1.0 - alpha) * base + alpha / n_classes


def _ce_rows(logits: Var, target_rows: Array) -> Var:
    """Per-example cross-entropy against fixed target rows."""
    p = tape.softmax_rows(logits)
    return tape.mul(tape.vsum(tape.mul(as_var(target_rows), tape.log(p, floor=LOG_FLOOR)),
                              axis=-1), -1.0)


def _kl_rows(p, q) -> Var:
    """Per-example KL(p || q); either side may be a constant or on the tape."""
    p, q = as_var(p), as_var(q)
    diff = tape.sub(tape.log(p, floor=LOG_FLOOR), tape.log(q, floor=LOG_FLOOR))
    return tape.vsum(tape.mul(p, diff), axis=-1)


def ls_cross_entropy(logits, y, alpha: float) -> Var:
    """Label-smoothed cross-entropy, averaged over the batch.

    Accepts a single logit vector with an integer label or a batch with a
    label array.  alpha = 0 is plain cross-entropy, bit for bit.
    """
    v = as_var(logits)
    if v.value.ndim == 1:
        v = tape.reshape(v, (1, v.value.shape[0]))
    n_classes = v.value.shape[-1]
    targets = _target_rows(y, n_classes, alpha)
    if targets.shape[0] != v.value.shape[0]:
        raise ValueError(f"{targets.shape[0]} labels for {v.value.shape[0]} logit rows")
    return tape.vmean(_ce_rows(v, targets))


def cross_entropy(logits, y) -> Var:
    """Plain cross-entropy, averaged over the batch."""
    return ls_cross_entropy(logits, y, 0.0)


def kl_div(p, q) -> Var:
    """KL divergence between two probability vectors (or row batches,
    averaged).  Inputs must sit on the simplex within 1e-8; logs are
    clamped at 1e-12 so zero entries contribute zero, never NaN."""
    p_arr = p.value if isinstance(p, Var) else np.asarray(p, dtype=np.float64)
    q_arr = q.value if isinstance(q, Var) else np.asarray(q, dtype=np.float64)
    if p_arr.shape != q_arr.shape:
        raise ValueError(f"shape mismatch {p_arr.shape} vs {q_arr.shape}")
    _check_prob_rows(p_arr, "p")
    _check_prob_rows(q_arr, "q")
    rows = _kl_rows(p, q)
    if rows.value.ndim == 0:
        return rows
    return tape.vmean(rows)


def adaptive_weight(teacher_probs, student_clean_probs, student_adv_probs, beta: float) -> Var:
    """Per-example regularization weight in [0, 1].

    beta * <teacher, student on clean> + (1 - beta) * (1 - <teacher,
    student on adversarial>).  The teacher row is evaluated on the clean
    input in both inner products.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    t = as_var(teacher_probs)
    pc = as_var(student_clean_probs)
    pa = as_var(student_adv_probs)
    for name, v in (("teacher", t), ("student clean", pc), ("student adv", pa)):
        _check_prob_rows(v.value, name)
    if not (t.value.shape == pc.value.shape == pa.value.shape):
        raise ValueError(f"shape mismatch {t.value.shape} / {pc.value.shape} / {pa.value.shape}")
    agree_clean = tape.vsum(tape.mul(t, pc), axis=-1)
    agree_adv = tape.vsum(tape.mul(t, pa), axis=-1)
    return tape.add(tape.mul(agree_clean, beta),
                    tape.mul(tape.sub(1.0, agree_adv), 1.0 - beta))


def _adaptive_weight_rows(teacher_rows: Array, p_clean: Var, p_adv: Var, beta: float) -> Var:
    t = as_var(teacher_rows)
    agree_clean = tape.vsum(tape.mul(t, p_clean), axis=-1)
    agree_adv = tape.vsum(tape.mul(t, p_adv), axis=-1)
    return tape.add(tape.mul(agree_clean, beta),
                    tape.mul(tape.sub(1.0, agree_adv), 1.0 - beta))


def _validate_batch(x, name: str) -> Array:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-d batch, got shape {arr.shape}")
    return arr


def srst_awr_risk(labeled_x, labeled_y, unlabeled_x, adv_unlabeled_x,
                  teacher: TeacherOutputs, cfg: AWRConfig,
                  net: ScoreNet, params, *, unit_weight: bool = False) -> Var:
    """Full student risk on one step's batches.

    labeled_x / labeled_y: supervised batch.  unlabeled_x and
    adv_unlabeled_x: the clean unlabeled batch and its adversarial
    counterpart, row-aligned with `teacher`.  With unit_weight the
    adaptive weight is pinned to one (the uniform-regularizer ablation).
    """
    x_l = _validate_batch(labeled_x, "labeled batch")
    x_u = _validate_batch(unlabeled_x, "unlabeled batch")
    x_a = _validate_batch(adv_unlabeled_x, "adversarial batch")
    if x_u.shape != x_a.shape:
        raise ValueError(f"clean/adversarial shapes differ: {x_u.shape} vs {x_a.shape}")
    if len(teacher) != x_u.shape[0]:
        raise ValueError(f"{len(teacher)} teacher rows for {x_u.shape[0]} unlabeled examples")

    logits_l = forward_var(net, params, x_l)
    risk = tape.vmean(_ce_rows(logits_l, _target_rows(labeled_y, net.n_classes, cfg.alpha)))

    logits_u = None
    if cfg.gamma != 0.0:
        logits_u = forward_var(net, params, x_u)
        student_kd = temp_softmax_var(logits_u, cfg.tau)
        kd_term = tape.vmean(_kl_rows(teacher.kd_probs, student_kd))
        risk = tape.add(risk, tape.mul(kd_term, cfg.gamma))

    if cfg.lam != 0.0:
        if logits_u is None:
            logits_u = forward_var(net, params, x_u)
        p_clean = tape.softmax_rows(logits_u)
        p_adv = tape.softmax_rows(forward_var(net, params, x_a))
        kl_clean_side = p_clean.detach() if cfg.detach_clean_in_kl else p_clean
        kl = _kl_rows(kl_clean_side, p_adv)
        if unit_weight:
            reg_rows = kl
        else:
            w = _adaptive_weight_rows(teacher.probs, p_clean, p_adv, cfg.beta)
            if cfg.detach_weight:
                w = w.detach()
            reg_rows = tape.mul(kl, w)
        risk = tape.add(risk, tape.mul(tape.vmean(reg_rows), cfg.lam))
    return risk


def srst_trades_risk(labeled_x, labeled_y, unlabeled_x, adv_unlabeled_x,
                     teacher: TeacherOutputs, cfg: AWRConfig,
                     net: ScoreNet, params) -> Var:
    """Uniform-weight variant of the student risk: same supervised and
    distillation terms, robustness KL averaged without adaptive scaling."""
    x_l = _validate_batch(labeled_x, "labeled batch")
    x_u = _validate_batch(unlabeled_x, "unlabeled batch")
    x_a = _validate_batch(adv_unlabeled_x, "adversarial batch")
    if x_u.shape != x_a.shape:
        raise ValueError(f"clean/adversarial shapes differ: {x_u.shape} vs {x_a.shape}")
    if len(teacher) != x_u.shape[0]:
        raise ValueError(f"{len(teacher)} teacher rows for {x_u.shape[0]} unlabeled examples")

    logits_l = forward_var(net, params, x_l)
    risk = tape.vmean(_ce_rows(logits_l, _target_rows(labeled_y, net.n_classes, cfg.alpha)))
    logits_u = None
    if cfg.gamma != 0.0:
        logits_u = forward_var(net, params, x_u)
        kd_term = tape.vmean(_kl_rows(teacher.kd_probs, temp_softmax_var(logits_u, cfg.tau)))
        risk = tape.add(risk, tape.mul(kd_term, cfg.gamma))
    if cfg.lam != 0.0:
        if logits_u is None:
            logits_u = forward_var(net, params, x_u)
        p_clean = tape.softmax_rows(logits_u)
        p_adv = tape.softmax_rows(forward_var(net, params, x_a))
        kl_clean_side = p_clean.detach() if cfg.detach_clean_in_kl else p_clean
        kl = _kl_rows(kl_clean_side, p_adv)
        risk = tape.add(risk, tape.mul(tape.vmean(kl), cfg.lam))
    return risk


def trades_risk(x, y, x_adv, lam: float, net: ScoreNet, params) -> Var:
    """Clean cross-entropy plus lam times the clean-to-adversarial KL,
    averaged over one combined (labeled plus pseudo-labeled) batch.
    Gradients flow through both KL arguments."""
    if lam < 0.0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    xb = _validate_batch(x, "batch")
    xa = _validate_batch(x_adv, "adversarial batch")
    if xb.shape != xa.shape:
        raise ValueError(f"clean/adversarial shapes differ: {xb.shape} vs {xa.shape}")
    logits = forward_var(net, params, xb)
    risk = tape.vmean(_ce_rows(logits, _target_rows(y, net.n_classes, 0.0)))
    if lam != 0.0:
        p_clean = tape.softmax_rows(logits)
        p_adv = tape.softmax_rows(forward_var(net, params, xa))
        risk = tape.add(risk, tape.mul(tape.vmean(_kl_rows(p_clean, p_adv)), lam))
    return risk


def uat_risk(x_adv, y, lam: float, frozen_ref_probs, net: ScoreNet, params) -> Var:
    """Cross-entropy on adversarial inputs plus lam times the KL from a
    frozen reference model's probability rows to the student's adversarial
    probabilities.  lam = 0 is plain adversarial fine-tuning."""
    if lam < 0.0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    xa = _validate_batch(x_adv, "adversarial batch")
    logits_adv = forward_var(net, params, xa)
    risk = tape.vmean(_ce_rows(logits_adv, _target_rows(y, net.n_classes, 0.0)))
    if lam != 0.0:
        ref = _check_prob_rows(np.asarray(frozen_ref_probs, dtype=np.float64), "reference rows")
        if ref.shape[0] != xa.shape[0]:
            raise ValueError(f"{ref.shape[0]} reference rows for {xa.shape[0]} examples")
        p_adv = tape.softmax_rows(logits_adv)
        risk = tape.add(risk, tape.mul(tape.vmean(_kl_rows(ref, p_adv)), lam))
    return risk
