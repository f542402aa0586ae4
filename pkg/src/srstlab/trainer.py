"""Student training loop shared by every objective.

One loop covers the semi-supervised methods and their supervised
ablation; they differ only in which rows get attacked and which risk the
gradient is taken of, so the dispatch lives in one place and everything
else (batching, SGD with momentum and weight decay, the stepwise lr
schedule, weight averaging, robust model selection) is common.

Objectives:

  srst_awr        distillation + adaptively weighted smoothing on
                  unlabeled rows
  srst_trades     same composition with the weight pinned to one
  trades_rst      pseudo-labeled clean CE + unweighted smoothing on the
                  combined batch
  uat_pp          CE on attacked combined rows + anchoring to frozen
                  teacher probabilities
  supervised_awr  the awr objective with the labeled pool standing in
                  for the unlabeled one and one-hot teacher rows

Reproducibility: all randomness flows through named streams derived from
cfg.seed, and train plus selection attacks consume a single attack
stream sequentially, so a rerun is bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import attacks, losses, streams
from .attacks import AttackConfig
from .diffcore import network
from .diffcore.network import ParamSet, ScoreNet
from .losses import AWRConfig

Array = np.ndarray

OBJECTIVES = ("srst_awr", "srst_trades", "trades_rst", "uat_pp", "supervised_awr")

_UNLABELED_OBJECTIVES = ("srst_awr", "srst_trades", "trades_rst", "uat_pp")


def default_train_attack() -> AttackConfig:
    return AttackConfig(epsilon=0.1, nu=0.025, steps=10, inner_loss="ce_teacher_label")


def default_selection_attack() -> AttackConfig:
    return AttackConfig(epsilon=0.1, nu=0.025, steps=10, inner_loss="ce_true_label")


@dataclass(frozen=True)
class TrainConfig:
    objective: str = "srst_awr"
    epochs: int = 200
    labeled_batch: int = 64
    unlabeled_batch: int = 128
    initial_lr: float = 0.1
    lr_drop_epochs: tuple = (50, 150)
    lr_drop_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4
    swa_start_epoch: int = 50
    hidden_widths: tuple = (32, 32)
    activation: str = "relu"
    awr: AWRConfig = field(default_factory=AWRConfig)
    attack: AttackConfig = field(default_factory=default_train_attack)
    selection_attack: AttackConfig = field(default_factory=default_selection_attack)
    seed: int = 0

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}, expected one of {OBJECTIVES}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.labeled_batch < 1 or self.unlabeled_batch < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.initial_lr <= 0.0:
            raise ValueError(f"initial_lr must be > 0, got {self.initial_lr}")
        if not 0.0 < self.lr_drop_factor <= 1.0:
            raise ValueError(f"lr_drop_factor must be in (0, 1], got {self.lr_drop_factor}")
        if any(e < 0 for e in self.lr_drop_epochs):
            raise ValueError("lr_drop_epochs must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.swa_start_epoch < 0:
            raise ValueError(f"swa_start_epoch must be >= 0, got {self.swa_start_epoch}")

    def config_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Learning rate in force during the given zero-indexed epoch."""
    if epoch < 0 or epoch >= max(cfg.epochs, 1):
        raise ValueError(f"epoch {epoch} outside schedule of length {cfg.epochs}")
    drops = sum(1 for e in cfg.lr_drop_epochs if epoch >= e)
    return cfg.initial_lr * cfg.lr_drop_factor ** drops


def sgd_step(params: ParamSet, grads: ParamSet, lr: float, momentum_buf: ParamSet,
             momentum: float = 0.9, weight_decay: float = 5e-4) -> tuple[ParamSet, ParamSet]:
    """Heavy-ball update with decoupled-from-nothing weight decay folded
    into the gradient:

        buf <- momentum * buf + (g + wd * p)
        p   <- p - lr * buf

    Returns fresh (params, buffer); inputs are never mutated.
    """
    if params.widths() != grads.widths() or params.widths() != momentum_buf.widths():
        raise ValueError("params, grads, and momentum buffer must share one shape")
    new_layers = []
    new_buf = []
    for (W, b), (gW, gb), (mW, mb) in zip(params.layers, grads.layers, momentum_buf.layers):
        bW = momentum * mW + (gW + weight_decay * W)
        bb = momentum * mb + (gb + weight_decay * b)
        new_buf.append((bW, bb))
        new_layers.append((W - lr * bW, b - lr * bb))
    return ParamSet(new_layers), ParamSet(new_buf)


def swa_update(avg: ParamSet, new: ParamSet, n_averaged: int) -> ParamSet:
    """Running arithmetic mean: avg holds n_averaged members already."""
    if n_averaged < 1:
        raise ValueError(f"n_averaged must be >= 1, got {n_averaged}")
    if avg.widths() != new.widths():
        raise ValueError("averaged and incoming parameters must share one shape")
    out = []
    for (aW, ab), (nW, nb) in zip(avg.layers, new.layers):
        out.append(((n_averaged * aW + nW) / (n_averaged + 1),
                    (n_averaged * ab + nb) / (n_averaged + 1)))
    return ParamSet(out)


def select_best(history: list) -> tuple[int, float]:
    """Epoch with the highest robust validation accuracy, earliest on
    ties."""
    if not history:
        raise ValueError("history is empty, nothing to select")
    best_epoch, best_metric = -1, -math.inf
    for rec in history:
        if rec["rob_acc_val"] > best_metric:
            best_epoch, best_metric = rec["epoch"], rec["rob_acc_val"]
    return best_epoch, best_metric


@dataclass
class TrainResult:
    net: ScoreNet
    best_params: ParamSet
    best_epoch: int
    best_metric: float
    final_params: ParamSet
    swa_params: ParamSet | None
    history: list
    batch_losses: list


def _clean_probs(net, params, x: Array) -> Array:
    return network.softmax(network.forward_logits(net, params, x))


def _attack_reference(inner_loss: str, hard_labels: Array, net, params, x: Array):
    if inner_loss in ("ce_true_label", "ce_teacher_label"):
        return hard_labels
    if inner_loss == "kl_from_clean":
        return _clean_probs(net, params, x)
    raise ValueError(f"unknown inner loss {inner_loss!r}")


def _run_attack(net, params, x: Array, hard_labels: Array, cfg: AttackConfig,
                rng: np.random.Generator) -> Array:
    ref = _attack_reference(cfg.inner_loss, hard_labels, net, params, x)
    if cfg.restarts > 1:
        return attacks.multi_restart_pgd(net, params, x, ref, cfg, cfg.restarts, rng).x_adv
    return attacks.pgd(net, params, x, ref, cfg, rng).x_adv


def robust_accuracy(net, params, x: Array, y: Array, cfg: AttackConfig,
                    rng: np.random.Generator) -> float:
    """Accuracy on the attacked batch; the attack always targets the true
    labels regardless of cfg.inner_loss semantics elsewhere."""
    if x.shape[0] == 0:
        raise ValueError("cannot score an empty batch")
    x_adv = _run_attack(net, params, x, np.asarray(y, dtype=np.int64), cfg, rng)
    pred = network.predict(network.forward_logits(net, params, x_adv))
    return float(np.mean(pred == np.asarray(y, dtype=np.int64)))


def standard_accuracy(net, params, x: Array, y: Array) -> float:
    if x.shape[0] == 0:
        raise ValueError("cannot score an empty batch")
    pred = network.predict(network.forward_logits(net, params, x))
    return float(np.mean(pred == np.asarray(y, dtype=np.int64)))


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _combined_teacher_rows(y_l: Array, store, u_idx: Array, n_classes: int):
    """Hard labels and probability rows for a labeled+unlabeled batch:
    true one-hots where labels exist, store rows elsewhere."""
    probs = np.vstack([losses.one_hot(y_l, n_classes), store.probs[u_idx]])
    hard = np.concatenate([np.asarray(y_l, dtype=np.int64), store.hard_labels()[u_idx]])
    return hard, probs


def run_training(split, store, cfg: TrainConfig) -> TrainResult:
    """Train one student per cfg.objective.

    split must expose x_labeled, y_labeled, x_unlabeled, x_val, y_val,
    and n_classes; store holds the frozen teacher rows over x_unlabeled
    (ignored by supervised_awr, required otherwise).

    Per epoch: one pass over labeled rows in a fresh permutation, an
    unlabeled batch drawn with replacement alongside each labeled batch,
    then validation (standard plus robust under the selection attack)
    using the weight average once it has started.  The returned best
    checkpoint maximizes robust validation accuracy, earliest epoch on
    ties.
    """
    x_l = np.asarray(split.x_labeled, dtype=np.float64)
    y_l = np.asarray(split.y_labeled, dtype=np.int64)
    n_classes = int(split.n_classes)
    if cfg.objective == "supervised_awr":
        x_u = x_l
    else:
        x_u = np.asarray(split.x_unlabeled, dtype=np.float64)
        if x_u.shape[0] == 0:
            raise ValueError(f"objective {cfg.objective!r} needs unlabeled rows")
        if store is None:
            raise ValueError(f"objective {cfg.objective!r} needs a soft-label store")
        store.require_match(x_u)
        if store.n_classes != n_classes:
            raise ValueError("store and split disagree on the class count")
    if x_l.shape[0] == 0:
        raise ValueError("labeled pool is empty")
    if cfg.epochs > 0 and np.asarray(split.x_val).shape[0] == 0:
        raise ValueError("validation split is empty, model selection is impossible")

    net = ScoreNet((x_l.shape[1], *cfg.hidden_widths, n_classes), activation=cfg.activation)
    init_rng = streams.stream(cfg.seed, "init", 0)
    batch_rng = streams.stream(cfg.seed, "batch-order", 0)
    attack_rng = streams.stream(cfg.seed, "attack-start", 0)

    params = network.init_params(net, init_rng)
    buf = network.zeros_like_params(params)
    swa_params: ParamSet | None = None
    swa_count = 0
    history: list = []
    batch_losses: list = []
    best_epoch, best_metric = -1, -math.inf
    best_params = params.copy()

    n_u = x_u.shape[0]
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        epoch_losses = []
        for idx in _epoch_batches(x_l.shape[0], cfg.labeled_batch, batch_rng):
            xb, yb = x_l[idx], y_l[idx]
            u_idx = batch_rng.integers(0, n_u, size=cfg.unlabeled_batch)
            xu = x_u[u_idx]

            if cfg.objective in ("srst_awr", "srst_trades", "supervised_awr"):
                if cfg.objective == "supervised_awr":
                    teacher_b = losses.TeacherOutputs.from_onehot(y_l[u_idx], n_classes)
                else:
                    teacher_b = store.as_teacher_outputs(u_idx)
                x_adv = _run_attack(net, params, xu, teacher_b.hard_labels,
                                    cfg.attack, attack_rng)
                if cfg.objective == "srst_trades":
                    def closure(layers, xb=xb, yb=yb, xu=xu, x_adv=x_adv, tb=teacher_b):
                        return losses.srst_trades_risk(xb, yb, xu, x_adv, tb,
                                                       cfg.awr, net, layers)
                else:
                    def closure(layers, xb=xb, yb=yb, xu=xu, x_adv=x_adv, tb=teacher_b):
                        return losses.srst_awr_risk(xb, yb, xu, x_adv, tb,
                                                    cfg.awr, net, layers)
            elif cfg.objective == "trades_rst":
                hard, _ = _combined_teacher_rows(yb, store, u_idx, n_classes)
                x_comb = np.vstack([xb, xu])
                x_adv = _run_attack(net, params, x_comb, hard, cfg.attack, attack_rng)

                def closure(layers, x_comb=x_comb, hard=hard, x_adv=x_adv):
                    return losses.trades_risk(x_comb, hard, x_adv, cfg.awr.lam, net, layers)
            elif cfg.objective == "uat_pp":
                hard, ref_rows = _combined_teacher_rows(yb, store, u_idx, n_classes)
                x_comb = np.vstack([xb, xu])
                x_adv = _run_attack(net, params, x_comb, hard, cfg.attack, attack_rng)

                def closure(layers, hard=hard, ref_rows=ref_rows, x_adv=x_adv):
                    return losses.uat_risk(x_adv, hard, cfg.awr.lam, ref_rows, net, layers)
            else:
                raise AssertionError(cfg.objective)

            loss_box = {}

            def traced(layers, closure=closure, loss_box=loss_box):
                v = closure(layers)
                loss_box["value"] = float(v.value)
                return v

            grads = network.grad_params(net, params, traced)
            params, buf = sgd_step(params, grads, lr, buf,
                                   momentum=cfg.momentum, weight_decay=cfg.weight_decay)
            epoch_losses.append(loss_box["value"])

        if epoch >= cfg.swa_start_epoch:
            if swa_params is None:
                swa_params, swa_count = params.copy(), 1
            else:
                swa_params = swa_update(swa_params, params, swa_count)
                swa_count += 1
        eval_params = swa_params if swa_params is not None else params
        std_acc = standard_accuracy(net, eval_params, split.x_val, split.y_val)
        rob_acc = robust_accuracy(net, eval_params, split.x_val, split.y_val,
                                  cfg.selection_attack, attack_rng)
        history.append({
            "epoch": epoch,
            "lr": lr,
            "train_loss": float(np.mean(epoch_losses)) if epoch_losses else math.nan,
            "std_acc_val": std_acc,
            "rob_acc_val": rob_acc,
            "swa_active": swa_params is not None,
        })
        batch_losses.extend(epoch_losses)
        if rob_acc > best_metric:
            best_epoch, best_metric = epoch, rob_acc
            best_params = eval_params.copy()

    return TrainResult(
        net=net,
        best_params=best_params,
        best_epoch=best_epoch,
        best_metric=best_metric,
        final_params=params,
        swa_params=swa_params,
        history=history,
        batch_losses=batch_losses,
    )


def save_checkpoint(path: str, params: ParamSet, cfg: TrainConfig, epoch: int,
                    selection_metric: float):
    """Parameter blob plus a JSON sidecar tying it to the run."""
    network.save_params(params, path)
    meta = {
        "epoch": int(epoch),
        "seed": cfg.seed,
        "objective": cfg.objective,
        "config_hash": cfg.config_hash(),
        "selection_metric": float(selection_metric),
    }
    with open(path + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str) -> tuple[ParamSet, dict]:
    params = network.load_params(path)
    try:
        with open(path + ".meta.json") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        meta = {}
    return params, meta
