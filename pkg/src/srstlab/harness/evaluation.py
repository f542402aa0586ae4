"""Test-time scoring of a trained checkpoint.

One call produces every reported number: standard accuracy, robust
accuracy under the reporting attack and under its multi-restart
strengthening, a gradient-free random-search accuracy, and the masking
gap between the last two.  The single-run and multi-restart attacks are
seeded from identically derived streams, so the first restart replays
the single run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .. import attacks, streams, trainer
from ..attacks import AttackConfig
from ..diffcore import network

Array = np.ndarray

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EvalConfig:
    epsilon: float = 0.1
    nu: float | None = None
    pgd_steps: int = 20
    restarts: int = 5
    black_box_queries: int = 200

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.nu is not None and self.nu <= 0.0:
            raise ValueError(f"nu must be > 0, got {self.nu}")
        if self.pgd_steps < 0:
            raise ValueError(f"pgd_steps must be >= 0, got {self.pgd_steps}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.black_box_queries < 0:
            raise ValueError(f"black_box_queries must be >= 0, got {self.black_box_queries}")

    def resolve_nu(self) -> float:
        return self.nu if self.nu is not None else self.epsilon / 4.0

    def attack_config(self) -> AttackConfig:
        return AttackConfig(epsilon=self.epsilon, nu=self.resolve_nu(),
                            steps=self.pgd_steps, inner_loss="ce_true_label")


@dataclass(frozen=True)
class MetricsRecord:
    """Flat record, one per (method, sweep value, seed).  wall_seconds is
    None in persisted preset outputs so reruns are byte-identical."""

    preset: str
    method: str
    sweep_param: str
    sweep_value: object
    seed: int
    n_test: int
    std_acc: float
    rob_acc_pgd20: float
    rob_acc_multi_restart: float
    rob_acc_black_box: float
    masking_gap: float
    wall_seconds: float | None = None
    schema: int = SCHEMA_VERSION

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def evaluate(net, params, x: Array, y: Array, cfg: EvalConfig, master_seed: int) -> dict:
    """Accuracy block for one parameter set on one test batch."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty batch")
    atk = cfg.attack_config()
    std_acc = trainer.standard_accuracy(net, params, x, y)
    rob_single = trainer.robust_accuracy(net, params, x, y, atk,
                                         streams.stream(master_seed, "attack-start", 1))
    multi = attacks.multi_restart_pgd(net, params, x, y, atk, cfg.restarts,
                                      streams.stream(master_seed, "attack-start", 1))
    pred_multi = network.predict(network.forward_logits(net, params, multi.x_adv))
    rob_multi = float(np.mean(pred_multi == y))
    bb = attacks.random_search_attack(net, params, x, y, atk.epsilon,
                                      cfg.black_box_queries,
                                      streams.stream(master_seed, "attack-start", 2))
    pred_bb = network.predict(network.forward_logits(net, params, bb.x_adv))
    rob_bb = float(np.mean(pred_bb == y))
    return {
        "n_test": int(x.shape[0]),
        "std_acc": std_acc,
        "rob_acc_pgd20": rob_single,
        "rob_acc_multi_restart": rob_multi,
        "rob_acc_black_box": rob_bb,
        "masking_gap": rob_bb - rob_single,
    }
