"""Bounded-perturbation attacks: iterative sign-gradient ascent inside an
l-infinity ball, a multi-restart wrapper, and a gradient-free random
search used as a masking probe.

All attacks return the final iterate together with the per-example inner
loss achieved there.  Outputs always lie inside the intersection of the
epsilon-ball around the anchor and the data domain, enforced by clamping,
and every random draw comes from the generator the caller passes in, so
fixed stream plus fixed config reproduces the adversarial batch bit for
bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffcore import tape
from .diffcore.network import ScoreNet, check_compatible, forward_var
from .diffcore.tape import Var, as_var, backward
from .losses import LOG_FLOOR, _check_prob_rows, one_hot

Array = np.ndarray

INNER_LOSSES = ("ce_true_label", "ce_teacher_label", "kl_from_clean")


@dataclass(frozen=True)
class AttackConfig:
    """Projected sign-gradient attack settings.

    epsilon: l-infinity radius, >= 0.
    nu: step size, > 0.
    steps: iteration count, >= 0.
    random_start: start uniformly inside the epsilon box instead of at
        the anchor.
    inner_loss: objective the attack ascends; cross-entropy against the
        true label, cross-entropy against a teacher label, or the KL
        divergence from the clean-input probabilities.
    restarts: independent tries kept by best inner loss, >= 1.
    domain: closed interval every coordinate must stay inside.
    """

    epsilon: float
    nu: float
    steps: int
    random_start: bool = True
    inner_loss: str = "ce_true_label"
    restarts: int = 1
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.nu > 0.0:
            raise ValueError(f"nu must be > 0, got {self.nu}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be >= 1, got {self.restarts}")
        if self.inner_loss not in INNER_LOSSES:
            raise ValueError(f"unknown inner loss {self.inner_loss!r}, expected one of {INNER_LOSSES}")
        lo, hi = self.domain
        if not lo <= hi:
            raise ValueError(f"empty domain {self.domain}")


@dataclass
class AdvBatch:
    """Adversarial inputs plus the inner loss achieved per example."""

    x_adv: Array
    loss: Array

    def __post_init__(self):
        self.x_adv = np.asarray(self.x_adv, dtype=np.float64)
        self.loss = np.asarray(self.loss, dtype=np.float64)
        if self.x_adv.shape[0] != self.loss.shape[0]:
            raise ValueError(f"{self.x_adv.shape[0]} rows but {self.loss.shape[0]} losses")


def project_linf(candidate, anchor, epsilon: float, domain: tuple[float, float] = (0.0, 1.0)) -> Array:
    """Clamp into the epsilon box around the anchor, then into the domain.

    Both steps are coordinate-wise clamps, so the result is exact (no
    tolerance) and the projection is idempotent.
    """
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    lo, hi = domain
    if not lo <= hi:
        raise ValueError(f"empty domain {domain}")
    cand = np.asarray(candidate, dtype=np.float64)
    anch = np.asarray(anchor, dtype=np.float64)
    if cand.shape != anch.shape:
        raise ValueError(f"candidate shape {cand.shape} does not match anchor {anch.shape}")
    out = np.clip(cand, anch - epsilon, anch + epsilon)
    return np.clip(out, lo, hi)


def _resolve_reference(cfg: AttackConfig, reference, n: int, n_classes: int):
    if reference is None:
        raise ValueError(f"inner loss {cfg.inner_loss!r} needs a reference, got None")
    if cfg.inner_loss in ("ce_true_label", "ce_teacher_label"):
        labels = np.asarray(reference, dtype=np.int64)
        if labels.shape != (n,):
            raise ValueError(f"expected {n} reference labels, got shape {labels.shape}")
        if labels.min(initial=0) < 0 or labels.max(initial=0) >= n_classes:
            raise ValueError(f"reference labels out of range [0, {n_classes})")
        return one_hot(labels, n_classes)
    rows = _check_prob_rows(np.asarray(reference, dtype=np.float64), "clean probability rows")
    if rows.shape != (n, n_classes):
        raise ValueError(f"expected reference rows of shape {(n, n_classes)}, got {rows.shape}")
    return rows


def _inner_rows(cfg: AttackConfig, logits: Var, ref_rows: Array) -> Var:
    p = tape.softmax_rows(logits)
    if cfg.inner_loss in ("ce_true_label", "ce_teacher_label"):
        return tape.mul(tape.vsum(tape.mul(as_var(ref_rows), tape.log(p, floor=LOG_FLOOR)),
                                  axis=-1), -1.0)
    # ascend the divergence from the fixed clean distribution
    diff = tape.sub(np.log(np.maximum(ref_rows, LOG_FLOOR)), tape.log(p, floor=LOG_FLOOR))
    return tape.vsum(tape.mul(as_var(ref_rows), diff), axis=-1)


def _inner_values(net: ScoreNet, params, cfg: AttackConfig, x: Array, ref_rows: Array) -> Array:
    logits = forward_var(net, params, x)
    return _inner_rows(cfg, logits, ref_rows).value


def _inner_grad(net: ScoreNet, params, cfg: AttackConfig, x: Array, ref_rows: Array) -> Array:
    leaf = Var(x, requires_grad=True)
    rows = _inner_rows(cfg, forward_var(net, params, leaf), ref_rows)
    backward(tape.vsum(rows))
    return leaf.grad if leaf.grad is not None else np.zeros_like(x)


def pgd(net: ScoreNet, params, x, reference, cfg: AttackConfig,
        rng: np.random.Generator | None = None) -> AdvBatch:
    """Iterative sign-gradient ascent, projected after every step.

    Returns the last iterate (not the best seen) with per-example inner
    losses.  sign(0) is 0, so a flat loss surface leaves points where
    they stand.  With steps = 0 and no random start the anchor comes
    back unchanged.
    """
    check_compatible(net, params)
    anchor = np.asarray(x, dtype=np.float64)
    if anchor.ndim != 2:
        raise ValueError(f"expected a 2-d batch, got shape {anchor.shape}")
    ref_rows = _resolve_reference(cfg, reference, anchor.shape[0], net.n_classes)
    if cfg.random_start:
        if rng is None:
            raise ValueError("random_start needs an rng stream")
        start = anchor + rng.uniform(-cfg.epsilon, cfg.epsilon, size=anchor.shape)
        cur = project_linf(start, anchor, cfg.epsilon, cfg.domain)
    else:
        cur = anchor.copy()
    for _ in range(cfg.steps):
        g = _inner_grad(net, params, cfg, cur, ref_rows)
        cur = project_linf(cur + cfg.nu * np.sign(g), anchor, cfg.epsilon, cfg.domain)
    return AdvBatch(x_adv=cur, loss=_inner_values(net, params, cfg, cur, ref_rows))


def multi_restart_pgd(net: ScoreNet, params, x, reference, cfg: AttackConfig,
                      restarts: int, rng: np.random.Generator | None = None) -> AdvBatch:
    """Best-of-restarts attack; per example the iterate with the highest
    inner loss wins, earlier restarts win ties.

    Restarts consume the stream sequentially, so restarts = 1 reproduces a
    single run exactly and adding restarts never loses ground already won
    on the shared stream prefix.
    """
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    best: AdvBatch | None = None
    for _ in range(restarts):
        cand = pgd(net, params, x, reference, cfg, rng)
        if best is None:
            best = AdvBatch(x_adv=cand.x_adv.copy(), loss=cand.loss.copy())
        else:
            improved = cand.loss > best.loss
            best.x_adv[improved] = cand.x_adv[improved]
            best.loss[improved] = cand.loss[improved]
    assert best is not None
    return best


def random_search_attack(net: ScoreNet, params, x, y, epsilon: float, queries: int,
                         rng: np.random.Generator,
                         domain: tuple[float, float] = (0.0, 1.0)) -> AdvBatch:
    """Gradient-free probe: propose random contiguous coordinate blocks
    pushed to the epsilon boundary, keep a proposal only when it strictly
    increases the cross-entropy against the given labels.

    Needs no gradient at all, which makes it a useful cross-check on
    models whose loss surface is saturated.  queries = 0 is the identity.
    """
    check_compatible(net, params)
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    if queries < 0:
        raise ValueError(f"queries must be >= 0, got {queries}")
    anchor = np.asarray(x, dtype=np.float64)
    if anchor.ndim != 2:
        raise ValueError(f"expected a 2-d batch, got shape {anchor.shape}")
    labels = np.asarray(y, dtype=np.int64)
    if labels.shape != (anchor.shape[0],):
        raise ValueError(f"expected {anchor.shape[0]} labels, got shape {labels.shape}")
    probe_cfg = AttackConfig(epsilon=epsilon, nu=max(epsilon, 1e-12), steps=0,
                             random_start=False, inner_loss="ce_true_label", domain=domain)
    ref_rows = one_hot(labels, net.n_classes)
    n, d = anchor.shape
    cur = anchor.copy()
    cur_loss = _inner_values(net, params, probe_cfg, cur, ref_rows)
    coords = np.arange(d)
    max_block = max(1, d // 4)
    for _ in range(queries):
        starts = rng.integers(0, d, size=n)
        lengths = rng.integers(1, max_block + 1, size=n)
        signs = rng.choice(np.array([-1.0, 1.0]), size=n)
        in_block = (coords[None, :] >= starts[:, None]) & (coords[None, :] < (starts + lengths)[:, None])
        proposal = np.where(in_block, anchor + signs[:, None] * epsilon, cur)
        proposal = project_linf(proposal, anchor, epsilon, domain)
        prop_loss = _inner_values(net, params, probe_cfg, proposal, ref_rows)
        improved = prop_loss > cur_loss
        cur[improved] = proposal[improved]
        cur_loss[improved] = prop_loss[improved]
    return AdvBatch(x_adv=cur, loss=cur_loss)
