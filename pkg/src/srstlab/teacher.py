"""Teacher training and frozen soft-label export.

Two ways to obtain a teacher over the same feature space as the student:
supervised training on the labeled pool alone, or a consistency scheme
that additionally self-labels unlabeled points whose weakly-augmented
prediction clears a confidence threshold and then trains the strongly
augmented view against that pseudo-label.

Either way the teacher is consumed downstream only through a
SoftLabelStore: its probabilities on the unlabeled pool at the export
temperature, frozen to disk together with a fingerprint of the exact
inputs they describe.  Training the student then never needs the teacher
network again, and a store computed once is bit-reproducible.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import losses, streams
from .diffcore import network
from .diffcore.network import ParamSet, ScoreNet

Array = np.ndarray

STORE_MAGIC = b"RSLS"
STORE_VERSION = 1
TEACHER_KINDS = ("supervised", "fixmatch")


@dataclass(frozen=True)
class AugmentSpec:
    """Pointwise corruption in [0, 1]^d: uniform noise, a per-example
    scalar shift, and optionally a contiguous cutout block forced to
    0.5.  All-zero spec is the identity."""

    noise: float = 0.0
    shift: float = 0.0
    cutout_fraction: float = 0.0

    def __post_init__(self):
        if self.noise < 0.0 or self.shift < 0.0:
            raise ValueError("noise and shift must be nonnegative")
        if not 0.0 <= self.cutout_fraction <= 1.0:
            raise ValueError(f"cutout_fraction must be in [0, 1], got {self.cutout_fraction}")

    @property
    def is_identity(self) -> bool:
        return self.noise == 0.0 and self.shift == 0.0 and self.cutout_fraction == 0.0


WEAK_DEFAULT = AugmentSpec(noise=0.02, shift=0.02)
STRONG_DEFAULT = AugmentSpec(noise=0.1, shift=0.05, cutout_fraction=0.25)


@dataclass(frozen=True)
class TeacherConfig:
    """Shared optimizer settings for either teacher kind."""

    epochs: int = 40
    batch_size: int = 64
    initial_lr: float = 0.1
    lr_drop_epochs: tuple = (20, 30)
    lr_drop_factor: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-4

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.initial_lr <= 0.0:
            raise ValueError(f"initial_lr must be > 0, got {self.initial_lr}")
        if not 0.0 < self.lr_drop_factor <= 1.0:
            raise ValueError(f"lr_drop_factor must be in (0, 1], got {self.lr_drop_factor}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0.0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")


@dataclass(frozen=True)
class FixMatchConfig:
    """Consistency-training knobs on top of the shared optimizer."""

    base: TeacherConfig = field(default_factory=TeacherConfig)
    confidence_threshold: float = 0.95
    unlabeled_weight: float = 1.0
    unlabeled_batch_size: int = 128
    weak: AugmentSpec = WEAK_DEFAULT
    strong: AugmentSpec = STRONG_DEFAULT

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold <= 1.0:
            raise ValueError("confidence_threshold must be in [0, 1]")
        if self.unlabeled_weight < 0.0:
            raise ValueError("unlabeled_weight must be >= 0")
        if self.unlabeled_batch_size < 1:
            raise ValueError("unlabeled_batch_size must be >= 1")


def augment(x: Array, spec: AugmentSpec, rng: np.random.Generator) -> Array:
    """Apply spec to a batch of rows in [0, 1]^d and clamp back.

    Noise and shift draws are consumed even at scale zero so that two
    specs differing only in scale walk the stream identically.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-d batch, got shape {x.shape}")
    n, d = x.shape
    noise = rng.uniform(-1.0, 1.0, size=(n, d)) * spec.noise
    shift = rng.uniform(-1.0, 1.0, size=(n, 1)) * spec.shift
    out = x + noise + shift
    if spec.cutout_fraction > 0.0 and d > 0:
        width = max(1, int(round(spec.cutout_fraction * d)))
        starts = rng.integers(0, max(1, d - width + 1), size=n)
        cols = np.arange(d)
        mask = (cols >= starts[:, None]) & (cols < (starts + width)[:, None])
        out = np.where(mask, 0.5, out)
    return np.clip(out, 0.0, 1.0)


def _sgd_step(params: ParamSet, grads: ParamSet, lr: float, buf: ParamSet,
              momentum: float, weight_decay: float) -> tuple[ParamSet, ParamSet]:
    # local import: the trainer owns the optimizer contract
    from .trainer import sgd_step
    return sgd_step(params, grads, lr, buf, momentum=momentum, weight_decay=weight_decay)


def _lr_at(epoch: int, cfg: TeacherConfig) -> float:
    drops = sum(1 for e in cfg.lr_drop_epochs if epoch >= e)
    return cfg.initial_lr * cfg.lr_drop_factor ** drops


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train_supervised_teacher(x: Array, y: Array, net: ScoreNet, cfg: TeacherConfig,
                             seed: int) -> ParamSet:
    """Plain cross-entropy training on the labeled pool."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y row counts differ")
    init_rng = streams.stream(seed, "init", 0)
    batch_rng = streams.stream(seed, "batch-order", 0)
    params = network.init_params(net, init_rng)
    buf = network.zeros_like_params(params)
    for epoch in range(cfg.epochs):
        lr = _lr_at(epoch, cfg)
        for idx in _epoch_batches(x.shape[0], cfg.batch_size, batch_rng):
            xb, yb = x[idx], y[idx]
            grads = network.grad_params(
                net, params,
                lambda layers: losses.cross_entropy(network.forward_var(net, layers, xb), yb))
            params, buf = _sgd_step(params, grads, lr, buf, cfg.momentum, cfg.weight_decay)
    return params


def train_fixmatch_teacher(x_l: Array, y_l: Array, x_u: Array, net: ScoreNet,
                           cfg: FixMatchConfig, seed: int) -> ParamSet:
    """Supervised loss on labeled rows plus confidence-masked consistency
    on unlabeled rows: the strongly augmented view is trained toward the
    argmax prediction on the weakly augmented view whenever that
    prediction's top probability clears the threshold."""
    x_l = np.asarray(x_l, dtype=np.float64)
    y_l = np.asarray(y_l, dtype=np.int64)
    x_u = np.asarray(x_u, dtype=np.float64)
    if x_l.shape[0] != y_l.shape[0]:
        raise ValueError("labeled x and y row counts differ")
    if x_u.ndim != 2 or (x_u.shape[0] > 0 and x_u.shape[1] != x_l.shape[1]):
        raise ValueError("unlabeled rows must share the labeled feature dimension")
    base = cfg.base
    init_rng = streams.stream(seed, "init", 0)
    batch_rng = streams.stream(seed, "batch-order", 0)
    aug_rng = streams.stream(seed, "augmentation", 0)
    params = network.init_params(net, init_rng)
    buf = network.zeros_like_params(params)
    n_u = x_u.shape[0]
    for epoch in range(base.epochs):
        lr = _lr_at(epoch, base)
        for idx in _epoch_batches(x_l.shape[0], base.batch_size, batch_rng):
            xb, yb = x_l[idx], y_l[idx]
            if n_u > 0:
                u_idx = batch_rng.integers(0, n_u, size=cfg.unlabeled_batch_size)
                weak = augment(x_u[u_idx], cfg.weak, aug_rng)
                strong = augment(x_u[u_idx], cfg.strong, aug_rng)
                probs_weak = network.softmax(network.forward_logits(net, params, weak))
                pseudo = np.argmax(probs_weak, axis=1)
                mask = np.max(probs_weak, axis=1) > cfg.confidence_threshold
                strong_kept = strong[mask]
                pseudo_kept = pseudo[mask]
            else:
                strong_kept = np.zeros((0, x_l.shape[1]))
                pseudo_kept = np.zeros(0, dtype=np.int64)

            def batch_loss(layers):
                loss = losses.cross_entropy(network.forward_var(net, layers, xb), yb)
                if strong_kept.shape[0] > 0:
                    from .diffcore import tape
                    u_loss = losses.cross_entropy(
                        network.forward_var(net, layers, strong_kept), pseudo_kept)
                    loss = tape.add(loss, tape.mul(cfg.unlabeled_weight, u_loss))
                return loss

            grads = network.grad_params(net, params, batch_loss)
            params, buf = _sgd_step(params, grads, lr, buf, base.momentum, base.weight_decay)
    return params


def standard_accuracy(net: ScoreNet, params: ParamSet, x: Array, y: Array) -> float:
    if x.shape[0] == 0:
        raise ValueError("cannot score an empty batch")
    pred = network.predict(network.forward_logits(net, params, x))
    return float(np.mean(pred == np.asarray(y, dtype=np.int64)))


def dataset_fingerprint(x: Array) -> bytes:
    """sha256 over the exact little-endian float64 bytes of the rows, so
    a store can refuse inputs it was not computed on."""
    x = np.ascontiguousarray(np.asarray(x, dtype="<f8"))
    if x.ndim != 2:
        raise ValueError(f"expected a 2-d batch, got shape {x.shape}")
    h = hashlib.sha256()
    h.update(b"RS01")
    h.update(struct.pack("<II", x.shape[0], x.shape[1]))
    h.update(x.tobytes())
    return h.digest()


@dataclass(frozen=True)
class SoftLabelStore:
    """Frozen teacher outputs on one fixed unlabeled pool.

    kd_probs holds the export-temperature rows used for distillation;
    probs holds the plain temperature-1 rows used for adaptive weights
    and hard pseudo-labels.  fingerprint ties both to the exact feature
    rows they were computed on.
    """

    fingerprint: bytes
    kd_probs: Array
    probs: Array
    tau: float
    kind: str = "supervised"
    seed: int = 0
    held_out_accuracy: float | None = None

    def __post_init__(self):
        if len(self.fingerprint) != 32:
            raise ValueError("fingerprint must be 32 bytes")
        if self.kind not in TEACHER_KINDS:
            raise ValueError(f"unknown teacher kind {self.kind!r}, expected one of {TEACHER_KINDS}")
        if self.tau <= 0.0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        kd = np.asarray(self.kd_probs, dtype=np.float64)
        p = np.asarray(self.probs, dtype=np.float64)
        if kd.shape != p.shape or kd.ndim != 2:
            raise ValueError("kd_probs and probs must be 2-d with identical shapes")
        for name, rows in (("kd_probs", kd), ("probs", p)):
            if rows.size and (rows.min() < 0.0
                              or np.abs(rows.sum(axis=1) - 1.0).max() > losses.SIMPLEX_ATOL):
                raise ValueError(f"{name} rows must lie on the simplex")
        object.__setattr__(self, "kd_probs", kd)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return self.probs.shape[0]

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]

    def hard_labels(self) -> Array:
        return np.argmax(self.probs, axis=1)

    def require_match(self, x: Array):
        if dataset_fingerprint(x) != self.fingerprint:
            raise ValueError("soft-label store was computed on different data")

    def as_teacher_outputs(self, idx=None) -> "losses.TeacherOutputs":
        out = losses.TeacherOutputs(probs=self.probs, kd_probs=self.kd_probs,
                                    hard_labels=self.hard_labels())
        return out if idx is None else out.take(idx)


def export_soft_labels(net: ScoreNet, params: ParamSet, x_unlabeled: Array, tau: float,
                       kind: str = "supervised", seed: int = 0,
                       held_out_accuracy: float | None = None) -> SoftLabelStore:
    logits = network.forward_logits(net, params, np.asarray(x_unlabeled, dtype=np.float64))
    return SoftLabelStore(
        fingerprint=dataset_fingerprint(x_unlabeled),
        kd_probs=network.temp_softmax(logits, tau),
        probs=network.softmax(logits),
        tau=float(tau),
        kind=kind,
        seed=int(seed),
        held_out_accuracy=held_out_accuracy,
    )


def hard_label_store(store: SoftLabelStore) -> SoftLabelStore:
    """One-hot copy of a store: distillation from it reduces to plain
    cross-entropy on pseudo-labels.  Used to measure what the soft rows
    add."""
    one_hot = losses.one_hot(store.hard_labels(), store.n_classes)
    return dataclasses.replace(store, kd_probs=one_hot, probs=one_hot)


def save_store(store: SoftLabelStore, path: str):
    """Binary rows plus a JSON sidecar (same path + '.meta.json') for the
    scalar metadata."""
    n, C = store.probs.shape
    blob = bytearray()
    blob += STORE_MAGIC
    blob += struct.pack("<B", STORE_VERSION)
    blob += store.fingerprint
    blob += struct.pack("<II", n, C)
    blob += np.ascontiguousarray(store.kd_probs, dtype="<f8").tobytes()
    blob += np.ascontiguousarray(store.probs, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))
    meta = {
        "tau": store.tau,
        "kind": store.kind,
        "seed": store.seed,
        "held_out_accuracy": store.held_out_accuracy,
    }
    with open(path + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_store(path: str) -> SoftLabelStore:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != STORE_MAGIC:
        raise ValueError(f"{path}: not a soft-label store")
    version = struct.unpack_from("<B", blob, 4)[0]
    if version != STORE_VERSION:
        raise ValueError(f"{path}: unsupported store version {version}")
    fingerprint = blob[5:37]
    n, C = struct.unpack_from("<II", blob, 37)
    offset = 45
    row_bytes = n * C * 8
    if len(blob) != offset + 2 * row_bytes:
        raise ValueError(f"{path}: truncated or oversized store payload")
    kd = np.frombuffer(blob, dtype="<f8", count=n * C, offset=offset).reshape(n, C)
    p = np.frombuffer(blob, dtype="<f8", count=n * C, offset=offset + row_bytes).reshape(n, C)
    meta_path = path + ".meta.json"
    meta = {"tau": 1.0, "kind": "supervised", "seed": 0, "held_out_accuracy": None}
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta.update(json.load(fh))
    return SoftLabelStore(fingerprint=fingerprint, kd_probs=kd.copy(), probs=p.copy(),
                          tau=float(meta["tau"]), kind=str(meta["kind"]),
                          seed=int(meta["seed"]), held_out_accuracy=meta["held_out_accuracy"])
