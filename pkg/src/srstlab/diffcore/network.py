"""Score networks: fully connected float64 classifiers and their gradients.

A `ScoreNet` describes the architecture (layer widths, hidden activation);
a `ParamSet` holds weights and biases.  Forward evaluation, softmax
(plain and temperature-scaled), hard prediction, and exact reverse-mode
gradients with respect to parameters or inputs are exported here, along
with a binary checkpoint format that round-trips parameters bit-exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import tape
from .tape import Var, as_var, backward

Array = np.ndarray

ACTIVATIONS = ("relu", "tanh")

CHECKPOINT_MAGIC = b"RSLB"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ScoreNet:
    """Architecture of a fully connected classifier.

    layer_widths runs input dimension, hidden widths, class count.  Zero
    hidden layers (a linear scorer) are allowed; the class count must be
    at least 2.
    """

    layer_widths: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError(f"need at least input and output widths, got {self.layer_widths}")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError(f"layer widths must be positive, got {self.layer_widths}")
        if self.layer_widths[-1] < 2:
            raise ValueError(f"class count must be >= 2, got {self.layer_widths[-1]}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}, expected one of {ACTIVATIONS}")

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def n_classes(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_affine(self) -> int:
        return len(self.layer_widths) - 1


@dataclass
class ParamSet:
    """Weights and biases, one (W, b) pair per affine layer.

    W has shape (fan_in, fan_out), b has shape (fan_out,).  The same
    structure is reused for gradients and optimizer state.
    """

    layers: list = field(default_factory=list)

    def copy(self) -> "ParamSet":
        return ParamSet([(np.array(W, dtype=np.float64), np.array(b, dtype=np.float64))
                         for W, b in self.layers])

    def widths(self) -> tuple[int, ...]:
        if not self.layers:
            return ()
        return tuple([self.layers[0][0].shape[0]] + [W.shape[1] for W, _ in self.layers])

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in self.layers)

    def allclose(self, other: "ParamSet", atol: float = 0.0) -> bool:
        if len(self.layers) != len(other.layers):
            return False
        for (W, b), (W2, b2) in zip(self.layers, other.layers):
            if W.shape != W2.shape or b.shape != b2.shape:
                return False
            if not (np.allclose(W, W2, rtol=0.0, atol=atol) and np.allclose(b, b2, rtol=0.0, atol=atol)):
                return False
        return True


def zeros_like_params(params: ParamSet) -> ParamSet:
    return ParamSet([(np.zeros_like(W), np.zeros_like(b)) for W, b in params.layers])


def init_params(net: ScoreNet, rng: np.random.Generator) -> ParamSet:
    """Scaled Gaussian init (fan-in scaling, doubled for relu), zero biases."""
    gain = 2.0 if net.activation == "relu" else 1.0
    layers = []
    for fan_in, fan_out in zip(net.layer_widths[:-1], net.layer_widths[1:]):
        std = np.sqrt(gain / fan_in)
        W = rng.normal(0.0, std, size=(fan_in, fan_out))
        b = np.zeros(fan_out)
        layers.append((W, b))
    return ParamSet(layers)


def check_compatible(net: ScoreNet, params: ParamSet) -> None:
    want = net.layer_widths
    got = params.widths()
    if want != got:
        raise ValueError(f"parameter widths {got} do not match architecture {want}")


def _layers(params) -> list:
    return params.layers if isinstance(params, ParamSet) else list(params)


def forward_var(net: ScoreNet, params, x) -> Var:
    """Tape forward pass; accepts ParamSet or a list of (Var, Var) leaves."""
    layers = _layers(params)
    h = as_var(x)
    if h.value.ndim != 2:
        raise ValueError(f"forward expects a 2-d batch, got shape {h.value.shape}")
    if h.value.shape[1] != net.input_dim:
        raise ValueError(f"input width {h.value.shape[1]} does not match net input {net.input_dim}")
    act = tape.relu if net.activation == "relu" else tape.tanh
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        h = tape.add(tape.matmul(h, as_var(W)), as_var(b))
        if i != last:
            h = act(h)
    return h


def _as_batch(x) -> tuple[Array, bool]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise ValueError(f"expected a vector or a batch, got shape {arr.shape}")


def forward_logits(net: ScoreNet, params: ParamSet, x) -> Array:
    """Scores for one input vector or a batch of them."""
    check_compatible(net, params)
    batch, squeeze = _as_batch(x)
    out = forward_var(net, params, batch).value
    if not np.isfinite(out).all():
        raise FloatingPointError("non-finite logits")
    return out[0] if squeeze else out


def softmax(logits) -> Array:
    """Probability rows along the last axis; max-subtracted, never NaN."""
    arr = np.asarray(logits, dtype=np.float64)
    if arr.shape[-1] < 2:
        raise ValueError(f"softmax needs at least 2 classes, got shape {arr.shape}")
    out = tape.softmax_rows(arr).value
    if not np.isfinite(out).all():
        raise FloatingPointError("non-finite softmax output")
    return out


def temp_softmax(logits, tau: float) -> Array:
    """softmax(logits / tau); tau > 0."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    arr = np.asarray(logits, dtype=np.float64)
    return softmax(arr / tau)


def temp_softmax_var(logits, tau: float) -> Var:
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    return tape.softmax_rows(tape.mul(as_var(logits), 1.0 / tau))


def predict(logits) -> Array:
    """Hard labels: argmax along the last axis, ties to the lowest index."""
    arr = np.asarray(logits, dtype=np.float64)
    return np.argmax(arr, axis=-1)


def grad_params(net: ScoreNet, params: ParamSet, loss_closure) -> ParamSet:
    """Exact gradient of a scalar loss with respect to every parameter.

    loss_closure receives a list of (W, b) Var leaves usable wherever a
    ParamSet is accepted, and must return a scalar (a size-1 Var).
    Parameters the loss never touches get zero gradient.
    """
    check_compatible(net, params)
    leaves = [(Var(W, requires_grad=True), Var(b, requires_grad=True))
              for W, b in params.layers]
    out = as_var(loss_closure(leaves))
    if out.value.size != 1:
        raise ValueError(f"loss closure must return a scalar, got shape {out.value.shape}")
    backward(out)
    grads = []
    for (Wv, bv), (W, b) in zip(leaves, params.layers):
        gW = Wv.grad if Wv.grad is not None else np.zeros_like(W)
        gb = bv.grad if bv.grad is not None else np.zeros_like(b)
        grads.append((np.array(gW), np.array(gb)))
    return ParamSet(grads)


def grad_input(net: ScoreNet, params: ParamSet, loss_closure, x) -> Array:
    """Exact gradient of a scalar loss with respect to an input batch.

    loss_closure receives the input leaf Var and must return a scalar.
    """
    check_compatible(net, params)
    batch, squeeze = _as_batch(x)
    leaf = Var(batch, requires_grad=True)
    out = as_var(loss_closure(leaf))
    if out.value.size != 1:
        raise ValueError(f"loss closure must return a scalar, got shape {out.value.shape}")
    backward(out)
    g = leaf.grad if leaf.grad is not None else np.zeros_like(batch)
    return g[0] if squeeze else g


def save_params(params: ParamSet, path) -> None:
    """Binary checkpoint: magic, version byte, layer count, per-layer dims,
    then all weights and biases as little-endian float64."""
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<B", CHECKPOINT_VERSION)
    blob += struct.pack("<I", len(params.layers))
    for W, b in params.layers:
        blob += struct.pack("<II", W.shape[0], W.shape[1])
    for W, b in params.layers:
        blob += np.ascontiguousarray(W, dtype="<f8").tobytes()
        blob += np.ascontiguousarray(b, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load_params(path) -> ParamSet:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic {blob[:4]!r}")
    version = blob[4]
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (n_layers,) = struct.unpack_from("<I", blob, 5)
    offset = 9
    dims = []
    for _ in range(n_layers):
        fan_in, fan_out = struct.unpack_from("<II", blob, offset)
        dims.append((fan_in, fan_out))
        offset += 8
    layers = []
    for fan_in, fan_out in dims:
        W = np.frombuffer(blob, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += fan_in * fan_out * 8
        b = np.frombuffer(blob, dtype="<f8", count=fan_out, offset=offset)
        offset += fan_out * 8
        layers.append((W.reshape(fan_in, fan_out).astype(np.float64),
                       b.astype(np.float64)))
    if offset != len(blob):
        raise ValueError(f"checkpoint has {len(blob) - offset} trailing bytes")
    return ParamSet(layers)
