"""Dense feed-forward networks with hand-rolled reverse-mode gradients.

Just enough machinery for a deterministic actor-critic stack: affine
layers with ReLU hidden activations, an identity or tanh output head,
exact parameter *and input* gradients (the actor trains through the
critic's input gradient), Adam with bias correction, Polyak target
averaging, and a stable little-endian binary checkpoint format. All math
is float64 numpy; there is no general autodiff and no GPU.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    CheckpointError,
    ShapeError,
    TapeError,
    TrainingDivergenceError,
    ValidationError,
)

HEADS = ("identity", "tanh")


@dataclass
class DenseNet:
    """A multilayer perceptron: affine-ReLU hidden layers plus a head.

    ``version`` increments on every in-place parameter update so stale
    gradient tapes can be detected.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head: str = "identity"
    version: int = 0

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def bump(self) -> None:
        self.version += 1


def init_dense(sizes: Sequence[int], head: str = "identity", rng=None) -> DenseNet:
    """Seeded uniform init: each layer draws from U[-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    if head not in HEADS:
        raise ValidationError(f"head must be one of {HEADS}, got {head!r}")
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValidationError(f"need at least [in, out] positive layer sizes, got {sizes}")
    if rng is None:
        rng = np.random.default_rng()
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, fan_out))
    return DenseNet(weights=weights, biases=biases, head=head)


def clone_net(net: DenseNet) -> DenseNet:
    return DenseNet(
        weights=[w.copy() for w in net.weights],
        biases=[b.copy() for b in net.biases],
        head=net.head,
    )


@dataclass
class Tape:
    """Recorded forward pass; consumed by :func:`backward`."""

    net: DenseNet
    version: int
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]
    output: np.ndarray
    squeezed: bool


@dataclass
class Gradients:
    """Parameter gradients plus the gradient w.r.t. the network input."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray


def _as_batch(net: DenseNet, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    squeezed = x.ndim == 1
    if squeezed:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.sizes[0]:
        raise ShapeError(f"input shape {x.shape} does not match network input {net.sizes[0]}")
    return x, squeezed


def _apply_head(net: DenseNet, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if net.head == "tanh" else z


def forward(net: DenseNet, x) -> np.ndarray:
    """Batch forward pass; a 1-D input returns a 1-D output."""
    batch, squeezed = _as_batch(net, x)
    a = batch
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        a = _apply_head(net, z) if l == last else np.maximum(z, 0.0)
    return a[0] if squeezed else a


def forward_tape(net: DenseNet, x) -> tuple[np.ndarray, Tape]:
    """Forward pass recording everything :func:`backward` needs."""
    batch, squeezed = _as_batch(net, x)
    pre, acts = [], [batch]
    a = batch
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        pre.append(z)
        a = _apply_head(net, z) if l == last else np.maximum(z, 0.0)
        acts.append(a)
    tape = Tape(
        net=net,
        version=net.version,
        inputs=batch,
        pre_activations=pre,
        activations=acts,
        output=a,
        squeezed=squeezed,
    )
    return (a[0] if squeezed else a), tape


def backward(net: DenseNet, tape: Tape, upstream) -> Gradients:
    """Exact reverse-mode gradients for the recorded batch.

    ``upstream`` is dLoss/dOutput with the output's shape; the returned
    parameter gradients are for the same scalar loss (no extra batch
    averaging is applied here).
    """
    if tape.net is not net:
        raise TapeError("tape was recorded on a different network")
    if tape.version != net.version:
        raise TapeError("tape is stale: parameters changed since the forward pass")
    upstream = np.asarray(upstream, dtype=float)
    if tape.squeezed and upstream.ndim == 1:
        upstream = upstream[None, :]
    if upstream.shape != tape.output.shape:
        raise ShapeError(
            f"upstream shape {upstream.shape} does not match output {tape.output.shape}"
        )
    n_layers = len(net.weights)
    grad_w = [np.empty(0)] * n_layers
    grad_b = [np.empty(0)] * n_layers
    if net.head == "tanh":
        delta = upstream * (1.0 - tape.output**2)
    else:
        delta = upstream
    for l in range(n_layers - 1, -1, -1):
        a_prev = tape.activations[l]
        grad_w[l] = a_prev.T @ delta
        grad_b[l] = delta.sum(axis=0)
        delta = delta @ net.weights[l].T
        if l > 0:
            delta = delta * (tape.pre_activations[l - 1] > 0.0)
    inputs_grad = delta[0] if tape.squeezed else delta
    return Gradients(weights=grad_w, biases=grad_b, inputs=inputs_grad)


# -- optimization ------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators for one network."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m_weights: list[np.ndarray] = field(default_factory=list)
    v_weights: list[np.ndarray] = field(default_factory=list)
    m_biases: list[np.ndarray] = field(default_factory=list)
    v_biases: list[np.ndarray] = field(default_factory=list)


def adam_init(net: DenseNet, lr: float) -> AdamState:
    if lr <= 0:
        raise ValidationError(f"learning rate must be positive, got {lr}")
    return AdamState(
        lr=lr,
        m_weights=[np.zeros_like(w) for w in net.weights],
        v_weights=[np.zeros_like(w) for w in net.weights],
        m_biases=[np.zeros_like(b) for b in net.biases],
        v_biases=[np.zeros_like(b) for b in net.biases],
    )


def adam_step(net: DenseNet, grads: Gradients, state: AdamState) -> None:
    """One in-place Adam update with bias-corrected moments."""
    for g in grads.weights + grads.biases:
        if not np.isfinite(g).all():
            raise TrainingDivergenceError("non-finite gradient in Adam step")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    params = net.weights + net.biases
    gradients = grads.weights + grads.biases
    moments_m = state.m_weights + state.m_biases
    moments_v = state.v_weights + state.v_biases
    for p, g, m, v in zip(params, gradients, moments_m, moments_v):
        if p.shape != g.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    net.bump()


def polyak_update(target: DenseNet, online: DenseNet, tau: float) -> None:
    """In-place soft update: target <- (1 - tau) * target + tau * online."""
    if not 0.0 < tau <= 1.0:
        raise ValidationError(f"tau must be in (0, 1], got {tau}")
    if target.sizes != online.sizes or target.head != online.head:
        raise ShapeError("polyak update needs identically shaped networks")
    for t, o in zip(target.weights + target.biases, online.weights + online.biases):
        t *= 1.0 - tau
        t += tau * o
    target.bump()


# -- checkpoint container -----------------------------------------------------

_MAGIC = b"SGBCKPT1"


def write_checkpoint(path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named float64 tensors plus JSON metadata, deterministically.

    Layout: 8-byte magic, little-endian u64 header length, UTF-8 JSON
    header (sorted keys) listing tensor names/shapes and carrying
    ``meta``, then the raw little-endian float64 buffers in name order.
    """
    names = sorted(tensors)
    header = {
        "format_version": 1,
        "meta": meta or {},
        "tensors": [{"name": n, "shape": list(tensors[n].shape)} for n in names],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for name in names:
            fh.write(np.ascontiguousarray(tensors[name], dtype="<f8").tobytes())


def read_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back tensors and metadata written by :func:`write_checkpoint`."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if len(blob) < len(_MAGIC) + 8 or blob[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (header_len,) = struct.unpack_from("<Q", blob, len(_MAGIC))
    start = len(_MAGIC) + 8
    try:
        header = json.loads(blob[start : start + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from None
    if header.get("format_version") != 1:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")
    tensors: dict[str, np.ndarray] = {}
    offset = start + header_len
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated tensor {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(
            blob, dtype="<f8", count=count, offset=offset
        ).reshape(shape).copy()
        offset = end
    if offset != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after tensors")
    return tensors, header["meta"]


def net_tensors(prefix: str, net: DenseNet) -> dict[str, np.ndarray]:
    out = {}
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        out[f"{prefix}.w{i}"] = w
        out[f"{prefix}.b{i}"] = b
    return out


def net_from_tensors(prefix: str, tensors: dict[str, np.ndarray], head: str) -> DenseNet:
    weights, biases = [], []
    i = 0
    while f"{prefix}.w{i}" in tensors:
        weights.append(tensors[f"{prefix}.w{i}"].copy())
        biases.append(tensors[f"{prefix}.b{i}"].copy())
        i += 1
    if not weights:
        raise CheckpointError(f"checkpoint holds no tensors under {prefix!r}")
    return DenseNet(weights=weights, biases=biases, head=head)


def adam_tensors(prefix: str, state: AdamState) -> dict[str, np.ndarray]:
    out = {}
    for i in range(len(state.m_weights)):
        out[f"{prefix}.mw{i}"] = state.m_weights[i]
        out[f"{prefix}.vw{i}"] = state.v_weights[i]
        out[f"{prefix}.mb{i}"] = state.m_biases[i]
        out[f"{prefix}.vb{i}"] = state.v_biases[i]
    return out


def adam_from_tensors(prefix: str, tensors: dict[str, np.ndarray], lr: float, step: int) -> AdamState:
    state = AdamState(lr=lr, step=step)
    i = 0
    while f"{prefix}.mw{i}" in tensors:
        state.m_weights.append(tensors[f"{prefix}.mw{i}"].copy())
        state.v_weights.append(tensors[f"{prefix}.vw{i}"].copy())
        state.m_biases.append(tensors[f"{prefix}.mb{i}"].copy())
        state.v_biases.append(tensors[f"{prefix}.vb{i}"].copy())
        i += 1
    if not state.m_weights:
        raise CheckpointError(f"checkpoint holds no optimizer state under {prefix!r}")
    return state


def save_net(path: str | Path, net: DenseNet, meta: dict | None = None) -> None:
    """Single-network checkpoint (architecture travels in the metadata)."""
    info = {"head": net.head, "sizes": list(net.sizes)}
    if meta:
        info.update(meta)
    write_checkpoint(path, net_tensors("net", net), info)


def load_net(path: str | Path) -> DenseNet:
    tensors, meta = read_checkpoint(path)
    return net_from_tensors("net", tensors, meta["head"])
