"""
Small numpy networks with hand-written backward passes, plus Adam and a
binary checkpoint format.

Batches are column-major like the rest of the package: ``X`` has shape
``(features, batch)``.  An MLP is a list of ``(W, b)`` pairs with ``W`` of
shape ``(out, in)`` and ``b`` of shape ``(out,)``.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericalError

LEAKY_SLOPE = 0.01

Layer = tuple[np.ndarray, np.ndarray]


def glorot_uniform(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def init_mlp(sizes, rng) -> list[Layer]:
    """Layers for widths ``sizes = (in, hidden..., out)``; biases start at zero."""
    if len(sizes) < 2:
        raise ValueError("an MLP needs at least input and output widths")
    return [(glorot_uniform(rng, o, i), np.zeros(o)) for i, o in zip(sizes[:-1], sizes[1:])]


def mlp_sizes(params) -> tuple[int, ...]:
    return (params[0][0].shape[1],) + tuple(W.shape[0] for W, _ in params)


@dataclass
class MLPCache:
    inputs: list
    preacts: list
    params: list
    out_shape: tuple


def mlp_forward(params, X):
    """Affine + leaky-ReLU per hidden layer, linear output layer.

    Returns the output ``(out, B)`` and a cache for :func:`mlp_backward`.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError(f"input must have shape (features, batch>=1), got {X.shape}")
    inputs, preacts = [], []
    h = X
    last = len(params) - 1
    for i, (W, b) in enumerate(params):
        if W.shape[1] != h.shape[0] or b.shape != (W.shape[0],):
            raise ValueError(
                f"layer {i}: weight {W.shape} / bias {b.shape} do not accept input width {h.shape[0]}"
            )
        inputs.append(h)
        a = W @ h + b[:, None]
        preacts.append(a)
        h = a if i == last else np.where(a > 0, a, LEAKY_SLOPE * a)
    return h, MLPCache(inputs, preacts, list(params), h.shape)


def mlp_backward(cache: MLPCache, grad_Y):
    """Reverse-mode gradients of :func:`mlp_forward`.

    Returns ``(grads, grad_X)`` with ``grads`` a list of ``(dW, db)`` matching
    the layer list.
    """
    if not isinstance(cache, MLPCache):
        raise TypeError("cache must come from mlp_forward")
    grad_Y = np.asarray(grad_Y, dtype=float)
    if grad_Y.shape != cache.out_shape:
        raise ValueError(f"grad_Y shape {grad_Y.shape} does not match forward output {cache.out_shape}")
    grads = [None] * len(cache.params)
    g = grad_Y
    last = len(cache.params) - 1
    for i in range(last, -1, -1):
        W, _ = cache.params[i]
        if i != last:
            g = np.where(cache.preacts[i] > 0, g, LEAKY_SLOPE * g)
        grads[i] = (g @ cache.inputs[i].T, g.sum(axis=1))
        g = W.T @ g
    return grads, g


def softmax_xent(logits, labels):
    """Mean cross-entropy of column-wise softmax and its gradient."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    n_classes, batch = logits.shape
    if labels.shape != (batch,):
        raise ValueError(f"need {batch} labels, got shape {labels.shape}")
    if batch and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    shifted = logits - logits.max(axis=0, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=0))
    cols = np.arange(batch)
    loss = float(np.mean(log_norm - shifted[labels, cols]))
    probs = np.exp(shifted - log_norm)
    probs[labels, cols] -= 1.0
    return loss, probs / batch


# -- model containers ---------------------------------------------------------


def _named_mlp(prefix, params):
    out = {}
    for i, (W, b) in enumerate(params):
        out[f"{prefix}.{i}.W"] = W
        out[f"{prefix}.{i}.b"] = b
    return out


@dataclass
class EncoderStack:
    """Per-view encoders ``f_s`` and projections ``U_s`` into the shared space."""

    mlps: list
    projs: list

    @classmethod
    def init(cls, input_dims, hidden, out_dim, shared_dim, rng) -> "EncoderStack":
        mlps = [init_mlp((D, *hidden, out_dim), rng) for D in input_dims]
        projs = [glorot_uniform(rng, shared_dim, out_dim) for _ in input_dims]
        return cls(mlps, projs)

    @property
    def n_views(self) -> int:
        return len(self.mlps)

    @property
    def input_dims(self):
        return [p[0][0].shape[1] for p in self.mlps]

    @property
    def out_dim(self) -> int:
        return self.mlps[0][-1][0].shape[0]

    @property
    def shared_dim(self) -> int:
        return self.projs[0].shape[0]

    def named_parameters(self) -> dict:
        out = {}
        for s, (mlp, U) in enumerate(zip(self.mlps, self.projs)):
            out.update(_named_mlp(f"enc.{s}", mlp))
            out[f"proj.{s}"] = U
        return out

    def encode(self, s, X):
        return mlp_forward(self.mlps[s], X)

    def named_grads(self, mlp_grads, proj_grads) -> dict:
        out = {}
        for s, g in enumerate(mlp_grads):
            if g is not None:
                out.update(_named_mlp(f"enc.{s}", g))
        for s, g in enumerate(proj_grads):
            if g is not None:
                out[f"proj.{s}"] = g
        return out


@dataclass
class ClassifierHead:
    """Softmax layer on concatenated encoder outputs.

    ``weight`` has shape ``(S * out_dim, n_classes)``.
    """

    weight: np.ndarray
    bias: np.ndarray

    @classmethod
    def init(cls, in_dim, n_classes, rng) -> "ClassifierHead":
        return cls(glorot_uniform(rng, in_dim, n_classes), np.zeros(n_classes))

    def forward(self, H):
        if H.shape[0] != self.weight.shape[0]:
            raise ValueError(f"classifier expects {self.weight.shape[0]} inputs, got {H.shape[0]}")
        return self.weight.T @ H + self.bias[:, None]

    def backward(self, H, grad_logits):
        return {"cls.W": H @ grad_logits.T, "cls.b": grad_logits.sum(axis=1)}, self.weight @ grad_logits

    def named_parameters(self) -> dict:
        return {"cls.W": self.weight, "cls.b": self.bias}


@dataclass
class DecoderStack:
    mlps: list

    @classmethod
    def init(cls, out_dims, hidden, in_dim, rng) -> "DecoderStack":
        return cls([init_mlp((in_dim, *reversed(hidden), D), rng) for D in out_dims])

    def named_parameters(self) -> dict:
        out = {}
        for s, mlp in enumerate(self.mlps):
            out.update(_named_mlp(f"dec.{s}", mlp))
        return out


def reconstruction_loss(dec: DecoderStack, latents, X):
    """Per-view mean squared reconstruction error, summed over views.

    Returns ``(loss, param_grads, latent_grads)`` where ``param_grads`` is a
    name -> array dict for the decoders.
    """
    if len(latents) != len(dec.mlps) or len(X) != len(dec.mlps):
        raise ValueError("need one latent batch and one data batch per decoder")
    loss = 0.0
    grads, latent_grads = {}, []
    for s, (mlp, H, Xs) in enumerate(zip(dec.mlps, latents, X)):
        R, cache = mlp_forward(mlp, H)
        if R.shape != Xs.shape:
            raise ValueError(f"view {s}: reconstruction shape {R.shape} != data shape {Xs.shape}")
        diff = R - Xs
        loss += float(np.mean(diff * diff))
        g, gH = mlp_backward(cache, (2.0 / diff.size) * diff)
        grads.update(_named_mlp(f"dec.{s}", g))
        latent_grads.append(gH)
    return loss, grads, latent_grads


# -- optimizer ----------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict) -> dict:
    """Bias-corrected Adam update, applied in place to ``params``.

    Parameters missing from ``grads`` are treated as having zero gradient.
    """
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, w in params.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(w)
            state.v[name] = np.zeros_like(w)
        g = grads.get(name)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        v *= state.beta2
        if g is not None:
            m += (1.0 - state.beta1) * g
            v += (1.0 - state.beta2) * (g * g)
        w -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params


# -- checkpoints --------------------------------------------------------------

MAGIC = b"HOTMVL\x00\x01"
FORMAT_VERSION = 1


def save_checkpoint(path, tensors: dict, meta: dict | None = None) -> None:
    """Write named float64 tensors to ``path``.

    Layout: magic, u32 version, u32 metadata length + UTF-8 JSON metadata,
    u32 tensor count, then per tensor u32 name length, name, u32 ndim,
    u64 dims, little-endian float64 data.
    """
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(meta_bytes)))
        f.write(meta_bytes)
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype="<f8", order="C")
            key = name.encode()
            f.write(struct.pack("<I", len(key)) + key)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(tensors, meta)``."""
    with open(path, "rb") as f:
        data = f.read()
    if data[: len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: not a hotmvl checkpoint")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        vals = struct.unpack_from(fmt, data, pos)
        pos += struct.calcsize(fmt)
        return vals

    version, meta_len = take("<II")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(data[pos : pos + meta_len].decode())
    pos += meta_len
    (count,) = take("<I")
    tensors = {}
    for _ in range(count):
        (klen,) = take("<I")
        name = data[pos : pos + klen].decode()
        pos += klen
        (ndim,) = take("<I")
        shape = take(f"<{ndim}Q") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape)
        pos += 8 * size
        tensors[name] = arr.astype(np.float64)
    return tensors, meta


def mlp_from_tensors(tensors, prefix):
    layers = []
    i = 0
    while f"{prefix}.{i}.W" in tensors:
        layers.append((tensors[f"{prefix}.{i}.W"].copy(), tensors[f"{prefix}.{i}.b"].copy()))
        i += 1
    if not layers:
        raise DataError(f"checkpoint has no tensors under {prefix!r}")
    return layers
