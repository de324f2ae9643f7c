"""Small fully connected networks with analytic gradients, SGD/Adam, and checkpoints.

Parameters live in one flat float64 vector; per-layer weights and biases are views
into it, so optimizers and target blending work on a single array.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

ACTIVATIONS = ("linear", "relu", "tanh")
CKPT_MAGIC = b"AVCBCKPT"
CKPT_VERSION = 1


class ShapeMismatchError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


def param_count(layer_sizes: Sequence[int]) -> int:
    return sum((n_in + 1) * n_out for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]))


class Mlp:
    """Feed-forward net: ``h_{k+1} = act_k(h_k @ W_k + b_k)``.

    ``activations`` has one entry per affine layer. Initialization draws every weight
    and bias from U(-1/sqrt(fan_in), 1/sqrt(fan_in)); the last layer uses
    U(-final_scale, final_scale) instead when ``final_scale`` is given.
    """

    def __init__(self, layer_sizes: Sequence[int], activations: Sequence[str] | None = None,
                 params: np.ndarray | None = None, seed: int | np.random.Generator | None = 0,
                 final_scale: float | None = None):
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError("need at least input and output sizes, all >= 1")
        n_layers = len(self.layer_sizes) - 1
        if activations is None:
            activations = ["relu"] * (n_layers - 1) + ["linear"]
        self.activations = tuple(activations)
        if len(self.activations) != n_layers:
            raise ValueError("one activation per layer")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        n = param_count(self.layer_sizes)
        if params is None:
            self.params = self._init_params(seed, final_scale)
        else:
            params = np.asarray(params, dtype=np.float64)
            if params.shape != (n,):
                raise ShapeMismatchError(f"expected {n} parameters, got {params.shape}")
            self.params = params.copy()
        self._bind_views()

    def _init_params(self, seed, final_scale) -> np.ndarray:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        chunks = []
        n_layers = len(self.layer_sizes) - 1
        for k, (n_in, n_out) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            bound = 1.0 / np.sqrt(n_in)
            if k == n_layers - 1 and final_scale is not None:
                bound = final_scale
            chunks.append(rng.uniform(-bound, bound, n_in * n_out))
            chunks.append(rng.uniform(-bound, bound, n_out))
        return np.concatenate(chunks)

    def _bind_views(self):
        self.weights, self.biases = [], []
        offset = 0
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self.weights.append(self.params[offset:offset + n_in * n_out].reshape(n_in, n_out))
            offset += n_in * n_out
            self.biases.append(self.params[offset:offset + n_out])
            offset += n_out

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, self.activations, params=self.params)

    def set_params(self, params: np.ndarray) -> None:
        self.params[:] = params

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in or x.ndim > 2:
            raise ShapeMismatchError(f"input has shape {x.shape}, expected (..., {self.n_in})")
        return x

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Evaluate on one input vector or a (batch, n_in) matrix."""
        return self._forward(self._check_input(x))[-1]

    def _forward(self, x):
        hs = [x]
        h = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = h @ w + b
            if act == "relu":
                h = np.maximum(z, 0.0)
            elif act == "tanh":
                h = np.tanh(z)
            else:
                h = z
            hs.append(h)
        return hs

    def preactivations(self, x: np.ndarray) -> list[np.ndarray]:
        x = self._check_input(x)
        hs = self._forward(x)
        return [h @ w + b for h, w, b in zip(hs[:-1], self.weights, self.biases)]

    def backward(self, x: np.ndarray, upstream: np.ndarray, wrt_input: bool = False):
        """Gradient of ``sum(forward(x) * upstream)`` with respect to the parameters.

        For a batch this is the sum over rows. With ``wrt_input`` also returns the
        gradient with respect to ``x`` (same shape as ``x``).
        """
        x = self._check_input(x)
        upstream = np.asarray(upstream, dtype=np.float64)
        hs = self._forward(x)
        if upstream.shape != hs[-1].shape:
            raise ShapeMismatchError(f"upstream shape {upstream.shape} != output {hs[-1].shape}")
        batched = x.ndim == 2
        grad = np.empty_like(self.params)
        offset_end = len(grad)
        delta = upstream
        for k in range(len(self.weights) - 1, -1, -1):
            act = self.activations[k]
            h_out = hs[k + 1]
            if act == "relu":
                delta = delta * (h_out > 0)
            elif act == "tanh":
                delta = delta * (1.0 - h_out * h_out)
            h_in = hs[k]
            n_in, n_out = self.weights[k].shape
            if batched:
                g_w = h_in.T @ delta
                g_b = delta.sum(axis=0)
            else:
                g_w = np.outer(h_in, delta)
                g_b = delta
            grad[offset_end - n_out:offset_end] = g_b
            offset_end -= n_out
            grad[offset_end - n_in * n_out:offset_end] = g_w.ravel()
            offset_end -= n_in * n_out
            if k > 0 or wrt_input:
                delta = delta @ self.weights[k].T
        if wrt_input:
            return grad, delta
        return grad


def forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def backward(net: Mlp, x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return net.backward(x, upstream)


@dataclass
class Optimizer:
    """SGD or bias-corrected Adam over a flat parameter vector.

    An all-zero gradient never moves the parameters; for Adam the moments and step
    count still advance.
    """
    method: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)
    t: int = 0

    def __post_init__(self):
        if self.method not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.method!r}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        if grad.shape != params.shape:
            raise ShapeMismatchError("gradient and parameters differ in length")
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient")
        if self.method == "sgd":
            params -= self.lr * grad
            return
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        elif self.m.shape != params.shape:
            raise ShapeMismatchError("optimizer state does not match parameters")
        self.t += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1 - self.beta2) * grad * grad
        if not grad.any():
            return
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        params -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def apply_update(net: Mlp, grad: np.ndarray, opt: Optimizer) -> tuple[Mlp, Optimizer]:
    """Descend ``grad`` in place; returns the same (net, optimizer) pair for chaining."""
    opt.step(net.params, np.asarray(grad, dtype=np.float64))
    return net, opt


def soft_blend(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """``target <- tau * online + (1 - tau) * target`` in place."""
    if target.layer_sizes != online.layer_sizes:
        raise ShapeMismatchError("target and online networks differ in shape")
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    if tau == 1.0:
        target.params[:] = online.params
    elif tau > 0.0:
        target.params *= 1.0 - tau
        target.params += tau * online.params
    return target


# --- checkpoints -------------------------------------------------------------------
#
# layout (little-endian):
#   magic 8s | version u32 | n_nets u32
#   per net: name_len u32, name utf-8, n_sizes u32, sizes u32*, activation codes u8*,
#            n_params u64, params f64*
#   sha256 of everything above (32 bytes)

def _encode_net(name: str, net: Mlp) -> bytes:
    raw_name = name.encode()
    parts = [struct.pack("<I", len(raw_name)), raw_name,
             struct.pack("<I", len(net.layer_sizes)),
             struct.pack(f"<{len(net.layer_sizes)}I", *net.layer_sizes),
             bytes(ACTIVATIONS.index(a) for a in net.activations),
             struct.pack("<Q", len(net.params)),
             net.params.astype("<f8").tobytes()]
    return b"".join(parts)


def save_checkpoints(nets: Mapping[str, Mlp], path: str | Path) -> None:
    body = CKPT_MAGIC + struct.pack("<II", CKPT_VERSION, len(nets))
    body += b"".join(_encode_net(name, net) for name, net in nets.items())
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def save_checkpoint(net: Mlp, path: str | Path) -> None:
    save_checkpoints({"net": net}, path)


def load_checkpoints(path: str | Path) -> dict[str, Mlp]:
    data = Path(path).read_bytes()
    if len(data) < len(CKPT_MAGIC) + 8 + 32 or not data.startswith(CKPT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file (bad header or truncated)")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError(f"{path}: checksum mismatch (corrupt or truncated file)")
    off = len(CKPT_MAGIC)
    version, n_nets = struct.unpack_from("<II", body, off)
    off += 8
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    nets = {}
    for _ in range(n_nets):
        (name_len,) = struct.unpack_from("<I", body, off)
        off += 4
        name = body[off:off + name_len].decode()
        off += name_len
        (n_sizes,) = struct.unpack_from("<I", body, off)
        off += 4
        sizes = struct.unpack_from(f"<{n_sizes}I", body, off)
        off += 4 * n_sizes
        acts = [ACTIVATIONS[c] for c in body[off:off + n_sizes - 1]]
        off += n_sizes - 1
        (n_params,) = struct.unpack_from("<Q", body, off)
        off += 8
        params = np.frombuffer(body, dtype="<f8", count=n_params, offset=off).astype(np.float64)
        off += 8 * n_params
        nets[name] = Mlp(sizes, acts, params=params)
    return nets


def load_checkpoint(path: str | Path, layer_sizes: Sequence[int] | None = None,
                    name: str = "net") -> Mlp:
    """Load one network; with ``layer_sizes`` the stored architecture must match it."""
    nets = load_checkpoints(path)
    if name not in nets:
        raise CheckpointError(f"{path}: no network named {name!r}")
    net = nets[name]
    if layer_sizes is not None and tuple(layer_sizes) != net.layer_sizes:
        raise ShapeMismatchError(
            f"checkpoint architecture {net.layer_sizes} != declared {tuple(layer_sizes)}")
    return net
