"""Minimal reverse-mode differentiation over numpy arrays.

Just the operations the attention network needs: dense linears, per-head
projections, gather/scatter over edge lists, segment softmax, activations,
dropout, layer normalization, and cross-entropy. Each op records a closure
that accumulates parent gradients; Tensor.backward() replays them in
reverse topological order. Dtype follows the inputs, so the whole graph
can run in float32 (training) or float64 (gradient verification).
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import ShapeMismatch


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data: np.ndarray, requires_grad: bool = False, parents=()):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self) -> None:
        """Backpropagate from this (scalar) tensor through the recorded graph."""
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents), parents=tuple(
        p for p in parents if p.requires_grad
    ))
    if out.requires_grad:
        out._backward = backward
    return out


def add(x: Tensor, y: Tensor) -> Tensor:
    if x.data.shape != y.data.shape:
        raise ShapeMismatch(f"add: {x.data.shape} vs {y.data.shape}")

    def backward(g):
        if x.requires_grad:
            x._accumulate(g)
        if y.requires_grad:
            y._accumulate(g)

    return _result(x.data + y.data, (x, y), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """y = x @ weight.T (+ bias); weight is (out, in)."""
    data = x.data @ weight.data.T
    if bias is not None:
        data = data + bias.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data)
        if weight.requires_grad:
            weight._accumulate(g.T @ x.data)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=0))

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(data, parents, backward)


def linear_heads(x: Tensor, weight: Tensor) -> Tensor:
    """Per-head projection: (V, in) x (heads, out, in) -> (V, heads, out)."""
    heads, out_dim, in_dim = weight.data.shape
    flat = weight.data.reshape(heads * out_dim, in_dim)
    data = (x.data @ flat.T).reshape(x.data.shape[0], heads, out_dim)

    def backward(g):
        g2 = g.reshape(g.shape[0], heads * out_dim)
        if x.requires_grad:
            x._accumulate(g2 @ flat)
        if weight.requires_grad:
            weight._accumulate((g2.T @ x.data).reshape(heads, out_dim, in_dim))

    return _result(data, (x, weight), backward)


def head_scores(z: Tensor, a: Tensor) -> Tensor:
    """Per-head dot products: (V, heads, out) x (heads, out) -> (V, heads)."""
    data = np.einsum("vho,ho->vh", z.data, a.data)

    def backward(g):
        if z.requires_grad:
            z._accumulate(g[:, :, None] * a.data[None, :, :])
        if a.requires_grad:
            a._accumulate(np.einsum("vh,vho->ho", g, z.data))

    return _result(data, (z, a), backward)


def pair_scores(z_dst: Tensor, z_src: Tensor, a: Tensor) -> Tensor:
    """Edge attention logits: a[:, :O] . z_dst + a[:, O:] . z_src -> (E, H).

    a is (H, 2O), the per-head attention vector over the concatenated
    destination and source projections.
    """
    out_dim = z_dst.data.shape[2]
    a_dst = a.data[:, :out_dim]
    a_src = a.data[:, out_dim:]
    data = np.einsum("eho,ho->eh", z_dst.data, a_dst) + np.einsum(
        "eho,ho->eh", z_src.data, a_src
    )

    def backward(g):
        if z_dst.requires_grad:
            z_dst._accumulate(g[:, :, None] * a_dst[None, :, :])
        if z_src.requires_grad:
            z_src._accumulate(g[:, :, None] * a_src[None, :, :])
        if a.requires_grad:
            ga = np.concatenate(
                [np.einsum("eh,eho->ho", g, z_dst.data), np.einsum("eh,eho->ho", g, z_src.data)],
                axis=1,
            )
            a._accumulate(ga)

    return _result(data, (z_dst, z_src, a), backward)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows by index; backward scatter-adds into the source rows."""
    data = x.data[idx]

    def backward(g):
        if x.requires_grad:
            g2 = g.reshape(g.shape[0], -1)
            acc = kernels.scatter_add(g2, idx, x.data.shape[0])
            x._accumulate(acc.reshape(x.data.shape))

    return _result(data, (x,), backward)


def mul_alpha(alpha: Tensor, msg: Tensor) -> Tensor:
    """Scale per-edge messages: (E, H) * (E, H, O) -> (E, H, O)."""
    data = alpha.data[:, :, None] * msg.data

    def backward(g):
        if alpha.requires_grad:
            alpha._accumulate((g * msg.data).sum(axis=2))
        if msg.requires_grad:
            msg._accumulate(g * alpha.data[:, :, None])

    return _result(data, (alpha, msg), backward)


def seg_softmax(e: Tensor, starts: np.ndarray) -> Tensor:
    """Softmax over contiguous edge segments (edges sorted by destination)."""
    alpha_data = kernels.seg_softmax(e.data, starts)

    def backward(g):
        if e.requires_grad:
            e._accumulate(kernels.seg_softmax_grad(alpha_data, g, starts))

    return _result(alpha_data, (e,), backward)


def seg_sum(x: Tensor, starts: np.ndarray) -> Tensor:
    """Sum (E, H, O) rows into (V, H, O) by segment; backward re-gathers."""
    n_edges = x.data.shape[0]
    trailing = x.data.shape[1:]
    data = kernels.seg_sum(x.data.reshape(n_edges, -1), starts).reshape((-1,) + trailing)
    counts = np.diff(starts)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.repeat(g, counts, axis=0))

    return _result(data, (x,), backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    def backward(g):
        if x.requires_grad:
            x._accumulate(g.reshape(x.data.shape))

    return _result(x.data.reshape(shape), (x,), backward)


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    positive = x.data > 0
    data = np.where(positive, x.data, x.data * np.asarray(slope, dtype=x.data.dtype))

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.where(positive, g, g * np.asarray(slope, dtype=g.dtype)))

    return _result(data, (x,), backward)


def elu(x: Tensor) -> Tensor:
    positive = x.data > 0
    expm1 = np.expm1(x.data, where=~positive, out=np.zeros_like(x.data))
    data = np.where(positive, x.data, expm1)

    def backward(g):
        if x.requires_grad:
            x._accumulate(np.where(positive, g, g * (expm1 + 1)))

    return _result(data, (x,), backward)


def silu(x: Tensor) -> Tensor:
    # exp only ever sees -|x|, so large magnitudes cannot overflow
    z = np.exp(-np.abs(x.data))
    sig = np.where(x.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    data = x.data * sig

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * sig * (1 + x.data * (1 - sig)))

    return _result(data, (x,), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; the mask is drawn once per call from rng."""
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype)
    scale = np.asarray(1.0 / (1.0 - p), dtype=x.data.dtype)
    data = x.data * keep * scale

    def backward(g):
        if x.requires_grad:
            x._accumulate(g * keep * scale)

    return _result(data, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last dimension, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat = centered * inv_std
    data = xhat * gain.data + bias.data

    def backward(g):
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))
        if gain.requires_grad:
            gain._accumulate((g * xhat).reshape(-1, g.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gx_hat = g * gain.data
            m1 = gx_hat.mean(axis=-1, keepdims=True)
            m2 = (gx_hat * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv_std * (gx_hat - m1 - xhat * m2))

    return _result(data, (x, gain, bias), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer labels against (N, C) logits."""
    z = logits.data
    peak = z.max(axis=1, keepdims=True)
    shifted = z - peak
    lse = peak[:, 0] + np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(z.shape[0])
    losses = lse - z[rows, labels]
    data = np.asarray(losses.mean(), dtype=z.dtype)

    def backward(g):
        if logits.requires_grad:
            probs = np.exp(shifted)
            probs /= probs.sum(axis=1, keepdims=True)
            probs[rows, labels] -= 1
            logits._accumulate(probs * (g / z.shape[0]))

    return _result(data, (logits,), backward)
