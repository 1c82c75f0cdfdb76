"""Graph attention network over document graphs.

Three attention layers (4, 2, and 1 heads) with residual projections after
the first two, followed by a small MLP that classifies passage nodes as
salient or not. Forward and backward passes run on the reverse-mode engine
in autodiff.py; the per-destination softmax uses the segment kernels.

Everything is seeded: parameter init, the train/validation split, epoch
shuffling, and dropout masks all derive from one SeedSequence, so a fixed
seed reproduces checkpoints bit for bit on the same backend.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .embstore import EmbeddingTable, sentence_key
from .errors import (
    BadMagic,
    EmptyDataset,
    IoFailure,
    LabelOutOfRange,
    MissingEmbedding,
    NonFiniteValue,
    ShapeMismatch,
)
from .graph import DocGraph, NodeKind
from .labels import LabelSet

LEAKY_SLOPE = 0.2
GAT_DROPOUT = 0.2
MLP_DROPOUT = 0.3
CHECKPOINT_MAGIC = b"GAT1"


@dataclass(frozen=True)
class GatDims:
    """Layer widths; defaults are the full-size architecture."""

    in_dim: int = 768
    l1_out: int = 128
    l1_heads: int = 4
    l2_out: int = 256
    l2_heads: int = 2
    l3_out: int = 1024
    mlp_hidden: int = 512
    mlp_mid: int = 256
    n_classes: int = 2

    @property
    def l1_cat(self) -> int:
        return self.l1_out * self.l1_heads

    @property
    def l2_cat(self) -> int:
        return self.l2_out * self.l2_heads


def _param_specs(d: GatDims) -> list[tuple[str, tuple[int, ...], str]]:
    """Fixed parameter inventory: (name, shape, init style), in file order."""
    return [
        ("l1.w", (d.l1_heads, d.l1_out, d.in_dim), "fan_in"),
        ("l1.a", (d.l1_heads, 2 * d.l1_out), "fan_in"),
        ("l1.res_w", (d.l1_cat, d.in_dim), "fan_in"),
        ("l1.res_b", (d.l1_cat,), "zero"),
        ("l2.w", (d.l2_heads, d.l2_out, d.l1_cat), "fan_in"),
        ("l2.a", (d.l2_heads, 2 * d.l2_out), "fan_in"),
        ("l2.res_w", (d.l2_cat, d.l1_cat), "fan_in"),
        ("l2.res_b", (d.l2_cat,), "zero"),
        ("l3.w", (1, d.l3_out, d.l2_cat), "fan_in"),
        ("l3.a", (1, 2 * d.l3_out), "fan_in"),
        ("mlp.w1", (d.mlp_hidden, d.l3_out), "fan_in"),
        ("mlp.b1", (d.mlp_hidden,), "zero"),
        ("mlp.w2", (d.mlp_mid, d.mlp_hidden), "fan_in"),
        ("mlp.b2", (d.mlp_mid,), "zero"),
        ("mlp.ln_g", (d.mlp_mid,), "one"),
        ("mlp.ln_b", (d.mlp_mid,), "zero"),
        ("mlp.w3", (d.n_classes, d.mlp_mid), "fan_in"),
        ("mlp.b3", (d.n_classes,), "zero"),
    ]


class GatModel:
    """Parameter container; params is an ordered name -> Tensor mapping."""

    def __init__(self, params: dict[str, Tensor], dims: GatDims):
        self.params = params
        self.dims = dims

    @classmethod
    def init(cls, seed: int, dims: GatDims | None = None, dtype=np.float32) -> "GatModel":
        """Seeded init: uniform +-1/sqrt(fan_in) weights, zero biases."""
        d = dims or GatDims()
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        params: dict[str, Tensor] = {}
        for name, shape, style in _param_specs(d):
            if style == "zero":
                data = np.zeros(shape, dtype=dtype)
            elif style == "one":
                data = np.ones(shape, dtype=dtype)
            else:
                bound = 1.0 / np.sqrt(shape[-1])
                data = rng.uniform(-bound, bound, size=shape).astype(dtype)
            params[name] = Tensor(data, requires_grad=True)
        return cls(params, d)

    def astype(self, dtype) -> "GatModel":
        params = {
            name: Tensor(np.ascontiguousarray(t.data.astype(dtype)), requires_grad=True)
            for name, t in self.params.items()
        }
        return GatModel(params, self.dims)

    def copy(self) -> "GatModel":
        return self.astype(next(iter(self.params.values())).data.dtype)

    def n_params(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.grad = None


def dims_from_shapes(shapes: dict[str, tuple[int, ...]]) -> GatDims:
    """Recover layer widths from a checkpoint's shape table."""
    try:
        l1_heads, l1_out, in_dim = shapes["l1.w"]
        l2_heads, l2_out, _ = shapes["l2.w"]
        _, l3_out, _ = shapes["l3.w"]
        mlp_hidden = shapes["mlp.w1"][0]
        mlp_mid = shapes["mlp.w2"][0]
        n_classes = shapes["mlp.w3"][0]
    except (KeyError, ValueError) as exc:
        raise BadMagic(f"checkpoint shape table incomplete: {exc}") from exc
    return GatDims(
        in_dim=in_dim,
        l1_out=l1_out,
        l1_heads=l1_heads,
        l2_out=l2_out,
        l2_heads=l2_heads,
        l3_out=l3_out,
        mlp_hidden=mlp_hidden,
        mlp_mid=mlp_mid,
        n_classes=n_classes,
    )


@dataclass(frozen=True)
class GatLayerParams:
    """One attention layer: per-head weights (H, out, in) and vectors (H, 2*out)."""

    w: np.ndarray
    a: np.ndarray
    slope: float = LEAKY_SLOPE

    @property
    def heads(self) -> int:
        return self.w.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w.shape[1]


class GraphTensors:
    """Edge arrays for segment-wise attention.

    Directed edges (both directions of every undirected edge, plus one
    self-loop per node) sorted by (dst, src); starts[i]:starts[i+1] is the
    contiguous run of edges pointing at node i. Passage rows map node ids
    to classifier rows.
    """

    def __init__(
        self,
        n_nodes: int,
        src: np.ndarray,
        dst: np.ndarray,
        starts: np.ndarray,
        passage_rows: np.ndarray,
        passage_ids: tuple[int, ...],
    ):
        self.n_nodes = n_nodes
        self.src = src
        self.dst = dst
        self.starts = starts
        self.passage_rows = passage_rows
        self.passage_ids = passage_ids

    @classmethod
    def from_edges(
        cls,
        n_nodes: int,
        pairs: np.ndarray,
        passage_rows: np.ndarray,
        passage_ids: tuple[int, ...] = (),
    ) -> "GraphTensors":
        """pairs is (E, 2) undirected; both directions plus self-loops are added."""
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        loops = np.arange(n_nodes, dtype=np.int64)
        src = np.concatenate([pairs[:, 0], pairs[:, 1], loops])
        dst = np.concatenate([pairs[:, 1], pairs[:, 0], loops])
        order = np.lexsort((src, dst))
        src = np.ascontiguousarray(src[order])
        dst = np.ascontiguousarray(dst[order])
        starts = np.zeros(n_nodes + 1, dtype=np.int64)
        np.add.at(starts, dst + 1, 1)
        np.cumsum(starts, out=starts)
        rows = np.asarray(passage_rows, dtype=np.int64)
        ids = passage_ids or tuple(range(rows.size))
        return cls(n_nodes, src, dst, starts, rows, ids)

    @classmethod
    def from_graph(cls, g: DocGraph) -> "GraphTensors":
        pairs = np.array([(e.src, e.dst) for e in g.edges], dtype=np.int64).reshape(-1, 2)
        passages = [n for n in g.nodes if n.kind is NodeKind.PASSAGE]
        rows = np.array([n.node_id for n in passages], dtype=np.int64)
        ids = tuple(n.ref for n in passages)
        return cls.from_edges(len(g.nodes), pairs, rows, ids)


def _coerce_tensors(g: DocGraph | GraphTensors) -> GraphTensors:
    return g if isinstance(g, GraphTensors) else GraphTensors.from_graph(g)


def init_node_features(g: DocGraph, sentences: EmbeddingTable) -> np.ndarray:
    """Sentence rows take their stored vectors; every other row is zero."""
    x = np.zeros((len(g.nodes), sentences.dim), dtype=np.float32)
    for node in g.nodes:
        if node.kind is not NodeKind.SENTENCE:
            continue
        key = sentence_key(g.doc_id, node.ref)
        if key not in sentences:
            raise MissingEmbedding(key)
        x[node.node_id] = sentences[key]
    return x


def _layer_core(
    x: Tensor,
    gt: GraphTensors,
    w: Tensor,
    a: Tensor,
    slope: float,
    record: list[np.ndarray] | None = None,
    kink_trace: list[np.ndarray] | None = None,
) -> Tensor:
    """Multi-head attention aggregation; returns (V, heads*out), no activation."""
    if x.data.shape[0] != gt.n_nodes:
        raise ShapeMismatch(f"feature rows {x.data.shape[0]} != nodes {gt.n_nodes}")
    if x.data.shape[1] != w.data.shape[2]:
        raise ShapeMismatch(f"feature dim {x.data.shape[1]} != weight in-dim {w.data.shape[2]}")
    z = ad.linear_heads(x, w)
    z_src = ad.gather_rows(z, gt.src)
    z_dst = ad.gather_rows(z, gt.dst)
    scores = ad.pair_scores(z_dst, z_src, a)
    if kink_trace is not None:
        kink_trace.append(scores.data)
    e = ad.leaky_relu(scores, slope)
    alpha = ad.seg_softmax(e, gt.starts)
    if record is not None:
        record.append(alpha.data.copy())
    agg = ad.seg_sum(ad.mul_alpha(alpha, z_src), gt.starts)
    heads, out_dim = w.data.shape[0], w.data.shape[1]
    return ad.reshape(agg, (gt.n_nodes, heads * out_dim))


def gat_layer_forward(
    x: np.ndarray,
    g: DocGraph | GraphTensors,
    p: GatLayerParams,
    train_mode: bool = False,
) -> np.ndarray:
    """One attention layer on raw arrays. The caller applies residual,
    activation, and dropout; train_mode changes nothing inside the layer."""
    del train_mode
    gt = _coerce_tensors(g)
    out = _layer_core(Tensor(x), gt, Tensor(p.w), Tensor(p.a), p.slope)
    return out.data


def _forward_graph(
    model: GatModel,
    gt: GraphTensors,
    x: np.ndarray,
    train_mode: bool,
    rng: np.random.Generator | None,
    record: list[np.ndarray] | None = None,
    kink_trace: list[np.ndarray] | None = None,
) -> Tensor:
    """Build the full differentiable graph; returns passage logits tensor."""
    if train_mode and rng is None:
        raise ValueError("train_mode requires an rng for dropout masks")
    p = model.params
    h = Tensor(np.ascontiguousarray(x))

    gat1 = _layer_core(h, gt, p["l1.w"], p["l1.a"], LEAKY_SLOPE, record, kink_trace)
    res1 = ad.linear(h, p["l1.res_w"], p["l1.res_b"])
    pre1 = ad.add(gat1, res1)
    if kink_trace is not None:
        kink_trace.append(pre1.data)
    h = ad.elu(pre1)
    if train_mode:
        h = ad.dropout(h, GAT_DROPOUT, rng)

    gat2 = _layer_core(h, gt, p["l2.w"], p["l2.a"], LEAKY_SLOPE, record, kink_trace)
    res2 = ad.linear(h, p["l2.res_w"], p["l2.res_b"])
    pre2 = ad.add(gat2, res2)
    if kink_trace is not None:
        kink_trace.append(pre2.data)
    h = ad.elu(pre2)
    if train_mode:
        h = ad.dropout(h, GAT_DROPOUT, rng)

    h = _layer_core(h, gt, p["l3.w"], p["l3.a"], LEAKY_SLOPE, record, kink_trace)

    hp = ad.gather_rows(h, gt.passage_rows)
    hp = ad.silu(ad.linear(hp, p["mlp.w1"], p["mlp.b1"]))
    if train_mode:
        hp = ad.dropout(hp, MLP_DROPOUT, rng)
    hp = ad.linear(hp, p["mlp.w2"], p["mlp.b2"])
    hp = ad.silu(ad.layer_norm(hp, p["mlp.ln_g"], p["mlp.ln_b"]))
    return ad.linear(hp, p["mlp.w3"], p["mlp.b3"])


def forward(
    model: GatModel,
    g: DocGraph | GraphTensors,
    x: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Passage logits, (n_passages, 2). Deterministic when train_mode is off."""
    gt = _coerce_tensors(g)
    return _forward_graph(model, gt, x, train_mode, rng).data


def attention_maps(
    model: GatModel, g: DocGraph | GraphTensors, x: np.ndarray
) -> tuple[GraphTensors, list[np.ndarray]]:
    """Eval-mode forward that also returns per-layer (E, heads) coefficients."""
    gt = _coerce_tensors(g)
    record: list[np.ndarray] = []
    _forward_graph(model, gt, x, False, None, record)
    return gt, record


def _label_vector(gt: GraphTensors, labels: LabelSet | frozenset | set) -> np.ndarray:
    ids = labels.passage_ids if isinstance(labels, LabelSet) else frozenset(labels)
    known = set(gt.passage_ids)
    stray = sorted(ids - known)
    if stray:
        raise LabelOutOfRange(f"label ids not in graph: {stray}")
    return np.array([1 if pid in ids else 0 for pid in gt.passage_ids], dtype=np.int64)


def loss_and_grads(
    model: GatModel,
    g: DocGraph | GraphTensors,
    x: np.ndarray,
    labels: LabelSet | frozenset | set,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over passage nodes and its parameter gradients."""
    gt = _coerce_tensors(g)
    y = _label_vector(gt, labels)
    model.zero_grads()
    logits = _forward_graph(model, gt, x, train_mode, rng)
    loss = ad.cross_entropy(logits, y)
    loss.backward()
    grads = {
        name: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for name, t in model.params.items()
    }
    return float(loss.data), grads


def predict_salient(model: GatModel, g: DocGraph | GraphTensors, x: np.ndarray) -> set[int]:
    """Passage ids whose salient logit strictly exceeds the other (tie -> not)."""
    gt = _coerce_tensors(g)
    logits = forward(model, gt, x, train_mode=False)
    chosen = logits[:, 1] > logits[:, 0]
    return {pid for pid, hit in zip(gt.passage_ids, chosen) if hit}


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    val_fraction: float = 0.1
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.clip_norm is not None and not self.clip_norm > 0.0:
            raise ValueError(f"clip_norm must be positive or None, got {self.clip_norm}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "seed": self.seed,
            "val_fraction": self.val_fraction,
            "clip_norm": self.clip_norm,
        }


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


class Adam:
    """Standard bias-corrected Adam over the ordered parameter dict."""

    def __init__(self, params: dict[str, Tensor], lr: float, beta1: float, beta2: float, eps: float):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= (self.lr * update).astype(p.data.dtype, copy=False)


TrainItem = tuple[GraphTensors, np.ndarray, LabelSet]


def _mean_eval_loss(model: GatModel, items: list[TrainItem]) -> float:
    total = 0.0
    for gt, x, labels in items:
        y = _label_vector(gt, labels)
        logits = _forward_graph(model, gt, x, False, None)
        total += float(ad.cross_entropy(logits, y).data)
    return total / len(items)


def train(
    dataset: list[tuple[DocGraph | GraphTensors, np.ndarray, LabelSet]],
    cfg: TrainConfig,
    dims: GatDims | None = None,
) -> tuple[GatModel, list[EpochStats], int]:
    """Train on one-document batches; returns (best model, history, best epoch).

    Best means minimum validation loss, evaluated with dropout off after
    each epoch. epochs=0 returns the freshly initialized model.
    """
    if not dataset:
        raise EmptyDataset("train: empty dataset")
    items: list[TrainItem] = [(_coerce_tensors(g), x, lb) for g, x, lb in dataset]

    seq = np.random.SeedSequence(cfg.seed)
    init_seq, split_seq, epoch_seq = seq.spawn(3)
    init_seed = int(init_seq.generate_state(1)[0])
    model = GatModel.init(init_seed, dims)
    if cfg.epochs == 0:
        return model, [], 0

    split_rng = np.random.Generator(np.random.PCG64(split_seq))
    order = split_rng.permutation(len(items))
    n_val = int(len(items) * cfg.val_fraction)
    if len(items) >= 2:
        n_val = min(max(n_val, 1), len(items) - 1)
    val_items = [items[i] for i in order[:n_val]] or items
    train_items = [items[i] for i in order[n_val:]]

    opt = Adam(model.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    epoch_rng = np.random.Generator(np.random.PCG64(epoch_seq))

    history: list[EpochStats] = []
    best_loss = np.inf
    best_epoch = 0
    best_params = {k: t.data.copy() for k, t in model.params.items()}
    for epoch in range(1, cfg.epochs + 1):
        perm = epoch_rng.permutation(len(train_items))
        epoch_total = 0.0
        for i in perm:
            gt, x, labels = train_items[i]
            loss, grads = loss_and_grads(model, gt, x, labels, train_mode=True, rng=epoch_rng)
            if not np.isfinite(loss):
                raise NonFiniteValue(f"training loss diverged at epoch {epoch}")
            if cfg.clip_norm is not None:
                # single-document batches produce occasional gradient spikes an
                # order of magnitude above the typical norm; cap the global norm
                # so one hard document cannot knock the run off course
                gnorm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
                if gnorm > cfg.clip_norm:
                    scale = cfg.clip_norm / gnorm  # python float: grads keep their dtype
                    grads = {k: g * scale for k, g in grads.items()}
            opt.step(grads)
            epoch_total += loss
        val_loss = _mean_eval_loss(model, val_items)
        history.append(EpochStats(epoch, epoch_total / len(train_items), val_loss))
        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_params = {k: t.data.copy() for k, t in model.params.items()}

    best = GatModel({k: Tensor(v, requires_grad=True) for k, v in best_params.items()}, model.dims)
    return best, history, best_epoch


def save_checkpoint(model: GatModel, path, meta: dict | None = None) -> None:
    """Binary layout: magic, u32 tensor count, shape table, then all tensor
    data as float32 LE C-order in table order. Metadata goes to a JSON
    sidecar at path + '.meta.json'."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(model.params)))
        for name, t in model.params.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", t.data.ndim))
            fh.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        for t in model.params.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    sidecar = {"format": CHECKPOINT_MAGIC.decode(), "params": model.n_params()}
    sidecar.update(meta or {})
    meta_path = Path(str(path) + ".meta.json")
    meta_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path) -> GatModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise BadMagic(f"not a checkpoint file: magic {magic!r}")
        raw = fh.read(4)
        if len(raw) != 4:
            raise IoFailure("checkpoint truncated in header")
        (count,) = struct.unpack("<I", raw)
        shapes: dict[str, tuple[int, ...]] = {}
        for _ in range(count):
            raw = fh.read(4)
            if len(raw) != 4:
                raise IoFailure("checkpoint truncated in shape table")
            (name_len,) = struct.unpack("<I", raw)
            name = fh.read(name_len).decode("utf-8")
            raw = fh.read(4)
            if len(raw) != 4:
                raise IoFailure("checkpoint truncated in shape table")
            (ndim,) = struct.unpack("<I", raw)
            raw = fh.read(4 * ndim)
            if len(raw) != 4 * ndim:
                raise IoFailure("checkpoint truncated in shape table")
            if name in shapes:
                raise BadMagic(f"duplicate tensor name: {name}")
            shapes[name] = struct.unpack(f"<{ndim}I", raw)
        params: dict[str, Tensor] = {}
        for name, shape in shapes.items():
            n = int(np.prod(shape)) if shape else 1
            raw = fh.read(4 * n)
            if len(raw) != 4 * n:
                raise IoFailure(f"checkpoint truncated in tensor data ({name})")
            data = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
            params[name] = Tensor(data, requires_grad=True)
        if fh.read(1):
            raise IoFailure("checkpoint has trailing bytes")
    dims = dims_from_shapes(shapes)
    expected = [name for name, _, _ in _param_specs(dims)]
    if list(params) != expected:
        raise BadMagic("checkpoint tensor inventory does not match the architecture")
    return GatModel(params, dims)


@dataclass(frozen=True)
class FdGroupResult:
    name: str
    n_checked: int
    max_abs_diff: float
    max_rel_err: float
    passed: bool


def fd_check(
    model: GatModel,
    g: DocGraph | GraphTensors,
    x: np.ndarray,
    labels: LabelSet | frozenset | set,
    step: float = 1e-4,
    tol: float = 1e-4,
    samples_per_group: int = 8,
    seed: int = 0,
    jitter: float = 0.01,
) -> list[FdGroupResult]:
    """Central-difference verification of every parameter group in float64.

    A sampled subset of components per group is perturbed (full enumeration
    is quadratic in parameter count); pass means |analytic - fd| <=
    tol * max(|analytic|, |fd|) + 1e-8 for all sampled components.

    Two measures keep the finite-difference oracle valid where the loss is
    not smooth. First, the check runs at a generic point: all parameters
    get a small uniform jitter, because zero-initialized biases combined
    with zero feature rows park whole activation rows exactly on the ELU
    kink, where central differences of a merely C1 function carry O(step)
    error. Second, both loss evaluations record the signs of every
    LeakyReLU/ELU input; a component whose interval flips any sign
    straddles a kink, so the finite difference says nothing about the
    gradient there and another component is sampled in its place.

    Central differences also carry O(step^2 * f''') truncation error, and
    along sharply curved directions (biases feeding the layer norm) that
    can exceed a tight tolerance even when the analytic gradient is right.
    A component that misses tolerance is therefore re-measured at smaller
    steps under the same tolerance: truncation shrinks quadratically, so a
    correct gradient converges while a wrong one keeps failing at every
    step.
    """
    gt = _coerce_tensors(g)
    m64 = model.astype(np.float64)
    x64 = np.ascontiguousarray(x, dtype=np.float64)
    y = _label_vector(gt, labels)
    if jitter:
        jit_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 1])))
        for t in m64.params.values():
            t.data += jit_rng.uniform(-jitter, jitter, size=t.data.shape)

    def eval_loss() -> tuple[float, np.ndarray]:
        trace: list[np.ndarray] = []
        logits = _forward_graph(m64, gt, x64, False, None, kink_trace=trace)
        signs = np.concatenate([np.signbit(t).ravel() for t in trace])
        return float(ad.cross_entropy(logits, y).data), signs

    _, grads = loss_and_grads(m64, gt, x64, labels, train_mode=False)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    floor = 1e-8
    results: list[FdGroupResult] = []
    for name, tensor in m64.params.items():
        flat = tensor.data.reshape(-1)
        n = min(samples_per_group, flat.size)
        candidates = iter(rng.permutation(flat.size))
        max_abs = 0.0
        max_rel = 0.0
        ok = True
        checked = 0
        attempts = 0
        while checked < n and attempts < 20 * n:
            attempts += 1
            try:
                j = next(candidates)
            except StopIteration:
                break
            keep = flat[j]

            def central(h: float) -> tuple[float, bool]:
                flat[j] = keep + h
                hi, signs_hi = eval_loss()
                flat[j] = keep - h
                lo, signs_lo = eval_loss()
                flat[j] = keep
                return (hi - lo) / (2.0 * h), bool((signs_hi != signs_lo).any())

            fd, straddled = central(step)
            if straddled:
                continue
            checked += 1
            analytic = float(grads[name].reshape(-1)[j])
            diff = abs(analytic - fd)
            scale = max(abs(analytic), abs(fd))
            for h in (step / 4.0, step / 16.0):
                if diff <= tol * scale + floor:
                    break
                fd_h, straddled = central(h)
                if straddled:
                    break
                diff_h = abs(analytic - fd_h)
                if diff_h >= diff:
                    break  # not shrinking, so not truncation error
                diff = diff_h
                scale = max(abs(analytic), abs(fd_h))
            max_abs = max(max_abs, diff)
            if scale > 0:
                max_rel = max(max_rel, diff / scale)
            if diff > tol * scale + floor:
                ok = False
        results.append(FdGroupResult(name, checked, max_abs, max_rel, ok and checked > 0))
    return results


def dataset_from_docs(
    graphs: list[DocGraph],
    sentences: EmbeddingTable,
    label_sets: dict[str, LabelSet],
) -> list[tuple[GraphTensors, np.ndarray, LabelSet]]:
    """Assemble (tensors, features, labels) triples for training."""
    out = []
    for g in graphs:
        if g.doc_id not in label_sets:
            continue
        x = init_node_features(g, sentences)
        out.append((GraphTensors.from_graph(g), x, label_sets[g.doc_id]))
    if not out:
        raise EmptyDataset("no documents with labels")
    return out
