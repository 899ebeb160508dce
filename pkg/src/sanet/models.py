"""Encoder zoo, classifier head, and structure-discriminator head.

Every encoder maps (content vector, optional propagation tree) to a hidden
row vector of width ``d_h``. A missing tree is consumed as the single-node
graph holding the content vector, so the cold-start forward pass is defined
for every encoder and coincides bitwise with a one-node tree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import PropagationTree
from .errors import ConfigError, DataError, DimensionError

ENCODER_KINDS = ("mlp", "gcn", "gat", "bigcn")
N_CLASSES = 2
GAT_HEADS = 4
LEAKY_SLOPE = 0.2
CHECKPOINT_KIND = "sanet-checkpoint"

# discriminator class layout: index matches the structure label y_d
STRUCT_CLASS = 1  # representation was computed with propagation
CONTENT_CLASS = 0


@dataclass(eq=False)
class HiddenRep:
    h: Tensor  # 1 x d_h row
    has_structure: bool


@dataclass(eq=False)
class ParamSets:
    """The three trainable groups: encoder, classifier, discriminator."""

    encoder_kind: str
    d_in: int
    d_h: int
    seed: int
    encoder: dict[str, Tensor]
    classifier: dict[str, Tensor]
    discriminator: dict[str, Tensor]

    def named(self) -> list[tuple[str, Tensor]]:
        out = [(f"encoder.{k}", t) for k, t in self.encoder.items()]
        out += [(f"classifier.{k}", t) for k, t in self.classifier.items()]
        out += [(f"discriminator.{k}", t) for k, t in self.discriminator.items()]
        return out

    def encoder_params(self) -> list[Tensor]:
        return list(self.encoder.values())

    def classifier_params(self) -> list[Tensor]:
        return list(self.classifier.values())

    def discriminator_params(self) -> list[Tensor]:
        return list(self.discriminator.values())

    def all_params(self) -> list[Tensor]:
        return [t for _, t in self.named()]

    def n_parameters(self) -> int:
        return sum(t.value.size for t in self.all_params())

    def copy(self) -> "ParamSets":
        def clone(group):
            return {k: ad.parameter(t.value.copy(), name=t.name) for k, t in group.items()}

        return ParamSets(
            encoder_kind=self.encoder_kind, d_in=self.d_in, d_h=self.d_h, seed=self.seed,
            encoder=clone(self.encoder), classifier=clone(self.classifier),
            discriminator=clone(self.discriminator),
        )


def parameter_shapes(encoder_kind: str, d_in: int, d_h: int) -> dict[str, tuple[int, ...]]:
    """Shapes of every trainable tensor, in initialization order."""
    if encoder_kind not in ENCODER_KINDS:
        raise ConfigError(f"unknown encoder {encoder_kind!r}, expected one of {ENCODER_KINDS}")
    shapes: dict[str, tuple[int, ...]] = {}
    if encoder_kind == "mlp":
        shapes.update({
            "encoder.w1": (d_in, d_h), "encoder.b1": (d_h,),
            "encoder.w2": (d_h, d_h), "encoder.b2": (d_h,),
        })
    elif encoder_kind == "gcn":
        shapes.update({"encoder.w1": (d_in, d_h), "encoder.w2": (d_h, d_h)})
    elif encoder_kind == "gat":
        if d_h % GAT_HEADS != 0:
            raise ConfigError(f"gat needs hidden dim divisible by {GAT_HEADS}, got {d_h}")
        dk = d_h // GAT_HEADS
        for k in range(GAT_HEADS):
            shapes[f"encoder.w1_h{k}"] = (d_in, dk)
            shapes[f"encoder.a1l_h{k}"] = (dk, 1)
            shapes[f"encoder.a1r_h{k}"] = (dk, 1)
        shapes.update({
            "encoder.w2": (d_h, d_h), "encoder.a2l": (d_h, 1), "encoder.a2r": (d_h, 1),
        })
    else:  # bigcn
        shapes.update({
            "encoder.td_w1": (d_in, d_h), "encoder.td_w2": (d_h, d_h),
            "encoder.bu_w1": (d_in, d_h), "encoder.bu_w2": (d_h, d_h),
            "encoder.wp": (2 * d_h, d_h), "encoder.bp": (d_h,),
        })
    shapes.update({
        "classifier.w": (d_h, N_CLASSES), "classifier.b": (N_CLASSES,),
        "discriminator.w": (d_h, N_CLASSES), "discriminator.b": (N_CLASSES,),
    })
    return shapes


def init_params(encoder_kind: str, d_in: int, d_h: int, seed: int) -> ParamSets:
    """Glorot-uniform weights, zero biases, drawn in a fixed seeded order."""
    shapes = parameter_shapes(encoder_kind, d_in, d_h)
    rng = np.random.default_rng(seed)
    groups: dict[str, dict[str, Tensor]] = {"encoder": {}, "classifier": {}, "discriminator": {}}
    for name, shape in shapes.items():
        group, local = name.split(".", 1)
        if local.startswith("b"):
            value = np.zeros(shape)
        else:
            fan_in = shape[0]
            fan_out = shape[1] if len(shape) > 1 else 1
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            value = rng.uniform(-limit, limit, shape)
        groups[group][local] = ad.parameter(value, name=name)
    return ParamSets(
        encoder_kind=encoder_kind, d_in=d_in, d_h=d_h, seed=seed,
        encoder=groups["encoder"], classifier=groups["classifier"],
        discriminator=groups["discriminator"],
    )


# ---------------------------------------------------------------------------
# graph matrices


def symmetric_adjacency(tree: PropagationTree) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 over the undirected tree with self-loops."""
    cached = tree._adj_cache.get("sym")
    if cached is not None:
        return cached
    n = tree.n_nodes
    index = tree.node_index()
    m = np.eye(n)
    for p, c in tree.edges:
        m[index[p], index[c]] = 1.0
        m[index[c], index[p]] = 1.0
    d = m.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    adj = m * inv_sqrt[:, None] * inv_sqrt[None, :]
    tree._adj_cache["sym"] = adj
    return adj


def directed_adjacency(tree: PropagationTree, reverse: bool = False) -> np.ndarray:
    """Degree-normalized directed adjacency with self-loops.

    Rows index receivers: with ``reverse=False`` messages flow parent to
    child (propagation direction); ``reverse=True`` flips every edge
    (dispersion direction).
    """
    key = "bu" if reverse else "td"
    cached = tree._adj_cache.get(key)
    if cached is not None:
        return cached
    n = tree.n_nodes
    index = tree.node_index()
    m = np.eye(n)
    for p, c in tree.edges:
        recv, send = (index[p], index[c]) if reverse else (index[c], index[p])
        m[recv, send] = 1.0
    dr = m.sum(axis=1)
    dc = m.sum(axis=0)
    adj = m / np.sqrt(dr)[:, None] / np.sqrt(dc)[None, :]
    tree._adj_cache[key] = adj
    return adj


def attention_mask(tree: PropagationTree) -> np.ndarray:
    """Boolean neighborhoods (undirected edges plus self) for attention."""
    cached = tree._adj_cache.get("mask")
    if cached is not None:
        return cached
    n = tree.n_nodes
    index = tree.node_index()
    mask = np.eye(n, dtype=bool)
    for p, c in tree.edges:
        mask[index[p], index[c]] = True
        mask[index[c], index[p]] = True
    tree._adj_cache["mask"] = mask
    return mask


def _check_input(x: np.ndarray, d_in: int) -> None:
    if x.shape != (d_in,):
        raise DimensionError(f"content vector has shape {x.shape}, model expects ({d_in},)")


def _feats_tensor(tree: PropagationTree) -> Tensor:
    # constant Tensors never receive gradients, so one per tree can be
    # shared across every forward pass that consumes it
    cached = tree._adj_cache.get("feats_tensor")
    if cached is None:
        cached = ad.constant(tree.feature_matrix())
        tree._adj_cache["feats_tensor"] = cached
    return cached


# ---------------------------------------------------------------------------
# encoders


def graph_conv(adj: np.ndarray, h: Tensor, w: Tensor) -> Tensor:
    """One propagation layer: relu(adj @ h @ w)."""
    return ad.relu(ad.matmul(ad.constant(adj), ad.matmul(h, w)))


def gat_layer(h: Tensor, mask: np.ndarray | None, w: Tensor, a_l: Tensor, a_r: Tensor) -> Tensor:
    """One attention head: softmax over masked leaky-relu logits, then mix.

    ``mask=None`` marks the single-node graph, where the self attention
    weight is exactly 1 and the layer reduces to the projection.
    """
    z = ad.matmul(h, w)
    if mask is None:
        return z
    logits = ad.leaky_relu(ad.pairwise_sum(ad.matmul(z, a_l), ad.matmul(z, a_r)), LEAKY_SLOPE)
    alpha = ad.masked_row_softmax(logits, mask)
    return ad.matmul(alpha, z)


def _encode_mlp(params: ParamSets, x: np.ndarray, tree) -> Tensor:
    enc = params.encoder
    h = ad.relu(ad.affine(ad.constant(x[None, :]), enc["w1"], enc["b1"]))
    return ad.affine(h, enc["w2"], enc["b2"])


def _encode_gcn(params: ParamSets, x: np.ndarray, tree) -> Tensor:
    if tree is None:
        h0, adj = ad.constant(x[None, :]), np.ones((1, 1))
    else:
        h0, adj = _feats_tensor(tree), symmetric_adjacency(tree)
    enc = params.encoder
    h = graph_conv(adj, h0, enc["w1"])
    h = graph_conv(adj, h, enc["w2"])
    return ad.mean_rows(h)


def _encode_gat(params: ParamSets, x: np.ndarray, tree) -> Tensor:
    if tree is None:
        h0, mask = ad.constant(x[None, :]), None
    else:
        h0 = _feats_tensor(tree)
        mask = attention_mask(tree) if tree.n_nodes > 1 else None
    enc = params.encoder
    heads = [
        gat_layer(h0, mask, enc[f"w1_h{k}"], enc[f"a1l_h{k}"], enc[f"a1r_h{k}"])
        for k in range(GAT_HEADS)
    ]
    h1 = ad.relu(ad.concat(heads, axis=1))
    h2 = gat_layer(h1, mask, enc["w2"], enc["a2l"], enc["a2r"])
    return ad.mean_rows(h2)


def _encode_bigcn(params: ParamSets, x: np.ndarray, tree) -> Tensor:
    enc = params.encoder
    if tree is None:
        h0 = ad.constant(x[None, :])
        adj_td = adj_bu = np.ones((1, 1))
    else:
        h0 = _feats_tensor(tree)
        adj_td = directed_adjacency(tree, reverse=False)
        adj_bu = directed_adjacency(tree, reverse=True)
    h_td = ad.mean_rows(graph_conv(adj_td, graph_conv(adj_td, h0, enc["td_w1"]), enc["td_w2"]))
    h_bu = ad.mean_rows(graph_conv(adj_bu, graph_conv(adj_bu, h0, enc["bu_w1"]), enc["bu_w2"]))
    return ad.affine(ad.concat([h_td, h_bu], axis=1), enc["wp"], enc["bp"])


_ENCODE = {"mlp": _encode_mlp, "gcn": _encode_gcn, "gat": _encode_gat, "bigcn": _encode_bigcn}


def encode_sample(params: ParamSets, x: np.ndarray, tree: PropagationTree | None) -> HiddenRep:
    """Latent representation of one sample; never fails on a missing tree."""
    _check_input(x, params.d_in)
    if tree is not None and params.encoder_kind != "mlp":
        dims = {n.features.shape[0] for n in tree.nodes}
        if dims != {params.d_in}:
            raise DimensionError(f"tree node dimensions {sorted(dims)} != model d_in {params.d_in}")
    if params.encoder_kind == "mlp":
        h = _encode_mlp(params, x, None)
        return HiddenRep(h=h, has_structure=False)
    h = _ENCODE[params.encoder_kind](params, x, tree)
    return HiddenRep(h=h, has_structure=tree is not None)


def _block_diag(mats, dtype=np.float64) -> np.ndarray:
    sizes = [m.shape[0] for m in mats]
    total = sum(sizes)
    out = np.zeros((total, total), dtype=dtype)
    lo = 0
    for m, n in zip(mats, sizes):
        out[lo:lo + n, lo:lo + n] = m
        lo += n
    return out


def encode_batch(params: ParamSets, samples) -> Tensor:
    """Hidden rows for a batch of samples in one block-diagonal graph.

    Numerically equivalent to stacking per-sample ``encode_sample`` outputs
    (messages never cross block boundaries), but the recorded graph has a
    fixed op count per batch instead of per sample.
    """
    samples = list(samples)
    kind = params.encoder_kind
    enc = params.encoder
    for s in samples:
        _check_input(s.x, params.d_in)

    if kind == "mlp":
        x = ad.constant(np.stack([s.x for s in samples]))
        h = ad.relu(ad.affine(x, enc["w1"], enc["b1"]))
        return ad.affine(h, enc["w2"], enc["b2"])

    trees = [s.tree for s in samples]
    sizes = [1 if t is None else t.n_nodes for t in trees]
    feats = np.concatenate([
        s.x[None, :] if t is None else t.feature_matrix()
        for s, t in zip(samples, trees)
    ])
    readout = np.zeros((len(samples), feats.shape[0]))
    lo = 0
    for i, n in enumerate(sizes):
        readout[i, lo:lo + n] = 1.0 / n
        lo += n
    h0 = ad.constant(feats)
    mean_blocks = ad.constant(readout)

    if kind == "gcn":
        adj = _block_diag([np.ones((1, 1)) if t is None else symmetric_adjacency(t) for t in trees])
        h = graph_conv(adj, graph_conv(adj, h0, enc["w1"]), enc["w2"])
        return ad.matmul(mean_blocks, h)

    if kind == "gat":
        if all(n == 1 for n in sizes):
            mask = None
        else:
            mask = _block_diag(
                [np.eye(1, dtype=bool) if t is None else attention_mask(t) for t in trees],
                dtype=bool,
            )
        heads = [
            gat_layer(h0, mask, enc[f"w1_h{k}"], enc[f"a1l_h{k}"], enc[f"a1r_h{k}"])
            for k in range(GAT_HEADS)
        ]
        h1 = ad.relu(ad.concat(heads, axis=1))
        h2 = gat_layer(h1, mask, enc["w2"], enc["a2l"], enc["a2r"])
        return ad.matmul(mean_blocks, h2)

    # bigcn
    adj_td = _block_diag([np.ones((1, 1)) if t is None else directed_adjacency(t) for t in trees])
    adj_bu = _block_diag(
        [np.ones((1, 1)) if t is None else directed_adjacency(t, reverse=True) for t in trees])
    h_td = ad.matmul(mean_blocks, graph_conv(adj_td, graph_conv(adj_td, h0, enc["td_w1"]), enc["td_w2"]))
    h_bu = ad.matmul(mean_blocks, graph_conv(adj_bu, graph_conv(adj_bu, h0, enc["bu_w1"]), enc["bu_w2"]))
    return ad.affine(ad.concat([h_td, h_bu], axis=1), enc["wp"], enc["bp"])


def encode_content(x: np.ndarray, params: ParamSets) -> HiddenRep:
    """Content-only two-layer perceptron encoder."""
    if params.encoder_kind != "mlp":
        raise ConfigError(f"encode_content needs an mlp parameter set, got {params.encoder_kind}")
    return encode_sample(params, x, None)


def encode_gcn(x, tree, params):
    return encode_sample(params, x, tree)


def encode_gat(x, tree, params):
    return encode_sample(params, x, tree)


def encode_bigcn(x, tree, params):
    return encode_sample(params, x, tree)


# ---------------------------------------------------------------------------
# heads


def class_logits(h: Tensor, params: ParamSets) -> Tensor:
    return ad.affine(h, params.classifier["w"], params.classifier["b"])


def disc_logits(h: Tensor, params: ParamSets, coeff: float) -> Tensor:
    return ad.affine(ad.grad_reverse(h, coeff), params.discriminator["w"], params.discriminator["b"])


def classify(h, params: ParamSets) -> np.ndarray:
    """Probability vector over (fake, real) for one hidden row."""
    t = h if isinstance(h, Tensor) else ad.constant(np.asarray(h, dtype=np.float64)[None, :])
    if t.value.shape != (1, params.d_h):
        raise DimensionError(f"hidden vector shape {t.value.shape} != (1, {params.d_h})")
    return ad.softmax(class_logits(t, params).value)[0]


def discriminate(h, coeff: float, params: ParamSets) -> float:
    """Probability that the representation was computed with propagation."""
    t = h if isinstance(h, Tensor) else ad.constant(np.asarray(h, dtype=np.float64)[None, :])
    if t.value.shape != (1, params.d_h):
        raise DimensionError(f"hidden vector shape {t.value.shape} != (1, {params.d_h})")
    return float(ad.softmax(disc_logits(t, params, coeff).value)[0, STRUCT_CLASS])


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: ParamSets, path, provenance: dict | None = None) -> None:
    """Serialize a parameter set bit-exactly (floats via repr round-trip)."""
    payload = {
        "kind": CHECKPOINT_KIND,
        "encoder": params.encoder_kind,
        "d_in": params.d_in,
        "d_h": params.d_h,
        "seed": params.seed,
        "params": {name: t.value.tolist() for name, t in params.named()},
    }
    if provenance is not None:
        payload["provenance"] = provenance
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_checkpoint(path) -> ParamSets:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid checkpoint ({exc})") from exc
    if payload.get("kind") != CHECKPOINT_KIND:
        raise DataError(f"{path}: not a checkpoint file")
    kind, d_in, d_h = payload["encoder"], int(payload["d_in"]), int(payload["d_h"])
    expected = parameter_shapes(kind, d_in, d_h)
    stored = payload["params"]
    if set(stored) != set(expected):
        raise DataError(f"{path}: parameter names do not match encoder {kind!r}")
    groups: dict[str, dict[str, Tensor]] = {"encoder": {}, "classifier": {}, "discriminator": {}}
    for name, shape in expected.items():
        value = np.asarray(stored[name], dtype=np.float64)
        if value.shape != shape:
            raise DataError(f"{path}: parameter {name} has shape {value.shape}, expected {shape}")
        group, local = name.split(".", 1)
        groups[group][local] = ad.parameter(value, name=name)
    return ParamSets(
        encoder_kind=kind, d_in=d_in, d_h=d_h, seed=int(payload["seed"]),
        encoder=groups["encoder"], classifier=groups["classifier"],
        discriminator=groups["discriminator"],
    )
