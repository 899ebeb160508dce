"""Corpus model, file ingestion, cold-start splits, and two-copy construction.

A corpus file is JSON-lines: a manifest header followed by one record per
sample. Samples are treated as immutable after construction; all splitting
and stripping functions return new containers and never mutate inputs.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, StructureError

LABELS = ("fake", "real")
CORPUS_KIND = "sanet-corpus"


def label_index(label: str) -> int:
    try:
        return LABELS.index(label)
    except ValueError:
        raise DataError(f"unknown label {label!r}, expected one of {LABELS}") from None


@dataclass(eq=False)
class TreeNode:
    node_id: str
    order: int
    features: np.ndarray


@dataclass(eq=False)
class PropagationTree:
    """Rooted tree of reaction posts; edges point parent -> child.

    Nodes are kept in canonical order (timestamp order, then node id) so
    that every derived matrix is independent of input ordering.
    """

    nodes: list[TreeNode]
    edges: list[tuple[str, str]]
    root_id: str
    _adj_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.nodes = sorted(self.nodes, key=lambda n: (n.order, n.node_id))
        self.edges = [(str(p), str(c)) for p, c in self.edges]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def node_index(self) -> dict[str, int]:
        return {n.node_id: i for i, n in enumerate(self.nodes)}

    def feature_matrix(self) -> np.ndarray:
        cached = self._adj_cache.get("feats")
        if cached is None:
            cached = np.stack([n.features for n in self.nodes])
            self._adj_cache["feats"] = cached
        return cached

    def depth(self) -> int:
        """Number of edges on the longest root-to-leaf path."""
        children: dict[str, list[str]] = {}
        for p, c in self.edges:
            children.setdefault(p, []).append(c)
        best = 0
        stack = [(self.root_id, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            for c in children.get(node, ()):
                stack.append((c, d + 1))
        return best

    def validate(self, d_in: int | None = None, owner: str = "?") -> None:
        """Raise StructureError unless this is a single rooted tree."""
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise StructureError(f"sample {owner}: duplicate node ids in tree")
        known = set(ids)
        if self.root_id not in known:
            raise StructureError(f"sample {owner}: root {self.root_id!r} is not a node")
        parents: dict[str, str] = {}
        for p, c in self.edges:
            if p not in known or c not in known:
                raise StructureError(f"sample {owner}: edge ({p!r}, {c!r}) references unknown node")
            if c in parents:
                raise StructureError(f"sample {owner}: node {c!r} has multiple parents")
            parents[c] = p
        if self.root_id in parents:
            raise StructureError(f"sample {owner}: root {self.root_id!r} has a parent")
        rootless = [i for i in ids if i != self.root_id and i not in parents]
        if rootless:
            raise StructureError(f"sample {owner}: nodes {rootless} are unreachable (multiple roots)")
        # parent uniqueness + single root + full coverage imply a tree unless
        # a cycle is detached from the root; reachability rules that out
        children: dict[str, list[str]] = {}
        for c, p in parents.items():
            children.setdefault(p, []).append(c)
        seen = set()
        stack = [self.root_id]
        while stack:
            node = stack.pop()
            seen.add(node)
            stack.extend(children.get(node, ()))
        if len(seen) != len(ids):
            raise StructureError(f"sample {owner}: tree contains a cycle or disconnected nodes")
        dims = {n.features.shape for n in self.nodes}
        if len(dims) > 1:
            raise StructureError(f"sample {owner}: node feature dimensions differ: {sorted(dims)}")
        if d_in is not None and self.nodes[0].features.shape != (d_in,):
            raise StructureError(
                f"sample {owner}: node feature dimension {self.nodes[0].features.shape} != ({d_in},)"
            )


@dataclass(eq=False)
class NewsSample:
    id: str
    x: np.ndarray
    label: str
    tree: PropagationTree | None = None
    event: str | None = None

    @property
    def is_cold(self) -> bool:
        return self.tree is None

    def validate(self, d_in: int | None = None) -> None:
        if self.label not in LABELS:
            raise DataError(f"sample {self.id}: unknown label {self.label!r}")
        if d_in is not None and self.x.shape != (d_in,):
            raise DataError(f"sample {self.id}: feature dimension {self.x.shape} != ({d_in},)")
        if self.tree is not None:
            self.tree.validate(d_in=self.x.shape[0], owner=self.id)
            root = next(n for n in self.tree.nodes if n.node_id == self.tree.root_id)
            if not np.array_equal(root.features, self.x):
                raise StructureError(f"sample {self.id}: root features differ from content features")


@dataclass
class SplitInfo:
    kind: str
    seed: int | None = None
    train_ratio: float | None = None
    held_out_event: str | None = None
    stratified: bool = False


@dataclass(eq=False)
class DatasetSplit:
    train: list[NewsSample]
    test: list[NewsSample]
    provenance: SplitInfo


def samples_equal(a: NewsSample, b: NewsSample) -> bool:
    """Deep equality used by round-trip tests."""
    if (a.id, a.label, a.event) != (b.id, b.label, b.event):
        return False
    if not np.array_equal(a.x, b.x):
        return False
    if (a.tree is None) != (b.tree is None):
        return False
    if a.tree is None:
        return True
    ta, tb = a.tree, b.tree
    if ta.root_id != tb.root_id or sorted(ta.edges) != sorted(tb.edges):
        return False
    if len(ta.nodes) != len(tb.nodes):
        return False
    return all(
        na.node_id == nb.node_id and na.order == nb.order and np.array_equal(na.features, nb.features)
        for na, nb in zip(ta.nodes, tb.nodes)
    )


# ---------------------------------------------------------------------------
# fallback featurizer


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def hashed_bag_of_words(text: str, d_in: int, seed: int = 0) -> np.ndarray:
    """Deterministic signed hashing of tokens into a fixed-width vector.

    Fallback for corpora that ship raw text instead of precomputed vectors.
    """
    vec = np.zeros(d_in, dtype=np.float64)
    for token in _TOKEN_RE.findall(text.lower()):
        digest = hashlib.blake2b(f"{seed}:{token}".encode(), digest_size=8).digest()
        h = int.from_bytes(digest, "little")
        sign = 1.0 if h & 1 else -1.0
        vec[(h >> 1) % d_in] += sign
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


# ---------------------------------------------------------------------------
# corpus file I/O


def _features_from_field(value, d_in: int, hash_seed: int, where: str) -> np.ndarray:
    if isinstance(value, str):
        return hashed_bag_of_words(value, d_in, hash_seed)
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (d_in,):
        raise DataError(f"{where}: feature vector has shape {arr.shape}, manifest says ({d_in},)")
    return arr


def _parse_tree(obj, d_in: int, hash_seed: int, where: str) -> PropagationTree:
    try:
        nodes = [
            TreeNode(str(nid), int(order), _features_from_field(feats, d_in, hash_seed, where))
            for nid, order, feats in obj["nodes"]
        ]
        edges = [(str(p), str(c)) for p, c in obj["edges"]]
        root_id = str(obj["root_id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{where}: malformed tree object ({exc})") from exc
    return PropagationTree(nodes=nodes, edges=edges, root_id=root_id)


def load_corpus(path) -> list[NewsSample]:
    """Parse a corpus file, validating every sample against the manifest."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        return []
    try:
        manifest = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: line 1: invalid manifest ({exc})") from exc
    if manifest.get("kind") != CORPUS_KIND:
        raise DataError(f"{path}: not a corpus file (missing kind={CORPUS_KIND!r} manifest)")
    d_in = int(manifest["d_in"])
    hash_seed = int(manifest.get("hash_seed", 0))
    declared = int(manifest["n_samples"])
    if declared != len(lines) - 1:
        raise DataError(f"{path}: manifest declares {declared} samples, file has {len(lines) - 1}")

    samples: list[NewsSample] = []
    seen_ids: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        where = f"{path}: line {lineno}"
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}: invalid record ({exc})") from exc
        try:
            sid = str(rec["id"])
            label = str(rec["label"])
            feats = rec["x"] if "x" in rec else rec["text"]
        except KeyError as exc:
            raise DataError(f"{where}: record missing field {exc}") from exc
        if sid in seen_ids:
            raise DataError(f"{where}: duplicate sample id {sid!r}")
        seen_ids.add(sid)
        x = _features_from_field(feats, d_in, hash_seed, where)
        tree_obj = rec.get("tree")
        tree = _parse_tree(tree_obj, d_in, hash_seed, where) if tree_obj is not None else None
        sample = NewsSample(id=sid, x=x, label=label, tree=tree, event=rec.get("event"))
        sample.validate(d_in=d_in)
        samples.append(sample)
    return samples


def save_corpus(samples, path) -> None:
    """Write samples in the documented corpus format (deterministic bytes)."""
    samples = list(samples)
    d_in = int(samples[0].x.shape[0]) if samples else 0
    lines = [json.dumps({"kind": CORPUS_KIND, "d_in": d_in, "n_samples": len(samples)})]
    for s in samples:
        rec = {"id": s.id, "label": s.label, "x": s.x.tolist()}
        if s.event is not None:
            rec["event"] = s.event
        if s.tree is not None:
            rec["tree"] = {
                "root_id": s.tree.root_id,
                "nodes": [[n.node_id, n.order, n.features.tolist()] for n in s.tree.nodes],
                "edges": [[p, c] for p, c in s.tree.edges],
            }
        lines.append(json.dumps(rec))
    Path(path).write_text("\n".join(lines) + "\n")


def write_split_descriptor(split: DatasetSplit, path) -> None:
    """Record the exact test-id list for audit."""
    info = split.provenance
    payload = {
        "kind": info.kind,
        "seed": info.seed,
        "train_ratio": info.train_ratio,
        "held_out_event": info.held_out_event,
        "stratified": info.stratified,
        "n_train": len(split.train),
        "n_test": len(split.test),
        "test_ids": [s.id for s in split.test],
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# splits


def _round_half_up(v: float) -> int:
    return int(np.floor(v + 0.5))


def split_general(samples, train_ratio: float, seed: int, stratified: bool = False) -> DatasetSplit:
    """Uniform random split; train count is round-half-up(train_ratio * n)."""
    samples = list(samples)
    if not 0.0 < train_ratio < 1.0:
        raise ConfigError(f"train_ratio must lie in (0, 1), got {train_ratio}")
    n = len(samples)
    if n < 2:
        raise DataError(f"cannot split {n} sample(s) into train and test")
    rng = np.random.default_rng(seed)
    if stratified:
        train_idx: list[int] = []
        test_idx: list[int] = []
        for label in LABELS:
            idx = np.array([i for i, s in enumerate(samples) if s.label == label], dtype=np.int64)
            idx = idx[rng.permutation(len(idx))]
            k = _round_half_up(train_ratio * len(idx))
            k = min(max(k, 1 if len(idx) else 0), max(len(idx) - 1, 0)) if len(idx) > 1 else len(idx)
            train_idx.extend(idx[:k])
            test_idx.extend(idx[k:])
        order = list(train_idx), list(test_idx)
    else:
        perm = rng.permutation(n)
        k = min(max(_round_half_up(train_ratio * n), 1), n - 1)
        order = list(perm[:k]), list(perm[k:])
    train = [samples[i] for i in order[0]]
    test = [samples[i] for i in order[1]]
    if not train or not test:
        raise DataError("split produced an empty train or test set")
    info = SplitInfo(kind="general", seed=seed, train_ratio=train_ratio, stratified=stratified)
    return DatasetSplit(train=train, test=test, provenance=info)


def split_event_aware(samples, held_out_event: str) -> DatasetSplit:
    """Leave-one-event-out: the named event is the test set, the rest train."""
    samples = list(samples)
    missing = [s.id for s in samples if s.event is None]
    if missing:
        raise DataError(f"samples without event tags cannot be split by event: {missing[:5]}")
    events = sorted({s.event for s in samples})
    if held_out_event not in events:
        raise DataError(f"unknown event {held_out_event!r}; available events: {events}")
    test = [s for s in samples if s.event == held_out_event]
    train = [s for s in samples if s.event != held_out_event]
    if not train:
        raise DataError(f"holding out event {held_out_event!r} leaves no training samples")
    info = SplitInfo(kind="event-aware", held_out_event=held_out_event)
    return DatasetSplit(train=train, test=test, provenance=info)


def strip_propagation(samples) -> list[NewsSample]:
    """Return the same samples with trees removed; idempotent."""
    return [dataclasses.replace(s, tree=None) if s.tree is not None else s for s in samples]


def make_training_copies(train) -> tuple[list[NewsSample], list[NewsSample]]:
    """Full copy plus a propagation-stripped twin, aligned by position/id."""
    full = list(train)
    return full, strip_propagation(full)


def feature_dim(samples) -> int:
    """Common feature dimension, validated across all samples."""
    samples = list(samples)
    if not samples:
        raise DataError("empty sample collection has no feature dimension")
    dims = {s.x.shape[0] for s in samples}
    if len(dims) != 1:
        raise DataError(f"inconsistent feature dimensions in corpus: {sorted(dims)}")
    return dims.pop()
