"""Synthetic cascade generator for desk-scale cold-start experiments.

Fake and real samples differ along two axes controlled independently:
``content_separation`` shifts the class means of the content vectors, and
``structure_separation`` makes fake cascades deeper/wider and gives their
reaction posts a class-conditioned feature offset. With
``structure_separation=0`` the propagation trees carry no class signal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import NewsSample, PropagationTree, TreeNode
from .errors import ConfigError

_BASE_DEPTH = 2.0
_DEPTH_JITTER = 0.75
_BRANCH_BASE = 0.3
_BRANCH_PER_SEP = 0.15
_NODE_NOISE = 0.5
_NODE_OFFSET_PER_SEP = 0.25
_CONTENT_DRIFT = 0.5
_MAX_NODES = 40


@dataclass
class SyntheticConfig:
    n_samples: int = 2000
    fake_ratio: float = 0.5
    d_in: int = 16
    content_separation: float = 0.5
    structure_separation: float = 2.0
    max_depth: int = 8
    max_branching: int = 3
    n_events: int = 5

    def validate(self) -> None:
        if self.n_samples < 1:
            raise ConfigError(f"n_samples must be positive, got {self.n_samples}")
        if not 0.0 < self.fake_ratio < 1.0:
            raise ConfigError(f"fake_ratio must lie in (0, 1), got {self.fake_ratio}")
        if self.d_in < 1:
            raise ConfigError(f"d_in must be positive, got {self.d_in}")
        if self.content_separation < 0 or self.structure_separation < 0:
            raise ConfigError("separations must be nonnegative")
        if self.max_depth < 1 or self.max_branching < 1:
            raise ConfigError("max_depth and max_branching must be positive")
        if self.n_events < 1:
            raise ConfigError(f"n_events must be positive, got {self.n_events}")


def _directions(d_in: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit direction for content means and a second one for node offsets."""
    u1 = np.ones(d_in) / np.sqrt(d_in)
    u2 = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(d_in)]) / np.sqrt(d_in)
    return u1, u2


def _grow_tree(sample_id: str, x: np.ndarray, fake: bool, cfg: SyntheticConfig, rng) -> PropagationTree:
    target_depth = int(np.clip(
        np.floor(rng.normal(_BASE_DEPTH + (cfg.structure_separation if fake else 0.0), _DEPTH_JITTER) + 0.5),
        1, cfg.max_depth,
    ))
    branch_rate = _BRANCH_BASE + (_BRANCH_PER_SEP * cfg.structure_separation if fake else 0.0)
    u1, u2 = _directions(cfg.d_in)
    # reaction posts carry a clean class signal in a direction orthogonal to
    # the content axis, plus a drift along the content axis that inverts the
    # classes' relative order (debunking replies pull fake news toward
    # real-looking content); both effects scale with structure_separation,
    # so zero separation leaves the trees class-agnostic
    sep = cfg.structure_separation
    if fake:
        offset = sep * (-_CONTENT_DRIFT * u1 + _NODE_OFFSET_PER_SEP * u2)
    else:
        offset = sep * (_CONTENT_DRIFT / 5.0 * u1 - _NODE_OFFSET_PER_SEP * u2)

    root = TreeNode(f"{sample_id}-n0", 0, x)
    nodes = [root]
    edges: list[tuple[str, str]] = []
    frontier = [root.node_id]
    counter = 1
    for level in range(1, target_depth + 1):
        next_frontier: list[str] = []
        for j, parent in enumerate(frontier):
            # the first frontier node always branches so the target depth is reached
            k = 1 + int(rng.poisson(branch_rate)) if j == 0 else int(rng.poisson(branch_rate))
            k = min(k, cfg.max_branching)
            for _ in range(k):
                if len(nodes) >= _MAX_NODES:
                    break
                feats = x + offset + rng.normal(0.0, _NODE_NOISE, cfg.d_in)
                child = TreeNode(f"{sample_id}-n{counter}", counter, feats)
                counter += 1
                nodes.append(child)
                edges.append((parent, child.node_id))
                next_frontier.append(child.node_id)
        if not next_frontier:
            break
        frontier = next_frontier
    return PropagationTree(nodes=nodes, edges=edges, root_id=root.node_id)


def generate_synthetic(config: SyntheticConfig, seed: int) -> list[NewsSample]:
    """Build a labeled corpus of cascades, fully deterministic per seed."""
    config.validate()
    rng = np.random.default_rng(seed)
    u1, _ = _directions(config.d_in)
    n_fake = int(np.floor(config.n_samples * config.fake_ratio + 0.5))

    samples: list[NewsSample] = []
    for i in range(config.n_samples):
        fake = i < n_fake
        mean = (0.5 if fake else -0.5) * config.content_separation * u1
        x = mean + rng.standard_normal(config.d_in)
        sid = f"s{i:05d}"
        tree = _grow_tree(sid, x, fake, config, rng)
        samples.append(NewsSample(
            id=sid,
            x=x,
            label="fake" if fake else "real",
            tree=tree,
            event=f"e{i % config.n_events}",
        ))
    return samples


def mean_depth_by_label(samples) -> dict[str, float]:
    """Average tree depth per label; cold samples count as depth 0."""
    sums = {"fake": 0.0, "real": 0.0}
    counts = {"fake": 0, "real": 0}
    for s in samples:
        sums[s.label] += s.tree.depth() if s.tree is not None else 0
        counts[s.label] += 1
    return {lbl: (sums[lbl] / counts[lbl] if counts[lbl] else 0.0) for lbl in sums}
