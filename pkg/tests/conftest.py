"""Shared fixtures: tiny handcrafted corpora and builders."""

import numpy as np
import pytest

from sanet.data import NewsSample, PropagationTree, TreeNode


def make_chain_sample(sid, x, label, event=None, depth=2):
    """Sample whose tree is a root->child->... chain of the given depth."""
    x = np.asarray(x, dtype=np.float64)
    nodes = [TreeNode(f"{sid}-n0", 0, x)]
    edges = []
    rng = np.random.default_rng(abs(hash(sid)) % 1000)
    for i in range(1, depth + 1):
        nodes.append(TreeNode(f"{sid}-n{i}", i, x + rng.normal(0, 0.1, x.shape[0])))
        edges.append((f"{sid}-n{i-1}", f"{sid}-n{i}"))
    tree = PropagationTree(nodes=nodes, edges=edges, root_id=f"{sid}-n0")
    return NewsSample(id=sid, x=x, label=label, tree=tree, event=event)


@pytest.fixture
def tiny_corpus():
    """Eight samples, two events, trees of small depth, d_in=4."""
    rng = np.random.default_rng(7)
    samples = []
    for i in range(8):
        label = "fake" if i % 2 == 0 else "real"
        event = f"ev{i % 2}"
        samples.append(make_chain_sample(f"t{i}", rng.normal(0, 1, 4), label, event, depth=1 + i % 3))
    return samples
