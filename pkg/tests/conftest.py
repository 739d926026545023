"""Shared fixtures: tiny deterministic graphs and a small model factory."""

import numpy as np
import pytest

from ttgad import gnn
from ttgad.graphstore import build_graph


@pytest.fixture
def path3():
    """Three nodes in a path 0-1-2, labels mark node 2 anomalous."""
    features = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return build_graph("path3", 3, [(0, 1), (1, 2)], features,
                       labels=[0, 0, 1])


@pytest.fixture
def triangle_iso():
    """Triangle on 0,1,2 plus isolated node 3."""
    features = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 2.0]])
    return build_graph("tri_iso", 4, [(0, 1), (1, 2), (0, 2)], features,
                       labels=[0, 0, 1, 1])


@pytest.fixture
def star5():
    """Star with center 0 and leaves 1..4, one-hot-ish features."""
    features = np.eye(5)
    edges = [(0, i) for i in range(1, 5)]
    return build_graph("star5", 5, edges, features, labels=[0, 0, 0, 0, 1])


@pytest.fixture
def edgeless3():
    """Three nodes, no edges, all labeled."""
    features = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
    return build_graph("edgeless3", 3, [], features, labels=[0, 0, 1])


def small_bundle(feature_dim, width=4, num_layers=2, seed=0, nsaw_enabled=True,
                 identity_encoder=False):
    rng = np.random.default_rng(seed)
    return gnn.init_bundle(rng, feature_dim, p=width, hidden_dim=width,
                           attn_dim=width, num_layers=num_layers,
                           nsaw_enabled=nsaw_enabled,
                           identity_encoder=identity_encoder)


@pytest.fixture
def bundle_factory():
    return small_bundle
