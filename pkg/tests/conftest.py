"""Shared fixtures and small graph builders used across the suite."""

import numpy as np
import pytest

from dynalink.dyngraph import Snapshot, SnapshotSequence


def make_snapshot(index, node_count, edges):
    """Undirected snapshot from (u, v, w) triples."""
    return Snapshot.from_edges(index, node_count, edges)


def path_snapshot(n=3, index=0):
    """Unit-weight path 0-1-...-(n-1)."""
    return make_snapshot(index, n, [(i, i + 1, 1.0) for i in range(n - 1)])


def make_sequence(node_count, edge_lists, directed=False):
    snaps = [Snapshot.from_edges(k, node_count, edges, directed=directed)
             for k, edges in enumerate(edge_lists)]
    return SnapshotSequence(snaps, node_count, directed=directed)


def two_community_sequence(n=20, t=3, seed=0):
    """Two dense communities with a sprinkle of cross edges; structure is
    stable across snapshots so the walk loss has a learnable signal."""
    rng = np.random.Generator(np.random.PCG64(seed))
    half = n // 2
    edge_lists = []
    for _ in range(t):
        edges = []
        for u in range(n):
            for v in range(u + 1, n):
                same = (u < half) == (v < half)
                p = 0.6 if same else 0.05
                if rng.random() < p:
                    edges.append((u, v, 1.0))
        edge_lists.append(edges)
    return make_sequence(n, edge_lists)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(1234))
