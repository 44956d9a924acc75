"""Random-walk pair sampling and degree-weighted negative sampling.

Walks are weight-proportional: the next node is drawn among the current
node's neighbors with probability proportional to edge weight.  Pairs are
all ordered co-occurrences within a sliding window.  Negatives come from
the degree^0.75 distribution of the same snapshot.

Determinism: every walk stream is seeded by (seed, start node), so results
are reproducible and independent of iteration or worker order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyngraph import Snapshot, node_degrees
from .seeding import rng_from


@dataclass(frozen=True)
class WalkConfig:
    walk_length: int = 40
    walks_per_node: int = 10
    window: int = 10
    negatives_per_positive: int = 10
    seed: int = 0

    def validate(self) -> None:
        if self.walk_length < 1:
            raise ValueError(f"walk_length must be >= 1, got {self.walk_length}")
        if self.walks_per_node < 1:
            raise ValueError(f"walks_per_node must be >= 1, got {self.walks_per_node}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.negatives_per_positive < 0:
            raise ValueError(
                f"negatives_per_positive must be >= 0, got {self.negatives_per_positive}")


@dataclass
class PairBatch:
    """Positive co-occurrence pairs for one snapshot plus their negatives.

    ``pos_v``/``pos_u`` align elementwise; ``neg`` has one row of
    ``negatives_per_positive`` sampled nodes per positive.
    """
    t: int
    pos_v: np.ndarray
    pos_u: np.ndarray
    neg: np.ndarray

    @property
    def n_pos(self) -> int:
        return int(self.pos_v.size)


def random_walks(snapshot: Snapshot, cfg: WalkConfig) -> list[np.ndarray]:
    """Weight-proportional walks: ``walks_per_node`` from every non-isolated node.

    A walk stops early only if it reaches a node with no neighbors (possible
    on directed graphs).  Start nodes are visited in ascending id order and
    each start node owns its own derived random stream.
    """
    cfg.validate()
    neighbors: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    for u, nbrs in snapshot.adj.items():
        if not nbrs:
            continue
        ids = np.array([v for v, _ in nbrs], dtype=np.int64)
        weights = np.array([w for _, w in nbrs])
        cum = np.cumsum(weights)
        neighbors[u] = (ids, cum / cum[-1])

    walks = []
    for start in sorted(neighbors):
        rng = rng_from(cfg.seed, "walk", start)
        for _ in range(cfg.walks_per_node):
            path = np.empty(cfg.walk_length, dtype=np.int64)
            path[0] = start
            current = start
            steps = 1
            for i in range(1, cfg.walk_length):
                entry = neighbors.get(current)
                if entry is None:
                    break  # dead end: truncate
                ids, cum = entry
                current = int(ids[np.searchsorted(cum, rng.random(), side="right")])
                path[i] = current
                steps += 1
            walks.append(path[:steps])
    return walks


def cooccurrence_pairs(walks: list[np.ndarray], window: int) -> tuple[np.ndarray, np.ndarray]:
    """All ordered pairs of distinct nodes within ``window`` positions.

    Both directions of each positional pair are kept, as are repeats from
    revisits; only same-node pairs are dropped.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    vs, us = [], []
    for walk in walks:
        length = walk.size
        for offset in range(1, min(window, length - 1) + 1):
            a = walk[:-offset]
            b = walk[offset:]
            keep = a != b
            vs.append(a[keep])
            us.append(b[keep])
            vs.append(b[keep])
            us.append(a[keep])
    if not vs:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(vs), np.concatenate(us)


def negative_distribution(snapshot: Snapshot) -> np.ndarray:
    """Sampling weights proportional to degree^0.75; isolated nodes get zero."""
    deg = node_degrees(snapshot)
    if not deg.any():
        raise ValueError(f"snapshot {snapshot.index} has no edges: no negative distribution")
    weights = deg ** 0.75
    return weights / weights.sum()


def sample_negatives(dist: np.ndarray, count: int, seed: int) -> np.ndarray:
    """``count`` i.i.d. draws from ``dist`` by inverse CDF, reproducible by seed."""
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 1 or dist.size == 0:
        raise ValueError(f"distribution must be a non-empty vector, got shape {dist.shape}")
    if (dist < 0).any() or not np.isclose(dist.sum(), 1.0):
        raise ValueError("distribution entries must be non-negative and sum to 1")
    cum = np.cumsum(dist)
    cum[-1] = 1.0
    rng = rng_from(seed, "negatives")
    draws = rng.random(count)
    return np.searchsorted(cum, draws, side="right").astype(np.int64)


def build_pair_batch(snapshot: Snapshot, cfg: WalkConfig) -> PairBatch:
    """Walk, window, and negative-sample one snapshot into a training batch."""
    walks = random_walks(snapshot, cfg)
    pos_v, pos_u = cooccurrence_pairs(walks, cfg.window)
    q = cfg.negatives_per_positive
    if pos_v.size == 0 or q == 0:
        neg = np.empty((pos_v.size, q), dtype=np.int64)
    else:
        dist = negative_distribution(snapshot)
        flat = sample_negatives(dist, pos_v.size * q, seed=cfg.seed)
        neg = flat.reshape(pos_v.size, q)
    return PairBatch(snapshot.index, pos_v, pos_u, neg)


def dump_pair_batches(batches: list[PairBatch], path: str) -> None:
    """Plain-text dump: ``t v u`` per positive, ``t v u NEG`` per negative."""
    with open(path, "w") as fh:
        for batch in batches:
            for i in range(batch.n_pos):
                v, u = batch.pos_v[i], batch.pos_u[i]
                fh.write(f"{batch.t} {v} {u}\n")
                for u_neg in batch.neg[i]:
                    fh.write(f"{batch.t} {v} {u_neg} NEG\n")
