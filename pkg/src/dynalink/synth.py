"""Synthetic dynamic graphs with known temporal structure.

Two regimes: ``gen_periodic`` activates node blocks on a fixed cycle, so the
next step is predictable from history but not from the latest snapshot
alone; ``gen_recency`` evolves a random edge set with births and decay, so
the latest snapshot is nearly everything there is to know.  Both also
return the (T+1)-th snapshot, generated by the same law, as the prediction
target, and both write the standard edge-list text so synthetic data flows
through the same pipeline as real data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dyngraph import Snapshot, SnapshotSequence
from .seeding import rng_from


@dataclass(frozen=True)
class SynthConfig:
    nodes: int = 40
    steps: int = 6
    seed: int = 0
    # periodic regime
    blocks: int = 4
    period: int = 2
    intra_p: float = 0.5
    # recency regime
    birth_rate: float = 20.0
    survival: float = 0.9

    def validate_periodic(self) -> None:
        if self.nodes < 2:
            raise ValueError(f"need >= 2 nodes, got {self.nodes}")
        if self.steps < 1:
            raise ValueError(f"need >= 1 steps, got {self.steps}")
        if not (2 <= self.blocks <= self.nodes):
            raise ValueError(f"blocks must be in [2, nodes], got {self.blocks}")
        if not (2 <= self.period <= self.blocks):
            raise ValueError(f"period must be in [2, blocks], got {self.period}")
        if not (0.0 < self.intra_p <= 1.0):
            raise ValueError(f"intra_p must be in (0, 1], got {self.intra_p}")

    def validate_recency(self) -> None:
        if self.nodes < 2:
            raise ValueError(f"need >= 2 nodes, got {self.nodes}")
        if self.steps < 1:
            raise ValueError(f"need >= 1 steps, got {self.steps}")
        if self.birth_rate < 0:
            raise ValueError(f"birth_rate must be >= 0, got {self.birth_rate}")
        if not (0.0 <= self.survival <= 1.0):
            raise ValueError(f"survival must be in [0, 1], got {self.survival}")


def block_assignment(nodes: int, blocks: int) -> np.ndarray:
    """Contiguous near-equal blocks: node -> block index."""
    sizes = [nodes // blocks + (1 if i < nodes % blocks else 0) for i in range(blocks)]
    return np.repeat(np.arange(blocks), sizes)


def _periodic_step(cfg: SynthConfig, step: int) -> Snapshot:
    assign = block_assignment(cfg.nodes, cfg.blocks)
    rng = rng_from(cfg.seed, "periodic", step)
    edges = []
    for block in range(cfg.blocks):
        if block % cfg.period != step % cfg.period:
            continue
        members = np.flatnonzero(assign == block)
        for a in range(members.size):
            for b in range(a + 1, members.size):
                if rng.random() < cfg.intra_p:
                    edges.append((int(members[a]), int(members[b]), 1.0))
    return Snapshot.from_edges(step, cfg.nodes, edges)


def gen_periodic(cfg: SynthConfig) -> tuple[SnapshotSequence, Snapshot]:
    """Block-cyclic graphs: block j is active at step t iff j = t (mod period).

    Active blocks draw each internal pair independently with ``intra_p``,
    fresh per step.  Steps with the same residue share an active-block set,
    so the target (step T+1) looks like step T+1-period, not like step T.
    """
    cfg.validate_periodic()
    snapshots = [_periodic_step(cfg, t) for t in range(1, cfg.steps + 1)]
    target = _periodic_step(cfg, cfg.steps + 1)
    seq = SnapshotSequence(snapshots, cfg.nodes)
    return seq, target


def gen_recency(cfg: SynthConfig) -> tuple[SnapshotSequence, Snapshot]:
    """Birth/decay random graphs: alive edges persist with ``survival``;
    a Poisson(``birth_rate``) batch of uniformly random new pairs is born
    each step.  The latest snapshot is the best single predictor of the
    next, which is exactly what this regime is for.
    """
    cfg.validate_recency()
    alive: set[tuple[int, int]] = set()
    snapshots = []
    target = None
    for step in range(1, cfg.steps + 2):
        rng = rng_from(cfg.seed, "recency", step)
        survivors = set()
        for pair in sorted(alive):
            if rng.random() < cfg.survival:
                survivors.add(pair)
        births = rng.poisson(cfg.birth_rate)
        for _ in range(births):
            u, v = rng.integers(0, cfg.nodes, size=2)
            if u == v:
                continue
            survivors.add((min(int(u), int(v)), max(int(u), int(v))))
        alive = survivors
        snap = Snapshot.from_edges(step, cfg.nodes, [(u, v, 1.0) for u, v in sorted(alive)])
        if step <= cfg.steps:
            snapshots.append(snap)
        else:
            target = snap
    seq = SnapshotSequence(snapshots, cfg.nodes)
    return seq, target


def write_events(seq: SnapshotSequence, target: Snapshot, path: str) -> None:
    """Emit all steps (history + target) as ``src dst time`` lines.

    Integer step times partition back into the exact same snapshots when
    ingested with T+1 windows.
    """
    with open(path, "w") as fh:
        fh.write("# synthetic dynamic graph: src dst time [weight]\n")
        for snap in list(seq.snapshots) + [target]:
            for u, v, w in snap.edges():
                if w == 1.0:
                    fh.write(f"{u} {v} {snap.index}\n")
                else:
                    fh.write(f"{u} {v} {snap.index} {w}\n")
