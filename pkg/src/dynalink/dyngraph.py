"""Temporal edge-event ingestion and snapshot partitioning.

The input is plain text: one event per line, ``src dst time [weight]``,
whitespace separated, with ``#`` or ``%`` comment lines.  Node labels are
integers and get remapped to dense ids in order of first appearance.  Events
are then bucketed into T equal-width time windows (half-open, except the
last which also contains the maximum timestamp), summing duplicate pair
weights within a window.
"""

from __future__ import annotations

import io
import struct
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, TextIO, Union

import numpy as np


class DataFormatError(ValueError):
    """Malformed input text, cache, or checkpoint bytes."""


@dataclass(frozen=True)
class EdgeEvent:
    """One timestamped interaction, with dense node ids."""
    src: int
    dst: int
    time: float
    weight: float = 1.0


class Snapshot:
    """One time window's graph: a weighted adjacency over a fixed node universe.

    Adjacency rows are sorted neighbor lists.  For undirected graphs both
    directions are stored, so ``adj[u]`` is the full neighborhood of u.
    Self loops never appear (self events are dropped at partition time).
    """

    def __init__(self, index: int, node_count: int,
                 adj: dict[int, list[tuple[int, float]]]):
        self.index = index
        self.node_count = node_count
        self.adj = adj

    @classmethod
    def from_edges(cls, index: int, node_count: int,
                   edges: Iterable[tuple[int, int, float]],
                   directed: bool = False) -> "Snapshot":
        """Build from (u, v, w) triples, summing duplicates, dropping selfs."""
        acc: dict[int, dict[int, float]] = {}
        for u, v, w in edges:
            if u == v:
                continue
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise ValueError(f"edge ({u}, {v}) outside node universe of size {node_count}")
            if w <= 0:
                raise ValueError(f"edge ({u}, {v}) has non-positive weight {w}")
            row = acc.setdefault(u, {})
            row[v] = row.get(v, 0.0) + w
            if not directed:
                row = acc.setdefault(v, {})
                row[u] = row.get(u, 0.0) + w
        adj = {u: sorted(nbrs.items()) for u, nbrs in acc.items()}
        return cls(index, node_count, adj)

    def neighbors(self, v: int) -> list[tuple[int, float]]:
        return self.adj.get(v, [])

    def weight(self, u: int, v: int) -> float:
        for nbr, w in self.adj.get(u, []):
            if nbr == v:
                return w
        return 0.0

    def edge_count(self) -> int:
        """Number of adjacency entries (undirected edges count twice)."""
        return sum(len(nbrs) for nbrs in self.adj.values())

    def total_weight(self) -> float:
        return sum(w for nbrs in self.adj.values() for _, w in nbrs)

    def edges(self) -> Iterator[tuple[int, int, float]]:
        """Each stored adjacency entry once: (u, v, w) with u < v for undirected data."""
        for u in sorted(self.adj):
            for v, w in self.adj[u]:
                if v > u:
                    yield u, v, w

    def dense(self) -> np.ndarray:
        """N x N weight matrix."""
        a = np.zeros((self.node_count, self.node_count))
        for u, nbrs in self.adj.items():
            for v, w in nbrs:
                a[u, v] = w
        return a

    def is_empty(self) -> bool:
        return not self.adj


@dataclass
class SnapshotSequence:
    """An ordered list of snapshots over one shared node universe."""
    snapshots: list[Snapshot]
    node_count: int
    id_map: dict[int, int] = field(default_factory=dict)
    directed: bool = False

    def __len__(self) -> int:
        return len(self.snapshots)

    def __getitem__(self, k: int) -> Snapshot:
        return self.snapshots[k]

    def prefix(self, k: int) -> "SnapshotSequence":
        """The first k snapshots (shared, not copied)."""
        if not (1 <= k <= len(self.snapshots)):
            raise ValueError(f"prefix length {k} outside [1, {len(self.snapshots)}]")
        return SnapshotSequence(self.snapshots[:k], self.node_count, self.id_map, self.directed)


def parse_edge_events(source: Union[str, TextIO]) -> tuple[list[EdgeEvent], dict[int, int]]:
    """Parse edge-event text into events with dense node ids.

    ``source`` is the text itself or an open text stream.  Returns the event
    list (input order preserved) and the external-label -> dense-id map,
    assigned in order of first appearance.  Direction is a property of the
    graph build, not the text, so it is decided later at partition time.
    Malformed lines raise DataFormatError naming the 1-based line number.
    """
    stream = io.StringIO(source) if isinstance(source, str) else source
    events: list[EdgeEvent] = []
    id_map: dict[int, int] = {}

    def dense(label_text: str, line_no: int) -> int:
        try:
            label = int(label_text)
        except ValueError:
            raise DataFormatError(f"line {line_no}: non-numeric node label {label_text!r}") from None
        if label < 0:
            raise DataFormatError(f"line {line_no}: negative node label {label}")
        if label not in id_map:
            id_map[label] = len(id_map)
        return id_map[label]

    for line_no, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("%"):
            continue
        fields = line.split()
        if len(fields) not in (3, 4):
            raise DataFormatError(
                f"line {line_no}: expected 'src dst time [weight]', got {len(fields)} fields")
        u = dense(fields[0], line_no)
        v = dense(fields[1], line_no)
        try:
            t = float(fields[2])
        except ValueError:
            raise DataFormatError(f"line {line_no}: non-numeric timestamp {fields[2]!r}") from None
        if len(fields) == 4:
            try:
                w = float(fields[3])
            except ValueError:
                raise DataFormatError(f"line {line_no}: non-numeric weight {fields[3]!r}") from None
        else:
            w = 1.0
        if w <= 0:
            raise DataFormatError(f"line {line_no}: weight must be positive, got {w}")
        events.append(EdgeEvent(u, v, t, w))

    return events, id_map


def partition_snapshots(events: list[EdgeEvent], t_count: int,
                        id_map: Optional[dict[int, int]] = None,
                        directed: bool = False,
                        binarize: bool = False) -> SnapshotSequence:
    """Bucket events into ``t_count`` equal-width windows over the observed time span.

    Windows are half-open [lo, hi) except the last, which is closed so the
    maximum timestamp lands in window T.  Duplicate pairs within a window
    sum their weights; self events are dropped; with ``binarize`` every
    surviving weight becomes 1.  Empty windows are allowed (a warning is
    emitted naming them).
    """
    if t_count < 1:
        raise ValueError(f"snapshot count must be >= 1, got {t_count}")
    if not events:
        raise DataFormatError("no events to partition")

    node_count = len(id_map) if id_map else 1 + max(max(e.src, e.dst) for e in events)
    times = [e.time for e in events]
    t_min, t_max = min(times), max(times)
    span = t_max - t_min

    buckets: list[list[EdgeEvent]] = [[] for _ in range(t_count)]
    for e in events:
        if span == 0.0:
            k = t_count - 1  # single instant: only the closed last window contains it
        else:
            k = min(int((e.time - t_min) / span * t_count), t_count - 1)
        buckets[k].append(e)

    snapshots = []
    empty = []
    for k, bucket in enumerate(buckets):
        snap = Snapshot.from_edges(
            k + 1, node_count,
            ((e.src, e.dst, e.weight) for e in bucket),
            directed=directed,
        )
        if binarize:
            snap.adj = {u: [(v, 1.0) for v, _ in nbrs] for u, nbrs in snap.adj.items()}
        if snap.is_empty():
            empty.append(k + 1)
        snapshots.append(snap)
    if empty:
        warnings.warn(f"empty snapshots: {empty}", stacklevel=2)

    return SnapshotSequence(snapshots, node_count,
                            dict(id_map) if id_map else {}, directed)


def node_degrees(snapshot: Snapshot) -> np.ndarray:
    """Weighted degree of every node (sum of incident edge weights)."""
    deg = np.zeros(snapshot.node_count)
    for u, nbrs in snapshot.adj.items():
        deg[u] = sum(w for _, w in nbrs)
    return deg


def aggregate_adjacency(seq: SnapshotSequence, upto: Optional[int] = None) -> dict[int, dict[int, float]]:
    """Union graph with summed weights over snapshots 1..upto (default: all)."""
    agg: dict[int, dict[int, float]] = {}
    for snap in seq.snapshots[:upto]:
        for u, nbrs in snap.adj.items():
            row = agg.setdefault(u, {})
            for v, w in nbrs:
                row[v] = row.get(v, 0.0) + w
    return agg


def ingest_text(source: Union[str, TextIO], t_count: int,
                directed: bool = False, binarize: bool = False) -> SnapshotSequence:
    """Parse + partition in one step."""
    events, id_map = parse_edge_events(source)
    return partition_snapshots(events, t_count, id_map=id_map,
                               directed=directed, binarize=binarize)


_CACHE_MAGIC = b"GRLS"
_CACHE_VERSION = 1


def save_snapshot_cache(seq: SnapshotSequence, path: str) -> None:
    """Write the binary snapshot cache (little-endian throughout)."""
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<HII", _CACHE_VERSION, seq.node_count, len(seq)))
        for snap in seq.snapshots:
            entries = [(u, v, w) for u in sorted(snap.adj) for v, w in snap.adj[u]]
            fh.write(struct.pack("<I", len(entries)))
            for u, v, w in entries:
                fh.write(struct.pack("<IId", u, v, w))


def load_snapshot_cache(path: str) -> SnapshotSequence:
    """Read a snapshot cache; raises DataFormatError on any corruption."""
    with open(path, "rb") as fh:
        blob = fh.read()

    def take(fmt: str, offset: int):
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise DataFormatError("snapshot cache truncated")
        return struct.unpack_from(fmt, blob, offset), offset + size

    if blob[:4] != _CACHE_MAGIC:
        raise DataFormatError(f"not a snapshot cache (bad magic {blob[:4]!r})")
    (version, node_count, t_count), off = take("<HII", 4)
    if version != _CACHE_VERSION:
        raise DataFormatError(f"unsupported snapshot cache version {version}")

    snapshots = []
    for k in range(t_count):
        (n_entries,), off = take("<I", off)
        adj: dict[int, list[tuple[int, float]]] = {}
        for _ in range(n_entries):
            (u, v, w), off = take("<IId", off)
            if u >= node_count or v >= node_count:
                raise DataFormatError(f"snapshot {k + 1}: node id {max(u, v)} outside universe")
            if w <= 0 or not np.isfinite(w):
                raise DataFormatError(f"snapshot {k + 1}: bad weight {w}")
            adj.setdefault(u, []).append((v, w))
        snapshots.append(Snapshot(k + 1, node_count, adj))
    if off != len(blob):
        raise DataFormatError("snapshot cache has trailing bytes")
    return SnapshotSequence(snapshots, node_count)
