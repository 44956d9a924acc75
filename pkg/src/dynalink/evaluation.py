"""Link-prediction evaluation: pair sets, the logistic pair predictor,
rank metrics, and the two non-learned baselines.

The protocol: positives are the target snapshot's edges between nodes seen
during history, negatives an equal count of uniformly sampled non-edges of
the target.  Pairs are split train/val/test per class, the predictor is fit
on the train split only, and AUC / MAP are reported on the test split.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .dyngraph import Snapshot, SnapshotSequence, aggregate_adjacency
from .engine import AdamState, Tape, Tensor, adam_step, backward, ops
from .model import ParameterSet, model_forward, pair_scores
from .seeding import derive_seed, rng_from

BASELINES = ("last-adjacency", "common-neighbors")
CLAMP_LO = 1e-12
CLAMP_HI = 1.0 - 1e-12


@dataclass
class EvalPairSet:
    """Labeled (u, v) pairs split for predictor training and testing."""
    train: np.ndarray  # (n, 3) columns u, v, label
    val: np.ndarray
    test: np.ndarray
    seed: int = 0

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for name, part in (("train", self.train), ("val", self.val), ("test", self.test)):
            h.update(name.encode())
            h.update(np.ascontiguousarray(part, dtype="<i8").tobytes())
        return h.hexdigest()[:16]

    @property
    def n_pos(self) -> int:
        return int(sum(int(part[:, 2].sum()) for part in (self.train, self.val, self.test)))

    @property
    def n_neg(self) -> int:
        return int(sum(int((1 - part[:, 2]).sum()) for part in (self.train, self.val, self.test)))


def sample_nonedge_pairs(target: Snapshot, count: int, seed: int,
                         eligible: Optional[np.ndarray] = None) -> list[tuple[int, int]]:
    """``count`` distinct uniformly-random non-edges of ``target``.

    Only pairs with both endpoints in ``eligible`` (default: all nodes) are
    considered.  Refuses graphs denser than 95% of the candidate pair space,
    where rejection sampling stops being honest.
    """
    nodes = np.arange(target.node_count) if eligible is None else np.asarray(eligible)
    m = nodes.size
    possible = m * (m - 1) // 2
    if possible == 0:
        raise ValueError("no candidate pairs to sample negatives from")
    edges = {(u, v) for u, v, _ in target.edges()}
    if len(edges) > 0.95 * possible:
        raise ValueError(
            f"target graph too dense for non-edge sampling "
            f"({len(edges)} edges of {possible} candidate pairs)")
    if count > possible - len(edges):
        raise ValueError(
            f"cannot sample {count} distinct non-edges, only {possible - len(edges)} exist")
    rng = rng_from(seed, "nonedges")
    out: list[tuple[int, int]] = []
    taken = set()
    while len(out) < count:
        i, j = rng.integers(0, m, size=2)
        if i == j:
            continue
        u, v = int(nodes[min(i, j)]), int(nodes[max(i, j)])
        if (u, v) in edges or (u, v) in taken:
            continue
        taken.add((u, v))
        out.append((u, v))
    return out


def build_eval_set(seq: SnapshotSequence, target: Snapshot,
                   split: tuple[float, float, float] = (0.2, 0.1, 0.7),
                   seed: int = 0) -> EvalPairSet:
    """Label target edges vs sampled non-edges and split per class.

    Split sizes floor(train) and floor(val) per class, remainder to test,
    so class balance carries into each split.  Shuffling is seeded.
    """
    if len(split) != 3 or not np.isclose(sum(split), 1.0) or min(split) < 0:
        raise ValueError(f"split must be three non-negative shares summing to 1, got {split}")
    seen = np.zeros(seq.node_count, dtype=bool)
    for snap in seq.snapshots:
        for u in snap.adj:
            seen[u] = True
    positives = [(u, v) for u, v, _ in target.edges() if seen[u] and seen[v]]
    if not positives:
        raise ValueError("target snapshot has no edges between nodes seen in history")
    negatives = sample_nonedge_pairs(target, len(positives), derive_seed(seed, "neg"),
                                     eligible=np.flatnonzero(seen))

    def split_class(pairs: list[tuple[int, int]], label: int, tag: str):
        arr = np.array([(u, v, label) for u, v in pairs], dtype=np.int64)
        order = rng_from(seed, "shuffle", tag).permutation(len(arr))
        arr = arr[order]
        n_train = int(np.floor(split[0] * len(arr)))
        n_val = int(np.floor(split[1] * len(arr)))
        return arr[:n_train], arr[n_train:n_train + n_val], arr[n_train + n_val:]

    pos_parts = split_class(positives, 1, "pos")
    neg_parts = split_class(negatives, 0, "neg")
    train, val, test = (np.concatenate([p, q]) for p, q in zip(pos_parts, neg_parts))
    return EvalPairSet(train, val, test, seed=seed)


def fit_predictor(train_pairs: np.ndarray, z_final: np.ndarray,
                  epochs: int = 200, lr: float = 0.1,
                  seed: int = 0) -> tuple[np.ndarray, float]:
    """Logistic regression on concatenated endpoint embeddings.

    Both orderings of every training pair are included so the learned score
    has no preferred endpoint order.  Returns (weights, bias).
    """
    train_pairs = np.asarray(train_pairs)
    labels = train_pairs[:, 2]
    if labels.min() == labels.max():
        raise ValueError("predictor training split contains a single class")
    z = np.asarray(z_final, dtype=np.float64)
    dim = z.shape[1]
    u, v = train_pairs[:, 0], train_pairs[:, 1]
    features = np.concatenate([
        np.concatenate([z[u], z[v]], axis=1),
        np.concatenate([z[v], z[u]], axis=1),
    ])
    y = np.concatenate([labels, labels]).astype(np.float64)

    w = Tensor(np.zeros(2 * dim), requires_grad=True, name="predictor.weight")
    b = Tensor(np.zeros(1), requires_grad=True, name="predictor.bias")
    params = [w, b]
    adam = AdamState(params)
    x_const = Tensor(features)
    for _ in range(epochs):
        for p in params:
            p.grad = None
        with Tape() as tape:
            logits = ops.add(ops.matmul(x_const, ops.reshape(w, (2 * dim, 1))),
                             ops.reshape(b, (1, 1)))
            flat = ops.reshape(logits, (y.size,))
            p_pos = ops.clip(ops.sigmoid(flat), CLAMP_LO, CLAMP_HI)
            p_neg = ops.clip(ops.sigmoid(ops.scale(flat, -1.0)), CLAMP_LO, CLAMP_HI)
            nll = ops.add(ops.mul(ops.log(p_pos), Tensor(y)),
                          ops.mul(ops.log(p_neg), Tensor(1.0 - y)))
            loss = ops.scale(ops.sum(nll), -1.0 / y.size)
        backward(tape, loss, params=params)
        adam_step(params, [p.grad for p in params], adam, lr)
    return w.data.copy(), float(b.data[0])


def auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Probability a positive outranks a negative, ties counting half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank of the tie group
        i = j + 1
    rank_sum = ranks[labels == 1].sum()
    n_pos, n_neg = pos.size, neg.size
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(ranked_labels: Sequence[int]) -> float:
    """AP of a ranked 0/1 label list (requires at least one positive)."""
    hits = 0
    total = 0.0
    count = 0
    for i, label in enumerate(ranked_labels, start=1):
        if label == 1:
            hits += 1
            total += hits / i
            count += 1
    if count == 0:
        raise ValueError("average precision of a ranking with no positives")
    return total / count


def group_pairs_by_node(pairs: np.ndarray, labels: np.ndarray
                        ) -> list[tuple[int, np.ndarray, np.ndarray, np.ndarray]]:
    """Group pair indices by incident node (each pair lands in both endpoint groups).

    Returns (node, pair index array, labels, other-endpoint ids) per node
    that has at least one candidate pair.
    """
    by_node: dict[int, list[tuple[int, int]]] = {}
    for i, (u, v) in enumerate(np.asarray(pairs)[:, :2]):
        by_node.setdefault(int(u), []).append((i, int(v)))
        by_node.setdefault(int(v), []).append((i, int(u)))
    groups = []
    for node in sorted(by_node):
        items = by_node[node]
        idx = np.array([i for i, _ in items], dtype=np.int64)
        others = np.array([o for _, o in items], dtype=np.int64)
        groups.append((node, idx, np.asarray(labels)[idx], others))
    return groups


def map_metric(groups: Iterable[Sequence[tuple[float, int, int]]]) -> float:
    """Mean AP over per-node candidate groups.

    Each group is (score, label, tiebreak-id) triples; candidates sort by
    descending score with ascending id breaking ties.  Groups without a
    positive are skipped; if none remains, that is an error.
    """
    ap_values = []
    for group in groups:
        group = list(group)
        if not any(label == 1 for _, label, _ in group):
            continue
        ranked = sorted(group, key=lambda item: (-item[0], item[2]))
        ap_values.append(average_precision([label for _, label, _ in ranked]))
    if not ap_values:
        raise ValueError("MAP undefined: no group contains a positive pair")
    return float(np.mean(ap_values))


def map_from_pairs(pairs: np.ndarray, labels: np.ndarray, scores: np.ndarray) -> float:
    groups = group_pairs_by_node(pairs, labels)
    packed = []
    for _node, idx, group_labels, others in groups:
        packed.append([(float(scores[i]), int(l), int(o))
                       for i, l, o in zip(idx, group_labels, others)])
    return map_metric(packed)


def baseline_scores(seq: SnapshotSequence, pairs: np.ndarray, method: str) -> np.ndarray:
    """Non-learned reference scores for (u, v) pairs.

    ``last-adjacency``: the pair's weight in the final history snapshot.
    ``common-neighbors``: the count of shared neighbors in the weight-summed
    aggregation of all history snapshots.
    """
    pairs = np.asarray(pairs)
    if method == "last-adjacency":
        last = seq.snapshots[-1]
        return np.array([last.weight(int(u), int(v)) for u, v in pairs[:, :2]], dtype=np.float64)
    if method == "common-neighbors":
        agg = aggregate_adjacency(seq)
        neighbor_sets = {u: set(nbrs) for u, nbrs in agg.items()}
        out = np.empty(len(pairs), dtype=np.float64)
        for i, (u, v) in enumerate(pairs[:, :2]):
            su = neighbor_sets.get(int(u))
            sv = neighbor_sets.get(int(v))
            out[i] = len(su & sv) if su and sv else 0.0
        return out
    raise ValueError(f"unknown baseline {method!r}, expected one of {BASELINES}")


@dataclass
class MetricReport:
    dataset: str
    method: str
    seed: int
    t_used: int
    auc: float
    map: float
    n_pos: int
    n_neg: int
    fingerprint: str = ""
    config_echo: dict = field(default_factory=dict)

    CSV_HEADER = "dataset,method,seed,T_used,auc,map,n_pos,n_neg"

    def csv_row(self) -> str:
        return (f"{self.dataset},{self.method},{self.seed},{self.t_used},"
                f"{self.auc:.6f},{self.map:.6f},{self.n_pos},{self.n_neg}")

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "method": self.method,
            "seed": self.seed,
            "T_used": self.t_used,
            "auc": self.auc,
            "map": self.map,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "fingerprint": self.fingerprint,
        }


def evaluate_methods(seq: SnapshotSequence, target: Snapshot, params: ParameterSet,
                     seed: int, dataset: str = "data",
                     split: tuple[float, float, float] = (0.2, 0.1, 0.7),
                     predictor_epochs: int = 200, predictor_lr: float = 0.1,
                     methods: Sequence[str] = ("model",) + BASELINES
                     ) -> list[MetricReport]:
    """Score the trained model and the baselines on one shared eval set."""
    pair_set = build_eval_set(seq, target, split=split, seed=derive_seed(seed, "evalset"))
    test = pair_set.test
    test_pairs, test_labels = test[:, :2], test[:, 2]
    reports = []
    z_final = None
    for method in methods:
        if method == "model":
            z_cube = model_forward(seq, params)
            z_final = z_cube.data[:, -1, :]
            w, b = fit_predictor(pair_set.train, z_final,
                                 epochs=predictor_epochs, lr=predictor_lr)
            params.tensors["predictor.weight"].data = w.copy()
            params.tensors["predictor.bias"].data = np.array([b])
            scores = pair_scores(z_final, test_pairs, w, b, symmetrize=not seq.directed)
        else:
            scores = baseline_scores(seq, test_pairs, method)
        reports.append(MetricReport(
            dataset=dataset, method=method, seed=seed, t_used=len(seq),
            auc=auc(scores, test_labels),
            map=map_from_pairs(test_pairs, test_labels, scores),
            n_pos=int(test_labels.sum()), n_neg=int((1 - test_labels).sum()),
            fingerprint=pair_set.fingerprint(),
        ))
    return reports


def reports_to_csv(reports: Sequence[MetricReport]) -> str:
    lines = [MetricReport.CSV_HEADER]
    lines.extend(r.csv_row() for r in reports)
    return "\n".join(lines) + "\n"


def reports_to_json(reports: Sequence[MetricReport], config_echo: Optional[dict] = None) -> str:
    payload = {"results": [r.to_dict() for r in reports]}
    if config_echo is not None:
        payload["config"] = config_echo
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
