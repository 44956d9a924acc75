"""Walk-pair training objective and the optimization loop.

The objective is the skip-gram style binary cross-entropy over co-walked
node pairs, per snapshot, with degree-weighted negatives down-weighted by a
small factor.  The loop resamples walks per epoch (optionally frozen),
steps Adam over node minibatches, scores a held-out validation signal built
from the final snapshot each epoch, and keeps the best parameters.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint  # re-exported API  # noqa: F401
from .dyngraph import SnapshotSequence
from .engine import AdamState, Tape, Tensor, adam_step, backward, finite_diff_check, ops
from .evaluation import auc, map_metric, group_pairs_by_node, sample_nonedge_pairs
from .model import ModelConfig, ParameterSet, model_forward
from .sampling import PairBatch, WalkConfig, build_pair_batch
from .seeding import derive_seed

CLAMP_LO = 1e-12
CLAMP_HI = 1.0 - 1e-12


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, value: float):
        super().__init__(f"training diverged at epoch {epoch}: loss = {value}")
        self.epoch = epoch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    negative_weight: float = 0.01
    minibatch_nodes: int = 256
    patience: int = 20
    seed: int = 0
    frozen_samples: bool = False

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            # zero is allowed and acts as a null update; useful as a
            # frozen-parameter control
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.negative_weight < 0:
            raise ValueError(f"negative_weight must be >= 0, got {self.negative_weight}")
        if self.minibatch_nodes < 1:
            raise ValueError(f"minibatch_nodes must be >= 1, got {self.minibatch_nodes}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")


@dataclass
class TrainReport:
    epoch_loss: list[float] = field(default_factory=list)
    val_auc: list[float] = field(default_factory=list)
    val_map: list[float] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    wall_time_sec: float = 0.0
    config_echo: dict = field(default_factory=dict)

    def to_json(self, include_timing: bool = False) -> str:
        """Deterministic JSON.  Wall time is volatile, so it is excluded
        unless explicitly requested; byte-identical reports for identical
        seeds are part of the contract."""
        payload = {
            "epoch_loss": self.epoch_loss,
            "val_auc": self.val_auc,
            "val_map": self.val_map,
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "config": self.config_echo,
        }
        if include_timing:
            payload["wall_time_sec"] = self.wall_time_sec
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def bce_walk_loss(z: Tensor, batches: list[PairBatch], negative_weight: float = 0.01) -> Tensor:
    """Binary cross-entropy over walk pairs, summed across snapshots.

    Positive pairs push their step-t embeddings together through
    -log(sigmoid(<z_u, z_v>)); each positive's sampled negatives push apart
    with weight ``negative_weight``.  Probabilities are clamped away from
    0 and 1 before the log.  ``batch.t`` indexes steps 1-based and must fit
    inside z's time axis.
    """
    if not batches:
        raise ValueError("bce_walk_loss needs at least one pair batch")
    if negative_weight < 0:
        raise ValueError(f"negative_weight must be >= 0, got {negative_weight}")
    n, t_count, dim = z.shape
    flat = ops.reshape(z, (n * t_count, dim))

    def pair_term(v_idx: np.ndarray, u_idx: np.ndarray, step: int, sign: float) -> Tensor:
        rows_v = ops.gather_rows(flat, v_idx * t_count + (step - 1))
        rows_u = ops.gather_rows(flat, u_idx * t_count + (step - 1))
        s = ops.inner_product(rows_v, rows_u, axis=-1)
        if sign < 0:
            s = ops.scale(s, -1.0)  # sigmoid(-s) = 1 - sigmoid(s)
        prob = ops.clip(ops.sigmoid(s), CLAMP_LO, CLAMP_HI)
        return ops.sum(ops.log(prob))

    total: Optional[Tensor] = None
    for batch in batches:
        if not (1 <= batch.t <= t_count):
            raise ValueError(f"pair batch for step {batch.t} outside embedding range 1..{t_count}")
        if batch.n_pos == 0:
            continue
        term = ops.scale(pair_term(batch.pos_v, batch.pos_u, batch.t, +1.0), -1.0)
        if batch.neg.size and negative_weight > 0:
            q = batch.neg.shape[1]
            neg_v = np.repeat(batch.pos_v, q)
            neg_u = batch.neg.reshape(-1)
            neg_term = ops.scale(pair_term(neg_v, neg_u, batch.t, -1.0), -negative_weight)
            term = ops.add(term, neg_term)
        total = term if total is None else ops.add(total, term)
    if total is None:
        total = Tensor(0.0)
    return total


def build_epoch_batches(seq: SnapshotSequence, walk_cfg: WalkConfig, seed: int,
                        upto: Optional[int] = None) -> list[PairBatch]:
    """Sample one PairBatch per non-empty snapshot among the first ``upto``."""
    limit = len(seq) if upto is None else upto
    batches = []
    for pos, snap in enumerate(seq.snapshots[:limit], start=1):
        if snap.is_empty():
            continue
        cfg = replace(walk_cfg, seed=derive_seed(seed, "snapshot", pos))
        batch = build_pair_batch(snap, cfg)
        if batch.n_pos:
            # the loss indexes the embedding cube by position in the
            # sequence, not by the snapshot's original window number
            batch.t = pos
            batches.append(batch)
    return batches


def _validation_pairs(seq: SnapshotSequence, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Pairs + labels scoring how well the last history step predicts the final snapshot.

    Positives are the final snapshot's edges between nodes seen earlier;
    negatives are an equal count of uniformly sampled non-edges.
    """
    target = seq.snapshots[-1]
    history = seq.prefix(len(seq) - 1)
    seen = np.zeros(seq.node_count, dtype=bool)
    for snap in history.snapshots:
        for u in snap.adj:
            seen[u] = True
    positives = [(u, v) for u, v, _ in target.edges() if seen[u] and seen[v]]
    if not positives:
        raise ValueError(
            "validation snapshot shares no edges with previously seen nodes; "
            "cannot build a validation signal")
    negatives = sample_nonedge_pairs(target, len(positives), seed,
                                     eligible=np.flatnonzero(seen))
    pairs = np.array(positives + negatives, dtype=np.int64)
    labels = np.concatenate([np.ones(len(positives), dtype=np.int64),
                             np.zeros(len(negatives), dtype=np.int64)])
    return pairs, labels


def _validation_scores(z_last: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    return (z_last[pairs[:, 0]] * z_last[pairs[:, 1]]).sum(axis=1)


def train(seq: SnapshotSequence, model_cfg: ModelConfig, train_cfg: TrainConfig,
          walk_cfg: Optional[WalkConfig] = None) -> tuple[ParameterSet, TrainReport]:
    """Fit the model on a history sequence.

    The final snapshot is held out of the loss and used only as the
    validation target: each epoch, the embeddings of the second-to-last
    step score its edges against sampled non-edges, and the parameters of
    the best validation AUC epoch are returned.  Needs at least two
    snapshots for that reason.
    """
    train_cfg.validate()
    model_cfg.validate()
    walk_cfg = walk_cfg or WalkConfig()
    walk_cfg.validate()
    if len(seq) < 2:
        raise ValueError(f"training needs >= 2 snapshots, got {len(seq)}")

    t_loss = len(seq) - 1  # steps that contribute loss terms
    started = time.perf_counter()
    params = ParameterSet.build(model_cfg, seq.node_count, len(seq),
                                seed=derive_seed(train_cfg.seed, "params"))
    weights = params.walk_parameters()
    adam = AdamState(weights)

    val_pairs, val_labels = _validation_pairs(seq, derive_seed(train_cfg.seed, "val"))
    val_groups_template = None  # built lazily from the first epoch's scores

    report = TrainReport()
    best_auc = -np.inf
    best_epoch = 0
    best_arrays = params.copy_arrays()

    all_nodes = np.arange(seq.node_count)
    for epoch in range(1, train_cfg.epochs + 1):
        sample_seed = derive_seed(train_cfg.seed, "epoch", 1 if train_cfg.frozen_samples else epoch)
        batches = build_epoch_batches(seq, walk_cfg, sample_seed, upto=t_loss)
        if not batches:
            raise ValueError("no training pairs: every usable snapshot is empty")

        order = np.random.Generator(
            np.random.PCG64(derive_seed(train_cfg.seed, "order", epoch))).permutation(all_nodes)
        epoch_loss = 0.0
        for lo in range(0, seq.node_count, train_cfg.minibatch_nodes):
            chunk = order[lo:lo + train_cfg.minibatch_nodes]
            selected = _restrict_batches(batches, chunk)
            if not selected:
                continue
            for p in weights:
                p.grad = None
            with Tape() as tape:
                z = model_forward(seq, params, upto=t_loss)
                loss = bce_walk_loss(z, selected, train_cfg.negative_weight)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(epoch, value)
            backward(tape, loss, params=weights)
            if train_cfg.learning_rate > 0:
                adam_step(weights, [p.grad for p in weights], adam,
                          train_cfg.learning_rate)
            epoch_loss += value

        z_val = model_forward(seq, params, upto=t_loss).data[:, -1, :]
        scores = _validation_scores(z_val, val_pairs)
        epoch_auc = auc(scores, val_labels)
        if val_groups_template is None:
            val_groups_template = group_pairs_by_node(val_pairs, val_labels)
        epoch_map = map_metric(_grouped_scores(val_groups_template, scores))

        report.epoch_loss.append(epoch_loss)
        report.val_auc.append(epoch_auc)
        report.val_map.append(epoch_map)
        report.epochs_run = epoch

        if epoch_auc > best_auc:
            best_auc = epoch_auc
            best_epoch = epoch
            best_arrays = params.copy_arrays()
        elif epoch - best_epoch >= train_cfg.patience:
            break

    params.load_arrays(best_arrays)
    report.best_epoch = best_epoch
    report.wall_time_sec = time.perf_counter() - started
    return params, report


def _restrict_batches(batches: list[PairBatch], nodes: np.ndarray) -> list[PairBatch]:
    """Keep only pair terms whose center node v is in the minibatch."""
    member = np.zeros(1 + max(int(b.pos_v.max()) for b in batches if b.n_pos), dtype=bool)
    member[nodes[nodes < member.size]] = True
    out = []
    for b in batches:
        keep = member[b.pos_v]
        if keep.any():
            out.append(PairBatch(b.t, b.pos_v[keep], b.pos_u[keep], b.neg[keep]))
    return out


def _grouped_scores(groups: list[tuple[int, np.ndarray, np.ndarray, np.ndarray]],
                    scores: np.ndarray) -> list[list[tuple[float, int, int]]]:
    out = []
    for _node, pair_idx, labels, others in groups:
        out.append([(float(scores[i]), int(l), int(o))
                    for i, l, o in zip(pair_idx, labels, others)])
    return out


def gradcheck_full_model(node_count: int = 10, t_count: int = 3, dim: int = 8,
                         heads: int = 2, seed: int = 0, mask_mode: str = "causal",
                         eps: float = 1e-5) -> float:
    """Finite-difference check of the whole loss against every parameter entry."""
    from .synth import SynthConfig, gen_periodic

    synth_cfg = SynthConfig(nodes=node_count, steps=t_count, seed=derive_seed(seed, "graph"),
                            blocks=2, period=2, intra_p=0.7)
    seq, _target = gen_periodic(synth_cfg)
    model_cfg = ModelConfig(embed_dim=dim, heads=heads, mask_mode=mask_mode)
    params = ParameterSet.build(model_cfg, seq.node_count, len(seq),
                                seed=derive_seed(seed, "params"))
    walk_cfg = WalkConfig(walk_length=6, walks_per_node=2, window=3,
                          negatives_per_positive=2)
    batches = build_epoch_batches(seq, walk_cfg, derive_seed(seed, "pairs"))
    weights = params.walk_parameters()

    def f() -> Tensor:
        z = model_forward(seq, params)
        return bce_walk_loss(z, batches, negative_weight=0.01)

    return finite_diff_check(f, weights, eps=eps)
