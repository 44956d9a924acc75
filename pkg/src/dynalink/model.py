"""The link-prediction model: local graph attention per snapshot, global
self-attention over all nodes, and masked self-attention along the time axis.

Every structural parameter is shared across snapshots.  The forward pass
produces one embedding per (node, snapshot) pair; the embedding at the final
step feeds a logistic pair predictor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .dyngraph import Snapshot, SnapshotSequence
from .engine import Tensor
from .engine import ops
from .seeding import rng_from

VARIANTS = ("original", "no-local", "no-global", "no-temporal")
MASK_MODES = ("causal", "literal")


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and switches.  Unset output dims default to ``embed_dim``."""
    embed_dim: int = 128
    local_out_dim: Optional[int] = None
    global_out_dim: Optional[int] = None
    heads: int = 8
    leaky_relu_slope: float = 0.2
    use_position_embedding: bool = True
    mask_mode: str = "causal"
    variant: str = "original"
    one_hot_features: bool = False

    @property
    def local_dim(self) -> int:
        return self.local_out_dim if self.local_out_dim is not None else self.embed_dim

    @property
    def global_dim(self) -> int:
        return self.global_out_dim if self.global_out_dim is not None else self.embed_dim

    def validate(self) -> None:
        if self.embed_dim < 1:
            raise ValueError(f"embed_dim must be positive, got {self.embed_dim}")
        if self.heads < 1:
            raise ValueError(f"heads must be positive, got {self.heads}")
        for label, dim in (("local", self.local_dim), ("global", self.global_dim),
                           ("final", self.embed_dim)):
            if dim % self.heads != 0:
                raise ValueError(
                    f"{label} output dim {dim} is not divisible by {self.heads} heads")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}, got {self.mask_mode!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == "no-global" and self.global_dim != self.local_dim:
            raise ValueError("no-global passes the local output through unchanged; "
                             f"needs global dim {self.global_dim} == local dim {self.local_dim}")
        if self.variant == "no-temporal" and self.embed_dim != self.global_dim:
            raise ValueError("no-temporal uses the global output as the embedding; "
                             f"needs embed_dim {self.embed_dim} == global dim {self.global_dim}")

    def to_dict(self) -> dict:
        return {
            "embed_dim": self.embed_dim,
            "local_out_dim": self.local_out_dim,
            "global_out_dim": self.global_out_dim,
            "heads": self.heads,
            "leaky_relu_slope": self.leaky_relu_slope,
            "use_position_embedding": self.use_position_embedding,
            "mask_mode": self.mask_mode,
            "variant": self.variant,
            "one_hot_features": self.one_hot_features,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class ParameterSet:
    """All trainable tensors, keyed by stable names.

    Naming scheme: ``embedding``, ``local.<k>.weight`` / ``local.<k>.attn``,
    ``local_bypass.weight``, ``global.<k>.{query,key,value}``,
    ``temporal.<k>.{query,key,value}``, ``position``,
    ``predictor.weight`` / ``predictor.bias``.
    """
    tensors: dict[str, Tensor]
    config: ModelConfig
    node_count: int
    history_len: int

    @classmethod
    def build(cls, config: ModelConfig, node_count: int, history_len: int,
              seed: int = 0) -> "ParameterSet":
        config.validate()
        if node_count < 1:
            raise ValueError(f"need at least one node, got {node_count}")
        if history_len < 1:
            raise ValueError(f"need at least one snapshot, got {history_len}")
        rng = rng_from(seed, "init")
        d = config.embed_dim
        feat_dim = node_count if config.one_hot_features else d
        tensors: dict[str, Tensor] = {}

        def param(name: str, data: np.ndarray, trainable: bool = True) -> None:
            tensors[name] = Tensor(data, requires_grad=trainable, name=name)

        if config.one_hot_features:
            param("embedding", np.eye(node_count), trainable=False)
        else:
            param("embedding", rng.normal(0.0, 1.0 / math.sqrt(d), size=(node_count, d)))

        if config.variant == "no-local":
            param("local_bypass.weight",
                  xavier_uniform(rng, feat_dim, config.local_dim, (config.local_dim, feat_dim)))
        else:
            head_dim = config.local_dim // config.heads
            for k in range(config.heads):
                param(f"local.{k}.weight",
                      xavier_uniform(rng, feat_dim, head_dim, (head_dim, feat_dim)))
                param(f"local.{k}.attn",
                      xavier_uniform(rng, 2 * head_dim, 1, (2 * head_dim,)))

        if config.variant != "no-global":
            head_dim = config.global_dim // config.heads
            for k in range(config.heads):
                for role in ("query", "key", "value"):
                    param(f"global.{k}.{role}",
                          xavier_uniform(rng, config.local_dim, head_dim,
                                         (config.local_dim, head_dim)))

        if config.variant != "no-temporal":
            head_dim = d // config.heads
            for k in range(config.heads):
                for role in ("query", "key", "value"):
                    param(f"temporal.{k}.{role}",
                          xavier_uniform(rng, config.global_dim, head_dim,
                                         (config.global_dim, head_dim)))
            if config.use_position_embedding:
                param("position", np.zeros((history_len, config.global_dim)))

        param("predictor.weight", np.zeros(2 * d))
        param("predictor.bias", np.zeros(1))

        return cls(tensors, config, node_count, history_len)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def named(self):
        return self.tensors.items()

    def walk_parameters(self) -> list[Tensor]:
        """Tensors trained by the walk loss (everything but the pair predictor)."""
        return [t for name, t in self.tensors.items()
                if t.requires_grad and not name.startswith("predictor.")]

    def predictor_parameters(self) -> list[Tensor]:
        return [self.tensors["predictor.weight"], self.tensors["predictor.bias"]]

    def copy_arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.tensors.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, data in arrays.items():
            if name not in self.tensors:
                raise KeyError(f"unknown parameter {name!r}")
            if self.tensors[name].data.shape != data.shape:
                raise ValueError(
                    f"parameter {name!r}: stored shape {data.shape} != expected "
                    f"{self.tensors[name].data.shape}")
            self.tensors[name].data = np.ascontiguousarray(data, dtype=np.float64)


def dense_with_self_loops(snapshot: Snapshot) -> tuple[np.ndarray, np.ndarray]:
    """Weight matrix with unit self loops, and the {0, -inf} closed-neighborhood mask."""
    a_hat = snapshot.dense()
    np.fill_diagonal(a_hat, 1.0)
    mask = np.where(a_hat > 0, 0.0, ops.NEG_INF)
    return a_hat, mask


def local_attention_forward(snapshot: Snapshot, h_in: Tensor, params: ParameterSet,
                            return_attention: bool = False):
    """Per-snapshot neighborhood attention with multi-head concat output.

    Attention logits for (v, u) weight the learned pair score by the edge
    weight (self loops weigh 1) and pass through LeakyReLU; the softmax runs
    over v's closed neighborhood.  Head outputs pass through ELU and are
    concatenated to ``local_dim`` columns.
    """
    cfg = params.config
    a_hat, mask = dense_with_self_loops(snapshot)
    slope = cfg.leaky_relu_slope
    head_dim = cfg.local_dim // cfg.heads
    heads_out = []
    attention = []
    for k in range(cfg.heads):
        w = params[f"local.{k}.weight"]
        attn_vec = params[f"local.{k}.attn"]
        projected = ops.matmul(h_in, ops.transpose(w))  # N x head_dim
        a_src, a_dst = ops.split_last_dim(attn_vec, [head_dim, head_dim])
        score_src = ops.matmul(projected, ops.reshape(a_src, (head_dim, 1)))  # N x 1
        score_dst = ops.matmul(projected, ops.reshape(a_dst, (head_dim, 1)))  # N x 1
        raw = ops.add(score_src, ops.transpose(score_dst))                    # N x N
        logits = ops.leaky_relu(ops.mul(raw, Tensor(a_hat)), slope)
        alpha = ops.masked_softmax(logits, mask)
        heads_out.append(ops.elu(ops.matmul(alpha, projected)))
        if return_attention:
            attention.append(alpha.data)
    out = ops.concat(heads_out, axis=-1)
    if return_attention:
        return out, attention
    return out


def global_attention_forward(h_local: Tensor, params: ParameterSet,
                             return_attention: bool = False):
    """Scaled dot-product self-attention over every node, no adjacency mask."""
    cfg = params.config
    head_dim = cfg.global_dim // cfg.heads
    inv_sqrt = 1.0 / math.sqrt(head_dim)
    heads_out = []
    attention = []
    for k in range(cfg.heads):
        q = ops.matmul(h_local, params[f"global.{k}.query"])
        key = ops.matmul(h_local, params[f"global.{k}.key"])
        v = ops.matmul(h_local, params[f"global.{k}.value"])
        scores = ops.scale(ops.matmul(q, ops.transpose(key)), inv_sqrt)
        weights = ops.masked_softmax(scores)
        heads_out.append(ops.matmul(weights, v))
        if return_attention:
            attention.append(weights.data)
    out = ops.concat(heads_out, axis=-1)
    if return_attention:
        return out, attention
    return out


def temporal_mask(t_count: int, mode: str = "causal") -> np.ndarray:
    """Additive T x T mask.  ``causal``: step i attends steps j <= i.
    ``literal``: the mirrored variant, step i attends steps j >= i."""
    if mode not in MASK_MODES:
        raise ValueError(f"mask_mode must be one of {MASK_MODES}, got {mode!r}")
    i = np.arange(t_count)[:, None]
    j = np.arange(t_count)[None, :]
    visible = (j <= i) if mode == "causal" else (j >= i)
    return np.where(visible, 0.0, ops.NEG_INF)


def temporal_attention_forward(stacked: Tensor, params: ParameterSet,
                               return_attention: bool = False):
    """Masked self-attention along the time axis, independently per node.

    ``stacked`` is (N, T, global_dim): each node's per-snapshot global
    outputs in step order.  Trainable position embeddings are added row-wise
    when enabled.  The mask restricts which steps each query step may see.
    """
    cfg = params.config
    n, t_count, _ = stacked.shape
    if cfg.use_position_embedding:
        position = params["position"]
        if position.shape[0] < t_count:
            raise ValueError(
                f"position table covers {position.shape[0]} steps, forward needs {t_count}")
        rows = ops.gather_rows(position, np.arange(t_count))
        stacked = ops.add(stacked, ops.reshape(rows, (1, t_count, cfg.global_dim)))
    mask = temporal_mask(t_count, cfg.mask_mode)
    head_dim = cfg.embed_dim // cfg.heads
    inv_sqrt = 1.0 / math.sqrt(head_dim)
    heads_out = []
    attention = []
    for k in range(cfg.heads):
        q = ops.matmul(stacked, params[f"temporal.{k}.query"])   # N x T x head_dim
        key = ops.matmul(stacked, params[f"temporal.{k}.key"])
        v = ops.matmul(stacked, params[f"temporal.{k}.value"])
        scores = ops.scale(ops.matmul(q, ops.transpose(key)), inv_sqrt)  # N x T x T
        weights = ops.masked_softmax(scores, mask[None, :, :])
        heads_out.append(ops.matmul(weights, v))
        if return_attention:
            attention.append(weights.data)
    out = ops.concat(heads_out, axis=-1)
    if return_attention:
        return out, attention
    return out


def model_forward(seq: SnapshotSequence, params: ParameterSet,
                  upto: Optional[int] = None) -> Tensor:
    """Embed every node at every step: returns a (N, T, embed_dim) tensor.

    ``upto`` truncates to the first k snapshots.  Later snapshots never
    influence earlier embeddings (the temporal mask in its default mode
    only looks backward), which the tests pin down directly.
    """
    cfg = params.config
    t_count = len(seq) if upto is None else upto
    if not (1 <= t_count <= len(seq)):
        raise ValueError(f"upto={upto} outside [1, {len(seq)}]")
    if seq.node_count != params.node_count:
        raise ValueError(
            f"sequence has {seq.node_count} nodes, parameters were built for {params.node_count}")
    x = params["embedding"]

    per_step = []
    for t in range(t_count):
        if cfg.variant == "no-local":
            h_local = ops.matmul(x, ops.transpose(params["local_bypass.weight"]))
        else:
            h_local = local_attention_forward(seq[t], x, params)
        if cfg.variant == "no-global":
            h_global = h_local
        else:
            h_global = global_attention_forward(h_local, params)
        per_step.append(ops.reshape(h_global, (params.node_count, 1, cfg.global_dim)))
    stacked = per_step[0] if t_count == 1 else ops.concat(per_step, axis=1)

    if cfg.variant == "no-temporal":
        return stacked
    return temporal_attention_forward(stacked, params)


def link_probability(z_u: np.ndarray, z_v: np.ndarray, weight: np.ndarray,
                     bias: float, symmetrize: bool = True) -> float:
    """Logistic pair score from concatenated endpoint embeddings.

    With ``symmetrize`` the two orderings are averaged, making the score
    independent of endpoint order.
    """
    w = np.asarray(weight, dtype=np.float64)
    zu = np.asarray(z_u, dtype=np.float64)
    zv = np.asarray(z_v, dtype=np.float64)
    if w.shape != (zu.size + zv.size,):
        raise ValueError(
            f"predictor weight has shape {w.shape}, embeddings concatenate to {zu.size + zv.size}")

    def logistic(a: np.ndarray, b: np.ndarray) -> float:
        s = float(w @ np.concatenate([a, b]) + bias)
        if s >= 0:
            return 1.0 / (1.0 + math.exp(-s))
        e = math.exp(s)
        return e / (1.0 + e)

    forward = logistic(zu, zv)
    if not symmetrize:
        return forward
    return 0.5 * (forward + logistic(zv, zu))


def pair_scores(z_final: np.ndarray, pairs: np.ndarray, weight: np.ndarray,
                bias: float, symmetrize: bool = True) -> np.ndarray:
    """Vectorized ``link_probability`` over an array of (u, v) pairs."""
    z = np.asarray(z_final, dtype=np.float64)
    pairs = np.asarray(pairs, dtype=np.int64)
    w = np.asarray(weight, dtype=np.float64)
    d = z.shape[1]
    w_left, w_right = w[:d], w[d:]

    def half(u_idx, v_idx):
        s = z[u_idx] @ w_left + z[v_idx] @ w_right + bias
        ez = np.exp(-np.abs(s))
        return np.where(s >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))

    fwd = half(pairs[:, 0], pairs[:, 1])
    if not symmetrize:
        return fwd
    return 0.5 * (fwd + half(pairs[:, 1], pairs[:, 0]))
