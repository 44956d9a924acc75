"""Flat run configuration shared by every CLI verb.

Values resolve in three layers: built-in defaults, then a ``key=value``
config file, then explicit command-line flags.  The resolved configuration
is echoed verbatim into every report so a run can be reproduced from its
artifacts alone.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Optional

from .model import ModelConfig
from .sampling import WalkConfig
from .synth import SynthConfig
from .training import TrainConfig


@dataclass
class RunConfig:
    # data
    data: Optional[str] = None
    snapshots: Optional[int] = None
    directed: bool = False
    binarize: bool = False
    dataset_name: Optional[str] = None
    # model
    embed_dim: int = 128
    local_dim: Optional[int] = None
    global_dim: Optional[int] = None
    heads: int = 8
    leaky_slope: float = 0.2
    position: bool = True
    mask: str = "causal"
    variant: str = "original"
    one_hot: bool = False
    # walks
    walk_length: int = 40
    walks_per_node: int = 10
    window: int = 10
    negatives_per_positive: int = 10
    # training
    epochs: int = 200
    learning_rate: float = 1e-3
    negative_weight: float = 0.01
    minibatch_nodes: int = 256
    patience: int = 20
    frozen_samples: bool = False
    # evaluation
    split_train: float = 0.2
    split_val: float = 0.1
    split_test: float = 0.7
    predictor_epochs: int = 200
    predictor_lr: float = 0.1
    # sweeps / ablation
    grid: Optional[str] = None
    repeats: int = 1
    # bookkeeping
    seed: int = 0
    out: Optional[str] = None
    checkpoint: Optional[str] = None
    append_to: Optional[str] = None
    # synth
    kind: str = "periodic"
    nodes: int = 40
    steps: int = 6
    blocks: int = 4
    period: int = 2
    intra_p: float = 0.5
    birth_rate: float = 20.0
    survival: float = 0.9

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            embed_dim=self.embed_dim,
            local_out_dim=self.local_dim,
            global_out_dim=self.global_dim,
            heads=self.heads,
            leaky_relu_slope=self.leaky_slope,
            use_position_embedding=self.position,
            mask_mode=self.mask,
            variant=self.variant,
            one_hot_features=self.one_hot,
        )

    def walk_config(self) -> WalkConfig:
        return WalkConfig(
            walk_length=self.walk_length,
            walks_per_node=self.walks_per_node,
            window=self.window,
            negatives_per_positive=self.negatives_per_positive,
        )

    def train_config(self, seed: Optional[int] = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            negative_weight=self.negative_weight,
            minibatch_nodes=self.minibatch_nodes,
            patience=self.patience,
            seed=self.seed if seed is None else seed,
            frozen_samples=self.frozen_samples,
        )

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            nodes=self.nodes, steps=self.steps, seed=self.seed,
            blocks=self.blocks, period=self.period, intra_p=self.intra_p,
            birth_rate=self.birth_rate, survival=self.survival,
        )

    def split(self) -> tuple[float, float, float]:
        return (self.split_train, self.split_val, self.split_test)

    def echo(self) -> dict:
        return asdict(self)

    def to_kv_text(self) -> str:
        lines = [f"{f.name}={_format_value(getattr(self, f.name))}" for f in fields(self)]
        return "\n".join(lines) + "\n"


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse_value(field_type: type, raw: str):
    raw = raw.strip()
    if raw == "":
        return None
    if field_type is bool:
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return field_type(raw)


_FIELD_TYPES = {
    "data": str, "snapshots": int, "directed": bool, "binarize": bool,
    "dataset_name": str,
    "embed_dim": int, "local_dim": int, "global_dim": int, "heads": int,
    "leaky_slope": float, "position": bool, "mask": str, "variant": str,
    "one_hot": bool,
    "walk_length": int, "walks_per_node": int, "window": int,
    "negatives_per_positive": int,
    "epochs": int, "learning_rate": float, "negative_weight": float,
    "minibatch_nodes": int, "patience": int, "frozen_samples": bool,
    "split_train": float, "split_val": float, "split_test": float,
    "predictor_epochs": int, "predictor_lr": float,
    "grid": str, "repeats": int,
    "seed": int, "out": str, "checkpoint": str, "append_to": str,
    "kind": str, "nodes": int, "steps": int, "blocks": int, "period": int,
    "intra_p": float, "birth_rate": float, "survival": float,
}


def parse_config_file(path: str) -> dict:
    """Read ``key=value`` lines (# comments allowed) into typed overrides."""
    overrides = {}
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _FIELD_TYPES:
                raise ValueError(f"{path}:{line_no}: unknown config key {key!r}")
            overrides[key] = _parse_value(_FIELD_TYPES[key], value)
    return overrides


def resolve_config(file_path: Optional[str] = None, cli_overrides: Optional[dict] = None) -> RunConfig:
    """Defaults, then config file, then CLI flags."""
    values: dict = {}
    if file_path:
        values.update(parse_config_file(file_path))
    if cli_overrides:
        values.update({k: v for k, v in cli_overrides.items() if v is not None})
    return RunConfig(**values)
