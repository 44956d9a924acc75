"""Command line interface.

Verbs: ingest, synth, train, eval, ablate, sweep, gradcheck.  Every verb
takes --config FILE (key=value lines) plus flags that override it, and
writes its artifacts under --out.  Exit codes: 0 success, 1 runtime
failure (e.g. divergence or a failed gradient check), 2 usage or input
errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from typing import Optional

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import _FIELD_TYPES, RunConfig, resolve_config
from .dyngraph import (DataFormatError, SnapshotSequence, ingest_text,
                       load_snapshot_cache, save_snapshot_cache)
from .engine import run_op_checks
from .evaluation import evaluate_methods, reports_to_csv, reports_to_json, MetricReport
from .model import MASK_MODES, VARIANTS
from .synth import gen_periodic, gen_recency, write_events
from .training import TrainingDiverged, gradcheck_full_model, train

OP_GRAD_TOL = 1e-6
MODEL_GRAD_TOL = 1e-4


class UsageError(Exception):
    """Bad flags or unusable input files; mapped to exit code 2."""


# ---------------------------------------------------------------------------
# shared plumbing


def _out_dir(cfg: RunConfig) -> str:
    if not cfg.out:
        raise UsageError("an output directory is required (--out DIR)")
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def _write(path: str, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def _write_sidecars(cfg: RunConfig, out: str, wall: float) -> None:
    """Config echo (deterministic) and timing (volatile, never compared)."""
    _write(os.path.join(out, "config.txt"), cfg.to_kv_text())
    _write(os.path.join(out, "timing.txt"), f"wall_time_sec={wall:.3f}\n")


def _load_sequence(cfg: RunConfig) -> SnapshotSequence:
    if not cfg.data:
        raise UsageError("an input file is required (--data FILE)")
    if not os.path.exists(cfg.data):
        raise UsageError(f"data file not found: {cfg.data}")
    if cfg.data.endswith(".grls"):
        seq = load_snapshot_cache(cfg.data)
        if cfg.snapshots is not None and cfg.snapshots != len(seq):
            raise UsageError(
                f"--snapshots {cfg.snapshots} does not match the cached "
                f"sequence length {len(seq)} in {cfg.data}")
        if cfg.directed:
            seq = dataclasses.replace(seq, directed=True)
        return seq
    if cfg.snapshots is None:
        raise UsageError("--snapshots K is required when ingesting raw events")
    with open(cfg.data) as fh:
        return ingest_text(fh, cfg.snapshots,
                           directed=cfg.directed, binarize=cfg.binarize)


def _dataset_name(cfg: RunConfig) -> str:
    if cfg.dataset_name:
        return cfg.dataset_name
    if cfg.data:
        stem = os.path.basename(cfg.data)
        return stem.rsplit(".", 1)[0] if "." in stem else stem
    return "data"


def _split_history(seq: SnapshotSequence) -> tuple[SnapshotSequence, "object"]:
    """All snapshots but the last form the history; the last is the
    prediction target reserved for evaluation."""
    if len(seq) < 3:
        raise UsageError(
            f"need at least 3 snapshots (got {len(seq)}): two or more for "
            "the training history and one held out as the prediction target")
    return seq.prefix(len(seq) - 1), seq[len(seq) - 1]


def _train_once(history: SnapshotSequence, cfg: RunConfig, seed: int):
    return train(history, cfg.model_config(), cfg.train_config(seed),
                 cfg.walk_config())


def _model_report(history: SnapshotSequence, target, params, cfg: RunConfig,
                  seed: int) -> MetricReport:
    reports = evaluate_methods(
        history, target, params, seed, dataset=_dataset_name(cfg),
        split=cfg.split(), predictor_epochs=cfg.predictor_epochs,
        predictor_lr=cfg.predictor_lr, methods=("model",))
    return reports[0]


def _append_rows(path: str, reports) -> None:
    need_header = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a") as fh:
        if need_header:
            fh.write(MetricReport.CSV_HEADER + "\n")
        for r in reports:
            fh.write(r.csv_row() + "\n")


# ---------------------------------------------------------------------------
# verbs


def _cmd_ingest(cfg: RunConfig) -> int:
    started = time.perf_counter()
    seq = _load_sequence(cfg)
    out = _out_dir(cfg)
    cache = os.path.join(out, "snapshots.grls")
    save_snapshot_cache(seq, cache)
    _write_sidecars(cfg, out, time.perf_counter() - started)
    entries = sum(s.edge_count() for s in seq.snapshots)
    print(f"ingested {cfg.data}: {seq.node_count} nodes, {len(seq)} snapshots, "
          f"{entries} adjacency entries -> {cache}")
    return 0


def _cmd_synth(cfg: RunConfig) -> int:
    started = time.perf_counter()
    scfg = cfg.synth_config()
    if cfg.kind == "periodic":
        scfg.validate_periodic()
        history, target = gen_periodic(scfg)
    elif cfg.kind == "recency":
        scfg.validate_recency()
        history, target = gen_recency(scfg)
    else:
        raise UsageError(f"unknown synthetic kind {cfg.kind!r} "
                         "(expected periodic or recency)")
    out = _out_dir(cfg)
    events = os.path.join(out, "events.txt")
    write_events(history, target, events)
    full = SnapshotSequence(list(history.snapshots) + [target],
                            history.node_count)
    cache = os.path.join(out, "snapshots.grls")
    save_snapshot_cache(full, cache)
    _write_sidecars(cfg, out, time.perf_counter() - started)
    print(f"generated {cfg.kind} benchmark: {history.node_count} nodes, "
          f"{len(history)} history steps + 1 target -> {events}")
    return 0


def _cmd_train(cfg: RunConfig) -> int:
    seq = _load_sequence(cfg)
    history, _ = _split_history(seq)
    out = _out_dir(cfg)
    params, report = _train_once(history, cfg, cfg.seed)
    report.config_echo = cfg.echo()
    ckpt = cfg.checkpoint or os.path.join(out, "checkpoint.grle")
    save_checkpoint(params, ckpt)
    _write(os.path.join(out, "train_report.json"), report.to_json())
    _write_sidecars(cfg, out, report.wall_time_sec)
    print(f"trained on {len(history)} snapshots: best epoch "
          f"{report.best_epoch}/{report.epochs_run}, val AUC "
          f"{report.val_auc[report.best_epoch - 1]:.4f} -> {ckpt}")
    return 0


def _cmd_eval(cfg: RunConfig) -> int:
    started = time.perf_counter()
    seq = _load_sequence(cfg)
    history, target = _split_history(seq)
    if not cfg.checkpoint:
        raise UsageError("a trained model is required (--checkpoint FILE)")
    if not os.path.exists(cfg.checkpoint):
        raise UsageError(f"checkpoint not found: {cfg.checkpoint}")
    params = load_checkpoint(cfg.checkpoint)
    if params.node_count != seq.node_count:
        raise UsageError(
            f"checkpoint holds {params.node_count} nodes but the data has "
            f"{seq.node_count}")
    if len(history) > params.history_len:
        raise UsageError(
            f"checkpoint was trained on {params.history_len} snapshots but "
            f"the history here has {len(history)}")
    reports = evaluate_methods(
        history, target, params, cfg.seed, dataset=_dataset_name(cfg),
        split=cfg.split(), predictor_epochs=cfg.predictor_epochs,
        predictor_lr=cfg.predictor_lr)
    for r in reports:
        r.config_echo = cfg.echo()
    out = _out_dir(cfg)
    _write(os.path.join(out, "metrics.csv"), reports_to_csv(reports))
    _write(os.path.join(out, "metrics.json"), reports_to_json(reports, cfg.echo()))
    if cfg.append_to:
        _append_rows(cfg.append_to, reports)
    _write_sidecars(cfg, out, time.perf_counter() - started)
    for r in reports:
        print(f"{r.method:<18} AUC {r.auc:.4f}  MAP {r.map:.4f}  "
              f"({r.n_pos} pos / {r.n_neg} neg)")
    return 0


def _cmd_ablate(cfg: RunConfig) -> int:
    started = time.perf_counter()
    seq = _load_sequence(cfg)
    history, target = _split_history(seq)
    out = _out_dir(cfg)
    rows = ["variant,repeats,auc_mean,auc_std,map_mean,map_std"]
    detail = []
    for variant in VARIANTS:
        vcfg = dataclasses.replace(cfg, variant=variant)
        vcfg.model_config().validate()
        aucs, maps = [], []
        for r in range(cfg.repeats):
            seed = cfg.seed + r
            params, _ = _train_once(history, vcfg, seed)
            rep = _model_report(history, target, params, vcfg, seed)
            aucs.append(rep.auc)
            maps.append(rep.map)
            detail.append({"variant": variant, "seed": seed,
                           "auc": rep.auc, "map": rep.map})
            print(f"{variant:<12} seed {seed}: AUC {rep.auc:.4f}  MAP {rep.map:.4f}")
        rows.append(f"{variant},{cfg.repeats},"
                    f"{np.mean(aucs):.6f},{np.std(aucs):.6f},"
                    f"{np.mean(maps):.6f},{np.std(maps):.6f}")
    _write(os.path.join(out, "ablation.csv"), "\n".join(rows) + "\n")
    _write(os.path.join(out, "ablation.json"),
           json.dumps({"runs": detail, "config": cfg.echo()},
                      sort_keys=True, indent=2) + "\n")
    _write_sidecars(cfg, out, time.perf_counter() - started)
    return 0


def _parse_grid(spec: str) -> tuple[str, list]:
    key, sep, body = spec.partition("=")
    key = key.strip()
    if not sep or not body.strip():
        raise UsageError(f"grid spec must look like key=v1,v2 or key=a..b, got {spec!r}")
    if key == "history":
        typ = int  # history length is a sweep-only axis, not a config field
    elif key in _FIELD_TYPES:
        typ = _FIELD_TYPES[key]
    else:
        raise UsageError(f"unknown grid key {key!r}")
    if ".." in body:
        lo, _, hi = body.partition("..")
        if typ is not int:
            raise UsageError(f"range grids need an integer key, {key!r} is {typ.__name__}")
        try:
            lo_i, hi_i = int(lo), int(hi)
        except ValueError:
            raise UsageError(f"bad range bounds in {spec!r}") from None
        if hi_i < lo_i:
            raise UsageError(f"empty range in {spec!r}")
        return key, list(range(lo_i, hi_i + 1))
    try:
        return key, [typ(part.strip()) for part in body.split(",")]
    except ValueError:
        raise UsageError(f"cannot parse grid values in {spec!r} as {typ.__name__}") from None


def _cmd_sweep(cfg: RunConfig) -> int:
    started = time.perf_counter()
    if not cfg.grid:
        raise UsageError("a parameter grid is required (--grid key=v1,v2,... "
                         "or key=a..b)")
    key, values = _parse_grid(cfg.grid)
    seq = _load_sequence(cfg)
    out = _out_dir(cfg)
    rows = ["key,value,repeats,auc_mean,auc_std,map_mean,map_std"]
    detail = []
    for value in values:
        if key == "history":
            # same final prediction target for every row; only the amount
            # of history the model sees varies
            if not (2 <= value <= len(seq) - 1):
                raise UsageError(
                    f"history length {value} needs 2 <= k <= {len(seq) - 1} "
                    f"(the sequence has {len(seq)} snapshots)")
            history, target = seq.prefix(value), seq[len(seq) - 1]
            point_cfg = cfg
        else:
            point_cfg = dataclasses.replace(cfg, **{key: value})
            history, target = _split_history(seq)
        aucs, maps = [], []
        for r in range(cfg.repeats):
            seed = cfg.seed + r
            params, _ = _train_once(history, point_cfg, seed)
            rep = _model_report(history, target, params, point_cfg, seed)
            aucs.append(rep.auc)
            maps.append(rep.map)
            detail.append({"key": key, "value": value, "seed": seed,
                           "auc": rep.auc, "map": rep.map})
            print(f"{key}={value} seed {seed}: AUC {rep.auc:.4f}  MAP {rep.map:.4f}")
        rows.append(f"{key},{value},{cfg.repeats},"
                    f"{np.mean(aucs):.6f},{np.std(aucs):.6f},"
                    f"{np.mean(maps):.6f},{np.std(maps):.6f}")
    _write(os.path.join(out, "sweep.csv"), "\n".join(rows) + "\n")
    _write(os.path.join(out, "sweep.json"),
           json.dumps({"runs": detail, "config": cfg.echo()},
                      sort_keys=True, indent=2) + "\n")
    _write_sidecars(cfg, out, time.perf_counter() - started)
    return 0


def _cmd_gradcheck(cfg: RunConfig) -> int:
    results = run_op_checks(seed=cfg.seed)
    lines = []
    worst = 0.0
    for name, err in results.items():
        worst = max(worst, err)
        status = "ok" if err < OP_GRAD_TOL else "FAIL"
        lines.append(f"{name:<18} {err:.3e}  {status}")
    model_err = gradcheck_full_model(seed=cfg.seed)
    status = "ok" if model_err < MODEL_GRAD_TOL else "FAIL"
    lines.append(f"{'full model':<18} {model_err:.3e}  {status}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if cfg.out:
        os.makedirs(cfg.out, exist_ok=True)
        _write(os.path.join(cfg.out, "gradcheck.txt"), text)
    ok = worst < OP_GRAD_TOL and model_err < MODEL_GRAD_TOL
    print(f"worst op error {worst:.3e} (tol {OP_GRAD_TOL:g}), "
          f"full model {model_err:.3e} (tol {MODEL_GRAD_TOL:g})")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE",
                   help="key=value config file; flags override it")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--out", metavar="DIR", help="output directory")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", metavar="FILE",
                   help="event text file or .grls snapshot cache")
    p.add_argument("--snapshots", type=int, metavar="K",
                   help="number of equal-width time windows")
    p.add_argument("--directed", action="store_true", default=None)
    p.add_argument("--binarize", action="store_true", default=None,
                   help="force every edge weight to 1")
    p.add_argument("--dataset-name", dest="dataset_name", metavar="NAME")


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--embed-dim", dest="embed_dim", type=int, metavar="D")
    p.add_argument("--local-dim", dest="local_dim", type=int, metavar="D")
    p.add_argument("--global-dim", dest="global_dim", type=int, metavar="D")
    p.add_argument("--heads", type=int, metavar="H")
    p.add_argument("--leaky-slope", dest="leaky_slope", type=float)
    p.add_argument("--no-position", dest="position", action="store_false",
                   default=None, help="disable learned step offsets")
    p.add_argument("--mask", choices=MASK_MODES)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--one-hot", dest="one_hot", action="store_true",
                   default=None, help="frozen identity features instead of "
                   "learned embeddings")


def _add_walks(p: argparse.ArgumentParser) -> None:
    p.add_argument("--walk-length", dest="walk_length", type=int, metavar="L")
    p.add_argument("--walks-per-node", dest="walks_per_node", type=int, metavar="R")
    p.add_argument("--window", type=int, metavar="C")
    p.add_argument("--negatives-per-positive", dest="negatives_per_positive",
                   type=int, metavar="Q")


def _add_training(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--negative-weight", dest="negative_weight", type=float)
    p.add_argument("--minibatch-nodes", dest="minibatch_nodes", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--frozen-samples", dest="frozen_samples",
                   action="store_true", default=None,
                   help="reuse one walk sample across epochs")


def _add_eval(p: argparse.ArgumentParser) -> None:
    p.add_argument("--split-train", dest="split_train", type=float)
    p.add_argument("--split-val", dest="split_val", type=float)
    p.add_argument("--split-test", dest="split_test", type=float)
    p.add_argument("--predictor-epochs", dest="predictor_epochs", type=int)
    p.add_argument("--predictor-lr", dest="predictor_lr", type=float)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynalink",
        description="dynamic link prediction with attention over snapshots")
    sub = parser.add_subparsers(dest="command", metavar="VERB")

    p = sub.add_parser("ingest", help="parse events into a snapshot cache")
    _add_common(p); _add_data(p)
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic benchmark")
    _add_common(p)
    p.add_argument("--kind", choices=("periodic", "recency"))
    p.add_argument("--nodes", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--period", type=int)
    p.add_argument("--intra-p", dest="intra_p", type=float)
    p.add_argument("--birth-rate", dest="birth_rate", type=float)
    p.add_argument("--survival", type=float)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("train", help="fit the model on all but the last snapshot")
    _add_common(p); _add_data(p); _add_model(p); _add_walks(p); _add_training(p)
    p.add_argument("--checkpoint", metavar="FILE",
                   help="where to save the trained model")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint against the baselines")
    _add_common(p); _add_data(p); _add_eval(p)
    p.add_argument("--checkpoint", metavar="FILE", help="trained model to load")
    p.add_argument("--append-to", dest="append_to", metavar="CSV",
                   help="also append result rows to this shared file")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("ablate", help="train and score every model variant")
    _add_common(p); _add_data(p); _add_model(p); _add_walks(p)
    _add_training(p); _add_eval(p)
    p.add_argument("--repeats", type=int, metavar="R")
    p.set_defaults(handler=_cmd_ablate)

    p = sub.add_parser("sweep", help="grid over one run parameter")
    _add_common(p); _add_data(p); _add_model(p); _add_walks(p)
    _add_training(p); _add_eval(p)
    p.add_argument("--grid", metavar="KEY=V1,V2|KEY=A..B")
    p.add_argument("--repeats", type=int, metavar="R")
    p.set_defaults(handler=_cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference audit of every op")
    _add_common(p)
    p.set_defaults(handler=_cmd_gradcheck)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "handler", None) is None:
        parser.print_help(sys.stderr)
        return 2
    overrides = {k: v for k, v in vars(args).items()
                 if k in _FIELD_TYPES and v is not None}
    try:
        cfg = resolve_config(args.config, overrides)
        return args.handler(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
