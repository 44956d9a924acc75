"""Release gate: every check a build must clear before it ships.

Each test prints one ``[acceptance N] PASS/FAIL`` line with its measured
numbers before asserting, so a run reads as a checklist; use
``pytest tests/test_acceptance.py -v -rA`` to see the lines for passing
items too.  The synthetic benchmarks (items 6 and 7) train real models
and dominate the runtime at roughly fifteen minutes; everything else
finishes in seconds.

Two items currently fail and are left failing on purpose, because the
honest result is more useful than a loosened target:

* item 6, recency half: the scoring head is additive over the two
  endpoint embeddings, so it cannot express "this particular pair was
  alive recently" on an unstructured random graph, while the
  last-adjacency baseline reads exactly that signal off the final
  snapshot.
* item 7: every ablation variant keeps the per-node trainable embedding
  table, a static identity channel that survives the removal of any
  attention stage, so removing the temporal stage does not degrade
  block-membership readout below the other ablations.

The docstrings on those two tests carry the measurements behind the
analysis; the benchmark recipe itself is pinned in ``_bench_run``.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from dynalink.checkpoint import load_checkpoint, save_checkpoint
from dynalink.cli import main as cli_main
from dynalink.dyngraph import parse_edge_events, partition_snapshots
from dynalink.engine import ops, run_op_checks
from dynalink.evaluation import auc, evaluate_methods, map_metric
from dynalink.model import (ModelConfig, ParameterSet,
                            global_attention_forward,
                            local_attention_forward, model_forward,
                            temporal_attention_forward)
from dynalink.sampling import WalkConfig
from dynalink.seeding import derive_seed
from dynalink.synth import SynthConfig, gen_periodic, gen_recency
from dynalink.training import TrainConfig, gradcheck_full_model, train

from conftest import make_sequence, two_community_sequence

OP_TOL = 1e-6
MODEL_TOL = 1e-4
EXACT_TOL = 1e-12
RELABEL_TOL = 1e-9

BENCH_SEEDS = (0, 1, 2, 3, 4)
BENCH_WALKS = WalkConfig(walk_length=20, walks_per_node=5, window=5,
                         negatives_per_positive=5)
CORPUS_ENV = "DYNALINK_ENRON_EVENTS"


def _gate(item, label, ok, detail):
    """One checklist line, printed before the assertion so it always shows."""
    print(f"[acceptance {item}] {'PASS' if ok else 'FAIL'} {label}: {detail}")
    assert ok, f"{label}: {detail}"


def _random_sequence(rng, n, t, p=0.3):
    edge_lists = []
    for _ in range(t):
        edges = [(u, v, float(rng.integers(1, 4)))
                 for u in range(n) for v in range(u + 1, n)
                 if rng.random() < p]
        edge_lists.append(edges)
    return make_sequence(n, edge_lists)


# ---------------------------------------------------------------------------
# benchmark harness shared by items 6 and 7


def _bench_run(kind, seed, variant="original", methods=("model", "last-adjacency")):
    """Train on one synthetic history and score the held-out step.

    The hyperparameters are the tuned desk-scale recipe for the 40-node
    generators: wide enough heads to rank all four blocks, a negative
    weight heavy enough to keep validation aligned with the task, and a
    long predictor fit because scoring is cheap next to training.
    """
    gen = gen_periodic if kind == "periodic" else gen_recency
    seq, target = gen(SynthConfig(seed=seed))
    model_cfg = ModelConfig(embed_dim=32, heads=4, variant=variant)
    train_cfg = TrainConfig(epochs=100, learning_rate=2e-2, patience=100,
                            negative_weight=0.1, seed=seed)
    params, _ = train(seq, model_cfg, train_cfg, BENCH_WALKS)
    reports = evaluate_methods(seq, target, params, seed=seed,
                               split=(0.5, 0.1, 0.4), predictor_epochs=3000,
                               methods=methods)
    return {r.method: r.auc for r in reports}


@pytest.fixture(scope="module")
def periodic_bench():
    start = time.perf_counter()
    runs = [_bench_run("periodic", seed) for seed in BENCH_SEEDS]
    return runs, time.perf_counter() - start


@pytest.fixture(scope="module")
def recency_bench():
    start = time.perf_counter()
    runs = [_bench_run("recency", seed) for seed in BENCH_SEEDS]
    return runs, time.perf_counter() - start


@pytest.fixture(scope="module")
def ablation_bench():
    variants = ("no-local", "no-global", "no-temporal")
    return {v: [_bench_run("periodic", seed, variant=v, methods=("model",))["model"]
                for seed in BENCH_SEEDS]
            for v in variants}


# ---------------------------------------------------------------------------
# 1. gradient accuracy


def test_gate_01_gradient_accuracy():
    start = time.perf_counter()
    per_op = run_op_checks(seed=0, instances=20)
    worst_op = max(per_op, key=per_op.get)
    model_err = gradcheck_full_model(node_count=10, t_count=3, dim=8, heads=2,
                                     seed=0)
    elapsed = time.perf_counter() - start
    ok = (max(per_op.values()) < OP_TOL and model_err < MODEL_TOL
          and elapsed < 60.0)
    _gate(1, "gradients vs finite differences", ok,
          f"worst op {worst_op} {per_op[worst_op]:.2e} (< {OP_TOL}), "
          f"full model {model_err:.2e} (< {MODEL_TOL}), {elapsed:.1f}s (< 60s)")


# ---------------------------------------------------------------------------
# 2. later snapshots never leak backward


def test_gate_02_causal_isolation():
    start = time.perf_counter()
    worst = 0.0
    for i in range(100):
        rng = np.random.Generator(np.random.PCG64([202, i]))
        n = int(rng.integers(2, 21))
        t = int(rng.integers(2, 6))
        edge_lists = [[(u, v, float(rng.integers(1, 4)))
                       for u in range(n) for v in range(u + 1, n)
                       if rng.random() < 0.3]
                      for _ in range(t)]
        seq = make_sequence(n, edge_lists)
        params = ParameterSet.build(ModelConfig(embed_dim=8, heads=2), n, t,
                                    seed=int(rng.integers(0, 2**31)))
        z_before = model_forward(seq, params).data.copy()

        cut = int(rng.integers(1, t))  # rewrite one snapshot after step cut-1
        perturbed = list(edge_lists)
        perturbed[cut] = [(u, v, float(rng.integers(1, 4)))
                          for u in range(n) for v in range(u + 1, n)
                          if rng.random() < 0.3]
        z_after = model_forward(make_sequence(n, perturbed), params).data
        worst = max(worst, float(np.max(np.abs(z_after[:, :cut] - z_before[:, :cut]))))
    elapsed = time.perf_counter() - start
    ok = worst <= EXACT_TOL and elapsed < 30.0
    _gate(2, "earlier embeddings ignore later snapshots", ok,
          f"max drift {worst:.2e} over 100 instances (<= {EXACT_TOL}), "
          f"{elapsed:.1f}s (< 30s)")


# ---------------------------------------------------------------------------
# 3. attention rows are probability distributions


def test_gate_03_attention_row_normalization():
    worst = 0.0
    for i in range(10):
        rng = np.random.Generator(np.random.PCG64([303, i]))
        n = int(rng.integers(3, 13))
        t = int(rng.integers(2, 5))
        seq = _random_sequence(rng, n, t)
        cfg = ModelConfig(embed_dim=8, heads=2)
        params = ParameterSet.build(cfg, n, t, seed=int(rng.integers(0, 2**31)))
        x = params["embedding"]

        per_step = []
        for step in range(t):
            h_local, alphas = local_attention_forward(seq[step], x, params,
                                                      return_attention=True)
            for alpha in alphas:
                worst = max(worst, float(np.max(np.abs(alpha.sum(axis=1) - 1.0))))
            h_global, rows = global_attention_forward(h_local, params,
                                                      return_attention=True)
            for w in rows:
                worst = max(worst, float(np.max(np.abs(w.sum(axis=1) - 1.0))))
            per_step.append(ops.reshape(h_global, (n, 1, cfg.global_dim)))
        stacked = per_step[0] if t == 1 else ops.concat(per_step, axis=1)
        _, temporal = temporal_attention_forward(stacked, params,
                                                 return_attention=True)
        for w in temporal:  # (N, T, T); step i may only see steps j <= i
            for step in range(t):
                prefix = w[:, step, :step + 1].sum(axis=-1)
                worst = max(worst, float(np.max(np.abs(prefix - 1.0))))
                if step + 1 < t:
                    worst = max(worst, float(np.max(np.abs(w[:, step, step + 1:]))))
    ok = worst <= EXACT_TOL
    _gate(3, "attention rows sum to one", ok,
          f"max deviation {worst:.2e} across local, global, and "
          f"temporal-prefix rows (<= {EXACT_TOL})")


# ---------------------------------------------------------------------------
# 4. ranking metrics against brute-force oracles


def _auc_oracle(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = sum(1.0 if p > q else (0.5 if p == q else 0.0)
               for p in pos for q in neg)
    return wins / (len(pos) * len(neg))


def _ap_oracle(group):
    ranked = sorted(group, key=lambda item: (-item[0], item[2]))
    hits, precisions = 0, []
    for rank, (_, label, _) in enumerate(ranked, start=1):
        if label == 1:
            hits += 1
            precisions.append(hits / rank)
    return sum(precisions) / len(precisions)


def test_gate_04_metric_oracles():
    worst_auc = 0.0
    for i in range(200):
        rng = np.random.Generator(np.random.PCG64([404, i]))
        n_pos = int(rng.integers(1, 20))
        n_neg = int(rng.integers(1, 20))
        labels = [1] * n_pos + [0] * n_neg
        if rng.random() < 0.5:  # quantized scores force tie handling
            scores = list(rng.integers(0, 6) / 5.0 for _ in labels)
        else:
            scores = list(rng.random() for _ in labels)
        worst_auc = max(worst_auc, abs(auc(scores, labels) - _auc_oracle(scores, labels)))

    worst_map = 0.0
    for i in range(200):
        rng = np.random.Generator(np.random.PCG64([405, i]))
        groups = []
        for _ in range(int(rng.integers(1, 6))):
            size = int(rng.integers(1, 9))
            ids = rng.permutation(100)[:size]
            groups.append([(float(rng.integers(0, 6) / 5.0),
                            int(rng.random() < 0.4), int(j)) for j in ids])
        if not any(label == 1 for g in groups for _, label, _ in g):
            u, v, w = groups[0][0]
            groups[0][0] = (u, 1, w)
        oracle = float(np.mean([_ap_oracle(g) for g in groups
                                if any(label == 1 for _, label, _ in g)]))
        worst_map = max(worst_map, abs(map_metric(groups) - oracle))

    ok = worst_auc <= EXACT_TOL and worst_map <= EXACT_TOL
    _gate(4, "metrics match brute-force recomputation", ok,
          f"auc gap {worst_auc:.2e}, map gap {worst_map:.2e} over 200 "
          f"score sets each (<= {EXACT_TOL})")


# ---------------------------------------------------------------------------
# 5. node relabeling commutes with the forward pass


def test_gate_05_relabeling_equivariance():
    worst = 0.0
    for i in range(20):
        rng = np.random.Generator(np.random.PCG64([505, i]))
        n = int(rng.integers(4, 13))
        t = int(rng.integers(2, 5))
        seq = _random_sequence(rng, n, t)
        seed = int(rng.integers(0, 2**31))
        params = ParameterSet.build(ModelConfig(embed_dim=8, heads=2), n, t,
                                    seed=seed)
        z = model_forward(seq, params).data.copy()

        perm = rng.permutation(n)
        relabeled = make_sequence(
            n, [[(int(perm[u]), int(perm[v]), w) for u, v, w in s.edges()]
                for s in seq.snapshots])
        permuted = ParameterSet.build(params.config, n, t, seed=seed)
        for name, tensor in params.tensors.items():
            permuted.tensors[name].data = tensor.data.copy()
        emb = np.empty_like(params["embedding"].data)
        emb[perm] = params["embedding"].data
        permuted.tensors["embedding"].data = emb
        z_perm = model_forward(relabeled, permuted).data
        worst = max(worst, float(np.max(np.abs(z_perm[perm] - z))))
    ok = worst <= RELABEL_TOL
    _gate(5, "forward pass commutes with relabeling", ok,
          f"max mismatch {worst:.2e} over 20 instances (<= {RELABEL_TOL})")


# ---------------------------------------------------------------------------
# 6. synthetic benchmarks


@pytest.mark.slow
def test_gate_06a_periodic_benchmark_separation(periodic_bench):
    runs, elapsed = periodic_bench
    model = [r["model"] for r in runs]
    last = [r["last-adjacency"] for r in runs]
    model_mean = float(np.mean(model))
    last_mean = float(np.mean(last))
    ok = model_mean >= 0.80 and model_mean - last_mean >= 0.10
    _gate("6a", "periodic benchmark separation", ok,
          f"model mean {model_mean:.3f} (>= 0.80) vs last-adjacency "
          f"{last_mean:.3f} (margin {model_mean - last_mean:+.3f}, >= 0.10); "
          f"per-seed {[round(a, 3) for a in model]}; {elapsed:.0f}s")


@pytest.mark.slow
def test_gate_06b_recency_benchmark_tolerance(periodic_bench, recency_bench):
    """Expected to fail: the additive scoring head cannot track pairs.

    On the decaying random graph the one useful signal is "edge (u, v)
    existed a moment ago", a property of the pair, not of either node.
    The head scores sigmoid(w . [z_u | z_v] + b), which ranks pairs by a
    sum of per-endpoint values, so the best it can express is node
    activity.  The last-adjacency baseline reads pair persistence
    directly off the final snapshot.  Measured under the pinned recipe:
    model per-seed [0.505, 0.641, 0.491, 0.512, 0.544] (mean 0.539),
    last-adjacency mean 0.905, a gap of 0.37 where the target allows
    0.02.
    """
    runs, elapsed_rec = recency_bench
    _, elapsed_per = periodic_bench
    model = [r["model"] for r in runs]
    last = [r["last-adjacency"] for r in runs]
    model_mean = float(np.mean(model))
    last_mean = float(np.mean(last))
    total = elapsed_per + elapsed_rec
    ok = model_mean >= last_mean - 0.02 and total < 600.0
    _gate("6b", "recency benchmark tolerance", ok,
          f"model mean {model_mean:.3f} vs last-adjacency {last_mean:.3f} "
          f"(needs >= {last_mean - 0.02:.3f}); per-seed model "
          f"{[round(a, 3) for a in model]}; both benchmarks {total:.0f}s (< 600s)")


# ---------------------------------------------------------------------------
# 7. ablation ordering


@pytest.mark.slow
def test_gate_07_ablation_ordering(periodic_bench, ablation_bench):
    """Expected to fail: a static identity channel survives every ablation.

    All four variants train the same per-node embedding table, and the
    walk loss clusters block-mates in that table regardless of which
    attention stages sit above it.  The additive scoring head only needs
    a consistent per-block ordering to separate the eval pairs, and that
    ordering survives the removal of the temporal stage (dropping the
    cross-step smearing even sharpens it).  Five-seed means under the
    pinned recipe: original 0.845, no-local 0.643, no-global 0.817,
    no-temporal 0.838, so the required "no-temporal strictly worst"
    ordering does not emerge (it lands on par with the full model).  A
    one-hot feature variant was probed as well and shows the same shape:
    the local projection columns simply become the identity channel.
    """
    runs, _ = periodic_bench
    original = float(np.mean([r["model"] for r in runs]))
    means = {v: float(np.mean(aucs)) for v, aucs in ablation_bench.items()}
    weakest_single = min(means["no-local"], means["no-global"])
    ok = (means["no-temporal"] < weakest_single
          and weakest_single < original + 0.01)
    _gate(7, "ablations order by stage importance", ok,
          f"original {original:.3f}, no-local {means['no-local']:.3f}, "
          f"no-global {means['no-global']:.3f}, no-temporal "
          f"{means['no-temporal']:.3f}; needs no-temporal < "
          f"{weakest_single:.3f} < {original + 0.01:.3f}")


# ---------------------------------------------------------------------------
# 8. real-corpus sanity band (only when a corpus is supplied)


@pytest.mark.slow
def test_gate_08_mailbox_corpus_band():
    """Desk-scale sanity band on a real email graph, when one is present.

    Point ``DYNALINK_ENRON_EVENTS`` at a whitespace-delimited event file
    (``u v t [w]`` per line); it is cut into 16 windows, the model trains
    on the first 15 and is scored on the 16th.
    """
    path = os.environ.get(CORPUS_ENV, "")
    if not path or not Path(path).exists():
        print(f"[acceptance 8] SKIP mailbox corpus band: corpus not provided "
              f"(set {CORPUS_ENV} to an event file)")
        pytest.skip("corpus not provided")

    start = time.perf_counter()
    events, id_map = parse_edge_events(Path(path).read_text())
    seq = partition_snapshots(events, 16, id_map=id_map)
    history, target = seq.prefix(15), seq.snapshots[15]
    model_cfg = ModelConfig(embed_dim=32, heads=4)
    train_cfg = TrainConfig(epochs=100, learning_rate=2e-2, patience=100,
                            negative_weight=0.1, seed=0)
    params, _ = train(history, model_cfg, train_cfg, BENCH_WALKS)
    reports = evaluate_methods(history, target, params, seed=0,
                               split=(0.5, 0.1, 0.4), predictor_epochs=3000,
                               methods=("model",))
    elapsed = time.perf_counter() - start
    score = reports[0].auc
    ok = score >= 0.85 and elapsed < 1800.0
    _gate(8, "mailbox corpus band", ok,
          f"auc {score:.3f} (>= 0.85), {elapsed:.0f}s (< 1800s)")


# ---------------------------------------------------------------------------
# 9. reruns are byte-identical through the CLI


def test_gate_09_cli_rerun_byte_identical(tmp_path):
    data = tmp_path / "data"
    fit = tmp_path / "fit"
    scored = tmp_path / "scored"
    assert cli_main(["synth", "--kind", "periodic", "--nodes", "16",
                     "--steps", "4", "--blocks", "4", "--period", "2",
                     "--intra-p", "0.6", "--seed", "0", "--out", str(data)]) == 0

    train_args = ["train", "--data", str(data / "snapshots.grls"),
                  "--out", str(fit), "--embed-dim", "8", "--heads", "2",
                  "--walk-length", "8", "--walks-per-node", "2",
                  "--window", "3", "--negatives-per-positive", "3",
                  "--epochs", "3", "--patience", "3", "--seed", "0"]
    eval_args = ["eval", "--data", str(data / "snapshots.grls"),
                 "--checkpoint", str(fit / "checkpoint.grle"),
                 "--out", str(scored), "--predictor-epochs", "20",
                 "--seed", "0"]

    assert cli_main(train_args) == 0
    report_once = (fit / "train_report.json").read_bytes()
    assert cli_main(eval_args) == 0
    csv_once = (scored / "metrics.csv").read_bytes()
    json_once = (scored / "metrics.json").read_bytes()

    assert cli_main(train_args) == 0
    assert cli_main(eval_args) == 0
    same = {
        "train_report.json": (fit / "train_report.json").read_bytes() == report_once,
        "metrics.csv": (scored / "metrics.csv").read_bytes() == csv_once,
        "metrics.json": (scored / "metrics.json").read_bytes() == json_once,
    }
    ok = all(same.values())
    _gate(9, "CLI reruns reproduce reports byte for byte", ok,
          ", ".join(f"{name} {'identical' if hit else 'DIFFERS'}"
                    for name, hit in same.items()))


# ---------------------------------------------------------------------------
# 10. checkpoint round trip and corruption rejection


def test_gate_10_checkpoint_round_trip(tmp_path):
    seq = two_community_sequence(n=12, t=3, seed=1)
    params = ParameterSet.build(ModelConfig(embed_dim=8, heads=2), 12, 3,
                                seed=derive_seed(7, "params"))
    z_before = model_forward(seq, params).data.copy()

    path = tmp_path / "model.grle"
    save_checkpoint(params, str(path))
    z_after = model_forward(seq, load_checkpoint(str(path))).data
    bit_exact = np.array_equal(z_before, z_after)

    blob = path.read_bytes()
    rejected = {}
    for name, broken in [
        ("bad magic", b"XXXX" + blob[4:]),
        ("truncated", blob[:-50]),
        ("trailing junk", blob + b"\x00\x01\x02"),
        ("flipped metadata byte", blob[:12] + bytes([blob[12] ^ 0xFF]) + blob[13:]),
    ]:
        broken_path = tmp_path / "broken.grle"
        broken_path.write_bytes(broken)
        try:
            load_checkpoint(str(broken_path))
            rejected[name] = False
        except ValueError:
            rejected[name] = True

    ok = bit_exact and all(rejected.values())
    _gate(10, "checkpoints round-trip bit-exactly and reject damage", ok,
          f"forward {'bit-exact' if bit_exact else 'DRIFTED'}; "
          + ", ".join(f"{name} {'rejected' if hit else 'ACCEPTED'}"
                      for name, hit in rejected.items()))
