"""Command-line entry point and benchmark orchestration.

Subcommands:

  synth            generate synthetic Gaussian-class embeddings and tasks
  prepare          turn activity records into binary task labels
  benchmark        run the episodic benchmark over models and support sizes
  demo-degenerate  emit the degenerate-family sweep and spectrum trajectories
  report           render figures from previously written CSVs

Exit codes: 0 success, 1 usage error, 2 data error, 3 partial failure above
the 10% threshold.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import degeneracy, episodes, fileio, metrics, probes, synth
from .core import EmbeddingSet, LabelledSample, TrainConfig
from .episodes import EpisodeSpec, TaskRecord
from .errors import FewprobeError, InsufficientSamples, NotSeparable
from .fileio import RunManifest
from .metrics import ScoredQuery

MODEL_NAMES = ("l-probe", "q-probe", "prototype", "knn", "simsearch",
               "free-opt", "free-opt-reg")

TRACE_COLUMNS = ["lambda_or_epoch", "ce", "f1", "f2", "f2_tilde",
                 "fro_norm_M0", "fro_norm_M1", "max_eig_M0", "max_eig_M1"]


class _UsageError(SystemExit):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# Shared helpers


def _parse_float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x]


def _parse_int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def _parse_epochs_per_size(text: str) -> dict[int, int]:
    out = {}
    for pair in text.split(","):
        if not pair:
            continue
        k, v = pair.split("=")
        out[int(k)] = int(v)
    return out


def trace_to_frame(trace: probes.TrainTrace) -> pd.DataFrame:
    n = len(trace)
    def col(values, idx=None):
        if not values:
            return [float("nan")] * n
        if idx is None:
            return list(values)
        return [v[idx] for v in values]
    return pd.DataFrame({
        "lambda_or_epoch": list(range(n)),
        "ce": col(trace.ce),
        "f1": col(trace.f1),
        "f2": col(trace.f2),
        "f2_tilde": col(trace.f2_tilde),
        "fro_norm_M0": col(trace.fro_norm, 0),
        "fro_norm_M1": col(trace.fro_norm, 1),
        "max_eig_M0": col(trace.max_eig, 0),
        "max_eig_M1": col(trace.max_eig, 1),
    }, columns=TRACE_COLUMNS)


def sweep_to_frame(rows: list[degeneracy.SweepRow]) -> pd.DataFrame:
    return pd.DataFrame({
        "lambda_or_epoch": [r.lam for r in rows],
        "ce": [r.ce for r in rows],
        "f1": [r.f1 for r in rows],
        "f2": [r.f2 for r in rows],
        "f2_tilde": [r.f2_tilde for r in rows],
        "fro_norm_M0": [r.fro_norm[0] for r in rows],
        "fro_norm_M1": [r.fro_norm[1] for r in rows],
        "max_eig_M0": [r.max_eig[0] for r in rows],
        "max_eig_M1": [r.max_eig[1] for r in rows],
    }, columns=TRACE_COLUMNS)


# ---------------------------------------------------------------------------
# Benchmark


def evaluate_episode(episode, embeddings: EmbeddingSet, models: list[str],
                     cfg: TrainConfig, k_percents: list[float],
                     fingerprints=None, knn_k: int = 5,
                     freeze_prototypes: bool = False) -> list[dict]:
    """Score every model on one episode; all models see the same split."""
    query_ids = [q.id for q in episode.query]
    Q = embeddings.matrix(query_ids)
    labels = np.array([q.label for q in episode.query], dtype=np.intp)
    rows = []
    for model in models:
        if model == "l-probe":
            params, _ = probes.linear_probe_fit(episode.support, embeddings,
                                                cfg)
            scores = probes.linear_probe_scores(params, Q)
        elif model == "q-probe":
            params, _ = probes.quadratic_probe_fit(
                episode.support, embeddings, cfg,
                freeze_prototypes=freeze_prototypes, track_spectrum=False)
            scores = probes.quadratic_probe_scores(params, Q)
        elif model == "prototype":
            scores = probes.prototype_scores(episode.support, embeddings, Q)
        elif model == "free-opt":
            params, _ = probes.free_opt_fit(episode.support, embeddings, cfg,
                                            regularized=False,
                                            track_spectrum=False)
            scores = probes.free_opt_scores(params, Q)
        elif model == "free-opt-reg":
            params, _ = probes.free_opt_fit(episode.support, embeddings, cfg,
                                            regularized=True,
                                            track_spectrum=False)
            scores = probes.free_opt_scores(params, Q)
        elif model == "knn":
            k = min(knn_k, len(episode.support))
            feats = {s.id: embeddings.vector(s.id) for s in episode.support}
            scores = np.array([
                probes.knn_score(episode.support, feats,
                                 embeddings.vector(q), k)
                for q in query_ids
            ])
        elif model == "simsearch":
            if fingerprints is None:
                raise FewprobeError(
                    "simsearch requires a fingerprints file")
            scores = np.array([
                probes.simsearch_score(episode.support, fingerprints,
                                       fingerprints[q])
                for q in query_ids
            ])
        else:
            raise FewprobeError(f"unknown model {model!r}")
        q = ScoredQuery(scores=np.asarray(scores, dtype=np.float64),
                        labels=labels)
        row = {
            "model": model,
            "task_id": episode.task_id,
            "support_size": len(episode.support),
            "repeat": None,  # filled by the caller
            "n_support": len(episode.support),
            "n_query": len(episode.query),
            "prevalence": q.prevalence,
            "aucpr": metrics.average_precision(q),
            "delta_aucpr": metrics.delta_aucpr(q),
        }
        for kp in k_percents:
            row[f"hitrate_{kp:g}"] = metrics.hitrate_at_percent(q, kp)
        rows.append(row)
    return rows


_BENCH_CTX: dict = {}


def _bench_cell(job: tuple[str, int, int]) -> tuple[tuple, list[dict], str]:
    """Evaluate one (task, support_size, repeat) cell for all models."""
    task_id, size, repeat = job
    ctx = _BENCH_CTX
    task = ctx["tasks"][task_id]
    spec = EpisodeSpec(support_size=size,
                       support_positive_fraction=ctx["hit_fraction"],
                       seed=ctx["seed"])
    try:
        episode = episodes.sample_episode(task, spec, repeat)
        cfg = ctx["configs"][size]
        rows = evaluate_episode(episode, ctx["embeddings"], ctx["models"],
                                cfg, ctx["k_percents"],
                                fingerprints=ctx["fingerprints"],
                                knn_k=ctx["knn_k"],
                                freeze_prototypes=ctx["freeze_prototypes"])
        for row in rows:
            row["repeat"] = repeat
            if ctx["hit_fraction"] is not None:
                row["hit_fraction"] = ctx["hit_fraction"]
        return (task_id, size, repeat), rows, ""
    except (InsufficientSamples, FewprobeError) as exc:
        return (task_id, size, repeat), [], str(exc)


def run_benchmark(embeddings: EmbeddingSet, tasks: list[TaskRecord],
                  models: list[str], support_sizes: list[int],
                  repeats: int, cfg: TrainConfig,
                  epochs_per_size: dict[int, int] | None = None,
                  hit_fraction: float | None = None,
                  k_percents: list[float] | None = None,
                  fingerprints=None, knn_k: int = 5,
                  freeze_prototypes: bool = False,
                  threads: int = 1
                  ) -> tuple[pd.DataFrame, list[str]]:
    """Run every (task, size, repeat, model) cell; deterministic under the
    seed and independent of ``threads``.

    Returns (per-episode rows sorted by canonical key, failure messages).
    """
    k_percents = k_percents or []
    epochs_per_size = epochs_per_size or {}
    configs = {
        size: replace(cfg, epochs=epochs_per_size.get(size, cfg.epochs))
        for size in support_sizes
    }
    global _BENCH_CTX
    _BENCH_CTX = {
        "tasks": {t.task_id: t for t in tasks},
        "embeddings": embeddings,
        "models": models,
        "configs": configs,
        "seed": cfg.seed,
        "hit_fraction": hit_fraction,
        "k_percents": k_percents,
        "fingerprints": fingerprints,
        "knn_k": knn_k,
        "freeze_prototypes": freeze_prototypes,
    }
    jobs = [(t.task_id, size, rep)
            for t in tasks for size in support_sizes for rep in range(repeats)]
    results: dict[tuple, list[dict]] = {}
    failures: list[str] = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for key, rows, err in pool.map(_bench_cell, jobs, chunksize=4):
                results[key] = rows
                if err:
                    failures.append(f"{key}: {err}")
    else:
        for job in jobs:
            key, rows, err = _bench_cell(job)
            results[key] = rows
            if err:
                failures.append(f"{key}: {err}")
    all_rows = []
    for key in sorted(results):
        all_rows.extend(results[key])
    frame = pd.DataFrame(all_rows)
    if not frame.empty:
        frame = frame.sort_values(
            ["model", "task_id", "support_size", "repeat"]
        ).reset_index(drop=True)
    return frame, failures


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    spec = synth.SyntheticSpec(
        d=args.d, n_per_class=args.n_per_class, n_tasks=args.tasks,
        generator=args.generator, separation=args.separation,
        scale=args.scale, condition_number=args.cond, seed=args.seed)
    t0 = time.time()
    embeddings, tasks, synthetic = synth.make_benchmark(spec)
    emb_path = Path(f"{args.out}-embeddings.csv")
    tasks_path = Path(f"{args.out}-tasks.jsonl")
    fileio.write_embeddings_csv(emb_path, embeddings)
    fileio.write_tasks_jsonl(tasks_path, tasks)
    manifest = RunManifest(
        config={
            "command": "synth",
            **asdict(spec),
            "true_parameters": [
                {
                    "task_id": st.task.task_id,
                    "means": st.true_means.tolist(),
                    "covariance_eigenvalues": [
                        np.linalg.eigvalsh(st.true_covariances[k]).tolist()
                        for k in (0, 1)
                    ],
                }
                for st in synthetic
            ],
        },
        input_digests={},
        master_seed=spec.seed,
        wall_clock=RunManifest.now(),
        stage_timings={"synth": time.time() - t0},
    )
    manifest.write(f"{args.out}-manifest.json")
    print(f"wrote {emb_path} ({len(embeddings)} embeddings, d={spec.d}) "
          f"and {tasks_path} ({len(tasks)} tasks)")
    return 0


def cmd_prepare(args) -> int:
    report = fileio.ParseReport()
    tasks = fileio.read_tasks_jsonl(args.input, report)
    if not tasks:
        fileio.write_tasks_jsonl(args.output, [])
        print("warning: no tasks in input; wrote empty output",
              file=sys.stderr)
        return 2 if report.bad_lines else 0

    n_samples_in = sum(len(t) for t in tasks)
    deduped = [episodes.deduplicate_measurements(t) for t in tasks]
    n_after_dedup = sum(len(t) for t in deduped)

    binarized = []
    empty_tasks = 0
    for t in deduped:
        if not t.samples:
            empty_tasks += 1
            continue
        try:
            binarized.append(episodes.binarize_by_clipped_median(
                t, clip_low=args.clip_low, clip_high=args.clip_high))
        except FewprobeError:
            empty_tasks += 1
    n_after_binarize = sum(len(t) for t in binarized)

    lo, hi = args.pos_frac_range
    kept = episodes.filter_tasks(binarized, min_size=args.min_size,
                                 max_size=args.max_size,
                                 pos_frac_range=(lo, hi))
    fileio.write_tasks_jsonl(args.output, kept)
    print(f"input: {len(tasks)} tasks, {n_samples_in} samples"
          + (f", {len(report.bad_lines)} malformed lines skipped"
             if report.bad_lines else ""))
    print(f"deduplication dropped {n_samples_in - n_after_dedup} samples")
    print(f"binarization dropped {n_after_dedup - n_after_binarize} samples "
          f"and emptied {empty_tasks} tasks")
    print(f"filters kept {len(kept)}/{len(binarized)} tasks")
    if report.bad_lines:
        print(f"error: malformed lines at {report.bad_lines[:20]}",
              file=sys.stderr)
        return 2
    return 0


def cmd_benchmark(args) -> int:
    t0 = time.time()
    embeddings = fileio.read_embeddings(args.embeddings)
    report = fileio.ParseReport()
    tasks = fileio.read_tasks_jsonl(args.tasks, report)
    if report.bad_lines:
        print(f"error: malformed task lines at {report.bad_lines[:20]}",
              file=sys.stderr)
        return 2
    missing = [
        s.sample_id for t in tasks for s in t.samples
        if s.sample_id not in embeddings
    ]
    if missing:
        print(f"error: {len(missing)} sample ids missing from embeddings "
              f"(first: {missing[:5]})", file=sys.stderr)
        return 2
    fingerprints = None
    if args.fingerprints:
        fingerprints = fileio.read_fingerprints_csv(args.fingerprints)
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                      shrinkage_lambda=getattr(args, "lambda"),
                      temperature=args.tau, seed=args.seed,
                      free_opt_reg_weight=args.free_opt_reg_weight)
    models = args.models.split(",")
    for m in models:
        if m not in MODEL_NAMES:
            print(f"error: unknown model {m!r} (choose from {MODEL_NAMES})",
                  file=sys.stderr)
            return 1
    load_time = time.time() - t0
    t1 = time.time()
    rows, failures = run_benchmark(
        embeddings, tasks, models,
        support_sizes=args.support_sizes, repeats=args.repeats, cfg=cfg,
        epochs_per_size=args.epochs_per_size, hit_fraction=args.hit_fraction,
        k_percents=args.k_percents, fingerprints=fingerprints,
        knn_k=args.knn_k, freeze_prototypes=args.freeze_prototypes,
        threads=args.threads)
    bench_time = time.time() - t1
    for msg in failures:
        print(f"warning: cell failed: {msg}", file=sys.stderr)

    out = Path(args.out)
    csv_path = out.with_suffix(".csv")
    fileio.write_results_csv(csv_path, rows)
    report_obj = metrics.aggregate(rows) if not rows.empty else None
    json_path = out.with_suffix(".json")
    with open(json_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report_obj.to_json_dict() if report_obj else {}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    manifest = RunManifest(
        config={
            "command": "benchmark",
            "models": models,
            "support_sizes": args.support_sizes,
            "repeats": args.repeats,
            "hit_fraction": args.hit_fraction,
            "k_percents": args.k_percents,
            "epochs_per_size": args.epochs_per_size,
            "knn_k": args.knn_k,
            "freeze_prototypes": args.freeze_prototypes,
            "result_columns": list(rows.columns),
            **asdict(cfg),
        },
        input_digests={
            "embeddings": fileio.file_digest(args.embeddings),
            "tasks": fileio.file_digest(args.tasks),
            **({"fingerprints": fileio.file_digest(args.fingerprints)}
               if args.fingerprints else {}),
        },
        master_seed=cfg.seed,
        wall_clock=RunManifest.now(),
        stage_timings={"load": load_time, "benchmark": bench_time},
    )
    manifest.write(str(out) + ".manifest.json")
    if args.plot and report_obj is not None:
        from . import figures
        figures.plot_benchmark(report_obj.aggregates,
                               str(out) + "-delta-aucpr.png")
    print(f"wrote {csv_path} ({len(rows)} rows), {json_path}")
    n_cells = len(tasks) * len(args.support_sizes) * args.repeats
    if failures and len(failures) > 0.1 * n_cells:
        print(f"error: {len(failures)}/{n_cells} cells failed",
              file=sys.stderr)
        return 3
    return 0


def cmd_demo_degenerate(args) -> int:
    if args.embeddings and args.tasks:
        embeddings = fileio.read_embeddings(args.embeddings)
        tasks = fileio.read_tasks_jsonl(args.tasks)
        if not tasks:
            print("error: no tasks found", file=sys.stderr)
            return 2
        task = tasks[0]
        support = task.labelled_samples()
    else:
        embeddings, support = synth.separable_instance(
            d=args.d, n_per_class=args.n_per_class, seed=args.seed)
    cfg = TrainConfig(epochs=max(args.epochs, 1), learning_rate=args.lr,
                      shrinkage_lambda=getattr(args, "lambda"),
                      seed=args.seed,
                      free_opt_reg_weight=args.free_opt_reg_weight)
    out = Path(args.out)
    try:
        sweep = degeneracy.divergence_sweep(support, embeddings,
                                            lambdas=args.lambdas,
                                            seed=args.seed)
    except NotSeparable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    sweep_frame = sweep_to_frame(sweep)
    fileio.write_results_csv(f"{out}-sweep.csv", sweep_frame)
    if args.epochs > 0:
        free_trace, quad_trace = degeneracy.eigenvalue_trajectory_compare(
            support, embeddings, cfg)
        free_frame = trace_to_frame(free_trace)
        quad_frame = trace_to_frame(quad_trace)
    else:
        # initialization rows only: both heads start from identity precision
        free_frame = trace_to_frame(probes.TrainTrace())
        quad_frame = trace_to_frame(probes.TrainTrace())
    fileio.write_results_csv(f"{out}-freeopt.csv", free_frame)
    fileio.write_results_csv(f"{out}-qprobe.csv", quad_frame)
    if args.plot:
        from . import figures
        figures.plot_divergence_sweep(sweep_frame, f"{out}-sweep.png")
        if args.epochs > 0:
            figures.plot_eigenvalue_trajectories(free_frame, quad_frame,
                                                 f"{out}-trajectories.png")
    print(f"wrote {out}-sweep.csv, {out}-freeopt.csv, {out}-qprobe.csv")
    return 0


def cmd_report(args) -> int:
    from . import figures
    wrote = []
    if args.results:
        rows = pd.read_csv(args.results)
        report = metrics.aggregate(rows)
        path = figures.plot_benchmark(report.aggregates,
                                      f"{args.out}-delta-aucpr.png")
        wrote.append(path)
    if args.sweep:
        sweep = pd.read_csv(args.sweep)
        wrote.append(figures.plot_divergence_sweep(
            sweep, f"{args.out}-sweep.png"))
    if args.trajectories:
        free = pd.read_csv(args.trajectories[0])
        quad = pd.read_csv(args.trajectories[1])
        wrote.append(figures.plot_eigenvalue_trajectories(
            free, quad, f"{args.out}-trajectories.png"))
    if not wrote:
        print("error: nothing to render (pass --results, --sweep, or "
              "--trajectories)", file=sys.stderr)
        return 1
    for p in wrote:
        print(f"wrote {p}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", type=float, default=0.2,
                   help="covariance shrinkage toward the identity")
    p.add_argument("--tau", type=float, default=10.0,
                   help="linear probe temperature")
    p.add_argument("--lr", type=float, default=0.05, help="learning rate")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--free-opt-reg-weight", type=float, default=0.01)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fewprobe",
                     description="Few-shot probes over fixed embeddings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic embeddings/tasks")
    p.add_argument("--d", type=int, default=16)
    p.add_argument("--n-per-class", type=int, default=600)
    p.add_argument("--tasks", type=int, default=1)
    p.add_argument("--generator", choices=("isotropic", "diagonal", "rotated"),
                   default="isotropic")
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--scale", type=float, default=0.3)
    p.add_argument("--cond", type=float, default=100.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="activities -> binary task labels")
    p.add_argument("input", help="JSONL of {task_id, sample_id, activity}")
    p.add_argument("output", help="JSONL of {task_id, sample_id, label}")
    p.add_argument("--clip-low", type=float, default=5.0)
    p.add_argument("--clip-high", type=float, default=9.0)
    p.add_argument("--min-size", type=int, default=60)
    p.add_argument("--max-size", type=int, default=5000)
    p.add_argument("--pos-frac-range", type=_parse_float_list,
                   default=[0.1, 0.6], metavar="LO,HI")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("benchmark", help="run the episodic benchmark")
    p.add_argument("embeddings")
    p.add_argument("tasks")
    p.add_argument("--fingerprints")
    p.add_argument("--models", default="l-probe,q-probe,prototype")
    p.add_argument("--support-sizes", type=_parse_int_list,
                   default=[16, 32, 64, 128])
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--epochs-per-size", type=_parse_epochs_per_size,
                   default={}, metavar="SIZE=EPOCHS,...")
    p.add_argument("--hit-fraction", type=float, default=None,
                   help="screening mode: support positive fraction")
    p.add_argument("--k-percents", type=_parse_float_list, default=[],
                   metavar="K1,K2,...", help="top-k%% hitrate thresholds")
    p.add_argument("--knn-k", type=int, default=5)
    p.add_argument("--freeze-prototypes", action="store_true",
                   help="skip the prototype gradient step of the q-probe")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--plot", action="store_true",
                   help="also render PNG figures next to the CSV")
    p.add_argument("--out", required=True, help="output path prefix")
    _add_train_flags(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("demo-degenerate",
                       help="degenerate-family sweep and spectra")
    p.add_argument("--embeddings")
    p.add_argument("--tasks")
    p.add_argument("--d", type=int, default=128)
    p.add_argument("--n-per-class", type=int, default=8)
    p.add_argument("--lambdas", type=_parse_float_list,
                   default=list(degeneracy.DEFAULT_LAMBDA_GRID))
    p.add_argument("--plot", action="store_true")
    p.add_argument("--out", required=True, help="output path prefix")
    _add_train_flags(p)
    p.set_defaults(func=cmd_demo_degenerate)

    p = sub.add_parser("report", help="render figures from CSV outputs")
    p.add_argument("--results", help="benchmark results CSV")
    p.add_argument("--sweep", help="degenerate sweep CSV")
    p.add_argument("--trajectories", nargs=2,
                   metavar=("FREE_CSV", "QPROBE_CSV"))
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FewprobeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
