"""Command-line harness: build kernel banks, run restart experiments and
assemble result tables.

    gmkcf synth   --clusters 3 --per-cluster 100 --dim 10 --out data/blobs
    gmkcf kernels --data data/blobs.csv --out blobs.bank.npz
    gmkcf fit     --data data/blobs.csv --labels data/blobs.labels --algo gmkcf --out gmkcf.json
    gmkcf table   gmkcf.json kcf.json --out table.csv

Every subcommand also takes ``--config FILE`` (JSON or YAML) whose keys are
the long flag names; flags given on the command line win.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import data_io
from .cluster_post import KMeansConfig, kmeans_fit
from .data_io import DataFormatError, Dataset, SyntheticSpec
from .eval_metrics import evaluate
from .factor_solvers import SolverConfig, SolverError, gmkcf_fit, kcf_fit, nmf_fit
from .kernel_bank import KernelError, build_bank, load_bank, save_bank

log = logging.getLogger("gmkcf")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_SOLVER = 3
EXIT_IO = 4

METRICS = ("acc", "nmi", "purity")
ALGOS = ("gmkcf", "kcf", "nmf")


class SolverFailure(RuntimeError):
    """Every restart of an experiment failed."""


def restart_seed(base_seed: int, restart: int) -> int:
    return base_seed + restart


def parse_synthetic(text: str) -> SyntheticSpec:
    fields = {}
    for part in text.split(","):
        if not part.strip():
            continue
        key, _, value = part.partition("=")
        key = key.strip().replace("-", "_")
        if key in ("clusters", "per_cluster", "dim", "seed"):
            fields[key] = int(value)
        elif key == "separation":
            fields[key] = float(value)
        elif key == "nonnegative":
            fields[key] = value.strip().lower() in ("1", "true", "yes")
        else:
            raise ValueError(f"unknown synthetic field {key!r}")
    return SyntheticSpec(**fields)


def load_dataset(args) -> Dataset:
    if getattr(args, "synthetic", None):
        return data_io.make_synthetic(parse_synthetic(args.synthetic))
    if not args.data:
        raise ValueError("one of --data or --synthetic is required")
    if args.sparse:
        ds = data_io.load_sparse(args.data)
    else:
        ds = data_io.load_dense(args.data)
    if args.labels:
        ds = ds.with_labels(data_io.load_labels(args.labels, ds.n))
    return ds


def kernel_diagnostics(bank, eig_limit=2000):
    rows = []
    for label, K in zip(bank.labels, bank.grams):
        row = {
            "kernel": label,
            "min": float(K.min()),
            "max": float(K.max()),
            "asymmetry": float(np.abs(K - K.T).max()),
            "min_eig": float(np.linalg.eigvalsh(K)[0]) if bank.n <= eig_limit else None,
        }
        rows.append(row)
    return rows


def cmd_kernels(args, out=None):
    out = out or sys.stdout
    ds = load_dataset(args)
    bank = build_bank(ds.X, args.recipe, name=ds.name, rescale=args.rescale)
    if args.out:
        save_bank(args.out, bank)
    print(f"{ds.name}: n={bank.n} m={bank.m}", file=out)
    print(f"{'kernel':<16}{'min':>12}{'max':>12}{'asym':>12}{'min_eig':>14}", file=out)
    for row in kernel_diagnostics(bank):
        eig = "n/a" if row["min_eig"] is None else f"{row['min_eig']:.3e}"
        print(
            f"{row['kernel']:<16}{row['min']:>12.4g}{row['max']:>12.4g}"
            f"{row['asymmetry']:>12.2e}{eig:>14}",
            file=out,
        )
    return bank


def _score(truth, V, kcfg):
    labels, inertia = kmeans_fit(V, kcfg)
    entry = {"inertia": inertia}
    if truth is None:
        entry.update({m: None for m in METRICS})
    else:
        entry.update(evaluate(truth, labels).as_dict())
    return entry


def _fit_entry(report, V, truth, kcfg):
    entry = {
        "iterations": report.iterations,
        "converged": report.converged,
        "final_objective": report.objective_trace[-1],
        "objective_trace": report.objective_trace,
    }
    entry.update(_score(truth, V, kcfg))
    return entry


def _run_restart(r, algo, ds, bank, truth, args, k):
    seed = restart_seed(args.seed, r)
    scfg = SolverConfig(k=k, max_iter=args.max_iter, rel_tol=args.tol, seed=seed)
    kcfg = KMeansConfig(
        k=k, restarts=args.kmeans_restarts, seed=seed, normalize_rows=args.normalize_rows
    )
    entry = {"restart": r, "seed": seed}
    try:
        if algo == "gmkcf":
            fac, rep = gmkcf_fit(bank, scfg)
            entry.update(_fit_entry(rep, fac.V, truth, kcfg))
            entry["w"] = [float(x) for x in rep.final_w]
        elif algo == "nmf":
            _, V, rep = nmf_fit(ds.X, scfg)
            entry.update(_fit_entry(rep, V, truth, kcfg))
        else:
            per_kernel = []
            for label, K in zip(bank.labels, bank.grams):
                fac, rep = kcf_fit(K, scfg)
                sub = {"kernel": label}
                sub.update(_fit_entry(rep, fac.V, truth, kcfg))
                per_kernel.append(sub)
            entry["per_kernel"] = per_kernel
            entry["iterations"] = float(np.mean([p["iterations"] for p in per_kernel]))
            for m in METRICS:
                vals = [p[m] for p in per_kernel]
                entry[m] = None if vals[0] is None else float(np.mean(vals))
    except SolverError as exc:
        log.warning("restart %d failed: %s", r, exc)
        entry = {"restart": r, "seed": seed, "error": str(exc), "iteration": exc.iteration}
    return entry


def _summarize(entries, algo):
    ok = [e for e in entries if "error" not in e]
    summary = {"completed": len(ok), "failed": len(entries) - len(ok)}
    for m in METRICS:
        vals = [e[m] for e in ok if e.get(m) is not None]
        summary[m] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))} if vals else None
    summary["mean_iterations"] = float(np.mean([e["iterations"] for e in ok])) if ok else None
    if algo == "kcf" and ok and ok[0].get("acc") is not None:
        labels = [p["kernel"] for p in ok[0]["per_kernel"]]
        summary["per_kernel_mean"] = {
            lab: {m: float(np.mean([e["per_kernel"][i][m] for e in ok])) for m in METRICS}
            for i, lab in enumerate(labels)
        }
    return summary


def run_experiment(args) -> dict:
    """Run ``args.restarts`` independent fits and build the report dict."""
    algo = args.algo
    if args.bank:
        if algo == "nmf":
            raise ValueError("nmf needs feature data, not a kernel bank")
        bank = load_bank(args.bank)
        truth = data_io.load_labels(args.labels, bank.n) if args.labels else None
        ds = Dataset(np.zeros((1, bank.n)), truth, Path(args.bank).name.split(".")[0])
    else:
        ds = load_dataset(args)
        truth = ds.truth
        bank = None if algo == "nmf" else build_bank(
            ds.X, args.recipe, name=ds.name, rescale=args.rescale
        )
    k = args.k or (int(truth.max()) + 1 if truth is not None else None)
    if not k:
        raise ValueError("--k is required when no ground-truth labels are given")

    def job(r):
        return _run_restart(r, algo, ds, bank, truth, args, k)

    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        entries = list(pool.map(job, range(args.restarts)))

    report = {
        "dataset": ds.name,
        "algo": algo,
        "n": int(ds.n),
        "k": int(k),
        "kernels": [] if bank is None else bank.labels,
        "config": {
            "recipe": args.recipe if bank is not None else None,
            "rescale": args.rescale,
            "restarts": args.restarts,
            "seed": args.seed,
            "max_iter": args.max_iter,
            "tol": args.tol,
            "kmeans_restarts": args.kmeans_restarts,
            "normalize_rows": args.normalize_rows,
            "init": "uniform(0,1)",
        },
        "restarts": entries,
        "summary": _summarize(entries, algo),
    }
    if report["summary"]["completed"] == 0:
        raise SolverFailure(f"all {args.restarts} restarts failed")
    return report


def cmd_fit(args, out=None):
    out = out or sys.stdout
    report = run_experiment(args)
    if args.out:
        data_io.write_report(args.out, report)
    s = report["summary"]
    parts = [f"{report['dataset']} {report['algo']}: {s['completed']}/{args.restarts} restarts"]
    for m in METRICS:
        if s[m] is not None:
            parts.append(f"{m}={s[m]['mean']:.4f}±{s[m]['std']:.4f}")
    print(" ".join(parts), file=out)
    return report


def build_table(reports):
    """Dataset x algorithm grid of mean metrics, one grid per metric."""
    datasets, algos, cells = [], [], {}
    for rep in reports:
        s = rep["summary"]
        missing = [m for m in METRICS if s.get(m) is None]
        if missing:
            raise ValueError(f"{rep['dataset']}/{rep['algo']}: report lacks {', '.join(missing)}")
        if rep["dataset"] not in datasets:
            datasets.append(rep["dataset"])
        if rep["algo"] not in algos:
            algos.append(rep["algo"])
        cells[rep["dataset"], rep["algo"]] = {m: s[m]["mean"] for m in METRICS}
    grids = {}
    for m in METRICS:
        rows = [[cells.get((d, a), {}).get(m) for a in algos] for d in datasets]
        means = []
        for j in range(len(algos)):
            col = [row[j] for row in rows if row[j] is not None]
            means.append(float(np.mean(col)) if col else None)
        grids[m] = {"rows": rows, "mean": means}
    return datasets, algos, grids


def render_table(datasets, algos, grids):
    fmt = lambda v: "-" if v is None else f"{v:.4f}"
    width = max([len("Mean")] + [len(d) for d in datasets]) + 2
    text, csv = [], ["metric,dataset," + ",".join(algos)]
    for m in METRICS:
        text.append(m.upper())
        text.append("dataset".ljust(width) + "".join(a.rjust(10) for a in algos))
        for d, row in zip(datasets, grids[m]["rows"]):
            text.append(d.ljust(width) + "".join(fmt(v).rjust(10) for v in row))
            csv.append(f"{m},{d}," + ",".join(fmt(v) for v in row))
        text.append("Mean".ljust(width) + "".join(fmt(v).rjust(10) for v in grids[m]["mean"]))
        csv.append(f"{m},Mean," + ",".join(fmt(v) for v in grids[m]["mean"]))
        text.append("")
    return "\n".join(text), "\n".join(csv) + "\n"


def cmd_table(args, out=None):
    out = out or sys.stdout
    reports = [data_io.read_report(p) for p in args.reports]
    text, csv = render_table(*build_table(reports))
    print(text, file=out)
    if args.out:
        Path(args.out).write_text(csv)
    return text, csv


def cmd_synth(args, out=None):
    out = out or sys.stdout
    spec = SyntheticSpec(
        clusters=args.clusters,
        per_cluster=args.per_cluster,
        dim=args.dim,
        separation=args.separation,
        seed=args.seed,
        nonnegative=args.nonnegative,
    )
    ds = data_io.make_synthetic(spec)
    prefix = Path(args.out)
    data_io.save_dense(prefix.with_suffix(".csv"), ds.X)
    data_io.save_labels(prefix.with_suffix(".labels"), ds.truth)
    print(f"wrote {prefix.with_suffix('.csv')} ({ds.n} samples, {ds.d} features)", file=out)
    return ds


def _data_flags(p):
    p.add_argument("--data", help="feature file, one sample per row")
    p.add_argument("--labels", help="label file, one token per line")
    p.add_argument("--sparse", action="store_true", help="--data is in 'd n nnz' coordinate format")
    p.add_argument("--synthetic", help="e.g. clusters=3,per_cluster=100,dim=10,separation=10,seed=0")
    p.add_argument("--recipe", default="paper12")
    p.add_argument("--rescale", choices=("shift", "minmax"), default="shift")


def build_parser():
    parser = argparse.ArgumentParser(prog="gmkcf", description=" ".join(__doc__.split("\n\n")[0].split()))
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    parser.subcommands = sub.choices

    p = sub.add_parser("kernels", help="build and cache a kernel bank")
    _data_flags(p)
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_kernels)

    p = sub.add_parser("fit", help="run a restart experiment and write a report")
    _data_flags(p)
    p.add_argument("--bank", help="cached kernel bank from 'gmkcf kernels'")
    p.add_argument("--algo", choices=ALGOS, default="gmkcf")
    p.add_argument("--k", type=int)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--kmeans-restarts", type=int, default=10)
    p.add_argument("--normalize-rows", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--config")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("table", help="summarize reports as ACC/NMI/Purity grids")
    p.add_argument("reports", nargs="*")
    p.add_argument("--out", help="also write the grid as CSV")
    p.add_argument("--config")
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("synth", help="write a synthetic Gaussian-blob dataset")
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--per-cluster", type=int, default=100)
    p.add_argument("--dim", type=int, default=10)
    p.add_argument("--separation", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nonnegative", action="store_true")
    p.add_argument("--out", required=False)
    p.add_argument("--config")
    p.set_defaults(func=cmd_synth)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` when one is given."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    text = Path(args.config).read_text()
    conf = yaml.safe_load(text) if args.config.endswith((".yml", ".yaml")) else json.loads(text)
    if not isinstance(conf, dict):
        raise ValueError(f"{args.config}: config must be a mapping")
    sub = parser.subcommands[args.command]
    known = {a.dest for a in sub._actions}
    conf = {key.replace("-", "_"): val for key, val in conf.items()}
    unknown = sorted(set(conf) - known)
    if unknown:
        raise ValueError(f"{args.config}: unknown keys {', '.join(unknown)}")
    sub.set_defaults(**conf)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    except (OSError, ValueError, yaml.YAMLError) as exc:
        print(f"gmkcf: config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "table" and not args.reports:
        print("gmkcf: table needs at least one report", file=sys.stderr)
        return EXIT_PARSE
    if args.command == "synth" and not args.out:
        print("gmkcf: synth needs --out", file=sys.stderr)
        return EXIT_PARSE
    try:
        args.func(args)
    except (SolverError, SolverFailure) as exc:
        print(f"gmkcf: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DataFormatError, KernelError, ValueError, KeyError) as exc:
        print(f"gmkcf: input error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"gmkcf: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
