"""Batch command-line driver.

Subcommands: simulate, fit, summarize, predict, dic.  Every command is
deterministic given its flags and seed; wall-clock time appears only in
manifest.json.  Exit codes: 0 success, 1 runtime failure, 2 usage or
input error.
"""

import argparse
import csv
import json
import os
import sys
import time
from importlib.metadata import PackageNotFoundError, version as pkg_version

import numpy as np

from . import simgen
from .gibbs import (
    GWishartBackend,
    PseudoBackend,
    Schedule,
    run_chain,
    run_pooled_chain,
)
from .model import Dataset, NotPositiveDefiniteError, default_hyperparameters, hyper_to_config
from .seeding import substream
from .summary import (
    cluster_point_graphs,
    dahl_partition,
    dic_cov_only,
    dic_full,
    dic_graph_only,
    partition_average,
    predict_graph,
)
from .traceio import TraceFormatError, load_trace, save_trace

GWISHART_Q_LIMIT = 15

CONFIG_KEYS = {
    "alpha", "alpha_g", "K", "b", "D", "eta1", "eta0", "a1", "a2",
    "mu0", "sigma0sq", "b1", "b2",
    "mc_edge", "mc_marginal", "allocation_likelihood",
}


class CliInputError(Exception):
    """Bad user input: malformed file, dimension mismatch, missing path."""


def _version_string():
    try:
        return f"pxg-{pkg_version('pxg')}"
    except PackageNotFoundError:
        return "pxg-0.0.0+unknown"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_matrix_csv(path):
    """Numeric CSV with an optional single header line."""
    if not os.path.exists(path):
        raise CliInputError(f"input file not found: {path}")
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(c.strip() == "" for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError:
                if lineno == 1:
                    continue  # header line
                raise CliInputError(f"{path}: non-numeric value on line {lineno}")
            rows.append(vals)
    if not rows:
        return np.zeros((0, 0))
    ncol = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != ncol:
            raise CliInputError(
                f"{path}: row {i + 1} has {len(r)} fields, expected {ncol}"
            )
    return np.asarray(rows, dtype=float)


def _load_config(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise CliInputError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CliInputError(f"{path}: invalid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise CliInputError(f"{path}: config must be a JSON object")
    unknown = sorted(set(cfg) - CONFIG_KEYS)
    if unknown:
        raise CliInputError(f"{path}: unknown config keys: {', '.join(unknown)}")
    return cfg


def _ensure_outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def cmd_simulate(args):
    out = _ensure_outdir(args.out)
    kwargs = {}
    if args.example == 3:
        kwargs = {"q": args.q, "p": args.p, "sparsity": args.sparsity, "df": args.df}
    dataset, truth = simgen.generate(args.example, n_per=args.n_per,
                                     seed=args.seed, **kwargs)
    q, p = dataset.q, dataset.p
    _write_csv(os.path.join(out, "Y.csv"),
               [f"y{j + 1}" for j in range(q)], dataset.Y)
    _write_csv(os.path.join(out, "X.csv"),
               [f"x{j + 1}" for j in range(p)], dataset.X)
    per_obs = []
    for i in range(dataset.n):
        g = truth.graphs[i]
        edges = [[s + 1, t + 1] for s in range(q) for t in range(s + 1, q) if g[s, t]]
        per_obs.append({
            "obs": i + 1,
            "label": int(truth.labels[i]) + 1,
            "edges": edges,
            "omega": truth.omegas[i].tolist(),
        })
    _write_json(os.path.join(out, "truth.json"), {
        "example": args.example,
        "seed": args.seed,
        "n_per": args.n_per,
        "labels": (truth.labels + 1).tolist(),
        "observations": per_obs,
    })
    return 0


def _resolve_threads(flag_value):
    if flag_value is not None:
        return max(1, flag_value)
    env = os.environ.get("PXG_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise CliInputError(f"PXG_THREADS is not an integer: {env!r}")
    return 1


def cmd_fit(args):
    Y = _read_matrix_csv(args.y)
    X = _read_matrix_csv(args.x)
    if Y.shape[0] == 0:
        raise CliInputError(f"{args.y}: no data rows")
    if X.shape[0] == 0:
        raise CliInputError(f"{args.x}: no data rows")
    if Y.shape[0] != X.shape[0]:
        raise CliInputError(
            f"row count mismatch: {args.y} has {Y.shape[0]}, {args.x} has {X.shape[0]}"
        )
    if args.center:
        Y = Y - Y.mean(axis=0)
    dataset = Dataset(Y=Y, X=X)

    if args.backend == "gwishart" and dataset.q > GWISHART_Q_LIMIT and not args.force:
        raise CliInputError(
            f"gwishart backend with q = {dataset.q} > {GWISHART_Q_LIMIT} is very "
            f"slow (normalizing-constant estimation per edge flip); use the "
            f"pseudo backend, or pass --force to proceed anyway"
        )

    cfg = _load_config(args.config)
    hyper_kwargs = {}
    for key in ("alpha", "alpha_g", "K", "b", "eta1", "eta0", "a1", "a2",
                "sigma0sq", "b1", "b2"):
        if key in cfg:
            hyper_kwargs[key] = cfg[key]
    if cfg.get("D") is not None:
        hyper_kwargs["D"] = np.asarray(cfg["D"], dtype=float)
    if cfg.get("mu0") is not None:
        hyper_kwargs["mu0"] = np.asarray(cfg["mu0"], dtype=float)
    try:
        hyper = default_hyperparameters(dataset, **hyper_kwargs)
    except ValueError as exc:
        raise CliInputError(f"invalid configuration: {exc}")

    if args.backend == "gwishart":
        backend = GWishartBackend(
            mc_edge=cfg.get("mc_edge", 100),
            mc_marginal=cfg.get("mc_marginal", 200),
        )
    else:
        backend = PseudoBackend(
            allocation_likelihood=cfg.get("allocation_likelihood", "pseudo"),
        )

    try:
        schedule = Schedule(iterations=args.iters, burn_in=args.burn, thin=args.thin)
    except ValueError as exc:
        raise CliInputError(str(exc))
    threads = _resolve_threads(args.threads)

    out = _ensure_outdir(args.out)
    start = time.perf_counter()
    if args.pooled:
        trace = run_pooled_chain(dataset, hyper, backend, schedule, args.seed)
    else:
        trace = run_chain(dataset, hyper, backend, schedule, args.seed,
                          threads=threads)
    elapsed = time.perf_counter() - start

    save_trace(os.path.join(out, "trace.bin"), trace)
    sched = trace.meta["schedule"]
    retained_iters = [
        it for it in range(1, sched["iterations"] + 1)
        if schedule.is_retained(it)
    ]
    _write_csv(
        os.path.join(out, "loglik.csv"),
        ["iteration", "loglik_y", "loglik_x"],
        [(it, ly, lx) for it, ly, lx in
         zip(retained_iters, trace.loglik_y, trace.loglik_x)],
    )
    n_clusters = [int(np.unique(trace.z[r]).size) for r in range(trace.n_draws)]
    manifest = {
        "command": "fit",
        "version": _version_string(),
        "backend": args.backend,
        "pooled": bool(args.pooled),
        "center": bool(args.center),
        "seed": args.seed,
        "threads": threads,
        "schedule": sched,
        "n": dataset.n,
        "q": dataset.q,
        "p": dataset.p,
        "config": trace.meta["config"],
        "options": trace.meta["options"],
        "wall_time_seconds": elapsed,
        "summary_stats": {
            "n_retained": trace.n_draws,
            "mean_loglik_y": float(np.mean(trace.loglik_y)),
            "mean_loglik_x": float(np.mean(trace.loglik_x)),
            "mean_n_clusters": float(np.mean(n_clusters)),
        },
        "outputs": ["trace.bin", "loglik.csv"],
    }
    _write_json(os.path.join(out, "manifest.json"), manifest)
    return 0


def cmd_summarize(args):
    trace = load_trace(args.trace)
    out = _ensure_outdir(args.out)
    labels, _ = dahl_partition(trace)
    field = partition_average(trace, cutoff=args.cutoff)
    n, q = field.n, field.q

    _write_csv(os.path.join(out, "allocation.csv"),
               ["obs", "cluster"],
               [(i + 1, int(labels[i]) + 1) for i in range(n)])

    edge_rows = []
    prec_rows = []
    for i in range(n):
        for s in range(q):
            for t in range(q):
                if s != t:
                    edge_rows.append((i + 1, s + 1, t + 1, field.probs[i, s, t]))
                prec_rows.append((i + 1, s + 1, t + 1,
                                  field.omega_hat[i, s, t],
                                  field.partial_corr[i, s, t]))
    _write_csv(os.path.join(out, "edge_prob.csv"),
               ["obs", "s", "t", "prob"], edge_rows)
    _write_csv(os.path.join(out, "precision.csv"),
               ["obs", "s", "t", "omega_hat", "partial_corr"], prec_rows)

    graphs, members = cluster_point_graphs(field, labels, cutoff=args.cutoff)
    clusters = []
    for c in range(len(members)):
        rows = members[c]
        mean_p = field.probs[rows].mean(axis=0)
        pairs = [(s, t) for s in range(q) for t in range(s + 1, q)]
        ranked = sorted(pairs, key=lambda st: (-mean_p[st[0], st[1]], st))
        clusters.append({
            "cluster": c + 1,
            "members": (rows + 1).tolist(),
            "edges": [[s + 1, t + 1] for s, t in pairs if graphs[c, s, t]],
            "edge_probabilities": [
                [s + 1, t + 1, float(mean_p[s, t])] for s, t in ranked
            ],
        })
    _write_json(os.path.join(out, "graphs.json"),
                {"cutoff": args.cutoff, "clusters": clusters})
    return 0


def cmd_predict(args):
    trace = load_trace(args.trace)
    x_new = _read_matrix_csv(args.xnew)
    out = _ensure_outdir(args.out)
    header = ["row", "s", "t", "prob", "omega_hat", "partial_corr"]
    if x_new.shape[0] == 0:
        _write_csv(os.path.join(out, "predictions.csv"), header, [])
        return 0
    if x_new.shape[1] != trace.p:
        raise CliInputError(
            f"{args.xnew} has {x_new.shape[1]} columns, trace covariates have {trace.p}"
        )
    mode = "rao_blackwell" if args.mode == "rb" else "sampled"
    rng = substream(args.seed, "predict") if mode == "sampled" else None
    field = predict_graph(trace, x_new, mode=mode, cutoff=args.cutoff, rng=rng)
    rows = []
    for i in range(field.n):
        for s in range(field.q):
            for t in range(field.q):
                rows.append((i + 1, s + 1, t + 1, field.probs[i, s, t],
                             field.omega_hat[i, s, t], field.partial_corr[i, s, t]))
    _write_csv(os.path.join(out, "predictions.csv"), header, rows)
    return 0


def cmd_dic(args):
    trace = load_trace(args.trace)
    out = _ensure_outdir(args.out)
    result = {
        "cutoff": args.cutoff,
        "full": dic_full(trace, cutoff=args.cutoff),
        "graph_only": dic_graph_only(trace, cutoff=args.cutoff),
    }
    if args.pooled_trace is not None:
        pooled = load_trace(args.pooled_trace)
        result["cov_only"] = dic_cov_only(trace, pooled, cutoff=args.cutoff)
    else:
        result["cov_only"] = None
        result["cov_only_note"] = (
            "covariate-only DIC needs a pooled companion fit: rerun the fit "
            "with --pooled on the same data and pass --pooled-trace"
        )
    _write_json(os.path.join(out, "dic.json"), result)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pxg",
        description="Covariate-dependent Gaussian graphical model inference.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a benchmark dataset")
    p.add_argument("--example", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--n-per", type=int, default=100,
                   help="observations per region/cluster")
    p.add_argument("--q", type=int, default=20, help="nodes (example 3)")
    p.add_argument("--p", type=int, default=10, help="covariates (example 3)")
    p.add_argument("--sparsity", type=float, default=0.02,
                   help="edge density (example 3)")
    p.add_argument("--df", type=float, default=3.0,
                   help="G-Wishart degrees of freedom (example 3)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the blocked Gibbs sampler")
    p.add_argument("--y", required=True, help="response CSV (n rows, q columns)")
    p.add_argument("--x", required=True, help="covariate CSV (n rows, p columns)")
    p.add_argument("--backend", choices=("gwishart", "pseudo"), required=True)
    p.add_argument("--config", default=None, help="JSON hyperparameter overrides")
    p.add_argument("--iters", type=int, required=True, help="total iterations")
    p.add_argument("--burn", type=int, default=0)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--center", action="store_true",
                   help="subtract column means from Y")
    p.add_argument("--threads", type=int, default=None,
                   help="worker pool size (default: PXG_THREADS or 1)")
    p.add_argument("--force", action="store_true",
                   help="allow the gwishart backend beyond its size gate")
    p.add_argument("--pooled", action="store_true",
                   help="single-cluster companion fit for covariate-only DIC")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("summarize", help="posterior summaries from a trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--cutoff", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("predict", help="graph prediction at new covariates")
    p.add_argument("--trace", required=True)
    p.add_argument("--xnew", required=True, help="new covariate CSV")
    p.add_argument("--mode", choices=("rb", "sampled"), default="rb")
    p.add_argument("--cutoff", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0,
                   help="rng seed for sampled mode")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("dic", help="model-comparison DIC values")
    p.add_argument("--trace", required=True)
    p.add_argument("--pooled-trace", default=None,
                   help="companion single-graph trace (fit --pooled)")
    p.add_argument("--cutoff", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dic)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliInputError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except NotPositiveDefiniteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
