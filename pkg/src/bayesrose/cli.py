"""Command-line interface.

Exit status: 0 on success, 2 on usage errors, 3 on bad input data and
4 on numerical failures.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import kernels
from .builder import build
from .core import count_partitions, enumerate_partitions, sample_dataset, score_tree
from .datasets import interlaced_curves, toy_dataset
from .documents import (
    DataError, Dataset, dump_document, dumps_document, export_newick, format_float, ingest,
    load_document, tree_document, tree_from_document, write_csv, write_dataset,
)
from .gp_experts import GPExperts, GpPredictor, KernelParams
from .hyperopt import em_alternation
from .likelihood import BetaBernoulli, Hyperparams
from .oracle import MAX_LEAVES, optimality_experiment, random_rose_tree

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


def _positive_float(s):
    v = float(s)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {s}")
    return v


def _unit_float(s):
    v = float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"expected a number in (0, 1), got {s}")
    return v


def _common(p, data=True):
    p.add_argument("--gamma", type=_unit_float, default=0.5, help="mixing hyperparameter")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-json", help="write the tree document here")
    p.add_argument("--out-newick", help="write the tree as Newick here")
    p.add_argument("--out-csv", help="write the CSV report here")
    if data:
        p.add_argument("input", nargs="?", help="delimited numeric data file")
        p.add_argument("--delimiter", default=",")
        hdr = p.add_mutually_exclusive_group()
        hdr.add_argument("--header", dest="header", action="store_true", default=None)
        hdr.add_argument("--no-header", dest="header", action="store_false")
        p.add_argument("--row-labels", action="store_true",
                       help="first column holds row names")


def _binary_flags(p):
    p.add_argument("--alpha", type=_positive_float, default=1.0)
    p.add_argument("--beta", type=_positive_float, default=1.0)
    p.add_argument("--mode", choices=["rose", "binary"], default="rose")
    p.add_argument("--binarize", default="none",
                   help="none, nonzero, presence or threshold:K")
    p.add_argument("--toy", action="store_true",
                   help="use the built-in 48 x 12 toy dataset instead of a file")


def _load_binary(args):
    if args.toy:
        data, _ = toy_dataset(args.seed)
        return Dataset(data, provenance={"source": "toy", "seed": args.seed, "binarize": "none"})
    if not args.input:
        raise DataError("an input file (or --toy) is required")
    ds = ingest(args.input, args.delimiter, args.header, args.row_labels, args.binarize)
    if not np.all((ds.rows == 0) | (ds.rows == 1)):
        raise DataError("data must be binary; choose a --binarize rule")
    return ds


def _write_outputs(args, doc, labels=None):
    if args.out_json:
        dump_document(doc, args.out_json)
    if args.out_newick:
        with open(args.out_newick, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(export_newick(doc, labels) + "\n")


def _report(**items):
    for k, v in items.items():
        print(f"{k}\t{format_float(v) if isinstance(v, float) else v}")


def cmd_cluster(args):
    ds = _load_binary(args)
    model = BetaBernoulli(ds.rows, args.alpha, args.beta)
    tree = build(model, args.gamma, args.mode)
    hyper = {"alpha": model.alpha.tolist(), "beta": model.beta.tolist()}
    doc = tree_document(tree, args.gamma, hyper, ds, mode=args.mode)
    _write_outputs(args, doc, ds.row_labels)
    _report(mode=args.mode, n_points=model.n_points, log_p=tree.log_p,
            n_partitions=count_partitions(tree), root_children=tree.n_children,
            backend=kernels.BACKEND)
    return 0


def cmd_optimize(args):
    ds = _load_binary(args)
    model = BetaBernoulli(ds.rows, args.alpha, args.beta)
    res = em_alternation(model, args.gamma, args.rounds, args.mode, steps=args.steps)
    hyper = {"alpha": res.model.alpha.tolist(), "beta": res.model.beta.tolist()}
    doc = tree_document(res.tree, res.gamma, hyper, ds, mode=args.mode,
                        extra={"rounds": res.history})
    _write_outputs(args, doc, ds.row_labels)
    header = ["round", "built_log_p", "log_p", "gamma", "best_log_p"]
    write_csv(res.history, header, args.out_csv or sys.stdout)
    _report(log_p=res.log_p, gamma=res.gamma, rounds=len(res.history),
            n_partitions=count_partitions(res.tree))
    return 0


def cmd_oracle(args, parser):
    if not 1 <= args.n_min <= args.n_max <= MAX_LEAVES:
        parser.error(f"need 1 <= --n-min <= --n-max <= {MAX_LEAVES}")
    rows = optimality_experiment(range(args.n_min, args.n_max + 1), args.trials, args.dims,
                                 args.gamma, args.seed)
    header = ["n", "trials", "delta_brt", "se_brt", "delta_bhc", "se_bhc", "hit_brt", "hit_bhc"]
    write_csv(rows, header, args.out_csv or sys.stdout)
    return 0


def _load_regression(args):
    if args.interlaced:
        x, y, _ = interlaced_curves(args.n_points, seed=args.seed)
        return x, y
    if not args.input:
        raise DataError("an input file (or --interlaced) is required")
    ds = ingest(args.input, args.delimiter, args.header, args.row_labels)
    if ds.shape[1] < 2:
        raise DataError("regression data needs input column(s) followed by an output column")
    rows = ds.rows.astype(float)
    return rows[:, :-1], rows[:, -1]


def cmd_gp_regress(args):
    x, y = _load_regression(args)
    kernel = KernelParams(args.length_scale, args.signal_variance, args.noise_variance)
    model = GPExperts(x, y, kernel, max_points=args.max_points)
    gamma = args.gamma
    if args.rounds > 0:
        res = em_alternation(model, gamma, args.rounds, steps=args.kernel_steps)
        tree, model, gamma = res.tree, res.model, res.gamma
    else:
        tree = build(model, gamma)
    k = model.kernel
    hyper = {"length_scale": k.length_scale, "signal_variance": k.signal_variance,
             "noise_variance": k.noise_variance,
             "input_prior": {"mean_location": model.prior.mean_location.tolist(),
                             "scale_count": model.prior.scale_count, "dof": model.prior.dof,
                             "scale_matrix": model.prior.scale_matrix.tolist()}}
    ds = Dataset(np.column_stack([x, y]), provenance={"binarize": "none"})
    doc = tree_document(tree, gamma, hyper, ds, model_name="gp-experts")
    _write_outputs(args, doc)
    single = model.log_f(model.stats_of(range(model.n_points)))
    _report(n_points=model.n_points, log_p=tree.log_p, single_cluster_log_f=single,
            gamma=gamma, n_partitions=count_partitions(tree))
    if x.shape[1] != 1:
        if args.out_csv or args.out_curves:
            raise DataError("density grids are only emitted for one-dimensional inputs")
        return 0
    pred = GpPredictor(tree, model, gamma)
    xs = np.linspace(x.min(), x.max(), args.grid_x)
    pad = 0.25 * (y.max() - y.min() + 1e-12)
    ys = np.linspace(y.min() - pad, y.max() + pad, args.grid_y)
    if args.out_csv:
        rows = []
        for xv in xs:
            dens = pred.density([xv], ys)
            rows.extend({"x": float(xv), "y": float(yv), "density": float(d)}
                        for yv, d in zip(ys, dens))
        write_csv(rows, ["x", "y", "density"], args.out_csv)
    if args.out_curves:
        rows = []
        for t in tree.postorder():
            if t.is_leaf or t.n_leaves < args.min_curve_size:
                continue
            mean = pred.mean_curve(t, xs)
            rows.extend({"node": t.node_id, "n_leaves": t.n_leaves, "x": float(xv),
                         "mean": float(mv)} for xv, mv in zip(xs, mean))
        write_csv(rows, ["node", "n_leaves", "x", "mean"], args.out_curves)
    return 0


def cmd_partitions(args):
    doc = load_document(args.tree)
    tree = tree_from_document(doc)
    _report(n_partitions=count_partitions(tree))
    if args.list:
        labels = {n["leaf"]: n.get("label", str(n["leaf"])) for n in doc["nodes"] if "leaf" in n}
        for phi in enumerate_partitions(tree, limit=args.limit):
            print("|".join(",".join(labels[i] for i in b) for b in phi.sorted_blocks()))
    return 0


def cmd_sample(args):
    if args.toy:
        data, _ = toy_dataset(args.seed)
        shape = None
    else:
        if args.n < 1:
            raise DataError("--n must be at least 1")
        rng = np.random.default_rng(args.seed)
        shape = random_rose_tree(range(args.n), rng)
        hyper = Hyperparams(args.gamma, np.full(args.dims, args.alpha),
                            np.full(args.dims, args.beta))
        data = sample_dataset(shape, hyper, seed=rng)
    write_dataset(Dataset(data), args.out_csv or sys.stdout)
    if args.out_json and shape is not None:
        model = BetaBernoulli(data, args.alpha, args.beta)
        scored = score_tree(shape, model, args.gamma)
        hyper = {"alpha": model.alpha.tolist(), "beta": model.beta.tolist()}
        dump_document(tree_document(scored, args.gamma, hyper, Dataset(data),
                                    mode="generating"), args.out_json)
    return 0


def make_parser():
    parser = argparse.ArgumentParser(prog="bayesrose",
                                     description="Bayesian rose tree hierarchical clustering")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="greedily build a rose tree for binary data")
    _common(p)
    _binary_flags(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("optimize", help="alternate tree building and hyperparameter fitting")
    _common(p)
    _binary_flags(p)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--steps", type=int, default=200, help="gradient steps per round")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("oracle", help="greedy vs exhaustive optimum on sampled data")
    _common(p, data=False)
    p.add_argument("--n-min", type=int, default=2)
    p.add_argument("--n-max", type=int, default=MAX_LEAVES)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--dims", type=int, default=64)
    p.set_defaults(func=lambda a, p=p: cmd_oracle(a, p))

    p = sub.add_parser("gp-regress", help="rose tree mixture of GP experts")
    _common(p)
    p.add_argument("--interlaced", action="store_true",
                   help="use generated two-curve data instead of a file")
    p.add_argument("--n-points", type=int, default=200)
    p.add_argument("--length-scale", type=_positive_float, default=1.0)
    p.add_argument("--signal-variance", type=_positive_float, default=1.0)
    p.add_argument("--noise-variance", type=_positive_float, default=0.01)
    p.add_argument("--rounds", type=int, default=0,
                   help="tree/kernel alternation rounds (0: build only)")
    p.add_argument("--kernel-steps", type=int, default=20)
    p.add_argument("--max-points", type=int, default=300)
    p.add_argument("--grid-x", type=int, default=100)
    p.add_argument("--grid-y", type=int, default=200)
    p.add_argument("--out-curves", help="per-node posterior mean curves CSV")
    p.add_argument("--min-curve-size", type=int, default=5)
    p.set_defaults(func=cmd_gp_regress)

    p = sub.add_parser("partitions", help="count or list a tree's consistent partitions")
    p.add_argument("tree", help="tree document (JSON)")
    p.add_argument("--list", action="store_true")
    p.add_argument("--limit", type=int, default=10000)
    p.set_defaults(func=cmd_partitions)

    p = sub.add_parser("sample", help="sample binary data from a random rose tree")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--dims", type=int, default=64)
    p.add_argument("--gamma", type=_unit_float, default=0.5)
    p.add_argument("--alpha", type=_positive_float, default=1.0)
    p.add_argument("--beta", type=_positive_float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--toy", action="store_true", help="emit the 48 x 12 toy dataset")
    p.add_argument("--out-csv")
    p.add_argument("--out-json", help="write the generating tree here")
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"bayesrose: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ValueError, OSError) as exc:
        print(f"bayesrose: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
