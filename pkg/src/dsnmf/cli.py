"""Command-line entry point: ``python -m dsnmf <command> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import deep, evaluation, graphreg, io, shallow
from .errors import (CorruptArchiveError, InvalidInputError, NumericError, ParseError,
                     UnsupportedVersionError)
from .project import PROJECTION_CFG, project_nls, project_pinv

log = logging.getLogger("dsnmf")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

SHALLOW = ("nmf", "gnmf", "seminmf", "wsf", "wsf-ma")
DEEP = ("deep-seminmf", "deep-wsf")
BENCH_METHODS = ("nmf", "gnmf", "seminmf", "deep-seminmf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# argument helpers


def int_list(text):
    try:
        vals = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def float_list(text):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def str_list(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# defaults live here (not in argparse) so a config file can sit between them and the flags
TRAIN_DEFAULTS = dict(max_iters=1000, kappa=1e-6, eta=0.5, init="auto", step=1e-3, g="identity")
DEFAULTS = {
    "factorize": dict(TRAIN_DEFAULTS, method="deep-seminmf", scheme="binary", neighbors=5, format=None),
    "project": dict(method="nls", solver="nnls", format=None, max_iters=PROJECTION_CFG.max_iters, kappa=PROJECTION_CFG.kappa),
    "evaluate": dict(metrics=["ac", "nmi"], restarts=10, gamma=1.0, format=None),
    "synth": dict(n_per_cluster=100, sigma=1.0, n_ids=5, n_poses=4, samples_per_cell=20, dims=50,
                  noise=0.3, format="f64bin"),
    "igo": dict(format=None),
    "benchmark": dict(TRAIN_DEFAULTS, methods=["seminmf", "deep-seminmf"], seeds=[0], restarts=10,
                      format=None, n_ids=5, n_poses=4, samples_per_cell=20, dims=50, noise=0.3),
}


def _train_options(p):
    p.add_argument("--max-iters", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--init", choices=shallow.INITS)
    p.add_argument("--step", type=float, help="initial step for gradient fine-tuning")
    p.add_argument("--g", help="nonlinearity: identity, stanh or square")


def build_parser():
    parser = _Parser(prog="dsnmf", description="Deep Semi-NMF and weakly-supervised factorizations.")
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, help="RNG seed (falls back to $DMF_SEED, then 0)")
    common.add_argument("--config", type=Path, help="key=value file; explicit flags take precedence")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("factorize", parents=[common], help="train a model and write an archive")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--format", choices=("csv", "f64bin"))
    p.add_argument("--method", choices=SHALLOW + DEEP)
    p.add_argument("--layers", type=int_list, help="layer widths, e.g. 25,8 (one value for shallow methods)")
    p.add_argument("--lambdas", type=float_list, help="one weight per graph")
    p.add_argument("--graphs", type=str_list, help="graph files (triplet format)")
    p.add_argument("--labels", type=Path, help="label CSV used to build graphs")
    p.add_argument("--supervise", type=str_list, help="attribute per graph, taken from --labels; '-' for none")
    p.add_argument("--scheme", choices=("binary", "rbf", "dot"))
    p.add_argument("--sigma", type=float)
    p.add_argument("--neighbors", type=int, help="kNN graph size for gnmf without a graph file")
    p.add_argument("--out", required=True, type=Path)
    _train_options(p)

    p = sub.add_parser("project", parents=[common], help="project new samples into a trained model")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--format", choices=("csv", "f64bin"))
    p.add_argument("--method", choices=("pinv", "nls"))
    p.add_argument("--solver", choices=("nnls", "mu"), help="linear nls solver")
    p.add_argument("--layer", type=int)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--out", required=True, type=Path, help="output directory for layer<l> feature files")

    p = sub.add_parser("evaluate", parents=[common], help="cluster/classify features against labels")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", type=Path)
    src.add_argument("--features", type=Path)
    p.add_argument("--format", choices=("csv", "f64bin"))
    p.add_argument("--labels", required=True, type=Path)
    p.add_argument("--attributes", type=str_list)
    p.add_argument("--metrics", type=str_list, help="any of ac, nmi, svm")
    p.add_argument("--restarts", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--method-name", default=None)
    p.add_argument("--out", type=Path, help="metric CSV (stdout if omitted)")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("kind", choices=("xor", "multiattr"))
    p.add_argument("--n-per-cluster", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--n-ids", type=int)
    p.add_argument("--n-poses", type=int)
    p.add_argument("--samples-per-cell", type=int)
    p.add_argument("--dims", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--format", choices=("csv", "f64bin"))
    p.add_argument("--out", required=True, type=Path, help="directory for X.<fmt> and labels.csv")

    p = sub.add_parser("igo", parents=[common], help="PGM directory -> IGO feature matrix")
    p.add_argument("--images", required=True, type=Path)
    p.add_argument("--format", choices=("csv", "f64bin"))
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("benchmark", parents=[common], help="component sweep with clustering metrics")
    p.add_argument("--data", type=Path, help="data matrix (default: synthetic multiattr)")
    p.add_argument("--format", choices=("csv", "f64bin"))
    p.add_argument("--labels", type=Path)
    p.add_argument("--attributes", type=str_list)
    p.add_argument("--methods", type=str_list)
    comp = p.add_mutually_exclusive_group(required=True)
    comp.add_argument("--components", type=int_list)
    comp.add_argument("--sweep", type=int_list, help="lo,hi,count: exponentially spaced component counts")
    p.add_argument("--hidden", type=int, help="first-layer width for deep methods (default min(p, 2k))")
    p.add_argument("--seeds", type=int_list)
    p.add_argument("--restarts", type=int)
    p.add_argument("--n-ids", type=int)
    p.add_argument("--n-poses", type=int)
    p.add_argument("--samples-per-cell", type=int)
    p.add_argument("--dims", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--out", required=True, type=Path, help="metric CSV")
    p.add_argument("--table", type=Path, help="reconstruction-error table (default: <out>.recon.txt)")
    _train_options(p)
    return parser


def read_config(path):
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def resolve(parser, args):
    """Merge flags over config-file values over built-in defaults."""
    sub = _subparser(parser, args.command)
    actions = {a.dest: a for a in sub._actions}
    if args.config is not None:
        for key, value in read_config(args.config).items():
            if key in ("config", "help") or key not in actions:
                raise UsageError(f"unknown config key {key!r} for {args.command}")
            if getattr(args, key) is not None:
                continue
            action = actions[key]
            try:
                conv = action.type(value) if action.type else (_bool(value) if action.nargs == 0 else value)
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"config key {key}: {exc}") from None
            if action.choices is not None and conv not in action.choices:
                raise UsageError(f"config key {key}: {conv!r} not in {sorted(action.choices)}")
            setattr(args, key, conv)
    for key, value in DEFAULTS.get(args.command, {}).items():
        if getattr(args, key, None) is None:
            setattr(args, key, value)
    if args.seed is None:
        env = os.environ.get("DMF_SEED")
        try:
            args.seed = int(env) if env not in (None, "") else 0
        except ValueError:
            raise UsageError(f"DMF_SEED must be an integer, got {env!r}") from None
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return args


def _train_cfg(args, seed=None):
    return shallow.TrainConfig(max_iters=args.max_iters, kappa=args.kappa, eta=args.eta,
                               init=args.init, seed=args.seed if seed is None else seed, step=args.step)


# --------------------------------------------------------------------------
# factorize


def _graphs_for(args, n, X):
    graphs = []
    if args.graphs:
        graphs = [graphreg.load_graph(p) for p in args.graphs]
    elif args.supervise:
        if args.labels is None:
            raise UsageError("--supervise needs --labels")
        _, attrs = io.load_labels(args.labels)
        for name in args.supervise:
            if name == "-":
                graphs.append(None)
                continue
            if name not in attrs:
                raise InvalidInputError(f"attribute {name!r} not in {args.labels}")
            graphs.append(graphreg.build_weight_matrix(attrs[name], args.scheme, X, args.sigma))
    for g in graphs:
        if g is not None and g.n != n:
            raise InvalidInputError(f"graph has {g.n} nodes, data has {n} samples")
    return graphs


def _lambdas_for(args, count):
    lams = args.lambdas if args.lambdas is not None else [1.0] * count
    if len(lams) != count:
        raise UsageError(f"{count} graphs need {count} lambdas, got {len(lams)}")
    return lams


def fit(method, X, layers, cfg, graphs=(), lambdas=(), g="identity", neighbors=5):
    """Train ``method``; shallow results come back as a one-layer DeepModel."""
    graphs, lambdas = list(graphs), list(lambdas)
    if method in SHALLOW:
        if len(layers) != 1:
            raise UsageError(f"{method} takes a single --layers value")
        k = layers[0]
        if method == "nmf":
            f, rep = shallow.nmf_mul(X, k, cfg)
        elif method == "gnmf":
            graph = graphs[0] if graphs else graphreg.knn_graph(X, neighbors)
            f, rep = shallow.gnmf(X, k, graph, lambdas[0] if lambdas else 1.0, cfg)
        elif method == "seminmf":
            f, rep = shallow.semi_nmf(X, k, cfg)
        elif method == "wsf":
            if len(graphs) != 1 or graphs[0] is None:
                raise UsageError("wsf needs exactly one graph")
            f, rep = shallow.wsf(X, k, graphs[0], lambdas[0], cfg)
        else:
            f, rep = shallow.wsf_ma(X, k, graphs, lambdas, cfg)
        return deep.DeepModel([f.Z], [f.H]), rep
    if method == "deep-seminmf":
        return deep.deep_seminmf(X, layers, cfg, g)
    if len(graphs) != len(layers):
        raise UsageError(f"deep-wsf needs one graph (or '-') per layer: {len(layers)} layers, {len(graphs)} graphs")
    return deep.train_deep_wsf(X, layers, graphs, lambdas, cfg, g)


def cmd_factorize(args):
    X = io.load_matrix(args.data, args.format)
    if args.layers is None:
        raise UsageError("--layers is required")
    graphs = _graphs_for(args, X.shape[1], X)
    lambdas = _lambdas_for(args, len(graphs))
    cfg = _train_cfg(args)
    model, report = fit(args.method, X, args.layers, cfg, graphs, lambdas, args.g, args.neighbors)
    echo = dict(method=args.method, layers=list(args.layers), lambdas=list(lambdas), g=args.g,
                init=cfg.init, max_iters=cfg.max_iters, kappa=cfg.kappa, eta=cfg.eta,
                step=cfg.step, seed=cfg.seed, iterations=report.iterations, converged=report.converged)
    io.save_model(model, args.out, echo, report.objective_trace)
    print(f"{args.method}: {report.iterations} iterations, objective {report.objective_trace[-1]:.6g}, "
          f"converged={report.converged}")
    return EXIT_OK


# --------------------------------------------------------------------------
# project / evaluate


def cmd_project(args):
    model, _ = io.load_model(args.model)
    X = io.load_matrix(args.data, args.format)
    if args.method == "pinv":
        res = project_pinv(model, X, args.layer)
    else:
        cfg = PROJECTION_CFG.replace(max_iters=args.max_iters, kappa=args.kappa)
        res = project_nls(model, X, cfg, args.layer, args.solver)
    ext = "csv" if args.format == "csv" else "f64bin"
    for l, h in enumerate(res.features, start=1):
        io.save_matrix(h, Path(args.out) / f"layer{l}.{ext}", ext)
    print(f"{res.method}: layer {res.layer} residual {res.residual:.6g}")
    if any(res.clipped):
        print("warning: inverse nonlinearity clipped at layers "
              + ",".join(str(i + 1) for i, c in enumerate(res.clipped) if c), file=sys.stderr)
    return EXIT_OK


def attribute_metrics(H, attr, metrics, seed, restarts=10, gamma=1.0):
    """``[(metric, value)]`` for one feature matrix and one attribute.

    Clustering uses only labeled samples with ``k`` = number of classes;
    ``svm`` is the training accuracy of the linear classifier.
    """
    mask = attr.labels >= 0
    Hl, y = H[:, mask], attr.labels[mask]
    out = []
    k = int(np.unique(y).size)
    pred = None
    for metric in metrics:
        if metric in ("ac", "nmi"):
            if pred is None:
                pred = evaluation.kmeans(Hl, k, seed, restarts)
            fn = evaluation.clustering_accuracy if metric == "ac" else evaluation.nmi
            out.append((metric, fn(pred, y)))
        elif metric == "svm":
            clf = evaluation.linear_classifier(Hl, y, gamma, seed)
            out.append((metric, evaluation.classification_accuracy(clf, Hl, y)))
        else:
            raise UsageError(f"unknown metric {metric!r}; use ac, nmi or svm")
    return out


def cmd_evaluate(args):
    if args.model is not None:
        model, manifest = io.load_model(args.model)
        layers = list(model.H)
        name = args.method_name or manifest.get("config", {}).get("method", "model")
    else:
        layers = [io.load_matrix(args.features, args.format)]
        name = args.method_name or "features"
    _, attrs = io.load_labels(args.labels)
    wanted = args.attributes or list(attrs)
    rows = []
    for a in wanted:
        if a not in attrs:
            raise InvalidInputError(f"attribute {a!r} not in {args.labels}")
        for l, H in enumerate(layers, start=1):
            if H.shape[1] != attrs[a].labels.size:
                raise InvalidInputError(f"features have {H.shape[1]} samples, labels have {attrs[a].labels.size}")
            for metric, value in attribute_metrics(H, attrs[a], args.metrics, args.seed, args.restarts, args.gamma):
                rows.append(dict(method=name, layer=l, attribute=a, metric=metric, value=value, seed=args.seed))
    if args.out is None:
        sys.stdout.write(io.format_metric_rows(rows))
    else:
        io.write_metrics(args.out, rows)
    return EXIT_OK


# --------------------------------------------------------------------------
# synth / igo


def cmd_synth(args):
    if args.kind == "xor":
        ds = evaluation.gen_xor(args.n_per_cluster, args.sigma, args.seed)
    else:
        ds = evaluation.gen_multiattr(args.n_ids, args.n_poses, args.samples_per_cell,
                                      args.dims, args.noise, args.seed)
    out = Path(args.out)
    io.save_matrix(ds.X, out / f"X.{args.format}", args.format)
    io.save_labels(out / "labels.csv", ds.attributes)
    print(f"{args.kind}: X {ds.X.shape[0]}x{ds.X.shape[1]} -> {out}")
    return EXIT_OK


def cmd_igo(args):
    names, images = io.load_image_dir(args.images)
    F = io.extract_igo(images)
    io.save_matrix(F, args.out, args.format)
    print(f"{len(names)} images -> {F.shape[0]}x{F.shape[1]} IGO features")
    return EXIT_OK


# --------------------------------------------------------------------------
# benchmark


def method_label(method, k):
    return f"{method}:k={k}"


def _bench_cell(job):
    """One (method, k, seed) run; top-level so worker processes can pickle it."""
    method, k, seed, X, attrs, hidden, opts = job
    cfg = shallow.TrainConfig(max_iters=opts["max_iters"], kappa=opts["kappa"], eta=opts["eta"],
                              init=opts["init"], seed=seed, step=opts["step"])
    layers = [k]
    if method.startswith("deep"):
        h = hidden if hidden is not None else min(X.shape[0], 2 * k)
        layers = [max(h, k), k]
    scale = np.linalg.norm(X)
    if method in ("nmf", "gnmf") and X.min() < 0:
        # NMF baselines need X >= 0; shift mixed-sign data by its minimum.
        # The error is still relative to the unshifted X (the shift is an exact offset).
        log.info("%s: shifting data by %g to make it nonnegative", method, -X.min())
        X = X - X.min()
    model, _ = fit(method, X, layers, cfg, g=opts["g"])
    recon = float(np.linalg.norm(X - deep.reconstruct(model)) / scale)
    rows = []
    for a in attrs:
        for metric, value in attribute_metrics(model.H[-1], a, ("ac", "nmi"), seed, opts["restarts"]):
            rows.append(dict(method=method_label(method, k), layer=model.m, attribute=a.name,
                             metric=metric, value=value, seed=seed))
    return rows, recon


def recon_table(methods, components, errors):
    """Plain-text table of mean relative reconstruction error (rows: method, columns: k)."""
    head = ["method"] + [f"k={k}" for k in components]
    lines = [head]
    for m in methods:
        lines.append([m] + [f"{np.mean(errors[m, k]):.4f}" for k in components])
    widths = [max(len(r[j]) for r in lines) for j in range(len(head))]
    return "".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in lines)


def cmd_benchmark(args):
    for m in args.methods:
        if m not in BENCH_METHODS:
            raise UsageError(f"unknown benchmark method {m!r}; choose from {', '.join(BENCH_METHODS)}")
    if args.data is not None:
        if args.labels is None:
            raise UsageError("--data needs --labels")
        X = io.load_matrix(args.data, args.format)
        _, attr_map = io.load_labels(args.labels)
    else:
        ds = evaluation.gen_multiattr(args.n_ids, args.n_poses, args.samples_per_cell,
                                      args.dims, args.noise, args.seed)
        X, attr_map = ds.X, {a.name: a for a in ds.attributes}
    names = args.attributes or list(attr_map)
    for nm in names:
        if nm not in attr_map:
            raise InvalidInputError(f"unknown attribute {nm!r}")
    attrs = [attr_map[nm] for nm in names]
    if args.components is not None:
        components = args.components
    else:
        if len(args.sweep) != 3:
            raise UsageError("--sweep takes lo,hi,count")
        components = io.exponential_grid(*args.sweep)
    opts = dict(max_iters=args.max_iters, kappa=args.kappa, eta=args.eta, init=args.init,
                step=args.step, g=args.g, restarts=args.restarts)
    jobs = [(m, k, s, X, attrs, args.hidden, opts) for m in args.methods for k in components for s in args.seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_bench_cell, jobs))
    else:
        results = [_bench_cell(j) for j in jobs]

    rows, errors = [], {}
    for (m, k, _, *_rest), (cell_rows, recon) in zip(jobs, results):
        rows += cell_rows
        errors.setdefault((m, k), []).append(recon)
    io.write_metrics(args.out, rows)
    table = recon_table(args.methods, components, errors)
    table_path = args.table or Path(str(args.out) + ".recon.txt")
    io.atomic_write_text(table_path, table)

    sys.stdout.write("relative reconstruction error\n" + table)
    sys.stdout.write(f"mean accuracy over k in {components}\n")
    for m in args.methods:
        for a in names:
            vals = [r["value"] for r in rows
                    if r["method"].startswith(m + ":") and r["attribute"] == a and r["metric"] == "ac"]
            sys.stdout.write(f"  {m:14s} {a:10s} {np.mean(vals):.4f}\n")
    return EXIT_OK


COMMANDS = {
    "factorize": cmd_factorize,
    "project": cmd_project,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
    "igo": cmd_igo,
    "benchmark": cmd_benchmark,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        args = resolve(parser, args)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInputError, ParseError, CorruptArchiveError, UnsupportedVersionError,
            ValueError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
