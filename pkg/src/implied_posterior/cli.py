"""Command line interface.

Exit codes: 0 success, 2 usage error, 3 data error, 4 solver non-convergence.
Any flag can also come from ``--config FILE`` (``key=value`` lines, keys
spelled like the long flag without dashes or with underscores); explicit
flags take precedence.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import calibrate as cal
from .data import (
    DataError,
    Dataset,
    GaussianSpec,
    ScalingParams,
    apply_scaling,
    fit_scaling,
    generate_gaussian_2d,
    load_csv,
    load_german_credit,
    save_csv,
    split_consecutive,
    tutorial_spec,
)
from .implied import (
    build_hyperplane_grid,
    classification_matrix,
    estimate_from_sides,
    load_grid,
    report_from_sides,
    save_grid,
)
from .kernel_svm import (
    ConvergenceError,
    KernelSpec,
    PenaltyConfig,
    decision_values,
    save_model,
    train_weighted_svm,
)
from .pipeline import run_comparison, run_tutorial
from .weighting import EffectiveCounts, WeightPair


EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 2, 3, 4

PRESETS = {
    "german": dict(kernel="rbf", gamma=0.001, c_plus=10.0, c_minus=10.0, levels=199,
                   mode="auto", scaling="none", n_train=500, bins=10),
    "tutorial": dict(kernel="linear", c_plus=20.0, c_minus=20.0, levels=9, seed=7),
}


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _write_summary(path, summary: dict):
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in summary.items())
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)
    return text


def _vector(text, name):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--{name}: expected comma-separated numbers, got {text!r}") from None


def _matrix(text, name):
    return tuple(_vector(row, name) for row in text.split(";"))


def _kernel(args) -> KernelSpec:
    try:
        return KernelSpec(args.kernel, args.gamma)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _penalties(args) -> PenaltyConfig:
    try:
        return PenaltyConfig(args.c_plus, args.c_minus)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _load(args, path=None) -> Dataset:
    return load_csv(path or args.data, label_column=args.label_column,
                    positive_label=args.positive_label)


def _scale(ds, args, out_path):
    if args.scaling == "none":
        return ds
    params = fit_scaling(ds)
    Path(out_path).write_text(params.dumps())
    return apply_scaling(ds, params)


# ---------------------------------------------------------------- commands

def cmd_gen_data(args):
    if args.preset == "tutorial":
        spec = tutorial_spec(args.seed)
    else:
        need = ("mean_plus", "cov_plus", "mean_minus", "cov_minus")
        missing = [n for n in need if getattr(args, n) is None]
        if missing:
            raise UsageError("without --preset, supply " + ", ".join("--" + m.replace("_", "-") for m in missing))
        spec = GaussianSpec(_vector(args.mean_plus, "mean-plus"), _matrix(args.cov_plus, "cov-plus"),
                            _vector(args.mean_minus, "mean-minus"), _matrix(args.cov_minus, "cov-minus"),
                            args.n_plus, args.n_minus, args.seed)
    if args.n_plus is not None and args.preset == "tutorial":
        spec = GaussianSpec(spec.mean_plus, spec.cov_plus, spec.mean_minus, spec.cov_minus,
                            args.n_plus, spec.n_minus if args.n_minus is None else args.n_minus, spec.seed)
    ds = generate_gaussian_2d(spec)
    save_csv(ds, args.out)
    print(f"wrote {len(ds)} rows to {args.out}")


def cmd_train(args):
    ds = _load(args)
    ds = _scale(ds, args, str(args.out) + ".scaling")
    base = _penalties(args)
    if ds.n_plus == 0 or ds.n_minus == 0:
        raise DataError("training data must contain both classes")
    counts = EffectiveCounts.from_penalties(base.c_plus, ds.n_plus, base.c_minus, ds.n_minus)
    w = WeightPair.for_counts(args.z_plus, counts)
    pen = PenaltyConfig(w.z_plus * base.c_plus, w.z_minus * base.c_minus)
    model, diag = train_weighted_svm(ds, _kernel(args), pen, args.tol, args.max_iter)
    save_model(model, args.out)
    score_data, score_out = args.score_data or [], args.scores_out or []
    if len(score_data) != len(score_out):
        raise UsageError("give one --scores-out per --score-data")
    for src, dst in zip(score_data, score_out):
        other = _load(args, src)
        if args.scaling != "none":
            other = apply_scaling(other, ScalingParams.loads(Path(str(args.out) + ".scaling").read_text()))
        f = decision_values(model, other.features)
        _write_csv(dst, ["id", "rawScore", "label"], zip(other.ids, f, other.labels))
    summary = {
        "z_plus": w.z_plus, "z_minus": w.z_minus,
        "applied_c_plus": pen.c_plus, "applied_c_minus": pen.c_minus,
        "iterations": diag.iterations, "max_kkt_violation": diag.max_kkt_violation,
        "dual_objective": diag.dual_objective, "primal_objective": diag.primal_objective,
        "duality_gap": diag.duality_gap, "max_slack": float(np.max(diag.slacks)),
        "n_support": int(model.support_indices.size), "bias": model.bias,
    }
    sys.stdout.write(_write_summary(None, summary))


def cmd_grid(args):
    if args.levels < 1:
        raise UsageError("--levels must be at least 1")
    ds = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = _scale(ds, args, out / "scaling.txt")
    grid = build_hyperplane_grid(ds, _kernel(args), _penalties(args), args.levels, args.mode,
                                 args.tol, args.max_iter, args.n_jobs)
    save_grid(grid, out)
    _write_csv(out / "levels.csv", ["level", "z_plus", "z_minus", "applied_c_plus", "applied_c_minus"],
               [[e.level, e.weights.z_plus, e.weights.z_minus, e.model.penalties.c_plus,
                 e.model.penalties.c_minus] for e in grid.trained])
    print(f"wrote grid of {grid.n_models} models (+2 fictitious, mode={grid.mode}) to {out}")


def _grid_scaling(grid_path):
    p = Path(grid_path)
    p = (p if p.is_dir() else p.parent) / "scaling.txt"
    return ScalingParams.loads(p.read_text()) if p.exists() else None


def cmd_estimate(args):
    grid = load_grid(args.grid)
    ds = _load(args)
    params = _grid_scaling(args.grid)
    if params is not None:
        ds = apply_scaling(ds, params)
    if len(ds) == 0:
        _write_csv(args.out, ["id", "value", "positiveVotes", "onPlaneCount", "degenerate"], [])
        return
    F, S = classification_matrix(grid, ds.features, args.eps)
    est = [estimate_from_sides(row) for row in S]
    _write_csv(args.out, ["id", "value", "positiveVotes", "onPlaneCount", "degenerate"],
               [[i, e.value, e.positive_votes, e.on_plane_count, e.degenerate]
                for i, e in zip(ds.ids, est)])
    if args.table:
        _write_level_table(args.table, ds.ids, grid.levels, F, S)
    rep = report_from_sides(S, grid.levels)
    print(f"{len(est)} estimates, {rep.n_degenerate} degenerate")


def _write_level_table(path, ids, levels, F, S):
    rows = []
    for i, f_row, s_row in zip(ids, F, S):
        for p, f, s in zip(levels, f_row, s_row):
            rows.append([i, p, f, {1: "positive", -1: "negative", 0: "onPlane"}[int(s)]])
    _write_csv(path, ["id", "level", "score", "class"], rows)


def _read_columns(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return reader.fieldnames or [], rows


def _column(rows, name, path):
    try:
        return np.array([float(r[name]) for r in rows])
    except KeyError:
        raise DataError(f"{path}: no column {name!r}") from None
    except ValueError:
        raise DataError(f"{path}: non-numeric value in column {name!r}") from None


def _scores_and_labels(args):
    fields, rows = _read_columns(args.input)
    if args.labels:
        labels = load_csv(args.labels, label_column=args.label_column,
                          positive_label=args.positive_label).labels
    else:
        labels = _column(rows, args.label_name, args.input)
    columns = args.columns.split(",") if args.columns else [
        f for f in fields if f not in (args.label_name, "id")]
    scores = {c: _column(rows, c, args.input) for c in columns}
    for c, s in scores.items():
        if len(s) != len(labels):
            raise DataError(f"column {c!r} has {len(s)} values but there are {len(labels)} labels")
    return scores, labels


def _platt_column(args, scores):
    """Fit a sigmoid on ``--platt-fit`` and add its estimates as column ``platt``."""
    fields, rows = _read_columns(args.platt_fit)
    f = _column(rows, args.platt_column, args.platt_fit)
    y = _column(rows, args.label_name, args.platt_fit)
    if args.platt_column not in scores:
        raise DataError(f"--platt-column {args.platt_column!r} is not among the scored columns")
    params = cal.fit_platt(f, y)
    scores["platt"] = cal.apply_platt(params, scores[args.platt_column])
    return params


def cmd_calibrate(args):
    scores, labels = _scores_and_labels(args)
    extra = {}
    if args.platt_fit:
        params = _platt_column(args, scores)
        extra = {"platt.A": params.A, "platt.B": params.B}
    normalize = set(args.normalize.split(",")) if args.normalize else set()
    summary = {}
    prefix = Path(args.out_prefix)
    for name, s in scores.items():
        if name in normalize:
            s = cal.normalize_scores(s)
        rep = cal.calibration_report(name, s, labels, args.bins)
        summary[f"calibration_score.{name}"] = rep.calibration_score
        summary[f"auc.{name}"] = rep.auc
        _write_report_files(prefix, name, rep)
        if args.svg:
            _svg_reliability(Path(f"{prefix}_{name}_reliability.svg"), name, s, labels, rep)
    summary.update(extra)
    sys.stdout.write(_write_summary(f"{prefix}_summary.txt", summary))


def cmd_roc(args):
    scores, labels = _scores_and_labels(args)
    summary = {}
    for name, s in scores.items():
        roc = cal.roc_and_auc(s, labels)
        summary[f"auc.{name}"] = roc.auc
        _write_csv(f"{args.out_prefix}_{name}_roc.csv", ["fpr", "tpr"], zip(roc.fpr, roc.tpr))
    if args.svg:
        _svg_roc(Path(f"{args.out_prefix}_roc.svg"),
                 {n: cal.roc_and_auc(s, labels) for n, s in scores.items()})
    sys.stdout.write(_write_summary(f"{args.out_prefix}_summary.txt", summary))


def _write_report_files(prefix, name, rep):
    _write_csv(f"{prefix}_{name}_bins.csv", ["binCenter", "meanScore", "empiricalPositiveRate", "binCount"],
               [[b.center, b.mean_score, b.positive_rate, b.count] for b in rep.bins])
    _write_csv(f"{prefix}_{name}_isotonic.csv", ["breakpoint", "value"],
               zip(rep.isotonic.breakpoints, rep.isotonic.values))
    if rep.roc is not None:
        _write_csv(f"{prefix}_{name}_roc.csv", ["fpr", "tpr"], zip(rep.roc.fpr, rep.roc.tpr))


def cmd_compare(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.preset == "tutorial":
        return _compare_tutorial(args, out)
    if args.preset == "german":
        ds = load_german_credit(args.positive_label)
        train, test = split_consecutive(ds, args.n_train)
    else:
        if not (args.train and args.test):
            raise UsageError("without --preset, supply --train and --test")
        train, test = _load(args, args.train), _load(args, args.test)
    res = run_comparison(train, test, _kernel(args), _penalties(args), args.levels, args.mode,
                         args.scaling, args.bins, args.tol, args.max_iter, args.n_jobs, args.eps)
    iso = {n: r.isotonic for n, r in res.reports.items()}
    labels = res.test.labels
    rows = []
    for k in range(len(res.test)):
        rows.append([res.test.ids[k], res.raw_scores[k], res.normalized[k], res.platt_estimates[k],
                     res.implied[k].value, iso["raw"](res.normalized[k]),
                     iso["platt"](res.platt_estimates[k]), iso["implied"](res.implied[k].value),
                     int(labels[k])])
    _write_csv(out / "points.csv", ["id", "rawScore", "normalizedScore", "plattEstimate",
                                    "impliedEstimate", "isoFitRaw", "isoFitPlatt", "isoFitImplied",
                                    "label"], rows)
    for name, rep in res.reports.items():
        _write_report_files(out / "report", name, rep)
    if args.table:
        F, S = classification_matrix(res.grid, res.test.features, args.eps)
        _write_level_table(out / "levels_per_point.csv", res.test.ids, res.grid.levels, F, S)
    if args.svg:
        values = {"raw": res.normalized, "platt": res.platt_estimates, "implied": res.implied_values}
        for name, rep in res.reports.items():
            _svg_reliability(out / f"{name}_reliability.svg", name, values[name], labels, rep)
        _svg_roc(out / "roc.svg", {n: res.reports[n].roc for n in ("platt", "implied")})
    sys.stdout.write(_write_summary(out / "summary.txt", res.summary()))


def _compare_tutorial(args, out):
    res = run_tutorial(seed=args.seed, c=args.c_plus, n_models=args.levels, tol=args.tol)
    save_csv(res.train, out / "train.csv")
    save_csv(res.test, out / "test.csv")
    _write_level_table(out / "levels_per_point.csv", res.test.ids, res.grid.levels, res.scores, res.sides)
    _write_csv(out / "estimates.csv", ["id", "value", "positiveVotes", "onPlaneCount", "degenerate"],
               [[i, e.value, e.positive_votes, e.on_plane_count, e.degenerate]
                for i, e in zip(res.test.ids, res.estimates)])
    _write_csv(out / "separators.csv", ["level", "w0", "w1", "b", "angle_deg"],
               [[e.level, *e.model.coef, e.model.bias, a] for e, a in zip(res.grid.trained, res.angles)])
    sys.stdout.write(_write_summary(out / "summary.txt", res.summary()))


# ---------------------------------------------------------------- plotting

def _pyplot():
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise UsageError("--svg needs matplotlib") from None
    matplotlib.rcParams["svg.hashsalt"] = "implied-posterior"
    return plt


def _svg_reliability(path, name, scores, labels, rep):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot([0, 1], [0, 1], color="grey", lw=0.8)
    ax.step(rep.isotonic.breakpoints, rep.isotonic.values, where="post", label="isotonic")
    pts = [(b.mean_score, b.positive_rate) for b in rep.bins if b.count]
    ax.plot(*zip(*pts), "o", label="bins")
    ax.set(xlabel=f"{name} estimate", ylabel="empirical P(+)",
           title=f"{name}: calibration score {rep.calibration_score:.3f}")
    ax.legend(loc="upper left")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _svg_roc(path, curves):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4, 4))
    for name, roc in curves.items():
        ax.plot(roc.fpr, roc.tpr, label=f"{name} (AUC {roc.auc:.3f})")
    ax.plot([0, 1], [0, 1], color="grey", lw=0.8)
    ax.set(xlabel="false positive rate", ylabel="true positive rate")
    ax.legend(loc="lower right")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------- parser

def _add_data(p, required=True):
    p.add_argument("--data", required=required, help="CSV/whitespace-delimited data file")
    p.add_argument("--label-column", type=int, default=0,
                   help="0-based label column; negative counts from the end (default 0)")
    p.add_argument("--positive-label", default="1", help="raw label token mapped to +1")


def _add_model(p, levels_default=None):
    p.add_argument("--kernel", choices=["linear", "rbf"], default="rbf")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--c-plus", type=float, default=1.0)
    p.add_argument("--c-minus", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=10_000_000)
    p.add_argument("--scaling", choices=["none", "minmax"], default="none")
    if levels_default is not None:
        p.add_argument("--levels", type=int, default=levels_default, help="number of trained grid models K")
        p.add_argument("--mode", choices=["auto", "exact", "balancedAssumption"], default="auto")
        p.add_argument("--n-jobs", type=int, default=None)


def _add_scores(p):
    p.add_argument("--input", required=True, help="CSV with a header row")
    p.add_argument("--columns", help="comma-separated score columns (default: all but id/label)")
    p.add_argument("--label-name", default="label", help="label column name in --input")
    p.add_argument("--labels", help="separate labelled data file instead of a label column")
    p.add_argument("--label-column", type=int, default=0)
    p.add_argument("--positive-label", default="1")
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--svg", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="implied-posterior", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="key=value file supplying defaults for any flag")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="sample two 2D Gaussian classes")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=["tutorial"])
    p.add_argument("--mean-plus")
    p.add_argument("--cov-plus", help="rows separated by ';', e.g. '1,0.5;0.5,1'")
    p.add_argument("--mean-minus", help="comma-separated; write --mean-minus=-1,-1 for negative values")
    p.add_argument("--cov-minus")
    p.add_argument("--n-plus", type=int)
    p.add_argument("--n-minus", type=int)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one class-weighted SVM")
    p.add_argument("--preset", choices=sorted(PRESETS), help="model settings of a preset")
    _add_data(p)
    _add_model(p)
    p.add_argument("--z-plus", type=float, default=0.5, help="positive-class weight; z- follows from the budget")
    p.add_argument("--out", required=True)
    p.add_argument("--score-data", action="append",
                   help="data file whose decision values to write (repeatable)")
    p.add_argument("--scores-out", action="append",
                   help="CSV of id,rawScore,label for the matching --score-data")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="train the hyperplane grid")
    p.add_argument("--preset", choices=sorted(PRESETS), help="model settings of a preset")
    _add_data(p)
    _add_model(p, levels_default=99)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("estimate", help="vote estimates for a test file")
    p.add_argument("--grid", required=True)
    _add_data(p)
    p.add_argument("--eps", type=float, default=None, help="on-plane band half-width")
    p.add_argument("--out", required=True)
    p.add_argument("--table", help="also write the per-level classification table")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("calibrate", help="isotonic calibration reports for score columns")
    _add_scores(p)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--normalize", help="columns to min-max normalize first")
    p.add_argument("--platt-fit", help="CSV of training scores and labels to fit a sigmoid on")
    p.add_argument("--platt-column", default="rawScore",
                   help="score column the sigmoid reads, in both --platt-fit and --input")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("roc", help="ROC curves and AUC for score columns")
    _add_scores(p)
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("compare", help="reference SVM vs Platt vs implied posterior")
    p.add_argument("--preset", choices=["german", "tutorial"])
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--label-column", type=int, default=0)
    p.add_argument("--positive-label", default="1")
    _add_model(p, levels_default=99)
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--table", action="store_true", help="write the per-level table for every test point")
    p.add_argument("--svg", action="store_true")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def _read_config(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such config file: {path}")
    out = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}: expected key=value, got {line!r}")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if name in action.choices:
            return action.choices[name]
    raise KeyError(name)


def _config_defaults(sp, command, config):
    actions = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, raw in config.items():
        a = actions.get(key)
        if a is None:
            raise UsageError(f"config key {key!r} is not an option of {command}")
        if isinstance(a, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                defaults[key] = a.type(raw) if a.type else raw
            except ValueError:
                raise UsageError(f"config key {key!r}: bad value {raw!r}") from None
    return defaults


def _parse(parser, argv):
    """Parse with precedence preset < config file < explicit flags."""
    args = parser.parse_args(argv)
    config = _read_config(args.config) if args.config else {}
    sp = _subparser(parser, args.command)
    defaults = _config_defaults(sp, args.command, config)
    preset = getattr(args, "preset", None) or defaults.get("preset")
    if preset in PRESETS:
        dests = {a.dest for a in sp._actions}
        sp.set_defaults(**{k: v for k, v in PRESETS[preset].items() if k in dests})
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        args.func(args)
    except SystemExit as e:
        return int(e.code or 0)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except (DataError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
