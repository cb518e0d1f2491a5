"""Command-line front end: ``confdist <command> [options]``.

Options may also come from a flat ``key=value`` file given by ``--config``;
flags on the command line take precedence.  Keys that are not flags of the
chosen command are passed to the study as extra options.
"""
from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import build, core, harness, invert, statkit
from .combine import CombinerSpec, combine
from .errors import ConfDistError
from .statkit import ScalarLaw

FAMILIES = ("normal-mean", "neyman-scott", "fisher-z", "gamma-profile", "mann-whitney",
            "half-corrected", "binomial-posterior")


def read_config(path):
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfDistError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = _literal(value)
    return out


def _literal(text):
    if text.lower() in ("none", "null", ""):
        return None
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def _load_data(path):
    """Numeric table from a comma or whitespace separated file (header lines skipped)."""
    rows = []
    with open(path) as fh:
        for line in fh:
            parts = line.replace(",", " ").split()
            if not parts:
                continue
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                continue
    if not rows:
        raise ConfDistError(f"{path}: no numeric rows")
    arr = np.array(rows, dtype=float)
    return arr[:, 0] if arr.shape[1] == 1 else arr


def _common(p):
    p.add_argument("--seed", type=int, default=20210611, help="master seed")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", default="", help="output directory")
    p.add_argument("--grid", type=int, default=2001, help="grid points")
    p.add_argument("--config", default=None, help="flat key=value file")


def _cd_source(p):
    p.add_argument("--cd", dest="cd_path", default=None, help="gridded CD CSV with header theta,H")
    p.add_argument("--family", choices=FAMILIES, default=None)
    p.add_argument("--data", default=None, help="data file for --family")
    p.add_argument("--data2", default=None, help="second sample (mann-whitney)")
    p.add_argument("--y", type=int, default=None, help="successes (binomial families)")
    p.add_argument("--n", type=int, default=None, help="trials (binomial families)")


def build_parser():
    parser = argparse.ArgumentParser(prog="confdist", description="Confidence distribution toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    cd = sub.add_parser("cd", help="evaluate a confidence distribution")
    cds = cd.add_subparsers(dest="action", required=True)
    p = cds.add_parser("eval", help="H and density at given theta values")
    _common(p)
    _cd_source(p)
    p.add_argument("--theta", type=float, nargs="+", required=True)
    p = cds.add_parser("curve", help="theta,CV table of the confidence curve")
    _common(p)
    _cd_source(p)
    p.add_argument("--lo", type=float, default=None)
    p.add_argument("--hi", type=float, default=None)
    p = cds.add_parser("interval", help="central interval and optional p-value")
    _common(p)
    _cd_source(p)
    p.add_argument("--pvalue", type=float, default=None, help="boundary b of K0")
    p.add_argument("--alternative", choices=("less", "greater", "two-sided"), default="less")

    p = sub.add_parser("combine", help="combine gridded study CDs")
    _common(p)
    p.add_argument("--cd", dest="cd_paths", action="append", required=True)
    p.add_argument("--lo", type=float, required=True)
    p.add_argument("--hi", type=float, required=True)
    p.add_argument("--mapping", choices=("laplace-quantile-sum", "normal-quantile-sum"),
                   default="laplace-quantile-sum")

    for name, helptext in (("abc", "ABC rejection draws"), ("gfi", "generalized fiducial draws"),
                           ("bootstrap", "bootstrap draws")):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--data", required=True)
        p.add_argument("--draws", type=int, default=2000)
        p.add_argument("--epsilon", type=float, default=None)
        if name == "bootstrap":
            p.add_argument("--statistic", choices=("mean", "median"), default="mean")
        else:
            choices = ("cauchy-mean", "cauchy-median", "normal-mean") if name == "abc" else ("normal-mean",)
            p.add_argument("--model", choices=choices, default=choices[0])
            p.add_argument("--prior-half-width", type=float, default=invert.PRIOR_HALF_WIDTH)

    sim = sub.add_parser("simulate", help="coverage studies")
    sims = sim.add_subparsers(dest="study", required=True)
    for name, n, reps in (("bivariate-meta", 200, 500), ("cauchy-abc", 40, 400)):
        p = sims.add_parser(name)
        _common(p)
        p.add_argument("--reps", type=int, default=reps)
        p.add_argument("--n", type=int, default=n)
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("billiard", help="flat-prior binomial posterior")
    _common(p)
    p.add_argument("--y", type=int, default=5)
    p.add_argument("--n", type=int, default=14)

    suite = sub.add_parser("suite", help="validity suites")
    suites = suite.add_subparsers(dest="suite", required=True)
    p = suites.add_parser("uniformity")
    _common(p)
    p.add_argument("--constructor", choices=tuple(harness.UNIFORMITY_CONSTRUCTORS), action="append")
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--theta", type=float, default=None)
    p = suites.add_parser("matching")
    _common(p)
    p.add_argument("--reps", type=int, default=2000, help="outer replications R = draws M")
    return parser


def _subparser(parser, argv):
    """The innermost subparser selected by ``argv`` (for config defaults)."""
    node = parser
    for token in argv:
        actions = [a for a in node._actions if isinstance(a, argparse._SubParsersAction)]
        if actions and token in actions[0].choices:
            node = actions[0].choices[token]
    return node


def parse(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    extra = {}
    if known.config:
        cfg = read_config(known.config)
        leaf = _subparser(parser, argv)
        dests = {a.dest for a in leaf._actions}
        leaf.set_defaults(**{k: v for k, v in cfg.items() if k in dests})
        extra = {k: v for k, v in cfg.items() if k not in dests}
    args = parser.parse_args(argv)
    args.extra = extra
    return args


# -- commands -----------------------------------------------------------------

def _source_cd(args):
    if args.cd_path:
        return core.read_gridded_csv(args.cd_path)
    fam = args.family
    if fam is None:
        raise ConfDistError("give --cd or --family")
    if fam in ("half-corrected", "binomial-posterior"):
        if args.y is None or args.n is None:
            raise ConfDistError(f"{fam} needs --y and --n")
        if fam == "half-corrected":
            return build.half_corrected_cd(args.n, args.y, args.grid)
        return build.binomial_flat_prior_cd(args.y, args.n, args.grid)
    if args.data is None:
        raise ConfDistError(f"{fam} needs --data")
    data = _load_data(args.data)
    if fam == "normal-mean":
        return build.normal_mean_cd(data)
    if fam == "neyman-scott":
        return build.neyman_scott_cd(data)
    if fam == "fisher-z":
        return build.fisher_z_cd(data)
    if fam == "gamma-profile":
        return build.gamma_profile_cd(data, grid_size=args.grid)
    if args.data2 is None:
        raise ConfDistError("mann-whitney needs --data2")
    return build.mann_whitney_cd(build.TwoSample(data, _load_data(args.data2)), grid_size=args.grid)


def _plot_range(cd, args):
    lo = args.lo if args.lo is not None else float(cd.quantile(1e-4))
    hi = args.hi if args.hi is not None else float(cd.quantile(1 - 1e-4))
    return np.linspace(lo, hi, args.grid)


def _out_path(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def cmd_cd(args, out):
    cd = _source_cd(args)
    if args.action == "eval":
        out.write("theta,H,density,CV\n")
        for t in args.theta:
            out.write(f"{t!r},{cd.cdf(t)!r},{float(cd.density(t))!r},{float(core.confidence_curve(cd, t))!r}\n")
    elif args.action == "curve":
        grid = _plot_range(cd, args)
        if args.out:
            core.write_curve_csv(cd, _out_path(args, "curve.csv"), grid)
            core.write_gridded_csv(cd, _out_path(args, "cd.csv"), grid)
            out.write(f"wrote {args.out}/curve.csv and {args.out}/cd.csv\n")
        else:
            out.write("theta,CV\n")
            for t, v in zip(grid, core.confidence_curve(cd, grid)):
                out.write(f"{float(t)!r},{float(v)!r}\n")
    else:
        iv = core.cd_interval(cd, args.level)
        out.write("level,lo,hi,length\n")
        out.write(f"{args.level},{float(iv.lo)!r},{float(iv.hi)!r},{float(iv.length)!r}\n")
        if args.pvalue is not None:
            p = core.cd_pvalue(cd, args.pvalue, args.alternative)
            out.write(f"pvalue[{args.alternative}, b={args.pvalue}]={p!r}\n")
    return 0


def cmd_combine(args, out):
    cds = [core.read_gridded_csv(p, enforce_tails=False) for p in args.cd_paths]
    spec = CombinerSpec(k=len(cds), grid=np.linspace(args.lo, args.hi, args.grid), mapping=args.mapping,
                        gc_method="closed-form" if args.mapping == "normal-quantile-sum" else "monte-carlo")
    res = combine(cds, spec)
    iv = core.cd_interval(res, args.level)
    if args.out:
        core.write_gridded_csv(res, _out_path(args, "combined.csv"))
        out.write(f"wrote {args.out}/combined.csv\n")
    out.write(f"combined {args.level} interval: [{iv.lo:.6g}, {iv.hi:.6g}]\n")
    return 0


def cmd_draws(args, out):
    y = np.asarray(_load_data(args.data), dtype=float)
    rng = statkit.make_rng(args.seed)
    if args.command == "bootstrap":
        stat = np.mean if args.statistic == "mean" else np.median
        draws = invert.bootstrap_draws(y, stat, args.draws, rng)
    else:
        y = y.ravel()
        n = y.size
        center = float(np.median(y)) if args.model == "cauchy-median" else float(y.mean())
        eps = args.epsilon if args.epsilon is not None else invert.default_epsilon(y)
        if args.command == "gfi":
            half = args.prior_half_width * invert.robust_scale(y) / math.sqrt(n)
            model = invert.structural_mean_model(n, (center - half, center + half))
            draws = invert.gfi_draws(model, [center], args.draws, eps, rng)
        else:
            if args.model == "normal-mean":
                model, obs = invert.structural_mean_model(n), [center]
            else:
                model = invert.location_model(n, ScalarLaw.cauchy(), args.model.split("-")[1])
                obs = y
            prior = invert.flat_prior(y, center, args.prior_half_width)
            draws = invert.abc_draws(model, obs, prior, args.draws, eps, rng)
    if args.out:
        path, meta = invert.write_draws(draws, _out_path(args, f"{args.command}_draws.csv"))
        out.write(f"wrote {path} and {meta}\n")
    cd = invert.draws_to_cd(draws)
    iv = core.cd_interval(cd, args.level)
    out.write(f"engine={draws.engine} draws={len(draws)} acceptance_rate={draws.acceptance_rate:.4g} "
              f"median={cd.median():.6g} {args.level} interval=[{iv.lo:.6g}, {iv.hi:.6g}]\n")
    return 0


def study_config(args):
    """The :class:`~confdist.harness.StudyConfig` a ``simulate`` command line stands for."""
    # config keys param_<name> set true parameters, anything else is a study option
    params = {k[len("param_"):]: v for k, v in args.extra.items() if k.startswith("param_")}
    options = {k: v for k, v in args.extra.items() if not k.startswith("param_")}
    if args.epsilon is not None:
        options["epsilon"] = args.epsilon
    if args.grid != 2001:
        key = "combiner_grid" if args.study == "bivariate-meta" else "posterior_grid"
        options.setdefault(key, args.grid)
    return harness.StudyConfig(study=args.study, replications=args.reps, n=args.n, true_params=params,
                               level=args.level, master_seed=args.seed, output_dir=args.out,
                               workers=args.workers, options=options)


def cmd_simulate(args, out):
    report = harness.run_study(study_config(args))
    out.write(report.to_csv_text())
    if args.out:
        csv_path, json_path = report.write_outputs(args.out, args.study)
        out.write(f"wrote {csv_path} and {json_path}\n")
    return 0


def cmd_billiard(args, out):
    cd = harness.run_billiard(args.y, args.n, args.grid)
    iv = core.cd_interval(cd, args.level)
    out.write(f"posterior Beta({args.y + 1}, {args.n - args.y + 1}): mean={cd.mean():.6f} "
              f"median={cd.median():.6f} {args.level} interval=[{iv.lo:.6f}, {iv.hi:.6f}]\n")
    if args.out:
        core.write_gridded_csv(cd, _out_path(args, "billiard.csv"))
        out.write(f"wrote {args.out}/billiard.csv\n")
    return 0


def cmd_suite(args, out):
    if args.suite == "uniformity":
        names = args.constructor or ["normal-mean", "neyman-scott", "fisher-z"]
        defaults = {"normal-mean": 0.0, "neyman-scott": 1.0, "fisher-z": 0.5, "combined-normal-mean": 0.0}
        rngs = statkit.spawn(args.seed, len(names))
        rows = [harness.run_uniformity_suite(nm, defaults[nm] if args.theta is None else args.theta,
                                             args.reps, g, args.n) for nm, g in zip(names, rngs)]
        rows += harness.run_dominance_suite()
    else:
        rows = harness.run_matching_suite(args.seed, args.reps, args.reps)
    for r in rows:
        out.write(r.line() + "\n")
    return 0 if all(r.passed for r in rows) else 1


COMMANDS = {"cd": cmd_cd, "combine": cmd_combine, "abc": cmd_draws, "gfi": cmd_draws,
            "bootstrap": cmd_draws, "simulate": cmd_simulate, "billiard": cmd_billiard, "suite": cmd_suite}


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    args = parse(argv)
    try:
        return COMMANDS[args.command](args, out)
    except (ConfDistError, OSError) as exc:
        sys.stderr.write(f"confdist: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
