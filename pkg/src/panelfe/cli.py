"""Command-line interface: ``panelfe fit`` and ``panelfe simulate``.

Exit codes: 0 on success, 1 for estimation/data errors, 2 for usage errors.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import shlex
import sys
import warnings

import numpy as np
from scipy import stats

from .data import load_csv
from .errors import InvalidSpec, PanelFEError
from .estimate import CorrectedEstimates, estimate
from .estimator import JK_VARIANTS, MULTIPLE_DIMS, ModelSpec
from .inference import Z_95, numerical_rank

# flags that change how a run executes but not what it computes
_EXECUTION_FLAGS = {"--jobs", "--out"}


class UsageError(Exception):
    pass


def _yes_no(value: str) -> bool:
    v = value.lower()
    if v not in ("yes", "no"):
        raise argparse.ArgumentTypeError("expected yes or no")
    return v == "yes"


def _names(value: str) -> list:
    return [v.strip() for v in value.split(",") if v.strip()]


def _sizes(value: str) -> list:
    try:
        return [int(v) for v in _names(value)]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list of integers")


def _population(value: str) -> float:
    try:
        M = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("expected a positive integer")
    if M < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return float(M)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panelfe",
        description="Bias-corrected probit/logit estimation with fixed effects.")
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="estimate a model on a long-format CSV panel")
    f.add_argument("--data", required=True, help="CSV file, one row per unit-period")
    f.add_argument("--id", required=True, help="unit (cross-section) column")
    f.add_argument("--time", required=True, help="period column (integers)")
    f.add_argument("--depvar", required=True)
    f.add_argument("--indepvars", required=True, type=_names, help="comma-separated")
    f.add_argument("--family", choices=("probit", "logit"))
    f.add_argument("--emulate", choices=("probitfe", "logitfe"),
                   help="set the family and label output like the Stata command")
    corr = f.add_mutually_exclusive_group()
    corr.add_argument("--nocorrection", dest="correction", action="store_const", const="none")
    corr.add_argument("--analytical", dest="correction", action="store_const",
                      const="analytical")
    corr.add_argument("--jackknife", dest="correction", action="store_const",
                      const="jackknife")
    f.add_argument("--lags", type=int, help="trimming parameter L (analytical)")
    f.add_argument("--lag-sweep", type=int, metavar="LMAX",
                   help="also report analytical corrections for L = 0..LMAX")
    f.add_argument("--jk-variant", choices=JK_VARIANTS, help="jackknife variant (default ss2)")
    f.add_argument("--multiple", type=int, help="random partitions for ss1/ss2")
    f.add_argument("--multiple-dim", choices=MULTIPLE_DIMS)
    f.add_argument("--ieffects", type=_yes_no, default=True, metavar="yes|no")
    f.add_argument("--teffects", type=_yes_no, default=True, metavar="yes|no")
    f.add_argument("--ibias", type=_yes_no, default=True, metavar="yes|no")
    f.add_argument("--tbias", type=_yes_no, default=True, metavar="yes|no")
    f.add_argument("--population", type=_population,
                   help="population size M in observations (finite population correction)")
    f.add_argument("--force-binary", type=_names, default=[])
    f.add_argument("--force-continuous", type=_names, default=[])
    f.add_argument("--seed", type=int, help="default: $PANELFE_SEED or 0")
    f.add_argument("--jobs", type=int, default=1)
    f.add_argument("--tol", type=float, default=1e-8)
    f.add_argument("--max-iter", type=int, default=200)
    f.add_argument("--out", help="write saved results (JSON) here")
    f.add_argument("--export-calibration", metavar="PATH",
                   help="write covariates and uncorrected effects for `simulate`")

    s = sub.add_parser("simulate", help="Monte Carlo study of the estimators")
    s.add_argument("--design", default="synthetic",
                   help="synthetic or calibrated:<path>")
    s.add_argument("--sizes", type=_sizes, default=[25, 50, 75, 100, 157])
    s.add_argument("--reps", type=int, default=500)
    s.add_argument("--estimators", type=_names, default=["fe", "an0", "ss2", "double"])
    s.add_argument("--population", type=_population,
                   help="population size for the APE fpc (default: all design pairs)")
    s.add_argument("--seed", type=int, help="default: $PANELFE_SEED or 0")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", help="write the metric table as CSV here")
    return parser


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("PANELFE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"PANELFE_SEED must be an integer, got {env!r}")


def spec_from_args(args) -> ModelSpec:
    """Translate ``fit`` flags to a :class:`ModelSpec` (raises UsageError)."""
    family = args.family
    if args.emulate:
        emulated = args.emulate[:-2]
        if family is not None and family != emulated:
            raise UsageError(f"--family {family} conflicts with --emulate {args.emulate}")
        family = emulated
    family = family or "logit"
    correction = args.correction or "analytical"
    if not (args.ieffects or args.teffects):
        raise UsageError("--ieffects no together with --teffects no is invalid")
    if not (args.ibias or args.tbias):
        raise UsageError("--ibias no together with --tbias no is invalid")
    if correction != "analytical":
        for flag, value in (("--lags", args.lags), ("--lag-sweep", args.lag_sweep)):
            if value is not None:
                raise UsageError(f"{flag} requires the analytical correction")
    if correction != "jackknife":
        for flag, value in (("--jk-variant", args.jk_variant), ("--multiple", args.multiple),
                            ("--multiple-dim", args.multiple_dim)):
            if value is not None:
                raise UsageError(f"{flag} requires --jackknife")
    variant = args.jk_variant or "ss2"
    if (args.multiple or args.multiple_dim) and variant not in ("ss1", "ss2"):
        raise UsageError(f"--multiple applies to ss1 and ss2 only, not {variant}")
    if args.multiple_dim and not args.multiple:
        raise UsageError("--multiple-dim requires --multiple")
    for flag, value in (("--lags", args.lags), ("--lag-sweep", args.lag_sweep),
                        ("--multiple", args.multiple)):
        if value is not None and value < 0:
            raise UsageError(f"{flag} must be nonnegative")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    try:
        return ModelSpec(
            family=family, include_ieffects=args.ieffects, include_teffects=args.teffects,
            correction=correction, lags_L=args.lags or 0, jk_variant=variant,
            multiple_m=args.multiple or 0, multiple_dim=args.multiple_dim or "both",
            ibias=args.ibias, tbias=args.tbias,
            population_M=args.population if args.population is not None else math.inf)
    except InvalidSpec as exc:
        raise UsageError(str(exc)) from exc


def _cmdline(argv) -> str:
    """The invocation without execution-only flags (output must not depend on them)."""
    keep, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        name = tok.split("=", 1)[0]
        if name in _EXECUTION_FLAGS:
            skip = "=" not in tok
            continue
        keep.append(tok)
    return shlex.join(["panelfe", *keep])


def _titles(spec: ModelSpec, cmd: str) -> dict:
    family = "Probit" if spec.family == "probit" else "Logit"
    if spec.include_ieffects and spec.include_teffects:
        title1 = "Individual and time effects"
    elif spec.include_ieffects:
        title1 = "Individual effects"
    else:
        title1 = "Time effects"
    if spec.correction == "none":
        title2, title3 = "Uncorrected", ""
    elif spec.correction == "analytical":
        title2, title3 = "Analytical bias correction", f"lags({spec.lags_L})"
    else:
        title2 = f"Jackknife bias correction ({spec.jk_variant})"
        title3 = f"multiple({spec.multiple_m})"
    if not spec.ibias:
        title2 += ", time effects only"
    elif not spec.tbias and spec.correction != "none":
        title2 += ", individual effects only"
    title = f"{family} regression with fixed effects" if cmd == "panelfe" else \
        f"{cmd}: {family.lower()} model with fixed effects"
    return {"title": title, "title1": title1, "title2": title2, "title3": title3}


def _matrix(values, names, rows=None) -> dict:
    arr = np.atleast_2d(np.asarray(values, dtype=float))
    return {"rows": list(rows) if rows is not None else ["y1"], "cols": list(names),
            "values": [[float(v) for v in r] for r in arr]}


def saved_results(res: CorrectedEstimates, spec: ModelSpec, cmd: str, cmdline: str) -> dict:
    fit, inf, panel = res.fit, res.inference, res.fit.panel
    names = list(panel.covariate_names)
    Ti = panel.mask.sum(axis=1)
    K = panel.K
    scalars = {
        "N": panel.n_obs, "N_drop": panel.drop_log.n_obs_dropped,
        "N_group_drop": panel.drop_log.n_units_dropped,
        "N_time_drop": panel.drop_log.n_periods_dropped,
        "N_group": panel.N, "T_min": int(Ti.min()), "T_avg": float(Ti.mean()),
        "T_max": int(Ti.max()), "k": K, "df_m": K, "r2_p": inf.pseudo_r2,
        "chi2": inf.lr_chi2, "p": inf.p_value, "ll": fit.loglik, "ll_0": fit.loglik_null,
        "fpc": inf.fpc, "rankV": numerical_rank(inf.vcov_beta),
        "rankV2": numerical_rank(inf.vcov_ape),
    }
    macros = {"cmd": cmd, "cmdline": cmdline, "depvar": panel.depvar,
              **_titles(spec, cmd), "chi2type": "LR", "properties": "b V",
              "id": panel.id_name, "time": panel.time_name}
    matrices = {"b": _matrix(res.beta, names), "V": _matrix(inf.vcov_beta, names, names),
                "b2": _matrix(res.delta, names), "V2": _matrix(inf.vcov_ape, names, names)}
    return {"scalars": scalars, "macros": macros, "matrices": matrices}


def _fmt(x: float, width: int = 10) -> str:
    return f"{x:>{width}.4g}" if abs(x) >= 1e5 or (x != 0 and abs(x) < 1e-4) \
        else f"{x:>{width}.4f}"


def format_report(res: CorrectedEstimates, saved: dict) -> str:
    inf = res.inference
    sc, mac = saved["scalars"], saved["macros"]
    names = saved["matrices"]["b"]["cols"]
    w = max(12, max(len(n) for n in names) + 1)
    lines = [mac["title"], f"{mac['title1']}; {mac['title2']}" +
             (f"; {mac['title3']}" if mac["title3"] else ""), "",
             f"Number of obs = {sc['N']}   groups = {sc['N_group']}   "
             f"obs per group min/avg/max = {sc['T_min']}/{sc['T_avg']:.1f}/{sc['T_max']}",
             f"Dropped (all-0/all-1): obs = {sc['N_drop']}, groups = {sc['N_group_drop']}, "
             f"periods = {sc['N_time_drop']}",
             f"LR chi2({sc['df_m']}) = {sc['chi2']:.2f}   Prob > chi2 = {sc['p']:.4f}   "
             f"Pseudo R2 = {sc['r2_p']:.4f}   Log likelihood = {sc['ll']:.4f}", ""]
    head = f"{mac['depvar']:<{w}}{'Coef.':>10}{'Std.Err.':>10}{'z':>9}{'P>|z|':>8}" \
           f"{'[95% Conf. Interval]':>24}"
    lines += [head, "-" * len(head)]
    for k, n in enumerate(names):
        b, se = float(res.beta[k]), float(inf.se_beta[k])
        z = b / se if se > 0 else math.nan
        p = 2 * stats.norm.sf(abs(z)) if se > 0 else math.nan
        lines.append(f"{n:<{w}}{_fmt(b)}{_fmt(se)}{z:>9.2f}{p:>8.3f}"
                     f"{_fmt(b - Z_95 * se, 12)}{_fmt(b + Z_95 * se, 12)}")
    lines += ["", "Average partial effects", f"{'':<{w}}{'APE':>10}{'Std.Err.':>10}"
              f"{'SE(fpc)':>10}", "-" * (w + 30)]
    for k, n in enumerate(names):
        lines.append(f"{n:<{w}}{_fmt(float(res.delta[k]))}{_fmt(float(inf.se_ape_nofpc[k]))}"
                     f"{_fmt(float(inf.se_ape[k]))}")
    lines.append(f"finite population correction factor = {inf.fpc:.6g}")
    if res.lag_sweep:
        lines += ["", "Analytical correction by trimming parameter L",
                  f"{'L':>3} " + "".join(f"{n:>{w}}" for n in names) + "   (APE)"]
        for L, (b, d) in res.lag_sweep.items():
            lines.append(f"{L:>3} " + "".join(f"{float(v):>{w}.4f}" for v in b) + "   " +
                         " ".join(f"{float(v):.4f}" for v in d))
    if res.jackknife is not None:
        dropped = res.jackknife.n_dropped_units
        n_periods = sum(s.drop_log.n_periods_dropped for s in res.jackknife.subfits)
        lines += ["", f"Jackknife: {len(res.jackknife.subfits)} subpanel fits; "
                      f"perfect-classification drops inside subpanels: units = {dropped}, "
                      f"periods = {n_periods}"]
    if inf.n_clamped:
        lines.append(f"warning: {inf.n_clamped} negative APE variance eigenvalue(s) "
                     "set to zero")
    return "\n".join(lines)


def export_calibration(res: CorrectedEstimates, path) -> None:
    panel = res.fit.panel
    i, t = np.nonzero(panel.mask)
    doc = {"family": res.fit.spec.family, "covariate_names": list(panel.covariate_names),
           "beta": [float(v) for v in res.beta_fe],
           "id": [_plain(panel.unit_labels[k]) for k in i],
           "time": [int(panel.periods[k]) for k in t],
           "X": panel.X[i, t].tolist(),
           "alpha": res.fit.alpha[i].tolist(), "gamma": res.fit.gamma[t].tolist()}
    with open(path, "w") as fh:
        json.dump(doc, fh)


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


def run_fit(args, argv) -> int:
    spec = spec_from_args(args)
    seed = _seed(args)
    panel = load_csv(args.data, args.id, args.time, args.depvar, args.indepvars)
    if args.force_binary or args.force_continuous:
        both = set(args.force_binary) & set(args.force_continuous)
        if both:
            raise UsageError(f"--force-binary and --force-continuous both name {sorted(both)}")
        panel = panel.with_binary(args.force_binary, args.force_continuous)
    if args.population is not None and args.population < panel.n_obs:
        raise UsageError(f"--population ({int(args.population)}) is smaller than the "
                         f"number of observations ({panel.n_obs})")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = estimate(panel, spec, seed=seed, jobs=args.jobs, tol=args.tol,
                       max_iter=args.max_iter, lag_sweep_max=args.lag_sweep)
    cmd = args.emulate or "panelfe"
    saved = saved_results(res, spec, cmd, _cmdline(argv))
    print(format_report(res, saved))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(saved, fh, indent=2)
            fh.write("\n")
    if args.export_calibration:
        export_calibration(res, args.export_calibration)
    return 0


def run_simulate(args) -> int:
    from . import montecarlo as mc

    seed = _seed(args)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    kw = dict(sizes=tuple(args.sizes), reps=args.reps, estimators=tuple(args.estimators),
              seed=seed, population_M=args.population)
    try:
        if args.design == "synthetic":
            design = mc.synthetic_design(**kw)
        elif args.design.startswith("calibrated:"):
            design = mc.calibrated_design(args.design.split(":", 1)[1], **kw)
        else:
            raise UsageError("--design must be synthetic or calibrated:<path>")
    except InvalidSpec as exc:
        raise UsageError(str(exc)) from exc
    result = mc.run_study(design, jobs=args.jobs)
    print(mc.format_table(result))
    if args.out:
        result.frame().to_csv(args.out, index=False)
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "fit":
            return run_fit(args, argv)
        return run_simulate(args)
    except UsageError as exc:
        parser.error(str(exc))
    except InvalidSpec as exc:
        print(f"panelfe: error: {exc}", file=sys.stderr)
        return 2
    except (PanelFEError, OSError) as exc:
        print(f"panelfe: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
