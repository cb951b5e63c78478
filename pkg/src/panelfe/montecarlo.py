"""Simulation study for the bias and inference accuracy of the estimators.

Each replication draws ``N`` entities from a population, uses them both as
units and as periods (directed pairs without self-pairs), simulates the
outcome from the true index and runs every requested estimator.  Metrics are
reported in percent of the true parameter value.
"""
from __future__ import annotations

import json
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import special

from .analytical import analytical_correct, plug_in
from .ape import partial_effects
from .data import PanelData
from .errors import InvalidSpec, PanelFEError
from .estimator import JK_VARIANTS, ModelSpec, fit_mle, prepare
from .inference import Z_95, ape_vcov, fpc_factor, vcov_beta
from .jackknife import jackknife_correct

SYNTHETIC_BETA = (2.838, -0.839)
SYNTHETIC_NAMES = ("ltrade", "ldist")
SYNTHETIC_POPULATION = 157


def simulate_outcome(index, u, family: str = "logit"):
    """Binary outcome ``1{index > F^-1(1 - u)}``, i.e. ``P(y = 1) = F(index)``.

    For the logit link the threshold is ``ln(1/u - 1)``.
    """
    index = np.asarray(index, dtype=float)
    u = np.asarray(u, dtype=float)
    if family == "logit":
        thr = np.log(1.0 / u - 1.0)
    else:
        thr = -special.ndtri(u)
    return (index > thr).astype(float)


@dataclass(frozen=True)
class SimDesign:
    """Population for the simulation study.

    ``X`` has shape ``(P, P, K)`` over directed entity pairs; ``mask`` marks
    the pairs that exist (self-pairs never do).  ``alpha``/``gamma`` are the
    true importer/exporter (unit/period) effects.
    """

    beta_true: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    X: np.ndarray
    mask: np.ndarray
    covariate_names: tuple
    sizes: tuple = (50,)
    reps: int = 100
    estimators: tuple = ("fe", "an0")
    seed: int = 0
    family: str = "logit"
    population_M: float | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise InvalidSpec("replications must be >= 1")
        P = len(self.alpha)
        for n in self.sizes:
            if not 2 <= n <= P:
                raise InvalidSpec(f"sample size {n} is outside [2, {P}]")
        for e in self.estimators:
            _parse_estimator(e)

    @property
    def n_entities(self) -> int:
        return len(self.alpha)

    @property
    def M(self) -> float:
        return float(self.mask.sum()) if self.population_M is None else self.population_M


@dataclass(frozen=True)
class MetricRow:
    estimator: str
    N: int
    parameter: str
    bias_pct: float
    sd_pct: float
    rmse_pct: float
    se_sd_ratio: float
    coverage95: float
    n_ok: int
    n_failed: int
    absolute: bool = False


@dataclass
class StudyResult:
    rows: list
    failures: dict = field(default_factory=dict)

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.__dict__ for r in self.rows])


def _parse_estimator(name: str):
    name = name.lower()
    if name == "fe":
        return ("fe", None)
    m = re.fullmatch(r"an-?(\d+)", name)
    if m:
        return ("an", int(m.group(1)))
    if name in JK_VARIANTS:
        return ("jk", name)
    raise InvalidSpec(f"unknown estimator {name!r}; use fe, anL (e.g. an0) or {JK_VARIANTS}")


def synthetic_design(seed: int = 0, n_entities: int = SYNTHETIC_POPULATION,
                     beta=SYNTHETIC_BETA, **kw) -> SimDesign:
    """Population with standard normal effects and ``ldist``, and a lagged-trade dummy.

    ``ltrade`` is drawn once from the static logit model without the
    lagged term, so it is correlated with the effects and ``ldist``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    P = n_entities
    alpha = rng.normal(size=P)
    gamma = rng.normal(size=P)
    ldist = rng.normal(size=(P, P))
    p = special.expit(beta[1] * ldist + alpha[:, None] + gamma[None, :])
    ltrade = (rng.random((P, P)) < p).astype(float)
    mask = ~np.eye(P, dtype=bool)
    X = np.stack([ltrade, ldist], axis=-1) * mask[..., None]
    return SimDesign(beta_true=np.asarray(beta, dtype=float), alpha=alpha, gamma=gamma,
                     X=X, mask=mask, covariate_names=SYNTHETIC_NAMES, seed=seed, **kw)


def calibrated_design(path, **kw) -> SimDesign:
    """Population exported by ``panelfe fit --export-calibration``.

    Entities are the labels that appear both as units and as periods.
    """
    with open(path) as fh:
        doc = json.load(fh)
    ids = [str(v) for v in doc["id"]]
    times = [str(v) for v in doc["time"]]
    ents = sorted(set(ids) & set(times), key=lambda s: (len(s), s))
    pos = {e: k for k, e in enumerate(ents)}
    P, K = len(ents), len(doc["covariate_names"])
    X = np.zeros((P, P, K))
    mask = np.zeros((P, P), dtype=bool)
    alpha, gamma = np.zeros(P), np.zeros(P)
    Xrows = np.asarray(doc["X"], dtype=float)
    for r, (i, t) in enumerate(zip(ids, times)):
        if i in pos and t in pos:
            a, b = pos[i], pos[t]
            X[a, b], mask[a, b] = Xrows[r], True
            alpha[a], gamma[b] = doc["alpha"][r], doc["gamma"][r]
    kw.setdefault("family", doc.get("family", "logit"))
    return SimDesign(beta_true=np.asarray(doc["beta"], dtype=float), alpha=alpha,
                     gamma=gamma, X=X, mask=mask,
                     covariate_names=tuple(doc["covariate_names"]), **kw)


def _replication(args):
    design, N, r = args
    ss = np.random.SeedSequence(design.seed, spawn_key=(N, r))
    rng = np.random.default_rng(ss)
    ents = np.sort(rng.choice(design.n_entities, size=N, replace=False))
    X = design.X[np.ix_(ents, ents)]
    mask = design.mask[np.ix_(ents, ents)]
    a, g = design.alpha[ents], design.gamma[ents]
    index = np.einsum("itk,k->it", X, design.beta_true) + a[:, None] + g[None, :]
    u = rng.random((N, N))
    y = simulate_outcome(index, u, design.family)

    i, t = np.nonzero(mask)
    panel = PanelData.from_long(ents[i], ents[t], y[i, t], X[i, t],
                                covariate_names=design.covariate_names)
    # truth APEs use every sampled pair, before any drops
    truth_pe = partial_effects(design.beta_true, a, g, panel, design.family)
    truth = np.concatenate([design.beta_true, truth_pe.delta])

    out = {}
    base = ModelSpec(family=design.family, correction="none")
    try:
        work = prepare(panel, base)
        fit = fit_mle(work, base)
        pi = plug_in(fit)
        se_b = np.sqrt(np.diag(vcov_beta(pi.W, work.N, work.T)))
        fpc = fpc_factor(design.M, work.n_obs)
        Va, _ = ape_vcov(pi, work.mask, fpc)
        se = np.concatenate([se_b, np.sqrt(np.diag(Va))])
        fe = np.concatenate([fit.beta, pi.pe.delta])
    except (PanelFEError, np.linalg.LinAlgError):
        return truth, {e: None for e in design.estimators}
    for name in design.estimators:
        kind, arg = _parse_estimator(name)
        try:
            if kind == "fe":
                est = fe
            elif kind == "an":
                spec = ModelSpec(family=design.family, correction="analytical", lags_L=arg)
                b, d, _ = analytical_correct(replace(fit, spec=spec), pi=pi)
                est = np.concatenate([b, d])
            else:
                spec = ModelSpec(family=design.family, correction="jackknife", jk_variant=arg)
                jk = jackknife_correct(replace(fit, spec=spec), seed=design.seed,
                                       delta_hat=pi.pe.delta)
                est = np.concatenate([jk.beta, jk.delta])
            out[name] = (est, se)
        except (PanelFEError, np.linalg.LinAlgError):
            out[name] = None
    return truth, out


def _metrics(name, N, params, truths, results) -> list:
    ok = [k for k, r in enumerate(results) if r is not None]
    rows = []
    if not ok:
        for p in params:
            rows.append(MetricRow(name, N, p, *([math.nan] * 5), 0, len(results)))
        return rows
    est = np.array([results[k][0] for k in ok])
    se = np.array([results[k][1] for k in ok])
    th = truths[ok]
    for j, p in enumerate(params):
        absolute = bool(np.any(th[:, j] == 0))
        scale = np.ones(len(ok)) if absolute else th[:, j]
        e = (est[:, j] - th[:, j]) / scale
        s = se[:, j] / np.abs(scale)
        sd = float(np.std(e, ddof=1)) if len(ok) > 1 else math.nan
        cover = float(np.mean(np.abs(est[:, j] - th[:, j]) <= Z_95 * se[:, j]))
        rows.append(MetricRow(
            estimator=name, N=N, parameter=p, bias_pct=100 * float(e.mean()),
            sd_pct=100 * sd, rmse_pct=100 * float(np.sqrt(np.mean(e ** 2))),
            se_sd_ratio=float(s.mean()) / sd if sd > 0 else math.nan, coverage95=cover,
            n_ok=len(ok), n_failed=len(results) - len(ok), absolute=absolute))
    return rows


def run_study(design: SimDesign, jobs: int = 1) -> StudyResult:
    """Run all replications and aggregate per (size, estimator, parameter)."""
    params = [f"b:{n}" for n in design.covariate_names] + \
             [f"ape:{n}" for n in design.covariate_names]
    rows, failures = [], {}
    for N in design.sizes:
        tasks = [(design, N, r) for r in range(design.reps)]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as ex:
                reps = list(ex.map(_replication, tasks))
        else:
            reps = [_replication(t) for t in tasks]
        truths = np.array([t for t, _ in reps])
        for name in design.estimators:
            res = [o[name] for _, o in reps]
            failures[(N, name)] = sum(r is None for r in res)
            rows += _metrics(name, N, params, truths, res)
    return StudyResult(rows=rows, failures=failures)


def format_table(result: StudyResult) -> str:
    """Text table with one block per estimator and rows by sample size."""
    df = result.frame()
    lines = []
    head = f"{'N':>5} {'parameter':<16}{'Bias':>9}{'Std.Dev.':>10}{'RMSE':>9}" \
           f"{'SE/SD':>8}{'p;.95':>8}"
    for name in dict.fromkeys(df["estimator"]):
        lines += [f"Estimator: {name}", head]
        for r in df[df["estimator"] == name].itertuples():
            flag = " (abs)" if r.absolute else ""
            lines.append(f"{r.N:>5} {r.parameter + flag:<16}{r.bias_pct:>9.2f}{r.sd_pct:>10.2f}"
                         f"{r.rmse_pct:>9.2f}{r.se_sd_ratio:>8.2f}{r.coverage95:>8.3f}")
        lines.append("")
    fails = {k: v for k, v in result.failures.items() if v}
    if fails:
        lines.append("Failed replications: " + ", ".join(
            f"{e} N={n}: {v}" for (n, e), v in fails.items()))
    else:
        lines.append("Failed replications: none")
    return "\n".join(lines)
