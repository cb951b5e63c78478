"""Split-panel and delete-one jackknife bias corrections.

Subpanel averages are keyed by the dimensions they keep:

=========  ==========================================================
``N/2,T/2``  four quadrants (half of the units, half of the periods)
``N,T/2``    all units, each half of the periods
``N/2,T``    each half of the units, all periods
``N-1,T``    leave one unit out
``N,T-1``    leave one period out
``N-1,N-1``  leave one entity out of both dimensions
=========  ==========================================================
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .ape import partial_effects
from .data import DropLog, PanelData
from .errors import DoubleRequiresSquarePanel, PanelFEError, VariantInputMissing
from .estimator import FitResult, ModelSpec, fit_mle, prepare

HALF_NT = "N/2,T/2"
FULL_N_HALF_T = "N,T/2"
HALF_N_FULL_T = "N/2,T"
LOO_N = "N-1,T"
LOO_T = "N,T-1"
LOO_BOTH = "N-1,N-1"

_TWO_WAY = {
    "ss1": (HALF_NT,),
    "ss2": (FULL_N_HALF_T, HALF_N_FULL_T),
    "js": (LOO_N, FULL_N_HALF_T),
    "sj": (HALF_N_FULL_T, LOO_T),
    "jj": (LOO_N, LOO_T),
    "double": (LOO_BOTH,),
}
# one-way corrections: split-panel vs delete-one groups of variants
_SPLIT_WHEN_I = ("ss1", "ss2", "sj")
_SPLIT_WHEN_T = ("ss1", "ss2", "js")


@dataclass(frozen=True)
class SubFit:
    key: str
    units: tuple
    periods: tuple
    beta: np.ndarray
    delta: np.ndarray
    drop_log: DropLog


@dataclass
class JackknifeResult:
    beta: np.ndarray
    delta: np.ndarray
    variant: str
    subfits: list = field(default_factory=list)

    @property
    def n_dropped_units(self) -> int:
        return sum(s.drop_log.n_units_dropped for s in self.subfits)


def required_keys(variant: str, individual: bool = True, time: bool = True) -> tuple:
    """Subpanel averages needed by ``variant``.

    ``individual``/``time`` select which bias is removed: the one from
    estimating unit effects (order 1/T) and/or period effects (order 1/N).
    """
    if variant not in _TWO_WAY:
        raise ValueError(f"unknown jackknife variant {variant!r}")
    if individual and time:
        return _TWO_WAY[variant]
    if individual:
        return (FULL_N_HALF_T,) if variant in _SPLIT_WHEN_I else (LOO_T,)
    if time:
        return (HALF_N_FULL_T,) if variant in _SPLIT_WHEN_T else (LOO_N,)
    return ()


def combine(variant: str, full, subs: dict, n_units: int, n_periods: int,
            individual: bool = True, time: bool = True):
    """Linear combination of the full-panel estimate and subpanel averages."""
    keys = required_keys(variant, individual, time)
    missing = [k for k in keys if k not in subs]
    if missing:
        raise VariantInputMissing(f"{variant} needs subpanel averages {missing}")
    N, T = n_units, n_periods
    s = subs
    if not keys:
        return full
    if individual and time:
        if variant == "ss1":
            return 2 * full - s[HALF_NT]
        if variant == "ss2":
            return 3 * full - s[FULL_N_HALF_T] - s[HALF_N_FULL_T]
        if variant == "js":
            return (N + 1) * full - (N - 1) * s[LOO_N] - s[FULL_N_HALF_T]
        if variant == "sj":
            return (T + 1) * full - s[HALF_N_FULL_T] - (T - 1) * s[LOO_T]
        if variant == "jj":
            return (N + T - 1) * full - (N - 1) * s[LOO_N] - (T - 1) * s[LOO_T]
        return N * full - (N - 1) * s[LOO_BOTH]
    (key,) = keys
    if key in (FULL_N_HALF_T, HALF_N_FULL_T):
        return 2 * full - s[key]
    if key == LOO_T:
        return T * full - (T - 1) * s[key]
    return N * full - (N - 1) * s[key]


def coefficients(variant: str, n_units: int, n_periods: int,
                 individual: bool = True, time: bool = True) -> dict:
    """Weights on ``full`` and each subpanel average (they sum to one)."""
    keys = required_keys(variant, individual, time)
    out = {"full": combine(variant, 1.0, {k: 0.0 for k in keys}, n_units, n_periods,
                           individual, time)}
    for k in keys:
        out[k] = combine(variant, 0.0, {j: float(j == k) for j in keys}, n_units,
                         n_periods, individual, time)
    return out


def _halves(order: np.ndarray):
    n = len(order)
    return order[: -(-n // 2)], order[n // 2:]


def double_entities(panel: PanelData) -> list:
    """Entity labels (as str) for the delete-one-entity jackknife.

    Units and periods must index the same entities.  Labels present in only
    one dimension are tolerated when perfect-classification drops explain
    them; each entity is then left out of whichever dimensions hold it.
    """
    ulab = [str(u) for u in panel.unit_labels]
    tlab = {str(p) for p in panel.periods}
    only_one = len(set(ulab) ^ tlab)
    allowed = panel.drop_log.n_units_dropped + panel.drop_log.n_periods_dropped
    if not set(ulab) & tlab or only_one > allowed:
        raise DoubleRequiresSquarePanel(
            "double jackknife needs the same entities as units and as periods")
    return ulab + sorted(tlab - set(ulab))


def plan(panel: PanelData, keys, unit_order=None, period_order=None) -> list:
    """Subpanels ``(key, unit positions, period positions)`` for the requested averages."""
    N, T = panel.N, panel.T
    uo = np.arange(N) if unit_order is None else np.asarray(unit_order)
    to = np.arange(T) if period_order is None else np.asarray(period_order)
    allu, allt = np.arange(N), np.arange(T)
    out = []
    for key in keys:
        if key == HALF_NT:
            out += [(key, u, t) for t in _halves(to) for u in _halves(uo)]
        elif key == FULL_N_HALF_T:
            out += [(key, allu, t) for t in _halves(to)]
        elif key == HALF_N_FULL_T:
            out += [(key, u, allt) for u in _halves(uo)]
        elif key == LOO_N:
            out += [(key, np.delete(allu, i), allt) for i in range(N)]
        elif key == LOO_T:
            out += [(key, allu, np.delete(allt, t)) for t in range(T)]
        elif key == LOO_BOTH:
            upos = {str(u): i for i, u in enumerate(panel.unit_labels)}
            tpos = {str(p): c for c, p in enumerate(panel.periods)}
            for lab in double_entities(panel):
                u = np.delete(allu, upos[lab]) if lab in upos else allu
                t = np.delete(allt, tpos[lab]) if lab in tpos else allt
                out.append((key, u, t))
        else:
            raise ValueError(key)
    return out


def subpanel_fit(panel: PanelData, spec: ModelSpec, units, periods,
                 start: FitResult | None = None, key: str = "") -> SubFit:
    """Fit on the observed cells of ``units x periods`` (positions in ``panel``)."""
    units, periods = np.asarray(units), np.asarray(periods)
    ident = (f"subpanel {key} with {len(units)} units and {len(periods)} periods"
             if key else "subpanel")
    try:
        sub = panel.subset(units, periods)
        before = sub.drop_log
        sub = prepare(sub, spec)
        warm = None
        if start is not None:
            upos = {u: k for k, u in enumerate(panel.unit_labels)}
            tpos = {int(p): c for c, p in enumerate(panel.periods)}
            warm = (start.beta,
                    start.alpha[[upos[u] for u in sub.unit_labels]],
                    start.gamma[[tpos[int(p)] for p in sub.periods]])
        fit = fit_mle(sub, spec, start=warm)
    except PanelFEError as exc:
        raise type(exc)(f"{ident}: {exc}") from exc
    pe = partial_effects(fit.beta, fit.alpha, fit.gamma, sub, spec.family)
    log = DropLog(sub.drop_log.n_obs_dropped - before.n_obs_dropped,
                  sub.drop_log.n_units_dropped - before.n_units_dropped,
                  sub.drop_log.n_periods_dropped - before.n_periods_dropped)
    return SubFit(key=key, units=tuple(panel.unit_labels[i] for i in units),
                  periods=tuple(int(panel.periods[t]) for t in periods),
                  beta=fit.beta, delta=pe.delta, drop_log=log)


def _run(args):
    return subpanel_fit(*args)


def _fit_all(panel, spec, tasks, start, jobs):
    args = [(panel, spec, u, t, start, key) for key, u, t in tasks]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_run, args, chunksize=max(1, len(args) // (4 * jobs))))
    return [_run(a) for a in args]


def _averages(subfits) -> tuple[dict, dict]:
    beta, delta = {}, {}
    for key in dict.fromkeys(s.key for s in subfits):
        group = [s for s in subfits if s.key == key]
        beta[key] = np.mean([s.beta for s in group], axis=0)
        delta[key] = np.mean([s.delta for s in group], axis=0)
    return beta, delta


def jackknife_correct(fit: FitResult, seed: int = 0, jobs: int = 1,
                      delta_hat: np.ndarray | None = None) -> JackknifeResult:
    """Jackknife-corrected coefficients and APEs for a fitted model."""
    panel, spec = fit.panel, fit.spec
    variant = spec.jk_variant
    ind, tim = spec.corrects_i, spec.corrects_t
    keys = required_keys(variant, ind, tim)
    if delta_hat is None:
        delta_hat = partial_effects(fit.beta, fit.alpha, fit.gamma, panel, spec.family).delta

    if spec.multiple_m > 0 and variant in ("ss1", "ss2"):
        orders = []
        for r in range(spec.multiple_m):
            rng = np.random.default_rng([seed, r])
            uo = (rng.permutation(panel.N) if spec.multiple_dim in ("individuals", "both")
                  else np.arange(panel.N))
            to = (rng.permutation(panel.T) if spec.multiple_dim in ("time", "both")
                  else np.arange(panel.T))
            orders.append((uo, to))
    else:
        orders = [(None, None)]

    n_u, n_t = panel.N, panel.T
    if LOO_BOTH in keys:
        n_u = len(double_entities(panel))
    betas, deltas, all_subs = [], [], []
    for uo, to in orders:
        subs = _fit_all(panel, spec, plan(panel, keys, uo, to), fit, jobs)
        b_avg, d_avg = _averages(subs)
        betas.append(combine(variant, fit.beta, b_avg, n_u, n_t, ind, tim))
        deltas.append(combine(variant, delta_hat, d_avg, n_u, n_t, ind, tim))
        all_subs += subs
    return JackknifeResult(beta=np.mean(betas, axis=0), delta=np.mean(deltas, axis=0),
                           variant=variant, subfits=all_subs)
