"""Fixed-effect maximum likelihood for probit/logit panels.

The likelihood is maximized by a blockwise concentrated Newton method:
the effects are profiled out by alternating one-dimensional Newton sweeps
over units and periods, and ``beta`` takes Newton steps on the profile
likelihood using the weighted within-projection of ``X`` as curvature.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import links
from .data import PanelData, drop_perfect_classification
from .errors import CollinearCovariates, EmptyAfterDrop, InvalidSpec, NotConverged
from .projection import mode_for, weighted_residualize

log = logging.getLogger(__name__)

CORRECTIONS = ("none", "analytical", "jackknife")
JK_VARIANTS = ("ss1", "ss2", "js", "sj", "jj", "double")
MULTIPLE_DIMS = ("individuals", "time", "both")


@dataclass(frozen=True)
class ModelSpec:
    family: str = "logit"
    include_ieffects: bool = True
    include_teffects: bool = True
    correction: str = "analytical"
    lags_L: int = 0
    jk_variant: str = "ss2"
    multiple_m: int = 0
    multiple_dim: str = "both"
    ibias: bool = True
    tbias: bool = True
    population_M: float = math.inf

    def __post_init__(self):
        if self.family not in links.FAMILIES:
            raise InvalidSpec(f"family must be one of {links.FAMILIES}")
        if not (self.include_ieffects or self.include_teffects):
            raise InvalidSpec("ieffects(no) together with teffects(no) is invalid")
        if not (self.ibias or self.tbias):
            raise InvalidSpec("ibias(no) together with tbias(no) is invalid")
        if self.correction not in CORRECTIONS:
            raise InvalidSpec(f"correction must be one of {CORRECTIONS}")
        if self.jk_variant not in JK_VARIANTS:
            raise InvalidSpec(f"jackknife variant must be one of {JK_VARIANTS}")
        if self.multiple_dim not in MULTIPLE_DIMS:
            raise InvalidSpec(f"multiple_dim must be one of {MULTIPLE_DIMS}")
        if self.lags_L < 0 or self.multiple_m < 0:
            raise InvalidSpec("lags and multiple must be nonnegative")
        if not self.population_M >= 1:
            raise InvalidSpec("population must be a positive integer")

    @property
    def mode(self) -> str:
        return mode_for(self.include_ieffects, self.include_teffects)

    @property
    def corrects_i(self) -> bool:
        """Whether the bias from estimating unit effects is corrected."""
        return self.include_ieffects and self.ibias

    @property
    def corrects_t(self) -> bool:
        return self.include_teffects and self.tbias


@dataclass
class FitResult:
    beta: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    loglik: float
    loglik_null: float
    iterations: int
    converged: bool
    panel: PanelData
    spec: ModelSpec
    loglik_path: list = field(default_factory=list)

    def index(self) -> np.ndarray:
        return linear_index(self.panel, self.beta, self.alpha, self.gamma)


def linear_index(panel: PanelData, beta, alpha, gamma) -> np.ndarray:
    return np.einsum("itk,k->it", panel.X, beta) + alpha[:, None] + gamma[None, :]


def prepare(panel: PanelData, spec: ModelSpec) -> PanelData:
    """Drop perfectly classified units/periods and check the panel is estimable."""
    out = drop_perfect_classification(panel, spec.include_ieffects, spec.include_teffects)
    if spec.include_ieffects and out.N < 2:
        raise EmptyAfterDrop("fewer than two units left after drops")
    if spec.include_teffects and out.T < 2:
        raise EmptyAfterDrop("fewer than two periods left after drops")
    return out


def loglik_null(panel: PanelData, family: str | None = None) -> float:
    """Maximized log-likelihood of the constant-only model (any monotone link)."""
    n = panel.n_obs
    ybar = float(panel.y[panel.mask].mean())
    return float(n * (special.xlogy(ybar, ybar) + special.xlogy(1 - ybar, 1 - ybar)))


# an observed index this large means a fitted probability of one to machine precision
_DIVERGED = 60.0


class _Diverged(NotConverged):
    pass


class _Effects:
    """Inner solver state: effects, index and masked likelihood derivatives."""

    def __init__(self, panel, family, xb, alpha, gamma, inc_i, inc_t):
        self.y, self.m = panel.y, panel.mask
        self.family = family
        self.xb = xb
        self.alpha, self.gamma = alpha.copy(), gamma.copy()
        self.inc_i, self.inc_t = inc_i, inc_t
        self._eval(self.xb + self.alpha[:, None] + self.gamma[None, :])

    def _derivs(self, z):
        ll, s, h = links.loglik_derivs(self.y, z, self.family)
        m = self.m
        return np.where(m, ll, 0.0), np.where(m, s, 0.0), np.where(m, h, 0.0)

    def _eval(self, z):
        self.z = z
        self.ll, self.s, self.h = self._derivs(z)

    def _update(self, axis: int) -> None:
        # axis=1: unit effects (sum over periods); axis=0: period effects
        g = self.s.sum(axis=axis)
        c = -self.h.sum(axis=axis)
        c = np.where(c > 0, c, 1.0)
        step = g / c
        f_old = self.ll.sum(axis=axis)
        shape = (-1, 1) if axis == 1 else (1, -1)
        for _ in range(31):
            z = self.z + step.reshape(shape)
            ll, s, h = self._derivs(z)
            f_new = ll.sum(axis=axis)
            bad = f_new < f_old - 1e-12 * (1.0 + np.abs(f_old))
            if not bad.any():
                break
            step = np.where(bad, 0.5 * step, step)
        else:
            step = np.where(bad, 0.0, step)
            z = self.z + step.reshape(shape)
            ll, s, h = self._derivs(z)
        if axis == 1:
            self.alpha += step
        else:
            self.gamma += step
        self.z, self.ll, self.s, self.h = z, ll, s, h

    def score_norm(self) -> float:
        out = 0.0
        if self.inc_i:
            out = max(out, np.abs(self.s.sum(axis=1)).max())
        if self.inc_t:
            out = max(out, np.abs(self.s.sum(axis=0)).max())
        return out

    def solve(self, tol: float, max_sweeps: int, min_sweeps: int = 0) -> int:
        for sweep in range(max_sweeps + 1):
            if sweep >= min_sweeps and self.score_norm() < tol:
                return sweep
            if np.abs(np.where(self.m, self.z, 0.0)).max() > _DIVERGED:
                raise _Diverged("fixed effects diverge (quasi-complete separation)")
            if self.inc_i:
                self._update(1)
            if self.inc_t:
                self._update(0)
        raise NotConverged(f"effect sweeps did not converge in {max_sweeps} sweeps")

    @property
    def loglik(self) -> float:
        return float(self.ll.sum())


def _start_effects(panel: PanelData, spec: ModelSpec):
    m = panel.mask
    alpha, gamma = np.zeros(panel.N), np.zeros(panel.T)
    if spec.include_ieffects:
        ybar = (panel.y * m).sum(axis=1) / m.sum(axis=1)
        alpha = links.ppf(np.clip(ybar, 0.01, 0.99), spec.family)
    else:
        ybar = (panel.y * m).sum(axis=0) / m.sum(axis=0)
        gamma = links.ppf(np.clip(ybar, 0.01, 0.99), spec.family)
    return alpha, gamma


def _normalize(alpha, gamma, spec: ModelSpec):
    if spec.include_ieffects and spec.include_teffects:
        c = gamma[0]
        return alpha + c, gamma - c
    return alpha, gamma


def _check_rank(W: np.ndarray, panel: PanelData, raw_scale: np.ndarray) -> None:
    d = np.diag(W)
    bad = [panel.covariate_names[k] for k in range(len(d))
           if not d[k] > 1e-10 * max(raw_scale[k], 1e-300)]
    if bad:
        raise CollinearCovariates(
            f"covariate(s) without variation within the fixed effects: {', '.join(bad)}")
    s = np.sqrt(d)
    ev = np.linalg.eigvalsh(W / np.outer(s, s))
    if ev[0] < 1e-10:
        raise CollinearCovariates("covariates are collinear given the fixed effects")


def curvature(panel: PanelData, spec: ModelSpec, z: np.ndarray,
              tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Profile-likelihood curvature ``sum omega Xt Xt'``, with ``omega`` and ``Xt``."""
    omega = np.where(panel.mask, links.link_eval(z, spec.family).omega, 0.0)
    Xt = weighted_residualize(panel.X, omega, panel.mask, spec.mode, tol=tol).residual
    return np.einsum("it,itk,itl->kl", omega, Xt, Xt), omega, Xt


def fit_mle(panel: PanelData, spec: ModelSpec, tol: float = 1e-8, max_iter: int = 200,
            start: tuple | None = None, max_sweeps: int = 10000) -> FitResult:
    """Joint maximum likelihood of ``beta`` and the fixed effects.

    ``panel`` must already be free of perfectly classified units/periods
    (see :func:`prepare`).  ``start`` optionally warm-starts
    ``(beta, alpha, gamma)``.
    """
    fam = spec.family
    inc_i, inc_t = spec.include_ieffects, spec.include_teffects
    if start is None:
        beta = np.zeros(panel.K)
        alpha, gamma = _start_effects(panel, spec)
    else:
        beta, alpha, gamma = (np.asarray(v, dtype=float).copy() for v in start)
    if not inc_i:
        alpha = np.zeros(panel.N)
    if not inc_t:
        gamma = np.zeros(panel.T)

    X = panel.X
    raw_scale = np.einsum("it,itk->k", panel.mask.astype(float), X * X)
    eff = _Effects(panel, fam, np.einsum("itk,k->it", X, beta), alpha, gamma, inc_i, inc_t)
    # effect scores must be well below the beta tolerance for the profile score to be exact
    inner_tol = 1e-3 * tol
    eff.solve(inner_tol, max_sweeps)
    path = [eff.loglik]
    converged = False
    for it in range(1, max_iter + 1):
        g = np.einsum("it,itk->k", eff.s, X)
        W, _, _ = curvature(panel, spec, eff.z)
        try:
            _check_rank(W, panel, raw_scale)
        except CollinearCovariates:
            if it == 1:
                raise
            # the curvature collapses later only when fitted probabilities reach 0 or 1
            raise NotConverged("estimates diverge (quasi-complete separation)") from None
        if np.abs(g).max() < tol:
            converged = True
            break
        step = np.linalg.solve(W, g)
        lam = 1.0
        diverged = False
        for _ in range(31):
            b_try = beta + lam * step
            trial = _Effects(panel, fam, np.einsum("itk,k->it", X, b_try),
                             eff.alpha, eff.gamma, inc_i, inc_t)
            try:
                trial.solve(inner_tol, max_sweeps, min_sweeps=1)
            except _Diverged:
                diverged = True
                lam *= 0.5
                continue
            if trial.loglik >= eff.loglik - 1e-12 * abs(eff.loglik):
                break
            lam *= 0.5
        else:
            if diverged:
                raise NotConverged("estimates diverge (quasi-complete separation)")
            raise NotConverged("line search failed to increase the log-likelihood")
        beta, eff = b_try, trial
        path.append(eff.loglik)
        if np.abs(lam * step).max() < 1e-14 * (1.0 + np.abs(beta).max()):
            converged = True
            break
    if not converged:
        raise NotConverged(f"beta iterations did not converge in {max_iter} iterations")
    alpha, gamma = _normalize(eff.alpha, eff.gamma, spec)
    return FitResult(beta=beta, alpha=alpha, gamma=gamma, loglik=eff.loglik,
                     loglik_null=loglik_null(panel), iterations=it, converged=True,
                     panel=panel, spec=spec, loglik_path=path)


def profile_effects(beta, panel: PanelData, spec: ModelSpec, start: tuple | None = None,
                    tol: float = 1e-11, max_sweeps: int = 10000):
    """Effects maximizing the likelihood at fixed ``beta`` (same normalization as the fit)."""
    beta = np.asarray(beta, dtype=float)
    if start is None:
        alpha, gamma = _start_effects(panel, spec)
    else:
        alpha, gamma = (np.asarray(v, dtype=float) for v in start)
    if not spec.include_ieffects:
        alpha = np.zeros(panel.N)
    if not spec.include_teffects:
        gamma = np.zeros(panel.T)
    eff = _Effects(panel, spec.family, np.einsum("itk,k->it", panel.X, beta), alpha, gamma,
                   spec.include_ieffects, spec.include_teffects)
    eff.solve(tol, max_sweeps)
    return _normalize(eff.alpha, eff.gamma, spec)
