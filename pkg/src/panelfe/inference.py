"""Standard errors for coefficients and APEs, and likelihood-ratio statistics."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .analytical import PlugIn
from .errors import InvalidSpec, SingularW
from .estimator import FitResult

Z_95 = 1.959964


@dataclass(frozen=True)
class InferenceResult:
    se_beta: np.ndarray
    vcov_beta: np.ndarray
    se_ape: np.ndarray
    vcov_ape: np.ndarray
    se_ape_nofpc: np.ndarray
    fpc: float
    lr_chi2: float
    p_value: float
    pseudo_r2: float
    Gamma: np.ndarray
    D_beta_Delta: np.ndarray
    n_clamped: int


def fpc_factor(population_M: float, m: int) -> float:
    """Finite population factor ``(M - m) / (M - 1)``; 1 for an infinite population."""
    if math.isinf(population_M):
        return 1.0
    if population_M < m:
        raise InvalidSpec(f"population ({population_M:g}) is smaller than the sample size ({m})")
    if population_M == 1:
        return 0.0
    return (population_M - m) / (population_M - 1)


def vcov_beta(W: np.ndarray, n_units: int, n_periods: int) -> np.ndarray:
    try:
        Winv = np.linalg.inv(W)
    except np.linalg.LinAlgError as exc:
        raise SingularW("W is singular") from exc
    return Winv / (n_units * n_periods)


def se_beta(W: np.ndarray, n_units: int, n_periods: int) -> np.ndarray:
    return np.sqrt(np.diag(vcov_beta(W, n_units, n_periods)))


def ape_influence(pi: PlugIn, n_units: int, n_periods: int):
    """Estimation-noise influence values ``Gamma`` (N, T, K) and ``D_beta Delta`` (K, K).

    ``D_beta Delta`` is the total derivative of the APEs in ``beta`` once the
    effects are profiled out: the derivative at fixed effects minus the index
    channel through the effects' response, ``d_pi * (X - Xt)``.
    """
    lead = pi.link.H * pi.resid
    Dbeta = (pi.pe.d_beta.sum(axis=(0, 1))
             - np.einsum("itk,itl->kl", pi.pe.d_pi, pi.Xi)) / (n_units * n_periods)
    A = np.linalg.solve(pi.W.T, Dbeta.T).T          # Dbeta @ W^-1
    Gamma = (np.einsum("kl,itl->itk", A, pi.Xt) - pi.Psi) * lead[..., None]
    return Gamma, Dbeta


def ape_vcov(pi: PlugIn, mask: np.ndarray, fpc: float):
    """APE variance matrix with the sampling terms scaled by ``fpc``.

    Returns ``(V, n_clamped)``; negative eigenvalues, which can only come
    from the fpc-weighted sampling terms in tiny samples, are set to zero.
    """
    N, T = mask.shape
    n = int(mask.sum())
    Dt = (pi.pe.Delta - pi.pe.delta) * mask[..., None]
    S = Dt.sum(axis=1)
    C = Dt.sum(axis=0)
    sampling = S.T @ S + C.T @ C - np.einsum("itk,itl->kl", Dt, Dt)
    Gamma, _ = ape_influence(pi, N, T)
    noise = np.einsum("itk,itl->kl", Gamma, Gamma)
    V = (fpc * sampling + noise) / n**2
    V = 0.5 * (V + V.T)
    ev, U = np.linalg.eigh(V)
    n_clamped = int((ev < 0).sum())
    if n_clamped:
        warnings.warn(f"{n_clamped} negative APE variance eigenvalue(s) clamped at zero")
        V = (U * np.maximum(ev, 0.0)) @ U.T
    return V, n_clamped


def lr_and_fit_stats(fit: FitResult):
    lr = 2.0 * (fit.loglik - fit.loglik_null)
    p = float(stats.chi2.sf(lr, fit.panel.K)) if lr > 0 else 1.0
    r2 = 1.0 - fit.loglik / fit.loglik_null if fit.loglik_null != 0 else 0.0
    return lr, p, r2


def numerical_rank(V: np.ndarray, rtol: float = 1e-10) -> int:
    sv = np.linalg.svd(V, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        return 0
    return int((sv > rtol * sv[0]).sum())


def infer(fit: FitResult, pi: PlugIn) -> InferenceResult:
    panel = fit.panel
    Vb = vcov_beta(pi.W, panel.N, panel.T)
    fpc = fpc_factor(fit.spec.population_M, panel.n_obs)
    Va, n_clamped = ape_vcov(pi, panel.mask, fpc)
    Va1 = Va if fpc == 1.0 else ape_vcov(pi, panel.mask, 1.0)[0]
    Gamma, Dbeta = ape_influence(pi, panel.N, panel.T)
    lr, p, r2 = lr_and_fit_stats(fit)
    return InferenceResult(
        se_beta=np.sqrt(np.diag(Vb)), vcov_beta=Vb, se_ape=np.sqrt(np.diag(Va)),
        vcov_ape=Va, se_ape_nofpc=np.sqrt(np.diag(Va1)), fpc=fpc, lr_chi2=lr,
        p_value=p, pseudo_r2=r2, Gamma=Gamma, D_beta_Delta=Dbeta, n_clamped=n_clamped)
