"""Plug-in analytical bias corrections for coefficients and APEs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import links
from .ape import PartialEffects, ape_at, partial_effects
from .data import PanelData, lag_index_pairs
from .errors import LTooLarge, SingularW
from .estimator import FitResult, ModelSpec
from .projection import weighted_residualize


@dataclass(frozen=True)
class PlugIn:
    """Quantities evaluated at the uncorrected fixed-effect estimates.

    ``Xt`` is ``X`` residualized on the included effects under weights
    ``omega`` and ``Xi`` the fitted part; ``Psi``/``Psi_res`` are the fitted value and residual of the
    same projection applied to ``-d_pi / omega`` (one column per covariate).
    """

    z: np.ndarray
    link: links.LinkBundle
    omega: np.ndarray
    resid: np.ndarray
    Xt: np.ndarray
    Xi: np.ndarray
    pe: PartialEffects
    Psi: np.ndarray
    Psi_res: np.ndarray
    W: np.ndarray


@dataclass(frozen=True)
class BiasComponents:
    W_hat: np.ndarray
    B_hat: np.ndarray
    D_hat: np.ndarray
    B_delta_hat: np.ndarray
    D_delta_hat: np.ndarray
    L_used: int


def plug_in(fit: FitResult, tol: float = 1e-12) -> PlugIn:
    panel, spec = fit.panel, fit.spec
    m = panel.mask
    z = fit.index()
    lb = links.link_eval(z, spec.family)
    omega = np.where(m, lb.omega, 0.0)
    resid = np.where(m, panel.y - lb.F, 0.0)
    xproj = weighted_residualize(panel.X, omega, m, spec.mode, tol=tol)
    Xt = xproj.residual
    pe = partial_effects(fit.beta, fit.alpha, fit.gamma, panel, spec.family)
    target = np.where(m[..., None], -pe.d_pi / np.where(m, omega, 1.0)[..., None], 0.0)
    proj = weighted_residualize(target, omega, m, spec.mode, tol=tol)
    W = np.einsum("it,itk,itl->kl", omega, Xt, Xt) / (panel.N * panel.T)
    return PlugIn(z=z, link=lb, omega=omega, resid=resid, Xt=Xt, Xi=xproj.fitted, pe=pe,
                  Psi=proj.fitted, Psi_res=proj.residual, W=W)


def _spectral(panel: PanelData, lead: np.ndarray, lagged: np.ndarray, L: int) -> np.ndarray:
    """Per-unit ``sum_j T_i/count_ij sum_t lead[i, t-j] * lagged[i, t, :]`` over gap-free pairs."""
    out = np.zeros((panel.N, lagged.shape[-1]))
    Ti = panel.mask.sum(axis=1)
    for j in range(1, L + 1):
        ui, cl, cc = lag_index_pairs(panel, j)
        if len(ui) == 0:
            continue
        acc = np.zeros_like(out)
        np.add.at(acc, ui, lead[ui, cl][:, None] * lagged[ui, cc])
        cnt = np.bincount(ui, minlength=panel.N)
        fac = np.where(cnt > 0, Ti / np.maximum(cnt, 1), 0.0)
        out += fac[:, None] * acc
    return out


def bias_components(fit: FitResult, L: int | None = None,
                    pi: PlugIn | None = None) -> BiasComponents:
    panel, spec = fit.panel, fit.spec
    L = spec.lags_L if L is None else L
    if L > panel.T - 1:
        raise LTooLarge(f"lags({L}) exceeds the number of periods minus one ({panel.T - 1})")
    pi = plug_in(fit) if pi is None else pi
    N, T, K = panel.N, panel.T, panel.K
    lb, omega = pi.link, pi.omega
    HF2 = np.where(panel.mask, lb.H * lb.d2F, 0.0)
    a = HF2[..., None] * pi.Xt
    # the APE bias terms are written for the projection of +d_pi/omega,
    # which is -Psi (fitted) and -Psi_res (residual)
    c = pi.pe.d2_pi + pi.Psi * HF2[..., None]

    B = np.zeros(K)
    D = np.zeros(K)
    Bd = np.zeros(K)
    Dd = np.zeros(K)
    if spec.corrects_i:
        den = omega.sum(axis=1)[:, None]
        num_b = a.sum(axis=1)
        num_bd = c.sum(axis=1)
        if L > 0:
            lead = np.where(panel.mask, lb.H * pi.resid, 0.0)
            num_b = num_b + 2.0 * _spectral(panel, lead, omega[..., None] * pi.Xt, L)
            num_bd = num_bd - 2.0 * _spectral(panel, lead, omega[..., None] * pi.Psi_res, L)
        B = -(num_b / den).sum(axis=0) / (2.0 * N)
        Bd = (num_bd / den).sum(axis=0) / (2.0 * N)
    if spec.corrects_t:
        den = omega.sum(axis=0)[:, None]
        D = -(a.sum(axis=0) / den).sum(axis=0) / (2.0 * T)
        Dd = (c.sum(axis=0) / den).sum(axis=0) / (2.0 * T)
    return BiasComponents(W_hat=pi.W, B_hat=B, D_hat=D, B_delta_hat=Bd,
                          D_delta_hat=Dd, L_used=L)


def correct_beta(beta_hat, comps: BiasComponents, n_units: int, n_periods: int) -> np.ndarray:
    try:
        Winv_B = np.linalg.solve(comps.W_hat, comps.B_hat)
        Winv_D = np.linalg.solve(comps.W_hat, comps.D_hat)
    except np.linalg.LinAlgError as exc:
        raise SingularW("W is singular; covariates are collinear given the effects") from exc
    return np.asarray(beta_hat) - Winv_B / n_periods - Winv_D / n_units


def correct_ape(beta_corrected, panel: PanelData, spec: ModelSpec, comps: BiasComponents,
                start: tuple | None = None):
    """APE at the corrected coefficients minus the estimated APE bias.

    Returns ``(delta_corrected, PartialEffects at beta_corrected)``.
    """
    pe, _, _ = ape_at(beta_corrected, panel, spec, start=start)
    corrected = pe.delta - comps.B_delta_hat / panel.T - comps.D_delta_hat / panel.N
    return corrected, pe


def analytical_correct(fit: FitResult, L: int | None = None, pi: PlugIn | None = None):
    """``(beta_A, delta_A, components)`` for a fitted model."""
    comps = bias_components(fit, L, pi)
    beta_a = correct_beta(fit.beta, comps, fit.panel.N, fit.panel.T)
    delta_a, _ = correct_ape(beta_a, fit.panel, fit.spec, comps, start=(fit.alpha, fit.gamma))
    return beta_a, delta_a, comps


def lag_sweep(fit: FitResult, L_max: int) -> dict:
    """Corrected estimates for ``L = 0..L_max`` (robustness check over the trimming lag)."""
    pi = plug_in(fit)
    return {L: analytical_correct(fit, L, pi)[:2] for L in range(L_max + 1)}
