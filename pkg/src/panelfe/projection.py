"""Weighted least-squares projection on unit and/or period effects."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotConverged

MODES = ("i", "t", "both")
WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True)
class ProjectionResult:
    fitted: np.ndarray
    residual: np.ndarray
    converged: bool
    iterations: int = 0


def mode_for(include_i: bool, include_t: bool) -> str:
    if include_i and include_t:
        return "both"
    return "i" if include_i else "t"


def weighted_residualize(values, weights, mask, mode: str = "both",
                         tol: float = 1e-10, max_iter: int = 10000) -> ProjectionResult:
    """Residualize ``values`` on ``a_i + b_t`` under weights ``weights``.

    Minimizes ``sum_it w_it (V_it - a_i - b_t)^2`` over observed cells by
    alternating weighted demeaning.  ``values`` has shape ``(N, T)`` or
    ``(N, T, K)``; each trailing column is projected separately.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    V = np.asarray(values, dtype=float)
    squeeze = V.ndim == 2
    if squeeze:
        V = V[..., None]
    m = np.asarray(mask, dtype=bool)
    w = np.where(m, np.maximum(weights, WEIGHT_FLOOR), 0.0)
    V = np.where(m[..., None], V, 0.0)
    wV = w[..., None] * V
    sw_i = w.sum(axis=1)[:, None]
    sw_t = w.sum(axis=0)[:, None]

    a = np.zeros((V.shape[0], V.shape[2]))
    b = np.zeros((V.shape[1], V.shape[2]))
    it, converged = 0, True
    if mode == "i":
        a = wV.sum(axis=1) / sw_i
    elif mode == "t":
        b = wV.sum(axis=0) / sw_t
    else:
        scale = max(1.0, float(np.abs(V).max(initial=0.0)))
        wVi = wV.sum(axis=1)
        wVt = wV.sum(axis=0)
        converged = False
        for it in range(1, max_iter + 1):
            a_new = (wVi - np.einsum("it,tk->ik", w, b)) / sw_i
            b_new = (wVt - np.einsum("it,ik->tk", w, a_new)) / sw_t
            change = max(np.abs(a_new - a).max(initial=0.0), np.abs(b_new - b).max(initial=0.0))
            a, b = a_new, b_new
            if change <= tol * scale:
                converged = True
                break
        if not converged:
            raise NotConverged(f"weighted projection did not converge in {max_iter} sweeps")
    fitted = (a[:, None, :] + b[None, :, :]) * m[..., None]
    resid = V - fitted
    if squeeze:
        fitted, resid = fitted[..., 0], resid[..., 0]
    return ProjectionResult(fitted=fitted, residual=resid, converged=converged, iterations=it)
