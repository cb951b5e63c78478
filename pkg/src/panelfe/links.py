"""Probit and logit link kernels.

Every function is vectorized over the index ``z``.  Probit quantities that
involve ratios of tail probabilities (``H``, ``omega``, inverse Mills
ratios) are evaluated in log space so they stay finite for large ``|z|``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

FAMILIES = ("probit", "logit")
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class LinkBundle:
    F: np.ndarray
    dF: np.ndarray
    d2F: np.ndarray
    d3F: np.ndarray
    H: np.ndarray
    omega: np.ndarray


def _check(family: str) -> None:
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}, got {family!r}")


def _log_phi(z):
    return -0.5 * z * z - _LOG_SQRT_2PI


def cdf(z, family: str):
    _check(family)
    return special.expit(z) if family == "logit" else special.ndtr(z)


def pdf(z, family: str):
    _check(family)
    if family == "logit":
        return special.expit(z) * special.expit(-z)
    return np.exp(_log_phi(np.asarray(z, dtype=float)))


def ppf(p, family: str):
    _check(family)
    return special.logit(p) if family == "logit" else special.ndtri(p)


def link_eval(z, family: str) -> LinkBundle:
    """F, its first three derivatives, ``H = dF / (F (1 - F))`` and ``omega = H dF``."""
    _check(family)
    z = np.asarray(z, dtype=float)
    if family == "logit":
        F = special.expit(z)
        dF = F * special.expit(-z)
        s = 1.0 - 2.0 * F
        return LinkBundle(F=F, dF=dF, d2F=dF * s, d3F=dF * (s * s - 2.0 * dF),
                          H=np.ones_like(z), omega=dF)
    lphi = _log_phi(z)
    lF, lS = special.log_ndtr(z), special.log_ndtr(-z)
    phi = np.exp(lphi)
    return LinkBundle(F=special.ndtr(z), dF=phi, d2F=-z * phi, d3F=(z * z - 1.0) * phi,
                      H=np.exp(lphi - lF - lS), omega=np.exp(2.0 * lphi - lF - lS))


def loglik_obs(y, z, family: str):
    """``y log F(z) + (1 - y) log(1 - F(z))`` evaluated without forming F."""
    _check(family)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    u = (2.0 * y - 1.0) * z
    return special.log_expit(u) if family == "logit" else special.log_ndtr(u)


def loglik_derivs(y, z, family: str):
    """Log-likelihood contribution and its first two derivatives in the index."""
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if family == "logit":
        ll = special.log_expit((2.0 * y - 1.0) * z)
        F = special.expit(z)
        return ll, y - F, -F * special.expit(-z)
    _check(family)
    q = 2.0 * y - 1.0
    u = q * z
    lF = special.log_ndtr(u)
    lam = np.exp(_log_phi(u) - lF)
    return lF, q * lam, -lam * (u + lam)
