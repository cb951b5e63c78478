"""Partial effects, their index derivatives, and average partial effects."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import links
from .data import PanelData
from .estimator import ModelSpec, linear_index, profile_effects


@dataclass(frozen=True)
class PartialEffects:
    """Per-observation partial effects ``Delta`` (shape ``(N, T, K)``).

    ``d_pi`` and ``d2_pi`` are the first and second derivatives of
    ``Delta`` with respect to a common shift of the index, which is how the
    unit and period effects enter.  ``d_beta[..., k, l]`` is the derivative
    of ``Delta[..., k]`` with respect to ``beta[l]`` holding the effects
    fixed.  ``delta`` averages ``Delta`` over the observed cells.
    """

    Delta: np.ndarray
    d_pi: np.ndarray
    d2_pi: np.ndarray
    delta: np.ndarray
    d_beta: np.ndarray


def partial_effects(beta, alpha, gamma, panel: PanelData, family: str,
                    binary: np.ndarray | None = None) -> PartialEffects:
    beta = np.asarray(beta, dtype=float)
    binary = panel.binary_mask if binary is None else np.asarray(binary, dtype=bool)
    z = linear_index(panel, beta, alpha, gamma)
    m = panel.mask
    K = panel.K
    Delta = np.zeros(z.shape + (K,))
    d1 = np.zeros_like(Delta)
    d2 = np.zeros_like(Delta)

    own = np.zeros_like(Delta)  # d Delta_k / d beta_k beyond the index channel

    cont = ~binary
    if cont.any():
        lb = links.link_eval(z, family)
        b = beta[cont]
        Delta[..., cont] = lb.dF[..., None] * b
        d1[..., cont] = lb.d2F[..., None] * b
        d2[..., cont] = lb.d3F[..., None] * b
        own[..., cont] = lb.dF[..., None]
    for k in np.flatnonzero(binary):
        z0 = z - panel.X[..., k] * beta[k]
        l1 = links.link_eval(z0 + beta[k], family)
        l0 = links.link_eval(z0, family)
        Delta[..., k] = l1.F - l0.F
        d1[..., k] = l1.dF - l0.dF
        d2[..., k] = l1.d2F - l0.d2F
        # x_k is switched rather than multiplied by beta_k
        own[..., k] = l1.dF - d1[..., k] * panel.X[..., k]

    mk = m[..., None]
    Delta, d1, d2, own = Delta * mk, d1 * mk, d2 * mk, own * mk
    d_beta = d1[..., :, None] * panel.X[..., None, :] * mk[..., None]
    idx = np.arange(K)
    d_beta[..., idx, idx] += own
    delta = Delta.sum(axis=(0, 1)) / m.sum()
    return PartialEffects(Delta=Delta, d_pi=d1, d2_pi=d2, delta=delta, d_beta=d_beta)


def ape_at(beta, panel: PanelData, spec: ModelSpec, start: tuple | None = None):
    """Re-profile the effects at ``beta`` and evaluate partial effects there.

    Returns ``(PartialEffects, alpha, gamma)``.
    """
    alpha, gamma = profile_effects(beta, panel, spec, start=start)
    return partial_effects(beta, alpha, gamma, panel, spec.family), alpha, gamma
