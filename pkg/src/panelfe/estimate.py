"""End-to-end estimation: fit, bias correction and inference."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytical import BiasComponents, analytical_correct, lag_sweep, plug_in
from .data import PanelData
from .errors import LTooLarge
from .estimator import FitResult, ModelSpec, fit_mle, prepare
from .inference import InferenceResult, infer
from .jackknife import JackknifeResult, jackknife_correct


@dataclass
class CorrectedEstimates:
    """Corrected ``beta``/``delta`` with the uncorrected fit they came from.

    Standard errors in ``inference`` are computed at the uncorrected fit
    and apply to every estimator.
    """

    beta: np.ndarray
    delta: np.ndarray
    beta_fe: np.ndarray
    delta_fe: np.ndarray
    fit: FitResult
    inference: InferenceResult
    components: BiasComponents | None = None
    jackknife: JackknifeResult | None = None
    lag_sweep: dict | None = None


def estimate(panel: PanelData, spec: ModelSpec, seed: int = 0, jobs: int = 1,
             tol: float = 1e-8, max_iter: int = 200,
             lag_sweep_max: int | None = None) -> CorrectedEstimates:
    """Fit ``spec`` on ``panel`` and apply the requested correction."""
    work = prepare(panel, spec)
    if spec.correction == "analytical" and spec.lags_L > work.T - 1:
        raise LTooLarge(f"lags({spec.lags_L}) exceeds the number of periods minus one "
                        f"({work.T - 1})")
    fit = fit_mle(work, spec, tol=tol, max_iter=max_iter)
    pi = plug_in(fit)
    inf = infer(fit, pi)
    delta_fe = pi.pe.delta
    out = CorrectedEstimates(beta=fit.beta, delta=delta_fe, beta_fe=fit.beta,
                             delta_fe=delta_fe, fit=fit, inference=inf)
    if spec.correction == "analytical":
        out.beta, out.delta, out.components = analytical_correct(fit, pi=pi)
    elif spec.correction == "jackknife":
        jk = jackknife_correct(fit, seed=seed, jobs=jobs, delta_hat=delta_fe)
        out.beta, out.delta, out.jackknife = jk.beta, jk.delta, jk
    if lag_sweep_max is not None:
        if lag_sweep_max > work.T - 1:
            raise LTooLarge(f"lag sweep up to {lag_sweep_max} exceeds the number of periods "
                            f"minus one ({work.T - 1})")
        out.lag_sweep = lag_sweep(fit, lag_sweep_max)
    return out

