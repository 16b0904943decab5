"""Empirical moment estimates and the prior settings derived from them.

Each curve is smoothed by a GCV-tuned cubic smoothing spline and read off
on a shared evaluation grid.  The cross-curve mean and sample covariance
of those smooths, plus the within-curve residual variance, seed the prior
of both samplers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from gpcurve.css import css_eval, css_gcv
from gpcurve.datagen import FunctionalDataset
from gpcurve.gridutil import check_grid
from gpcurve.kernels import CovarianceModel, MaternParams, fit_matern
from gpcurve.stochastic import SpdMatrix

__all__ = [
    "EmpiricalEstimates",
    "HyperParams",
    "build_hyperparams",
    "empirical_estimates",
]

NOISE_FLOOR = 1e-8


@dataclass
class EmpiricalEstimates:
    """Cross-curve moment estimates on an evaluation grid.

    ``smoothed`` holds the per-curve spline smooths (n x len(grid)) so the
    samplers can reuse them for initialization without refitting.
    """

    grid: np.ndarray
    mu_hat: np.ndarray
    sigma_hat: SpdMatrix
    noise_var_hat: float
    smoothed: np.ndarray
    lambdas: np.ndarray


def empirical_estimates(
    data: FunctionalDataset,
    candidates=None,
    eval_grid=None,
) -> EmpiricalEstimates:
    """Smooth every curve and take cross-curve moments on ``eval_grid``.

    Defaults to the pooled grid.  Needs at least two curves (the sample
    covariance divisor is n - 1) and at least four points per curve.
    """
    n = data.n_curves
    if n < 2:
        raise ValueError(f"need at least 2 curves for a sample covariance, got {n}")
    grid = data.pooled_grid if eval_grid is None else check_grid(eval_grid, "eval_grid")

    smoothed = np.empty((n, grid.size))
    lambdas = np.empty(n)
    noise_terms = np.empty(n)
    for i, curve in enumerate(data.curves):
        if curve.grid.size < 4:
            raise ValueError(
                f"curve {i} has {curve.grid.size} points; smoothing needs at least 4"
            )
        fit, lambdas[i] = css_gcv(curve.grid, curve.raw, candidates)
        smoothed[i] = css_eval(fit, grid)
        resid = curve.raw - fit.fitted
        noise_terms[i] = float(np.mean(resid**2))

    mu_hat = smoothed.mean(axis=0)
    dev = smoothed - mu_hat
    sigma = dev.T @ dev / (n - 1)
    sigma_hat = SpdMatrix.from_matrix((sigma + sigma.T) / 2.0, name="empirical covariance")
    return EmpiricalEstimates(
        grid=grid,
        mu_hat=mu_hat,
        sigma_hat=sigma_hat,
        noise_var_hat=float(np.mean(noise_terms)),
        smoothed=smoothed,
        lambdas=lambdas,
    )


@dataclass
class HyperParams:
    """Prior settings for the hierarchical samplers.

    ``mu0`` is the prior mean curve on ``grid``; ``A`` the prior covariance
    structure; ``c`` the prior precision multiplier on the mean;
    ``delta`` the inverse-Wishart shape; (a_eps, b_eps) the noise-precision
    Gamma prior; (a_s, b_s) the covariance-scale Gamma prior.
    """

    grid: np.ndarray
    mu0: np.ndarray
    A: CovarianceModel
    c: float
    delta: float
    a_eps: float
    b_eps: float
    a_s: float
    b_s: float


def build_hyperparams(
    est: EmpiricalEstimates,
    mat: bool = True,
    w: float = 1.0,
    ws: float = 0.1,
    delta: float = 5.0,
    c: float = 1.0,
    nu: float | None = None,
    rho: float | None = None,
    candidates=None,
) -> HyperParams:
    """Turn empirical estimates into prior settings.

    ``mat`` selects the prior covariance structure: a Matern fit to the
    empirical covariance (with ``nu`` or ``rho`` fixable by hand), or the
    empirical matrix itself.  ``w`` scales the noise prior so its mean
    matches the empirical noise variance; ``ws`` likewise for the
    covariance scale, whose prior mean is calibrated to 1 by pairing shape
    ``ws`` with rate ``ws / (delta - 2)``.
    """
    if not delta > 2.0:
        raise ValueError(f"delta must exceed 2, got {delta}")
    for label, value in (("w", w), ("ws", ws), ("c", c)):
        if not value > 0.0:
            raise ValueError(f"{label} must be positive, got {value}")

    fit, _ = css_gcv(est.grid, est.mu_hat, candidates)
    mu0 = fit.fitted

    s2 = float(np.mean(np.diag(est.sigma_hat.mat)))
    if mat:
        nu_grid = None if nu is None else [float(nu)]
        rho_grid = None if rho is None else [float(rho)]
        _, params = fit_matern(est.sigma_hat, est.grid, nu_grid=nu_grid, rho_grid=rho_grid)
        cov_model = CovarianceModel(kind="stationary-matern", s2=s2, params=params)
    else:
        cov_model = CovarianceModel(
            kind="empirical", s2=s2, base=est.sigma_hat, grid=est.grid
        )

    noise_var = est.noise_var_hat
    if noise_var < NOISE_FLOOR:
        warnings.warn(
            f"empirical noise variance {noise_var:.3g} is below the floor "
            f"{NOISE_FLOOR:g}; clamping so the noise prior stays proper",
            stacklevel=2,
        )
        noise_var = NOISE_FLOOR

    m_s = delta - 2.0
    return HyperParams(
        grid=est.grid,
        mu0=mu0,
        A=cov_model,
        c=float(c),
        delta=float(delta),
        a_eps=float(w),
        b_eps=float(w) * noise_var,
        a_s=float(ws),
        b_s=float(ws) / m_s,
    )
