"""Posterior summary containers shared by both samplers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["SmoothResult", "credible_band", "scalar_summary"]

BAND_PROBS = (0.025, 0.975)


def credible_band(draws: np.ndarray, axis: int = 0):
    """Pointwise 95% credible band: (lower, upper) quantiles along ``axis``."""
    lo, hi = np.quantile(draws, BAND_PROBS, axis=axis)
    return lo, hi


def scalar_summary(draws: np.ndarray):
    """Posterior mean and 95% interval of a scalar chain."""
    draws = np.asarray(draws, dtype=float)
    return float(draws.mean()), np.quantile(draws, BAND_PROBS)


@dataclass
class SmoothResult:
    """Posterior estimates from one smoothing run.

    Curve-level summaries live on ``grid``: the pooled grid for the
    full-grid sampler, the evaluation grid for the basis-approximated one.
    The basis-approximated sampler additionally fills the coefficient-space
    and working-grid fields.
    """

    method: str
    grid: np.ndarray
    Z: np.ndarray
    Z_CL: np.ndarray
    Z_UL: np.ndarray
    mu: np.ndarray
    mu_CI: np.ndarray
    Sigma: np.ndarray
    Sigma_CL: np.ndarray
    Sigma_UL: np.ndarray
    Sigma_SE: np.ndarray
    rn: float
    rn_CI: np.ndarray
    rs: float
    rs_CI: np.ndarray
    rho: float | None = None
    nu: float | None = None
    pmin_vec: np.ndarray | None = None
    runtime_seconds: float = 0.0

    # Basis-approximated sampler only: observed-grid and coefficient-space
    # summaries plus the basis artifacts needed to reuse the fit.
    tau: np.ndarray | None = None
    Zt: list[np.ndarray] | None = None
    Zt_CL: list[np.ndarray] | None = None
    Zt_UL: list[np.ndarray] | None = None
    Zeta: np.ndarray | None = None
    Zeta_CL: np.ndarray | None = None
    Zeta_UL: np.ndarray | None = None
    Sigma_zeta: np.ndarray | None = None
    Sigma_zeta_CL: np.ndarray | None = None
    Sigma_zeta_UL: np.ndarray | None = None
    Sigma_zeta_SE: np.ndarray | None = None
    mu_zeta: np.ndarray | None = None
    mu_zeta_CI: np.ndarray | None = None
    Sigma_tau: np.ndarray | None = None
    mu_tau: np.ndarray | None = None
    Btau: np.ndarray | None = None
    BT: list[np.ndarray] | None = field(default=None, repr=False)
    knots: np.ndarray | None = None
