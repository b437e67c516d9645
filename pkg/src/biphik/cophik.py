"""CoKriging with an ensemble-statistics low-fidelity GP.

The low-fidelity process is the ensemble GP (no hyperparameters); the
discrepancy process has a Gaussian kernel with constant mean fitted by
maximum likelihood; the low-fidelity "observation" y_L is the ensemble
member that maximizes the joint log marginal likelihood.  All low/high
covariance blocks coincide because the two observation sets are identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cokriging import (
    CoKrigingPosterior,
    _build_model,
    _refine_rho,
)
from .gp import (
    GaussianKernel,
    HyperSearchConfig,
    Observations,
    fit_ordinary_kriging,
    stationary_model,
    LOG_2PI,
)
from .linalg import factor_spd
from .phik import ensemble_statistics


def _fit_delta(x, y_d, search):
    """Discrepancy GP for the given residuals; degenerate for a single point."""
    if len(y_d) < 2:
        return stationary_model(y_d[0], GaussianKernel(0.0, np.ones(x.shape[1])))
    return fit_ordinary_kriging(Observations(x, y_d), search)


@dataclass
class CoPhikFit:
    """Result of the ensemble CoKriging fit."""

    model: object          # CoKrigingModel
    member_index: int
    y_low: np.ndarray      # selected member values at the observation set
    log_likelihood: float

    def posterior(self, high_obs, ridge=0.0):
        y_joint = self.model.stacked_values(self.y_low, high_obs.values)
        return CoKrigingPosterior(self.model, y_joint, ridge=ridge)


def fit_cophik(e, high_obs, search=None):
    """Fit the ensemble-prior CoKriging model (two-step, rho on a grid).

    For each rho: (1) the ensemble statistics define Y_L and all four low
    covariance blocks equal C_L(X, X); (2) y_d = y_H - rho * mu_L(X) and a
    Gaussian-kernel Y_d with constant mean is fitted to (X, y_d) by
    maximizing its own log marginal likelihood; (3) every ensemble member
    is scored as the y_L candidate by the joint log likelihood, and the
    best member is kept (ties go to the lowest index).  The rho with the
    best member score wins, after one grid refinement.
    """
    if search is None:
        search = HyperSearchConfig()
    low_model = ensemble_statistics(e)
    x = high_obs.locations
    y_h = high_obs.values
    n = len(high_obs)
    mu_l = low_model.mean_at(x)
    members_at_x = e.values_at(x)            # (N, M)
    m = e.n_members

    def candidate(rho):
        y_d = y_h - rho * mu_l
        delta_model = _fit_delta(x, y_d, search)
        model = _build_model(low_model, delta_model, rho, x, x)
        fac = factor_spd(model.joint_cov, ridge=0.0, escalate=True, label="joint covariance")
        mu_h = model.joint_mean[n:]
        # Score all members at once: residuals of the stacked vector.
        res = np.vstack([
            members_at_x - model.joint_mean[:n, None],
            np.tile((y_h - mu_h)[:, None], (1, m)),
        ])
        quad = np.sum(res * fac.solve(res), axis=0)
        lnl = -0.5 * quad - 0.5 * fac.logdet - 0.5 * (2 * n) * LOG_2PI
        best_m = int(np.argmax(lnl))
        return float(lnl[best_m]), best_m, model

    best = (-np.inf, None, None)
    for rho in search.rho_grid():
        lnl, best_m, model = candidate(float(rho))
        if lnl > best[0]:
            best = (lnl, best_m, model)
    for rho in _refine_rho(best[2].rho):
        lnl, best_m, model = candidate(float(rho))
        if lnl > best[0]:
            best = (lnl, best_m, model)

    lnl, best_m, model = best
    model.log_likelihood = lnl
    return CoPhikFit(model, best_m, members_at_x[:, best_m].copy(), lnl)


def cophik_posterior(e, high_obs, search=None, ridge=0.0):
    """Convenience wrapper: fit and condition in one call."""
    fit = fit_cophik(e, high_obs, search)
    return fit.posterior(high_obs, ridge=ridge)
