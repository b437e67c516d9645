"""Two-level auto-regressive CoKriging.

The high-fidelity process is modeled as rho * Y_L + Y_d with Y_L regressed
on low-fidelity data and Y_d an independent discrepancy GP.  The fit is a
two-step procedure wrapped in a grid search over rho, scored by the joint
log marginal likelihood of the stacked observations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import HyperSearchConfig, Observations, as_points, fit_ordinary_kriging, LOG_2PI
from .linalg import factor_spd


class DimensionMismatch(Exception):
    """Block dimensions of the joint covariance are inconsistent."""


class MissingCommonPoints(Exception):
    """A high-fidelity location has no matching low-fidelity value."""


def assemble_joint_cov(low_ll, low_lh, low_hh, delta_hh, rho):
    """Joint covariance of stacked (low, high) observations.

    [[ C_L(X_L, X_L),        rho * C_L(X_L, X_H)            ],
     [ rho * C_L(X_H, X_L),  rho^2 * C_L(X_H, X_H) + C_d    ]]
    """
    low_ll = np.asarray(low_ll, dtype=float)
    low_lh = np.asarray(low_lh, dtype=float)
    low_hh = np.asarray(low_hh, dtype=float)
    delta_hh = np.asarray(delta_hh, dtype=float)
    nl = low_ll.shape[0]
    nh = low_hh.shape[0]
    if low_ll.shape != (nl, nl) or low_hh.shape != (nh, nh):
        raise DimensionMismatch("diagonal blocks must be square")
    if low_lh.shape != (nl, nh):
        raise DimensionMismatch(
            f"cross block must be ({nl}, {nh}), got {low_lh.shape}"
        )
    if delta_hh.shape != (nh, nh):
        raise DimensionMismatch(
            f"discrepancy block must be ({nh}, {nh}), got {delta_hh.shape}"
        )
    top = np.hstack([low_ll, rho * low_lh])
    bottom = np.hstack([rho * low_lh.T, rho**2 * low_hh + delta_hh])
    return np.vstack([top, bottom])


@dataclass
class CoKrigingModel:
    """Fitted auto-regressive model: rho, the two GPs, and the joint blocks."""

    rho: float
    low: object            # GpModel for Y_L
    delta: object          # GpModel for Y_d (stationary, constant mean)
    x_low: np.ndarray
    x_high: np.ndarray
    joint_cov: np.ndarray
    joint_mean: np.ndarray
    log_likelihood: float

    def mean_high_at(self, x):
        """mu_H = rho * mu_L + mu_d."""
        return self.rho * self.low.mean_at(x) + self.delta.mean_at(x)

    def var_high_at(self, x):
        return self.rho**2 * self.low.var_at(x) + self.delta.var_at(x)

    def cross_cov_at(self, x):
        """c~(x): covariance of Y_H(x) with the stacked observations."""
        x = as_points(x)
        c_low = self.rho * self.low.cov_at(x, self.x_low)
        c_high = self.rho**2 * self.low.cov_at(x, self.x_high) + self.delta.cov_at(
            x, self.x_high
        )
        return np.hstack([c_low, c_high])

    def stacked_values(self, y_low, y_high):
        return np.concatenate([np.ravel(y_low), np.ravel(y_high)])


def _build_model(low_model, delta_model, rho, x_low, x_high, lnl=np.nan):
    c_ll = low_model.cov_at(x_low, x_low)
    c_lh = low_model.cov_at(x_low, x_high)
    c_hh = low_model.cov_at(x_high, x_high)
    c_d = delta_model.cov_at(x_high, x_high)
    joint_cov = assemble_joint_cov(c_ll, c_lh, c_hh, c_d, rho)
    mu_l = low_model.mean_at(x_low)
    mu_h = rho * low_model.mean_at(x_high) + delta_model.mean_at(x_high)
    joint_mean = np.concatenate([mu_l, mu_h])
    return CoKrigingModel(
        rho, low_model, delta_model, x_low, x_high, joint_cov, joint_mean, lnl
    )


def joint_log_likelihood(model, y_joint):
    """ln L~ of the stacked observations under the assembled joint model.

    Near-singular joint covariances (e.g. a degenerate discrepancy process)
    are regularized by the automatic ridge so every candidate gets a finite,
    comparable score.
    """
    fac = factor_spd(model.joint_cov, ridge=0.0, escalate=True, label="joint covariance")
    r = np.asarray(y_joint, dtype=float) - model.joint_mean
    n = len(r)
    return float(-0.5 * r @ fac.solve(r) - 0.5 * fac.logdet - 0.5 * n * LOG_2PI)


def match_locations(x_low, x_high, tol=1e-9):
    """Index into x_low of each x_high row; raises MissingCommonPoints."""
    x_low = as_points(x_low)
    x_high = as_points(x_high)
    scale = 1.0 + np.max(np.abs(x_low)) if x_low.size else 1.0
    idx = np.empty(len(x_high), dtype=int)
    for i, xh in enumerate(x_high):
        d = np.linalg.norm(x_low - xh, axis=1)
        j = int(np.argmin(d))
        if d[j] > tol * scale:
            raise MissingCommonPoints(
                f"high-fidelity location {xh} has no low-fidelity counterpart"
            )
        idx[i] = j
    return idx


def _refine_rho(coarse_best, step=0.05, halfwidth=0.25):
    lo = coarse_best - halfwidth
    n = int(round(2 * halfwidth / step)) + 1
    return lo + step * np.arange(n)


def fit_cokriging(low_obs, high_obs, search=None):
    """Two-step CoKriging fit with a profiled grid search over rho.

    Step 1 fits Y_L by ordinary Kriging on the low-fidelity data.  Step 2,
    for each rho on a coarse-then-refined grid, forms y_d = y_H - rho *
    y_L(X_H), fits Y_d by ordinary Kriging, and scores the pair by the
    joint log marginal likelihood; the best pair is kept.

    Requires every high-fidelity location to carry a low-fidelity value.
    """
    if search is None:
        search = HyperSearchConfig()
    low_model = fit_ordinary_kriging(low_obs, search)
    idx = match_locations(low_obs.locations, high_obs.locations)
    y_low_at_high = low_obs.values[idx]
    x_low = low_obs.locations
    x_high = high_obs.locations

    def candidate(rho):
        y_d = high_obs.values - rho * y_low_at_high
        delta_model = fit_ordinary_kriging(Observations(x_high, y_d), search)
        model = _build_model(low_model, delta_model, rho, x_low, x_high)
        lnl = joint_log_likelihood(model, model.stacked_values(low_obs.values, high_obs.values))
        model.log_likelihood = lnl
        return lnl, model

    best_lnl, best_model = -np.inf, None
    for rho in search.rho_grid():
        lnl, model = candidate(float(rho))
        if lnl > best_lnl:
            best_lnl, best_model = lnl, model
    for rho in _refine_rho(best_model.rho):
        lnl, model = candidate(float(rho))
        if lnl > best_lnl:
            best_lnl, best_model = lnl, model
    return best_model


class CoKrigingPosterior:
    """Posterior of Y_H given the stacked low/high observations.

    Mean: mu_H(x) + c~(x)' C~^-1 (y~ - mu~).
    MSE:  rho^2 sigma_L^2(x) + sigma_d^2(x) - c~(x)' C~^-1 c~(x); the small
    extra term from estimating the regression constants is omitted.
    """

    def __init__(self, model, y_joint, ridge=0.0, escalate=True):
        self.model = model
        n = model.joint_cov.shape[0]
        y_joint = np.asarray(y_joint, dtype=float).ravel()
        if len(y_joint) != n:
            raise DimensionMismatch(f"stacked values must have length {n}")
        self.factor = factor_spd(model.joint_cov, ridge=ridge, escalate=escalate,
                                label="joint covariance")
        self._alpha = self.factor.solve(y_joint - model.joint_mean)
        self.ridge_used = self.factor.ridge
        self.auto_ridged = self.factor.auto_ridged

    def mean_at(self, x):
        return self.model.mean_high_at(x) + self.model.cross_cov_at(x) @ self._alpha

    def mse_at(self, x, clamp=True):
        c = self.model.cross_cov_at(x)
        s2 = self.model.var_high_at(x) - np.sum(c * self.factor.solve(c.T).T, axis=1)
        return np.maximum(s2, 0.0) if clamp else s2

    def rmse_at(self, x):
        return np.sqrt(self.mse_at(x))


def cokriging_posterior(model, y_joint, ridge=0.0, escalate=True):
    """Condition a fitted CoKriging model on the stacked observation vector."""
    return CoKrigingPosterior(model, y_joint, ridge=ridge, escalate=escalate)
