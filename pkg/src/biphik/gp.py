"""Gaussian-process regression core.

Stationary Gaussian-kernel Kriging with profiled mean/variance estimators,
log marginal likelihood, derivative-free hyperparameter search, and the
generic posterior used by every regression flavor in this library.  Models
built from ensemble statistics (see :mod:`biphik.phik`) reuse the same
:class:`GpModel` / :class:`Posterior` machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .linalg import factor_spd

LOG_2PI = float(np.log(2.0 * np.pi))


def as_points(x):
    """Coerce a point or list of points to a (n, d) float array."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        # A bare vector is one d-dimensional point.
        a = a.reshape(1, -1)
    return a


@dataclass
class GaussianKernel:
    """Squared-exponential kernel with one correlation length per dimension.

    k(x, x') = variance * exp(-0.5 * sum_i ((x_i - x'_i) / l_i)^2)
    """

    variance: float
    lengthscales: np.ndarray

    def __post_init__(self):
        self.lengthscales = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if self.variance < 0:
            raise ValueError("kernel variance must be non-negative")
        if np.any(self.lengthscales <= 0):
            raise ValueError("lengthscales must be positive")

    def __call__(self, x1, x2):
        x1 = as_points(x1)
        x2 = as_points(x2)
        d = x1[:, None, :] - x2[None, :, :]
        r2 = np.sum((d / self.lengthscales) ** 2, axis=-1)
        return self.variance * np.exp(-0.5 * r2)


@dataclass
class Observations:
    """Noiseless point observations: locations X and values y."""

    locations: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.locations = as_points(self.locations)
        self.values = np.asarray(self.values, dtype=float).ravel()
        if len(self.locations) != len(self.values):
            raise ValueError(
                f"{len(self.locations)} locations but {len(self.values)} values"
            )
        if not (np.all(np.isfinite(self.locations)) and np.all(np.isfinite(self.values))):
            raise ValueError("observations must be finite")
        n = len(self.locations)
        if n > 1:
            d = self.locations[:, None, :] - self.locations[None, :, :]
            dist2 = np.sum(d * d, axis=-1)
            dist2[np.diag_indices(n)] = np.inf
            if np.min(dist2) == 0.0:
                raise ValueError("observation locations must be pairwise distinct")

    def __len__(self):
        return len(self.values)

    def extended(self, x_new, y_new):
        """Return a copy with one extra observation appended."""
        loc = np.vstack([self.locations, as_points(x_new)])
        val = np.append(self.values, y_new)
        return Observations(loc, val)


@dataclass
class HyperSearchConfig:
    """Controls for the maximum-likelihood lengthscale search.

    Lengthscales are searched in log-space by Nelder-Mead restarts seeded
    from a Latin hypercube over [log(0.05 * diameter), log(2 * diameter)];
    the constant mean and process variance are profiled out analytically.
    """

    n_restarts: int = 8
    seed: int = 0
    lengthscale_span: tuple = (0.05, 2.0)
    maxiter: int = 200

    def rho_grid(self):
        """Coarse grid for the CoKriging regression scalar."""
        return np.linspace(-2.0, 3.0, 41)


class GpModel:
    """A Gaussian process given by mean and covariance evaluators.

    `mean_at(X)` maps (n, d) points to (n,) means; `cov_at(X1, X2)` maps to
    the (n1, n2) cross-covariance; `var_at(X)` to the (n,) prior variances.
    `source` tags where the statistics came from: "stationary", "ensemble"
    or "bifidelity-ensemble".
    """

    def __init__(self, mean_at, cov_at, var_at, source, kernel=None,
                 mean_const=None, degenerate=False):
        self.mean_at = mean_at
        self.cov_at = cov_at
        self.var_at = var_at
        self.source = source
        self.kernel = kernel
        self.mean_const = mean_const
        self.degenerate = degenerate

    def at_observations(self, obs):
        """Prior mean vector and covariance matrix over the observation set."""
        x = obs.locations
        return self.mean_at(x), self.cov_at(x, x)


def stationary_model(mean, kernel):
    """Constant-mean GP with a stationary kernel."""
    return GpModel(
        mean_at=lambda x: np.full(len(as_points(x)), float(mean)),
        cov_at=kernel,
        var_at=lambda x: np.full(len(as_points(x)), kernel.variance),
        source="stationary",
        kernel=kernel,
        mean_const=float(mean),
        degenerate=(kernel.variance == 0.0),
    )


class Posterior:
    """GP posterior conditioned on noiseless observations.

    The observation covariance is factored once at construction; mean and
    MSE evaluations at arbitrary query points reuse that factorization.
    """

    def __init__(self, model, obs, ridge=0.0, escalate=True):
        self.model = model
        self.obs = obs
        x = obs.locations
        if model.degenerate:
            self._alpha = np.zeros(len(obs))
            self.factor = None
            self.ridge_used = 0.0
            self.auto_ridged = False
            return
        mu, c = model.at_observations(obs)
        self.factor = factor_spd(c, ridge=ridge, escalate=escalate,
                                label="observation covariance")
        self._alpha = self.factor.solve(obs.values - mu)
        self.ridge_used = self.factor.ridge
        self.auto_ridged = self.factor.auto_ridged

    def mean_at(self, x):
        x = as_points(x)
        out = self.model.mean_at(x)
        if not self.model.degenerate:
            out = out + self.model.cov_at(x, self.obs.locations) @ self._alpha
        return out

    def mse_at(self, x, clamp=True):
        x = as_points(x)
        var = self.model.var_at(x)
        if self.model.degenerate:
            s2 = np.zeros(len(x))
        else:
            cq = self.model.cov_at(x, self.obs.locations)
            s2 = var - np.sum(cq * self.factor.solve(cq.T).T, axis=1)
        return np.maximum(s2, 0.0) if clamp else s2

    def rmse_at(self, x):
        return np.sqrt(self.mse_at(x))


def posterior(model, obs, ridge=0.0, escalate=True):
    """Condition `model` on `obs`; returns a reusable :class:`Posterior`."""
    return Posterior(model, obs, ridge=ridge, escalate=escalate)


def log_marginal_likelihood(model, obs, ridge=0.0):
    """ln L = -1/2 r^T C^-1 r - 1/2 ln|C| - N/2 ln 2pi with r = y - mu."""
    mu, c = model.at_observations(obs)
    fac = factor_spd(c, ridge=ridge, escalate=False, label="observation covariance")
    r = obs.values - mu
    n = len(obs)
    return float(-0.5 * r @ fac.solve(r) - 0.5 * fac.logdet - 0.5 * n * LOG_2PI)


def _latin_hypercube(n, d, rng):
    """n stratified samples in [0, 1)^d."""
    strata = np.tile(np.arange(n, dtype=float)[:, None], (1, d))
    for j in range(d):
        rng.shuffle(strata[:, j])
    return (strata + rng.random((n, d))) / n


def _profiled_estimates(psi_factor, y):
    """Profiled constant mean and variance given a factored correlation."""
    n = len(y)
    ones = np.ones(n)
    pi_y = psi_factor.solve(y)
    pi_1 = psi_factor.solve(ones)
    denom = ones @ pi_1
    mu = float(ones @ pi_y / denom)
    r = y - mu
    sigma2 = float(r @ psi_factor.solve(r) / n)
    return mu, sigma2


def _concentrated_neg_lnl(log_l, x, y):
    """Negative profiled log-likelihood as a function of log lengthscales."""
    lengthscales = np.exp(log_l)
    diff = x[:, None, :] - x[None, :, :]
    psi = np.exp(-0.5 * np.sum((diff / lengthscales) ** 2, axis=-1))
    try:
        fac = factor_spd(psi, ridge=0.0, escalate=False)
    except Exception:
        return np.inf
    n = len(y)
    _, sigma2 = _profiled_estimates(fac, y)
    if sigma2 <= 0 or not np.isfinite(sigma2):
        return np.inf
    return 0.5 * n * np.log(sigma2) + 0.5 * fac.logdet + 0.5 * n * (1.0 + LOG_2PI)


def fit_ordinary_kriging(obs, search=None):
    """Fit constant-mean Gaussian-kernel Kriging by profiled MLE.

    For each candidate lengthscale vector the estimators
    mu = (1' Psi^-1 y) / (1' Psi^-1 1) and
    sigma^2 = (y - 1 mu)' Psi^-1 (y - 1 mu) / N
    are profiled out and the lengthscales maximize the log marginal
    likelihood via Nelder-Mead restarts.

    Constant data (sigma^2 = 0) returns a flagged degenerate constant model
    rather than failing.
    """
    if search is None:
        search = HyperSearchConfig()
    x = obs.locations
    y = obs.values
    n, d = x.shape
    if n < 2:
        raise ValueError("ordinary Kriging needs at least two observations")
    yscale = max(np.max(np.abs(y)), 1.0)
    if np.ptp(y) <= 1e-12 * yscale:
        kernel = GaussianKernel(0.0, np.ones(d))
        return stationary_model(y[0], kernel)

    diam = float(np.linalg.norm(np.ptp(x, axis=0)))
    if diam == 0.0:
        diam = 1.0
    lo, hi = np.log(search.lengthscale_span[0] * diam), np.log(search.lengthscale_span[1] * diam)
    rng = np.random.default_rng(search.seed)
    starts = lo + (hi - lo) * _latin_hypercube(search.n_restarts, d, rng)

    best = (np.inf, None)
    for z0 in starts:
        res = minimize(
            _concentrated_neg_lnl, z0, args=(x, y), method="Nelder-Mead",
            options={"maxiter": search.maxiter * d, "xatol": 1e-4, "fatol": 1e-8},
        )
        if np.isfinite(res.fun) and res.fun < best[0]:
            best = (res.fun, res.x)
    if best[1] is None:
        # Every restart failed to factor; fall back to the mid-span scale.
        best = (np.inf, np.full(d, 0.5 * (lo + hi)))
    lengthscales = np.exp(best[1])

    diff = x[:, None, :] - x[None, :, :]
    psi = np.exp(-0.5 * np.sum((diff / lengthscales) ** 2, axis=-1))
    fac = factor_spd(psi, ridge=0.0, escalate=True)
    mu, sigma2 = _profiled_estimates(fac, y)
    return stationary_model(mu, GaussianKernel(sigma2, lengthscales))
