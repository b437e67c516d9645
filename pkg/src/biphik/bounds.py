"""Numerical verification of the bifidelity error bounds.

Computes every constant entering the posterior-difference and
constraint-preservation inequalities (discrepancies delta_1/delta_2,
ensemble spreads, observation-site and domain spread norms, the composite
constants C1/C2/C3) and evaluates both sides of each inequality on
concrete ensembles.  Suprema over the domain and the parameter range are
realized as maxima over grid nodes and ensemble members respectively.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .bifidelity import InnerProduct
from .cokriging import CoKrigingPosterior
from .linalg import Singular, inverse_spectral_norm, operator_norm
from .phik import GridMismatch, phik_posterior

HOLDS_RTOL = 1e-9


def _prod(*factors):
    """Product that resolves 0 * inf to 0.

    Degenerate ensembles make the inverse-covariance norms infinite while
    their coefficients (discrepancies, residuals) vanish; the bound terms
    they multiply are exact zeros in the underlying inequalities.
    """
    out = 1.0
    for f in factors:
        if f == 0.0:
            return 0.0
    for f in factors:
        out *= f
    return out


def _inv_norm_or_inf(c):
    try:
        return inverse_spectral_norm(c)
    except Singular:
        return np.inf


def _check_pair(high, bifi):
    if not (high.grid == bifi.grid):
        raise GridMismatch("ensembles must share a grid")
    if high.n_members != bifi.n_members:
        raise GridMismatch("ensembles must share the sample set")
    if high.params is not None and bifi.params is not None:
        if not np.array_equal(np.asarray(high.params), np.asarray(bifi.params)):
            raise GridMismatch("ensembles must share the parameter samples")


def _spread_stats(e, obs, ip):
    """Per-node spread, spread at observation sites, and aggregate spreads."""
    m = e.n_members
    centered = e.centered()                       # (M, n)
    sigma_field = np.sqrt(np.sum(centered**2, axis=0) / (m - 1))
    v_obs = e.values_at(obs.locations)            # (N, M)
    c_obs = v_obs - v_obs.mean(axis=1, keepdims=True)
    sigma_obs = np.sqrt(np.sum(c_obs**2, axis=1) / (m - 1))
    sigma_gamma = np.sqrt(np.sum(ip.norms(centered) ** 2) / (m - 1))
    s = float(np.sqrt(np.sum(sigma_obs**2)))
    delta_cap = float(np.max(sigma_field))
    cov_obs = c_obs @ c_obs.T / (m - 1)
    return sigma_field, sigma_obs, sigma_gamma, s, delta_cap, cov_obs


@dataclass
class BoundReport:
    """All bound constants plus measured sides of each verified inequality."""

    m: int
    n: int
    delta1: float
    delta2: float
    sigma_h_gamma: float
    sigma_b_gamma: float
    s_h: float
    s_b: float
    delta_cap_h: float
    delta_cap_b: float
    inv_norm_h: float
    inv_norm_b: float
    c1: float
    c2: float
    c3: float
    theorem_lhs: dict = dc_field(default_factory=dict)
    theorem_rhs: dict = dc_field(default_factory=dict)
    holds: dict = dc_field(default_factory=dict)
    tightness: dict = dc_field(default_factory=dict)

    def record(self, name, lhs, rhs):
        lhs, rhs = float(lhs), float(rhs)
        self.theorem_lhs[name] = lhs
        self.theorem_rhs[name] = rhs
        self.holds[name] = bool(lhs <= rhs + HOLDS_RTOL * abs(rhs))
        self.tightness[name] = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else np.inf)

    def record_all(self, name, lhs, rhs):
        """Record an elementwise family of inequalities under one name.

        `holds` requires every element; the stored lhs/rhs pair is the
        least slack one.
        """
        lhs = np.atleast_1d(np.asarray(lhs, dtype=float)).ravel()
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float)).ravel()
        ok = bool(np.all(lhs <= rhs + HOLDS_RTOL * np.abs(rhs)))
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0),
                             np.where(lhs == 0, 0.0, np.inf))
        i = int(np.argmax(ratio))
        self.theorem_lhs[name] = float(lhs[i])
        self.theorem_rhs[name] = float(rhs[i])
        self.holds[name] = ok
        self.tightness[name] = float(ratio[i])

    def all_hold(self):
        return all(self.holds.values())

    def to_dict(self):
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, dict):
                out[k] = {kk: (bool(vv) if isinstance(vv, (bool, np.bool_)) else float(vv))
                          for kk, vv in v.items()}
            elif isinstance(v, (int, np.integer)):
                out[k] = int(v)
            else:
                out[k] = float(v)
        return out

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)


def compute_constants(high, bifi, obs, ip=None):
    """Evaluate the discrepancies, spreads and theorem constants.

    delta_1 and delta_2 are the worst-case discrete-L2 and sup
    discrepancies between paired members; the remaining quantities follow
    their displayed definitions with sample covariances using divisor M-1.
    """
    _check_pair(high, bifi)
    if ip is None:
        ip = InnerProduct.ones(high.grid.size)
    m = high.n_members
    n = len(obs)
    diff = high.members - bifi.members
    delta1 = float(np.max(ip.norms(diff)))
    delta2 = float(np.max(np.abs(diff)))

    _, _, sig_h_gamma, s_h, cap_h, cov_h = _spread_stats(high, obs, ip)
    _, _, sig_b_gamma, s_b, cap_b, cov_b = _spread_stats(bifi, obs, ip)
    inv_h = _inv_norm_or_inf(cov_h)
    inv_b = _inv_norm_or_inf(cov_b)

    mu_b_obs = bifi.values_at(obs.locations).mean(axis=1)
    ry_b = float(np.linalg.norm(obs.values - mu_b_obs))

    mn = m * n / (m - 1.0)
    c1 = 1.0 + _prod(2.0 * np.sqrt(mn), s_b, inv_b, ry_b)
    c2 = (
        _prod(np.sqrt(n), s_h, sig_h_gamma, inv_h,
              _prod(2.0 * np.sqrt(2.0 * m / (m - 1.0)),
                    np.sqrt(s_h**2 + s_b**2), inv_h, ry_b) + 1.0)
        + _prod(2.0 * np.sqrt(mn), sig_h_gamma, inv_b, ry_b)
    )
    c3 = _prod(
        2.0 * np.sqrt(2.0 * m / (m - 1.0)), np.sqrt(cap_h**2 + cap_b**2),
        1.0 + n * (_prod(cap_h**2, inv_h)
                   + _prod(np.sqrt(n), cap_h**2, cap_b**2, inv_h**2)
                   + _prod(cap_b**2, inv_b)),
    )
    return BoundReport(
        m=m, n=n, delta1=delta1, delta2=delta2,
        sigma_h_gamma=float(sig_h_gamma), sigma_b_gamma=float(sig_b_gamma),
        s_h=s_h, s_b=s_b, delta_cap_h=cap_h, delta_cap_b=cap_b,
        inv_norm_h=float(inv_h), inv_norm_b=float(inv_b),
        c1=float(c1), c2=float(c2), c3=float(c3),
    )


def verify_theorem_1_2(high, bifi, obs, ip=None, report=None):
    """Measure both sides of the posterior mean/variance difference bounds.

    The left sides compare the two ensemble-prior posteriors over the full
    grid: ||yhat_H - yhat_B|| in the discrete L2 norm against
    C1*delta_1 + C2*delta_2, and max |shat2_H - shat2_B| against
    C3*delta_2.  Posteriors use exact (unridged) covariance inverses, as
    the inequalities assume.
    """
    if ip is None:
        ip = InnerProduct.ones(high.grid.size)
    if report is None:
        report = compute_constants(high, bifi, obs, ip)
    query = high.grid.points
    post_h = phik_posterior(high, obs, ridge=0.0)
    post_b = phik_posterior(bifi, obs, ridge=0.0)
    mean_diff = post_h.mean_at(query) - post_b.mean_at(query)
    var_diff = post_h.mse_at(query, clamp=False) - post_b.mse_at(query, clamp=False)
    report.record("theorem1_mean", ip.norm(mean_diff),
                  _prod(report.c1, report.delta1) + _prod(report.c2, report.delta2))
    report.record("theorem2_variance", np.max(np.abs(var_diff)),
                  _prod(report.c3, report.delta2))
    return report


@dataclass
class LinearConstraint:
    """Discrete bounded linear operator with a target field.

    `operator` is a (k, n) matrix acting on grid-sampled fields; `target`
    is the length-k right-hand side g.  `operator_bound` is the computed
    norm bound sup ||A v|| / ||v|| in the weighted field norms.
    """

    operator: np.ndarray
    target: np.ndarray
    ip_in: InnerProduct
    ip_out: InnerProduct
    operator_bound: float = dc_field(init=False)

    def __post_init__(self):
        self.operator = np.atleast_2d(np.asarray(self.operator, dtype=float))
        self.target = np.atleast_1d(np.asarray(self.target, dtype=float))
        if self.operator.shape[0] != len(self.target):
            raise ValueError("operator rows must match target length")
        scaled = (np.sqrt(self.ip_out.weights)[:, None] * self.operator
                  / np.sqrt(self.ip_in.weights)[None, :])
        self.operator_bound = operator_norm(scaled)

    @classmethod
    def from_matrix(cls, operator, target, n=None):
        operator = np.atleast_2d(np.asarray(operator, dtype=float))
        target = np.atleast_1d(np.asarray(target, dtype=float))
        return cls(operator, target,
                   InnerProduct.ones(operator.shape[1]),
                   InnerProduct.ones(operator.shape[0]))

    def apply(self, v):
        return self.operator @ np.asarray(v, dtype=float)

    def residual_norm(self, v):
        return self.ip_out.norm(self.apply(v) - self.target)

    def epsilon_for(self, e):
        """Largest constraint violation over the ensemble members."""
        res = e.members @ self.operator.T - self.target
        return float(np.max(self.ip_out.norms(res)))


def verify_theorem_3(high, bifi, obs, lc, ip=None, report=None):
    """Constraint preservation of the bifidelity-prior posterior mean.

    lhs = ||L yhat_B - g||; rhs = eps * (1 + 2 S_H sqrt(M/(M-1))
    ||C_H^-1||_2 ||y - mu_H||_2) + M_L (C1 delta_1 + C2 delta_2), with eps
    measured as the largest violation over high-fidelity members.
    """
    if ip is None:
        ip = InnerProduct.ones(high.grid.size)
    if report is None:
        report = compute_constants(high, bifi, obs, ip)
    m = high.n_members
    eps = lc.epsilon_for(high)
    mu_h_obs = high.values_at(obs.locations).mean(axis=1)
    ry_h = float(np.linalg.norm(obs.values - mu_h_obs))
    rhs = (
        _prod(eps, 1.0 + _prod(2.0 * np.sqrt(m / (m - 1.0)), report.s_h,
                               report.inv_norm_h, ry_h))
        + _prod(lc.operator_bound,
                _prod(report.c1, report.delta1) + _prod(report.c2, report.delta2))
    )
    post_b = phik_posterior(bifi, obs, ridge=0.0)
    lhs = lc.residual_norm(post_b.mean_at(high.grid.points))
    report.record("theorem3_constraint", lhs, rhs)
    return report


def verify_theorem_4(high, bifi, obs, lc, fit, ip=None, report=None):
    """Constraint preservation of the bifidelity ensemble-CoKriging mean.

    Evaluates the displayed right-hand side with the fitted model's rho,
    constant discrepancy mean, discrepancy covariance C_d(X, X), and the
    selected member values y_B; the C1 delta_1 + C2 delta_2 term reuses
    the posterior-difference constants.
    """
    if ip is None:
        ip = InnerProduct.ones(high.grid.size)
    if report is None:
        report = compute_constants(high, bifi, obs, ip)
    m = high.n_members
    model = fit.model
    rho = model.rho
    eps = lc.epsilon_for(high)
    g_norm = lc.ip_out.norm(lc.target)

    mu_b_obs = bifi.values_at(obs.locations).mean(axis=1)
    y_low = fit.y_low
    term_spread = _prod(2.0 * np.sqrt(m / (m - 1.0)), eps, rho, report.s_h,
                        report.inv_norm_b, float(np.linalg.norm(y_low - mu_b_obs)))

    mu_d = model.delta.mean_const
    grid_pts = high.grid.points
    l_mu_d = lc.ip_out.norm(lc.apply(np.full(high.grid.size, mu_d)))

    c_d = model.delta.cov_at(obs.locations, obs.locations)
    inv_cd = _inv_norm_or_inf(c_d)
    resid = obs.values - rho * y_low - mu_d
    kd_fields = model.delta.cov_at(grid_pts, obs.locations)       # (n, N)
    l_kd = sum(lc.ip_out.norm(lc.apply(kd_fields[:, j])) for j in range(kd_fields.shape[1]))
    term_kd = _prod(inv_cd, float(np.linalg.norm(resid)), l_kd)

    rhs = (
        rho * eps + (1.0 - rho) * g_norm + term_spread + l_mu_d + term_kd
        + _prod(lc.operator_bound,
                _prod(report.c1, report.delta1) + _prod(report.c2, report.delta2))
    )
    post = CoKrigingPosterior(model, model.stacked_values(y_low, obs.values),
                              ridge=0.0, escalate=False)
    lhs = lc.residual_norm(post.mean_at(grid_pts))
    report.record("theorem4_constraint", lhs, rhs)
    return report


def verify_constraint_preservation(high, obs, lc, bifi=None, cophik_fit=None, ip=None,
                                   report=None):
    """Run the applicable constraint-preservation checks.

    With a bifidelity ensemble the posterior-mean bound is verified; with
    an ensemble-CoKriging fit (built on that bifidelity ensemble) its
    constraint bound is verified as well.
    """
    if bifi is None:
        raise ValueError("a bifidelity ensemble is required")
    if report is None:
        report = compute_constants(high, bifi, obs, ip)
    verify_theorem_3(high, bifi, obs, lc, ip, report)
    if cophik_fit is not None:
        verify_theorem_4(high, bifi, obs, lc, cophik_fit, ip, report)
    return report


def verify_lemmas(high, bifi, obs, ip=None, report=None):
    """Check the three covariance-function inequalities behind the bounds.

    Lemma 1 bounds ||k(., x_n)|| by the spread product; Lemma 2 bounds the
    covariance-field difference; Lemma 3 bounds pointwise covariance
    differences at observation pairs.  Results land in the report's
    `holds` map keyed lemma1/lemma2/lemma3.
    """
    _check_pair(high, bifi)
    if ip is None:
        ip = InnerProduct.ones(high.grid.size)
    if report is None:
        report = compute_constants(high, bifi, obs, ip)
    m = high.n_members

    cen_h = high.centered()
    cen_b = bifi.centered()
    v_obs_h = high.values_at(obs.locations)
    v_obs_b = bifi.values_at(obs.locations)
    c_obs_h = v_obs_h - v_obs_h.mean(axis=1, keepdims=True)     # (N, M)
    c_obs_b = v_obs_b - v_obs_b.mean(axis=1, keepdims=True)
    sigma_obs_h = np.sqrt(np.sum(c_obs_h**2, axis=1) / (m - 1))
    sigma_obs_b = np.sqrt(np.sum(c_obs_b**2, axis=1) / (m - 1))

    k_h = cen_h.T @ c_obs_h.T / (m - 1)                          # (n_grid, N)
    k_b = cen_b.T @ c_obs_b.T / (m - 1)

    # Lemma 1: ||k(., x_n)|| <= sigma(Gamma) * sigma(x_n), both ensembles.
    lhs1 = np.concatenate([ip.norms(k_h.T), ip.norms(k_b.T)])
    rhs1 = np.concatenate([report.sigma_h_gamma * sigma_obs_h,
                           report.sigma_b_gamma * sigma_obs_b])
    report.record_all("lemma1", lhs1, rhs1)

    # Lemma 2: covariance-field difference against the mixed delta bound.
    member_norms_h = ip.norms(cen_h)                             # (M,)
    lhs2 = ip.norms((k_h - k_b).T)                               # (N,)
    rhs2 = (2.0 / (m - 1)) * (
        report.delta1 * np.sum(np.abs(c_obs_b), axis=1)
        + report.delta2 * np.sum(member_norms_h)
    )
    report.record_all("lemma2", lhs2, rhs2)

    # Lemma 3: pointwise covariance differences at observation pairs.
    cov_h = c_obs_h @ c_obs_h.T / (m - 1)
    cov_b = c_obs_b @ c_obs_b.T / (m - 1)
    lhs3 = np.abs(cov_h - cov_b)
    rhs3 = (2.0 * report.delta2 * np.sqrt(m / (m - 1.0))
            * (sigma_obs_h[:, None] + sigma_obs_b[None, :]))
    report.record_all("lemma3", lhs3.ravel(), rhs3.ravel())
    return report
