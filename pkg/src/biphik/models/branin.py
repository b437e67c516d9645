"""Modified Branin test field and its randomized "domain knowledge" model.

The deterministic field is the modified Branin function on the unit square.
The stochastic model perturbs two of its coefficients with truncated random
series in twelve standard normal variables and shifts a constant offset,
giving a biased ensemble whose statistics feed the ensemble-prior methods.
High- and low-fidelity realizations differ only by evaluation grid, so a
single draw of the random variables serves both.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..gp import Observations
from ..phik import Ensemble, uniform_grid


@dataclass
class BraninConfig:
    a: float = 1.0
    b: float = 5.1 / (4.0 * np.pi**2)
    c: float = 5.0 / np.pi
    r: float = 6.0
    g: float = 10.0
    p: float = 1.0 / (8.0 * np.pi)
    q: float = 5.0
    g_shifted: float = 20.0          # offset used by the randomized model
    grid_high: tuple = (41, 41)
    grid_low: tuple = (21, 21)
    n_members: int = 300
    m_high: int = 21
    random_dim: int = 12


# Eight fixed observation locations; all lie on the 41 x 41 grid.
OBSERVATION_POINTS = np.array([
    (0.1, 0.225), (0.475, 0.2), (0.625, 0.5), (0.675, 0.55),
    (0.7, 0.0), (0.775, 0.1), (0.8, 0.9), (0.925, 0.9),
])


def branin_grid(shape):
    return uniform_grid([(0.0, 1.0), (0.0, 1.0)], shape)


def branin_observation_points():
    return OBSERVATION_POINTS.copy()


def branin_truth(cfg=None, points=None):
    """Deterministic modified Branin values at grid points (or given points)."""
    cfg = cfg or BraninConfig()
    if points is None:
        points = branin_grid(cfg.grid_high).points
    x, y = points[:, 0], points[:, 1]
    xb, yb = 15.0 * x - 5.0, 15.0 * y
    return (
        cfg.a * (yb - cfg.b * xb**2 + cfg.c * xb - cfg.r) ** 2
        + cfg.g * (1.0 - cfg.p) * np.cos(xb)
        + cfg.g
        + cfg.q * x
    )


def branin_observations(cfg=None):
    """The eight fixed observations of the deterministic field."""
    cfg = cfg or BraninConfig()
    pts = branin_observation_points()
    return Observations(pts, branin_truth(cfg, pts))


def _coefficient_fields(points, xi, cfg):
    """Randomized coefficient fields b_hat and q_hat, shape (M, n)."""
    x, y = points[:, 0], points[:, 1]
    sin_terms = np.stack([
        np.sin(1.5 * np.pi * x) / 3.0,
        np.sin(2.5 * np.pi * y) / 5.0,
        np.sin(3.5 * np.pi * x) / 7.0,
        np.sin(4.5 * np.pi * y) / 9.0,
        np.sin(5.5 * np.pi * x) / 11.0,
        np.sin(6.5 * np.pi * y) / 13.0,
    ])                                                     # (6, n)
    cos_terms = np.stack([
        np.cos(0.5 * np.pi * x) / 1.0,
        np.cos(1.5 * np.pi * y) / 3.0,
        np.cos(2.5 * np.pi * x) / 5.0,
        np.cos(3.5 * np.pi * y) / 7.0,
        np.cos(4.5 * np.pi * x) / 9.0,
        np.cos(5.5 * np.pi * y) / 11.0,
    ])
    b_hat = cfg.b * (0.9 + (0.2 / np.pi) * xi[:, :6] @ sin_terms)
    q_hat = cfg.q * (1.0 + (0.6 / np.pi) * xi[:, 6:] @ cos_terms)
    return b_hat, q_hat


def branin_random_fields(points, xi, cfg=None):
    """Evaluate the randomized Branin model for each row of xi, (M, n)."""
    cfg = cfg or BraninConfig()
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if xi.shape[1] != cfg.random_dim:
        raise ValueError(f"xi must have {cfg.random_dim} columns")
    x, y = points[:, 0], points[:, 1]
    xb, yb = 15.0 * x - 5.0, 15.0 * y
    b_hat, q_hat = _coefficient_fields(points, xi, cfg)
    return (
        cfg.a * (yb - b_hat * xb**2 + cfg.c * xb - cfg.r) ** 2
        + cfg.g * (1.0 - cfg.p) * np.cos(xb)
        + cfg.g_shifted
        + q_hat * x
    )


def branin_stochastic_ensemble(cfg=None, fidelity="high", seed=0):
    """Ensemble of randomized Branin realizations on the fidelity's grid.

    The twelve standard normal draws depend only on (seed, member index),
    so high- and low-fidelity ensembles with equal seeds pair member for
    member, as the subset-selection and lifting steps require.
    """
    cfg = cfg or BraninConfig()
    grid = branin_grid(cfg.grid_high if fidelity == "high" else cfg.grid_low)
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal((cfg.n_members, cfg.random_dim))
    t0 = time.perf_counter()
    members = branin_random_fields(grid.points, xi, cfg)
    total = time.perf_counter() - t0
    cost = {"total_s": total, "n": cfg.n_members}
    return Ensemble(grid, members, fidelity, params=xi, seed=seed, cost=cost)
