import numpy as np
import pytest

from biphik import Ensemble, Grid, Observations


def smooth_members(rng, m, t, n_basis=5, scale=1.0):
    """Random smooth fields over the 1-d coordinate array t."""
    basis = np.stack(
        [np.ones_like(t), t, np.sin(3 * t), np.cos(5 * t), t**2,
         np.sin(7 * t), np.cos(2 * t)][:n_basis]
    )
    return scale * rng.standard_normal((m, n_basis)) @ basis


def make_pair(rng, m=5, n_grid=10, n_obs=3, perturb=0.05):
    """A high/bifidelity ensemble pair plus observations on the grid.

    The perturbation includes independent per-node noise so covariance
    matrices at the observation sites stay comfortably invertible.
    """
    grid = Grid([np.linspace(0.0, 1.0, n_grid)])
    t = grid.points[:, 0]
    base = smooth_members(rng, m, t)
    high = Ensemble(grid, base + 0.02 * rng.standard_normal((m, n_grid)), "high",
                    params=np.arange(m)[:, None])
    bifi = Ensemble(grid, high.members + perturb * rng.standard_normal((m, n_grid)),
                    "bifidelity", params=np.arange(m)[:, None])
    idx = rng.choice(n_grid, size=n_obs, replace=False)
    y = high.members[0, idx] + 0.1 * rng.standard_normal(n_obs)
    obs = Observations(grid.points[idx], y)
    return high, bifi, obs


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
