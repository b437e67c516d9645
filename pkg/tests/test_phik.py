import numpy as np
import pytest

from biphik import (
    Ensemble,
    Grid,
    Observations,
    SingleMember,
    ensemble_statistics,
    phik_posterior,
    uniform_grid,
)
from tests.conftest import smooth_members


class TestGridAndEnsemble:
    def test_uniform_grid_lexicographic(self):
        g = uniform_grid([(0.0, 1.0), (0.0, 2.0)], (2, 3))
        expect = [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [1, 2]]
        np.testing.assert_allclose(g.points, expect)

    def test_member_shape_validated(self):
        g = uniform_grid([(0.0, 1.0)], (4,))
        with pytest.raises(ValueError):
            Ensemble(g, np.zeros((3, 5)))

    def test_values_at_grid_fast_path(self, rng):
        g = uniform_grid([(0.0, 1.0)], (6,))
        e = Ensemble(g, rng.standard_normal((4, 6)))
        np.testing.assert_array_equal(e.values_at(g.points), e.members.T)

    def test_values_at_interpolates(self, rng):
        g = uniform_grid([(0.0, 1.0)], (5,))
        members = np.tile(g.points[:, 0], (3, 1))  # u(x) = x for everyone
        e = Ensemble(g, members)
        v = e.values_at([[0.3], [0.62]])
        np.testing.assert_allclose(v, [[0.3] * 3, [0.62] * 3], atol=1e-12)

    def test_bilinear_2d(self):
        g = uniform_grid([(0.0, 1.0), (0.0, 1.0)], (3, 3))
        f = g.points[:, 0] * 2 + g.points[:, 1]  # bilinear, interp is exact
        e = Ensemble(g, np.stack([f, 2 * f]))
        v = e.values_at([[0.25, 0.75]])
        np.testing.assert_allclose(v, [[1.25, 2.5]], atol=1e-12)


class TestEnsembleStatistics:
    def test_identical_members(self):
        g = uniform_grid([(0.0, 1.0)], (5,))
        field = np.linspace(1, 2, 5)
        e = Ensemble(g, np.tile(field, (4, 1)))
        model = ensemble_statistics(e)
        np.testing.assert_allclose(model.mean_at(g.points), field)
        np.testing.assert_allclose(model.cov_at(g.points, g.points), 0.0, atol=1e-14)

    def test_two_constant_members(self):
        # Members 0 and 2: mean 1, covariance 2 everywhere (divisor M-1).
        g = uniform_grid([(0.0, 1.0)], (4,))
        e = Ensemble(g, np.stack([np.zeros(4), np.full(4, 2.0)]))
        model = ensemble_statistics(e)
        np.testing.assert_allclose(model.mean_at(g.points), 1.0)
        np.testing.assert_allclose(model.cov_at(g.points, g.points), 2.0)
        np.testing.assert_allclose(model.var_at(g.points), 2.0)

    def test_single_member_raises(self):
        g = uniform_grid([(0.0, 1.0)], (4,))
        with pytest.raises(SingleMember):
            ensemble_statistics(Ensemble(g, np.zeros((1, 4))))

    def test_covariance_psd(self, rng):
        g = uniform_grid([(0.0, 1.0)], (8,))
        e = Ensemble(g, smooth_members(rng, 5, g.points[:, 0]))
        c = ensemble_statistics(e).cov_at(g.points, g.points)
        eig = np.linalg.eigvalsh(0.5 * (c + c.T))
        assert eig.min() >= -1e-8 * np.trace(c) / len(c)


class TestPhikPosterior:
    def test_reproduces_member_observations(self, rng):
        g = uniform_grid([(0.0, 1.0)], (9,))
        e = Ensemble(g, smooth_members(rng, 6, g.points[:, 0])
                     + 0.01 * rng.standard_normal((6, 9)))
        idx = [1, 4, 7]
        y = e.members[2, idx]
        obs = Observations(g.points[idx], y)
        post = phik_posterior(e, obs, ridge=0.0)
        np.testing.assert_allclose(post.mean_at(obs.locations), y, atol=1e-9)
        assert np.max(post.mse_at(obs.locations)) <= 1e-10 * np.max(post.model.var_at(g.points))

    def test_single_observation_closed_form(self):
        # Two-member ensemble: posterior has the scalar regression form.
        g = uniform_grid([(0.0, 1.0)], (5,))
        t = g.points[:, 0]
        e = Ensemble(g, np.stack([t, t + 2.0]))
        obs = Observations([[t[2]]], [t[2] + 1.5])
        post = phik_posterior(e, obs, ridge=0.0)
        model = ensemble_statistics(e)
        x_star = [[t[4]]]
        k_x0 = model.cov_at(x_star, obs.locations)[0, 0]
        k_00 = model.cov_at(obs.locations, obs.locations)[0, 0]
        mu = model.mean_at(np.asarray(x_star))[0]
        mu0 = model.mean_at(obs.locations)[0]
        expect = mu + k_x0 / k_00 * (obs.values[0] - mu0)
        assert post.mean_at(x_star)[0] == pytest.approx(expect, rel=1e-12)

    def test_rank_deficient_escalates(self, rng):
        # M - 1 < N forces a rank-deficient covariance; the automatic
        # ridge must kick in and keep the result finite.
        g = uniform_grid([(0.0, 1.0)], (8,))
        e = Ensemble(g, smooth_members(rng, 3, g.points[:, 0]))
        idx = [0, 2, 4, 6, 7]
        obs = Observations(g.points[idx], rng.standard_normal(5))
        post = phik_posterior(e, obs)
        assert post.auto_ridged
        assert np.all(np.isfinite(post.mean_at(g.points)))

    def test_posterior_mean_in_member_span(self, rng):
        for m, n_obs in [(3, 2), (5, 3)]:
            g = uniform_grid([(0.0, 1.0)], (7,))
            e = Ensemble(g, smooth_members(rng, m, g.points[:, 0])
                         + 0.05 * rng.standard_normal((m, 7)))
            idx = rng.choice(7, n_obs, replace=False)
            obs = Observations(g.points[idx], rng.standard_normal(n_obs))
            post = phik_posterior(e, obs, ridge=0.0)
            mean_field = post.mean_at(g.points)
            # mean must lie in mu + span of centered members
            basis = e.centered().T
            resid = mean_field - e.mean_field()
            coef, *_ = np.linalg.lstsq(basis, resid, rcond=None)
            assert np.linalg.norm(basis @ coef - resid) <= 1e-8 * max(np.linalg.norm(resid), 1.0)

    def test_linear_constraint_preserved(self, rng):
        # Every member satisfies u[first] - u[last] = 0; so does the
        # posterior mean, to solver tolerance.
        g = uniform_grid([(0.0, 1.0)], (10,))
        members = smooth_members(rng, 5, g.points[:, 0])
        members[:, -1] = members[:, 0]
        e = Ensemble(g, members)
        obs = Observations(g.points[[2, 5]], rng.standard_normal(2))
        post = phik_posterior(e, obs, ridge=0.0)
        mean_field = post.mean_at(g.points)
        scale = np.max(np.abs(mean_field))
        assert abs(mean_field[0] - mean_field[-1]) <= 1e-9 * scale


class TestPersistence:
    def test_round_trip_bit_exact(self, rng, tmp_path):
        g = uniform_grid([(0.0, 1.0), (0.0, 1.0)], (4, 3))
        e = Ensemble(g, rng.standard_normal((5, 12)), "low",
                     params=rng.standard_normal((5, 2)), seed=99,
                     cost={"total_s": 1.5, "n": 5})
        e.save(tmp_path / "ens")
        back = Ensemble.load(tmp_path / "ens")
        assert back.fidelity == "low"
        assert back.seed == 99
        assert back.cost == {"total_s": 1.5, "n": 5}
        np.testing.assert_array_equal(back.members, e.members)
        np.testing.assert_array_equal(back.params, e.params)
        assert back.grid == e.grid

    def test_save_is_deterministic(self, rng, tmp_path):
        g = uniform_grid([(0.0, 1.0)], (6,))
        e = Ensemble(g, rng.standard_normal((3, 6)), "high", seed=1)
        e.save(tmp_path / "a")
        e.save(tmp_path / "b")
        for name in ["manifest.json", "member_0000.csv", "member_0002.csv"]:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
