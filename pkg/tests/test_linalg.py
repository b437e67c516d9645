import numpy as np
import pytest

from biphik.linalg import (
    NegativeDiagonal,
    NotPositiveDefinite,
    Singular,
    cholesky_solve,
    factor_spd,
    inverse_perturbation_bound,
    inverse_spectral_norm,
    operator_norm,
    pivoted_cholesky,
    spectral_norm,
)


def gauss_elim_solve(a, b):
    """Independent oracle: Gaussian elimination with partial pivoting."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for k in range(n):
        p = k + np.argmax(np.abs(a[k:, k]))
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        for i in range(k + 1, n):
            f = a[i, k] / a[k, k]
            a[i, k:] -= f * a[k, k:]
            b[i] -= f * b[k]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - a[i, i + 1:] @ x[i + 1:]) / a[i, i]
    return x


def random_spd(rng, n, cond=10.0):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    eig = np.linspace(1.0, cond, n)
    return q @ np.diag(eig) @ q.T


class TestCholeskySolve:
    def test_identity(self):
        x = cholesky_solve(np.eye(3), [1.0, 2.0, 3.0])
        np.testing.assert_allclose(x, [1.0, 2.0, 3.0], rtol=1e-14)

    def test_two_by_two(self):
        x = cholesky_solve([[2.0, 1.0], [1.0, 2.0]], [3.0, 3.0])
        np.testing.assert_allclose(x, [1.0, 1.0], rtol=1e-12)

    def test_singular_with_ridge(self):
        # Analytic solution 1/(2+eps) * (1, 1); the ridged system has
        # condition ~2/eps, so expect accuracy ~cond * machine epsilon.
        eps = 1e-8
        x = cholesky_solve([[1.0, 1.0], [1.0, 1.0]], [1.0, 1.0], ridge=eps)
        expect = np.full(2, 1.0 / (2.0 + eps))
        np.testing.assert_allclose(x, expect, rtol=1e-7)

    def test_not_positive_definite(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky_solve([[1.0, 1.0], [1.0, 1.0]], [1.0, 1.0], ridge=0.0)
        with pytest.raises(NotPositiveDefinite):
            cholesky_solve([[0.0, 0.0], [0.0, -1.0]], [1.0, 1.0], ridge=1e-12)

    def test_residual_small(self, rng):
        for n in [2, 5, 10]:
            a = random_spd(rng, n, cond=100.0)
            b = rng.standard_normal(n)
            x = cholesky_solve(a, b)
            res = np.linalg.norm(a @ x - b) / np.linalg.norm(b)
            assert res <= 1e-10

    def test_matches_gaussian_elimination(self, rng):
        for n in range(2, 11):
            a = random_spd(rng, n)
            b = rng.standard_normal(n)
            x = cholesky_solve(a, b)
            np.testing.assert_allclose(x, gauss_elim_solve(a, b), rtol=1e-9)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            cholesky_solve([[1.0, 0.5], [0.0, 1.0]], [1.0, 1.0])


def brute_force_pivots(w):
    """Greedy sequence maximizing the Schur-complement diagonal each step."""
    w = np.asarray(w, dtype=float)
    n = w.shape[0]
    order = []
    for _ in range(n):
        best, best_d = None, -np.inf
        for i in range(n):
            if i in order:
                continue
            if order:
                g = w[np.ix_(order, order)]
                wi = w[order, i]
                d = w[i, i] - wi @ np.linalg.solve(g, wi)
            else:
                d = w[i, i]
            if d > best_d + 1e-13:
                best, best_d = i, d
        if best_d <= 1e-12 * w.diagonal().max():
            break
        order.append(best)
    return order


class TestPivotedCholesky:
    def test_identity(self):
        pc = pivoted_cholesky(np.eye(3))
        assert pc.rank == 3
        np.testing.assert_array_equal(pc.pivot, [0, 1, 2])

    def test_gramian_example(self):
        # Three 2-d rows span a plane: after the tied unit diagonals pick
        # indices 0 then 2, the middle row is exactly represented and the
        # factorization stops at rank 2.
        rows = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]])
        w = rows @ rows.T
        pc = pivoted_cholesky(w)
        assert pc.pivot[0] == 0
        assert pc.pivot[1] == 2
        assert pc.rank == 2
        assert pc.terminal_residual <= 1e-12
        np.testing.assert_array_equal(pc.pivot[:pc.rank], brute_force_pivots(w))

    def test_rank_one(self, rng):
        v = rng.standard_normal(6)
        pc = pivoted_cholesky(np.outer(v, v))
        assert pc.rank == 1
        assert pc.terminal_residual <= 1e-12 * (v @ v)

    def test_reconstruction_full_rank(self, rng):
        w = random_spd(rng, 8, cond=50.0)
        pc = pivoted_cholesky(w)
        assert pc.rank == 8
        err = np.linalg.norm(pc.reconstruct() - w) / np.linalg.norm(w)
        assert err <= 1e-8

    def test_residual_diag_nonincreasing(self, rng):
        for _ in range(20):
            w = random_spd(rng, 7, cond=1e4)
            pc = pivoted_cholesky(w)
            assert np.all(np.diff(pc.residual_diag) <= 1e-12 * pc.residual_diag[0])

    def test_matches_brute_force(self, rng):
        for n in range(2, 7):
            for _ in range(20):
                w = random_spd(rng, n, cond=100.0)
                pc = pivoted_cholesky(w)
                np.testing.assert_array_equal(pc.pivot[:pc.rank], brute_force_pivots(w))

    def test_negative_diagonal_raises(self):
        with pytest.raises(NegativeDiagonal):
            pivoted_cholesky(np.diag([1.0, -0.5]))


class TestSpectralNorms:
    def test_diagonal(self):
        assert spectral_norm(np.diag([1.0, 4.0])) == pytest.approx(4.0, rel=1e-9)

    def test_inverse_norm(self, rng):
        a = random_spd(rng, 6, cond=40.0)
        expect = 1.0 / np.linalg.eigvalsh(a).min()
        assert inverse_spectral_norm(a) == pytest.approx(expect, rel=1e-8)

    def test_operator_norm_rectangular(self, rng):
        a = rng.standard_normal((3, 7))
        assert operator_norm(a) == pytest.approx(np.linalg.svd(a, compute_uv=False)[0], rel=1e-8)

    def test_singular_raises(self):
        with pytest.raises(Singular):
            inverse_spectral_norm(np.ones((3, 3)))


class TestInversePerturbationBound:
    def test_zero_perturbation(self):
        assert inverse_perturbation_bound(2.0 * np.eye(2), np.zeros((2, 2))) == 0.0

    def test_identity_case(self):
        assert inverse_perturbation_bound(np.eye(2), 0.1 * np.eye(2)) == pytest.approx(0.1, rel=1e-9)

    def test_diagonal_case(self):
        got = inverse_perturbation_bound(np.diag([1.0, 4.0]), np.diag([0.0, 0.4]))
        assert got == pytest.approx(0.4, rel=1e-9)

    def test_bounds_measured_difference(self, rng):
        # PSD perturbations keep the inequality exact; shrinking ones can
        # exceed the first-order bound, so the property is stated for the
        # non-shrinking direction.
        for _ in range(50):
            n = int(rng.integers(2, 21))
            a = random_spd(rng, n, cond=30.0)
            g = rng.standard_normal((n, n)) * 0.05
            da = g @ g.T
            da = 0.5 * (da + da.T)
            d = np.linalg.inv(a + da) - np.linalg.inv(a)
            measured = spectral_norm(0.5 * (d + d.T))
            assert measured <= inverse_perturbation_bound(a, da) * (1 + 1e-9)

    def test_singular_sum_raises(self):
        a = np.eye(2)
        with pytest.raises(Singular):
            inverse_perturbation_bound(a, -np.eye(2))


class TestFactorSpd:
    def test_auto_ridge_flag(self):
        fac = factor_spd(np.ones((3, 3)), ridge=0.0, escalate=True)
        assert fac.auto_ridged
        assert fac.ridge > 0

    def test_no_flag_when_clean(self, rng):
        fac = factor_spd(random_spd(rng, 4), ridge=0.0, escalate=True)
        assert not fac.auto_ridged
        assert fac.ridge == 0.0
