"""Dense symmetric linear algebra used throughout the library.

Cholesky solves with optional ridge regularization, greedy pivoted Cholesky
factorization (the column-selection workhorse of the bifidelity method),
power-iteration spectral norms, and the matrix-perturbation bound used by
the error-bound verifier.  Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve, LinAlgError


class NotPositiveDefinite(Exception):
    """Cholesky factorization hit a non-positive pivot (after any ridge)."""


class NegativeDiagonal(Exception):
    """A pivoted-Cholesky residual diagonal went significantly negative."""


class Singular(Exception):
    """Matrix could not be factored (exactly singular or non-finite)."""


# Power-iteration controls: no eigensolver dependency is needed for the
# bound verifier, and these tolerances keep the norms reproducible.
POWER_TOL = 1e-10
POWER_MAXIT = 10_000

# Automatic ridge scale for near-singular covariance solves.
AUTO_RIDGE_SCALE = 1e-10
MAX_RIDGE_DOUBLINGS = 6


def symmetrize(a, rtol=1e-12, name="matrix"):
    """Validate that `a` is square, finite and symmetric; return (a + aT)/2.

    Symmetry is required to within `rtol` relative to the largest entry.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    scale = np.max(np.abs(a)) if a.size else 0.0
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > rtol * max(scale, 1.0e-300):
        raise ValueError(f"{name} is not symmetric (relative asymmetry {asym / scale:.3e})")
    return 0.5 * (a + a.T)


@dataclass
class SpdFactor:
    """Cholesky factorization of A + ridge*I, reusable across many solves.

    Attributes
    ----------
    ridge : float
        Regularization actually applied (may exceed the requested one if
        escalation was needed).
    auto_ridged : bool
        True when a ridge was applied automatically because the requested
        one did not yield a positive-definite factorization.
    escalations : int
        Number of ridge doublings that were required.
    """

    c_and_lower: tuple
    n: int
    ridge: float
    auto_ridged: bool
    escalations: int

    def solve(self, b):
        return cho_solve(self.c_and_lower, np.asarray(b, dtype=float))

    @property
    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.c_and_lower[0]))))


def _try_cho(a, ridge):
    m = a if ridge == 0.0 else a + ridge * np.eye(a.shape[0])
    try:
        c, low = cho_factor(m, lower=True)
    except LinAlgError:
        return None
    if not np.all(np.isfinite(np.diag(c))) or np.any(np.diag(c) <= 0):
        return None
    return (c, low)


def factor_spd(a, ridge=0.0, escalate=False, label="matrix"):
    """Factor the SPD matrix A + ridge*I, optionally escalating the ridge.

    With ``escalate=True`` a failed factorization first falls back to the
    automatic ridge 1e-10 * trace/n, then doubles it up to six times before
    raising :class:`NotPositiveDefinite`.  `label` names the matrix in
    error messages.
    """
    a = symmetrize(a, name=label)
    n = a.shape[0]
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    cl = _try_cho(a, ridge)
    if cl is not None:
        return SpdFactor(cl, n, ridge, False, 0)
    if not escalate:
        raise NotPositiveDefinite(
            f"Cholesky factorization of {label} (size {n}) failed with ridge {ridge:g}"
        )
    base = ridge if ridge > 0 else AUTO_RIDGE_SCALE * np.trace(a) / n
    if base <= 0:
        base = AUTO_RIDGE_SCALE
    r = base
    for k in range(MAX_RIDGE_DOUBLINGS + 1):
        cl = _try_cho(a, r)
        if cl is not None:
            return SpdFactor(cl, n, r, True, k)
        r *= 2.0
    raise NotPositiveDefinite(
        f"Cholesky factorization of {label} (size {n}) failed after ridge escalation to {r / 2:g}"
    )


def cholesky_solve(a, b, ridge=0.0):
    """Solve (A + ridge*I) x = b for symmetric positive-definite A.

    Parameters
    ----------
    a : (n, n) array_like
        Symmetric matrix.
    b : (n,) or (n, m) array_like
        Right-hand side(s).
    ridge : float
        Non-negative diagonal regularization.

    Raises
    ------
    NotPositiveDefinite
        If the factorization encounters a non-positive pivot even with the
        requested ridge.
    """
    fac = factor_spd(a, ridge=ridge, escalate=False)
    return fac.solve(b)


@dataclass
class PivotedCholesky:
    """Result of a greedy diagonally-pivoted Cholesky factorization.

    The permuted matrix W[p][:, p] equals L @ L.T up to the retained rank;
    at full rank the reconstruction is exact to round-off.

    Attributes
    ----------
    lower : (n, rank) ndarray
        Lower-trapezoidal factor, rows in pivot order.
    pivot : (n,) ndarray of int
        Full permutation: the first `rank` entries are the greedy pivots,
        the remainder follows in ascending original index.
    rank : int
        Number of pivots retained before the stopping rule fired.
    residual_diag : (rank,) ndarray
        Residual diagonal value at each accepted pivot (non-increasing for
        a PSD input).
    terminal_residual : float
        Largest residual diagonal remaining when the factorization stopped
        (0 at full rank).
    """

    lower: np.ndarray
    pivot: np.ndarray
    rank: int
    residual_diag: np.ndarray
    terminal_residual: float

    def reconstruct(self):
        """Return P^T L L^T P, the rank-`rank` approximation of the input."""
        n = self.lower.shape[0]
        w_perm = self.lower @ self.lower.T
        inv = np.argsort(self.pivot)
        return w_perm[np.ix_(inv, inv)]


def pivoted_cholesky(w, threshold=1e-12):
    """Greedy pivoted Cholesky of a symmetric PSD matrix.

    At each step the pivot is the largest residual diagonal entry (ties
    broken by lowest index).  The factorization stops once the largest
    residual diagonal drops to ``threshold`` times the initial maximum
    diagonal, or when all columns are used.

    Raises
    ------
    NegativeDiagonal
        If a residual diagonal below -1e-8 times the initial maximum
        appears, indicating the input was not PSD.
    """
    a = symmetrize(w)
    n = a.shape[0]
    piv = np.arange(n)
    if n == 0:
        return PivotedCholesky(np.zeros((0, 0)), piv, 0, np.zeros(0), 0.0)
    d0 = float(np.max(np.diag(a)))
    if d0 < -1e-12:
        raise NegativeDiagonal(f"initial diagonal maximum {d0:g} is negative")
    neg_floor = -1e-8 * max(d0, 0.0)
    pivot_values = []
    rank = 0
    for k in range(n):
        d = np.diag(a)[k:]
        if np.min(d) < neg_floor:
            raise NegativeDiagonal(
                f"residual diagonal {np.min(d):g} below {neg_floor:g}; input not PSD"
            )
        j = k + int(np.argmax(d))
        dmax = a[j, j]
        if dmax <= threshold * d0:
            break
        if j != k:
            a[[k, j], :] = a[[j, k], :]
            a[:, [k, j]] = a[:, [j, k]]
            piv[[k, j]] = piv[[j, k]]
        pivot_values.append(float(a[k, k]))
        a[k, k] = np.sqrt(a[k, k])
        if k + 1 < n:
            a[k + 1 :, k] /= a[k, k]
            a[k + 1 :, k + 1 :] -= np.outer(a[k + 1 :, k], a[k + 1 :, k])
            a[k, k + 1 :] = 0.0
        rank = k + 1
    terminal = float(max(np.max(np.diag(a)[rank:]), 0.0)) if rank < n else 0.0
    # Deterministic order for the never-pivoted tail.
    piv = np.concatenate([piv[:rank], np.sort(piv[rank:])])
    lower = np.tril(a)[:, :rank]
    return PivotedCholesky(lower, piv, rank, np.array(pivot_values), terminal)


def _power_norm(matvec, n):
    """Largest singular value of a symmetric operator given by `matvec`."""
    if n == 0:
        return 0.0
    v = np.ones(n) + 1e-3 * np.arange(n)
    v /= np.linalg.norm(v)
    s_old = 0.0
    for _ in range(POWER_MAXIT):
        w = matvec(v)
        s = float(np.linalg.norm(w))
        if s == 0.0 or not np.isfinite(s):
            return s
        v = w / s
        if abs(s - s_old) <= POWER_TOL * s:
            return s
        s_old = s
    return s_old


def spectral_norm(a):
    """Spectral norm of a symmetric matrix by power iteration."""
    a = symmetrize(a)
    return _power_norm(lambda v: a @ v, a.shape[0])


def operator_norm(a):
    """Spectral norm (largest singular value) of a general matrix."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    # Power-iterate on A^T A over the smaller side.
    if a.shape[0] <= a.shape[1]:
        m = a @ a.T
    else:
        m = a.T @ a
    m = 0.5 * (m + m.T)
    return float(np.sqrt(max(_power_norm(lambda v: m @ v, m.shape[0]), 0.0)))


def inverse_spectral_norm(a):
    """Spectral norm of the inverse of a symmetric invertible matrix.

    Raises :class:`Singular` if `a` cannot be factored.
    """
    a = symmetrize(a)
    n = a.shape[0]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # scipy warns before we raise
            lu = lu_factor(a)
    except (LinAlgError, ValueError) as exc:
        raise Singular(str(exc)) from exc
    du = np.abs(np.diag(lu[0]))
    if np.any(du == 0.0) or not np.all(np.isfinite(du)):
        raise Singular("matrix is singular to working precision")
    return _power_norm(lambda v: lu_solve(lu, v), n)


def inverse_perturbation_bound(a, da):
    """Right-hand side of the perturbation inequality for matrix inverses.

    Returns ||A^-1||_2^2 * ||dA||_2, which bounds ||(A+dA)^-1 - A^-1||_2
    for invertible A when the perturbation does not shrink the smallest
    singular value (e.g. PSD dA on SPD A).

    Raises
    ------
    Singular
        If A or A + dA fails to factor.
    """
    a = symmetrize(a, name="A")
    da = symmetrize(da, name="dA")
    if a.shape != da.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {da.shape}")
    inv_norm = inverse_spectral_norm(a)
    inverse_spectral_norm(a + da)  # existence check only
    return inv_norm**2 * spectral_norm(da)
