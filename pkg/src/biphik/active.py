"""Greedy active learning: acquire observations at the posterior MSE maximum.

Works with any regressor that exposes the Posterior interface; the caller
supplies a refit callable so each method controls what gets re-estimated
per iteration (Kriging re-optimizes hyperparameters, ensemble methods
reuse their statistics, ensemble-CoKriging reruns its full fit).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import as_points


class OracleFailure(Exception):
    """Truth evaluator raised while being queried at a new location."""


class ExhaustedCandidates(Exception):
    """No candidate locations left before reaching the observation budget."""


@dataclass
class ActiveStep:
    """One row of the acquisition history."""

    step: int
    n_obs: int
    new_point: np.ndarray | None
    observations: object
    posterior: object
    rel_error: float | None


def relative_field_error(predicted, truth):
    """|| F_r - F ||_F / || F ||_F over a shared evaluation set."""
    predicted = np.asarray(predicted, dtype=float)
    truth = np.asarray(truth, dtype=float)
    return float(np.linalg.norm(predicted - truth) / np.linalg.norm(truth))


def _drop_matching(candidates, points, tol=1e-12):
    """Remove candidate rows that coincide with given points."""
    keep = np.ones(len(candidates), dtype=bool)
    for p in as_points(points):
        d = np.max(np.abs(candidates - p), axis=1)
        keep &= d > tol
    return candidates[keep]


def run_active_loop(fit_posterior, initial_obs, oracle, candidate_grid, n_max,
                    truth_points=None, truth_values=None):
    """Greedy MSE-maximizing acquisition from `initial_obs` up to `n_max`.

    Parameters
    ----------
    fit_posterior : callable
        Maps Observations to a Posterior-like object (mean_at / mse_at).
    oracle : callable
        Truth evaluator, one d-dimensional point -> value.
    candidate_grid : array_like
        Acquisition candidates; existing observation points are removed.
    n_max : int
        Total observation budget (must be >= the initial count).
    truth_points, truth_values : optional
        Evaluation set for the per-step relative Frobenius error.

    Returns the history as a list of :class:`ActiveStep`, one entry for the
    initial fit plus one per acquisition.  Ties in the MSE argmax break to
    the lowest candidate index.
    """
    obs = initial_obs
    if n_max < len(obs):
        raise ValueError("n_max is smaller than the initial observation count")
    candidates = _drop_matching(as_points(candidate_grid), obs.locations)

    def fit_and_record(step, new_point):
        post = fit_posterior(obs)
        err = None
        if truth_points is not None:
            err = relative_field_error(post.mean_at(truth_points), truth_values)
        return post, ActiveStep(step, len(obs), new_point, obs, post, err)

    post, rec = fit_and_record(0, None)
    history = [rec]
    step = 0
    while len(obs) < n_max:
        if len(candidates) == 0:
            raise ExhaustedCandidates(
                f"no candidates left with {len(obs)} of {n_max} observations"
            )
        step += 1
        mse = post.mse_at(candidates)
        j = int(np.argmax(mse))
        x_new = candidates[j].copy()
        try:
            y_new = float(oracle(x_new))
        except Exception as exc:
            raise OracleFailure(f"oracle failed at {x_new}: {exc}") from exc
        if not np.isfinite(y_new):
            raise OracleFailure(f"oracle returned non-finite value at {x_new}")
        obs = obs.extended(x_new, y_new)
        candidates = np.delete(candidates, j, axis=0)
        post, rec = fit_and_record(step, x_new)
        history.append(rec)
    return history
