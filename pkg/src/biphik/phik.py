"""Physics-informed Kriging: GP priors from ensembles of model runs.

An :class:`Ensemble` holds M realizations of a stochastic model sampled on a
shared structured grid.  Its empirical mean and (unbiased, divisor M-1)
covariance define a :class:`~biphik.gp.GpModel` with no hyperparameters;
conditioning that model on observations is the PhIK posterior.  Ensembles
persist to a directory of one CSV per member plus a JSON manifest, with
bit-exact round-trip.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .gp import GpModel, Posterior, as_points
from .linalg import AUTO_RIDGE_SCALE


class SingleMember(Exception):
    """Ensemble statistics need at least two members."""


class GridMismatch(Exception):
    """Operation across ensembles requires a shared grid."""


@dataclass
class Grid:
    """Structured tensor-product grid with points in lexicographic order."""

    axes: list

    def __post_init__(self):
        self.axes = [np.asarray(a, dtype=float) for a in self.axes]
        for a in self.axes:
            if a.ndim != 1 or len(a) < 2 or np.any(np.diff(a) <= 0):
                raise ValueError("grid axes must be increasing 1-d arrays")

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def ndim(self):
        return len(self.axes)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def __eq__(self, other):
        return isinstance(other, Grid) and len(self.axes) == len(other.axes) and all(
            np.array_equal(a, b) for a, b in zip(self.axes, other.axes)
        )


def uniform_grid(bounds, shape):
    """Uniform grid on a box; `bounds` is a list of (lo, hi) per dimension."""
    return Grid([np.linspace(lo, hi, n) for (lo, hi), n in zip(bounds, shape)])


class Ensemble:
    """Ordered collection of fields sharing a grid and a parameter sample set.

    Parameters
    ----------
    grid : Grid
        Shared structured grid.
    members : (M, n) ndarray
        One flattened field per realization, aligned with ``grid.points``.
    fidelity : str
        "high", "low" or "bifidelity".
    params : array_like or None
        Parameter sample z^m per member (the set Gamma), shape (M, ...).
    seed : int or None
        Seed that generated the samples, recorded for reproducibility.
    cost : dict or None
        Wall-clock accounting from the generator (total seconds, count).
    """

    def __init__(self, grid, members, fidelity="high", params=None, seed=None, cost=None):
        self.grid = grid
        self.members = np.asarray(members, dtype=float)
        if self.members.ndim != 2 or self.members.shape[1] != grid.size:
            raise ValueError(
                f"members must be (M, {grid.size}), got {self.members.shape}"
            )
        if fidelity not in ("high", "low", "bifidelity"):
            raise ValueError(f"unknown fidelity tag {fidelity!r}")
        self.fidelity = fidelity
        self.params = None if params is None else np.asarray(params)
        if self.params is not None and len(self.params) != len(self.members):
            raise ValueError("one parameter sample per member is required")
        self.seed = seed
        self.cost = cost
        self._interp = None

    @property
    def n_members(self):
        return self.members.shape[0]

    def subset(self, indices, fidelity=None):
        """Ensemble restricted to the given member indices (in that order)."""
        idx = np.asarray(indices, dtype=int)
        return Ensemble(
            self.grid,
            self.members[idx],
            fidelity or self.fidelity,
            None if self.params is None else self.params[idx],
            seed=self.seed,
        )

    def values_at(self, points):
        """Member values at arbitrary points, shape (n_points, M).

        Queries that coincide exactly with grid nodes return the stored
        values; anything else uses multilinear interpolation of each
        member field.
        """
        points = as_points(points)
        if points.shape[1] != self.grid.ndim:
            raise ValueError(
                f"points have dimension {points.shape[1]}, grid has {self.grid.ndim}"
            )
        flat = self._node_indices(points)
        if flat is not None:
            return self.members[:, flat].T.copy()
        if self._interp is None:
            vals = self.members.T.reshape(*self.grid.shape, self.n_members)
            self._interp = RegularGridInterpolator(
                self.grid.axes, vals, method="linear", bounds_error=True
            )
        return self._interp(points)

    def _node_indices(self, points):
        """Flat grid indices when every point is exactly a node, else None."""
        idx = []
        for d, axis in enumerate(self.grid.axes):
            j = np.clip(np.searchsorted(axis, points[:, d]), 0, len(axis) - 1)
            if not np.array_equal(axis[j], points[:, d]):
                return None
            idx.append(j)
        return np.ravel_multi_index(idx, self.grid.shape)

    def mean_field(self):
        return self.members.mean(axis=0)

    def centered(self):
        return self.members - self.mean_field()

    # -- persistence ------------------------------------------------------

    def save(self, path):
        """Write one CSV per member plus manifest.json; bit-exact round-trip."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        names = [f"x{i}" for i in range(self.grid.ndim)]
        header = ",".join(names + ["value"])
        pts = self.grid.points
        for m in range(self.n_members):
            table = np.column_stack([pts, self.members[m]])
            np.savetxt(
                path / f"member_{m:04d}.csv", table, fmt="%.17g",
                delimiter=",", header=header, comments="",
            )
        manifest = {
            "format_version": 1,
            "grid_shape": list(self.grid.shape),
            "axes": [a.tolist() for a in self.grid.axes],
            "fidelity": self.fidelity,
            "n_members": self.n_members,
            "params": None if self.params is None else self.params.tolist(),
            "seed": self.seed,
        }
        with open(path / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
        if self.cost is not None:
            with open(path / "cost.json", "w") as fh:
                json.dump(self.cost, fh, indent=1, sort_keys=True)
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path / "manifest.json") as fh:
            manifest = json.load(fh)
        grid = Grid([np.asarray(a) for a in manifest["axes"]])
        members = np.empty((manifest["n_members"], grid.size))
        for m in range(manifest["n_members"]):
            table = np.loadtxt(path / f"member_{m:04d}.csv", delimiter=",", skiprows=1)
            members[m] = np.atleast_2d(table)[:, -1]
        params = manifest["params"]
        cost = None
        if (path / "cost.json").exists():
            with open(path / "cost.json") as fh:
                cost = json.load(fh)
        return cls(
            grid, members, manifest["fidelity"],
            None if params is None else np.asarray(params),
            seed=manifest["seed"], cost=cost,
        )


def ensemble_statistics(e):
    """GP model whose mean and covariance are the ensemble statistics.

    The mean is the pointwise average over members; the covariance is the
    unbiased sample covariance (divisor M-1).  Off-grid evaluation
    interpolates the member fields first and derives statistics from the
    interpolated values, which preserves the ensemble's rank structure and
    any linear constraints the members satisfy.
    """
    m = e.n_members
    if m < 2:
        raise SingleMember(f"need at least two members, got {m}")
    denom = m - 1

    def mean_at(x):
        return e.values_at(x).mean(axis=1)

    def centered_at(x):
        v = e.values_at(x)
        return v - v.mean(axis=1, keepdims=True)

    def cov_at(x1, x2):
        return centered_at(x1) @ centered_at(x2).T / denom

    def var_at(x):
        c = centered_at(x)
        return np.sum(c * c, axis=1) / denom

    source = "bifidelity-ensemble" if e.fidelity == "bifidelity" else "ensemble"
    return GpModel(mean_at, cov_at, var_at, source)


def phik_posterior(e, obs, ridge=0.0):
    """PhIK posterior: ensemble-statistics GP conditioned on observations.

    The ensemble covariance has rank at most M-1, so the solve escalates
    the ridge automatically (starting from 1e-10 * trace/N) when the
    observation covariance is rank-deficient.
    """
    model = ensemble_statistics(e)
    return Posterior(model, obs, ridge=ridge, escalate=True)
