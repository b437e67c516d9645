"""Experiment harness: config-driven ensemble generation, fitting,
active learning and bound verification from the command line.

Exit codes: 0 ok, 2 config error, 3 solver blow-up, 4 missing/invalid
inputs, 5 numerical failure (the message names the failing factorization).
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from .active import run_active_loop, relative_field_error
from .bifidelity import InnerProduct, build_bifidelity_ensemble, cost_ratio_report, select_subset
from .bounds import compute_constants, verify_lemmas, verify_theorem_1_2
from .cophik import fit_cophik
from .fileio import (
    read_field_csv,
    read_observations_csv,
    write_cost_json,
    write_field_csv,
    write_json,
    write_metrics,
    write_observations_csv,
    write_run_manifest,
)
from .gp import HyperSearchConfig, fit_ordinary_kriging, posterior
from .linalg import NotPositiveDefinite, Singular
from .models import branin as branin_mod
from .models import ks as ks_mod
from .phik import Ensemble, SingleMember, phik_posterior

EXIT_CONFIG, EXIT_SOLVER, EXIT_INPUTS, EXIT_NUMERICS = 2, 3, 4, 5

METHODS = ("kriging", "phik", "cophik", "biphik", "cobiphik")

PRESETS = {
    "branin-paper": {
        "problem": "branin",
        "seed": 7,
        "m": 300,
        "m_high": 21,
        "threshold": 1e-12,
        "active": {"n_max": 16},
    },
    "ks-paper": {
        "problem": "ks",
        "seed": 0,
        "m": 400,
        "m_high": 17,
        "threshold": 1e-12,
        "active": {"n_max": 18},
    },
}


class ConfigError(Exception):
    pass


class InputError(Exception):
    pass


def load_config(spec, overrides=None):
    """Resolve a preset name or YAML path into a config dict."""
    if spec is None:
        raise ConfigError("a --config (preset name or YAML file) is required")
    if spec in PRESETS:
        cfg = dict(PRESETS[spec])
        cfg["preset"] = spec
    else:
        path = Path(spec)
        if not path.exists():
            raise ConfigError(f"config {spec!r} is neither a preset nor a file")
        try:
            with open(path) as fh:
                cfg = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError(f"config {path} must be a mapping")
    for key, val in (overrides or {}).items():
        if val is not None:
            cfg[key] = val
    if cfg.get("problem") not in ("branin", "ks"):
        raise ConfigError(f"unknown problem {cfg.get('problem')!r}")
    return cfg


def _branin_config(cfg):
    kw = dict(cfg.get("branin") or {})
    kw.setdefault("n_members", cfg.get("m", 300))
    kw.setdefault("m_high", cfg.get("m_high", 21))
    for key in ("grid_high", "grid_low"):
        if key in kw:
            kw[key] = tuple(kw[key])
    return branin_mod.BraninConfig(**kw)


def _ks_config(cfg):
    kw = dict(cfg.get("ks") or {})
    kw.setdefault("n_members", cfg.get("m", 400))
    kw.setdefault("m_high", cfg.get("m_high", 17))
    if "alpha_range" in kw:
        kw["alpha_range"] = tuple(kw["alpha_range"])
    if "init_coeffs" in kw:
        kw["init_coeffs"] = tuple(kw["init_coeffs"])
    return ks_mod.KsConfig(**kw)


def _problem_bundle(cfg):
    """Truth field, observations and evaluation grid for a problem config."""
    if cfg["problem"] == "branin":
        pcfg = _branin_config(cfg)
        grid = branin_mod.branin_grid(pcfg.grid_high)
        truth = branin_mod.branin_truth(pcfg)
        obs = branin_mod.branin_observations(pcfg)
    else:
        pcfg = _ks_config(cfg)
        grid = ks_mod.ks_grid(pcfg.modes_high)
        truth = ks_mod.ks_reference(pcfg)
        obs = ks_mod.ks_observations(pcfg, truth)
    return pcfg, grid, truth, obs


def _generate_ensemble(cfg, fidelity, seed):
    if cfg["problem"] == "branin":
        return branin_mod.branin_stochastic_ensemble(_branin_config(cfg), fidelity, seed)
    pcfg = _ks_config(cfg)
    high, low = ks_mod.ks_ensembles(pcfg, seed=seed)
    return high if fidelity == "high" else low


def _load_ensemble(path, what):
    if path is None:
        raise InputError(f"{what} ensemble directory is required for this method")
    p = Path(path)
    if not (p / "manifest.json").exists():
        raise InputError(f"{what} ensemble not found at {p}")
    return Ensemble.load(p)


def _require_members(e, n=2):
    if e.n_members < n:
        raise InputError(f"ensemble must have at least {n} members, got {e.n_members}")


def _bifidelity_from_inputs(low, high_gamma_dir, cfg, m_high, threshold, out_dir):
    """Select, obtain high-fidelity runs on the subset, and lift."""
    _require_members(low)
    ip = InnerProduct.ones(low.grid.size)
    sel = select_subset(low, ip, m_h=m_high, threshold=threshold)
    if high_gamma_dir is not None:
        high_gamma = _load_ensemble(high_gamma_dir, "high-on-subset")
        if high_gamma.n_members != sel.size:
            raise InputError(
                f"high-on-subset ensemble has {high_gamma.n_members} members; "
                f"selection needs {sel.size}"
            )
    elif cfg is not None:
        if cfg["problem"] == "branin":
            full = branin_mod.branin_stochastic_ensemble(
                _branin_config(cfg), "high", low.seed if low.seed is not None else cfg.get("seed", 0)
            )
            high_gamma = full.subset(sel.gamma_indices)
        else:
            alphas = low.params[sel.gamma_indices][:, 0]
            high_gamma = ks_mod.ks_high_subset(_ks_config(cfg), alphas, seed=low.seed)
    else:
        raise InputError(
            "bifidelity methods need --high-gamma or a --config to generate the subset runs"
        )
    bifi = build_bifidelity_ensemble(low, high_gamma, sel, ip)
    if out_dir is not None:
        write_json(Path(out_dir) / "selection.json", sel.report())
    return bifi, sel


def _exit(code, msg):
    click.echo(msg, err=True)
    sys.exit(code)


def _guarded(fn):
    try:
        fn()
    except ConfigError as exc:
        _exit(EXIT_CONFIG, f"config error: {exc}")
    except ks_mod.BlowUp as exc:
        _exit(EXIT_SOLVER, f"solver blow-up: {exc}")
    except (InputError, SingleMember, FileNotFoundError, ValueError) as exc:
        _exit(EXIT_INPUTS, f"input error: {exc}")
    except (NotPositiveDefinite, Singular) as exc:
        _exit(EXIT_NUMERICS, f"numerical failure: {exc}")


@click.group()
@click.version_option(version=__version__)
def main():
    """Multifidelity physics-informed GP regression experiments."""


@main.command()
@click.option("--config", "config_spec", required=True,
              help="Preset name (branin-paper, ks-paper) or YAML file.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--fidelity", type=click.Choice(["high", "low"]), default="high")
@click.option("--m", type=int, default=None, help="Override the ensemble size.")
@click.option("--out", required=True, type=click.Path(), help="Output ensemble directory.")
def simulate(config_spec, seed, fidelity, m, out):
    """Generate a stochastic-model ensemble and persist it."""

    def run():
        cfg = load_config(config_spec, {"seed": seed, "m": m, "fidelity": fidelity})
        e = _generate_ensemble(cfg, fidelity, cfg.get("seed", 0))
        out_dir = Path(out)
        e.save(out_dir)
        _, _, truth, obs = _problem_bundle(cfg)
        write_observations_csv(out_dir / "observations.csv", obs)
        grid = branin_mod.branin_grid(_branin_config(cfg).grid_high) \
            if cfg["problem"] == "branin" else ks_mod.ks_grid(_ks_config(cfg).modes_high)
        write_field_csv(out_dir / "truth.csv", grid.points, truth)
        write_run_manifest(out_dir, cfg, __version__)
        if e.cost:
            write_cost_json(out_dir, {fidelity: e.cost})
        click.echo(f"wrote {e.n_members} members to {out_dir}")

    _guarded(run)


@main.command()
@click.option("--method", type=click.Choice(METHODS), required=True)
@click.option("--obs", "obs_path", required=True, type=click.Path(),
              help="Observation CSV (coordinates, value).")
@click.option("--ensemble", "ens_dir", type=click.Path(), default=None,
              help="Ensemble directory for phik/cophik (high or bifidelity).")
@click.option("--low-ensemble", "low_dir", type=click.Path(), default=None,
              help="Low-fidelity ensemble for biphik/cobiphik.")
@click.option("--high-gamma", "hg_dir", type=click.Path(), default=None,
              help="High-fidelity-on-subset ensemble (generated from --config if absent).")
@click.option("--high-ensemble", "high_dir", type=click.Path(), default=None,
              help="Full high-fidelity ensemble; enables the bound report.")
@click.option("--config", "config_spec", default=None,
              help="Problem config (needed for kriging grids and on-the-fly subset runs).")
@click.option("--truth", "truth_path", type=click.Path(), default=None,
              help="Truth field CSV for the relative-error metric.")
@click.option("--m-high", type=int, default=None)
@click.option("--threshold", type=float, default=1e-12, show_default=True)
@click.option("--ridge", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--out", required=True, type=click.Path())
def fit(method, obs_path, ens_dir, low_dir, hg_dir, high_dir, config_spec,
        truth_path, m_high, threshold, ridge, seed, out):
    """Fit one regressor and write posterior fields plus metrics."""

    def run():
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if not Path(obs_path).exists():
            raise InputError(f"observation file {obs_path} not found")
        obs = read_observations_csv(obs_path)
        cfg = load_config(config_spec) if config_spec else None
        metrics = {"method": method, "n_obs": len(obs), "ridge": ridge}

        bifi = None
        if method == "kriging":
            if ens_dir is not None:
                grid = _load_ensemble(ens_dir, "query-grid").grid
            elif cfg is not None:
                grid = _problem_bundle(cfg)[1]
            else:
                raise InputError("kriging needs --ensemble or --config to define the query grid")
            model = fit_ordinary_kriging(obs, HyperSearchConfig())
            post = posterior(model, obs, ridge=ridge)
        elif method in ("phik", "cophik"):
            e = _load_ensemble(ens_dir, "prior")
            _require_members(e)
            grid = e.grid
            if method == "phik":
                post = phik_posterior(e, obs, ridge=ridge)
            else:
                fit_res = fit_cophik(e, obs, HyperSearchConfig())
                post = fit_res.posterior(obs, ridge=ridge)
                metrics["rho"] = fit_res.model.rho
                metrics["selected_member"] = fit_res.member_index
        else:
            low = _load_ensemble(low_dir, "low-fidelity")
            mh = m_high if m_high is not None else (cfg or {}).get("m_high") or 0
            if mh <= 0:
                raise InputError("--m-high (or a config with m_high) is required")
            bifi, sel = _bifidelity_from_inputs(low, hg_dir, cfg, mh, threshold, out_dir)
            grid = bifi.grid
            metrics["m_high"] = sel.size
            metrics["selection_exhausted"] = sel.exhausted
            cost = cost_ratio_report(bifi)
            if cost.get("available"):
                metrics["cost_ratio"] = cost["measured_ratio"]
                metrics["cost_ratio_model"] = cost["model_ratio"]
                write_cost_json(out_dir, cost)
            if method == "biphik":
                post = phik_posterior(bifi, obs, ridge=ridge)
            else:
                fit_res = fit_cophik(bifi, obs, HyperSearchConfig())
                post = fit_res.posterior(obs, ridge=ridge)
                metrics["rho"] = fit_res.model.rho
                metrics["selected_member"] = fit_res.member_index

        pts = grid.points
        yhat = post.mean_at(pts)
        shat = post.rmse_at(pts)
        write_field_csv(out_dir / "yhat.csv", pts, yhat)
        write_field_csv(out_dir / "shat.csv", pts, shat)
        metrics["ridge_used"] = getattr(post, "ridge_used", ridge)

        if truth_path is not None:
            tpts, tvals = read_field_csv(truth_path)
            if tpts.shape != pts.shape or not np.allclose(tpts, pts):
                raise InputError("truth field grid does not match the query grid")
            metrics["rel_l2"] = relative_field_error(yhat, tvals)

        if bifi is not None and high_dir is not None:
            high = _load_ensemble(high_dir, "high-fidelity")
            report = compute_constants(high, bifi, obs)
            verify_theorem_1_2(high, bifi, obs, report=report)
            verify_lemmas(high, bifi, obs, report=report)
            report.to_json(out_dir / "bounds.json")
            metrics["delta1"] = report.delta1
            metrics["delta2"] = report.delta2

        write_metrics(out_dir / "metrics.json", **metrics)
        if cfg is not None:
            write_run_manifest(out_dir, cfg, __version__, {"method": method})
        click.echo(f"method={method} n_obs={len(obs)}"
                   + (f" rel_l2={metrics['rel_l2']:.6g}" if "rel_l2" in metrics else ""))

    _guarded(run)


@main.command()
@click.option("--method", type=click.Choice(METHODS), required=True)
@click.option("--config", "config_spec", required=True)
@click.option("--n-max", type=int, required=True, help="Total observation budget.")
@click.option("--seed", type=int, default=None)
@click.option("--m-high", type=int, default=None)
@click.option("--threshold", type=float, default=1e-12)
@click.option("--ridge", type=float, default=0.0)
@click.option("--out", required=True, type=click.Path())
def active(method, config_spec, n_max, seed, m_high, threshold, ridge, out):
    """Greedy active learning on a built-in problem; writes a history CSV."""

    def run():
        cfg = load_config(config_spec, {"seed": seed})
        pcfg, grid, truth, obs0 = _problem_bundle(cfg)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        search = HyperSearchConfig()

        e = None
        if method in ("phik", "cophik"):
            e = _generate_ensemble(cfg, "high", cfg.get("seed", 0))
        elif method in ("biphik", "cobiphik"):
            low = _generate_ensemble(cfg, "low", cfg.get("seed", 0))
            mh = m_high if m_high is not None else cfg.get("m_high")
            e, _ = _bifidelity_from_inputs(low, None, cfg, mh, threshold, out_dir)

        if method == "kriging":
            fit_posterior = lambda o: posterior(fit_ordinary_kriging(o, search), o, ridge=ridge)
        elif method in ("phik", "biphik"):
            fit_posterior = lambda o: phik_posterior(e, o, ridge=ridge)
        else:
            fit_posterior = lambda o: fit_cophik(e, o, search).posterior(o, ridge=ridge)

        lookup = {tuple(p): v for p, v in zip(grid.points, truth)}

        def oracle(x):
            return lookup[tuple(x)]

        history = run_active_loop(
            fit_posterior, obs0, oracle, grid.points, n_max,
            truth_points=grid.points, truth_values=truth,
        )
        rows = []
        d = grid.ndim
        for rec in history:
            coords = ["" for _ in range(d)] if rec.new_point is None else [
                f"{c:.17g}" for c in rec.new_point
            ]
            rows.append([str(rec.step), str(rec.n_obs)] + coords + [f"{rec.rel_error:.17g}"])
        header = ["step", "n_obs"] + [f"x{i}" for i in range(d)] + ["rel_error"]
        with open(out_dir / "history.csv", "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
        write_run_manifest(out_dir, cfg, __version__, {"method": method, "n_max": n_max})
        click.echo(f"final rel_error={history[-1].rel_error:.6g} after {history[-1].n_obs} observations")

    _guarded(run)


@main.command()
@click.option("--high", "high_dir", required=True, type=click.Path())
@click.option("--bifi", "bifi_dir", required=True, type=click.Path())
@click.option("--obs", "obs_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(),
              help="Output JSON file for the bound report.")
def bounds(high_dir, bifi_dir, obs_path, out):
    """Evaluate the error-bound constants and posterior-difference bounds."""

    def run():
        high = _load_ensemble(high_dir, "high-fidelity")
        bifi = _load_ensemble(bifi_dir, "bifidelity")
        if not Path(obs_path).exists():
            raise InputError(f"observation file {obs_path} not found")
        obs = read_observations_csv(obs_path)
        report = compute_constants(high, bifi, obs)
        verify_theorem_1_2(high, bifi, obs, report=report)
        verify_lemmas(high, bifi, obs, report=report)
        report.to_json(out)
        click.echo(f"delta1={report.delta1:.6g} delta2={report.delta2:.6g} "
                   f"all_hold={report.all_hold()}")

    _guarded(run)


if __name__ == "__main__":
    main()
