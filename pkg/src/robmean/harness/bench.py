"""Scaling benchmarks: error growth across round counts, slope fits.

A preset defines a T grid, the data/adversary pairing, and the estimators
to compare. For each estimator the bench fits log-error against log T
(power-law model) and against log log T (polylog model), reports which
model wins by least squares, and attaches a per-trial confidence interval
to the power-law slope.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import ConfigError, ExperimentConfig, Spec
from .runner import run_experiment

__all__ = ["BenchResult", "fit_scaling", "run_preset", "PRESETS"]


@dataclass
class BenchResult:
    preset: str
    T_grid: list[int]
    #: estimator -> trials x len(T_grid) l2 errors
    errors: dict[str, np.ndarray]
    fits: dict[str, dict] = field(default_factory=dict)

    def summary_lines(self) -> list[str]:
        lines = [f"preset {self.preset}: T grid {self.T_grid}"]
        for est, fit in self.fits.items():
            lines.append(
                f"  {est}: loglog slope {fit['slope']:.3f} "
                f"+- {fit['slope_ci']:.3f}, winner {fit['winner']} "
                f"(sse power {fit['sse_power']:.4f} / polylog {fit['sse_polylog']:.4f}), "
                f"err[{self.T_grid[0]}] = {fit['err_first']:.4f}, "
                f"err[{self.T_grid[-1]}] = {fit['err_last']:.4f}, "
                f"ratio = {fit['ratio']:.2f}")
        return lines


def fit_scaling(T_grid, errors: np.ndarray) -> dict:
    """Least-squares fits of per-trial l2 errors across the T grid.

    errors has shape (trials, len(T_grid)). Requires at least 3 grid
    points. Returns slope (log err vs log T) with a normal-approximation
    CI over trials, plus the winning model.
    """
    T_grid = list(T_grid)
    if len(T_grid) < 3:
        raise ConfigError("bench: need at least 3 grid points for a fit")
    errors = np.asarray(errors, dtype=np.float64)
    mean_err = errors.mean(axis=0)
    lx = np.log(np.asarray(T_grid, dtype=np.float64))
    llx = np.log(lx)
    ly = np.log(mean_err)

    def ols(x, y):
        A = np.column_stack([np.ones_like(x), x])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        sse = float(((A @ coef - y) ** 2).sum())
        return coef, sse

    (a_p, b_p), sse_p = ols(lx, ly)
    (a_l, b_l), sse_l = ols(llx, ly)

    slopes = []
    for row in errors:
        (_, b), _ = ols(lx, np.log(np.maximum(row, 1e-300)))
        slopes.append(b)
    slopes = np.asarray(slopes)
    ci = 1.96 * slopes.std(ddof=1) / math.sqrt(len(slopes)) if len(slopes) > 1 else 0.0

    return {
        "slope": float(b_p), "slope_ci": float(ci), "intercept": float(a_p),
        "polylog_slope": float(b_l),
        "sse_power": sse_p, "sse_polylog": sse_l,
        "winner": "power" if sse_p <= sse_l else "polylog",
        "err_first": float(mean_err[0]), "err_last": float(mean_err[-1]),
        "ratio": float(mean_err[-1] / mean_err[0]),
    }


def _preset_filter_vs_naive(trials: int, seed: int, workers: int) -> ExperimentConfig:
    return ExperimentConfig(
        epsilon=0.1, d=1, n=4000, trials=trials, seed=seed, workers=workers,
        generator=Spec("gaussian"), adversary=Spec("mean_shift", {"magnitude": 10.0}),
        tail_profile=Spec("gaussian"),
        estimators=[Spec("online_filter"), Spec("naive_filter")])


def _preset_binary(trials: int, seed: int, workers: int) -> ExperimentConfig:
    return ExperimentConfig(
        epsilon=0.05, d=1, gamma=0.5, trials=trials, seed=seed, workers=workers,
        generator=Spec("binary_product"), adversary=Spec("median_attack"),
        tail_profile=Spec("gaussian"),
        estimators=[Spec("binary_product")])


PRESETS = {
    "filter-vs-naive": {
        "T_grid": [16, 64, 256],
        "base": _preset_filter_vs_naive,
        "trials": 20,
        "n_rule": lambda T, cfg: cfg.n,
    },
    "binary-t-independence": {
        "T_grid": [6, 8, 10],
        "base": _preset_binary,
        "trials": 5,
        "n_rule": lambda T, cfg: (2 ** T) * 200,
    },
}


def run_preset(name: str, trials: Optional[int] = None, seed: int = 0,
               workers: int = 1, out_dir: Optional[str] = None) -> BenchResult:
    if name not in PRESETS:
        raise ConfigError(f"bench: unknown preset {name!r} "
                          f"(have {sorted(PRESETS)})")
    preset = PRESETS[name]
    T_grid = preset["T_grid"]
    trials = trials if trials is not None else preset["trials"]
    base = preset["base"](trials, seed, workers)

    errors: dict[str, list] = {spec.name: [] for spec in base.estimators}
    for T in T_grid:
        cfg = preset["base"](trials, seed, workers)
        cfg.T = T
        cfg.n = preset["n_rule"](T, cfg)
        report = run_experiment(cfg, out_dir=None)
        per_est: dict[str, list] = {}
        for s in report["results"]:
            per_est.setdefault(s["estimator"], []).append(s["l2_error"])
        for est, v in per_est.items():
            errors[est].append(v)

    result = BenchResult(preset=name, T_grid=T_grid,
                         errors={e: np.array(v).T for e, v in errors.items()})
    for est, errs in result.errors.items():
        result.fits[est] = fit_scaling(T_grid, errs)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        from .svg import emit_svg
        series = [(est, T_grid, list(errs.mean(axis=0)))
                  for est, errs in result.errors.items()]
        emit_svg(series, os.path.join(out_dir, "scaling.svg"),
                 title=f"error scaling ({name})", xlabel="T",
                 ylabel="l2 error")
        import json
        with open(os.path.join(out_dir, "scaling.json"), "w") as fh:
            json.dump({"preset": name, "T_grid": T_grid,
                       "fits": result.fits,
                       "errors": {e: v.tolist() for e, v in result.errors.items()}},
                      fh, indent=2, sort_keys=True)
    return result
