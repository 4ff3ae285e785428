"""Experiment orchestration: build streams, run estimator cells, emit reports.

One experiment = (generator, adversary) x estimators x trials. Every trial
draws a fresh stream from a spawned seed; the true mean is drawn once per
config so trials estimate the same target. Reports: ``report.csv`` with
the frozen schema, ``report.json`` with config echo and aggregates, and
``curves.svg`` with per-estimator cumulative-error curves.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import binary, blocks, filtering, nonparam, threat
from ..core import (EstimateTrace, SampleStream, l2_error, make_stream,
                    per_round_sq_errors, replay)
from ..core import SampleMeanEstimator, ZeroEstimator
from .config import ConfigError, ExperimentConfig, Spec, parse_config, serialize_config

__all__ = ["CSV_HEADER", "build_generator", "build_adversary", "build_estimator",
           "run_trial", "run_experiment", "write_csv", "rows_to_csv_text"]

#: frozen report schema; tests pin it
CSV_HEADER = ["trial", "t", "estimator", "err_sq", "cum_err", "total_weight",
              "potential", "cov_norm", "ms"]

GENERATORS = ("gaussian", "binary_product", "bounded_k", "subgaussian",
              "gaussian_blocks")
ADVERSARIES = ("identity", "mean_shift", "staircase", "median_attack")
ESTIMATORS = ("sample_mean", "zero", "online_filter", "naive_filter",
              "binary_product", "gaussian_erf", "nonparam", "projection")


def build_generator(cfg: ExperimentConfig, mean_rng: np.random.Generator):
    name, p = cfg.generator.name, cfg.generator.params
    scale = float(p.get("mean_scale", 0.0))
    mean = mean_rng.uniform(-scale, scale, size=cfg.T * cfg.d) if scale > 0 else None
    if name == "gaussian":
        return threat.GaussianProduct(cfg.T, cfg.d, mean=mean)
    if name == "binary_product":
        if cfg.d != 1:
            raise ConfigError("generator: binary_product requires d = 1")
        return threat.BinaryProduct.gamma_bounded(cfg.T, cfg.gamma, mean_rng)
    if name == "bounded_k":
        mean_k = (mean_rng.uniform(-math.sqrt(cfg.epsilon) / 2,
                                   math.sqrt(cfg.epsilon) / 2, size=cfg.T)
                  if p.get("random_mean", False) else mean)
        return threat.BoundedKProduct(cfg.T, k=int(p.get("k", 4)),
                                      p_mass=float(p.get("p_mass", 0.1)),
                                      mean=mean_k)
    if name == "subgaussian":
        return threat.SubgaussianProduct(cfg.T, mean=mean)
    if name == "gaussian_blocks":
        return threat.GaussianBlocks(cfg.T, cfg.d, mean=mean,
                                     rho=float(p.get("rho", 0.0)))
    raise ConfigError(f"generator: unknown name {name!r}")


def build_adversary(cfg: ExperimentConfig, generator):
    name, p = cfg.adversary.name, cfg.adversary.params
    if name == "identity":
        return threat.IdentityAdversary()
    if name == "mean_shift":
        return threat.MeanShiftAdversary(generator,
                                         magnitude=float(p.get("magnitude", 10.0)))
    if name == "staircase":
        return threat.StaircaseAdversary()
    if name == "median_attack":
        return threat.MedianAttackAdversary(cfg.gamma)
    raise ConfigError(f"adversary: unknown name {name!r}")


def _profile(cfg: ExperimentConfig) -> nonparam.TailProfile:
    spec = dict(cfg.tail_profile.params)
    spec["name"] = cfg.tail_profile.name
    return nonparam.tail_profile_from_spec(spec, cfg.epsilon)


def resolved_lambda(cfg: ExperimentConfig) -> float:
    if cfg.lam is not None:
        return cfg.lam
    delta = _profile(cfg).delta(cfg.epsilon)
    return filtering.default_lambda(cfg.epsilon, delta, cfg.kappa)


def build_estimator(spec: Spec, cfg: ExperimentConfig, seed):
    name, p = spec.name, spec.params
    if name == "sample_mean":
        return SampleMeanEstimator()
    if name == "zero":
        return ZeroEstimator()
    if name == "online_filter":
        return filtering.OnlineFilterEstimator(resolved_lambda(cfg), cfg.epsilon,
                                               beta_mode=p.get("beta_mode", "unit"))
    if name == "naive_filter":
        return filtering.NaiveFilterEstimator(resolved_lambda(cfg), cfg.epsilon,
                                              beta_mode=p.get("beta_mode", "unit"))
    if name == "binary_product":
        return binary.BinaryProductEstimator(cfg.gamma, cfg.epsilon, seed=seed,
                                             keep_tree=bool(p.get("instrument", True)))
    if name == "gaussian_erf":
        return nonparam.GaussianEstimator(cfg.epsilon, seed=seed,
                                          reserve=int(p.get("reserve", 0)),
                                          tau=cfg.tau,
                                          min_reserve=p.get("min_reserve"))
    if name == "nonparam":
        return nonparam.NonparamEstimator(_profile(cfg), cfg.epsilon, seed=seed,
                                          reserve=int(p.get("reserve", 0)),
                                          tau=cfg.tau,
                                          min_reserve=p.get("min_reserve"))
    if name == "projection":
        count = int(p.get("n_directions",
                          blocks.default_direction_count(cfg.d, cfg.T, cfg.tau)))
        ss = np.random.SeedSequence(cfg.seed).spawn(1)[0]
        dirs = blocks.sample_directions(cfg.d, count,
                                        int(p.get("direction_seed",
                                                  ss.generate_state(1)[0])))
        return blocks.ProjectionEstimator(_profile(cfg), cfg.epsilon, dirs, seed=seed)
    raise ConfigError(f"estimators: unknown name {name!r}")


def make_trial_stream(cfg: ExperimentConfig, trial: int) -> SampleStream:
    mean_ss, *trial_ss = np.random.SeedSequence(cfg.seed).spawn(cfg.trials + 1)
    ss = trial_ss[trial]
    gen_ss, stream_ss, _ = ss.spawn(3)
    gen = build_generator(cfg, np.random.default_rng(mean_ss))
    adv = build_adversary(cfg, gen)
    clean = gen.sample(cfg.n, np.random.default_rng(gen_ss))
    return make_stream(clean, gen.true_mean, adv, cfg.epsilon, cfg.T, cfg.d,
                       seed=stream_ss)


def run_trial(cfg: ExperimentConfig, trial: int):
    """Run every estimator on this trial's stream; returns (rows, summaries)."""
    mean_ss, *trial_ss = np.random.SeedSequence(cfg.seed).spawn(cfg.trials + 1)
    ss = trial_ss[trial]
    gen_ss, stream_ss, est_root = ss.spawn(3)
    gen = build_generator(cfg, np.random.default_rng(mean_ss))
    adv = build_adversary(cfg, gen)
    clean = gen.sample(cfg.n, np.random.default_rng(gen_ss))
    stream = make_stream(clean, gen.true_mean, adv, cfg.epsilon, cfg.T, cfg.d,
                         seed=stream_ss)

    rows, summaries = [], []
    est_seeds = est_root.spawn(len(cfg.estimators))
    timings = cfg.timings
    for spec, est_seed in zip(cfg.estimators, est_seeds):
        est = build_estimator(spec, cfg, est_seed)
        trace = replay(stream, est)
        if "tree" in trace.extras:
            phis = binary.potential_series(trace.extras["tree"],
                                           stream.corrupted_mask,
                                           cfg.gamma, cfg.epsilon)
            trace.diagnostics["potential"] = phis[1:]
        rows.extend(trace_rows(trace, stream, spec.name, trial,
                               timings=bool(spec.params.get("timings", timings))))
        summaries.append({"estimator": spec.name, "trial": trial,
                          "l2_error": l2_error(trace, stream.true_mean)})
    return rows, summaries


def trace_rows(trace: EstimateTrace, stream: SampleStream, estimator: str,
               trial, timings: bool = False) -> list[dict]:
    """Serialize one trace into report rows.

    The in-memory trace always carries wall times; the serialized ms
    column stays empty unless ``timings`` is set, because reports must be
    byte-identical across repeated seeds.
    """
    err_sq = per_round_sq_errors(trace, stream.true_mean)
    cum = np.sqrt(np.cumsum(err_sq))
    diag = trace.diagnostics
    rows = []
    for t in range(1, trace.T + 1):
        row = {"trial": trial, "t": t, "estimator": estimator,
               "err_sq": _fmt(err_sq[t - 1]), "cum_err": _fmt(cum[t - 1]),
               "total_weight": "", "potential": "", "cov_norm": "",
               "ms": _fmt(trace.wall_ms[t - 1]) if timings else ""}
        for key in ("total_weight", "potential", "cov_norm"):
            if key in diag:
                row[key] = _fmt(diag[key][t - 1])
        rows.append(row)
    return rows


def _fmt(v) -> str:
    return repr(float(v))


def aggregate_rows(rows: list[dict]) -> list[dict]:
    """Mean/std of err_sq and cum_err per (estimator, t) over trials;
    serialized with the trial column set to 'mean'/'std'."""
    cells: dict[tuple, list] = {}
    for r in rows:
        if isinstance(r["trial"], str):
            continue
        cells.setdefault((r["estimator"], r["t"]), []).append(
            (float(r["err_sq"]), float(r["cum_err"])))
    out = []
    for (est, t), vals in sorted(cells.items()):
        arr = np.array(vals)
        for stat, vec in (("mean", arr.mean(axis=0)), ("std", arr.std(axis=0))):
            out.append({"trial": stat, "t": t, "estimator": est,
                        "err_sq": _fmt(vec[0]), "cum_err": _fmt(vec[1]),
                        "total_weight": "", "potential": "", "cov_norm": "",
                        "ms": ""})
    return out


def rows_to_csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def write_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv_text(rows))


def _trial_task(cfg_text: str, trial: int):
    cfg = parse_config(cfg_text, env={})
    return run_trial(cfg, trial)


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str] = None) -> dict:
    """Run all (estimator x trial) cells; optionally write the report files."""
    all_rows, all_summaries = [], []
    if cfg.workers > 1:
        cfg_text = serialize_config(cfg)
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_trial_task, [cfg_text] * cfg.trials,
                                    range(cfg.trials)))
    else:
        results = [run_trial(cfg, trial) for trial in range(cfg.trials)]
    for rows, summaries in results:
        all_rows.extend(rows)
        all_summaries.extend(summaries)
    all_rows.extend(aggregate_rows(all_rows))

    agg = {}
    for s in all_summaries:
        agg.setdefault(s["estimator"], []).append(s["l2_error"])
    aggregates = [{"estimator": est, "l2_mean": float(np.mean(v)),
                   "l2_std": float(np.std(v)), "trials": len(v)}
                  for est, v in sorted(agg.items())]
    report = {"config": serialize_config(cfg), "results": all_summaries,
              "aggregates": aggregates}

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(all_rows, os.path.join(out_dir, "report.csv"))
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        _write_curves(all_rows, cfg, os.path.join(out_dir, "curves.svg"))
    report["rows"] = all_rows
    return report


def _write_curves(rows: list[dict], cfg: ExperimentConfig, path: str) -> None:
    from .svg import emit_svg
    series = []
    for spec in cfg.estimators:
        pts = [(r["t"], float(r["cum_err"])) for r in rows
               if r["estimator"] == spec.name and r["trial"] == "mean"]
        pts.sort()
        ys = [max(y, 1e-12) for _, y in pts]
        if pts:
            series.append((spec.name, [p[0] for p in pts], ys))
    if series:
        emit_svg(series, path, title="cumulative error by round",
                 xlabel="round", ylabel="cumulative l2 error")
