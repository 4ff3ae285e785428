"""Command-line entry point.

Subcommands:
    run       run the experiment in a config file, write report files
    bench     run a named scaling preset, report fitted slopes
    stability check the configured generator's stability at (epsilon, delta)
    gen       emit a raw stream to an .npz file for debugging
    selftest  run the fast invariant subset

Exit codes: 0 success, 2 configuration error, 3 runtime assumption
violation (e.g. filter weight collapse).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from ..core import AssumptionViolation
from .config import ConfigError, ExperimentConfig, load_config
from .runner import make_trial_stream, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3


def _load(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig().validate()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg


def _cmd_run(args) -> int:
    cfg = _load(args)
    out = args.out or "out"
    report = run_experiment(cfg, out_dir=out)
    for agg in report["aggregates"]:
        print(f"{agg['estimator']}: l2 error {agg['l2_mean']:.4f} "
              f"+- {agg['l2_std']:.4f} over {agg['trials']} trials")
    print(f"reports written to {out}/")
    return EXIT_OK


def _cmd_bench(args) -> int:
    from .bench import run_preset
    out = args.out or "out"
    result = run_preset(args.preset, trials=args.trials, seed=args.seed or 0,
                        workers=args.workers or 1, out_dir=out)
    for line in result.summary_lines():
        print(line)
    return EXIT_OK


def _cmd_stability(args) -> int:
    from ..stability import check_stability_exact, check_stability_heuristic
    from .runner import build_generator
    cfg = _load(args)
    gen = build_generator(cfg, np.random.default_rng(
        np.random.SeedSequence(cfg.seed).spawn(1)[0]))
    clean = gen.sample(cfg.n, np.random.default_rng(cfg.seed))
    if cfg.n <= 18 and cfg.T * cfg.d <= 3:
        rep = check_stability_exact(clean, gen.true_mean, cfg.epsilon)
    else:
        rep = check_stability_heuristic(clean, gen.true_mean, cfg.epsilon,
                                        seed=cfg.seed)
    print(json.dumps(rep.to_dict(), indent=2, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "stability.json"), "w") as fh:
            json.dump(rep.to_dict(), fh, indent=2, sort_keys=True)
    return EXIT_OK


def _cmd_gen(args) -> int:
    cfg = _load(args)
    stream = make_trial_stream(cfg, 0)
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "stream.npz")
    np.savez_compressed(path, data=stream.data, T=stream.T, d=stream.d,
                        corrupted_mask=stream.corrupted_mask,
                        true_mean=stream.true_mean,
                        labels=(stream.labels if stream.labels is not None
                                else np.full(stream.n, -1)))
    print(f"stream written to {path} "
          f"({stream.n} x {stream.M}, {int(stream.corrupted_mask.sum())} corrupted)")
    return EXIT_OK


def _cmd_selftest(args) -> int:
    failures = 0

    def check(label, fn):
        nonlocal failures
        try:
            fn()
            print(f"PASS {label}")
        except Exception as e:  # noqa: BLE001 - report and continue
            failures += 1
            print(f"FAIL {label}: {e}")

    def _filter_invariants():
        from ..filtering import run_online_filter
        from ..threat import GaussianProduct, MeanShiftAdversary
        from ..core import make_stream
        gen = GaussianProduct(T=6, d=1)
        adv = MeanShiftAdversary(gen, magnitude=20.0)
        clean = gen.sample(600, np.random.default_rng(1))
        stream = make_stream(clean, gen.true_mean, adv, 0.1, 6, 1, seed=2)
        trace = run_online_filter(stream, lam=2.3, epsilon=0.1,
                                  keep_weight_history=True)
        hist = trace.extras["weight_history"]
        for a, b in zip(hist, hist[1:]):
            assert np.all(b <= a + 1e-15), "weights increased"
        assert np.all(trace.diagnostics["cov_norm"] <= 1.0 + 2.3 + 1e-9)

    def _g_continuity():
        from ..binary import g_gamma
        gamma, eps = 0.8, 0.03
        kink = 10 * eps / gamma
        lo = g_gamma(kink - 1e-12, gamma, eps)
        hi = g_gamma(min(kink + 1e-12, 1.0), gamma, eps)
        assert abs(lo - hi) < 1e-9, f"kink discontinuity {lo} vs {hi}"

    def _median_convention():
        from ..linalg import weighted_median
        assert weighted_median([1, 2, 3], [0.5, 0.25, 0.25]) == 1.0
        assert weighted_median([0, 10], [1, 3]) == 10.0

    def _erf_roundtrip():
        from ..nonparam import erf_paper, erf_paper_inv
        for u in np.linspace(-3, 3, 25):
            assert abs(erf_paper_inv(erf_paper(u)) - u) < 1e-10

    def _lp_certificate():
        from ..blocks import minimax_recover
        V = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
        mu0 = np.array([0.3, -0.2])
        sol = minimax_recover(V, V @ mu0)
        assert np.allclose(sol.mu, mu0, atol=1e-8)
        assert sol.certificate_residual <= 1e-9

    def _determinism():
        from ..core import replay, SampleMeanEstimator
        cfg_stream = make_trial_stream(ExperimentConfig(n=200, T=4), 0)
        t1 = replay(cfg_stream, SampleMeanEstimator())
        t2 = replay(cfg_stream, SampleMeanEstimator())
        assert np.array_equal(t1.estimates, t2.estimates)

    def _discipline():
        from ..core import (OnlineDisciplineError, OnlineEstimator, replay)
        stream = make_trial_stream(ExperimentConfig(n=50, T=3), 0)

        class Probe(OnlineEstimator):
            def observe_block(self, t, block):
                self._cursor.block(t + 1)

            def emit_estimate(self, t):
                return np.zeros(1)

        try:
            replay(stream, Probe())
        except OnlineDisciplineError:
            return
        raise AssertionError("future-block read was not refused")

    check("filter weight monotonicity + covariance certificate", _filter_invariants)
    check("potential kernel continuity at the kink", _g_continuity)
    check("lower weighted median convention", _median_convention)
    check("normal CDF inversion round-trip", _erf_roundtrip)
    check("minimax LP optimality certificate", _lp_certificate)
    check("replay determinism", _determinism)
    check("online discipline probe", _discipline)
    return EXIT_OK if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robmean",
                                 description="online robust mean estimation harness")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config path")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--workers", type=int, help="trial worker pool size")
        p.add_argument("--out", help="output directory")

    p_run = sub.add_parser("run", help="run an experiment config")
    common(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_bench = sub.add_parser("bench", help="run a scaling preset")
    common(p_bench)
    p_bench.add_argument("--preset", default="filter-vs-naive")
    p_bench.add_argument("--trials", type=int)
    p_bench.set_defaults(fn=_cmd_bench)

    p_stab = sub.add_parser("stability", help="stability-check the generator")
    common(p_stab)
    p_stab.set_defaults(fn=_cmd_stability)

    p_gen = sub.add_parser("gen", help="emit a raw stream for debugging")
    common(p_gen)
    p_gen.set_defaults(fn=_cmd_gen)

    p_self = sub.add_parser("selftest", help="fast invariant subset")
    common(p_self)
    p_self.set_defaults(fn=_cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolation as e:
        print(f"assumption violation: {e}", file=sys.stderr)
        return EXIT_ASSUMPTION


if __name__ == "__main__":
    sys.exit(main())
