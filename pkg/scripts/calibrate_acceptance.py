"""Dry-run of every acceptance criterion with margin and timing reports.

Run this before touching tolerances: it prints the observed statistics
next to the asserted bounds so regressions are visible at a glance.
"""

import math
import time

import numpy as np

from robmean.binary import run_binary_product
from robmean.core import l2_error, make_stream, per_round_sq_errors, replay
from robmean.filtering import OnlineFilterEstimator, default_lambda, \
    run_naive_per_round_filter
from robmean.linalg import top_eigenpair
from robmean.nonparam import GaussianTail, erf_paper, erf_paper_inv, run_gaussian
from robmean.stability import is_stream_stable
from robmean.threat import (GaussianProduct, MeanShiftAdversary,
                            MedianAttackAdversary, BinaryProduct,
                            StaircaseAdversary)


def timer(label):
    class T:
        def __enter__(self):
            self.t0 = time.time()
            return self

        def __exit__(self, *a):
            print(f"  [{label}: {time.time() - self.t0:.1f}s]")

    return T()


def criterion1():
    print("criterion 1: filter invariants, 50 runs")
    eps, T, n = 0.1, 64, 20_000
    delta = eps * math.sqrt(math.log(1 / eps))
    lam = default_lambda(eps, delta)
    ok_mass = 0
    gate_fail = 0
    with timer("c1"):
        for run in range(50):
            gen = GaussianProduct(T=T, d=1)
            adv = MeanShiftAdversary(gen, magnitude=20.0)
            clean = gen.sample(n, np.random.default_rng(1000 + run))
            stream = make_stream(clean, gen.true_mean, adv, eps, T, 1,
                                 seed=2000 + run)
            clean_kept = stream.data[~stream.corrupted_mask]
            if not is_stream_stable(clean_kept, gen.true_mean, eps, 2 * delta,
                                    seed=run):
                gate_fail += 1
                continue
            est = OnlineFilterEstimator(lam, eps, keep_weight_history=True)
            trace = replay(stream, est)
            hist = [np.full(n, 1 / n)] + trace.extras["weight_history"]
            mono = all(np.all(b <= a + 1e-15) for a, b in zip(hist, hist[1:]))
            cert = np.all(trace.diagnostics["cov_norm"] <= 1 + lam + 1e-9)
            bad = stream.corrupted_mask
            mass = all((wa - wb)[~bad].sum() <= (wa - wb)[bad].sum() + 1e-12
                       for wa, wb in zip(hist, hist[1:]))
            assert mono and cert, f"run {run}: mono={mono} cert={cert}"
            ok_mass += mass
    print(f"  gate failures: {gate_fail}, mass accounting ok: {ok_mass}/50 (need 48)")


def criterion2():
    print("criterion 2: scaling separation")
    eps, n, trials = 0.1, 4000, 20
    delta = eps * math.sqrt(math.log(1 / eps))
    lam = default_lambda(eps, delta)
    results = {"online": {}, "naive": {}}
    with timer("c2"):
        for T in (16, 64, 256):
            on_errs, nv_errs = [], []
            for trial in range(trials):
                gen = GaussianProduct(T=T, d=1)
                adv = MeanShiftAdversary(gen, magnitude=10.0)
                clean = gen.sample(n, np.random.default_rng(T * 100 + trial))
                stream = make_stream(clean, gen.true_mean, adv, eps, T, 1,
                                     seed=T * 200 + trial)
                est = OnlineFilterEstimator(lam, eps)
                on_errs.append(l2_error(replay(stream, est), gen.true_mean))
                nv_errs.append(l2_error(
                    run_naive_per_round_filter(stream, lam, eps), gen.true_mean))
            results["online"][T] = np.mean(on_errs)
            results["naive"][T] = np.mean(nv_errs)
            print(f"  T={T}: online {np.mean(on_errs):.3f} naive {np.mean(nv_errs):.3f}")
    lx = np.log([16, 64, 256])
    ly = np.log([results["naive"][t] for t in (16, 64, 256)])
    slope = np.polyfit(lx, ly, 1)[0]
    ratio = results["online"][256] / results["online"][16]
    print(f"  naive slope: {slope:.3f} (need [0.35, 0.65]); "
          f"online ratio 256/16: {ratio:.2f} (need <= 3)")


def criterion34():
    print("criterion 3+4: binary product T-independence + potential")
    eps, gamma = 0.05, 0.5
    bound = 5 * min(eps, math.sqrt(gamma * eps))
    errors = {}
    min_ratio = np.inf
    with timer("c3+4"):
        for T in (6, 10):
            n = 2 ** T * 200
            errs = []
            for trial in range(5):
                rng = np.random.default_rng(T * 1000 + trial)
                gen = BinaryProduct.gamma_bounded(T, gamma, rng)
                clean = gen.sample(n, rng)
                stream = make_stream(clean, gen.true_mean,
                                     MedianAttackAdversary(gamma), eps, T, 1,
                                     seed=T * 2000 + trial)
                trace = run_binary_product(stream, gamma, eps,
                                           seed=T * 3000 + trial)
                errs.append(l2_error(trace, gen.true_mean))
                phis = trace.extras["potential"]
                assert np.all(np.diff(phis) >= -1e-12), "phi not monotone"
                assert phis[T - 1] <= 25 * min(eps, eps ** 2 / gamma), \
                    f"phi cap: {phis[T-1]}"
                eta = trace.extras["internal_error"]
                dphi = np.diff(phis)
                thr = 2 * min(eps, gamma) / T
                for t in range(T):
                    if eta[t] >= thr:
                        r = dphi[t] * gamma / eta[t] ** 2
                        min_ratio = min(min_ratio, r)
            errors[T] = np.mean(errs)
            print(f"  T={T}: mean err {errors[T]:.4f} (bound {bound}), "
                  f"trials {np.round(errs, 4)}")
    ratio = max(errors[6], errors[10]) / min(errors[6], errors[10])
    print(f"  error ratio: {ratio:.2f} (need <= 2); "
          f"min potential coupling ratio: {min_ratio}")


def criterion5():
    print("criterion 5: gaussian estimator")
    T, eps, n = 8, 0.05, 2 ** 8 * 500
    errs = []
    with timer("c5"):
        for trial in range(10):
            rng = np.random.default_rng(5000 + trial)
            gen = GaussianProduct(T=T, d=1, mean=rng.uniform(-1, 1, T))
            adv = MeanShiftAdversary(gen, magnitude=10.0)
            clean = gen.sample(n, np.random.default_rng(6000 + trial))
            stream = make_stream(clean, gen.true_mean, adv, eps, T, 1,
                                 seed=7000 + trial)
            trace = run_gaussian(stream, eps, seed=8000 + trial,
                                 reserve=20_000, min_reserve=1000)
            errs.append(l2_error(trace, gen.true_mean))
    print(f"  errors: {np.round(errs, 4)} (bound {10 * eps}); "
          f"mean {np.mean(errs):.4f} max {np.max(errs):.4f}")
    worst = max(abs(erf_paper_inv(erf_paper(u)) - u)
                for u in np.linspace(-3, 3, 1000))
    print(f"  erf round-trip worst: {worst:.2e} (need <= 1e-10)")


def criterion8():
    print("criterion 8: lower bound construction")
    eps = 0.1
    with timer("c8"):
        for T in (16, 64, 256):
            n = max(2000, int(4 * T / eps))
            gen = GaussianProduct(T=T, d=1)
            clean = gen.sample(n, np.random.default_rng(T))
            stream = make_stream(clean, gen.true_mean, StaircaseAdversary(),
                                 eps, T, 1, seed=T + 1)
            sched = StaircaseAdversary.subset_schedule(stream)
            mu = np.zeros(T)
            kappa = 0.0
            for t in range(1, T + 1):
                rows = stream.data[sched[t - 1]][:, :t]
                mu[t - 1] = rows[:, -1].mean()
                centered = rows - rows.mean(axis=0)
                cov = centered.T @ centered / rows.shape[0]
                kappa = max(kappa, abs(top_eigenpair(cov, res_tol=None).value))
            norm = np.linalg.norm(mu)
            print(f"  T={T}: ||mu|| = {norm:.4f} "
                  f"(need >= {0.2 * eps * math.log(T):.4f}), kappa = {kappa:.2f}")


if __name__ == "__main__":
    criterion1()
    criterion2()
    criterion34()
    criterion5()
    criterion8()
