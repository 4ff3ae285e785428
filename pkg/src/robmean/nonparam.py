"""Tail-profile machinery and the grid / Gaussian estimators.

A tail profile is a monotone non-increasing F: R+ -> [0,1] bounding
Pr[|X_t| >= q]. From it we derive

    Q = integral_0^inf min(eps, sqrt(eps * F(q))) dq      (accuracy scale)
    L = inf { z : integral_z^inf F(q) dq <= Q / sqrt(T) } (truncation point)
    m = floor(L * sqrt(T) / Q)                            (grid resolution)

The grid estimator turns each revealed coordinate into threshold
indicators 1{x >= q_i} and 1{x <= -q_i}, feeds every indicator stream to
a dedicated persistent group-median instance with cap F(q_i), and
combines the per-threshold estimates into a Riemann sum of the identity
E[X] = integral_0^inf Pr[X >= q] dq - integral_0^inf Pr[X <= -q] dq.

The Gaussian estimator instead inverts the standard normal CDF at a
single robustly estimated quantile, after a per-round median calibration
from a reserved sample split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .binary import BinaryProductEstimator, MAX_ROUNDS
from .core import (EstimateTrace, OnlineEstimator, SampleStream,
                   as_seed_sequence, replay)

__all__ = [
    "TailProfile",
    "GaussianTail",
    "BoundedKTail",
    "SubgaussianTail",
    "TableTail",
    "tail_profile_from_spec",
    "TailQuantities",
    "riemann_sum",
    "tail_quantities",
    "required_reserve",
    "calibrate",
    "erf_paper",
    "erf_paper_inv",
    "NonparamEstimator",
    "GaussianEstimator",
    "run_nonparam",
    "run_gaussian",
    "stability_delta",
]

MAX_GRID_INSTANCES = 10_000
_L_HARD_CAP = 1e6


# ---------------------------------------------------------------------------
# Tail profiles
# ---------------------------------------------------------------------------


class TailProfile:
    """Monotone non-increasing tail bound with optional finite support."""

    name = "tail"

    def F(self, q):
        raise NotImplementedError

    #: right edge of the support of F (None when unbounded)
    support_edge: Optional[float] = None

    def spec(self) -> dict:
        """Serializable name + parameters block (embeds in ExperimentConfig)."""
        return {"name": self.name}

    def delta(self, epsilon: float) -> float:
        """Stability parameter delta the profile implies for filter runs."""
        return math.sqrt(epsilon)


class GaussianTail(TailProfile):
    """F(q) = min(1, 2 exp(-q^2/2)), valid for unit-variance Gaussians."""

    name = "gaussian"

    def F(self, q):
        q = np.asarray(q, dtype=np.float64)
        return np.minimum(1.0, 2.0 * np.exp(-0.5 * q * q))

    def delta(self, epsilon):
        return epsilon * math.sqrt(math.log(1.0 / epsilon))


class SubgaussianTail(TailProfile):
    """F(q) = 1 below sqrt(eps), exp(-(q - sqrt(eps))^2) beyond."""

    name = "subgaussian"

    def __init__(self, epsilon: float):
        self.epsilon = epsilon
        self._s = math.sqrt(epsilon)

    def F(self, q):
        q = np.asarray(q, dtype=np.float64)
        return np.where(q < self._s, 1.0, np.exp(-np.square(q - self._s)))

    def spec(self):
        return {"name": self.name, "epsilon": self.epsilon}

    def delta(self, epsilon):
        return epsilon * math.sqrt(math.log(1.0 / epsilon))


class BoundedKTail(TailProfile):
    """F(q) = 1 below 1 + sqrt(eps), (q - sqrt(eps))^{-k} beyond
    (k-th central moment at most 1, mean within sqrt(eps) of zero)."""

    name = "bounded_k"

    def __init__(self, k: int, epsilon: float):
        if k < 4:
            raise ValueError("k must be at least 4 for a convergent Q")
        self.k = k
        self.epsilon = epsilon
        self._s = math.sqrt(epsilon)

    def F(self, q):
        q = np.asarray(q, dtype=np.float64)
        base = np.where(q < 1.0 + self._s, 1.0, q - self._s)
        return np.where(q < 1.0 + self._s, 1.0,
                        np.minimum(1.0, np.power(base, -float(self.k))))

    def spec(self):
        return {"name": self.name, "k": self.k, "epsilon": self.epsilon}


class TableTail(TailProfile):
    """Tabulated (q, F(q)) pairs, linearly interpolated, zero beyond the
    last grid point (compact support)."""

    name = "table"

    def __init__(self, qs, Fs):
        qs = np.asarray(qs, dtype=np.float64)
        Fs = np.asarray(Fs, dtype=np.float64)
        if qs.ndim != 1 or qs.shape != Fs.shape or qs.size < 2:
            raise ValueError("table needs matching q and F arrays (>= 2 points)")
        if np.any(np.diff(qs) <= 0):
            raise ValueError("q grid must be strictly increasing")
        if np.any(np.diff(Fs) > 1e-12):
            raise ValueError("F must be non-increasing")
        if np.any(Fs < 0) or np.any(Fs > 1):
            raise ValueError("F values must lie in [0, 1]")
        self.qs, self.Fs = qs, Fs
        self.support_edge = float(qs[-1])

    def F(self, q):
        q = np.asarray(q, dtype=np.float64)
        return np.interp(q, self.qs, self.Fs, left=self.Fs[0], right=0.0)

    def spec(self):
        return {"name": self.name, "q": self.qs.tolist(), "F": self.Fs.tolist()}


def tail_profile_from_spec(spec: dict, epsilon: float) -> TailProfile:
    name = spec.get("name")
    if name == "gaussian":
        return GaussianTail()
    if name == "subgaussian":
        return SubgaussianTail(epsilon)
    if name == "bounded_k":
        return BoundedKTail(int(spec.get("k", 4)), epsilon)
    if name == "table":
        return TableTail(spec["q"], spec["F"])
    raise ValueError(f"unknown tail profile {name!r}")


def stability_delta(profile: Optional[TailProfile], epsilon: float) -> float:
    """delta implied by the clean-data profile (sqrt(eps) for bounded
    covariance, eps*sqrt(log(1/eps)) for (sub)gaussian data)."""
    if profile is None:
        return math.sqrt(epsilon)
    return profile.delta(epsilon)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------


def riemann_sum(f: Callable, a: float, b: float, n: int, side: str = "left") -> float:
    """Uniform n-rectangle left/right Riemann sum of f over [a, b]."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not a < b:
        raise ValueError("need a < b")
    xs = np.linspace(a, b, n + 1)
    if side == "left":
        nodes = xs[:-1]
    elif side == "right":
        nodes = xs[1:]
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    vals = np.array([float(f(x)) for x in nodes])
    return float(vals.sum() * (b - a) / n)


def _simpson(f, a, b, fa, fm, fb):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def _adaptive_simpson(f, a, b, rel_tol, depth=48):
    """Composite Simpson with interval halving to a relative tolerance."""
    m = 0.5 * (a + b)
    fa, fm, fb = float(f(a)), float(f(m)), float(f(b))
    whole = _simpson(f, a, b, fa, fm, fb)

    def rec(a, m, b, fa, fm, fb, whole, d):
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = float(f(lm)), float(f(rm))
        left = _simpson(f, a, m, fa, flm, fm)
        right = _simpson(f, m, b, fm, frm, fb)
        if d <= 0 or abs(left + right - whole) <= rel_tol * (abs(left) + abs(right) + 1e-300) * 15:
            return left + right + (left + right - whole) / 15.0
        return (rec(a, lm, m, fa, flm, fm, left, d - 1)
                + rec(m, rm, b, fm, frm, fb, right, d - 1))

    return rec(a, m, b, fa, fm, fb, whole, depth)


def integrate_to_infinity(f: Callable, a: float = 0.0, rel_tol: float = 1e-8,
                          support_edge: Optional[float] = None,
                          verify: bool = True) -> float:
    """Integrate f over [a, inf).

    With a known compact support the integral stops at its edge. Otherwise
    the body [a, B] is integrated directly and the tail [B, inf) through
    the substitution q = B + s/(1-s), ds-domain truncated at 1 - 1e-8
    (i.e. q ~ 1e8; for the admissible tails, at worst ~q^-2 after the
    sqrt, the truncated mass is below 1e-8 * scale). Divergence shows up
    as a tail integral comparable to the body and is rejected.
    """
    if support_edge is not None:
        if support_edge <= a:
            return 0.0
        return _adaptive_simpson(f, a, support_edge, rel_tol)
    B = max(16.0, 2.0 * abs(a) + 1.0)
    body = _adaptive_simpson(f, a, B, rel_tol)

    def substituted(s):
        w = 1.0 - s
        return f(B + s / w) / (w * w)

    tail = _adaptive_simpson(substituted, 0.0, 1.0 - 1e-8, rel_tol)
    first = body + tail
    if not verify:
        return first
    # doubling B must not change the answer; a divergent integrand fails this
    body2 = _adaptive_simpson(f, a, 2.0 * B, rel_tol)

    def substituted2(s):
        w = 1.0 - s
        return f(2.0 * B + s / w) / (w * w)

    tail2 = _adaptive_simpson(substituted2, 0.0, 1.0 - 1e-8, rel_tol)
    second = body2 + tail2
    if not (np.isfinite(first) and np.isfinite(second)):
        raise ValueError("tail integral is not finite; the profile's Q "
                         "appears divergent")
    if abs(second - first) > max(1e-9, 100.0 * rel_tol * abs(first)):
        raise ValueError("tail integral did not stabilize; the profile's Q "
                         "appears divergent")
    return second


@dataclass(frozen=True)
class TailQuantities:
    Q: float
    L: float
    m: int
    grid: np.ndarray   # q_0 .. q_m (uniform on [0, L])


def tail_quantities(profile: TailProfile, epsilon: float, T: int) -> TailQuantities:
    """Accuracy scale Q, truncation point L, and the threshold grid.

    Q comes from adaptive quadrature (relative tolerance 1e-6); L from
    bisection on the tail integral of F. Degenerate profiles (Q = 0, e.g.
    a point mass) yield an empty grid; a bounded-support profile whose
    tail integral is already below Q/sqrt(T) at zero has L floored at the
    support edge.
    """
    edge = profile.support_edge

    def integrand(q):
        return min(epsilon, math.sqrt(epsilon * float(profile.F(q))))

    Q = integrate_to_infinity(integrand, 0.0, rel_tol=1e-6, support_edge=edge)
    if Q <= 0.0:
        return TailQuantities(Q=0.0, L=0.0, m=0, grid=np.zeros(1))

    def F_scalar(q):
        return float(profile.F(q))

    total_tail = integrate_to_infinity(F_scalar, 0.0, rel_tol=1e-6, support_edge=edge)
    target = Q / math.sqrt(T)

    if total_tail <= target:
        L = float(edge) if edge is not None else 0.0
    else:
        # G(z) = tail integral from z; G is continuous non-increasing, so
        # bisection on G(z) - target finds the infimum.
        def G(z):
            return integrate_to_infinity(F_scalar, z, rel_tol=1e-6,
                                         support_edge=edge, verify=False)

        lo, hi = 0.0, 1.0
        while G(hi) > target:
            hi *= 2.0
            if hi > _L_HARD_CAP:
                raise ValueError("truncation point L not found below the hard cap")
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if G(mid) > target:
                lo = mid
            else:
                hi = mid
        L = hi
    if L <= 0.0:
        return TailQuantities(Q=Q, L=0.0, m=0, grid=np.zeros(1))
    m = int(math.floor(L * math.sqrt(T) / Q))
    m = max(m, 1)
    return TailQuantities(Q=Q, L=L, m=m, grid=np.linspace(0.0, L, m + 1))


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


def required_reserve(epsilon: float, T: int, tau: float) -> int:
    """Default surrogate for the calibration sample requirement."""
    return math.ceil(200.0 * epsilon ** -2 * math.log(T / tau))


def calibrate(reserved: np.ndarray, epsilon: float, tau: float,
              min_reserve: Optional[int] = None) -> np.ndarray:
    """Coordinate medians of the reserved rows, one robust shift per round.

    ``min_reserve`` overrides the default requirement (the default formula
    is a conservative surrogate and can exceed desk-scale sample counts).
    """
    reserved = np.atleast_2d(np.asarray(reserved, dtype=np.float64))
    T = reserved.shape[1]
    need = required_reserve(epsilon, T, tau) if min_reserve is None else min_reserve
    if reserved.shape[0] < need:
        raise ValueError(
            f"reserve of {reserved.shape[0]} rows is below the requirement {need}")
    return np.median(reserved, axis=0)


# ---------------------------------------------------------------------------
# Gaussian CDF (the quantile map used by the Gaussian estimator)
# ---------------------------------------------------------------------------


def erf_paper(u: float) -> float:
    """Pr[N(u, 1) > 0], i.e. the standard normal CDF at u.

    (The integral (2*pi)^{-1/2} * int_0^inf exp(-(x-u)^2/2) dx equals
    Phi(u); the classical erf differs by scaling.)
    """
    return 0.5 * (1.0 + math.erf(u / math.sqrt(2.0)))


def erf_paper_inv(y: float) -> float:
    """Inverse of :func:`erf_paper` on [1e-6, 1 - 1e-6] via monotone
    bisection followed by Newton polish to 1e-12."""
    if not 1e-6 <= y <= 1.0 - 1e-6:
        raise ValueError(f"inversion input {y} outside [1e-6, 1 - 1e-6]")
    lo, hi = -6.0, 6.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if erf_paper(mid) < y:
            lo = mid
        else:
            hi = mid
    u = 0.5 * (lo + hi)
    for _ in range(8):
        fu = erf_paper(u) - y
        du = math.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
        if du == 0.0:
            break
        step = fu / du
        u -= step
        if abs(step) < 1e-13:
            break
    return u


# ---------------------------------------------------------------------------
# Estimators
# ---------------------------------------------------------------------------


class NonparamEstimator(OnlineEstimator):
    """Threshold-grid estimator for F-tail product streams (d = 1).

    Maintains one persistent group-median instance per grid threshold and
    sign, with cap gamma_i = F(q_i). ``reserve`` rows are split off for the
    per-round median calibration; reserve = 0 assumes the stream is
    already centered.
    """

    name = "nonparam"

    def __init__(self, profile: TailProfile, epsilon: float, seed=0,
                 reserve: int = 0, tau: float = 0.1,
                 min_reserve: Optional[int] = None,
                 oracle_tails: Optional[Callable] = None):
        super().__init__()
        self.profile = profile
        self.epsilon = epsilon
        self.seed = seed
        self.reserve = reserve
        self.tau = tau
        self.min_reserve = min_reserve
        self.oracle_tails = oracle_tails
        self.tq: Optional[TailQuantities] = None
        self._pos: list[BinaryProductEstimator] = []
        self._neg: list[BinaryProductEstimator] = []
        self._estimate = 0.0
        self._shift = 0.0

    def begin(self, cursor):
        super().begin(cursor)
        if cursor.d != 1:
            raise ValueError("nonparametric estimation requires d = 1 "
                             "(coordinates are serialized)")
        if cursor.T > MAX_ROUNDS:
            raise ValueError(f"T = {cursor.T} exceeds the desk-scale cap {MAX_ROUNDS}")
        if self.reserve > 0:
            need = (required_reserve(self.epsilon, cursor.T, self.tau)
                    if self.min_reserve is None else self.min_reserve)
            if self.reserve < need:
                raise ValueError(f"reserve of {self.reserve} rows is below the "
                                 f"requirement {need}")
            if self.reserve >= cursor.n:
                raise ValueError("reserve leaves no estimation samples")
        self.tq = tail_quantities(self.profile, self.epsilon, cursor.T)
        if 2 * self.tq.m > MAX_GRID_INSTANCES:
            raise ValueError(f"grid needs {2 * self.tq.m} estimator instances, "
                             f"cap is {MAX_GRID_INSTANCES}")
        ss = as_seed_sequence(self.seed)
        children = ss.spawn(2 * self.tq.m)
        for i in range(self.tq.m):
            gam = float(self.profile.F(self.tq.grid[i + 1]))
            gam = min(max(gam, 1e-12), 1.0)
            self._pos.append(BinaryProductEstimator(gam, self.epsilon,
                                                    seed=children[2 * i],
                                                    keep_tree=False))
            self._neg.append(BinaryProductEstimator(gam, self.epsilon,
                                                    seed=children[2 * i + 1],
                                                    keep_tree=False))

    def observe_block(self, t, block):
        x = block[:, 0]
        if self.reserve > 0:
            self._shift = float(np.median(x[: self.reserve]))
            rest = x[self.reserve:] - self._shift
        else:
            self._shift = 0.0
            rest = x
        tq = self.tq
        if tq.m == 0:
            self._estimate = self._shift
            return
        acc = 0.0
        step = tq.L / tq.m
        for i in range(tq.m):
            q = tq.grid[i + 1]
            if self.oracle_tails is not None:
                y_pos, y_neg = self.oracle_tails(t, q)
            else:
                y_pos = self._pos[i].step((rest >= q).astype(np.float64))
                y_neg = self._neg[i].step((rest <= -q).astype(np.float64))
            acc += (y_pos - y_neg) * step
        self._estimate = acc + self._shift

    def emit_estimate(self, t):
        return np.array([self._estimate])

    def round_diagnostics(self):
        return {"calibration_shift": self._shift}


class GaussianEstimator(OnlineEstimator):
    """CDF-inversion estimator for identity-covariance Gaussian streams.

    Per round: robustly center with the reserved-sample median, estimate
    Pr[X_t > shift] through a single persistent group-median instance on
    the sign indicators, clamp into the Lipschitz window [1/4, 3/4], and
    invert the normal CDF.
    """

    name = "gaussian_erf"

    #: cap for the indicator stream; sign bits have mean ~ 1/2
    INDICATOR_GAMMA = 0.75

    def __init__(self, epsilon: float, seed=0, reserve: int = 0, tau: float = 0.1,
                 min_reserve: Optional[int] = None):
        super().__init__()
        self.epsilon = epsilon
        self.seed = seed
        self.reserve = reserve
        self.tau = tau
        self.min_reserve = min_reserve
        self._inner: Optional[BinaryProductEstimator] = None
        self._estimate = 0.0
        self._shift = 0.0
        self._ytilde = 0.5

    def begin(self, cursor):
        super().begin(cursor)
        if cursor.d != 1:
            raise ValueError("the Gaussian estimator requires d = 1")
        if cursor.T > MAX_ROUNDS:
            raise ValueError(f"T = {cursor.T} exceeds the desk-scale cap {MAX_ROUNDS}")
        if self.reserve > 0:
            need = (required_reserve(self.epsilon, cursor.T, self.tau)
                    if self.min_reserve is None else self.min_reserve)
            if self.reserve < need:
                raise ValueError(f"reserve of {self.reserve} rows is below the "
                                 f"requirement {need}")
            if self.reserve >= cursor.n:
                raise ValueError("reserve leaves no estimation samples")
        self._inner = BinaryProductEstimator(self.INDICATOR_GAMMA, self.epsilon,
                                             seed=self.seed, keep_tree=False)

    def observe_block(self, t, block):
        x = block[:, 0]
        if self.reserve > 0:
            self._shift = float(np.median(x[: self.reserve]))
            rest = x[self.reserve:]
        else:
            self._shift = 0.0
            rest = x
        y = self._inner.step((rest > self._shift).astype(np.float64))
        if not np.isfinite(y):
            raise ValueError(f"indicator estimate {y} is not finite")
        self._ytilde = y
        clamped = min(max(y, 0.25), 0.75)
        self._estimate = erf_paper_inv(clamped) + self._shift

    def emit_estimate(self, t):
        return np.array([self._estimate])

    def round_diagnostics(self):
        return {"calibration_shift": self._shift, "quantile_estimate": self._ytilde}


def run_nonparam(stream: SampleStream, profile: TailProfile, epsilon: float,
                 seed=0, reserve: int = 0, tau: float = 0.1,
                 min_reserve: Optional[int] = None,
                 oracle_tails: Optional[Callable] = None) -> EstimateTrace:
    est = NonparamEstimator(profile, epsilon, seed=seed, reserve=reserve,
                            tau=tau, min_reserve=min_reserve,
                            oracle_tails=oracle_tails)
    return replay(stream, est)


def run_gaussian(stream: SampleStream, epsilon: float, seed=0, reserve: int = 0,
                 tau: float = 0.1, min_reserve: Optional[int] = None) -> EstimateTrace:
    est = GaussianEstimator(epsilon, seed=seed, reserve=reserve, tau=tau,
                            min_reserve=min_reserve)
    return replay(stream, est)
