"""Round-wise independent (block) distributions: estimating d-dimensional
round means from one-sided threshold indicators along a random direction
set, with half-space group splitting and minimax recovery.

For a threshold q and direction set V, every sample contributes the joint
label pattern {1(v.x_t > q)}_v (or {1(v.x_t < -q)} for the negative sign).
One shared coin per sample per round noises all labels together. Groups
are split on the joint pattern; per direction, capped group means feed a
size-weighted median exactly as in the single-bit estimator. The per-round
d-vector is recovered from the per-direction Riemann combinations by the
Chebyshev-center program min_mu max_v |v.mu - c_v|, solved as an LP.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .binary import invert_noise
from .core import (EstimateTrace, OnlineEstimator, SampleStream,
                   as_seed_sequence, replay)
from .linalg import weighted_median
from .lp import solve_lp
from .nonparam import TailProfile, TailQuantities, tail_quantities

__all__ = [
    "DirectionSet",
    "sample_directions",
    "default_direction_count",
    "convert_indicators",
    "CorrelatedBinaryEstimator",
    "run_correlated_binary",
    "minimax_recover",
    "MinimaxSolution",
    "ProjectionEstimator",
    "run_projection_estimation",
    "group_count_bound",
]

#: live-group runtime cap; the a-priori Sauer bound |V|^{t(d+1)} can exceed
#: any workstation budget while the realized group count stays tiny.
MAX_LIVE_GROUPS = 1_000_000


@dataclass(frozen=True)
class DirectionSet:
    """Unit direction vectors (rows of V) with the seed that produced them."""

    V: np.ndarray
    seed: int

    def __post_init__(self):
        norms = np.linalg.norm(self.V, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("directions must be unit-norm")

    @property
    def count(self) -> int:
        return self.V.shape[0]

    @property
    def d(self) -> int:
        return self.V.shape[1]


def default_direction_count(d: int, T: int, tau: float, c: float = 8.0) -> int:
    """Surrogate for the 2^O(d) * log(T/tau) direction-set size."""
    return max(int(math.ceil(c * 2 ** d * math.log(T / tau))), d)


def sample_directions(d: int, count: int, seed: int) -> DirectionSet:
    """Uniform random unit vectors (normalized Gaussian draws)."""
    if d < 1:
        raise ValueError("d must be at least 1")
    rng = np.random.default_rng(as_seed_sequence(seed))
    g = rng.standard_normal((count, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # resample rows that collapsed to zero (probability-zero safety)
    while np.any(norms == 0.0):
        bad = norms[:, 0] == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
    return DirectionSet(V=g / norms, seed=seed)


def convert_indicators(block: np.ndarray, V: np.ndarray, q: float,
                       absolute: bool = False):
    """Per-direction threshold labels for a positive threshold q.

    Returns (pos, neg), each |V| x n with pos[v] = 1{v.x > q} and
    neg[v] = 1{v.x < -q}. With ``absolute`` both become the literal
    two-sided labels 1{|v.x| > |q|} (kept for comparison; the mean
    decomposition needs the one-sided events).
    """
    if q <= 0:
        raise ValueError("q must be positive")
    proj = np.asarray(V) @ np.asarray(block).T
    if absolute:
        lab = (np.abs(proj) > abs(q))
        return lab.astype(np.float64), lab.astype(np.float64)
    pos = (proj > q).astype(np.float64)
    neg = (proj < -q).astype(np.float64)
    return pos, neg


def group_count_bound(n_directions: int, t: int, d: int) -> float:
    """Sauer bound |V|^{t(d+1)} on the group count at round t."""
    return float(n_directions) ** (t * (d + 1))


class CorrelatedBinaryEstimator:
    """Group-median estimation of E[Y(v, q)_t] for all v at one signed q.

    Signed threshold: q > 0 labels 1{v.x > q}; q < 0 labels 1{v.x < q}.
    The noise coin is shared across directions, so for each sample the
    labels are all forced to 1, all forced to 0, or all kept.
    """

    def __init__(self, V: np.ndarray, q: float, gamma: float, epsilon: float,
                 seed=0, absolute: bool = False):
        if q == 0.0:
            raise ValueError("threshold must be nonzero")
        if not 0 < gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        self.V = np.asarray(V, dtype=np.float64)
        self.q = float(q)
        self.gamma = gamma
        self.epsilon = epsilon
        self.rng = np.random.default_rng(seed)
        self.absolute = absolute
        self._ids: Optional[np.ndarray] = None
        self.group_counts: list[int] = []
        self.tree_ids: list[np.ndarray] = []

    def step(self, block: np.ndarray, keep_tree: bool = False) -> np.ndarray:
        """Process one n x d block; returns the denoised estimates, one per
        direction."""
        block = np.atleast_2d(block)
        n = block.shape[0]
        if self._ids is None:
            self._ids = np.zeros(n, dtype=np.int64)
            if keep_tree:
                self.tree_ids.append(self._ids.copy())
        proj = self.V @ block.T
        if self.absolute:
            labels = (np.abs(proj) > abs(self.q)).astype(np.float64)
        elif self.q > 0:
            labels = (proj > self.q).astype(np.float64)
        else:
            labels = (proj < self.q).astype(np.float64)

        u = self.rng.random(n)
        force1 = u < self.gamma / 4.0
        force0 = (u >= self.gamma / 4.0) & (u < 0.5)
        labels[:, force1] = 1.0
        labels[:, force0] = 0.0

        ids = self._ids
        sizes = np.bincount(ids)
        ests = np.empty(self.V.shape[0])
        for vi in range(self.V.shape[0]):
            sums = np.bincount(ids, weights=labels[vi])
            capped = np.minimum(self.gamma, sums / sizes)
            ests[vi] = weighted_median(capped, sizes)

        nv = self.V.shape[0]
        if nv <= 62:
            pattern = (labels.T.astype(np.int64) * (1 << np.arange(nv))).sum(axis=1)
            key = ids * (1 << nv) + pattern
            _, new_ids = np.unique(key, return_inverse=True)
        else:
            joint = np.column_stack([ids, labels.T.astype(np.int64)])
            _, new_ids = np.unique(joint, axis=0, return_inverse=True)
        self._ids = new_ids
        count = int(new_ids.max()) + 1
        if count > MAX_LIVE_GROUPS:
            raise ValueError(f"group count {count} exceeds the cap {MAX_LIVE_GROUPS}")
        self.group_counts.append(count)
        if keep_tree:
            self.tree_ids.append(new_ids.copy())
        return invert_noise(ests, self.gamma)


def run_correlated_binary(stream: SampleStream, V, q: float, gamma: float,
                          epsilon: float, seed=0,
                          absolute: bool = False) -> dict:
    """Run both signed instances (+q and -q) over a block stream.

    Returns {"pos": T x |V| estimates of E[1{v.x > q}],
             "neg": T x |V| estimates of E[1{v.x < -q}],
             "group_counts": per-round live group counts (pos instance)}.
    """
    if q <= 0:
        raise ValueError("q must be positive (signs are handled internally)")
    V = np.asarray(V, dtype=np.float64)
    ss = as_seed_sequence(seed)
    s_pos, s_neg = ss.spawn(2)
    inst_pos = CorrelatedBinaryEstimator(V, q, gamma, epsilon, seed=s_pos,
                                         absolute=absolute)
    inst_neg = CorrelatedBinaryEstimator(V, -q, gamma, epsilon, seed=s_neg,
                                         absolute=absolute)
    pos, neg = [], []
    for t in range(1, stream.T + 1):
        block = stream.block(t)
        pos.append(inst_pos.step(block))
        neg.append(inst_neg.step(block))
    return {"pos": np.array(pos), "neg": np.array(neg),
            "group_counts": list(inst_pos.group_counts)}


@dataclass(frozen=True)
class MinimaxSolution:
    mu: np.ndarray
    objective: float
    certificate_residual: float


def minimax_recover(V, targets, tie_break_norm: bool = True) -> MinimaxSolution:
    """Chebyshev-center recovery argmin_mu max_v |v.mu - c_v| as the LP
    {min s : -s <= v.mu - c_v <= s} over (mu+, mu-, s) >= 0.

    When |V| < d the program is underdetermined; a secondary LP minimizes
    the l1 norm of mu among optima for a deterministic small-norm
    tie-break. The reported residual certifies optimality via
    complementary slackness.
    """
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    c = np.asarray(targets, dtype=np.float64)
    k, d = V.shape
    if c.shape != (k,):
        raise ValueError("one target per direction required")

    # Variables z = (mu+ in R^d, mu- in R^d, tau) with tau = s0 - s for
    # s0 = max|c| + 1. Every right-hand side s0 +- c_v is then positive,
    # so the slack basis is feasible and no phase-1 artificials are
    # needed (they degrade precision with many near-parallel rows).
    s0 = float(np.max(np.abs(c), initial=0.0)) + 1.0
    nvar = 2 * d + 1
    obj = np.zeros(nvar)
    obj[-1] = -1.0  # maximize tau <=> minimize s
    A = np.zeros((2 * k + 1, nvar))
    A[:k, :d] = V
    A[:k, d:2 * d] = -V
    A[:k, -1] = 1.0
    A[k:2 * k, :d] = -V
    A[k:2 * k, d:2 * d] = V
    A[k:2 * k, -1] = 1.0
    A[2 * k, -1] = 1.0  # tau <= s0 keeps s >= 0
    b = np.concatenate([c + s0, s0 - c, [s0]])

    res = solve_lp(obj, A, b)
    tau_opt = res.z[-1]
    residual = res.certificate_residual

    if tie_break_norm and k < d:
        # among optimal mu, pick the minimum-l1 vertex (LP-representable
        # deterministic stand-in for the minimum-norm tie-break)
        obj2 = np.ones(nvar)
        obj2[-1] = 0.0
        A2 = np.vstack([A, [np.r_[np.zeros(2 * d), -1.0]]])
        b2 = np.concatenate([b, [-(tau_opt - 1e-12)]])
        res = solve_lp(obj2, A2, b2)
        residual = max(residual, res.certificate_residual)

    mu = res.z[:d] - res.z[d:2 * d]
    achieved = float(np.max(np.abs(V @ mu - c))) if k else 0.0
    return MinimaxSolution(mu=mu, objective=achieved,
                           certificate_residual=residual)


class ProjectionEstimator(OnlineEstimator):
    """Block-stream estimator: one correlated-binary instance per signed
    grid threshold, Riemann combination per direction, minimax recovery
    per round."""

    name = "projection"

    def __init__(self, profile: TailProfile, epsilon: float, directions: DirectionSet,
                 seed=0, absolute: bool = False):
        super().__init__()
        self.profile = profile
        self.epsilon = epsilon
        self.directions = directions
        self.seed = seed
        self.absolute = absolute
        self.tq: Optional[TailQuantities] = None
        self._pos: list[CorrelatedBinaryEstimator] = []
        self._neg: list[CorrelatedBinaryEstimator] = []
        self._estimate: Optional[np.ndarray] = None
        self._lp_residual = 0.0
        self._max_groups = 1
        self._proj_estimates: Optional[np.ndarray] = None

    def begin(self, cursor):
        super().begin(cursor)
        if cursor.d != self.directions.d:
            raise ValueError("direction set dimension does not match the stream")
        self.tq = tail_quantities(self.profile, self.epsilon, cursor.T)
        ss = as_seed_sequence(self.seed)
        children = ss.spawn(2 * self.tq.m)
        V = self.directions.V
        for i in range(self.tq.m):
            q = float(self.tq.grid[i + 1])
            gam = float(self.profile.F(q))
            gam = min(max(gam, 1e-12), 1.0)
            self._pos.append(CorrelatedBinaryEstimator(
                V, q, gam, self.epsilon, seed=children[2 * i],
                absolute=self.absolute))
            self._neg.append(CorrelatedBinaryEstimator(
                V, -q, gam, self.epsilon, seed=children[2 * i + 1],
                absolute=self.absolute))

    def observe_block(self, t, block):
        tq = self.tq
        nv = self.directions.count
        proj_est = np.zeros(nv)
        max_groups = 1
        if tq.m > 0:
            step = tq.L / tq.m
            for i in range(tq.m):
                y_pos = self._pos[i].step(block)
                y_neg = self._neg[i].step(block)
                proj_est += (y_pos - y_neg) * step
                max_groups = max(max_groups, self._pos[i].group_counts[-1],
                                 self._neg[i].group_counts[-1])
        self._proj_estimates = proj_est
        sol = minimax_recover(self.directions.V, proj_est)
        self._estimate = sol.mu
        self._lp_residual = sol.certificate_residual
        self._max_groups = max_groups

    def emit_estimate(self, t):
        return self._estimate

    def round_diagnostics(self):
        return {"lp_residual": self._lp_residual,
                "group_count": float(self._max_groups)}


def run_projection_estimation(stream: SampleStream, profile: TailProfile,
                              epsilon: float, directions: DirectionSet,
                              seed=0, absolute: bool = False) -> EstimateTrace:
    est = ProjectionEstimator(profile, epsilon, directions, seed=seed,
                              absolute=absolute)
    return replay(stream, est)
