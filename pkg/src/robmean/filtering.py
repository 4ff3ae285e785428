"""Online weighted filter and the naive per-round baseline.

The online filter carries one weight per sample across rounds. At round t
it concatenates all blocks revealed so far, then repeatedly (a) computes
the weighted covariance, (b) scores every live sample by its squared
projection onto the top eigenvector, and (c) multiplicatively downweights
the highest-scoring prefix, until the covariance spectral norm drops to
1 + lambda. Weights never increase; every inner iteration drives at least
one live weight to exactly zero, so the loop terminates.

Two readings of the prefix-selection threshold ship (see
``select_filter_set``): the literal one compares raw score prefix sums
against the absolute constant 2*epsilon; the unit-consistent default
compares weighted scores against 2*epsilon*||w||_1*(1+lambda), which keeps
the threshold commensurate with the covariance certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (AssumptionViolation, EstimateTrace, OnlineEstimator,
                   SampleStream, replay)
from .linalg import top_eigenpair, weighted_cov

__all__ = [
    "FilterState",
    "wfilter_step",
    "select_filter_set",
    "online_filter_round",
    "OnlineFilterEstimator",
    "NaiveFilterEstimator",
    "run_online_filter",
    "run_naive_per_round_filter",
    "default_lambda",
]

#: weight-mass floor; dropping below it means the stability assumption or
#: the corruption budget was violated and the run aborts.
MIN_TOTAL_WEIGHT = 0.5


def default_lambda(epsilon: float, delta: float, kappa: float = 10.0) -> float:
    """Filter threshold lambda = kappa * delta^2 / epsilon."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return kappa * delta * delta / epsilon


def wfilter_step(scores: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Scale each weight by (1 - score_i / max score).

    The argmax-score weight becomes exactly 0; no weight increases.
    """
    scores = np.asarray(scores, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("empty score set")
    if np.any(scores < 0):
        raise ValueError("scores must be nonnegative")
    smax = scores.max()
    if smax <= 0.0:
        raise ValueError("all scores are zero")
    return (1.0 - scores / smax) * weights


def select_filter_set(scores_desc: np.ndarray, weights: np.ndarray, epsilon: float,
                      mode: str = "unit", lam: float = 0.0,
                      total_weight: Optional[float] = None) -> int:
    """Smallest prefix length beta of the descending score order to filter.

    mode="paper": smallest beta with sum of the top beta raw scores > 2*eps.
    mode="unit":  smallest beta with sum of the top beta weighted scores
                  w_i * score_i > 2 * eps * ||w||_1 * (1 + lam).

    ``weights`` must be aligned with ``scores_desc``. Returns the full
    length when even the total mass misses the threshold (the caller
    asserts this cannot happen while the covariance guard holds).
    """
    scores_desc = np.asarray(scores_desc, dtype=np.float64)
    n = scores_desc.size
    if n == 0:
        raise ValueError("empty score set")
    if mode == "paper":
        csum = np.cumsum(scores_desc)
        threshold = 2.0 * epsilon
    elif mode == "unit":
        weights = np.asarray(weights, dtype=np.float64)
        if total_weight is None:
            total_weight = float(weights.sum())
        csum = np.cumsum(weights * scores_desc)
        threshold = 2.0 * epsilon * total_weight * (1.0 + lam)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    hit = np.flatnonzero(csum > threshold)
    return int(hit[0]) + 1 if hit.size else n


@dataclass
class FilterState:
    """Filter state carried across rounds (weights only ever decrease)."""

    weights: np.ndarray
    lam: float
    epsilon: float
    round: int = 0
    revealed: Optional[np.ndarray] = None      # n x (t*d) accumulated matrix
    iterations_total: int = 0
    beta_mode: str = "unit"

    @classmethod
    def fresh(cls, n: int, lam: float, epsilon: float, beta_mode: str = "unit"):
        return cls(weights=np.full(n, 1.0 / n), lam=lam, epsilon=epsilon,
                   beta_mode=beta_mode)


def _filter_to_threshold(state: FilterState, X: np.ndarray) -> tuple[float, int]:
    """Run the inner filter loop on the accumulated matrix X until the
    weighted covariance spectral norm is at most 1 + lambda.

    Returns (final spectral norm, iterations used). Each iteration zeroes
    at least one previously positive weight, so the total across a run is
    at most n.
    """
    n = X.shape[0]
    w = state.weights
    iters = 0
    while True:
        total = float(w.sum())
        if total < MIN_TOTAL_WEIGHT:
            raise AssumptionViolation(
                f"total weight {total:.4f} fell below {MIN_TOTAL_WEIGHT}; "
                "corruption budget or lambda setting violated")
        mu = (w @ X) / total
        Xc = X - mu
        cov = (Xc * (w / total)[:, None]).T @ Xc
        cov = 0.5 * (cov + cov.T)
        # value-stagnation exit: the guard only needs the norm, and when
        # the loop does filter, the spiked spectrum converges fast anyway
        eig = top_eigenpair(cov, res_tol=None)
        norm = abs(eig.value)
        if norm <= 1.0 + state.lam:
            return norm, iters
        proj = Xc @ eig.vector
        scores = proj * proj
        live = np.flatnonzero(w > 0)
        order = live[np.argsort(-scores[live], kind="stable")]
        beta = select_filter_set(scores[order], w[order], state.epsilon,
                                 mode=state.beta_mode, lam=state.lam,
                                 total_weight=total)
        sel = order[:beta]
        w[sel] = wfilter_step(scores[sel], w[sel])
        iters += 1
        state.iterations_total += 1
        if state.iterations_total > n:
            raise AssumptionViolation(
                "filter iteration count exceeded n; loop failed to make progress")


def online_filter_round(state: FilterState, block: np.ndarray) -> tuple[np.ndarray, FilterState]:
    """Advance one round: append the block, filter the accumulated matrix to
    the covariance threshold, and emit the weighted mean of the new block
    (normalized by the surviving weight mass)."""
    block = np.atleast_2d(np.asarray(block, dtype=np.float64))
    if state.revealed is None:
        state.revealed = block.copy()
    else:
        state.revealed = np.hstack([state.revealed, block])
    state.round += 1
    norm, iters = _filter_to_threshold(state, state.revealed)
    w = state.weights
    estimate = (w @ block) / w.sum()
    state.last_cov_norm = norm
    state.last_iterations = iters
    return estimate, state


class OnlineFilterEstimator(OnlineEstimator):
    """Algorithm wrapper exposing the online filter through the replay API."""

    name = "online_filter"

    def __init__(self, lam: float, epsilon: float, beta_mode: str = "unit",
                 keep_weight_history: bool = False):
        super().__init__()
        self.lam = lam
        self.epsilon = epsilon
        self.beta_mode = beta_mode
        self.keep_weight_history = keep_weight_history
        self.state: Optional[FilterState] = None
        self._estimate = None
        self.weight_history: list[np.ndarray] = []

    def begin(self, cursor):
        super().begin(cursor)
        self.state = FilterState.fresh(cursor.n, self.lam, self.epsilon,
                                       self.beta_mode)
        # Preallocate the accumulated matrix; at desk scale it fits in RAM.
        self.state.revealed = np.empty((cursor.n, 0))

    def observe_block(self, t, block):
        self._estimate, _ = online_filter_round(self.state, block)
        if self.keep_weight_history:
            self.weight_history.append(self.state.weights.copy())

    def emit_estimate(self, t):
        return self._estimate

    def round_diagnostics(self):
        return {
            "cov_norm": self.state.last_cov_norm,
            "total_weight": float(self.state.weights.sum()),
            "filter_iterations": float(self.state.last_iterations),
        }

    def final_diagnostics(self):
        out = {"weights_final": self.state.weights.copy()}
        if self.keep_weight_history:
            out["weight_history"] = self.weight_history
            out["revealed"] = self.state.revealed
        return out


class NaiveFilterEstimator(OnlineEstimator):
    """Same filter machinery applied to each block independently with the
    weights reset to 1/n every round; the sqrt(T)-error baseline."""

    name = "naive_filter"

    def __init__(self, lam: float, epsilon: float, beta_mode: str = "unit"):
        super().__init__()
        self.lam = lam
        self.epsilon = epsilon
        self.beta_mode = beta_mode
        self._estimate = None
        self._diag = {}

    def observe_block(self, t, block):
        state = FilterState.fresh(block.shape[0], self.lam, self.epsilon,
                                  self.beta_mode)
        self._estimate, state = online_filter_round(state, block)
        self._diag = {
            "cov_norm": state.last_cov_norm,
            "total_weight": float(state.weights.sum()),
            "filter_iterations": float(state.last_iterations),
        }

    def emit_estimate(self, t):
        return self._estimate

    def round_diagnostics(self):
        return self._diag


def run_online_filter(stream: SampleStream, lam: float, epsilon: float,
                      beta_mode: str = "unit",
                      keep_weight_history: bool = False) -> EstimateTrace:
    """Full T-round online-filter trace with per-round diagnostics.

    ``epsilon`` is the configured corruption budget (an algorithm input,
    like lambda); estimators never read the stream's hidden mask.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    est = OnlineFilterEstimator(lam, epsilon, beta_mode, keep_weight_history)
    return replay(stream, est)


def run_naive_per_round_filter(stream: SampleStream, lam: float, epsilon: float,
                               beta_mode: str = "unit") -> EstimateTrace:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    est = NaiveFilterEstimator(lam, epsilon, beta_mode)
    return replay(stream, est)
