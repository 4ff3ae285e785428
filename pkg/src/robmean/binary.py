"""Group-median estimation for bounded binary product streams.

Per round the samples are partitioned by their full bit history; each
group's capped mean min(gamma, group mean) votes in a size-weighted
median. A preprocessing step randomizes every bit (to 1 w.p. gamma/4, to
0 w.p. 1/2 - gamma/4, unchanged otherwise) so the working stream has
coordinate means inside [gamma/4, 3*gamma/4]; the affine inverse
mu = 2*mu' - gamma/2 is applied to all outputs.

Instrumentation (adversarial group densities and the potential below) is
computed outside the estimator from the hidden mask, so estimator logic
cannot depend on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import EstimateTrace, OnlineEstimator, SampleStream, replay
from .linalg import weighted_median

__all__ = [
    "MAX_ROUNDS",
    "GroupTree",
    "g_gamma",
    "add_label_noise",
    "noisy_bits",
    "invert_noise",
    "group_estimate",
    "BinaryProductEstimator",
    "run_binary_product",
    "potential",
    "potential_series",
    "group_densities",
]

#: group count and the 2^T sample requirement make larger T meaningless
#: on a workstation.
MAX_ROUNDS = 24


def g_gamma(x: float, gamma: float, epsilon: float) -> float:
    """Piecewise potential kernel: x^2 below the kink 10*eps/gamma, then the
    tangent line 20*(eps/gamma)*x - 100*(eps/gamma)^2 (continuous, convex,
    2-strongly convex below the kink)."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0) or np.any(x > 1):
        raise ValueError("argument must lie in [0, 1]")
    if not 0 < gamma <= 1 or not 0 < epsilon < 1:
        raise ValueError("gamma in (0, 1], epsilon in (0, 1) required")
    r = epsilon / gamma
    out = np.where(x < 10.0 * r, x * x, 20.0 * r * x - 100.0 * r * r)
    return float(out) if out.ndim == 0 else out


def noisy_bits(bits: np.ndarray, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """One uniform coin per entry: set to 1 w.p. gamma/4, to 0 w.p.
    1/2 - gamma/4, keep otherwise."""
    u = rng.random(bits.shape)
    return np.where(u < gamma / 4.0, 1.0, np.where(u < 0.5, 0.0, bits))


def invert_noise(mu_noisy, gamma: float):
    """Affine inverse of the preprocessing: mu = 2*mu' - gamma/2."""
    return 2.0 * np.asarray(mu_noisy, dtype=np.float64) - gamma / 2.0


def add_label_noise(bits: np.ndarray, gamma: float, rng: np.random.Generator):
    """Noise an n x T bit stream; returns (noisy stream, inverse map)."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    noisy = noisy_bits(np.asarray(bits, dtype=np.float64), gamma, rng)
    return noisy, lambda mu: invert_noise(mu, gamma)


def group_estimate(group: np.ndarray, bits_t: np.ndarray, gamma: float) -> float:
    """Capped group mean min(gamma, mean of bits over the group)."""
    group = np.asarray(group, dtype=np.intp)
    if group.size == 0:
        raise ValueError("empty group")
    return float(min(gamma, float(np.mean(np.asarray(bits_t)[group]))))


@dataclass
class GroupTree:
    """Round-by-round partition of [n] keyed by observed bit history.

    ``ids[t]`` (t = 0..T) is the dense group id of every sample in the
    partition used to compute the round-(t+1) estimates; ``ids[T]`` is the
    partition after the final split, needed by the end-of-run potential.
    ``noisy[t]`` keeps the post-preprocessing bits that drove the round-
    (t+1) split, for lemma-level instrumentation.
    """

    ids: list[np.ndarray] = field(default_factory=list)
    noisy: list[np.ndarray] = field(default_factory=list)

    @property
    def rounds(self) -> int:
        return len(self.ids)

    def sizes(self, k: int) -> np.ndarray:
        ids = self.ids[k]
        return np.bincount(ids, minlength=ids.max() + 1)


class BinaryProductEstimator(OnlineEstimator):
    """Group-split estimator for gamma-bounded bit streams (d = 1)."""

    name = "binary_product"

    def __init__(self, gamma: float, epsilon: float, seed=0,
                 keep_tree: bool = True):
        super().__init__()
        if not 0 < gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        self.gamma = gamma
        self.epsilon = epsilon
        self.rng = np.random.default_rng(seed)
        self.keep_tree = keep_tree
        self.tree = GroupTree()
        self._ids: Optional[np.ndarray] = None
        self._estimate = 0.0
        self._internal = 0.0
        self._group_count = 1

    def begin(self, cursor):
        super().begin(cursor)
        if cursor.T > MAX_ROUNDS:
            raise ValueError(f"T = {cursor.T} exceeds the desk-scale cap {MAX_ROUNDS}")
        if cursor.d != 1:
            raise ValueError("binary product estimation requires d = 1")
        self._ids = np.zeros(cursor.n, dtype=np.int64)
        if self.keep_tree:
            self.tree.ids.append(self._ids.copy())

    def observe_block(self, t, block):
        bits = block[:, 0]
        if t == 1 and not np.isin(bits, (0.0, 1.0)).all():
            raise ValueError("stream is not bit-valued")
        self.step(bits)

    def step(self, bits: np.ndarray) -> float:
        """Process one round of raw bits; returns the denoised estimate.

        Exposed so composite estimators can drive many instances without
        the replay machinery.
        """
        if self._ids is None:
            self._ids = np.zeros(bits.shape[0], dtype=np.int64)
            if self.keep_tree:
                self.tree.ids.append(self._ids.copy())
        noisy = noisy_bits(bits, self.gamma, self.rng)
        sizes = np.bincount(self._ids)
        sums = np.bincount(self._ids, weights=noisy)
        ests = np.minimum(self.gamma, sums / sizes)
        med = weighted_median(ests, sizes)
        self._internal = med
        self._estimate = invert_noise(med, self.gamma)
        # split on the noisy bit; empty groups are dropped by the
        # dense re-indexing
        key = self._ids * 2 + noisy.astype(np.int64)
        _, self._ids = np.unique(key, return_inverse=True)
        self._group_count = int(self._ids.max()) + 1
        if self.keep_tree:
            self.tree.ids.append(self._ids.copy())
            self.tree.noisy.append(noisy.astype(np.uint8))
        return float(self._estimate)

    def emit_estimate(self, t):
        return np.array([self._estimate])

    def round_diagnostics(self):
        return {"internal_estimate": self._internal,
                "group_count": float(self._group_count)}

    def final_diagnostics(self):
        return {"tree": self.tree} if self.keep_tree else {}


def group_densities(ids: np.ndarray, mask: np.ndarray):
    """Per-group (size, adversarial density) from the instrumentation mask."""
    sizes = np.bincount(ids)
    bad = np.bincount(ids, weights=mask.astype(np.float64))
    return sizes, bad / sizes


def potential(ids: np.ndarray, mask: np.ndarray, gamma: float, epsilon: float) -> float:
    """Size-weighted sum (1/n) * sum_i g_gamma(density_i) * |S_i|."""
    if mask is None:
        raise ValueError("instrumentation mask required")
    sizes, dens = group_densities(ids, mask)
    n = ids.size
    return float(np.sum(g_gamma(dens, gamma, epsilon) * sizes) / n)


def potential_series(tree: GroupTree, mask: np.ndarray, gamma: float,
                     epsilon: float) -> np.ndarray:
    """Phi evaluated on every stored partition (rounds 1..T plus the
    post-final-split partition)."""
    return np.array([potential(ids, mask, gamma, epsilon) for ids in tree.ids])


def run_binary_product(stream: SampleStream, gamma: float, epsilon: float,
                       seed=0, instrument: bool = True) -> EstimateTrace:
    """Replay the group-median estimator over a bit stream.

    With ``instrument`` the trace's extras carry the group tree, the
    potential series Phi(1..T+1), per-round internal (pre-inversion)
    estimates and, when the stream's true mean is available, the internal
    errors eta_t used by the potential-coupling diagnostics.
    """
    est = BinaryProductEstimator(gamma, epsilon, seed=seed, keep_tree=instrument)
    trace = replay(stream, est)
    if instrument:
        tree: GroupTree = trace.extras["tree"]
        phis = potential_series(tree, stream.corrupted_mask, gamma, epsilon)
        trace.extras["potential"] = phis
        trace.diagnostics["potential"] = phis[1:]
        internal = trace.diagnostics["internal_estimate"]
        noisy_true = stream.true_mean / 2.0 + gamma / 4.0
        trace.extras["internal_error"] = np.abs(internal - noisy_true)
    return trace
