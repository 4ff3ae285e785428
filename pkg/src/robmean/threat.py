"""Clean-data generators and strong-contamination adversaries.

Generators draw n x (T*d) clean matrices with a known true mean.
Adversaries inspect the full clean matrix and return replacement rows for
at most floor(epsilon*n) of them (the strong contamination model). All
randomness flows through the numpy Generator handed in by the caller, so
generator and adversary draws are reproducible independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Replacements, SampleStream

__all__ = [
    "Generator",
    "GaussianProduct",
    "BinaryProduct",
    "BoundedKProduct",
    "SubgaussianProduct",
    "GaussianBlocks",
    "IdentityAdversary",
    "MeanShiftAdversary",
    "StaircaseAdversary",
    "MedianAttackAdversary",
    "staircase_block_size",
    "staircase_point",
]


class Generator:
    """Base clean-data generator. Subclasses define sample() and true_mean."""

    name = "generator"

    def __init__(self, T: int, d: int = 1):
        self.T = T
        self.d = d
        self.M = T * d

    @property
    def true_mean(self) -> np.ndarray:
        raise NotImplementedError

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError


class GaussianProduct(Generator):
    """Identity-covariance Gaussian on R^M."""

    name = "gaussian"

    def __init__(self, T: int, d: int = 1, mean: Optional[np.ndarray] = None):
        super().__init__(T, d)
        self._mean = np.zeros(self.M) if mean is None else np.asarray(mean, float)

    @property
    def true_mean(self):
        return self._mean

    def sample(self, n, rng):
        return rng.standard_normal((n, self.M)) + self._mean


class BinaryProduct(Generator):
    """Product of Bernoulli coordinates with means p_t <= gamma (d = 1)."""

    name = "binary_product"

    def __init__(self, T: int, p: np.ndarray):
        super().__init__(T, 1)
        self.p = np.asarray(p, dtype=np.float64)
        if self.p.shape != (T,):
            raise ValueError("p must have one entry per round")
        if np.any(self.p < 0) or np.any(self.p > 1):
            raise ValueError("coordinate means must lie in [0, 1]")

    @classmethod
    def gamma_bounded(cls, T: int, gamma: float, rng: np.random.Generator):
        """Coordinate means drawn uniformly in [0, gamma]."""
        return cls(T, rng.uniform(0.0, gamma, size=T))

    @property
    def true_mean(self):
        return self.p

    def sample(self, n, rng):
        return (rng.random((n, self.T)) < self.p).astype(np.float64)


class BoundedKProduct(Generator):
    """Product whose coordinates have k-th central moment exactly 1 (d = 1).

    Each coordinate is mean + a symmetric two-point variable: +-a with mass
    p_mass/2 each and 0 otherwise, a = p_mass**(-1/k). The tail
    Pr[|X - mean| >= q] is exactly p_mass for q <= a and 0 beyond, which
    makes oracle checks exact.
    """

    name = "bounded_k"

    def __init__(self, T: int, k: int = 4, p_mass: float = 0.1,
                 mean: Optional[np.ndarray] = None):
        super().__init__(T, 1)
        if k < 4:
            raise ValueError("k must be at least 4")
        self.k = k
        self.p_mass = p_mass
        self.a = p_mass ** (-1.0 / k)
        self._mean = np.zeros(T) if mean is None else np.asarray(mean, float)

    @property
    def true_mean(self):
        return self._mean

    def sample(self, n, rng):
        u = rng.random((n, self.T))
        x = np.zeros((n, self.T))
        x[u < self.p_mass / 2] = self.a
        x[(u >= self.p_mass / 2) & (u < self.p_mass)] = -self.a
        return x + self._mean


class SubgaussianProduct(Generator):
    """Unit-variance subgaussian coordinates: Rademacher/2 + sqrt(3)/2 * N(0,1)."""

    name = "subgaussian"

    def __init__(self, T: int, mean: Optional[np.ndarray] = None):
        super().__init__(T, 1)
        self._mean = np.zeros(T) if mean is None else np.asarray(mean, float)

    @property
    def true_mean(self):
        return self._mean

    def sample(self, n, rng):
        rad = rng.integers(0, 2, size=(n, self.T)) * 2.0 - 1.0
        g = rng.standard_normal((n, self.T))
        return 0.5 * rad + (math.sqrt(3.0) / 2.0) * g + self._mean


class GaussianBlocks(Generator):
    """Round-wise independent d-dimensional Gaussian blocks with optional
    within-round correlation rho (unit marginal variances)."""

    name = "gaussian_blocks"

    def __init__(self, T: int, d: int, mean: Optional[np.ndarray] = None,
                 rho: float = 0.0):
        super().__init__(T, d)
        if not -1.0 / max(d - 1, 1) < rho < 1.0:
            raise ValueError("rho outside the positive-definite range")
        self.rho = rho
        self._mean = np.zeros(self.M) if mean is None else np.asarray(mean, float)
        cov = np.full((d, d), rho) + (1.0 - rho) * np.eye(d)
        self._chol = np.linalg.cholesky(cov)

    @property
    def true_mean(self):
        return self._mean

    def sample(self, n, rng):
        g = rng.standard_normal((n, self.T, self.d))
        x = g @ self._chol.T
        return x.reshape(n, self.M) + self._mean


# ---------------------------------------------------------------------------
# Adversaries
# ---------------------------------------------------------------------------


class IdentityAdversary:
    """Null adversary: replaces nothing."""

    name = "identity"

    def corrupt(self, clean, epsilon, true_mean, rng):
        M = clean.shape[1]
        return Replacements(indices=np.zeros(0, dtype=np.intp),
                            rows=np.zeros((0, M)))


class MeanShiftAdversary:
    """Replaces floor(epsilon*n) rows with fresh draws from the clean
    distribution shifted by magnitude*epsilon per round along a unit
    direction. The per-round marginals of the corrupted rows are therefore
    indistinguishable from a slightly shifted clean distribution, which is
    exactly the attack that defeats per-round filtering.
    """

    name = "mean_shift"

    def __init__(self, generator: Generator, magnitude: float = 10.0,
                 direction: Optional[np.ndarray] = None):
        self.generator = generator
        self.magnitude = magnitude
        d = generator.d
        if direction is None:
            direction = np.zeros(d)
            direction[0] = 1.0
        direction = np.asarray(direction, dtype=np.float64)
        if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
            raise ValueError("direction must be a unit vector")
        self.direction = direction

    def corrupt(self, clean, epsilon, true_mean, rng):
        n = clean.shape[0]
        k = math.floor(epsilon * n)
        idx = rng.choice(n, size=k, replace=False)
        rows = self.generator.sample(k, rng)
        shift = np.tile(self.direction, self.generator.T) * (self.magnitude * epsilon)
        return Replacements(indices=idx, rows=rows + shift)


def staircase_block_size(n: int, T: int, epsilon: float) -> int:
    """Per-block count b solving b = floor(eps*|C| / (T(1-eps))) with
    |C| = n - T*b, the self-consistent reading of the lower-bound
    construction that respects the floor(eps*n) budget."""
    b = math.floor(epsilon * n / T)
    for _ in range(64):
        c = n - T * b
        nxt = math.floor(epsilon * c / (T * (1.0 - epsilon)))
        nxt = min(nxt, math.floor(epsilon * n) // T)
        if nxt == b:
            break
        b = nxt
    if b <= 0:
        raise ValueError(
            f"staircase block size is 0 for n={n}, T={T}, eps={epsilon}")
    assert T * b <= math.floor(epsilon * n)
    return b


def staircase_point(i: int, T: int) -> np.ndarray:
    """The i-th staircase point sqrt(T) * (1/i, 1/(i-1), ..., 1/2, 1, 0...0)."""
    p = np.zeros(T)
    p[:i] = 1.0 / np.arange(i, 0, -1)
    return math.sqrt(T) * p


class StaircaseAdversary:
    """Lower-bound construction: T blocks B_1..B_T of identical rows at the
    staircase points (shifted by the true mean), each of the self-consistent
    block size. Labels record the block index so a cooperating subset
    schedule can replay the nested sets X^(t).
    """

    name = "staircase"

    def corrupt(self, clean, epsilon, true_mean, rng):
        n, M = clean.shape
        T = M  # construction is per-coordinate (d = 1)
        b = staircase_block_size(n, T, epsilon)
        k = T * b
        idx = rng.choice(n, size=k, replace=False)
        rows = np.empty((k, T))
        labels = np.empty(k, dtype=np.int64)
        for i in range(1, T + 1):
            sl = slice((i - 1) * b, i * b)
            rows[sl] = staircase_point(i, T) + np.asarray(true_mean)
            labels[sl] = i
        return Replacements(indices=idx, rows=rows, labels=labels)

    @staticmethod
    def subset_schedule(stream: SampleStream) -> list[np.ndarray]:
        """Row-index sets X^(1) .. X^(T): X^(t) keeps the clean rows and the
        blocks B_t..B_T, dropping one block per round from the low-index end
        (X^(0) = X is the full set)."""
        if stream.labels is None:
            raise ValueError("stream carries no staircase labels")
        sets = []
        for t in range(1, stream.T + 1):
            keep = (stream.labels < 0) | (stream.labels >= t)
            sets.append(np.flatnonzero(keep))
        return sets


class MedianAttackAdversary:
    """Stress attack for the group-median estimators on bit streams: all
    corrupted rows emit 1 in round 1 (maximal first-round group-mean
    displacement; the cap gamma bounds the damage), then follow the
    majority bit of the clean samples sharing their observation history,
    staying concentrated inside the heavy groups.
    """

    name = "median_attack"

    def __init__(self, gamma: float):
        self.gamma = gamma

    def corrupt(self, clean, epsilon, true_mean, rng):
        n, T = clean.shape
        if not np.isin(clean, (0.0, 1.0)).all():
            raise ValueError("median attack requires bit-valued clean data")
        k = math.floor(epsilon * n)
        idx = rng.choice(n, size=k, replace=False)
        clean_mask = np.ones(n, dtype=bool)
        clean_mask[idx] = False

        bits = clean.copy()
        bits[idx, 0] = 1.0
        # Simulated group ids under the noiseless split (adversary cannot
        # predict the estimator's label noise).
        ids = np.zeros(n, dtype=np.int64)
        for t in range(1, T):
            ids = ids * 2 + bits[:, t - 1].astype(np.int64)
            _, ids = np.unique(ids, return_inverse=True)
            counts1 = np.bincount(ids[clean_mask],
                                  weights=clean[clean_mask, t],
                                  minlength=ids.max() + 1)
            counts = np.bincount(ids[clean_mask], minlength=ids.max() + 1)
            with np.errstate(invalid="ignore"):
                majority = np.where(counts > 0, counts1 / np.maximum(counts, 1), 0.0)
            bits[idx, t] = (majority[ids[idx]] >= 0.5).astype(np.float64)
        return Replacements(indices=idx, rows=bits[idx])
