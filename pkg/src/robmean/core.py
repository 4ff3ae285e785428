"""Shared data model: corrupted sample streams, round replay, estimate traces.

A :class:`SampleStream` holds an n x (T*d) dataset revealed in T column
blocks of width d. Ground-truth labels (which rows the adversary replaced)
and the true mean travel with the stream for instrumentation only;
estimators never receive them. :func:`replay` drives an estimator through
the rounds while enforcing the online discipline: block t' > t cannot be
read during round t.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, runtime_checkable

import numpy as np

__all__ = [
    "OnlineDisciplineError",
    "AssumptionViolation",
    "WeightVector",
    "SampleStream",
    "StreamCursor",
    "EstimateTrace",
    "OnlineEstimator",
    "Replacements",
    "Adversary",
    "make_stream",
    "replay",
    "l2_error",
]


class OnlineDisciplineError(RuntimeError):
    """An estimator tried to read a block that is not yet revealed."""


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """Accept an int or an already-spawned SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


class AssumptionViolation(RuntimeError):
    """A runtime assumption failed (e.g. filter weight mass collapsed)."""


@dataclass
class WeightVector:
    """Per-sample confidence weights, each in [0, 1/n], only ever decreased."""

    w: np.ndarray

    @classmethod
    def fresh(cls, n: int) -> "WeightVector":
        return cls(np.full(n, 1.0 / n))

    def __array__(self, dtype=None):
        return np.asarray(self.w, dtype=dtype)

    @property
    def total(self) -> float:
        return float(self.w.sum())

    def validate(self) -> None:
        n = self.w.size
        if np.any(self.w < 0) or np.any(self.w > 1.0 / n + 1e-15):
            raise ValueError("weights must lie in [0, 1/n]")


@dataclass(frozen=True)
class Replacements:
    """Adversary output: which rows to replace and with what.

    ``labels`` is optional adversary-private annotation per replaced row
    (e.g. which lower-bound block the row belongs to); it rides along as
    instrumentation.
    """

    indices: np.ndarray
    rows: np.ndarray
    labels: Optional[np.ndarray] = None


@runtime_checkable
class Adversary(Protocol):
    def corrupt(self, clean: np.ndarray, epsilon: float, true_mean: np.ndarray,
                rng: np.random.Generator) -> Replacements: ...


@dataclass(frozen=True)
class SampleStream:
    """Corrupted dataset revealed in T column blocks of width d.

    ``corrupted_mask`` and ``true_mean`` are hidden from estimators and are
    read only by instrumentation and tests. ``labels`` carries per-row
    adversary annotations (-1 for clean rows) when the adversary provides
    them.
    """

    data: np.ndarray
    T: int
    d: int
    corrupted_mask: np.ndarray
    true_mean: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        n, M = self.data.shape
        if M != self.T * self.d:
            raise ValueError(f"data has {M} columns, expected T*d = {self.T * self.d}")
        if self.corrupted_mask.shape != (n,):
            raise ValueError("corrupted_mask must have one entry per row")
        if self.true_mean.shape != (M,):
            raise ValueError("true_mean must have M entries")
        self.data.setflags(write=False)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def M(self) -> int:
        return self.data.shape[1]

    def block(self, t: int) -> np.ndarray:
        """Columns [(t-1)d, td) for round t in 1..T."""
        if not 1 <= t <= self.T:
            raise IndexError(f"round {t} outside 1..{self.T}")
        return self.data[:, (t - 1) * self.d: t * self.d]

    def true_block_mean(self, t: int) -> np.ndarray:
        return self.true_mean[(t - 1) * self.d: t * self.d]

    def prefix(self, t: int) -> np.ndarray:
        """Columns of blocks 1..t (concatenated history)."""
        if not 1 <= t <= self.T:
            raise IndexError(f"round {t} outside 1..{self.T}")
        return self.data[:, : t * self.d]


class StreamCursor:
    """Round-guarded view of a stream handed to estimators during replay.

    Reading block t' > current round raises :class:`OnlineDisciplineError`,
    aborting the replay.
    """

    def __init__(self, stream: SampleStream):
        self._stream = stream
        self.round = 0

    @property
    def n(self) -> int:
        return self._stream.n

    @property
    def T(self) -> int:
        return self._stream.T

    @property
    def d(self) -> int:
        return self._stream.d

    def block(self, t: int) -> np.ndarray:
        if t > self.round:
            raise OnlineDisciplineError(
                f"block {t} requested during round {self.round}")
        return self._stream.block(t)

    def _advance(self, t: int) -> None:
        self.round = t


@dataclass
class EstimateTrace:
    """Per-round estimates plus diagnostics collected during a replay."""

    estimates: np.ndarray                 # T x d
    diagnostics: dict = field(default_factory=dict)
    wall_ms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    extras: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.estimates.shape[0]


class OnlineEstimator:
    """Base class for online estimators.

    Subclasses implement :meth:`observe_block` (consume block t) and
    :meth:`emit_estimate` (commit the round-t estimate, a pure function of
    blocks 1..t). :meth:`round_diagnostics` may expose per-round scalars;
    :meth:`final_diagnostics` run-level arrays or objects.
    """

    name = "estimator"

    def __init__(self):
        self._cursor: Optional[StreamCursor] = None
        self._begun = False

    def begin(self, cursor: StreamCursor) -> None:
        if self._begun:
            raise RuntimeError("estimator already used; replay requires a fresh one")
        self._begun = True
        self._cursor = cursor

    def observe_block(self, t: int, block: np.ndarray) -> None:
        raise NotImplementedError

    def emit_estimate(self, t: int) -> np.ndarray:
        raise NotImplementedError

    def round_diagnostics(self) -> dict:
        return {}

    def final_diagnostics(self) -> dict:
        return {}


def make_stream(clean: np.ndarray, true_mean: np.ndarray, adversary: Optional[Adversary],
                epsilon: float, T: int, d: int, seed: int) -> SampleStream:
    """Apply a strong-contamination adversary to a clean matrix.

    The adversary sees the full clean matrix (all T blocks) and may replace
    at most floor(epsilon*n) rows. Rows are then globally permuted with the
    stream seed so corrupted rows are not positionally identifiable; the
    mask travels with the permutation.
    """
    clean = np.asarray(clean, dtype=np.float64)
    true_mean = np.asarray(true_mean, dtype=np.float64)
    if not 0.0 <= epsilon < 0.5:
        raise ValueError(f"epsilon must be in [0, 1/2), got {epsilon}")
    n, M = clean.shape
    if M != T * d:
        raise ValueError(f"clean matrix has {M} columns, expected T*d = {T * d}")
    budget = math.floor(epsilon * n)

    rng = np.random.default_rng(seed)
    data = clean.copy()
    mask = np.zeros(n, dtype=bool)
    labels = np.full(n, -1, dtype=np.int64)
    if adversary is not None:
        rep = adversary.corrupt(clean, epsilon, true_mean, rng)
        idx = np.asarray(rep.indices, dtype=np.intp)
        rows = np.asarray(rep.rows, dtype=np.float64)
        if idx.ndim != 1 or rows.shape != (idx.size, M):
            raise ValueError(
                f"adversary output has shape {rows.shape}, expected ({idx.size}, {M})")
        if np.unique(idx).size != idx.size:
            raise ValueError("adversary replaced the same row twice")
        if idx.size > budget:
            raise ValueError(
                f"adversary replaced {idx.size} rows, budget is {budget}")
        data[idx] = rows
        mask[idx] = True
        if rep.labels is not None:
            labels[idx] = np.asarray(rep.labels, dtype=np.int64)

    perm = rng.permutation(n)
    return SampleStream(data=data[perm], T=T, d=d, corrupted_mask=mask[perm],
                        true_mean=true_mean, labels=labels[perm])


def replay(stream: SampleStream, estimator: OnlineEstimator) -> EstimateTrace:
    """Feed blocks in order, collecting the estimate right after each block.

    Deterministic given the stream and the estimator's construction seed.
    Estimator failures (all weights zero, discipline violations) propagate.
    """
    cursor = StreamCursor(stream)
    estimator.begin(cursor)
    estimates = np.zeros((stream.T, stream.d))
    wall_ms = np.zeros(stream.T)
    per_round: dict[str, list] = {}
    for t in range(1, stream.T + 1):
        tic = time.perf_counter()
        cursor._advance(t)
        estimator.observe_block(t, cursor.block(t))
        mu_t = np.atleast_1d(np.asarray(estimator.emit_estimate(t), dtype=np.float64))
        if mu_t.shape != (stream.d,):
            raise ValueError(f"estimate at round {t} has shape {mu_t.shape}, "
                             f"expected ({stream.d},)")
        estimates[t - 1] = mu_t
        wall_ms[t - 1] = (time.perf_counter() - tic) * 1e3
        for key, val in estimator.round_diagnostics().items():
            per_round.setdefault(key, []).append(val)
    diagnostics = {k: np.asarray(v) for k, v in per_round.items()}
    return EstimateTrace(estimates=estimates, diagnostics=diagnostics,
                         wall_ms=wall_ms, extras=estimator.final_diagnostics())


def l2_error(trace: EstimateTrace, true_mean: np.ndarray) -> float:
    """Round-concatenated l2 distance sqrt(sum_t ||mu_t - mu*_t||^2)."""
    true_mean = np.asarray(true_mean, dtype=np.float64)
    T, d = trace.estimates.shape
    if true_mean.shape != (T * d,):
        raise ValueError(f"true_mean has shape {true_mean.shape}, expected ({T * d},)")
    diff = trace.estimates - true_mean.reshape(T, d)
    return float(np.sqrt((diff ** 2).sum()))


def per_round_sq_errors(trace: EstimateTrace, true_mean: np.ndarray) -> np.ndarray:
    """||mu_t - mu*_t||^2 for each round."""
    true_mean = np.asarray(true_mean, dtype=np.float64)
    T, d = trace.estimates.shape
    diff = trace.estimates - true_mean.reshape(T, d)
    return (diff ** 2).sum(axis=1)


class SampleMeanEstimator(OnlineEstimator):
    """Plain per-block sample mean (non-robust baseline)."""

    name = "sample_mean"

    def __init__(self):
        super().__init__()
        self._mu = None

    def observe_block(self, t, block):
        self._mu = block.mean(axis=0)

    def emit_estimate(self, t):
        return self._mu


class ZeroEstimator(OnlineEstimator):
    """Echoes the zero vector every round."""

    name = "zero"

    def __init__(self):
        super().__init__()
        self._d = None

    def observe_block(self, t, block):
        self._d = block.shape[1]

    def emit_estimate(self, t):
        return np.zeros(self._d)
