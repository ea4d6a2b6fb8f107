"""Per-sample training dynamics and the strength schedule derived from them.

Each sample keeps its last softmax output, a ring buffer of the last ``L``
absolute deltas between consecutive epoch outputs, and an exponential moving
average of the windowed variance of those deltas. At every epoch boundary the
moving averages are min-max normalised into augmentation strengths for the
next epoch.
"""
from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from sada import kernels
from sada.errors import (
    DimensionError,
    EmptyInputError,
    IncompleteEpochError,
    LabelIndexError,
    NumericInputError,
    OrderingError,
)

SIMPLEX_TOL = 1e-6


class Direction(str, enum.Enum):
    INVERSE = "inverse"
    DIRECT = "direct"


class Source(str, enum.Enum):
    WARMUP = "warmup"
    SCHEDULED = "scheduled"


@dataclass(frozen=True)
class TrackerConfig:
    window_len: int = 5
    decay: float = 0.9
    direction: Direction = Direction.INVERSE
    warmup_strength: float = 0.5
    prob_floor: float = 1e-8
    # re-evaluate un-augmented samples at epoch end instead of using training outputs
    clean_pass: bool = False

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        if int(self.window_len) != self.window_len or self.window_len < 1:
            raise ValueError(f"window_len must be an integer >= 1, got {self.window_len}")
        if not 0.0 <= self.decay <= 1.0:
            raise ValueError(f"decay must lie in [0, 1], got {self.decay}")
        if not 0.0 <= self.warmup_strength <= 1.0:
            raise ValueError(f"warmup_strength must lie in [0, 1], got {self.warmup_strength}")
        if not 0.0 < self.prob_floor <= 1e-3:
            raise ValueError(f"prob_floor must lie in (0, 1e-3], got {self.prob_floor}")


def _as_simplex(p, name):
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError(f"{name} must be a non-empty 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericInputError(f"{name} contains NaN or Inf")
    if np.any(arr < -SIMPLEX_TOL) or abs(arr.sum() - 1.0) > SIMPLEX_TOL:
        raise NumericInputError(f"{name} is not a probability vector (sum={arr.sum():.9g})")
    return arr


@dataclass(frozen=True)
class ProbSnapshot:
    epoch: int
    probs: np.ndarray

    def __post_init__(self):
        if self.epoch < 0:
            raise ValueError("epoch must be >= 0")
        arr = _as_simplex(self.probs, "probs").copy()
        arr.flags.writeable = False
        object.__setattr__(self, "probs", arr)


@dataclass(frozen=True)
class StrengthTable:
    """Strengths in [0, 1] for every sample, valid for one epoch."""

    epoch: int
    strengths: np.ndarray
    source: Source

    def __post_init__(self):
        arr = np.array(self.strengths, dtype=np.float64)
        if arr.ndim != 1:
            raise DimensionError("strengths must be 1-d")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError("strengths must lie in [0, 1]")
        arr.flags.writeable = False
        object.__setattr__(self, "strengths", arr)
        object.__setattr__(self, "source", Source(self.source))

    def __len__(self):
        return len(self.strengths)

    @classmethod
    def constant(cls, epoch, n, value, source=Source.WARMUP):
        return cls(epoch, np.full(n, float(value)), source)


def kl_delta(p_t, p_prev, floor=1e-8):
    """KL divergence of consecutive outputs, ``sum p_t log(p_t / max(p_prev, floor))``."""
    a = _as_simplex(p_t, "p_t")
    b = _as_simplex(p_prev, "p_prev")
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")
    if floor <= 0:
        raise ValueError("floor must be > 0")
    return float(kernels.kl_rows(a[None, :], np.ascontiguousarray(b[None, :]), floor)[0])


def onehot_delta(p_t, p_prev, label, floor=1e-8):
    """Change in true-class log-probability, ``log(p_t[y] / max(p_prev[y], floor))``.

    Equals ``loss(prev) - loss(curr)`` for cross-entropy.
    """
    a = _as_simplex(p_t, "p_t")
    b = _as_simplex(p_prev, "p_prev")
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.size} vs {b.size}")
    if not 0 <= label < a.size:
        raise LabelIndexError(f"label {label} out of range for {a.size} classes")
    return math.log(max(a[label], floor) / max(b[label], floor))


@dataclass
class DeltaWindow:
    """Fixed-capacity FIFO of non-negative deltas for a single sample."""

    capacity: int
    values: deque = field(default=None)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.values = deque(self.values or (), maxlen=self.capacity)

    @property
    def count(self):
        return len(self.values)

    def push(self, value):
        if value < 0 or not math.isfinite(value):
            raise NumericInputError(f"window values must be finite and >= 0, got {value}")
        self.values.append(float(value))


def window_variance(window):
    """Sum of squared deviations from the window mean; 0 for fewer than two values.

    The sum is deliberately not divided by the window length.
    """
    vals = list(window.values) if isinstance(window, DeltaWindow) else list(window)
    if len(vals) < 2:
        return 0.0
    arr = np.asarray(vals, dtype=np.float64)[None, :]
    return float(kernels.window_variance(np.ascontiguousarray(arr),
                                         np.array([arr.shape[1]], dtype=np.int64))[0])


def ema_update(ema_prev, v_t, decay):
    return decay * v_t + (1.0 - decay) * ema_prev


def normalize_strengths(emas, direction=Direction.INVERSE, epoch=0):
    """Min-max normalise moving averages into a scheduled :class:`StrengthTable`.

    ``inverse`` gives the lowest-variance sample strength 1; a degenerate
    range maps every sample to 0.5.
    """
    v = np.asarray(emas, dtype=np.float64)
    if v.size == 0:
        raise EmptyInputError("cannot normalise an empty array")
    lo, hi = v.min(), v.max()
    if hi == lo:
        s = np.full(v.shape, 0.5)
    else:
        u = (v - lo) / (hi - lo)
        s = u if Direction(direction) is Direction.DIRECT else 1.0 - u
        s = np.clip(s, 0.0, 1.0)
    return StrengthTable(epoch, s, Source.SCHEDULED)


class InfluenceTracker:
    """Vectorised per-sample state for ``n_samples`` samples over ``n_classes``."""

    def __init__(self, n_samples, n_classes, config=None):
        self.config = config or TrackerConfig()
        self.n_samples = int(n_samples)
        self.n_classes = int(n_classes)
        n, k, cap = self.n_samples, self.n_classes, self.config.window_len
        self.last_probs = np.zeros((n, k), dtype=np.float64)
        self.last_epoch = np.full(n, -1, dtype=np.int64)
        self.window = np.zeros((n, cap), dtype=np.float64)
        self.count = np.zeros(n, dtype=np.int64)
        self.head = np.zeros(n, dtype=np.int64)
        self.ema = np.zeros(n, dtype=np.float64)
        self.last_delta = np.full(n, np.nan)
        self.last_variance = np.zeros(n, dtype=np.float64)

    def state_size(self):
        """Number of scalars held; independent of how many epochs have run."""
        return sum(a.size for a in (self.last_probs, self.last_epoch, self.window, self.count,
                                    self.head, self.ema, self.last_delta, self.last_variance))

    @property
    def initialized(self):
        return self.last_epoch >= 0

    def record_output(self, sample, snap):
        self.record_batch([sample], np.asarray(snap.probs)[None, :], snap.epoch)

    def record_batch(self, samples, probs, epoch):
        """Record softmax outputs for distinct ``samples`` observed in ``epoch``."""
        idx = np.ascontiguousarray(samples, dtype=np.int64)
        p = np.ascontiguousarray(probs, dtype=np.float64)
        if p.ndim != 2 or p.shape != (idx.size, self.n_classes):
            raise DimensionError(f"probs must have shape ({idx.size}, {self.n_classes}), got {p.shape}")
        status = kernels.record_rows(self.last_probs, self.last_epoch, self.window, self.count,
                                     self.head, self.last_delta, idx, p, int(epoch),
                                     self.config.prob_floor)
        if status == 1:
            raise LabelIndexError("sample id out of range")
        if status == 2:
            raise NumericInputError("probs contain NaN or Inf")
        if status == 3:
            bad = idx[self.last_epoch[idx] >= epoch]
            raise OrderingError(
                f"epoch {epoch} does not advance past the last recorded epoch for samples {bad[:10].tolist()}"
            )

    def window_values(self, sample):
        """Live window contents of one sample, oldest first."""
        c, h, cap = self.count[sample], self.head[sample], self.config.window_len
        row = self.window[sample]
        if c < cap:
            return row[:c].copy()
        return np.concatenate([row[h:], row[:h]])

    def is_warmup(self, epoch):
        return epoch < self.config.window_len + 1

    def end_of_epoch(self, epoch):
        """Refresh moving averages and return the strength table for ``epoch + 1``."""
        missing = np.flatnonzero(self.last_epoch != epoch)
        if missing.size:
            raise IncompleteEpochError(epoch, missing.tolist())
        self.last_variance = kernels.window_variance(self.window, self.count)
        if self.is_warmup(epoch):
            return StrengthTable.constant(epoch + 1, self.n_samples, self.config.warmup_strength)
        self.ema = ema_update(self.ema, self.last_variance, self.config.decay)
        return normalize_strengths(self.ema, self.config.direction, epoch + 1)

    def dump_rows(self, epoch, table):
        """Rows ``(epoch, sample_id, delta, window_variance, ema, strength)`` in sample order."""
        for i in range(self.n_samples):
            d = self.last_delta[i]
            yield (epoch, i, None if np.isnan(d) else float(d), float(self.last_variance[i]),
                   float(self.ema[i]), float(table.strengths[i]))
