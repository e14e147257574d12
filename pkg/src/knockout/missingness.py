"""Masks, mask distributions, missingness mechanisms, and rate calibration.

A mask is a length-d uint8 vector with 1 marking a missing (or knocked
out) feature. Induced masks are sampled from a :class:`MaskDistribution`
that never sees the data, so independence from inputs and targets holds
by construction. Observed missingness is injected by the mechanisms at
the bottom of this module.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "as_mask",
    "mask_to_bits",
    "bits_to_mask",
    "IID",
    "Grouped",
    "Weighted",
    "MaskDistribution",
    "MCAR",
    "MNARSelfCensor",
    "calibrate_rate",
    "sample_mask",
    "sample_masks",
    "inject_mcar",
    "inject_mnar_self_censor",
    "enumerate_patterns",
]


def as_mask(bits, d: int | None = None) -> np.ndarray:
    """Validate and return a mask as a uint8 vector."""
    arr = np.asarray(bits)
    if arr.ndim != 1:
        raise ValueError(f"mask must be 1-dimensional, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("mask entries must be 0 or 1")
    if d is not None and arr.shape[0] != d:
        raise ValueError(f"mask length {arr.shape[0]} != d {d}")
    return arr.astype(np.uint8)


def mask_to_bits(mask: np.ndarray) -> str:
    """Render a mask as a bit string, e.g. '010000000'."""
    return "".join("1" if b else "0" for b in mask)


def bits_to_mask(bits: str) -> np.ndarray:
    if set(bits) - {"0", "1"}:
        raise ValueError(f"bit string may contain only 0/1, got {bits!r}")
    return np.array([int(c) for c in bits], dtype=np.uint8)


@dataclass(frozen=True)
class IID:
    """Each feature knocked out independently with probability ``rate``."""

    d: int
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"rate must be in [0, 1], got {self.rate}")
        if self.d < 1:
            raise ValueError("d must be >= 1")


@dataclass(frozen=True)
class Grouped:
    """One Bernoulli draw per group; all members share the outcome."""

    groups: tuple[tuple[int, ...], ...]
    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"rate must be in [0, 1], got {self.rate}")
        flat = [i for g in self.groups for i in g]
        if sorted(flat) != list(range(len(flat))):
            raise ValueError("groups must partition the feature indices 0..d-1")

    @property
    def d(self) -> int:
        return sum(len(g) for g in self.groups)


@dataclass(frozen=True)
class Weighted:
    """Explicit distribution over a finite list of patterns."""

    patterns: tuple[np.ndarray, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        if len(self.patterns) != len(self.probabilities):
            raise ValueError("patterns and probabilities must have equal length")
        if not self.patterns:
            raise ValueError("Weighted needs at least one pattern")
        d = len(self.patterns[0])
        masks = tuple(as_mask(p, d) for p in self.patterns)
        object.__setattr__(self, "patterns", masks)
        probs = np.asarray(self.probabilities, dtype=float)
        if (probs < 0).any():
            raise ValueError("probabilities must be nonnegative")
        total = probs.sum()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities must sum to 1 (got {total})")
        # Tolerate text-config rounding by renormalizing within tolerance.
        object.__setattr__(self, "probabilities", tuple(probs / total))

    @property
    def d(self) -> int:
        return len(self.patterns[0])


MaskDistribution = IID | Grouped | Weighted


@dataclass(frozen=True)
class MCAR:
    """Each entry independently missing with probability p."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")


@dataclass(frozen=True)
class MNARSelfCensor:
    """An entry is missing exactly when it exceeds its column's q-quantile."""

    q: float

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must be in (0, 1), got {self.q}")


def calibrate_rate(d: int, p_clean: float) -> float:
    """Knockout rate r with (1 - r)^d = p_clean.

    p_clean is the probability that a sampled mask knocks out nothing,
    e.g. 0.5 so that half of the mini-batches stay clean.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if not 0.0 < p_clean < 1.0:
        raise ValueError(f"p_clean must be in (0, 1), got {p_clean}")
    return 1.0 - p_clean ** (1.0 / d)


def sample_mask(dist: MaskDistribution, rng: np.random.Generator) -> np.ndarray:
    """Draw one mask. Takes no data argument: masks are independent of X, Y."""
    return sample_masks(dist, 1, rng)[0]


def sample_masks(dist: MaskDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n masks as an (n, d) uint8 matrix."""
    if isinstance(dist, IID):
        return (rng.random((n, dist.d)) < dist.rate).astype(np.uint8)
    if isinstance(dist, Grouped):
        draws = rng.random((n, len(dist.groups))) < dist.rate
        out = np.zeros((n, dist.d), dtype=np.uint8)
        for g, group in enumerate(dist.groups):
            out[:, list(group)] = draws[:, g : g + 1]
        return out
    if isinstance(dist, Weighted):
        idx = rng.choice(len(dist.patterns), size=n, p=np.asarray(dist.probabilities))
        table = np.stack(dist.patterns)
        return table[idx]
    raise TypeError(f"unknown mask distribution: {dist!r}")


def inject_mcar(
    data: np.ndarray, p: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Mark each entry missing independently with probability p.

    Returns the data untouched together with the observed mask N; the
    underlying values stay available for oracle checks but trainers must
    treat N == 1 entries as unavailable.
    """
    MCAR(p)  # validate
    data = np.asarray(data, dtype=float)
    observed_mask = (rng.random(data.shape) < p).astype(np.uint8)
    return data, observed_mask


def inject_mnar_self_censor(data: np.ndarray, q: float) -> tuple[np.ndarray, np.ndarray]:
    """Self-censor: entry (i, j) is missing iff it exceeds column j's q-quantile.

    The quantile is the nearest-rank empirical quantile (sorted value at
    1-based index ceil(q * n)); entries strictly greater are censored.
    Deterministic given the dataset.
    """
    MNARSelfCensor(q)  # validate
    data = np.asarray(data, dtype=float)
    n = data.shape[0]
    if n == 0:
        return data, np.zeros_like(data, dtype=np.uint8)
    rank = max(1, math.ceil(q * n))
    cutoffs = np.sort(data, axis=0)[rank - 1]
    observed_mask = (data > cutoffs).astype(np.uint8)
    return data, observed_mask


def enumerate_patterns(d: int, k_max: int) -> list[np.ndarray]:
    """All masks with at most k_max ones, sorted by (popcount, lexicographic)."""
    if not 0 <= k_max <= d:
        raise ValueError(f"need 0 <= k_max <= d, got k_max={k_max}, d={d}")
    patterns = []
    for k in range(k_max + 1):
        level = []
        for idx in itertools.combinations(range(d), k):
            mask = np.zeros(d, dtype=np.uint8)
            mask[list(idx)] = 1
            level.append(mask)
        level.sort(key=lambda m: tuple(m))
        patterns.extend(level)
    return patterns
