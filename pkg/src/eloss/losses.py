"""Entropy-change profiles and the L1/L2/Eloss quantities.

A forward pass that taps N+1 layer outputs yields entropy values
H_1..H_{N+1}; the profile stores them with their successive differences
dH_n = H_{n+1} - H_n.  From the deltas:

    L1 = population variance of the deltas   (steadiness; >= 0)
    L2 = -sum of squared deltas              (change magnitude; <= 0)
    Eloss = lambda1 * L1 + lambda2 * L2

In metric mode the non-negative L1 alone scores the instability of a
single forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_LAMBDA1 = 1.0
DEFAULT_LAMBDA2 = 0.1


class InsufficientTapsError(ValueError):
    """A profile needs at least two tapped entropy values."""


@dataclass(frozen=True)
class EntropyProfile:
    """Per-tap entropy values and their successive differences."""

    taps: tuple[float, ...]
    deltas: tuple[float, ...]
    tap_names: tuple[str, ...]

    def to_record(self) -> dict:
        """JSON-ready record of the profile."""
        return {
            "tap_names": list(self.tap_names),
            "taps": list(self.taps),
            "deltas": list(self.deltas),
        }


@dataclass(frozen=True)
class ElossValue:
    """L1, L2 and their weighted combination for one profile."""

    l1: float
    l2: float
    combined: float
    lambda1: float
    lambda2: float
    mean_delta: float

    def to_record(self) -> dict:
        return {
            "l1": self.l1,
            "l2": self.l2,
            "combined": self.combined,
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "mean_delta": self.mean_delta,
        }


def build_profile(entropies, names=None) -> EntropyProfile:
    """Assemble an EntropyProfile from tap-ordered entropy values."""
    taps = [float(v) for v in entropies]
    if len(taps) < 2:
        raise InsufficientTapsError(f"need at least 2 taps, got {len(taps)}")
    if not all(np.isfinite(taps)):
        raise ValueError("tap entropies must be finite")
    if names is None:
        names = [f"tap{i}" for i in range(len(taps))]
    names = [str(n) for n in names]
    if len(names) != len(taps):
        raise ValueError(f"{len(taps)} taps but {len(names)} names")
    deltas = tuple(taps[i + 1] - taps[i] for i in range(len(taps) - 1))
    return EntropyProfile(taps=tuple(taps), deltas=deltas, tap_names=tuple(names))


def l1(profile: EntropyProfile) -> float:
    """Population variance of the entropy deltas (divide by N, not N-1)."""
    deltas = np.asarray(profile.deltas, dtype=np.float64)
    mean = deltas.mean()
    return float(np.mean((deltas - mean) ** 2))


def l2(profile: EntropyProfile) -> float:
    """Negative sum of squared entropy deltas."""
    deltas = np.asarray(profile.deltas, dtype=np.float64)
    return float(-np.sum(deltas * deltas))


def eloss(profile: EntropyProfile,
          lambda1: float = DEFAULT_LAMBDA1,
          lambda2: float = DEFAULT_LAMBDA2) -> ElossValue:
    """Weighted combination lambda1 * L1 + lambda2 * L2 of a profile."""
    lambda1 = float(lambda1)
    lambda2 = float(lambda2)
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError(f"weights must be non-negative, got {lambda1}, {lambda2}")
    v1 = l1(profile)
    v2 = l2(profile)
    deltas = np.asarray(profile.deltas, dtype=np.float64)
    return ElossValue(
        l1=v1,
        l2=v2,
        combined=lambda1 * v1 + lambda2 * v2,
        lambda1=lambda1,
        lambda2=lambda2,
        mean_delta=float(deltas.mean()),
    )


def eloss_metric(profile: EntropyProfile) -> float:
    """Instability score of a single forward pass: L1 with weighting disabled.

    Zero exactly when every delta is equal (perfectly steady compression);
    positive otherwise.
    """
    return l1(profile)
