"""Received-signal-strength ranging under an aggregate Nakagami power model.

This is a reimplemented baseline: the mean received power is modelled as
G0 d0^(-n1) + sigma^2 and inverted for d0. For any shape m the Nakagami
maximum-likelihood estimate of the mean power from one aggregate sample is the
sample itself, so the estimate is independent of m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BASELINE_LABEL = "reimplemented RSS-Nakagami baseline (aggregate power moment inversion)"


@dataclass(frozen=True)
class RssMeasurement:
    total_power: float
    noise_var: float

    def __post_init__(self):
        if not self.total_power >= 0:
            raise ValueError("total_power must be non-negative")
        if not self.noise_var >= 0:
            raise ValueError("noise_var must be non-negative")

    @classmethod
    def from_observation(cls, y_af, noise_var) -> "RssMeasurement":
        y_af = np.asarray(y_af)
        return cls(total_power=float(np.mean(np.abs(y_af) ** 2)), noise_var=float(noise_var))

    @property
    def excess_power(self) -> float:
        return self.total_power - self.noise_var


@dataclass(frozen=True)
class RssEstimate:
    d0: float
    clamped: bool


def rss_nakagami_range(meas: RssMeasurement, m: float, n1: float, g0: float,
                       bounds=(0.1, 1e5), eps: float = 1e-12) -> RssEstimate:
    """Invert mean power for range, clamping to ``bounds``.

    Returns the upper bound with ``clamped=True`` when the excess power is not
    positive.
    """
    if m < 0.5:
        raise ValueError("Nakagami shape must be >= 0.5")
    lo, hi = bounds
    excess = meas.excess_power
    if excess <= meas.noise_var * eps or excess <= 0:
        return RssEstimate(d0=float(hi), clamped=True)
    d0 = (g0 / excess) ** (1.0 / n1)
    if d0 < lo or d0 > hi:
        return RssEstimate(d0=float(np.clip(d0, lo, hi)), clamped=True)
    return RssEstimate(d0=float(d0), clamped=False)
