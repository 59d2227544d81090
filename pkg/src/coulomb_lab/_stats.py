"""Shared confidence-interval helpers (95% level throughout)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Z95 = 1.96


class DegenerateError(ValueError):
    """Not enough samples for a confidence interval."""


@dataclass(frozen=True)
class Estimate:
    """Point estimate with a 95% interval.

    ``ci`` is the symmetric halfwidth used in reports; ``lo``/``hi`` carry the
    actual interval (asymmetric for the Wilson fallback).  Iterable as
    (estimate, ci) so ops can be unpacked as documented.
    """

    estimate: float
    ci: float
    lo: float
    hi: float
    n: int

    def __iter__(self):
        yield self.estimate
        yield self.ci

    def excludes_zero(self) -> bool:
        return self.lo > 0.0


def mean_ci(samples: np.ndarray) -> Estimate:
    """Sample mean with halfwidth 1.96 * std / sqrt(n) (ddof=1)."""
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.size
    if n < 2:
        raise DegenerateError("need at least 2 samples")
    mean = float(np.mean(samples))
    half = float(Z95 * np.std(samples, ddof=1) / np.sqrt(n))
    return Estimate(mean, half, mean - half, mean + half, n)


def binomial_ci(successes: int, n: int) -> Estimate:
    """Binomial proportion with normal-approximation CI.

    Falls back to the Wilson score interval when either count is below 10,
    where the normal approximation is unusable (it collapses to width 0 at
    p_hat in {0,1}).  The reported halfwidth then covers the wider side.
    """
    if n < 1:
        raise DegenerateError("need at least 1 trial")
    k = int(successes)
    p = k / n
    if min(k, n - k) >= 10:
        half = Z95 * np.sqrt(p * (1.0 - p) / n)
        return Estimate(p, float(half), p - half, p + half, n)
    z2 = Z95 * Z95
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = (Z95 / denom) * np.sqrt(p * (1.0 - p) / n + z2 / (4 * n * n))
    lo, hi = max(center - half, 0.0), min(center + half, 1.0)
    return Estimate(p, float(max(hi - p, p - lo)), float(lo), float(hi), n)
