"""Squared Bessel processes of arbitrary real dimension.

dR = 2 sqrt(R) dbeta + delta dt.  For a pair of particles with coupling
gamma and noise sigma, R := |X^1 - X^2|^2 / (2 sigma^2) is squared Bessel of
dimension delta = 2(1 - gamma/sigma^2): opposite signs (gamma > 0) push
delta below 2 (zero-hitting possible), same signs (gamma < 0) above 2.
Dimension delta >= 2 never hits zero; delta < 2 hits with positive
probability; delta <= 0 freezes at zero (sticky collision, gamma >= sigma^2).

Exact transition sampling (delta > 0) uses the Poisson-Gamma mixture of the
noncentral chi-square: R_t = t * Gamma((delta + 2J)/2, scale 2) with
J ~ Poisson(x / (2t)).  EM paths clamp at zero after each step; zero-hit
estimates threshold the discrete minimum, which systematically
underestimates continuous hitting, controlled by dt refinement.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import backend
from ._stats import Estimate, binomial_ci
from .noise import NoiseStream

__all__ = [
    "BesselSpec",
    "BesselPath",
    "TwoParticleRegime",
    "TwoParticleBatch",
    "DimensionError",
    "dimension_from_params",
    "classify_regime",
    "besq_mean_var",
    "sample_besq_exact",
    "sample_besq_em",
    "zero_hit_probability",
    "two_particle_reference",
    "two_particle_batch",
]

# generator() tag for the exact transition sampler
_EXACT_TAG = 1


class DimensionError(ValueError):
    """Operation needs a positive Bessel dimension."""


@dataclass(frozen=True)
class BesselSpec:
    """Dimension delta and starting point x >= 0 of a squared Bessel process."""

    dimension: float
    start: float

    def __post_init__(self):
        if self.start < 0:
            raise ValueError("start must be >= 0")


@dataclass(frozen=True)
class BesselPath:
    """Sampled path with freeze-at-zero semantics for delta <= 0."""

    times: np.ndarray
    values: np.ndarray
    frozen_at: float | None = None

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValueError("squared Bessel values must be >= 0")

    def minimum(self) -> float:
        return float(self.values.min())

    def to_csv(self, path, header_lines: tuple[str, ...] = ()) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["t", "R"])
            for t, r in zip(self.times, self.values):
                w.writerow([f"{t:.12g}", f"{r:.17g}"])


class TwoParticleRegime(enum.Enum):
    """Opposite-sign pair behaviour across the gamma/sigma^2 boundaries 1/2 and 1."""

    WeakSolution = "weak-solution"  # gamma < sigma^2/2
    BesselOnly = "bessel-only"      # sigma^2/2 <= gamma < sigma^2
    Sticky = "sticky"               # gamma >= sigma^2


def dimension_from_params(sigma: float, gamma: float) -> float:
    """delta = 2(1 - gamma/sigma^2); gamma < 0 encodes a same-sign pair."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    return 2.0 * (1.0 - gamma / (sigma * sigma))


def classify_regime(sigma: float, gamma: float) -> TwoParticleRegime:
    if sigma <= 0 or gamma <= 0:
        raise ValueError("sigma and gamma must be > 0")
    s2 = sigma * sigma
    if gamma < 0.5 * s2:
        return TwoParticleRegime.WeakSolution
    if gamma < s2:
        return TwoParticleRegime.BesselOnly
    return TwoParticleRegime.Sticky


def besq_mean_var(spec: BesselSpec, t: float) -> tuple[float, float]:
    """Moments of R_t from the SDE: mean x + delta*t, variance 4*x*t + 2*delta*t^2.

    Valid for delta >= 0 (where the process is defined globally).
    """
    x, d = spec.start, spec.dimension
    return x + d * t, 4.0 * x * t + 2.0 * d * t * t


def sample_besq_exact(
    spec: BesselSpec, t: float, noise: NoiseStream, size: int | None = None
):
    """Exact draw(s) from the BESQ(delta) transition at time t from x.

    Requires delta > 0 (for delta <= 0 use sample_besq_em).  Scalar for
    size=None, else an array of ``size`` i.i.d. draws.
    """
    if spec.dimension <= 0:
        raise DimensionError("exact transition sampling needs delta > 0")
    if t <= 0:
        raise ValueError("t must be > 0")
    g = noise.generator(_EXACT_TAG)
    n = 1 if size is None else int(size)
    lam = spec.start / (2.0 * t)
    J = g.poisson(lam, size=n)
    G = g.gamma(shape=(spec.dimension + 2.0 * J) / 2.0, scale=2.0)
    out = t * G
    return float(out[0]) if size is None else out


def sample_besq_em(
    spec: BesselSpec, dt: float, horizon: float, noise: NoiseStream, segment: int = 0
) -> BesselPath:
    """Clamped EM path on [0, horizon]; freezes at the first touch of zero
    when delta <= 0 (for delta > 0 the path leaves zero by the drift)."""
    if dt <= 0 or horizon <= 0:
        raise ValueError("dt and horizon must be > 0")
    n_steps = max(1, int(round(horizon / dt)))
    z = noise.scalar_normals(segment, 0, n_steps)
    freeze = spec.dimension <= 0.0
    values, frozen_step = backend.besq_em_path(
        spec.start, spec.dimension, dt, n_steps, z, freeze
    )
    return BesselPath(
        times=np.arange(n_steps + 1) * dt,
        values=values,
        frozen_at=None if frozen_step < 0 else frozen_step * dt,
    )


def _em_batch(
    spec: BesselSpec,
    horizon: float,
    dt: float,
    n_paths: int,
    noise: NoiseStream,
    hit_threshold: float,
    release_level: float,
    chunk: int = 2048,
) -> dict:
    n_steps = max(1, int(round(horizon / dt)))
    freeze = spec.dimension <= 0.0
    parts = []
    for lo in range(0, n_paths, chunk):
        hi = min(lo + chunk, n_paths)
        z = np.empty((hi - lo, n_steps))
        for p in range(lo, hi):
            z[p - lo] = noise.scalar_normals(p, 0, n_steps)
        parts.append(
            backend.besq_em_batch(
                spec.start, spec.dimension, dt, n_steps, z, freeze,
                hit_threshold, release_level,
            )
        )
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def zero_hit_probability(
    spec: BesselSpec,
    horizon: float,
    threshold: float,
    n_paths: int,
    noise: NoiseStream,
    dt: float | None = None,
) -> Estimate:
    """Fraction of EM paths whose discrete minimum is <= threshold, with a
    binomial 95% CI.  Default dt = horizon/10^4."""
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    if n_paths < 100:
        raise ValueError("n_paths must be >= 100")
    if dt is None:
        dt = horizon / 10_000
    res = _em_batch(spec, horizon, dt, n_paths, noise, threshold, np.inf)
    hits = int(np.count_nonzero(res["min_R"] <= threshold))
    return binomial_ci(hits, n_paths)


def two_particle_reference(
    sigma: float,
    gamma: float,
    x0_diff: np.ndarray,
    horizon: float,
    dt: float,
    noise: NoiseStream,
) -> tuple[BesselPath, TwoParticleRegime]:
    """Radial reference solution of the opposite-sign pair.

    Simulates R = |X^1 - X^2|^2/(2 sigma^2) as BESQ(2(1 - gamma/sigma^2))
    from R_0 = |x0_diff|^2/(2 sigma^2).  The sum process S = X^1 + X^2 needs
    no simulation: (S_t - S_0)/(sigma sqrt 2) is a plain Brownian motion.
    """
    x0_diff = np.asarray(x0_diff, dtype=np.float64)
    r0 = float(np.sum(x0_diff * x0_diff)) / (2.0 * sigma * sigma)
    if r0 <= 0:
        raise ValueError("initial difference must be nonzero")
    delta = dimension_from_params(sigma, gamma)
    path = sample_besq_em(BesselSpec(delta, r0), dt, horizon, noise)
    return path, classify_regime(sigma, gamma)


@dataclass(frozen=True)
class TwoParticleBatch:
    """Monte Carlo summary of the two-particle radial reference."""

    regime: TwoParticleRegime
    dimension: float
    n_paths: int
    hit: Estimate              # min R <= hit_threshold
    frozen: Estimate           # froze at zero (delta <= 0 semantics)
    separated_given_hit: Estimate | None  # reached release_level after the hit


def two_particle_batch(
    sigma: float,
    gamma: float,
    x0_diff: np.ndarray,
    horizon: float,
    dt: float,
    n_paths: int,
    noise: NoiseStream,
    hit_threshold: float,
    release_factor: float = 4.0,
) -> TwoParticleBatch:
    """Hit / freeze / post-hit separation fractions over ``n_paths`` radial paths.

    A path counts as separated when, after its first visit below
    ``hit_threshold``, it later exceeds ``release_factor * hit_threshold``;
    frozen paths (delta <= 0 only) cannot separate.
    """
    x0_diff = np.asarray(x0_diff, dtype=np.float64)
    r0 = float(np.sum(x0_diff * x0_diff)) / (2.0 * sigma * sigma)
    if r0 <= 0:
        raise ValueError("initial difference must be nonzero")
    delta = dimension_from_params(sigma, gamma)
    res = _em_batch(
        BesselSpec(delta, r0), horizon, dt, n_paths, noise,
        hit_threshold, release_factor * hit_threshold,
    )
    hits = int(np.count_nonzero(res["first_hit_step"] >= 0))
    frozen = int(np.count_nonzero(res["frozen_step"] >= 0))
    sep = None
    if hits > 0:
        sep = binomial_ci(int(np.count_nonzero(res["separated"] == 1)), hits)
    return TwoParticleBatch(
        regime=classify_regime(sigma, gamma),
        dimension=delta,
        n_paths=n_paths,
        hit=binomial_ci(hits, n_paths),
        frozen=binomial_ci(frozen, n_paths),
        separated_given_hit=sep,
    )
