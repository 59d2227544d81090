"""Named initial-condition samplers for batch studies.

Each sampler draws a SignedConfiguration from a numpy Generator (deterministic
samplers ignore it).  All of them produce pairwise-distinct positions a.s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import SignedConfiguration

__all__ = [
    "TwoOpposite",
    "CrossPattern4",
    "IIDGaussianNeutral",
    "DeterministicList",
    "sampler_from_name",
]


@dataclass(frozen=True)
class TwoOpposite:
    """A + particle at (-d/2, 0) and a - particle at (+d/2, 0)."""

    distance: float = 1.0

    n_particles = 2

    def sample(self, rng: np.random.Generator) -> SignedConfiguration:
        d = self.distance
        return SignedConfiguration(
            positions=np.array([[-d / 2, 0.0], [d / 2, 0.0]]),
            signs=np.array([1.0, -1.0]),
        )


@dataclass(frozen=True)
class CrossPattern4:
    """+ particles at (+-arm, 0), - particles at (0, +-arm)."""

    arm: float = 0.5

    n_particles = 4

    def sample(self, rng: np.random.Generator) -> SignedConfiguration:
        a = self.arm
        return SignedConfiguration(
            positions=np.array([[a, 0.0], [-a, 0.0], [0.0, a], [0.0, -a]]),
            signs=np.array([1.0, 1.0, -1.0, -1.0]),
        )


@dataclass(frozen=True)
class IIDGaussianNeutral:
    """N/2 positive and N/2 negative particles, positions i.i.d. N(0, scale^2 I).

    With i.i.d. positions the fixed sign pattern is exchangeable with respect
    to b in law.  scale = 0.5 keeps E|X_0| = 0.5*sqrt(pi/2) < 1.
    """

    n: int
    scale: float = 0.5

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ValueError("neutral sampler needs an even N >= 2")

    @property
    def n_particles(self) -> int:
        return self.n

    def sample(self, rng: np.random.Generator) -> SignedConfiguration:
        pos = self.scale * rng.standard_normal((self.n, 2))
        signs = np.concatenate([np.ones(self.n // 2), -np.ones(self.n // 2)])
        return SignedConfiguration(pos, signs)

    def mean_abs_position(self) -> float:
        """E|X_0| of one particle (Rayleigh mean)."""
        return float(self.scale * np.sqrt(np.pi / 2.0))


@dataclass(frozen=True)
class DeterministicList:
    """Fixed positions and signs."""

    positions: tuple = field(default=())
    signs: tuple = field(default=())

    @property
    def n_particles(self) -> int:
        return len(self.signs)

    def sample(self, rng: np.random.Generator) -> SignedConfiguration:
        return SignedConfiguration(np.asarray(self.positions, dtype=np.float64),
                                   np.asarray(self.signs, dtype=np.float64))


def sampler_from_name(name: str, **kwargs):
    """Build a sampler from its config name.

    Names: two-opposite(distance), cross-pattern-4(arm),
    iid-gaussian-neutral(n, scale), deterministic-list(positions, signs).
    """
    table = {
        "two-opposite": TwoOpposite,
        "cross-pattern-4": CrossPattern4,
        "iid-gaussian-neutral": IIDGaussianNeutral,
        "deterministic-list": DeterministicList,
    }
    if name not in table:
        raise ValueError(f"unknown initial sampler {name!r}; known: {sorted(table)}")
    if name == "deterministic-list":
        kwargs = dict(kwargs)
        if "positions" in kwargs:
            kwargs["positions"] = tuple(map(tuple, kwargs["positions"]))
        if "signs" in kwargs:
            kwargs["signs"] = tuple(kwargs["signs"])
    return table[name](**kwargs)
