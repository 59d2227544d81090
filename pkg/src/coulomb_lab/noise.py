"""Counter-based reproducible Gaussian noise.

A :class:`NoiseStream` is a Philox4x64 counter space keyed by
``(seed, stream_id)``.  The 256-bit counter is partitioned into segments:
segment ``s`` owns the blocks ``[b, 0, s, 0]`` for ``b = 0 .. 2**64-1``
(numpy counter words, little-endian).  Particle ``i`` of a simulation draws
from segment ``i``; raw output ``r = 2*step + coord`` of a segment lives at
block ``r // 4``, lane ``r % 4``.  Standard normals are produced from the
raws by the inverse normal CDF at a fixed one-raw-per-normal consumption, so
the map (seed, stream-id, particle, step, coord) -> value is total and
permutation of particles is exactly a permutation of segments.

Reproducibility is bit-exact for a fixed numpy (Philox stream) and scipy
(``ndtri``) version; both are recorded by the CLI in output headers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

__all__ = ["NoiseStream", "GENERAL_SEGMENT"]

# Segments >= GENERAL_SEGMENT are reserved for general-purpose Generators
# (initial conditions, exact transition sampling); particle segments are
# far below this at desk scale.
GENERAL_SEGMENT = 2**48

_U64 = np.uint64
_HALF = 0.5
_2_53 = 2.0**-53


def _segment_raws(key: np.ndarray, segment: int, start: int, count: int) -> np.ndarray:
    """Raw uint64 outputs [start, start+count) of one counter segment."""
    lead = start % 4
    counter = np.array([start // 4, 0, segment, 0], dtype=_U64)
    bitgen = np.random.Philox(key=key, counter=counter)
    raw = bitgen.random_raw(lead + count)
    return raw[lead:] if lead else raw


def _raws_to_normals(raw: np.ndarray) -> np.ndarray:
    # (raw >> 11) is uniform on {0, .., 2^53-1}; +0.5 keeps u strictly inside
    # (0, 1) so ndtri is finite.
    u = ((raw >> _U64(11)).astype(np.float64) + _HALF) * _2_53
    return ndtri(u)


@dataclass(frozen=True)
class NoiseStream:
    """Reproducible noise source for one path of the particle system.

    ``particle_map`` relabels particle sub-streams: particle ``i`` reads
    segment ``particle_map[i]``.  ``permuted`` composes a permutation on top,
    which is what makes the permutation-equivariance test exact.
    """

    seed: int
    stream_id: int = 0
    particle_map: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in 64 bits")
        if not (0 <= int(self.stream_id) < 2**64):
            raise ValueError("stream_id must fit in 64 bits")

    @property
    def _key(self) -> np.ndarray:
        return np.array([self.seed, self.stream_id], dtype=_U64)

    def _segment_of(self, particle: int) -> int:
        if self.particle_map is None:
            return particle
        return int(self.particle_map[particle])

    def particle_labels(self, n_particles: int) -> np.ndarray:
        """Sub-stream labels of the first ``n_particles`` particles."""
        if self.particle_map is None:
            return np.arange(n_particles, dtype=np.intp)
        return np.asarray(self.particle_map[:n_particles], dtype=np.intp)

    def particle_normals(self, particle: int, step_lo: int, step_hi: int) -> np.ndarray:
        """Standard-normal increments of one particle, shape (steps, 2)."""
        n = 2 * (step_hi - step_lo)
        raw = _segment_raws(self._key, self._segment_of(particle), 2 * step_lo, n)
        return _raws_to_normals(raw).reshape(step_hi - step_lo, 2)

    def block_normals(self, n_particles: int, step_lo: int, step_hi: int) -> np.ndarray:
        """Increments for all particles at once, shape (steps, N, 2)."""
        steps = step_hi - step_lo
        raw = np.empty((n_particles, 2 * steps), dtype=_U64)
        for i in range(n_particles):
            raw[i] = _segment_raws(self._key, self._segment_of(i), 2 * step_lo, 2 * steps)
        z = _raws_to_normals(raw.ravel()).reshape(n_particles, steps, 2)
        return np.ascontiguousarray(z.transpose(1, 0, 2))

    def scalar_normals(self, segment: int, lo: int, hi: int) -> np.ndarray:
        """One-per-index normals of an arbitrary segment (Bessel paths)."""
        raw = _segment_raws(self._key, segment, lo, hi - lo)
        return _raws_to_normals(raw)

    def generator(self, tag: int = 0) -> np.random.Generator:
        """General-purpose Generator on a reserved segment.

        Consumption is algorithm-dependent (ziggurat, rejection samplers), so
        these are used only where no fixed (step -> counter) layout is needed:
        initial conditions and exact transition sampling.
        """
        counter = np.array([0, 0, GENERAL_SEGMENT + tag, 0], dtype=_U64)
        return np.random.Generator(np.random.Philox(key=self._key, counter=counter))

    def permuted(self, perm: np.ndarray) -> "NoiseStream":
        """Stream whose particle ``i`` reads this stream's sub-stream ``perm[i]``."""
        perm = np.asarray(perm, dtype=np.intp)
        base = self.particle_map
        new_map = perm.copy() if base is None else np.asarray(base, dtype=np.intp)[perm]
        return NoiseStream(self.seed, self.stream_id, particle_map=new_map)
