"""Domain types and interaction kernels for the signed 2D Coulomb system.

Particles carry fixed signs b_i in {-1,+1}; equal signs repel, opposite
signs attract through the same kernel K(x) = x/|x|^2 (with K(0) := 0).
Everything here is a pure function of its arguments and safe to call
concurrently.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "DistanceMode",
    "NoPairError",
    "SignedConfiguration",
    "SystemParams",
    "coulomb_kernel",
    "regularized_kernel",
    "min_distance",
    "cutoff",
    "drift",
    "rescale_params",
]


class NoPairError(ValueError):
    """No particle pair matches the requested distance mode."""


class DistanceMode(enum.Enum):
    All = "all"
    SameSign = "same"
    OppositeSign = "opp"


@dataclass(frozen=True)
class SignedConfiguration:
    """Positions (N,2) and fixed signs (N,) of the particle system."""

    positions: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        sgn = np.ascontiguousarray(np.asarray(self.signs, dtype=np.float64))
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must have shape (N, 2)")
        if sgn.shape != (pos.shape[0],):
            raise ValueError("signs must have shape (N,)")
        if pos.shape[0] < 1:
            raise ValueError("need at least one particle")
        if not np.all(np.abs(sgn) == 1.0):
            raise ValueError("signs must be +1 or -1")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "signs", sgn)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def n_plus(self) -> int:
        return int(np.sum(self.signs > 0))

    @property
    def n_minus(self) -> int:
        return int(np.sum(self.signs < 0))

    def pairwise_distinct(self) -> bool:
        d2 = _pair_dist2(self.positions)
        iu = np.triu_indices(self.n_particles, k=1)
        return bool(d2[iu].min() > 0.0) if iu[0].size else True

    def permuted(self, perm: np.ndarray) -> "SignedConfiguration":
        """Relabeled configuration with particle i taken from slot perm[i]."""
        perm = np.asarray(perm, dtype=np.intp)
        return SignedConfiguration(self.positions[perm], self.signs[perm])


@dataclass(frozen=True)
class SystemParams:
    """Parameters (sigma, gamma, N, epsilon, ell, dt, T) of one regularized run.

    ``ell=None`` disables the same-sign cutoff; cutoff levels are typically
    integers >= 1, but any positive real is accepted so that rescaling
    (which maps ell to ell*L) stays total.  Only gamma/sigma^2 is physically
    meaningful (see :func:`rescale_params`); sigma=0 or gamma=0 are accepted
    for deterministic / non-interacting checks.
    """

    sigma: float
    gamma: float
    n_particles: int
    epsilon: float = 0.0
    ell: float | None = None
    dt: float = 1e-3
    horizon: float = 1.0

    def __post_init__(self):
        if self.sigma < 0 or self.gamma < 0:
            raise ValueError("sigma and gamma must be >= 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.ell is not None and not self.ell > 0:
            raise ValueError("ell must be > 0 or None")
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be > 0")
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")

    @property
    def coupling(self) -> float:
        """Effective coupling gamma / sigma^2 (inf for sigma = 0)."""
        return self.gamma / self.sigma**2 if self.sigma > 0 else np.inf

    def dt_guidance(self) -> float | None:
        """Recommended step bound epsilon^2/(4*gamma*N); None if unconstrained.

        Keeps the per-step drift displacement below epsilon/8 (the drift is
        bounded by gamma*N/(2*epsilon) per particle).
        """
        if self.gamma == 0 or self.epsilon == 0:
            return None
        return self.epsilon**2 / (4.0 * self.gamma * self.n_particles)

    def warn_if_dt_coarse(self) -> None:
        bound = self.dt_guidance()
        if bound is not None and self.dt > bound:
            warnings.warn(
                f"dt={self.dt:g} exceeds the guidance epsilon^2/(4*gamma*N)={bound:g}; "
                "dynamics below distance ~epsilon are under-resolved",
                RuntimeWarning,
                stacklevel=2,
            )


def coulomb_kernel(x: np.ndarray) -> np.ndarray:
    """K(x) = x/|x|^2 on R^2, with K(0) = 0.  Vectorized over leading axes."""
    x = np.asarray(x, dtype=np.float64)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(r2 > 0.0, x / r2, 0.0)
    return out


def regularized_kernel(x: np.ndarray, epsilon: float) -> np.ndarray:
    """K_eps(x) = x/(|x|^2 + eps^2); agrees with coulomb_kernel at eps=0."""
    if epsilon == 0.0:
        return coulomb_kernel(x)
    x = np.asarray(x, dtype=np.float64)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    return x / (r2 + epsilon * epsilon)


def _pair_dist2(pos: np.ndarray) -> np.ndarray:
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sum(diff * diff, axis=-1)


def _mode_mask(signs: np.ndarray, mode: DistanceMode) -> np.ndarray:
    n = signs.shape[0]
    iu = np.triu_indices(n, k=1)
    same = signs[iu[0]] == signs[iu[1]]
    if mode is DistanceMode.All:
        keep = np.ones_like(same)
    elif mode is DistanceMode.SameSign:
        keep = same
    else:
        keep = ~same
    return iu[0][keep], iu[1][keep]


def min_distance(config: SignedConfiguration, mode: DistanceMode) -> float:
    """Shortest distance over particle pairs matching ``mode``.

    Raises NoPairError when no pair matches (e.g. SameSign with one particle
    of each sign).
    """
    ii, jj = _mode_mask(config.signs, mode)
    if ii.size == 0:
        raise NoPairError(f"no particle pair with mode {mode.name}")
    diff = config.positions[ii] - config.positions[jj]
    return float(np.sqrt(np.min(np.sum(diff * diff, axis=-1))))


def cutoff(config: SignedConfiguration, ell: float | None) -> float:
    """Same-sign cutoff Phi_ell(x) = clamp(2*ell*d_same - 1, 0, 1).

    Equals 1 when the minimal same-sign distance is >= 1/ell, 0 when it is
    <= 1/(2*ell), and is Lipschitz (constant 4*ell on R^{2N} Euclidean, since
    |d_same(x) - d_same(y)| <= sqrt(2)|x - y|) in between.  Configurations
    without a same-sign pair sit at Phi = 1 by convention.
    """
    if ell is None:
        return 1.0
    try:
        d = min_distance(config, DistanceMode.SameSign)
    except NoPairError:
        return 1.0
    return float(np.clip(2.0 * ell * d - 1.0, 0.0, 1.0))


def drift(config: SignedConfiguration, params: SystemParams) -> np.ndarray:
    """Drift field of the (eps, ell)-regularized system, shape (N, 2).

    Component i is gamma * Phi_ell(x) * sum_j b_i b_j K_eps(x_i - x_j); the
    j=i term vanishes by the K(0)=0 convention, as do coincident distinct
    pairs at eps=0 (those are singular events, see the sde diagnostics).
    The total sum over i vanishes by antisymmetry of K_eps.
    """
    pos, signs = config.positions, config.signs
    diff = pos[:, None, :] - pos[None, :, :]
    r2 = np.sum(diff * diff, axis=-1)
    den = r2 + params.epsilon**2
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(den > 0.0, (signs[:, None] * signs[None, :]) / den, 0.0)
    field = np.sum(diff * w[:, :, None], axis=1)
    return params.gamma * cutoff(config, params.ell) * field


def rescale_params(params: SystemParams, L: float, alpha: float) -> SystemParams:
    """Parameters of the rescaled process Y_t = X_{t/alpha} / L.

    Space scaling by L and time scaling by alpha act only through alpha*L^2
    on (sigma, gamma); lengths (epsilon, 1/ell) scale by L and times
    (dt, horizon) by alpha.
    """
    if L <= 0 or alpha <= 0:
        raise ValueError("L and alpha must be > 0")
    return replace(
        params,
        sigma=params.sigma / np.sqrt(alpha * L * L),
        gamma=params.gamma / (alpha * L * L),
        epsilon=params.epsilon / L,
        ell=None if params.ell is None else params.ell * L,
        dt=params.dt * alpha,
        horizon=params.horizon * alpha,
    )
