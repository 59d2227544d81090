"""Empirical measures, the two-species aggregation-diffusion PDE, and the
weak-form convergence diagnostics.

The limiting PDE (diffusion constant nu, default sigma^2/2 from the particle
generator)
    dt rho+ + gammabar div[rho+ K*(rho+ - rho-)] = nu Lap rho+
    dt rho- - gammabar div[rho- K*(rho+ - rho-)] = nu Lap rho-
is solved on a periodic square [-L, L)^2 by Strang splitting: exact spectral
diffusion half-steps around an upwind finite-volume advection step, with the
velocity computed in Fourier space from the Coulomb multiplier
K_hat(xi) = -2*pi*i xi/|xi|^2 (zero mode dropped, i.e. the mean of
rho+ - rho- is neutralized; exact for neutral systems).

The weak-form functional W[T, phi](rho) vanishes on solutions; evaluated on
empirical measures it quantifies distance-to-solution and decays like
1/sqrt(N) along the particle system (the interaction double sum puts zero
mass on the diagonal via K(0)=0).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import backend

__all__ = [
    "CFLError",
    "GridMismatchError",
    "OutOfDomainError",
    "Grid2D",
    "GridDensityPair",
    "TestFunction",
    "spatial_profiles",
    "weakform_family",
    "DensityPath",
    "EmpiricalPath",
    "empirical_density",
    "kernel_velocity",
    "pde_step",
    "solve_pde",
    "weak_form_residual",
    "weak_form_residuals",
    "bl_distance",
    "gaussian_pair",
    "save_density_snapshot",
    "load_density_snapshot",
]

FAMILY_VERSION = 1

_NEG_CLAMP = -1e-12


class OutOfDomainError(ValueError):
    def __init__(self, indices):
        self.indices = list(indices)
        super().__init__(f"particles outside the grid square: {self.indices}")


class GridMismatchError(ValueError):
    pass


class CFLError(RuntimeError):
    pass


@dataclass(frozen=True)
class Grid2D:
    """Periodic M x M grid over [-half_width, half_width)^2, M a power of two >= 32."""

    half_width: float
    resolution: int

    def __post_init__(self):
        m = self.resolution
        if m < 32 or (m & (m - 1)) != 0:
            raise ValueError("resolution must be a power of two >= 32")
        if self.half_width <= 0:
            raise ValueError("half_width must be > 0")

    @property
    def cell_width(self) -> float:
        return 2.0 * self.half_width / self.resolution

    @property
    def cell_area(self) -> float:
        return self.cell_width**2

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.half_width + self.cell_width * np.arange(self.resolution)

    @cached_property
    def mesh(self) -> np.ndarray:
        """Node coordinates, shape (M, M, 2), indexed [ix, iy]."""
        xx, yy = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([xx, yy], axis=-1)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(xi_x, xi_y, |xi|^2) broadcastable over (M, M) spectral arrays."""
        xi = 2.0 * np.pi * np.fft.fftfreq(self.resolution, d=self.cell_width)
        xx = xi[:, None]
        yy = xi[None, :]
        return xx, yy, xx * xx + yy * yy

    @cached_property
    def coulomb_multiplier(self) -> tuple[np.ndarray, np.ndarray]:
        """Fourier multiplier of K, componentwise, zero mode set to 0."""
        xx, yy, xi2 = self.wavenumbers
        with np.errstate(divide="ignore", invalid="ignore"):
            mx = np.where(xi2 > 0, -2j * np.pi * xx / xi2, 0.0)
            my = np.where(xi2 > 0, -2j * np.pi * yy / xi2, 0.0)
        return mx, my


def _clamp_renormalize(rho: np.ndarray, mass: float, area: float) -> np.ndarray:
    """Clamp negatives (undershoots are roundoff/limiter level) and restore mass."""
    if rho.min() >= 0.0:
        return rho
    rho = np.maximum(rho, 0.0)
    total = rho.sum() * area
    if total > 0 and mass > 0:
        rho = rho * (mass / total)
    return rho


@dataclass(frozen=True)
class GridDensityPair:
    """Nonnegative densities (mass per unit area) of the two species."""

    grid: Grid2D
    rho_plus: np.ndarray
    rho_minus: np.ndarray

    def __post_init__(self):
        m = self.grid.resolution
        for name in ("rho_plus", "rho_minus"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (m, m):
                raise ValueError(f"{name} must have shape ({m}, {m})")
            if arr.min() < -1e-10:
                raise ValueError(f"{name} has negative entries beyond roundoff")
            object.__setattr__(self, name, np.maximum(arr, 0.0))
        if abs(self.mass_plus + self.mass_minus - 1.0) > 1e-8:
            raise ValueError("species masses must sum to 1")

    @property
    def mass_plus(self) -> float:
        return float(self.rho_plus.sum() * self.grid.cell_area)

    @property
    def mass_minus(self) -> float:
        return float(self.rho_minus.sum() * self.grid.cell_area)

    @property
    def total(self) -> np.ndarray:
        return self.rho_plus + self.rho_minus

    def second_moment(self) -> float:
        r2 = np.sum(self.grid.mesh**2, axis=-1)
        return float(np.sum(r2 * self.total) * self.grid.cell_area)

    def boundary_mass(self, cells: int = 2) -> float:
        """Mass of both species within ``cells`` of the domain edge."""
        m = self.grid.resolution
        band = np.zeros((m, m), dtype=bool)
        band[:cells, :] = band[-cells:, :] = True
        band[:, :cells] = band[:, -cells:] = True
        return float(np.sum(self.total[band]) * self.grid.cell_area)


def gaussian_pair(
    grid: Grid2D, variance: float, mass_plus: float = 0.5, center=(0.0, 0.0),
    center_minus=None,
) -> GridDensityPair:
    """Isotropic Gaussian initial data (defaults to identical species)."""
    mesh = grid.mesh
    def bump(c):
        r2 = (mesh[..., 0] - c[0]) ** 2 + (mesh[..., 1] - c[1]) ** 2
        g = np.exp(-r2 / (2.0 * variance)) / (2.0 * np.pi * variance)
        return g / (g.sum() * grid.cell_area)

    gp = bump(center)
    gm = bump(center if center_minus is None else center_minus)
    return GridDensityPair(grid, mass_plus * gp, (1.0 - mass_plus) * gm)


# ---------------------------------------------------------------------------
# empirical measures

def _cic_deposit(grid: Grid2D, points: np.ndarray) -> np.ndarray:
    """Cloud-in-cell histogram, total mass = len(points), periodic wrap."""
    m = grid.resolution
    h = grid.cell_width
    out = np.zeros((m, m))
    if len(points) == 0:
        return out
    u = (points[:, 0] + grid.half_width) / h
    v = (points[:, 1] + grid.half_width) / h
    i0 = np.floor(u).astype(np.intp)
    j0 = np.floor(v).astype(np.intp)
    fu = u - i0
    fv = v - j0
    i0 %= m
    j0 %= m
    i1 = (i0 + 1) % m
    j1 = (j0 + 1) % m
    np.add.at(out, (i0, j0), (1 - fu) * (1 - fv))
    np.add.at(out, (i1, j0), fu * (1 - fv))
    np.add.at(out, (i0, j1), (1 - fu) * fv)
    np.add.at(out, (i1, j1), fu * fv)
    return out


def _gaussian_smooth(grid: Grid2D, arr: np.ndarray, bandwidth: float) -> np.ndarray:
    """Spectral Gaussian convolution, clamped and renormalized.

    The band-limited Gaussian rings at the exp(-(pi*bw/h)^2/2) level around
    sharp deposits; clamping those negatives and rescaling to the input mass
    keeps densities nonnegative with exactly conserved mass.
    """
    if bandwidth == 0.0:
        return arr
    _, _, xi2 = grid.wavenumbers
    sm = np.fft.ifft2(np.fft.fft2(arr) * np.exp(-0.5 * xi2 * bandwidth**2)).real
    sm = np.maximum(sm, 0.0)
    target = arr.sum()
    total = sm.sum()
    return sm * (target / total) if total > 0 else sm


def smooth_pair(pair: GridDensityPair, bandwidth: float) -> GridDensityPair:
    """Both species convolved with the same spectral Gaussian.

    Used to compare a kernel-density-estimated empirical measure against a
    PDE solution carrying the identical smoothing, so the O(bandwidth^2)
    bias cancels from the distance.
    """
    return GridDensityPair(
        pair.grid,
        _gaussian_smooth(pair.grid, pair.rho_plus, bandwidth),
        _gaussian_smooth(pair.grid, pair.rho_minus, bandwidth),
    )


def empirical_density(config, grid: Grid2D, bandwidth: float) -> GridDensityPair:
    """Gaussian-smoothed empirical measures of the signed configuration.

    Masses are exactly N+/N and N-/N (cloud-in-cell deposit conserves mass;
    the spectral Gaussian keeps the zero mode).  Particles outside the open
    square raise OutOfDomainError.
    """
    if bandwidth < 0:
        raise ValueError("bandwidth must be >= 0")
    pos = config.positions
    outside = np.nonzero(np.max(np.abs(pos), axis=1) >= grid.half_width)[0]
    if outside.size:
        raise OutOfDomainError(outside.tolist())
    n = config.n_particles
    scale = 1.0 / (n * grid.cell_area)
    rp = _gaussian_smooth(grid, _cic_deposit(grid, pos[config.signs > 0]), bandwidth) * scale
    rm = _gaussian_smooth(grid, _cic_deposit(grid, pos[config.signs < 0]), bandwidth) * scale
    return GridDensityPair(grid, rp, rm)


# ---------------------------------------------------------------------------
# spectral convolution and the PDE step

def kernel_velocity(density_diff: np.ndarray, grid: Grid2D) -> np.ndarray:
    """K * density_diff via the periodized Coulomb multiplier, shape (M, M, 2).

    Mode xi != 0 maps to -2*pi*i xi/|xi|^2; the zero mode maps to 0, which
    neutralizes the mean of the signed density (exact for m+ = m-).
    """
    mx, my = grid.coulomb_multiplier
    F = np.fft.fft2(np.asarray(density_diff, dtype=np.float64))
    vx = np.fft.ifft2(mx * F).real
    vy = np.fft.ifft2(my * F).real
    return np.stack([vx, vy], axis=-1)


def _diffuse(grid: Grid2D, rho: np.ndarray, nu: float, tau: float) -> np.ndarray:
    if nu == 0.0 or tau == 0.0:
        return rho
    _, _, xi2 = grid.wavenumbers
    return np.fft.ifft2(np.fft.fft2(rho) * np.exp(-nu * xi2 * tau)).real


def _minmod(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.where(a * b > 0.0, np.where(np.abs(a) < np.abs(b), a, b), 0.0)


def _advect(grid: Grid2D, rho: np.ndarray, vel: np.ndarray, dt: float, limiter: str) -> np.ndarray:
    """One conservative finite-volume step of d_t rho + div(rho v) = 0."""
    h = grid.cell_width
    out = rho.copy()
    for axis in (0, 1):
        v = vel[..., axis]
        vf = 0.5 * (v + np.roll(v, -1, axis=axis))  # face k+1/2
        up = rho
        down = np.roll(rho, -1, axis=axis)
        if limiter == "muscl":
            slope = _minmod(rho - np.roll(rho, 1, axis=axis), down - rho)
            slope_dn = np.roll(slope, -1, axis=axis)
            left = rho + 0.5 * slope
            right = down - 0.5 * slope_dn
            flux = np.where(vf > 0.0, vf * left, vf * right)
        else:
            flux = np.where(vf > 0.0, vf * up, vf * down)
        out = out - (dt / h) * (flux - np.roll(flux, 1, axis=axis))
    return out


def pde_step(
    state: GridDensityPair,
    gammabar: float,
    nu: float,
    dt: float,
    grid: Grid2D,
    limiter: str = "upwind",
) -> GridDensityPair:
    """One Strang-split step: diffusion half-step, advection, diffusion half-step.

    Advection uses species velocities +-gammabar * K*(rho+ - rho-) with
    first-order upwind fluxes (optional minmod-MUSCL via limiter="muscl").
    Raises CFLError when dt * max|v| > 0.5 * cell width.  Masses are
    conserved to roundoff; negatives (if any) are clamped and the mass
    renormalized per species.
    """
    if state.grid != grid:
        raise GridMismatchError("state lives on a different grid")
    if limiter not in ("upwind", "muscl"):
        raise ValueError("limiter must be 'upwind' or 'muscl'")
    mp, mm = state.mass_plus, state.mass_minus
    half = 0.5 * dt

    rp = _diffuse(grid, state.rho_plus, nu, half)
    rm = _diffuse(grid, state.rho_minus, nu, half)

    if gammabar != 0.0:
        vel = gammabar * kernel_velocity(rp - rm, grid)
        vmax = float(np.max(np.abs(vel)))
        if dt * vmax > 0.5 * grid.cell_width:
            raise CFLError(
                f"advective CFL violated: dt*|v|max = {dt * vmax:.3g} > "
                f"0.5*h = {0.5 * grid.cell_width:.3g}"
            )
        rp = _advect(grid, rp, vel, dt, limiter)
        rm = _advect(grid, rm, -vel, dt, limiter)

    rp = _diffuse(grid, rp, nu, half)
    rm = _diffuse(grid, rm, nu, half)

    area = grid.cell_area
    rp = _clamp_renormalize(rp, mp, area)
    rm = _clamp_renormalize(rm, mm, area)
    return GridDensityPair(grid, rp, rm)


@dataclass(frozen=True)
class DensityPath:
    """Time-indexed grid densities (the PDE-side input to the weak form)."""

    times: np.ndarray
    states: tuple

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must align")

    @property
    def grid(self) -> Grid2D:
        return self.states[0].grid

    def summary_to_csv(self, path, header_lines: tuple[str, ...] = ()) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["t", "mass_plus", "mass_minus", "second_moment", "boundary_mass"])
            for t, s in zip(self.times, self.states):
                w.writerow([
                    f"{t:.12g}", f"{s.mass_plus:.12g}", f"{s.mass_minus:.12g}",
                    f"{s.second_moment():.12g}", f"{s.boundary_mass():.6g}",
                ])


def solve_pde(
    initial: GridDensityPair,
    gammabar: float,
    nu: float,
    dt: float,
    horizon: float,
    record_every: int = 1,
    limiter: str = "upwind",
) -> DensityPath:
    """Evolve the pair on [0, horizon], recording every ``record_every`` steps."""
    n_steps = max(1, int(round(horizon / dt)))
    times = [0.0]
    states = [initial]
    state = initial
    for m in range(1, n_steps + 1):
        state = pde_step(state, gammabar, nu, dt, initial.grid, limiter)
        if m % record_every == 0 or m == n_steps:
            times.append(m * dt)
            states.append(state)
    return DensityPath(np.asarray(times), tuple(states))


# ---------------------------------------------------------------------------
# test functions

@dataclass(frozen=True)
class SpatialProfile:
    """C_b^2 profile with analytic gradient and Laplacian.

    ``sup_bound`` and ``lip_bound`` are analytic upper bounds used for the
    bounded-Lipschitz normalization (making the finite-family metric a lower
    bound on the true BL distance).
    """

    id: str
    value: callable
    grad: callable
    laplacian: callable
    sup_bound: float
    lip_bound: float

    @property
    def bl_scale(self) -> float:
        return 1.0 / (self.sup_bound + self.lip_bound)


def _gauss_profile(pid, cx, cy, w):
    w2 = w * w

    def val(x):
        r2 = (x[..., 0] - cx) ** 2 + (x[..., 1] - cy) ** 2
        return np.exp(-0.5 * r2 / w2)

    def grad(x):
        g = val(x)
        return np.stack([-(x[..., 0] - cx) / w2 * g, -(x[..., 1] - cy) / w2 * g], axis=-1)

    def lap(x):
        r2 = (x[..., 0] - cx) ** 2 + (x[..., 1] - cy) ** 2
        return (r2 / w2**2 - 2.0 / w2) * val(x)

    return SpatialProfile(pid, val, grad, lap, 1.0, np.exp(-0.5) / w)


def _bump_profile(pid, R):
    R2 = R * R

    def val(x):
        u = (x[..., 0] ** 2 + x[..., 1] ** 2) / R2
        return np.where(u < 1.0, (1.0 - np.minimum(u, 1.0)) ** 3, 0.0)

    def grad(x):
        u = (x[..., 0] ** 2 + x[..., 1] ** 2) / R2
        f = np.where(u < 1.0, -6.0 * (1.0 - np.minimum(u, 1.0)) ** 2 / R2, 0.0)
        return np.stack([f * x[..., 0], f * x[..., 1]], axis=-1)

    def lap(x):
        u = (x[..., 0] ** 2 + x[..., 1] ** 2) / R2
        uc = np.minimum(u, 1.0)
        return np.where(u < 1.0, -12.0 * (1.0 - uc) * (1.0 - 3.0 * uc) / R2, 0.0)

    return SpatialProfile(pid, val, grad, lap, 1.0, 96.0 / (25.0 * np.sqrt(5.0) * R))


def _trig_gauss_profile(pid, a, w, kind):
    """cos(a*x1)*G or sin(a*x2)*G with G a width-w Gaussian."""
    w2 = w * w

    def G(x):
        return np.exp(-0.5 * (x[..., 0] ** 2 + x[..., 1] ** 2) / w2)

    if kind == "cos":
        def val(x):
            return np.cos(a * x[..., 0]) * G(x)

        def grad(x):
            g = G(x)
            c = np.cos(a * x[..., 0])
            s = np.sin(a * x[..., 0])
            return np.stack(
                [-a * s * g - c * x[..., 0] / w2 * g, -c * x[..., 1] / w2 * g], axis=-1
            )

        def lap(x):
            g = G(x)
            c = np.cos(a * x[..., 0])
            s = np.sin(a * x[..., 0])
            r2 = x[..., 0] ** 2 + x[..., 1] ** 2
            return g * (c * (r2 / w2**2 - 2.0 / w2 - a * a) + 2.0 * a * s * x[..., 0] / w2)
    else:
        def val(x):
            return np.sin(a * x[..., 1]) * G(x)

        def grad(x):
            g = G(x)
            c = np.cos(a * x[..., 1])
            s = np.sin(a * x[..., 1])
            return np.stack(
                [-s * x[..., 0] / w2 * g, a * c * g - s * x[..., 1] / w2 * g], axis=-1
            )

        def lap(x):
            g = G(x)
            c = np.cos(a * x[..., 1])
            s = np.sin(a * x[..., 1])
            r2 = x[..., 0] ** 2 + x[..., 1] ** 2
            return g * (s * (r2 / w2**2 - 2.0 / w2 - a * a) - 2.0 * a * c * x[..., 1] / w2)

    return SpatialProfile(pid, val, grad, lap, 1.0, a + np.exp(-0.5) / w)


def _dipole_profile(pid, axis):
    def val(x):
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        return x[..., axis] * np.exp(-0.5 * r2)

    def grad(x):
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        g = np.exp(-0.5 * r2)
        out = np.stack([-x[..., axis] * x[..., 0] * g, -x[..., axis] * x[..., 1] * g], axis=-1)
        out[..., axis] += g
        return out

    def lap(x):
        r2 = x[..., 0] ** 2 + x[..., 1] ** 2
        return x[..., axis] * np.exp(-0.5 * r2) * (r2 - 4.0)

    return SpatialProfile(pid, val, grad, lap, np.exp(-0.5), 1.0)


_PROFILES: tuple[SpatialProfile, ...] | None = None


def spatial_profiles() -> tuple[SpatialProfile, ...]:
    """The fixed, versioned profile family (FAMILY_VERSION=1)."""
    global _PROFILES
    if _PROFILES is None:
        _PROFILES = (
            _gauss_profile("g0", 0.0, 0.0, 1.0),
            _gauss_profile("g1", 0.8, 0.4, 0.6),
            _gauss_profile("g2", -0.6, 0.7, 0.6),
            _bump_profile("b0", 1.5),
            _trig_gauss_profile("cg", 1.3, 1.2, "cos"),
            _trig_gauss_profile("sg", 1.1, 1.2, "sin"),
            _dipole_profile("dx", 0),
            _dipole_profile("dy", 1),
        )
    return _PROFILES


@dataclass(frozen=True)
class TestFunction:
    """phi(x, b) = species[b] * profile(x) on R^2 x {+1, -1}."""

    profile: SpatialProfile
    species: tuple[float, float]  # weights on (b=+1, b=-1)

    @property
    def id(self) -> str:
        tag = {(1.0, 0.0): "+", (0.0, 1.0): "-", (1.0, 1.0): "s", (1.0, -1.0): "a"}.get(
            tuple(self.species), "m"
        )
        return f"{self.profile.id}{tag}"

    def weight(self, sign: float) -> float:
        return self.species[0] if sign > 0 else self.species[1]


def weakform_family() -> tuple[TestFunction, ...]:
    """Default weak-form family: four profiles on each species."""
    profs = spatial_profiles()
    picked = [profs[0], profs[3], profs[6], profs[7]]  # g0, b0, dx, dy
    return tuple(
        TestFunction(p, s) for p in picked for s in ((1.0, 0.0), (0.0, 1.0))
    )


# ---------------------------------------------------------------------------
# weak-form residual

@dataclass(frozen=True)
class EmpiricalPath:
    """Time-indexed positions of one simulated path (atoms of L^N)."""

    times: np.ndarray
    positions: np.ndarray  # (T, N, 2)
    signs: np.ndarray

    @classmethod
    def from_batch(cls, batch, path_index: int) -> "EmpiricalPath":
        return cls(batch.times, batch.positions[path_index], batch.signs)


def _time_slice(times: np.ndarray, T: float) -> int:
    k = int(np.argmin(np.abs(times - T)))
    if abs(times[k] - T) > 1e-9 * max(1.0, T) + 1e-12:
        raise ValueError(f"T={T:g} is not on the path's time grid")
    return k


def weak_form_residual(path, T: float, phi: TestFunction, gammabar: float, nu: float,
                       force_fields: np.ndarray | None = None) -> float:
    """W[T, phi] on a density path or an empirical path.

    W = int phi d(rho_T - rho_0)
        - gammabar int_0^T iint b b' K(x-x') . grad phi(x) drho drho' dt
        - nu int_0^T int Lap phi drho dt
    with trapezoidal time integrals on the path's grid; the diagonal x = x'
    contributes zero through the K(0) = 0 convention.
    """
    return weak_form_residuals(path, T, (phi,), gammabar, nu, force_fields)[0]


def weak_form_residuals(path, T: float, phis, gammabar: float, nu: float,
                        force_fields: np.ndarray | None = None) -> np.ndarray:
    """Vectorized weak_form_residual over a family (shares the pair sums)."""
    if isinstance(path, DensityPath):
        return _residuals_density(path, T, phis, gammabar, nu)
    return _residuals_empirical(path, T, phis, gammabar, nu, force_fields)


def _residuals_density(path: DensityPath, T, phis, gammabar, nu) -> np.ndarray:
    grid = path.grid
    kT = _time_slice(path.times, T)
    times = path.times[: kT + 1]
    states = path.states[: kT + 1]
    mesh = grid.mesh
    area = grid.cell_area

    vels = [kernel_velocity(s.rho_plus - s.rho_minus, grid) for s in states]
    out = np.empty(len(phis))
    for k, phi in enumerate(phis):
        val = phi.profile.value(mesh)
        grd = phi.profile.grad(mesh)
        lap = phi.profile.laplacian(mesh)
        wp, wm = phi.species

        def pair_term(s, v):
            gv = grd[..., 0] * v[..., 0] + grd[..., 1] * v[..., 1]
            return (wp * np.sum(s.rho_plus * gv) - wm * np.sum(s.rho_minus * gv)) * area

        def lap_term(s):
            return (wp * np.sum(s.rho_plus * lap) + wm * np.sum(s.rho_minus * lap)) * area

        first = (
            wp * np.sum((states[-1].rho_plus - states[0].rho_plus) * val)
            + wm * np.sum((states[-1].rho_minus - states[0].rho_minus) * val)
        ) * area
        inter = np.array([pair_term(s, v) for s, v in zip(states, vels)])
        lapl = np.array([lap_term(s) for s in states])
        out[k] = first - gammabar * np.trapezoid(inter, times) - nu * np.trapezoid(lapl, times)
    return out


def _residuals_empirical(path: EmpiricalPath, T, phis, gammabar, nu, force_fields) -> np.ndarray:
    kT = _time_slice(path.times, T)
    times = path.times[: kT + 1]
    pos = path.positions[: kT + 1]
    signs = path.signs
    n = signs.shape[0]
    if force_fields is None:
        force_fields = backend.signed_force_fields(np.ascontiguousarray(pos), signs)
    F = force_fields[: kT + 1]

    out = np.empty(len(phis))
    for k, phi in enumerate(phis):
        w_i = np.where(signs > 0, phi.species[0], phi.species[1])
        val0 = phi.profile.value(pos[0])
        valT = phi.profile.value(pos[-1])
        first = (np.sum(w_i * valT) - np.sum(w_i * val0)) / n

        grd = phi.profile.grad(pos)  # (T, N, 2)
        gF = grd[..., 0] * F[..., 0] + grd[..., 1] * F[..., 1]
        inter = np.sum((w_i * signs)[None, :] * gF, axis=1) / (n * n)

        lapl = np.sum(w_i[None, :] * phi.profile.laplacian(pos), axis=1) / n
        out[k] = first - gammabar * np.trapezoid(inter, times) - nu * np.trapezoid(lapl, times)
    return out


# ---------------------------------------------------------------------------
# bounded-Lipschitz distance

def bl_distance(a: GridDensityPair, b: GridDensityPair, grid: Grid2D) -> float:
    """Finite-family bounded-Lipschitz distance, summed over species.

    sup over the normalized profile family (||phi||_inf + Lip(phi) <= 1) of
    |int phi d(a - b)| per species; a lower bound on the true BL distance.
    """
    if a.grid != grid or b.grid != grid:
        raise GridMismatchError("density pairs must share the given grid")
    mesh = grid.mesh
    area = grid.cell_area
    dplus = a.rho_plus - b.rho_plus
    dminus = a.rho_minus - b.rho_minus
    sup_p = 0.0
    sup_m = 0.0
    for prof in spatial_profiles():
        v = prof.value(mesh) * prof.bl_scale
        sup_p = max(sup_p, abs(float(np.sum(dplus * v) * area)))
        sup_m = max(sup_m, abs(float(np.sum(dminus * v) * area)))
    return sup_p + sup_m


# ---------------------------------------------------------------------------
# snapshot I/O

_MAGIC = b"CLDN1\x00"


def save_density_snapshot(path, pair: GridDensityPair, t: float, species: str) -> None:
    """Flat binary snapshot: magic, M, L_dom, t, species tag, row-major float64."""
    if species not in ("plus", "minus"):
        raise ValueError("species must be 'plus' or 'minus'")
    arr = pair.rho_plus if species == "plus" else pair.rho_minus
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Iddc", pair.grid.resolution, pair.grid.half_width, t,
                             b"+" if species == "plus" else b"-"))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_density_snapshot(path) -> tuple[Grid2D, float, str, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError("not a density snapshot file")
        m, half_width, t, tag = struct.unpack("<Iddc", fh.read(struct.calcsize("<Iddc")))
        arr = np.frombuffer(fh.read(), dtype="<f8").reshape(m, m).copy()
    return Grid2D(half_width, m), t, "plus" if tag == b"+" else "minus", arr
