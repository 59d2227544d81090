"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criterion 3's first clause (BESQ(2.5) sub-threshold probability < 0.005) is
kept exactly as stated and is expected RED: the classical scale-function
value for P(ever hit 1e-3 from 1) is (1e-3)^0.25 ~ 0.178, time-truncated to
~0.04 on [0,1] — an order of magnitude above the target, so the target is
unattainable and is left visibly failing rather than loosened.
All runs are deterministic (fixed seeds), path-parallel over 2 workers.
"""

import os
import time
import warnings

import numpy as np
import pytest
from scipy.stats import ks_2samp

from coulomb_lab import bessel as bes
from coulomb_lab import meanfield as mf
from coulomb_lab.estimators import (
    collision_probability,
    mean_abs_position,
    pairwise_moment,
    run_batch,
)
from coulomb_lab.model import (
    DistanceMode,
    SignedConfiguration,
    SystemParams,
    coulomb_kernel,
    drift,
    rescale_params,
)
from coulomb_lab.noise import NoiseStream
from coulomb_lab.samplers import CrossPattern4, IIDGaussianNeutral, TwoOpposite
from coulomb_lab.sde import permute_and_rerun, simulate

JOBS = min(2, os.cpu_count() or 1)


def _report(criterion, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {criterion}] {status}: {detail}")
    return ok


class Clauses:
    def __init__(self, criterion):
        self.criterion = criterion
        self.failures = []
        self.t0 = time.time()

    def check(self, ok, detail):
        if not _report(self.criterion, ok, detail):
            self.failures.append(detail)

    def finish(self):
        print(f"[criterion {self.criterion}] runtime {time.time() - self.t0:.1f}s")
        assert not self.failures, f"criterion {self.criterion} failed: {self.failures}"


def test_criterion_1_exact_symmetries():
    c = Clauses(1)
    rng = np.random.default_rng(100)

    x = rng.standard_normal((1_000_000, 2))
    c.check(np.array_equal(coulomb_kernel(-x), -coulomb_kernel(x)),
            "kernel antisymmetry K(-x) = -K(x), bitwise over 1e6 samples")

    sub = x[:100_000]
    dots = np.sum(sub * coulomb_kernel(sub), axis=-1)
    c.check(np.max(np.abs(dots - 1.0)) < 1e-12, "x . K(x) = 1 within 1e-12")

    ok = True
    for n in (4, 32, 256):
        pos = rng.normal(size=(n, 2))
        signs = rng.choice([-1.0, 1.0], size=n)
        p = SystemParams(sigma=1.0, gamma=0.8, n_particles=n, epsilon=1e-3,
                         dt=1e-3, horizon=0.1)
        total = drift(SignedConfiguration(pos, signs), p).sum(axis=0)
        ok &= bool(np.max(np.abs(total)) < 1e-10)
    c.check(ok, "zero total drift within 1e-10 up to N=256")

    n = 6
    cfg = SignedConfiguration(rng.normal(size=(n, 2)), [1, 1, 1, -1, -1, -1])
    p = SystemParams(sigma=1.0, gamma=0.5, n_particles=n, epsilon=1e-2, ell=4.0,
                     dt=1e-3, horizon=0.05)
    perm = np.array([2, 0, 1, 5, 3, 4])
    base, relab = permute_and_rerun(cfg, p, NoiseStream(7, 1), perm)
    c.check(np.array_equal(relab.positions, base.positions[:, perm]),
            "permutation equivariance, bitwise")

    flip = simulate(SignedConfiguration(cfg.positions, -cfg.signs), p, NoiseStream(7, 1))
    c.check(np.array_equal(flip.positions, base.positions), "sign-flip invariance, bitwise")

    L = 2.5
    scaled = simulate(SignedConfiguration(cfg.positions / L, cfg.signs),
                      rescale_params(p, L, 1.0), NoiseStream(7, 1))
    c.check(bool(np.allclose(scaled.positions, base.positions / L, rtol=1e-12, atol=1e-15)),
            "space-scaling equivariance within 1e-12")

    cscale = 4.0
    q = SystemParams(sigma=p.sigma / np.sqrt(cscale), gamma=p.gamma / cscale,
                     n_particles=n, epsilon=p.epsilon, ell=p.ell,
                     dt=p.dt * cscale, horizon=p.horizon * cscale)
    tsc = simulate(cfg, q, NoiseStream(7, 1))
    c.check(bool(np.allclose(tsc.positions, base.positions, rtol=1e-12, atol=1e-15)),
            "time-scaling equivariance within 1e-12")
    c.finish()


def test_criterion_2_besq_moments():
    c = Clauses(2)
    spec = bes.BesselSpec(1.5, 1.0)
    draws = bes.sample_besq_exact(spec, 2.0, NoiseStream(200, 0), size=100_000)
    mean_t, var_t = bes.besq_mean_var(spec, 2.0)
    n = len(draws)
    se_mean = draws.std() / np.sqrt(n)
    cen = draws - draws.mean()
    se_var = np.sqrt((np.mean(cen**4) - np.mean(cen**2) ** 2) / n)
    c.check(abs(draws.mean() - mean_t) < 3 * se_mean,
            f"mean {draws.mean():.4f} within 3 SE ({3 * se_mean:.4f}) of {mean_t}")
    c.check(abs(draws.var() - var_t) < 4 * se_var,
            f"variance {draws.var():.3f} within 4 SE ({4 * se_var:.3f}) of {var_t}")
    c.finish()


def test_criterion_3_zero_hitting_dichotomy():
    c = Clauses(3)
    est25 = bes.zero_hit_probability(bes.BesselSpec(2.5, 1.0), 1.0, 1e-3, 10_000,
                                     NoiseStream(300, 0))
    # Target kept as stated although unattainable: the scale-function value
    # of the sub-1e-3 mass is ~0.04 (see module docstring); expected RED.
    c.check(est25.estimate < 0.005,
            f"delta=2.5 x=1: estimate {est25.estimate:.4f} < 0.005 "
            "(unattainable target: dt-stable level is ~0.04, kept red by design)")

    est1 = bes.zero_hit_probability(bes.BesselSpec(1.0, 0.1), 1.0, 1e-3, 10_000,
                                    NoiseStream(301, 0))
    c.check(est1.excludes_zero(),
            f"delta=1 x=0.1: CI [{est1.lo:.4f}, {est1.hi:.4f}] excludes 0")

    deltas = [-1.0, 0.0, 0.5, 1.0, 1.5, 1.9, 2.5]
    ests = [
        bes.zero_hit_probability(bes.BesselSpec(d, 0.1), 1.0, 1e-3, 10_000,
                                 NoiseStream(302, k))
        for k, d in enumerate(deltas)
    ]
    mono = all(b.estimate <= a.estimate + (a.ci + b.ci) for a, b in zip(ests, ests[1:]))
    c.check(mono, "estimates nonincreasing in delta over "
            + ", ".join(f"{d}:{e.estimate:.3f}" for d, e in zip(deltas, ests)))
    c.finish()


def test_criterion_4_two_particle_consistency():
    c = Clauses(4)
    sigma, gamma, eps, dt = 1.0, 0.5, 1e-3, 1e-5
    d0 = 1.0
    p = SystemParams(sigma=sigma, gamma=gamma, n_particles=2, epsilon=eps,
                     dt=dt, horizon=1.0)
    n_paths = 10_000
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        batch = run_batch(TwoOpposite(d0), p, n_paths, base_seed=0,
                          record_every=25_000, track_distances=False, jobs=JOBS)
    delta = bes.dimension_from_params(sigma, gamma)
    r0 = d0 * d0 / (2 * sigma * sigma)
    assert delta == pytest.approx(1.0)
    for t in (0.25, 0.5, 1.0):
        k = batch.time_index(t)
        diff = batch.positions[:, k, 0] - batch.positions[:, k, 1]
        R = np.sum(diff * diff, axis=1) / (2 * sigma * sigma)
        exact = bes.sample_besq_exact(bes.BesselSpec(delta, r0), t,
                                      NoiseStream(400, int(t * 100)), size=2 * n_paths)
        ks = ks_2samp(R, exact).statistic
        c.check(ks <= 0.05, f"KS(|X1-X2|^2/(2s^2), BESQ(1)) at t={t}: {ks:.4f} <= 0.05")
    c.finish()


def test_criterion_5_regime_classification():
    c = Clauses(5)
    sigma, d0, thr_dist = 1.0, 0.2, 1e-2
    r_thr = thr_dist**2 / (2 * sigma**2)
    for k, ratio in enumerate((0.25, 0.75, 1.25)):
        batch = bes.two_particle_batch(
            sigma, ratio * sigma**2, np.array([d0, 0.0]), 1.0, 1e-4, 4000,
            NoiseStream(500, k), hit_threshold=r_thr,
        )
        frozen = batch.frozen
        sep = batch.separated_given_hit
        if ratio < 1.0:
            c.check(frozen.estimate <= 1e-3,
                    f"g/s^2={ratio}: frozen fraction {frozen.estimate:.5f} <= 0.1%")
            c.check(sep is not None and sep.excludes_zero(),
                    f"g/s^2={ratio}: post-hit separation CI "
                    f"[{sep.lo:.3f}, {sep.hi:.3f}] excludes 0")
        else:
            c.check(frozen.excludes_zero(),
                    f"g/s^2={ratio}: frozen fraction {frozen.estimate:.3f} CI "
                    f"[{frozen.lo:.3f}, {frozen.hi:.3f}] excludes 0")
    c.finish()


def test_criterion_6_drift_moment_bound():
    c = Clauses(6)
    sigma, gamma, n, alpha, beta0, T = 2.0, 0.1, 10, 0.5, 0.5, 1.0
    p = SystemParams(sigma=sigma, gamma=gamma, n_particles=n, epsilon=1e-3,
                     ell=100.0, dt=1e-4, horizon=T)
    sampler = IIDGaussianNeutral(n, 0.5)  # E|X0| = 0.5 sqrt(pi/2) <= 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        batch = run_batch(sampler, p, 800, base_seed=0, alphas=(alpha,),
                          record_every=500, jobs=JOBS)

    est = pairwise_moment(batch, alpha)
    delta = alpha * sigma**2 - 2 * gamma * (n - 1)
    assert delta == pytest.approx(0.2)
    rhs = 2 * np.sqrt(2.0) / (alpha * delta * beta0) * (1 + 1.25 * sigma**2 * T + 1.0)
    assert rhs == pytest.approx(395.9797, abs=1e-3)
    c.check(est.hi <= 395.98,
            f"moment estimate {est.estimate:.3f} + CI (hi {est.hi:.3f}) <= 395.98")

    phi0 = mean_abs_position(batch, 0.0)
    n_minus = n // 2
    for t in (0.5, 1.0):
        et = mean_abs_position(batch, t)
        bound = (n / n_minus) * phi0.hi + (n / n_minus) * (
            sigma**2 + gamma * (n - 1) / 2.0
        ) * t
        c.check(et.hi <= bound,
                f"E phi(X_t) at t={t}: {et.estimate:.3f} (hi {et.hi:.3f}) <= "
                f"plug-in bound {bound:.3f}")
    c.finish()


def test_criterion_7_collision_dichotomy_n4():
    c = Clauses(7)
    # ell=off: at fixed moderate ell the cutoff zeroes the same-sign repulsion
    # below 1/(2*ell) and free diffusion then produces sub-threshold dips that
    # the limiting weak solution forbids; the same-sign no-collision property
    # belongs to the ell -> infinity limit being tested.
    ests = {}
    for k, eps in enumerate((1e-2, 1e-3)):
        p = SystemParams(sigma=1.0, gamma=0.25, n_particles=4, epsilon=eps,
                         ell=None, dt=2e-5, horizon=1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            batch = run_batch(CrossPattern4(0.35), p, 1500, base_seed=10_000 * k,
                              record_every=5000, jobs=JOBS)
            opp = collision_probability(batch, DistanceMode.OppositeSign, 1e-2)
            same = collision_probability(batch, DistanceMode.SameSign, 1e-3)
        ests[eps] = (opp, same)
        if eps == 1e-3:
            c.check(opp.excludes_zero(),
                    f"eps={eps}: opposite-sign collision CI [{opp.lo:.3f}, {opp.hi:.3f}] "
                    "excludes 0")
        c.check(same.estimate <= 0.01,
                f"eps={eps}: same-sign estimate {same.estimate:.4f} <= 1%")
    s_coarse, s_fine = ests[1e-2][1], ests[1e-3][1]
    c.check(s_fine.estimate <= s_coarse.estimate + s_coarse.ci + s_fine.ci,
            f"same-sign estimate nonincreasing under eps refinement "
            f"({s_coarse.estimate:.4f} -> {s_fine.estimate:.4f})")
    c.finish()


def test_criterion_8_pde_sanity():
    c = Clauses(8)
    sigma = 1.0
    nu = sigma**2 / 2
    grid = mf.Grid2D(5.0, 256)
    v0, T = 0.04, 0.25
    path = mf.solve_pde(mf.gaussian_pair(grid, v0), 0.0, nu, 5e-3, T, record_every=10)
    final = path.states[-1]
    exact = mf.gaussian_pair(grid, v0 + 2 * nu * T)
    l1 = float(np.abs(final.total - exact.total).sum() * grid.cell_area)
    c.check(l1 <= 1e-3, f"heat L1 error {l1:.2e} <= 1e-3 on 256^2")
    drift_mass = abs(final.mass_plus - 0.5) + abs(final.mass_minus - 0.5)
    c.check(drift_mass <= 1e-8, f"mass conserved to {drift_mass:.2e} <= 1e-8")

    bw = 0.1
    g4 = mf.Grid2D(4.0, 256)
    bump = mf.gaussian_pair(g4, bw * bw, mass_plus=1.0)
    vel = mf.kernel_velocity(bump.rho_plus - bump.rho_minus, g4)
    mesh = g4.mesh
    r = np.sqrt(np.sum(mesh * mesh, axis=-1))
    mask = (r > 0.3) & (r < 0.5)
    vr = np.sum(vel * mesh, axis=-1)[mask] / r[mask]
    truth = (1.0 - np.exp(-r[mask] ** 2 / (2 * bw * bw))) / r[mask]
    rel = float(np.max(np.abs(vr / truth - 1.0)))
    # spot-check the closed-form oracle itself by direct 2D quadrature
    from scipy.integrate import dblquad

    x0 = 0.4
    g = lambda y1, y0: (
        (x0 - y0) / ((x0 - y0) ** 2 + y1**2)
        * np.exp(-(y0**2 + y1**2) / (2 * bw * bw)) / (2 * np.pi * bw * bw)
    )
    quad_val = dblquad(g, -1.5, 1.5, -1.5, 1.5, epsabs=1e-10)[0]
    closed = (1.0 - np.exp(-x0**2 / (2 * bw * bw))) / x0
    c.check(abs(quad_val - closed) < 1e-6,
            f"quadrature oracle agrees with Gauss-law form ({quad_val:.8f} vs {closed:.8f})")
    c.check(rel < 0.02, f"kernel_velocity matches quadrature oracle within {rel:.4f} < 2%")
    c.finish()


def test_criterion_9_meanfield_convergence():
    c = Clauses(9)
    sigma, gammabar, T, scale = 1.0, 0.3, 0.5, 0.5
    nu = sigma**2 / 2
    assert sigma**2 > 2 * gammabar
    grid = mf.Grid2D(5.5, 256)
    bw = 0.12
    n_paths = 200
    fam = mf.weakform_family()

    pde = mf.solve_pde(mf.gaussian_pair(grid, scale * scale), gammabar, nu, 2e-3, T,
                       record_every=25)
    target = mf.smooth_pair(pde.states[-1], bw)

    bl = {}
    wmean = {}
    for j, n in enumerate((32, 128, 512)):
        p = SystemParams(sigma=sigma, gamma=gammabar / n, n_particles=n,
                         epsilon=1e-3, ell=None, dt=5e-4, horizon=T)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            batch = run_batch(IIDGaussianNeutral(n, scale), p, n_paths,
                              base_seed=1_000_000 * j, record_every=20,
                              track_distances=False, jobs=JOBS)
        acc_p = np.zeros((grid.resolution, grid.resolution))
        acc_m = np.zeros_like(acc_p)
        absres = np.empty((n_paths, len(fam)))
        for q in range(n_paths):
            dp = mf.empirical_density(batch.final_config(q), grid, bw)
            acc_p += dp.rho_plus
            acc_m += dp.rho_minus
            path = mf.EmpiricalPath.from_batch(batch, q)
            absres[q] = np.abs(mf.weak_form_residuals(path, T, fam, gammabar, nu))
        avg = mf.GridDensityPair(grid, acc_p / n_paths, acc_m / n_paths)
        bl[n] = mf.bl_distance(avg, target, grid)
        wmean[n] = float(absres.mean())
        print(f"[criterion 9] N={n}: bl={bl[n]:.5f} mean|W|={wmean[n]:.5f}")

    c.check(bl[512] < bl[128] < bl[32],
            f"BL distance strictly decreasing: {bl[32]:.5f} > {bl[128]:.5f} > {bl[512]:.5f}")
    ns = np.array([32.0, 128.0, 512.0])
    ws = np.array([wmean[32], wmean[128], wmean[512]])
    slope = float(np.polyfit(np.log(ns), np.log(ws), 1)[0])
    c.check(-0.8 <= slope <= -0.2, f"mean |W| log-log slope {slope:.3f} in [-0.8, -0.2]")
    c.finish()
