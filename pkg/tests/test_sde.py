import numpy as np
import pytest
from scipy.optimize import brentq

from coulomb_lab.model import DistanceMode, SignedConfiguration, SystemParams, rescale_params
from coulomb_lab.noise import NoiseStream
from coulomb_lab.sde import (
    NonFiniteStateError,
    permute_and_rerun,
    simulate,
    step_em,
)


def _params(**kw):
    base = dict(sigma=1.0, gamma=0.5, n_particles=2, epsilon=1e-2, ell=None,
                dt=1e-3, horizon=0.1)
    base.update(kw)
    return SystemParams(**base)


def test_step_em_identity_single_particle():
    cfg = SignedConfiguration([[0.3, -0.2]], [1])
    p = _params(n_particles=1, sigma=2.0)
    out = step_em(cfg, p, np.zeros((1, 2)))
    assert np.array_equal(out.positions, cfg.positions)


def test_step_em_single_particle_pure_noise():
    cfg = SignedConfiguration([[1.0, 2.0]], [-1])
    p = _params(n_particles=1, sigma=1.5, dt=0.04)
    xi = np.array([[0.5, -1.0]])
    out = step_em(cfg, p, xi)
    expect = cfg.positions + 1.5 * np.sqrt(0.04) * xi
    assert np.allclose(out.positions, expect, rtol=0, atol=0)


def test_step_em_two_opposite_drift():
    cfg = SignedConfiguration([[-1.0, 0.0], [1.0, 0.0]], [1, -1])
    p = _params(sigma=0.0, gamma=1.0, epsilon=0.0, dt=0.1)
    out = step_em(cfg, p, np.zeros((2, 2)))
    assert np.allclose(out.positions, [[-0.95, 0.0], [0.95, 0.0]], atol=1e-15)


def test_simulate_stationary():
    cfg = SignedConfiguration([[0.0, 0.0], [1.0, 0.0]], [1, -1])
    p = _params(sigma=0.0, gamma=0.0)
    traj = simulate(cfg, p, NoiseStream(1, 1), record_every=10)
    assert np.all(traj.positions == cfg.positions[None])
    assert traj.min_distances[DistanceMode.All] == 1.0


def test_simulate_deterministic_attraction_vs_ode_oracle():
    # sigma=0: the pair distance solves d' = -2 gamma d/(d^2+eps^2), i.e.
    # G(d) = d^2/2 + eps^2 ln d satisfies G(d(t)) = G(d0) - 2 gamma t.
    gamma, eps, d0 = 0.5, 0.1, 1.0
    p = _params(sigma=0.0, gamma=gamma, epsilon=eps, dt=1e-4, horizon=0.2)
    cfg = SignedConfiguration([[-d0 / 2, 0.0], [d0 / 2, 0.0]], [1, -1])
    traj = simulate(cfg, p, NoiseStream(0, 0), record_every=200)
    dist = np.linalg.norm(traj.positions[:, 0] - traj.positions[:, 1], axis=-1)
    assert np.all(np.diff(dist) < 0)  # monotone approach

    def G(d):
        return d * d / 2 + eps * eps * np.log(d)

    for t, d in zip(traj.times[1:], dist[1:]):
        target = G(d0) - 2 * gamma * t
        exact = brentq(lambda u: G(u) - target, 1e-9, d0)
        assert d == pytest.approx(exact, rel=2e-4)


def test_simulate_bitwise_deterministic():
    rng = np.random.default_rng(7)
    cfg = SignedConfiguration(rng.normal(size=(4, 2)), [1, 1, -1, -1])
    p = _params(n_particles=4, ell=5.0)
    ns = NoiseStream(3, 9)
    a = simulate(cfg, p, ns, record_every=7)
    b = simulate(cfg, p, ns, record_every=7)
    assert np.array_equal(a.positions, b.positions)
    assert a.force_integral == b.force_integral


def test_permutation_equivariance_exact():
    rng = np.random.default_rng(11)
    n = 6
    cfg = SignedConfiguration(rng.normal(size=(n, 2)), [1, 1, 1, -1, -1, -1])
    p = _params(n_particles=n, ell=4.0, horizon=0.05)
    for seed, perm in ((0, [1, 0, 2, 3, 4, 5]), (1, [5, 3, 0, 2, 4, 1])):
        base, relab = permute_and_rerun(cfg, p, NoiseStream(17, seed), np.array(perm))
        assert np.array_equal(relab.positions, base.positions[:, perm])
        assert np.array_equal(relab.signs, base.signs[perm])


def test_identity_permutation():
    cfg = SignedConfiguration([[0.0, 0.0], [1.0, 1.0]], [1, -1])
    p = _params()
    a, b = permute_and_rerun(cfg, p, NoiseStream(2, 2), np.array([0, 1]))
    assert np.array_equal(a.positions, b.positions)


def test_sign_flip_invariance_exact():
    rng = np.random.default_rng(13)
    cfg = SignedConfiguration(rng.normal(size=(5, 2)), [1, -1, 1, -1, 1])
    flipped = SignedConfiguration(cfg.positions, -cfg.signs)
    p = _params(n_particles=5, ell=3.0)
    ns = NoiseStream(23, 1)
    a = simulate(cfg, p, ns)
    b = simulate(flipped, p, ns)
    assert np.array_equal(a.positions, b.positions)


def test_space_scaling_equivariance():
    rng = np.random.default_rng(17)
    cfg = SignedConfiguration(rng.normal(size=(4, 2)), [1, 1, -1, -1])
    p = _params(n_particles=4, epsilon=0.05, ell=2.0)
    ns = NoiseStream(5, 5)
    L = 3.7
    base = simulate(cfg, p, ns)
    scaled = simulate(
        SignedConfiguration(cfg.positions / L, cfg.signs), rescale_params(p, L, 1.0), ns
    )
    assert np.allclose(scaled.positions, base.positions / L, rtol=1e-12, atol=1e-15)


def test_time_scaling_equivariance():
    rng = np.random.default_rng(19)
    cfg = SignedConfiguration(rng.normal(size=(3, 2)), [1, -1, 1])
    ns = NoiseStream(29, 0)
    c = 4.0
    p = _params(n_particles=3, epsilon=0.05)
    q = SystemParams(sigma=p.sigma / np.sqrt(c), gamma=p.gamma / c, n_particles=3,
                     epsilon=p.epsilon, ell=None, dt=p.dt * c, horizon=p.horizon * c)
    a = simulate(cfg, p, ns)
    b = simulate(cfg, q, ns)
    # same step count, same increments per step -> same states step-for-step
    assert np.allclose(b.positions, a.positions, rtol=1e-12, atol=1e-15)
    assert np.allclose(b.times, c * a.times)


def test_center_of_mass_random_walk():
    # zero total drift makes the mean position a Brownian motion of variance
    # sigma^2 t / N per coordinate; checked within 4 SE over many paths
    from coulomb_lab.estimators import run_batch
    from coulomb_lab.samplers import CrossPattern4

    sigma, t_final, n = 1.0, 0.25, 4
    p = _params(sigma=sigma, gamma=0.4, n_particles=n, epsilon=1e-2,
                dt=1e-2, horizon=t_final)
    n_paths = 10_000
    batch = run_batch(CrossPattern4(0.5), p, n_paths, base_seed=0, record_every=25)
    com = batch.positions[:, -1].mean(axis=1)  # (paths, 2)
    target = sigma**2 * t_final / n
    se = target * np.sqrt(2.0 / n_paths)
    for k in (0, 1):
        assert abs(np.var(com[:, k]) - target) < 4 * se


def test_nonfinite_raises():
    cfg = SignedConfiguration([[0.0, 0.0], [1.0, 0.0]], [1, -1])
    p = _params(sigma=1e308, dt=1.0, horizon=3.0)
    with pytest.raises(NonFiniteStateError):
        simulate(cfg, p, NoiseStream(0, 1))


def test_requires_distinct_initial():
    cfg = SignedConfiguration([[0.0, 0.0], [0.0, 0.0]], [1, -1])
    with pytest.raises(ValueError, match="distinct"):
        simulate(cfg, _params(), NoiseStream(0, 0))


def test_trajectory_diagnostics_and_csv(tmp_path):
    rng = np.random.default_rng(23)
    cfg = SignedConfiguration(rng.normal(size=(4, 2)), [1, 1, -1, -1])
    p = _params(n_particles=4, ell=2.0, horizon=0.02)
    traj = simulate(cfg, p, NoiseStream(1, 4), record_every=5, alphas=(0.5,))
    assert traj.diag.shape[1] == 6
    assert np.all(traj.diag[:, 3] >= 0) and np.all(traj.diag[:, 3] <= 1.0)
    assert np.all(np.diff(traj.diag[:, 5]) >= 0)  # running force integral
    assert traj.moment_integrals[0.5] > 0
    assert traj.force_integral == traj.diag[-1, 5]

    tcsv = tmp_path / "traj.csv"
    dcsv = tmp_path / "diag.csv"
    traj.to_csv(tcsv, ("config_hash=test",))
    traj.diagnostics_to_csv(dcsv)
    lines = tcsv.read_text().splitlines()
    assert lines[0].startswith("#") and lines[1] == "t,particle,sign,x,y"
    assert len(lines) == 2 + 4 * len(traj)
    head = dcsv.read_text().splitlines()[0]
    assert head == "t,d_all,d_same,d_opp,phi,drift_l1,singular_event"


def test_trajectory_times_cover_horizon():
    cfg = SignedConfiguration([[0.0, 0.0], [1.0, 0.0]], [1, -1])
    p = _params(dt=3e-3, horizon=0.01)  # horizon not a multiple of dt
    traj = simulate(cfg, p, NoiseStream(0, 2), record_every=2)
    assert traj.times[0] == 0.0
    assert abs(traj.times[-1] - p.horizon) <= p.dt
