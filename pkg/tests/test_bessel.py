import numpy as np
import pytest
from scipy.stats import ks_2samp

from coulomb_lab import bessel as bes
from coulomb_lab.bessel import (
    BesselPath,
    BesselSpec,
    DimensionError,
    TwoParticleRegime,
    besq_mean_var,
    classify_regime,
    dimension_from_params,
    sample_besq_em,
    sample_besq_exact,
    two_particle_batch,
    two_particle_reference,
    zero_hit_probability,
)
from coulomb_lab.noise import NoiseStream


def test_dimension_from_params():
    assert dimension_from_params(2.0, 1.0) == pytest.approx(1.5)
    assert dimension_from_params(1.0, 1.0) == pytest.approx(0.0)
    assert dimension_from_params(1.0, 0.0) == pytest.approx(2.0)
    # same-sign pair (gamma < 0) lands above 2
    assert dimension_from_params(1.0, -1.0) == pytest.approx(4.0)


def test_classify_regime():
    assert classify_regime(np.sqrt(2.0), 0.5) is TwoParticleRegime.WeakSolution
    assert classify_regime(1.0, 0.75) is TwoParticleRegime.BesselOnly
    assert classify_regime(1.0, 1.0) is TwoParticleRegime.Sticky


def test_besq_mean_var_values():
    m, v = besq_mean_var(BesselSpec(1.5, 1.0), 2.0)
    assert m == pytest.approx(4.0) and v == pytest.approx(20.0)
    m, v = besq_mean_var(BesselSpec(0.0, 0.0), 5.0)
    assert m == 0.0 and v == 0.0


def test_mean_var_against_fine_em_oracle():
    # independent check of the closed-form moments by a fine-dt EM batch
    spec = BesselSpec(1.5, 1.0)
    t = 0.5
    res = bes._em_batch(spec, t, 1e-4, 4000, NoiseStream(100, 0), -1.0, np.inf)
    m_t, v_t = besq_mean_var(spec, t)
    final = res["final_R"]
    assert abs(final.mean() - m_t) < 4 * final.std() / np.sqrt(len(final))
    assert abs(final.var() - v_t) < 0.1 * v_t


def test_exact_sampler_moments():
    spec = BesselSpec(1.5, 1.0)
    draws = sample_besq_exact(spec, 2.0, NoiseStream(7, 1), size=100_000)
    m, v = besq_mean_var(spec, 2.0)
    se_mean = draws.std() / np.sqrt(len(draws))
    assert abs(draws.mean() - m) < 3 * se_mean
    c = draws - draws.mean()
    se_var = np.sqrt((np.mean(c**4) - np.mean(c**2) ** 2) / len(draws))
    assert abs(draws.var() - v) < 4 * se_var


def test_exact_sampler_from_zero_is_chi2():
    # x=0, delta=2: J=0 a.s., draw = t * chi^2_2 (mean 2t)
    t = 0.7
    draws = sample_besq_exact(BesselSpec(2.0, 0.0), t, NoiseStream(8, 1), size=50_000)
    assert abs(draws.mean() - 2 * t) < 4 * draws.std() / np.sqrt(len(draws))


def test_exact_sampler_rejects_nonpositive_dimension():
    with pytest.raises(DimensionError):
        sample_besq_exact(BesselSpec(0.0, 1.0), 1.0, NoiseStream(0, 0))


def test_em_identically_zero():
    path = sample_besq_em(BesselSpec(0.0, 0.0), 1e-2, 0.5, NoiseStream(1, 1))
    assert np.all(path.values == 0.0)


def test_em_freeze_permanence_and_negative_dim():
    # delta=-1 from 0.01: almost every path frozen well before T=1
    frozen = 0
    n = 400
    for p in range(n):
        path = sample_besq_em(BesselSpec(-1.0, 0.01), 1e-3, 1.0, NoiseStream(50, p))
        if path.frozen_at is not None:
            frozen += 1
            k = int(round(path.frozen_at / 1e-3))
            assert np.all(path.values[k:] == 0.0)
    assert frozen / n > 0.99


def test_em_positive_dim_mean():
    spec = BesselSpec(3.0, 1.0)
    res = bes._em_batch(spec, 1.0, 1e-3, 4000, NoiseStream(60, 0), -1.0, np.inf)
    final = res["final_R"]
    assert abs(final.mean() - 4.0) < 3 * final.std() / np.sqrt(len(final))


@pytest.mark.parametrize("delta,x", [(1.5, 1.0), (3.0, 1.0), (1.5, 0.0), (3.0, 0.0)])
def test_exact_vs_fine_em_ks(delta, x):
    t = 1.0
    n = 10_000
    exact = sample_besq_exact(BesselSpec(delta, x), t, NoiseStream(70, 1), size=2 * n)
    res = bes._em_batch(BesselSpec(delta, x), t, 1e-4, n, NoiseStream(71, 2), -1.0, np.inf)
    assert ks_2samp(exact, res["final_R"]).statistic <= 0.03


@pytest.mark.parametrize("x,cap", [(1.0, 0.035), (0.0, 0.05)])
def test_exact_vs_em_ks_low_dimension_refines(x, cap):
    # For delta=0.5 the transition density has an integrable r^{delta/2-1}
    # spike at 0 that clamped EM resolves only as dt -> 0 (measured KS bias
    # 0.032 at x=1 / 0.054 at x=0 for dt=1e-4, decaying like ~dt^(1/4); see
    # a ~dt^(1/4) rate).  Assert the refinement trend and the refined level.
    t, n = 1.0, 15_000
    spec = BesselSpec(0.5, x)
    exact = sample_besq_exact(spec, t, NoiseStream(70, 5), size=2 * n)
    ks = {}
    for dt in (1e-4, 2e-5):
        res = bes._em_batch(spec, t, dt, n, NoiseStream(71, 6), -1.0, np.inf)
        ks[dt] = ks_2samp(exact, res["final_R"]).statistic
    assert ks[2e-5] < ks[1e-4]
    assert ks[2e-5] <= cap


def test_zero_hit_trivial_threshold():
    est = zero_hit_probability(BesselSpec(2.5, 0.5), 1.0, 0.6, 200, NoiseStream(2, 2), dt=1e-2)
    assert est.estimate == 1.0


def test_zero_hit_positive_for_small_dim():
    est = zero_hit_probability(BesselSpec(1.0, 0.1), 1.0, 1e-3, 2000, NoiseStream(3, 3), dt=1e-3)
    assert est.excludes_zero()


def test_zero_hit_delta25_converged_level():
    # The acceptance suite's "< 0.005" target for this case contradicts the
    # classical scale-function value P(ever hit a) = (a/x)^{(delta-2)/2} ~ 0.178,
    # time-truncated to ~0.04 on [0,1] (it stays red there).  Here we pin
    # the verified behaviour: the estimate sits near 4% and is dt-stable.
    spec = BesselSpec(2.5, 1.0)
    coarse = zero_hit_probability(spec, 1.0, 1e-3, 4000, NoiseStream(4, 4), dt=4e-4)
    fine = zero_hit_probability(spec, 1.0, 1e-3, 4000, NoiseStream(4, 5), dt=1e-4)
    assert 0.02 <= fine.estimate <= 0.07
    assert abs(fine.estimate - coarse.estimate) <= fine.ci + coarse.ci


def test_zero_hit_monotone_in_dimension():
    deltas = [-1.0, 0.0, 0.5, 1.0, 1.5, 1.9, 2.5]
    ests = [
        zero_hit_probability(BesselSpec(d, 0.1), 1.0, 1e-3, 3000, NoiseStream(5, k), dt=2e-4)
        for k, d in enumerate(deltas)
    ]
    for a, b in zip(ests, ests[1:]):
        assert b.estimate <= a.estimate + (a.ci + b.ci)


def test_two_particle_reference():
    path, regime = two_particle_reference(
        1.0, 0.25, np.array([0.5, 0.0]), 1.0, 1e-3, NoiseStream(6, 6)
    )
    assert regime is TwoParticleRegime.WeakSolution
    assert isinstance(path, BesselPath)
    assert path.values[0] == pytest.approx(0.125)

    # gamma -> 0 is the delta=2 boundary (continuous process never hits 0).
    # The thresholded discrete minimum cannot show that directly: clamping
    # puts an atom at 0 whose mass decays only logarithmically in dt (the
    # delta=2 process visits small neighborhoods at log rate).  Assert the
    # verified behaviour: the tiny-threshold estimate is the clamp fraction
    # and it shrinks under dt refinement.
    coarse = zero_hit_probability(BesselSpec(2.0, 0.5), 1.0, 1e-10, 2000,
                                  NoiseStream(6, 7), dt=1e-3)
    fine = zero_hit_probability(BesselSpec(2.0, 0.5), 1.0, 1e-10, 2000,
                                NoiseStream(6, 8), dt=1e-4)
    assert fine.estimate < coarse.estimate - (fine.ci + coarse.ci) / 2

    # sticky regime freezes a positive fraction from a close start
    batch = two_particle_batch(
        1.0, 1.5, np.array([0.1, 0.0]), 1.0, 2e-4, 1500, NoiseStream(7, 7),
        hit_threshold=1e-5,
    )
    assert batch.regime is TwoParticleRegime.Sticky
    assert batch.dimension == pytest.approx(-1.0)
    assert batch.frozen.excludes_zero()
    if batch.separated_given_hit is not None:
        assert batch.separated_given_hit.estimate == 0.0


def test_two_particle_mean_growth():
    # E R_t = R0 + delta t for delta > 0 (weak-solution regime)
    sigma, gamma = 1.0, 0.25
    delta = dimension_from_params(sigma, gamma)
    r0 = 0.5**2 / 2
    res = bes._em_batch(BesselSpec(delta, r0), 0.5, 5e-4, 4000, NoiseStream(8, 8), -1.0, np.inf)
    final = res["final_R"]
    want = r0 + delta * 0.5
    assert abs(final.mean() - want) < 3 * final.std() / np.sqrt(len(final))


def test_full_system_matches_besq_small():
    # N=2 opposite signs, eps=1e-3: |X^1-X^2|^2/(2 sigma^2) at t=0.25 is
    # BESQ(1) in law (smaller version of acceptance criterion 4)
    from coulomb_lab.estimators import run_batch
    from coulomb_lab.model import SystemParams
    from coulomb_lab.samplers import TwoOpposite

    sigma, gamma = 1.0, 0.5
    t = 0.25
    p = SystemParams(sigma=sigma, gamma=gamma, n_particles=2, epsilon=1e-3,
                     dt=1e-4, horizon=t)
    n_paths = 3000
    batch = run_batch(TwoOpposite(1.0), p, n_paths, base_seed=0, record_every=250,
                      track_distances=False)
    diff = batch.positions[:, -1, 0] - batch.positions[:, -1, 1]
    R = np.sum(diff * diff, axis=1) / (2 * sigma**2)
    delta = dimension_from_params(sigma, gamma)
    exact = sample_besq_exact(BesselSpec(delta, 0.5), t, NoiseStream(9, 9), size=2 * n_paths)
    assert ks_2samp(R, exact).statistic <= 0.05


def test_bessel_path_csv(tmp_path):
    path = sample_besq_em(BesselSpec(1.0, 0.3), 1e-2, 0.2, NoiseStream(10, 10))
    f = tmp_path / "r.csv"
    path.to_csv(f, ("config_hash=x",))
    lines = f.read_text().splitlines()
    assert lines[1] == "t,R"
    assert len(lines) == 2 + len(path.values)
