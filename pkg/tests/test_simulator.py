import math

import mpmath
import numpy as np
import pytest
from scipy import stats

from splidar.experiments import synthetic_grid
from splidar.model import AcquisitionConfig, PixelScene, PulseShape, SceneGrid, flux_at
from splidar.quadrature import integrate
from splidar.rng import substream
from splidar.simulator import (RadiometricParams, TimestampDraw, background_energy,
                               default_sensor_acquisition, grid_from_radiometry,
                               radiometric_alpha, sample_count, sample_draw, sample_first_photon,
                               sample_timestamps, simulate_frames)

from conftest import preset


def test_count_mean_and_variance():
    s = preset(1.0)
    rng = substream(1, "count")
    counts = np.array([sample_count(s, rng) for _ in range(100_000)])
    assert 9.9 <= counts.mean() <= 10.1
    assert 9.5 <= counts.var() <= 10.5


def test_count_zero_rate():
    s = PixelScene(0.0, 4.0, 0.0, PulseShape(1.0, 0.2), AcquisitionConfig(10.0, 100))
    rng = substream(0, "z")
    assert all(sample_count(s, rng) == 0 for _ in range(100))


@pytest.mark.parametrize("level", [1.0, 10.0, 50.0])
def test_count_chi_square(level):
    s = preset(2.0, photon_level=level)
    rng = substream(3, "chi", int(level))
    counts = np.array([sample_count(s, rng) for _ in range(20_000)])
    lo, hi = int(stats.poisson.ppf(0.001, level)), int(stats.poisson.isf(0.001, level))
    edges = np.arange(lo, hi + 1)
    probs = np.concatenate([[stats.poisson.cdf(lo, level)], stats.poisson.pmf(edges[1:-1], level),
                            [stats.poisson.sf(hi - 1, level)]])
    observed = np.bincount(np.clip(counts, lo, hi) - lo, minlength=probs.size)
    assert stats.chisquare(observed, counts.size * probs / probs.sum()).pvalue > 0.01


def test_timestamps_noiseless_mean():
    s = preset(1.0).replace(b_lambda=0.0)
    t = sample_timestamps(s, 100_000, substream(2, "ts"))
    assert abs(t.mean() - s.tau) < 3 * s.sigma_t / math.sqrt(t.size)


def test_timestamps_uniform_without_signal():
    s = preset(1.0).replace(alpha=0.0)
    t = sample_timestamps(s, 20_000, substream(2, "u"))
    assert stats.kstest(t, "uniform", args=(0, s.t_r)).pvalue > 0.01


def test_timestamps_mixture_fraction():
    s = preset(5.0)
    t = sample_timestamps(s, 100_000, substream(4, "mix"))
    p_sig = s.signal_energy / (s.signal_energy + s.B)
    expected = p_sig * (stats.norm.cdf(3) - stats.norm.cdf(-3)) + (1 - p_sig) * 6 * s.sigma_t / s.t_r
    observed = np.mean(np.abs(t - s.tau) <= 3 * s.sigma_t)
    sd = math.sqrt(expected * (1 - expected) / t.size)
    assert abs(observed - expected) < 4 * sd


def test_timestamps_match_flux_cdf():
    s = preset(1.0)
    t = np.sort(sample_timestamps(s, 100_000, substream(5, "cdf")))
    lam = s.signal_energy + s.B
    probe = np.linspace(0.01, s.t_r - 0.01, 60)
    model = np.array([integrate(lambda x: flux_at(s, x), 0.0, p, points=[min(s.tau, p)]).value / lam
                      for p in probe])
    empirical = np.searchsorted(t, probe) / t.size
    assert np.max(np.abs(model - empirical)) < 0.01


def test_draw_consistency():
    draw = sample_draw(preset(1.0), substream(0, "d"))
    assert draw.timestamps.size == draw.m
    assert np.all((draw.timestamps >= 0) & (draw.timestamps < 10.0))
    with pytest.raises(ValueError):
        TimestampDraw(2, np.array([1.0]))


def test_first_photon_miss_rate():
    s = preset(5.0)
    grid = SceneGrid.uniform(s, 500, 400)
    frames = simulate_frames(grid, 1, 8).frames
    misses = np.isnan(frames).mean()
    p0 = math.exp(-10)
    assert abs(misses - p0) < 5 * math.sqrt(p0 / frames.size)


def test_first_photon_signal_fraction_with_jitter():
    s = preset(5.0)
    jitter = 0.15
    eff = math.hypot(s.sigma_t, jitter)
    grid = SceneGrid.uniform(s, 400, 250)
    t = simulate_frames(grid, 1, 9, jitter=jitter).frames.ravel()
    t = t[~np.isnan(t)]
    frac = np.mean(np.abs(t - s.tau) <= 4 * eff)
    expected = 5 / 6 * (stats.norm.cdf(4) - stats.norm.cdf(-4)) + 1 / 6 * 8 * eff / s.t_r
    assert abs(frac - expected) < 4 * math.sqrt(expected * (1 - expected) / t.size)


def test_first_photon_noiseless_is_gaussian():
    s = preset(1.0).replace(b_lambda=0.0)
    t = simulate_frames(SceneGrid.uniform(s, 100, 100), 1, 10).frames.ravel()
    t = t[~np.isnan(t)]
    assert stats.kstest(t, "norm", args=(s.tau, s.sigma_t)).pvalue > 0.01


def test_first_photon_scalar_sampler():
    s = preset(1.0)
    rng = substream(0, "fp")
    t = [sample_first_photon(s, rng) for _ in range(3000)]
    assert all(x is not None and 0 <= x < s.t_r for x in t)
    off = s.replace(alpha=0.0, b_lambda=0.0)
    assert sample_first_photon(off, rng) is None


def test_order_statistic_mode_matches_minimum_law():
    # earliest of M ~ Poisson(mu) conditioned on M >= 1 arrivals with CDF F:
    # P(T <= t) = (1 - exp(-mu F(t))) / (1 - exp(-mu))
    s = preset(1.0, photon_level=2.0)
    mu = 2.0
    lam = s.signal_energy + s.B
    rng = substream(1, "os")
    t = np.array([sample_first_photon(s, rng, mode="order_statistic") for _ in range(4000)],
                 dtype=float)
    t = t[~np.isnan(t)]

    def flux_cdf(x):
        x = np.asarray(x, dtype=float)
        pulse = stats.norm.cdf(x, s.tau, s.sigma_t) - stats.norm.cdf(0, s.tau, s.sigma_t)
        return (s.signal_energy * pulse + s.b_lambda * x) / lam

    cdf = lambda x: -np.expm1(-mu * flux_cdf(x)) / -math.expm1(-mu)
    assert stats.kstest(t, cdf).pvalue > 0.01


def test_simulate_frames_deterministic():
    grid = synthetic_grid(preset(1.0), 8, 6, "gradient")
    a = simulate_frames(grid, 4, 123)
    b = simulate_frames(grid, 4, 123)
    c = simulate_frames(grid, 4, 124)
    assert a.frames.tobytes() == b.frames.tobytes()
    assert a.frames.tobytes() != c.frames.tobytes()
    assert a.mask.shape == a.frames.shape


def test_order_statistic_frames_deterministic():
    grid = SceneGrid.uniform(preset(1.0, photon_level=0.5), 3, 3)
    a = simulate_frames(grid, 2, 5, mode="order_statistic")
    b = simulate_frames(grid, 2, 5, mode="order_statistic")
    assert a.frames.tobytes() == b.frames.tobytes()


def test_background_only_frames_uniform():
    s = preset(1.0).replace(alpha=0.0)
    t = simulate_frames(SceneGrid.uniform(s, 100, 50), 2, 3).frames.ravel()
    t = t[~np.isnan(t)]
    assert stats.kstest(t, "uniform", args=(0, s.t_r)).pvalue > 0.01


def test_low_flux_valid_fraction():
    s = preset(1.0, photon_level=0.5)
    stack = simulate_frames(SceneGrid.uniform(s, 100, 100), 3, 4)
    p = 1 - math.exp(-0.5)
    assert abs(stack.valid_fraction() - p) < 5 * math.sqrt(p * (1 - p) / stack.frames.size)
    assert stack.valid_fraction() < 1


def test_valid_timestamps_in_period():
    stack = simulate_frames(synthetic_grid(preset(0.5), 16, 16, "gradient"), 5, 2, jitter=0.3)
    t = stack.frames[stack.mask]
    assert np.all((t >= 0) & (t < 10.0))


def test_tdc_quantisation():
    stack = simulate_frames(SceneGrid.uniform(preset(1.0), 10, 10), 2, 2, tdc_bin=0.05)
    t = stack.frames[stack.mask]
    assert np.allclose((t / 0.05) % 1.0, 0.5)


# -- radiometry ------------------------------------------------------------------

def _hand_alpha(gamma, t_r=None):
    mp = mpmath.mp
    mp.dps = 40
    h, c, lam = mpmath.mpf("6.626e-34"), mpmath.mpf("2.99792458e8"), mpmath.mpf("671e-9")
    e_ph = h * c / lam
    wp = hp = mpmath.mpf("9.2e-6")
    r_km = mpmath.mpf("0.030")
    area = 128 * 192 * wp * hp * (mpmath.mpf(30) / mpmath.mpf("0.025")) ** 2
    f2 = 8 * mpmath.mpf(2) ** 2
    alpha = mpmath.mpf("1.219e-9") / e_ph * mpmath.power(10, -mpmath.mpf("0.7") * 2 * r_km / 10) \
        * gamma / f2 * wp * hp / area
    b_bck = mpmath.mpf("2e-4") / e_ph * mpmath.power(10, -mpmath.mpf("0.7") * r_km / 10) \
        * gamma / f2 * wp * hp * (t_r or 0)
    return float(alpha), float(b_bck)


def test_radiometric_alpha_matches_hand_evaluation():
    gamma = np.array([[0.0, 0.25], [0.5, 1.0]])
    alpha = radiometric_alpha(RadiometricParams(gamma))
    for g, a in zip(gamma.ravel(), alpha.ravel()):
        assert a == pytest.approx(_hand_alpha(mpmath.mpf(g))[0], rel=1e-10, abs=0)
    assert alpha[0, 0] == 0.0


def test_radiometric_alpha_linear_in_reflectance():
    g = np.linspace(0, 0.5, 6)[None]
    assert np.allclose(radiometric_alpha(RadiometricParams(2 * g)),
                       2 * radiometric_alpha(RadiometricParams(g)), rtol=1e-14)


def test_raw_exponent_flag():
    g = np.ones((1, 1))
    cooked = radiometric_alpha(RadiometricParams(g))
    raw = radiometric_alpha(RadiometricParams(g, raw_exponent=True))
    assert raw[0, 0] / cooked[0, 0] == pytest.approx(10 ** (-0.7 * 0.06 * 0.9), rel=1e-12)


def test_background_energy():
    t_r = 1 / 2.25e6
    b_bck, b_dc = background_energy(RadiometricParams(np.array([[0.5]])), t_r)
    assert b_dc == pytest.approx(5.6e-5, rel=1e-12)
    assert b_bck[0, 0] == pytest.approx(_hand_alpha(mpmath.mpf("0.5"), mpmath.mpf(1) / mpmath.mpf("2.25e6"))[1],
                                        rel=1e-10)
    b_bck, _ = background_energy(RadiometricParams(np.array([[0.5]]), w_bck=0.0), t_r)
    assert b_bck[0, 0] == 0.0


def test_grid_from_radiometry():
    gamma = np.full((4, 5), 0.6)
    depth = np.full((4, 5), 30.0)
    acq = default_sensor_acquisition()
    grid = grid_from_radiometry(RadiometricParams(gamma), depth, acq)
    b_bck, b_dc = background_energy(RadiometricParams(gamma), acq.t_r)
    assert np.allclose(grid.b_lambda * acq.t_r, acq.eta * b_bck + b_dc)
    assert np.allclose(grid.tau, 2 * 30.0 / 2.99792458e8)
    assert acq.n_r == 2250


def test_radiometric_params_validated():
    with pytest.raises(ValueError):
        RadiometricParams(np.array([[1.5]]))
    with pytest.raises(ValueError):
        RadiometricParams(np.array([[0.5]]), e0=0.0)
