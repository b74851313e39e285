import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splidar.crlb import (cauchy_schwarz_certificate, crlb_count, crlb_count_sbr_form,
                          crlb_report, crlb_timestamp, gaussian_energy_squared, pulse_truncation,
                          timestamp_information, verify_bound_ordering)
from splidar.model import AcquisitionConfig, PixelScene, PulseShape
from splidar.quadrature import QuadratureConfig

from conftest import noiseless, preset

GRID = (0.5, 1.0, 2.0, 5.0, 10.0)


def mp_timestamp_bound(scene):
    """Independent high-precision evaluation of the timestamp bound."""
    mpmath.mp.dps = 30
    S, sig, tau = mpmath.mpf(scene.S), mpmath.mpf(scene.sigma_t), mpmath.mpf(scene.tau)
    ea, b = mpmath.mpf(scene.eta) * mpmath.mpf(scene.alpha), mpmath.mpf(scene.b_lambda)

    def f(t):
        s = S / (sig * mpmath.sqrt(2 * mpmath.pi)) * mpmath.exp(-(t - tau) ** 2 / (2 * sig ** 2))
        return s * s / (ea * s + b)

    knots = [0] + [tau + k * sig for k in range(-10, 11)] + [scene.t_r]
    info = mpmath.quad(f, knots)
    return float(1 / (scene.n_r * mpmath.mpf(scene.eta) ** 2 * info))


def test_count_bound_example():
    s = PixelScene(0.5, 4.0, 0.0005, PulseShape(0.01, 0.2), AcquisitionConfig(10.0, 1000, 1.0))
    assert crlb_count(s) == pytest.approx(0.1, rel=1e-12)


def test_count_bound_noiseless_and_scaling():
    s = noiseless()
    assert crlb_count(s) == pytest.approx(s.alpha / (s.n_r * s.eta * s.S), rel=1e-14)
    s = preset(2.0)
    doubled = s.replace(acq=AcquisitionConfig(s.t_r, 2 * s.n_r, s.eta))
    assert crlb_count(doubled) == pytest.approx(crlb_count(s) / 2, rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100), st.floats(0.05, 5))
def test_count_bound_forms_agree(ratio, alpha):
    s = preset(ratio, alpha=alpha)
    assert crlb_count_sbr_form(s) == pytest.approx(crlb_count(s), rel=1e-12)


@pytest.mark.parametrize("sbr", GRID)
def test_timestamp_bound_matches_independent_quadrature(sbr):
    s = preset(sbr)
    assert crlb_timestamp(s) == pytest.approx(mp_timestamp_bound(s), rel=1e-6)


def test_timestamp_bound_noiseless_equals_count_bound():
    s = noiseless()
    assert crlb_timestamp(s) == pytest.approx(s.alpha / (s.n_r * s.eta * s.S), rel=1e-9)


def test_timestamp_bound_small_alpha_limit():
    base = preset(1.0)
    s = base.replace(alpha=1e-9)
    limit = s.b_lambda / (s.n_r * s.eta ** 2 * gaussian_energy_squared(s))
    assert crlb_timestamp(s) == pytest.approx(limit, rel=1e-6)


def test_gaussian_energy_squared_matches_quadrature():
    s = preset(1.0)
    f = lambda t: float(s.S ** 2 / (2 * math.pi * s.sigma_t ** 2)) * mpmath.exp(-(t - s.tau) ** 2 / s.sigma_t ** 2)
    assert gaussian_energy_squared(s) == pytest.approx(float(mpmath.quad(f, [-mpmath.inf, s.tau, mpmath.inf])),
                                                       rel=1e-12)


def test_bound_ordering_on_grid():
    scenes = [preset(x) for x in GRID] + [noiseless()]
    checks = verify_bound_ordering(scenes)
    assert all(c.ok for c in checks), [c.reason for c in checks]
    ratios = [c.report.ratio for c in checks]
    assert all(r < 1 for r in ratios[:-1])
    assert abs(ratios[-1] - 1) <= 1e-9
    # lower SBR, larger advantage for timestamps
    assert all(a < b for a, b in zip(ratios[:-2], ratios[1:-1]))


def test_bound_ordering_flags_unresolved_gap():
    # a loose quadrature tolerance cannot certify the tiny gap at huge SBR
    s = preset(1e7)
    check = verify_bound_ordering([s], QuadratureConfig(rel_tol=1e-3))[0]
    assert not check.ok


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 50), st.floats(0.05, 3), st.floats(2.0, 8.0), st.floats(0.05, 0.4))
def test_cauchy_schwarz_certificate(ratio, alpha, tau, sigma):
    s = preset(ratio, alpha=alpha, tau=tau, sigma_t=sigma)
    assert cauchy_schwarz_certificate(s) >= 1 - 1e-9
    assert crlb_timestamp(s) <= crlb_count(s) * (1 + 1e-9)


def test_certificate_is_one_without_noise():
    assert cauchy_schwarz_certificate(noiseless()) == pytest.approx(1.0, abs=1e-9)


def test_report_fields():
    s = preset(1.0)
    rep = crlb_report(s)
    assert rep.converged and rep.quad_error >= 0
    assert rep.ratio == pytest.approx(rep.crlb_timestamp / rep.crlb_count)
    assert rep.sbr == pytest.approx(1.0)
    assert rep.truncation < 1e-20
    assert pulse_truncation(s.replace(tau=0.2)) == pytest.approx(0.5 * math.erfc(1 / math.sqrt(2)), rel=1e-9)


def test_information_undefined_without_flux():
    s = noiseless().replace(alpha=0.0)
    with pytest.raises(ValueError):
        timestamp_information(s)


def test_nonconvergence_reported_in_report():
    rep = crlb_report(preset(1.0), QuadratureConfig(rel_tol=1e-15, max_subdivisions=1))
    assert not rep.converged
    assert verify_bound_ordering([preset(1.0)], QuadratureConfig(rel_tol=1e-15, max_subdivisions=1))[0].ok is False
