import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splidar.model import (SPEED_OF_LIGHT, AcquisitionConfig, PixelScene, PulseShape, SceneGrid,
                           TruncatedPulseWarning, flux_at, pulse_value, sbr,
                           scene_from_constraints, total_energy)
from splidar.quadrature import integrate

from conftest import preset


def scene_with(alpha=0.5, tau=4.0, b=0.0005, S=0.01, sigma=0.2, t_r=10.0, n_r=1000, eta=1.0):
    return PixelScene(alpha, tau, b, PulseShape(S, sigma), AcquisitionConfig(t_r, n_r, eta))


def test_pulse_value_examples():
    p = PulseShape(1.0, 0.2)
    assert pulse_value(p, 0.0) == pytest.approx(1 / (0.2 * math.sqrt(2 * math.pi)), rel=1e-12)
    assert pulse_value(p, 0.2) == pulse_value(p, -0.2)
    assert pulse_value(PulseShape(2.0, 0.2), 0.0) == 2 * pulse_value(p, 0.0)


def test_pulse_integrates_to_energy():
    p = PulseShape(3.0, 0.2)
    assert integrate(lambda t: pulse_value(p, t), -5, 5, points=[0.0]).value == pytest.approx(3.0, rel=1e-9)


def test_flux_examples():
    s = scene_with(alpha=0.0)
    assert flux_at(s, 3.3) == s.b_lambda
    s = scene_with(b=0.0, alpha=0.7, eta=0.5, S=2.0)
    assert flux_at(s, s.tau) == pytest.approx(0.5 * 0.7 * 2.0 / (0.2 * math.sqrt(2 * math.pi)))


def test_flux_rejects_out_of_range():
    s = scene_with()
    with pytest.raises(ValueError):
        flux_at(s, 10.0)
    with pytest.raises(ValueError):
        flux_at(s, -0.1)


def test_flux_quadrature_matches_total_energy():
    s = scene_with()
    res = integrate(lambda t: flux_at(s, t), 0.0, s.t_r, points=[s.tau])
    assert res.value == pytest.approx(total_energy(s), rel=1e-9)


def test_total_energy_examples():
    assert total_energy(scene_with(alpha=0.5, S=0.01, b=0.0005, t_r=10)) == pytest.approx(0.01)
    assert total_energy(scene_with(alpha=0.0)) == pytest.approx(0.0005 * 10)
    assert total_energy(scene_with(b=0.0, S=1.0)) == 0.5


def test_total_energy_warns_on_truncated_pulse():
    with pytest.warns(TruncatedPulseWarning):
        total_energy(scene_with(tau=0.5))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        total_energy(scene_with(tau=4.0))


def test_sbr_examples():
    assert sbr(scene_with(alpha=0.5, S=0.01, b=0.0005)) == pytest.approx(1.0)
    assert sbr(scene_with(alpha=0.0)) == 0.0
    assert sbr(scene_with(b=0.0)) == math.inf
    # the other convention drops eta*alpha
    assert sbr(scene_with(alpha=0.5, S=0.01, b=0.0005), "pulse") == pytest.approx(2.0)


def test_scene_from_constraints_examples():
    acq = AcquisitionConfig(10.0, 1000, 1.0)
    s = scene_from_constraints(10, 1, 0.5, 4.0, acq, 0.2)
    assert s.eta * s.alpha * s.S == pytest.approx(0.005, rel=1e-12)
    assert s.B == pytest.approx(0.005, rel=1e-12)
    assert s.S == pytest.approx(0.01, rel=1e-12)
    assert s.b_lambda == pytest.approx(0.0005, rel=1e-12)
    s = scene_from_constraints(10, 5, 0.5, 4.0, acq, 0.2)
    assert s.eta * s.alpha * s.S == pytest.approx(0.01 * 5 / 6, rel=1e-12)
    assert s.B == pytest.approx(0.01 / 6, rel=1e-12)


def test_scene_from_constraints_rejects_infeasible():
    acq = AcquisitionConfig(10.0, 1000, 1.0)
    for args in ((0, 1, 0.5), (10, 0, 0.5), (10, 1, 0.0)):
        with pytest.raises(ValueError):
            scene_from_constraints(*args, 4.0, acq, 0.2)


@settings(max_examples=60, deadline=None)
@given(level=st.floats(0.1, 100), ratio=st.floats(0.01, 100), alpha=st.floats(0.01, 5),
       n_r=st.integers(1, 10_000), eta=st.floats(0.05, 1.0),
       convention=st.sampled_from(["signal", "pulse"]))
def test_scene_from_constraints_round_trip(level, ratio, alpha, n_r, eta, convention):
    s = scene_from_constraints(level, ratio, alpha, 4.0, AcquisitionConfig(10.0, n_r, eta), 0.2,
                               convention)
    assert sbr(s, convention) == pytest.approx(ratio, rel=1e-12)
    assert s.n_r * (s.signal_energy + s.B) == pytest.approx(level, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(ratio=st.floats(0.1, 20), tau=st.floats(1.0, 9.0))
def test_flux_bounded_below_and_peaks_at_tau(ratio, tau):
    s = preset(ratio, tau=tau)
    grid = np.linspace(0, s.t_r, 20001, endpoint=False)
    values = flux_at(s, grid)
    assert np.all(values >= s.b_lambda)
    assert abs(grid[np.argmax(values)] - tau) <= grid[1] - grid[0]


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        PulseShape(0.0, 0.2)
    with pytest.raises(ValueError):
        AcquisitionConfig(10.0, 0, 1.0)
    with pytest.raises(ValueError):
        AcquisitionConfig(10.0, 10, 1.5)
    with pytest.raises(ValueError):
        scene_with(tau=10.0)
    with pytest.raises(ValueError):
        scene_with(alpha=-1.0)


def test_depth_uses_speed_of_light():
    s = scene_with(tau=4.0)
    assert s.depth == pytest.approx(SPEED_OF_LIGHT * 4.0 / 2)


def test_scene_grid_checks_shapes_and_pixels():
    s = preset(1.0)
    grid = SceneGrid.uniform(s, 3, 2)
    assert (grid.height, grid.width) == (2, 3)
    assert grid.pixel(1, 2) == s
    assert np.allclose(grid.expected_counts(), 10.0)
    with pytest.raises(ValueError):
        SceneGrid(np.zeros((2, 2)), np.full((2, 3), 4.0), np.zeros((2, 2)), s.pulse, s.acq)
