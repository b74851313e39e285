"""Monte Carlo photon-timestamp generation.

Two acquisition modes are covered:

* all-detection mode, where every photon in ``N_r`` cycles is time-tagged
  (:func:`sample_count` + :func:`sample_timestamps`);
* sensor mode, where each exposure keeps only one timestamp per pixel
  (:func:`sample_first_photon`, :func:`simulate_frames`).

Also holds the radiometric model that turns a reflectance/depth map and
sensor constants into per-pixel reflectivity and background energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .model import (SPEED_OF_LIGHT, AcquisitionConfig, PixelScene, PulseShape, SceneGrid,
                    total_energy)
from .rng import philox_uniform, substream

FIRST_PHOTON_MODES = ("mixture", "order_statistic")
_MAX_REDRAWS = 1000


@dataclass(frozen=True)
class TimestampDraw:
    m: int
    timestamps: np.ndarray

    def __post_init__(self):
        if len(self.timestamps) != self.m:
            raise ValueError("timestamp count does not match m")


@dataclass(frozen=True)
class FrameStack:
    """First-photon frames ``(n_frames, height, width)``; NaN marks no detection."""

    frames: np.ndarray
    scene: SceneGrid
    seed: int
    jitter: float = 0.0
    mode: str = "mixture"
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def mask(self):
        return ~np.isnan(self.frames)

    @property
    def n_frames(self):
        return self.frames.shape[0]

    def valid_fraction(self):
        return float(self.mask.mean())


# -- all-detection mode ------------------------------------------------------

def sample_count(scene: PixelScene, rng: np.random.Generator) -> int:
    """Number of detections over ``N_r`` cycles, Poisson with mean ``N_r * Lambda``."""
    mean = scene.n_r * total_energy(scene)
    return int(rng.poisson(mean)) if mean > 0 else 0


def _signal_times(tau, sigma, jitter, t_r, n, rng):
    """``n`` draws of tau + pulse + jitter offsets, truncated to ``[0, t_r)`` by rejection."""
    out = np.empty(n)
    todo = np.arange(n)
    for _ in range(_MAX_REDRAWS):
        if todo.size == 0:
            return out
        t = tau + sigma * rng.standard_normal(todo.size)
        if jitter:
            t += jitter * rng.standard_normal(todo.size)
        ok = (t >= 0) & (t < t_r)
        out[todo[ok]] = t[ok]
        todo = todo[~ok]
    raise RuntimeError("signal rejection sampling did not terminate")


def sample_timestamps(scene: PixelScene, m: int, rng: np.random.Generator) -> np.ndarray:
    """``m`` i.i.d. timestamps from the normalized flux on ``[0, t_r)``."""
    return _mixture_times(scene, m, rng, 0.0)


def _mixture_times(scene, m, rng, jitter):
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return np.empty(0)
    lam = scene.signal_energy + scene.B
    if lam <= 0:
        raise ValueError("cannot draw timestamps from a zero-rate process")
    is_signal = rng.random(m) < scene.signal_energy / lam
    t = rng.random(m) * scene.t_r
    n_sig = int(is_signal.sum())
    if n_sig:
        t[is_signal] = _signal_times(scene.tau, scene.sigma_t, jitter, scene.t_r, n_sig, rng)
    return t


def sample_draw(scene: PixelScene, rng: np.random.Generator) -> TimestampDraw:
    m = sample_count(scene, rng)
    return TimestampDraw(m, sample_timestamps(scene, m, rng))


# -- sensor (first-photon) mode ------------------------------------------------

def _first_photon_core(mean, p_sig, tau, sigma_t, jitter, t_r, uniforms):
    """Vectorised first-photon draw.

    ``uniforms(k)`` returns the ``k``-th pair of U(0,1) arrays for the batch.
    Pair 0 decides detection and the signal/noise branch, pair 1 the noise
    time, pairs 2.. feed Box-Muller for pulse and jitter offsets.
    """
    u_det, u_branch = uniforms(0)
    detected = u_det >= np.exp(-mean)
    signal = detected & (u_branch < p_sig)
    u_noise, _ = uniforms(1)
    t = np.where(detected, u_noise * t_r, np.nan)

    todo = signal.copy()
    k = 2
    while todo.any():
        if k - 2 >= _MAX_REDRAWS:
            raise RuntimeError("signal rejection sampling did not terminate")
        u1, u2 = uniforms(k)
        radius = np.sqrt(-2.0 * np.log(u1))
        z_pulse = radius * np.cos(2.0 * np.pi * u2)
        z_jit = radius * np.sin(2.0 * np.pi * u2)
        cand = tau + sigma_t * z_pulse + jitter * z_jit
        ok = todo & (cand >= 0) & (cand < t_r)
        t = np.where(ok, cand, t)
        todo &= ~ok
        k += 1
    return t


def _quantize(t, tdc_bin, t_r):
    if not tdc_bin:
        return t
    q = (np.floor(t / tdc_bin) + 0.5) * tdc_bin
    return np.minimum(q, np.nextafter(t_r, 0))


def sample_first_photon(scene: PixelScene, rng: np.random.Generator, jitter: float = 0.0,
                        mode: str = "mixture") -> Optional[float]:
    """One exposure of a first-photon sensor; ``None`` when nothing was detected.

    ``mode="mixture"`` draws the recorded time from the signal/noise mixture
    directly. ``mode="order_statistic"`` draws the detection count and keeps the
    earliest of that many arrivals.
    """
    mean = scene.n_r * total_energy(scene)
    if mode == "order_statistic":
        return _first_photon_min(scene, mean, jitter, rng)
    if mode != "mixture":
        raise ValueError(f"unknown first-photon mode {mode!r}")
    lam = scene.signal_energy + scene.B
    p_sig = scene.signal_energy / lam if lam > 0 else 0.0
    t = _first_photon_core(mean, p_sig, scene.tau, scene.sigma_t, jitter, scene.t_r,
                           lambda k: (rng.random(), rng.random()))
    t = float(t)
    return None if math.isnan(t) else t


def _first_photon_min(scene, mean, jitter, rng):
    if mean <= 0:
        return None
    u = rng.random()
    p0 = math.exp(-mean)
    if u < p0:
        return None
    # count conditioned on at least one detection, by inverse CDF
    m = int(stats.poisson.ppf(p0 + (1.0 - p0) * rng.random(), mean))
    m = max(m, 1)
    return float(_mixture_times(scene, m, rng, jitter).min())


def simulate_frames(grid: SceneGrid, n_frames: int, seed: int, jitter: float = 0.0,
                    mode: str = "mixture", tdc_bin: float = 0.0) -> FrameStack:
    """First-photon frame stack for a static scene.

    Each pixel of each frame consumes its own counter-based sub-stream keyed by
    ``(seed, frame, row, col)``, so the result does not depend on how the work is
    split or ordered.
    """
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    if mode not in FIRST_PHOTON_MODES:
        raise ValueError(f"unknown first-photon mode {mode!r}")
    h, w = grid.height, grid.width
    mean = grid.expected_counts()
    sig = grid.acq.eta * grid.alpha * grid.pulse.energy
    lam = sig + grid.b_lambda * grid.acq.t_r
    p_sig = np.divide(sig, lam, out=np.zeros_like(sig), where=lam > 0)
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    frames = np.empty((n_frames, h, w))
    for f in range(n_frames):
        if mode == "mixture":
            frames[f] = _first_photon_core(
                mean, p_sig, grid.tau, grid.pulse.sigma_t, jitter, grid.acq.t_r,
                lambda k, f=f: philox_uniform(seed, "first-photon", f, rows, cols, k))
        else:
            for r in range(h):
                for c in range(w):
                    rng = substream(seed, "first-photon-min", f, r, c)
                    t = sample_first_photon(grid.pixel(r, c), rng, jitter, mode)
                    frames[f, r, c] = np.nan if t is None else t
        frames[f] = _quantize(frames[f], tdc_bin, grid.acq.t_r)
    frames.setflags(write=False)
    return FrameStack(frames, grid, int(seed), float(jitter), mode)


# -- radiometry ----------------------------------------------------------------

@dataclass(frozen=True)
class RadiometricParams:
    """Sensor and scene constants for converting reflectance to photon budgets.

    Defaults reproduce a 192x128 SPAD camera at 30 m with a 671 nm laser.
    ``a_illum=None`` means the sensor footprint projected to the target range
    through a lens of focal length ``focal_length``.
    """

    gamma: np.ndarray
    e0: float = 1.219e-9
    wavelength: float = 671e-9
    planck: float = 6.626e-34
    alpha_atm: float = 0.7          # dB/km
    range_m: float = 30.0
    f_number: float = 2.0
    pixel_width: float = 9.2e-6
    pixel_height: float = 9.2e-6
    a_illum: Optional[float] = None
    w_bck: float = 2e-4
    c_dc: float = 126.0
    sigma_j: float = 220e-12
    sensor_shape: tuple = (128, 192)
    focal_length: float = 25e-3
    raw_exponent: bool = False

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        if np.any(~((g >= 0) & (g <= 1))):
            raise ValueError("reflectance map must lie in [0, 1]")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        for name in ("e0", "wavelength", "planck", "range_m", "f_number", "pixel_width",
                     "pixel_height", "focal_length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("alpha_atm", "w_bck", "c_dc", "sigma_j"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.a_illum is not None and not self.a_illum > 0:
            raise ValueError("a_illum must be positive")

    @property
    def photon_energy(self):
        return self.planck * SPEED_OF_LIGHT / self.wavelength

    @property
    def illuminated_area(self):
        if self.a_illum is not None:
            return self.a_illum
        rows, cols = self.sensor_shape
        magnification = self.range_m / self.focal_length
        return rows * cols * self.pixel_width * self.pixel_height * magnification ** 2

    def transmission(self, passes):
        """Atmospheric power transmission over ``passes`` times the range."""
        exponent = self.alpha_atm * passes * self.range_m / 1000.0
        if not self.raw_exponent:
            exponent /= 10.0
        return 10.0 ** (-exponent)


def radiometric_alpha(params: RadiometricParams):
    """Per-pixel reflectivity (signal photons per pulse) from the reflectance map."""
    return (params.e0 / params.photon_energy
            * params.transmission(2) * params.gamma / (8.0 * params.f_number ** 2)
            * params.pixel_width * params.pixel_height / params.illuminated_area)


def background_energy(params: RadiometricParams, t_r: float):
    """Ambient photons per cycle per pixel and dark counts per cycle."""
    b_bck = (params.w_bck / params.photon_energy
             * params.transmission(1) * params.gamma / (8.0 * params.f_number ** 2)
             * params.pixel_width * params.pixel_height * t_r)
    return b_bck, params.c_dc * t_r


def grid_from_radiometry(params: RadiometricParams, depth_map, acq: AcquisitionConfig,
                         sigma_t: float = 1e-9):
    """SceneGrid with a unit-energy pulse from reflectance and depth (metres) maps."""
    depth_map = np.asarray(depth_map, dtype=float)
    if depth_map.shape != params.gamma.shape:
        raise ValueError("depth and reflectance maps must share dimensions")
    b_bck, b_dc = background_energy(params, acq.t_r)
    b_total = acq.eta * b_bck + b_dc
    return SceneGrid(alpha=radiometric_alpha(params), tau=2.0 * depth_map / SPEED_OF_LIGHT,
                     b_lambda=b_total / acq.t_r, pulse=PulseShape(1.0, sigma_t), acq=acq,
                     meta={"source": "radiometric"})


def default_sensor_acquisition():
    """2.25 MHz laser, 1 ms exposure, 18 % efficiency."""
    t_r = 1.0 / 2.25e6
    return AcquisitionConfig(t_r=t_r, n_r=int(round(1000e-6 / t_r)), eta=0.18)
