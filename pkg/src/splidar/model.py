"""Photon-flux model for a single-return SPAD pixel.

The arrival rate seen by a pixel is a Gaussian pulse of energy ``S`` and
width ``sigma_t`` scaled by quantum efficiency and reflectivity, delayed by
the round-trip time ``tau``, on top of a constant background rate::

    flux(t) = eta * alpha * s(t - tau) + b_lambda

Integrating over one repetition period gives the per-cycle energy
``Lambda = eta * alpha * S + B`` with ``B = b_lambda * t_r``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8  # m/s
SUPPORT_SIGMAS = 5.0

SBR_CONVENTIONS = ("signal", "pulse")


class TruncatedPulseWarning(UserWarning):
    """The pulse is not effectively supported inside ``[0, t_r)``."""


@dataclass(frozen=True)
class PulseShape:
    energy: float
    sigma_t: float

    def __post_init__(self):
        if not self.energy > 0:
            raise ValueError(f"pulse energy must be positive, got {self.energy}")
        if not self.sigma_t > 0:
            raise ValueError(f"pulse width must be positive, got {self.sigma_t}")


@dataclass(frozen=True)
class AcquisitionConfig:
    t_r: float
    n_r: int
    eta: float = 1.0

    def __post_init__(self):
        if not self.t_r > 0:
            raise ValueError(f"repetition period must be positive, got {self.t_r}")
        if int(self.n_r) != self.n_r or self.n_r < 1:
            raise ValueError(f"n_r must be a positive integer, got {self.n_r}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")


@dataclass(frozen=True)
class PixelScene:
    """Ground-truth physics of one pixel plus the acquisition constants."""

    alpha: float
    tau: float
    b_lambda: float
    pulse: PulseShape
    acq: AcquisitionConfig

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.tau < self.acq.t_r:
            raise ValueError(f"tau must lie in (0, t_r={self.acq.t_r}), got {self.tau}")
        if not self.b_lambda >= 0:
            raise ValueError(f"b_lambda must be >= 0, got {self.b_lambda}")

    # shorthand used throughout the estimators
    @property
    def eta(self):
        return self.acq.eta

    @property
    def n_r(self):
        return self.acq.n_r

    @property
    def t_r(self):
        return self.acq.t_r

    @property
    def sigma_t(self):
        return self.pulse.sigma_t

    @property
    def S(self):
        return self.pulse.energy

    @property
    def B(self):
        """Background energy per cycle."""
        return self.b_lambda * self.acq.t_r

    @property
    def signal_energy(self):
        return self.acq.eta * self.alpha * self.pulse.energy

    @property
    def depth(self):
        return SPEED_OF_LIGHT * self.tau / 2.0

    def fully_supported(self):
        margin = SUPPORT_SIGMAS * self.pulse.sigma_t
        return margin <= self.tau <= self.acq.t_r - margin

    def replace(self, **changes):
        values = dict(alpha=self.alpha, tau=self.tau, b_lambda=self.b_lambda,
                      pulse=self.pulse, acq=self.acq)
        values.update(changes)
        return PixelScene(**values)


@dataclass(frozen=True)
class SceneGrid:
    """Per-pixel maps sharing one pulse and acquisition setup.

    Maps are indexed ``[row, col]`` with shape ``(height, width)``.
    """

    alpha: np.ndarray
    tau: np.ndarray
    b_lambda: np.ndarray
    pulse: PulseShape
    acq: AcquisitionConfig
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        maps = [np.array(m, dtype=float) for m in (self.alpha, self.tau, self.b_lambda)]
        shape = maps[0].shape
        if len(shape) != 2 or min(shape) < 1:
            raise ValueError(f"maps must be non-empty 2-D arrays, got shape {shape}")
        if any(m.shape != shape for m in maps):
            raise ValueError("alpha, tau and b_lambda maps must share dimensions")
        alpha, tau, b = maps
        if np.any(~(alpha >= 0)) or np.any(~(b >= 0)):
            raise ValueError("alpha and b_lambda maps must be nonnegative")
        if np.any(~((tau > 0) & (tau < self.acq.t_r))):
            raise ValueError("tau map must lie in (0, t_r)")
        for m in maps:
            m.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "b_lambda", b)

    @property
    def height(self):
        return self.alpha.shape[0]

    @property
    def width(self):
        return self.alpha.shape[1]

    def pixel(self, row, col):
        return PixelScene(float(self.alpha[row, col]), float(self.tau[row, col]),
                          float(self.b_lambda[row, col]), self.pulse, self.acq)

    def expected_counts(self):
        """Mean detections per frame, ``N_r * Lambda``, per pixel."""
        lam = self.acq.eta * self.alpha * self.pulse.energy + self.b_lambda * self.acq.t_r
        return self.acq.n_r * lam

    @classmethod
    def uniform(cls, scene: PixelScene, width: int, height: int):
        shape = (height, width)
        return cls(np.full(shape, scene.alpha), np.full(shape, scene.tau),
                   np.full(shape, scene.b_lambda), scene.pulse, scene.acq)


def pulse_value(pulse: PulseShape, t):
    """Gaussian pulse ``S * N(t; 0, sigma_t^2)``."""
    t = np.asarray(t, dtype=float)
    sig = pulse.sigma_t
    out = pulse.energy / (sig * math.sqrt(2.0 * math.pi)) * np.exp(-0.5 * (t / sig) ** 2)
    return out if out.ndim else float(out)


def log_pulse_value(pulse: PulseShape, t):
    t = np.asarray(t, dtype=float)
    sig = pulse.sigma_t
    return math.log(pulse.energy) - math.log(sig * math.sqrt(2.0 * math.pi)) - 0.5 * (t / sig) ** 2


def flux_at(scene: PixelScene, t):
    """Instantaneous photon rate at times ``t`` in ``[0, t_r)``."""
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t >= scene.t_r)):
        raise ValueError(f"t must lie in [0, {scene.t_r})")
    out = scene.eta * scene.alpha * pulse_value(scene.pulse, t - scene.tau) + scene.b_lambda
    return out if np.ndim(out) else float(out)


def total_energy(scene: PixelScene):
    """Per-cycle energy ``eta*alpha*S + b_lambda*t_r``.

    Warns with :class:`TruncatedPulseWarning` when ``tau`` sits closer than
    five pulse widths to either end of the period; the value is returned
    regardless.
    """
    if not scene.fully_supported():
        warnings.warn(
            f"pulse at tau={scene.tau} is not fully supported in [0, {scene.t_r})",
            TruncatedPulseWarning, stacklevel=2)
    return scene.signal_energy + scene.B


def sbr(scene: PixelScene, convention: str = "signal"):
    """Signal-to-background ratio.

    ``convention="signal"`` gives ``eta*alpha*S / B``; ``"pulse"`` gives
    ``S / B``. A noiseless scene returns ``math.inf``.
    """
    if convention not in SBR_CONVENTIONS:
        raise ValueError(f"unknown SBR convention {convention!r}")
    num = scene.signal_energy if convention == "signal" else scene.S
    if scene.B == 0:
        return math.inf if num > 0 else math.nan
    return num / scene.B


def scene_from_constraints(photon_level, sbr, alpha, tau, acq: AcquisitionConfig,
                           sigma_t, convention="signal"):
    """Build a scene whose photons per frame and SBR hit the given targets.

    Solves ``eta*alpha*S + B = photon_level / N_r`` together with the SBR
    definition for the pulse energy ``S`` and background rate ``B / t_r``.
    """
    if not photon_level > 0:
        raise ValueError(f"photon_level must be positive, got {photon_level}")
    if not sbr > 0:
        raise ValueError(f"sbr must be positive, got {sbr}")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    per_cycle = photon_level / acq.n_r
    if convention == "signal":
        background = per_cycle / (1.0 + sbr)
        energy = (per_cycle - background) / (acq.eta * alpha)
    elif convention == "pulse":
        # S = sbr * B  and  eta*alpha*S + B = per_cycle
        background = per_cycle / (1.0 + acq.eta * alpha * sbr)
        energy = sbr * background
    else:
        raise ValueError(f"unknown SBR convention {convention!r}")
    if not (energy > 0 and background > 0):
        raise ValueError("constraints have no positive solution")
    return PixelScene(alpha=alpha, tau=tau, b_lambda=background / acq.t_r,
                      pulse=PulseShape(energy, sigma_t), acq=acq)


def scene_from_background(photon_level, b_lambda, alpha, tau, acq: AcquisitionConfig, sigma_t):
    """Like :func:`scene_from_constraints` but with the background rate fixed."""
    if not (photon_level > 0 and alpha > 0 and b_lambda >= 0):
        raise ValueError("photon_level and alpha must be positive, b_lambda nonnegative")
    signal = photon_level / acq.n_r - b_lambda * acq.t_r
    if not signal > 0:
        raise ValueError("background alone exceeds the requested photon level")
    return PixelScene(alpha=alpha, tau=tau, b_lambda=b_lambda,
                      pulse=PulseShape(signal / (acq.eta * alpha), sigma_t), acq=acq)
