"""Cramér-Rao bounds for the two reflectivity estimators.

The count-only estimator has the closed-form bound
``(eta*S*alpha + B) / (N_r * eta^2 * S^2)``. The timestamp estimator's Fisher
information needs the integral of ``s^2 / (eta*alpha*s + b_lambda)`` over one
period, done here by adaptive quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .model import PixelScene, log_pulse_value, sbr as scene_sbr
from .quadrature import QuadratureConfig, QuadratureError, integrate


@dataclass(frozen=True)
class CrlbReport:
    crlb_count: float
    crlb_timestamp: float
    ratio: float
    quad_error: float
    truncation: float
    sbr: float
    b_lambda: float
    converged: bool = True


def crlb_count(scene: PixelScene):
    """Variance bound for the count-only reflectivity estimator."""
    return (scene.eta * scene.S * scene.alpha + scene.B) / (scene.n_r * scene.eta ** 2 * scene.S ** 2)


def crlb_count_sbr_form(scene: PixelScene):
    """Same bound written as ``(1 + 1/SBR) / (N_r * eta*S/alpha)``."""
    inv_sbr = scene.B / (scene.eta * scene.alpha * scene.S)
    return (1.0 + inv_sbr) / (scene.n_r * scene.eta * scene.S / scene.alpha)


def _information_integrand(scene: PixelScene):
    def f(t):
        # s^2 / (eta*alpha*s + b), with s evaluated in the log domain
        log_s = log_pulse_value(scene.pulse, np.asarray(t) - scene.tau)
        s = np.exp(log_s)
        if scene.b_lambda == 0:
            return s / (scene.eta * scene.alpha)
        return s * s / (scene.eta * scene.alpha * s + scene.b_lambda)
    return f


def timestamp_information(scene: PixelScene, quad: QuadratureConfig = QuadratureConfig()):
    """``(integral, error)`` of ``s^2/(eta*alpha*s + b_lambda)`` over ``[0, t_r]``."""
    if scene.alpha == 0 and scene.b_lambda == 0:
        raise ValueError("information integral undefined for alpha = b_lambda = 0")
    sig = scene.sigma_t
    points = [scene.tau + k * sig for k in (-8, -4, -2, 0, 2, 4, 8)]
    res = integrate(_information_integrand(scene), 0.0, scene.t_r, quad, points)
    if not res.converged:
        raise QuadratureError(f"quadrature did not converge (error {res.error:.3g})",
                              res.value, res.error)
    return res.value, res.error


def crlb_timestamp(scene: PixelScene, quad: QuadratureConfig = QuadratureConfig()):
    """Variance bound for the timestamp reflectivity estimator (delay known)."""
    value, _ = timestamp_information(scene, quad)
    return 1.0 / (scene.n_r * scene.eta ** 2 * value)


def pulse_truncation(scene: PixelScene):
    """Pulse mass falling outside ``[0, t_r]``."""
    sig = scene.sigma_t
    inside = ndtr((scene.t_r - scene.tau) / sig) - ndtr(-scene.tau / sig)
    return float(1.0 - inside)


def crlb_report(scene: PixelScene, quad: QuadratureConfig = QuadratureConfig(),
                convention="signal"):
    count = crlb_count(scene)
    try:
        info, err = timestamp_information(scene, quad)
        converged = True
    except QuadratureError as exc:
        info, err, converged = exc.value, exc.error, False
    ts = 1.0 / (scene.n_r * scene.eta ** 2 * info)
    # propagate the absolute integral error to the bound
    ts_err = ts * err / info
    return CrlbReport(count, ts, ts / count, ts_err, pulse_truncation(scene),
                      scene_sbr(scene, convention), scene.b_lambda, converged)


def cauchy_schwarz_certificate(scene: PixelScene, quad: QuadratureConfig = QuadratureConfig()):
    """``(integral of g^2/(eta*S*alpha*g + b)) * (eta*S*alpha + B)`` for unit-energy ``g``.

    Never below one; equal to one exactly when ``b_lambda = 0``.
    """
    info, _ = timestamp_information(scene, quad)
    # s = S*g, so the integral in g is S^2 smaller than the one in s
    return info / scene.S ** 2 * (scene.eta * scene.S * scene.alpha + scene.B)


@dataclass(frozen=True)
class BoundCheck:
    scene: PixelScene
    report: CrlbReport
    ok: bool
    reason: str


def verify_bound_ordering(scenes, quad: QuadratureConfig = QuadratureConfig(),
                          equality_rtol=1e-9):
    """Check that the timestamp bound never exceeds the count bound.

    Noisy scenes must show a strict gap larger than ten times the quadrature
    tolerance; noiseless scenes must give equal bounds to ``equality_rtol``.
    """
    checks = []
    for scene in scenes:
        rep = crlb_report(scene, quad)
        tol = max(10.0 * quad.rel_tol, 10.0 * rep.quad_error / rep.crlb_count)
        gap = 1.0 - rep.ratio
        if not rep.converged:
            ok, reason = False, "quadrature did not converge"
        elif scene.b_lambda == 0:
            ok = abs(gap) <= equality_rtol
            reason = "equality" if ok else f"noiseless ratio {rep.ratio!r} differs from 1"
        elif rep.ratio > 1.0 + tol:
            ok, reason = False, f"timestamp bound exceeds count bound (ratio {rep.ratio!r})"
        elif gap <= tol:
            ok, reason = False, f"gap {gap:.3g} not resolved above tolerance {tol:.3g}"
        else:
            ok, reason = True, "strict"
        checks.append(BoundCheck(scene, rep, ok, reason))
    return checks


def gaussian_energy_squared(scene: PixelScene):
    """Integral of ``s^2`` over the real line, ``S^2 / (2*sigma_t*sqrt(pi))``."""
    return scene.S ** 2 / (2.0 * scene.sigma_t * math.sqrt(math.pi))
