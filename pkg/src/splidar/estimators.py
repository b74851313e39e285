"""Per-pixel maximum-likelihood estimators of reflectivity and time delay.

The log-likelihood of ``m`` timestamps, up to terms free of the unknowns, is::

    L(alpha, tau) = -N_r*eta*S*alpha + sum_k log(eta*alpha*s(t_k - tau) + b_lambda)

Estimators here either use closed forms (noiseless data, photon counts) or
search the first-order conditions with sign-aware bracketing and bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit, logsumexp

from .model import PixelScene, log_pulse_value


class BracketNotFound(RuntimeError):
    """No sign change of the depth derivative was found around the initial guess."""


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances for the depth and reflectivity searches.

    ``deriv_tol`` is relative: a root counts as converged when the derivative
    there is below ``deriv_tol`` times the magnitude of its terms. ``step``
    and ``xtol_depth`` default to a quarter pulse width and ``1e-10 * t_r``.
    """

    deriv_tol: float = 1e-5
    max_iter: int = 200
    max_expansions: int = 10_000
    step: float | None = None
    xtol_depth: float | None = None
    b_init: float = 10.0
    max_doublings: int = 40
    outer_tol: float = 1e-9
    max_outer: int = 50

    def __post_init__(self):
        for name in ("deriv_tol", "max_iter", "max_expansions", "b_init", "max_doublings",
                     "outer_tol", "max_outer"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("step", "xtol_depth"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")

    def step_for(self, scene):
        return self.step if self.step is not None else scene.sigma_t / 4.0

    def xtol_for(self, scene):
        return self.xtol_depth if self.xtol_depth is not None else 1e-10 * scene.t_r

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class EstimateReport:
    value: float
    clamped: bool = False
    iterations: int = 0
    bracket: tuple = (math.nan, math.nan)
    converged: bool = True


# -- likelihood and derivatives --------------------------------------------------

def _check(timestamps, alpha, scene):
    t = np.asarray(timestamps, dtype=float)
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if alpha == 0 and scene.b_lambda == 0 and t.size > 0:
        raise ValueError("likelihood is log(0) when alpha = 0 and b_lambda = 0")
    return t


def _log_signal(t, alpha, tau, scene):
    """log(eta*alpha*s(t - tau)), -inf where alpha = 0."""
    if alpha == 0:
        return np.full(t.shape, -np.inf)
    return math.log(scene.eta * alpha) + log_pulse_value(scene.pulse, t - tau)


def _signal_weight(t, alpha, tau, scene):
    """Fraction of the rate at each timestamp attributed to the pulse."""
    log_b = math.log(scene.b_lambda) if scene.b_lambda > 0 else -np.inf
    return expit(_log_signal(t, alpha, tau, scene) - log_b)


def loglik(timestamps, alpha, tau, scene: PixelScene):
    t = _check(timestamps, alpha, scene)
    value = -scene.n_r * scene.eta * scene.S * alpha
    if t.size:
        log_b = math.log(scene.b_lambda) if scene.b_lambda > 0 else -np.inf
        value += float(np.sum(np.logaddexp(_log_signal(t, alpha, tau, scene), log_b)))
    return value


def dloglik_dtau(timestamps, alpha, tau, scene: PixelScene):
    """Derivative of :func:`loglik` with respect to the delay."""
    t = _check(timestamps, alpha, scene)
    if t.size == 0:
        return 0.0
    u = t - tau
    return float(np.sum(_signal_weight(t, alpha, tau, scene) * u) / scene.sigma_t ** 2)


def dloglik_dalpha(timestamps, alpha, tau, scene: PixelScene):
    """Derivative of :func:`loglik` with respect to reflectivity.

    Strictly decreasing in ``alpha`` whenever at least one timestamp is present.
    """
    t = _check(timestamps, alpha, scene)
    value = -scene.n_r * scene.eta * scene.S
    if t.size == 0:
        return value
    if scene.b_lambda == 0:
        return value + t.size / alpha
    # eta*s / (eta*alpha*s + b), evaluated in the log domain
    log_num = math.log(scene.eta) + log_pulse_value(scene.pulse, t - tau)
    log_den = np.logaddexp(_log_signal(t, alpha, tau, scene), math.log(scene.b_lambda))
    return value + float(np.exp(logsumexp(log_num - log_den)))


# -- closed forms ----------------------------------------------------------------

def depth_sample_mean(timestamps, t_r=None):
    """Noiseless delay MLE: the mean timestamp."""
    t = np.asarray(timestamps, dtype=float)
    if t.size == 0:
        return EstimateReport(math.nan, converged=False)
    value = float(np.mean(t))
    clamped = False
    if t_r is not None and not 0 < value < t_r:
        value = min(max(value, np.nextafter(0.0, 1.0)), np.nextafter(t_r, 0.0))
        clamped = True
    return EstimateReport(value, clamped=clamped)


def reflectivity_count_mle(m, scene: PixelScene, n_r=None):
    """Reflectivity from the photon count alone, clamped at zero.

    ``n_r`` overrides the number of cycles the count was collected over.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    n_r = scene.n_r if n_r is None else n_r
    raw = (m / n_r - scene.B) / (scene.eta * scene.S)
    return EstimateReport(max(raw, 0.0), clamped=raw < 0)


def unconstrained_count_estimate(m, scene: PixelScene):
    return (m / scene.n_r - scene.B) / (scene.eta * scene.S)


# -- search-based estimators ---------------------------------------------------------

def _bisect(f, lo, hi, f_lo, xtol, max_iter):
    """Bisection on a sign change; returns ``(x, f(x), iterations)``."""
    s_lo = np.sign(f_lo)
    mid, f_mid = lo, f_lo
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0:
            break
        if np.sign(f_mid) == s_lo:
            lo = mid
        else:
            hi = mid
        if hi - lo <= xtol or not lo < 0.5 * (lo + hi) < hi:
            break
    return mid, f_mid, it


def _depth_scale(t, alpha, tau, scene):
    w = _signal_weight(t, alpha, tau, scene)
    return float(np.sum(w * np.abs(t - tau)) / scene.sigma_t ** 2)


def depth_mle_known_alpha(timestamps, alpha, scene: PixelScene, tau_0=None,
                          solver: SolverConfig = SolverConfig()):
    """Delay estimate with reflectivity known.

    Grows an interval symmetrically around ``tau_0`` one ``step`` at a time
    until the derivative of the log-likelihood changes sign inside a newly
    added slice, then bisects that slice. The root returned is therefore the
    crossing closest to ``tau_0``, to within one step.

    Raises
    ------
    BracketNotFound
        When ``max_expansions`` steps (or the period boundaries) are exhausted.
    """
    t = np.asarray(timestamps, dtype=float)
    if t.size == 0:
        raise ValueError("depth estimation needs at least one timestamp")
    if alpha == 0 and scene.b_lambda == 0:
        raise ValueError("alpha and b_lambda cannot both be zero")
    if alpha == 0:
        # flat likelihood: every delay is optimal
        return EstimateReport(scene.tau if tau_0 is None else tau_0, converged=False)
    tau_0 = scene.tau if tau_0 is None else float(tau_0)
    step = solver.step_for(scene)
    lo_lim = np.nextafter(0.0, 1.0)
    hi_lim = np.nextafter(scene.t_r, 0.0)
    tau_0 = min(max(tau_0, lo_lim), hi_lim)

    def f(x):
        return dloglik_dtau(t, alpha, x, scene)

    f0 = f(tau_0)
    if f0 == 0:
        return EstimateReport(tau_0, iterations=0, bracket=(tau_0, tau_0), converged=True)

    a = b = tau_0
    fa = fb = f0
    for it in range(1, solver.max_expansions + 1):
        a_new, b_new = max(a - step, lo_lim), min(b + step, hi_lim)
        if a_new == a and b_new == b:
            break
        fa_new = f(a_new) if a_new != a else fa
        fb_new = f(b_new) if b_new != b else fb
        left = np.sign(fa_new) != np.sign(fa)
        right = np.sign(fb_new) != np.sign(fb)
        if left or right:
            xtol = solver.xtol_for(scene)
            roots = []
            if left:
                roots.append(_bisect(f, a_new, a, fa_new, xtol, solver.max_iter))
            if right:
                roots.append(_bisect(f, b, b_new, fb, xtol, solver.max_iter))
            # equidistant crossings on both sides: keep the better objective
            x, fx, n = max(roots, key=lambda r: loglik(t, alpha, r[0], scene))
            tol = solver.deriv_tol * max(_depth_scale(t, alpha, x, scene), 1.0)
            return EstimateReport(float(x), iterations=it + n, bracket=(a_new, b_new),
                                  converged=abs(fx) <= tol)
        a, b, fa, fb = a_new, b_new, fa_new, fb_new
    raise BracketNotFound(f"bracket not found around tau_0={tau_0} after {it} expansions")


def reflectivity_mle_known_tau(timestamps, tau, scene: PixelScene,
                               solver: SolverConfig = SolverConfig(), n_r=None):
    """Reflectivity estimate with the delay known.

    The derivative is monotone decreasing on ``[0, inf)``, so the search
    either stops at zero (derivative not positive there) or bisects the
    unique positive root, doubling the upper end until it brackets.
    ``n_r`` overrides the number of cycles the timestamps were pooled over.
    """
    t = np.asarray(timestamps, dtype=float)
    if n_r is not None and n_r != scene.n_r:
        scene = scene.replace(acq=replace(scene.acq, n_r=int(n_r)))
    if t.size == 0:
        return EstimateReport(0.0, clamped=True, bracket=(0.0, 0.0))
    if scene.b_lambda == 0:
        f0 = math.inf
    else:
        f0 = dloglik_dalpha(t, 0.0, tau, scene)
    if f0 <= 0:
        return EstimateReport(0.0, clamped=True, bracket=(0.0, 0.0))

    def f(x):
        return dloglik_dalpha(t, x, tau, scene)

    hi = solver.b_init
    f_hi = f(hi)
    doublings = 0
    while f_hi > 0:
        if doublings >= solver.max_doublings:
            return EstimateReport(hi, iterations=doublings, bracket=(0.0, hi), converged=False)
        hi *= 2.0
        f_hi = f(hi)
        doublings += 1
    if f_hi == 0:
        return EstimateReport(hi, iterations=doublings, bracket=(0.0, hi))
    # lower end is 0, where the derivative is positive (possibly +inf)
    x, fx, n = _bisect(f, 0.0, hi, 1.0, 1e-13 * hi, max(solver.max_iter, 200))
    tol = solver.deriv_tol * scene.n_r * scene.eta * scene.S
    return EstimateReport(float(x), iterations=doublings + n, bracket=(0.0, hi),
                          converged=abs(fx) <= tol)


@dataclass(frozen=True)
class JointTrace:
    objective: tuple
    outer_iterations: int
    converged: bool


def joint_mle(timestamps, scene: PixelScene, tau_0=None, alpha_0=None,
              solver: SolverConfig = SolverConfig(), return_trace=False):
    """Joint delay/reflectivity MLE by coordinate ascent.

    Alternates :func:`depth_mle_known_alpha` and :func:`reflectivity_mle_known_tau`.
    A depth update that would lower the objective is rejected, so the logged
    objective never decreases.
    """
    t = np.asarray(timestamps, dtype=float)
    if t.size == 0:
        raise ValueError("joint estimation needs at least one timestamp")
    tau = scene.tau if tau_0 is None else float(tau_0)
    alpha = scene.alpha if alpha_0 is None else float(alpha_0)
    if alpha <= 0 and scene.b_lambda == 0:
        alpha = reflectivity_count_mle(t.size, scene).value or 1.0
    objective = [loglik(t, alpha, tau, scene)]
    depth = refl = None
    converged = False
    it = 0
    for it in range(1, solver.max_outer + 1):
        depth = depth_mle_known_alpha(t, alpha, scene, tau, solver)
        new_tau = depth.value
        if loglik(t, alpha, new_tau, scene) < objective[-1]:
            new_tau = tau
        refl = reflectivity_mle_known_tau(t, new_tau, scene, solver)
        new_alpha = refl.value
        objective.append(loglik(t, new_alpha, new_tau, scene))
        done = (abs(new_tau - tau) <= solver.outer_tol * scene.t_r
                and abs(new_alpha - alpha) <= solver.outer_tol * max(1.0, alpha))
        tau, alpha = new_tau, new_alpha
        if done:
            converged = True
            break
    depth_report = EstimateReport(tau, depth.clamped, it, depth.bracket, converged and depth.converged)
    refl_report = EstimateReport(alpha, refl.clamped, it, refl.bracket, converged and refl.converged)
    if return_trace:
        return depth_report, refl_report, JointTrace(tuple(objective), it, converged)
    return depth_report, refl_report


# -- initialisation -------------------------------------------------------------------

def coarse_delay(timestamps, scene: PixelScene, bandwidth=None, grid_step=None):
    """Delay guess from the peak of a Gaussian-smoothed timestamp histogram."""
    t = np.asarray(timestamps, dtype=float)
    if t.size == 0:
        return scene.t_r / 2.0
    bw = scene.sigma_t if bandwidth is None else bandwidth
    step = bw / 2.0 if grid_step is None else grid_step
    grid = np.arange(step / 2.0, scene.t_r, step)
    density = np.zeros_like(grid)
    for tk in t:
        density += np.exp(-0.5 * ((grid - tk) / bw) ** 2)
    return float(grid[int(np.argmax(density))])
