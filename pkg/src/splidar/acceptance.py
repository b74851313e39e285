"""The nine acceptance checks, shared by ``splidar verify`` and the test suite.

Every check is a deterministic function of the seed. Wall-clock time is
measured but kept out of the result tables so that repeated runs produce
identical files.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import estimators as est
from .crlb import verify_bound_ordering
from .experiments import SweepSpec, reconstruct_frames, run_sweep, run_trials, synthetic_grid
from .model import AcquisitionConfig, scene_from_background, scene_from_constraints
from .rng import substream
from .simulator import sample_count, sample_draw, simulate_frames

DEFAULT_SEED = 7
PRESET_ACQ = AcquisitionConfig(t_r=10.0, n_r=1000, eta=1.0)
PRESET = dict(photon_level=10.0, alpha=0.5, tau=4.0, sigma_t=0.2)
SBR_GRID = (0.5, 1.0, 2.0, 5.0, 10.0)
WINDOWS = (1, 5, 10)

# wall-clock budgets in seconds
BUDGETS = {1: 1.0, 2: 1.0, 3: 300.0, 4: 300.0, 5: 30.0, 6: 1.0, 7: None, 8: 60.0, 9: None}
TITLES = {
    1: "timestamp bound never exceeds count bound",
    2: "noiseless joint estimate equals closed forms",
    3: "side information lowers MSE at every SBR",
    4: "MSE scales with 1/N_r",
    5: "count and first-photon laws fit",
    6: "analytic derivatives match finite differences",
    7: "reflectivity derivative strictly decreasing",
    8: "frame metrics improve with window",
    9: "verify output is reproducible",
}


@dataclass
class Outcome:
    number: int
    passed: bool
    summary: str
    seconds: float = 0.0
    tables: dict = field(default_factory=dict)

    @property
    def title(self):
        return TITLES[self.number]

    @property
    def within_budget(self):
        budget = BUDGETS[self.number]
        return budget is None or self.seconds < budget

    def line(self):
        verdict = "PASS" if self.passed and self.within_budget else "FAIL"
        budget = BUDGETS[self.number]
        timing = f"{self.seconds:.2f}s" + (f" < {budget:g}s" if budget else "")
        return f"[{verdict}] criterion {self.number}: {self.title} ({self.summary}; {timing})"


def preset_scene(sbr, acq=PRESET_ACQ):
    return scene_from_constraints(sbr=sbr, acq=acq, **PRESET)


def _g(x):
    return f"{x:.6g}"


def criterion_1(seed=DEFAULT_SEED, workers=1):
    scenes = [preset_scene(s) for s in SBR_GRID]
    scenes.append(scene_from_background(b_lambda=0.0, acq=PRESET_ACQ, **PRESET))
    checks = verify_bound_ordering(scenes)
    rows = [(c.report.sbr, c.scene.b_lambda, c.report.crlb_count,
             c.report.crlb_timestamp, c.report.ratio, c.report.quad_error) for c in checks]
    bad = [c.reason for c in checks if not c.ok]
    summary = "ratios " + ", ".join(_g(c.report.ratio) for c in checks)
    if bad:
        summary += "; " + "; ".join(bad)
    return Outcome(1, not bad, summary, tables={
        "crlb": (("sbr", "b_lambda", "crlb_count", "crlb_timestamp", "ratio", "quad_error"), rows)})


def criterion_2(seed=DEFAULT_SEED, workers=1, trials=100):
    scene = scene_from_background(b_lambda=0.0, acq=PRESET_ACQ, **PRESET)
    worst_tau = worst_alpha = 0.0
    for j in range(trials):
        draw = sample_draw(scene, substream(seed, "noiseless", j))
        if draw.m == 0:
            continue
        depth, refl = est.joint_mle(draw.timestamps, scene)
        worst_tau = max(worst_tau, abs(depth.value - draw.timestamps.mean()))
        worst_alpha = max(worst_alpha, abs(refl.value - draw.m / (scene.n_r * scene.eta * scene.S)))
    ok = worst_tau <= 1e-6 and worst_alpha <= 1e-6
    return Outcome(2, ok, f"max |dtau| {_g(worst_tau)}, max |dalpha| {_g(worst_alpha)}")


def criterion_3(seed=DEFAULT_SEED, workers=1, trials=1000):
    parts, ok, tables = [], True, {}
    for pair in ("depth", "reflectivity"):
        result = run_sweep(SweepSpec(sbrs=SBR_GRID, trials=trials, seed=seed, pair=pair),
                           workers=workers)
        rows = result.rows
        ordered = all(r.mse_with <= r.mse_without for r in rows)
        gap = rows[0].gain > rows[-1].gain
        ok &= ordered and gap
        parts.append(f"{pair}: gain {_g(rows[0].gain)} at SBR {rows[0].sbr:g} vs "
                     f"{_g(rows[-1].gain)} at SBR {rows[-1].sbr:g}"
                     + ("" if ordered else ", ordering violated"))
        tables[f"side_information_{pair}"] = (
            ("sbr", "trials", "failures", "mse_with", "mse_without", "crlb_count", "crlb_timestamp"),
            [(r.sbr, r.trials, r.failures, r.mse_with, r.mse_without, r.crlb_count,
              r.crlb_timestamp) for r in rows])
    return Outcome(3, ok, "; ".join(parts), tables=tables)


def criterion_4(seed=DEFAULT_SEED, workers=1, trials=1000, sbr=10.0):
    base = preset_scene(sbr)
    rows, ok = [], True
    for pair in ("depth", "reflectivity"):
        mses = []
        for n_r in (1000, 4000):
            scene = base.replace(acq=AcquisitionConfig(base.t_r, n_r, base.eta))
            batch = run_trials(scene, pair, trials, seed, stream=(4, n_r))
            mses.append(batch.mse_with())
        ratio = mses[0] / mses[1]
        ok &= 2.5 <= ratio <= 6.0
        rows.append((pair, sbr, mses[0], mses[1], ratio))
    summary = ", ".join(f"{r[0]} ratio {_g(r[4])}" for r in rows)
    return Outcome(4, ok, summary, tables={
        "consistency": (("pair", "sbr", "mse_n1000", "mse_n4000", "ratio"), rows)})


def _poisson_chisquare(counts, mean, min_expected=5.0):
    """Chi-square fit to Poisson(mean); adjacent bins merge until each expects ``min_expected``."""
    n = counts.size
    top = max(int(counts.max()), int(stats.poisson.isf(1e-12, mean))) + 1
    probs = stats.poisson.pmf(np.arange(top), mean)
    probs[-1] += stats.poisson.sf(top - 1, mean)
    observed = np.bincount(np.minimum(counts, top - 1), minlength=top)
    merged_p, merged_o = [], []
    acc_p = acc_o = 0
    for p, o in zip(probs, observed):
        acc_p += p
        acc_o += o
        if n * acc_p >= min_expected:
            merged_p.append(acc_p)
            merged_o.append(acc_o)
            acc_p = acc_o = 0
    merged_p[-1] += acc_p
    merged_o[-1] += acc_o
    return stats.chisquare(merged_o, n * np.array(merged_p))


def mixture_cdf(scene, jitter=0.0):
    """CDF of a detected first-photon timestamp (truncated Gaussian plus uniform)."""
    lam = scene.signal_energy + scene.B
    p_sig = scene.signal_energy / lam
    sig = math.hypot(scene.sigma_t, jitter)
    lo = stats.norm.cdf(0.0, scene.tau, sig)
    mass = stats.norm.cdf(scene.t_r, scene.tau, sig) - lo

    def cdf(t):
        t = np.asarray(t, dtype=float)
        pulse = (stats.norm.cdf(t, scene.tau, sig) - lo) / mass
        return p_sig * pulse + (1.0 - p_sig) * t / scene.t_r
    return cdf


def criterion_5(seed=DEFAULT_SEED, workers=1, draws=100_000, sbr=5.0, jitter=0.1):
    count_scene = preset_scene(1.0)
    rng = substream(seed, "count-fit")
    counts = np.array([sample_count(count_scene, rng) for _ in range(draws)])
    chi = _poisson_chisquare(counts, count_scene.n_r * (count_scene.signal_energy + count_scene.B))

    scene = preset_scene(sbr)
    grid = synthetic_grid(scene, 400, draws // 400, "flat")
    frames = simulate_frames(grid, 1, seed, jitter=jitter).frames[0].ravel()
    times = frames[~np.isnan(frames)]
    ks = stats.kstest(times, mixture_cdf(scene, jitter))
    ok = chi.pvalue > 0.01 and ks.pvalue > 0.01
    return Outcome(5, ok, f"chi-square p {_g(chi.pvalue)}, KS p {_g(ks.pvalue)} "
                          f"on {times.size} timestamps")


def _random_instances(seed, n, tag):
    """Random scene, timestamp set and evaluation point for derivative checks."""
    out = []
    for j in range(n):
        rng = substream(seed, tag, j)
        scene = preset_scene(float(rng.choice(SBR_GRID)))
        draw = sample_draw(scene, rng)
        while draw.m == 0:
            draw = sample_draw(scene, rng)
        alpha = float(rng.uniform(0.05, 2.0))
        tau = float(scene.tau + rng.uniform(-1.0, 1.0))
        out.append((scene, draw.timestamps, alpha, tau))
    return out


def criterion_6(seed=DEFAULT_SEED, workers=1, n=100, rtol=1e-5):
    worst = 0.0
    for scene, ts, alpha, tau in _random_instances(seed, n, "derivatives"):
        h = 1e-6 * scene.t_r
        fd_tau = (est.loglik(ts, alpha, tau + h, scene) - est.loglik(ts, alpha, tau - h, scene)) / (2 * h)
        ha = 1e-6 * alpha
        fd_alpha = (est.loglik(ts, alpha + ha, tau, scene)
                    - est.loglik(ts, alpha - ha, tau, scene)) / (2 * ha)
        for exact, approx in ((est.dloglik_dtau(ts, alpha, tau, scene), fd_tau),
                              (est.dloglik_dalpha(ts, alpha, tau, scene), fd_alpha)):
            worst = max(worst, abs(exact - approx) / max(abs(exact), abs(approx)))
    return Outcome(6, worst <= rtol, f"max relative error {_g(worst)} over {n} instances")


def criterion_7(seed=DEFAULT_SEED, workers=1, n=100):
    alphas = np.round(np.arange(0.0, 5.0 + 1e-9, 0.1), 10)
    violations = 0
    for scene, ts, _, tau in _random_instances(seed, n, "monotone"):
        values = np.array([est.dloglik_dalpha(ts, a, tau, scene) for a in alphas])
        violations += int(np.any(np.diff(values) >= 0))
    return Outcome(7, violations == 0, f"{violations} of {n} instances not strictly decreasing "
                                       f"on alpha = 0, 0.1, ..., 5")


def criterion_8(seed=DEFAULT_SEED, workers=1, sbr=5.0, size=32):
    grid = synthetic_grid(preset_scene(sbr), size, size, "gradient")
    stack = simulate_frames(grid, max(WINDOWS), seed)
    rows = []
    for w in WINDOWS:
        _, _, m = reconstruct_frames(stack, w, "joint")
        rows.append((w, m.depth_rmse, m.reflectivity_rmse, m.reflectivity_psnr, m.failures,
                     m.invalid_pixels))
    depth = [r[1] for r in rows]
    refl = [r[2] for r in rows]
    ok = all(a > b for a, b in zip(depth, depth[1:])) and all(a > b for a, b in zip(refl, refl[1:]))
    summary = ("depth rmse " + ", ".join(_g(x) for x in depth)
               + "; reflectivity rmse " + ", ".join(_g(x) for x in refl))
    return Outcome(8, ok, summary, tables={
        "reconstruction": (("window", "depth_rmse", "reflectivity_rmse", "reflectivity_psnr",
                            "failures", "invalid_pixels"), rows)})


def criterion_9(seed=DEFAULT_SEED, workers=2):
    """In-process stand-in: a short sweep and a frame stack, serial versus parallel."""
    spec = SweepSpec(sbrs=SBR_GRID, trials=40, seed=seed, pair="depth")
    a = run_sweep(spec, workers=1, chunk=10)
    b = run_sweep(spec, workers=max(2, workers), chunk=10)
    same_sweep = all(np.array_equal(x.batch.est_with, y.batch.est_with, equal_nan=True)
                     and np.array_equal(x.batch.est_without, y.batch.est_without, equal_nan=True)
                     for x, y in zip(a.rows, b.rows))
    grid = synthetic_grid(preset_scene(1.0), 8, 8, "gradient")
    f1 = simulate_frames(grid, 3, seed).frames
    f2 = simulate_frames(grid, 3, seed).frames
    same_frames = f1.tobytes() == f2.tobytes()
    return Outcome(9, same_sweep and same_frames,
                   f"serial and parallel sweeps identical: {same_sweep}; "
                   f"repeated frame stacks identical: {same_frames}")


CHECKS = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
          6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9}


def run(number, seed=DEFAULT_SEED, workers=1):
    start = time.perf_counter()
    outcome = CHECKS[number](seed=seed, workers=workers)
    outcome.seconds = time.perf_counter() - start
    return outcome
