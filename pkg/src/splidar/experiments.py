"""Seeded Monte Carlo studies and frame-level reconstruction.

``run_sweep`` compares an estimator that is given the other parameter
(depth or reflectivity) against one that ignores it, across SBR values.
``reconstruct_frames`` turns a first-photon frame stack into depth and
reflectivity maps by pooling each pixel's detections over a window.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import estimators as est
from .crlb import crlb_report
from .formats import read_csv, write_csv
from .model import AcquisitionConfig, PixelScene, SceneGrid, log_pulse_value, scene_from_constraints
from .rng import substream
from .simulator import FrameStack, sample_draw

PAIRS = ("depth", "reflectivity")
SWEEP_HEADER = ("sbr", "trials", "failures", "mse_with", "mse_without", "crlb_count",
                "crlb_timestamp")
SCATTER_HEADER = ("sbr", "trial", "truth", "est_with", "est_without")


def mse(estimates, truth):
    """Mean squared deviation of ``estimates`` from ``truth``."""
    e = np.asarray(estimates, dtype=float)
    if e.size == 0:
        raise ValueError("mse of an empty sample")
    d = e - np.asarray(truth, dtype=float)
    return float(np.mean(d * d))


@dataclass(frozen=True)
class SweepSpec:
    sbrs: tuple = (0.5, 1.0, 2.0, 5.0, 10.0)
    photon_level: float = 10.0
    n_r: int = 1000
    alpha: float = 0.5
    tau: float = 4.0
    sigma_t: float = 0.2
    t_r: float = 10.0
    eta: float = 1.0
    trials: int = 1000
    seed: int = 0
    pair: str = "reflectivity"
    convention: str = "signal"

    def __post_init__(self):
        if len(self.sbrs) == 0:
            raise ValueError("SBR list must not be empty")
        if any(not s > 0 for s in self.sbrs):
            raise ValueError("SBR values must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.pair not in PAIRS:
            raise ValueError(f"pair must be one of {PAIRS}")
        object.__setattr__(self, "sbrs", tuple(float(s) for s in self.sbrs))

    @property
    def acq(self):
        return AcquisitionConfig(t_r=self.t_r, n_r=self.n_r, eta=self.eta)

    def scene(self, sbr) -> PixelScene:
        return scene_from_constraints(self.photon_level, sbr, self.alpha, self.tau, self.acq,
                                      self.sigma_t, self.convention)

    def as_dict(self):
        return {"sbr": list(self.sbrs), "photon_level": self.photon_level, "n_r": self.n_r,
                "alpha": self.alpha, "tau": self.tau, "sigma_t": self.sigma_t, "t_r": self.t_r,
                "eta": self.eta, "trials": self.trials, "seed": self.seed, "pair": self.pair,
                "sbr_convention": self.convention}


@dataclass(frozen=True)
class TrialBatch:
    """Per-trial outcome of one estimator pair on one scene.

    Failed trials carry NaN estimates and are excluded from the MSEs.
    """

    truth: float
    est_with: np.ndarray
    est_without: np.ndarray
    unclamped_without: np.ndarray
    clamped_without: np.ndarray
    counts: np.ndarray
    failed: np.ndarray

    @property
    def failures(self):
        return int(self.failed.sum())

    def mse_with(self):
        return mse(self.est_with[~self.failed], self.truth)

    def mse_without(self):
        return mse(self.est_without[~self.failed], self.truth)


@dataclass(frozen=True)
class SweepRow:
    sbr: float
    trials: int
    failures: int
    mse_with: float
    mse_without: float
    crlb_count: float
    crlb_timestamp: float
    mse_without_unclamped: float
    batch: TrialBatch = field(repr=False)

    @property
    def gain(self):
        """How many times smaller the side-information MSE is."""
        return self.mse_without / self.mse_with


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    rows: tuple


def run_trials(scene: PixelScene, pair: str, trials: int, seed: int, stream=(),
               solver: est.SolverConfig = est.SolverConfig(), start=0):
    """Run ``trials`` independent acquisitions through one estimator pair.

    Trial ``j`` draws from the sub-stream ``(seed, "trial", *stream, j)``.
    """
    n = trials
    est_with = np.full(n, np.nan)
    est_without = np.full(n, np.nan)
    unclamped = np.full(n, np.nan)
    clamped = np.zeros(n, dtype=bool)
    counts = np.zeros(n, dtype=np.int64)
    failed = np.zeros(n, dtype=bool)
    for i in range(n):
        rng = substream(seed, "trial", *stream, start + i)
        draw = sample_draw(scene, rng)
        counts[i] = draw.m
        if pair == "reflectivity":
            without = est.reflectivity_count_mle(draw.m, scene)
            est_without[i] = without.value
            clamped[i] = without.clamped
            unclamped[i] = est.unconstrained_count_estimate(draw.m, scene)
            report = est.reflectivity_mle_known_tau(draw.timestamps, scene.tau, scene, solver)
            est_with[i] = report.value
            failed[i] = not report.converged
        else:
            if draw.m == 0:
                failed[i] = True
                continue
            est_without[i] = unclamped[i] = est.depth_sample_mean(draw.timestamps, scene.t_r).value
            try:
                report = est.depth_mle_known_alpha(draw.timestamps, scene.alpha, scene,
                                                   scene.tau, solver)
            except est.BracketNotFound:
                failed[i] = True
                continue
            est_with[i] = report.value
    truth = scene.alpha if pair == "reflectivity" else scene.tau
    return TrialBatch(truth, est_with, est_without, unclamped, clamped, counts, failed)


def _run_chunk(args):
    scene, pair, count, seed, stream, start = args
    return run_trials(scene, pair, count, seed, stream, start=start)


def _concat(batches):
    first = batches[0]
    return TrialBatch(first.truth,
                      *(np.concatenate([getattr(b, name) for b in batches])
                        for name in ("est_with", "est_without", "unclamped_without",
                                     "clamped_without", "counts", "failed")))


def run_sweep(spec: SweepSpec, workers: int = 1, chunk: int = 250) -> SweepResult:
    """MSE of the estimator pair at every SBR, with CRLB columns for reflectivity.

    Output is identical for any ``workers`` count: every trial owns its
    random stream and chunks are reassembled in trial order.
    """
    jobs = []
    for k, s in enumerate(spec.sbrs):
        scene = spec.scene(s)
        for start in range(0, spec.trials, chunk):
            jobs.append((scene, spec.pair, min(chunk, spec.trials - start), spec.seed, (k,), start))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, jobs))
    else:
        results = [_run_chunk(job) for job in jobs]

    rows = []
    per_sbr = -(-spec.trials // chunk)
    for k, s in enumerate(spec.sbrs):
        batch = _concat(results[k * per_sbr:(k + 1) * per_sbr])
        scene = spec.scene(s)
        if spec.pair == "reflectivity":
            rep = crlb_report(scene)
            c_count, c_ts = rep.crlb_count, rep.crlb_timestamp
        else:
            c_count = c_ts = math.nan
        ok = ~batch.failed
        rows.append(SweepRow(
            sbr=s, trials=spec.trials, failures=batch.failures,
            mse_with=batch.mse_with() if ok.any() else math.nan,
            mse_without=batch.mse_without() if ok.any() else math.nan,
            crlb_count=c_count, crlb_timestamp=c_ts,
            mse_without_unclamped=mse(batch.unclamped_without[ok], batch.truth) if ok.any() else math.nan,
            batch=batch))
    return SweepResult(spec, tuple(rows))


def write_sweep_csv(result: SweepResult, path):
    write_csv(path, SWEEP_HEADER,
              [(r.sbr, r.trials, r.failures, r.mse_with, r.mse_without, r.crlb_count,
                r.crlb_timestamp) for r in result.rows])


def write_sweep_detail_csv(result: SweepResult, path):
    """Companion table with unclamped MSE and clamp fractions."""
    write_csv(path, ("sbr", "mse_without_unclamped", "clamp_fraction_without", "mean_count"),
              [(r.sbr, r.mse_without_unclamped, float(r.batch.clamped_without.mean()),
                float(r.batch.counts.mean())) for r in result.rows])


def export_scatter(spec: SweepSpec, path, workers: int = 1):
    """Per-trial estimates for scatter plots; one row per (SBR, trial)."""
    result = run_sweep(spec, workers)
    rows = []
    for r in result.rows:
        b = r.batch
        for j in range(spec.trials):
            rows.append((r.sbr, j, b.truth, float(b.est_with[j]), float(b.est_without[j])))
    write_csv(path, SCATTER_HEADER, rows)
    return result


def read_scatter(path):
    """Inverse of :func:`export_scatter`: list of ``(sbr, trial, truth, with, without)``."""
    header, rows = read_csv(path)
    if tuple(header) != SCATTER_HEADER:
        raise ValueError(f"unexpected scatter header {header}")
    return [(float(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in rows]


# -- frame reconstruction --------------------------------------------------------

RECON_MODES = ("joint", "baseline")
POOLING = ("first_photon", "low_flux")


@dataclass(frozen=True)
class ReconstructionMetrics:
    depth_rmse: float
    reflectivity_psnr: float
    reflectivity_rmse: float
    failures: int
    invalid_pixels: int
    window: int

    def as_dict(self):
        return {"window": self.window, "depth_rmse": self.depth_rmse,
                "reflectivity_psnr": self.reflectivity_psnr,
                "reflectivity_rmse": self.reflectivity_rmse,
                "failures": self.failures, "invalid_pixels": self.invalid_pixels}


def coarse_delay_map(frames, grid: SceneGrid, rows_per_chunk=16):
    """Histogram-peak delay for every pixel of a ``(window, h, w)`` stack."""
    bw = grid.pulse.sigma_t
    t_grid = np.arange(bw / 4.0, grid.acq.t_r, bw / 2.0)
    out = np.full((grid.height, grid.width), grid.acq.t_r / 2.0)
    for r0 in range(0, grid.height, rows_per_chunk):
        ts = frames[:, r0:r0 + rows_per_chunk]
        z = (t_grid[:, None, None, None] - ts[None]) / bw
        density = np.nansum(np.exp(-0.5 * z * z), axis=1)
        out[r0:r0 + rows_per_chunk] = t_grid[np.argmax(density, axis=0)]
    return out


def _pooled_loglik(alpha, ts, valid, k, window, tau, grid, rows):
    """First-photon pooled log-likelihood for candidate ``alpha`` arrays ``(n, h, w)``."""
    eta, S, n_r = grid.acq.eta, grid.pulse.energy, grid.acq.n_r
    b = grid.b_lambda[rows]
    lam = eta * alpha * S + b * grid.acq.t_r
    x = n_r * lam
    log_s = log_pulse_value(grid.pulse, np.where(valid, ts, 0.0) - tau)
    rate = eta * alpha[:, None] * np.exp(log_s) + b
    with np.errstate(divide="ignore", invalid="ignore"):
        per_ts = np.where(valid, np.log(rate), 0.0).sum(axis=1)
        ll = per_ts - k * np.log(lam) + k * np.log(-np.expm1(-x)) - (window - k) * x
    return np.where(np.isnan(ll), -np.inf, ll)


def pooled_reflectivity(frames, tau_map, grid: SceneGrid, max_signal=100.0, n_grid=241,
                        refine=40, block=2_000_000):
    """Reflectivity maximising the first-photon likelihood of pooled frames.

    Each frame either records nothing (probability ``exp(-N_r*Lambda)``) or one
    timestamp with density ``flux(t) / Lambda``. The delay is fixed at
    ``tau_map``. A log-spaced grid up to ``max_signal`` signal photons per
    frame locates the global peak, golden-section search then refines it.
    Pixels without detections get 0.
    """
    window = frames.shape[0]
    eta, S, n_r = grid.acq.eta, grid.pulse.energy, grid.acq.n_r
    cap = max_signal / (n_r * eta * S)
    ladder = cap * np.geomspace(1e-7, 1.0, n_grid)
    out = np.zeros((grid.height, grid.width))
    g = (math.sqrt(5.0) - 1.0) / 2.0
    rows_per_chunk = max(1, block // (n_grid * window * grid.width))
    for r0 in range(0, grid.height, rows_per_chunk):
        rows = slice(r0, r0 + rows_per_chunk)
        ts = frames[:, rows]
        valid = ~np.isnan(ts)
        k = valid.sum(axis=0)
        tau = tau_map[rows]
        h = ts.shape[1]

        def f(a):
            return _pooled_loglik(a[None], ts, valid, k, window, tau, grid, rows)[0]

        cand = np.broadcast_to(ladder[:, None, None], (n_grid, h, grid.width))
        best = np.argmax(_pooled_loglik(cand, ts, valid, k, window, tau, grid, rows), axis=0)
        lo = np.log(ladder[np.maximum(best - 1, 0)])
        hi = np.log(ladder[np.minimum(best + 1, n_grid - 1)])
        c, d = hi - g * (hi - lo), lo + g * (hi - lo)
        fc, fd = f(np.exp(c)), f(np.exp(d))
        for _ in range(refine):
            left = fc >= fd
            hi = np.where(left, d, hi)
            lo = np.where(left, lo, c)
            c_new = hi - g * (hi - lo)
            d_new = lo + g * (hi - lo)
            f_new = f(np.exp(np.where(left, c_new, d_new)))
            c, d = np.where(left, c_new, d), np.where(left, c, d_new)
            fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
        a_best = np.exp(0.5 * (lo + hi))
        ll_best = f(a_best)
        b = grid.b_lambda[rows]
        ll_zero = f(np.zeros_like(a_best))
        a_best = np.where((b > 0) & (ll_zero >= ll_best), 0.0, a_best)
        out[rows] = np.where(k > 0, a_best, 0.0)
    return out


def reconstruct_frames(stack: FrameStack, window: int, mode: str = "joint",
                       solver: est.SolverConfig = est.SolverConfig(), pooling: str = "first_photon"):
    """Per-pixel depth and reflectivity from the first ``window`` frames.

    ``mode="joint"`` starts from the histogram peak, estimates reflectivity
    with that delay, refines the delay with the reflectivity known, then
    re-estimates reflectivity. ``mode="baseline"`` uses the detection rate
    and the mean timestamp.

    ``pooling`` sets how reflectivity treats the pooled detections:
    ``"first_photon"`` uses the exact one-timestamp-per-frame likelihood,
    ``"low_flux"`` treats the pool as ``window * N_r`` fully time-tagged
    cycles (exact only when detections per frame are rare). Pixels without
    detections come back as NaN.

    Returns
    -------
    depth : ndarray
        Estimated delay per pixel (same units as ``t_r``).
    reflectivity : ndarray
    metrics : ReconstructionMetrics
    """
    if mode not in RECON_MODES:
        raise ValueError(f"mode must be one of {RECON_MODES}")
    if pooling not in POOLING:
        raise ValueError(f"pooling must be one of {POOLING}")
    if not 1 <= window <= stack.n_frames:
        raise ValueError(f"window must lie in [1, {stack.n_frames}], got {window}")
    grid = stack.scene
    pooled = np.asarray(stack.frames[:window])
    n_eff = window * grid.acq.n_r
    detected = ~np.isnan(pooled)
    has_data = detected.any(axis=0)
    failures = 0

    def reflectivity(tau_map):
        if pooling == "first_photon":
            return pooled_reflectivity(pooled, tau_map, grid)
        out = np.zeros_like(tau_map)
        for r, c in zip(*np.nonzero(has_data)):
            ts = pooled[:, r, c]
            out[r, c] = est.reflectivity_mle_known_tau(ts[~np.isnan(ts)], tau_map[r, c],
                                                       grid.pixel(r, c), solver, n_r=n_eff).value
        return out

    if mode == "baseline":
        counts = detected.sum(axis=0)
        if pooling == "first_photon":
            # invert the detection probability 1 - exp(-N_r*Lambda)
            frac = np.minimum(counts / window, 1.0 - 0.5 / window)
            lam = -np.log1p(-frac) / grid.acq.n_r
        else:
            lam = counts / n_eff
        refl = np.maximum((lam - grid.b_lambda * grid.acq.t_r) / (grid.acq.eta * grid.pulse.energy),
                          0.0)
        depth = np.where(detected, pooled, 0.0).sum(axis=0) / np.maximum(counts, 1)
    else:
        tau0 = coarse_delay_map(pooled, grid)
        alpha0 = reflectivity(tau0)
        depth = tau0.copy()
        for r, c in zip(*np.nonzero(has_data & (alpha0 > 0))):
            ts = pooled[:, r, c]
            try:
                depth[r, c] = est.depth_mle_known_alpha(ts[~np.isnan(ts)], alpha0[r, c],
                                                        grid.pixel(r, c), tau0[r, c], solver).value
            except est.BracketNotFound:
                failures += 1
        refl = reflectivity(depth)
    depth = np.where(has_data, depth, np.nan)
    refl = np.where(has_data, refl, np.nan)
    return depth, refl, frame_metrics(depth, refl, grid, window, failures)


def psnr(estimate, truth, peak=1.0):
    err = mse(estimate, truth)
    return math.inf if err == 0 else 10.0 * math.log10(peak ** 2 / err)


def frame_metrics(depth, refl, grid: SceneGrid, window, failures=0):
    """Error of reconstructed maps over pixels with at least one detection.

    Depth RMSE is on ``tau / t_r``. Reflectivity is divided by the true peak
    reflectivity and clipped to ``[0, 1]`` before PSNR and RMSE.
    """
    valid = np.isfinite(depth) & np.isfinite(refl)
    invalid = int((~valid).sum())
    if not valid.any():
        return ReconstructionMetrics(math.nan, math.nan, math.nan, failures, invalid, window)
    t_r = grid.acq.t_r
    d_rmse = math.sqrt(mse(depth[valid] / t_r, grid.tau[valid] / t_r))
    peak = float(grid.alpha.max()) or 1.0
    est_unit = np.clip(refl[valid] / peak, 0.0, 1.0)
    true_unit = grid.alpha[valid] / peak
    return ReconstructionMetrics(d_rmse, psnr(est_unit, true_unit),
                                 math.sqrt(mse(est_unit, true_unit)), failures, invalid, window)


def synthetic_grid(scene: PixelScene, width: int, height: int, pattern: str = "gradient"):
    """Static test scene built around ``scene``.

    ``flat`` repeats the pixel everywhere. ``gradient`` ramps reflectivity from
    20 % to 100 % of ``scene.alpha`` left to right and tilts the delay by
    +/- 20 % of the period top to bottom, kept at least five pulse widths
    from the ends.
    """
    if pattern == "flat":
        return SceneGrid.uniform(scene, width, height)
    if pattern != "gradient":
        raise ValueError(f"unknown pattern {pattern!r}")
    cols = np.linspace(0.2, 1.0, width)
    rows = np.linspace(-0.2, 0.2, height)
    alpha = np.tile(scene.alpha * cols, (height, 1))
    margin = 5.0 * scene.sigma_t
    tau = np.clip(scene.tau + scene.t_r * rows, margin, scene.t_r - margin)
    tau = np.tile(tau[:, None], (1, width))
    b = np.full((height, width), scene.b_lambda)
    return SceneGrid(alpha, tau, b, scene.pulse, scene.acq, meta={"pattern": pattern})
