"""``splidar`` command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical
verification failure, 4 I/O error. Every command writes a JSON manifest next
to its outputs holding the resolved configuration, the seed, the package
version and SHA-256 digests of the files it produced.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, acceptance
from . import config as cfg
from .crlb import verify_bound_ordering
from .experiments import (POOLING, RECON_MODES, export_scatter, reconstruct_frames, run_sweep,
                          synthetic_grid, write_sweep_csv, write_sweep_detail_csv)
from .formats import FormatError, map_to_pgm, read_stack, sha256, write_csv, write_keyvalue, write_stack
from .model import sbr as scene_sbr
from .simulator import FIRST_PHOTON_MODES, simulate_frames

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_IO = 0, 2, 3, 4
CRLB_HEADER = ("sbr", "b_lambda", "crlb_count", "crlb_timestamp", "ratio", "quad_error")


class VerificationFailed(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _manifest(out: Path, command, settings, seed, outputs):
    files = {Path(p).name: sha256(p) for p in outputs}
    path = out / f"{command}.manifest.json"
    body = {"command": command, "config": settings, "seed": seed, "version": __version__,
            "outputs": files}
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# -- commands -------------------------------------------------------------------

def cmd_sim(args):
    values = cfg.read(args.config)
    seed = 0 if args.seed is None else args.seed
    if "reflectance_pgm" in values:
        grid, sigma_j, _ = cfg.load_radiometric(args.config)
        jitter = sigma_j if args.jitter is None else args.jitter
        source = {"kind": "radiometric"}
    else:
        scene = cfg.scene_from_values(values)
        grid = synthetic_grid(scene, args.width, args.height, args.pattern)
        jitter = 0.0 if args.jitter is None else args.jitter
        source = {"kind": "synthetic", "width": args.width, "height": args.height,
                  "pattern": args.pattern, "sbr": scene_sbr(scene, "signal"),
                  "sbr_pulse": scene_sbr(scene, "pulse")}
    if args.frames < 1:
        raise cfg.ConfigError("--frames must be >= 1")
    stack = simulate_frames(grid, args.frames, seed, jitter=jitter, mode=args.mode,
                            tdc_bin=args.tdc_bin)
    settings = {"config_file": Path(args.config).name, "values": values, "frames": args.frames,
                "jitter": jitter, "mode": args.mode, "tdc_bin": args.tdc_bin, **source}
    path = args.out / args.name
    write_stack(stack, path, preset=settings)
    return _manifest(args.out, "sim", settings, seed, [path, f"{path}.json"])


def _load_spec(args, **extra):
    values = cfg.read(args.spec)
    spec = cfg.sweep_from_values(values, seed=args.seed, pair=getattr(args, "pair", None),
                                 trials=args.trials, **extra)
    return values, spec


def cmd_sweep(args):
    values, spec = _load_spec(args)
    result = run_sweep(spec, workers=args.threads)
    path = args.out / f"sweep_{spec.pair}.csv"
    detail = args.out / f"sweep_{spec.pair}_detail.csv"
    write_sweep_csv(result, path)
    write_sweep_detail_csv(result, detail)
    return _manifest(args.out, "sweep", {"file": values, "resolved": spec.as_dict()}, spec.seed,
                     [path, detail])


def cmd_scatter(args):
    values, spec = _load_spec(args)
    path = args.out / f"scatter_{spec.pair}.csv"
    export_scatter(spec, path, workers=args.threads)
    return _manifest(args.out, "scatter", {"file": values, "resolved": spec.as_dict()}, spec.seed,
                     [path])


def cmd_crlb(args):
    grid = cfg.load_grid(args.grid)
    base = {k: v for k, v in grid.values.items() if k not in ("sbr", "include_noiseless")}
    scenes = [cfg.scene_from_values({**base, "sbr": repr(s)}) for s in grid.sbrs]
    if grid.include_noiseless:
        scenes.append(cfg.scene_from_values({**base, "b_lambda": "0"}))
    checks = verify_bound_ordering(scenes)
    # requested grid values, not the ones recomputed from the solved scene
    labels = list(grid.sbrs) + ([float("inf")] if grid.include_noiseless else [])
    rows = [(label, c.scene.b_lambda, c.report.crlb_count, c.report.crlb_timestamp,
             c.report.ratio, c.report.quad_error) for label, c in zip(labels, checks)]
    path = args.out / "crlb.csv"
    write_csv(path, CRLB_HEADER, rows)
    manifest = _manifest(args.out, "crlb", {"file": grid.values}, None, [path])
    bad = [c for c in checks if not c.ok]
    for c in bad:
        print(f"bound check failed at b_lambda={c.scene.b_lambda!r}: {c.reason}", file=sys.stderr)
    if bad:
        raise VerificationFailed(f"{len(bad)} scene(s) violate the bound ordering")
    return manifest


def cmd_reconstruct(args):
    stack = read_stack(args.stack)
    depth, refl, metrics = reconstruct_frames(stack, args.window, args.mode, pooling=args.pooling)
    prefix = args.out / args.prefix
    grid = stack.scene
    depth_path = Path(f"{prefix}_depth.pgm")
    refl_path = Path(f"{prefix}_reflectivity.pgm")
    metrics_path = Path(f"{prefix}_metrics.txt")
    d_lo, d_hi = map_to_pgm(depth_path, depth, 0.0, grid.acq.t_r)
    peak = float(grid.alpha.max()) or 1.0
    r_lo, r_hi = map_to_pgm(refl_path, np.clip(refl, 0.0, peak), 0.0, peak)
    write_keyvalue(metrics_path, {"mode": args.mode, "pooling": args.pooling, **metrics.as_dict()})
    settings = {"stack": Path(args.stack).name, "stack_sha256": sha256(args.stack),
                "window": args.window, "mode": args.mode, "pooling": args.pooling,
                "scaling": {"depth": [d_lo, d_hi], "reflectivity": [r_lo, r_hi]}}
    return _manifest(args.out, "reconstruct", settings, stack.seed,
                     [depth_path, refl_path, metrics_path])


def cmd_verify(args):
    seed = acceptance.DEFAULT_SEED if args.seed is None else args.seed
    outputs, rows = [], []
    failed = []
    for number in sorted(acceptance.CHECKS):
        outcome = acceptance.run(number, seed=seed, workers=args.threads)
        print(outcome.line(), file=sys.stderr)
        rows.append((number, outcome.title, "pass" if outcome.passed else "fail", outcome.summary))
        if not outcome.passed:
            failed.append(number)
        for name, (header, table) in outcome.tables.items():
            path = args.out / f"{name}.csv"
            write_csv(path, header, table)
            outputs.append(path)
    path = args.out / "acceptance.csv"
    write_csv(path, ("criterion", "title", "result", "summary"), rows)
    outputs.insert(0, path)
    manifest = _manifest(args.out, "verify", {"criteria": sorted(acceptance.CHECKS)}, seed, outputs)
    if failed:
        raise VerificationFailed(f"criteria {failed} failed")
    return manifest


# -- entry point ----------------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="splidar", description="Single-photon LiDAR estimation toolkit.")
    parser.add_argument("--seed", type=int, default=None, help="64-bit seed (overrides files)")
    parser.add_argument("--threads", type=int, default=1, help="worker processes")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sim", help="simulate a first-photon frame stack")
    p.add_argument("config", help="scene or radiometric key-value file")
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--pattern", choices=("flat", "gradient"), default="flat")
    p.add_argument("--jitter", type=float, default=None, help="timing jitter std (seconds)")
    p.add_argument("--mode", choices=FIRST_PHOTON_MODES, default="mixture")
    p.add_argument("--tdc-bin", type=float, default=0.0)
    p.add_argument("--name", default="stack.splf", help="frame stack file name")
    p.set_defaults(func=cmd_sim)

    for name, func, trials_help in (("sweep", cmd_sweep, "trials per SBR"),
                                    ("scatter", cmd_scatter, "trials per SBR (default 50)")):
        p = sub.add_parser(name, help=f"{name} over SBR for one estimator pair")
        p.add_argument("spec", help="sweep key-value file")
        p.add_argument("--pair", choices=("depth", "reflectivity"), default=None)
        p.add_argument("--trials", type=int, default=50 if name == "scatter" else None,
                       help=trials_help)
        p.set_defaults(func=func)

    p = sub.add_parser("crlb", help="bounds over an SBR grid")
    p.add_argument("grid", help="grid key-value file")
    p.set_defaults(func=cmd_crlb)

    p = sub.add_parser("reconstruct", help="depth and reflectivity maps from a frame stack")
    p.add_argument("stack")
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--mode", choices=RECON_MODES, default="joint")
    p.add_argument("--pooling", choices=POOLING, default="first_photon")
    p.add_argument("--prefix", default="recon")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        manifest = args.func(args)
    except VerificationFailed as exc:
        print(f"splidar: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (cfg.ConfigError, FormatError, ValueError) as exc:
        print(f"splidar: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"splidar: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
