"""Flat ``key = value`` configuration files.

One assignment per line, ``#`` starts a comment, no sections or nesting.
Lists are comma separated. Unknown keys are rejected so that typos surface
as errors rather than silently falling back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .model import AcquisitionConfig, SBR_CONVENTIONS, scene_from_background, scene_from_constraints

SCENE_KEYS = ("t_r", "n_r", "eta", "alpha", "tau", "sigma_t", "photon_level", "sbr", "b_lambda",
              "sbr_convention")
SCENE_REQUIRED = ("t_r", "n_r", "alpha", "tau", "sigma_t", "photon_level")


class ConfigError(ValueError):
    pass


def parse_text(text: str, source="<string>"):
    """Return an ordered ``{key: raw string}`` mapping."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ConfigError(f"{path}: not valid UTF-8") from exc
    return parse_text(text, str(path))


def dump(values: dict) -> str:
    lines = []
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            value = ", ".join(_fmt(v) for v in value)
        else:
            value = _fmt(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def check_keys(values, allowed, required=()):
    unknown = [k for k in values if k not in allowed]
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    missing = [k for k in required if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")


def as_float(values, key, default=None):
    if key not in values:
        if default is None:
            raise ConfigError(f"missing required key: {key}")
        return default
    try:
        return float(values[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {values[key]!r}") from None


def as_int(values, key, default=None):
    if key not in values:
        if default is None:
            raise ConfigError(f"missing required key: {key}")
        return default
    try:
        return int(values[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {values[key]!r}") from None


def as_float_list(values, key):
    raw = values.get(key, "")
    items = [item.strip() for item in raw.split(",") if item.strip()]
    if not items:
        raise ConfigError(f"{key}: list must not be empty")
    try:
        return [float(item) for item in items]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}") from None


def as_bool(values, key, default):
    if key not in values:
        return default
    raw = values[key].lower()
    if raw in ("true", "yes", "1"):
        return True
    if raw in ("false", "no", "0"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {values[key]!r}")


def acquisition(values):
    try:
        return AcquisitionConfig(t_r=as_float(values, "t_r"), n_r=as_int(values, "n_r"),
                                 eta=as_float(values, "eta", 1.0))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def sbr_convention(values):
    conv = values.get("sbr_convention", "signal")
    if conv not in SBR_CONVENTIONS:
        raise ConfigError(f"sbr_convention must be one of {SBR_CONVENTIONS}, got {conv!r}")
    return conv


def scene_from_values(values):
    """Scene preset from parsed key-values (see :data:`SCENE_KEYS`)."""
    check_keys(values, SCENE_KEYS, SCENE_REQUIRED)
    if ("sbr" in values) == ("b_lambda" in values):
        raise ConfigError("exactly one of 'sbr' or 'b_lambda' must be given")
    acq = acquisition(values)
    common = dict(photon_level=as_float(values, "photon_level"), alpha=as_float(values, "alpha"),
                  tau=as_float(values, "tau"), acq=acq, sigma_t=as_float(values, "sigma_t"))
    try:
        if "sbr" in values:
            return scene_from_constraints(sbr=as_float(values, "sbr"),
                                          convention=sbr_convention(values), **common)
        return scene_from_background(b_lambda=as_float(values, "b_lambda"), **common)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_scene(path):
    return scene_from_values(read(path))


@dataclass(frozen=True)
class GridFile:
    """Parsed CRLB grid: one acquisition setup swept over SBR values."""

    values: dict
    sbrs: tuple
    include_noiseless: bool


GRID_KEYS = ("t_r", "n_r", "eta", "alpha", "tau", "sigma_t", "photon_level", "sbr",
             "include_noiseless", "sbr_convention")


def load_grid(path):
    values = read(path)
    check_keys(values, GRID_KEYS, SCENE_REQUIRED + ("sbr",))
    sbrs = as_float_list(values, "sbr")
    if any(s <= 0 for s in sbrs):
        raise ConfigError("sbr values must be positive")
    return GridFile(values, tuple(sbrs), as_bool(values, "include_noiseless", True))


SWEEP_KEYS = ("sbr", "photon_level", "n_r", "alpha", "tau", "sigma_t", "t_r", "eta", "trials",
              "seed", "pair", "sbr_convention")


def sweep_from_values(values, **overrides):
    """``SweepSpec`` from parsed key-values; keys left out take the verification preset."""
    from .experiments import SweepSpec

    check_keys(values, SWEEP_KEYS, ("sbr",))
    base = SweepSpec()
    fields = dict(
        sbrs=tuple(as_float_list(values, "sbr")),
        photon_level=as_float(values, "photon_level", base.photon_level),
        n_r=as_int(values, "n_r", base.n_r), alpha=as_float(values, "alpha", base.alpha),
        tau=as_float(values, "tau", base.tau), sigma_t=as_float(values, "sigma_t", base.sigma_t),
        t_r=as_float(values, "t_r", base.t_r), eta=as_float(values, "eta", base.eta),
        trials=as_int(values, "trials", base.trials), seed=as_int(values, "seed", base.seed),
        pair=values.get("pair", base.pair), convention=sbr_convention(values))
    fields.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return SweepSpec(**fields)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_sweep(path, **overrides):
    return sweep_from_values(read(path), **overrides)


RADIOMETRIC_KEYS = ("reflectance_pgm", "depth_pgm", "z_min", "z_max", "t_r", "n_r", "eta",
                    "sigma_t", "e0", "wavelength", "alpha_atm", "range_m", "f_number",
                    "pixel_width", "pixel_height", "a_illum", "w_bck", "c_dc", "sigma_j",
                    "focal_length", "raw_exponent")
_RADIOMETRIC_FLOATS = ("e0", "wavelength", "alpha_atm", "range_m", "f_number", "pixel_width",
                       "pixel_height", "a_illum", "w_bck", "c_dc", "sigma_j", "focal_length")


def load_radiometric(path):
    """Scene grid and jitter from reflectance/depth PGM images plus sensor constants.

    Image paths are relative to the configuration file. Returns
    ``(grid, sigma_j, values)``.
    """
    from .formats import pgm_to_range, pgm_to_unit
    from .simulator import RadiometricParams, default_sensor_acquisition, grid_from_radiometry

    path = Path(path)
    values = read(path)
    check_keys(values, RADIOMETRIC_KEYS, ("reflectance_pgm", "depth_pgm", "z_min", "z_max"))
    base = path.parent
    gamma = pgm_to_unit(base / values["reflectance_pgm"])
    depth = pgm_to_range(base / values["depth_pgm"], as_float(values, "z_min"),
                         as_float(values, "z_max"))
    sensor = default_sensor_acquisition()
    try:
        acq = AcquisitionConfig(t_r=as_float(values, "t_r", sensor.t_r),
                                n_r=as_int(values, "n_r", sensor.n_r),
                                eta=as_float(values, "eta", sensor.eta))
        extra = {k: as_float(values, k) for k in _RADIOMETRIC_FLOATS if k in values}
        params = RadiometricParams(gamma=gamma, raw_exponent=as_bool(values, "raw_exponent", False),
                                   **extra)
        grid = grid_from_radiometry(params, depth, acq, as_float(values, "sigma_t", 1e-9))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return grid, params.sigma_j, values
