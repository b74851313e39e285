"""On-disk formats: frame stacks, PGM images, CSV tables, key-value text."""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
import struct
from pathlib import Path

import numpy as np

from .model import AcquisitionConfig, PulseShape, SceneGrid
from .simulator import FrameStack

MAGIC = b"SPLF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIId")
HEADER_SIZE = _HEADER.size


class FormatError(ValueError):
    """A file does not follow the expected layout."""


# -- frame stacks ------------------------------------------------------------

def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_stack(stack: FrameStack, path, preset=None):
    """Binary frame file plus a JSON sidecar with seed, scene and truth maps.

    Layout: 28-byte little-endian header (magic, version, width, height,
    n_frames as uint32, t_r as float64) then row-major float64 timestamps,
    frame by frame, with NaN for "no detection".
    """
    path = Path(path)
    n, h, w = stack.frames.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, w, h, n, float(stack.scene.acq.t_r)))
        fh.write(np.ascontiguousarray(stack.frames, dtype="<f8").tobytes())
    grid = stack.scene
    meta = {
        "seed": stack.seed,
        "jitter": stack.jitter,
        "mode": stack.mode,
        "preset": preset or {},
        "acq": {"t_r": grid.acq.t_r, "n_r": grid.acq.n_r, "eta": grid.acq.eta},
        "pulse": {"energy": grid.pulse.energy, "sigma_t": grid.pulse.sigma_t},
        "truth": {"alpha": grid.alpha.tolist(), "tau": grid.tau.tolist(),
                  "b_lambda": grid.b_lambda.tolist()},
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n",
                                  encoding="utf-8")
    return path


def read_stack(path) -> FrameStack:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < HEADER_SIZE:
        raise FormatError(f"{path}: truncated header")
    magic, version, w, h, n, t_r = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = HEADER_SIZE + 8 * w * h * n
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    frames = np.frombuffer(data, dtype="<f8", offset=HEADER_SIZE).reshape(n, h, w).astype(float)
    try:
        meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
        acq = AcquisitionConfig(**meta["acq"])
        pulse = PulseShape(**meta["pulse"])
        truth = meta["truth"]
        grid = SceneGrid(np.array(truth["alpha"]), np.array(truth["tau"]),
                         np.array(truth["b_lambda"]), pulse, acq)
    except FileNotFoundError:
        raise FormatError(f"{path}: missing sidecar {sidecar_path(path).name}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad sidecar ({exc})") from None
    if grid.alpha.shape != (h, w) or acq.t_r != t_r:
        raise FormatError(f"{path}: sidecar does not match header")
    frames.setflags(write=False)
    return FrameStack(frames, grid, int(meta["seed"]), float(meta["jitter"]), meta["mode"],
                      meta={"preset": meta.get("preset", {})})


# -- PGM -----------------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"(?:\s*(?:#[^\n]*\n)?)*\s*(\S+)")


def read_pgm(path):
    """8- or 16-bit grayscale PGM (binary P5 or ASCII P2) as ``(array, maxval)``."""
    data = Path(path).read_bytes()
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if not m:
            raise FormatError(f"{path}: truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0]
    try:
        width, height, maxval = (int(x) for x in fields[1:])
    except ValueError:
        raise FormatError(f"{path}: malformed PGM header") from None
    if magic not in (b"P5", b"P2") or not 0 < maxval < 65536 or width < 1 or height < 1:
        raise FormatError(f"{path}: not a grayscale PGM")
    if magic == b"P2":
        values = data[pos:].split()
        if len(values) < width * height:
            raise FormatError(f"{path}: truncated PGM data")
        img = np.array([int(v) for v in values[:width * height]], dtype=np.int64)
    else:
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        count = width * height
        if len(data) - pos < count * dtype.itemsize:
            raise FormatError(f"{path}: truncated PGM data")
        img = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.int64)
    img = img.reshape(height, width)
    if img.max(initial=0) > maxval:
        raise FormatError(f"{path}: pixel exceeds maxval")
    return img, maxval


def write_pgm(path, img, maxval=65535):
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM images are 2-D")
    h, w = img.shape
    dtype = ">u2" if maxval > 255 else "u1"
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(np.clip(img, 0, maxval).astype(dtype).tobytes())


def pgm_to_unit(path):
    img, maxval = read_pgm(path)
    return img / maxval


def pgm_to_range(path, lo, hi):
    """Map gray levels linearly onto ``[lo, hi]``."""
    return lo + (hi - lo) * pgm_to_unit(path)


def map_to_pgm(path, values, lo=None, hi=None):
    """Write ``values`` as 16-bit PGM with linear scaling; returns ``(lo, hi)``.

    NaN pixels are written as zero.
    """
    values = np.asarray(values, dtype=float)
    finite = values[np.isfinite(values)]
    if lo is None:
        lo = float(finite.min()) if finite.size else 0.0
    if hi is None:
        hi = float(finite.max()) if finite.size else 1.0
    span = hi - lo if hi > lo else 1.0
    scaled = np.where(np.isfinite(values), np.round((values - lo) / span * 65535), 0)
    write_pgm(path, scaled.astype(np.int64), 65535)
    return lo, hi


# -- text tables -------------------------------------------------------------------

def fmt_float(x):
    """Shortest round-tripping representation; ``nan``/``inf`` spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def write_keyvalue(path, values: dict):
    lines = [f"{k} = {fmt_float(v) if isinstance(v, (float, np.floating)) else v}"
             for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
