"""File formats: run configs, calibration files, CSV maps and PGM/PPM images."""

import csv
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from irsense.calibration import CalSample, DistanceModel, PixelCalibration, PixelFit
from irsense.errors import ConfigError
from irsense.radiation import Patch
from irsense.sensor_chip import ChipModel
from irsense.thermal_network import CardSpec, HeatSource, pixel_name

_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NON_NEGATIVE = {"type": "number", "minimum": 0}
_UNIT = {"type": "number", "minimum": 0, "maximum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "card": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rows": {"type": "integer", "minimum": 1, "maximum": 16},
                "cols": {"type": "integer", "minimum": 1, "maximum": 16},
                "pixel_size_m": _POSITIVE,
                "pitch_m": _POSITIVE,
                "copper_thickness_m": _POSITIVE,
                "board_thickness_m": _POSITIVE,
                "attach_resistance_k_per_w": _POSITIVE,
                "plate_emissivity": _UNIT,
                "film_coefficient_w_per_m2k": _NON_NEGATIVE,
                "board_conductivity_w_per_mk": _NON_NEGATIVE,
                "die_capacitance_j_per_k": _POSITIVE,
                "die_size_m": _POSITIVE,
            },
        },
        "environment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"ambient_c": _NUMBER, "gap_m": {"type": "number", "minimum": 0.001}},
        },
        "chip": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "base_frequency_hz": _POSITIVE,
                "slope_hz_per_c": _NUMBER,
                "reference_temperature_c": _NUMBER,
                "noise_sigma_hz": _NON_NEGATIVE,
                "dead_pixels": {"type": "array", "items": {"type": "string"}},
            },
        },
        "sources": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["center_x_m", "center_y_m", "width_m", "height_m"],
                "properties": {
                    "center_x_m": _NUMBER,
                    "center_y_m": _NUMBER,
                    "width_m": _POSITIVE,
                    "height_m": _POSITIVE,
                    "emissivity": _UNIT,
                    "temperature_c": _NUMBER,
                    "power_w": _NON_NEGATIVE,
                    "resistance_k_per_w": _POSITIVE,
                    "capacitance_j_per_k": _POSITIVE,
                },
                "oneOf": [{"required": ["temperature_c"]}, {"required": ["power_w"]}],
            },
        },
        "timing": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_end_s": _POSITIVE,
                "dt_s": _POSITIVE,
                "record_every_s": _POSITIVE,
                "poll_interval_s": _POSITIVE,
            },
        },
        "seed": {"type": "integer"},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "cell_px": {"type": "integer", "minimum": 1}},
        },
    },
}

_CARD_KEYS = {
    "rows": "rows", "cols": "cols", "pixel_size_m": "pixel_size", "pitch_m": "pitch",
    "copper_thickness_m": "copper_thickness", "board_thickness_m": "board_thickness",
    "attach_resistance_k_per_w": "attach_resistance", "plate_emissivity": "plate_emissivity",
    "film_coefficient_w_per_m2k": "film_coefficient",
    "board_conductivity_w_per_mk": "board_conductivity",
    "die_capacitance_j_per_k": "die_capacitance", "die_size_m": "die_size",
}


@dataclass
class RunConfig:
    card: CardSpec = field(default_factory=CardSpec)
    ambient: float = 21.0
    gap: float = 0.010
    chip: dict = field(default_factory=dict)
    dead_pixels: list = field(default_factory=list)
    sources: list = field(default_factory=list)
    t_end: float = 600.0
    dt: float = 0.1
    record_every: float = 1.0
    poll_interval: float = 0.1
    seed: int = 0
    out_dir: str = "out"
    cell_px: int = 32

    def chips(self, seed=None):
        """Per-pixel chip models; noise streams are seeded per pixel."""
        base = self.seed if seed is None else seed
        dead = set(self.dead_pixels)
        grid = []
        for r in range(self.card.rows):
            row = []
            for c in range(self.card.cols):
                row.append(ChipModel(seed=base * 1000 + r * self.card.cols + c,
                                     dead=pixel_name(r, c) in dead, **self.chip))
            grid.append(row)
        return grid


def _line_of(text, key):
    if key is None:
        return None
    match = re.search(r'"%s"\s*:' % re.escape(str(key)), text)
    if match is None:
        return None
    return text.count("\n", 0, match.start()) + 1


def _load_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read file: {exc.strerror}", path) from exc
    try:
        return json.loads(text), text
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", path, exc.lineno) from exc


def load_config(path):
    data, text = _load_json(path)
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        key = None
        if err.validator == "additionalProperties":
            extra = re.findall(r"'([^']+)' was unexpected", err.message)
            key = extra[0] if extra else None
            message = f"unknown key {key!r} in {where}"
        else:
            for part in reversed(list(err.absolute_path)):
                if isinstance(part, str):
                    key = part
                    break
            message = f"{where}: {err.message}"
        raise ConfigError(message, path, _line_of(text, key))
    return config_from_dict(data, path)


def config_from_dict(data, path=None):
    card_args = {_CARD_KEYS[k]: v for k, v in data.get("card", {}).items()}
    env = data.get("environment", {})
    chip_raw = dict(data.get("chip", {}))
    dead = chip_raw.pop("dead_pixels", [])
    chip = {}
    names = {"base_frequency_hz": "base_frequency", "slope_hz_per_c": "slope",
             "reference_temperature_c": "reference_temperature", "noise_sigma_hz": "noise_sigma"}
    for k, v in chip_raw.items():
        chip[names[k]] = v
    timing = data.get("timing", {})
    output = data.get("output", {})
    cfg = RunConfig(
        card=CardSpec(**card_args),
        ambient=env.get("ambient_c", 21.0),
        gap=env.get("gap_m", 0.010),
        chip=chip,
        dead_pixels=list(dead),
        t_end=timing.get("t_end_s", 600.0),
        dt=timing.get("dt_s", 0.1),
        record_every=timing.get("record_every_s", 1.0),
        poll_interval=timing.get("poll_interval_s", 0.1),
        seed=data.get("seed", 0),
        out_dir=output.get("dir", "out"),
        cell_px=output.get("cell_px", 32),
    )
    try:
        cfg.card.validate()
    except ValueError as exc:
        raise ConfigError(f"card: {exc}", path) from exc
    for k, s in enumerate(data.get("sources", [])):
        patch = Patch(s["center_x_m"], s["center_y_m"], s["width_m"], s["height_m"],
                      cfg.gap, s.get("emissivity", 0.95))
        if "power_w" in s:
            src = HeatSource.driven(patch, s["power_w"], s.get("resistance_k_per_w", 50.0),
                                    s.get("capacitance_j_per_k", 2.0))
        else:
            src = HeatSource.prescribed(patch, s["temperature_c"])
        try:
            src.validate(cfg.ambient)
        except ValueError as exc:
            raise ConfigError(f"sources/{k}: {exc}", path) from exc
        cfg.sources.append(src)
    return cfg


# -- calibration files --------------------------------------------------

CALIBRATION_SCHEMA = {
    "type": "object",
    "required": ["reference_distance_m", "plate_size_m", "pixels", "distance_gain"],
    "additionalProperties": False,
    "properties": {
        "reference_distance_m": _POSITIVE,
        "plate_size_m": _POSITIVE,
        "distance_gain": _NUMBER,
        "pixels": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["row", "col", "a_c", "b_c_per_hz", "rms_c"],
                "properties": {
                    "row": {"type": "integer", "minimum": 0, "maximum": 15},
                    "col": {"type": "integer", "minimum": 0, "maximum": 15},
                    "a_c": _NUMBER,
                    "b_c_per_hz": _NUMBER,
                    "rms_c": _NON_NEGATIVE,
                },
            },
        },
    },
}


def calibration_to_dict(cal, distance_model=None):
    dm = distance_model or DistanceModel(reference_distance=cal.reference_distance)
    return {
        "reference_distance_m": cal.reference_distance,
        "plate_size_m": dm.plate_size,
        "pixels": [
            {"row": r, "col": c, "a_c": fit.a, "b_c_per_hz": fit.b, "rms_c": fit.rms}
            for (r, c), fit in sorted(cal.pixels.items())
        ],
        "distance_gain": dm.gain,
    }


def save_calibration(path, cal, distance_model=None):
    Path(path).write_text(json.dumps(calibration_to_dict(cal, distance_model), indent=2) + "\n")


def load_calibration(path, pixel_size=0.010):
    data, text = _load_json(path)
    try:
        jsonschema.validate(data, CALIBRATION_SCHEMA)
    except jsonschema.ValidationError as exc:
        key = next((p for p in reversed(list(exc.absolute_path)) if isinstance(p, str)), None)
        raise ConfigError(f"calibration: {exc.message}", path, _line_of(text, key)) from exc
    cal = PixelCalibration(reference_distance=data["reference_distance_m"])
    for p in data["pixels"]:
        if p["b_c_per_hz"] == 0:
            raise ConfigError(f"pixel ({p['row']}, {p['col']}) has zero slope", path)
        cal.pixels[(p["row"], p["col"])] = PixelFit(p["a_c"], p["b_c_per_hz"], p["rms_c"])
    model = DistanceModel(reference_distance=data["reference_distance_m"],
                          plate_size=data["plate_size_m"], pixel_size=pixel_size,
                          gain=data["distance_gain"])
    return cal, model


# -- CSV ----------------------------------------------------------------

def _fmt(value):
    return "" if value is None or (isinstance(value, float) and np.isnan(value)) else f"{value:.6f}"


def write_series(path, times, grids, card, index_name="time_s"):
    """Time series with one column per pixel (row-major) after ``time_s``."""
    header = [index_name] + [pixel_name(r, c) for r, c in card.pixels()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, grid in zip(times, grids):
            w.writerow([f"{t:.3f}"] + [_fmt(float(v)) for v in np.asarray(grid, dtype=float).ravel()])


def write_map(path, grid):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(grid, dtype=float):
            w.writerow([_fmt(float(v)) for v in row])


def read_map(path):
    """Rectangular numeric CSV -> 2-D array (empty cells become NaN)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read map: {exc.strerror}", path) from exc
    rows = [row for row in csv.reader(io.StringIO(text)) if row]
    if not rows:
        raise ConfigError("map CSV is empty", path)
    width = len(rows[0])
    values = []
    for k, row in enumerate(rows, start=1):
        if len(row) != width:
            raise ConfigError(f"ragged map: {len(row)} columns, expected {width}", path, k)
        try:
            values.append([float(v) if v.strip() else np.nan for v in row])
        except ValueError as exc:
            raise ConfigError(f"non-numeric map entry ({exc})", path, k) from exc
    return np.array(values)


SAMPLE_FIELDS = ["row", "col", "plate_temperature_c", "distance_m", "frequency_hz", "timestamp_s"]


def write_samples(path, samples):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_FIELDS)
        for s in samples:
            w.writerow([s.pixel[0], s.pixel[1], f"{s.plate_temperature:.6f}", f"{s.distance:.6f}",
                        f"{s.frequency:.3f}", f"{s.timestamp:.3f}"])


def read_samples(path):
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read samples: {exc.strerror}", path) from exc
    out = []
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SAMPLE_FIELDS:
            raise ConfigError(f"sample CSV header must be {','.join(SAMPLE_FIELDS)}", path, 1)
        for k, row in enumerate(reader, start=2):
            try:
                out.append(CalSample((int(row["row"]), int(row["col"])),
                                     float(row["plate_temperature_c"]), float(row["distance_m"]),
                                     float(row["frequency_hz"]), float(row["timestamp_s"])))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad sample row ({exc})", path, k) from exc
    return out


# -- images -------------------------------------------------------------

# black -> purple -> red -> yellow -> white, a conventional thermal ramp
_PALETTE = np.array([
    [0, 0, 0],
    [84, 0, 140],
    [200, 20, 60],
    [255, 140, 0],
    [255, 230, 60],
    [255, 255, 255],
], dtype=float)


def _normalise(grid):
    grid = np.asarray(grid, dtype=float)
    finite = grid[np.isfinite(grid)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 0.0
    if hi > lo:
        unit = (grid - lo) / (hi - lo)
    else:
        unit = np.full(grid.shape, 0.5)
    return np.where(np.isfinite(unit), unit, 0.0), lo, hi


def _upscale(grid, cell):
    return np.repeat(np.repeat(grid, cell, axis=0), cell, axis=1)


def grayscale(grid):
    unit, lo, hi = _normalise(grid)
    return np.rint(unit * 255).astype(np.uint8), lo, hi


def colorize(grid):
    unit, lo, hi = _normalise(grid)
    pos = unit * (len(_PALETTE) - 1)
    k = np.minimum(pos.astype(int), len(_PALETTE) - 2)
    frac = (pos - k)[..., None]
    rgb = _PALETTE[k] * (1 - frac) + _PALETTE[k + 1] * frac
    return np.rint(rgb).astype(np.uint8), lo, hi


def pgm_bytes(grid, cell=32):
    gray, _, _ = grayscale(grid)
    img = _upscale(gray, cell)
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def ppm_bytes(grid, cell=32):
    rgb, _, _ = colorize(grid)
    img = _upscale(rgb, cell)
    h, w, _ = img.shape
    lines = [f"P3\n{w} {h}\n255"]
    for row in img:
        lines.append(" ".join(f"{v}" for v in row.ravel()))
    return ("\n".join(lines) + "\n").encode("ascii")


def render_map(grid, stem, cell=32):
    """Write ``stem``.pgm, ``stem``.ppm and the ``stem``.txt scale sidecar."""
    stem = Path(stem)
    _, lo, hi = _normalise(grid)
    stem.with_suffix(".pgm").write_bytes(pgm_bytes(grid, cell))
    stem.with_suffix(".ppm").write_bytes(ppm_bytes(grid, cell))
    rows, cols = np.asarray(grid).shape
    stem.with_suffix(".txt").write_text(
        f"rows {rows}\ncols {cols}\ncell_px {cell}\nmin {lo:.6f}\nmax {hi:.6f}\n"
        "scale linear; black=min, white=max\n")
    return stem.with_suffix(".pgm"), stem.with_suffix(".ppm"), stem.with_suffix(".txt")
