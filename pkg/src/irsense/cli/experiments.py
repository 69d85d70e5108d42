"""Canned reproductions of the card's three bench experiments.

A  black-body temperature ramp at 10 mm and per-pixel affine calibration
B  distance sweep of a 50 C plate from 10 mm to 150 mm
C  700 mW transistor in front of pixels A2/B2 for 600 s, then localization

Every replay returns a :class:`Report` whose checks carry the acceptance
thresholds stored in ``fixtures/experiments.json``.
"""

from dataclasses import dataclass, field
from importlib import resources
import json
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from irsense.calibration import (CalSample, DistanceModel, fit_calibration, fit_distance,
                                 temperature_from_frequency)
from irsense.cli import formats
from irsense.localization import RiseMap, locate_argmax, locate_refined
from irsense.radiation import Patch
from irsense.sensor_chip import ChipModel, frequency_of, scan_cycle
from irsense.thermal_network import (CardSpec, HeatSource, build_network, die_map,
                                     parse_pixel_name, pixel_name, run_transient,
                                     solve_steady)


def load_fixture(path=None):
    """Experiment parameters and thresholds; the packaged file by default."""
    if path is None:
        return json.loads(resources.files("irsense.cli").joinpath("fixtures/experiments.json").read_text())
    return formats._load_json(path)[0]


@dataclass
class Check:
    name: str
    passed: bool
    value: object
    limit: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.value} ({self.limit})"


@dataclass
class Report:
    experiment: str
    summary: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def check(self, name, passed, value, limit):
        self.checks.append(Check(name, bool(passed), value, limit))

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "passed": self.passed,
            "summary": self.summary,
            "checks": [{"name": c.name, "passed": c.passed, "value": c.value, "limit": c.limit}
                       for c in self.checks],
        }

    def text(self):
        lines = [f"experiment {self.experiment}"]
        for k, v in self.summary.items():
            lines.append(f"  {k}: {v}")
        lines.extend(c.line() for c in self.checks)
        lines.append("RESULT " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines) + "\n"

    def write(self, out_dir):
        out = Path(out_dir)
        (out / f"report_{self.experiment}.json").write_text(
            json.dumps(self.to_dict(), indent=2, default=_jsonable) + "\n")
        (out / f"report_{self.experiment}.txt").write_text(self.text())


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(type(value))


# -- building blocks ------------------------------------------------------

def fixture_card(fx):
    spec = dict(fx["card"])
    board = spec.pop("board", "first")
    return CardSpec.second_board(**spec) if board == "second" else CardSpec(**spec)


def fixture_chips(fx, card, seed, noise=True):
    chip = fx["chip"]
    grid = []
    for r in range(card.rows):
        grid.append([
            ChipModel(base_frequency=chip["base_frequency_hz"], slope=chip["slope_hz_per_c"],
                      reference_temperature=chip["reference_temperature_c"],
                      noise_sigma=chip["noise_sigma_hz"] if noise else 0.0,
                      seed=seed * 1000 + r * card.cols + c)
            for c in range(card.cols)
        ])
    return grid


def plate_source(temperature, distance, plate_size):
    return HeatSource.prescribed(Patch(0.0, 0.0, plate_size, plate_size, distance), temperature)


def _hold(card, ambient, source, dwell, sample_every, dt):
    net = build_network(card, ambient)
    return net, run_transient(net, [source], dwell, dt, sample_every)


def simulate_plate_hold(card, chips, plate_temperature, distance, plate_size, ambient,
                        dwell, sample_every, dt, start_time=0.0, noise=True):
    """Card placed in front of a held plate; one sample per pixel per reading."""
    net, res = _hold(card, ambient, plate_source(plate_temperature, distance, plate_size),
                     dwell, sample_every, dt)
    samples = []
    for t, temps in zip(res.times[1:], res.temperatures[1:]):
        dies = die_map(net, temps)
        for (r, c) in card.pixels():
            f = frequency_of(chips[r][c], dies[r, c], noise)
            samples.append(CalSample((r, c), plate_temperature, distance, f, start_time + t))
    return samples


def simulate_ramp(fx, card, chips, noise=True):
    cfg = fx["calibration"]
    samples = []
    t0 = 0.0
    for sp in cfg["setpoints_c"]:
        samples += simulate_plate_hold(card, chips, sp, cfg["distance_m"], cfg["plate_size_m"],
                                       fx["ambient_c"], cfg["dwell_s"], cfg["sample_every_s"],
                                       cfg["dt_s"], t0, noise)
        t0 += cfg["dwell_s"]
    return samples


def simulate_sweep(fx, card, chips, noise=True):
    cal, sw = fx["calibration"], fx["sweep"]
    samples = []
    t0 = 0.0
    for d in sw["distances_m"]:
        samples += simulate_plate_hold(card, chips, sw["plate_temperature_c"], d,
                                       cal["plate_size_m"], fx["ambient_c"], sw["dwell_s"],
                                       cal["sample_every_s"], cal["dt_s"], t0, noise)
        t0 += sw["dwell_s"]
    return samples


def calibrate(fx, card, seed):
    chips = fixture_chips(fx, card, seed)
    samples = simulate_ramp(fx, card, chips)
    return fit_calibration(samples, fx["calibration"]["distance_m"]), samples


def readings_grid(cal, card, frequencies):
    grid = np.full((card.rows, card.cols), np.nan)
    for (r, c), f in frequencies.items():
        grid[r, c] = temperature_from_frequency(cal, (r, c), f).temperature
    return grid


def settling_fraction(card, ambient, plate_temperature, distance, plate_size, at_time,
                      duration, dt=0.1):
    """|T(at_time) - T_inf| / |T_inf - T_0| for the hottest plate node."""
    src = plate_source(plate_temperature, distance, plate_size)
    net = build_network(card, ambient)
    steady = solve_steady(net, [src])
    res = run_transient(net, [src], duration, dt, 1.0)
    plates = [net.plate_nodes[p] for p in card.pixels()]
    k = max(plates, key=lambda i: steady[i])
    idx = int(round(at_time / 1.0))
    return abs(res.temperatures[idx, k] - steady[k]) / abs(steady[k] - ambient)


# -- replays --------------------------------------------------------------

def replay_a(fx=None, seed=0, out_dir=None):
    fx = fx or load_fixture()
    card = fixture_card(fx)
    th = fx["thresholds"]
    cal, samples = calibrate(fx, card, seed)
    chip_slope = fx["chip"]["slope_hz_per_c"]
    setpoints = fx["calibration"]["setpoints_c"]

    slopes = {pixel_name(*p): 1.0 / fit.b for p, fit in cal.pixels.items()}
    spans = {name: abs(s) * th["span_range_c"] for name, s in slopes.items()}
    last = {}
    for s in samples:
        last[(s.pixel, s.plate_temperature)] = s.frequency
    lo, hi = min(setpoints), max(setpoints)
    measured = {pixel_name(*p): float(last[(p, lo)] - last[(p, hi)]) for p in card.pixels()}

    report = Report("A")
    report.summary = {
        "board": f"{card.rows}x{card.cols}",
        "setpoints_c": setpoints,
        "fitted_slope_hz_per_c": slopes,
        "fit_rms_c": {pixel_name(*p): fit.rms for p, fit in cal.pixels.items()},
        f"frequency_drop_{lo:g}_to_{hi:g}_c_hz": measured,
        "configured_die_slope_hz_per_c": chip_slope,
        "pixel_A3_fit": {"a_c": cal.pixels[(0, 2)].a, "b_c_per_hz": cal.pixels[(0, 2)].b},
    }
    mean_span = float(np.mean(list(spans.values())))
    report.check("frequency span over 40 C", abs(mean_span / th["span_hz"] - 1) <= th["span_rel_tol"],
                 round(mean_span, 1), f"{th['span_hz']:g} Hz +/- {th['span_rel_tol']:.0%}")
    worst = max(abs(s / chip_slope - 1) for s in slopes.values())
    report.check("fitted slope vs configured chip slope", worst <= th["slope_rel_tol"],
                 round(worst, 4), f"relative deviation <= {th['slope_rel_tol']:.0%}")
    st = fx["settling"]
    frac = settling_fraction(card, fx["ambient_c"], st["plate_temperature_c"], st["distance_m"],
                             fx["calibration"]["plate_size_m"], th["settle_time_s"],
                             st["duration_s"])
    report.check("settling at 240 s", frac <= th["settle_fraction_max"], round(frac, 4),
                 f"<= {th['settle_fraction_max']:.0%} of the step")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        formats.write_samples(out / "ramp_samples.csv", samples)
        formats.save_calibration(out / "calibration.json", cal,
                                 DistanceModel(fx["calibration"]["distance_m"],
                                               fx["calibration"]["plate_size_m"], card.pixel_size))
        report.write(out)
    return report


def replay_b(fx=None, seed=0, out_dir=None):
    fx = fx or load_fixture()
    card = fixture_card(fx)
    th = fx["thresholds"]
    ambient = fx["ambient_c"]
    cal, _ = calibrate(fx, card, seed)
    chips = fixture_chips(fx, card, seed + 1)
    samples = simulate_sweep(fx, card, chips)
    template = DistanceModel(fx["calibration"]["distance_m"], fx["calibration"]["plate_size_m"],
                             card.pixel_size)
    model = fit_distance(samples, cal, ambient, template)

    distances = fx["sweep"]["distances_m"]
    last = {}
    for s in samples:
        last[(s.distance, s.pixel)] = s
    rises = []
    for d in distances:
        vals = [temperature_from_frequency(cal, p, last[(d, p)].frequency).temperature - ambient
                for p in card.pixels()]
        rises.append(float(np.mean(vals)))
    ratio = rises[-1] / rises[0]
    decreasing = all(b < a for a, b in zip(rises, rises[1:]))

    report = Report("B")
    report.summary = {
        "plate_temperature_c": fx["sweep"]["plate_temperature_c"],
        "distance_mm": [round(d * 1000, 3) for d in distances],
        "sensed_rise_c": [round(v, 4) for v in rises],
        "view_factor_ratio": [round(model.ratio(d), 5) for d in distances],
        "fitted_gain": model.gain,
        "fit_rms_c": model.rms,
    }
    report.check("sensed rise strictly decreasing", decreasing,
                 [round(v, 3) for v in rises], "over 10..150 mm")
    report.check("rise(150 mm) / rise(10 mm)", ratio < th["sweep_ratio_max"], round(ratio, 4),
                 f"< {th['sweep_ratio_max']}")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        formats.write_samples(out / "sweep_samples.csv", samples)
        formats.save_calibration(out / "calibration.json", cal, model)
        report.write(out)
    return report


def hotspot_source(fx, card, resistance):
    hs = fx["hotspot"]
    (r0, c0), (r1, c1) = (parse_pixel_name(n) for n in hs["between"])
    x0, y0 = card.pixel_center(r0, c0)
    x1, y1 = card.pixel_center(r1, c1)
    patch = Patch((x0 + x1) / 2, (y0 + y1) / 2, hs["width_m"], hs["height_m"], hs["gap_m"],
                  hs["emissivity"])
    return HeatSource.driven(patch, hs["power_w"], resistance, hs["capacitance_j_per_k"])


def _hotspot_run(fx, card, resistance, record_every):
    hs = fx["hotspot"]
    net = build_network(card, fx["ambient_c"])
    src = hotspot_source(fx, card, resistance)
    res = run_transient(net, [src], hs["duration_s"], fx["calibration"]["dt_s"], record_every)
    return net, res, src


def tune_hotspot(fx, card, cal):
    """Source body resistance for which the hottest noiseless reading hits the target."""
    hs = fx["hotspot"]
    chips = fixture_chips(fx, card, 0, noise=False)

    def excess(resistance):
        net, res, _ = _hotspot_run(fx, card, resistance, hs["duration_s"])
        dies = die_map(net, res.final())
        freqs = {(r, c): frequency_of(chips[r][c], dies[r, c]) for (r, c) in card.pixels()}
        return np.nanmax(readings_grid(cal, card, freqs)) - hs["target_reading_c"]

    lo, hi = hs["resistance_bracket_k_per_w"]
    return brentq(excess, lo, hi, xtol=1e-6, rtol=1e-10)


def replay_c(fx=None, seed=0, out_dir=None):
    fx = fx or load_fixture()
    card = fixture_card(fx)
    th = fx["thresholds"]
    hs = fx["hotspot"]
    ambient = fx["ambient_c"]
    cal, _ = calibrate(fx, card, seed)
    resistance = tune_hotspot(fx, card, cal)

    net, res, src = _hotspot_run(fx, card, resistance, hs["record_every_s"])
    chips = fixture_chips(fx, card, seed + 2)
    stream = bytearray()
    series = []
    for t, temps in zip(res.times, res.temperatures):
        frames = scan_cycle(die_map(net, temps), chips, hs["poll_interval_s"], t)
        for fr in frames:
            stream += fr.payload
        series.append(readings_grid(cal, card, {(f.row, f.col): f.frequency for f in frames}))
    final = series[-1]
    rise = final - ambient
    order = np.argsort(final.ravel(), kind="stable")[::-1]
    top2 = {pixel_name(*divmod(int(k), card.cols)) for k in order[:2]}
    expected = set(hs["between"])
    argmax = locate_argmax(RiseMap(rise, hs["gap_m"]))
    spread = float(final.max() - final.min())
    estimate = locate_refined(RiseMap(rise, hs["gap_m"]), card, hs["gap_m"],
                              (hs["width_m"], hs["height_m"]))
    miss = float(np.hypot(estimate.x - src.patch.center_x, estimate.y - src.patch.center_y))
    source_temp = float(res.final()[net.source_nodes[src]])

    report = Report("C")
    report.summary = {
        "board": f"{card.rows}x{card.cols}",
        "power_w": hs["power_w"],
        "tuned_source_resistance_k_per_w": resistance,
        "source_temperature_at_end_c": round(source_temp, 3),
        "final_readings_c": np.round(final, 3).tolist(),
        "argmax": argmax.name,
        "estimate_mm": [round(estimate.x * 1000, 3), round(estimate.y * 1000, 3)],
        "true_center_mm": [round(src.patch.center_x * 1000, 3), round(src.patch.center_y * 1000, 3)],
        "estimate_converged": estimate.converged,
    }
    report.check("two hottest pixels", top2 == expected, sorted(top2), f"== {sorted(expected)}")
    report.check("every pixel warmed", bool(np.all(rise > 0)), round(float(rise.min()), 4), "> 0 C")
    report.check("hottest reading", abs(final.max() - hs["target_reading_c"]) < 0.1,
                 round(float(final.max()), 3), f"{hs['target_reading_c']} C (tuned)")
    report.check("max-min spread", th["spread_min_c"] <= spread <= th["spread_max_c"],
                 round(spread, 3), f"in [{th['spread_min_c']}, {th['spread_max_c']}] C")
    report.check("localization error", miss <= th["locate_tol_m"], round(miss * 1000, 3),
                 f"<= {th['locate_tol_m'] * 1000:g} mm")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        formats.write_series(out / "readings.csv", res.times, series, card)
        formats.write_map(out / "final_map.csv", final)
        formats.render_map(final, out / "final_map")
        (out / "frames.bin").write_bytes(bytes(stream))
        formats.save_calibration(out / "calibration.json", cal,
                                 DistanceModel(fx["calibration"]["distance_m"],
                                               fx["calibration"]["plate_size_m"], card.pixel_size))
        report.write(out)
    return report


REPLAYS = {"A": replay_a, "B": replay_b, "C": replay_c}
