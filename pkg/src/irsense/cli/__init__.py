"""Command-line interface: ``irsense <command> [options]``.

Exit status is 0 on success, 1 when a replay misses a threshold or a
computation fails, and 2 for unreadable or invalid input files.
"""

import argparse
from dataclasses import replace
from importlib import resources
import json
from pathlib import Path
import sys

import numpy as np

from irsense.calibration import (DistanceModel, compensate_distance, fit_calibration,
                                 fit_distance)
from irsense.cli import formats
from irsense.errors import ConfigError, IRSenseError
from irsense.localization import RiseMap, locate_argmax, locate_refined
from irsense.sensor_chip import scan_cycle
from irsense.thermal_network import (CardSpec, build_network, die_map, pixel_name, plate_map,
                                     run_transient)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2


def default_config_path():
    return Path(str(resources.files("irsense.cli").joinpath("fixtures/default_config.json")))


def _out_dir(args, fallback="out"):
    out = Path(args.out_dir or fallback)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _card_for(args, shape):
    if getattr(args, "config", None):
        card = formats.load_config(args.config).card
        if (card.rows, card.cols) != tuple(shape):
            raise ConfigError(f"map is {shape[0]}x{shape[1]} but the card is "
                              f"{card.rows}x{card.cols}", args.config)
        return card
    return CardSpec(rows=shape[0], cols=shape[1])


def cmd_simulate(args):
    path = args.config or default_config_path()
    cfg = formats.load_config(path)
    seed = cfg.seed if args.seed is None else args.seed
    out = _out_dir(args, cfg.out_dir)
    card = cfg.card
    if args.distance is not None:
        cfg.sources = [replace(s, patch=replace(s.patch, plane_gap=args.distance))
                       for s in cfg.sources]
    net = build_network(card, cfg.ambient)
    res = run_transient(net, cfg.sources, cfg.t_end, cfg.dt, cfg.record_every)
    chips = cfg.chips(seed)
    plates, dies, freqs = [], [], []
    stream = bytearray()
    for t, temps in zip(res.times, res.temperatures):
        dmap = die_map(net, temps)
        plates.append(plate_map(net, temps))
        dies.append(dmap)
        grid = np.full((card.rows, card.cols), np.nan)
        for fr in scan_cycle(dmap, chips, cfg.poll_interval, t):
            grid[fr.row, fr.col] = fr.frequency
            stream += fr.payload
        freqs.append(grid)
    formats.write_series(out / "plate_temperature.csv", res.times, plates, card)
    formats.write_series(out / "die_temperature.csv", res.times, dies, card)
    formats.write_series(out / "frequency.csv", res.times, freqs, card)
    formats.write_map(out / "final_map.csv", plates[-1])
    formats.render_map(plates[-1], out / "final_map", cfg.cell_px)
    (out / "frames.bin").write_bytes(bytes(stream))
    print(f"simulated {cfg.t_end:g} s on a {card.rows}x{card.cols} card; outputs in {out}")
    return EXIT_OK


def cmd_replay(args):
    from irsense.cli.experiments import REPLAYS, load_fixture

    fx = load_fixture(args.config)
    out = _out_dir(args, f"replay_{args.experiment}")
    report = REPLAYS[args.experiment](fx, seed=args.seed or 0, out_dir=out)
    sys.stdout.write(report.text())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_calibrate_fit(args):
    samples = formats.read_samples(args.ramp)
    ramp = [s for s in samples if np.isclose(s.distance, args.reference_distance)]
    if not ramp:
        raise ConfigError(f"no samples at the reference distance {args.reference_distance} m",
                          args.ramp)
    cal = fit_calibration(ramp, args.reference_distance)
    model = DistanceModel(args.reference_distance, args.plate_size)
    if args.sweep:
        model = fit_distance(formats.read_samples(args.sweep), cal, args.ambient, model)
    out = _out_dir(args)
    target = out / "calibration.json"
    formats.save_calibration(target, cal, model)
    for (r, c), fit in sorted(cal.pixels.items()):
        print(f"{pixel_name(r, c)}: a={fit.a:.6g} C  b={fit.b:.6g} C/Hz  rms={fit.rms:.3f} C")
    print(f"distance gain {model.gain:.4f}; wrote {target}")
    return EXIT_OK


def cmd_ingest(args):
    from irsense.cli.ingest import ingest

    cal, model = formats.load_calibration(args.calibration)
    try:
        data = Path(args.stream).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read stream: {exc.strerror}", args.stream) from exc
    rows = 1 + max(r for r, _ in cal.pixels)
    cols = 1 + max(c for _, c in cal.pixels)
    result = ingest(data, cal, (rows, cols))
    if args.distance is not None:
        result.cycles = [args.ambient + compensate_distance(model, m - args.ambient, args.distance)
                         for m in result.cycles]
    out = _out_dir(args)
    card = CardSpec(rows=rows, cols=cols)
    formats.write_series(out / "live_map.csv", range(len(result.cycles)), result.cycles, card,
                         "cycle")
    if result.cycles:
        formats.write_map(out / "last_map.csv", result.cycles[-1])
        formats.render_map(result.cycles[-1], out / "last_map", args.cell)
    print(f"cycles {len(result.cycles)}  malformed frames {result.malformed}  "
          f"dropped cycles {result.dropped}")
    return EXIT_OK


def cmd_locate(args):
    temps = formats.read_map(args.map)
    card = _card_for(args, temps.shape)
    gap = args.distance if args.distance is not None else 0.010
    rise_map = RiseMap(temps - args.ambient, gap, np.isnan(temps))
    peak = locate_argmax(rise_map, args.noise_floor)
    est = locate_refined(rise_map, card, gap, args.source_size, ambient=args.ambient,
                         noise_floor=args.noise_floor)
    result = {
        "argmax": peak.name,
        "tied": [pixel_name(*p) for p in peak.tied],
        "x_m": est.x,
        "y_m": est.y,
        "source_temperature_c": est.strength,
        "residual_rms_c": est.residual,
        "position_sigma_m": [float(np.sqrt(max(est.covariance[0, 0], 0.0))),
                             float(np.sqrt(max(est.covariance[1, 1], 0.0)))],
        "converged": est.converged,
    }
    text = json.dumps(result, indent=2)
    print(text)
    if args.out_dir:
        (_out_dir(args) / "locate.json").write_text(text + "\n")
    return EXIT_OK


def cmd_render(args):
    grid = formats.read_map(args.map)
    out = _out_dir(args, Path(args.map).parent)
    paths = formats.render_map(grid, out / Path(args.map).stem, args.cell)
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration (JSON)")
    common.add_argument("--out-dir", help="output directory")
    common.add_argument("--seed", type=int, help="noise seed")
    common.add_argument("--distance", type=float, help="card-to-target distance in m")
    common.add_argument("--noise-floor", type=float, default=0.2,
                        help="minimum rise (C) accepted as a detection")

    parser = argparse.ArgumentParser(prog="irsense", description="IR sensor-pixel card tools")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run a transient simulation")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", parents=[common], help="replay a bench experiment")
    p.add_argument("experiment", choices=["A", "B", "C"])
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("calibrate-fit", parents=[common], help="fit a calibration file")
    p.add_argument("ramp", help="ramp sample CSV")
    p.add_argument("--sweep", help="distance sweep sample CSV")
    p.add_argument("--ambient", type=float, default=21.0)
    p.add_argument("--reference-distance", type=float, default=0.010)
    p.add_argument("--plate-size", type=float, default=0.100)
    p.set_defaults(func=cmd_calibrate_fit)

    p = sub.add_parser("ingest", parents=[common], help="decode a readout byte stream")
    p.add_argument("stream")
    p.add_argument("calibration")
    p.add_argument("--ambient", type=float, default=21.0)
    p.add_argument("--cell", type=int, default=32)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("locate", parents=[common], help="localize a hotspot in a map CSV")
    p.add_argument("map", help="CSV grid of pixel temperatures in C")
    p.add_argument("--ambient", type=float, default=21.0)
    p.add_argument("--source-size", type=float, default=0.016, help="source edge in m")
    p.set_defaults(func=cmd_locate)

    p = sub.add_parser("render", parents=[common], help="render a map CSV to PGM/PPM")
    p.add_argument("map")
    p.add_argument("--cell", type=int, default=32)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (IRSenseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
