import json
import shutil
import time

import numpy as np
import pytest

from irsense.calibration import PixelCalibration, PixelFit
from irsense.cli import main
from irsense.cli import formats
from irsense.cli.ingest import ingest, split_cycles
from irsense.errors import ConfigError
from irsense.sensor_chip import encode_response


def write_config(path, data):
    path.write_text(json.dumps(data, indent=2))
    return path


@pytest.fixture
def small_config(tmp_path):
    return write_config(tmp_path / "run.json", {
        "card": {"rows": 2, "cols": 4},
        "chip": {"noise_sigma_hz": 50.0},
        "sources": [{"center_x_m": 0.0, "center_y_m": 0.0, "width_m": 0.02, "height_m": 0.02,
                     "temperature_c": 70.0}],
        "timing": {"t_end_s": 30.0, "dt_s": 0.1, "record_every_s": 1.0},
        "seed": 3,
    })


def affine_calibration(rows, cols):
    cal = PixelCalibration()
    for r in range(rows):
        for c in range(cols):
            cal.pixels[(r, c)] = PixelFit(21.0 + 400_000 / 2500, -1 / 2500, 0.0)
    return cal


class TestSimulate:
    def test_default_config(self, tmp_path):
        start = time.perf_counter()
        assert main(["simulate", "--out-dir", str(tmp_path)]) == 0
        assert time.perf_counter() - start < 10.0
        header = (tmp_path / "plate_temperature.csv").read_text().splitlines()[0].split(",")
        assert header[0] == "time_s" and len(header) == 17 and header[1:4] == ["A1", "A2", "A3"]
        assert formats.read_map(tmp_path / "final_map.csv").shape == (4, 4)
        for name in ("die_temperature.csv", "frequency.csv", "final_map.pgm", "final_map.ppm",
                     "final_map.txt", "frames.bin"):
            assert (tmp_path / name).exists()

    def test_zero_sources_stay_at_ambient(self, tmp_path):
        cfg = write_config(tmp_path / "quiet.json", {"timing": {"t_end_s": 10.0}})
        assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
        assert np.all(formats.read_map(tmp_path / "final_map.csv") == 21.0)

    def test_deterministic(self, tmp_path, small_config):
        for run in ("a", "b"):
            assert main(["simulate", "--config", str(small_config), "--out-dir", str(tmp_path / run)]) == 0
        for name in ("frequency.csv", "plate_temperature.csv", "final_map.pgm", "final_map.ppm", "frames.bin"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_changes_noise(self, tmp_path, small_config):
        main(["simulate", "--config", str(small_config), "--out-dir", str(tmp_path / "a")])
        main(["simulate", "--config", str(small_config), "--out-dir", str(tmp_path / "b"), "--seed", "9"])
        assert (tmp_path / "a" / "frequency.csv").read_bytes() != (tmp_path / "b" / "frequency.csv").read_bytes()

    def test_dead_pixel_column_is_empty(self, tmp_path):
        cfg = write_config(tmp_path / "dead.json", {"card": {"rows": 1, "cols": 2},
                                                   "chip": {"dead_pixels": ["A2"]},
                                                   "timing": {"t_end_s": 1.0}})
        assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
        last = (tmp_path / "frequency.csv").read_text().splitlines()[-1].split(",")
        assert last[1] == "400000.000000" and last[2] == ""


class TestConfigErrors:
    def test_malformed_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"card": {"rows": 2,}\n')
        assert main(["simulate", "--config", str(bad)]) == 2
        assert "bad.json:1" in capsys.readouterr().err

    def test_unknown_key_names_file_and_line(self, tmp_path, capsys):
        bad = tmp_path / "extra.json"
        bad.write_text('{\n  "card": {"rows": 2},\n  "colour": "red"\n}\n')
        assert main(["simulate", "--config", str(bad)]) == 2
        err = capsys.readouterr().err
        assert "extra.json:3" in err and "colour" in err

    def test_type_error_names_key(self, tmp_path, capsys):
        bad = write_config(tmp_path / "typed.json", {"timing": {"dt_s": "fast"}})
        assert main(["simulate", "--config", str(bad)]) == 2
        assert "dt_s" in capsys.readouterr().err

    def test_source_needs_one_mode(self, tmp_path):
        bad = write_config(tmp_path / "src.json", {"sources": [
            {"center_x_m": 0, "center_y_m": 0, "width_m": 0.01, "height_m": 0.01}]})
        assert main(["simulate", "--config", str(bad)]) == 2

    def test_missing_file(self, tmp_path, capsys):
        assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == 2
        assert "nope.json" in capsys.readouterr().err

    def test_bad_calibration_file(self, tmp_path):
        cal = write_config(tmp_path / "cal.json", {"reference_distance_m": 0.01})
        stream = tmp_path / "s.bin"
        stream.write_bytes(b"")
        assert main(["ingest", str(stream), str(cal), "--out-dir", str(tmp_path)]) == 2


class TestRender:
    def test_golden_files(self, tmp_path, fixture_dir):
        shutil.copy(fixture_dir / "golden_map.csv", tmp_path)
        assert main(["render", str(tmp_path / "golden_map.csv"), "--cell", "4"]) == 0
        for ext in (".pgm", ".ppm", ".txt"):
            assert (tmp_path / f"golden_map{ext}").read_bytes() == (fixture_dir / f"golden_map{ext}").read_bytes()

    def test_default_cell_size(self, tmp_path):
        grid = np.arange(16.0).reshape(4, 4)
        formats.write_map(tmp_path / "m.csv", grid)
        assert main(["render", str(tmp_path / "m.csv")]) == 0
        assert (tmp_path / "m.pgm").read_bytes().startswith(b"P5\n128 128\n255\n")
        assert (tmp_path / "m.ppm").read_bytes().startswith(b"P3\n128 128\n255\n")

    def test_uniform_map(self):
        data = formats.pgm_bytes(np.full((3, 2), 33.0), cell=2)
        pixels = data[len(b"P5\n4 6\n255\n"):]
        assert len(set(pixels)) == 1

    def test_ragged_csv(self, tmp_path, capsys):
        (tmp_path / "r.csv").write_text("1,2,3\n4,5\n")
        assert main(["render", str(tmp_path / "r.csv")]) == 2
        assert "r.csv:2" in capsys.readouterr().err

    def test_map_round_trip(self, tmp_path):
        grid = np.array([[21.5, np.nan], [22.25, 30.0]])
        formats.write_map(tmp_path / "m.csv", grid)
        np.testing.assert_array_equal(formats.read_map(tmp_path / "m.csv"), grid)


class TestIngest:
    def stream(self, cycles, rows=2, cols=4, hz=350_000):
        data = bytearray()
        for _ in range(cycles):
            for r in range(rows):
                for c in range(cols):
                    data += encode_response(r, c, hz + 100 * (r * cols + c))
        return data

    def test_clean_stream(self):
        result = ingest(self.stream(3), affine_calibration(2, 4), (2, 4))
        assert len(result.cycles) == 3 and result.malformed == 0
        assert result.cycles[0][0, 0] == pytest.approx(21.0 + 50_000 / 2500)

    def test_corrupted_crc_is_skipped_and_counted(self):
        data = self.stream(2)
        data[7 * 2 + 6] ^= 0x01  # CRC of the third frame
        result = ingest(data, affine_calibration(2, 4), (2, 4))
        assert result.malformed == 1
        assert len(result.cycles) == 2
        assert np.isnan(result.cycles[0][0, 2]) and np.isfinite(result.cycles[1][0, 2])

    def test_garbage_between_frames(self):
        data = b"\x00\x13" + bytes(self.stream(1)) + b"\xff"
        result = ingest(data, affine_calibration(2, 4), (2, 4))
        assert len(result.cycles) == 1 and np.all(np.isfinite(result.cycles[0]))

    def test_mostly_broken_cycle_is_dropped(self):
        data = self.stream(2)
        for k in range(5):
            data[7 * k + 3] ^= 0x40
        with pytest.warns(RuntimeWarning):
            result = ingest(data, affine_calibration(2, 4), (2, 4))
        assert result.dropped == 1 and len(result.cycles) == 1

    def test_cycles_split_on_address_wrap(self):
        data = encode_response(0, 1, 1000) + encode_response(1, 0, 1000) + encode_response(0, 0, 1000)
        assert [len(c.frames) for c in split_cycles(data)] == [2, 1]

    def test_empty_stream_cli(self, tmp_path, capsys):
        formats.save_calibration(tmp_path / "cal.json", affine_calibration(2, 4))
        (tmp_path / "empty.bin").write_bytes(b"")
        assert main(["ingest", str(tmp_path / "empty.bin"), str(tmp_path / "cal.json"),
                     "--out-dir", str(tmp_path / "out")]) == 0
        assert "cycles 0" in capsys.readouterr().out

    def test_unreadable_stream(self, tmp_path):
        formats.save_calibration(tmp_path / "cal.json", affine_calibration(2, 4))
        assert main(["ingest", str(tmp_path / "missing.bin"), str(tmp_path / "cal.json")]) == 2

    def test_simulator_stream_round_trip(self, tmp_path, small_config):
        out = tmp_path / "sim"
        assert main(["simulate", "--config", str(small_config), "--out-dir", str(out)]) == 0
        cal = PixelCalibration()
        for r in range(2):
            for c in range(4):
                cal.pixels[(r, c)] = PixelFit(21.0 + 400_000 / 2500, -1 / 2500, 0.0)
        formats.save_calibration(tmp_path / "cal.json", cal)
        assert main(["ingest", str(out / "frames.bin"), str(tmp_path / "cal.json"),
                     "--out-dir", str(tmp_path / "ing")]) == 0
        rows = (tmp_path / "ing" / "live_map.csv").read_text().splitlines()
        die = (out / "die_temperature.csv").read_text().splitlines()
        assert len(rows) == len(die)
        decoded = np.array([float(v) for v in rows[-1].split(",")[1:]])
        truth = np.array([float(v) for v in die[-1].split(",")[1:]])
        # 50 Hz noise on a 2500 Hz/C die plus integer-Hz rounding
        np.testing.assert_allclose(decoded, truth, atol=5 * 50 / 2500 + 1e-3)
        assert (tmp_path / "ing" / "last_map.pgm").exists()


class TestCalibrateAndLocate:
    def test_calibrate_fit_writes_schema_file(self, tmp_path):
        from irsense.calibration import CalSample
        samples = [CalSample((r, c), t, 0.010, 400_000 - 2500 * (t - 21), 60.0 * k)
                   for k, t in enumerate([21.0, 30.0, 40.0, 50.0, 60.0]) for r in range(2) for c in range(2)]
        formats.write_samples(tmp_path / "ramp.csv", samples)
        assert main(["calibrate-fit", str(tmp_path / "ramp.csv"), "--out-dir", str(tmp_path)]) == 0
        data = json.loads((tmp_path / "calibration.json").read_text())
        assert set(data) == {"reference_distance_m", "plate_size_m", "pixels", "distance_gain"}
        assert data["pixels"][0]["b_c_per_hz"] == pytest.approx(-1 / 2500)
        cal, model = formats.load_calibration(tmp_path / "calibration.json")
        assert cal[(1, 1)].a == pytest.approx(21 + 400_000 / 2500)

    def test_sample_csv_header_is_checked(self, tmp_path):
        (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
        with pytest.raises(ConfigError):
            formats.read_samples(tmp_path / "bad.csv")

    def test_locate(self, tmp_path, capsys):
        from irsense.localization import forward_rise_map
        from irsense.radiation import Patch
        from irsense.thermal_network import CardSpec, HeatSource
        rise = forward_rise_map(HeatSource.prescribed(Patch(0.005, -0.004, 0.016, 0.016, 0.010), 70.0),
                                CardSpec()).rises
        formats.write_map(tmp_path / "map.csv", 21.0 + rise)
        assert main(["locate", str(tmp_path / "map.csv"), "--out-dir", str(tmp_path)]) == 0
        result = json.loads((tmp_path / "locate.json").read_text())
        assert result["x_m"] == pytest.approx(0.005, abs=2e-4)
        assert result["y_m"] == pytest.approx(-0.004, abs=2e-4)

    def test_locate_nothing(self, tmp_path):
        formats.write_map(tmp_path / "flat.csv", np.full((4, 4), 21.0))
        assert main(["locate", str(tmp_path / "flat.csv")]) == 1


class TestReplay:
    def test_passing_replay_exits_zero(self, tmp_path, capsys):
        assert main(["replay", "B", "--out-dir", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "RESULT PASS" in out and "strictly decreasing" in out
        report = json.loads((tmp_path / "report_B.json").read_text())
        assert report["passed"] and len(report["summary"]["sensed_rise_c"]) == 5

    def test_threshold_failure_keeps_report(self, tmp_path):
        # the fitted plate-referred slope cannot match the die slope (see README)
        assert main(["replay", "A", "--out-dir", str(tmp_path)]) == 1
        report = json.loads((tmp_path / "report_A.json").read_text())
        assert not report["passed"]
        assert (tmp_path / "calibration.json").exists() and (tmp_path / "ramp_samples.csv").exists()
        span = next(c for c in report["checks"] if c["name"].startswith("frequency span"))
        assert span["passed"]
