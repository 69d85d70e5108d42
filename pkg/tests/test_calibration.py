import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from irsense.calibration import (CalSample, DistanceModel, attenuate,
                                 compensate_distance, fit_calibration, fit_distance, fit_pixel,
                                 temperature_from_frequency)
from irsense.cli.experiments import (fixture_card, fixture_chips, load_fixture, plate_source,
                                     simulate_ramp, simulate_sweep)
from irsense.errors import CalibrationLookupError, FitError, OutOfRangeError, PreconditionError
from irsense.radiation import Patch
from irsense.sensor_chip import frequency_of
from irsense.thermal_network import build_network, die_map, solve_steady
from oracles import analytic_view_factor


def affine_samples(temps, pixel=(0, 0), distance=0.010, repeats=1):
    out = []
    for k, t in enumerate(temps):
        f = 400_000.0 - 2500.0 * (t - 21.0)
        for j in range(repeats):
            out.append(CalSample(pixel, t, distance, f, timestamp=60.0 * (k * repeats + j)))
    return out


@pytest.fixture(scope="module")
def experiment():
    fx = load_fixture()
    card = fixture_card(fx)
    return fx, card


@pytest.fixture(scope="module")
def noiseless_calibration(experiment):
    fx, card = experiment
    chips = fixture_chips(fx, card, 0, noise=False)
    return fit_calibration(simulate_ramp(fx, card, chips, noise=False)), chips


class TestFitPixel:
    def test_exact_affine_recovery(self):
        fit = fit_pixel(affine_samples([21, 30, 40, 50, 60]))
        assert fit.b == pytest.approx(-1 / 2500, rel=1e-9)
        assert fit.a == pytest.approx(21 + 400_000 / 2500, rel=1e-9)
        assert fit.rms < 1e-9

    def test_only_settled_samples_are_used(self):
        samples = affine_samples([30, 40, 50])
        transient = [CalSample((0, 0), 40.0, 0.010, 123_456.0, timestamp=-1.0)]
        fit = fit_pixel(transient + samples)
        assert fit.b == pytest.approx(-1 / 2500, rel=1e-9)
        assert fit.n_points == 3

    def test_single_set_point(self):
        with pytest.raises(FitError):
            fit_pixel(affine_samples([40, 40, 40]))

    def test_empty(self):
        with pytest.raises(FitError):
            fit_pixel([])

    def test_mixed_distances(self):
        samples = affine_samples([30, 40]) + affine_samples([50], distance=0.02)
        with pytest.raises(PreconditionError):
            fit_pixel(samples)

    def test_single_pixel_only(self):
        with pytest.raises(PreconditionError):
            fit_pixel(affine_samples([30, 40]) + affine_samples([50], pixel=(0, 1)))

    def test_constant_frequency(self):
        samples = [CalSample((0, 0), t, 0.010, 350_000.0) for t in (30.0, 40.0)]
        with pytest.raises(FitError):
            fit_pixel(samples)

    @pytest.mark.parametrize("setpoints", [[30.0, 40.0, 50.0, 60.0], [21.0, 30.0, 40.0, 50.0, 60.0]])
    def test_simulated_ramp_slope(self, experiment, setpoints):
        fx, card = experiment
        fx = dict(fx, calibration=dict(fx["calibration"], setpoints_c=setpoints))
        samples = simulate_ramp(fx, card, fixture_chips(fx, card, seed=11))
        cal = fit_calibration(samples)
        slopes = np.array([fit.b for fit in cal.pixels.values()])
        tol = 0.02 if setpoints[0] == 30.0 else 0.05
        np.testing.assert_allclose(slopes, -1 / 2500, rtol=tol)

    @given(st.floats(-5000, 5000).filter(lambda s: abs(s) > 1), st.floats(1e5, 1e6))
    def test_slope_sign_follows_chip(self, slope, base):
        samples = [CalSample((0, 0), t, 0.010, base + slope * (t - 21.0)) for t in (30, 40, 50, 60)
                   if base + slope * (t - 21.0) > 0]
        if len(samples) < 2:
            return
        assert np.sign(fit_pixel(samples).b) == np.sign(slope)


class TestReadings:
    @pytest.fixture
    def cal(self):
        return fit_calibration(affine_samples([21, 30, 40, 50, 60]))

    def test_on_curve_point(self, cal):
        f50 = cal[(0, 0)].frequency(50.0)
        reading = temperature_from_frequency(cal, (0, 0), f50)
        assert reading.temperature == pytest.approx(50.0, abs=max(cal[(0, 0)].rms, 1e-9))
        assert not reading.suspect

    def test_100khz_is_40c(self, cal):
        f21 = cal[(0, 0)].frequency(21.0)
        rise = (temperature_from_frequency(cal, (0, 0), f21 - 100_000).temperature
                - temperature_from_frequency(cal, (0, 0), f21).temperature)
        assert rise == pytest.approx(40.0, rel=1e-9)

    def test_suspect_flag(self, cal):
        reading = temperature_from_frequency(cal, (0, 0), cal[(0, 0)].frequency(500.0))
        assert reading.temperature == pytest.approx(500.0)
        assert reading.suspect

    def test_uncalibrated_pixel(self, cal):
        with pytest.raises(CalibrationLookupError):
            temperature_from_frequency(cal, (3, 3), 300_000.0)

    def test_sample_validation(self):
        with pytest.raises(PreconditionError):
            CalSample((0, 0), 30.0, 0.0, 1.0)
        with pytest.raises(PreconditionError):
            CalSample((0, 0), 30.0, 0.01, -1.0)


def proportional_samples(model, gain, distances, cal, plate=50.0, ambient=21.0):
    fit = cal[(0, 0)]
    return [CalSample((0, 0), plate, d, fit.frequency(ambient + gain * (plate - ambient) * model.ratio(d)))
            for d in distances]


class TestDistanceModel:
    DISTANCES = [0.010, 0.030, 0.060, 0.100, 0.150]

    @pytest.fixture
    def cal(self):
        return fit_calibration(affine_samples([21, 30, 40, 50, 60]))

    def test_reference_ratio_is_one(self):
        assert DistanceModel().ratio(0.010) == 1.0

    def test_ratio_strictly_decreasing(self):
        rs = [DistanceModel().ratio(d) for d in np.linspace(0.010, 0.150, 30)]
        assert all(b < a for a, b in zip(rs, rs[1:]))

    def test_far_ratio_against_oracle(self):
        def coaxial(d):
            return analytic_view_factor(Patch(0, 0, 0.010, 0.010, d), Patch(0, 0, 0.100, 0.100, d))
        expected = coaxial(0.150) / coaxial(0.010)
        assert DistanceModel().ratio(0.150) == pytest.approx(expected, rel=1e-6)
        assert expected < 0.25

    def test_exactly_proportional_data(self, cal):
        model = DistanceModel()
        fitted = fit_distance(proportional_samples(model, 0.8, self.DISTANCES, cal), cal)
        assert fitted.gain == pytest.approx(0.8, rel=1e-9)
        assert fitted.rms < 1e-9
        assert fitted.monotone

    def test_too_few_distances(self, cal):
        with pytest.raises(FitError):
            fit_distance(proportional_samples(DistanceModel(), 1.0, [0.01, 0.03], cal), cal)

    def test_non_monotone_data_warns(self, cal):
        samples = proportional_samples(DistanceModel(), 1.0, [0.01, 0.03, 0.06], cal)
        fit = cal[(0, 0)]
        samples.append(CalSample((0, 0), 50.0, 0.10, fit.frequency(45.0)))
        with pytest.warns(RuntimeWarning):
            model = fit_distance(samples, cal)
        assert not model.monotone

    def test_simulated_sweep_gain(self, experiment, noiseless_calibration):
        # readings calibrated against the same plate at the reference distance
        # make the simulator's own gain unity
        fx, card = experiment
        cal, chips = noiseless_calibration
        samples = simulate_sweep(fx, card, fixture_chips(fx, card, 5))
        model = fit_distance(samples, cal, 21.0, DistanceModel(pixel_size=card.pixel_size))
        assert model.gain == pytest.approx(1.0, rel=0.03)
        assert model.monotone


class TestCompensation:
    def test_identity_at_reference(self):
        assert compensate_distance(DistanceModel(), 7.5, 0.010) == pytest.approx(7.5)

    def test_half_ratio_doubles(self):
        model = DistanceModel()
        d_half = brentq(lambda d: model.ratio(d) - 0.5, 0.011, 0.15, xtol=1e-12)
        assert compensate_distance(model, 5.0, d_half) == pytest.approx(10.0, rel=1e-9)

    @pytest.mark.parametrize("d", [0.005, 0.6])
    def test_out_of_range(self, d):
        with pytest.raises(OutOfRangeError):
            compensate_distance(DistanceModel(), 1.0, d)

    @given(st.floats(0.010, 0.5), st.floats(0.0, 100.0))
    def test_attenuate_inverts(self, d, rise):
        model = DistanceModel()
        assert compensate_distance(model, attenuate(model, rise, d), d) == pytest.approx(rise, rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("d", [0.015, 0.020, 0.030])
    def test_simulated_round_trip(self, experiment, noiseless_calibration, d):
        fx, card = experiment
        cal, chips = noiseless_calibration
        model = DistanceModel(pixel_size=card.pixel_size)

        def sensed(distance):
            net = build_network(card, 21.0)
            dies = die_map(net, solve_steady(net, [plate_source(50.0, distance, 0.100)]))
            return np.array([temperature_from_frequency(cal, p, frequency_of(chips[p[0]][p[1]], dies[p]))
                             .temperature - 21.0 for p in card.pixels()])

        np.testing.assert_allclose(compensate_distance(model, sensed(d), d), sensed(0.010), rtol=0.05)
