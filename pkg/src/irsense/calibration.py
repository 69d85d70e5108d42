"""Black-body calibration of pixel frequency readings.

Two fits are supported.  The temperature ramp gives every pixel an affine
map from output frequency to the apparent temperature of a black plate
at the reference distance.  The distance sweep fixes a single gain for a
geometric attenuation model, the view-factor ratio between a pixel and
the calibration plate at distance d and at the reference distance.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Tuple
import warnings

import numpy as np

from irsense.errors import CalibrationLookupError, FitError, OutOfRangeError, PreconditionError
from irsense.radiation import DEFAULT_ORDER, Patch, view_factor

REFERENCE_DISTANCE = 0.010
PLATE_SIZE = 0.100
SWEEP_LIMIT = 0.150
MAX_COMPENSATION_DISTANCE = 0.5
SUSPECT_RANGE = (0.0, 150.0)


@dataclass(frozen=True)
class CalSample:
    pixel: Tuple[int, int]
    plate_temperature: float
    distance: float
    frequency: float
    timestamp: float = 0.0

    def __post_init__(self):
        if not self.distance > 0:
            raise PreconditionError(f"sample distance must be positive, got {self.distance}")
        if not self.frequency > 0:
            raise PreconditionError(f"sample frequency must be positive, got {self.frequency}")


@dataclass(frozen=True)
class PixelFit:
    a: float  # C
    b: float  # C/Hz
    rms: float  # C
    n_points: int = 0

    def temperature(self, frequency):
        return self.a + self.b * frequency

    def frequency(self, temperature):
        return (temperature - self.a) / self.b


@dataclass
class PixelCalibration:
    pixels: dict = field(default_factory=dict)
    reference_distance: float = REFERENCE_DISTANCE

    def __getitem__(self, pixel):
        try:
            return self.pixels[tuple(pixel)]
        except KeyError:
            raise CalibrationLookupError(f"pixel {tuple(pixel)} is not calibrated") from None


class Reading(NamedTuple):
    temperature: float
    suspect: bool


def settled(samples, key):
    """Keep the latest sample (by timestamp) for every value of ``key``."""
    latest = {}
    for s in samples:
        k = key(s)
        if k not in latest or s.timestamp >= latest[k].timestamp:
            latest[k] = s
    return [latest[k] for k in sorted(latest)]


def fit_pixel(samples, reference_distance=REFERENCE_DISTANCE):
    """Least-squares affine map T = a + b*f from one pixel's ramp samples.

    Only the last reading at every plate set-point is used.
    """
    samples = list(samples)
    if not samples:
        raise FitError("no calibration samples")
    if len({s.pixel for s in samples}) != 1:
        raise PreconditionError("fit_pixel expects samples from a single pixel")
    if any(not np.isclose(s.distance, reference_distance, rtol=1e-9, atol=1e-12) for s in samples):
        raise PreconditionError(
            f"ramp samples must all be taken at the reference distance {reference_distance} m")
    points = settled(samples, key=lambda s: s.plate_temperature)
    if len(points) < 2:
        raise FitError("need at least two distinct plate temperatures")
    f = np.array([p.frequency for p in points])
    t = np.array([p.plate_temperature for p in points])
    f0 = f.mean()
    design = np.column_stack([np.ones_like(f), f - f0])
    coef, _, rank, _ = np.linalg.lstsq(design, t, rcond=None)
    if rank < 2 or coef[1] == 0:
        raise FitError("rank-deficient calibration data (frequencies do not vary)")
    b = float(coef[1])
    a = float(coef[0] - b * f0)
    resid = t - (a + b * f)
    return PixelFit(a, b, float(np.sqrt(np.mean(resid ** 2))), len(points))


def fit_calibration(samples, reference_distance=REFERENCE_DISTANCE):
    """Fit every pixel present in ``samples``."""
    by_pixel = {}
    for s in samples:
        by_pixel.setdefault(tuple(s.pixel), []).append(s)
    cal = PixelCalibration(reference_distance=reference_distance)
    for pixel in sorted(by_pixel):
        cal.pixels[pixel] = fit_pixel(by_pixel[pixel], reference_distance)
    return cal


def temperature_from_frequency(cal, pixel, frequency):
    """Apparent plate temperature (C) at the reference distance."""
    t = cal[pixel].temperature(frequency)
    lo, hi = SUSPECT_RANGE
    return Reading(t, not lo <= t <= hi)


@lru_cache(maxsize=1024)
def _coaxial_view_factor(pixel_size, plate_size, distance, order):
    pixel = Patch(0.0, 0.0, pixel_size, pixel_size, distance)
    plate = Patch(0.0, 0.0, plate_size, plate_size, distance)
    return view_factor(pixel, plate, order)


@dataclass(frozen=True)
class DistanceModel:
    """Attenuation of the sensed rise with card-to-plate distance.

    ``ratio(d)`` is F(d)/F(d_ref) for a pixel centred on a square plate.
    ``gain`` scales the plate rise into sensed rise at the reference
    distance.
    """

    reference_distance: float = REFERENCE_DISTANCE
    plate_size: float = PLATE_SIZE
    pixel_size: float = 0.010
    gain: float = 1.0
    rms: float = 0.0
    monotone: bool = True
    order: int = DEFAULT_ORDER

    def ratio(self, distance):
        f = _coaxial_view_factor(self.pixel_size, self.plate_size, float(distance), self.order)
        f_ref = _coaxial_view_factor(self.pixel_size, self.plate_size,
                                     float(self.reference_distance), self.order)
        return f / f_ref


def fit_distance(samples, calibration, ambient=21.0, model=None, noise_tolerance=0.05):
    """Fit the gain g in  sensed_rise(d) = g * plate_rise * ratio(d).

    Sensed rise is the calibrated reading minus ``ambient``; only the last
    reading per (pixel, distance) is used.  A sensed curve that increases
    with distance by more than ``noise_tolerance`` C is flagged in the
    returned model (and warned about) but still fitted.
    """
    model = model or DistanceModel(reference_distance=calibration.reference_distance)
    points = settled(samples, key=lambda s: (s.distance, tuple(s.pixel)))
    distances = sorted({p.distance for p in points})
    if len(distances) < 3:
        raise FitError(f"need at least three distinct distances, got {len(distances)}")
    sensed = np.array([temperature_from_frequency(calibration, p.pixel, p.frequency).temperature
                       - ambient for p in points])
    predicted = np.array([(p.plate_temperature - ambient) * model.ratio(p.distance) for p in points])
    denom = predicted @ predicted
    if denom == 0:
        raise FitError("plate rise is zero; gain is unidentifiable")
    gain = float(predicted @ sensed / denom)
    rms = float(np.sqrt(np.mean((sensed - gain * predicted) ** 2)))

    means = [sensed[[p.distance == d for p in points]].mean() for d in distances]
    monotone = all(later <= earlier + noise_tolerance for earlier, later in zip(means, means[1:]))
    if not monotone:
        warnings.warn("sensed rise does not decrease with distance beyond noise tolerance",
                      RuntimeWarning, stacklevel=2)
    return DistanceModel(model.reference_distance, model.plate_size, model.pixel_size,
                         gain, rms, monotone, model.order)


def _check_distance(model, distance):
    if distance < model.reference_distance * (1 - 1e-12):
        raise OutOfRangeError(
            f"distance {distance} m is below the reference distance {model.reference_distance} m")
    if distance > MAX_COMPENSATION_DISTANCE:
        raise OutOfRangeError(f"distance {distance} m exceeds {MAX_COMPENSATION_DISTANCE} m")


def compensate_distance(model, sensed_rise, distance):
    """Refer a rise sensed at ``distance`` back to the reference distance."""
    _check_distance(model, distance)
    return sensed_rise / model.ratio(distance)


def attenuate(model, rise, distance):
    """Inverse of :func:`compensate_distance`."""
    _check_distance(model, distance)
    return rise * model.ratio(distance)
