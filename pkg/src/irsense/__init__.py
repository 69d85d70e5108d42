"""Simulation, calibration and readout tools for a PCB infrared sensor-pixel card."""

from irsense.calibration import (CalSample, DistanceModel, PixelCalibration, PixelFit,
                                 compensate_distance, fit_calibration, fit_distance, fit_pixel,
                                 temperature_from_frequency)
from irsense.localization import RiseMap, SourceEstimate, forward_rise_map, locate_argmax, locate_refined
from irsense.radiation import Patch, exchange_power, radiation_conductance, view_factor
from irsense.sensor_chip import (ChipModel, crc8, decode_request, decode_response, encode_request,
                                 encode_response, frequency_of, scan_cycle)
from irsense.thermal_network import (CardSpec, HeatSource, build_network, run_transient,
                                     solve_steady, step_transient)

__version__ = "0.1.0"

__all__ = [
    "CalSample", "CardSpec", "ChipModel", "DistanceModel", "HeatSource", "Patch",
    "PixelCalibration", "PixelFit", "RiseMap", "SourceEstimate", "build_network",
    "compensate_distance", "crc8", "decode_request", "decode_response", "encode_request",
    "encode_response", "exchange_power", "fit_calibration", "fit_distance", "fit_pixel",
    "forward_rise_map", "frequency_of", "locate_argmax", "locate_refined",
    "radiation_conductance", "run_transient", "scan_cycle", "solve_steady", "step_transient",
    "temperature_from_frequency", "view_factor",
]
