"""Decoding of raw readout byte streams into scan cycles."""

from dataclasses import dataclass, field
import warnings

import numpy as np

from irsense.calibration import temperature_from_frequency
from irsense.errors import CalibrationLookupError, FrameError
from irsense.sensor_chip import RESPONSE_LEN, RESPONSE_SYNC, decode_response

MAX_MALFORMED_FRACTION = 0.5


@dataclass
class Cycle:
    frames: list = field(default_factory=list)  # (row, col, frequency)
    malformed: int = 0

    @property
    def last_address(self):
        return self.frames[-1][0] * 16 + self.frames[-1][1] if self.frames else -1

    @property
    def malformed_fraction(self):
        total = len(self.frames) + self.malformed
        return self.malformed / total if total else 0.0


@dataclass
class IngestResult:
    cycles: list
    malformed: int
    dropped: int


def iter_frames(data):
    """Yield decoded ``(row, col, hz)`` tuples, or ``None`` per malformed frame.

    The parser hunts for the sync byte, so garbage between frames is
    skipped.  A failed decode resynchronises one byte later; failures that
    overlap the same seven-byte window are counted once.
    """
    data = bytes(data)
    i = 0
    bad_until = 0
    while i < len(data):
        if data[i] != RESPONSE_SYNC:
            i += 1
            continue
        chunk = data[i:i + RESPONSE_LEN]
        try:
            frame = decode_response(chunk)
        except FrameError:
            if i >= bad_until:
                bad_until = i + RESPONSE_LEN
                yield None
            i += 1
            continue
        i += RESPONSE_LEN
        yield frame


def split_cycles(data):
    """Group frames into scan cycles; a cycle ends when the address wraps."""
    cycles = []
    current = Cycle()
    for frame in iter_frames(data):
        if frame is None:
            current.malformed += 1
            continue
        row, col, _ = frame
        if current.frames and row * 16 + col <= current.last_address:
            cycles.append(current)
            current = Cycle()
        current.frames.append(frame)
    if current.frames or current.malformed:
        cycles.append(current)
    return cycles


def ingest(data, calibration, shape):
    """Calibrated temperature grid for every accepted scan cycle."""
    maps = []
    malformed = 0
    dropped = 0
    for k, cycle in enumerate(split_cycles(data)):
        malformed += cycle.malformed
        if cycle.malformed_fraction > MAX_MALFORMED_FRACTION or not cycle.frames:
            dropped += 1
            warnings.warn(f"scan cycle {k} dropped: {cycle.malformed} malformed frames",
                          RuntimeWarning, stacklevel=2)
            continue
        grid = np.full(shape, np.nan)
        for row, col, hz in cycle.frames:
            if row >= shape[0] or col >= shape[1]:
                malformed += 1
                continue
            try:
                grid[row, col] = temperature_from_frequency(calibration, (row, col), hz).temperature
            except CalibrationLookupError:
                malformed += 1
        maps.append(grid)
    return IngestResult(maps, malformed, dropped)
