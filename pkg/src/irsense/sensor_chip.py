"""Frequency-output test die model and the pixel readout wire format.

Request  (3 bytes): 0x02, addr, 0x02 ^ addr
Response (7 bytes): 0xAA, addr, f0 f1 f2 f3 (uint32 Hz, little-endian), crc8

``addr`` packs the pixel position as ``(row << 4) | col``.  The CRC is
CRC-8 with polynomial 0x07, zero init, no reflection and no final XOR,
computed over ``addr`` and the four frequency bytes.
"""

from dataclasses import dataclass, field
import struct
from typing import NamedTuple

import numpy as np

from irsense.errors import ChipRangeError, FramingError, IntegrityError, PreconditionError

REQUEST_SYNC = 0x02
RESPONSE_SYNC = 0xAA
REQUEST_LEN = 3
RESPONSE_LEN = 7
MAX_FREQUENCY = 2 ** 32 - 1


def _crc8_table(poly=0x07):
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = ((crc << 1) ^ poly) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
        table.append(crc)
    return tuple(table)


_CRC8_TABLE = _crc8_table()


def crc8(data):
    crc = 0
    for byte in data:
        crc = _CRC8_TABLE[crc ^ byte]
    return crc


@dataclass
class ChipModel:
    """Linear frequency/temperature characteristic of one test die.

    The noise stream is private to the instance; draw from one chip
    sequentially.
    """

    base_frequency: float = 400_000.0
    slope: float = -2500.0
    reference_temperature: float = 21.0
    noise_sigma: float = 0.0
    seed: int = 0
    dead: bool = False
    _rng: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.base_frequency > 0:
            raise PreconditionError("base_frequency must be positive")
        if self.slope == 0:
            raise PreconditionError("slope must be non-zero")
        if self.noise_sigma < 0:
            raise PreconditionError("noise_sigma must be >= 0")
        self._rng = np.random.default_rng(self.seed)

    def reseed(self, seed):
        self.seed = seed
        self._rng = np.random.default_rng(seed)


def frequency_of(chip, die_temperature, draw_noise=False):
    """Output frequency (Hz) of ``chip`` at ``die_temperature`` (C)."""
    f = chip.base_frequency + chip.slope * (die_temperature - chip.reference_temperature)
    if draw_noise and chip.noise_sigma > 0:
        f += chip.noise_sigma * chip._rng.standard_normal()
    if not f > 0:
        raise ChipRangeError(
            f"chip frequency {f:.1f} Hz at {die_temperature} C is not positive; check chip parameters")
    return f


def _address(row, col):
    if not (0 <= row <= 15 and 0 <= col <= 15):
        raise PreconditionError(f"pixel ({row}, {col}) is outside the 16x16 address space")
    return (row << 4) | col


def encode_request(row, col):
    addr = _address(row, col)
    return bytes((REQUEST_SYNC, addr, REQUEST_SYNC ^ addr))


def decode_request(data):
    data = bytes(data)
    if len(data) != REQUEST_LEN:
        raise FramingError(f"request frame must be {REQUEST_LEN} bytes, got {len(data)}")
    if data[0] != REQUEST_SYNC:
        raise FramingError(f"bad request sync byte 0x{data[0]:02X}")
    if data[2] != REQUEST_SYNC ^ data[1]:
        raise IntegrityError("request checksum mismatch")
    return data[1] >> 4, data[1] & 0x0F


def encode_response(row, col, frequency):
    addr = _address(row, col)
    hz = int(round(frequency))
    if not 0 <= hz <= MAX_FREQUENCY:
        raise ChipRangeError(f"frequency {frequency} Hz does not fit in 32 bits")
    body = bytes((addr,)) + struct.pack("<I", hz)
    return bytes((RESPONSE_SYNC,)) + body + bytes((crc8(body),))


def decode_response(data):
    """Return ``(row, col, frequency_hz)`` or raise a :class:`FrameError`."""
    data = bytes(data)
    if len(data) != RESPONSE_LEN:
        raise FramingError(f"response frame must be {RESPONSE_LEN} bytes, got {len(data)}")
    if data[0] != RESPONSE_SYNC:
        raise FramingError(f"bad response sync byte 0x{data[0]:02X}")
    if crc8(data[1:6]) != data[6]:
        raise IntegrityError("response CRC mismatch")
    addr = data[1]
    (hz,) = struct.unpack("<I", data[2:6])
    return addr >> 4, addr & 0x0F, hz


class ScanFrame(NamedTuple):
    timestamp: float
    row: int
    col: int
    frequency: float
    payload: bytes


def scan_cycle(die_temperatures, chips, poll_interval=0.1, start_time=0.0, draw_noise=True):
    """Poll every pixel once in row-major order.

    ``die_temperatures`` and ``chips`` are (rows x cols) grids.  Dead chips
    do not answer; their poll slot still elapses.
    """
    temps = np.asarray(die_temperatures, dtype=float)
    rows, cols = temps.shape
    if len(chips) != rows or any(len(row) != cols for row in chips):
        raise PreconditionError("need exactly one chip model per pixel")
    frames = []
    for r in range(rows):
        for c in range(cols):
            slot = r * cols + c
            chip = chips[r][c]
            if chip.dead:
                continue
            f = frequency_of(chip, temps[r, c], draw_noise)
            frames.append(ScanFrame(start_time + slot * poll_interval, r, c, f,
                                    encode_response(r, c, f)))
    return frames
