"""Bit-exact serial frame codec for peak reports at the 30 Hz chirp rate.

Layout (little-endian):

    sync     2B  0xAA 0x55
    version  1B  0x01
    counter  2B  u16
    n_peaks  1B  u8, at most 32
    peaks    8B each: freq_hz u32, amplitude u16 (1.0 full scale = 65535),
                      width_hz u16
    crc      2B  CRC-16/CCITT-FALSE over version..peaks (everything after
                 the sync bytes)

The streaming decoder resynchronizes on the sync pair after corruption and
never raises on garbage input; integrity failures are counted and dropped.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

from .errors import DomainError, WireIntegrityError

SYNC = b"\xaa\x55"
VERSION = 0x01
MAX_PEAKS = 32
AMPLITUDE_FULL_SCALE = 65535
_PEAK_STRUCT = struct.Struct("<IHH")

CAPTURE_MAGIC = b"TRNK"
CAPTURE_HEADER_LEN = 16


def crc16_ccitt_false(data: bytes) -> int:
    """Bitwise CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection."""
    crc = 0xFFFF
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) if crc & 0x8000 else (crc << 1)
            crc &= 0xFFFF
    return crc


@dataclass(frozen=True)
class WirePeak:
    freq_hz: int
    amplitude: int
    width_hz: int

    def __post_init__(self):
        if not (0 <= self.freq_hz <= 0xFFFFFFFF):
            raise DomainError(f"freq_hz {self.freq_hz} outside u32")
        if not (0 <= self.amplitude <= 0xFFFF):
            raise DomainError(f"amplitude {self.amplitude} outside u16")
        if not (0 <= self.width_hz <= 0xFFFF):
            raise DomainError(f"width_hz {self.width_hz} outside u16")

    @staticmethod
    def quantize(freq_hz: float, amplitude: float, width_hz: float) -> "WirePeak":
        """Clamp-and-round a tracker peak into wire units."""
        return WirePeak(
            int(min(0xFFFFFFFF, max(0, round(freq_hz)))),
            int(min(0xFFFF, max(0, round(amplitude * AMPLITUDE_FULL_SCALE)))),
            int(min(0xFFFF, max(0, round(width_hz)))),
        )


@dataclass(frozen=True)
class WireFrame:
    counter: int
    peaks: tuple[WirePeak, ...] = ()

    def __post_init__(self):
        if not (0 <= self.counter <= 0xFFFF):
            raise DomainError(f"counter {self.counter} outside u16")
        if len(self.peaks) > MAX_PEAKS:
            raise DomainError(f"{len(self.peaks)} peaks exceeds {MAX_PEAKS}")


def encode_wire(frame: WireFrame) -> bytes:
    body = bytearray()
    body.append(VERSION)
    body += struct.pack("<H", frame.counter)
    body.append(len(frame.peaks))
    for p in frame.peaks:
        body += _PEAK_STRUCT.pack(p.freq_hz, p.amplitude, p.width_hz)
    return SYNC + bytes(body) + struct.pack("<H", crc16_ccitt_false(bytes(body)))


def decode_wire(data: bytes) -> WireFrame:
    """Decode exactly one frame from a buffer that starts at a sync pair."""
    frames, stats = WireDecoder().feed(data), None
    if not frames:
        raise WireIntegrityError("no valid frame in buffer")
    return frames[0]


@dataclass
class DecoderStats:
    frames: int = 0
    crc_errors: int = 0
    resyncs: int = 0
    dropped_bytes: int = 0


class WireDecoder:
    """Incremental decoder; feed arbitrary chunks, get complete frames."""

    def __init__(self):
        self._buf = bytearray()
        self.stats = DecoderStats()

    def feed(self, data: bytes) -> list[WireFrame]:
        self._buf += data
        out: list[WireFrame] = []
        buf = self._buf
        i = 0
        n = len(buf)
        while True:
            # hunt for sync
            j = buf.find(SYNC, i)
            if j < 0:
                # keep a trailing 0xAA in case its partner arrives next feed
                keep = 1 if n and buf[-1] == SYNC[0] else 0
                self.stats.dropped_bytes += (n - keep) - i
                i = n - keep
                break
            if j > i:
                self.stats.dropped_bytes += j - i
                self.stats.resyncs += 1
                i = j
            if n - i < 6:
                break  # header incomplete, wait for more bytes
            version = buf[i + 2]
            n_peaks = buf[i + 5]
            if version != VERSION or n_peaks > MAX_PEAKS:
                self.stats.crc_errors += 1
                i += 1
                continue
            total = 8 + 8 * n_peaks
            if n - i < total:
                break  # frame incomplete
            body = bytes(buf[i + 2: i + total - 2])
            crc = struct.unpack_from("<H", buf, i + total - 2)[0]
            if crc != crc16_ccitt_false(body):
                self.stats.crc_errors += 1
                i += 1
                continue
            counter = struct.unpack_from("<H", buf, i + 3)[0]
            peaks = tuple(
                WirePeak(*_PEAK_STRUCT.unpack_from(buf, i + 6 + 8 * k))
                for k in range(n_peaks))
            out.append(WireFrame(counter, peaks))
            self.stats.frames += 1
            i += total
        del self._buf[:i]
        return out


# --------------------------------------------------------------------------
# Capture files: raw concatenated frames behind a 16-byte header
# --------------------------------------------------------------------------

def sweep_config_hash(cfg) -> int:
    """Stable 8-byte digest of the sweep parameters."""
    canon = json.dumps({
        "f_start": cfg.f_start, "f_end": cfg.f_end,
        "frame_period": cfg.frame_period, "bins": cfg.bins,
    }, sort_keys=True).encode()
    return int.from_bytes(hashlib.sha256(canon).digest()[:8], "little")


def capture_header(cfg) -> bytes:
    return (CAPTURE_MAGIC + bytes([VERSION]) + b"\x00\x00\x00"
            + struct.pack("<Q", sweep_config_hash(cfg)))


class CaptureWriter:
    def __init__(self, path, cfg):
        self._f = open(path, "wb")
        self._f.write(capture_header(cfg))

    def write(self, frame: WireFrame):
        self._f.write(encode_wire(frame))

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_capture(path) -> tuple[int, list[WireFrame]]:
    """Returns (sweep hash, frames); raises on a bad header."""
    with open(path, "rb") as f:
        header = f.read(CAPTURE_HEADER_LEN)
        if len(header) < CAPTURE_HEADER_LEN or header[:4] != CAPTURE_MAGIC:
            raise WireIntegrityError("not a capture file (bad magic)")
        if header[4] != VERSION:
            raise WireIntegrityError(f"unsupported capture version {header[4]}")
        sweep_hash = struct.unpack_from("<Q", header, 8)[0]
        frames = WireDecoder().feed(f.read())
    return sweep_hash, frames
