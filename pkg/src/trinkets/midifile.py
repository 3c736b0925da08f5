"""Minimal Standard MIDI File type 0 writer.

Fixed 480 ticks per quarter at 120 bpm, so one tick is 500/480 ms. Every
event carries an explicit status byte (no running status); ModeToggle has
no raw MIDI equivalent and is written as its configured control change.
"""

from __future__ import annotations

import struct

from .mapping import EventKind, MusicEvent

TICKS_PER_QUARTER = 480
TEMPO_US_PER_QUARTER = 500_000  # 120 bpm

_STATUS = {
    EventKind.NOTE_OFF: 0x80,
    EventKind.NOTE_ON: 0x90,
    EventKind.CONTROL_CHANGE: 0xB0,
    EventKind.PITCH_BEND: 0xE0,
    EventKind.MODE_TOGGLE: 0xB0,
}


def _varlen(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def ms_to_ticks(t_ms: int) -> int:
    return round(t_ms * TICKS_PER_QUARTER * 1000 / TEMPO_US_PER_QUARTER)


def write_smf(events: list[MusicEvent], path) -> None:
    track = bytearray()
    track += _varlen(0)
    track += bytes([0xFF, 0x51, 0x03])
    track += TEMPO_US_PER_QUARTER.to_bytes(3, "big")
    tick = 0
    for ev in events:
        ev_tick = ms_to_ticks(ev.t_ms)
        track += _varlen(max(0, ev_tick - tick))
        tick = max(tick, ev_tick)
        track += bytes([_STATUS[ev.kind] | ev.channel, ev.data1, ev.data2])
    track += _varlen(0)
    track += bytes([0xFF, 0x2F, 0x00])

    with open(path, "wb") as f:
        f.write(b"MThd" + struct.pack(">IHHH", 6, 0, 1, TICKS_PER_QUARTER))
        f.write(b"MTrk" + struct.pack(">I", len(track)))
        f.write(track)
