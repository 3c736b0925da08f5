"""Object states to MIDI-compatible events, one deterministic pass per frame.

Rule order is fixed: goblins first (they define the ring note pool),
triangles, then the remaining sound sources by object name, then the
modifiers (porcupine, pig, eyeball). Pitch bends compose at the end of the
frame: sources set a per-channel base, the porcupine subtracts a global
offset, and one PitchBend per changed channel is emitted.

All MIDI numbers live in MappingConfig; nothing musical is hard-coded.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

from .errors import DomainError

BEND_CENTER = 8192
BEND_MAX = 16383

SOURCE_ROLES = ("goblin", "ring", "pengachu", "cube", "pez")
MODIFIER_ROLES = ("porcupine", "pig", "eyeball")
ALL_ROLES = SOURCE_ROLES + MODIFIER_ROLES + ("triangle",)


class EventKind(Enum):
    NOTE_ON = "NoteOn"
    NOTE_OFF = "NoteOff"
    CONTROL_CHANGE = "ControlChange"
    PITCH_BEND = "PitchBend"
    MODE_TOGGLE = "ModeToggle"


@dataclass(frozen=True)
class MusicEvent:
    """One event. data1/data2 semantics per kind:
    NoteOn/NoteOff: note, velocity (NoteOff velocity 0);
    ControlChange/ModeToggle: controller, value;
    PitchBend: 14-bit value split LSB/MSB (center 8192)."""

    t_ms: int
    kind: EventKind
    channel: int
    data1: int
    data2: int

    def __post_init__(self):
        if not (0 <= self.channel <= 15):
            raise DomainError(f"channel {self.channel} outside 0-15")
        if not (0 <= self.data1 <= 127 and 0 <= self.data2 <= 127):
            raise DomainError(f"data bytes ({self.data1}, {self.data2}) outside 0-127")
        if self.kind is EventKind.NOTE_ON and self.data2 == 0:
            raise DomainError("NoteOn with velocity 0 is never emitted; use NoteOff")

    @staticmethod
    def pitch_bend(t_ms: int, channel: int, value: int) -> "MusicEvent":
        value = max(0, min(BEND_MAX, value))
        return MusicEvent(t_ms, EventKind.PITCH_BEND, channel,
                          value & 0x7F, (value >> 7) & 0x7F)

    @property
    def bend_value(self) -> int:
        return self.data2 * 128 + self.data1

    def to_json_line(self) -> str:
        return json.dumps({"t_ms": self.t_ms, "kind": self.kind.value,
                           "ch": self.channel, "d1": self.data1, "d2": self.data2},
                          separators=(",", ":"))

    @staticmethod
    def from_json_line(line: str) -> "MusicEvent":
        d = json.loads(line)
        return MusicEvent(d["t_ms"], EventKind(d["kind"]), d["ch"], d["d1"], d["d2"])


@dataclass(frozen=True)
class MappingConfig:
    goblin_channels: tuple[int, ...] = (0, 1, 2, 3, 4)
    ring_channel: int = 5
    pengachu_channel: int = 6
    cube_channel: int = 7
    pez_channel: int = 8
    effects_channel: int = 9

    # goblin i drones these notes (an octave down) and contributes them to
    # the ring note pool in goblin order
    goblin_note_sets: tuple[tuple[int, ...], ...] = (
        (60, 64, 67), (62, 65, 69), (57, 60, 64), (65, 69, 72), (55, 59, 62))
    goblin_drone_offset: int = -12
    goblin_velocity: int = 90
    goblin_volume_cc: int = 7

    ring_velocity_gain: float = 200.0

    pengachu_sequence: tuple[int, ...] = (64, 67, 71, 67, 72, 67, 71, 67)
    pengachu_step_frames: int = 6
    pengachu_velocity: int = 84
    pengachu_transpose_semitones: int = 12

    cube_note: int = 36
    cube_velocity: int = 70

    pez_note: int = 64
    pez_velocity: int = 80
    pez_trigger_note: int = 52
    pez_trigger_velocity: int = 100
    pez_trigger_threshold: float = 0.6
    pez_release_threshold: float = 0.5
    pez_cutoff_cc: int = 74

    porcupine_depth: int = 8192
    pig_cc: int = 1
    eyeball_ccs: tuple[int, int, int] = (91, 92, 93)

    mode_toggle_cc: int = 85
    mode_toggle_channel: int = 15

    cc_slew_limit: int = 8

    @property
    def voice_channels(self) -> tuple[int, ...]:
        return tuple(self.goblin_channels) + (
            self.ring_channel, self.pengachu_channel, self.cube_channel, self.pez_channel)

    def validate(self):
        sounding = list(self.goblin_channels) + [
            self.ring_channel, self.pengachu_channel, self.cube_channel,
            self.pez_channel, self.effects_channel]
        if len(set(sounding)) != len(sounding):
            raise DomainError("sounding-role channels must be distinct")
        for notes in self.goblin_note_sets + (self.pengachu_sequence,):
            for n in notes:
                if not (0 <= n <= 127):
                    raise DomainError(f"note {n} outside 0-127")
        return self


@dataclass
class ObjectState:
    """Per-object estimate bundle the pipeline hands to the mapper."""

    name: str
    role: str
    present: bool = False
    proximity: float = 0.0
    amplitude: float = 0.0
    slope: float = 0.0              # smoothed amplitude per second
    pull: float = 0.0
    # triad objects only: unsigned direction cosines of the field in the
    # object frame, and per-axis cos^2 * proximity mix for the eyeball
    cosines: Optional[tuple[float, float, float]] = None


def note_pool(present_goblin_names, cfg: MappingConfig,
              goblin_order: list[str]) -> list[int]:
    """Ring note pool: concatenation of present goblins' sets in goblin order."""
    pool: list[int] = []
    for name in goblin_order:
        if name in present_goblin_names:
            pool.extend(cfg.goblin_note_sets[goblin_order.index(name)
                                             % len(cfg.goblin_note_sets)])
    return pool


@dataclass
class MappingState:
    frame_index: int = -1
    mode: bool = False
    prev_present: dict = field(default_factory=dict)
    active_notes: dict = field(default_factory=dict)    # (ch, note) -> count
    ring_notes: dict = field(default_factory=dict)      # ring name -> note
    pengachu_step: int = 0
    pengachu_frames: int = 0
    pengachu_note: Optional[int] = None
    pez_triggered: bool = False
    prev_pull: float = 0.0
    cc_last: dict = field(default_factory=dict)         # (ch, cc) -> value
    bend_base: dict = field(default_factory=dict)       # ch -> value
    bend_offset: int = 0
    bend_last: dict = field(default_factory=dict)       # ch -> value

    def clone(self) -> "MappingState":
        return replace(self, prev_present=dict(self.prev_present),
                       active_notes=dict(self.active_notes),
                       ring_notes=dict(self.ring_notes),
                       cc_last=dict(self.cc_last),
                       bend_base=dict(self.bend_base),
                       bend_last=dict(self.bend_last))


class _Emitter:
    """Collects one frame's events with slew limiting and note bookkeeping."""

    def __init__(self, state: MappingState, cfg: MappingConfig, t_ms: int):
        self.state = state
        self.cfg = cfg
        self.t_ms = t_ms
        self.events: list[MusicEvent] = []

    def note_on(self, ch, note, velocity):
        note = max(0, min(127, int(note)))
        velocity = max(1, min(127, int(velocity)))
        self.events.append(MusicEvent(self.t_ms, EventKind.NOTE_ON, ch, note, velocity))
        self.state.active_notes[(ch, note)] = self.state.active_notes.get((ch, note), 0) + 1

    def note_off(self, ch, note):
        note = max(0, min(127, int(note)))
        count = self.state.active_notes.get((ch, note), 0)
        if count <= 0:
            return
        self.events.append(MusicEvent(self.t_ms, EventKind.NOTE_OFF, ch, note, 0))
        if count == 1:
            del self.state.active_notes[(ch, note)]
        else:
            self.state.active_notes[(ch, note)] = count - 1

    def cc(self, ch, num, value, fresh=False):
        value = max(0, min(127, int(round(value))))
        key = (ch, num)
        last = self.state.cc_last.get(key)
        if last is not None and not fresh:
            step = self.cfg.cc_slew_limit
            value = max(last - step, min(last + step, value))
        if value != last:
            self.events.append(
                MusicEvent(self.t_ms, EventKind.CONTROL_CHANGE, ch, num, value))
            self.state.cc_last[key] = value

    def mode_toggle(self, mode_on: bool):
        self.events.append(MusicEvent(
            self.t_ms, EventKind.MODE_TOGGLE, self.cfg.mode_toggle_channel,
            self.cfg.mode_toggle_cc, 127 if mode_on else 0))

    def finalize_bends(self):
        for ch in sorted(set(self.state.bend_base) | set(self.state.bend_last)
                         | set(self.cfg.voice_channels)):
            target = self.state.bend_base.get(ch, BEND_CENTER) - self.state.bend_offset
            target = max(0, min(BEND_MAX, target))
            if self.state.bend_last.get(ch, BEND_CENTER) != target:
                self.events.append(MusicEvent.pitch_bend(self.t_ms, ch, target))
                self.state.bend_last[ch] = target


def _ordered(states: list[ObjectState]) -> list[ObjectState]:
    for s in states:
        if s.role not in ALL_ROLES:
            raise DomainError(f"object {s.name}: unknown role '{s.role}'")
    goblins = sorted((s for s in states if s.role == "goblin"), key=lambda s: s.name)
    triangles = sorted((s for s in states if s.role == "triangle"), key=lambda s: s.name)
    sources = sorted((s for s in states if s.role in ("ring", "pengachu", "cube", "pez")),
                     key=lambda s: s.name)
    modifiers = sorted((s for s in states if s.role in MODIFIER_ROLES),
                       key=lambda s: s.name)
    return goblins + triangles + sources + modifiers


def map_frame(states: list[ObjectState], prev: MappingState, cfg: MappingConfig,
              frame_index: int, frame_period: float = 1.0 / 30.0
              ) -> tuple[list[MusicEvent], MappingState]:
    """Apply every per-role rule to one frame of object states."""
    state = prev.clone()
    state.frame_index = frame_index
    t_ms = int(round(frame_index * frame_period * 1000.0))
    out = _Emitter(state, cfg, t_ms)

    ordered = _ordered(states)
    goblin_order = [s.name for s in ordered if s.role == "goblin"]
    ring_order = sorted(s.name for s in states if s.role == "ring")
    present_goblins = {s.name for s in ordered if s.role == "goblin" and s.present}
    pool = note_pool(present_goblins, cfg, goblin_order)

    for s in ordered:
        was_present = state.prev_present.get(s.name, False)
        rising = s.present and not was_present
        falling = was_present and not s.present

        if s.role == "goblin":
            ch = cfg.goblin_channels[goblin_order.index(s.name) % len(cfg.goblin_channels)]
            notes = [n + cfg.goblin_drone_offset for n in
                     cfg.goblin_note_sets[goblin_order.index(s.name)
                                          % len(cfg.goblin_note_sets)]]
            if rising:
                out.cc(ch, cfg.goblin_volume_cc, 127.0 * s.proximity, fresh=True)
                for n in notes:
                    out.note_on(ch, n, cfg.goblin_velocity)
            elif s.present:
                out.cc(ch, cfg.goblin_volume_cc, 127.0 * s.proximity)
            elif falling:
                for n in notes:
                    out.note_off(ch, n)

        elif s.role == "triangle":
            if rising:
                state.mode = not state.mode
                out.mode_toggle(state.mode)

        elif s.role == "ring":
            ch = cfg.ring_channel
            if rising and pool:
                note = pool[ring_order.index(s.name) % len(pool)]
                velocity = cfg.ring_velocity_gain * max(s.slope, 0.0)
                out.note_on(ch, note, max(1, min(127, round(velocity))))
                state.ring_notes[s.name] = note
            elif falling and s.name in state.ring_notes:
                out.note_off(ch, state.ring_notes.pop(s.name))

        elif s.role == "pengachu":
            ch = cfg.pengachu_channel
            seq = cfg.pengachu_sequence
            if rising:
                state.pengachu_step = 0
                state.pengachu_frames = 0
                note = seq[0] + round(s.proximity * cfg.pengachu_transpose_semitones)
                state.pengachu_note = max(0, min(127, note))
                out.note_on(ch, state.pengachu_note, cfg.pengachu_velocity)
            elif s.present:
                state.pengachu_frames += 1
                if state.pengachu_frames >= cfg.pengachu_step_frames:
                    state.pengachu_frames = 0
                    if state.pengachu_note is not None:
                        out.note_off(ch, state.pengachu_note)
                    state.pengachu_step = (state.pengachu_step + 1) % len(seq)
                    note = seq[state.pengachu_step] + round(
                        s.proximity * cfg.pengachu_transpose_semitones)
                    state.pengachu_note = max(0, min(127, note))
                    out.note_on(ch, state.pengachu_note, cfg.pengachu_velocity)
            elif falling:
                if state.pengachu_note is not None:
                    out.note_off(ch, state.pengachu_note)
                state.pengachu_note = None

        elif s.role == "cube":
            ch = cfg.cube_channel
            if rising:
                out.note_on(ch, cfg.cube_note, cfg.cube_velocity)
            if s.present and s.cosines is not None:
                theta = math.degrees(math.acos(min(1.0, max(0.0, s.cosines[0]))))
                state.bend_base[ch] = BEND_CENTER + round(
                    (theta / 90.0 - 0.5) * 2.0 * (BEND_CENTER - 1))
            elif falling:
                out.note_off(ch, cfg.cube_note)
                state.bend_base[ch] = BEND_CENTER

        elif s.role == "pez":
            ch = cfg.pez_channel
            if rising:
                out.note_on(ch, cfg.pez_note, cfg.pez_velocity)
                out.cc(ch, cfg.pez_cutoff_cc, 127.0 * s.pull, fresh=True)
            elif s.present:
                out.cc(ch, cfg.pez_cutoff_cc, 127.0 * s.pull)
                if (not state.pez_triggered and s.pull >= cfg.pez_trigger_threshold
                        and state.prev_pull < cfg.pez_trigger_threshold):
                    state.pez_triggered = True
                    out.note_on(ch, cfg.pez_trigger_note, cfg.pez_trigger_velocity)
                elif state.pez_triggered and s.pull < cfg.pez_release_threshold:
                    state.pez_triggered = False
                    out.note_off(ch, cfg.pez_trigger_note)
            elif falling:
                out.note_off(ch, cfg.pez_note)
                if state.pez_triggered:
                    out.note_off(ch, cfg.pez_trigger_note)
                    state.pez_triggered = False
            if s.present or falling:
                state.prev_pull = s.pull if s.present else 0.0

        elif s.role == "porcupine":
            state.bend_offset = round(s.proximity * cfg.porcupine_depth) if s.present else 0

        elif s.role == "pig":
            for ch in cfg.voice_channels:
                if s.present:
                    out.cc(ch, cfg.pig_cc, 127.0 * s.proximity)
                elif falling:
                    out.cc(ch, cfg.pig_cc, 0, fresh=True)

        elif s.role == "eyeball":
            if s.cosines is not None and (s.present or falling):
                for cc_num, cos in zip(cfg.eyeball_ccs, s.cosines):
                    value = 127.0 * cos * cos * s.proximity if s.present else 0
                    out.cc(cfg.effects_channel, cc_num, value, fresh=falling)

        state.prev_present[s.name] = s.present

    out.finalize_bends()
    return out.events, state


def flush(state: MappingState, cfg: MappingConfig, frame_index: int,
          frame_period: float = 1.0 / 30.0) -> tuple[list[MusicEvent], MappingState]:
    """End-of-run cleanup: close every active note, recenter bends."""
    state = state.clone()
    t_ms = int(round(frame_index * frame_period * 1000.0))
    out = _Emitter(state, cfg, t_ms)
    for (ch, note), count in sorted(state.active_notes.items()):
        for _ in range(count):
            out.events.append(MusicEvent(t_ms, EventKind.NOTE_OFF, ch, note, 0))
    state.active_notes = {}
    state.bend_base = {}
    state.bend_offset = 0
    out.finalize_bends()
    return out.events, state


# --------------------------------------------------------------------------
# Export
# --------------------------------------------------------------------------

def export_jsonl(events: list[MusicEvent], path):
    """One event per line; empty logs yield a valid empty file."""
    with open(path, "w", encoding="ascii") as f:
        for ev in events:
            f.write(ev.to_json_line() + "\n")


def load_jsonl(path) -> list[MusicEvent]:
    events = []
    with open(path, "r", encoding="ascii") as f:
        for line in f:
            line = line.strip()
            if line:
                events.append(MusicEvent.from_json_line(line))
    return events


def export_events(events: list[MusicEvent], path, fmt: str = "jsonl",
                  cfg: MappingConfig | None = None):
    if fmt == "jsonl":
        export_jsonl(events, path)
    elif fmt == "smf":
        from .midifile import write_smf
        if not events:
            raise DomainError("SMF export needs a non-empty event log")
        write_smf(events, path)
    else:
        raise DomainError(f"unknown export format '{fmt}'")
