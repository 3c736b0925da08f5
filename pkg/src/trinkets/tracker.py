"""Frame-rate tag identification: peaks, association, calibration, tracks.

Consumes one SpectrumFrame per 33.3 ms chirp and produces identified,
smoothed per-tag tracks. Association is by guard band around each
registered tag's resonance (extended downward by its parametric range);
anomalous peaks are reported, never force-matched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CalibrationFaultError, DomainError, SceneValidationError
from .sweepchain import SpectrumFrame, SweepConfig
from .tagphys import ObjectSpec, TagSpec, amplitude_scale

log = __import__("logging").getLogger(__name__)


@dataclass(frozen=True)
class Peak:
    center_freq: float
    amplitude: float
    width: float
    merged_flag: bool = False
    bin_index: int = 0


@dataclass(frozen=True)
class TagObservation:
    tag_id: str
    freq: float
    amplitude: float
    present: bool
    frame_index: int


@dataclass(frozen=True)
class CalibrationState:
    freq_scale: float = 1.0
    freq_offset: float = 0.0
    last_calibrated: int = -1

    def __post_init__(self):
        if not (0.9 <= self.freq_scale <= 1.1):
            raise DomainError(f"freq_scale {self.freq_scale} outside [0.9, 1.1]")

    def corrected(self, reported_freq: float) -> float:
        """True frequency of a reported (nominal-axis) peak frequency.

        freq_scale = nominal/measured from cycle counting, so the drifted
        axis is undone by dividing.
        """
        return reported_freq / self.freq_scale + self.freq_offset


# --------------------------------------------------------------------------
# Peak isolation
# --------------------------------------------------------------------------

def _quad_interp_log(m_prev, m_mid, m_next):
    """Sub-bin offset and interpolated amplitude from 3 log-magnitudes."""
    tiny = 1e-300
    a = math.log(max(m_prev, tiny))
    b = math.log(max(m_mid, tiny))
    g = math.log(max(m_next, tiny))
    denom = a - 2.0 * b + g
    if abs(denom) < 1e-30:
        return 0.0, m_mid
    delta = 0.5 * (a - g) / denom
    delta = max(-0.5, min(0.5, delta))
    return delta, math.exp(b - 0.25 * (a - g) * delta)


def _width_estimate(mag, freqs, i, peak_amp):
    """FWHM in Hz by walking to the half-amplitude crossings."""
    half = 0.5 * peak_amp
    f_left = freqs[max(i - 1, 0)]
    for j in range(i - 1, -1, -1):
        if mag[j] <= half:
            frac = (mag[j + 1] - half) / max(mag[j + 1] - mag[j], 1e-30)
            f_left = freqs[j + 1] + frac * (freqs[j] - freqs[j + 1])
            break
    else:
        f_left = freqs[0]
    f_right = freqs[min(i + 1, len(freqs) - 1)]
    for j in range(i + 1, len(mag)):
        if mag[j] <= half:
            frac = (mag[j - 1] - half) / max(mag[j - 1] - mag[j], 1e-30)
            f_right = freqs[j - 1] + frac * (freqs[j] - freqs[j - 1])
            break
    else:
        f_right = freqs[-1]
    return max(f_right - f_left, freqs[min(i + 1, len(freqs) - 1)] - freqs[i])


def find_peaks(frame: SpectrumFrame, threshold: float, min_sep: int = 9,
               interp_source: SpectrumFrame | None = None) -> list[Peak]:
    """Local maxima above threshold, merged when closer than min_sep bins.

    Sub-bin center frequency comes from quadratic interpolation of the
    log magnitude over the 3 bins around each maximum (exact fractional-bin
    mapping since the axis is exponential). When interp_source is given
    (typically the unshaped spectrum), the vertex fit reads from it: the
    baseline-subtracted frame is best for detection but its baseline slopes
    under wide peaks, which would bias the vertex.
    """
    if threshold <= 0.0:
        raise DomainError("detection threshold must be positive")
    m = frame.magnitude
    src = frame.magnitude if interp_source is None else interp_source.magnitude
    idx = np.flatnonzero((m[1:-1] > m[:-2]) & (m[1:-1] >= m[2:]) & (m[1:-1] > threshold)) + 1
    if len(idx) == 0:
        return []
    # cluster maxima closer than min_sep into one merged peak
    groups = []
    start = 0
    for k in range(1, len(idx)):
        if idx[k] - idx[k - 1] >= min_sep:
            groups.append(idx[start:k])
            start = k
    groups.append(idx[start:])
    log_step = math.log(frame.freq_axis[-1] / frame.freq_axis[0]) / (len(m) - 1)
    peaks = []
    for group in groups:
        i = int(group[np.argmax(m[group])])
        delta, _ = _quad_interp_log(src[i - 1], src[i], src[i + 1])
        _, amp = _quad_interp_log(m[i - 1], m[i], m[i + 1])
        freq = frame.freq_axis[i] * math.exp(delta * log_step)
        width = _width_estimate(m, frame.freq_axis, i, amp)
        peaks.append(Peak(freq, float(amp), float(width), merged_flag=len(group) > 1,
                          bin_index=i))
    return peaks


# --------------------------------------------------------------------------
# Registry and association
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RegistryEntry:
    tag_id: str
    f0: float
    alpha: float
    q: float
    guard: float
    scale: float  # forward-model peak amplitude at c = 1

    @property
    def band(self) -> tuple[float, float]:
        return self.f0 * (1.0 - self.alpha) - self.guard, self.f0 + self.guard


class TagRegistry:
    """Frequency table of every registered tag with guard bands."""

    def __init__(self, entries: list[RegistryEntry]):
        self.entries = sorted(entries, key=lambda e: e.f0)
        for a, b in zip(self.entries, self.entries[1:]):
            if a.band[1] >= b.band[0]:
                raise SceneValidationError(
                    f"guard bands of tags {a.tag_id} ({a.band}) and {b.tag_id} "
                    f"({b.band}) overlap")
        self.by_id = {e.tag_id: e for e in self.entries}

    @staticmethod
    def default_guard(tag: TagSpec, cfg: SweepConfig) -> float:
        return max(3.0 * cfg.bin_width_at(tag.f0), tag.f0 / (2.0 * tag.q))

    @classmethod
    def from_objects(cls, objects: list[ObjectSpec], cfg: SweepConfig) -> "TagRegistry":
        entries = []
        for obj in objects:
            for tn in obj.tags:
                t = tn.tag
                entries.append(RegistryEntry(
                    t.tag_id, t.f0, t.alpha, t.q,
                    guard=cls.default_guard(t, cfg),
                    scale=amplitude_scale(t)))
        return cls(entries)

    def lookup(self, freq: float) -> RegistryEntry | None:
        for e in self.entries:
            lo, hi = e.band
            if lo <= freq <= hi:
                return e
        return None


def associate(peaks: list[Peak], registry: TagRegistry,
              cal: CalibrationState = CalibrationState(),
              frame_index: int = 0) -> tuple[list[TagObservation], list[Peak]]:
    """Map peaks to registered tags by calibrated guard-band lookup.

    Returns (observations, anomalies). At most one observation per tag per
    frame; when several peaks fall in one band the largest amplitude wins
    and the losers are reported as anomalies alongside unmatched peaks.
    """
    best: dict[str, Peak] = {}
    anomalies: list[Peak] = []
    for peak in peaks:
        entry = registry.lookup(cal.corrected(peak.center_freq))
        if entry is None:
            anomalies.append(peak)
            continue
        incumbent = best.get(entry.tag_id)
        if incumbent is None:
            best[entry.tag_id] = peak
        elif peak.amplitude > incumbent.amplitude:
            anomalies.append(incumbent)
            best[entry.tag_id] = peak
        else:
            anomalies.append(peak)
    observations = [
        TagObservation(tag_id, cal.corrected(p.center_freq), p.amplitude, True, frame_index)
        for tag_id, p in best.items()]
    observations.sort(key=lambda o: o.freq)
    for peak in anomalies:
        log.info("anomalous peak at %.0f Hz (amplitude %.3g) matched no guard band",
                 peak.center_freq, peak.amplitude)
    return observations, anomalies


# --------------------------------------------------------------------------
# Oscillator drift calibration
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OscillatorModel:
    """Analog sweep oscillator with a multiplicative frequency drift."""

    hold_freq: float = 100_000.0
    drift: float = 0.0

    def output(self, commanded: float) -> float:
        return commanded * (1.0 + self.drift)


def calibrate(oscillator: OscillatorModel, gate: float,
              frame_index: int = 0) -> CalibrationState:
    """Cycle-count the held oscillator and derive the axis correction."""
    if gate < 0.010:
        raise DomainError("calibration gate must be at least 10 ms")
    cycles = math.floor(oscillator.output(oscillator.hold_freq) * gate)
    if cycles <= 0:
        raise CalibrationFaultError("no oscillator cycles counted during the gate")
    measured = cycles / gate
    return CalibrationState(freq_scale=oscillator.hold_freq / measured,
                            freq_offset=0.0, last_calibrated=frame_index)


# --------------------------------------------------------------------------
# Track assembly
# --------------------------------------------------------------------------

@dataclass
class TrackState:
    tag_id: str
    freq: float
    amplitude: float = 0.0       # EMA-smoothed
    raw_amplitude: float = 0.0
    present: bool = False
    slope: float = 0.0           # smoothed amplitude change per second


@dataclass
class TrackFrame:
    frame_index: int
    states: dict[str, TrackState]
    anomalies: list[Peak] = field(default_factory=list)


class Tracker:
    """Stateful per-stream assembler: EMA smoothing plus presence hysteresis."""

    def __init__(self, registry: TagRegistry, on_threshold: float,
                 off_threshold: float, ema_alpha: float = 0.5, fps: float = 30.0):
        if not (on_threshold > off_threshold > 0.0):
            raise DomainError("need on_threshold > off_threshold > 0")
        if not (0.0 < ema_alpha <= 1.0):
            raise DomainError("ema_alpha must be in (0, 1]")
        self.registry = registry
        self.on_threshold = on_threshold
        self.off_threshold = off_threshold
        self.ema_alpha = ema_alpha
        self.fps = fps
        self._states = {
            e.tag_id: TrackState(e.tag_id, e.f0) for e in registry.entries}

    def update(self, observations: list[TagObservation], frame_index: int,
               anomalies: list[Peak] | None = None) -> TrackFrame:
        observed = {o.tag_id: o for o in observations}
        out: dict[str, TrackState] = {}
        for tag_id, state in self._states.items():
            obs = observed.get(tag_id)
            raw = obs.amplitude if obs else 0.0
            smoothed = state.amplitude + self.ema_alpha * (raw - state.amplitude)
            present = state.present
            if not present and smoothed >= self.on_threshold:
                present = True
            elif present and smoothed < self.off_threshold:
                present = False
            new = TrackState(
                tag_id=tag_id,
                freq=obs.freq if obs else state.freq,
                amplitude=smoothed,
                raw_amplitude=raw,
                present=present,
                slope=(smoothed - state.amplitude) * self.fps,
            )
            self._states[tag_id] = new
            out[tag_id] = replace(new)
        return TrackFrame(frame_index, out, list(anomalies or []))
