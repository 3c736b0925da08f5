"""Pulse-induction ringdown reader.

Tunes a resonant transmit coil through a binary-weighted capacitor ladder,
pulses at one tag frequency, and listens for the exponential ringdown. Reads
are sequential per tag, which is exactly why this reader cannot sustain a
30 Hz frame with more than a handful of tags; `schedule` quantifies that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .sweepchain import scene_couplings
from .tagphys import amplitude_scale, effective_f0

NOISE_FLOOR = 1e-4  # of full scale, ~80 dB dynamic range
DWELL_MIN = 0.005
DWELL_MAX = 0.010


@dataclass(frozen=True)
class LadderConfig:
    n_bits: int = 8
    c_min: float = 150e-12
    c_lsb: float = 62e-12
    l_reader: float = 1.0e-3

    def __post_init__(self):
        if not (4 <= self.n_bits <= 16):
            raise DomainError("ladder n_bits must be in [4, 16]")
        if min(self.c_min, self.c_lsb, self.l_reader) <= 0.0:
            raise DomainError("ladder capacitances and inductance must be positive")
        lo, hi = self.freq_range
        if lo > 40_000.0 or hi < 400_000.0:
            raise DomainError(
                f"ladder range [{lo:.0f}, {hi:.0f}] Hz does not cover [40 kHz, 400 kHz]")

    @property
    def max_code(self) -> int:
        return 2**self.n_bits - 1

    def capacitance(self, code: int) -> float:
        return self.c_min + code * self.c_lsb

    def freq_for_code(self, code: int) -> float:
        return 1.0 / (2.0 * math.pi * math.sqrt(self.l_reader * self.capacitance(code)))

    @property
    def freq_range(self) -> tuple[float, float]:
        """(lowest, highest) achievable excitation frequency."""
        return self.freq_for_code(self.max_code), self.freq_for_code(0)


def tune_code(target_f: float, ladder: LadderConfig) -> tuple[int, float]:
    """Ladder code whose achieved frequency is closest to the target."""
    lo, hi = ladder.freq_range
    if not (lo <= target_f <= hi):
        nearest = lo if target_f < lo else hi
        raise DomainError(
            f"target {target_f:.0f} Hz outside achievable [{lo:.0f}, {hi:.0f}] Hz; "
            f"nearest achievable is {nearest:.0f} Hz")
    c_target = 1.0 / ((2.0 * math.pi * target_f) ** 2 * ladder.l_reader)
    guess = (c_target - ladder.c_min) / ladder.c_lsb
    best_code, best_err = 0, math.inf
    for code in {int(max(0, min(ladder.max_code, math.floor(guess) + k))) for k in (-1, 0, 1, 2)}:
        err = abs(ladder.freq_for_code(code) - target_f)
        if err < best_err:
            best_code, best_err = code, err
    return best_code, ladder.freq_for_code(best_code)


@dataclass
class RingdownCapture:
    sample_rate: float
    samples: np.ndarray
    excite_freq: float
    t_off: float

    def __post_init__(self):
        if self.sample_rate < 4.0 * self.excite_freq:
            raise DomainError("sample_rate must be at least 4x the excitation frequency")
        if not np.all(np.isfinite(self.samples)):
            raise DomainError("capture samples must be finite")


def _lorentzian(detuning: float, width: float) -> float:
    """Driven-resonator excitation overlap, FWHM = width."""
    return 1.0 / (1.0 + (2.0 * detuning / width) ** 2)


def excite_and_capture(placements, field, tag_f: float, dwell: float,
                       ladder: LadderConfig, listen: float = 0.02,
                       sample_rate: float = 4.0e6, seed: int = 0) -> RingdownCapture:
    """Pulse the tuned coil at (near) tag_f and record the ringdown.

    Each scene tag rings at its own effective frequency with initial
    amplitude proportional to c^2 times the Lorentzian overlap between the
    achieved excitation frequency and the tag resonance; decays with
    tau = 2Q/omega0. The receiver is blanked while transmitting.
    """
    if not (DWELL_MIN <= dwell <= DWELL_MAX):
        raise DomainError(f"dwell {dwell} outside [{DWELL_MIN}, {DWELL_MAX}] s")
    _, achieved = tune_code(tag_f, ladder)
    n = int(round((dwell + listen) * sample_rate))
    t = np.arange(n) / sample_rate
    x = np.zeros(n)
    after = t >= dwell
    u = t[after] - dwell
    for tag, c, pull in scene_couplings(placements, field):
        f_eff = effective_f0(tag, pull)
        amp = (c * c) * amplitude_scale(tag, pull) * _lorentzian(achieved - f_eff, f_eff / tag.q)
        if amp < 1e-12:
            continue
        tau = 2.0 * tag.q / (2.0 * math.pi * f_eff)
        x[after] += amp * np.exp(-u / tau) * np.sin(2.0 * math.pi * f_eff * u)
    rng = np.random.default_rng([seed, int(round(tag_f))])
    x[after] += NOISE_FLOOR * rng.standard_normal(int(after.sum()))
    return RingdownCapture(sample_rate, x, achieved, t_off=dwell)


def detect(capture: RingdownCapture, gate_start: float, gate_len: float) -> float:
    """Synchronous magnitude of the gated window at the excitation frequency.

    Quadrature correlation, so the result is invariant to the capture's
    phase. A constant-amplitude sinusoid at excite_freq detects as its
    amplitude.
    """
    if gate_start < capture.t_off:
        raise DomainError("gate must start at or after transmit-off")
    n = len(capture.samples)
    i0 = int(round(gate_start * capture.sample_rate))
    i1 = int(round((gate_start + gate_len) * capture.sample_rate))
    if gate_len <= 0.0 or i1 > n:
        raise DomainError("gate extends outside the capture")
    t = (np.arange(i0, i1) / capture.sample_rate) - capture.t_off
    w = 2.0 * math.pi * capture.excite_freq
    seg = capture.samples[i0:i1]
    i_corr = np.dot(seg, np.cos(w * t))
    q_corr = np.dot(seg, np.sin(w * t))
    return 2.0 * math.hypot(i_corr, q_corr) / len(seg)


def schedule(tags, per_tag_dwell: float) -> float:
    """Total sequential read time: tune + pulse + integrate per tag."""
    if not (DWELL_MIN <= per_tag_dwell <= DWELL_MAX):
        raise DomainError(f"per-tag dwell {per_tag_dwell} outside [{DWELL_MIN}, {DWELL_MAX}] s")
    return len(tags) * per_tag_dwell
