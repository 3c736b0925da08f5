"""Swept-frequency reader: chirp, inductive-bridge synthesis, filter shaping.

One exponential chirp spans a decade per 33.3 ms frame. Synthesis is
quasi-static: each spectral bin holds the bridge magnitude at the chirp's
instantaneous frequency, which is valid while the chirp crosses a tag's
bandwidth slowly (Q <= a few hundred at 30 Hz frames).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DomainError
from .tagphys import (
    Z_NORM,
    FieldModel,
    ObjectSpec,
    Pose,
    amplitude_scale,
    effective_f0,
    reflected_impedance,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepConfig:
    f_start: float = 40_000.0
    f_end: float = 400_000.0
    frame_period: float = 1.0 / 30.0
    bins: int = 2048
    noise_rms: float = 0.0
    seed: int = 0
    # depth of the adjacent-tag suppression effect (0 disables it)
    suppression_strength: float = 0.3

    def __post_init__(self):
        if not (0.0 < self.f_start < self.f_end):
            raise DomainError("sweep needs f_end > f_start > 0")
        if self.bins < 256:
            raise DomainError("sweep needs at least 256 bins")
        if self.frame_period <= 0.0:
            raise DomainError("frame_period must be positive")
        if self.noise_rms < 0.0:
            raise DomainError("noise_rms must be non-negative")
        if not (0.0 <= self.suppression_strength < 1.0):
            raise DomainError("suppression_strength must be in [0, 1)")

    def freq_axis(self) -> np.ndarray:
        """Exponentially spaced bin frequencies from f_start to f_end inclusive."""
        k = np.arange(self.bins) / (self.bins - 1)
        return self.f_start * (self.f_end / self.f_start) ** k

    def bin_width_at(self, f: float) -> float:
        """Local bin spacing in Hz near frequency f."""
        ratio = (self.f_end / self.f_start) ** (1.0 / (self.bins - 1))
        return f * (ratio - 1.0)

    def freq_at_bin(self, bin_pos: float) -> float:
        """Frequency at a (possibly fractional) bin position."""
        return self.f_start * (self.f_end / self.f_start) ** (bin_pos / (self.bins - 1))


def chirp_freq(t: float, cfg: SweepConfig) -> float:
    """Instantaneous chirp frequency f_start * (f_end/f_start)^(t/T)."""
    if not (0.0 <= t <= cfg.frame_period):
        raise DomainError(f"t={t} outside [0, {cfg.frame_period}]")
    return cfg.f_start * (cfg.f_end / cfg.f_start) ** (t / cfg.frame_period)


@dataclass
class SpectrumFrame:
    frame_index: int
    freq_axis: np.ndarray
    magnitude: np.ndarray
    timestamp: float

    def __post_init__(self):
        if len(self.freq_axis) != len(self.magnitude):
            raise DomainError("freq_axis and magnitude must have equal length")


@dataclass(frozen=True)
class Placement:
    """One object in the scene at a pose, with its pull parameter."""

    obj: ObjectSpec
    pose: Pose
    pull: float = 0.0


def scene_couplings(placements, field: FieldModel):
    """Per-tag signed couplings for a scene snapshot.

    Returns a list of (TagSpec, coupling, pull) over every tag in the scene;
    all tags of an object share the object's position.
    """
    if not placements:
        return []
    positions = np.array([p.pose.position for p in placements])
    b = field.field_at_cached(positions)
    out = []
    for i, placement in enumerate(placements):
        normals = placement.obj.world_normals(placement.pose)
        cs = normals @ b[i] / field.b_ref
        for j, tn in enumerate(placement.obj.tags):
            pull = placement.obj.pull_for(j, placement.pull)
            out.append((tn.tag, float(cs[j]), pull))
    return out


def _suppression_scales(entries, strength):
    """Adjacent-tag interaction: a tag sitting within a couple of bandwidths
    of a stronger one loses part of its response. Exactly 1.0 beyond twice
    the combined half-bandwidth so well-separated scenes are untouched."""
    n = len(entries)
    scales = np.ones(n)
    if strength <= 0.0 or n < 2:
        return scales
    f_eff = [effective_f0(tag, pull) for tag, _, pull in entries]
    bw = [f / entries[i][0].q for i, f in enumerate(f_eff)]
    peak = [amplitude_scale(tag, pull) * c * c for tag, c, pull in entries]
    for i in range(n):
        for j in range(i + 1, n):
            w = 0.5 * (bw[i] + bw[j])
            overlap = 1.0 / (1.0 + ((f_eff[i] - f_eff[j]) / w) ** 2)
            if overlap <= 0.2 or peak[i] == peak[j]:
                continue
            weaker = i if peak[i] < peak[j] else j
            scales[weaker] *= 1.0 - strength * (overlap - 0.2) / 0.8
    return scales


def _visible_entries(placements, field: FieldModel, cfg: SweepConfig):
    visible = []
    for tag, c, pull in scene_couplings(placements, field):
        f_eff = effective_f0(tag, pull)
        if not (cfg.f_start <= f_eff <= cfg.f_end):
            log.warning("tag %s resonates at %.0f Hz, outside the sweep; invisible",
                        tag.tag_id, f_eff)
            continue
        if abs(c) < 1e-12:
            continue
        visible.append((tag, c, pull))
    return visible


def dense_magnitude(placements, field: FieldModel, cfg: SweepConfig, freqs,
                    osc_drift: float = 0.0) -> np.ndarray:
    """Noise-free composite bridge magnitude at arbitrary nominal frequencies.

    Same physics as `bridge_response` without binning or noise; the dense
    scan the sub-bin estimator accuracy is judged against.
    """
    freqs = np.asarray(freqs, dtype=float)
    f_phys = freqs * (1.0 + osc_drift)
    visible = _visible_entries(placements, field, cfg)
    total = np.zeros(freqs.shape, dtype=complex)
    scales = _suppression_scales(visible, cfg.suppression_strength)
    for (tag, c, pull), scale in zip(visible, scales):
        total += scale * reflected_impedance(tag, c, f_phys, pull)
    return np.abs(total) / Z_NORM


def bridge_response(placements, field: FieldModel, cfg: SweepConfig,
                    frame_index: int = 0, osc_drift: float = 0.0) -> SpectrumFrame:
    """Bridge imbalance magnitude across one chirp.

    Per bin: |sum of complex reflected impedances| / Z_NORM plus seeded
    additive Gaussian noise, rectified by the magnitude detector. With
    oscillator drift d the physical frequency at nominal bin f is f*(1+d),
    so tags appear near f0/(1+d) on the nominal axis until calibration
    corrects them.
    """
    axis = cfg.freq_axis()
    magnitude = dense_magnitude(placements, field, cfg, axis, osc_drift)
    if cfg.noise_rms > 0.0:
        rng = np.random.default_rng([cfg.seed, frame_index])
        magnitude = np.abs(magnitude + cfg.noise_rms * rng.standard_normal(cfg.bins))
    return SpectrumFrame(frame_index, axis, magnitude,
                         timestamp=frame_index * cfg.frame_period)


def shape(frame: SpectrumFrame, baseline_window: int = 63) -> SpectrumFrame:
    """Highpass-bank emulation: notched sliding-median detrend, clamped at 0.

    The baseline under each bin is the median of the surrounding window with
    the central quarter excluded, so narrow peaks barely feed their own
    baseline; constant offsets and slow bridge drift cancel exactly.
    """
    if baseline_window < 3 or baseline_window % 2 == 0:
        raise DomainError("baseline_window must be odd and >= 3")
    mag = frame.magnitude
    half = baseline_window // 2
    guard = baseline_window // 4
    padded = np.pad(mag, half, mode="edge")
    windows = sliding_window_view(padded, baseline_window)
    flanks = np.concatenate([windows[:, : half - guard], windows[:, half + guard + 1:]], axis=1)
    baseline = np.median(flanks, axis=1)
    shaped = np.clip(mag - baseline, 0.0, None)
    return SpectrumFrame(frame.frame_index, frame.freq_axis, shaped, frame.timestamp)
