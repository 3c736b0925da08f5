"""Report figures rendered alongside the delimited outputs of a run."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .mapping import EventKind


def render_spectrum(path, scene, output):
    fig, ax = plt.subplots(figsize=(9, 4))
    frame = output.shaped
    ax.semilogx(frame.freq_axis / 1e3, frame.magnitude, lw=0.7, color="#1f77b4")
    for peak in output.peaks:
        ax.plot(peak.center_freq / 1e3, peak.amplitude, "v", color="#d62728", ms=5)
    for entry in scene.registry.entries:
        lo, hi = entry.band
        ax.axvspan(lo / 1e3, hi / 1e3, color="#2ca02c", alpha=0.08)
    ax.set_xlabel("frequency (kHz)")
    ax.set_ylabel("bridge magnitude")
    ax.set_title(f"shaped spectrum, frame {output.frame_index}"
                 " (markers: detected peaks, bands: tag guard bands)")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_amplitudes(path, tracks_rows, top_n=10):
    by_tag = defaultdict(lambda: ([], []))
    for frame, t_s, tag_id, _freq, _raw, smoothed, _present in tracks_rows:
        ts, amps = by_tag[tag_id]
        ts.append(t_s)
        amps.append(float(smoothed))
    ranked = sorted(by_tag.items(), key=lambda kv: -max(kv[1][1]))[:top_n]
    fig, ax = plt.subplots(figsize=(9, 4))
    for tag_id, (ts, amps) in ranked:
        ax.plot(ts, amps, lw=1.0, label=tag_id)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("smoothed amplitude")
    ax.set_title("per-tag tracked amplitude")
    ax.legend(fontsize=7, ncol=2, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


_KIND_STYLE = {
    EventKind.NOTE_ON: ("o", "#2ca02c"),
    EventKind.NOTE_OFF: ("x", "#7f7f7f"),
    EventKind.CONTROL_CHANGE: (".", "#1f77b4"),
    EventKind.PITCH_BEND: (",", "#ff7f0e"),
    EventKind.MODE_TOGGLE: ("*", "#d62728"),
}


def render_events(path, events):
    fig, ax = plt.subplots(figsize=(9, 4))
    for kind, (marker, color) in _KIND_STYLE.items():
        xs = [e.t_ms / 1000.0 for e in events if e.kind == kind]
        ys = [e.channel for e in events if e.kind == kind]
        if xs:
            ax.plot(xs, ys, marker, color=color, ms=4, ls="none", label=kind.value)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("MIDI channel")
    ax.set_yticks(range(0, 16, 2))
    ax.set_title("event stream by channel")
    ax.legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_timing(path, stage_samples):
    fig, ax = plt.subplots(figsize=(7, 4))
    stages = list(stage_samples)
    ax.boxplot([stage_samples[s] for s in stages], tick_labels=stages,
               showfliers=False)
    ax.axhline(1000.0 / 30.0, color="#d62728", lw=1.0, ls="--",
               label="33.3 ms frame budget")
    ax.set_ylabel("per-frame time (ms)")
    ax.set_title("stage timing distribution")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_all(out_dir, scene, last_output, tracks_rows, events, stage_samples):
    out_dir = Path(out_dir)
    render_spectrum(out_dir / "spectrum.png", scene, last_output)
    if tracks_rows:
        render_amplitudes(out_dir / "amplitudes.png", tracks_rows)
    if events:
        render_events(out_dir / "events.png", events)
    render_timing(out_dir / "timing.png", stage_samples)
