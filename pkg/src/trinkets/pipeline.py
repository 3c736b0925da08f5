"""End-to-end frame driver: synthesis, shaping, tracking, estimation, mapping.

One Pipeline instance owns all per-stream state (tracker EMA/hysteresis,
orientation continuity, mapping state machine, wire counter) and processes
frames in order. `run` drives a whole scene offline and writes the report
outputs; `serve` (in service.py) drives the same object in real time.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import StageError, TrinketsError
from .mapping import MappingState, MusicEvent, ObjectState, export_jsonl, flush, map_frame
from .posest import (
    OnAxisRangeMap,
    OrientationEstimate,
    TriadObservation,
    orientation_from_triad,
    param_estimate,
)
from .scene import Scene
from .sweepchain import Placement, bridge_response, shape
from .tagphys import FieldModel, amplitude_scale
from .tracker import CalibrationState, OscillatorModel, Tracker, associate, calibrate, find_peaks
from .wire import CaptureWriter, WireFrame, WirePeak

STAGES = ("synthesize", "shape", "track", "estimate", "map")


@dataclass
class FrameOutput:
    frame_index: int
    timestamp: float
    spectrum: object
    shaped: object
    peaks: list
    anomalies: list
    track_frame: object
    states: list[ObjectState]
    events: list[MusicEvent]
    wire_frame: WireFrame
    stage_ms: dict


@dataclass
class RunReport:
    frames: int = 0
    duration_s: float = 0.0
    events: int = 0
    wall_s: float = 0.0
    stage_ms: dict = field(default_factory=dict)
    total_ms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"frames": self.frames, "duration_s": self.duration_s,
                "events": self.events, "wall_s": round(self.wall_s, 3),
                "stage_ms": self.stage_ms, "total_ms": self.total_ms}


def _percentiles(samples) -> dict:
    if not samples:
        return {"p50": 0.0, "p95": 0.0, "p99": 0.0}
    arr = np.asarray(samples)
    return {"p50": round(float(np.percentile(arr, 50)), 3),
            "p95": round(float(np.percentile(arr, 95)), 3),
            "p99": round(float(np.percentile(arr, 99)), 3)}


class Pipeline:
    """Stateful per-session frame processor for one scene."""

    def __init__(self, scene: Scene, seed: int | None = None,
                 osc_drift: float = 0.0, calibration: bool = True):
        self.scene = scene
        self.sweep = scene.sweep if seed is None else replace(scene.sweep, seed=seed)
        self.field = FieldModel(scene.coil)
        self.registry = scene.registry
        self.range_map = OnAxisRangeMap(
            self.field,
            reference_distance=scene.estimation.reference_distance,
            far_distance=scene.estimation.far_distance)
        tp = scene.tracker_params
        self.tracker = Tracker(self.registry, tp.on_threshold, tp.off_threshold,
                               tp.ema_alpha, fps=1.0 / self.sweep.frame_period)
        self.osc_drift = osc_drift
        if calibration and osc_drift != 0.0:
            self.cal = calibrate(OscillatorModel(drift=osc_drift), gate=0.05)
        else:
            self.cal = CalibrationState()
        self.mapping_state = MappingState()
        self._orientation_axes: dict[str, tuple] = {}
        self._scale = {tn.tag.tag_id: amplitude_scale(tn.tag)
                       for obj in scene.objects for tn in obj.tags}

    # -- per-object estimate assembly ------------------------------------

    def _object_states(self, track_frame) -> list[ObjectState]:
        states = []
        for obj in self.scene.objects:
            tracks = [track_frame.states[tn.tag.tag_id] for tn in obj.tags]
            norms = [t.amplitude / self._scale[t.tag_id] for t in tracks]
            slopes = [t.slope / self._scale[t.tag_id] for t in tracks]
            s = float(sum(norms))
            present = any(t.present for t in tracks)
            proximity = self.range_map.proximity(s) if s > 1e-12 else 0.0
            cosines = None
            if obj.is_triad and s > 1e-12:
                est = orientation_from_triad(
                    TriadObservation(tuple(norms), track_frame.frame_index),
                    prev_axis=self._orientation_axes.get(obj.name))
                self._orientation_axes[obj.name] = est.axis
                cosines = est.cosines
            pull = 0.0
            if obj.param_channel is not None:
                tag = obj.tags[obj.param_channel].tag
                track = tracks[obj.param_channel]
                if present:
                    pull = param_estimate(track.freq, tag)
            states.append(ObjectState(
                name=obj.name, role=obj.role, present=present,
                proximity=proximity, amplitude=s,
                slope=float(sum(slopes)), pull=pull, cosines=cosines))
        return states

    # -- one frame --------------------------------------------------------

    def process(self, frame_index: int, placements: list[Placement]) -> FrameOutput:
        stage_ms = {}
        tp = self.scene.tracker_params

        def timed(stage, fn, *args, **kwargs):
            t0 = time.perf_counter()
            try:
                result = fn(*args, **kwargs)
            except TrinketsError as exc:
                raise StageError(stage, frame_index, exc) from exc
            stage_ms[stage] = (time.perf_counter() - t0) * 1000.0
            return result

        spectrum = timed("synthesize", bridge_response, placements, self.field,
                         self.sweep, frame_index, self.osc_drift)
        shaped = timed("shape", shape, spectrum, tp.baseline_window)

        def track_stage():
            peaks = find_peaks(shaped, tp.detection_threshold, tp.min_sep_bins,
                               interp_source=spectrum)
            observations, anomalies = associate(peaks, self.registry, self.cal,
                                                frame_index)
            tf = self.tracker.update(observations, frame_index, anomalies)
            return peaks, anomalies, tf

        peaks, anomalies, track_frame = timed("track", track_stage)
        states = timed("estimate", self._object_states, track_frame)
        events, self.mapping_state = timed(
            "map", map_frame, states, self.mapping_state, self.scene.mapping,
            frame_index, self.sweep.frame_period)

        wire_frame = WireFrame(
            frame_index % 65536,
            tuple(WirePeak.quantize(p.center_freq, p.amplitude, p.width)
                  for p in peaks[:32]))
        return FrameOutput(frame_index, frame_index * self.sweep.frame_period,
                           spectrum, shaped, peaks, anomalies, track_frame,
                           states, events, wire_frame, stage_ms)

    def finish(self, frame_index: int) -> list[MusicEvent]:
        events, self.mapping_state = flush(
            self.mapping_state, self.scene.mapping, frame_index,
            self.sweep.frame_period)
        return events


# --------------------------------------------------------------------------
# Offline run
# --------------------------------------------------------------------------

def run(scene: Scene, duration_s: float, seed: int | None = None,
        out_dir=None, dump_spectra: bool = False, wire_capture=None,
        figures: bool = True, osc_drift: float = 0.0,
        calibration: bool = True,
        frame_hook=None) -> tuple[RunReport, list[MusicEvent]]:
    """Drive the scene for duration_s and write the report bundle.

    Outputs (when out_dir is set): events.jsonl, tracks.csv, report.json,
    figures, optional per-frame spectrum CSVs, optional wire capture.
    """
    pipeline = Pipeline(scene, seed=seed, osc_drift=osc_drift, calibration=calibration)
    n_frames = int(round(duration_s / pipeline.sweep.frame_period))
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        if dump_spectra:
            (out_dir / "spectra").mkdir(exist_ok=True)

    capture = CaptureWriter(wire_capture, pipeline.sweep) if wire_capture else None
    events: list[MusicEvent] = []
    stage_samples = {s: [] for s in STAGES}
    totals = []
    tracks_rows = []
    last_output = None
    wall_start = time.perf_counter()
    try:
        for k in range(n_frames):
            placements = scene.placements_at(k * pipeline.sweep.frame_period)
            output = pipeline.process(k, placements)
            last_output = output
            events.extend(output.events)
            for s in STAGES:
                stage_samples[s].append(output.stage_ms[s])
            totals.append(sum(output.stage_ms.values()))
            if capture:
                capture.write(output.wire_frame)
            if out_dir is not None:
                for state in output.track_frame.states.values():
                    tracks_rows.append((k, round(output.timestamp, 6), state.tag_id,
                                        round(state.freq, 2),
                                        f"{state.raw_amplitude:.6g}",
                                        f"{state.amplitude:.6g}",
                                        int(state.present)))
                if dump_spectra:
                    _dump_spectrum(out_dir / "spectra" / f"frame_{k:05d}.csv",
                                   output.shaped)
            if frame_hook is not None:
                frame_hook(output)
        events.extend(pipeline.finish(n_frames))
    finally:
        if capture:
            capture.close()

    report = RunReport(
        frames=n_frames, duration_s=duration_s, events=len(events),
        wall_s=time.perf_counter() - wall_start,
        stage_ms={s: _percentiles(v) for s, v in stage_samples.items()},
        total_ms=_percentiles(totals))

    if out_dir is not None:
        export_jsonl(events, out_dir / "events.jsonl")
        with open(out_dir / "tracks.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["frame", "t_s", "tag_id", "freq_hz", "amplitude",
                             "smoothed", "present"])
            writer.writerows(tracks_rows)
        (out_dir / "report.json").write_text(
            json.dumps(report.to_dict(), indent=1) + "\n")
        if figures and last_output is not None:
            from . import report as report_figs
            report_figs.render_all(out_dir, scene, last_output, tracks_rows,
                                   events, stage_samples)
    return report, events


def _dump_spectrum(path, frame):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin", "freq_hz", "magnitude"])
        for i, (freq, mag) in enumerate(zip(frame.freq_axis, frame.magnitude)):
            writer.writerow([i, f"{freq:.2f}", f"{mag:.6g}"])


def run_ringdown_dump(scene: Scene, out_dir) -> list[Path]:
    """One ringdown read per scene tag at the initial placements, dumped as CSV."""
    from .ringdown import LadderConfig, excite_and_capture

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    field = FieldModel(scene.coil)
    placements = scene.placements_at(0.0)
    ladder = LadderConfig()
    paths = []
    for obj in scene.objects:
        for tn in obj.tags:
            cap = excite_and_capture(placements, field, tn.tag.f0, 0.006, ladder)
            path = out_dir / f"ringdown_{tn.tag.tag_id}.csv"
            with open(path, "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(["t_s", "amplitude"])
                step = max(1, len(cap.samples) // 20000)
                for i in range(0, len(cap.samples), step):
                    writer.writerow([f"{i / cap.sample_rate:.7f}",
                                     f"{cap.samples[i]:.6g}"])
            paths.append(path)
    return paths
