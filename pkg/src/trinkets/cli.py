"""Command-line interface.

Exit codes: 0 success, 2 validation error (scene or arguments),
3 runtime stage error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .errors import DomainError, SceneValidationError, StageError
from .mapping import load_jsonl
from .midifile import write_smf
from .ringdown import schedule
from .scene import bundled_scene_path, load_scene

FRAME_PERIOD_MS = 1000.0 / 30.0


def _resolve_scene(spec: str) -> Path:
    """A bare name (no path separator, no extension) means a bundled scene."""
    p = Path(spec)
    if p.suffix == "" and p.parent == Path("."):
        bundled = bundled_scene_path(spec)
        if bundled.exists():
            return bundled
    return p


def _load_or_exit(scene_spec: str):
    try:
        return load_scene(_resolve_scene(scene_spec))
    except SceneValidationError as exc:
        click.echo(f"scene error: {exc}", err=True)
        sys.exit(2)


@click.group()
@click.version_option(package_name="trinkets")
def main():
    """Resonant-tag sensing simulator and musical mapper."""


@main.command()
@click.option("--scene", "scene_spec", required=True,
              help="Scene file path, or a bundled scene name like 'trinkets16'.")
@click.option("--duration", type=float, default=10.0, show_default=True,
              help="Run length in seconds.")
@click.option("--seed", type=int, default=None, help="Override the scene's noise seed.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Output directory for events, tracks, report and figures.")
@click.option("--dump-spectra", is_flag=True, help="Write one spectrum CSV per frame.")
@click.option("--dump-ringdown", is_flag=True,
              help="Also dump one ringdown capture CSV per tag at t=0.")
@click.option("--wire-capture", type=click.Path(dir_okay=False), default=None,
              help="Write the binary wire capture to this file.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--osc-drift", type=float, default=0.0,
              help="Inject a fractional oscillator drift (e.g. 0.01 for +1%).")
@click.option("--calibration/--no-calibration", default=True, show_default=True,
              help="Cycle-count calibration of the injected drift.")
def simulate(scene_spec, duration, seed, out_dir, dump_spectra, dump_ringdown,
             wire_capture, figures, osc_drift, calibration):
    """Run the offline pipeline and write the report bundle."""
    from .pipeline import run, run_ringdown_dump

    scene = _load_or_exit(scene_spec)
    try:
        report, _events = run(scene, duration, seed=seed, out_dir=out_dir,
                              dump_spectra=dump_spectra, wire_capture=wire_capture,
                              figures=figures, osc_drift=osc_drift,
                              calibration=calibration)
        if dump_ringdown:
            run_ringdown_dump(scene, Path(out_dir) / "ringdown")
    except StageError as exc:
        click.echo(f"runtime error: {exc}", err=True)
        sys.exit(3)
    click.echo(json.dumps(report.to_dict(), indent=1))


@main.command()
@click.option("--scene", "scene_spec", required=True)
@click.option("--port", type=int, default=7788, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--seed", type=int, default=None)
@click.option("--pacing", type=click.Choice(["realtime", "fast", "pause"]),
              default="realtime", show_default=True)
@click.option("--ui", "ui_dir", type=click.Path(file_okay=False), default=None,
              help="Static directory to serve at / (e.g. frontend/dist).")
def serve(scene_spec, port, host, seed, pacing, ui_dir):
    """Serve the live pipeline over the WebSocket service channel."""
    import uvicorn

    from .service import create_app

    scene = _load_or_exit(scene_spec)
    if ui_dir is None and Path("frontend/dist/index.html").exists():
        ui_dir = "frontend/dist"
    app = create_app(scene, seed=seed, pacing=pacing, ui_dir=ui_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except SystemExit:
        raise
    except OSError as exc:
        click.echo(f"startup error: {exc}", err=True)
        sys.exit(3)


@main.command("ringdown-timing")
@click.option("--tags", "n_tags", type=int, required=True, help="Number of tags to read.")
@click.option("--dwell", type=float, required=True,
              help="Per-tag dwell in milliseconds (5-10).")
def ringdown_timing(n_tags, dwell):
    """Sequential ringdown read time versus the 30 Hz frame budget."""
    try:
        total_s = schedule(range(n_tags), dwell / 1000.0)
    except DomainError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    total_ms = total_s * 1000.0
    click.echo(f"tags: {n_tags}")
    click.echo(f"per-tag dwell: {dwell:g} ms")
    click.echo(f"total read time: {total_ms:g} ms")
    click.echo(f"frame period: {FRAME_PERIOD_MS:.1f} ms")
    if total_ms > FRAME_PERIOD_MS:
        click.echo(f"verdict: misses the 30 Hz frame "
                   f"({total_ms / FRAME_PERIOD_MS:.1f} frame periods per full read; "
                   "the swept reader covers all tags in a single chirp)")
    else:
        click.echo("verdict: fits within one 30 Hz frame")


@main.command("export-midi")
@click.option("--log", "log_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def export_midi(log_path, out_path):
    """Convert an events.jsonl log to a type 0 Standard MIDI File."""
    try:
        events = load_jsonl(log_path)
        if not events:
            raise DomainError("event log is empty; SMF export needs at least one event")
        write_smf(events, out_path)
    except (DomainError, OSError, ValueError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(f"wrote {out_path} ({len(events)} events)")


@main.command()
@click.option("--scene", "scene_spec", required=True)
def validate(scene_spec):
    """Validate a scene file and print its summary."""
    scene = _load_or_exit(scene_spec)
    n_tags = sum(len(o.tags) for o in scene.objects)
    click.echo(f"scene ok: {len(scene.objects)} objects, {n_tags} tags, "
               f"{len(scene.trajectories)} trajectories")
    for entry in scene.registry.entries:
        lo, hi = entry.band
        click.echo(f"  {entry.tag_id}: f0 {entry.f0:.0f} Hz, q {entry.q:g}, "
                   f"band [{lo:.0f}, {hi:.0f}] Hz")


if __name__ == "__main__":
    main()
