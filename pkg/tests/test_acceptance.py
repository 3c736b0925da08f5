"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion
report. Accuracy and arithmetic claims are asserted at their stated
tolerances; stated runtime budgets are printed (and asserted only where
time itself is the claim, i.e. the frame-budget and ringdown-timing
criteria).
"""

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest
from click.testing import CliRunner
from scipy.spatial.transform import Rotation

from trinkets.cli import main as cli_main
from trinkets.mapping import EventKind, MusicEvent
from trinkets.pipeline import Pipeline
from trinkets.posest import (
    HelmholtzRig,
    TriadObservation,
    orientation_from_triad,
    param_estimate,
    pose_gauge_equivalents,
    pose_solve,
    simulate_multi_axis,
    simulate_triad,
)
from trinkets.scene import load_bundled
from trinkets.sweepchain import (
    Placement,
    SweepConfig,
    _suppression_scales,
    _visible_entries,
    bridge_response,
    chirp_freq,
    shape,
)
from trinkets.tagphys import (
    Z_NORM,
    FieldModel,
    Pose,
    amplitude_scale,
    reflected_impedance,
)
from trinkets.tracker import CalibrationState, OscillatorModel, associate, calibrate, find_peaks
from trinkets.wire import WireDecoder, WireFrame, WirePeak, decode_wire, encode_wire


def _report(name: str, elapsed: float, detail: str = ""):
    suffix = f"  ({detail})" if detail else ""
    print(f"\nPASS  {name}  [{elapsed:.1f}s]{suffix}")


@pytest.fixture(scope="module")
def scene():
    return load_bundled()


@pytest.fixture(scope="module")
def field(scene):
    return FieldModel(scene.coil)


def test_01_sweep_parameters():
    t0 = time.perf_counter()
    cfg = SweepConfig()
    assert chirp_freq(0.0, cfg) == 40_000.0
    assert chirp_freq(cfg.frame_period, cfg) == 400_000.0
    assert cfg.frame_period == 1.0 / 30.0
    scene = load_bundled()
    assert scene.sweep.f_start == 40_000.0
    assert scene.sweep.f_end == 400_000.0
    assert scene.sweep.frame_period == 1.0 / 30.0
    _report("sweep parameters: 40-400 kHz decade chirp at exactly 30 Hz",
            time.perf_counter() - t0)


def _band_profiles(placements, field, sweep, entry, n=801, grid=None):
    """Dense |composite| and |composite without this tag| over the guard band."""
    lo, hi = entry.band
    fine = np.linspace(lo, hi, n) if grid is None else grid
    entries = _visible_entries(placements, field, sweep)
    scales = _suppression_scales(entries, sweep.suppression_strength)
    total = np.zeros_like(fine, dtype=complex)
    without = np.zeros_like(fine, dtype=complex)
    for (tag, c, pull), s in zip(entries, scales):
        z = s * reflected_impedance(tag, c, fine, pull)
        total += z
        if tag.tag_id != entry.tag_id:
            without += z
    return fine, np.abs(total) / Z_NORM, np.abs(without) / Z_NORM


def test_02_sixteen_object_round_trip(scene, field):
    """100 random in-volume poses, noise-free.

    Visibility oracle: a tag must be detected when the dense-scan composite
    contains a bump of at least twice the detection threshold in its guard
    band (a small peak riding a large quadrature floor is suppressed as
    bump ~ peak^2/2*floor by any magnitude detector, so zero-bump tags are
    physically undetectable). Frequency accuracy is asserted against the
    dense-scan argmax for isolated peaks (peak at least 30x the in-band
    floor of all other tags).
    """
    t0 = time.perf_counter()
    sweep = replace(scene.sweep, noise_rms=0.0)
    tp = scene.tracker_params
    rng = np.random.RandomState(424242)
    visible_n = detected_n = spurious_n = 0
    freq_errs = []
    from trinkets.sweepchain import scene_couplings

    for trial in range(100):
        placements = []
        for obj in scene.objects:
            pos = np.array([rng.uniform(-0.12, 0.12), rng.uniform(-0.12, 0.12),
                            rng.uniform(0.06, 0.35)])
            placements.append(Placement(
                obj, Pose(pos, Rotation.random(random_state=rng).as_quat()), 0.0))
        pred = {t.tag_id: amplitude_scale(t, p) * c * c
                for t, c, p in scene_couplings(placements, field)}
        raw = bridge_response(placements, field, sweep)
        shaped = shape(raw, tp.baseline_window)
        peaks = find_peaks(shaped, tp.detection_threshold, tp.min_sep_bins,
                           interp_source=raw)
        obs, _anoms = associate(peaks, scene.registry)
        obs_by_id = {o.tag_id: o for o in obs}
        for o in obs:
            # zero false IDs: no observation of a physically dead tag
            if pred[o.tag_id] < tp.detection_threshold / 4:
                spurious_n += 1
        check_freq = trial < 15
        for entry in scene.registry.entries:
            if not check_freq and pred[entry.tag_id] < tp.detection_threshold:
                continue
            fine, m_total, m_without = _band_profiles(placements, field, sweep, entry)
            k = int(np.argmax(m_total))
            edge_floor = np.interp(fine[k], [fine[0], fine[-1]],
                                   [m_total[0], m_total[-1]])
            bump = m_total[k] - edge_floor
            if bump >= 2.0 * tp.detection_threshold:
                visible_n += 1
                assert entry.tag_id in obs_by_id, \
                    f"trial {trial}: visible tag {entry.tag_id} (bump {bump:.4f}) missed"
                detected_n += 1
            if (check_freq and entry.tag_id in obs_by_id
                    and m_without[k] > 0
                    and pred[entry.tag_id] >= 30.0 * m_without[k]):
                # zoomed oracle pass: the coarse band grid can be wider than
                # the 10%-of-bin tolerance itself (the pez band spans its
                # whole parametric range)
                step = fine[1] - fine[0]
                zoom = np.linspace(fine[k] - 2 * step, fine[k] + 2 * step, 401)
                zfine, zm, _ = _band_profiles(placements, field, sweep, entry,
                                              grid=zoom)
                oracle = zfine[int(np.argmax(zm))]
                err = abs(obs_by_id[entry.tag_id].freq - oracle)
                freq_errs.append(err / sweep.bin_width_at(entry.f0))

    assert spurious_n == 0, f"{spurious_n} spurious observations (false IDs)"
    assert detected_n == visible_n
    assert freq_errs, "no isolated peaks sampled"
    assert max(freq_errs) < 0.10, f"worst sub-bin error {max(freq_errs):.3f} bins"
    _report("16-object round trip: all visible tags identified, zero false IDs",
            time.perf_counter() - t0,
            f"{detected_n}/{visible_n} detections over 100 poses, "
            f"worst isolated-peak frequency error {max(freq_errs):.3f} bins")


def test_03_frame_budget(scene):
    """Full pipeline (synthesis through mapping) inside the 33.3 ms frame."""
    t0 = time.perf_counter()
    pipeline = Pipeline(scene)
    totals = []
    for k in range(1000):
        # cycle the demo trajectory so objects keep moving (no cache-only runs)
        placements = scene.placements_at((k % 300) / 30.0)
        output = pipeline.process(k, placements)
        totals.append(sum(output.stage_ms.values()))
    elapsed = time.perf_counter() - t0
    p50 = float(np.percentile(totals, 50))
    p99 = float(np.percentile(totals, 99))
    assert p50 < 1000.0 / 30.0, f"median frame {p50:.2f} ms breaks the 33.3 ms budget"
    assert p99 < 40.0, f"p99 frame {p99:.2f} ms exceeds 40 ms"
    assert elapsed < 60.0, f"1000-frame benchmark took {elapsed:.1f}s (budget 60s)"
    _report("frame budget: 2048-bin, 16-object pipeline at 30 Hz",
            elapsed, f"median {p50:.2f} ms, p99 {p99:.2f} ms")


def test_04_ringdown_timing_comparison():
    t0 = time.perf_counter()
    result = CliRunner().invoke(
        cli_main, ["ringdown-timing", "--tags", "16", "--dwell", "6"])
    assert result.exit_code == 0
    assert "total read time: 96 ms" in result.output
    assert "misses the 30 Hz frame" in result.output
    assert 16 * 0.006 == pytest.approx(0.096)
    assert 0.096 > 1.0 / 30.0
    _report("ringdown timing: 16 tags x 6 ms = 96 ms > 33.3 ms frame",
            time.perf_counter() - t0)


def test_05_triad_invariance(scene, field):
    t0 = time.perf_counter()
    cube = scene.by_name["cube"]
    pos = (0.03, -0.02, 0.16)
    rng = np.random.RandomState(31415)

    totals = []
    for _ in range(1000):
        pose = Pose(np.array(pos), Rotation.random(random_state=rng).as_quat())
        totals.append(simulate_triad(cube, pose, field).total)
    spread = (max(totals) - min(totals)) / float(np.mean(totals))
    assert spread < 1e-6, f"amplitude-sum spread {spread:.2e} over rotations"

    ok = 0
    worst = 0.0
    for _ in range(1000):
        pose = Pose(np.array(pos), Rotation.random(random_state=rng).as_quat())
        obs = simulate_triad(cube, pose, field)
        sigma = (obs.total / 3.0) * 10 ** (-40.0 / 20.0)
        noisy = tuple(max(a + rng.normal(0.0, sigma), 0.0) for a in obs.amplitudes)
        est = orientation_from_triad(TriadObservation(noisy))
        b = field.field_at(pose.position)
        true_cos = np.abs(cube.world_normals(pose) @ b / np.linalg.norm(b))
        err = math.degrees(math.acos(min(1.0, float(np.dot(est.cosines, true_cos)))))
        worst = max(worst, err)
        ok += err < 5.0
    assert ok >= 990, f"only {ok}/1000 noisy trials under 5 degrees"
    _report("triad invariance: rotation-invariant sum, orientation under noise",
            time.perf_counter() - t0,
            f"sum spread {spread:.1e}, {ok}/1000 trials "
            f"under 5 deg at 40 dB SNR (worst {worst:.2f} deg)")


def test_06_parametric_inversion(scene, field):
    """Pull values recovered end-to-end through synthesis and tracking."""
    t0 = time.perf_counter()
    sweep = replace(scene.sweep, noise_rms=0.0)
    tp = scene.tracker_params
    pez = scene.by_name["pez"]
    tag = pez.tags[0].tag
    worst = 0.0
    for p_true in (0.0, 0.25, 0.5, 0.75, 1.0):
        placements = [Placement(pez, Pose.identity((0.0, 0.0, 0.12)), p_true)]
        raw = bridge_response(placements, field, sweep)
        shaped = shape(raw, tp.baseline_window)
        peaks = find_peaks(shaped, tp.detection_threshold, tp.min_sep_bins,
                           interp_source=raw)
        obs, _ = associate(peaks, scene.registry)
        assert [o.tag_id for o in obs] == ["pez"]
        p_est = param_estimate(obs[0].freq, tag)
        worst = max(worst, abs(p_est - p_true))
        assert p_est == pytest.approx(p_true, abs=0.02)
    _report("parametric inversion: pull recovered within 0.02 end to end",
            time.perf_counter() - t0, f"worst error {worst:.4f}")


def test_07_helmholtz_pose_solve(scene):
    """100 random full-cube poses, noise-free, error modulo the exact gauge."""
    t0 = time.perf_counter()
    rig = HelmholtzRig()
    cube = scene.by_name["cube"]
    rng = np.random.RandomState(2024)
    worst_pos = worst_orient = 0.0
    for _ in range(100):
        pose = Pose(rng.uniform(-0.15, 0.15, 3),
                    Rotation.random(random_state=rng).as_quat())
        obs = simulate_multi_axis(cube, pose, rig)
        est = pose_solve(obs, rig)  # raises on non-convergence
        pos_err = orient_err = math.inf
        for pos_eq, rot_eq in pose_gauge_equivalents(pose.position, pose.rotation):
            e1 = float(np.linalg.norm(est.position - pos_eq))
            e2 = math.degrees((est.rotation.inv() * rot_eq).magnitude())
            if e1 + 1e-3 * e2 < pos_err + 1e-3 * orient_err:
                pos_err, orient_err = e1, e2
        worst_pos = max(worst_pos, pos_err)
        worst_orient = max(worst_orient, orient_err)
        assert pos_err < 1e-3, f"position error {pos_err * 1000:.3f} mm"
        assert orient_err < 0.5, f"orientation error {orient_err:.3f} deg"
    elapsed = time.perf_counter() - t0
    _report("helmholtz pose solve: 100/100 converged inside 1 mm / 0.5 deg",
            elapsed, f"worst {worst_pos * 1e6:.2f} um, {worst_orient:.2e} deg")


def test_08_drift_calibration(scene, field):
    t0 = time.perf_counter()
    for drift in (0.01, -0.01):
        cal = calibrate(OscillatorModel(drift=drift), gate=0.05)
        assert cal.freq_scale == pytest.approx(1.0 / (1.0 + drift), rel=1e-3)

    # end-to-end at +-5%: a busy frame associates fully with calibration
    # enabled and fails without it
    sweep = replace(scene.sweep, noise_rms=0.0)
    tp = scene.tracker_params
    placements = scene.placements_at(5.5)
    baseline_frame = bridge_response(placements, field, sweep)
    baseline_peaks = find_peaks(shape(baseline_frame, tp.baseline_window),
                                tp.detection_threshold, tp.min_sep_bins,
                                interp_source=baseline_frame)
    baseline_obs, _ = associate(baseline_peaks, scene.registry)
    baseline_ids = {o.tag_id for o in baseline_obs}
    assert len(baseline_ids) >= 8
    for drift in (0.05, -0.05):
        raw = bridge_response(placements, field, sweep, osc_drift=drift)
        peaks = find_peaks(shape(raw, tp.baseline_window), tp.detection_threshold,
                           tp.min_sep_bins, interp_source=raw)
        cal = calibrate(OscillatorModel(drift=drift), gate=0.05)
        with_cal, _ = associate(peaks, scene.registry, cal)
        assert {o.tag_id for o in with_cal} == baseline_ids
        for o in with_cal:
            entry = scene.registry.by_id[o.tag_id]
            assert abs(o.freq - entry.f0) < entry.guard
        without_cal, _ = associate(peaks, scene.registry, CalibrationState())
        assert {o.tag_id for o in without_cal} != baseline_ids
    _report("drift calibration: 1% corrected to 0.1%; association survives 5% "
            "drift only with calibration", time.perf_counter() - t0,
            f"{len(baseline_ids)} tags in the test frame")


def test_09_wire_codec():
    t0 = time.perf_counter()
    rng = np.random.default_rng(90210)
    for _ in range(100_000):
        n = int(rng.integers(0, 5))
        peaks = tuple(WirePeak(int(rng.integers(0, 2**32)),
                               int(rng.integers(0, 2**16)),
                               int(rng.integers(0, 2**16))) for _ in range(n))
        frame = WireFrame(int(rng.integers(0, 2**16)), peaks)
        assert decode_wire(encode_wire(frame)) == frame

    # fuzz: a megabyte of noise, never crashes
    decoder = WireDecoder()
    for _ in range(100):
        decoder.feed(rng.integers(0, 256, size=10_000, dtype=np.uint8).tobytes())

    # resynchronization after corruption
    good = [WireFrame(k, (WirePeak(50_000 + k, 1000, 500),)) for k in range(50)]
    blob = bytearray(b"".join(encode_wire(f) for f in good))
    for pos in range(40, len(blob), 400):
        blob[pos] ^= 0x20
    decoder2 = WireDecoder()
    recovered = decoder2.feed(bytes(blob))
    assert len(recovered) >= 30
    assert set(recovered) <= set(good)
    assert decoder2.stats.crc_errors > 0
    _report("wire codec: 1e5 frames round-trip bit-exactly, decoder survives "
            "1 MB of fuzz and resynchronizes", time.perf_counter() - t0,
            f"{len(recovered)}/50 frames recovered around corruption")


def _load_lines(path):
    return path.read_bytes()


def test_10_mapping_golden_log(tmp_path):
    """Two independent CLI runs produce byte-identical logs that exhibit
    every mapping rule."""
    t0 = time.perf_counter()
    runner = CliRunner()
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        result = runner.invoke(cli_main, [
            "simulate", "--scene", "trinkets16", "--duration", "10",
            "--seed", "1", "--out", str(out), "--no-figures"])
        assert result.exit_code == 0, result.output
        outs.append(out / "events.jsonl")
    log_a = outs[0].read_bytes()
    assert log_a == outs[1].read_bytes(), "event logs differ between runs"

    events = [MusicEvent.from_json_line(line)
              for line in log_a.decode().splitlines() if line]
    ons = [e for e in events if e.kind == EventKind.NOTE_ON]
    offs = [e for e in events if e.kind == EventKind.NOTE_OFF]
    ccs = [e for e in events if e.kind == EventKind.CONTROL_CHANGE]
    bends = [e for e in events if e.kind == EventKind.PITCH_BEND]

    # goblin drone + proximity-driven volume
    assert any(e.channel in (0, 1, 2, 3, 4) for e in ons)
    goblin_vols = {e.data2 for e in ccs if e.data1 == 7}
    assert len(goblin_vols) >= 2
    # ring NoteOn with nonzero velocity, balanced by NoteOff
    ring_ons = [e for e in ons if e.channel == 5]
    assert ring_ons and all(e.data2 > 0 for e in ring_ons)
    assert len([e for e in offs if e.channel == 5]) == len(ring_ons)
    # pengachu sequence with transposition
    peng = [e.data1 for e in ons if e.channel == 6]
    assert len(peng) >= 3 and len(set(peng)) >= 2
    # cube drone with orientation-driven bend
    assert any(e.channel == 7 for e in ons)
    assert len({e.bend_value for e in bends if e.channel == 7}) >= 3
    # pez cutoff sweep 0 -> 127 plus the pull-triggered second voice
    cc74 = [e.data2 for e in ccs if e.data1 == 74]
    assert 0 in cc74 and 127 in cc74
    assert len({e.data1 for e in ons if e.channel == 8}) == 2
    # porcupine bends active voices down
    down_channels = {e.channel for e in bends if e.bend_value < 8192}
    assert len(down_channels) >= 2
    # pig vibrato depth
    assert any(e.data1 == 1 and e.data2 > 0 for e in ccs)
    # eyeball effect sends
    assert {91, 92, 93} <= {e.data1 for e in ccs}
    # triangle toggles once per entry
    toggles = [e for e in events if e.kind == EventKind.MODE_TOGGLE]
    assert [e.data2 for e in toggles] == [127, 0]
    # every NoteOn balanced before stream end
    open_notes = {}
    for e in events:
        if e.kind == EventKind.NOTE_ON:
            open_notes[(e.channel, e.data1)] = open_notes.get((e.channel, e.data1), 0) + 1
        elif e.kind == EventKind.NOTE_OFF:
            open_notes[(e.channel, e.data1)] = open_notes.get((e.channel, e.data1), 0) - 1
    assert all(v == 0 for v in open_notes.values())
    _report("mapping golden log: byte-identical across runs, every rule exhibited",
            time.perf_counter() - t0, f"{len(events)} events")
