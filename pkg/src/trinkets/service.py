"""Live bidirectional service: real-time pipeline with client mutations.

One session per server. The pipeline runs wall-clock paced at the frame
rate; client mutations (set_pose, set_param, add_object, remove_object,
load_scene, set_mode) queue up and apply at the next frame boundary in
arrival order, each acknowledged with the frame index at which it took
effect. Every frame is broadcast to all connected clients as JSON.

In serve mode the scene's trajectories are ignored: objects move only when
a client moves them. A recorded mutation log replayed against the same
scene and seed reproduces the event log exactly (see `replay`).
"""

from __future__ import annotations

import asyncio
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .errors import SceneValidationError, TrinketsError
from .mapping import MusicEvent
from .pipeline import Pipeline
from .scene import Scene, Trajectory, _parse_pose, _parse_tag, scene_from_dict
from .sweepchain import Placement
from .tagphys import ObjectSpec, Pose

PACING_MODES = ("realtime", "fast", "pause")


def _scene_summary(scene: Scene) -> dict:
    return {
        "objects": [
            {"name": o.name, "role": o.role,
             "tags": [{"id": tn.tag.tag_id, "f0": tn.tag.f0, "q": tn.tag.q,
                       "alpha": tn.tag.alpha} for tn in o.tags],
             "param_channel": o.param_channel}
            for o in scene.objects],
        "sweep": {"f_start": scene.sweep.f_start, "f_end": scene.sweep.f_end,
                  "frame_period": scene.sweep.frame_period, "bins": scene.sweep.bins},
        "volume": {"x": list(scene.volume.x), "y": list(scene.volume.y),
                   "z": list(scene.volume.z)},
    }


def _frame_message(output, poses, pulls) -> dict:
    return {
        "type": "frame",
        "frame_index": output.frame_index,
        "t_ms": int(round(output.timestamp * 1000.0)),
        "peaks": [{"freq_hz": round(p.center_freq, 1),
                   "amplitude": round(p.amplitude, 6),
                   "width_hz": round(p.width, 1),
                   "merged": p.merged_flag} for p in output.peaks],
        "observations": [
            {"tag": s.tag_id, "freq_hz": round(s.freq, 1),
             "amplitude": round(s.amplitude, 6), "present": s.present}
            for s in output.track_frame.states.values()],
        "estimates": {
            s.name: {"present": s.present, "proximity": round(s.proximity, 4),
                     "amplitude": round(s.amplitude, 6), "pull": round(s.pull, 4),
                     "cosines": [round(c, 4) for c in s.cosines] if s.cosines else None}
            for s in output.states},
        "poses": {name: {"position": [round(v, 4) for v in pose.position],
                         "quaternion": [round(v, 6) for v in pose.quaternion],
                         "pull": pulls[name]}
                  for name, (pose, _) in poses.items()},
        "events": [json.loads(e.to_json_line()) for e in output.events],
        "spectrum_decim": None,
    }


@dataclass
class Mutation:
    message: dict
    reply: asyncio.Future


@dataclass
class SessionStats:
    frames: int = 0
    frame_intervals: list = field(default_factory=list)

    def jitter_p95_ms(self, period: float) -> float:
        if len(self.frame_intervals) < 10:
            return 0.0
        arr = np.abs(np.asarray(self.frame_intervals) - period) * 1000.0
        return float(np.percentile(arr, 95))


class ServiceSession:
    """Owns the pipeline, object placements, and the mutation queue."""

    def __init__(self, scene: Scene, seed: int | None = None,
                 pacing: str = "realtime", spectrum_decim: int = 8):
        self._build(scene, seed)
        self.pacing = pacing
        self.seed = seed
        self.spectrum_decim = spectrum_decim
        self.pending: list[Mutation] = []
        self.mutation_log: list[dict] = []
        self.clients: list[asyncio.Queue] = []
        self.stats = SessionStats()
        self.running = False

    def _build(self, scene: Scene, seed):
        self.scene = scene
        self.pipeline = Pipeline(scene, seed=seed)
        self.frame_index = 0
        self.poses = {name: (pose, pull) for name, (pose, pull) in scene.initial.items()}

    def _rebuild_preserving_frame(self, scene: Scene):
        """Swap in a rewritten scene (object add/remove) mid-session.

        The tracker restarts for the new registry; the mapping state machine
        carries over so notes of surviving objects are not orphaned.
        """
        mapping_state = self.pipeline.mapping_state
        frame = self.frame_index
        self._build(scene, self.seed)
        self.frame_index = frame
        self.pipeline.mapping_state = mapping_state

    # -- mutations ---------------------------------------------------------

    def submit(self, message: dict) -> asyncio.Future:
        fut = asyncio.get_running_loop().create_future()
        self.pending.append(Mutation(message, fut))
        return fut

    def _apply(self, message: dict) -> dict:
        op = message.get("op")
        if op == "set_pose":
            name = message["object"]
            if name not in self.poses:
                raise SceneValidationError(f"unknown object '{name}'")
            pose_now, pull = self.poses[name]
            position = self.scene.volume.clamp(message["position"])
            quat = np.asarray(message.get("quaternion",
                                          pose_now.quaternion.tolist()), dtype=float)
            quat = quat / np.linalg.norm(quat)
            self.poses[name] = (Pose(position, quat), pull)
        elif op == "set_param":
            name = message["object"]
            if name not in self.poses:
                raise SceneValidationError(f"unknown object '{name}'")
            obj = self.scene.by_name[name]
            if obj.param_channel is None:
                raise SceneValidationError(f"object '{name}' has no param channel")
            pose_now, _ = self.poses[name]
            value = float(np.clip(message["value"], 0.0, 1.0))
            self.poses[name] = (pose_now, value)
        elif op == "add_object":
            od = message["object"]
            name = od["name"]
            if name in self.poses:
                raise SceneValidationError(f"object '{name}' already exists")
            tags = tuple(_parse_tag(td, name) for td in od["tags"])
            obj = ObjectSpec(name, od["role"], tags, od.get("param_channel"))
            pose = _parse_pose(od["pose"], f"object {name} pose")
            scene = Scene(
                coil=self.scene.coil, sweep=self.scene.sweep,
                objects=self.scene.objects + [obj],
                initial={**{n: v for n, v in self.poses.items()},
                         name: (pose, float(od.get("pull", 0.0)))},
                trajectories={}, tracker_params=self.scene.tracker_params,
                estimation=self.scene.estimation, volume=self.scene.volume,
                mapping=self.scene.mapping)
            self._rebuild_preserving_frame(scene)
        elif op == "remove_object":
            name = message["object"]
            if name not in self.poses:
                raise SceneValidationError(f"unknown object '{name}'")
            scene = Scene(
                coil=self.scene.coil, sweep=self.scene.sweep,
                objects=[o for o in self.scene.objects if o.name != name],
                initial={n: v for n, v in self.poses.items() if n != name},
                trajectories={}, tracker_params=self.scene.tracker_params,
                estimation=self.scene.estimation, volume=self.scene.volume,
                mapping=self.scene.mapping)
            self._rebuild_preserving_frame(scene)
        elif op == "load_scene":
            scene = scene_from_dict(message["scene"])
            frame = self.frame_index
            self._build(scene, self.seed)
            self.frame_index = frame
        elif op == "set_mode":
            mode = message["mode"]
            if mode not in PACING_MODES:
                raise SceneValidationError(
                    f"unknown mode '{mode}'; expected one of {PACING_MODES}")
            self.pacing = mode
        else:
            raise SceneValidationError(f"unknown op '{op}'")
        return {"type": "ack", "op": op, "frame_index": self.frame_index}

    def apply_pending(self) -> None:
        """Frame-boundary mutation drain, arrival order."""
        pending, self.pending = self.pending, []
        for mutation in pending:
            # a mutation must never take the session down; any failure
            # becomes an error reply and the stream continues
            try:
                reply = self._apply(mutation.message)
                self.mutation_log.append({"frame_index": self.frame_index,
                                          "message": mutation.message})
            except Exception as exc:  # noqa: BLE001
                reply = {"type": "error", "op": mutation.message.get("op"),
                         "reason": str(exc)}
            if not mutation.reply.done():
                mutation.reply.set_result(reply)

    # -- frames ------------------------------------------------------------

    def placements(self) -> list[Placement]:
        return [Placement(obj, *self.poses[obj.name]) for obj in self.scene.objects]

    def step(self) -> dict:
        self.apply_pending()
        output = self.pipeline.process(self.frame_index, self.placements())
        pulls = {name: pull for name, (_, pull) in self.poses.items()}
        message = _frame_message(output, self.poses, pulls)
        if self.spectrum_decim and output.frame_index % 15 == 0:
            shaped = output.shaped
            message["spectrum_decim"] = {
                "freq_hz": [round(float(v), 1)
                            for v in shaped.freq_axis[::self.spectrum_decim]],
                "magnitude": [round(float(v), 6)
                              for v in shaped.magnitude[::self.spectrum_decim]],
            }
        self.frame_index += 1
        self.stats.frames += 1
        return message

    def broadcast(self, message: dict) -> None:
        text = json.dumps(message, separators=(",", ":"))
        for q in list(self.clients):
            if q.qsize() < 120:
                q.put_nowait(text)

    async def frame_loop(self):
        self.running = True
        period = self.pipeline.sweep.frame_period
        next_t = time.monotonic() + period
        last_emit = None
        try:
            while self.running:
                if self.pacing == "pause":
                    self.apply_pending()
                    next_t = time.monotonic() + period
                    await asyncio.sleep(0.02)
                    continue
                message = self.step()
                now = time.monotonic()
                if last_emit is not None:
                    self.stats.frame_intervals.append(now - last_emit)
                    del self.stats.frame_intervals[:-600]
                last_emit = now
                self.broadcast(message)
                if self.pacing == "realtime":
                    delay = next_t - time.monotonic()
                    next_t += period
                    if delay > 0:
                        await asyncio.sleep(delay)
                    else:
                        next_t = time.monotonic() + period
                else:
                    await asyncio.sleep(0)
        finally:
            self.running = False


def replay(scene: Scene, mutation_log: list[dict], n_frames: int,
           seed: int | None = None) -> list[MusicEvent]:
    """Re-run a recorded session deterministically, offline."""
    session = ServiceSession(scene, seed=seed, pacing="fast")
    by_frame: dict[int, list[dict]] = {}
    for entry in mutation_log:
        by_frame.setdefault(entry["frame_index"], []).append(entry["message"])
    events: list[MusicEvent] = []
    for k in range(n_frames):
        for message in by_frame.get(k, []):
            session._apply(message)
        output = session.pipeline.process(k, session.placements())
        session.frame_index = k + 1
        events.extend(output.events)
    return events


# --------------------------------------------------------------------------
# FastAPI app
# --------------------------------------------------------------------------

def create_app(scene: Scene, seed: int | None = None, pacing: str = "realtime",
               ui_dir=None) -> FastAPI:
    from contextlib import asynccontextmanager

    session = ServiceSession(scene, seed=seed, pacing=pacing)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        task = asyncio.create_task(session.frame_loop())
        yield
        session.running = False
        task.cancel()

    app = FastAPI(title="resonant-tag reader service", lifespan=lifespan)
    app.state.session = session

    @app.get("/status")
    async def status():
        return {
            "scene": _scene_summary(session.scene),
            "frame_index": session.frame_index,
            "clients": len(session.clients),
            "mode": session.pacing,
            "jitter_p95_ms": round(
                session.stats.jitter_p95_ms(session.pipeline.sweep.frame_period), 3),
        }

    @app.get("/mutations")
    async def mutations():
        return {"mutations": session.mutation_log}

    @app.websocket("/ws")
    async def ws(websocket: WebSocket):
        await websocket.accept()
        queue: asyncio.Queue = asyncio.Queue()
        session.clients.append(queue)
        await websocket.send_json({"type": "hello",
                                   "scene": _scene_summary(session.scene),
                                   "frame_index": session.frame_index,
                                   "mode": session.pacing})

        async def sender():
            while True:
                await websocket.send_text(await queue.get())

        send_task = asyncio.create_task(sender())
        try:
            while True:
                try:
                    message = await websocket.receive_json()
                except json.JSONDecodeError:
                    await websocket.send_json({"type": "error",
                                               "reason": "malformed JSON"})
                    continue
                if not isinstance(message, dict) or "op" not in message:
                    await websocket.send_json({"type": "error",
                                               "reason": "message needs an 'op'"})
                    continue
                reply = await session.submit(message)
                await websocket.send_json(reply)
        except WebSocketDisconnect:
            pass
        finally:
            send_task.cancel()
            if queue in session.clients:
                session.clients.remove(queue)

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
