"""Scene files: coil + sweep + objects + trajectories, with full validation.

Scenes are JSON. Every invariant violation is reported with the name of the
offending object or field; parse errors carry line/column. Trajectories
interpolate linearly in position and spherically in orientation, clamping
before the first and after the last keyframe.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .errors import DomainError, SceneValidationError
from .mapping import ALL_ROLES, MappingConfig
from .sweepchain import Placement, SweepConfig
from .tagphys import (
    CoilSpec,
    HelmholtzPair,
    ObjectSpec,
    Pose,
    Solenoid,
    TagKind,
    TagSpec,
    TaggedNormal,
)
from .tracker import TagRegistry


@dataclass(frozen=True)
class TrackerParams:
    detection_threshold: float = 0.005
    on_threshold: float = 0.02
    off_threshold: float = 0.01
    ema_alpha: float = 0.5
    min_sep_bins: int = 9
    baseline_window: int = 63

    def __post_init__(self):
        if not (self.on_threshold > self.off_threshold > 0.0):
            raise SceneValidationError("tracker needs on_threshold > off_threshold > 0")
        if self.detection_threshold <= 0.0:
            raise SceneValidationError("detection_threshold must be positive")


@dataclass(frozen=True)
class EstimationParams:
    reference_distance: float = 0.08
    far_distance: float = 0.45


@dataclass(frozen=True)
class Volume:
    x: tuple[float, float] = (-0.25, 0.25)
    y: tuple[float, float] = (-0.25, 0.25)
    z: tuple[float, float] = (0.03, 0.6)

    def contains(self, position) -> bool:
        p = np.asarray(position, dtype=float)
        return bool(self.x[0] <= p[0] <= self.x[1]
                    and self.y[0] <= p[1] <= self.y[1]
                    and self.z[0] <= p[2] <= self.z[1])

    def clamp(self, position) -> np.ndarray:
        p = np.asarray(position, dtype=float)
        lo = np.array([self.x[0], self.y[0], self.z[0]])
        hi = np.array([self.x[1], self.y[1], self.z[1]])
        return np.clip(p, lo, hi)


@dataclass(frozen=True)
class Keyframe:
    t: float
    position: tuple[float, float, float]
    quaternion: tuple[float, float, float, float]
    pull: float = 0.0


class Trajectory:
    """Keyframed motion for one object."""

    def __init__(self, object_name: str, keyframes: list[Keyframe]):
        if not keyframes:
            raise SceneValidationError(f"trajectory for {object_name} has no keyframes")
        times = [k.t for k in keyframes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise SceneValidationError(
                f"trajectory for {object_name}: keyframe times must be strictly increasing")
        self.object_name = object_name
        self.keyframes = keyframes
        self._times = np.array(times)
        self._positions = np.array([k.position for k in keyframes], dtype=float)
        self._pulls = np.array([k.pull for k in keyframes], dtype=float)
        quats = np.array([k.quaternion for k in keyframes], dtype=float)
        norms = np.linalg.norm(quats, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise SceneValidationError(
                f"trajectory for {object_name}: keyframe quaternions must be unit length")
        self._rotations = Rotation.from_quat(quats)
        self._slerp = Slerp(self._times, self._rotations) if len(keyframes) > 1 else None

    def state_at(self, t: float) -> tuple[Pose, float]:
        t_clamped = float(np.clip(t, self._times[0], self._times[-1]))
        pos = np.array([np.interp(t_clamped, self._times, self._positions[:, k])
                        for k in range(3)])
        pull = float(np.interp(t_clamped, self._times, self._pulls))
        if self._slerp is None:
            rot = self._rotations[0]
        else:
            rot = self._slerp(t_clamped)
        q = rot.as_quat()
        q = q / np.linalg.norm(q)
        return Pose(pos, q), pull


@dataclass
class Scene:
    coil: CoilSpec
    sweep: SweepConfig
    objects: list[ObjectSpec]
    initial: dict  # name -> (Pose, pull)
    trajectories: dict = field(default_factory=dict)  # name -> Trajectory
    tracker_params: TrackerParams = TrackerParams()
    estimation: EstimationParams = EstimationParams()
    volume: Volume = Volume()
    mapping: MappingConfig = field(default_factory=MappingConfig)

    def __post_init__(self):
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SceneValidationError(f"duplicate object names: {dupes}")
        for obj in self.objects:
            if obj.role not in ALL_ROLES:
                raise SceneValidationError(
                    f"object {obj.name}: unknown role '{obj.role}'")
        n_goblins = sum(1 for o in self.objects if o.role == "goblin")
        if n_goblins > len(self.mapping.goblin_channels):
            raise SceneValidationError(
                f"{n_goblins} goblins exceed the {len(self.mapping.goblin_channels)} "
                "configured goblin channels")
        # guard-band overlap check doubles as the pairwise-f0 validation
        self.registry = TagRegistry.from_objects(self.objects, self.sweep)
        self.mapping.validate()
        for name, (pose, pull) in self.initial.items():
            if not self.volume.contains(pose.position):
                raise SceneValidationError(
                    f"object {name}: initial position {pose.position.tolist()} "
                    "outside the simulation volume")
            if not (0.0 <= pull <= 1.0):
                raise SceneValidationError(f"object {name}: pull {pull} outside [0, 1]")
        for name, traj in self.trajectories.items():
            if name not in names:
                raise SceneValidationError(f"trajectory references unknown object {name}")
            for k in traj.keyframes:
                if not self.volume.contains(k.position):
                    raise SceneValidationError(
                        f"trajectory for {name}: keyframe at t={k.t} leaves the volume")

    @property
    def by_name(self) -> dict:
        return {o.name: o for o in self.objects}

    def placements_at(self, t: float) -> list[Placement]:
        out = []
        for obj in self.objects:
            traj = self.trajectories.get(obj.name)
            if traj is not None:
                pose, pull = traj.state_at(t)
            else:
                pose, pull = self.initial[obj.name]
            out.append(Placement(obj, pose, pull))
        return out


# --------------------------------------------------------------------------
# JSON loading
# --------------------------------------------------------------------------

def _require(mapping, key, context):
    if key not in mapping:
        raise SceneValidationError(f"{context}: missing required field '{key}'")
    return mapping[key]


def _parse_coil(d) -> CoilSpec:
    kind = _require(d, "type", "coil")
    try:
        if kind == "solenoid":
            geom = Solenoid(_require(d, "radius", "coil"), _require(d, "length", "coil"),
                            _require(d, "turns", "coil"))
        elif kind == "helmholtz":
            geom = HelmholtzPair(_require(d, "radius", "coil"),
                                 tuple(d.get("axis", (0.0, 0.0, 1.0))),
                                 d.get("turns", 1.0))
        else:
            raise SceneValidationError(f"coil: unknown type '{kind}'")
        return CoilSpec(geom, d.get("drive_current", 1.0),
                        tuple(d.get("reference_point", (0.0, 0.0, 0.0))))
    except DomainError as exc:
        raise SceneValidationError(f"coil: {exc}") from exc


def _parse_tag(d, obj_name) -> TaggedNormal:
    ctx = f"object {obj_name} tag"
    try:
        tag = TagSpec(
            tag_id=_require(d, "id", ctx),
            kind=TagKind(d.get("kind", "lc")),
            f0=float(_require(d, "f0", ctx)),
            q=float(_require(d, "q", ctx)),
            l_tag=float(d.get("l_tag", 1.0e-3)),
            alpha=float(d.get("alpha", 0.0)),
        )
        return TaggedNormal(tag, tuple(_require(d, "normal", ctx)))
    except (DomainError, ValueError) as exc:
        raise SceneValidationError(f"{ctx}: {exc}") from exc


def _parse_pose(d, context) -> Pose:
    try:
        return Pose(np.asarray(_require(d, "position", context), dtype=float),
                    np.asarray(d.get("quaternion", (0.0, 0.0, 0.0, 1.0)), dtype=float))
    except DomainError as exc:
        raise SceneValidationError(f"{context}: {exc}") from exc


def scene_from_dict(data: dict) -> Scene:
    coil = _parse_coil(_require(data, "coil", "scene"))
    try:
        sweep = SweepConfig(**data.get("sweep", {}))
    except (DomainError, TypeError) as exc:
        raise SceneValidationError(f"sweep: {exc}") from exc
    objects, initial = [], {}
    for od in _require(data, "objects", "scene"):
        name = _require(od, "name", "object")
        tags = tuple(_parse_tag(td, name) for td in _require(od, "tags", f"object {name}"))
        try:
            obj = ObjectSpec(name, _require(od, "role", f"object {name}"), tags,
                             od.get("param_channel"))
        except DomainError as exc:
            raise SceneValidationError(f"object {name}: {exc}") from exc
        objects.append(obj)
        pose = _parse_pose(_require(od, "pose", f"object {name}"), f"object {name} pose")
        initial[name] = (pose, float(od.get("pull", 0.0)))
    trajectories = {}
    for td in data.get("trajectories", []):
        name = _require(td, "object", "trajectory")
        keyframes = [Keyframe(float(_require(kd, "t", f"trajectory {name}")),
                              tuple(_require(kd, "position", f"trajectory {name}")),
                              tuple(kd.get("quaternion", (0.0, 0.0, 0.0, 1.0))),
                              float(kd.get("pull", 0.0)))
                     for kd in _require(td, "keyframes", f"trajectory {name}")]
        trajectories[name] = Trajectory(name, keyframes)
    volume = Volume(**{k: tuple(v) for k, v in data.get("volume", {}).items()})
    try:
        mapping = MappingConfig(**{
            k: tuple(tuple(x) if isinstance(x, list) else x for x in v)
            if isinstance(v, list) else v
            for k, v in data.get("mapping", {}).items()})
    except TypeError as exc:
        raise SceneValidationError(f"mapping: {exc}") from exc
    return Scene(
        coil=coil, sweep=sweep, objects=objects, initial=initial,
        trajectories=trajectories,
        tracker_params=TrackerParams(**data.get("tracker", {})),
        estimation=EstimationParams(**data.get("estimation", {})),
        volume=volume, mapping=mapping)


def load_scene(path) -> Scene:
    path = Path(path)
    if not path.exists():
        raise SceneValidationError(f"scene file {path} does not exist")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneValidationError(
            f"scene file {path}: parse error at line {exc.lineno}, "
            f"column {exc.colno}: {exc.msg}") from exc
    return scene_from_dict(data)


def bundled_scene_path(name: str = "trinkets16") -> Path:
    """Path of a scene shipped inside the package."""
    return Path(resources.files("trinkets").joinpath(f"data/{name}.json"))


def load_bundled(name: str = "trinkets16") -> Scene:
    return load_scene(bundled_scene_path(name))
