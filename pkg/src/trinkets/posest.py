"""Estimation: proximity, orientation, full pose, mechanical parameters.

Triad objects carry three orthogonal tags, so the sum of their
sensitivity-normalized amplitudes depends only on |B| at the object (a
Parseval identity over the orthonormal normals): range and orientation
decouple. Orientation comes from the amplitude ratios as unsigned direction
cosines; amplitude goes as cos^2, so signs are unobservable in a single
frame and are resolved by temporal continuity when a history exists.

Full 6-DoF pose uses three perpendicular Helmholtz pairs driven one axis
per frame. Two exact gauge ambiguities remain physical: the concentric coil
set satisfies B(-r) = B(r), so p and -p are indistinguishable (the classic
magnetic-tracker hemisphere ambiguity), and flipping two tag-axis signs
(a 180-degree object rotation) leaves every amplitude unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import (
    AbsentSignalError,
    ConvergenceError,
    DomainError,
    NotParametricError,
)
from .tagphys import (
    CoilSpec,
    FieldModel,
    HelmholtzPair,
    ObjectSpec,
    Pose,
    TagSpec,
    amplitude_scale,
    effective_f0,
)


@dataclass(frozen=True)
class TriadObservation:
    """Sensitivity-normalized amplitudes (one per orthogonal tag axis)."""

    amplitudes: tuple[float, float, float]
    frame_index: int = 0

    def __post_init__(self):
        if len(self.amplitudes) != 3 or not all(math.isfinite(a) for a in self.amplitudes):
            raise DomainError("triad observation needs 3 finite amplitudes")

    @property
    def total(self) -> float:
        return float(sum(self.amplitudes))


def simulate_triad(obj: ObjectSpec, pose: Pose, fieldmodel: FieldModel,
                   frame_index: int = 0) -> TriadObservation:
    """Forward-model triad amplitudes: normalized c^2 per tag axis."""
    if not obj.is_triad:
        raise DomainError(f"object {obj.name} does not carry a triad")
    normals = obj.world_normals(pose)
    b = fieldmodel.field_at(pose.position)
    c = normals @ b / fieldmodel.b_ref
    return TriadObservation(tuple(float(v * v) for v in c), frame_index)


def normalized_amplitudes(obj: ObjectSpec, raw_amplitudes) -> tuple[float, ...]:
    """Divide raw tracked amplitudes by each tag's c=1 sensitivity."""
    return tuple(float(a) / amplitude_scale(tn.tag)
                 for a, tn in zip(raw_amplitudes, obj.tags))


# --------------------------------------------------------------------------
# Range from the rotation-invariant amplitude sum
# --------------------------------------------------------------------------

class OnAxisRangeMap:
    """Monotone map between on-axis distance and the triad amplitude sum.

    s(d) = (|B(d * axis)| / B_ref)^2, tabulated once and inverted by
    log-log interpolation. Proximity is 1 at the configured reference
    distance, falling linearly in distance to 0 at the far edge.
    """

    def __init__(self, fieldmodel: FieldModel, reference_distance: float = 0.08,
                 far_distance: float = 0.45, d_min: float = 0.02,
                 d_max: float = 0.8, n: int = 512, axis=(0.0, 0.0, 1.0)):
        if not (d_min < reference_distance < far_distance <= d_max):
            raise DomainError("need d_min < reference_distance < far_distance <= d_max")
        self.reference_distance = reference_distance
        self.far_distance = far_distance
        axis = np.asarray(axis, dtype=float)
        self._d = np.geomspace(d_min, d_max, n)
        b = fieldmodel.field_at(self._d[:, None] * axis[None, :])
        self._s = (np.linalg.norm(b, axis=1) / fieldmodel.b_ref) ** 2
        if not np.all(np.diff(self._s) < 0.0):
            raise DomainError("on-axis amplitude sum is not monotone over the range")

    def sum_at(self, d: float) -> float:
        return float(np.exp(np.interp(math.log(d), np.log(self._d), np.log(self._s))))

    def distance(self, s: float) -> float:
        """Inverse of the monotone map, clamped to the tabulated range."""
        if s <= 0.0:
            raise AbsentSignalError("amplitude sum must be positive")
        log_s = np.log(self._s[::-1])
        log_d = np.log(self._d[::-1])
        return float(np.exp(np.interp(math.log(s), log_s, log_d)))

    def proximity(self, s: float) -> float:
        d = self.distance(s)
        p = (self.far_distance - d) / (self.far_distance - self.reference_distance)
        return float(np.clip(p, 0.0, 1.0))


def range_from_triad(obs: TriadObservation, range_map: OnAxisRangeMap,
                     presence_threshold: float = 0.0) -> float:
    """Proximity in [0, 1] from the rotation-invariant amplitude sum."""
    s = obs.total
    if s <= presence_threshold:
        raise AbsentSignalError(
            f"triad amplitude sum {s:.3g} at or below threshold {presence_threshold:.3g}")
    return range_map.proximity(s)


# --------------------------------------------------------------------------
# Orientation from amplitude ratios
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class OrientationEstimate:
    cosines: tuple[float, float, float]   # unsigned |cos theta_i|, sum of squares = 1
    axis: tuple[float, float, float]      # field direction in the object frame
    signed: bool                          # True when continuity resolved the signs

    @property
    def angles_deg(self) -> tuple[float, float, float]:
        return tuple(math.degrees(math.acos(min(1.0, c))) for c in self.cosines)


def orientation_from_triad(obs: TriadObservation,
                           prev_axis=None) -> OrientationEstimate:
    """Unsigned direction cosines of the local field vector, sum cos^2 = 1.

    With a previous signed axis, picks the sign combination closest to it;
    otherwise reports the all-positive (unsigned) representative.
    """
    s = obs.total
    if s <= 0.0:
        raise AbsentSignalError("triad amplitude sum is zero; orientation undefined")
    cosines = tuple(math.sqrt(max(a, 0.0) / s) for a in obs.amplitudes)
    if prev_axis is None:
        return OrientationEstimate(cosines, cosines, signed=False)
    prev = np.asarray(prev_axis, dtype=float)
    best, best_dot = None, -math.inf
    for signs in ((1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1),
                  (-1, 1, 1), (-1, 1, -1), (-1, -1, 1), (-1, -1, -1)):
        cand = np.array([s_ * c for s_, c in zip(signs, cosines)])
        d = float(cand @ prev)
        if d > best_dot:
            best, best_dot = cand, d
    return OrientationEstimate(cosines, tuple(best), signed=True)


# --------------------------------------------------------------------------
# Full pose from a 3-axis Helmholtz rig
# --------------------------------------------------------------------------

class HelmholtzRig:
    """Three perpendicular concentric Helmholtz pairs around a cube volume."""

    AXES = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))

    def __init__(self, radius: float = 0.3, turns: float = 50.0,
                 current: float = 1.0, cube_half: float = 0.15,
                 segments_per_loop: int = 128):
        self.cube_half = cube_half
        self.models = [
            FieldModel(CoilSpec(HelmholtzPair(radius, tuple(axis), turns), current),
                       segments_per_loop=segments_per_loop)
            for axis in self.AXES]
        self.b_refs = np.array([m.b_ref for m in self.models])
        self._grid_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def fields_at(self, position) -> np.ndarray:
        """(3, 3) stack of the three drive fields at one point."""
        return np.array([m.field_at(position) for m in self.models])

    def predict(self, position, rotation: Rotation) -> np.ndarray:
        """Amplitude matrix a[j, i] = ((R e_i) . B_j / B_ref_j)^2."""
        axes_world = rotation.apply(np.eye(3))          # rows: tag axes in world
        b = self.fields_at(position) / self.b_refs[:, None]
        return (b @ axes_world.T) ** 2

    def grid_fields(self, grid_n: int) -> tuple[np.ndarray, np.ndarray]:
        """Cached (positions (m,3), normalized fields (m,3,3)) over the cube."""
        if grid_n not in self._grid_cache:
            axis = np.linspace(-self.cube_half, self.cube_half, grid_n)
            positions = np.array(np.meshgrid(axis, axis, axis, indexing="ij"))
            positions = positions.reshape(3, -1).T
            fields = np.stack([m.field_at(positions) for m in self.models], axis=1)
            self._grid_cache[grid_n] = (positions, fields / self.b_refs[None, :, None])
        return self._grid_cache[grid_n]


def simulate_multi_axis(obj: ObjectSpec, pose: Pose, rig: HelmholtzRig) -> np.ndarray:
    """Forward-model 3x3 amplitudes for a triad object in the rig."""
    if not obj.is_triad:
        raise DomainError(f"object {obj.name} does not carry a triad")
    axes_world = obj.world_normals(pose)
    b = rig.fields_at(pose.position) / rig.b_refs[:, None]
    return (b @ axes_world.T) ** 2


@dataclass
class PoseEstimate:
    position: np.ndarray
    quaternion: np.ndarray
    residual: float
    iterations: int
    cost_history: list[float] = field(default_factory=list)

    @property
    def rotation(self) -> Rotation:
        return Rotation.from_quat(self.quaternion)


def _nearest_rotation(m: np.ndarray) -> Rotation:
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return Rotation.from_matrix(u @ np.diag([1.0, 1.0, d]) @ vt)


def orientation_candidates(amps: np.ndarray) -> list[Rotation]:
    """Rotation guesses from sqrt amplitude ratios with sign enumeration.

    In the near-uniform field the amplitude matrix is a[j, i] ~ s_j *
    R[j, i]^2, so |R| is known and only signs must be searched; candidates
    are projected to the nearest proper rotation and deduplicated.
    """
    s = amps.sum(axis=1, keepdims=True)
    mag = np.sqrt(np.clip(amps / np.maximum(s, 1e-30), 0.0, 1.0))
    candidates = []
    for s1 in ((1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1)):
        c1 = np.array(s1) * mag[:, 0]
        n1 = np.linalg.norm(c1)
        if n1 < 1e-12:
            continue
        for s2 in ((1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1),
                   (-1, 1, 1), (-1, 1, -1), (-1, -1, 1), (-1, -1, -1)):
            c2 = np.array(s2) * mag[:, 1]
            if abs(c1 @ c2) / (n1 * max(np.linalg.norm(c2), 1e-12)) > 0.35:
                continue
            c3 = np.cross(c1, c2)
            m = np.column_stack([c1, c2, c3])
            candidates.append(_nearest_rotation(m))
    if not candidates:
        candidates.append(Rotation.identity())
    return candidates


def _pack(position, rotation: Rotation) -> np.ndarray:
    return np.concatenate([position, rotation.as_rotvec()])


def _unpack(x: np.ndarray) -> tuple[np.ndarray, Rotation]:
    return x[:3], Rotation.from_rotvec(x[3:])


def _damped_least_squares(residual_fn, x0, max_iter=50, x_step_tol=1e-12,
                          cost_tol=1e-28, jacobian_fn=None):
    """Levenberg-style damped Gauss-Newton with monotone accepted cost.

    jacobian_fn(x) may supply (residual, jacobian) in one call; otherwise
    the jacobian is built by central differences of residual_fn.
    """
    x = np.asarray(x0, dtype=float)
    r = residual_fn(x)
    cost = float(r @ r)
    history = [cost]
    lam = 1e-3
    eps = 1e-7
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        if jacobian_fn is not None:
            _, jac = jacobian_fn(x)
        else:
            jac = np.empty((len(r), len(x)))
            for k in range(len(x)):
                dx = np.zeros_like(x)
                dx[k] = eps
                jac[:, k] = (residual_fn(x + dx) - residual_fn(x - dx)) / (2 * eps)
        g = jac.T @ r
        h = jac.T @ jac
        accepted = False
        for _ in range(12):
            damped = h + lam * np.diag(np.maximum(np.diag(h), 1e-12))
            try:
                step = np.linalg.solve(damped, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x - step
            r_new = residual_fn(x_new)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                x, r, cost = x_new, r_new, cost_new
                history.append(cost)
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                if np.linalg.norm(step) < x_step_tol or cost < cost_tol:
                    return x, cost, history, iterations
                break
            lam *= 4.0
        if not accepted:
            break
    return x, cost, history, iterations


def pose_solve(multi_axis_obs, rig: HelmholtzRig, prior: PoseEstimate | None = None,
               grid_n: int = 5, rejection_residual: float = 1e-3,
               max_iter: int = 50, n_starts: int = 4) -> PoseEstimate:
    """Recover (position, orientation) from the 3x3 drive/tag amplitude matrix.

    Damped iterative least squares over 6 parameters, initialized from the
    best few points of a coarse grid over the cube volume crossed with
    sign-searched orientation candidates (or from the prior when given).
    Raises ConvergenceError with the best candidate attached when the
    residual stays above the rejection threshold. The returned pose is one
    representative of the rig's exact gauge class (see
    `pose_gauge_equivalents`); a prior selects the representative nearest it.
    """
    obs = np.asarray(multi_axis_obs, dtype=float)
    if obs.shape != (3, 3):
        raise DomainError(
            f"pose solve needs a 3x3 drive-by-tag amplitude matrix, got {obs.shape}; "
            "fewer drive axes leave the 6-DoF pose underdetermined")

    def joint_residual(x):
        pos, rot = _unpack(x)
        return (rig.predict(pos, rot) - obs).ravel()

    def joint_jacobian(x):
        # position partials batch into one field call per coil; rotation
        # partials reuse the center fields, costing no field evaluations
        pos, rot = _unpack(x)
        eps = 1e-7
        pts = np.vstack([pos] + [pos + s * eps * np.eye(3)[k]
                                 for k in range(3) for s in (1.0, -1.0)])
        b = np.stack([m.field_at(pts) for m in rig.models], axis=1)
        b /= rig.b_refs[None, :, None]
        axes = rot.apply(np.eye(3))
        pred = np.einsum("mjk,ik->mji", b, axes) ** 2
        r = (pred[0] - obs).ravel()
        jac = np.empty((9, 6))
        for k in range(3):
            jac[:, k] = (pred[1 + 2 * k] - pred[2 + 2 * k]).ravel() / (2 * eps)
        v = rot.as_rotvec()
        for k in range(3):
            dv = np.zeros(3)
            dv[k] = eps
            ap = Rotation.from_rotvec(v + dv).apply(np.eye(3))
            am = Rotation.from_rotvec(v - dv).apply(np.eye(3))
            dpred = ((b[0] @ ap.T) ** 2 - (b[0] @ am.T) ** 2) / (2 * eps)
            jac[:, 3 + k] = dpred.ravel()
        return r, jac

    # Stage 1: enumerate position basins of the rotation-invariant row sums
    # (sum_i a[j, i] = |B_j|^2 / B_ref^2, a Parseval identity per drive
    # axis). The three field magnitudes are not injective over the cube, so
    # several distinct basins can match them exactly; collect them all from
    # diverse starts and let the full 9-amplitude matrix arbitrate. The
    # exact rig center is a stationary point of every field magnitude and is
    # never used as a start.
    row_sums_obs = obs.sum(axis=1)
    eps = 1e-7

    def normalized_fields(pts):
        b = np.stack([m.field_at(np.atleast_2d(pts)) for m in rig.models], axis=1)
        return b / rig.b_refs[None, :, None]

    def sum_residual(pos):
        b = normalized_fields(pos)[0]
        return (np.linalg.norm(b, axis=1) ** 2) - row_sums_obs

    def sum_jacobian(pos):
        pts = np.vstack([pos] + [pos + s * eps * np.eye(3)[k]
                                 for k in range(3) for s in (1.0, -1.0)])
        sums = np.linalg.norm(normalized_fields(pts), axis=2) ** 2
        r = sums[0] - row_sums_obs
        jac = np.empty((3, 3))
        for k in range(3):
            jac[:, k] = (sums[1 + 2 * k] - sums[2 + 2 * k]) / (2 * eps)
        return r, jac

    h = rig.cube_half
    wave_a = [np.array(f) * h for f in
              ((0.5, 0.5, 0.5), (0.25, 0.25, 0.25), (0.75, 0.75, 0.75),
               (0.75, 0.25, 0.25), (0.25, 0.75, 0.25), (0.25, 0.25, 0.75),
               (0.25, 0.75, 0.75), (0.75, 0.25, 0.75), (0.75, 0.75, 0.25))]
    wave_b = [np.array((fx, fy, fz)) * h
              for fx in (0.15, 0.5, 0.85) for fy in (0.15, 0.5, 0.85)
              for fz in (0.15, 0.5, 0.85)]

    def collect_basins(starts_list, basins, seen):
        for p0 in starts_list:
            p, cost, _, _ = _damped_least_squares(
                sum_residual, p0, max_iter=max_iter, jacobian_fn=sum_jacobian)
            key = tuple(np.round(np.abs(p), 4))
            if key not in seen:
                seen.add(key)
                basins.append((cost, p))

    def refine_orientation_at(pos):
        """Rotation-only LM with fields frozen at one position (no field evals)."""
        b_at = normalized_fields(pos)[0]

        def orient_residual(rot_vec):
            rot = Rotation.from_rotvec(rot_vec)
            return ((b_at @ rot.apply(np.eye(3)).T) ** 2 - obs).ravel()

        rot_best, rot_cost = None, math.inf
        for rot0 in orientation_candidates(obs):
            v, cost, _, _ = _damped_least_squares(orient_residual, rot0.as_rotvec(),
                                                  max_iter=20)
            if cost < rot_cost:
                rot_best, rot_cost = Rotation.from_rotvec(v), cost
        return rot_best

    # Stages 2 + 3 per basin: orientation with frozen fields, joint polish;
    # a second wave of basin starts only if the first wave fits poorly.
    best = None
    basins: list[tuple[float, np.ndarray]] = []
    seen: set[tuple] = set()
    for wave in (wave_a, wave_b):
        collect_basins(wave, basins, seen)
        basins.sort(key=lambda t: t[0])
        starts: list[np.ndarray] = []
        if prior is not None and best is None:
            starts.append(_pack(prior.position, prior.rotation))
        starts.extend(_pack(pos, refine_orientation_at(pos))
                      for _, pos in basins[: max(n_starts, len(basins))])
        for x0 in starts:
            x, cost, history, iterations = _damped_least_squares(
                joint_residual, x0, max_iter=max_iter, jacobian_fn=joint_jacobian)
            if best is None or cost < best[1]:
                best = (x, cost, history, iterations)
            if cost < 1e-24:
                break
        if best is not None and best[1] < rejection_residual**2:
            break
    x, cost, history, iterations = best
    pos, rot = _unpack(x)
    estimate = PoseEstimate(pos, rot.as_quat(), residual=math.sqrt(cost),
                            iterations=iterations, cost_history=history)
    if estimate.residual > rejection_residual:
        raise ConvergenceError(
            f"pose residual {estimate.residual:.3g} above rejection threshold "
            f"{rejection_residual:.3g}", best=estimate)
    return estimate


def pose_gauge_equivalents(position, rotation: Rotation):
    """All 32 exactly indistinguishable (position, rotation) solutions.

    Every coordinate sign pattern D works: each Helmholtz pair is preserved
    by 180-degree rotations about any coil axis and by inversion, so
    amplitudes at (D p, S R) with S the proper-rotation part of D equal
    those at (p, R); right-multiplying R by a 180-degree tag-axis flip F
    also preserves every cos^2. The classic hemisphere ambiguity of
    amplitude-only magnetic trackers, octant-sized for this symmetric rig.
    """
    position = np.asarray(position, dtype=float)
    r_mat = rotation.as_matrix()
    flips = [np.diag(d) for d in
             ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))]
    out = []
    for signs in ((1, 1, 1), (1, 1, -1), (1, -1, 1), (1, -1, -1),
                  (-1, 1, 1), (-1, 1, -1), (-1, -1, 1), (-1, -1, -1)):
        d = np.diag(np.asarray(signs, dtype=float))
        s_rot = d if np.linalg.det(d) > 0 else -d
        for flip in flips:
            out.append((d @ position, Rotation.from_matrix(s_rot @ r_mat @ flip)))
    return out


class IdealizedRig:
    """Uniform-field limit: B_j everywhere equals B_ref * axis_j."""

    cube_half = 0.15

    def fields_at(self, position):
        return np.eye(3)

    b_refs = np.ones(3)

    def predict(self, position, rotation: Rotation) -> np.ndarray:
        axes_world = rotation.apply(np.eye(3))
        return (np.eye(3) @ axes_world.T) ** 2


# --------------------------------------------------------------------------
# Mechanical parameter inversion
# --------------------------------------------------------------------------

def param_estimate(obs_freq: float, tag: TagSpec, cal=None) -> float:
    """Pull parameter from the observed resonance: inverse of the detune law."""
    if tag.alpha <= 0.0:
        raise NotParametricError(f"tag {tag.tag_id} is not parametric (alpha = 0)")
    freq = cal.corrected(obs_freq) if cal is not None else obs_freq
    p = (tag.f0 - freq) / (tag.alpha * tag.f0)
    return float(np.clip(p, 0.0, 1.0))
