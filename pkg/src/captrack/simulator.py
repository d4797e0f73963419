"""Synthetic articulated/rigid objects, kinematics, motion and rendering.

Object geometry is procedural (cuboid and cylinder primitives) with part
counts and joint kinds fixed per category template; surface points are
sampled in antipodal pairs plus the deterministic extreme points, so every
part's canonical cloud is exactly centered with its bounding box diagonal
normalized to 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError
from .geometry import Pose9, Rot3, Sim3, apply_sim, compose_sim, random_rotation
from .rng import STREAM_MODEL, STREAM_MOTION, entropy_tuple, make_rng, unit_vector

CATEGORIES = ("laptop", "glasses", "scissors", "drawers", "box", "cylinder")

# Average joint-state change over a 100-frame sequence (radians or meters).
CATEGORY_JOINT_CHANGE = {
    "glasses": np.radians(19.19),
    "scissors": np.radians(34.32),
    "laptop": np.radians(26.13),
    "drawers": 0.0372,
}


@dataclass(frozen=True, eq=False)
class JointSpec:
    """One-DoF articulation between two parts.

    ``axis`` and ``pivot`` live in the parent part's normalized frame; the
    rest offset places the child's normalized frame inside the parent's at
    joint state zero, which lets :func:`captrack.metrics.joint_state` invert
    the kinematics from the two part poses alone.
    """

    kind: str  # "revolute" | "prismatic"
    axis: np.ndarray
    parent: int
    child: int
    limits: tuple[float, float]
    pivot: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rest_scale: float = 1.0  # child scale / parent scale
    rest_rotation: Rot3 = field(default_factory=Rot3.identity)
    rest_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.kind not in ("revolute", "prismatic"):
            raise ValueError(f"unknown joint kind {self.kind!r}")
        axis = np.array(self.axis, dtype=float)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            raise ValueError("joint axis must be a unit vector")
        lo, hi = self.limits
        if lo > hi:
            raise ValueError("joint limits must satisfy lo <= hi")
        axis.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "limits", (float(lo), float(hi)))
        object.__setattr__(self, "pivot", np.array(self.pivot, dtype=float))
        object.__setattr__(self, "rest_translation", np.array(self.rest_translation, dtype=float))

    def rest_offset(self) -> Sim3:
        return Sim3(self.rest_scale, self.rest_rotation, self.rest_translation)


@dataclass(frozen=True, eq=False)
class PartModel:
    canonical_points: np.ndarray  # (n, 3) in the part's normalized frame
    aspect: np.ndarray  # unit vector, normalized box extents
    nominal_scale: float  # meters, ||physical extents||


@dataclass(frozen=True, eq=False)
class ObjectModel:
    category: str
    parts: tuple[PartModel, ...]
    joints: tuple[JointSpec, ...]
    symmetric_axis: np.ndarray | None = None

    def __post_init__(self):
        if len(self.parts) < 1:
            raise ValueError("model needs at least one part")
        children = [j.child for j in self.joints]
        if len(set(children)) != len(children):
            raise ValueError("each part may be the child of at most one joint")
        # Reject cycles / self-loops by walking every chain up to the root.
        parent_of = {j.child: j.parent for j in self.joints}
        for start in range(len(self.parts)):
            seen = set()
            node = start
            while node in parent_of:
                if node in seen:
                    raise ValueError("joint graph contains a cycle")
                seen.add(node)
                node = parent_of[node]

    @property
    def num_parts(self) -> int:
        return len(self.parts)

    @property
    def root(self) -> int:
        children = {j.child for j in self.joints}
        roots = [i for i in range(len(self.parts)) if i not in children]
        return roots[0]


def forward_kinematics(model: ObjectModel, root_pose: Sim3, joint_states) -> list[Sim3]:
    """Per-part Sim3 poses for the given root pose and joint states.

    Revolute states are radians, prismatic states are meters of physical
    displacement along the joint axis.
    """
    joint_states = [float(v) for v in joint_states]
    if len(joint_states) != len(model.joints):
        raise ValueError("need exactly one state per joint")
    for j, state in zip(model.joints, joint_states):
        lo, hi = j.limits
        if state < lo - 1e-12 or state > hi + 1e-12:
            raise ValueError(f"joint state {state} outside limits [{lo}, {hi}]")

    poses: list[Sim3 | None] = [None] * model.num_parts
    poses[model.root] = root_pose
    remaining = list(zip(model.joints, joint_states))
    while remaining:
        progressed = False
        for j, state in list(remaining):
            parent_pose = poses[j.parent]
            if parent_pose is None:
                continue
            joint_tf = _joint_transform(j, state, parent_pose.s)
            poses[j.child] = compose_sim(parent_pose, compose_sim(joint_tf, j.rest_offset()))
            remaining.remove((j, state))
            progressed = True
        if not progressed:
            raise ValueError("joint graph is not rooted at a single part")
    return [p for p in poses]  # type: ignore[return-value]


def _joint_transform(joint: JointSpec, state: float, parent_scale: float) -> Sim3:
    if joint.kind == "revolute":
        rot = Rot3.from_axis_angle(joint.axis, state)
        t = joint.pivot - rot.m @ joint.pivot
        return Sim3(1.0, rot, t)
    # Prismatic: physical displacement expressed in the parent's normalized frame.
    return Sim3(1.0, Rot3.identity(), (state / parent_scale) * joint.axis)


# --- Primitive geometry ------------------------------------------------------


def _cuboid_points(rng, n: int, extents: np.ndarray) -> np.ndarray:
    """Surface samples of an origin-centered cuboid, exactly symmetric.

    The 8 corners are always included; the remaining points come in
    antipodal pairs so the centroid is exactly zero and the bounding box is
    exactly (-extents/2, extents/2).  The count is rounded up to keep the
    pairing, so the result has >= n points.
    """
    half = extents / 2.0
    corners = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float
    ) * half
    n_pairs = max(0, (n - len(corners) + 1) // 2)
    if n_pairs == 0:
        return corners
    areas = np.array(
        [extents[1] * extents[2], extents[0] * extents[2], extents[0] * extents[1]]
    )
    face_axis = rng.choice(3, size=n_pairs, p=areas / areas.sum())
    face_sign = np.where(rng.random(n_pairs) < 0.5, -1.0, 1.0)
    uv = rng.random((n_pairs, 2)) * 2.0 - 1.0
    pts = np.empty((n_pairs, 3))
    for axis in range(3):
        sel = face_axis == axis
        others = [i for i in range(3) if i != axis]
        pts[sel, axis] = face_sign[sel] * half[axis]
        pts[sel, others[0]] = uv[sel, 0] * half[others[0]]
        pts[sel, others[1]] = uv[sel, 1] * half[others[1]]
    return np.concatenate([corners, pts, -pts])


def _cylinder_points(rng, n: int, radius: float, height: float) -> np.ndarray:
    """Surface samples of a y-axis cylinder, exactly symmetric (see cuboid)."""
    rim = np.array(
        [
            [radius, height / 2, 0.0], [-radius, height / 2, 0.0],
            [0.0, height / 2, radius], [0.0, height / 2, -radius],
            [radius, -height / 2, 0.0], [-radius, -height / 2, 0.0],
            [0.0, -height / 2, radius], [0.0, -height / 2, -radius],
        ]
    )
    n_pairs = max(0, (n - len(rim) + 1) // 2)
    if n_pairs == 0:
        return rim
    lateral_area = 2.0 * np.pi * radius * height
    cap_area = 2.0 * np.pi * radius * radius
    on_side = rng.random(n_pairs) < lateral_area / (lateral_area + cap_area)
    phi = 2.0 * np.pi * rng.random(n_pairs)
    pts = np.empty((n_pairs, 3))
    y_side = (rng.random(n_pairs) - 0.5) * height
    r_cap = radius * np.sqrt(rng.random(n_pairs))
    pts[:, 0] = np.where(on_side, radius, r_cap) * np.cos(phi)
    pts[:, 2] = np.where(on_side, radius, r_cap) * np.sin(phi)
    pts[:, 1] = np.where(on_side, y_side, np.sign(rng.random(n_pairs) - 0.5) * height / 2)
    return np.concatenate([rim, pts, -pts])


def _normalize_part(points: np.ndarray, extents: np.ndarray) -> PartModel:
    scale = float(np.linalg.norm(extents))
    return PartModel(
        canonical_points=points / scale,
        aspect=extents / scale,
        nominal_scale=scale,
    )


# Physical part extents (meters) per category; plausible desk-scale objects.
_TEMPLATE_DIMS = {
    "laptop": [np.array([0.32, 0.02, 0.22]), np.array([0.32, 0.015, 0.21])],
    "glasses": [
        np.array([0.008, 0.01, 0.14]),
        np.array([0.008, 0.01, 0.14]),
        np.array([0.14, 0.04, 0.012]),
    ],
    "scissors": [np.array([0.02, 0.008, 0.18]), np.array([0.02, 0.008, 0.18])],
    "drawers": [
        np.array([0.38, 0.22, 0.40]),
        np.array([0.38, 0.22, 0.40]),
        np.array([0.38, 0.22, 0.40]),
        np.array([0.45, 0.80, 0.45]),
    ],
    "box": [np.array([0.25, 0.18, 0.12])],
    "cylinder": [np.array([0.12, 0.22, 0.12])],
}


def _template_joints(category: str, dims: list[np.ndarray]) -> tuple[JointSpec, ...]:
    if category == "laptop":
        base, disp = dims
        s_base = float(np.linalg.norm(base))
        s_disp = float(np.linalg.norm(disp))
        hinge = np.array([0.0, base[1] / 2, -base[2] / 2])
        disp_center = hinge + np.array([0.0, disp[1] / 2, disp[2] / 2])
        return (
            JointSpec(
                kind="revolute",
                axis=np.array([1.0, 0.0, 0.0]),
                parent=0,
                child=1,
                limits=(0.0, np.radians(150.0)),
                pivot=hinge / s_base,
                rest_scale=s_disp / s_base,
                rest_translation=disp_center / s_base,
            ),
        )
    if category == "glasses":
        temple, _, frame = dims[0], dims[1], dims[2]
        s_frame = float(np.linalg.norm(frame))
        s_temple = float(np.linalg.norm(temple))
        joints = []
        for child, side in ((0, 1.0), (1, -1.0)):
            hinge = np.array([side * frame[0] / 2, 0.0, frame[2] / 2])
            center = hinge + np.array([0.0, 0.0, temple[2] / 2])
            joints.append(
                JointSpec(
                    kind="revolute",
                    axis=np.array([0.0, side, 0.0]),
                    parent=2,
                    child=child,
                    limits=(0.0, np.radians(95.0)),
                    pivot=hinge / s_frame,
                    rest_scale=s_temple / s_frame,
                    rest_translation=center / s_frame,
                )
            )
        return tuple(joints)
    if category == "scissors":
        half = dims[0]
        s_half = float(np.linalg.norm(half))
        return (
            JointSpec(
                kind="revolute",
                axis=np.array([0.0, 1.0, 0.0]),
                parent=0,
                child=1,
                limits=(0.0, np.radians(60.0)),
                pivot=np.array([0.0, 0.0, 0.02]) / s_half,
                rest_scale=1.0,
                rest_translation=np.array([0.0, half[1], 0.0]) / s_half,
            ),
        )
    if category == "drawers":
        drawer, base = dims[0], dims[3]
        s_base = float(np.linalg.norm(base))
        s_drawer = float(np.linalg.norm(drawer))
        joints = []
        for child, y_frac in ((0, -0.325), (1, 0.0), (2, 0.325)):
            joints.append(
                JointSpec(
                    kind="prismatic",
                    axis=np.array([0.0, 0.0, 1.0]),
                    parent=3,
                    child=child,
                    limits=(0.0, 0.15),
                    rest_scale=s_drawer / s_base,
                    rest_translation=np.array([0.0, y_frac * base[1], 0.0]) / s_base,
                )
            )
        return tuple(joints)
    return ()


def make_primitive_model(category: str, seed: int, points_per_part: int = 512) -> ObjectModel:
    """Procedural model for one of the category templates.

    Part counts and joint kinds are fixed per category (laptop: 2 parts,
    1 revolute; glasses: 3 parts, 2 revolute; scissors: 2 parts, 1 revolute;
    drawers: 4 parts, 3 prismatic; box and cylinder are rigid).
    """
    if category not in CATEGORIES:
        raise ValueError(f"unknown category template {category!r}")
    if points_per_part < 8:
        raise ValueError("points_per_part must be >= 8")
    rng = make_rng(*entropy_tuple(seed), STREAM_MODEL)
    dims = [d.copy() for d in _TEMPLATE_DIMS[category]]
    # Mild per-instance size jitter keeps instances distinct within a category.
    for d in dims:
        d *= 1.0 + 0.1 * (2.0 * rng.random(3) - 1.0)
    if category == "scissors":
        dims[1] = dims[0].copy()
    if category == "glasses":
        dims[1] = dims[0].copy()
    if category == "cylinder":
        dims[0][2] = dims[0][0]  # circular cross-section
    parts = []
    for i, d in enumerate(dims):
        if category == "cylinder":
            pts = _cylinder_points(rng, points_per_part, d[0] / 2, d[1])
        else:
            pts = _cuboid_points(rng, points_per_part, d)
        parts.append(_normalize_part(pts, d))
    symmetric_axis = np.array([0.0, 1.0, 0.0]) if category == "cylinder" else None
    return ObjectModel(
        category=category,
        parts=tuple(parts),
        joints=_template_joints(category, dims),
        symmetric_axis=symmetric_axis,
    )


# --- Trajectory generation ---------------------------------------------------


@dataclass(frozen=True)
class MotionSpec:
    """Magnitudes for the piecewise-constant-velocity root spline and joints."""

    rot_step_deg: float = 1.5  # per-frame root rotation cap
    trans_step: float = 0.008  # per-frame root translation cap, meters
    segment_frames: int = 12
    joint_change: float | None = None  # total per-joint change; None = category default
    start_distance: float = 1.2  # object distance from the camera, meters


def sample_trajectory(
    model: ObjectModel, length: int, motion: MotionSpec, seed: int
) -> list[tuple[Sim3, list[float]]]:
    """Smooth per-frame (root_pose, joint_states) sequence, seed-deterministic.

    The root pose follows a bounded random walk (piecewise-constant angular
    and linear velocity, capped per frame); each joint drifts monotonically
    with total traversal scaled to ``joint_change`` over 100 frames.
    """
    if length < 1:
        raise ValueError("trajectory length must be >= 1")
    rng = make_rng(*entropy_tuple(seed), STREAM_MOTION)
    root_scale = model.parts[model.root].nominal_scale

    rot = random_rotation(rng)
    pos = np.array([0.0, 0.0, motion.start_distance]) + 0.1 * (2.0 * rng.random(3) - 1.0)

    joint_change = motion.joint_change
    if joint_change is None:
        joint_change = CATEGORY_JOINT_CHANGE.get(model.category, 0.0)
    total = joint_change * (max(length, 2) - 1) / 99.0
    states, velocities = [], []
    for j in model.joints:
        lo, hi = j.limits
        span = hi - lo
        room = min(total, span)
        direction = 1.0 if rng.random() < 0.5 else -1.0
        start_lo = lo if direction > 0 else lo + room
        start_hi = hi - room if direction > 0 else hi
        start = start_lo + rng.random() * max(0.0, start_hi - start_lo)
        states.append(start)
        velocities.append(direction * total / max(length - 1, 1))

    frames: list[tuple[Sim3, list[float]]] = []
    rot_axis = unit_vector(rng)
    rot_rate = 0.0
    vel = np.zeros(3)
    cap_rot = np.radians(motion.rot_step_deg)
    for t in range(length):
        frames.append((Sim3(root_scale, rot, pos.copy()), [float(s) for s in states]))
        if t % motion.segment_frames == 0:
            rot_axis = unit_vector(rng)
            rot_rate = cap_rot * rng.random()
            vel = motion.trans_step * rng.random() * unit_vector(rng)
        if rot_rate > 0.0:
            rot = rot.compose(Rot3.from_axis_angle(rot_axis, rot_rate))
        pos = pos + vel
        for k, j in enumerate(model.joints):
            lo, hi = j.limits
            nxt = states[k] + velocities[k]
            if nxt > hi or nxt < lo:  # reflect at the limits
                velocities[k] = -velocities[k]
                nxt = states[k] + velocities[k]
            states[k] = float(np.clip(nxt, lo, hi))
    return frames


# --- Observation synthesis ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class Observation:
    """One frame of simulated depth points, optionally with ground truth.

    ``ids`` are stable per-point identities within the frame; subsets (crops)
    keep them, so per-point noise can be keyed to the point rather than to
    its position in a cropped array.
    """

    frame: int
    points: np.ndarray  # (N, 3) camera frame, meters
    labels: np.ndarray | None = None  # (N,) part indices
    coords: np.ndarray | None = None  # (N, 3) normalized coordinates
    poses: tuple[Pose9, ...] | None = None  # per-part ground truth
    ids: np.ndarray | None = None
    total_points: int | None = None  # size of the uncropped frame

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError("observation needs a nonempty (N, 3) point array")
        object.__setattr__(self, "points", pts)
        if self.ids is None:
            object.__setattr__(self, "ids", np.arange(len(pts)))
        if self.total_points is None:
            object.__setattr__(self, "total_points", int(np.max(self.ids)) + 1)

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, idx) -> "Observation":
        return Observation(
            frame=self.frame,
            points=self.points[idx],
            labels=None if self.labels is None else self.labels[idx],
            coords=None if self.coords is None else self.coords[idx],
            poses=self.poses,
            ids=self.ids[idx],
            total_points=self.total_points,
        )


def farthest_point_indices(points: np.ndarray, n: int, start: int = 0) -> np.ndarray:
    """Deterministic furthest-point sampling order (no randomness)."""
    total = len(points)
    if n >= total:
        return np.arange(total)
    chosen = np.empty(n, dtype=int)
    chosen[0] = start
    dist = np.linalg.norm(points - points[start], axis=1)
    for i in range(1, n):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return chosen


def render_observation(
    model: ObjectModel,
    part_poses: list[Sim3],
    viewpoint,
    n_points: int,
    frame: int = 0,
) -> Observation:
    """Partial single-view observation of the posed model.

    Partiality comes from centroid-normal culling: a point survives when its
    outward direction (point-to-part-centroid, parts are zero-centered) faces
    the viewpoint.  This is deliberately non-physical but deterministic.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    viewpoint = np.asarray(viewpoint, dtype=float)
    cam_pts, labels, nocs = [], [], []
    for j, (part, pose) in enumerate(zip(model.parts, part_poses)):
        y = part.canonical_points
        x = apply_sim(pose, y)
        normals = y @ pose.r.m.T  # outward direction per point, camera frame
        visible = np.einsum("ij,ij->i", normals, viewpoint - x) > 0.0
        if not np.any(visible):
            continue
        cam_pts.append(x[visible])
        labels.append(np.full(int(visible.sum()), j, dtype=int))
        nocs.append(y[visible])
    if not cam_pts:
        raise DegeneracyError("all points culled; viewpoint sees no surface")
    points = np.concatenate(cam_pts)
    labels_arr = np.concatenate(labels)
    nocs_arr = np.concatenate(nocs)
    keep = farthest_point_indices(points, n_points)
    poses = tuple(
        Pose9.from_sim(pose, part.aspect) for part, pose in zip(model.parts, part_poses)
    )
    return Observation(
        frame=frame,
        points=points[keep],
        labels=labels_arr[keep],
        coords=nocs_arr[keep],
        poses=poses,
    )
