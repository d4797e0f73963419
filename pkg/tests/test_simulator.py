import numpy as np
import pytest

from captrack.errors import DegeneracyError
from captrack.geometry import Rot3, Sim3, apply_sim, rotation_angle
from captrack.simulator import (
    CATEGORIES,
    JointSpec,
    MotionSpec,
    ObjectModel,
    PartModel,
    farthest_point_indices,
    forward_kinematics,
    make_primitive_model,
    render_observation,
    sample_trajectory,
)

from oracle_utils import sim3_to_matrix


# --- joints and models --------------------------------------------------------


def test_joint_spec_validation():
    with pytest.raises(ValueError):
        JointSpec(kind="weird", axis=np.array([0, 1.0, 0]), parent=0, child=1, limits=(0, 1))
    with pytest.raises(ValueError):
        JointSpec(kind="revolute", axis=np.array([0, 2.0, 0]), parent=0, child=1, limits=(0, 1))
    with pytest.raises(ValueError):
        JointSpec(kind="revolute", axis=np.array([0, 1.0, 0]), parent=0, child=1, limits=(1, 0))


def test_model_rejects_cycles():
    part = PartModel(np.zeros((8, 3)), np.ones(3) / np.sqrt(3), 1.0)
    j01 = JointSpec(kind="revolute", axis=np.array([0, 1.0, 0]), parent=0, child=1, limits=(0, 1))
    j10 = JointSpec(kind="revolute", axis=np.array([0, 1.0, 0]), parent=1, child=0, limits=(0, 1))
    with pytest.raises(ValueError):
        ObjectModel(category="box", parts=(part, part), joints=(j01, j10))


@pytest.mark.parametrize(
    "category,n_parts,n_joints,kinds",
    [
        ("laptop", 2, 1, {"revolute"}),
        ("glasses", 3, 2, {"revolute"}),
        ("scissors", 2, 1, {"revolute"}),
        ("drawers", 4, 3, {"prismatic"}),
        ("box", 1, 0, set()),
        ("cylinder", 1, 0, set()),
    ],
)
def test_category_templates(category, n_parts, n_joints, kinds):
    model = make_primitive_model(category, seed=3, points_per_part=64)
    assert len(model.parts) == n_parts
    assert len(model.joints) == n_joints
    assert {j.kind for j in model.joints} == kinds
    assert (model.symmetric_axis is not None) == (category == "cylinder")


@pytest.mark.parametrize("category", CATEGORIES)
def test_normalization_contract(category):
    model = make_primitive_model(category, seed=11, points_per_part=256)
    for part in model.parts:
        pts = part.canonical_points
        assert np.all(np.abs(pts) <= 0.5 + 1e-12)
        extents = pts.max(axis=0) - pts.min(axis=0)
        assert np.linalg.norm(extents) == pytest.approx(1.0, abs=1e-9)
        assert np.abs(pts.mean(axis=0)).max() < 1e-6
        assert np.allclose(part.aspect, extents, atol=1e-9)
        assert np.linalg.norm(part.aspect) == pytest.approx(1.0, abs=1e-12)


def test_unknown_template():
    with pytest.raises(ValueError):
        make_primitive_model("spaceship", seed=0)
    with pytest.raises(ValueError):
        make_primitive_model("laptop", seed=0, points_per_part=4)


# --- forward kinematics --------------------------------------------------------


def test_fk_zero_states_is_rest_offset():
    model = make_primitive_model("drawers", seed=5, points_per_part=64)
    root_pose = Sim3(
        model.parts[model.root].nominal_scale,
        Rot3.from_axis_angle(np.array([0.1, 1.0, 0.0]), 0.6),
        np.array([0.0, 0.1, 1.0]),
    )
    poses = forward_kinematics(model, root_pose, [0.0, 0.0, 0.0])
    from captrack.geometry import compose_sim

    for joint in model.joints:
        expected = compose_sim(root_pose, joint.rest_offset())
        got = poses[joint.child]
        assert got.s == pytest.approx(expected.s, rel=1e-12)
        assert np.abs(got.r.m - expected.r.m).max() < 1e-12
        assert np.allclose(got.t, expected.t, atol=1e-12)


def test_fk_laptop_hinge_angle():
    model = make_primitive_model("laptop", seed=2, points_per_part=64)
    root_pose = Sim3(model.parts[0].nominal_scale, Rot3.identity(), np.zeros(3))
    poses = forward_kinematics(model, root_pose, [np.pi / 2])
    hinge = model.joints[0]
    rel = poses[0].r.inverse().compose(poses[1].r)
    assert rotation_angle(rel, Rot3.identity()) == pytest.approx(90.0, abs=1e-9)
    # Rotation must be exactly about the hinge axis.
    assert np.allclose(rel.m @ hinge.axis, hinge.axis, atol=1e-12)


def test_fk_respects_limits():
    model = make_primitive_model("laptop", seed=2, points_per_part=64)
    root_pose = Sim3(1.0, Rot3.identity(), np.zeros(3))
    with pytest.raises(ValueError):
        forward_kinematics(model, root_pose, [np.radians(170.0)])
    with pytest.raises(ValueError):
        forward_kinematics(model, root_pose, [0.0, 0.0])


def test_fk_matches_matrix_chain_oracle(rng):
    # Three-joint chain: compose scaled homogeneous matrices independently.
    parts = tuple(
        PartModel(np.zeros((8, 3)), np.ones(3) / np.sqrt(3), s) for s in (1.0, 0.8, 0.6, 0.5)
    )
    joints = []
    for child in (1, 2, 3):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        joints.append(
            JointSpec(
                kind="revolute" if child != 2 else "prismatic",
                axis=axis,
                parent=child - 1,
                child=child,
                limits=(-2.0, 2.0),
                pivot=rng.normal(size=3) * 0.2,
                rest_scale=0.8,
                rest_translation=rng.normal(size=3) * 0.3,
            )
        )
    model = ObjectModel(category="box", parts=parts, joints=tuple(joints))
    root = Sim3(1.3, Rot3.from_axis_angle(rng.normal(size=3), 0.4), rng.normal(size=3))
    states = [0.7, 0.05, -0.9]
    poses = forward_kinematics(model, root, states)

    mats = {0: sim3_to_matrix(root.s, root.r.m, root.t)}
    scale = {0: root.s}
    for joint, state in zip(joints, states):
        if joint.kind == "revolute":
            rot = Rot3.from_axis_angle(joint.axis, state)
            jt = sim3_to_matrix(1.0, rot.m, joint.pivot - rot.m @ joint.pivot)
        else:
            jt = sim3_to_matrix(1.0, np.eye(3), (state / scale[joint.parent]) * joint.axis)
        rest = sim3_to_matrix(joint.rest_scale, np.eye(3), joint.rest_translation)
        mats[joint.child] = mats[joint.parent] @ jt @ rest
        scale[joint.child] = scale[joint.parent] * joint.rest_scale
    for j in range(4):
        assert np.abs(poses[j].matrix() - mats[j]).max() < 1e-12


# --- trajectories --------------------------------------------------------------


def test_zero_motion_trajectory():
    model = make_primitive_model("box", seed=1, points_per_part=64)
    motion = MotionSpec(rot_step_deg=0.0, trans_step=0.0, joint_change=0.0)
    frames = sample_trajectory(model, 20, motion, seed=4)
    first_pose, _ = frames[0]
    for pose, _ in frames[1:]:
        assert np.abs(pose.r.m - first_pose.r.m).max() < 1e-15
        assert np.allclose(pose.t, first_pose.t)
        assert pose.s == first_pose.s


def test_laptop_default_joint_change():
    model = make_primitive_model("laptop", seed=7, points_per_part=64)
    frames = sample_trajectory(model, 100, MotionSpec(), seed=9)
    states = np.array([js[0] for _, js in frames])
    total_change = np.abs(np.diff(states)).sum()
    assert total_change == pytest.approx(np.radians(26.13), rel=0.10)


def test_per_frame_rotation_cap():
    model = make_primitive_model("glasses", seed=3, points_per_part=64)
    motion = MotionSpec(rot_step_deg=2.0)
    frames = sample_trajectory(model, 80, motion, seed=6)
    for (pa, _), (pb, _) in zip(frames, frames[1:]):
        step = rotation_angle(pa.r, pb.r)
        assert step <= 2.0 + 1e-9


def test_trajectory_deterministic():
    model = make_primitive_model("scissors", seed=8, points_per_part=64)
    f1 = sample_trajectory(model, 25, MotionSpec(), seed=21)
    f2 = sample_trajectory(model, 25, MotionSpec(), seed=21)
    for (pa, sa), (pb, sb) in zip(f1, f2):
        assert np.array_equal(pa.r.m, pb.r.m)
        assert np.array_equal(pa.t, pb.t)
        assert sa == sb


def test_joint_states_stay_in_limits():
    model = make_primitive_model("drawers", seed=12, points_per_part=64)
    frames = sample_trajectory(model, 150, MotionSpec(joint_change=0.4), seed=2)
    for _, states in frames:
        for joint, state in zip(model.joints, states):
            lo, hi = joint.limits
            assert lo - 1e-12 <= state <= hi + 1e-12


# --- rendering -----------------------------------------------------------------


def test_render_halfspace_culling():
    # Cube seen from far +z keeps (approximately) the +z-facing half.
    model = make_primitive_model("box", seed=5, points_per_part=400)
    pose = Sim3(model.parts[0].nominal_scale, Rot3.identity(), np.zeros(3))
    obs = render_observation(model, [pose], viewpoint=np.array([0.0, 0, 100.0]), n_points=10_000)
    assert np.all(obs.coords[:, 2] > -1e-9)
    # Roughly half of the surface should survive.
    assert 0.3 <= len(obs) / len(model.parts[0].canonical_points) <= 0.7


def test_render_no_downsampling_keeps_exact_set():
    model = make_primitive_model("box", seed=5, points_per_part=128)
    pose = Sim3(model.parts[0].nominal_scale, Rot3.identity(), np.array([0.0, 0, 1.0]))
    obs_all = render_observation(model, [pose], np.zeros(3), n_points=100_000)
    obs_again = render_observation(model, [pose], np.zeros(3), n_points=100_000)
    assert np.array_equal(obs_all.points, obs_again.points)


def test_render_gt_round_trip():
    model = make_primitive_model("glasses", seed=6, points_per_part=96)
    root_pose = Sim3(
        model.parts[model.root].nominal_scale,
        Rot3.from_axis_angle(np.array([0.2, 1.0, 0.1]), 0.8),
        np.array([0.05, -0.1, 1.1]),
    )
    poses = forward_kinematics(model, root_pose, [0.3, 0.5])
    obs = render_observation(model, poses, np.zeros(3), n_points=256)
    for i in range(len(obs)):
        j = int(obs.labels[i])
        rebuilt = apply_sim(poses[j], obs.coords[i])
        assert np.array_equal(rebuilt, obs.points[i])


def test_render_all_culled():
    part = PartModel(
        canonical_points=np.array([[0.0, 0.0, 0.5], [0.0, 0.0, -0.5]]),
        aspect=np.array([1e-4, 1e-4, 1.0]) / np.linalg.norm([1e-4, 1e-4, 1.0]),
        nominal_scale=1.0,
    )
    model = ObjectModel(category="box", parts=(part,), joints=())
    pose = Sim3(1.0, Rot3.identity(), np.array([0.0, 0.0, 1.0]))
    # Viewpoint orthogonal to both outward directions: dot products are <= 0.
    with pytest.raises(DegeneracyError):
        render_observation(model, [pose], np.array([0.0, 0.0, 1.0]), n_points=16)


def test_farthest_point_sampling_brute_force(rng):
    pts = rng.normal(size=(40, 3))
    idx = farthest_point_indices(pts, 10)
    assert len(np.unique(idx)) == 10
    # Re-run the greedy rule independently.
    chosen = [0]
    dist = np.linalg.norm(pts - pts[0], axis=1)
    for _ in range(9):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1))
    assert np.array_equal(idx, chosen)


def test_crop_ball_brute_force(rng):
    from captrack.tracking import crop_ball
    from captrack.errors import LostTrackError

    pts = rng.normal(size=(1000, 3))
    center = np.array([0.2, -0.1, 0.4])
    radius = 1.0
    inside = crop_ball(pts, center, radius)
    expected = pts[np.linalg.norm(pts - center, axis=1) <= radius]
    assert np.array_equal(inside, expected)
    assert 0 < len(inside) < len(pts)
    with pytest.raises(LostTrackError):
        crop_ball(pts, np.array([100.0, 0, 0]), 0.5)
