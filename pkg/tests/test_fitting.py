import numpy as np
import pytest
from hypothesis import given, settings

from captrack.errors import DegeneracyError, NoConsensusError
from captrack.fitting import (
    Correspondences,
    RansacParams,
    fit_scale_translation,
    fit_scale_translation_centered,
    fit_symmetric,
    ransac_fit,
    umeyama_2d,
    umeyama_sim3,
)
from captrack.geometry import (
    Rot3,
    Sim3,
    apply_sim,
    compose_sim,
    rotation_angle,
)

from conftest import sim3_strategy


def centered_cloud(rng, n, box=0.5):
    """Zero-mean normalized points (antipodal pairs), the NOCS convention."""
    half = rng.uniform(-box, box, size=((n + 1) // 2, 3))
    return np.concatenate([half, -half])[:n] if n % 2 == 0 else np.concatenate(
        [half, -half[:-1]]
    )


def synth(rng, n, sim, box=0.5):
    y = centered_cloud(rng, n, box) if n % 2 == 0 else rng.uniform(-box, box, size=(n, 3))
    return Correspondences(apply_sim(sim, y), y)


def random_sim3(rng):
    rot = Rot3.from_axis_angle(rng.normal(size=3), rng.uniform(-np.pi, np.pi))
    return Sim3(rng.uniform(0.2, 5.0), rot, rng.normal(size=3))


# --- fit_scale_translation ----------------------------------------------------


def test_fit_scale_translation_forward_synthesis(rng):
    rot = Rot3.from_axis_angle(np.array([0.3, -1.0, 0.4]), 1.2)
    sim = Sim3(2.0, rot, np.array([1.0, 0.0, 0.0]))
    corr = synth(rng, 40, sim)  # zero-mean normalized points
    s, t = fit_scale_translation(corr, rot)
    assert s == pytest.approx(2.0, abs=1e-12)
    assert np.allclose(t, [1.0, 0.0, 0.0], atol=1e-12)


def test_fit_scale_translation_identity(rng):
    y = centered_cloud(rng, 26)
    s, t = fit_scale_translation(Correspondences(y, y), Rot3.identity())
    assert s == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(t, 0.0, atol=1e-12)


def test_fit_scale_translation_single_point():
    corr = Correspondences(np.array([[0.3, 0, 0]]), np.array([[0.1, 0, 0]]))
    s, t = fit_scale_translation(corr, Rot3.identity())
    assert s == pytest.approx(3.0)
    assert np.allclose(t, 0.0, atol=1e-15)


@pytest.mark.parametrize("n", [1, 3, 1000])
def test_fit_scale_translation_exact_any_count(rng, n):
    # The sequential formulas are exact when the normalized points are
    # zero-mean (n >= 2 here) or the translation vanishes (single point).
    sim = random_sim3(rng)
    if n == 1:
        sim = Sim3(sim.s, sim.r, np.zeros(3))
        y = rng.uniform(-0.5, 0.5, size=(1, 3))
    elif n == 3:
        pair = rng.uniform(-0.5, 0.5, size=(2, 3))
        y = np.concatenate([pair, -pair.sum(axis=0, keepdims=True)])
    else:
        y = centered_cloud(rng, n)
    corr = Correspondences(apply_sim(sim, y), y)
    s, t = fit_scale_translation(corr, sim.r)
    assert s == pytest.approx(sim.s, rel=1e-12)
    assert np.allclose(t, sim.t, atol=1e-10 * max(1.0, sim.s))


def test_fit_scale_translation_bias_off_center(rng):
    # With a nonzero-mean cloud and nonzero translation the sequential scale
    # picks up the mean-coupling term; the centered variant does not.
    rot = Rot3.identity()
    y = rng.uniform(0.1, 0.6, size=(50, 3))
    sim = Sim3(2.0, rot, np.array([1.0, 0.0, 0.0]))
    corr = Correspondences(apply_sim(sim, y), y)
    s_seq, _ = fit_scale_translation(corr, rot)
    w_sum = y.sum(axis=0)
    expected_bias = float(w_sum @ sim.t) / float(np.einsum("ij,ij->", y, y))
    assert s_seq == pytest.approx(2.0 + expected_bias, rel=1e-12)
    s_cen, t_cen = fit_scale_translation_centered(corr, rot)
    assert s_cen == pytest.approx(2.0, rel=1e-12)
    assert np.allclose(t_cen, sim.t, atol=1e-12)


def test_fit_scale_translation_degenerate_zero_points():
    corr = Correspondences(np.ones((4, 3)), np.zeros((4, 3)))
    with pytest.raises(DegeneracyError):
        fit_scale_translation(corr, Rot3.identity())


def test_fit_scale_translation_wrong_rotation_gives_scale_error():
    # A rotation that sends W opposite to C makes the ratio negative.
    y = np.array([[0.2, 0.0, 0.0], [0.3, 0.0, 0.0]])
    c = -y
    from captrack.errors import NonPositiveScaleError

    with pytest.raises(NonPositiveScaleError):
        fit_scale_translation(Correspondences(c, y), Rot3.identity())


def test_centered_variant_differs_on_offset_means(rng):
    # Plant a cloud whose normalized points have a nonzero mean: the paper
    # formula and the centered least-squares scale then disagree on noisy data.
    rot = Rot3.identity()
    y = rng.uniform(0.2, 0.7, size=(60, 3))
    sim = Sim3(1.7, rot, np.array([0.1, -0.2, 0.3]))
    c = apply_sim(sim, y) + 0.01 * rng.normal(size=y.shape)
    corr = Correspondences(c, y)
    s_paper, _ = fit_scale_translation(corr, rot)
    s_centered, _ = fit_scale_translation_centered(corr, rot)
    assert s_paper != pytest.approx(s_centered, abs=1e-6)
    # Centered variant minimizes the residual; verify against a scan over s.
    def rss(s):
        w = y @ rot.m.T
        t = (c - s * w).mean(axis=0)
        return np.sum((c - s * w - t) ** 2)

    assert rss(s_centered) <= min(rss(s_centered + 1e-4), rss(s_centered - 1e-4))


def test_both_variants_exact_on_noise_free(rng):
    sim = random_sim3(rng)
    corr = synth(rng, 50, sim)
    s1, t1 = fit_scale_translation(corr, sim.r)
    s2, t2 = fit_scale_translation_centered(corr, sim.r)
    assert s1 == pytest.approx(s2, rel=1e-10)
    assert np.allclose(t1, t2, atol=1e-10)


# --- umeyama -----------------------------------------------------------------


def test_umeyama_exact_recovery(rng):
    for _ in range(20):
        sim = random_sim3(rng)
        corr = synth(rng, 50, sim)
        fit = umeyama_sim3(corr)
        assert fit.s == pytest.approx(sim.s, rel=1e-9)
        assert np.allclose(fit.t, sim.t, atol=1e-9 * max(1.0, np.abs(sim.t).max()))
        assert rotation_angle(fit.r, sim.r) < 1e-7


def test_umeyama_identity(rng):
    y = centered_cloud(rng, 30)
    fit = umeyama_sim3(Correspondences(y, y))
    assert fit.s == pytest.approx(1.0)
    assert np.abs(fit.r.m - np.eye(3)).max() < 1e-9
    assert np.allclose(fit.t, 0.0, atol=1e-12)


def test_umeyama_never_returns_reflection():
    # Swapping two points of a planar triangle makes the best orthogonal map a
    # reflection; the det correction must still yield a proper rotation.
    y = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    c = y[[1, 0, 2]]
    fit = umeyama_sim3(Correspondences(c, y))
    assert np.linalg.det(fit.r.m) == pytest.approx(1.0, abs=1e-12)


def test_umeyama_degenerate_collinear():
    y = np.stack([np.linspace(0, 1, 5), np.zeros(5), np.zeros(5)], axis=1)
    with pytest.raises(DegeneracyError):
        umeyama_sim3(Correspondences(y, y))


def test_umeyama_residual_beats_random_candidates(rng):
    sim = random_sim3(rng)
    y = rng.uniform(-0.5, 0.5, size=(40, 3))
    c = apply_sim(sim, y) + 0.02 * rng.normal(size=(40, 3))
    corr = Correspondences(c, y)
    fit = umeyama_sim3(corr)

    def rss(candidate):
        return float(np.sum((c - apply_sim(candidate, y)) ** 2))

    best_fit = rss(fit)
    for _ in range(1000):
        assert best_fit <= rss(random_sim3(rng)) + 1e-12


@given(sim3_strategy())
@settings(max_examples=30, deadline=None)
def test_property_umeyama_equivariance(g):
    rng = np.random.default_rng(7)
    base = random_sim3(rng)
    y = rng.uniform(-0.5, 0.5, size=(30, 3))
    c = apply_sim(base, y) + 0.005 * rng.normal(size=(30, 3))
    fit = umeyama_sim3(Correspondences(c, y))
    fit_g = umeyama_sim3(Correspondences(apply_sim(g, c), y))
    expected = compose_sim(g, fit)
    assert fit_g.s == pytest.approx(expected.s, rel=1e-9)
    assert rotation_angle(fit_g.r, expected.r) < 1e-6
    assert np.allclose(fit_g.t, expected.t, atol=1e-7 * max(1.0, abs(expected.s), np.abs(expected.t).max()))


# --- umeyama_2d ---------------------------------------------------------------


def rot2(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def test_umeyama_2d_rotation(rng):
    src = rng.normal(size=(20, 2))
    theta_gt = np.radians(30.0)
    dst = src @ rot2(theta_gt).T
    theta, s, t = umeyama_2d(src, dst)
    assert theta == pytest.approx(theta_gt, abs=1e-9)
    assert s == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(t, 0.0, atol=1e-12)


def test_umeyama_2d_identity_and_scale(rng):
    src = rng.normal(size=(15, 2))
    theta, s, t = umeyama_2d(src, src)
    assert theta == pytest.approx(0.0, abs=1e-12)
    assert s == pytest.approx(1.0)
    assert np.allclose(t, 0.0, atol=1e-12)
    theta, s, t = umeyama_2d(src, 2.0 * src)
    assert theta == pytest.approx(0.0, abs=1e-9)
    assert s == pytest.approx(2.0)
    assert np.allclose(t, 0.0, atol=1e-12)


def test_umeyama_2d_fixed_scale(rng):
    src = rng.normal(size=(15, 2))
    dst = 3.0 * (src @ rot2(0.4).T) + np.array([1.0, -2.0])
    theta, s, t = umeyama_2d(src, dst, fixed_scale=3.0)
    assert theta == pytest.approx(0.4, abs=1e-9)
    assert s == 3.0
    assert np.allclose(t, [1.0, -2.0], atol=1e-9)


def test_umeyama_2d_degenerate():
    src = np.zeros((5, 2))
    with pytest.raises(DegeneracyError):
        umeyama_2d(src, src)


# --- fit_symmetric -------------------------------------------------------------


Y_AXIS = np.array([0.0, 1.0, 0.0])


def cylinder_cloud(rng, n=60):
    phi = rng.uniform(0, 2 * np.pi, size=n // 2)
    y = rng.uniform(-0.4, 0.4, size=n // 2)
    r = 0.3
    half = np.stack([r * np.cos(phi), y, r * np.sin(phi)], axis=1)
    return np.concatenate([half, -half])  # zero-mean, still on the cylinder


def test_fit_symmetric_forward_synthesis(rng):
    y = cylinder_cloud(rng)
    rot = Rot3.from_axis_angle(np.array([0.2, 0.5, -0.3]), 0.9)
    spin = Rot3.from_axis_angle(Y_AXIS, np.radians(25.0))
    gt = Sim3(1.5, rot.compose(spin), np.array([0.0, 0.2, 0.0]))
    c = apply_sim(gt, y)
    # The caller only knows the spin-ambiguous rotation.
    s, t, theta = fit_symmetric(Correspondences(c, y), rot, Y_AXIS)
    assert s == pytest.approx(1.5, abs=1e-9)
    assert np.allclose(t, [0.0, 0.2, 0.0], atol=1e-9)
    total = rot.compose(Rot3.from_axis_angle(Y_AXIS, theta))
    from captrack.geometry import symmetric_rotation_angle

    assert symmetric_rotation_angle(total, gt.r, Y_AXIS) < 1e-9
    assert theta == pytest.approx(np.radians(25.0), abs=1e-9)


def test_fit_symmetric_zero_spin_reduces_to_plain(rng):
    y = cylinder_cloud(rng)
    rot = Rot3.from_axis_angle(np.array([1.0, 0.2, 0.0]), 0.5)
    gt = Sim3(2.0, rot, np.array([0.1, -0.3, 0.2]))
    corr = Correspondences(apply_sim(gt, y), y)
    s_plain, t_plain = fit_scale_translation(corr, rot)
    s_sym, t_sym, theta = fit_symmetric(corr, rot, Y_AXIS)
    assert abs(theta) < 1e-9
    assert s_sym == pytest.approx(s_plain, abs=1e-12)
    assert np.allclose(t_sym, t_plain, atol=1e-12)


def test_fit_symmetric_spin_invariance(rng):
    y = cylinder_cloud(rng)
    rot = Rot3.from_axis_angle(np.array([0.4, 1.0, 0.1]), 1.1)
    gt = Sim3(1.2, rot, np.array([0.05, 0.4, -0.1]))
    corr = Correspondences(apply_sim(gt, y), y)
    s0, t0, _ = fit_symmetric(corr, rot, Y_AXIS)
    for phi in (0.3, 1.9, -2.4):
        spun = y @ Rot3.from_axis_angle(Y_AXIS, phi).m.T
        s1, t1, _ = fit_symmetric(Correspondences(corr.camera, spun), rot, Y_AXIS)
        assert s1 == pytest.approx(s0, abs=1e-9)
        assert np.allclose(t1, t0, atol=1e-9)


def test_fit_symmetric_arbitrary_axis(rng):
    axis = np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0)
    y = cylinder_cloud(rng) @ Rot3.from_axis_angle(np.array([0, 0, 1.0]), -np.pi / 4).m.T
    rot = Rot3.from_axis_angle(np.array([0.3, -0.2, 0.9]), 0.7)
    spin = Rot3.from_axis_angle(axis, 0.6)
    gt = Sim3(0.8, rot.compose(spin), np.array([0.3, 0.1, -0.2]))
    corr = Correspondences(apply_sim(gt, y), y)
    s, t, theta = fit_symmetric(corr, rot, axis)
    assert s == pytest.approx(0.8, abs=1e-9)
    assert np.allclose(t, gt.t, atol=1e-9)
    assert theta == pytest.approx(0.6, abs=1e-9)


def test_fit_symmetric_on_axis_degenerate():
    y = np.stack([np.zeros(5), np.linspace(-0.5, 0.5, 5), np.zeros(5)], axis=1)
    with pytest.raises(DegeneracyError):
        fit_symmetric(Correspondences(y, y), Rot3.identity(), Y_AXIS)


# --- RANSAC -------------------------------------------------------------------


def planted_outlier_scene(rng, n=100, outliers=30, sim=None):
    sim = sim or random_sim3(rng)
    y = rng.uniform(-0.5, 0.5, size=(n, 3))
    c = apply_sim(sim, y)
    bad = rng.choice(n, size=outliers, replace=False)
    c = c.copy()
    c[bad] = rng.uniform(-0.5, 0.5, size=(outliers, 3))
    return Correspondences(c, y), sim, bad


def test_ransac_with_planted_outliers(rng):
    corr, sim, bad = planted_outlier_scene(rng, n=100, outliers=30)
    params = RansacParams(iterations=256, inlier_threshold=0.01, seed=3)
    fit, inliers = ransac_fit(corr, params)
    assert fit.s == pytest.approx(sim.s, abs=1e-6)
    assert np.allclose(fit.t, sim.t, atol=1e-6)
    assert rotation_angle(fit.r, sim.r) < 1e-4
    clean = np.setdiff1d(np.arange(100), bad)
    assert inliers[clean].mean() >= 0.99


def test_ransac_no_outliers_matches_umeyama(rng):
    sim = random_sim3(rng)
    corr = synth(rng, 60, sim)
    fit, inliers = ransac_fit(corr, RansacParams(seed=1))
    plain = umeyama_sim3(corr)
    assert inliers.all()
    assert fit.s == pytest.approx(plain.s, rel=1e-9)
    assert np.allclose(fit.t, plain.t, atol=1e-9)
    assert rotation_angle(fit.r, plain.r) < 1e-7


def test_ransac_all_outliers_no_consensus(rng):
    y = rng.uniform(-0.5, 0.5, size=(40, 3))
    c = rng.uniform(-5.0, 5.0, size=(40, 3))
    with pytest.raises(NoConsensusError):
        ransac_fit(Correspondences(c, y), RansacParams(iterations=64, inlier_threshold=1e-6, seed=2))


def test_ransac_given_rotation_mode(rng):
    sim = random_sim3(rng)
    corr, _, _ = planted_outlier_scene(rng, n=80, outliers=20, sim=sim)
    fit, _ = ransac_fit(corr, RansacParams(seed=5, inlier_threshold=0.005), rotation=sim.r)
    assert fit.s == pytest.approx(sim.s, abs=1e-6)
    assert np.allclose(fit.t, sim.t, atol=1e-5)
    assert fit.r is sim.r


def test_ransac_deterministic(rng):
    corr, _, _ = planted_outlier_scene(rng)
    params = RansacParams(seed=11)
    fit1, in1 = ransac_fit(corr, params)
    fit2, in2 = ransac_fit(corr, params)
    assert fit1.s == fit2.s
    assert np.array_equal(fit1.r.m, fit2.r.m)
    assert np.array_equal(fit1.t, fit2.t)
    assert np.array_equal(in1, in2)


def test_correspondences_validation():
    with pytest.raises(ValueError):
        Correspondences(np.zeros((3, 3)), np.zeros((4, 3)))
    with pytest.raises(ValueError):
        Correspondences(np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(ValueError):
        RansacParams(iterations=0)
    with pytest.raises(ValueError):
        RansacParams(inlier_threshold=-1.0)
