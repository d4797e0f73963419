"""Closed-form and robust similarity-transform estimation from 3D-3D matches.

Two scale/translation estimators are provided for the rotation-given case:
the sequential closed form (un-centered scale ratio, translation as the
residual mean) and a centered least-squares variant.  They agree exactly
when the rotated normalized points have zero mean, which is the normalized
frame's convention; on masked subsets only the centered form stays exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, NoConsensusError, NonPositiveScaleError
from .geometry import Rot3, Sim3, rotation_between
from .rng import STREAM_RANSAC, make_rng

MIN_SCALE = 1e-6


@dataclass(frozen=True, eq=False)
class Correspondences:
    """Paired camera-frame points (meters) and normalized-frame points."""

    camera: np.ndarray
    normalized: np.ndarray

    def __post_init__(self):
        cam = np.atleast_2d(np.asarray(self.camera, dtype=float))
        nrm = np.atleast_2d(np.asarray(self.normalized, dtype=float))
        if cam.shape != nrm.shape or cam.ndim != 2 or cam.shape[1] != 3:
            raise ValueError(
                f"camera and normalized points must both be (N, 3), got {cam.shape} and {nrm.shape}"
            )
        if cam.shape[0] < 1:
            raise ValueError("need at least one correspondence")
        object.__setattr__(self, "camera", cam)
        object.__setattr__(self, "normalized", nrm)

    def __len__(self) -> int:
        return self.camera.shape[0]

    def subset(self, idx) -> "Correspondences":
        return Correspondences(self.camera[idx], self.normalized[idx])


@dataclass(frozen=True)
class RansacParams:
    iterations: int = 256
    inlier_threshold: float = 0.01  # meters, camera frame
    min_sample: int | None = None  # defaults to 4 (full sim3) or 1 (given rotation)
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.inlier_threshold <= 0.0:
            raise ValueError("inlier_threshold must be positive")
        if self.min_sample is not None and self.min_sample < 1:
            raise ValueError("min_sample must be >= 1")


def fit_scale_translation(corr: Correspondences, r: Rot3) -> tuple[float, np.ndarray]:
    """Scale and translation with the rotation given.

    W = R Y pointwise; s = sum(W . C) / sum(W . W); t = mean(C - s W).
    Exact on noise-free data whenever the normalized points have zero mean
    (the normalized-frame convention) or the translation is zero; otherwise
    the scale ratio picks up a mean-coupling term, see the centered variant.
    """
    w = corr.normalized @ r.m.T
    denom = float(np.einsum("ij,ij->", w, w))
    if denom < 1e-12:
        raise DegeneracyError("normalized points are all zero after rotation")
    s = float(np.einsum("ij,ij->", w, corr.camera)) / denom
    if s <= MIN_SCALE:
        raise NonPositiveScaleError(f"fitted scale {s} is not usable")
    t = (corr.camera - s * w).mean(axis=0)
    return s, t


def fit_scale_translation_centered(corr: Correspondences, r: Rot3) -> tuple[float, np.ndarray]:
    """Centered least-squares variant, jointly optimal in s and t.

    Differs from :func:`fit_scale_translation` whenever the rotated
    normalized points have a nonzero mean.
    """
    w = corr.normalized @ r.m.T
    w0 = w - w.mean(axis=0)
    c0 = corr.camera - corr.camera.mean(axis=0)
    denom = float(np.einsum("ij,ij->", w0, w0))
    if denom < 1e-12:
        raise DegeneracyError("normalized points are coincident after centering")
    s = float(np.einsum("ij,ij->", w0, c0)) / denom
    if s <= MIN_SCALE:
        raise NonPositiveScaleError(f"fitted scale {s} is not usable")
    t = corr.camera.mean(axis=0) - s * w.mean(axis=0)
    return s, t


def umeyama_sim3(corr: Correspondences) -> Sim3:
    """Least-squares similarity minimizing sum ||C - (s R Y + T)||^2."""
    if len(corr) < 3:
        raise ValueError("need at least 3 correspondences for a full similarity fit")
    y = corr.normalized
    c = corr.camera
    mu_y = y.mean(axis=0)
    mu_c = c.mean(axis=0)
    yc = y - mu_y
    cc = c - mu_c
    cov = cc.T @ yc / len(corr)
    u, sigma, vt = np.linalg.svd(cov)
    if sigma[0] < 1e-12 or sigma[1] < 1e-12 * sigma[0]:
        raise DegeneracyError("correspondences are collinear or coincident")
    flip = np.sign(np.linalg.det(u) * np.linalg.det(vt))
    d = np.array([1.0, 1.0, flip])
    r = Rot3._wrap(u @ np.diag(d) @ vt)
    var_y = float(np.einsum("ij,ij->", yc, yc)) / len(corr)
    s = float(sigma @ d) / var_y
    if s <= MIN_SCALE:
        raise NonPositiveScaleError(f"fitted scale {s} is not usable")
    t = mu_c - s * (r.m @ mu_y)
    return Sim3(s, r, t)


def umeyama_2d(src, dst, fixed_scale: float | None = None) -> tuple[float, float, np.ndarray]:
    """2D similarity dst ~ s R(theta) src + t, with R(theta) counter-clockwise.

    Returns (theta, s, t).  When ``fixed_scale`` is given only the rotation
    and translation are estimated.
    """
    src = np.atleast_2d(np.asarray(src, dtype=float))
    dst = np.atleast_2d(np.asarray(dst, dtype=float))
    if src.shape != dst.shape or src.shape[1] != 2 or src.shape[0] < 2:
        raise ValueError("need matching (N, 2) arrays with N >= 2")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    sc = src - mu_s
    dc = dst - mu_d
    var_src = float(np.einsum("ij,ij->", sc, sc)) / len(src)
    if var_src < 1e-12:
        raise DegeneracyError("source points are coincident")
    cov = dc.T @ sc / len(src)
    u, sigma, vt = np.linalg.svd(cov)
    flip = np.sign(np.linalg.det(u) * np.linalg.det(vt))
    d = np.array([1.0, flip])
    rot = u @ np.diag(d) @ vt
    theta = float(np.arctan2(rot[1, 0], rot[0, 0]))
    if fixed_scale is not None:
        if fixed_scale <= 0.0:
            raise ValueError("fixed_scale must be positive")
        s = float(fixed_scale)
    else:
        s = float(sigma @ d) / var_src
        if s <= MIN_SCALE:
            raise NonPositiveScaleError(f"fitted 2D scale {s} is not usable")
    t = mu_d - s * (rot @ mu_s)
    return theta, s, t


def fit_symmetric(
    corr: Correspondences, r: Rot3, axis, centered: bool = False
) -> tuple[float, np.ndarray, float]:
    """Scale/translation fit for a rotationally symmetric object.

    ``axis`` is the symmetry axis in the normalized frame; the closed form
    assumes it is the y-axis, other axes are handled by conjugating with the
    basis change from :func:`symmetry_basis`.  Returns (s, t, theta) where
    theta is the resolved spin about the axis: the data satisfy
    C ~ s * (r R(axis, theta)) Y + t.  ``centered`` selects the centered
    scale/translation step (needed when the masked points are not zero-mean).
    """
    if len(corr) < 2:
        raise ValueError("need at least 2 correspondences for a symmetric fit")
    basis = symmetry_basis(axis)
    u_pts = (corr.camera @ r.m) @ basis.m.T  # r^T C, then axis -> y
    y_pts = corr.normalized @ basis.m.T
    xz = [0, 2]
    proj_y = y_pts[:, xz]
    proj_u = u_pts[:, xz]
    centered_y = proj_y - proj_y.mean(axis=0)
    if float(np.einsum("ij,ij->", centered_y, centered_y)) < 1e-12:
        raise DegeneracyError("all points lie on the symmetry axis")
    theta_2d, _, _ = umeyama_2d(proj_y, proj_u)
    # R_y(phi) acts on (x, z) as a clockwise 2D rotation, hence the sign flip.
    theta = -theta_2d
    spin = Rot3.from_axis_angle(np.asarray(axis, dtype=float), theta)
    total = r.compose(spin)
    fit = fit_scale_translation_centered if centered else fit_scale_translation
    s, t = fit(corr, total)
    return s, t, theta


def symmetry_basis(axis) -> Rot3:
    """Rotation mapping ``axis`` onto the +y axis (identity when already y)."""
    axis = np.asarray(axis, dtype=float)
    y = np.array([0.0, 1.0, 0.0])
    if np.allclose(axis, y, atol=1e-12):
        return Rot3.identity()
    return rotation_between(axis, y)


def _model_residuals(corr: Correspondences, model: Sim3) -> np.ndarray:
    pred = model.s * (corr.normalized @ model.r.m.T) + model.t
    return np.linalg.norm(corr.camera - pred, axis=1)


def _fit_for_mode(corr: Correspondences, rotation: Rot3 | None) -> Sim3:
    if rotation is None:
        return umeyama_sim3(corr)
    # Centered whenever possible: a sample pair then yields the exact model
    # for any translation, not just in the near-canonical regime.
    if len(corr) >= 2:
        s, t = fit_scale_translation_centered(corr, rotation)
    else:
        s, t = fit_scale_translation(corr, rotation)
    return Sim3(s, rotation, t)


def ransac_fit(
    corr: Correspondences,
    params: RansacParams,
    rotation: Rot3 | None = None,
) -> tuple[Sim3, np.ndarray]:
    """Robust fit: full similarity when ``rotation`` is None, else s/t only.

    Returns the best-consensus model refit on its inlier set together with
    the inlier mask of the refit model.  Deterministic for a fixed seed.
    """
    min_sample = params.min_sample
    if min_sample is None:
        min_sample = 4 if rotation is None else 2
    if rotation is None and min_sample < 3:
        raise ValueError("full similarity RANSAC needs min_sample >= 3")
    n = len(corr)
    if n < min_sample:
        raise ValueError(f"need at least {min_sample} correspondences, got {n}")

    rng = make_rng(params.seed, STREAM_RANSAC)
    best_count = 0
    best_rss = np.inf
    best_mask = None
    for _ in range(params.iterations):
        idx = rng.choice(n, size=min_sample, replace=False)
        try:
            model = _fit_for_mode(corr.subset(idx), rotation)
        except DegeneracyError:
            continue
        res = _model_residuals(corr, model)
        mask = res <= params.inlier_threshold
        count = int(mask.sum())
        rss = float(np.square(res[mask]).sum())
        if count > best_count or (count == best_count and rss < best_rss):
            best_count = count
            best_rss = rss
            best_mask = mask
    if best_mask is None or best_count < min_sample:
        raise NoConsensusError(
            f"no model reached {min_sample} inliers at threshold {params.inlier_threshold}"
        )
    refit = _fit_for_mode(corr.subset(best_mask), rotation)
    inliers = _model_residuals(corr, refit) <= params.inlier_threshold
    return refit, inliers
