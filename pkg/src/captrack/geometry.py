"""Rotations, similarity transforms, their algebra and averaging.

Conventions: rotations are proper 3x3 matrices, a similarity transform acts
as x -> s * R @ y + t, and all types are immutable values (arrays are frozen
copies), so every operation here is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError
from .rng import unit_vector

ORTHONORMALITY_TOL = 1e-9
_EYE3 = np.eye(3)


def _vec3(v, name: str = "vector") -> np.ndarray:
    arr = np.array(v, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have shape (3,), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite components")
    return arr


def _check_unit_axis(axis) -> np.ndarray:
    axis = _vec3(axis, "axis")
    if abs(np.linalg.norm(axis) - 1.0) > ORTHONORMALITY_TOL:
        raise ValueError("axis must be a unit vector")
    return axis


def rotate_points(pts: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Apply a 3x3 matrix to (..., 3) points with a fixed accumulation order.

    Equivalent to pts @ m.T, but bitwise identical for every batch shape
    (BLAS picks shape-dependent kernels, which breaks byte-stable replays).
    """
    pts = np.asarray(pts, dtype=float)
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    return np.stack(
        [
            m[0, 0] * x + m[0, 1] * y + m[0, 2] * z,
            m[1, 0] * x + m[1, 1] * y + m[1, 2] * z,
            m[2, 0] * x + m[2, 1] * y + m[2, 2] * z,
        ],
        axis=-1,
    )


@dataclass(frozen=True, eq=False)
class Rot3:
    """Proper rotation: 3x3 orthonormal matrix with det +1."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"rotation matrix must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("rotation matrix has non-finite entries")
        if np.abs(m.T @ m - _EYE3).max() > ORTHONORMALITY_TOL:
            raise ValueError("matrix is not orthonormal within 1e-9")
        if abs(np.linalg.det(m) - 1.0) > ORTHONORMALITY_TOL:
            raise ValueError("matrix determinant is not +1 within 1e-9")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def _wrap(cls, m: np.ndarray) -> "Rot3":
        # Fast path for matrices that are rotations by construction
        # (products/transposes of validated rotations); skips revalidation.
        out = object.__new__(cls)
        m = np.asarray(m, dtype=float)
        m.setflags(write=False)
        object.__setattr__(out, "m", m)
        return out

    @classmethod
    def identity(cls) -> "Rot3":
        return cls._wrap(np.eye(3))

    @classmethod
    def from_axis_angle(cls, axis, angle_rad: float) -> "Rot3":
        """Rodrigues formula; ``axis`` is normalized internally."""
        axis = _vec3(axis, "axis")
        norm = np.linalg.norm(axis)
        if norm < 1e-12:
            raise DegeneracyError("rotation axis is numerically zero")
        a = axis / norm
        k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
        c, s = np.cos(angle_rad), np.sin(angle_rad)
        return cls._wrap(c * _EYE3 + s * k + (1.0 - c) * np.outer(a, a))

    def compose(self, other: "Rot3") -> "Rot3":
        return Rot3._wrap(self.m @ other.m)

    def inverse(self) -> "Rot3":
        return Rot3._wrap(self.m.T.copy())

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return rotate_points(pts, self.m)


@dataclass(frozen=True, eq=False)
class Rot6D:
    """First two columns of a rotation, before orthonormalization."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _vec3(self.a, "a"))
        object.__setattr__(self, "b", _vec3(self.b, "b"))
        self.a.setflags(write=False)
        self.b.setflags(write=False)


@dataclass(frozen=True, eq=False)
class Sim3:
    """7DoF similarity transform {s, R, t} acting as x -> s R y + t."""

    s: float
    r: Rot3
    t: np.ndarray

    def __post_init__(self):
        s = float(self.s)
        if not np.isfinite(s) or s <= 0.0:
            raise ValueError(f"scale must be positive and finite, got {s}")
        t = _vec3(self.t, "translation")
        t.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Sim3":
        return cls(1.0, Rot3.identity(), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form [[s R, t], [0, 1]]."""
        out = np.eye(4)
        out[:3, :3] = self.s * self.r.m
        out[:3, 3] = self.t
        return out


@dataclass(frozen=True, eq=False)
class Pose9:
    """9DoF pose {d, R, T}: per-axis size (meters), rotation, translation."""

    d: np.ndarray
    r: Rot3
    t: np.ndarray

    def __post_init__(self):
        d = _vec3(self.d, "size")
        if np.any(d <= 0.0):
            raise ValueError("all size components must be positive")
        t = _vec3(self.t, "translation")
        d.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "t", t)

    @property
    def scale(self) -> float:
        return float(np.linalg.norm(self.d))

    @property
    def aspect(self) -> np.ndarray:
        return self.d / self.scale

    @property
    def sim(self) -> Sim3:
        return Sim3(self.scale, self.r, self.t)

    @classmethod
    def from_sim(cls, sim: Sim3, aspect) -> "Pose9":
        return cls(sim.s * _vec3(aspect, "aspect"), sim.r, sim.t)


# --- Sim3 algebra -----------------------------------------------------------


def apply_sim(a: Sim3, p: np.ndarray) -> np.ndarray:
    """Apply a similarity transform to a point or an (N, 3) point array."""
    return a.s * rotate_points(p, a.r.m) + a.t


def compose_sim(a: Sim3, b: Sim3) -> Sim3:
    """Composition: apply_sim(compose_sim(a, b), p) == apply_sim(a, apply_sim(b, p))."""
    return Sim3(a.s * b.s, a.r.compose(b.r), a.s * (a.r.m @ b.t) + a.t)


def inverse_sim(a: Sim3) -> Sim3:
    return Sim3(1.0 / a.s, a.r.inverse(), -(a.r.m.T @ a.t) / a.s)


# --- Rotation representations and averaging ---------------------------------


def rot_from_6d(v: Rot6D) -> Rot3:
    """Gram-Schmidt orthonormalization of the continuous 6D representation."""
    na = np.linalg.norm(v.a)
    if na < ORTHONORMALITY_TOL:
        raise DegeneracyError("first 6D column is numerically zero")
    c1 = v.a / na
    b_perp = v.b - (v.b @ c1) * c1
    nb = np.linalg.norm(b_perp)
    if nb < ORTHONORMALITY_TOL:
        raise DegeneracyError("6D columns are numerically parallel")
    c2 = b_perp / nb
    c3 = np.cross(c1, c2)
    return Rot3._wrap(np.stack([c1, c2, c3], axis=1))


def rot_to_6d(r: Rot3) -> Rot6D:
    return Rot6D(r.m[:, 0].copy(), r.m[:, 1].copy())


def project_to_so3(m: np.ndarray) -> Rot3:
    """Nearest rotation in Frobenius norm: SVD with a det correction."""
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    u, sigma, vt = np.linalg.svd(m)
    if sigma[-1] < 1e-12:
        raise DegeneracyError("matrix is rank deficient; no unique nearest rotation")
    d = np.sign(np.linalg.det(u @ vt))
    return Rot3._wrap(u @ np.diag([1.0, 1.0, d]) @ vt)


def renormalize(r: Rot3, tol: float = 1e-12) -> Rot3:
    """Snap a rotation back to SO(3) if float drift exceeds ``tol``."""
    if np.abs(r.m.T @ r.m - _EYE3).max() <= tol:
        return r
    return project_to_so3(r.m)


def euclidean_mean(rs, weights=None) -> Rot3:
    """Mean rotation: (weighted) arithmetic mean of matrices projected to SO(3).

    ``rs`` may be a sequence of Rot3 or an (N, 3, 3) array of predicted
    rotation matrices (predictions need not be exactly orthonormal).
    """
    if isinstance(rs, np.ndarray):
        mats = np.asarray(rs, dtype=float)
        if mats.ndim != 3 or mats.shape[1:] != (3, 3):
            raise ValueError("expected an (N, 3, 3) array of rotations")
    else:
        rs = list(rs)
        if any(isinstance(r, Rot3) for r in rs):
            mats = np.array([r.m for r in rs])
        else:
            mats = np.array([np.asarray(r, dtype=float) for r in rs])
    if mats.shape[0] == 0:
        raise ValueError("cannot average an empty set of rotations")
    if weights is None:
        mean = mats.mean(axis=0)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (mats.shape[0],):
            raise ValueError("weights must match the number of rotations")
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        total = w.sum()
        if total <= 0.0:
            raise ValueError("weight sum must be positive")
        mean = np.einsum("n,nij->ij", w, mats) / total
    return project_to_so3(mean)


def rotation_angle(ra: Rot3, rb: Rot3) -> float:
    """Relative rotation angle in degrees, in [0, 180].

    Equal to arccos(clamp((trace(ra^T rb) - 1) / 2)); evaluated in atan2 form
    so near-identity angles do not drown in the trace round-off floor.
    """
    p = ra.m.T @ rb.m
    cos_term = 0.5 * (np.trace(p) - 1.0)
    skew = 0.5 * np.array([p[2, 1] - p[1, 2], p[0, 2] - p[2, 0], p[1, 0] - p[0, 1]])
    return float(np.degrees(np.arctan2(np.linalg.norm(skew), cos_term)))


def axis_endpoint(r: Rot3, axis) -> np.ndarray:
    """Image of a unit symmetry axis under the rotation."""
    return r.m @ _check_unit_axis(axis)


def angle_between_deg(u: np.ndarray, v: np.ndarray) -> float:
    """Angle between two nonzero vectors in degrees (atan2 form)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cross = np.linalg.norm(np.cross(u, v))
    return float(np.degrees(np.arctan2(cross, float(u @ v))))


def symmetric_rotation_angle(ra: Rot3, rb: Rot3, axis) -> float:
    """Rotation error in degrees with the ambiguity about ``axis`` discarded."""
    axis = _check_unit_axis(axis)
    return angle_between_deg(ra.m @ axis, rb.m @ axis)


def rotation_between(u, v) -> Rot3:
    """Minimal rotation mapping direction ``u`` onto direction ``v``."""
    u = _vec3(u, "u")
    v = _vec3(v, "v")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < 1e-12 or nv < 1e-12:
        raise DegeneracyError("cannot align a zero vector")
    u = u / nu
    v = v / nv
    c = np.cross(u, v)
    nc = np.linalg.norm(c)
    d = float(u @ v)
    if nc < 1e-12:
        if d > 0.0:
            return Rot3.identity()
        # Antipodal: rotate 180 degrees about any axis orthogonal to u.
        helper = _EYE3[np.argmin(np.abs(u))]
        perp = np.cross(u, helper)
        return Rot3.from_axis_angle(perp, np.pi)
    return Rot3.from_axis_angle(c / nc, np.arctan2(nc, d))


def random_rotation(rng, max_angle_rad: float = np.pi) -> Rot3:
    """Rotation about a uniform axis by a uniform angle in [0, max_angle_rad]."""
    return Rot3.from_axis_angle(unit_vector(rng), max_angle_rad * rng.random())
