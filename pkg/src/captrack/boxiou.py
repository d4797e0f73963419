"""Exact oriented 3D box IoU via convex polytope clipping.

The intersection polytope is built by clipping one box's face polygons
against the other box's six face half-spaces (Sutherland-Hodgman in 3D,
closing each cut with a cap polygon), and its volume follows from the
divergence theorem over a fan triangulation of the faces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose9

_CORNER_SIGNS = np.array(
    [[sx, sy, sz] for sx in (-1.0, 1.0) for sy in (-1.0, 1.0) for sz in (-1.0, 1.0)]
)
# Outward-wound quads over the corner indexing above (bit order x, y, z).
_FACES = ((4, 6, 7, 5), (0, 1, 3, 2), (2, 3, 7, 6), (0, 4, 5, 1), (1, 5, 7, 3), (0, 2, 6, 4))


@dataclass(frozen=True, eq=False)
class OrientedBox:
    """Amodal 3D bounding box with free pose: center t, rotation r, extents d."""

    pose: Pose9

    def corners(self) -> np.ndarray:
        half = 0.5 * self.pose.d
        return (_CORNER_SIGNS * half) @ self.pose.r.m.T + self.pose.t

    def volume(self) -> float:
        return float(np.prod(self.pose.d))

    def half_spaces(self) -> list[tuple[np.ndarray, float]]:
        """Six (n, d) pairs; x is inside iff n . x <= d for all of them."""
        out = []
        for i in range(3):
            col = self.pose.r.m[:, i]
            center = float(col @ self.pose.t)
            half = 0.5 * self.pose.d[i]
            out.append((col, center + half))
            out.append((-col, -center + half))
        return out

    def contains(self, pts: np.ndarray, atol: float = 0.0) -> np.ndarray:
        local = (np.asarray(pts, dtype=float) - self.pose.t) @ self.pose.r.m
        return np.all(np.abs(local) <= 0.5 * self.pose.d + atol, axis=1)


def _clip_polygon(poly: np.ndarray, n: np.ndarray, d: float, eps: float):
    """Clip one polygon against n . x <= d; also report new on-plane points."""
    dist = poly @ n - d
    if np.all(dist <= eps):
        on_plane = poly[np.abs(dist) <= eps]
        return poly, on_plane, False
    kept: list[np.ndarray] = []
    cap_pts: list[np.ndarray] = []
    k = len(poly)
    for i in range(k):
        prev_p, cur_p = poly[i - 1], poly[i]
        prev_d, cur_d = dist[i - 1], dist[i]
        prev_in, cur_in = prev_d <= eps, cur_d <= eps
        if cur_in:
            if not prev_in:
                alpha = prev_d / (prev_d - cur_d)
                cut = prev_p + alpha * (cur_p - prev_p)
                kept.append(cut)
                cap_pts.append(cut)
            kept.append(cur_p)
            if abs(cur_d) <= eps:
                cap_pts.append(cur_p)
        elif prev_in:
            alpha = prev_d / (prev_d - cur_d)
            cut = prev_p + alpha * (cur_p - prev_p)
            kept.append(cut)
            cap_pts.append(cut)
    poly_out = np.array(kept) if len(kept) >= 3 else None
    cap = np.array(cap_pts) if cap_pts else np.empty((0, 3))
    return poly_out, cap, True


def _dedup(points: np.ndarray, eps: float) -> np.ndarray:
    kept: list[np.ndarray] = []
    for p in points:
        if all(np.linalg.norm(p - q) > eps for q in kept):
            kept.append(p)
    return np.array(kept) if kept else np.empty((0, 3))


def _cap_polygon(points: np.ndarray, n: np.ndarray, eps: float) -> np.ndarray | None:
    pts = _dedup(points, 10.0 * eps)
    if len(pts) < 3:
        return None
    helper = np.eye(3)[int(np.argmin(np.abs(n)))]
    u = np.cross(n, helper)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    center = pts.mean(axis=0)
    rel = pts - center
    # CCW in the (u, v) frame orients the cap's normal along +n (outward).
    order = np.argsort(np.arctan2(rel @ v, rel @ u))
    return pts[order]


def _clip_polytope(faces: list[np.ndarray], n: np.ndarray, d: float, eps: float):
    new_faces: list[np.ndarray] = []
    cap_candidates: list[np.ndarray] = []
    cut_any = False
    for poly in faces:
        poly_out, cap, cut = _clip_polygon(poly, n, d, eps)
        cut_any = cut_any or cut
        if poly_out is not None:
            new_faces.append(poly_out)
        if len(cap):
            cap_candidates.append(cap)
    if cut_any and cap_candidates:
        cap = _cap_polygon(np.concatenate(cap_candidates), n, eps)
        if cap is not None:
            new_faces.append(cap)
    return new_faces


def _polytope_volume(faces: list[np.ndarray]) -> float:
    if not faces:
        return 0.0
    origin = np.concatenate(faces).mean(axis=0)
    total = 0.0
    for poly in faces:
        rel = poly - origin
        v0 = rel[0]
        for i in range(1, len(rel) - 1):
            total += float(v0 @ np.cross(rel[i], rel[i + 1]))
    return total / 6.0


def intersection_volume(a: OrientedBox, b: OrientedBox) -> float:
    scale = float(np.linalg.norm(a.pose.d) + np.linalg.norm(b.pose.d)
                  + np.linalg.norm(a.pose.t - b.pose.t))
    eps = 1e-9 * max(scale, 1e-12)
    corners = a.corners()
    faces = [corners[list(f)] for f in _FACES]
    for n, d in b.half_spaces():
        faces = _clip_polytope(faces, n, d, eps)
        if not faces:
            return 0.0
    return max(0.0, _polytope_volume(faces))


def _axis_aligned(box: OrientedBox) -> bool:
    return np.array_equal(box.pose.r.m, np.eye(3))


def oriented_iou3d(a: OrientedBox, b: OrientedBox) -> float:
    """Volumetric IoU of two oriented boxes, in [0, 1]."""
    if (
        np.array_equal(a.pose.d, b.pose.d)
        and np.array_equal(a.pose.r.m, b.pose.r.m)
        and np.array_equal(a.pose.t, b.pose.t)
    ):
        return 1.0
    if _axis_aligned(a) and _axis_aligned(b):
        lo = np.maximum(a.pose.t - 0.5 * a.pose.d, b.pose.t - 0.5 * b.pose.d)
        hi = np.minimum(a.pose.t + 0.5 * a.pose.d, b.pose.t + 0.5 * b.pose.d)
        inter = float(np.prod(np.maximum(0.0, hi - lo)))
    else:
        inter = intersection_volume(a, b)
    union = a.volume() + b.volume() - inter
    if union <= 0.0:
        return 0.0
    return float(min(1.0, max(0.0, inter / union)))
