"""Pose perturbation sampling and configurable oracle predictors.

The oracles stand in for the learned segmentation/coordinate and rotation
regressors: they answer from the simulator's ground truth, corrupted by
configurable noise, and are pure functions of (observation, estimates,
noise seed, frame index) so repeated tracking runs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError
from .geometry import Pose9, Rot3, compose_sim, inverse_sim
from .rng import (
    STREAM_ORACLE_COORD,
    STREAM_ORACLE_ROT,
    entropy_tuple,
    make_rng,
    normal,
    unit_vector,
    unit_vectors,
)
from .simulator import Observation


@dataclass(frozen=True)
class PerturbSpec:
    """Gaussian pose-perturbation sigmas: relative scale, degrees, meters."""

    sigma_scale: float = 0.0
    sigma_rot: float = 0.0
    sigma_trans: float = 0.0

    def __post_init__(self):
        if self.sigma_scale < 0 or self.sigma_rot < 0 or self.sigma_trans < 0:
            raise ValueError("perturbation sigmas must be nonnegative")

    def scaled(self, factor: float) -> "PerturbSpec":
        return PerturbSpec(
            self.sigma_scale * factor, self.sigma_rot * factor, self.sigma_trans * factor
        )


# Rigid preset and the per-category training perturbation sigmas.
RIGID_PERTURB = PerturbSpec(0.02, 5.0, 0.03)
PERTURB_PRESETS = {
    "glasses": PerturbSpec(0.02, 5.0, 0.02),
    "scissors": PerturbSpec(0.01, 3.0, 0.01),
    "laptop": PerturbSpec(0.015, 3.0, 0.02),
    "drawers": PerturbSpec(0.02, 3.0, 0.02),
    "box": RIGID_PERTURB,
    "cylinder": RIGID_PERTURB,
}


@dataclass(frozen=True)
class NoiseSpec:
    """Oracle-predictor corruption levels."""

    coord_sigma: float = 0.0  # isotropic Gaussian on normalized coords
    rot_sigma: float = 0.0  # degrees, per-point rotation noise
    outlier_fraction: float = 0.0
    seg_error_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.coord_sigma < 0 or self.rot_sigma < 0:
            raise ValueError("noise sigmas must be nonnegative")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise ValueError("outlier_fraction must lie in [0, 1]")
        if not 0.0 <= self.seg_error_rate <= 1.0:
            raise ValueError("seg_error_rate must lie in [0, 1]")


def perturb_pose(pose: Pose9, spec: PerturbSpec, seed) -> Pose9:
    """Jitter a pose the way training-time pose noise is sampled.

    s' = s (1 + n_s); R' = R R_rand with a uniform random axis and Gaussian
    angle; T' = T + n_T with a uniform direction and Gaussian length.  The
    aspect ratio d-hat is untouched.  Deterministic per seed.
    """
    rng = make_rng(*entropy_tuple(seed))
    n_s = float(normal(rng)) * spec.sigma_scale
    attempts = 0
    while 1.0 + n_s <= 0.0:
        attempts += 1
        if attempts >= 100:
            raise DegeneracyError("could not sample a positive perturbed scale")
        n_s = float(normal(rng)) * spec.sigma_scale
    axis = unit_vector(rng)
    angle = np.radians(float(normal(rng)) * spec.sigma_rot)
    direction = unit_vector(rng)
    length = float(normal(rng)) * spec.sigma_trans
    return Pose9(
        d=pose.d * (1.0 + n_s),
        r=pose.r.compose(Rot3.from_axis_angle(axis, angle)),
        t=pose.t + length * direction,
    )


def random_rotation_matrices(rng, n: int, sigma_deg: float) -> np.ndarray:
    """(n, 3, 3) rotations with uniform axes and N(0, sigma) angles, vectorized."""
    axes = unit_vectors(rng, n)
    angles = np.radians(np.asarray(normal(rng, n)) * sigma_deg)
    k = np.zeros((n, 3, 3))
    k[:, 0, 1] = -axes[:, 2]
    k[:, 0, 2] = axes[:, 1]
    k[:, 1, 0] = axes[:, 2]
    k[:, 1, 2] = -axes[:, 0]
    k[:, 2, 0] = -axes[:, 1]
    k[:, 2, 1] = axes[:, 0]
    outer = np.einsum("ni,nj->nij", axes, axes)
    c = np.cos(angles)[:, None, None]
    s = np.sin(angles)[:, None, None]
    return c * np.eye(3) + s * k + (1.0 - c) * outer


class OraclePredictor:
    """Ground-truth-backed predictor with configurable corruption.

    ``symmetric_axis`` switches the rotation output from per-point delta
    rotation matrices to per-point axis endpoints, matching what a network
    would regress for a rotationally symmetric category.
    """

    def __init__(self, noise: NoiseSpec, symmetric_axis=None):
        self.noise = noise
        self.symmetric_axis = None if symmetric_axis is None else np.asarray(symmetric_axis, float)

    def coordinates(self, canonical_first: np.ndarray, obs: Observation):
        """Per-part masks plus per-point normalized coordinates.

        Noise is drawn for every point of the uncropped frame and indexed by
        the observation's stable point ids, so two runs whose crops differ
        still corrupt each surviving point identically.
        """
        if obs.labels is None or obs.coords is None or obs.poses is None:
            raise ValueError("oracle predictor needs an observation with ground truth")
        num_parts = len(obs.poses)
        total = obs.total_points
        ids = obs.ids
        labels = obs.labels.copy()
        coords = obs.coords.copy()
        noise = self.noise
        if noise.seg_error_rate > 0.0 and num_parts > 1:
            rng = make_rng(noise.seed, STREAM_ORACLE_COORD, obs.frame, 0)
            flip = (rng.random(total) < noise.seg_error_rate)[ids]
            shift = (1 + (rng.random(total) * (num_parts - 1)).astype(int))[ids]
            labels[flip] = (labels[flip] + shift[flip]) % num_parts
        if noise.coord_sigma > 0.0:
            rng = make_rng(noise.seed, STREAM_ORACLE_COORD, obs.frame, 1)
            coords = coords + noise.coord_sigma * np.asarray(normal(rng, (total, 3)))[ids]
        if noise.outlier_fraction > 0.0:
            rng = make_rng(noise.seed, STREAM_ORACLE_COORD, obs.frame, 2)
            bad = (rng.random(total) < noise.outlier_fraction)[ids]
            replacements = (rng.random((total, 3)) - 0.5)[ids]
            coords[bad] = replacements[bad]
        masks = tuple(labels == j for j in range(num_parts))
        return masks, coords

    def rotations(self, canonicals, obs: Observation, parts):
        """Per part: (N, 3, 3) delta rotations, or (N, 3) axis endpoints."""
        if obs.poses is None:
            raise ValueError("oracle predictor needs an observation with ground truth")
        n = len(obs)
        out = []
        for j, est in enumerate(parts):
            delta = compose_sim(inverse_sim(est.sim), obs.poses[j].sim).r
            if self.noise.rot_sigma > 0.0:
                rng = make_rng(self.noise.seed, STREAM_ORACLE_ROT, obs.frame, j)
                noise_rots = random_rotation_matrices(rng, obs.total_points, self.noise.rot_sigma)
                pred = np.einsum("ij,njk->nik", delta.m, noise_rots[obs.ids])
            else:
                pred = np.broadcast_to(delta.m, (n, 3, 3))
            if self.symmetric_axis is not None:
                out.append(pred @ self.symmetric_axis)
            else:
                out.append(pred)
        return tuple(out)
