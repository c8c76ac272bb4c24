"""Pinhole camera model, rigid-transform algebra and multi-view triangulation.

Conventions used throughout the package:
  - camera frame: z forward, x right, y down (image u right, v down)
  - 2D points are (x, y) pixel coordinates
  - poses are camera-in-base transforms; projection inverts internally
  - all values are float64, lengths in meters, pixels in image units
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from kp3d.errors import DegenerateGeometry

_ORTHO_TOL = 1e-9


def _as_matrix(value, shape, name: str) -> np.ndarray:
    m = np.asarray(value, dtype=float)
    if m.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite values")
    m = m.copy()
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics of an undistorted camera."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the sensor")

    def matrix(self) -> np.ndarray:
        """3x3 camera matrix K (upper triangular, K[2,2] = 1)."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def contains(self, xy) -> bool:
        """True if the pixel position lies inside the image bounds."""
        x, y = float(xy[0]), float(xy[1])
        return 0.0 <= x < self.width and 0.0 <= y < self.height


@dataclass(frozen=True)
class RigidTransform:
    """Rotation plus translation; maps points from the source frame to the target frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _as_matrix(self.rotation, (3, 3), "rotation"))
        object.__setattr__(
            self, "translation", _as_matrix(self.translation, (3,), "translation")
        )
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > _ORTHO_TOL:
            raise ValueError(f"rotation is not orthonormal (deviation {err:.2e})")
        det = np.linalg.det(self.rotation)
        if abs(det - 1.0) > _ORTHO_TOL:
            raise ValueError(f"rotation must have det +1, got {det}")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=float)
        if m.shape != (4, 4):
            raise ValueError(f"expected 4x4 matrix, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self applied after other: (self ∘ other)(x) = self(other(x))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def apply(self, points) -> np.ndarray:
        """Transform a (3,) point or (N, 3) array of points."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation


@dataclass(frozen=True)
class StereoRig:
    """Stereo camera pair; t_left_right is the pose of the right camera in the left frame."""

    left: CameraIntrinsics
    right: CameraIntrinsics
    t_left_right: RigidTransform

    def __post_init__(self):
        if np.linalg.norm(self.t_left_right.translation) <= 0:
            raise ValueError("stereo baseline must be nonzero")

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.t_left_right.translation))


@dataclass(frozen=True)
class ProjectionMatrix:
    """3x4 matrix P = K [R|t] mapping base-frame homogeneous points to pixels."""

    m: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "m", _as_matrix(self.m, (3, 4), "projection matrix"))
        if abs(np.linalg.det(self.m[:, :3])) < 1e-12:
            raise ValueError("left 3x3 block of the projection matrix must be invertible")

    @classmethod
    def from_camera(
        cls, intrinsics: CameraIntrinsics, camera_in_base: RigidTransform
    ) -> "ProjectionMatrix":
        base_in_camera = camera_in_base.inverse()
        rt = np.hstack(
            [base_in_camera.rotation, base_in_camera.translation.reshape(3, 1)]
        )
        return cls(intrinsics.matrix() @ rt)

    def center(self) -> np.ndarray:
        """Camera center in the base frame."""
        return -np.linalg.solve(self.m[:, :3], self.m[:, 3])


def project(P: ProjectionMatrix, point) -> np.ndarray | None:
    """Project a base-frame 3D point to pixels; None when it lies behind the camera.

    The third row of P carries the camera-frame depth, so depth <= 0 means
    the point is not visible from this view.
    """
    X = np.asarray(point, dtype=float)
    if X.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("point must be finite")
    xh = P.m @ np.append(X, 1.0)
    if xh[2] <= 0.0:
        return None
    return xh[:2] / xh[2]


def project_points(P: ProjectionMatrix, points) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of (N, 3) base-frame points.

    Returns (uv, depth) where uv is (N, 2); rows with depth <= 0 hold NaN.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    xh = np.hstack([X, np.ones((X.shape[0], 1))]) @ P.m.T
    depth = xh[:, 2]
    uv = np.full((X.shape[0], 2), np.nan)
    ok = depth > 0
    uv[ok] = xh[ok, :2] / depth[ok, None]
    return uv, depth


def backproject_ray(K: CameraIntrinsics, xy) -> np.ndarray:
    """Unit camera-frame ray through a pixel."""
    x, y = float(xy[0]), float(xy[1])
    ray = np.array([(x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0])
    return ray / np.linalg.norm(ray)


def _skew(t: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -t[2], t[1]], [t[2], 0.0, -t[0]], [-t[1], t[0], 0.0]]
    )


def fundamental_matrix(rig: StereoRig) -> np.ndarray:
    """Fundamental matrix F with x_right^T F x_left = 0 for pixel correspondences.

    Scaled to unit Frobenius norm with a deterministic sign so that the
    residual x'^T F x is of image-pixel magnitude; rank 2 by construction.
    """
    if np.linalg.norm(rig.t_left_right.translation) < 1e-12:
        raise DegenerateGeometry("zero-baseline rig has no fundamental matrix")
    left_to_right = rig.t_left_right.inverse()
    E = _skew(left_to_right.translation) @ left_to_right.rotation
    F = rig.right.inverse_matrix().T @ E @ rig.left.inverse_matrix()
    F = F / np.linalg.norm(F)
    lead = F.flat[np.argmax(np.abs(F))]
    if lead < 0:
        F = -F
    return F


def epipolar_residual(F: np.ndarray, x_left, x_right) -> float:
    """x_right^T F x_left with homogeneous pixel coordinates (w = 1)."""
    xl = np.array([float(x_left[0]), float(x_left[1]), 1.0])
    xr = np.array([float(x_right[0]), float(x_right[1]), 1.0])
    return float(xr @ F @ xl)


def triangulate_dlt(
    observations: Sequence[tuple[ProjectionMatrix, Sequence[float]]]
) -> np.ndarray:
    """Triangulate one 3D point from two or more pixel observations.

    Stacks the cross-product rows x × (P X) = 0 (two per view) and takes the
    smallest-singular-vector of the system, dehomogenized by its fourth
    component.

    Raises:
        DegenerateGeometry: coincident projection centers, or the solution is
            a point at infinity (parallel rays).
    """
    if len(observations) < 2:
        raise ValueError("need at least two observations to triangulate")
    centers = np.array([P.center() for P, _ in observations])
    spread = np.linalg.norm(centers - centers[0], axis=1).max()
    if spread < 1e-9:
        raise DegenerateGeometry("projection centers are coincident")
    rows = []
    for P, xy in observations:
        u, v = float(xy[0]), float(xy[1])
        rows.append(u * P.m[2] - P.m[0])
        rows.append(v * P.m[2] - P.m[1])
    A = np.array(rows)
    _, _, vt = np.linalg.svd(A)
    Xh = vt[-1]
    if abs(Xh[3]) < 1e-12:
        raise DegenerateGeometry("triangulated point at infinity (parallel rays)")
    return Xh[:3] / Xh[3]
