"""Shared helpers for the test suite."""

import numpy as np
from scipy.spatial.transform import Rotation

from kp3d.geometry import CameraIntrinsics, ProjectionMatrix, RigidTransform, StereoRig


def random_rotation(rng) -> np.ndarray:
    return Rotation.from_quat(rng.normal(size=4)).as_matrix()


def random_pose(rng, translation_scale=1.0) -> RigidTransform:
    return RigidTransform(
        random_rotation(rng), rng.normal(scale=translation_scale, size=3)
    )


def random_intrinsics(rng) -> CameraIntrinsics:
    width, height = 1280, 720
    return CameraIntrinsics(
        fx=rng.uniform(400, 900),
        fy=rng.uniform(400, 900),
        cx=width / 2 + rng.uniform(-20, 20),
        cy=height / 2 + rng.uniform(-20, 20),
        width=width,
        height=height,
    )


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=700.0, fy=700.0, cx=640.0, cy=360.0, width=1280, height=720)


def default_rig(baseline=0.063) -> StereoRig:
    cam = default_intrinsics()
    return StereoRig(
        left=cam,
        right=cam,
        t_left_right=RigidTransform(np.eye(3), np.array([baseline, 0.0, 0.0])),
    )


def random_rig(rng) -> StereoRig:
    # small rotation and a mostly-lateral baseline, like a real stereo head
    rot = Rotation.from_rotvec(rng.uniform(-0.03, 0.03, size=3)).as_matrix()
    t = np.array([rng.uniform(0.04, 0.12), rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01)])
    return StereoRig(
        left=random_intrinsics(rng),
        right=random_intrinsics(rng),
        t_left_right=RigidTransform(rot, t),
    )


def look_at_pose(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Camera-in-base pose with +z pointing from eye toward target, y down."""
    eye = np.asarray(eye, dtype=float)
    forward = np.asarray(target, dtype=float) - eye
    forward = forward / np.linalg.norm(forward)
    up = np.asarray(up, dtype=float)
    right = np.cross(forward, up)
    n = np.linalg.norm(right)
    if n < 1e-9:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
        n = np.linalg.norm(right)
    right = right / n
    down = np.cross(forward, right)
    # columns are the camera axes expressed in the base frame
    rot = np.column_stack([right, down, forward])
    return RigidTransform(rot, eye)


def projection_for(intrinsics: CameraIntrinsics, camera_in_base: RigidTransform) -> ProjectionMatrix:
    return ProjectionMatrix.from_camera(intrinsics, camera_in_base)
