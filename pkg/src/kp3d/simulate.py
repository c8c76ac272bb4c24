"""Synthetic scenes: objects, orbit trajectories and sequence generation.

Stands in for the robot data collection: produces pose-only stereo
sequences of static labeled objects on a desk, observed by a wrist-style
camera orbiting the scene. Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from kp3d.dataset import Frame, ObjectInstance, SequenceDataset
from kp3d.geometry import CameraIntrinsics, RigidTransform, StereoRig
from kp3d.targets import CategorySpec

DEFAULT_FPS = 14.5
DEFAULT_DURATION = 30.0

# rig assumptions for the simulated wrist camera; not calibration values
DEFAULT_BASELINE = 0.063
DEFAULT_FOCAL = 700.0
DEFAULT_WIDTH, DEFAULT_HEIGHT = 1280, 720


def valve_category() -> CategorySpec:
    """Handwheel valve: one hub keypoint plus three interchangeable spokes."""
    return CategorySpec("valve", ("hub", "spoke"), (False, True))


def cup_category() -> CategorySpec:
    return CategorySpec("cup", ("bottom", "top", "handle"), (False, False, False))


def default_stereo_rig(baseline: float = DEFAULT_BASELINE) -> StereoRig:
    cam = CameraIntrinsics(
        fx=DEFAULT_FOCAL,
        fy=DEFAULT_FOCAL,
        cx=DEFAULT_WIDTH / 2.0,
        cy=DEFAULT_HEIGHT / 2.0,
        width=DEFAULT_WIDTH,
        height=DEFAULT_HEIGHT,
    )
    return StereoRig(
        left=cam,
        right=cam,
        t_left_right=RigidTransform(np.eye(3), np.array([baseline, 0.0, 0.0])),
    )


def look_at_pose(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Camera-in-base pose looking from eye toward target (z forward, y down)."""
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
    return RigidTransform(np.column_stack([right, down, forward]), eye)


@dataclass(frozen=True)
class NoiseModel:
    pixel_sigma: float = 0.0  # full-image px, applied at map rendering
    pose_rot_sigma: float = 0.0  # radians, per-frame pose perturbation
    pose_trans_sigma: float = 0.0  # meters


@dataclass
class SyntheticScene:
    category: CategorySpec
    objects: list[ObjectInstance]
    trajectory: list[tuple[RigidTransform, RigidTransform]]
    rig: StereoRig
    noise: NoiseModel = field(default_factory=NoiseModel)
    fps: float = DEFAULT_FPS

    def __post_init__(self):
        for obj in self.objects:
            in_front = 0
            for left, _ in self.trajectory:
                z = left.inverse().apply(obj.center_3d)[2]
                if z > 0:
                    in_front += 1
            if in_front < 2:
                raise ValueError("every object must be in front of at least two poses")


def _plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    normal = normal / np.linalg.norm(normal)
    helper = np.array([0.0, 0.0, 1.0])
    if abs(normal @ helper) > 0.9:
        helper = np.array([1.0, 0.0, 0.0])
    u = np.cross(normal, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(normal, u)


def make_valve_object(
    rng: np.random.Generator, position=None, facing=None
) -> ObjectInstance:
    """Three-spoke handwheel: hub at the wheel center, spokes on the rim.

    The wheel plane faces `facing` (a direction the camera arc looks from)
    so the spokes stay separated in image space; grazing views collapse
    same-type keypoints onto each other, which is out of scope for the
    synthetic scenes.
    """
    if position is None:
        position = np.array(
            [rng.uniform(-0.08, 0.08), rng.uniform(-0.08, 0.08), rng.uniform(0.05, 0.15)]
        )
    position = np.asarray(position, dtype=float)
    if facing is None:
        facing = np.array([0.0, 0.0, 1.0])
    wobble = Rotation.from_rotvec(rng.uniform(-0.15, 0.15, size=3)).as_matrix()
    normal = wobble @ (np.asarray(facing, dtype=float) / np.linalg.norm(facing))
    u, v = _plane_basis(normal)
    radius = rng.uniform(0.10, 0.13)
    phase = rng.uniform(0, 2 * np.pi)
    spokes = []
    for k in range(3):
        angle = phase + k * 2.0 * np.pi / 3.0
        spokes.append(position + radius * (np.cos(angle) * u + np.sin(angle) * v))
    return ObjectInstance(
        category=valve_category(),
        keypoints_3d=((position,), tuple(spokes)),
    )


def make_cup_object(rng: np.random.Generator, position) -> ObjectInstance:
    height = rng.uniform(0.08, 0.12)
    handle_radius = rng.uniform(0.05, 0.07)
    tilt = Rotation.from_rotvec([rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), 0.0]).as_matrix()
    axis = tilt @ np.array([0.0, 0.0, 1.0])
    handle_dir = tilt @ np.array([np.cos(rng.uniform(0, 2 * np.pi)), np.sin(rng.uniform(0, 2 * np.pi)), 0.0])
    bottom = np.asarray(position, dtype=float)
    top = bottom + height * axis
    handle = bottom + 0.5 * height * axis + handle_radius * handle_dir
    return ObjectInstance(
        category=cup_category(), keypoints_3d=((bottom,), (top,), (handle,))
    )


@dataclass(frozen=True)
class OrbitParams:
    """Anchor of a camera arc around the scene."""

    azimuth0: float
    elevation0: float
    radius0: float
    wobble: float
    azimuth_span: float = 1.5
    elevation_amplitude: float = 0.3

    @classmethod
    def sample(
        cls,
        rng: np.random.Generator,
        radius_range=(0.55, 0.75),
        elevation_range=(0.45, 0.75),
    ) -> "OrbitParams":
        return cls(
            azimuth0=rng.uniform(0, 2 * np.pi),
            elevation0=rng.uniform(*elevation_range),
            radius0=rng.uniform(*radius_range),
            wobble=rng.uniform(0.5, 1.5),
        )

    def view_direction(self, s: float) -> np.ndarray:
        """Unit vector from the target toward the eye at arc position s."""
        azimuth = self.azimuth0 + self.azimuth_span * s
        elevation = self.elevation0 + self.elevation_amplitude * np.sin(
            2.0 * np.pi * self.wobble * s
        )
        return np.array(
            [
                np.cos(elevation) * np.cos(azimuth),
                np.cos(elevation) * np.sin(azimuth),
                np.sin(elevation),
            ]
        )

    def mean_direction(self) -> np.ndarray:
        d = self.view_direction(0.5)
        return d / np.linalg.norm(d)


def make_orbit_trajectory(
    params: OrbitParams,
    rig: StereoRig,
    n_frames: int,
    target=(0.0, 0.0, 0.1),
) -> list[tuple[RigidTransform, RigidTransform]]:
    """Arc of stereo poses orbiting the scene target.

    The arc combines an azimuth sweep with elevation oscillation so the
    viewing axes vary enough for near-perpendicular labeling pairs, while
    keeping object depths roughly 0.4 to 1.0 m.
    """
    target = np.asarray(target, dtype=float)
    poses = []
    for i in range(n_frames):
        s = i / max(n_frames - 1, 1)
        radius = params.radius0 + 0.05 * np.sin(2.0 * np.pi * s)
        eye = target + radius * params.view_direction(s)
        left = look_at_pose(eye, target)
        poses.append((left, left.compose(rig.t_left_right)))
    return poses


def _scene_frames(fps: float, duration: float) -> int:
    return int(round(fps * duration))


def make_valve_scene(
    seed: int,
    fps: float = DEFAULT_FPS,
    duration: float = DEFAULT_DURATION,
    noise: NoiseModel | None = None,
) -> SyntheticScene:
    rng = np.random.default_rng(seed)
    rig = default_stereo_rig()
    params = OrbitParams.sample(rng)
    obj = make_valve_object(rng, facing=params.mean_direction())
    trajectory = make_orbit_trajectory(
        params, rig, _scene_frames(fps, duration), target=obj.center_3d
    )
    return SyntheticScene(
        category=valve_category(),
        objects=[obj],
        trajectory=trajectory,
        rig=rig,
        noise=noise or NoiseModel(),
        fps=fps,
    )


def make_cup_scene(
    seed: int,
    n_cups: int | None = None,
    fps: float = DEFAULT_FPS,
    duration: float = DEFAULT_DURATION,
    noise: NoiseModel | None = None,
) -> SyntheticScene:
    """One to four cups with centers far enough apart to stay separable."""
    rng = np.random.default_rng(seed)
    rig = default_stereo_rig()
    if n_cups is None:
        n_cups = int(rng.integers(1, 5))
    # rejection sampling with restart: a bad partial placement can block
    # the remaining area almost entirely at four cups
    positions: list[np.ndarray] = []
    attempts = 0
    while len(positions) < n_cups:
        candidate = np.array([rng.uniform(-0.20, 0.20), rng.uniform(-0.20, 0.20), 0.0])
        attempts += 1
        if all(np.linalg.norm(candidate - p) > 0.20 for p in positions):
            positions.append(candidate)
        elif attempts > 200:
            positions.clear()
            attempts = 0
    objects = [make_cup_object(rng, p) for p in positions]
    center = np.mean([o.center_3d for o in objects], axis=0)
    params = OrbitParams.sample(rng)
    trajectory = make_orbit_trajectory(
        params, rig, _scene_frames(fps, duration), target=center
    )
    return SyntheticScene(
        category=cup_category(),
        objects=objects,
        trajectory=trajectory,
        rig=rig,
        noise=noise or NoiseModel(),
        fps=fps,
    )


def perturb_poses(
    seq: SequenceDataset,
    rot_sigma: float,
    trans_sigma: float,
    seed: int,
) -> SequenceDataset:
    """Sequence with independently wobbled camera poses.

    Models calibration and synchronization error: the returned poses are
    what the system believes, while images (projections) follow the
    original ones.
    """
    rng = np.random.default_rng(seed)

    def wobble(pose: RigidTransform) -> RigidTransform:
        err = RigidTransform(
            Rotation.from_rotvec(rng.normal(0.0, rot_sigma, size=3)).as_matrix(),
            rng.normal(0.0, trans_sigma, size=3),
        )
        return err.compose(pose)

    frames = [
        Frame(
            timestamp=f.timestamp,
            left_pose=wobble(f.left_pose),
            right_pose=wobble(f.right_pose),
            left_image=f.left_image,
            right_image=f.right_image,
        )
        for f in seq.frames
    ]
    return SequenceDataset(
        sequence_id=seq.sequence_id,
        frames=frames,
        rig=seq.rig,
        labels=list(seq.labels),
        split=seq.split,
    )


def simulate_sequence(
    scene: SyntheticScene,
    seed: int,
    sequence_id: str = "seq",
    split: str = "train",
) -> SequenceDataset:
    """Materialize a pose-only sequence from a scene, deterministic by seed."""
    rng = np.random.default_rng(seed)
    frames = []
    for i, (left, right) in enumerate(scene.trajectory):
        if scene.noise.pose_rot_sigma > 0 or scene.noise.pose_trans_sigma > 0:
            wobble = RigidTransform(
                Rotation.from_rotvec(
                    rng.normal(0.0, scene.noise.pose_rot_sigma or 1e-12, size=3)
                ).as_matrix(),
                rng.normal(0.0, scene.noise.pose_trans_sigma or 1e-12, size=3),
            )
            left = wobble.compose(left)
            right = wobble.compose(right)
        frames.append(
            Frame(timestamp=i / scene.fps, left_pose=left, right_pose=right)
        )
    return SequenceDataset(
        sequence_id=sequence_id,
        frames=frames,
        rig=scene.rig,
        labels=list(scene.objects),
        split=split,
    )
