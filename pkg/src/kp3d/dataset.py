"""Sequence datasets: pose-stamped stereo frames, 3D labels, propagation.

Labels are stored exclusively as 3D points in the robot base frame; every
2D label is derived by backprojection and never authoritative. A sequence
directory holds:

    calibration.yaml   stereo intrinsics + left-to-right + hand-eye
    poses.txt          one line per frame: timestamp, left pose, right pose
                       (rotation row-major, then translation), image refs
    labels.json        labeled object instances as typed 3D points
    targets/ + manifest.json   rendered target maps (after generation)

Poses are camera-in-base and expected to be time-associated upstream;
converters from robot logs are an extension point, not part of the
package.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from kp3d.calibration import CalibrationData, load_calibration, save_calibration
from kp3d.config import Config
from kp3d.errors import DegenerateGeometry
from kp3d.geometry import (
    CameraIntrinsics,
    ProjectionMatrix,
    RigidTransform,
    StereoRig,
    project,
    triangulate_dlt,
)
from kp3d import tensorio
from kp3d.targets import (
    CategorySpec,
    FrameMapping,
    ProjectedObject,
    render_target_maps,
)

logger = logging.getLogger(__name__)

POSES_VERSION = 1
LABELS_VERSION = 1
MANIFEST_VERSION = 1

SPLITS = ("train", "test")


@dataclass(frozen=True)
class Frame:
    timestamp: float
    left_pose: RigidTransform
    right_pose: RigidTransform
    left_image: str | None = None
    right_image: str | None = None


@dataclass(frozen=True)
class ObjectInstance:
    """One labeled object: per-type 3D keypoints in the base frame."""

    category: CategorySpec
    keypoints_3d: tuple[tuple[np.ndarray, ...], ...]

    def __post_init__(self):
        if len(self.keypoints_3d) != self.category.num_types:
            raise ValueError(
                f"expected {self.category.num_types} keypoint type lists, "
                f"got {len(self.keypoints_3d)}"
            )
        frozen = []
        total = 0
        for t, points in enumerate(self.keypoints_3d):
            pts = tuple(np.asarray(p, dtype=float).reshape(3) for p in points)
            for p in pts:
                if not np.all(np.isfinite(p)):
                    raise ValueError("keypoints must be finite")
            if not self.category.ambiguous[t] and len(pts) > 1:
                raise ValueError(
                    f"type '{self.category.keypoint_types[t]}' is not ambiguous "
                    f"but has {len(pts)} keypoints"
                )
            total += len(pts)
            frozen.append(pts)
        if total == 0:
            raise ValueError("object instance needs at least one keypoint")
        object.__setattr__(self, "keypoints_3d", tuple(frozen))

    @property
    def center_3d(self) -> np.ndarray:
        """Mean of all labeled keypoints; recomputed, never stored."""
        pts = [p for points in self.keypoints_3d for p in points]
        return np.mean(pts, axis=0)

    def all_keypoints(self) -> list[tuple[int, np.ndarray]]:
        return [(t, p) for t, points in enumerate(self.keypoints_3d) for p in points]


@dataclass
class SequenceDataset:
    sequence_id: str
    frames: list[Frame]
    rig: StereoRig
    labels: list[ObjectInstance]
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")
        ts = [f.timestamp for f in self.frames]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("frame timestamps must be strictly increasing")


def optical_axis(pose: RigidTransform) -> np.ndarray:
    """Camera viewing direction (+z column) in the base frame."""
    return pose.rotation[:, 2]


def _candidate_indices(n: int, max_candidates: int) -> np.ndarray:
    if n <= max_candidates:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, max_candidates).round().astype(int))


def select_label_views(seq: SequenceDataset, max_candidates: int = 200) -> tuple[int, int]:
    """Frame pair whose left-camera viewing axes are closest to perpendicular.

    Exhaustive over at most max_candidates evenly subsampled frames.
    """
    if len(seq.frames) < 2:
        raise ValueError("need at least two frames to select a labeling pair")
    idx = _candidate_indices(len(seq.frames), max_candidates)
    axes = np.array([optical_axis(seq.frames[i].left_pose) for i in idx])
    dots = np.abs(axes @ axes.T)
    iu = np.triu_indices(len(idx), k=1)
    best = int(np.argmin(dots[iu]))
    a, b = int(iu[0][best]), int(iu[1][best])
    if dots[a, b] > 0.99:
        logger.warning(
            "best labeling pair is nearly parallel (|cos| = %.4f); "
            "triangulation will be poorly conditioned",
            dots[a, b],
        )
    return int(idx[a]), int(idx[b])


def rank_partners(seq: SequenceDataset, fixed: int, max_candidates: int = 200) -> list[int]:
    """Frames ordered by viewing-axis orthogonality against a fixed frame."""
    idx = _candidate_indices(len(seq.frames), max_candidates)
    fixed_axis = optical_axis(seq.frames[fixed].left_pose)
    scored = [
        (abs(float(optical_axis(seq.frames[i].left_pose) @ fixed_axis)), int(i))
        for i in idx
        if i != fixed
    ]
    scored.sort()
    return [i for _, i in scored]


@dataclass
class FramePropagation:
    """Backprojected 2D labels for one frame's left camera."""

    positions: np.ndarray  # (n_keypoints, 2) full-image px, NaN when invisible
    visible: np.ndarray  # (n_keypoints,) bool


@dataclass
class PropagationResult:
    instance: ObjectInstance
    click_types: list[int]
    residuals_a: list[float]  # px, reprojection error in the labeled views
    residuals_b: list[float]
    per_frame: list[FramePropagation]


def _click_instance(category: CategorySpec, click_types, points) -> ObjectInstance:
    per_type: list[list[np.ndarray]] = [[] for _ in range(category.num_types)]
    for t, p in zip(click_types, points):
        per_type[t].append(p)
    return ObjectInstance(category=category, keypoints_3d=tuple(tuple(v) for v in per_type))


def propagate_labels(
    seq: SequenceDataset,
    frame_a: int,
    frame_b: int,
    clicks_a,
    clicks_b,
    category: CategorySpec,
    click_types,
) -> PropagationResult:
    """Triangulate clicked keypoints from two views and backproject everywhere.

    Clicks are (x, y) full-image pixels in the left camera of frames a and
    b, in the same keypoint order for both views; click_types maps each
    click to its keypoint type index.
    """
    clicks_a = np.asarray(clicks_a, dtype=float).reshape(-1, 2)
    clicks_b = np.asarray(clicks_b, dtype=float).reshape(-1, 2)
    click_types = [int(t) for t in click_types]
    if len(clicks_a) != len(clicks_b) or len(clicks_a) != len(click_types):
        raise ValueError(
            f"click lists disagree: {len(clicks_a)} vs {len(clicks_b)} clicks, "
            f"{len(click_types)} types"
        )
    if any(not 0 <= t < category.num_types for t in click_types):
        raise ValueError("click type index out of range")
    P_a = ProjectionMatrix.from_camera(seq.rig.left, seq.frames[frame_a].left_pose)
    P_b = ProjectionMatrix.from_camera(seq.rig.left, seq.frames[frame_b].left_pose)
    points, residuals_a, residuals_b = [], [], []
    for k, (xa, xb) in enumerate(zip(clicks_a, clicks_b)):
        try:
            X = triangulate_dlt([(P_a, xa), (P_b, xb)])
        except DegenerateGeometry as e:
            raise DegenerateGeometry(f"keypoint {k}: {e}") from e
        points.append(X)
        ra = project(P_a, X)
        rb = project(P_b, X)
        residuals_a.append(float(np.linalg.norm(ra - xa)) if ra is not None else float("inf"))
        residuals_b.append(float(np.linalg.norm(rb - xb)) if rb is not None else float("inf"))
    instance = _click_instance(category, click_types, points)
    per_frame = []
    for frame in seq.frames:
        P = ProjectionMatrix.from_camera(seq.rig.left, frame.left_pose)
        positions = np.full((len(points), 2), np.nan)
        visible = np.zeros(len(points), dtype=bool)
        for k, X in enumerate(points):
            uv = project(P, X)
            if uv is not None and seq.rig.left.contains(uv):
                positions[k] = uv
                visible[k] = True
        per_frame.append(FramePropagation(positions=positions, visible=visible))
    return PropagationResult(
        instance=instance,
        click_types=click_types,
        residuals_a=residuals_a,
        residuals_b=residuals_b,
        per_frame=per_frame,
    )


def project_instances(
    labels,
    intrinsics: CameraIntrinsics,
    camera_in_base: RigidTransform,
    mapping: FrameMapping,
    pixel_noise: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[ProjectedObject]:
    """Project labeled instances into one camera view, in output-map coords.

    Keypoints behind the camera are dropped; optional Gaussian pixel noise
    (full-image px) perturbs projections before the coordinate mapping.
    Objects whose center is behind the camera are skipped entirely.
    """
    P = ProjectionMatrix.from_camera(intrinsics, camera_in_base)
    base_in_camera = camera_in_base.inverse()
    out = []
    for oi, inst in enumerate(labels):
        center_uv = project(P, inst.center_3d)
        if center_uv is None:
            logger.warning("object %d center is behind the camera; skipped", oi)
            continue
        if pixel_noise > 0:
            center_uv = center_uv + rng.normal(0.0, pixel_noise, size=2)
        center_z = float(base_in_camera.apply(inst.center_3d)[2])
        kp_out, z_out = [], []
        for points in inst.keypoints_3d:
            kps_t, zs_t = [], []
            for X in points:
                uv = project(P, X)
                if uv is None:
                    continue
                if pixel_noise > 0:
                    uv = uv + rng.normal(0.0, pixel_noise, size=2)
                kps_t.append(tuple(mapping.to_output(uv)))
                zs_t.append(float(base_in_camera.apply(X)[2]))
            kp_out.append(tuple(kps_t))
            z_out.append(tuple(zs_t))
        out.append(
            ProjectedObject(
                keypoints=tuple(kp_out),
                depths=tuple(z_out),
                center=tuple(mapping.to_output(center_uv)),
                center_depth=center_z,
            )
        )
    return out


def frame_rng(seed: int, sequence_id: str, frame: int, camera: str) -> np.random.Generator:
    """Deterministic per-frame generator, stable across processes."""
    digest = hashlib.sha256(f"{seed}/{sequence_id}/{frame}/{camera}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def render_frame_maps(
    seq: SequenceDataset,
    frame_index: int,
    camera: str,
    spec: CategorySpec,
    config: Config,
):
    """Render target maps for one frame of one camera ('left' or 'right')."""
    frame = seq.frames[frame_index]
    if camera == "left":
        intrinsics, pose = seq.rig.left, frame.left_pose
    elif camera == "right":
        intrinsics, pose = seq.rig.right, frame.right_pose
    else:
        raise ValueError(f"camera must be 'left' or 'right', got {camera!r}")
    mapping = FrameMapping.center_crop(intrinsics.width, intrinsics.height, config.output_size)
    rng = None
    if config.pixel_noise > 0:
        rng = frame_rng(config.seed, seq.sequence_id, frame_index, camera)
    objects = project_instances(
        seq.labels, intrinsics, pose, mapping, pixel_noise=config.pixel_noise, rng=rng
    )
    maps = render_target_maps(
        objects,
        spec,
        (config.output_size, config.output_size),
        sigma=config.sigma,
        depth_radius=config.depth_radius,
    )
    return maps, mapping


def generate_dataset(seq: SequenceDataset, out_dir, spec: CategorySpec, config: Config) -> Path:
    """Render and write target maps for every frame and camera.

    Writes targets/<frame>.<camera>.<kind>.kpt plus manifest.json and
    returns the manifest path. Regenerating with identical inputs and
    config produces byte-identical files.
    """
    out_dir = Path(out_dir)
    targets_dir = out_dir / "targets"
    targets_dir.mkdir(parents=True, exist_ok=True)
    if not seq.labels:
        logger.warning(
            "sequence %s has no labels; generating all-zero maps", seq.sequence_id
        )
    frames_entry = []
    mappings = {}
    for i in range(len(seq.frames)):
        entry = {"index": i, "timestamp": seq.frames[i].timestamp, "files": {}}
        for camera in ("left", "right"):
            try:
                maps, mapping = render_frame_maps(seq, i, camera, spec, config)
            except OSError as e:
                raise OSError(f"frame {i} ({camera}): {e}") from e
            mappings[camera] = mapping
            files = {}
            for kind_label, array, code in [
                ("heatmap", maps.heatmaps, tensorio.KIND_HEATMAP),
                ("center", maps.center_field, tensorio.KIND_CENTER_FIELD),
                ("depth", maps.depth, tensorio.KIND_DEPTH),
            ]:
                name = f"{i:06d}.{camera}.{kind_label}.kpt"
                try:
                    tensorio.write_map(targets_dir / name, array, code)
                except OSError as e:
                    raise OSError(f"frame {i} ({camera}, {kind_label}): {e}") from e
                files[kind_label] = f"targets/{name}"
            entry["files"][camera] = files
        frames_entry.append(entry)
    manifest = {
        "version": MANIFEST_VERSION,
        "sequence_id": seq.sequence_id,
        "split": seq.split,
        "category": spec.to_dict(),
        "stamp": config.stamp(),
        "mapping": {cam: m.to_dict() for cam, m in mappings.items()},
        "frames": frames_entry,
    }
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    return manifest_path


# ---------------------------------------------------------------------------
# sequence directory I/O


def _format_pose(pose: RigidTransform) -> str:
    values = list(pose.rotation.ravel()) + list(pose.translation)
    return " ".join(f"{v:.17g}" for v in values)


def _parse_pose(tokens) -> RigidTransform:
    values = np.array([float(t) for t in tokens])
    return RigidTransform(values[:9].reshape(3, 3), values[9:12])


def save_sequence(seq: SequenceDataset, directory, hand_eye: RigidTransform | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_calibration(
        directory / "calibration.yaml",
        CalibrationData(rig=seq.rig, hand_eye=hand_eye or RigidTransform.identity()),
    )
    lines = [
        f"# kp3d-poses v{POSES_VERSION}",
        f"# sequence {seq.sequence_id}",
        f"# split {seq.split}",
        "# columns: timestamp left_R(9 row-major) left_t(3) right_R(9) right_t(3) left_image right_image",
    ]
    for f in seq.frames:
        lines.append(
            " ".join(
                [
                    f"{f.timestamp:.17g}",
                    _format_pose(f.left_pose),
                    _format_pose(f.right_pose),
                    f.left_image or "-",
                    f.right_image or "-",
                ]
            )
        )
    (directory / "poses.txt").write_text("\n".join(lines) + "\n")
    save_labels(directory / "labels.json", seq.labels)


def save_labels(path, labels) -> None:
    doc = {
        "version": LABELS_VERSION,
        "objects": [
            {
                "category": inst.category.to_dict(),
                "keypoints": {
                    name: [[float(v) for v in p] for p in points]
                    for name, points in zip(inst.category.keypoint_types, inst.keypoints_3d)
                },
            }
            for inst in labels
        ],
    }
    path = Path(path)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as f:
        json.dump(doc, f, sort_keys=True, indent=1)
        f.write("\n")
    tmp.replace(path)


def load_labels(path) -> list[ObjectInstance]:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("version") != LABELS_VERSION:
        raise ValueError(f"{path}: unsupported labels version {doc.get('version')!r}")
    labels = []
    for obj in doc["objects"]:
        category = CategorySpec.from_dict(obj["category"])
        keypoints = tuple(
            tuple(np.asarray(p, dtype=float) for p in obj["keypoints"].get(name, []))
            for name in category.keypoint_types
        )
        labels.append(ObjectInstance(category=category, keypoints_3d=keypoints))
    return labels


def load_sequence(directory) -> SequenceDataset:
    directory = Path(directory)
    calib = load_calibration(directory / "calibration.yaml")
    sequence_id = directory.name
    split = "train"
    frames = []
    with open(directory / "poses.txt") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts[:1] == ["sequence"] and len(parts) > 1:
                    sequence_id = parts[1]
                elif parts[:1] == ["split"] and len(parts) > 1:
                    split = parts[1]
                elif parts[:1] == ["kp3d-poses"] and parts[1:] != [f"v{POSES_VERSION}"]:
                    raise ValueError(f"poses.txt: unsupported version {parts[1:]}")
                continue
            tokens = line.split()
            if len(tokens) != 27:
                raise ValueError(f"poses.txt line {lineno}: expected 27 fields, got {len(tokens)}")
            frames.append(
                Frame(
                    timestamp=float(tokens[0]),
                    left_pose=_parse_pose(tokens[1:13]),
                    right_pose=_parse_pose(tokens[13:25]),
                    left_image=None if tokens[25] == "-" else tokens[25],
                    right_image=None if tokens[26] == "-" else tokens[26],
                )
            )
    labels_path = directory / "labels.json"
    labels = load_labels(labels_path) if labels_path.exists() else []
    return SequenceDataset(
        sequence_id=sequence_id,
        frames=frames,
        rig=calib.rig,
        labels=labels,
        split=split,
    )
