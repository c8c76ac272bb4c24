"""Monocular tracking: lift single-view detections with predicted depth.

The depth map carries a camera-frame z estimate around every keypoint;
the 3D point is the backprojected pixel ray scaled by that estimate,
X = K^-1 x zhat, expressed in the base frame through the camera pose.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from kp3d.config import Config
from kp3d.errors import NoDepth
from kp3d.extraction import Detection2D, associate_to_objects, extract_keypoints
from kp3d.geometry import CameraIntrinsics, RigidTransform
from kp3d.stereo import Keypoint3D, TrackedObject3D
from kp3d.targets import CategorySpec, FrameMapping, TargetMaps

logger = logging.getLogger(__name__)

_WINDOW_RADIUS = 2  # same 5x5 window as the subpixel peak estimator


@dataclass(frozen=True)
class DepthReadout:
    z_hat: float  # meters, camera frame of the processed view
    support_px: int  # pixels with nonzero depth that entered the mean


def read_depth(
    depth_map: np.ndarray, heatmap: np.ndarray, det: Detection2D
) -> DepthReadout:
    """Heatmap-weighted mean of nonzero depth values around a detection.

    Uses the 5x5 window at the detection's peak pixel on the detection's
    channel, clamped at borders.

    Raises:
        NoDepth: no usable depth pixels in the window; the detection stays
            2D-only.
    """
    depth_map = np.asarray(depth_map, dtype=float)
    heatmap = np.asarray(heatmap, dtype=float)
    if depth_map.shape != heatmap.shape:
        raise ValueError(
            f"depth map shape {depth_map.shape} does not match heatmaps {heatmap.shape}"
        )
    c = det.type_index
    x, y = det.peak
    h, w = depth_map.shape[1:]
    i_lo, i_hi = max(0, y - _WINDOW_RADIUS), min(h, y + _WINDOW_RADIUS + 1)
    j_lo, j_hi = max(0, x - _WINDOW_RADIUS), min(w, x + _WINDOW_RADIUS + 1)
    z_win = depth_map[c, i_lo:i_hi, j_lo:j_hi]
    w_win = heatmap[c, i_lo:i_hi, j_lo:j_hi]
    valid = z_win > 0
    weight = float(w_win[valid].sum())
    if not valid.any() or weight <= 0:
        raise NoDepth(f"no depth support around detection at {det.peak} on channel {c}")
    z_hat = float((w_win[valid] * z_win[valid]).sum() / weight)
    return DepthReadout(z_hat=z_hat, support_px=int(valid.sum()))


def lift_mono(
    K: CameraIntrinsics,
    xy_image,
    z_hat: float,
    camera_in_base: RigidTransform,
) -> np.ndarray:
    """Lift a full-image pixel with known depth to a base-frame 3D point."""
    if z_hat <= 0:
        raise ValueError(f"depth must be positive, got {z_hat}")
    x, y = float(xy_image[0]), float(xy_image[1])
    camera_point = np.array(
        [(x - K.cx) / K.fx * z_hat, (y - K.cy) / K.fy * z_hat, z_hat]
    )
    return camera_in_base.apply(camera_point)


def run_mono_frame(
    maps: TargetMaps,
    intrinsics: CameraIntrinsics,
    camera_in_base: RigidTransform,
    mapping: FrameMapping,
    spec: CategorySpec,
    config: Config | None = None,
) -> list[TrackedObject3D]:
    """Single-view pipeline for one frame; returns base-frame objects.

    Detections without depth support are dropped from the 3D output;
    an object whose center cannot be lifted is dropped entirely.
    """
    config = config or Config()
    detections = extract_keypoints(
        maps.heatmaps, maps.center_field, mapping, config.detection_threshold
    )
    objects2d, _ = associate_to_objects(
        detections, spec.center_channel, config.center_gate_radius
    )
    objects = []
    for obj in objects2d:
        try:
            center_z = read_depth(maps.depth, maps.heatmaps, obj.center)
        except NoDepth:
            logger.warning("object center has no depth support; object dropped")
            continue
        center_3d = lift_mono(
            intrinsics, obj.center.image_position, center_z.z_hat, camera_in_base
        )
        keypoints = []
        for det in obj.keypoints:
            try:
                readout = read_depth(maps.depth, maps.heatmaps, det)
            except NoDepth:
                logger.warning(
                    "keypoint at %s has no depth support; kept 2D-only", det.peak
                )
                continue
            keypoints.append(
                Keypoint3D(
                    type_index=det.type_index,
                    position=lift_mono(
                        intrinsics, det.image_position, readout.z_hat, camera_in_base
                    ),
                    provenance="mono",
                )
            )
        objects.append(TrackedObject3D(center=center_3d, keypoints=tuple(keypoints)))
    return objects
