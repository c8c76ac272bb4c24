"""Calibration file loading and saving.

The calibration file is YAML with one mapping per camera plus the
left-to-right and hand-eye (wrist-to-camera) transforms:

    version: 1
    left:  {fx, fy, cx, cy, width, height, distortion: [...]}
    right: {fx, fy, cx, cy, width, height, distortion: [...]}
    left_to_right: {rotation: 3x3 row-major, translation: [x, y, z]}
    hand_eye:      {rotation: 3x3 row-major, translation: [x, y, z]}

Images are assumed undistorted upstream: any nonzero distortion
coefficient is rejected. Calibration computation itself is out of scope;
this module only consumes its results.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from kp3d.errors import CalibrationError
from kp3d.geometry import CameraIntrinsics, RigidTransform, StereoRig

FORMAT_VERSION = 1


@dataclass(frozen=True)
class CalibrationData:
    rig: StereoRig
    hand_eye: RigidTransform


def _parse_camera(node: dict, name: str) -> CameraIntrinsics:
    try:
        distortion = np.asarray(node.get("distortion", []), dtype=float)
        if distortion.size and np.any(distortion != 0.0):
            raise CalibrationError(
                f"camera '{name}' has nonzero distortion coefficients "
                f"{distortion.tolist()}; undistort images upstream first"
            )
        return CameraIntrinsics(
            fx=float(node["fx"]),
            fy=float(node["fy"]),
            cx=float(node["cx"]),
            cy=float(node["cy"]),
            width=int(node["width"]),
            height=int(node["height"]),
        )
    except KeyError as e:
        raise CalibrationError(f"camera '{name}' is missing field {e}") from e
    except ValueError as e:
        raise CalibrationError(f"camera '{name}': {e}") from e


def _parse_transform(node: dict, name: str) -> RigidTransform:
    try:
        return RigidTransform(
            np.asarray(node["rotation"], dtype=float),
            np.asarray(node["translation"], dtype=float),
        )
    except KeyError as e:
        raise CalibrationError(f"transform '{name}' is missing field {e}") from e
    except ValueError as e:
        raise CalibrationError(f"transform '{name}': {e}") from e


def load_calibration(path) -> CalibrationData:
    path = Path(path)
    with open(path) as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, dict):
        raise CalibrationError(f"{path}: expected a YAML mapping")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise CalibrationError(f"{path}: unsupported calibration version {version!r}")
    for key in ("left", "right", "left_to_right", "hand_eye"):
        if key not in doc:
            raise CalibrationError(f"{path}: missing section '{key}'")
    rig = StereoRig(
        left=_parse_camera(doc["left"], "left"),
        right=_parse_camera(doc["right"], "right"),
        t_left_right=_parse_transform(doc["left_to_right"], "left_to_right"),
    )
    return CalibrationData(rig=rig, hand_eye=_parse_transform(doc["hand_eye"], "hand_eye"))


def _camera_dict(cam: CameraIntrinsics) -> dict:
    return {
        "fx": float(cam.fx),
        "fy": float(cam.fy),
        "cx": float(cam.cx),
        "cy": float(cam.cy),
        "width": int(cam.width),
        "height": int(cam.height),
        "distortion": [0.0, 0.0, 0.0, 0.0, 0.0],
    }


def _transform_dict(t: RigidTransform) -> dict:
    return {
        "rotation": [[float(v) for v in row] for row in t.rotation],
        "translation": [float(v) for v in t.translation],
    }


def save_calibration(path, data: CalibrationData) -> None:
    doc = {
        "version": FORMAT_VERSION,
        "left": _camera_dict(data.rig.left),
        "right": _camera_dict(data.rig.right),
        "left_to_right": _transform_dict(data.rig.t_left_right),
        "hand_eye": _transform_dict(data.hand_eye),
    }
    with open(path, "w") as f:
        yaml.safe_dump(doc, f, sort_keys=True)
