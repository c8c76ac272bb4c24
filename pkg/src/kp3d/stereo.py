"""Stereo tracking: epipolar left-right association and DLT lifting.

Per frame: extract keypoints in both views, group them into objects via
center votes, pair objects across views by their center detections, match
member keypoints inside each object pair with the epipolar gate, and
triangulate every match into the base frame.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from kp3d.config import Config
from kp3d.errors import DegenerateGeometry
from kp3d.extraction import (
    Detection2D,
    TrackedObject2D,
    associate_to_objects,
    extract_keypoints,
)
from kp3d.geometry import (
    ProjectionMatrix,
    RigidTransform,
    StereoRig,
    epipolar_residual,
    fundamental_matrix,
    project,
    triangulate_dlt,
)
from kp3d.targets import CategorySpec, FrameMapping, TargetMaps

logger = logging.getLogger(__name__)

DEFAULT_EPIPOLAR_CUTOFF = 32.0
DEFAULT_REFERENCE_DEPTH = 0.6  # meters in front of the left camera


@dataclass(frozen=True)
class StereoMatch:
    left: Detection2D
    right: Detection2D
    epipolar_residual: float


@dataclass(frozen=True)
class Keypoint3D:
    type_index: int
    position: np.ndarray  # (3,) base frame, meters
    provenance: str  # "stereo" | "mono"


@dataclass(frozen=True)
class TrackedObject3D:
    center: np.ndarray  # (3,) base frame, meters
    keypoints: tuple[Keypoint3D, ...]


def disparity_shift(
    rig: StereoRig, reference_depth: float = DEFAULT_REFERENCE_DEPTH
) -> np.ndarray | None:
    """Pixel shift between the two views of an on-axis point at a fixed depth.

    Projects a point reference_depth meters in front of the left camera
    center into both images and returns right - left in pixels. None when
    the point is behind or outside the right image, in which case callers
    fall back to residual-only selection.
    """
    ref_left = np.array([0.0, 0.0, reference_depth])
    left_uv = np.array(
        [
            rig.left.fx * ref_left[0] / ref_left[2] + rig.left.cx,
            rig.left.fy * ref_left[1] / ref_left[2] + rig.left.cy,
        ]
    )
    ref_right = rig.t_left_right.inverse().apply(ref_left)
    if ref_right[2] <= 0:
        return None
    right_uv = np.array(
        [
            rig.right.fx * ref_right[0] / ref_right[2] + rig.right.cx,
            rig.right.fy * ref_right[1] / ref_right[2] + rig.right.cy,
        ]
    )
    if not rig.right.contains(right_uv):
        return None
    return right_uv - left_uv


def match_left_right(
    left: list[Detection2D],
    right: list[Detection2D],
    F: np.ndarray,
    rig: StereoRig,
    cutoff: float = DEFAULT_EPIPOLAR_CUTOFF,
    reference_depth: float = DEFAULT_REFERENCE_DEPTH,
) -> tuple[list[StereoMatch], list[Detection2D], list[Detection2D]]:
    """Associate detections across the two views.

    For each left detection the candidates are same-type right detections
    with |x'^T F x| below the cutoff (full-image pixel coordinates). When
    several candidates survive, the left point is shifted by the disparity
    of a point reference_depth in front of the left camera and the nearest
    candidate to the shifted point wins. Conflicting picks are resolved
    one-to-one greedily by ascending residual.

    Returns (matches, unmatched_left, unmatched_right).
    """
    shift = disparity_shift(rig, reference_depth)
    if shift is None:
        logger.warning(
            "disparity-shift reference point not visible in the right view; "
            "ties fall back to residual order"
        )
    picks = []
    for li, ldet in enumerate(left):
        candidates = []
        for ri, rdet in enumerate(right):
            if rdet.type_index != ldet.type_index:
                continue
            res = abs(epipolar_residual(F, ldet.image_position, rdet.image_position))
            if res < cutoff:
                candidates.append((ri, res))
        if not candidates:
            continue
        if len(candidates) == 1 or shift is None:
            ri, res = min(candidates, key=lambda c: c[1])
        else:
            expected = np.asarray(ldet.image_position) + shift
            ri, res = min(
                candidates,
                key=lambda c: np.linalg.norm(
                    np.asarray(right[c[0]].image_position) - expected
                ),
            )
        picks.append((res, li, ri))
    picks.sort(key=lambda p: (p[0], p[1], p[2]))
    matches = []
    used_left: set[int] = set()
    used_right: set[int] = set()
    for res, li, ri in picks:
        if li in used_left or ri in used_right:
            continue
        used_left.add(li)
        used_right.add(ri)
        matches.append(
            StereoMatch(left=left[li], right=right[ri], epipolar_residual=res)
        )
    unmatched_left = [d for i, d in enumerate(left) if i not in used_left]
    unmatched_right = [d for i, d in enumerate(right) if i not in used_right]
    return matches, unmatched_left, unmatched_right


def lift_stereo(
    matches: list[StereoMatch],
    left_P: ProjectionMatrix,
    right_P: ProjectionMatrix,
) -> list[np.ndarray]:
    """Triangulate every match with the same DLT used at labeling time."""
    return [
        triangulate_dlt(
            [(left_P, m.left.image_position), (right_P, m.right.image_position)]
        )
        for m in matches
    ]


def _pair_objects(
    left_objs: list[TrackedObject2D],
    right_objs: list[TrackedObject2D],
    F: np.ndarray,
    rig: StereoRig,
    cutoff: float,
    reference_depth: float,
) -> list[tuple[TrackedObject2D, TrackedObject2D, float]]:
    center_matches, _, _ = match_left_right(
        [o.center for o in left_objs],
        [o.center for o in right_objs],
        F,
        rig,
        cutoff,
        reference_depth,
    )
    by_center_l = {id(o.center): o for o in left_objs}
    by_center_r = {id(o.center): o for o in right_objs}
    return [
        (by_center_l[id(m.left)], by_center_r[id(m.right)], m.epipolar_residual)
        for m in center_matches
    ]


def run_stereo_frame(
    left_maps: TargetMaps,
    right_maps: TargetMaps,
    rig: StereoRig,
    left_pose: RigidTransform,
    right_pose: RigidTransform,
    left_mapping: FrameMapping,
    right_mapping: FrameMapping,
    spec: CategorySpec,
    config: Config | None = None,
    timings: dict | None = None,
) -> list[TrackedObject3D]:
    """Full stereo pipeline for one frame; returns base-frame objects.

    Partial objects are allowed: keypoints without a stereo partner are
    dropped from the 3D output. When a timings dict is supplied, the
    wall-clock seconds of each stage are accumulated into it.
    """
    config = config or Config()

    def tick(stage, start):
        if timings is not None:
            timings[stage] = timings.get(stage, 0.0) + (time.perf_counter() - start)

    t = time.perf_counter()
    left_dets = extract_keypoints(
        left_maps.heatmaps, left_maps.center_field, left_mapping, config.detection_threshold
    )
    right_dets = extract_keypoints(
        right_maps.heatmaps, right_maps.center_field, right_mapping, config.detection_threshold
    )
    tick("extraction", t)

    t = time.perf_counter()
    left_objs, _ = associate_to_objects(
        left_dets, spec.center_channel, config.center_gate_radius
    )
    right_objs, _ = associate_to_objects(
        right_dets, spec.center_channel, config.center_gate_radius
    )
    tick("object_association", t)

    t = time.perf_counter()
    F = fundamental_matrix(rig)
    pairs = _pair_objects(
        left_objs, right_objs, F, rig, config.epipolar_cutoff, config.match_reference_depth
    )
    matched: list[tuple[StereoMatch, ...]] = []
    center_matches: list[StereoMatch] = []
    for lobj, robj, center_res in pairs:
        kp_matches, _, _ = match_left_right(
            list(lobj.keypoints),
            list(robj.keypoints),
            F,
            rig,
            config.epipolar_cutoff,
            config.match_reference_depth,
        )
        center_matches.append(
            StereoMatch(left=lobj.center, right=robj.center, epipolar_residual=center_res)
        )
        matched.append(tuple(kp_matches))
    tick("left_right_association", t)

    t = time.perf_counter()
    left_P = ProjectionMatrix.from_camera(rig.left, left_pose)
    right_P = ProjectionMatrix.from_camera(rig.right, right_pose)
    base_in_left = left_pose.inverse()
    objects = []
    for center_match, kp_matches in zip(center_matches, matched):
        try:
            center_3d = lift_stereo([center_match], left_P, right_P)[0]
        except DegenerateGeometry:
            logger.warning("degenerate center triangulation; object dropped")
            continue
        keypoints = []
        for m in kp_matches:
            try:
                X = lift_stereo([m], left_P, right_P)[0]
            except DegenerateGeometry:
                logger.warning("degenerate keypoint triangulation; keypoint dropped")
                continue
            if base_in_left.apply(X)[2] <= 0:
                logger.warning("triangulated keypoint behind the left camera; dropped")
                continue
            keypoints.append(
                Keypoint3D(type_index=m.left.type_index, position=X, provenance="stereo")
            )
        objects.append(TrackedObject3D(center=center_3d, keypoints=tuple(keypoints)))
    tick("triangulation", t)
    return objects
