"""Ground-truth training map rendering at output-map resolution.

Renders, per frame and camera, the three supervision targets used by the
tracking pipelines: per-type keypoint heatmaps (plus one appended center
channel), 2D center vector fields, and per-keypoint depth maps.

Map arrays are indexed [channel, row, col]; 2D positions are (x, y) with
x along columns. The center channel is always the last channel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from kp3d.errors import InvalidDepth, MissingAssociation

logger = logging.getLogger(__name__)

# Gaussian bumps are truncated to zero beyond this many sigmas; "nonzero
# heatmap value" everywhere in the toolkit means inside this support.
TRUNCATION_SIGMAS = 3.0

DEFAULT_OUTPUT_SIZE = 64


@dataclass(frozen=True)
class CategorySpec:
    """Keypoint layout of one object category.

    `ambiguous` marks types where a single object carries several
    interchangeable keypoints that share one heatmap channel. Map channel
    count is len(keypoint_types) + 1: the extra channel is the object
    center keypoint appended by the labeling stage.
    """

    name: str
    keypoint_types: tuple[str, ...]
    ambiguous: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "keypoint_types", tuple(self.keypoint_types))
        object.__setattr__(self, "ambiguous", tuple(bool(a) for a in self.ambiguous))
        if len(self.keypoint_types) < 1:
            raise ValueError("category needs at least one keypoint type")
        if len(self.ambiguous) != len(self.keypoint_types):
            raise ValueError("ambiguous flags must match keypoint types")
        if len(set(self.keypoint_types)) != len(self.keypoint_types):
            raise ValueError("keypoint type names must be unique")

    @property
    def num_types(self) -> int:
        return len(self.keypoint_types)

    @property
    def channel_count(self) -> int:
        return len(self.keypoint_types) + 1

    @property
    def center_channel(self) -> int:
        return len(self.keypoint_types)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "keypoints": [
                {"name": n, "ambiguous": a}
                for n, a in zip(self.keypoint_types, self.ambiguous)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CategorySpec":
        kps = doc["keypoints"]
        return cls(
            name=doc["name"],
            keypoint_types=tuple(k["name"] for k in kps),
            ambiguous=tuple(bool(k.get("ambiguous", False)) for k in kps),
        )


def load_category(path) -> CategorySpec:
    """Read a category spec from a YAML file (same schema as to_dict)."""
    import yaml

    with open(path) as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: expected a YAML mapping")
    return CategorySpec.from_dict(doc)


@dataclass(frozen=True)
class FrameMapping:
    """Affine mapping between full-image pixels and output-map pixels.

    Composes the preprocessing chain crop -> network input -> output map
    into a single crop + per-axis scale. All fields are (x, y) pairs.
    """

    crop_offset: tuple[float, float]
    crop_size: tuple[float, float]
    output_size: tuple[int, int] = (DEFAULT_OUTPUT_SIZE, DEFAULT_OUTPUT_SIZE)

    def __post_init__(self):
        if self.crop_size[0] <= 0 or self.crop_size[1] <= 0:
            raise ValueError("crop size must be positive")

    @classmethod
    def center_crop(cls, width: int, height: int, output_size: int = DEFAULT_OUTPUT_SIZE) -> "FrameMapping":
        """Largest centered square crop of a width x height image."""
        side = min(width, height)
        return cls(
            crop_offset=((width - side) / 2.0, (height - side) / 2.0),
            crop_size=(float(side), float(side)),
            output_size=(output_size, output_size),
        )

    @property
    def scale(self) -> tuple[float, float]:
        return (
            self.output_size[0] / self.crop_size[0],
            self.output_size[1] / self.crop_size[1],
        )

    def to_output(self, xy) -> np.ndarray:
        """Full-image pixels to output-map pixels."""
        sx, sy = self.scale
        return np.array(
            [
                (float(xy[0]) - self.crop_offset[0]) * sx,
                (float(xy[1]) - self.crop_offset[1]) * sy,
            ]
        )

    def to_image(self, xy) -> np.ndarray:
        """Output-map pixels back to full-image pixels."""
        sx, sy = self.scale
        return np.array(
            [
                float(xy[0]) / sx + self.crop_offset[0],
                float(xy[1]) / sy + self.crop_offset[1],
            ]
        )

    def to_dict(self) -> dict:
        return {
            "crop_offset": [float(v) for v in self.crop_offset],
            "crop_size": [float(v) for v in self.crop_size],
            "output_size": [int(v) for v in self.output_size],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FrameMapping":
        return cls(
            crop_offset=tuple(doc["crop_offset"]),
            crop_size=tuple(doc["crop_size"]),
            output_size=tuple(doc["output_size"]),
        )


@dataclass
class TargetMaps:
    """Rendered supervision maps for one frame of one camera."""

    heatmaps: np.ndarray  # (C, H, W) in [0, 1]
    center_field: np.ndarray  # (C, H, W, 2), (dx, dy) in output pixels
    depth: np.ndarray  # (C, H, W) meters, 0 outside keypoint disks
    valid_mask: np.ndarray  # (C, H, W) bool, nonzero-heatmap support

    @property
    def channel_count(self) -> int:
        return self.heatmaps.shape[0]


@dataclass(frozen=True)
class ProjectedObject:
    """One object's keypoints projected into output-map coordinates.

    keypoints[t] lists the (x, y) positions of keypoint type t that are
    visible in this view; depths[t] holds the matching camera-frame z
    values in meters.
    """

    keypoints: tuple[tuple[tuple[float, float], ...], ...]
    depths: tuple[tuple[float, ...], ...]
    center: tuple[float, float]
    center_depth: float


def _in_bounds(xy, size) -> bool:
    w, h = size
    return 0.0 <= xy[0] < w and 0.0 <= xy[1] < h


def render_heatmaps(
    keypoints_per_channel: Sequence[Sequence],
    size: tuple[int, int],
    sigma: float,
) -> np.ndarray:
    """Render truncated Gaussian bumps, one channel per keypoint type.

    Same-channel bumps compose by elementwise maximum and each channel is
    scaled so its maximum is exactly 1. Out-of-bounds keypoints are
    skipped with a warning since they are not visible in this view.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    w, h = size
    C = len(keypoints_per_channel)
    maps = np.zeros((C, h, w))
    radius = TRUNCATION_SIGMAS * sigma
    for c, keypoints in enumerate(keypoints_per_channel):
        for kp in keypoints:
            kx, ky = float(kp[0]), float(kp[1])
            if not _in_bounds((kx, ky), size):
                logger.warning(
                    "keypoint (%.2f, %.2f) on channel %d is outside the %dx%d map; skipped",
                    kx, ky, c, w, h,
                )
                continue
            x_lo = max(0, int(np.floor(kx - radius)))
            x_hi = min(w, int(np.ceil(kx + radius)) + 1)
            y_lo = max(0, int(np.floor(ky - radius)))
            y_hi = min(h, int(np.ceil(ky + radius)) + 1)
            xs = np.arange(x_lo, x_hi)
            ys = np.arange(y_lo, y_hi)
            d2 = (xs[None, :] - kx) ** 2 + (ys[:, None] - ky) ** 2
            bump = np.exp(-d2 / (2.0 * sigma * sigma))
            bump[d2 > radius * radius] = 0.0
            patch = maps[c, y_lo:y_hi, x_lo:x_hi]
            np.maximum(patch, bump, out=patch)
        peak = maps[c].max()
        if peak > 0:
            maps[c] /= peak
    return maps


def render_center_field(
    keypoints_per_channel: Sequence[Sequence],
    owners_per_channel: Sequence[Sequence[int]],
    centers: Sequence,
    heatmaps: np.ndarray,
) -> np.ndarray:
    """Vectors from heatmap support pixels toward the owning object's center.

    At every pixel where a channel's heatmap is nonzero the field holds
    (center - pixel) for the object owning the nearest same-channel
    keypoint; everywhere else it is (0, 0).
    """
    C, h, w = heatmaps.shape
    field = np.zeros((C, h, w, 2))
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    for c, (keypoints, owners) in enumerate(zip(keypoints_per_channel, owners_per_channel)):
        if len(keypoints) != len(owners):
            raise MissingAssociation(
                f"channel {c}: {len(keypoints)} keypoints but {len(owners)} owners"
            )
        if not keypoints:
            continue
        if any(o is None or not 0 <= int(o) < len(centers) for o in owners):
            raise MissingAssociation(f"channel {c} has a keypoint with no valid object")
        kxy = np.asarray([[float(k[0]), float(k[1])] for k in keypoints])
        own = np.asarray([int(o) for o in owners])
        ii, jj = np.nonzero(heatmaps[c] > 0)
        if ii.size == 0:
            continue
        pix = np.column_stack([jj, ii]).astype(float)
        d2 = ((pix[:, None, :] - kxy[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argmin(d2, axis=1)
        field[c, ii, jj] = centers[own[nearest]] - pix
    return field


def render_depth(
    keypoints_per_channel: Sequence[Sequence],
    depths_per_channel: Sequence[Sequence[float]],
    size: tuple[int, int],
    radius: float,
) -> np.ndarray:
    """Disks of camera-frame z around each keypoint; overlaps go to the nearest."""
    w, h = size
    C = len(keypoints_per_channel)
    maps = np.zeros((C, h, w))
    for c, (keypoints, zs) in enumerate(zip(keypoints_per_channel, depths_per_channel)):
        if not keypoints:
            continue
        zarr = np.asarray([float(z) for z in zs])
        if np.any(zarr <= 0):
            raise InvalidDepth(f"channel {c} has a keypoint with nonpositive depth")
        kxy = np.asarray([[float(k[0]), float(k[1])] for k in keypoints])
        xs = np.arange(w, dtype=float)
        ys = np.arange(h, dtype=float)
        d2 = (
            (xs[None, None, :] - kxy[:, 0, None, None]) ** 2
            + (ys[None, :, None] - kxy[:, 1, None, None]) ** 2
        )
        nearest = np.argmin(d2, axis=0)
        near_d2 = np.take_along_axis(d2, nearest[None], axis=0)[0]
        inside = near_d2 <= radius * radius
        maps[c][inside] = zarr[nearest[inside]]
    return maps


def render_target_maps(
    objects: Sequence[ProjectedObject],
    spec: CategorySpec,
    size: tuple[int, int],
    sigma: float,
    depth_radius: float,
) -> TargetMaps:
    """Render all supervision maps for one view.

    Keypoints outside the map are dropped (with a warning) before any
    rendering so heatmaps, center fields and depth maps stay consistent.
    The appended center channel carries the object centers; per the map
    layout its own vector field is identically zero.
    """
    C = spec.channel_count
    keypoints: list[list] = [[] for _ in range(C)]
    owners: list[list[int]] = [[] for _ in range(C)]
    depths: list[list[float]] = [[] for _ in range(C)]
    centers = []
    dropped_keypoints = 0
    dropped_centers = 0
    for oi, obj in enumerate(objects):
        if len(obj.keypoints) != spec.num_types:
            raise ValueError(
                f"object {oi} has {len(obj.keypoints)} keypoint types, "
                f"category '{spec.name}' expects {spec.num_types}"
            )
        centers.append(obj.center)
        for t in range(spec.num_types):
            for kp, z in zip(obj.keypoints[t], obj.depths[t]):
                if not _in_bounds(kp, size):
                    dropped_keypoints += 1
                    logger.debug(
                        "object %d keypoint %s at (%.2f, %.2f) outside %s map; dropped",
                        oi, spec.keypoint_types[t], kp[0], kp[1], size,
                    )
                    continue
                keypoints[t].append(kp)
                owners[t].append(oi)
                depths[t].append(z)
        cc = spec.center_channel
        if _in_bounds(obj.center, size):
            keypoints[cc].append(obj.center)
            owners[cc].append(oi)
            depths[cc].append(obj.center_depth)
        else:
            dropped_centers += 1
            logger.debug("object %d center at (%.2f, %.2f) outside map; dropped", oi, *obj.center)
    if dropped_keypoints or dropped_centers:
        logger.warning(
            "view drops %d keypoint(s) and %d center(s) outside the %dx%d map",
            dropped_keypoints, dropped_centers, size[0], size[1],
        )
    heatmaps = render_heatmaps(keypoints, size, sigma)
    # centers vote for themselves, so their channel keeps a zero field
    field = render_center_field(
        keypoints[: spec.num_types] + [[]],
        owners[: spec.num_types] + [[]],
        centers if centers else np.zeros((0, 2)),
        heatmaps,
    )
    depth = render_depth(keypoints, depths, size, depth_radius)
    return TargetMaps(
        heatmaps=heatmaps,
        center_field=field,
        depth=depth,
        valid_mask=heatmaps > 0,
    )
