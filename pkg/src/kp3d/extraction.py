"""Keypoint extraction from heatmaps and center-vote object grouping.

Peaks are isolated with a 5x5 non-maximum suppression, thresholded,
refined to subpixel positions by a density-weighted mean of window
indices on the unprocessed heatmap, and grouped into object instances by
the center votes read from the center vector field.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import maximum_filter

from kp3d.targets import FrameMapping

logger = logging.getLogger(__name__)

WINDOW_RADIUS = 2  # 5x5 windows throughout, clamped at map borders

DEFAULT_DETECTION_THRESHOLD = 0.25
DEFAULT_CENTER_GATE_RADIUS = 16.0

DETECTION_RECORD_VERSION = 1


@dataclass(frozen=True)
class Detection2D:
    """One extracted keypoint."""

    type_index: int
    position: tuple[float, float]  # subpixel, output-map pixels
    score: float  # peak heatmap value
    center_vote: tuple[float, float]  # output-map pixels
    image_position: tuple[float, float]  # full-image pixels
    peak: tuple[int, int]  # integer peak pixel (x, y)


@dataclass(frozen=True)
class TrackedObject2D:
    """A center detection plus the keypoints voting for it."""

    center: Detection2D
    keypoints: tuple[Detection2D, ...]


def nms_5x5(heatmap: np.ndarray) -> np.ndarray:
    """Zero all pixels that are not the maximum of their 5x5 neighborhood.

    Windows are clamped at the borders. When a window holds several equal
    maxima only the first in row-major order survives, so the result is
    deterministic; applying the suppression twice equals applying it once.
    """
    h = np.asarray(heatmap, dtype=float)
    if h.ndim != 2:
        raise ValueError(f"expected a 2D heatmap, got shape {h.shape}")
    size = 2 * WINDOW_RADIUS + 1
    wmax = maximum_filter(h, size=size, mode="constant", cval=-np.inf)
    out = np.zeros_like(h)
    # zero-valued window maxima would write zeros anyway; skip them
    for i, j in np.argwhere((h == wmax) & (h > 0)):
        if _first_argmax_in_window(h, i, j):
            out[i, j] = h[i, j]
    return out


def _window(shape, i, j):
    i_lo, i_hi = max(0, i - WINDOW_RADIUS), min(shape[0], i + WINDOW_RADIUS + 1)
    j_lo, j_hi = max(0, j - WINDOW_RADIUS), min(shape[1], j + WINDOW_RADIUS + 1)
    return i_lo, i_hi, j_lo, j_hi


def _first_argmax_in_window(h, i, j) -> bool:
    i_lo, i_hi, j_lo, j_hi = _window(h.shape, i, j)
    win = h[i_lo:i_hi, j_lo:j_hi]
    ti, tj = np.nonzero(win == h[i, j])
    return (ti[0] + i_lo, tj[0] + j_lo) == (i, j)


def _subpixel_peak(heatmap: np.ndarray, i: int, j: int) -> tuple[float, float]:
    """Density-weighted mean of window indices on the raw heatmap."""
    i_lo, i_hi, j_lo, j_hi = _window(heatmap.shape, i, j)
    win = heatmap[i_lo:i_hi, j_lo:j_hi]
    total = win.sum()
    if total <= 0:
        return float(j), float(i)
    xs = np.arange(j_lo, j_hi, dtype=float)
    ys = np.arange(i_lo, i_hi, dtype=float)
    return float((win.sum(axis=0) @ xs) / total), float((win.sum(axis=1) @ ys) / total)


def bilinear_sample(field: np.ndarray, xy) -> np.ndarray:
    """Bilinear sample of an (H, W) or (H, W, D) array at (x, y), clamped at edges."""
    h, w = field.shape[:2]
    x = min(max(float(xy[0]), 0.0), w - 1.0)
    y = min(max(float(xy[1]), 0.0), h - 1.0)
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    top = field[y0, x0] * (1 - fx) + field[y0, x1] * fx
    bot = field[y1, x0] * (1 - fx) + field[y1, x1] * fx
    return np.asarray(top * (1 - fy) + bot * fy)


def extract_keypoints(
    heatmaps: np.ndarray,
    center_field: np.ndarray,
    mapping: FrameMapping,
    threshold: float = DEFAULT_DETECTION_THRESHOLD,
) -> list[Detection2D]:
    """Extract subpixel keypoint detections from all heatmap channels.

    Suppression and thresholding run on a working copy; the subpixel
    refinement and the center vote both read the unprocessed maps.
    """
    heatmaps = np.asarray(heatmaps, dtype=float)
    center_field = np.asarray(center_field, dtype=float)
    if heatmaps.ndim != 3:
        raise ValueError(f"expected (C, H, W) heatmaps, got {heatmaps.shape}")
    if center_field.shape != heatmaps.shape + (2,):
        raise ValueError(
            f"center field shape {center_field.shape} does not match heatmaps {heatmaps.shape}"
        )
    detections = []
    for c in range(heatmaps.shape[0]):
        if not (heatmaps[c] >= threshold).any():
            continue
        peaks = nms_5x5(heatmaps[c])
        peaks[peaks < threshold] = 0.0
        for i, j in np.argwhere(peaks > 0):
            x, y = _subpixel_peak(heatmaps[c], i, j)
            vote = np.array([x, y]) + bilinear_sample(center_field[c], (x, y))
            detections.append(
                Detection2D(
                    type_index=int(c),
                    position=(x, y),
                    score=float(heatmaps[c, i, j]),
                    center_vote=(float(vote[0]), float(vote[1])),
                    image_position=tuple(mapping.to_image((x, y))),
                    peak=(int(j), int(i)),
                )
            )
    return detections


def associate_to_objects(
    detections: list[Detection2D],
    center_channel: int,
    gate_radius: float = DEFAULT_CENTER_GATE_RADIUS,
) -> tuple[list[TrackedObject2D], list[Detection2D]]:
    """Group keypoint detections around detected centers.

    Each non-center detection joins the center nearest to its vote; votes
    farther than gate_radius from every center leave the detection as an
    orphan. Returns (objects, orphans). With no detected centers every
    keypoint is an orphan.
    """
    centers = [d for d in detections if d.type_index == center_channel]
    others = [d for d in detections if d.type_index != center_channel]
    if not centers:
        if others:
            logger.warning("no center detections; %d keypoints left unassociated", len(others))
        return [], others
    members: list[list[Detection2D]] = [[] for _ in centers]
    orphans = []
    cpos = np.array([c.position for c in centers])
    for det in others:
        dist = np.linalg.norm(cpos - np.asarray(det.center_vote), axis=1)
        best = int(np.argmin(dist))
        if dist[best] <= gate_radius:
            members[best].append(det)
        else:
            orphans.append(det)
    objects = [
        TrackedObject2D(center=c, keypoints=tuple(m)) for c, m in zip(centers, members)
    ]
    return objects, orphans


def format_detection_record(frame_id: str, det: Detection2D) -> str:
    """One-line text record for debugging and golden tests."""
    return " ".join(
        [
            frame_id,
            str(det.type_index),
            f"{det.position[0]:.6f}",
            f"{det.position[1]:.6f}",
            f"{det.score:.6f}",
            f"{det.center_vote[0]:.6f}",
            f"{det.center_vote[1]:.6f}",
        ]
    )


def parse_detection_record(line: str, mapping: FrameMapping) -> tuple[str, Detection2D]:
    parts = line.split()
    if len(parts) != 7:
        raise ValueError(f"malformed detection record: {line!r}")
    frame_id = parts[0]
    x, y = float(parts[2]), float(parts[3])
    return frame_id, Detection2D(
        type_index=int(parts[1]),
        position=(x, y),
        score=float(parts[4]),
        center_vote=(float(parts[5]), float(parts[6])),
        image_position=tuple(mapping.to_image((x, y))),
        peak=(int(round(x)), int(round(y))),
    )
