"""Reference training losses over prediction/target map stacks.

Pure numpy implementations of the heatmap, center and depth losses and
their weighted two-stage combination, intended to validate external
training integrations. All reductions are sums over every map element
(masked for the center and depth terms), not means.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from kp3d import tensorio

BCE_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda_h: float = 1.0
    lambda_c: float = 0.1
    lambda_d: float = 1.0
    # Defaults are placeholders; tune per training setup. Set lambda_d to 0
    # to train the triangulation-only variant.

    def __post_init__(self):
        if min(self.lambda_h, self.lambda_c, self.lambda_d) < 0:
            raise ValueError("loss weights must be nonnegative")


def _check_shapes(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def heatmap_loss(p: np.ndarray, y: np.ndarray) -> float:
    """Binary cross entropy summed over all channels and pixels.

    Predictions are clamped to [BCE_EPS, 1 - BCE_EPS] before the logs.
    """
    p = np.asarray(p, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_shapes(p, y, "heatmap loss")
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def smooth_l1(d: np.ndarray) -> np.ndarray:
    """Elementwise smooth L1: quadratic below 1, linear (minus 0.5) beyond."""
    d = np.abs(np.asarray(d, dtype=float))
    return np.where(d < 1.0, 0.5 * d * d, d - 0.5)


def center_loss(c_hat: np.ndarray, c: np.ndarray, mask: np.ndarray) -> float:
    """Masked smooth L1 over both components of the center vector field."""
    c_hat = np.asarray(c_hat, dtype=float)
    c = np.asarray(c, dtype=float)
    _check_shapes(c_hat, c, "center loss")
    mask = np.asarray(mask, dtype=bool)
    _check_shapes(mask, c[..., 0], "center loss mask")
    per_pixel = smooth_l1(c_hat - c).sum(axis=-1)
    return float(per_pixel[mask].sum())


def depth_loss(z_hat: np.ndarray, z: np.ndarray, mask: np.ndarray) -> float:
    """Masked L1 over the depth maps."""
    z_hat = np.asarray(z_hat, dtype=float)
    z = np.asarray(z, dtype=float)
    _check_shapes(z_hat, z, "depth loss")
    mask = np.asarray(mask, dtype=bool)
    _check_shapes(mask, z, "depth loss mask")
    return float(np.abs(z - z_hat)[mask].sum())


def total_loss(
    stage1: tuple[float, float, float],
    stage2: tuple[float, float, float],
    w: LossWeights,
) -> float:
    """Weighted sum of (heatmap, center, depth) losses from both stages."""
    h1, c1, d1 = stage1
    h2, c2, d2 = stage2
    return w.lambda_h * (h1 + h2) + w.lambda_c * (c1 + c2) + w.lambda_d * (d1 + d2)


def loss_report(
    predicted_heatmap_file,
    predicted_center_file,
    predicted_depth_file,
    target_heatmap_file,
    target_center_file,
    target_depth_file,
) -> str:
    """Compute all three losses from tensor files and format them as text.

    The mask is the nonzero support of the target heatmaps, matching how
    the maps are rendered.
    """
    def load(path, expected_kind):
        arr, kind = tensorio.read_map(Path(path))
        if kind != expected_kind:
            raise ValueError(f"{path}: expected {tensorio.kind_name(expected_kind)} map")
        return arr

    p = load(predicted_heatmap_file, tensorio.KIND_HEATMAP)
    y = load(target_heatmap_file, tensorio.KIND_HEATMAP)
    c_hat = load(predicted_center_file, tensorio.KIND_CENTER_FIELD)
    c = load(target_center_file, tensorio.KIND_CENTER_FIELD)
    z_hat = load(predicted_depth_file, tensorio.KIND_DEPTH)
    z = load(target_depth_file, tensorio.KIND_DEPTH)
    mask = y > 0
    lines = [
        f"heatmap_loss {heatmap_loss(p, y):.9g}",
        f"center_loss {center_loss(c_hat, c, mask):.9g}",
        f"depth_loss {depth_loss(z_hat, z, mask):.9g}",
    ]
    return "\n".join(lines) + "\n"
