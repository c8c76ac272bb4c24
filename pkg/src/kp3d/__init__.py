"""kp3d: multi-view 3D keypoint labeling, dataset generation and tracking.

Turns calibrated stereo image sequences with known camera poses into
labeled 3D keypoint datasets, and tracks multiple objects' 3D keypoints
from heatmap predictions via stereo triangulation or monocular depth
lifting.
"""

__version__ = "0.1.0"

from kp3d.geometry import (
    CameraIntrinsics,
    ProjectionMatrix,
    RigidTransform,
    StereoRig,
    backproject_ray,
    fundamental_matrix,
    project,
    triangulate_dlt,
)

__all__ = [
    "CameraIntrinsics",
    "ProjectionMatrix",
    "RigidTransform",
    "StereoRig",
    "backproject_ray",
    "fundamental_matrix",
    "project",
    "triangulate_dlt",
]
