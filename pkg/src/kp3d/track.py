"""Frame-by-frame tracking drivers for both pipelines.

Predictions (or ground-truth maps) enter through the tensor file
interface referenced by a generated manifest, so any external model can
feed the tracker; an in-memory path renders maps on the fly for
simulated sequences.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from kp3d.config import Config
from kp3d.dataset import SequenceDataset, load_sequence, render_frame_maps
from kp3d.mono import run_mono_frame
from kp3d.stereo import TrackedObject3D, run_stereo_frame
from kp3d.targets import CategorySpec, FrameMapping, TargetMaps
from kp3d import tensorio

logger = logging.getLogger(__name__)


def frame_id(sequence_id: str, index: int) -> str:
    return f"{sequence_id}/{index:06d}"


def split_frame_id(fid: str) -> tuple[str, int]:
    seq_id, _, index = fid.rpartition("/")
    return seq_id, int(index)


def _load_maps(base_dir: Path, files: dict) -> TargetMaps:
    heat, kind = tensorio.read_map(base_dir / files["heatmap"])
    if kind != tensorio.KIND_HEATMAP:
        raise ValueError(f"{files['heatmap']}: wrong map kind")
    center, kind = tensorio.read_map(base_dir / files["center"])
    if kind != tensorio.KIND_CENTER_FIELD:
        raise ValueError(f"{files['center']}: wrong map kind")
    depth, kind = tensorio.read_map(base_dir / files["depth"])
    if kind != tensorio.KIND_DEPTH:
        raise ValueError(f"{files['depth']}: wrong map kind")
    return TargetMaps(
        heatmaps=heat, center_field=center, depth=depth, valid_mask=heat > 0
    )


def track_sequence_files(
    sequence_dir,
    manifest_path,
    config: Config,
    timings: dict | None = None,
) -> dict[str, list[TrackedObject3D]]:
    """Run the configured pipeline over tensor files listed in a manifest."""
    sequence_dir = Path(sequence_dir)
    manifest_path = Path(manifest_path)
    seq = load_sequence(sequence_dir)
    with open(manifest_path) as f:
        manifest = json.load(f)
    spec = CategorySpec.from_dict(manifest["category"])
    mappings = {
        cam: FrameMapping.from_dict(doc) for cam, doc in manifest["mapping"].items()
    }
    base_dir = manifest_path.parent
    results: dict[str, list[TrackedObject3D]] = {}
    for entry in manifest["frames"]:
        i = entry["index"]
        frame = seq.frames[i]
        left_maps = _load_maps(base_dir, entry["files"]["left"])
        if config.mode == "stereo":
            right_maps = _load_maps(base_dir, entry["files"]["right"])
            objects = run_stereo_frame(
                left_maps,
                right_maps,
                seq.rig,
                frame.left_pose,
                frame.right_pose,
                mappings["left"],
                mappings["right"],
                spec,
                config,
                timings=timings,
            )
        else:
            objects = run_mono_frame(
                left_maps, seq.rig.left, frame.left_pose, mappings["left"], spec, config
            )
        results[frame_id(seq.sequence_id, i)] = objects
    return results


def track_sequence_maps(
    seq: SequenceDataset,
    spec: CategorySpec,
    config: Config,
    timings: dict | None = None,
    frame_indices=None,
) -> dict[str, list[TrackedObject3D]]:
    """Render maps on the fly and track; used for simulated sequences."""
    results: dict[str, list[TrackedObject3D]] = {}
    indices = range(len(seq.frames)) if frame_indices is None else frame_indices
    for i in indices:
        frame = seq.frames[i]
        left_maps, left_mapping = render_frame_maps(seq, i, "left", spec, config)
        if config.mode == "stereo":
            right_maps, right_mapping = render_frame_maps(seq, i, "right", spec, config)
            objects = run_stereo_frame(
                left_maps,
                right_maps,
                seq.rig,
                frame.left_pose,
                frame.right_pose,
                left_mapping,
                right_mapping,
                spec,
                config,
                timings=timings,
            )
        else:
            objects = run_mono_frame(
                left_maps, seq.rig.left, frame.left_pose, left_mapping, spec, config
            )
        results[frame_id(seq.sequence_id, i)] = objects
    return results
