"""Metrics over tracked 3D keypoints and pipeline stage timing.

Predictions are matched to ground truth per keypoint type by greedy
nearest pairing under a distance gate; unmatched truth keypoints are
counted as misses and excluded from the error statistics. The xy error
removes the component along the left camera's viewing axis, isolating
the depth contribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kp3d.config import Config
from kp3d.dataset import SequenceDataset, optical_axis
from kp3d.stereo import TrackedObject3D
from kp3d.targets import CategorySpec, FrameMapping
from kp3d.track import split_frame_id, track_sequence_maps
from kp3d.geometry import ProjectionMatrix, project

M_TO_CM = 100.0


@dataclass
class MetricsReport:
    mean_cm: float
    xy_mean_cm: float
    pct_under_3cm: float
    p25_cm: float
    p75_cm: float
    n_matched: int
    n_missed: int
    n_extra: int
    object_count_eligible: int
    object_count_correct: int
    stage_timings_ms: dict[str, float] | None = None

    @property
    def object_count_accuracy(self) -> float:
        if self.object_count_eligible == 0:
            return float("nan")
        return self.object_count_correct / self.object_count_eligible

    def to_dict(self) -> dict:
        doc = {
            "mean_cm": self.mean_cm,
            "xy_mean_cm": self.xy_mean_cm,
            "pct_under_3cm": self.pct_under_3cm,
            "p25_cm": self.p25_cm,
            "p75_cm": self.p75_cm,
            "n_matched": self.n_matched,
            "n_missed": self.n_missed,
            "n_extra": self.n_extra,
            "object_count_eligible": self.object_count_eligible,
            "object_count_correct": self.object_count_correct,
        }
        if self.stage_timings_ms is not None:
            doc["stage_timings_ms"] = dict(sorted(self.stage_timings_ms.items()))
        return doc

    def to_text(self) -> str:
        lines = [
            f"mean_cm {self.mean_cm:.6g}",
            f"xy_mean_cm {self.xy_mean_cm:.6g}",
            f"pct_under_3cm {self.pct_under_3cm:.6g}",
            f"p25_cm {self.p25_cm:.6g}",
            f"p75_cm {self.p75_cm:.6g}",
            f"n_matched {self.n_matched}",
            f"n_missed {self.n_missed}",
            f"n_extra {self.n_extra}",
            f"object_count_eligible {self.object_count_eligible}",
            f"object_count_correct {self.object_count_correct}",
        ]
        if self.stage_timings_ms is not None:
            for stage, ms in sorted(self.stage_timings_ms.items()):
                lines.append(f"stage_ms.{stage} {ms:.6g}")
        return "\n".join(lines) + "\n"


def _visible_in_view(X, intrinsics, pose, mapping) -> bool:
    uv = project(ProjectionMatrix.from_camera(intrinsics, pose), X)
    if uv is None:
        return False
    out = mapping.to_output(uv)
    return 0 <= out[0] < mapping.output_size[0] and 0 <= out[1] < mapping.output_size[1]


def _truth_for_frame(seq: SequenceDataset, index: int, config: Config):
    """Expected (type, point) pairs for one frame under the current mode."""
    frame = seq.frames[index]
    views = [(seq.rig.left, frame.left_pose)]
    if config.mode == "stereo":
        views.append((seq.rig.right, frame.right_pose))
    expected = []
    for inst in seq.labels:
        for t, X in inst.all_keypoints():
            if all(
                _visible_in_view(
                    X, cam, pose, FrameMapping.center_crop(cam.width, cam.height, config.output_size)
                )
                for cam, pose in views
            ):
                expected.append((t, X))
    return expected


def _centers_eligible(seq: SequenceDataset, index: int, config: Config) -> bool:
    """All object centers visible and separated by > 5 output px in every view."""
    frame = seq.frames[index]
    views = [(seq.rig.left, frame.left_pose)]
    if config.mode == "stereo":
        views.append((seq.rig.right, frame.right_pose))
    for cam, pose in views:
        mapping = FrameMapping.center_crop(cam.width, cam.height, config.output_size)
        P = ProjectionMatrix.from_camera(cam, pose)
        points = []
        for inst in seq.labels:
            uv = project(P, inst.center_3d)
            if uv is None:
                return False
            out = mapping.to_output(uv)
            if not (0 <= out[0] < mapping.output_size[0] and 0 <= out[1] < mapping.output_size[1]):
                return False
            points.append(out)
        for i in range(len(points)):
            for j in range(i + 1, len(points)):
                if np.linalg.norm(points[i] - points[j]) <= 5.0:
                    return False
    return True


def _greedy_match(predictions, truths, gate: float):
    """Nearest-first one-to-one matching within a distance gate."""
    pairs = []
    for pi, p in enumerate(predictions):
        for ti, t in enumerate(truths):
            d = float(np.linalg.norm(p - t))
            if d <= gate:
                pairs.append((d, pi, ti))
    pairs.sort(key=lambda x: (x[0], x[1], x[2]))
    used_p: set[int] = set()
    used_t: set[int] = set()
    matched = []
    for d, pi, ti in pairs:
        if pi in used_p or ti in used_t:
            continue
        used_p.add(pi)
        used_t.add(ti)
        matched.append((pi, ti, d))
    return matched


def evaluate(
    predictions: dict[str, list[TrackedObject3D]],
    seq: SequenceDataset,
    config: Config | None = None,
) -> MetricsReport:
    """Compare per-frame predictions against the sequence's static labels.

    Raises:
        ValueError: a prediction frame id does not belong to the sequence.
    """
    config = config or Config()
    errors = []
    xy_errors = []
    n_missed = 0
    n_extra = 0
    eligible = 0
    correct = 0
    for fid, objects in predictions.items():
        seq_id, index = split_frame_id(fid)
        if seq_id != seq.sequence_id or not 0 <= index < len(seq.frames):
            raise ValueError(f"frame id {fid!r} does not match sequence {seq.sequence_id!r}")
        frame = seq.frames[index]
        view_axis = optical_axis(frame.left_pose)
        truth = _truth_for_frame(seq, index, config)
        pred = [
            (kp.type_index, kp.position) for obj in objects for kp in obj.keypoints
        ]
        for t in sorted({t for t, _ in truth} | {t for t, _ in pred}):
            p_t = [X for ti, X in pred if ti == t]
            g_t = [X for ti, X in truth if ti == t]
            matched = _greedy_match(p_t, g_t, config.eval_gate)
            n_missed += len(g_t) - len(matched)
            n_extra += len(p_t) - len(matched)
            for pi, ti, d in matched:
                errors.append(d)
                e = p_t[pi] - g_t[ti]
                xy_errors.append(float(np.linalg.norm(e - (e @ view_axis) * view_axis)))
        if _centers_eligible(seq, index, config):
            eligible += 1
            if len(objects) == len(seq.labels):
                correct += 1
    errors_cm = np.asarray(errors) * M_TO_CM
    xy_cm = np.asarray(xy_errors) * M_TO_CM
    if errors_cm.size:
        report = MetricsReport(
            mean_cm=float(errors_cm.mean()),
            xy_mean_cm=float(xy_cm.mean()),
            pct_under_3cm=float((errors_cm < 3.0).mean() * 100.0),
            p25_cm=float(np.percentile(errors_cm, 25)),
            p75_cm=float(np.percentile(errors_cm, 75)),
            n_matched=int(errors_cm.size),
            n_missed=n_missed,
            n_extra=n_extra,
            object_count_eligible=eligible,
            object_count_correct=correct,
        )
    else:
        report = MetricsReport(
            mean_cm=float("nan"),
            xy_mean_cm=float("nan"),
            pct_under_3cm=0.0,
            p25_cm=float("nan"),
            p75_cm=float("nan"),
            n_matched=0,
            n_missed=n_missed,
            n_extra=n_extra,
            object_count_eligible=eligible,
            object_count_correct=correct,
        )
    return report


def bench_stages(
    seq: SequenceDataset,
    spec: CategorySpec,
    config: Config | None = None,
    n_frames: int = 500,
) -> dict[str, float]:
    """Mean per-frame wall-clock milliseconds of each stereo pipeline stage.

    Cycles through the sequence until n_frames frames have been timed.
    Map rendering stands in for the prediction step and is not a timed
    stage. Single-threaded by construction for stable numbers.
    """
    config = config or Config()
    timings: dict[str, float] = {}
    indices = [i % len(seq.frames) for i in range(n_frames)]
    track_sequence_maps(seq, spec, config, timings=timings, frame_indices=indices)
    return {stage: seconds * 1000.0 / n_frames for stage, seconds in timings.items()}
