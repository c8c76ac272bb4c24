"""Line-oriented results stream for tracked 3D objects.

One object per line:

    <frame_id> <object_index> <cx> <cy> <cz> <n> [<type> <x> <y> <z> <prov>]*

where (cx, cy, cz) is the object center in the base frame, n the number
of 3D keypoints and prov is "stereo" or "mono". Lines starting with '#'
are header comments; the first carries the format version, followed by
the reproducibility stamp of the producing run.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from kp3d.stereo import Keypoint3D, TrackedObject3D

RESULTS_VERSION = 1


def format_object_record(frame_id: str, index: int, obj: TrackedObject3D) -> str:
    parts = [frame_id, str(index)]
    parts += [f"{v:.9g}" for v in obj.center]
    parts.append(str(len(obj.keypoints)))
    for kp in obj.keypoints:
        parts.append(str(kp.type_index))
        parts += [f"{v:.9g}" for v in kp.position]
        parts.append(kp.provenance)
    return " ".join(parts)


def parse_object_record(line: str) -> tuple[str, int, TrackedObject3D]:
    tokens = line.split()
    if len(tokens) < 6:
        raise ValueError(f"malformed object record: {line!r}")
    frame_id, index = tokens[0], int(tokens[1])
    center = np.array([float(t) for t in tokens[2:5]])
    n = int(tokens[5])
    expected = 6 + 5 * n
    if len(tokens) != expected:
        raise ValueError(f"object record field count {len(tokens)} != {expected}: {line!r}")
    keypoints = []
    for k in range(n):
        base = 6 + 5 * k
        keypoints.append(
            Keypoint3D(
                type_index=int(tokens[base]),
                position=np.array([float(t) for t in tokens[base + 1 : base + 4]]),
                provenance=tokens[base + 4],
            )
        )
    return frame_id, index, TrackedObject3D(center=center, keypoints=tuple(keypoints))


def write_results(path, per_frame: dict[str, list[TrackedObject3D]], stamp: dict | None = None) -> None:
    """Write a results stream; per_frame maps frame id to its objects."""
    lines = [f"# kp3d-results v{RESULTS_VERSION}"]
    for key, value in (stamp or {}).items():
        lines.append(f"# {key} {value}")
    for frame_id in per_frame:
        for index, obj in enumerate(per_frame[frame_id]):
            lines.append(format_object_record(frame_id, index, obj))
    Path(path).write_text("\n".join(lines) + "\n")


def read_results(path) -> dict[str, list[TrackedObject3D]]:
    per_frame: dict[str, list[TrackedObject3D]] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        frame_id, _, obj = parse_object_record(line)
        per_frame.setdefault(frame_id, []).append(obj)
    return per_frame
