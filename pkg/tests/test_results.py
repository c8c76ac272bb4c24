import numpy as np
import pytest

from kp3d.results import (
    format_object_record,
    parse_object_record,
    read_results,
    write_results,
)
from kp3d.stereo import Keypoint3D, TrackedObject3D


def sample_object():
    return TrackedObject3D(
        center=np.array([0.1, -0.2, 0.55]),
        keypoints=(
            Keypoint3D(0, np.array([0.12, -0.18, 0.5]), "stereo"),
            Keypoint3D(1, np.array([0.08, -0.22, 0.6]), "mono"),
        ),
    )


def test_record_round_trip():
    obj = sample_object()
    line = format_object_record("valve/000012", 0, obj)
    fid, index, parsed = parse_object_record(line)
    assert fid == "valve/000012" and index == 0
    np.testing.assert_allclose(parsed.center, obj.center, atol=1e-7)
    assert len(parsed.keypoints) == 2
    assert parsed.keypoints[0].provenance == "stereo"
    assert parsed.keypoints[1].type_index == 1
    np.testing.assert_allclose(parsed.keypoints[1].position, obj.keypoints[1].position, atol=1e-7)


def test_file_round_trip_with_stamp(tmp_path):
    per_frame = {
        "seq/000000": [sample_object()],
        "seq/000001": [sample_object(), sample_object()],
    }
    path = tmp_path / "results.txt"
    write_results(path, per_frame, stamp={"config_hash": "abc123", "seed": 7})
    text = path.read_text()
    assert text.startswith("# kp3d-results v1\n")
    assert "# config_hash abc123" in text and "# seed 7" in text
    loaded = read_results(path)
    assert set(loaded) == set(per_frame)
    assert len(loaded["seq/000001"]) == 2


def test_malformed_record_rejected():
    with pytest.raises(ValueError):
        parse_object_record("frame 0 1.0 2.0")
    with pytest.raises(ValueError):
        parse_object_record("frame 0 1.0 2.0 3.0 2 0 1 2 3 stereo")
