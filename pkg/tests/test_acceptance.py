"""Acceptance suite: one criterion per test, one printed pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines as they
complete. Criteria and tolerances are fixed here, not calibrated
elsewhere.
"""

import json
import time

import numpy as np
import pytest

from kp3d.cli import main as cli_main
from kp3d.config import Config
from kp3d.evaluate import bench_stages, evaluate
from kp3d.simulate import (
    cup_category,
    make_cup_scene,
    make_valve_scene,
    perturb_poses,
    simulate_sequence,
    valve_category,
)
from kp3d.track import track_sequence_maps


def _line(name: str, ok: bool, detail: str) -> bool:
    print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return ok


def _pooled(reports):
    n = sum(r.n_matched for r in reports)
    mean = sum(r.mean_cm * r.n_matched for r in reports) / n
    xy = sum(r.xy_mean_cm * r.n_matched for r in reports) / n
    pct = sum(r.pct_under_3cm * r.n_matched for r in reports) / n
    eligible = sum(r.object_count_eligible for r in reports)
    correct = sum(r.object_count_correct for r in reports)
    return mean, xy, pct, eligible, correct, n


def test_gt_pipeline_valve_reproduction():
    """Stereo pipeline on ground-truth maps of 5 held-out valve sequences."""
    start = time.perf_counter()
    config = Config()
    reports = []
    for seed in range(1000, 1005):
        scene = make_valve_scene(seed)
        seq = simulate_sequence(scene, seed, sequence_id=f"valve_{seed}", split="test")
        predictions = track_sequence_maps(seq, valve_category(), config)
        reports.append(evaluate(predictions, seq, config))
    elapsed = time.perf_counter() - start
    mean, xy, pct, _, _, n = _pooled(reports)
    ok = mean < 1.0 and pct > 99.0 and xy < mean and elapsed < 120.0
    assert _line(
        "gt-valve-reproduction",
        ok,
        f"mean={mean:.3f} cm (<1.0), xy={xy:.3f} cm (<mean), "
        f"pct<3cm={pct:.2f}% (>99), n={n}, {elapsed:.1f}s (<120)",
    )


def test_gt_pipeline_cups_multi_object():
    """Multi-object cup scenes: accuracy plus exact object-count recovery."""
    config = Config()
    reports = []
    for seed, n_cups in zip(range(2000, 2005), [1, 2, 3, 4, None]):
        scene = make_cup_scene(seed, n_cups=n_cups)
        seq = simulate_sequence(scene, seed, sequence_id=f"cups_{seed}", split="test")
        predictions = track_sequence_maps(seq, cup_category(), config)
        reports.append(evaluate(predictions, seq, config))
    mean, xy, pct, eligible, correct, n = _pooled(reports)
    count_rate = correct / eligible if eligible else 0.0
    ok = mean < 2.0 and pct > 95.0 and count_rate >= 0.95 and eligible > 0
    assert _line(
        "gt-cups-multi-object",
        ok,
        f"mean={mean:.3f} cm (<2.0), pct<3cm={pct:.2f}% (>95), "
        f"count-recovery={100 * count_rate:.2f}% (>=95) over {eligible} eligible frames, n={n}",
    )


def test_triangulation_oracle_equivalence():
    """Noise-free DLT is exact; noisy DLT within 2x of a nonlinear minimizer."""
    from test_geometry import oracle_refine
    from util import default_intrinsics, default_rig, look_at_pose

    from kp3d.geometry import ProjectionMatrix, project, triangulate_dlt

    rng = np.random.default_rng(3000)
    K = default_intrinsics()
    rig = default_rig(baseline=0.06)
    exact_worst = 0.0
    dlt_errs, oracle_errs = [], []
    for _ in range(20):
        left = look_at_pose(
            [rng.uniform(-0.1, 0.1), -0.6, rng.uniform(0.2, 0.5)], [0.0, 0.0, 0.0]
        )
        right = left.compose(rig.t_left_right)
        P_l = ProjectionMatrix.from_camera(K, left)
        P_r = ProjectionMatrix.from_camera(K, right)
        X = left.apply(np.array([rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), 0.6]))
        clean = [(P_l, project(P_l, X)), (P_r, project(P_r, X))]
        exact_worst = max(exact_worst, float(np.linalg.norm(triangulate_dlt(clean) - X)))
        noisy = [(P, xy + rng.normal(0, 0.5, size=2)) for P, xy in clean]
        dlt_errs.append(np.linalg.norm(triangulate_dlt(noisy) - X))
        oracle_errs.append(np.linalg.norm(oracle_refine(noisy, X) - X))
    ratio = float(np.mean(dlt_errs) / np.mean(oracle_errs))
    ok = exact_worst < 1e-9 and ratio <= 2.0
    assert _line(
        "triangulation-oracle-equivalence",
        ok,
        f"noise-free worst={exact_worst:.2e} m (<1e-9), noisy DLT/oracle={ratio:.3f} (<=2)",
    )


def test_epipolar_invariant_1000_correspondences():
    from util import random_pose, random_rig

    from kp3d.geometry import ProjectionMatrix, epipolar_residual, fundamental_matrix, project

    rng = np.random.default_rng(3001)
    worst = 0.0
    count = 0
    while count < 1000:
        rig = random_rig(rng)
        F = fundamental_matrix(rig)
        left_pose = random_pose(rng)
        right_pose = left_pose.compose(rig.t_left_right)
        P_l = ProjectionMatrix.from_camera(rig.left, left_pose)
        P_r = ProjectionMatrix.from_camera(rig.right, right_pose)
        for _ in range(20):
            Xc = np.array(
                [rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.3, 2.0)]
            )
            X = left_pose.apply(Xc)
            xl, xr = project(P_l, X), project(P_r, X)
            if xl is None or xr is None:
                continue
            worst = max(worst, abs(epipolar_residual(F, xl, xr)))
            count += 1
    ok = worst < 1e-6
    assert _line(
        "epipolar-invariant", ok, f"worst |x'^T F x| = {worst:.2e} over {count} (<1e-6)"
    )


def test_nms_brute_force_equivalence():
    from test_extraction import nms_oracle

    from kp3d.extraction import nms_5x5

    rng = np.random.default_rng(3002)
    ok = True
    for _ in range(20):
        h = rng.uniform(0, 1, size=(32, 32))
        ok = ok and np.array_equal(nms_5x5(h), nms_oracle(h))
        h_ties = rng.integers(0, 5, size=(32, 32)) / 5.0
        ok = ok and np.array_equal(nms_5x5(h_ties), nms_oracle(h_ties))
    assert _line("nms-brute-force-equivalence", ok, "40 random maps incl. quantized ties")


def test_subpixel_recovery_half_pixel():
    from kp3d.extraction import extract_keypoints
    from kp3d.targets import FrameMapping, render_heatmaps

    mapping = FrameMapping.center_crop(1280, 720, 64)
    rng = np.random.default_rng(3003)
    worst = 0.0
    for sigma in (1.0, 2.5):
        for _ in range(50):
            kx, ky = rng.uniform(10, 54, size=2)
            maps = render_heatmaps([[(kx, ky)]], (64, 64), sigma=sigma)
            dets = extract_keypoints(maps, np.zeros(maps.shape + (2,)), mapping)
            assert len(dets) == 1
            worst = max(worst, float(np.hypot(dets[0].position[0] - kx, dets[0].position[1] - ky)))
    ok = worst <= 0.5
    assert _line("subpixel-recovery", ok, f"worst error {worst:.3f} px (<=0.5)")


def test_loss_finite_differences_and_oracles():
    from test_losses import bce_oracle, center_oracle, depth_oracle

    from kp3d.losses import center_loss, depth_loss, heatmap_loss

    rng = np.random.default_rng(3004)
    h = 1e-5
    fd_worst = 0.0
    p = rng.uniform(0.2, 0.8, size=(1, 4, 4))
    y = rng.uniform(0.1, 0.9, size=(1, 4, 4))
    for idx in [(0, 0, 0), (0, 2, 3), (0, 3, 1)]:
        analytic = -(y[idx] / p[idx] - (1 - y[idx]) / (1 - p[idx]))
        plus, minus = p.copy(), p.copy()
        plus[idx] += h
        minus[idx] -= h
        numeric = (heatmap_loss(plus, y) - heatmap_loss(minus, y)) / (2 * h)
        fd_worst = max(fd_worst, abs(numeric - analytic))
    c = rng.normal(size=(1, 3, 3, 2))
    c_hat = rng.normal(size=(1, 3, 3, 2)) * 2
    mask = np.ones((1, 3, 3), dtype=bool)
    z = rng.uniform(0.3, 1.0, size=(1, 3, 3))
    z_hat = rng.uniform(0.3, 1.0, size=(1, 3, 3))
    oracle_worst = max(
        abs(heatmap_loss(p, y) - bce_oracle(p, y)),
        abs(center_loss(c_hat, c, mask) - center_oracle(c_hat, c, mask)),
        abs(depth_loss(z_hat, z, mask) - depth_oracle(z_hat, z, mask)),
    )
    ok = fd_worst < 1e-4 and oracle_worst < 1e-9
    assert _line(
        "loss-checks",
        ok,
        f"finite-diff worst={fd_worst:.2e} (<1e-4), oracle worst={oracle_worst:.2e} (<1e-9)",
    )


def test_label_propagation_noise_study():
    """3 px click noise + slight pose error: drift lands in the 3-10 px band."""
    from kp3d.dataset import propagate_labels, select_label_views
    from kp3d.geometry import ProjectionMatrix, project

    start = time.perf_counter()
    rng = np.random.default_rng(3005)
    seed = 4000
    scene = make_valve_scene(seed)
    seq = simulate_sequence(scene, seed, sequence_id="prop")
    believed = perturb_poses(seq, rot_sigma=0.003, trans_sigma=0.002, seed=seed)
    a, b = select_label_views(believed)
    clicks, types = [], []
    P_a = ProjectionMatrix.from_camera(seq.rig.left, seq.frames[a].left_pose)
    P_b = ProjectionMatrix.from_camera(seq.rig.left, seq.frames[b].left_pose)
    clicks_a = [project(P_a, X) for _, X in seq.labels[0].all_keypoints()]
    clicks_b = [project(P_b, X) for _, X in seq.labels[0].all_keypoints()]
    types = [t for t, _ in seq.labels[0].all_keypoints()]
    clicks_a = np.asarray(clicks_a) + rng.normal(0, 3.0, size=(len(clicks_a), 2))
    clicks_b = np.asarray(clicks_b) + rng.normal(0, 3.0, size=(len(clicks_b), 2))
    result = propagate_labels(believed, a, b, clicks_a, clicks_b, valve_category(), types)
    drifts = []
    for index, frame_labels in enumerate(result.per_frame):
        P = ProjectionMatrix.from_camera(seq.rig.left, seq.frames[index].left_pose)
        for k, (_, X) in enumerate(seq.labels[0].all_keypoints()):
            if not frame_labels.visible[k]:
                continue
            expected = project(P, X)
            if expected is not None:
                drifts.append(float(np.linalg.norm(frame_labels.positions[k] - expected)))
    elapsed = time.perf_counter() - start
    mean_drift = float(np.mean(drifts))
    ok = 3.0 <= mean_drift <= 10.0 and elapsed < 60.0
    assert _line(
        "label-propagation-noise",
        ok,
        f"mean drift={mean_drift:.2f} px (3..10) over {len(drifts)} labels, "
        f"{elapsed:.1f}s (<60)",
    )


def test_stage_timing_budget():
    """Four non-prediction stages below 25 ms/frame, mean over 500 frames."""
    config = Config()
    scene = make_valve_scene(5000)
    seq = simulate_sequence(scene, 5000, sequence_id="bench")
    timings = bench_stages(seq, valve_category(), config, n_frames=500)
    total = sum(timings.values())
    ok = total < 25.0
    detail = ", ".join(f"{k}={v:.2f}" for k, v in sorted(timings.items()))
    assert _line("stage-timing", ok, f"total={total:.2f} ms/frame (<25; {detail})")


def test_cli_chain_determinism(tmp_path):
    """simulate + targets + track + eval twice: byte-identical outputs."""

    def run_chain(root):
        root.mkdir()
        args_common = ["--set", "duration=2.0", "--seed", "600"]
        assert cli_main(
            ["simulate", "--scene", "valve", "--out", str(root), "--train", "1",
             "--test", "0", *args_common]
        ) == 0
        seq_dir = root / "valve_000"
        assert cli_main(["targets", "--sequence", str(seq_dir), *args_common]) == 0
        assert cli_main(
            ["track", "--sequence", str(seq_dir), "--out", str(root / "results.txt"),
             "--mode", "stereo", *args_common]
        ) == 0
        assert cli_main(
            ["eval", "--sequence", str(seq_dir), "--results", str(root / "results.txt"),
             "--out", str(root / "report.json"), *args_common]
        ) == 0
        tensors = sorted((seq_dir / "targets").iterdir())
        return {
            "poses": (seq_dir / "poses.txt").read_bytes(),
            "labels": (seq_dir / "labels.json").read_bytes(),
            "manifest": (seq_dir / "manifest.json").read_bytes(),
            "results": (root / "results.txt").read_bytes(),
            "report": (root / "report.json").read_bytes(),
            "tensor_names": [t.name for t in tensors],
            "tensor_bytes": b"".join(t.read_bytes() for t in tensors[:24]),
        }

    first = run_chain(tmp_path / "run1")
    second = run_chain(tmp_path / "run2")
    ok = first == second
    assert _line(
        "cli-determinism",
        ok,
        "poses/labels/manifest/results/report and tensor files byte-identical",
    )
