import numpy as np
import pytest

from kp3d.errors import DegenerateGeometry
from kp3d.geometry import (
    CameraIntrinsics,
    ProjectionMatrix,
    RigidTransform,
    StereoRig,
    backproject_ray,
    epipolar_residual,
    fundamental_matrix,
    project,
    project_points,
    triangulate_dlt,
)
from util import (
    default_intrinsics,
    default_rig,
    look_at_pose,
    random_intrinsics,
    random_pose,
    random_rig,
    random_rotation,
)


def camera_at_origin(K: CameraIntrinsics) -> ProjectionMatrix:
    return ProjectionMatrix.from_camera(K, RigidTransform.identity())


def oracle_project(K: CameraIntrinsics, camera_in_base: RigidTransform, X):
    """Independent projection via explicit 4x4 homogeneous matrices."""
    K4 = np.eye(4)
    K4[:3, :3] = K.matrix()
    T = np.linalg.inv(camera_in_base.matrix())
    xh = K4 @ T @ np.append(np.asarray(X, float), 1.0)
    return xh[:2] / xh[2], xh[2]


class TestProject:
    def test_optical_axis_point_maps_to_principal_point(self):
        K = CameraIntrinsics(500, 500, 320, 240, 640, 480)
        uv = project(camera_at_origin(K), [0.0, 0.0, 1.0])
        np.testing.assert_allclose(uv, [320.0, 240.0], atol=1e-12)

    def test_pinhole_formula(self):
        K = CameraIntrinsics(500, 500, 320, 240, 640, 480)
        uv = project(camera_at_origin(K), [0.1, 0.0, 1.0])
        np.testing.assert_allclose(uv, [370.0, 240.0], atol=1e-12)

    def test_matches_homogeneous_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            K = random_intrinsics(rng)
            pose = random_pose(rng)
            # point some distance along the camera's viewing axis, in base frame
            X = pose.apply(np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.2, 3.0)]))
            expected, depth = oracle_project(K, pose, X)
            assert depth > 0
            uv = project(ProjectionMatrix.from_camera(K, pose), X)
            np.testing.assert_allclose(uv, expected, atol=1e-9)

    def test_behind_camera_returns_none(self):
        K = default_intrinsics()
        assert project(camera_at_origin(K), [0.0, 0.0, -1.0]) is None
        assert project(camera_at_origin(K), [0.0, 0.0, 0.0]) is None

    def test_project_points_masks_behind(self):
        K = default_intrinsics()
        uv, depth = project_points(
            camera_at_origin(K), [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]
        )
        assert depth[0] > 0 and depth[1] < 0
        assert np.all(np.isfinite(uv[0])) and np.all(np.isnan(uv[1]))

    def test_projection_matrix_agrees_with_two_step_path(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            K = random_intrinsics(rng)
            pose = random_pose(rng)
            X = pose.apply(np.array([rng.uniform(-0.4, 0.4), rng.uniform(-0.4, 0.4), rng.uniform(0.3, 2.0)]))
            # explicit two-step: transform into the camera frame, then intrinsics
            Xc = pose.inverse().apply(X)
            two_step = np.array(
                [K.fx * Xc[0] / Xc[2] + K.cx, K.fy * Xc[1] / Xc[2] + K.cy]
            )
            uv = project(ProjectionMatrix.from_camera(K, pose), X)
            np.testing.assert_allclose(uv, two_step, atol=1e-9)

    def test_rejects_nonfinite_point(self):
        K = default_intrinsics()
        with pytest.raises(ValueError):
            project(camera_at_origin(K), [np.nan, 0.0, 1.0])


class TestRigidTransform:
    def test_compose_with_inverse_is_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            t = random_pose(rng)
            m = t.compose(t.inverse()).matrix()
            np.testing.assert_allclose(m, np.eye(4), atol=1e-9)
            m = t.inverse().compose(t).matrix()
            np.testing.assert_allclose(m, np.eye(4), atol=1e-9)

    def test_compose_is_associative(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            a, b, c = (random_pose(rng) for _ in range(3))
            lhs = a.compose(b).compose(c).matrix()
            rhs = a.compose(b.compose(c)).matrix()
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_apply_matches_matrix_form(self):
        rng = np.random.default_rng(5)
        t = random_pose(rng)
        pts = rng.normal(size=(10, 3))
        expected = (t.matrix() @ np.hstack([pts, np.ones((10, 1))]).T).T[:, :3]
        np.testing.assert_allclose(t.apply(pts), expected, atol=1e-12)

    def test_rejects_non_orthonormal_rotation(self):
        with pytest.raises(ValueError, match="orthonormal"):
            RigidTransform(np.eye(3) * 1.01, np.zeros(3))

    def test_rejects_reflection(self):
        m = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError, match="det"):
            RigidTransform(m, np.zeros(3))


class TestIntrinsics:
    def test_matrix_is_upper_triangular_with_unit_corner(self):
        K = default_intrinsics().matrix()
        assert K[2, 2] == 1.0
        assert K[1, 0] == K[2, 0] == K[2, 1] == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(-1.0, 500, 320, 240, 640, 480)
        with pytest.raises(ValueError):
            CameraIntrinsics(500, 500, 700, 240, 640, 480)

    def test_inverse_matrix(self):
        K = default_intrinsics()
        np.testing.assert_allclose(
            K.inverse_matrix() @ K.matrix(), np.eye(3), atol=1e-12
        )


class TestFundamentalMatrix:
    def test_rectified_rig_has_horizontal_epipolar_lines(self):
        F = fundamental_matrix(default_rig())
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = np.array([rng.uniform(0, 1280), rng.uniform(0, 720), 1.0])
            line = F @ x
            assert abs(line[0]) < 1e-12

    def test_random_rigs_satisfy_epipolar_constraint(self):
        rng = np.random.default_rng(12)
        count = 0
        while count < 1000:
            rig = random_rig(rng)
            F = fundamental_matrix(rig)
            left_pose = random_pose(rng)
            right_pose = left_pose.compose(rig.t_left_right)
            P_l = ProjectionMatrix.from_camera(rig.left, left_pose)
            P_r = ProjectionMatrix.from_camera(rig.right, right_pose)
            for _ in range(10):
                Xc = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.3, 2.0)])
                X = left_pose.apply(Xc)
                xl, xr = project(P_l, X), project(P_r, X)
                if xl is None or xr is None:
                    continue
                assert abs(epipolar_residual(F, xl, xr)) < 1e-6
                count += 1

    def test_rank_two(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            F = fundamental_matrix(random_rig(rng))
            s = np.linalg.svd(F, compute_uv=False)
            assert s[2] < 1e-9 * s[0]

    def test_unit_scale(self):
        F = fundamental_matrix(default_rig())
        assert np.isclose(np.linalg.norm(F), 1.0)

    def test_zero_baseline_rejected(self):
        cam = default_intrinsics()
        with pytest.raises(ValueError, match="baseline"):
            StereoRig(cam, cam, RigidTransform.identity())


def oracle_refine(observations, center, half_width=0.05, rounds=5, n=11):
    """Brute-force reprojection-error minimizer over a shrinking 3D grid."""
    best = np.asarray(center, dtype=float)
    for _ in range(rounds):
        ax = [np.linspace(c - half_width, c + half_width, n) for c in best]
        gx, gy, gz = np.meshgrid(*ax, indexing="ij")
        grid = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
        cost = np.zeros(len(grid))
        for P, xy in observations:
            uv, _ = project_points(P, grid)
            cost += np.sum((uv - np.asarray(xy)) ** 2, axis=1)
        best = grid[np.argmin(cost)]
        half_width /= 4.0
    return best


class TestTriangulateDlt:
    def two_view_setup(self):
        K = default_intrinsics()
        left = look_at_pose([0.0, -0.6, 0.4], [0.0, 0.0, 0.0])
        right = left.compose(default_rig().t_left_right)
        return (
            ProjectionMatrix.from_camera(K, left),
            ProjectionMatrix.from_camera(K, right),
        )

    def test_noise_free_round_trip(self):
        P_l, P_r = self.two_view_setup()
        X = np.array([0.2, -0.1, 0.8])
        obs = [(P_l, project(P_l, X)), (P_r, project(P_r, X))]
        np.testing.assert_allclose(triangulate_dlt(obs), X, atol=1e-9)

    def test_noisy_error_within_2x_of_nonlinear_oracle(self):
        rng = np.random.default_rng(21)
        K = default_intrinsics()
        rig = default_rig(baseline=0.06)
        dlt_errs, oracle_errs = [], []
        for _ in range(20):
            left = look_at_pose([rng.uniform(-0.1, 0.1), -0.6, rng.uniform(0.2, 0.5)], [0.0, 0.0, 0.0])
            right = left.compose(rig.t_left_right)
            P_l = ProjectionMatrix.from_camera(K, left)
            P_r = ProjectionMatrix.from_camera(K, right)
            # depth about 0.6 m from the left camera
            X = left.apply(np.array([rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), 0.6]))
            obs = [
                (P_l, project(P_l, X) + rng.normal(0, 0.5, size=2)),
                (P_r, project(P_r, X) + rng.normal(0, 0.5, size=2)),
            ]
            dlt_errs.append(np.linalg.norm(triangulate_dlt(obs) - X))
            oracle_errs.append(np.linalg.norm(oracle_refine(obs, X) - X))
        assert np.mean(dlt_errs) <= 2.0 * np.mean(oracle_errs)

    def test_four_views_label_propagation_case(self):
        rng = np.random.default_rng(22)
        K = default_intrinsics()
        X = np.array([0.05, -0.02, 0.1])
        noise = 0.3
        obs = []
        for angle in [0.0, 0.5, 1.2, 2.0]:
            eye = [0.7 * np.cos(angle), 0.7 * np.sin(angle), 0.5]
            P = ProjectionMatrix.from_camera(K, look_at_pose(eye, X))
            obs.append((P, project(P, X) + rng.normal(0, noise, size=2)))
        Xh = triangulate_dlt(obs)
        # residual reprojection error bounded by the max per-view noise
        residuals = [np.linalg.norm(project(P, Xh) - xy) for P, xy in obs]
        assert max(residuals) <= 3 * noise

    def test_coincident_centers_rejected(self):
        K = default_intrinsics()
        P = camera_at_origin(K)
        with pytest.raises(DegenerateGeometry, match="coincident"):
            triangulate_dlt([(P, [640.0, 360.0]), (P, [650.0, 360.0])])

    def test_needs_two_observations(self):
        K = default_intrinsics()
        with pytest.raises(ValueError):
            triangulate_dlt([(camera_at_origin(K), [640.0, 360.0])])

    def test_round_trip_many_random_poses(self):
        rng = np.random.default_rng(23)
        K = default_intrinsics()
        for _ in range(50):
            X = rng.uniform(-0.2, 0.2, size=3)
            poses = [
                look_at_pose(X + 0.8 * v / np.linalg.norm(v), X)
                for v in rng.normal(size=(3, 3))
            ]
            obs = []
            for pose in poses:
                P = ProjectionMatrix.from_camera(K, pose)
                uv = project(P, X)
                assert uv is not None
                obs.append((P, uv))
            np.testing.assert_allclose(triangulate_dlt(obs), X, atol=1e-9)


class TestBackprojectRay:
    def test_principal_point_gives_optical_axis(self):
        K = default_intrinsics()
        np.testing.assert_allclose(
            backproject_ray(K, [K.cx, K.cy]), [0.0, 0.0, 1.0], atol=1e-12
        )

    def test_45_degree_ray(self):
        K = default_intrinsics()
        np.testing.assert_allclose(
            backproject_ray(K, [K.cx + K.fx, K.cy]),
            np.array([1.0, 0.0, 1.0]) / np.sqrt(2.0),
            atol=1e-12,
        )

    def test_project_backproject_round_trip(self):
        rng = np.random.default_rng(31)
        K = default_intrinsics()
        P = camera_at_origin(K)
        for _ in range(100):
            xy = np.array([rng.uniform(0, K.width), rng.uniform(0, K.height)])
            ray = backproject_ray(K, xy)
            np.testing.assert_allclose(project(P, ray * 2.0), xy, atol=1e-12)
