import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import brute_residual, grid_search_rotation, lsq_cost, random_transform
from tagsight.errors import (AllCorrespondencesRejected, DegenerateConfiguration, EmptyCloud, InsufficientNeighbors,
                             NoValidDepth)
from tagsight.features import Match, identify
from tagsight.features.surf import Keypoint
from tagsight.geometry import (DEFAULT_INTRINSICS, DepthImage, PointCloud, RigidTransform, apply, axis_angle_matrix,
                               centroid, compose, invert, random_subsample, rotation_angle_deg, voxel_downsample)
from tagsight.harness.bench import bench_pose
from tagsight.harness.objects import MUG, build_model
from tagsight.harness.render import empty_scene, generate_scene
from tagsight.registration import (IcpParams, Method, NearestNeighborIndex, PoseConfig, PoseEstimate, drop_sparse,
                                   estimate_normals, estimate_pose, fpfh, icp, init_pose, kabsch_batch, kabsch_solve,
                                   nearest_neighbor_index, residual_error, sacia_align)
from tagsight.registration.fpfh import BINS


@pytest.fixture(scope="module")
def mug_model():
    return build_model(MUG)


@pytest.fixture(scope="module")
def mug_cloud(mug_model):
    """3000 random surface points of the full mug model."""
    return random_subsample(mug_model, 3000, seed=1)


@pytest.fixture(scope="module")
def mug_coarse(mug_model):
    """The mug on a 5 mm grid with isolated points removed, as the SAC-IA stage sees it."""
    return drop_sparse(voxel_downsample(mug_model, 0.005), 0.01)


class TestKabsch:
    def test_identity(self):
        pts = np.random.default_rng(0).normal(size=(10, 3))
        t = kabsch_solve(pts, pts)
        np.testing.assert_allclose(t.as_matrix(), np.eye(4), atol=1e-12)

    def test_tetrahedron_translation(self):
        tet = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
        t = kabsch_solve(tet, tet + [0, 1, 0])
        np.testing.assert_allclose(t.rotation, np.eye(3), atol=1e-9)
        np.testing.assert_allclose(t.translation, [0, 1, 0], atol=1e-9)

    def test_37_degrees_about_diagonal_against_grid(self):
        src = np.random.default_rng(5).normal(size=(12, 3))
        r = axis_angle_matrix(np.array([1, 1, 0]) / math.sqrt(2), math.radians(37))
        tgt = src @ r.T
        t = kabsch_solve(src, tgt)
        np.testing.assert_allclose(t.rotation, r, atol=1e-6)
        r_grid, c_grid = grid_search_rotation(src, tgt)
        assert rotation_angle_deg(r_grid.T @ t.rotation) <= 0.5
        assert lsq_cost(t, src, tgt) <= c_grid + 1e-6

    @pytest.mark.parametrize("seed", range(3))
    def test_noisy_pairs_beat_grid(self, seed):
        rng = np.random.default_rng(100 + seed)
        src = rng.normal(size=(15, 3))
        truth = random_transform(rng)
        tgt = apply(truth, src) + rng.normal(0, 0.05, src.shape)
        t = kabsch_solve(src, tgt)
        r_grid, c_grid = grid_search_rotation(src, tgt)
        assert rotation_angle_deg(r_grid.T @ t.rotation) <= 0.5
        assert lsq_cost(t, src, tgt) <= c_grid + 1e-6

    def test_reflection_never_leaks(self):
        src = np.random.default_rng(1).normal(size=(8, 3))
        mirrored = src * [1, 1, -1]
        assert np.linalg.det(kabsch_solve(src, mirrored).rotation) == pytest.approx(1.0)

    @pytest.mark.parametrize("pts", [
        np.zeros((4, 3)),
        np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], float),
        np.zeros((2, 3)),
    ])
    def test_degenerate(self, pts):
        with pytest.raises(DegenerateConfiguration):
            kabsch_solve(pts, pts)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            kabsch_solve(np.zeros((4, 3)), np.zeros((5, 3)))

    @given(st.integers(0, 2 ** 32 - 1))
    def test_recovers_random_transform(self, seed):
        rng = np.random.default_rng(seed)
        src = rng.normal(size=(6, 3))
        truth = random_transform(rng)
        t = kabsch_solve(src, apply(truth, src))
        assert np.linalg.det(t.rotation) == pytest.approx(1.0, abs=1e-9)
        np.testing.assert_allclose(t.as_matrix(), truth.as_matrix(), atol=1e-8)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(9)
        src = rng.normal(size=(20, 4, 3))
        tgt = np.stack([apply(random_transform(rng), s) + rng.normal(0, 0.1, s.shape) for s in src])
        r, t, bad = kabsch_batch(src, tgt)
        assert not bad.any()
        for k in range(20):
            one = kabsch_solve(src[k], tgt[k])
            np.testing.assert_allclose(r[k], one.rotation, atol=1e-10)
            np.testing.assert_allclose(t[k], one.translation, atol=1e-10)

    def test_batch_flags_collinear(self):
        line = np.array([[[0, 0, 0], [1, 1, 1], [2, 2, 2]]], float)
        _, _, bad = kabsch_batch(line, line)
        assert bad.tolist() == [True]


class TestNearestNeighbor:
    def test_single_point(self):
        idx = nearest_neighbor_index(PointCloud(np.array([[1.0, 2.0, 3.0]])))
        p, d = idx.nearest([10, -4, 0.5])
        np.testing.assert_array_equal(p, [1, 2, 3])
        assert d == pytest.approx(math.dist((1, 2, 3), (10, -4, 0.5)))

    def test_grid_node(self):
        g = np.stack(np.meshgrid(*[np.arange(5) * 0.1] * 3), -1).reshape(-1, 3)
        p, d = NearestNeighborIndex(g).nearest([0.2, 0.3, 0.1])
        np.testing.assert_allclose(p, [0.2, 0.3, 0.1])
        assert d == pytest.approx(0.0, abs=1e-15)

    def test_matches_linear_scan(self):
        rng = np.random.default_rng(4)
        pts = rng.random((1000, 3))
        q = rng.random((100, 3))
        d, i = NearestNeighborIndex(pts).query(q)
        for k in range(100):
            scan = [math.dist(q[k], p) for p in pts]
            assert i[k] == int(np.argmin(scan))
            assert d[k] == pytest.approx(min(scan), rel=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyCloud):
            nearest_neighbor_index(PointCloud(np.zeros((0, 3))))


class TestIcp:
    def _check_history(self, res):
        assert all(b <= a + 1e-15 for a, b in zip(res.mse_history, res.mse_history[1:]))

    def test_identity_fixture(self, mug_cloud):
        res = icp(mug_cloud, mug_cloud)
        np.testing.assert_allclose(res.transform.as_matrix(), np.eye(4), atol=1e-6)
        assert res.residual < 1e-9 and res.iterations <= 2
        self._check_history(res)

    def test_translation_fixture(self, mug_cloud):
        scene = apply(RigidTransform.from_translation(0.01, 0, 0), mug_cloud)
        res = icp(mug_cloud, scene)
        np.testing.assert_allclose(res.transform.translation, [0.01, 0, 0], atol=1e-4)
        assert rotation_angle_deg(res.transform.rotation) < 0.1
        self._check_history(res)

    @pytest.mark.parametrize("seed", range(3))
    def test_noisy_rotation_fixture(self, mug_model, mug_cloud, seed):
        rng = np.random.default_rng(seed)
        truth = RigidTransform.from_axis_angle((0, 0, 1), 10.0, (0.02, 0.0, 0.0))
        sample = random_subsample(mug_model, 4000, seed=100 + seed)
        scene = PointCloud(apply(truth, sample.points) + rng.normal(0, 0.001, sample.points.shape))
        # start 5 deg and 1 cm away from the truth
        off = RigidTransform.from_axis_angle(rng.normal(size=3), 5.0, 0.01 * np.array([1.0, 0.0, 0.0]))
        init = compose(truth, off)
        res = icp(mug_cloud, scene, init)
        pose = compose(init, res.transform)
        assert np.linalg.norm(pose.translation - truth.translation) < 0.005
        assert rotation_angle_deg(pose.rotation.T @ truth.rotation) < 2.0
        self._check_history(res)

    def test_incremental_convention(self, mug_cloud):
        truth = RigidTransform.from_axis_angle((0, 1, 0), 4.0, (0.003, -0.002, 0.004))
        init = RigidTransform.from_translation(0.001, 0, 0)
        res = icp(mug_cloud, apply(truth, mug_cloud), init)
        np.testing.assert_allclose(compose(init, res.transform).as_matrix(), truth.as_matrix(), atol=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_mse_non_increasing_random_starts(self, mug_cloud, seed):
        rng = np.random.default_rng(seed)
        init = RigidTransform.from_axis_angle(rng.normal(size=3), 15.0, rng.uniform(-0.02, 0.02, 3))
        self._check_history(icp(mug_cloud, apply(RigidTransform.from_translation(0, 0, 0.4), mug_cloud), init))

    def test_max_iterations_respected(self, mug_cloud):
        scene = apply(RigidTransform.from_axis_angle((0, 0, 1), 20.0), mug_cloud)
        assert icp(mug_cloud, scene, params=IcpParams(max_iterations=3)).iterations == 3

    def test_all_rejected(self):
        # distances 0, 1 mm and 4 m: the median is 1 mm, so the far pair is dropped and two remain
        scene = PointCloud(np.array([[0, 0, 0], [5, 5, 5], [9, 9, 9]], float))
        template = PointCloud(np.array([[0, 0, 0], [0, 0, 0.001], [0, 0, 4.0]], float))
        with pytest.raises(AllCorrespondencesRejected):
            icp(template, scene)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            icp(PointCloud(np.zeros((2, 3))), PointCloud(np.zeros((5, 3))))

    @pytest.mark.parametrize("kw", [dict(max_iterations=0), dict(mse_delta_tolerance=0.0),
                                    dict(correspondence_reject_multiplier=-1.0)])
    def test_params_invariants(self, kw):
        with pytest.raises(ValueError):
            IcpParams(**kw)


def _kp(u, v):
    return Keypoint(float(u), float(v), 2.0, 1.0)


class TestInitPose:
    k = DEFAULT_INTRINSICS

    def test_single_match_on_axis(self):
        depth = DepthImage(np.ones((480, 640)))
        template = PointCloud(np.array([[-0.1, 0, 0], [0.1, 0, 0], [0, 0.1, 0], [0, -0.1, 0]]))
        t = init_pose([Match(0, 0, 0.0)], [_kp(319.5, 239.5)], depth, self.k, template)
        np.testing.assert_allclose(t.translation, [0, 0, 1.0])
        np.testing.assert_array_equal(t.rotation, np.eye(3))

    def test_symmetric_matches(self):
        z = 0.7
        depth = DepthImage(np.full((480, 640), z))
        kps = [_kp(319.5 + du, 239.5 + dv) for du, dv in [(-40, 10), (40, -10), (-5, -30), (5, 30)]]
        matches = [Match(i, i, 0.0) for i in range(4)]
        t = init_pose(matches, kps, depth, self.k, PointCloud(np.zeros((1, 3))))
        np.testing.assert_allclose(t.translation, [0, 0, z], atol=1e-12)

    def test_median_fallback(self):
        d = np.zeros((480, 640))
        d[100, 100] = 0.5
        d[100, 300] = 0.9
        d[100, 200] = 0.6
        kps = [_kp(100, 100), _kp(300, 100), _kp(200, 100), _kp(200, 400)]
        d[250, 200] = 0.0  # centroid pixel (200, 175) is empty as well
        t = init_pose([Match(i, i, 0.0) for i in range(4)], kps, DepthImage(d), self.k, PointCloud(np.zeros((1, 3))))
        assert t.translation[2] == pytest.approx(0.6)

    def test_no_valid_depth(self):
        with pytest.raises(NoValidDepth):
            init_pose([Match(0, 0, 0.0)], [_kp(10, 10)], DepthImage(np.zeros((480, 640))), self.k,
                      PointCloud(np.zeros((1, 3))))

    def test_needs_a_match(self):
        with pytest.raises(ValueError):
            init_pose([], [], DepthImage(np.ones((480, 640))), self.k, PointCloud(np.zeros((1, 3))))

    @pytest.mark.parametrize("oid,yaw,d", [("bottle", 10.0, 0.35), ("cup", -25.0, 0.45), ("mug", 30.0, 0.4)])
    def test_anchor_near_visible_surface(self, db, oid, yaw, d):
        scene = generate_scene(db, oid, bench_pose(yaw, d))
        ident = identify(scene.gray, db)
        obj = db[ident.object_index]
        cloud = obj.viewpoint_clouds[0]
        t = init_pose(ident.matches, ident.scene_keypoints, scene.depth, scene.intrinsics, cloud)
        anchor = t.translation + centroid(cloud)
        assert np.linalg.norm(anchor - centroid(scene.cloud)) < 0.03


@pytest.fixture(scope="module")
def view0(db):
    # the cup seen exactly as in its first capture
    return generate_scene(db, "cup", bench_pose(0.0, 0.4))


def plane_grid(spacing=0.003, n=20):
    g = np.stack(np.meshgrid(np.arange(n) * spacing, np.arange(n) * spacing), -1).reshape(-1, 2)
    return PointCloud(np.column_stack([g, np.full(len(g), 0.5)]))


class TestFpfh:
    def test_plane_single_dominant_bin(self):
        # coplanar normals: theta = alpha = phi = 0, the middle bin of each block
        h = fpfh(plane_grid())
        assert h.shape == (400, 33)
        expected = np.zeros(33)
        expected[[BINS // 2, BINS + BINS // 2, 2 * BINS + BINS // 2]] = 100.0
        np.testing.assert_allclose(h, np.tile(expected, (400, 1)), atol=1e-9)

    def test_blocks_sum_to_100(self, mug_coarse):
        h = fpfh(mug_coarse)
        assert (h >= 0).all()
        np.testing.assert_allclose(h.reshape(-1, 3, BINS).sum(axis=2), 100.0, atol=1e-3)

    def test_deterministic(self, mug_coarse):
        assert np.array_equal(fpfh(mug_coarse), fpfh(mug_coarse))

    @pytest.mark.parametrize("seed", range(3))
    def test_rigid_invariance(self, mug_cloud, seed):
        # jittered off the model lattice, which would put neighbours exactly on the search radius
        pts = mug_cloud.points + np.random.default_rng(seed).normal(0, 1e-4, mug_cloud.points.shape)
        cloud = drop_sparse(PointCloud(pts), 0.01)
        t = random_transform(np.random.default_rng(seed), 0.5)
        moved = apply(t, cloud)
        vp = np.array([0.0, 0.0, 0.4])
        a = fpfh(cloud, viewpoint=vp)
        b = fpfh(moved, viewpoint=apply(t, vp))
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_normals_face_viewpoint(self):
        n = estimate_normals(plane_grid(), 0.01)
        np.testing.assert_allclose(n, np.tile([0, 0, -1.0], (400, 1)), atol=1e-9)

    def test_isolated_point(self):
        pts = np.vstack([plane_grid().points, [[1.0, 1.0, 1.0]]])
        with pytest.raises(InsufficientNeighbors):
            fpfh(PointCloud(pts))

    def test_too_few_points(self):
        with pytest.raises(InsufficientNeighbors):
            fpfh(PointCloud(np.zeros((5, 3))))

    def test_radius_order(self):
        with pytest.raises(ValueError):
            fpfh(plane_grid(), 0.03, 0.02)

    def test_drop_sparse_cascades(self):
        # a chain where removing the end starves its neighbour
        chain = np.array([[0, 0, 0], [0.01, 0, 0], [0.02, 0, 0], [0.03, 0, 0]], float)
        blob = np.random.default_rng(0).normal(0, 0.001, (20, 3)) + 1.0
        out = drop_sparse(PointCloud(np.vstack([chain, blob])), 0.015, min_neighbors=3)
        assert len(out) == 20 and out.points.min() > 0.9


class TestSacia:
    def test_self_alignment(self, self_fit):
        assert self_fit[1] < 0.005

    def test_seed_determinism(self, mug_coarse):
        a = sacia_align(mug_coarse, mug_coarse, 3, 200, seed=7)
        b = sacia_align(mug_coarse, mug_coarse, 3, 200, seed=7)
        assert np.array_equal(a[0].as_matrix(), b[0].as_matrix()) and a[1] == b[1]

    def test_quarter_turn_then_icp(self, mug_coarse, mug_cloud, self_fit):
        truth = RigidTransform.from_axis_angle((1, 0, 0), 90.0, (0.0, 0.0, 0.0))
        scene = apply(truth, mug_coarse)
        m_ini, fit = sacia_align(mug_coarse, scene, 3, 500, seed=0)
        assert fit <= 2 * max(self_fit[1], 1e-3)
        res = icp(mug_coarse, scene, m_ini)
        assert res.residual < 0.005

    def test_validation(self, mug_coarse):
        with pytest.raises(ValueError):
            sacia_align(mug_coarse, mug_coarse, n_samples=2)
        with pytest.raises(ValueError):
            sacia_align(mug_coarse, mug_coarse, iterations=0)


@pytest.fixture(scope="module")
def self_fit(mug_coarse):
    return sacia_align(mug_coarse, mug_coarse, 3, 500, seed=0)


class TestResidual:
    def test_identical(self):
        c = PointCloud(np.random.default_rng(0).random((30, 3)))
        assert residual_error(c, c) == 0.0

    def test_forced_example(self):
        target = PointCloud(np.array([[0, 0, 0], [1, 0, 0]], float))
        template = PointCloud(np.array([[0.1, 0, 0], [1.1, 0, 0]], float))
        assert residual_error(target, template) == pytest.approx(0.1, abs=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_brute_force_exact(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.random((50, 3)), rng.random((50, 3))
        assert residual_error(PointCloud(a), PointCloud(b)) == brute_residual(a, b)

    def test_empty(self):
        with pytest.raises(EmptyCloud):
            residual_error(PointCloud(np.zeros((0, 3))), PointCloud(np.ones((1, 3))))

    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 20))
    def test_zero_iff_covered(self, seed, n):
        rng = np.random.default_rng(seed)
        template = rng.random((n + 5, 3))
        pick = rng.integers(0, n + 5, n)
        assert residual_error(PointCloud(template[pick]), PointCloud(template)) == 0.0
        outsider = np.vstack([template[pick], [[2.0, 2.0, 2.0]]])
        assert residual_error(PointCloud(outsider), PointCloud(template)) > 0.0


class TestEstimatePose:
    def _run(self, method, scene, db, seed=0):
        return estimate_pose(method, scene.gray, scene.depth, scene.intrinsics, scene.cloud, db, PoseConfig(seed=seed))

    def test_lf_icp_on_capture_view(self, db, view0):
        res = self._run(Method.LF_ICP, view0, db)
        assert res.object_id == "cup"
        assert res.estimate.residual < 0.002

    def test_noise_scene_absent(self, db):
        scene = empty_scene(3)
        assert self._run(Method.LF_ICP, scene, db) is None

    def test_fpfh_only_and_lf_fpfh_agree_and_lf_is_faster(self, db, view0):
        t0 = time.perf_counter()
        lf = self._run(Method.LF_FPFH, view0, db)
        t_lf = time.perf_counter() - t0
        t0 = time.perf_counter()
        full = self._run(Method.FPFH_ONLY, view0, db)
        t_full = time.perf_counter() - t0
        assert lf.object_id == full.object_id == "cup"
        assert t_lf < t_full

    @pytest.mark.parametrize("method", list(Method))
    def test_pose_estimate_invariant(self, db, view0, method):
        est = self._run(method, view0, db).estimate
        np.testing.assert_allclose(est.m_pose.as_matrix(), compose(est.m_ini, est.m_icp).as_matrix(), atol=1e-9)
        assert est.residual >= 0

    @pytest.mark.parametrize("method", [Method.LF_FPFH, Method.FPFH_ONLY])
    def test_deterministic_for_seed(self, db, view0, method):
        a, b = self._run(method, view0, db, 3), self._run(method, view0, db, 3)
        assert a.object_id == b.object_id
        assert np.array_equal(a.object_pose.as_matrix(), b.object_pose.as_matrix())

    def test_object_pose_chain(self, db, view0):
        res = self._run(Method.LF_ICP, view0, db)
        obj = db[res.object_index]
        expected = compose(res.estimate.m_pose, obj.viewpoint_poses[res.estimate.viewpoint_index])
        np.testing.assert_allclose(res.object_pose.as_matrix(), expected.as_matrix(), atol=1e-12)

    def test_build_composes(self):
        a = RigidTransform.from_translation(0, 0, 1)
        b = RigidTransform.from_axis_angle((0, 1, 0), 30.0)
        est = PoseEstimate.build(a, b, 0.0, 0)
        np.testing.assert_allclose(est.m_pose.as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)
        np.testing.assert_allclose(compose(invert(a), est.m_pose).as_matrix(), b.as_matrix(), atol=1e-12)
