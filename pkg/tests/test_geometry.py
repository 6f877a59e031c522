import numpy as np
import pytest

from pacfusion import geometry, kitti
from pacfusion.types import Box3D, PointCloud

from conftest import make_calib


def _cloud(xyz):
    xyz = np.asarray(xyz, dtype=float)
    return PointCloud(xyz=xyz, reflectance=np.zeros(len(xyz)))


class TestProjection:
    def test_identity_calib_origin(self):
        calib = kitti.CalibrationSet.identity()
        # camera frame == lidar frame under identity Tr; point at z=2 ahead
        px = geometry.project_points(_cloud([[0, 0, 2]]), calib, (10, 10))
        assert px.u[0] == 0 and px.v[0] == 0
        assert px.depth[0] == 2
        assert px.valid[0]

    def test_behind_camera_invalid(self):
        calib = kitti.CalibrationSet.identity()
        px = geometry.project_points(_cloud([[0, 0, -2]]), calib, (10, 10))
        assert not px.valid[0]

    def test_hand_built_focal_center(self):
        # LIDAR (2,0,0) maps to camera (0,0,2); focal 100, center (50,50)
        calib = make_calib(f=100.0, cx=50.0, cy=50.0)
        px = geometry.project_points(_cloud([[2, 0, 0]]), calib, (100, 100))
        assert px.u[0] == pytest.approx(50.0)
        assert px.v[0] == pytest.approx(50.0)
        assert px.depth[0] == pytest.approx(2.0)

    def test_pinhole_formula_oracle(self, rng):
        f, cx, cy = 120.0, 60.0, 40.0
        calib = make_calib(f=f, cx=cx, cy=cy)
        xyz = rng.uniform([2, -5, -2], [50, 5, 2], size=(200, 3))
        px = geometry.project_points(_cloud(xyz), calib, (80, 120))
        for i, (x, y, z) in enumerate(xyz):
            # independent scalar pinhole: cam = (-y, -z, x)
            u = f * (-y) / x + cx
            v = f * (-z) / x + cy
            assert px.u[i] == pytest.approx(u, abs=1e-9)
            assert px.v[i] == pytest.approx(v, abs=1e-9)
            assert px.depth[i] == pytest.approx(x, abs=1e-9)

    def test_index_alignment(self, rng):
        calib = make_calib()
        xyz = rng.uniform(-50, 50, size=(123, 3))
        px = geometry.project_points(_cloud(xyz), calib, (64, 192))
        assert len(px) == 123


class TestFilterRegion:
    def test_closed_bounds(self):
        roi = geometry.RegionOfInterest()
        cloud = _cloud([[0.0, -40.0, -1.0], [70.4, 40.0, 3.0], [70.5, 0.0, 0.0]])
        kept, idx = geometry.filter_region(cloud, roi)
        assert len(kept) == 2
        np.testing.assert_array_equal(idx, [0, 1])

    def test_idempotent(self, rng):
        roi = geometry.RegionOfInterest()
        cloud = _cloud(rng.uniform(-50, 80, size=(500, 3)))
        once, _ = geometry.filter_region(cloud, roi)
        twice, _ = geometry.filter_region(once, roi)
        np.testing.assert_array_equal(once.xyz, twice.xyz)

    def test_bad_roi(self):
        with pytest.raises(ValueError):
            geometry.RegionOfInterest(x_min=1, x_max=0)


class TestSubsample:
    def test_exact_count_identity(self, rng):
        cloud = _cloud(rng.normal(size=(5, 3)))
        out, idx = geometry.subsample(cloud, 5, seed=1)
        assert sorted(idx.tolist()) == [0, 1, 2, 3, 4]

    def test_upsampling_keeps_all(self, rng):
        cloud = _cloud(rng.normal(size=(3, 3)))
        out, idx = geometry.subsample(cloud, 5, seed=1)
        assert len(out) == 5
        assert set(idx.tolist()) >= {0, 1, 2}

    def test_seed_determinism(self, rng):
        cloud = _cloud(rng.normal(size=(20000, 3)))
        _, a = geometry.subsample(cloud, 16384, seed=42)
        _, b = geometry.subsample(cloud, 16384, seed=42)
        np.testing.assert_array_equal(a, b)

    def test_no_duplicates_when_enough(self, rng):
        cloud = _cloud(rng.normal(size=(100, 3)))
        _, idx = geometry.subsample(cloud, 60, seed=3)
        assert len(set(idx.tolist())) == 60


class TestPointInBox:
    BOX = Box3D(x=0, y=0, z=0, h=2, w=2, l=2, ry=0)

    def test_interior(self):
        assert geometry.point_in_box((0, -1, 0), self.BOX)

    def test_far_outside(self):
        assert not geometry.point_in_box((10, 0, 0), self.BOX)

    def test_yawed_box(self):
        box = Box3D(x=0, y=0, z=0, h=2, w=2, l=4, ry=np.pi / 2)
        assert geometry.point_in_box((0.9, -1, 1.9), box)
        box0 = Box3D(x=0, y=0, z=0, h=2, w=2, l=4, ry=0)
        assert not geometry.point_in_box((0.9, -1, 1.9), box0)

    def test_yaw_periodicity(self, rng):
        for _ in range(50):
            ry = float(rng.uniform(-np.pi, np.pi))
            p = rng.uniform(-3, 3, size=3)
            a = Box3D(x=0, y=0, z=0, h=2, w=1.5, l=3, ry=ry)
            shifted = ry + 2 * np.pi if ry < 0 else ry - 2 * np.pi
            # dontcare skips the [-pi, pi] range check so we can shift by 2*pi
            b = Box3D(x=0, y=0, z=0, h=2, w=1.5, l=3, ry=shifted, dontcare=True)
            assert geometry.point_in_box(p, a) == geometry.point_in_box(p, b)

    def test_margin(self):
        assert not geometry.point_in_box((1.4, -1, 0), self.BOX)
        assert geometry.point_in_box((1.4, -1, 0), self.BOX, margin=0.5)

    def test_vectorized_matches_scalar(self, rng):
        box = Box3D(x=1, y=2, z=10, h=1.5, w=1.7, l=4, ry=0.7)
        pts = rng.uniform([-5, -2, 5], [7, 5, 15], size=(200, 3))
        vec = geometry.points_in_box(pts, box)
        for i, p in enumerate(pts):
            assert vec[i] == geometry.point_in_box(p, box)


def test_lidar_to_camera_chain(rng):
    calib = make_calib()
    xyz = rng.normal(size=(10, 3))
    cam = geometry.lidar_to_camera(xyz, calib)
    for i, p in enumerate(xyz):
        expected = calib.R0_rect @ (calib.Tr_velo_to_cam @ np.append(p, 1.0))
        np.testing.assert_allclose(cam[i], expected, atol=1e-12)
