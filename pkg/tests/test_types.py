import numpy as np
import pytest

from pacfusion.types import (
    Box3D,
    FeatureMap,
    InvalidDimensionError,
    PointCloud,
    fusion_dims,
)


class TestFusionDims:
    def test_paper_dims(self):
        dims = fusion_dims(c_seg=4, c_lidar=128, d_o=64)
        assert dims.d_i == 135
        assert dims.out_width == 263

    def test_minimal_dims(self):
        dims = fusion_dims(c_seg=1, c_lidar=0, d_o=1)
        assert dims.d_i == 4
        assert dims.out_width == 6

    def test_small_dims(self):
        dims = fusion_dims(c_seg=2, c_lidar=2, d_o=3)
        assert dims.d_i == 7
        assert dims.out_width == 13

    @pytest.mark.parametrize("c_seg,c_lidar,d_o", [(0, 1, 1), (1, 1, 0), (1, -1, 1)])
    def test_invalid(self, c_seg, c_lidar, d_o):
        with pytest.raises(InvalidDimensionError):
            fusion_dims(c_seg, c_lidar, d_o)

    def test_offset_slot_always_three(self, rng):
        for _ in range(50):
            c_seg = int(rng.integers(1, 10))
            c_lidar = int(rng.integers(0, 10))
            d_o = int(rng.integers(1, 10))
            dims = fusion_dims(c_seg, c_lidar, d_o)
            assert dims.d_i - c_seg - c_lidar == 3

    def test_out_width_monotone(self):
        base = fusion_dims(2, 2, 2).out_width
        assert fusion_dims(3, 2, 2).out_width > base
        assert fusion_dims(2, 3, 2).out_width > base
        assert fusion_dims(2, 2, 3).out_width > base


class TestPointCloud:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            PointCloud(xyz=np.zeros((3, 3)), reflectance=np.zeros(2))

    def test_nonfinite_rejected(self):
        xyz = np.zeros((2, 3))
        xyz[1, 0] = np.nan
        with pytest.raises(ValueError):
            PointCloud(xyz=xyz, reflectance=np.zeros(2))

    def test_reflectance_range(self):
        with pytest.raises(ValueError):
            PointCloud(xyz=np.zeros((1, 3)), reflectance=np.array([1.5]))

    def test_c_lidar(self):
        cloud = PointCloud(
            xyz=np.zeros((2, 3)), reflectance=np.zeros(2), features=np.ones((2, 5))
        )
        assert cloud.c_lidar == 5


class TestFeatureMap:
    def test_shape_props(self):
        m = FeatureMap(data=np.zeros((4, 6, 2)))
        assert (m.height, m.width, m.channels) == (4, 6, 2)

    def test_nonfinite_rejected(self):
        data = np.zeros((2, 2, 1))
        data[0, 0, 0] = np.inf
        with pytest.raises(ValueError):
            FeatureMap(data=data)


class TestBox3D:
    def test_bad_dims(self):
        with pytest.raises(ValueError):
            Box3D(x=0, y=0, z=0, h=-1, w=1, l=1, ry=0)

    def test_bad_yaw(self):
        with pytest.raises(ValueError):
            Box3D(x=0, y=0, z=0, h=1, w=1, l=1, ry=4.0)

    def test_dontcare_skips_validation(self):
        box = Box3D(x=0, y=0, z=0, h=-1, w=-1, l=-1, ry=-10, dontcare=True)
        assert box.dontcare
