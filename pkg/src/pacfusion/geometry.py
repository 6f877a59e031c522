"""Geometry bridging the LIDAR and camera frames.

Projection follows the KITTI chain: p_cam = R0_rect * Tr_velo_to_cam * p,
then pixel = P2 * [p_cam, 1] with perspective divide. Points that land
behind the camera or outside the image are flagged invalid rather than
dropped, so outputs stay index-aligned with the input cloud.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kitti import CalibrationSet
from .types import Box3D, PointCloud


@dataclass(frozen=True)
class PixelCoords:
    """Continuous pixel coordinates per point, index-aligned with the cloud."""

    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray
    valid: np.ndarray

    def __len__(self) -> int:
        return len(self.u)


@dataclass(frozen=True)
class RegionOfInterest:
    """Closed axis-aligned crop box in the LIDAR frame (meters)."""

    x_min: float = 0.0
    x_max: float = 70.4
    y_min: float = -40.0
    y_max: float = 40.0
    z_min: float = -1.0
    z_max: float = 3.0

    def __post_init__(self) -> None:
        if not (self.x_min < self.x_max and self.y_min < self.y_max and self.z_min < self.z_max):
            raise ValueError("ROI bounds must satisfy min < max per axis")


def lidar_to_camera(xyz: np.ndarray, calib: CalibrationSet) -> np.ndarray:
    """Map (N, 3) LIDAR points into the rectified camera frame."""
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    cam = xyz @ calib.Tr_velo_to_cam[:, :3].T + calib.Tr_velo_to_cam[:, 3]
    return cam @ calib.R0_rect.T


def project_points(cloud: PointCloud, calib: CalibrationSet, image_size: tuple[int, int]) -> PixelCoords:
    """Project every point onto the image plane; image_size is (H, W)."""
    height, width = image_size
    cam = lidar_to_camera(cloud.xyz, calib)
    hom = cam @ calib.P2[:, :3].T + calib.P2[:, 3]
    w = hom[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(w != 0, hom[:, 0] / w, np.inf)
        v = np.where(w != 0, hom[:, 1] / w, np.inf)
    valid = (w > 0) & (u >= 0) & (u < width) & (v >= 0) & (v < height)
    return PixelCoords(u=u, v=v, depth=w, valid=valid)


def filter_region(cloud: PointCloud, roi: RegionOfInterest) -> tuple[PointCloud, np.ndarray]:
    """Keep points with all coordinates inside the closed ROI bounds.

    Returns the cropped cloud and the index map into the original cloud.
    """
    x, y, z = cloud.xyz[:, 0], cloud.xyz[:, 1], cloud.xyz[:, 2]
    keep = (
        (x >= roi.x_min) & (x <= roi.x_max)
        & (y >= roi.y_min) & (y <= roi.y_max)
        & (z >= roi.z_min) & (z <= roi.z_max)
    )
    idx = np.nonzero(keep)[0]
    return _take(cloud, idx), idx


def subsample(cloud: PointCloud, n: int, seed: int) -> tuple[PointCloud, np.ndarray]:
    """Deterministically sample exactly n points.

    With count >= n: uniform without replacement. With count < n: every
    point once plus uniform resampling with replacement up to n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(cloud) == 0:
        raise ValueError("cannot subsample an empty cloud")
    rng = np.random.default_rng(seed)
    count = len(cloud)
    if count >= n:
        idx = rng.choice(count, size=n, replace=False)
    else:
        extra = rng.choice(count, size=n - count, replace=True)
        idx = np.concatenate([np.arange(count), extra])
    return _take(cloud, idx), idx


def point_in_box(p_cam, box: Box3D, margin: float = 0.0) -> bool:
    """True iff a camera-frame point lies inside the (margin-enlarged) box.

    KITTI boxes: the y field is the box bottom, the box spans [y - h, y];
    length runs along local x, width along local z, yawed by ry about Y.
    """
    p = np.asarray(p_cam, dtype=np.float64).reshape(3)
    dx, dz = p[0] - box.x, p[2] - box.z
    c, s = np.cos(box.ry), np.sin(box.ry)
    # rotate into the box frame (inverse of the yaw rotation)
    lx = c * dx - s * dz
    lz = s * dx + c * dz
    return bool(
        abs(lx) <= box.l / 2 + margin
        and abs(lz) <= box.w / 2 + margin
        and box.y - box.h - margin <= p[1] <= box.y + margin
    )


def points_in_box(points_cam: np.ndarray, box: Box3D, margin: float = 0.0) -> np.ndarray:
    """Vectorized point_in_box over an (N, 3) camera-frame array."""
    p = np.asarray(points_cam, dtype=np.float64).reshape(-1, 3)
    dx, dz = p[:, 0] - box.x, p[:, 2] - box.z
    c, s = np.cos(box.ry), np.sin(box.ry)
    lx = c * dx - s * dz
    lz = s * dx + c * dz
    return (
        (np.abs(lx) <= box.l / 2 + margin)
        & (np.abs(lz) <= box.w / 2 + margin)
        & (p[:, 1] >= box.y - box.h - margin)
        & (p[:, 1] <= box.y + margin)
    )


def _take(cloud: PointCloud, idx: np.ndarray) -> PointCloud:
    return PointCloud(
        xyz=cloud.xyz[idx],
        reflectance=cloud.reflectance[idx],
        features=None if cloud.features is None else cloud.features[idx],
    )
