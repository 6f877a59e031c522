"""Core domain types shared across the package.

Coordinate conventions follow KITTI: the LIDAR frame has x forward,
y left, z up (meters); the rectified camera frame has x right, y down,
z forward. Boxes live in the camera frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InvalidDimensionError(ValueError):
    """Raised when channel counts or shapes violate the fusion dimension algebra."""


@dataclass(frozen=True)
class FusionDims:
    """Channel bookkeeping for the fusion operator.

    d_i is always c_seg + c_lidar + 3: semantic channels, point-feature
    channels, and the 3-vector geometric offset. The fused output is the
    concatenation [conv | attentive | pooled] of width 2*d_o + d_i.
    """

    c_seg: int
    c_lidar: int
    d_o: int

    @property
    def d_i(self) -> int:
        return self.c_seg + self.c_lidar + 3

    @property
    def out_width(self) -> int:
        return 2 * self.d_o + self.d_i


def fusion_dims(c_seg: int, c_lidar: int, d_o: int) -> FusionDims:
    """Validate channel counts and return the derived dimension set."""
    if c_seg < 1:
        raise InvalidDimensionError(f"c_seg must be >= 1, got {c_seg}")
    if c_lidar < 0:
        raise InvalidDimensionError(f"c_lidar must be >= 0, got {c_lidar}")
    if d_o < 1:
        raise InvalidDimensionError(f"d_o must be >= 1, got {d_o}")
    return FusionDims(c_seg=c_seg, c_lidar=c_lidar, d_o=d_o)


@dataclass
class PointCloud:
    """Ordered 3D point set with per-point reflectance and optional features.

    xyz: (N, 3) float array, LIDAR frame.
    reflectance: (N,) float array in [0, 1].
    features: optional (N, C_lidar) float array.
    """

    xyz: np.ndarray
    reflectance: np.ndarray
    features: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        self.reflectance = np.asarray(self.reflectance, dtype=np.float64).reshape(-1)
        if len(self.reflectance) != len(self.xyz):
            raise ValueError(
                f"reflectance length {len(self.reflectance)} != point count {len(self.xyz)}"
            )
        if not np.all(np.isfinite(self.xyz)):
            raise ValueError("point coordinates must be finite")
        if len(self.reflectance) and (
            self.reflectance.min() < 0.0 or self.reflectance.max() > 1.0
        ):
            raise ValueError("reflectance values must lie in [0, 1]")
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
            if self.features.ndim != 2 or len(self.features) != len(self.xyz):
                raise ValueError("features must be an (N, C_lidar) array")

    def __len__(self) -> int:
        return len(self.xyz)

    @property
    def c_lidar(self) -> int:
        return 0 if self.features is None else self.features.shape[1]


@dataclass
class FeatureMap:
    """Dense H x W x C image-plane feature grid at full image resolution."""

    data: np.ndarray

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"feature map must be (H, W, C), got shape {self.data.shape}")
        if self.data.shape[2] < 1:
            raise InvalidDimensionError("feature map needs at least one channel")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature map values must be finite")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box, camera frame, KITTI label convention.

    (x, y, z) is the box bottom center; the box spans [y - h, y] vertically.
    ry is yaw about the camera Y axis.
    """

    x: float
    y: float
    z: float
    h: float
    w: float
    l: float
    ry: float
    label: str = "Car"
    dontcare: bool = field(default=False)

    def __post_init__(self) -> None:
        if not self.dontcare:
            if self.h <= 0 or self.w <= 0 or self.l <= 0:
                raise ValueError(f"box dimensions must be positive: h={self.h} w={self.w} l={self.l}")
            if not (-np.pi <= self.ry <= np.pi):
                raise ValueError(f"ry must lie in [-pi, pi], got {self.ry}")
