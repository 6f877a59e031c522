#!/usr/bin/env python3
"""Project LIDAR points into the image plane and pull semantic features.

Uses a hand-built calibration: LIDAR (x fwd, y left, z up) rotated into the
camera frame (x right, y down, z fwd), pinhole with focal 100.
"""

import numpy as np

from pacfusion import CalibrationSet, FeatureMap, PointCloud, project_points, retrieve_features

Tr = np.array([[0.0, -1.0, 0.0, 0.0], [0.0, 0.0, -1.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
P2 = np.array([[100.0, 0, 96, 0], [0, 100.0, 32, 0], [0, 0, 1, 0]])
calib = CalibrationSet(P2=P2, R0_rect=np.eye(3), Tr_velo_to_cam=Tr)

rng = np.random.default_rng(1)
xyz = rng.uniform([2, -10, -2], [50, 10, 2], size=(500, 3))
cloud = PointCloud(xyz=xyz, reflectance=rng.uniform(0, 1, 500))

pixels = project_points(cloud, calib, image_size=(64, 192))
print(f"{pixels.valid.sum()} of {len(cloud)} points project inside the 64x192 image")

# a smooth horizontal gradient as the stand-in semantic map
u_ramp = np.tile(np.linspace(0, 1, 192), (64, 1))[:, :, None]
fmap = FeatureMap(data=u_ramp)

semantic, valid = retrieve_features(pixels, fmap)
print("retrieved value range:", semantic[valid].min().round(3), "to", semantic[valid].max().round(3))

# invalid projections get zero vectors, keeping index alignment
assert np.all(semantic[~valid] == 0.0)
print("invalid projections are zero-filled; outputs stay index-aligned")
