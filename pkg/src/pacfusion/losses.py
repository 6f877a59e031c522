"""Sparse segmentation supervision and the focal / total loss.

Per-point foreground labels come straight from the 3D boxes (objects do
not overlap in KITTI), and a sparse image-plane mask is obtained by
stamping each validly projecting point onto its pixel. Loss is computed
only at supervised pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import lidar_to_camera, points_in_box, project_points
from .kitti import CalibrationSet, write_pgm
from .types import Box3D, PointCloud

UNSUPERVISED, BACKGROUND, FOREGROUND = 0, 1, 2

PROB_EPS = 1e-7


@dataclass(frozen=True)
class FocalLossConfig:
    alpha: float = 0.25
    gamma: float = 2.0
    lam: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


@dataclass
class SparseMask:
    """Per-pixel supervision state with the stamping point's depth."""

    state: np.ndarray  # (H, W) uint8 in {UNSUPERVISED, BACKGROUND, FOREGROUND}
    depth: np.ndarray  # (H, W) float, inf where unsupervised

    @property
    def supervised(self) -> np.ndarray:
        return self.state != UNSUPERVISED

    def to_pgm(self, path) -> None:
        """Export for inspection: 0 unsupervised, 128 background, 255 foreground."""
        levels = np.array([0, 128, 255], dtype=np.uint8)
        write_pgm(levels[self.state], path)


def label_points(
    cloud: PointCloud,
    boxes: list[Box3D],
    calib: CalibrationSet,
    margin: float = 0.0,
    class_filter: str | None = None,
) -> np.ndarray:
    """Per-point foreground flags: inside any non-DontCare box."""
    cam = lidar_to_camera(cloud.xyz, calib)
    fg = np.zeros(len(cloud), dtype=bool)
    for box in boxes:
        if box.dontcare:
            continue
        if class_filter is not None and box.label != class_filter:
            continue
        fg |= points_in_box(cam, box, margin)
    return fg


def make_sparse_mask(
    cloud: PointCloud,
    labels: np.ndarray,
    calib: CalibrationSet,
    image_size: tuple[int, int],
    dontcare_boxes: list[Box3D] | None = None,
) -> SparseMask:
    """Stamp point labels onto pixels; nearest depth wins conflicts.

    Ties on depth resolve to the lower point index, so the result is a
    deterministic function of the cloud. When dontcare_boxes is given,
    pixels inside each box's projected 2D extent are left unsupervised.
    """
    height, width = image_size
    state = np.full((height, width), UNSUPERVISED, dtype=np.uint8)
    depth = np.full((height, width), np.inf)
    pixels = project_points(cloud, calib, image_size)
    cols = np.clip(np.ceil(pixels.u - 0.5).astype(np.int64), 0, width - 1)
    rows = np.clip(np.ceil(pixels.v - 0.5).astype(np.int64), 0, height - 1)
    for i in np.nonzero(pixels.valid)[0]:
        r, c = rows[i], cols[i]
        if pixels.depth[i] < depth[r, c]:
            depth[r, c] = pixels.depth[i]
            state[r, c] = FOREGROUND if labels[i] else BACKGROUND
    for box in dontcare_boxes or []:
        rect = _box_image_extent(box, calib, image_size)
        if rect is not None:
            r0, r1, c0, c1 = rect
            state[r0:r1, c0:c1] = UNSUPERVISED
            depth[r0:r1, c0:c1] = np.inf
    return SparseMask(state=state, depth=depth)


def _box_image_extent(box: Box3D, calib: CalibrationSet, image_size) -> tuple[int, int, int, int] | None:
    """Projected 2D pixel rectangle of a box's 8 corners, or None if behind camera."""
    height, width = image_size
    h = box.h if box.h > 0 else 1.0
    w = box.w if box.w > 0 else 1.0
    l = box.l if box.l > 0 else 1.0
    c, s = np.cos(box.ry), np.sin(box.ry)
    corners = []
    for sx in (-l / 2, l / 2):
        for sy in (-h, 0.0):
            for sz in (-w / 2, w / 2):
                corners.append(
                    (box.x + c * sx + s * sz, box.y + sy, box.z - s * sx + c * sz)
                )
    cam = np.asarray(corners)
    hom = cam @ calib.P2[:, :3].T + calib.P2[:, 3]
    if np.any(hom[:, 2] <= 0):
        return None
    u = hom[:, 0] / hom[:, 2]
    v = hom[:, 1] / hom[:, 2]
    c0 = int(np.clip(np.floor(u.min()), 0, width))
    c1 = int(np.clip(np.ceil(u.max()) + 1, 0, width))
    r0 = int(np.clip(np.floor(v.min()), 0, height))
    r1 = int(np.clip(np.ceil(v.max()) + 1, 0, height))
    return r0, r1, c0, c1


def focal_loss(
    predictions: np.ndarray,
    mask: SparseMask,
    cfg: FocalLossConfig = FocalLossConfig(),
) -> tuple[float, np.ndarray, bool]:
    """Mean focal term over supervised pixels.

    predictions: (H, W) foreground probabilities. Returns (loss, gradient
    w.r.t. predictions, warning) where warning flags the zero-supervision
    case (loss defined as 0).
    """
    sup = mask.supervised
    count = int(sup.sum())
    grad = np.zeros_like(predictions, dtype=np.float64)
    if count == 0:
        return 0.0, grad, True
    p = np.clip(predictions, PROB_EPS, 1.0 - PROB_EPS)
    fg = mask.state == FOREGROUND

    p_t = np.where(fg, p, 1.0 - p)
    alpha_t = np.where(fg, cfg.alpha, 1.0 - cfg.alpha)
    terms = -alpha_t * (1.0 - p_t) ** cfg.gamma * np.log(p_t)
    loss = float(terms[sup].sum() / count)

    # d/dp_t of the focal term, then chain through p_t = p or 1 - p
    dt = alpha_t * (
        cfg.gamma * (1.0 - p_t) ** (cfg.gamma - 1.0) * np.log(p_t)
        - (1.0 - p_t) ** cfg.gamma / p_t
    )
    dp = np.where(fg, dt, -dt) / count
    # clamp saturates the gradient outside (eps, 1 - eps)
    interior = (predictions > PROB_EPS) & (predictions < 1.0 - PROB_EPS)
    grad[sup & interior] = dp[sup & interior]
    return loss, grad, False


def total_loss(det_loss: float, seg_loss: float, lam: float = 1.0) -> float:
    """Detection loss plus weighted segmentation loss."""
    return det_loss + lam * seg_loss
