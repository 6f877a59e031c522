"""The attentive continuous-convolution fusion operator.

Per target point i with K distance-ordered neighbors (slot 0 = the point
itself), each neighbor row is f'_k = [semantic_k | point_features_k |
x_k - x_i], width D_i = C_seg + C_lidar + 3. A shared MLP maps each row
to a D_o vector; the operator output is the concatenation

    [ sum_k mlp(f'_k) | sum_k w_k * mlp(f'_k) | max_k f'_k ]

of width 2*D_o + D_i. Forward and backward passes are implemented by
hand in float64; gradients are exact reverse-mode, with the max-pool
routing gradient to the lowest argmax slot.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import PixelCoords, project_points
from .kdtree import KdTree
from .kitti import CalibrationSet, FormatError
from .types import FeatureMap, FusionDims, PointCloud, fusion_dims

PARAMS_MAGIC = b"PACW"
PARAMS_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths for the shared per-neighbor MLP.

    widths[0] must equal D_i and widths[-1] equals D_o. Hidden layers use
    ReLU; the output layer is linear.
    """

    widths: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.widths) < 2:
            raise ValueError("MLP needs at least input and output widths")
        if any(w < 1 for w in self.widths):
            raise ValueError(f"all layer widths must be positive: {self.widths}")

    @property
    def d_i(self) -> int:
        return self.widths[0]

    @property
    def d_o(self) -> int:
        return self.widths[-1]

    @classmethod
    def default(cls, d_i: int, d_o: int) -> "MlpSpec":
        return cls(widths=(d_i, max(d_i, d_o), d_o))


@dataclass
class PacfParams:
    """Learnable state: MLP weight/bias pairs plus K aggregation scalars."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    aggr_weights: np.ndarray

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must pair up")
        for w, b in zip(self.weights, self.biases):
            if w.shape[1] != b.shape[0]:
                raise ValueError(f"bias width {b.shape[0]} != layer fan-out {w.shape[1]}")
        for arr in (*self.weights, *self.biases, self.aggr_weights):
            if not np.all(np.isfinite(arr)):
                raise ValueError("parameters must be finite")

    @property
    def k(self) -> int:
        return len(self.aggr_weights)

    @property
    def spec(self) -> MlpSpec:
        return MlpSpec(widths=(self.weights[0].shape[0], *(w.shape[1] for w in self.weights)))


def init_params(spec: MlpSpec, k: int, seed: int = 0) -> PacfParams:
    """Glorot-uniform MLP weights; aggregation scalars start at 1/K."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.widths[:-1], spec.widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return PacfParams(weights=weights, biases=biases, aggr_weights=np.full(k, 1.0 / k))


@dataclass
class NeighborFeatures:
    """Per-target K x D_i neighbor rows plus per-row projection validity."""

    rows: np.ndarray  # (N, K, D_i)
    valid: np.ndarray  # (N, K) bool
    dims: FusionDims

    def __post_init__(self) -> None:
        if self.rows.ndim != 3 or self.rows.shape[2] != self.dims.d_i:
            raise ValueError(
                f"neighbor rows must be (N, K, {self.dims.d_i}), got {self.rows.shape}"
            )


@dataclass
class FusedFeatures:
    """Operator output, one row of width 2*D_o + D_i per target point."""

    values: np.ndarray  # (N, 2*D_o + D_i)
    dims: FusionDims


def retrieve_features(pixels: PixelCoords, fmap: FeatureMap, bilinear: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per-point semantic vectors from the feature map.

    Valid pixels read the map at the nearest grid cell (round half down);
    invalid pixels get a zero vector. Returns (vectors, valid) with
    vectors shaped (N, C_seg).
    """
    n = len(pixels)
    out = np.zeros((n, fmap.channels))
    idx = np.nonzero(pixels.valid)[0]
    if len(idx) == 0:
        return out, pixels.valid.copy()
    if bilinear:
        out[idx] = _bilinear(pixels.u[idx], pixels.v[idx], fmap)
    else:
        cols = np.clip(np.ceil(pixels.u[idx] - 0.5).astype(np.int64), 0, fmap.width - 1)
        rows = np.clip(np.ceil(pixels.v[idx] - 0.5).astype(np.int64), 0, fmap.height - 1)
        out[idx] = fmap.data[rows, cols]
    return out, pixels.valid.copy()


def _bilinear(u: np.ndarray, v: np.ndarray, fmap: FeatureMap) -> np.ndarray:
    u = np.clip(u, 0.0, fmap.width - 1.0)
    v = np.clip(v, 0.0, fmap.height - 1.0)
    u0 = np.clip(np.floor(u).astype(np.int64), 0, fmap.width - 2) if fmap.width > 1 else np.zeros(len(u), np.int64)
    v0 = np.clip(np.floor(v).astype(np.int64), 0, fmap.height - 2) if fmap.height > 1 else np.zeros(len(v), np.int64)
    u1 = np.minimum(u0 + 1, fmap.width - 1)
    v1 = np.minimum(v0 + 1, fmap.height - 1)
    fu = (u - u0)[:, None]
    fv = (v - v0)[:, None]
    d = fmap.data
    return (
        d[v0, u0] * (1 - fu) * (1 - fv)
        + d[v0, u1] * fu * (1 - fv)
        + d[v1, u0] * (1 - fu) * fv
        + d[v1, u1] * fu * fv
    )


def assemble_neighbors(
    cloud: PointCloud,
    semantic: np.ndarray,
    neighbor_idx: np.ndarray,
    semantic_valid: np.ndarray,
    point_features: np.ndarray | None = None,
) -> NeighborFeatures:
    """Build the (N, K, D_i) neighbor tensor.

    Column order per row: [semantic | point features | geometric offset].
    Neighbors whose projection was invalid contribute zero semantic
    channels but their true geometric offset.
    """
    neighbor_idx = np.asarray(neighbor_idx, dtype=np.int64)
    n, k = neighbor_idx.shape
    c_seg = semantic.shape[1]
    if point_features is None:
        point_features = cloud.features
    c_lidar = 0 if point_features is None else point_features.shape[1]
    dims = fusion_dims(c_seg, c_lidar, d_o=1)  # d_o irrelevant for assembly
    rows = np.zeros((n, k, dims.d_i))
    valid = semantic_valid[neighbor_idx]
    sem = semantic[neighbor_idx]
    sem[~valid] = 0.0
    rows[:, :, :c_seg] = sem
    if c_lidar:
        rows[:, :, c_seg : c_seg + c_lidar] = point_features[neighbor_idx]
    rows[:, :, c_seg + c_lidar :] = cloud.xyz[neighbor_idx] - cloud.xyz[:, None, :]
    return NeighborFeatures(rows=rows, valid=valid, dims=dims)


@dataclass
class _ForwardCache:
    rows: np.ndarray
    activations: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)
    y_cc_k: np.ndarray | None = None
    argmax: np.ndarray | None = None
    d_o: int = 0


def pacf_forward(nf: NeighborFeatures, params: PacfParams) -> tuple[FusedFeatures, _ForwardCache]:
    """Forward pass; returns output rows and the cache for backward."""
    rows = nf.rows
    n, k, d_i = rows.shape
    spec = params.spec
    if spec.d_i != d_i:
        raise ValueError(f"MLP input width {spec.d_i} != neighbor row width {d_i}")
    if params.k != k:
        raise ValueError(f"aggregation has {params.k} scalars but K={k} neighbor slots")

    cache = _ForwardCache(rows=rows, d_o=spec.d_o)
    h = rows
    n_layers = len(params.weights)
    for li, (w, b) in enumerate(zip(params.weights, params.biases)):
        cache.activations.append(h)
        z = h @ w + b
        cache.preacts.append(z)
        h = np.maximum(z, 0.0) if li < n_layers - 1 else z
    y_cc_k = h  # (N, K, D_o)
    cache.y_cc_k = y_cc_k

    # sum the slot outputs in sorted order so the result is bit-identical
    # under any slot permutation, not merely equal up to rounding
    y_cc = np.sort(y_cc_k, axis=1).sum(axis=1)
    y_a = np.sort(params.aggr_weights[None, :, None] * y_cc_k, axis=1).sum(axis=1)
    cache.argmax = np.argmax(rows, axis=1)  # first occurrence = lowest slot
    y_pool = np.take_along_axis(rows, cache.argmax[:, None, :], axis=1)[:, 0, :]

    values = np.concatenate([y_cc, y_a, y_pool], axis=1)
    dims = FusionDims(c_seg=nf.dims.c_seg, c_lidar=nf.dims.c_lidar, d_o=spec.d_o)
    return FusedFeatures(values=values, dims=dims), cache


def pacf_backward(
    cache: _ForwardCache, params: PacfParams, grad_out: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray, np.ndarray]:
    """Exact reverse-mode gradients.

    grad_out has shape (N, 2*D_o + D_i) matching the forward output.
    Returns (grad_weights, grad_biases, grad_aggr, grad_rows).
    """
    n, k, d_i = cache.rows.shape
    d_o = cache.d_o
    g_cc = grad_out[:, :d_o]
    g_a = grad_out[:, d_o : 2 * d_o]
    g_pool = grad_out[:, 2 * d_o :]

    # aggregation scalars: y_a = sum_k w_k y_cc_k
    grad_aggr = np.einsum("nd,nkd->k", g_a, cache.y_cc_k)

    # per-slot gradient entering the MLP head
    g_y = g_cc[:, None, :] + params.aggr_weights[None, :, None] * g_a[:, None, :]

    grad_w = [np.zeros_like(w) for w in params.weights]
    grad_b = [np.zeros_like(b) for b in params.biases]
    g = g_y
    n_layers = len(params.weights)
    for li in range(n_layers - 1, -1, -1):
        if li < n_layers - 1:
            g = g * (cache.preacts[li] > 0)
        a = cache.activations[li]
        grad_w[li] = np.einsum("nki,nkj->ij", a, g)
        grad_b[li] = g.sum(axis=(0, 1))
        g = g @ params.weights[li].T

    grad_rows = g
    # max-pool routes to the lowest argmax slot per channel
    np.put_along_axis(
        grad_rows,
        cache.argmax[:, None, :],
        np.take_along_axis(grad_rows, cache.argmax[:, None, :], axis=1) + g_pool[:, None, :],
        axis=1,
    )
    return grad_w, grad_b, grad_aggr, grad_rows


def fuse_cloud(
    cloud: PointCloud,
    fmap: FeatureMap,
    calib: CalibrationSet,
    params: PacfParams | None,
    k: int = 3,
    d: float = np.inf,
    mode: str = "v1",
    leaf_size: int = 16,
    bilinear: bool = False,
    use_reflectance: bool = False,
) -> PointCloud:
    """Run retrieval (+ fusion) over a whole cloud.

    v1: output features are the full operator output per point.
    v2: output features are [semantic | existing point features] only,
    with no convolution (the input-level fusion strategy).
    use_reflectance folds the reflectance scalar into the point-feature
    block (off by default; it is carried but not fused otherwise).
    """
    mode = mode.lower()
    if mode not in ("v1", "v2"):
        raise ValueError(f"mode must be v1 or v2, got {mode!r}")
    pixels = project_points(cloud, calib, (fmap.height, fmap.width))
    semantic, sem_valid = retrieve_features(pixels, fmap, bilinear=bilinear)
    point_features = cloud.features
    if use_reflectance:
        refl = cloud.reflectance[:, None]
        point_features = refl if point_features is None else np.hstack([point_features, refl])
    if mode == "v2":
        feats = semantic if point_features is None else np.hstack([semantic, point_features])
        return PointCloud(xyz=cloud.xyz, reflectance=cloud.reflectance, features=feats)
    if params is None:
        raise ValueError("v1 fusion requires operator parameters")
    tree = KdTree(cloud.xyz, leaf_size=leaf_size)
    nbr = np.empty((len(cloud), k), dtype=np.int64)
    for i in range(len(cloud)):
        nbr[i] = tree.query(cloud.xyz[i], k=k, d=d).indices
    nf = assemble_neighbors(cloud, semantic, nbr, sem_valid, point_features=point_features)
    fused, _ = pacf_forward(nf, params)
    return PointCloud(xyz=cloud.xyz, reflectance=cloud.reflectance, features=fused.values)


def save_params(params: PacfParams, path) -> None:
    """Write the checkpoint container: magic, dims header, raw f64 LE."""
    spec = params.spec
    header = PARAMS_MAGIC + struct.pack(
        "<HII", PARAMS_VERSION, params.k, len(spec.widths)
    ) + struct.pack(f"<{len(spec.widths)}I", *spec.widths)
    chunks = [header]
    for w, b in zip(params.weights, params.biases):
        chunks.append(w.astype("<f8").tobytes())
        chunks.append(b.astype("<f8").tobytes())
    chunks.append(params.aggr_weights.astype("<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_params(path) -> PacfParams:
    raw = Path(path).read_bytes()
    if len(raw) < 14 or raw[:4] != PARAMS_MAGIC:
        raise FormatError("parameter container: bad magic")
    version, k, n_widths = struct.unpack("<HII", raw[4:14])
    if version != PARAMS_VERSION:
        raise FormatError(f"parameter container: unsupported version {version}")
    pos = 14 + 4 * n_widths
    widths = struct.unpack(f"<{n_widths}I", raw[14:pos])
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        nbytes = 8 * fan_in * fan_out
        weights.append(np.frombuffer(raw[pos : pos + nbytes], dtype="<f8").reshape(fan_in, fan_out).copy())
        pos += nbytes
        biases.append(np.frombuffer(raw[pos : pos + 8 * fan_out], dtype="<f8").copy())
        pos += 8 * fan_out
    aggr = np.frombuffer(raw[pos : pos + 8 * k], dtype="<f8").copy()
    pos += 8 * k
    if pos != len(raw) or len(aggr) != k:
        raise FormatError("parameter container: payload size mismatch")
    return PacfParams(weights=weights, biases=biases, aggr_weights=aggr)
