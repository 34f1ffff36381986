"""File formats: images, sparse clouds, PFM depth maps and debug renders."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .depthmap import DepthMap
from .geometry import SparseCloud

PFM_INVALID = -1.0

# anchors of an inferno-like ramp, dark to bright
_RAMP = np.array(
    [
        [0, 0, 4],
        [40, 11, 84],
        [101, 21, 110],
        [159, 42, 99],
        [212, 72, 66],
        [245, 125, 21],
        [250, 193, 39],
        [252, 255, 164],
    ],
    dtype=np.float64,
)


def read_image(path) -> np.ndarray:
    """RGB image as float64 (H, W, 3) in 0-255."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64)


def write_image(path, rgb) -> None:
    arr = np.clip(np.rint(np.asarray(rgb, dtype=np.float64)), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def read_cloud(path) -> SparseCloud:
    """Text cloud, one point per line: ``x y z r g b reproj_err``."""
    data = np.loadtxt(path, dtype=np.float64, ndmin=2, comments="#")
    if data.size == 0:
        return SparseCloud(np.zeros((0, 3)))
    if data.shape[1] != 7:
        raise ValueError(f"{path}: expected 7 columns, got {data.shape[1]}")
    return SparseCloud(data[:, :3], data[:, 3:6], data[:, 6])


def write_cloud(path, cloud: SparseCloud) -> None:
    data = np.column_stack([cloud.positions, cloud.colors, cloud.errors])
    np.savetxt(path, data, fmt="%.17g")


def write_pfm(path, depth: DepthMap) -> None:
    """Little-endian single-channel PFM; invalid pixels are written as -1."""
    arr = np.where(depth.mask, depth.depth, PFM_INVALID).astype("<f4")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(arr[::-1]).tobytes())


def read_pfm(path) -> DepthMap:
    with open(path, "rb") as f:
        kind = f.readline().strip()
        if kind not in (b"Pf", b"PF"):
            raise ValueError(f"{path}: not a PFM file")
        w, h = (int(x) for x in f.readline().split())
        scale = float(f.readline().strip())
        channels = 3 if kind == b"PF" else 1
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(w * h * channels * 4), dtype=dtype)
    arr = data.reshape(h, w, channels)[::-1, :, 0].astype(np.float64)
    return DepthMap.from_array(arr)


def colorize_depth(depth: DepthMap, d_min=None, d_max=None) -> np.ndarray:
    """uint8 RGB rendering; near is bright, invalid pixels are black."""
    out = np.zeros(depth.depth.shape + (3,), dtype=np.uint8)
    if not depth.mask.any():
        return out
    vals = depth.depth[depth.mask]
    lo = float(vals.min()) if d_min is None else d_min
    hi = float(vals.max()) if d_max is None else d_max
    t = 1.0 - (vals - lo) / max(hi - lo, 1e-12)
    t = np.clip(t, 0.0, 1.0) * (len(_RAMP) - 1)
    i = np.minimum(t.astype(np.int64), len(_RAMP) - 2)
    f = (t - i)[:, None]
    out[depth.mask] = np.rint(_RAMP[i] * (1 - f) + _RAMP[i + 1] * f).astype(np.uint8)
    return out


def write_depth_png(path, depth: DepthMap) -> None:
    Image.fromarray(colorize_depth(depth)).save(path)


def label_colors(labels) -> np.ndarray:
    """Random but fixed colour per label; negative labels are black."""
    labels = np.asarray(labels)
    n = int(labels.max()) + 1 if labels.size and labels.max() >= 0 else 0
    palette = np.random.default_rng(12345).integers(40, 256, size=(max(n, 1), 3)).astype(np.uint8)
    out = np.zeros(labels.shape + (3,), dtype=np.uint8)
    m = labels >= 0
    out[m] = palette[labels[m]]
    return out


def write_label_png(path, labels) -> None:
    Image.fromarray(label_colors(labels)).save(path)


def patch_overlay(rgb, patch_labels, color=(255, 0, 0)) -> np.ndarray:
    """Reference image with patch boundaries drawn over it."""
    out = np.clip(np.rint(np.asarray(rgb, dtype=np.float64)), 0, 255).astype(np.uint8).copy()
    lab = np.asarray(patch_labels)
    edge = np.zeros(lab.shape, dtype=bool)
    edge[:, 1:] |= lab[:, 1:] != lab[:, :-1]
    edge[1:, :] |= lab[1:, :] != lab[:-1, :]
    out[edge] = color
    return out


def write_patch_overlay(path, rgb, patch_labels) -> None:
    Image.fromarray(patch_overlay(rgb, patch_labels)).save(path)

