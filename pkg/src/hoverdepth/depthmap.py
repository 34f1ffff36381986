"""Dense depth maps and their comparison."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoOverlap


@dataclass
class DepthMap:
    """Per-pixel depth (meters, reference camera frame) with a validity mask.

    Invalid pixels hold NaN in ``depth``; ``mask`` is True where valid.
    """

    depth: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float64)
        mask = np.asarray(self.mask, dtype=bool)
        if depth.ndim != 2 or depth.shape != mask.shape:
            raise ValueError("depth and mask must be 2-D grids of equal shape")
        valid = depth[mask]
        if not np.all(np.isfinite(valid) & (valid > 0)):
            raise ValueError("valid depths must be finite and positive")
        depth = depth.copy()
        depth[~mask] = np.nan
        self.depth = depth
        self.mask = mask

    @classmethod
    def from_array(cls, depth) -> "DepthMap":
        """Mask derived from the array: finite positive entries are valid."""
        depth = np.asarray(depth, dtype=np.float64)
        with np.errstate(invalid="ignore"):
            mask = np.isfinite(depth) & (depth > 0)
        return cls(np.where(mask, depth, np.nan), mask)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def coverage(self) -> float:
        return float(self.mask.mean())


def evaluate(depth: DepthMap, truth: DepthMap) -> dict:
    """Error metrics over the pixels valid in both maps.

    ``coverage`` is the fraction of truth-valid pixels that the prediction
    also covers.
    """
    if depth.depth.shape != truth.depth.shape:
        raise ValueError(f"shape mismatch {depth.depth.shape} vs {truth.depth.shape}")
    joint = depth.mask & truth.mask
    n = int(joint.sum())
    if n == 0:
        raise NoOverlap("no pixel is valid in both maps")
    pred = depth.depth[joint]
    ref = truth.depth[joint]
    err = np.abs(pred - ref)
    rel = err / ref
    return {
        "mae": float(err.mean()),
        "rmse": float(np.sqrt(np.mean(err * err))),
        "within_1pct": float(np.mean(rel <= 0.01)),
        "within_5pct": float(np.mean(rel <= 0.05)),
        "within_10pct": float(np.mean(rel <= 0.10)),
        "coverage": float(n / max(int(truth.mask.sum()), 1)),
        "pixels": n,
    }
