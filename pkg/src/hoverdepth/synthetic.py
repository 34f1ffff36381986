"""Piecewise-planar synthetic scenes with analytic ground truth.

The reference camera sits at the world origin looking down +z, so world
coordinates coincide with its camera frame.  Each plane carries a smooth
random texture defined on the reference image grid and a rectangular
footprint in reference pixels (or the whole image); visibility in every
view is resolved by depth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter, map_coordinates, spline_filter
from scipy.spatial.transform import Rotation

from .depthmap import DepthMap
from .geometry import CameraIntrinsics, CameraView, PlaneSurface, SparseCloud, luma

_MARGIN = 64


@dataclass
class PlaneSpec:
    point: tuple = (0.0, 0.0, 3.0)
    normal: tuple = (0.0, 0.0, -1.0)
    region: object = "all"  # "all" or [x0, y0, x1, y1], half-open reference pixel box
    color: tuple = (128.0, 128.0, 128.0)
    texture: float = 20.0  # std of the texture in intensity levels
    texture_scale: float = 2.0  # smoothing of the texture, pixels
    dropout: float = 0.0  # fraction of this plane's seeds removed
    pattern: str = "noise"  # "noise" (smoothed Gaussian) or "dots" (sparse speckle on a flat base)
    dot_density: float = 0.05

    @classmethod
    def from_dict(cls, d: dict) -> "PlaneSpec":
        return cls(**d)


@dataclass
class SceneSpec:
    width: int = 640
    height: int = 480
    fx: float = 525.0
    fy: float = 525.0
    cx: float | None = None
    cy: float | None = None
    planes: list = field(default_factory=lambda: [PlaneSpec()])
    n_views: int = 20
    baseline: float = 0.005
    noise: float = 1.0
    max_rotation_deg: float = 0.5
    translations: list | None = None  # explicit camera centres of views 1.., no rotation
    seed_density: float = 0.02  # fraction of visible reference pixels that carry a seed
    seed_error: tuple = (0.05, 0.5)
    position_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.planes = [p if isinstance(p, PlaneSpec) else PlaneSpec.from_dict(p) for p in self.planes]
        if self.cx is None:
            self.cx = (self.width - 1) / 2.0
        if self.cy is None:
            self.cy = (self.height - 1) / 2.0
        if self.baseline <= 0:
            raise ValueError("baseline must be positive")
        if self.n_views < 2 and self.translations is None:
            raise ValueError("need at least two views")

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        return cls(**d)

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self.fx, self.fy, self.cx, self.cy)


@dataclass
class SyntheticScene:
    spec: SceneSpec
    views: list  # grayscale CameraViews, reference first
    rgb_views: list  # (H, W, 3) float images in [0, 255]
    cloud: SparseCloud
    truth: DepthMap
    plane_ids: np.ndarray  # visible plane per reference pixel, -1 for none
    planes: list  # PlaneSurface per PlaneSpec
    seed_planes: np.ndarray  # plane index of every cloud point

    @property
    def rgb(self) -> np.ndarray:
        return self.rgb_views[0]

    @property
    def camera_positions(self) -> np.ndarray:
        return np.array([v.center for v in self.views])


def _poses(spec: SceneSpec, rng):
    poses = [(np.eye(3), np.zeros(3))]
    if spec.translations is not None:
        for c in spec.translations:
            poses.append((np.eye(3), -np.asarray(c, dtype=np.float64)))
        return poses
    for _ in range(spec.n_views - 1):
        d = rng.standard_normal(3)
        c = d / np.linalg.norm(d) * spec.baseline * rng.uniform() ** (1 / 3)
        axis = rng.standard_normal(3)
        angle = np.deg2rad(spec.max_rotation_deg) * rng.uniform()
        R = Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).as_matrix()
        poses.append((R, -R @ c))
    return poses


def _textures(spec: SceneSpec, rng):
    shape = (spec.height + 2 * _MARGIN, spec.width + 2 * _MARGIN)
    out = []
    for p in spec.planes:
        if p.pattern == "dots":
            # isolated dots of +-texture levels; they stay below the minimum segment size
            t = np.where(rng.uniform(size=shape) < p.dot_density, rng.choice([-1.0, 1.0], size=shape), 0.0)
            if p.texture_scale > 0:
                t = gaussian_filter(t, p.texture_scale)
                t /= max(np.abs(t).max(), 1e-12)
            out.append(t * p.texture)
            continue
        if p.pattern != "noise":
            raise ValueError(f"unknown texture pattern {p.pattern!r}")
        t = gaussian_filter(rng.standard_normal(shape), p.texture_scale) if p.texture_scale > 0 else \
            rng.standard_normal(shape)
        out.append(t * (p.texture / max(t.std(), 1e-12)))
    # cubic-spline coefficients: textures are smooth functions of the plane position
    return [spline_filter(t, order=3, mode="mirror") for t in out]


def _in_region(region, u, v):
    if isinstance(region, str):
        return np.isfinite(u)
    x0, y0, x1, y1 = region
    return (u >= x0 - 0.5) & (u < x1 - 0.5) & (v >= y0 - 0.5) & (v < y1 - 0.5)


def render_view(spec: SceneSpec, planes, textures, R, t):
    """Noise-free ``(rgb, depth, plane_id)`` of one view with pose ``(R, t)``."""
    k = spec.intrinsics
    h, w = spec.height, spec.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    rays = np.stack([(xs - k.cx) / k.fx, (ys - k.cy) / k.fy, np.ones_like(xs)], -1)
    dirs = rays @ R  # world-frame directions, R^T r
    c = -R.T @ t
    depth = np.full((h, w), np.inf)
    pid = np.full((h, w), -1, dtype=np.int64)
    ref_u = np.zeros((h, w))
    ref_v = np.zeros((h, w))
    for i, (pl, ps) in enumerate(zip(planes, spec.planes)):
        denom = dirs @ pl.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = (pl.normal @ (pl.point - c)) / denom
            X = c + lam[..., None] * dirs
            u = k.fx * X[..., 0] / X[..., 2] + k.cx
            v = k.fy * X[..., 1] / X[..., 2] + k.cy
        hit = np.isfinite(lam) & (lam > 1e-9) & (X[..., 2] > 1e-9) & _in_region(ps.region, u, v) & (lam < depth)
        depth[hit] = lam[hit]
        pid[hit] = i
        ref_u[hit] = u[hit]
        ref_v[hit] = v[hit]
    rgb = np.zeros((h, w, 3))
    for i, ps in enumerate(spec.planes):
        m = pid == i
        if not m.any():
            continue
        tex = map_coordinates(
            textures[i], [ref_v[m] + _MARGIN, ref_u[m] + _MARGIN], order=3, mode="mirror", prefilter=False
        )
        rgb[m] = np.asarray(ps.color, dtype=np.float64)[None, :] + tex[:, None]
    np.clip(rgb, 0.0, 255.0, out=rgb)
    depth[pid < 0] = np.nan
    return rgb, depth, pid


def _sample_cloud(spec, planes, rgb, pid, rng):
    k = spec.intrinsics
    pos, col, err, which = [], [], [], []
    for i, ps in enumerate(spec.planes):
        pix = np.flatnonzero(pid.ravel() == i)
        n = int(round(spec.seed_density * len(pix)))
        if n == 0:
            continue
        pick = np.sort(rng.choice(pix, size=n, replace=False))
        keep = rng.uniform(size=n) >= ps.dropout
        pick = pick[keep]
        if not len(pick):
            continue
        y, x = np.divmod(pick, spec.width)
        u = x + rng.uniform(-0.25, 0.25, len(pick))
        v = y + rng.uniform(-0.25, 0.25, len(pick))
        rays = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], -1)
        pl = planes[i]
        lam = (pl.normal @ pl.point) / (rays @ pl.normal)
        X = rays * lam[:, None]
        if spec.position_noise > 0:
            X = X + rng.normal(0.0, spec.position_noise, X.shape)
        pos.append(X)
        col.append(rgb[y, x])
        err.append(rng.uniform(spec.seed_error[0], spec.seed_error[1], len(pick)))
        which.append(np.full(len(pick), i))
    if not pos:
        return SparseCloud(np.zeros((0, 3))), np.zeros(0, dtype=np.int64)
    return SparseCloud(np.concatenate(pos), np.concatenate(col), np.concatenate(err)), np.concatenate(which)


def generate_synthetic(spec: SceneSpec | dict, n_views: int | None = None, baseline: float | None = None,
                       noise: float | None = None) -> SyntheticScene:
    """Render every view of ``spec`` and sample its sparse cloud.

    ``n_views``, ``baseline`` and ``noise`` override the matching ``SceneSpec`` fields when given.
    """
    if isinstance(spec, dict):
        spec = SceneSpec.from_dict(spec)
    if n_views is not None:
        spec.n_views = n_views
    if baseline is not None:
        spec.baseline = baseline
    if noise is not None:
        spec.noise = noise
    spec.__post_init__()
    rng = np.random.default_rng(spec.seed)
    planes = [PlaneSurface(p.point, p.normal).oriented_toward(np.zeros(3)) for p in spec.planes]
    textures = _textures(spec, rng)
    poses = _poses(spec, rng)
    views, rgbs = [], []
    truth = pid_ref = None
    clean_ref = None
    for j, (R, t) in enumerate(poses):
        rgb, depth, pid = render_view(spec, planes, textures, R, t)
        if j == 0:
            truth, pid_ref, clean_ref = DepthMap.from_array(depth), pid, rgb
        gray = luma(rgb)
        if spec.noise > 0:
            rgb = np.clip(rgb + rng.normal(0.0, spec.noise, rgb.shape), 0.0, 255.0)
            gray = np.clip(gray + rng.normal(0.0, spec.noise, gray.shape), 0.0, 255.0)
        views.append(CameraView.from_image(spec.intrinsics, R, t, gray))
        rgbs.append(rgb)
    cloud, which = _sample_cloud(spec, planes, clean_ref, pid_ref, rng)
    return SyntheticScene(spec, views, rgbs, cloud, truth, pid_ref, planes, which)
