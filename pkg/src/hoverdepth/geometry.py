"""Pinhole cameras, planes and plane-induced warps."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateConfiguration,
    DegeneratePlane,
    NegativeIntersection,
    NonPositiveDepth,
    RayParallelToPlane,
)

EPS_GEOM = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got {self.fx}, {self.fy}")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def K_inv(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy}


LUMA = np.array([0.299, 0.587, 0.114])


def luma(rgb) -> np.ndarray:
    """Grey level ``0.299 R + 0.587 G + 0.114 B``."""
    return np.asarray(rgb, dtype=np.float64) @ LUMA


def image_gradient(image: np.ndarray) -> np.ndarray:
    """Gradient magnitude by centered differences with replicated borders."""
    img = np.asarray(image, dtype=np.float64)
    p = np.pad(img, 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) * 0.5
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) * 0.5
    return np.sqrt(gx * gx + gy * gy)


@dataclass(frozen=True, eq=False)
class CameraView:
    """One calibrated grayscale view.

    ``rotation`` and ``translation`` map world points into the camera frame
    (``x_cam = R @ x_world + t``).  ``gradient`` holds the gradient magnitude
    of ``image``; use :meth:`from_image` to have it computed.
    """

    intrinsics: CameraIntrinsics
    rotation: np.ndarray
    translation: np.ndarray
    image: np.ndarray
    gradient: np.ndarray
    view_weight: float = 1.0

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        img = np.ascontiguousarray(self.image, dtype=np.float64)
        grad = np.ascontiguousarray(self.gradient, dtype=np.float64)
        if np.linalg.norm(R.T @ R - np.eye(3)) >= 1e-9 or np.linalg.det(R) <= 0:
            raise ValueError("rotation must be orthonormal with determinant +1")
        if img.ndim != 2 or img.shape != grad.shape:
            raise ValueError("image and gradient must be 2-D grids of equal shape")
        h, w = img.shape
        k = self.intrinsics
        if not (0 <= k.cx <= w and 0 <= k.cy <= h):
            raise ValueError("principal point lies outside the image")
        if not (0 < self.view_weight <= 1):
            raise ValueError(f"view weight must be in (0, 1], got {self.view_weight}")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "gradient", grad)

    @classmethod
    def from_image(cls, intrinsics, rotation, translation, image, view_weight=1.0):
        image = np.asarray(image, dtype=np.float64)
        return cls(intrinsics, rotation, translation, image, image_gradient(image), view_weight)

    @property
    def shape(self) -> tuple[int, int]:
        return self.image.shape

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def with_weight(self, weight: float) -> "CameraView":
        return replace(self, view_weight=float(weight))

    def with_image(self, image) -> "CameraView":
        image = np.asarray(image, dtype=np.float64)
        return replace(self, image=image, gradient=image_gradient(image))


@dataclass(frozen=True)
class SparsePoint:
    position: np.ndarray
    color: tuple = (0.0, 0.0, 0.0)
    reproj_error: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise ValueError("point position must be finite")
        if self.reproj_error < 0:
            raise ValueError("reprojection error must be non-negative")
        object.__setattr__(self, "position", pos)


class SparseCloud:
    """Array view of a sparse point cloud.

    ``positions`` (N, 3) in meters, ``colors`` (N, 3) in 0-255 RGB and
    ``errors`` (N,) mean reprojection errors in pixels.
    """

    def __init__(self, positions, colors=None, errors=None):
        self.positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        n = len(self.positions)
        self.colors = (
            np.zeros((n, 3)) if colors is None else np.asarray(colors, dtype=np.float64).reshape(n, 3)
        )
        self.errors = np.zeros(n) if errors is None else np.asarray(errors, dtype=np.float64).reshape(n)
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("point positions must be finite")
        if np.any(self.errors < 0):
            raise ValueError("reprojection errors must be non-negative")

    @classmethod
    def from_points(cls, points) -> "SparseCloud":
        if isinstance(points, SparseCloud):
            return points
        points = list(points)
        if not points:
            return cls(np.zeros((0, 3)))
        return cls(
            [p.position for p in points],
            [p.color for p in points],
            [p.reproj_error for p in points],
        )

    def __len__(self):
        return len(self.positions)

    def __getitem__(self, i) -> SparsePoint:
        return SparsePoint(self.positions[i], tuple(self.colors[i]), float(self.errors[i]))

    def subset(self, idx) -> "SparseCloud":
        return SparseCloud(self.positions[idx], self.colors[idx], self.errors[idx])


@dataclass(frozen=True, eq=False)
class PlaneSurface:
    """Plane through ``point`` with unit ``normal`` (world frame)."""

    point: np.ndarray
    normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -1.0]))

    def __post_init__(self):
        p = np.asarray(self.point, dtype=np.float64).reshape(3)
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm < EPS_GEOM or not np.all(np.isfinite(p)):
            raise DegeneratePlane("plane normal must be finite and non-zero")
        object.__setattr__(self, "point", p)
        object.__setattr__(self, "normal", n / norm)

    def signed_distance(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return (X - self.point) @ self.normal

    def oriented_toward(self, center) -> "PlaneSurface":
        """Return the same plane with its normal facing ``center``."""
        s = float(self.normal @ (np.asarray(center, dtype=np.float64) - self.point))
        if abs(s) <= EPS_GEOM:
            raise DegeneratePlane("plane passes through the camera center")
        return self if s > 0 else PlaneSurface(self.point, -self.normal)

    def is_canonical(self, center) -> bool:
        return float(self.normal @ (np.asarray(center, dtype=np.float64) - self.point)) > EPS_GEOM

    def __eq__(self, other):
        if not isinstance(other, PlaneSurface):
            return NotImplemented
        return bool(np.array_equal(self.point, other.point) and np.array_equal(self.normal, other.normal))

    __hash__ = None


def to_camera(view: CameraView, X) -> np.ndarray:
    return np.asarray(X, dtype=np.float64) @ view.rotation.T + view.translation


def project(view: CameraView, X) -> np.ndarray:
    """Project one world point to pixel coordinates."""
    x, y, z = to_camera(view, np.asarray(X, dtype=np.float64).reshape(3))
    if z <= EPS_GEOM:
        raise NonPositiveDepth(f"point has depth {z} in the camera frame")
    k = view.intrinsics
    return np.array([k.fx * x / z + k.cx, k.fy * y / z + k.cy])


def project_points(view: CameraView, X) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised projection; returns ``(pixels, depths)`` without raising.

    Pixels of points at non-positive depth are NaN.
    """
    Xc = to_camera(view, np.atleast_2d(X))
    z = Xc[:, 2]
    k = view.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        u = k.fx * Xc[:, 0] / z + k.cx
        v = k.fy * Xc[:, 1] / z + k.cy
    uv = np.stack([u, v], axis=1)
    uv[z <= EPS_GEOM] = np.nan
    return uv, z


def pixel_rays(view: CameraView, xs, ys) -> np.ndarray:
    """Camera-frame rays with unit z component for pixel coordinates."""
    k = view.intrinsics
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    return np.stack([(xs - k.cx) / k.fx, (ys - k.cy) / k.fy, np.ones_like(xs)], axis=-1)


def back_project(view: CameraView, pixel, depth) -> np.ndarray:
    ray = pixel_rays(view, pixel[0], pixel[1])
    Xc = ray * depth
    return (Xc - view.translation) @ view.rotation


def plane_in_camera(view: CameraView, plane: PlaneSurface) -> tuple[np.ndarray, float]:
    """Plane as ``(n, d)`` in the camera frame, with ``n . X = d`` on the plane."""
    n_c = view.rotation @ plane.normal
    p_c = view.rotation @ plane.point + view.translation
    return n_c, float(n_c @ p_c)


def plane_from_camera(view: CameraView, n_c, d) -> PlaneSurface:
    """Inverse of :func:`plane_in_camera`."""
    n_c = np.asarray(n_c, dtype=np.float64)
    n_c = n_c / np.linalg.norm(n_c)
    p_c = n_c * d
    return PlaneSurface((p_c - view.translation) @ view.rotation, view.rotation.T @ n_c)


def relative_pose(ref: CameraView, target: CameraView) -> tuple[np.ndarray, np.ndarray]:
    R_rel = target.rotation @ ref.rotation.T
    t_rel = target.translation - R_rel @ ref.translation
    return R_rel, t_rel


def plane_homography(ref: CameraView, target: CameraView, plane: PlaneSurface) -> np.ndarray:
    """Homography taking reference pixels to ``target`` pixels through ``plane``."""
    R_rel, t_rel = relative_pose(ref, target)
    n_c, d = plane_in_camera(ref, plane)
    if abs(d) < EPS_GEOM:
        raise DegeneratePlane("plane passes through the reference camera center")
    return target.intrinsics.K @ (R_rel + np.outer(t_rel, n_c) / d) @ ref.intrinsics.K_inv


def apply_homography(H: np.ndarray, xs, ys) -> tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    w = H[2, 0] * xs + H[2, 1] * ys + H[2, 2]
    return (H[0, 0] * xs + H[0, 1] * ys + H[0, 2]) / w, (H[1, 0] * xs + H[1, 1] * ys + H[1, 2]) / w


class WarpBasis:
    """Plane-independent parts of the homographies from ``ref`` to ``views``.

    ``H_v(n, d) = A_v + b_v m^T`` with ``m = K_ref^-T n / d``, which lets many
    candidate planes be warped with one broadcast.
    """

    def __init__(self, ref: CameraView, views: list[CameraView]):
        self.ref = ref
        Kr_inv = ref.intrinsics.K_inv
        A, b = [], []
        for v in views:
            R_rel, t_rel = relative_pose(ref, v)
            A.append(v.intrinsics.K @ R_rel @ Kr_inv)
            b.append(v.intrinsics.K @ t_rel)
        self.A = np.array(A).reshape(-1, 3, 3)
        self.b = np.array(b).reshape(-1, 3)
        self.Kr_inv = Kr_inv

    def homographies(self, normals, offsets) -> np.ndarray:
        """``(K, V, 3, 3)`` homographies for camera-frame planes ``(K, 3)``, ``(K,)``."""
        normals = np.atleast_2d(normals)
        offsets = np.atleast_1d(np.asarray(offsets, dtype=np.float64))
        if np.any(np.abs(offsets) < EPS_GEOM):
            raise DegeneratePlane("plane passes through the reference camera center")
        m = (normals @ self.Kr_inv) / offsets[:, None]
        return self.A[None] + self.b[None, :, :, None] * m[:, None, None, :]


def fit_plane(points, min_count: int = 3, viewpoint=None, return_rms: bool = False):
    """Total-least-squares plane through ``points``.

    The centroid is the plane point; the normal is the direction of least
    scatter, oriented toward ``viewpoint`` (world origin by default).
    """
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(P) < max(min_count, 3):
        raise DegenerateConfiguration(f"need at least {max(min_count, 3)} points, got {len(P)}")
    c = P.mean(axis=0)
    Q = P - c
    _, s, vt = np.linalg.svd(Q, full_matrices=False)
    if s[0] <= EPS_GEOM or s[1] <= 1e-9 * s[0]:
        raise DegenerateConfiguration("points are collinear or coincident")
    normal = vt[2]
    vp = np.zeros(3) if viewpoint is None else np.asarray(viewpoint, dtype=np.float64)
    plane = PlaneSurface(c, normal).oriented_toward(vp)
    if return_rms:
        rms = float(np.sqrt(np.mean((Q @ plane.normal) ** 2)))
        return plane, rms
    return plane


def depth_on_plane(view: CameraView, pixel, plane: PlaneSurface) -> float:
    """Camera-frame depth where the ray through ``pixel`` meets ``plane``."""
    ray = pixel_rays(view, pixel[0], pixel[1])
    n_c, d = plane_in_camera(view, plane)
    denom = float(n_c @ ray)
    if abs(denom) / np.linalg.norm(ray) <= EPS_GEOM:
        raise RayParallelToPlane("viewing ray is parallel to the plane")
    z = d / denom
    if z <= EPS_GEOM:
        raise NegativeIntersection("plane lies behind the camera along this ray")
    return z


def depths_on_planes(view: CameraView, xs, ys, normals, offsets) -> np.ndarray:
    """Depth of pixels ``(N,)`` on camera-frame planes ``(K, 3)``/``(K,)``.

    Returns ``(K, N)``; invalid intersections are NaN.
    """
    rays = pixel_rays(view, xs, ys)
    normals = np.atleast_2d(normals)
    offsets = np.atleast_1d(offsets)
    denom = normals @ rays.T
    rn = np.linalg.norm(rays, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = offsets[:, None] / denom
    bad = (np.abs(denom) <= EPS_GEOM * rn) | ~(z > EPS_GEOM)
    z[bad] = np.nan
    return z


def depths_on_plane(view: CameraView, xs, ys, plane: PlaneSurface) -> np.ndarray:
    n_c, d = plane_in_camera(view, plane)
    return depths_on_planes(view, xs, ys, n_c[None], np.array([d]))[0]


def normal_from_angles(theta: float, phi: float) -> np.ndarray:
    """Camera-frame unit normal facing the camera; ``theta`` is the tilt away
    from fronto-parallel and ``phi`` its azimuth."""
    st = np.sin(theta)
    return np.array([st * np.cos(phi), st * np.sin(phi), -np.cos(theta)])


def angles_from_normal(n_c) -> tuple[float, float]:
    n = np.asarray(n_c, dtype=np.float64)
    n = n / np.linalg.norm(n)
    theta = float(np.arccos(np.clip(-n[2], -1.0, 1.0)))
    phi = float(np.arctan2(n[1], n[0]))
    return theta, phi


def plane_to_params(view: CameraView, pixel, plane: PlaneSurface) -> np.ndarray:
    """``(inverse depth at pixel, theta, phi)`` for a plane, in ``view``'s frame."""
    z = depth_on_plane(view, pixel, plane)
    n_c, _ = plane_in_camera(view, plane)
    if n_c[2] > 0:
        n_c = -n_c
    theta, phi = angles_from_normal(n_c)
    return np.array([1.0 / z, theta, phi])


def params_to_plane(view: CameraView, pixel, params) -> PlaneSurface:
    inv_depth, theta, phi = params
    if inv_depth <= 0:
        raise NegativeIntersection("inverse depth must be positive")
    n_c = normal_from_angles(theta, phi)
    X_c = pixel_rays(view, pixel[0], pixel[1]) / inv_depth
    d = float(n_c @ X_c)
    plane = plane_from_camera(view, n_c, d)
    return plane.oriented_toward(view.center)


def fronto_parallel_plane(view: CameraView, depth: float) -> PlaneSurface:
    """Plane perpendicular to the optical axis at ``depth``."""
    return plane_from_camera(view, np.array([0.0, 0.0, -1.0]), -float(depth))


def canonical_camera_plane(n_c, d):
    """Flip ``(n, d)`` so that the normal faces the camera (``d < 0``)."""
    n_c = np.asarray(n_c, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    flip = d > 0
    return np.where(flip[..., None], -n_c, n_c), np.where(flip, -d, d)
