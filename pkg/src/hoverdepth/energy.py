"""Cost terms of the per-segment plane-fitting energy.

The total cost of a segment is

    sum_p  lam_p * C_p * (psi_D + psi_I + lam_g * psi_G)
  + tau * sum_(p,q)  lam_pq * max(C_p, C_q) * psi_C

with ``psi_D`` the sparse-point depth residual, ``psi_I``/``psi_G`` the
view-weighted variance of warped intensities/gradient magnitudes and
``psi_C`` a penalty picked by the configuration of the two planes at their
shared border.  By convention ``views[0]`` is the reference view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import PatchOutOfBounds
from .geometry import (
    CameraView,
    PlaneSurface,
    SparseCloud,
    WarpBasis,
    canonical_camera_plane,
    depths_on_planes,
    pixel_rays,
    plane_in_camera,
    project_points,
)
from .patch_graph import PatchFootprint, SegmentGraph

CONNECTED = "connected"
DISCONNECTED = "disconnected"
OCCLUDED = "occluded"
OTHER = "other"


@dataclass
class EnergyParams:
    delta: float = 7.0
    lambda_g: float = 3.0
    tau: float = 1.7
    rho1: float = 0.6
    rho2: float = 3.5
    rho3: float = 20.0
    t_conn: float = 0.02
    t_occ: float = 0.3
    min_reproj_error: float = 0.01

    def __post_init__(self):
        if not (0 < self.rho1 < self.rho2 < self.rho3):
            raise ValueError("pair penalties must satisfy 0 < rho1 < rho2 < rho3")
        if self.delta <= 0 or self.lambda_g < 0 or self.tau < 0:
            raise ValueError("need delta > 0, lambda_g >= 0, tau >= 0")
        if not (0 < self.t_conn < self.t_occ):
            raise ValueError("need 0 < t_conn < t_occ")
        if self.min_reproj_error <= 0:
            raise ValueError("min_reproj_error must be positive")


@dataclass
class TermBreakdown:
    psi_d: np.ndarray
    psi_i: np.ndarray
    psi_g: np.ndarray
    patch_weights: np.ndarray
    confidences: np.ndarray
    pair_psi: np.ndarray
    pair_weights: np.ndarray
    pair_confidences: np.ndarray
    pair_labels: list = field(default_factory=list)
    lambda_g: float = 3.0
    tau: float = 1.7

    @property
    def data(self) -> np.ndarray:
        return self.patch_weights * self.confidences * (self.psi_d + self.psi_i + self.lambda_g * self.psi_g)

    @property
    def pairs(self) -> np.ndarray:
        return self.tau * self.pair_weights * self.pair_confidences * self.pair_psi

    @property
    def total(self) -> float:
        return float(np.sum(self.data) + np.sum(self.pairs))


def confidence(eta: int, area: float, delta: float = 7.0) -> float:
    """Patch confidence: 0 for well-seeded (stable) patches, 1 for unseeded ones.

    In between it is ``1 / (eta * area)``, capped at 1.
    """
    spread = eta * area
    if spread >= delta:
        return 0.0
    if eta > 0 and spread > 0:
        return min(1.0, 1.0 / spread)
    return 1.0


def view_weights(views: list[CameraView], ref: CameraView | None = None) -> np.ndarray:
    """Gaussian fall-off of camera distance to the reference, median baseline as width."""
    ref = views[0] if ref is None else ref
    b = np.array([np.linalg.norm(v.center - ref.center) for v in views])
    nz = b[b > 0]
    if not len(nz):
        return np.ones(len(views))
    sigma = float(np.median(nz))
    return np.exp(-(b * b) / (2 * sigma * sigma))


def _camera_plane(ref, plane):
    n_c, d = plane_in_camera(ref, plane)
    n_c, d = canonical_camera_plane(n_c, d)
    return n_c[None], np.array([d], dtype=np.float64)


def sparse_term(patch, plane: PlaneSurface, cloud, ref_view: CameraView, min_error: float = 0.01) -> float:
    """Depth residuals of the patch's seeds against the plane, weighted by 1/reprojection error."""
    cloud = SparseCloud.from_points(cloud)
    if patch.eta == 0:
        return 0.0
    seeds = SeedSet(cloud, patch.seeds, ref_view, min_error)
    n_c, d = _camera_plane(ref_view, plane)
    return float(seeds.cost(ref_view, n_c, d)[0])


class SeedSet:
    """Reference-view pixels, depths and weights of a patch's seeds."""

    def __init__(self, cloud: SparseCloud, idx, ref_view: CameraView, min_error: float):
        idx = np.asarray(idx, dtype=np.int64)
        uv, z = project_points(ref_view, cloud.positions[idx])
        self.u, self.v, self.z = uv[:, 0], uv[:, 1], z
        self.inv_err = 1.0 / np.maximum(cloud.errors[idx], min_error)

    def cost(self, ref_view, normals, offsets) -> np.ndarray:
        if len(self.z) == 0:
            return np.zeros(len(offsets))
        zp = depths_on_planes(ref_view, self.u, self.v, normals, offsets)
        r = (self.inv_err * np.abs(self.z - zp)).sum(axis=1)
        return np.where(np.isnan(r), np.inf, r)


def _photometric(patch, plane, views):
    ref = views[0]
    basis = WarpBasis(ref, views)
    n_c, d = _camera_plane(ref, plane)
    H = basis.homographies(n_c, d)
    w = np.array([v.view_weight for v in views])
    psi_i, psi_g, nbad = kernels.photometric_costs(
        np.stack([v.image for v in views]),
        np.stack([v.gradient for v in views]),
        H,
        w / w.sum(),
        patch.xs.astype(np.float64),
        patch.ys.astype(np.float64),
    )
    if nbad[0] * 2 > patch.size:
        raise PatchOutOfBounds(f"{nbad[0]} of {patch.size} pixels have fewer than two samples")
    return float(psi_i[0]), float(psi_g[0])


def photo_term(patch, plane: PlaneSurface, views: list[CameraView]) -> float:
    """Sum over patch pixels of the view-weighted intensity variance across views."""
    if len(views) < 2:
        raise ValueError("photo-consistency needs at least two views")
    return _photometric(patch, plane, views)[0]


def gradient_term(patch, plane: PlaneSurface, views: list[CameraView]) -> float:
    """As :func:`photo_term` on gradient magnitudes."""
    if len(views) < 2:
        raise ValueError("photo-consistency needs at least two views")
    return _photometric(patch, plane, views)[1]


def classify_border(dp, dq, dp_at_q, dq_at_q, dp_at_p, dq_at_p, t_conn, t_occ):
    """Vectorised pair configuration from depths along the border and at patch centres.

    ``dp``/``dq`` are ``(K, N)`` border depths of the two planes; the
    ``*_at_*`` arrays are ``(K,)`` depths at the centre pixel of ``p``/``q``.
    Returns integer codes 0..3 (connected, disconnected, occluded, other).
    """
    with np.errstate(invalid="ignore"):
        diff = dq - dp
        bad = np.isnan(diff).any(axis=1)
        g = np.abs(diff).max(axis=1)
        p_front = (diff > 0).all(axis=1) & (dp_at_q < dq_at_q)
        q_front = (diff < 0).all(axis=1) & (dq_at_p < dp_at_p)
    code = np.where(g < t_conn, 0, np.where(g < t_occ, 1, np.where(p_front | q_front, 2, 3)))
    return np.where(bad, 3, code)


_LABELS = (CONNECTED, DISCONNECTED, OCCLUDED, OTHER)


def classify_pair(pair, plane_p: PlaneSurface, plane_q: PlaneSurface, ref_view: CameraView, thresholds=None,
                  centers=None) -> str:
    """Configuration of two neighbouring planes at their shared border.

    ``thresholds`` is ``(t_conn, t_occ)`` in meters or an :class:`EnergyParams`.
    ``centers`` gives the ``(x, y)`` centre pixels of ``p`` and ``q``; the
    occlusion side test needs them and falls back to the border centroid
    pushed one pixel-span away when omitted.
    """
    if thresholds is None:
        thresholds = EnergyParams()
    if isinstance(thresholds, EnergyParams):
        thresholds = (thresholds.t_conn, thresholds.t_occ)
    t_conn, t_occ = thresholds
    np_, dp_ = _camera_plane(ref_view, plane_p)
    nq_, dq_ = _camera_plane(ref_view, plane_q)
    if centers is None:
        centers = ((pair.xs.mean(), pair.ys.mean()),) * 2
    (px, py), (qx, qy) = centers
    cx = np.array([px, qx], dtype=np.float64)
    cy = np.array([py, qy], dtype=np.float64)
    dp = depths_on_planes(ref_view, pair.xs, pair.ys, np_, dp_)
    dq = depths_on_planes(ref_view, pair.xs, pair.ys, nq_, dq_)
    cp = depths_on_planes(ref_view, cx, cy, np_, dp_)[0]
    cq = depths_on_planes(ref_view, cx, cy, nq_, dq_)[0]
    code = classify_border(dp, dq, cp[1:2], cq[1:2], cp[0:1], cq[0:1], t_conn, t_occ)
    return _LABELS[int(code[0])]


def regularization_term(label: str, params: EnergyParams | None = None) -> float:
    params = params or EnergyParams()
    return {CONNECTED: 0.0, DISCONNECTED: params.rho1, OCCLUDED: params.rho2, OTHER: params.rho3}[label]


class EnergyModel:
    """Precomputed evaluator of one segment's cost for batches of candidate planes.

    Planes are handled in the reference camera frame as ``(normal, offset)``
    with ``normal . X = offset``, canonically oriented (``offset < 0``).
    ``confidence_override`` replaces every ``C_p`` (1.0 gives the unweighted
    "all patches free" energy).
    """

    def __init__(self, graph: SegmentGraph, views: list[CameraView], cloud, params: EnergyParams | None = None,
                 confidence_override: float | None = None):
        self.graph = graph
        self.views = views
        self.ref = views[0]
        self.params = params or EnergyParams()
        self.cloud = SparseCloud.from_points(cloud)
        self.basis = WarpBasis(self.ref, views)
        self.images = np.ascontiguousarray(np.stack([v.image for v in views]))
        self.grads = np.ascontiguousarray(np.stack([v.gradient for v in views]))
        w = np.array([v.view_weight for v in views], dtype=np.float64)
        self.weights = w / w.sum()
        patches = graph.patches
        self.xs = [p.xs.astype(np.float64) for p in patches]
        self.ys = [p.ys.astype(np.float64) for p in patches]
        self.footprints = [PatchFootprint(p) for p in patches]
        self.seeds = [SeedSet(self.cloud, p.seeds, self.ref, self.params.min_reproj_error) for p in patches]
        if confidence_override is None:
            self.conf = np.array([p.confidence for p in patches], dtype=np.float64)
        else:
            self.conf = np.full(len(patches), float(confidence_override))
        centers = np.array([p.center for p in patches], dtype=np.float64).reshape(-1, 2)
        self.cx, self.cy = centers[:, 0], centers[:, 1]
        self.pair_weights = np.array([pr.weight for pr in graph.pairs], dtype=np.float64)
        self.pair_conf = np.array([max(self.conf[pr.p], self.conf[pr.q]) for pr in graph.pairs])
        self.pair_rays = [pixel_rays(self.ref, pr.xs, pr.ys) for pr in graph.pairs]
        self.center_rays = pixel_rays(self.ref, self.cx, self.cy)
        self.rho = np.array([0.0, self.params.rho1, self.params.rho2, self.params.rho3])

    def camera_planes(self, planes) -> tuple[np.ndarray, np.ndarray]:
        n = np.zeros((len(planes), 3))
        d = np.zeros(len(planes))
        for i, pl in enumerate(planes):
            n[i], d[i] = plane_in_camera(self.ref, pl)
        return canonical_camera_plane(n, d)

    def data_terms(self, p: int, normals, offsets):
        """``(psi_d, psi_i, psi_g, lam_p, feasible)`` for ``K`` candidate planes of patch ``p``."""
        normals = np.atleast_2d(normals)
        offsets = np.atleast_1d(offsets)
        H = self.basis.homographies(normals, offsets)
        psi_i, psi_g, nbad = kernels.photometric_costs(
            self.images, self.grads, H, self.weights, self.xs[p], self.ys[p]
        )
        lam = 1.0 + np.std(self.footprints[p].area_ratios(H), axis=1)
        psi_d = self.seeds[p].cost(self.ref, normals, offsets)
        feasible = (nbad * 2 <= len(self.xs[p])) & np.isfinite(psi_d)
        return psi_d, psi_i, psi_g, lam, feasible

    def data_cost(self, p: int, normals, offsets) -> np.ndarray:
        if self.conf[p] == 0.0:
            return np.zeros(len(np.atleast_1d(offsets)))
        psi_d, psi_i, psi_g, lam, ok = self.data_terms(p, normals, offsets)
        c = lam * self.conf[p] * (psi_d + psi_i + self.params.lambda_g * psi_g)
        return np.where(ok, c, np.inf)

    def _depths(self, rays, normals, offsets):
        denom = normals @ rays.T
        with np.errstate(divide="ignore", invalid="ignore"):
            z = offsets[:, None] / denom
        rn = np.linalg.norm(rays, axis=-1)
        z[(np.abs(denom) <= 1e-9 * rn) | ~(z > 1e-9)] = np.nan
        return z

    def pair_codes(self, k: int, p: int, normals_p, offsets_p, n_q, d_q) -> np.ndarray:
        """Configuration codes of pair ``k`` for candidate planes of its endpoint ``p``."""
        pr = self.graph.pairs[k]
        q = pr.q if pr.p == p else pr.p
        rays = self.pair_rays[k]
        dp = self._depths(rays, normals_p, offsets_p)
        dq = self._depths(rays, n_q[None], np.array([d_q]))
        crays = self.center_rays[[p, q]]
        cp = self._depths(crays, normals_p, offsets_p)
        cq = self._depths(crays, n_q[None], np.array([d_q]))[0]
        return classify_border(
            dp, dq, cp[:, 1], np.full(len(cp), cq[1]), cp[:, 0], np.full(len(cp), cq[0]),
            self.params.t_conn, self.params.t_occ,
        )

    def pair_cost(self, k: int, codes) -> np.ndarray:
        return self.params.tau * self.pair_weights[k] * self.pair_conf[k] * self.rho[codes]

    def local_cost(self, p: int, normals, offsets, state_n, state_d) -> np.ndarray:
        """Cost terms touching patch ``p`` for ``K`` candidates, other patches fixed at the state."""
        normals = np.atleast_2d(normals)
        offsets = np.atleast_1d(np.asarray(offsets, dtype=np.float64))
        total = self.data_cost(p, normals, offsets)
        for k in self.graph.incident(p):
            pr = self.graph.pairs[k]
            q = pr.q if pr.p == p else pr.p
            if self.pair_weights[k] * self.pair_conf[k] == 0.0:
                continue
            total = total + self.pair_cost(k, self.pair_codes(k, p, normals, offsets, state_n[q], state_d[q]))
        return total

    def breakdown(self, state_n, state_d) -> TermBreakdown:
        P = len(self.graph.patches)
        psi_d = np.zeros(P)
        psi_i = np.zeros(P)
        psi_g = np.zeros(P)
        lam = np.ones(P)
        for p in range(P):
            d_, i_, g_, l_, ok = self.data_terms(p, state_n[p], state_d[p])
            if not ok[0]:
                i_ = g_ = np.array([np.inf])
            psi_d[p], psi_i[p], psi_g[p], lam[p] = d_[0], i_[0], g_[0], l_[0]
        codes = []
        for k, pr in enumerate(self.graph.pairs):
            c = self.pair_codes(k, pr.p, state_n[pr.p][None], np.array([state_d[pr.p]]),
                                state_n[pr.q], state_d[pr.q])
            codes.append(int(c[0]))
        codes = np.array(codes, dtype=np.int64)
        return TermBreakdown(
            psi_d=psi_d, psi_i=psi_i, psi_g=psi_g, patch_weights=lam, confidences=self.conf.copy(),
            pair_psi=self.rho[codes] if len(codes) else np.zeros(0),
            pair_weights=self.pair_weights.copy(), pair_confidences=self.pair_conf.copy(),
            pair_labels=[_LABELS[c] for c in codes],
            lambda_g=self.params.lambda_g, tau=self.params.tau,
        )

    def total(self, state_n, state_d) -> float:
        """Total cost; zero-confidence patches contribute nothing and are not evaluated."""
        data = np.zeros(len(self.graph.patches))
        for p in range(len(data)):
            if self.conf[p] != 0.0:
                data[p] = self.data_cost(p, state_n[p], state_d[p])[0]
        pairs = np.zeros(len(self.graph.pairs))
        for k, pr in enumerate(self.graph.pairs):
            if self.pair_weights[k] * self.pair_conf[k] == 0.0:
                continue
            c = self.pair_codes(k, pr.p, state_n[pr.p][None], np.array([state_d[pr.p]]),
                                state_n[pr.q], state_d[pr.q])
            pairs[k] = self.pair_cost(k, c)[0]
        return float(np.sum(data) + np.sum(pairs))


def total_cost(graph: SegmentGraph, planes, params: EnergyParams, views: list[CameraView], cloud,
               confidence_override: float | None = None) -> TermBreakdown:
    """Term-by-term evaluation of the segment cost at the given planes."""
    model = EnergyModel(graph, views, cloud, params, confidence_override)
    n, d = model.camera_planes(planes)
    return model.breakdown(n, d)
