"""Initial plane for every patch of a segment.

Patches with enough reliable seeds are fitted directly (most seeds first),
the rest are filled in breadth-first from initialized neighbours.  A
segment without usable seeds is bootstrapped by a fronto-parallel plane
sweep on its most textured patch.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    AmbiguousSweep,
    DegenerateConfiguration,
    DegeneratePlane,
    EmptyCloud,
    InsufficientSeeds,
    NoInitializedNeighbor,
    UninitializableSegment,
)
from .geometry import (
    CameraView,
    PlaneSurface,
    SparseCloud,
    WarpBasis,
    back_project,
    depths_on_plane,
    fit_plane,
    fronto_parallel_plane,
    project_points,
)
from .patch_graph import Patch, PatchPair, SegmentGraph

logger = logging.getLogger(__name__)

SEEDED = "seeded"
PROPAGATED = "propagated"
SWEEP = "sweep"


@dataclass
class InitParams:
    seed_max_error: float = 0.1
    n_hypotheses: int = 64
    depth_margin: float = 0.1
    ambiguity_ratio: float = 0.9


@dataclass(frozen=True)
class DepthRange:
    d_min: float
    d_max: float

    def __post_init__(self):
        if not (0 < self.d_min < self.d_max):
            raise ValueError(f"invalid depth range [{self.d_min}, {self.d_max}]")

    def inverse_depths(self, n: int) -> np.ndarray:
        """``n`` inverse depths, uniformly spaced, from the far bound to the near bound."""
        return np.linspace(1.0 / self.d_max, 1.0 / self.d_min, n)

    def inverse_step(self, n: int) -> float:
        return (1.0 / self.d_min - 1.0 / self.d_max) / (n - 1)


@dataclass
class SweepResult:
    plane: PlaneSurface
    depths: np.ndarray
    errors: np.ndarray
    best_index: int


@dataclass
class InitReport:
    sources: list = field(default_factory=list)
    sweeps: int = 0
    valid: bool = True
    sweep: SweepResult | None = None


def seed_order(patches) -> list[int]:
    """Ids of seeded patches, most seeds first, ties by id."""
    seeded = [p for p in patches if p.eta > 0]
    return [p.id for p in sorted(seeded, key=lambda p: (-p.eta, p.id))]


def init_from_sparse(patch: Patch, cloud, ref_view: CameraView, max_error: float = 0.1) -> PlaneSurface:
    """Plane through the patch seeds with reprojection error below ``max_error``.

    With fewer than three such seeds the three lowest-error seeds are used.
    """
    cloud = SparseCloud.from_points(cloud)
    if patch.eta < 3:
        raise InsufficientSeeds(f"patch {patch.id} has {patch.eta} seeds")
    idx = np.asarray(patch.seeds)
    err = cloud.errors[idx]
    good = idx[err < max_error]
    if len(good) < 3:
        good = idx[np.argsort(err, kind="stable")[:3]]
    return fit_plane(cloud.positions[good], viewpoint=ref_view.center)


def _border_points(pair: PatchPair, plane: PlaneSurface, ref_view: CameraView) -> np.ndarray:
    z = depths_on_plane(ref_view, pair.xs, pair.ys, plane)
    ok = np.isfinite(z)
    if not ok.any():
        return np.zeros((0, 3))
    return back_project(ref_view, (pair.xs[ok], pair.ys[ok]), z[ok][:, None])


def propagate(patches, pairs, ref_view: CameraView) -> list[int]:
    """Fill uninitialized patches breadth-first from initialized neighbours.

    Each layer only sees planes set in earlier layers, so the result does
    not depend on the order within a layer.  A patch with one initialized
    neighbour copies its plane; with several, it gets the plane fitted
    through the 3-D border points of all of them.  Returns the ids filled.
    """
    by_id = {p.id: p for p in patches}
    if not any(p.plane is not None for p in patches):
        raise NoInitializedNeighbor("segment has no initialized patch")
    incident: dict[int, list[PatchPair]] = {p.id: [] for p in patches}
    for pr in pairs:
        incident[pr.p].append(pr)
        incident[pr.q].append(pr)
    filled = []
    while True:
        layer = []
        for p in patches:
            if p.plane is not None:
                continue
            nbs = sorted(
                (pr.q if pr.p == p.id else pr.p, pr)
                for pr in incident[p.id]
                if by_id[pr.q if pr.p == p.id else pr.p].plane is not None
            ) if incident[p.id] else []
            if nbs:
                layer.append((p, nbs))
        if not layer:
            break
        new = {}
        for p, nbs in layer:
            new[p.id] = _joined_plane(nbs, by_id, ref_view)
        for pid, plane in new.items():
            by_id[pid].plane = plane
            by_id[pid].init_source = PROPAGATED
            filled.append(pid)
    return filled


def _joined_plane(nbs, by_id, ref_view):
    longest = min(nbs, key=lambda qp: (-qp[1].size, qp[0]))
    if len(nbs) == 1:
        return by_id[longest[0]].plane
    pts = np.concatenate([_border_points(pr, by_id[q].plane, ref_view) for q, pr in nbs])
    try:
        return fit_plane(pts, viewpoint=ref_view.center)
    except (DegenerateConfiguration, DegeneratePlane):
        return by_id[longest[0]].plane


def depth_range(cloud, ref_view: CameraView, margin: float = 0.1) -> DepthRange:
    """Depth interval of the cloud in the reference view, widened by ``margin``."""
    cloud = SparseCloud.from_points(cloud)
    if len(cloud) == 0:
        raise EmptyCloud("no sparse points")
    _, z = project_points(ref_view, cloud.positions)
    z = z[z > 0]
    if not len(z):
        raise EmptyCloud("no sparse point lies in front of the reference camera")
    return DepthRange(float(z.min()) * (1 - margin), float(z.max()) * (1 + margin))


def sweep_errors(patch: Patch, views: list[CameraView], depths) -> np.ndarray:
    """Intensity-variance cost of fronto-parallel planes at ``depths``; inf when out of bounds."""
    ref = views[0]
    basis = WarpBasis(ref, views)
    depths = np.asarray(depths, dtype=np.float64)
    normals = np.tile([0.0, 0.0, -1.0], (len(depths), 1))
    H = basis.homographies(normals, -depths)
    w = np.array([v.view_weight for v in views], dtype=np.float64)
    psi_i, _, nbad = kernels.photometric_costs(
        np.stack([v.image for v in views]),
        np.stack([v.gradient for v in views]),
        H,
        w / w.sum(),
        patch.xs.astype(np.float64),
        patch.ys.astype(np.float64),
    )
    return np.where(nbad * 2 <= patch.size, psi_i, np.inf)


def plane_sweep_init(patch: Patch, views: list[CameraView], rng: DepthRange, n_hypotheses: int = 64,
                     ambiguity_ratio: float = 0.9) -> SweepResult:
    """Best fronto-parallel plane for ``patch`` among depths uniform in inverse depth."""
    if len(views) < 2:
        raise ValueError("plane sweep needs at least two views")
    if patch.gradient_score <= 0:
        raise ValueError("plane sweep needs a patch with non-zero gradient")
    depths = 1.0 / rng.inverse_depths(n_hypotheses)
    errors = sweep_errors(patch, views, depths)
    finite = errors[np.isfinite(errors)]
    if not len(finite):
        raise AmbiguousSweep("every hypothesis leaves the other views", errors)
    best = int(np.argmin(errors))
    med = float(np.median(finite))
    if med <= 0 or errors[best] / med > ambiguity_ratio:
        raise AmbiguousSweep(f"sweep minimum {errors[best]:.4g} vs median {med:.4g}", errors)
    return SweepResult(fronto_parallel_plane(views[0], depths[best]), depths, errors, best)


def _components(graph: SegmentGraph) -> list[list[int]]:
    seen = [False] * len(graph.patches)
    comps = []
    for start in range(len(graph.patches)):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            p = stack.pop()
            comp.append(p)
            for q in graph.neighbors(p):
                if not seen[q]:
                    seen[q] = True
                    stack.append(q)
        comps.append(sorted(comp))
    return comps


def init_segment(graph: SegmentGraph, cloud, views: list[CameraView], params: InitParams | None = None,
                 drange: DepthRange | None = None) -> InitReport:
    """Initialize every patch plane of a segment in place.

    Raises :class:`UninitializableSegment` when the segment has no usable
    seed and the sweep is ambiguous on every textured patch.
    """
    params = params or InitParams()
    cloud = SparseCloud.from_points(cloud)
    ref = views[0]
    patches = graph.patches
    for p in patches:
        p.plane = None
        p.init_source = None
    for pid in seed_order(patches):
        p = patches[pid]
        try:
            p.plane = init_from_sparse(p, cloud, ref, params.seed_max_error)
            p.init_source = SEEDED
        except (InsufficientSeeds, DegenerateConfiguration, DegeneratePlane):
            continue
    report = InitReport()
    if any(p.plane is not None for p in patches):
        propagate(patches, graph.pairs, ref)
    # components that no seed reaches (possible after cluster-driven merging)
    for comp in _components(graph):
        if any(patches[i].plane is not None for i in comp):
            continue
        if drange is None:
            drange = depth_range(cloud, ref, params.depth_margin)
        result = _sweep_component([patches[i] for i in comp], views, drange, params, report)
        report.sweep = report.sweep or result
        sub = [patches[i] for i in comp]
        propagate(sub, [pr for pr in graph.pairs if pr.p in set(comp)], ref)
    report.sources = [p.init_source for p in patches]
    return report


def _sweep_component(patches, views, drange, params, report):
    textured = sorted((p for p in patches if p.gradient_score > 0), key=lambda p: (-p.gradient_score, p.id))
    for p in textured:
        report.sweeps += 1
        try:
            result = plane_sweep_init(p, views, drange, params.n_hypotheses, params.ambiguity_ratio)
        except AmbiguousSweep:
            logger.debug("ambiguous sweep on patch %d", p.id)
            continue
        p.plane = result.plane
        p.init_source = SWEEP
        return result
    raise UninitializableSegment("plane sweep is ambiguous on every textured patch")
