"""Patches, their neighbourhood graph and the per-patch / per-pair weights."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, QhullError

from .geometry import CameraView, PlaneSurface, SparseCloud, WarpBasis, plane_in_camera, project_points


@dataclass
class Patch:
    id: int
    ys: np.ndarray
    xs: np.ndarray
    segment: int = 0
    seeds: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    plane: PlaneSurface | None = None
    gradient_score: float = 0.0
    seed_area: float = 0.0
    confidence: float = 1.0
    weight: float = 1.0
    init_source: str | None = None

    @property
    def eta(self) -> int:
        return len(self.seeds)

    @property
    def size(self) -> int:
        return len(self.ys)

    @property
    def center(self) -> tuple[float, float]:
        """Pixel of the patch closest to its centroid, as ``(x, y)``."""
        cy, cx = self.ys.mean(), self.xs.mean()
        k = int(np.argmin((self.ys - cy) ** 2 + (self.xs - cx) ** 2))
        return float(self.xs[k]), float(self.ys[k])


@dataclass
class PatchPair:
    p: int
    q: int
    ys: np.ndarray  # border pixels on the p side
    xs: np.ndarray
    weight: float = 0.0
    label: str | None = None

    @property
    def size(self) -> int:
        return len(self.ys)


@dataclass
class SegmentGraph:
    """Patches of one segment and the pairs of 4-adjacent patches.

    Patch ids are local to the segment (``patches[i].id == i``).
    """

    segment_id: int
    patches: list[Patch]
    pairs: list[PatchPair]

    def __post_init__(self):
        self._incident: list[list[int]] = [[] for _ in self.patches]
        for k, pr in enumerate(self.pairs):
            self._incident[pr.p].append(k)
            self._incident[pr.q].append(k)

    def incident(self, p: int) -> list[int]:
        """Indices into ``pairs`` of the pairs touching patch ``p``."""
        return self._incident[p]

    def neighbors(self, p: int) -> list[int]:
        out = []
        for k in self._incident[p]:
            pr = self.pairs[k]
            out.append(pr.q if pr.p == p else pr.p)
        return out


def tessellate_labels(labels, patch_size: int = 8) -> np.ndarray:
    """Split every labelled region into grid-cell patches.

    ``labels`` holds a region id per pixel (negative = excluded).  Each
    ``patch_size`` square cell is clipped to each region and split into its
    4-connected pieces; pieces smaller than ``patch_size**2 / 4`` are merged
    into the adjacent patch of the same region sharing the longest border.
    Returns patch ids numbered by first raster occurrence, -1 outside.
    """
    if patch_size < 4:
        raise ValueError("patch_size must be at least 4")
    labels = np.asarray(labels)
    h, w = labels.shape
    rr, cc = np.mgrid[0:h, 0:w]
    cell = (rr // patch_size) * ((w + patch_size - 1) // patch_size) + cc // patch_size
    idx = np.arange(h * w).reshape(h, w)
    inside = labels >= 0
    src, dst = [], []
    for a, b in (
        (np.s_[:, :-1], np.s_[:, 1:]),
        (np.s_[:-1, :], np.s_[1:, :]),
    ):
        same = inside[a] & inside[b] & (labels[a] == labels[b]) & (cell[a] == cell[b])
        src.append(idx[a][same])
        dst.append(idx[b][same])
    src = np.concatenate(src)
    dst = np.concatenate(dst)
    graph = coo_matrix((np.ones(len(src)), (src, dst)), shape=(h * w, h * w))
    _, comp = connected_components(graph, directed=False)
    comp = comp.reshape(h, w)
    comp[~inside] = -1
    comp = _merge_small_patches(comp, labels, patch_size * patch_size / 4.0)
    return _renumber(comp)


def _renumber(comp):
    out = np.full(comp.shape, -1, dtype=np.int64)
    m = comp >= 0
    if not m.any():
        return out
    vals = comp[m]
    uniq, first, inv = np.unique(vals, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(uniq))
    out[m] = rank[inv]
    return out


def _border_counts(comp, labels):
    """``{(a, b): shared edge count}`` for 4-adjacent patches of the same region."""
    a = np.concatenate([comp[:, :-1].ravel(), comp[:-1, :].ravel()])
    b = np.concatenate([comp[:, 1:].ravel(), comp[1:, :].ravel()])
    la = np.concatenate([labels[:, :-1].ravel(), labels[:-1, :].ravel()])
    lb = np.concatenate([labels[:, 1:].ravel(), labels[1:, :].ravel()])
    keep = (a != b) & (a >= 0) & (b >= 0) & (la == lb)
    lo = np.minimum(a[keep], b[keep])
    hi = np.maximum(a[keep], b[keep])
    pairs, counts = np.unique(np.stack([lo, hi], 1), axis=0, return_counts=True)
    return pairs, counts


def _merge_small_patches(comp, labels, min_area):
    comp = _renumber(comp)
    n = int(comp.max()) + 1
    if n <= 0:
        return comp
    size = np.bincount(comp[comp >= 0], minlength=n).astype(np.int64)
    if size.min() >= min_area:
        return comp
    pairs, counts = _border_counts(comp, labels)
    border: list[dict] = [dict() for _ in range(n)]
    for (a, b), c in zip(pairs, counts):
        border[a][int(b)] = int(c)
        border[b][int(a)] = int(c)
    parent = np.arange(n)
    heap = [(int(size[k]), k) for k in range(n) if size[k] < min_area]
    heapq.heapify(heap)
    while heap:
        sz, k = heapq.heappop(heap)
        if parent[k] != k or sz != size[k] or size[k] >= min_area or not border[k]:
            continue
        target = min(border[k], key=lambda q: (-border[k][q], q))
        parent[k] = target
        size[target] += size[k]
        for q, c in border[k].items():
            del border[q][k]
            if q != target:
                border[q][target] = border[q].get(target, 0) + c
                border[target][q] = border[target].get(q, 0) + c
        border[k] = {}
        if size[target] < min_area:
            heapq.heappush(heap, (int(size[target]), target))
    root = parent.copy()
    for k in range(n):
        r = k
        while root[r] != r:
            r = root[r]
        root[k] = r
    out = comp.copy()
    m = comp >= 0
    out[m] = root[comp[m]]
    return out


def patches_from_labels(patch_labels, segment: int = 0) -> list[Patch]:
    flat = patch_labels.reshape(-1)
    w = patch_labels.shape[1]
    pix = np.flatnonzero(flat >= 0)
    order = pix[np.argsort(flat[pix], kind="stable")]
    bounds = np.flatnonzero(np.diff(flat[order])) + 1
    patches = []
    for chunk in np.split(order, bounds) if len(order) else []:
        ys, xs = np.divmod(chunk, w)
        patches.append(Patch(int(flat[chunk[0]]), ys, xs, segment))
    return patches


def tessellate(segment, patch_size: int = 8) -> list[Patch]:
    """Patches covering one segment (an :class:`ImageSegment` or boolean mask)."""
    mask = segment if isinstance(segment, np.ndarray) else segment.mask()
    seg_id = 0 if isinstance(segment, np.ndarray) else segment.id
    labels = np.where(mask, 0, -1)
    return patches_from_labels(tessellate_labels(labels, patch_size), seg_id)


def _local_label_image(patches):
    ys = np.concatenate([p.ys for p in patches])
    xs = np.concatenate([p.xs for p in patches])
    y0, x0 = ys.min(), xs.min()
    img = np.full((ys.max() - y0 + 1, xs.max() - x0 + 1), -1, dtype=np.int64)
    for p in patches:
        img[p.ys - y0, p.xs - x0] = p.id
    return img, y0, x0


def adjacency(patches) -> list[PatchPair]:
    """Pairs of 4-adjacent patches, ``p < q``, with the p-side border pixels."""
    if not patches:
        return []
    img, y0, x0 = _local_label_image(patches)
    h, w = img.shape
    idx = np.arange(h * w).reshape(h, w)
    P, Q, PIX = [], [], []
    for a, b in ((np.s_[:, :-1], np.s_[:, 1:]), (np.s_[:-1, :], np.s_[1:, :])):
        la, lb = img[a], img[b]
        m = (la != lb) & (la >= 0) & (lb >= 0)
        la, lb, ia, ib = la[m], lb[m], idx[a][m], idx[b][m]
        first_is_p = la < lb
        P.append(np.where(first_is_p, la, lb))
        Q.append(np.where(first_is_p, lb, la))
        PIX.append(np.where(first_is_p, ia, ib))
    P, Q, PIX = np.concatenate(P), np.concatenate(Q), np.concatenate(PIX)
    if not len(P):
        return []
    trip = np.unique(np.stack([P, Q, PIX], 1), axis=0)
    bounds = np.flatnonzero(np.any(np.diff(trip[:, :2], axis=0) != 0, axis=1)) + 1
    pairs = []
    for chunk in np.split(trip, bounds):
        ys, xs = np.divmod(chunk[:, 2], w)
        pairs.append(PatchPair(int(chunk[0, 0]), int(chunk[0, 1]), ys + y0, xs + x0))
    return pairs


def pair_weight(pair: PatchPair, gradient_image) -> float:
    """Mean gradient magnitude over the shared border pixels."""
    if pair.size == 0:
        raise ValueError("pair has an empty border")
    return float(np.mean(np.asarray(gradient_image)[pair.ys, pair.xs]))


class PatchFootprint:
    """Outline of a patch on the pixel-corner lattice, for warped-area computations.

    The warped area is the sum of the warped pixel quads; edges shared by two
    quads cancel in the shoelace sum, so only the outline is kept.
    """

    def __init__(self, patch: Patch):
        y0, x0 = patch.ys.min(), patch.xs.min()
        nx = patch.xs.max() - x0 + 2
        r, c = patch.ys - y0, patch.xs - x0
        quads = np.stack([r * nx + c, r * nx + c + 1, (r + 1) * nx + c + 1, (r + 1) * nx + c], axis=1)
        a = quads.ravel()
        b = np.roll(quads, -1, axis=1).ravel()
        fwd = set(zip(a.tolist(), b.tolist()))
        keep = np.array([(j, i) not in fwd for i, j in zip(a.tolist(), b.tolist())], dtype=bool)
        corners, inv = np.unique(np.concatenate([a[keep], b[keep]]), return_inverse=True)
        self.ea, self.eb = inv[: keep.sum()], inv[keep.sum():]
        gy, gx = np.divmod(corners, nx)
        self.cx = (gx + x0 - 0.5).astype(np.float64)
        self.cy = (gy + y0 - 0.5).astype(np.float64)
        self.n_pixels = patch.size

    def area_ratios(self, homographies) -> np.ndarray:
        """Warped area / pixel count for ``(..., 3, 3)`` homographies."""
        H = np.asarray(homographies)
        den = H[..., 2, 0, None] * self.cx + H[..., 2, 1, None] * self.cy + H[..., 2, 2, None]
        u = (H[..., 0, 0, None] * self.cx + H[..., 0, 1, None] * self.cy + H[..., 0, 2, None]) / den
        v = (H[..., 1, 0, None] * self.cx + H[..., 1, 1, None] * self.cy + H[..., 1, 2, None]) / den
        cross = u[..., self.ea] * v[..., self.eb] - u[..., self.eb] * v[..., self.ea]
        return 0.5 * np.abs(cross.sum(axis=-1)) / self.n_pixels


def patch_weight(patch: Patch, views: list[CameraView], plane: PlaneSurface, ref: CameraView | None = None) -> float:
    """``1 + std`` over views of the patch's warped-area ratio.

    ``ref`` defaults to ``views[0]``.
    """
    ref = views[0] if ref is None else ref
    basis = WarpBasis(ref, views)
    n_c, d = plane_in_camera(ref, plane)
    H = basis.homographies(n_c[None], np.array([d]))[0]
    return 1.0 + float(np.std(PatchFootprint(patch).area_ratios(H)))


def assign_seeds(patches, patch_labels, cloud: SparseCloud, ref_view: CameraView, label_ids=None):
    """Attach to every patch the cloud points projecting into its pixels.

    ``label_ids[i]`` is the value of ``patches[i]`` in ``patch_labels``
    (defaults to the patch ids).
    """
    if len(cloud) == 0:
        return
    uv, z = project_points(ref_view, cloud.positions)
    h, w = patch_labels.shape
    col = np.floor(uv[:, 0] + 0.5)
    row = np.floor(uv[:, 1] + 0.5)
    ok = np.isfinite(col) & (col >= 0) & (col < w) & (row >= 0) & (row < h)
    pid = np.full(len(cloud), -1, dtype=np.int64)
    pid[ok] = patch_labels[row[ok].astype(np.int64), col[ok].astype(np.int64)]
    ids = [p.id for p in patches] if label_ids is None else label_ids
    by_id = {int(i): p for i, p in zip(ids, patches)}
    sel = np.flatnonzero(pid >= 0)
    order = sel[np.argsort(pid[sel], kind="stable")]
    bounds = np.flatnonzero(np.diff(pid[order])) + 1
    for chunk in np.split(order, bounds) if len(order) else []:
        p = by_id.get(int(pid[chunk[0]]))
        if p is not None:
            p.seeds = np.sort(chunk)
            p.seed_area = seed_hull_area(uv[p.seeds])


def seed_hull_area(pixels) -> float:
    """Area (px^2) of the 2-D convex hull of projected seeds; 0 below three points."""
    pts = np.asarray(pixels, dtype=np.float64)
    if len(pts) < 3:
        return 0.0
    try:
        return float(ConvexHull(pts).volume)
    except QhullError:
        return 0.0
