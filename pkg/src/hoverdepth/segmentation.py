"""Reference-image segmentation guided by the sparse cloud.

Stages: bilateral smoothing, colour region growing, absorption of tiny
regions, then merging of regions that receive projections of one 3-D
point cluster.  Segmentations are carried around as integer label images;
:class:`ImageSegment` is the per-segment view of one.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import kernels
from .geometry import CameraView, SparseCloud, project_points


@dataclass
class SegmentationParams:
    spatial_sigma: float = 3.0
    range_sigma: float = 12.0
    region_threshold: float = 8.0
    min_segment_size: int = 64
    k_prox: float = 0.05
    color_threshold: float = 30.0


@dataclass
class PointCluster:
    id: int
    members: np.ndarray
    mean_color: np.ndarray
    bbox_min: np.ndarray
    bbox_max: np.ndarray


@dataclass
class ImageSegment:
    id: int
    pixels: np.ndarray  # flat indices into the reference image, ascending
    shape: tuple
    cluster_ids: tuple = field(default_factory=tuple)

    @property
    def size(self) -> int:
        return len(self.pixels)

    def mask(self) -> np.ndarray:
        m = np.zeros(self.shape[0] * self.shape[1], dtype=bool)
        m[self.pixels] = True
        return m.reshape(self.shape)


def bilateral_filter(image, spatial_sigma: float = 3.0, range_sigma: float = 12.0, radius=None):
    """Edge-preserving smoothing of a grey (H, W) or colour (H, W, C) image.

    Each output pixel is the mean of the neighbours within ``radius``
    (default ``ceil(2 * spatial_sigma)``) that lie inside the image, weighted
    by a spatial Gaussian and a Gaussian on the colour difference.
    """
    if spatial_sigma <= 0 or range_sigma <= 0:
        raise ValueError("bilateral sigmas must be positive")
    if radius is None:
        radius = int(math.ceil(2 * spatial_sigma))
    return kernels.bilateral_filter(image, spatial_sigma, range_sigma, radius)


def adaptive_radius(positions, camera_positions, k_prox: float = 0.05) -> float:
    """Linkage radius scaled by the mean distance from points to the reference camera.

    The first row of ``camera_positions`` is taken as the reference camera.
    """
    c_ref = np.asarray(camera_positions, dtype=np.float64).reshape(-1, 3)[0]
    return k_prox * float(np.mean(np.linalg.norm(positions - c_ref, axis=1)))


def cluster_sparse_cloud(points, camera_positions, k_prox: float = 0.05, color_threshold: float = 30.0):
    """Single-linkage clusters of points that are both close and similarly coloured.

    Two points link when their distance is below the adaptive radius and
    their RGB distance is below ``color_threshold``.  Clusters are numbered
    by their smallest member index, so the partition and its numbering do
    not depend on input order beyond the indices themselves.
    """
    cloud = SparseCloud.from_points(points)
    n = len(cloud)
    if n == 0:
        return []
    P = cloud.positions
    r = adaptive_radius(P, camera_positions, k_prox)
    pairs = cKDTree(P).query_pairs(r, output_type="ndarray")
    if len(pairs):
        i, j = pairs[:, 0], pairs[:, 1]
        keep = (np.linalg.norm(P[i] - P[j], axis=1) < r) & (
            np.linalg.norm(cloud.colors[i] - cloud.colors[j], axis=1) < color_threshold
        )
        i, j = i[keep], j[keep]
    else:
        i = j = np.zeros(0, dtype=np.int64)
    graph = coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    return _clusters_from_components(cloud, comp)


def _clusters_from_components(cloud, comp):
    order = np.argsort(comp, kind="stable")
    groups = np.split(order, np.flatnonzero(np.diff(comp[order])) + 1)
    groups.sort(key=lambda g: g[0])
    return [
        PointCluster(
            id=k,
            members=g,
            mean_color=cloud.colors[g].mean(axis=0),
            bbox_min=cloud.positions[g].min(axis=0),
            bbox_max=cloud.positions[g].max(axis=0),
        )
        for k, g in enumerate(groups)
    ]


def canonical_labels(labels) -> np.ndarray:
    """Renumber labels 0..K-1 in order of first raster occurrence."""
    flat = np.asarray(labels).reshape(-1)
    uniq, first, inv = np.unique(flat, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first)] = np.arange(len(uniq))
    return rank[inv].reshape(np.shape(labels))


def segments_from_labels(labels, cluster_ids=None) -> list[ImageSegment]:
    labels = np.asarray(labels)
    flat = labels.reshape(-1)
    order = np.argsort(flat, kind="stable")
    bounds = np.flatnonzero(np.diff(flat[order])) + 1
    segs = []
    for chunk in np.split(order, bounds):
        sid = int(flat[chunk[0]])
        cids = tuple(cluster_ids.get(sid, ())) if cluster_ids else ()
        segs.append(ImageSegment(sid, chunk, labels.shape, cids))
    return segs


def labels_from_segments(segments, shape) -> np.ndarray:
    labels = np.full(shape[0] * shape[1], -1, dtype=np.int64)
    for s in segments:
        labels[s.pixels] = s.id
    return labels.reshape(shape)


def _as_labels(segments_or_labels, shape=None):
    if isinstance(segments_or_labels, np.ndarray):
        return segments_or_labels
    segs = list(segments_or_labels)
    return labels_from_segments(segs, shape or segs[0].shape)


def region_grow_labels(filtered_image, color_threshold: float = 8.0) -> np.ndarray:
    if color_threshold <= 0:
        raise ValueError("color threshold must be positive")
    return kernels.region_grow(filtered_image, color_threshold)


def region_grow(filtered_image, color_threshold: float = 8.0) -> list[ImageSegment]:
    """Flood-fill regions whose pixels stay within ``color_threshold`` of the running mean."""
    return segments_from_labels(region_grow_labels(filtered_image, color_threshold))


def label_adjacency(labels) -> np.ndarray:
    """Unique unordered pairs ``(a, b)``, ``a < b``, of 4-adjacent labels."""
    a = np.concatenate([labels[:, :-1].ravel(), labels[:-1, :].ravel()])
    b = np.concatenate([labels[:, 1:].ravel(), labels[1:, :].ravel()])
    diff = a != b
    pairs = np.stack([np.minimum(a[diff], b[diff]), np.maximum(a[diff], b[diff])], axis=1)
    return np.unique(pairs, axis=0) if len(pairs) else pairs.reshape(0, 2)


def absorb_small_segments(labels, image, min_size: int = 64) -> np.ndarray:
    """Merge segments smaller than ``min_size`` into their most similar neighbour.

    Smallest segments go first; the target is the adjacent segment with the
    closest mean colour (lowest id on ties).
    """
    labels = canonical_labels(labels)
    img = np.asarray(image, dtype=np.float64)
    img = img[:, :, None] if img.ndim == 2 else img
    n = int(labels.max()) + 1
    flat = labels.reshape(-1)
    size = np.bincount(flat, minlength=n).astype(np.int64)
    sums = np.stack([np.bincount(flat, img[:, :, c].ravel(), minlength=n) for c in range(img.shape[2])], 1)
    if size.min() >= min_size:
        return labels
    neighbors: list[set] = [set() for _ in range(n)]
    for a, b in label_adjacency(labels).tolist():
        neighbors[a].add(b)
        neighbors[b].add(a)
    # plain Python numbers keep the per-merge bookkeeping cheap
    sz = size.tolist()
    sm = sums.tolist()
    parent = list(range(n))
    heap = [(sz[k], k) for k in range(n) if sz[k] < min_size]
    heapq.heapify(heap)
    while heap:
        s0, k = heapq.heappop(heap)
        if parent[k] != k or s0 != sz[k] or sz[k] >= min_size or not neighbors[k]:
            continue
        mean_k = [v / sz[k] for v in sm[k]]

        def dist(q):
            return sum((v / sz[q] - m) ** 2 for v, m in zip(sm[q], mean_k))

        target = min(neighbors[k], key=lambda q: (dist(q), q))
        parent[k] = target
        sz[target] += sz[k]
        sm[target] = [a + b for a, b in zip(sm[target], sm[k])]
        for q in neighbors[k]:
            neighbors[q].discard(k)
            if q != target:
                neighbors[q].add(target)
                neighbors[target].add(q)
        neighbors[k] = set()
        if sz[target] < min_size:
            heapq.heappush(heap, (sz[target], target))
    root = parent[:]
    for k in range(n):
        r = k
        while root[r] != r:
            r = root[r]
        root[k] = r
    return canonical_labels(np.asarray(root)[labels])


def cluster_hits(clusters, cloud, ref_view: CameraView, labels):
    """Labels hit by each cluster's projected points, as a list of arrays."""
    cloud = SparseCloud.from_points(cloud)
    h, w = labels.shape
    uv, z = project_points(ref_view, cloud.positions) if len(cloud) else (np.zeros((0, 2)), np.zeros(0))
    col = np.floor(uv[:, 0] + 0.5)
    row = np.floor(uv[:, 1] + 0.5)
    inside = np.isfinite(col) & (col >= 0) & (col < w) & (row >= 0) & (row < h)
    hits = []
    for cl in clusters:
        m = cl.members[inside[cl.members]]
        hits.append(np.unique(labels[row[m].astype(np.int64), col[m].astype(np.int64)]))
    return hits


def merge_segments(segments, clusters, sparse_points, ref_view: CameraView):
    """Merge every set of segments that receives projections of one cluster.

    Accepts a label image or a list of :class:`ImageSegment`; returns the
    same kind.  Output labels are renumbered by first raster occurrence.
    """
    as_list = not isinstance(segments, np.ndarray)
    labels = _as_labels(segments, ref_view.shape)
    merged, owners = merge_segment_labels(labels, clusters, sparse_points, ref_view)
    if as_list:
        return segments_from_labels(merged, owners)
    return merged


def merge_segment_labels(labels, clusters, sparse_points, ref_view):
    """Label-image form of :func:`merge_segments`; also returns cluster ownership."""
    labels = canonical_labels(labels)
    n = int(labels.max()) + 1
    hits = cluster_hits(clusters, sparse_points, ref_view, labels)
    rows, cols = [], []
    for hit in hits:
        if len(hit) > 1:
            rows.append(np.full(len(hit) - 1, hit[0]))
            cols.append(hit[1:])
    if rows:
        graph = coo_matrix(
            (np.ones(sum(map(len, rows))), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        _, comp = connected_components(graph, directed=False)
        merged = canonical_labels(comp[labels])
    else:
        merged = labels
    lut = np.empty(n, dtype=np.int64)
    lut[labels.reshape(-1)] = merged.reshape(-1)
    owners: dict[int, list[int]] = {}
    for cl, hit in zip(clusters, hits):
        if len(hit):
            owners.setdefault(int(lut[hit[0]]), []).append(cl.id)
    return merged, owners


def segment_image(rgb, cloud, ref_view: CameraView, camera_positions, params: SegmentationParams | None = None):
    """Full segmentation of the reference image; returns ``(labels, clusters, owners)``."""
    params = params or SegmentationParams()
    filtered = bilateral_filter(rgb, params.spatial_sigma, params.range_sigma)
    labels = region_grow_labels(filtered, params.region_threshold)
    labels = absorb_small_segments(labels, filtered, params.min_segment_size)
    clusters = cluster_sparse_cloud(cloud, camera_positions, params.k_prox, params.color_threshold)
    labels, owners = merge_segment_labels(labels, clusters, cloud, ref_view)
    return labels, clusters, owners
