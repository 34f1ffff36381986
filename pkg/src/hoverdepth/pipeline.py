"""End-to-end reconstruction of the reference depth map.

Stages: intensity normalisation, segmentation of the reference image,
tessellation into patches, then per segment initialisation and weighted
optimisation of the patch planes, and finally rendering.
"""

from __future__ import annotations

import json
import logging
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as hio
from . import kernels
from .config import PipelineConfig
from .depthmap import DepthMap, evaluate
from .energy import confidence, view_weights
from .errors import EmptyCloud, HoverDepthError, ManifestError
from .geometry import CameraIntrinsics, CameraView, SparseCloud, depths_on_plane, luma
from .initialization import InitReport, depth_range, init_segment
from .optimizer import SolveReport, optimize_segment
from .patch_graph import Patch, SegmentGraph, adjacency, assign_seeds, pair_weight, patches_from_labels, \
    tessellate_labels
from .segmentation import segment_image

logger = logging.getLogger(__name__)

__all__ = ["DatasetManifest", "DepthMap", "SegmentResult", "Reconstruction", "evaluate", "reconstruct", "render",
           "run", "load_dataset"]


@dataclass
class DatasetManifest:
    """Image paths, world-to-camera poses, shared intrinsics and the sparse cloud path.

    Relative paths are resolved against ``root``.
    """

    images: list
    poses: list  # (R (3, 3), t (3,)) per image
    intrinsics: CameraIntrinsics
    cloud: str
    reference_index: int = 0
    root: Path = field(default_factory=Path)

    def validate(self, min_images: int = 20) -> None:
        n = len(self.images)
        if n < 2:
            raise ManifestError(f"need at least 2 images, got {n}")
        if len(self.poses) != n:
            raise ManifestError(f"{len(self.poses)} poses for {n} images")
        if not 0 <= self.reference_index < n:
            raise ManifestError(f"reference index {self.reference_index} out of range")
        if n < min_images:
            warnings.warn(f"only {n} images; the method is tuned for at least {min_images}", stacklevel=2)

    @classmethod
    def from_dict(cls, data: dict, root=".") -> "DatasetManifest":
        try:
            poses = []
            for p in data["poses"]:
                R = np.asarray(p["R"], dtype=np.float64).reshape(3, 3)
                t = np.asarray(p["t"], dtype=np.float64).reshape(3)
                poses.append((R, t))
            k = data["intrinsics"]
            intr = CameraIntrinsics(float(k["fx"]), float(k["fy"]), float(k["cx"]), float(k["cy"]))
            return cls(list(data["images"]), poses, intr, data["cloud"], int(data.get("reference_index", 0)),
                       Path(root))
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"malformed manifest: {e}") from e

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ManifestError(f"cannot read manifest {path}: {e}") from e
        return cls.from_dict(data, path.parent)

    def to_dict(self) -> dict:
        return {
            "images": [str(p) for p in self.images],
            "poses": [{"R": np.asarray(R).ravel().tolist(), "t": np.asarray(t).tolist()} for R, t in self.poses],
            "intrinsics": self.intrinsics.to_dict(),
            "cloud": str(self.cloud),
            "reference_index": self.reference_index,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.root / p


def load_dataset(manifest: DatasetManifest, min_images: int = 20):
    """``(views, cloud, reference rgb)`` with the reference view first."""
    manifest.validate(min_images)
    order = [manifest.reference_index] + [i for i in range(len(manifest.images)) if i != manifest.reference_index]
    views, ref_rgb, shape = [], None, None
    for i in order:
        try:
            rgb = hio.read_image(manifest.resolve(manifest.images[i]))
        except OSError as e:
            raise ManifestError(f"cannot read image {manifest.images[i]}: {e}") from e
        if shape is None:
            shape, ref_rgb = rgb.shape, rgb
        elif rgb.shape != shape:
            raise ManifestError(f"image {manifest.images[i]} has shape {rgb.shape}, expected {shape}")
        R, t = manifest.poses[i]
        try:
            views.append(CameraView.from_image(manifest.intrinsics, R, t, luma(rgb)))
        except ValueError as e:
            raise ManifestError(f"image {manifest.images[i]}: {e}") from e
    try:
        cloud = hio.read_cloud(manifest.resolve(manifest.cloud))
    except (OSError, ValueError) as e:
        raise ManifestError(f"cannot read cloud {manifest.cloud}: {e}") from e
    return views, cloud, ref_rgb


@dataclass
class SegmentResult:
    segment_id: int
    graph: SegmentGraph
    valid: bool = True
    error: str | None = None
    init: InitReport | None = None
    solve: SolveReport | None = None

    def to_dict(self) -> dict:
        sources = [p.init_source for p in self.graph.patches]
        return {
            "segment": self.segment_id,
            "valid": self.valid,
            "error": self.error,
            "patches": len(self.graph.patches),
            "pairs": len(self.graph.pairs),
            "sweeps": self.init.sweeps if self.init else 0,
            "init_sources": {s: sources.count(s) for s in sorted({str(s) for s in sources})},
            "solve": self.solve.to_dict() if self.solve else None,
        }


@dataclass
class Reconstruction:
    depth: DepthMap
    segments: list
    labels: np.ndarray
    patch_labels: np.ndarray
    timings: dict
    views: list

    @property
    def solve_reports(self) -> list:
        return [s.solve for s in self.segments if s.solve is not None]

    def init_source_labels(self) -> np.ndarray:
        """Per-pixel init source code: 0 seeded, 1 propagated, 2 sweep, -1 none."""
        codes = {"seeded": 0, "propagated": 1, "sweep": 2}
        out = np.full(self.labels.shape, -1, dtype=np.int64)
        for s in self.segments:
            for p in s.graph.patches:
                out[p.ys, p.xs] = codes.get(p.init_source, -1)
        return out

    def report(self) -> dict:
        return {
            "backend": kernels.BACKEND,
            "timings": self.timings,
            "segments": len(self.segments),
            "invalid_segments": sum(not s.valid for s in self.segments),
            "patches": sum(len(s.graph.patches) for s in self.segments),
            "coverage": self.depth.coverage,
            "segment_reports": [s.to_dict() for s in self.segments],
        }


def normalize_views(views, rgb):
    """Scale all intensities so that the reference image peaks at 255."""
    peak = float(np.max(views[0].image))
    if peak <= 0:
        return views, np.asarray(rgb, dtype=np.float64)
    s = 255.0 / peak
    return [v.with_image(v.image * s) for v in views], np.asarray(rgb, dtype=np.float64) * s


def build_patches(labels, cloud, ref: CameraView, patch_size: int, delta: float):
    """Global patch labels and the patches of every segment, with seeds and confidences."""
    patch_labels = tessellate_labels(labels, patch_size)
    patches = patches_from_labels(patch_labels)
    assign_seeds(patches, patch_labels, cloud, ref)
    by_segment: dict[int, list[Patch]] = {}
    for p in patches:
        p.segment = int(labels[p.ys[0], p.xs[0]])
        p.gradient_score = float(ref.gradient[p.ys, p.xs].sum())
        p.confidence = confidence(p.eta, p.seed_area, delta)
        by_segment.setdefault(p.segment, []).append(p)
    return patch_labels, by_segment


def segment_graph(segment_id: int, patches, ref: CameraView) -> SegmentGraph:
    """Renumber a segment's patches locally and connect them."""
    for i, p in enumerate(patches):
        p.id = i
    pairs = adjacency(patches)
    for pr in pairs:
        pr.weight = pair_weight(pr, ref.gradient)
    return SegmentGraph(segment_id, patches, pairs)


def solve_segment(graph: SegmentGraph, views, cloud, config: PipelineConfig, drange) -> SegmentResult:
    result = SegmentResult(graph.segment_id, graph)
    try:
        result.init = init_segment(graph, cloud, views, config.init, drange)
        result.solve = optimize_segment(graph, views, cloud, config.energy, config.solver)
    except HoverDepthError as e:
        logger.info("segment %d invalid: %s", graph.segment_id, e)
        for p in graph.patches:
            p.plane = None
        result.valid = False
        result.error = f"{type(e).__name__}: {e}"
    return result


def render(patches, planes, ref_view: CameraView, shape=None) -> DepthMap:
    """Depth of every patch pixel on its own patch's plane; ``None`` planes stay invalid."""
    shape = ref_view.shape if shape is None else shape
    depth = np.full(shape, np.nan)
    for p, plane in zip(patches, planes):
        if plane is None:
            continue
        depth[p.ys, p.xs] = depths_on_plane(ref_view, p.xs, p.ys, plane)
    return DepthMap.from_array(depth)


def reconstruct(views: list[CameraView], cloud, rgb, config: PipelineConfig | None = None) -> Reconstruction:
    """Depth map of ``views[0]`` from in-memory views, cloud and reference colour image."""
    config = config or PipelineConfig()
    cloud = SparseCloud.from_points(cloud)
    timings = {}
    t0 = time.perf_counter()
    if config.normalize_intensity:
        views, rgb = normalize_views(views, rgb)
    if config.view_weighting:
        w = view_weights(views)
        views = [v.with_weight(max(float(wi), 1e-12)) for v, wi in zip(views, w)]
    ref = views[0]
    timings["prepare"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    positions = np.array([v.center for v in views])
    labels, _, _ = segment_image(rgb, cloud, ref, positions, config.segmentation)
    timings["segmentation"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    patch_labels, by_segment = build_patches(labels, cloud, ref, config.patch_size, config.energy.delta)
    graphs = [segment_graph(sid, by_segment[sid], ref) for sid in sorted(by_segment)]
    timings["patches"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        drange = depth_range(cloud, ref, config.init.depth_margin)
    except EmptyCloud:
        drange = None
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            results = list(pool.map(lambda g: solve_segment(g, views, cloud, config, drange), graphs))
    else:
        results = [solve_segment(g, views, cloud, config, drange) for g in graphs]
    timings["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    patches = [p for g in graphs for p in g.patches]
    depth = render(patches, [p.plane for p in patches], ref)
    timings["render"] = time.perf_counter() - t0
    return Reconstruction(depth, results, labels, patch_labels, timings, views)


def run(manifest: DatasetManifest, config: PipelineConfig | None = None) -> Reconstruction:
    config = config or PipelineConfig()
    t0 = time.perf_counter()
    views, cloud, rgb = load_dataset(manifest, config.min_images)
    load_time = time.perf_counter() - t0
    result = reconstruct(views, cloud, rgb, config)
    result.timings = {"load": load_time, **result.timings}
    return result


def write_outputs(result: Reconstruction, out_dir, rgb=None, debug: bool = False) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hio.write_pfm(out / "depth.pfm", result.depth)
    hio.write_depth_png(out / "depth.png", result.depth)
    (out / "report.json").write_text(json.dumps(result.report(), indent=2) + "\n")
    if debug:
        hio.write_label_png(out / "segments.png", result.labels)
        hio.write_label_png(out / "init_sources.png", result.init_source_labels())
        if rgb is not None:
            hio.write_patch_overlay(out / "patches.png", rgb, result.patch_labels)
