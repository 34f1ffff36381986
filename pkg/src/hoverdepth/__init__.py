"""Dense depth maps from small-motion image sets via per-patch plane fitting."""

from .config import PipelineConfig
from .depthmap import DepthMap, evaluate
from .energy import EnergyModel, EnergyParams, total_cost
from .errors import HoverDepthError
from .geometry import CameraIntrinsics, CameraView, PlaneSurface, SparseCloud, plane_homography
from .initialization import InitParams, init_segment
from .kernels import BACKEND
from .optimizer import SolverConfig, SolveReport, optimize_segment
from .patch_graph import Patch, PatchPair, SegmentGraph
from .pipeline import DatasetManifest, Reconstruction, reconstruct, run
from .segmentation import SegmentationParams, segment_image

__all__ = [
    "BACKEND", "CameraIntrinsics", "CameraView", "DatasetManifest", "DepthMap", "EnergyModel", "EnergyParams",
    "HoverDepthError", "InitParams", "Patch", "PatchPair", "PipelineConfig", "PlaneSurface", "Reconstruction",
    "SegmentGraph", "SegmentationParams", "SolveReport", "SolverConfig", "SparseCloud", "evaluate", "init_segment",
    "optimize_segment", "plane_homography", "reconstruct", "run", "segment_image", "total_cost",
]
