"""Block-coordinate descent over the free patches of a segment."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .energy import EnergyModel, EnergyParams
from .errors import NonDecreasingGuard
from .geometry import CameraView, PlaneSurface, plane_from_camera
from .patch_graph import SegmentGraph

# accepted moves must improve the local cost by this relative margin
_MIN_GAIN = 1e-9


@dataclass
class SolverConfig:
    max_sweeps: int = 24
    n_candidates: int = 8
    tolerance: float = 1e-4
    inv_depth_step: float = 0.01  # relative to the current inverse depth
    angle_step: float = 0.05  # radians
    halve_every: int = 3
    neighbor_adoption: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_sweeps < 1 or self.n_candidates < 1 or self.halve_every < 1:
            raise ValueError("iteration and candidate counts must be >= 1")


@dataclass
class SolveReport:
    initial_cost: float = 0.0
    final_cost: float = 0.0
    iterations: int = 0
    free_count: int = 0
    stable_count: int = 0
    accepted_moves: int = 0
    wall_time: float = 0.0
    cost_history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "initial_cost": self.initial_cost,
            "final_cost": self.final_cost,
            "iterations": self.iterations,
            "free_count": self.free_count,
            "stable_count": self.stable_count,
            "accepted_moves": self.accepted_moves,
            "wall_time": self.wall_time,
            "cost_history": list(self.cost_history),
        }


def select_free(patches) -> tuple[list[int], list[int]]:
    """Split patch ids into free (``C_p > 0``) and stable (``C_p == 0``)."""
    free = [p.id for p in patches if p.confidence > 0]
    stable = [p.id for p in patches if p.confidence == 0]
    return free, stable


def local_cost(p: int, plane: PlaneSurface, model: EnergyModel, planes) -> float:
    """Every cost term that involves patch ``p``, with ``p`` set to ``plane``."""
    n, d = model.camera_planes(planes)
    cn, cd = model.camera_planes([plane])
    return float(model.local_cost(p, cn, cd, n, d)[0])


def _tangent_basis(n):
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, a)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def candidate_planes(n, d, center_ray, rng, k, inv_step, angle_step):
    """``k`` perturbations of the camera-frame plane ``(n, d)`` about the patch centre.

    The first half jitter the inverse depth at the centre ray, the rest tilt
    the normal about the same centre point.
    """
    rho = float(n @ center_ray) / d
    n_depth = (k + 1) // 2
    rhos = np.empty(k)
    rhos[:n_depth] = rho * (1.0 + inv_step * rng.standard_normal(n_depth))
    rhos[n_depth:] = rho
    normals = np.tile(n, (k, 1))
    e1, e2 = _tangent_basis(n)
    tilt = angle_step * rng.standard_normal((k - n_depth, 2))
    normals[n_depth:] = n + tilt[:, :1] * e1 + tilt[:, 1:] * e2
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        points = center_ray[None, :] / rhos[:, None]
    offsets = np.einsum("ij,ij->i", normals, points)
    flip = offsets > 0
    normals[flip] *= -1
    offsets[flip] *= -1
    ok = (rhos > 0) & np.isfinite(offsets) & (np.abs(offsets) > 1e-9)
    return normals[ok], offsets[ok]


def optimize_segment(graph: SegmentGraph, views: list[CameraView], cloud, params: EnergyParams | None = None,
                     config: SolverConfig | None = None, all_free: bool = False) -> SolveReport:
    """Minimise the segment cost over free patch planes; planes are updated in place.

    Free patches are visited in id order; each tries its current plane,
    ``n_candidates`` random perturbations and (optionally) its neighbours'
    planes, keeping the lowest local cost.  Sweeps stop when the total cost
    drops by less than ``tolerance`` (relative) or after ``max_sweeps``.
    With ``all_free`` every patch is optimized with unit confidence.
    """
    config = config or SolverConfig()
    params = params or EnergyParams()
    t0 = time.perf_counter()
    model = EnergyModel(graph, views, cloud, params, confidence_override=1.0 if all_free else None)
    patches = graph.patches
    if all_free:
        free, stable = [p.id for p in patches], []
    else:
        free, stable = select_free(patches)
    report = SolveReport(free_count=len(free), stable_count=len(stable))
    state_n, state_d = model.camera_planes([p.plane for p in patches])
    cost = model.total(state_n, state_d)
    report.initial_cost = report.final_cost = cost
    report.cost_history.append(cost)
    if not free:
        report.wall_time = time.perf_counter() - t0
        return report
    inv_step, ang_step = config.inv_depth_step, config.angle_step
    moved = set()
    for sweep in range(config.max_sweeps):
        if sweep and sweep % config.halve_every == 0:
            inv_step *= 0.5
            ang_step *= 0.5
        for p in free:
            rng = np.random.default_rng([config.seed, graph.segment_id, sweep, p])
            cn, cd = candidate_planes(
                state_n[p], state_d[p], model.center_rays[p], rng, config.n_candidates, inv_step, ang_step
            )
            parts_n = [state_n[p][None], cn]
            parts_d = [np.array([state_d[p]]), cd]
            if config.neighbor_adoption:
                nbs = sorted(set(graph.neighbors(p)))
                parts_n.append(state_n[nbs].reshape(-1, 3))
                parts_d.append(state_d[nbs])
            cand_n = np.concatenate(parts_n)
            cand_d = np.concatenate(parts_d)
            costs = model.local_cost(p, cand_n, cand_d, state_n, state_d)
            best = int(np.argmin(costs))
            current = costs[0]
            if best != 0 and (
                not np.isfinite(current) or costs[best] < current - _MIN_GAIN * abs(current)
            ):
                state_n[p] = cand_n[best]
                state_d[p] = cand_d[best]
                moved.add(p)
                report.accepted_moves += 1
        new_cost = model.total(state_n, state_d)
        report.iterations = sweep + 1
        report.cost_history.append(new_cost)
        if new_cost > cost:
            raise NonDecreasingGuard(f"sweep {sweep} raised the cost from {cost!r} to {new_cost!r}")
        decrease = (cost - new_cost) / max(abs(cost), 1e-300) if np.isfinite(cost) else np.inf
        cost = new_cost
        if decrease < config.tolerance:
            break
    for p in sorted(moved):
        patches[p].plane = plane_from_camera(views[0], state_n[p], state_d[p])
    report.final_cost = cost
    report.wall_time = time.perf_counter() - t0
    return report
