"""Server-side cross-camera object association and camera assignment.

Detections from all views are grouped into identity clusters by greedy
view-by-view bipartite matching against running cluster centers on the
ground plane, then each cluster keeps its K largest-box members. Runs once
per frame on the server thread; pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .detector import Detection, DetectionSet
from .geometry import BlockGrid, GroundPoint, blocks_for_bbox


@dataclass
class Cluster:
    """Detections of one identity, at most one per camera."""

    members: list[Detection] = field(default_factory=list)

    def __post_init__(self):
        cams = [d.camera_id for d in self.members]
        if len(cams) != len(set(cams)):
            raise ValueError("cluster holds two detections from the same camera")

    @property
    def center(self) -> GroundPoint:
        gx = sum(d.ground.x for d in self.members) / len(self.members)
        gy = sum(d.ground.y for d in self.members) / len(self.members)
        return GroundPoint(gx, gy)

    def add(self, det: Detection) -> None:
        if any(d.camera_id == det.camera_id for d in self.members):
            raise ValueError(f"cluster already holds camera {det.camera_id}")
        self.members.append(det)


@dataclass(frozen=True)
class TopKSelection:
    """Per-camera top-K assignment: detections kept per view and the block
    mask they induce."""

    selected: dict[int, tuple[Detection, ...]]  # camera_id -> gamma_c
    masks: dict[int, np.ndarray]  # camera_id -> (rows, cols) uint8

    def count(self, camera_id: int) -> int:
        return len(self.selected.get(camera_id, ()))


def match_bipartite(
    cost: np.ndarray, eps: float
) -> tuple[list[tuple[int, int]], list[int], list[int]]:
    """Minimum-cost one-to-one assignment restricted to pairs under eps.

    Pairs at or above eps are not assignable: they are replaced by a flat
    penalty larger than any feasible assignment, so the solver first
    maximizes the number of in-gate pairs and then minimizes their total
    cost (plain post-filtering of an ungated solve can trade one good pair
    for two bad ones). Returns (matched (row, col) pairs, unmatched row
    indices, unmatched column indices).
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-d matrix")
    n_rows, n_cols = cost.shape
    if n_rows == 0 or n_cols == 0:
        return [], list(range(n_rows)), list(range(n_cols))
    feasible = cost < eps
    penalty = eps * (min(n_rows, n_cols) + 1.0) + 1.0
    gated = np.where(feasible, cost, penalty)
    rows, cols = linear_sum_assignment(gated)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if feasible[r, c]]
    matched_rows = {r for r, _ in pairs}
    matched_cols = {c for _, c in pairs}
    unmatched_rows = [r for r in range(n_rows) if r not in matched_rows]
    unmatched_cols = [c for c in range(n_cols) if c not in matched_cols]
    return pairs, unmatched_rows, unmatched_cols


def cluster_detections(views: list[DetectionSet], eps: float) -> list[Cluster]:
    """Greedy cross-camera clustering.

    Clusters start from the first view's detections; each subsequent view is
    bipartite-matched (ground distance, gated at eps) against the centers of
    the clusters formed so far. Matched detections join their cluster,
    unmatched ones open new singletons. Iteration order is fixed by
    camera_id, so results are deterministic.
    """
    views = sorted(views, key=lambda v: v.camera_id)
    if not views:
        return []
    clusters = [Cluster([d]) for d in views[0]]
    for view in views[1:]:
        dets = list(view)
        centers = [cl.center for cl in clusters]
        cost = np.array(
            [[c.distance_to(d.ground) for d in dets] for c in centers], dtype=float
        ).reshape(len(centers), len(dets))
        pairs, _, unmatched = match_bipartite(cost, eps)
        for ci, di in pairs:
            clusters[ci].add(dets[di])
        for di in unmatched:
            clusters.append(Cluster([dets[di]]))
    return clusters


def assign_cameras(
    clusters: list[Cluster], k: int, grid: BlockGrid, camera_ids: list[int]
) -> TopKSelection:
    """Keep the K largest-box members of every cluster and build per-camera
    block masks from the kept boxes. Ties in area go to the lower camera_id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    selected: dict[int, list[Detection]] = {c: [] for c in camera_ids}
    for cluster in clusters:
        ranked = sorted(cluster.members, key=lambda d: (-d.bbox.area, d.camera_id))
        for det in ranked[: min(k, len(ranked))]:
            selected.setdefault(det.camera_id, []).append(det)
    masks = {}
    for cam_id in sorted(selected):
        mask = np.zeros(grid.shape, dtype=np.uint8)
        for det in selected[cam_id]:
            for r, c in blocks_for_bbox(grid, det.bbox):
                mask[r, c] = 1
        masks[cam_id] = mask
    return TopKSelection({c: tuple(v) for c, v in selected.items()}, masks)
