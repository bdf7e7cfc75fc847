"""Evaluation suite: detection and tracking scores plus resource accounting.

Detection and tracking quality are both measured on the ground plane with a
fixed match radius. Identity scores follow the standard global-assignment
definition: per-frame co-presence within the radius feeds a single optimal
GT-identity to track-identity assignment at finalize time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .association import match_bipartite
from .detector import Detection
from .geometry import BlockGrid, GroundPoint, blocks_for_bbox

DEFAULT_MATCH_RADIUS = 0.5


class EmptyRun(Exception):
    pass


def _match_points(
    gt: list[GroundPoint], pred: list[GroundPoint], radius: float
) -> list[tuple[int, int, float]]:
    """Gated Hungarian matching on ground distance."""
    if not gt or not pred:
        return []
    cost = np.array([[g.distance_to(p) for p in pred] for g in gt])
    pairs, _, _ = match_bipartite(cost, radius)
    return [(r, c, float(cost[r, c])) for r, c in pairs]


@dataclass
class MetricAccumulator:
    """Run-long tallies; single-owner, finalize is pure."""

    match_radius: float = DEFAULT_MATCH_RADIUS
    # detection
    det_frames: int = 0
    gt_total: int = 0
    tp: int = 0
    fp: int = 0
    fn: int = 0
    overlap_sum: float = 0.0
    # tracking
    trk_frames: int = 0
    trk_gt_total: int = 0
    trk_fp: int = 0
    trk_fn: int = 0
    id_switches: int = 0
    trk_pred_total: int = 0
    _last_matched: dict[int, int] = field(default_factory=dict)
    _co_presence: dict[tuple[int, int], int] = field(default_factory=dict)
    # resources
    resource_frames: int = 0
    blocks_total: int = 0
    bytes_total: float = 0.0

    def accumulate_detection_frame(
        self, gt_points: list[GroundPoint], detections: list[GroundPoint]
    ) -> None:
        matches = _match_points(gt_points, detections, self.match_radius)
        n_match = len(matches)
        self.det_frames += 1
        self.gt_total += len(gt_points)
        self.tp += n_match
        self.fp += len(detections) - n_match
        self.fn += len(gt_points) - n_match
        self.overlap_sum += sum(1.0 - d / self.match_radius for _, _, d in matches)

    def accumulate_tracking_frame(
        self,
        gt: list[tuple[int, GroundPoint]],
        tracks: list[tuple[int, GroundPoint]],
    ) -> None:
        gt_points = [p for _, p in gt]
        trk_points = [p for _, p in tracks]
        matches = _match_points(gt_points, trk_points, self.match_radius)
        self.trk_frames += 1
        self.trk_gt_total += len(gt)
        self.trk_pred_total += len(tracks)
        self.trk_fp += len(tracks) - len(matches)
        self.trk_fn += len(gt) - len(matches)
        for gi, ti, _ in matches:
            gt_id = gt[gi][0]
            trk_id = tracks[ti][0]
            prev = self._last_matched.get(gt_id)
            if prev is not None and prev != trk_id:
                self.id_switches += 1
            self._last_matched[gt_id] = trk_id
        # identity co-presence feeds the global IDF1 assignment
        for gt_id, gp in gt:
            for trk_id, tp_ in tracks:
                if gp.distance_to(tp_) < self.match_radius:
                    key = (gt_id, trk_id)
                    self._co_presence[key] = self._co_presence.get(key, 0) + 1

    def add_frame_resources(self, blocks: int, traffic_bytes: float) -> None:
        self.resource_frames += 1
        self.blocks_total += int(blocks)
        self.bytes_total += float(traffic_bytes)

    def _identity_scores(self) -> tuple[int, int, int]:
        """(IDTP, IDFP, IDFN) from the optimal identity assignment."""
        if not self._co_presence:
            return 0, self.trk_pred_total, self.trk_gt_total
        gt_ids = sorted({g for g, _ in self._co_presence})
        trk_ids = sorted({t for _, t in self._co_presence})
        gain = np.zeros((len(gt_ids), len(trk_ids)))
        for (g, t), n in self._co_presence.items():
            gain[gt_ids.index(g), trk_ids.index(t)] = n
        rows, cols = linear_sum_assignment(gain, maximize=True)
        idtp = int(gain[rows, cols].sum())
        return idtp, self.trk_pred_total - idtp, self.trk_gt_total - idtp

    def finalize(self, n_cameras: int = 1) -> dict:
        """Aggregate scores; degenerate denominators yield None sentinels."""
        if self.det_frames == 0 and self.trk_frames == 0:
            raise EmptyRun("no frames accumulated")

        def ratio(num: float, den: float):
            return num / den if den > 0 else None

        moda = None
        if self.gt_total > 0:
            moda = 1.0 - (self.fp + self.fn) / self.gt_total
        mota = None
        if self.trk_gt_total > 0:
            mota = 1.0 - (self.trk_fp + self.trk_fn + self.id_switches) / self.trk_gt_total
        idtp, idfp, idfn = self._identity_scores()
        idf1 = ratio(2.0 * idtp, 2.0 * idtp + idfp + idfn)
        frames = max(self.det_frames, self.trk_frames, self.resource_frames)
        return {
            "moda": moda,
            "modp": self.overlap_sum / max(1, self.tp),
            "precision": ratio(self.tp, self.tp + self.fp),
            "recall": ratio(self.tp, self.tp + self.fn),
            "mota": mota,
            "idf1": idf1,
            "id_switches": self.id_switches,
            "gt_total": self.gt_total,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "blocks_per_frame_total": ratio(self.blocks_total, self.resource_frames),
            "blocks_per_camera_frame": ratio(
                self.blocks_total, self.resource_frames * max(1, n_cameras)
            ),
            "bytes_per_frame": ratio(self.bytes_total, self.resource_frames),
            "frames": frames,
        }


def oracle_select(
    gt_points: list[GroundPoint],
    view_detections: dict[int, list[Detection]],
    k: int,
    grid: BlockGrid,
    match_radius: float = DEFAULT_MATCH_RADIUS,
) -> dict[int, np.ndarray]:
    """Privileged block selection from ground truth.

    Each view's detections are bipartite-matched to the true positions;
    for every target the K views with the closest matched detection keep
    it, and a view's mask is the union of the blocks of its kept boxes.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    masks = {cam: np.zeros(grid.shape, dtype=np.uint8) for cam in view_detections}
    per_target: dict[int, list[tuple[float, int, Detection]]] = {
        i: [] for i in range(len(gt_points))
    }
    for cam in sorted(view_detections):
        dets = view_detections[cam]
        matches = _match_points(gt_points, [d.ground for d in dets], match_radius)
        for gi, di, dist in matches:
            per_target[gi].append((dist, cam, dets[di]))
    for candidates in per_target.values():
        candidates.sort(key=lambda e: (e[0], e[1]))
        for dist, cam, det in candidates[: min(k, len(candidates))]:
            for r, c in blocks_for_bbox(grid, det.bbox):
                masks[cam][r, c] = 1
    return masks
