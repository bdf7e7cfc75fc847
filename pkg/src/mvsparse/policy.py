"""Per-camera online block-selection agent.

The policy is a logistic-linear map over seven handcrafted per-block
features with weights shared across blocks. Actions are independent
Bernoulli draws per block; the reward combines a masked information-gain
term with a view-level computation cost, and weights are updated online by
plain score-function policy gradient every ``train_interval`` frames.

One agent per camera, single-owner mutable state. Server feedback arrives
as immutable values; agents never share anything.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .detector import DetectionSet
from .geometry import BBox, BlockGrid, GroundPoint

logger = logging.getLogger(__name__)

N_FEATURES = 7


class DimensionMismatch(Exception):
    pass


class NonFiniteGradient(Exception):
    """Gradient or updated weights left the finite range; step skipped."""


@dataclass(frozen=True)
class PolicyConfig:
    alpha: float = 0.01  # learning rate
    momentum: float = 0.9  # EMA momentum for the processed-blocks average
    ema_mode: str = "recursive"  # "recursive" (true EMA) or "literal"
    train_interval: int = 10  # frames between gradient steps
    full_refresh_interval: int = 32  # forced all-ones actions cadence
    p_floor: float = 1e-4  # probability clamp for gradient stability
    motion_threshold: float = 10.0  # intensity delta counting as motion
    ig_match_eps: float = 0.5  # ground radius separating novel detections

    def __post_init__(self):
        if self.ema_mode not in ("recursive", "literal"):
            raise ValueError(f"unknown ema_mode {self.ema_mode!r}")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


@dataclass
class PolicyParams:
    """Learnable weights plus the view-level running state they depend on."""

    weights: np.ndarray  # (N_FEATURES,), last entry multiplies the bias feature
    avg_processed: float = 1.0  # M, moving average of processed fraction
    prev_processed: float = 1.0  # previous frame's P (literal EMA mode)

    @classmethod
    def initial(cls) -> "PolicyParams":
        return cls(np.zeros(N_FEATURES))


@dataclass(frozen=True)
class PolicyState:
    """Inputs the per-block features are computed from (one camera, one frame)."""

    frame_id: int
    frame: np.ndarray  # (H, W) grayscale
    motion_map: np.ndarray  # (H, W) |I_t - I_{t-1}|
    topk_boxes: tuple[BBox, ...]  # previous-frame assigned detections
    mask: np.ndarray  # previous-frame block assignment mask (rows, cols)
    prev_detection_boxes: tuple[BBox, ...]
    prev_actions: np.ndarray  # (rows, cols)
    last_refresh: np.ndarray  # (rows, cols) frame of last processing, -1 never
    detection_history: dict[int, tuple[GroundPoint, ...]]  # frame -> grounds


@dataclass(frozen=True)
class BlockActions:
    probs: np.ndarray  # (rows, cols) in [0, 1]
    actions: np.ndarray  # (rows, cols) in {0, 1}


@dataclass(frozen=True)
class WindowSample:
    features: np.ndarray  # (n_blocks, N_FEATURES)
    probs: np.ndarray  # (n_blocks,)
    actions: np.ndarray  # (n_blocks,)
    rewards: np.ndarray  # (n_blocks,)


def _boxes_mask(shape: tuple[int, int], boxes) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    h, w = shape
    for box in boxes:
        x0 = max(0, int(np.floor(box.x)))
        y0 = max(0, int(np.floor(box.y)))
        x1 = min(w, int(np.ceil(box.x + box.w)))
        y1 = min(h, int(np.ceil(box.y + box.h)))
        if x1 > x0 and y1 > y0:
            mask[y0:y1, x0:x1] = True
    return mask


def block_fractions(grid: BlockGrid, pixel_mask: np.ndarray) -> np.ndarray:
    """Per-block fraction of set pixels, normalized by actual block area."""
    B = grid.block_size
    h, w = pixel_mask.shape
    H, W = grid.rows * B, grid.cols * B
    if (h, w) != (H, W):
        padded = np.zeros((H, W), dtype=pixel_mask.dtype)
        padded[:h, :w] = pixel_mask
        pixel_mask = padded
    sums = pixel_mask.reshape(grid.rows, B, grid.cols, B).sum(axis=(1, 3), dtype=np.int64)
    return sums / grid.block_pixel_counts()


def extract_block_features(
    state: PolicyState, grid: BlockGrid, cfg: PolicyConfig
) -> np.ndarray:
    """(n_blocks, 7) feature matrix, all entries in [0, 1].

    Columns: motion fraction, assignment-mask bit, previous-detection
    coverage, assigned-box coverage, previous action, normalized staleness,
    constant bias.
    """
    h, w = state.frame.shape
    if (w, h) != grid.image_size:
        raise DimensionMismatch(f"frame {state.frame.shape} vs grid image {grid.image_size}")
    if state.prev_actions.shape != grid.shape or state.mask.shape != grid.shape:
        raise DimensionMismatch("action/mask grids do not match the block grid")

    motion = block_fractions(grid, state.motion_map > cfg.motion_threshold)
    det_cov = block_fractions(grid, _boxes_mask((h, w), state.prev_detection_boxes))
    topk_cov = block_fractions(grid, _boxes_mask((h, w), state.topk_boxes))
    staleness = np.clip(
        (state.frame_id - state.last_refresh) / max(1, cfg.full_refresh_interval), 0.0, 1.0
    )
    n = grid.n_blocks
    feats = np.empty((n, N_FEATURES))
    feats[:, 0] = motion.reshape(n)
    feats[:, 1] = state.mask.reshape(n).astype(float)
    feats[:, 2] = det_cov.reshape(n)
    feats[:, 3] = topk_cov.reshape(n)
    feats[:, 4] = state.prev_actions.reshape(n).astype(float)
    feats[:, 5] = staleness.reshape(n)
    feats[:, 6] = 1.0
    return feats


def forward(params: PolicyParams, features: np.ndarray, p_floor: float = 1e-4) -> np.ndarray:
    """Per-block selection probabilities, clamped away from 0 and 1."""
    if features.shape[1] != params.weights.shape[0]:
        raise DimensionMismatch(
            f"{features.shape[1]} features vs {params.weights.shape[0]} weights"
        )
    z = features @ params.weights
    return np.clip(expit(z), p_floor, 1.0 - p_floor)


def sample_actions(
    probs: np.ndarray, rng: np.random.Generator, force_full: bool = False
) -> np.ndarray:
    """Independent Bernoulli draws; a forced frame processes every block and
    consumes no randomness."""
    if force_full:
        return np.ones_like(probs, dtype=np.uint8)
    return (rng.random(probs.shape) < probs).astype(np.uint8)


def information_gain(
    state: PolicyState,
    current: DetectionSet,
    gamma_mask: np.ndarray,
    grid: BlockGrid,
    cfg: PolicyConfig,
) -> np.ndarray:
    """Per-block masked information gain.

    A pixel of block b counts when it lies inside a current detection box
    whose ground point is farther than ``ig_match_eps`` from every detection
    recorded when b was last refreshed (a novel object), or when it moved
    and lies inside any current detection box. The per-block fraction is
    then masked by the camera-assignment bit, so blocks outside the view's
    responsibility earn nothing.
    """
    if gamma_mask.shape != grid.shape:
        raise DimensionMismatch("gamma mask does not match the block grid")
    out = np.zeros(grid.shape, dtype=float)
    active = np.argwhere(gamma_mask != 0)
    if len(active) == 0:
        return out

    dets = list(current)
    h, w = state.frame.shape
    moving_in_dets = (state.motion_map > cfg.motion_threshold) & _boxes_mask(
        (h, w), [d.bbox for d in dets]
    )

    # novelty of each detection depends on which frame a block last saw
    novel_by_ref: dict[int, list] = {}

    def novel_dets(ref_frame: int):
        if ref_frame not in novel_by_ref:
            refs = state.detection_history.get(ref_frame, ())
            novel_by_ref[ref_frame] = [
                d
                for d in dets
                if all(d.ground.distance_to(g) > cfg.ig_match_eps for g in refs)
            ]
        return novel_by_ref[ref_frame]

    counts = grid.block_pixel_counts()
    for r, c in active:
        x0, y0, x1, y1 = (int(v) for v in grid.block_extent(int(r), int(c)))
        scratch = moving_in_dets[y0:y1, x0:x1].copy()
        for d in novel_dets(int(state.last_refresh[r, c])):
            bx0 = max(x0, int(np.floor(d.bbox.x)))
            by0 = max(y0, int(np.floor(d.bbox.y)))
            bx1 = min(x1, int(np.ceil(d.bbox.x + d.bbox.w)))
            by1 = min(y1, int(np.ceil(d.bbox.y + d.bbox.h)))
            if bx1 > bx0 and by1 > by0:
                scratch[by0 - y0 : by1 - y0, bx0 - x0 : bx1 - x0] = True
        out[r, c] = scratch.sum() / counts[r, c]
    return out


def target_cost(counts: dict[int, int]) -> dict[int, float]:
    """Per-view processing target: own assigned-object count over the
    largest count among all views (all-empty convention: zero)."""
    if not counts:
        return {}
    peak = max(counts.values())
    if peak <= 0:
        return {c: 0.0 for c in counts}
    return {c: n / peak for c, n in counts.items()}


def compute_cost(
    actions: np.ndarray, params: PolicyParams, tau: float, cfg: PolicyConfig
) -> tuple[float, float]:
    """View-level computation cost and the updated processed-blocks average.

    Returns (cost, new M); the caller commits the new average (and the raw
    processed fraction) back into the params. Signed quadratic: cost is
    positive while the average runs under the target, negative above it.
    """
    p = float(np.mean(actions))
    if cfg.ema_mode == "recursive":
        m_new = (1.0 - cfg.momentum) * p + cfg.momentum * params.avg_processed
    else:
        m_new = (1.0 - cfg.momentum) * p + cfg.momentum * params.prev_processed
    diff = tau - m_new
    return diff * abs(diff), m_new


def reward(actions: np.ndarray, r_ig: np.ndarray, cost: float) -> np.ndarray:
    """Per-block reward: +(gain + cost) for processed blocks, the negation
    for skipped ones."""
    if actions.shape != r_ig.shape:
        raise DimensionMismatch("actions and gain grids differ in shape")
    signed = np.where(actions != 0, 1.0, -1.0)
    return signed * (r_ig + cost)


def window_loss(weights: np.ndarray, window: list[WindowSample], p_floor: float = 1e-4) -> float:
    """Negative reward-weighted log-likelihood of the sampled actions."""
    total = 0.0
    for s in window:
        psi = np.clip(expit(s.features @ weights), p_floor, 1.0 - p_floor)
        logp = s.actions * np.log(psi) + (1 - s.actions) * np.log(1.0 - psi)
        total -= float(np.sum(s.rewards * logp))
    return total


def _loss_gradient(weights: np.ndarray, window: list[WindowSample], p_floor: float) -> np.ndarray:
    grad = np.zeros_like(weights)
    for s in window:
        raw = expit(s.features @ weights)
        live = (raw > p_floor) & (raw < 1.0 - p_floor)
        psi = np.clip(raw, p_floor, 1.0 - p_floor)
        grad -= s.features.T @ (s.rewards * (s.actions - psi) * live)
    return grad


def reinforce_update(
    params: PolicyParams, window: list[WindowSample], cfg: PolicyConfig
) -> PolicyParams:
    """One gradient step on the window's loss; raises NonFiniteGradient (and
    leaves the params untouched) if the step would leave the finite range."""
    if not window:
        raise ValueError("empty training window")
    grad = _loss_gradient(params.weights, window, cfg.p_floor)
    new_w = params.weights - cfg.alpha * grad
    if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(new_w))):
        raise NonFiniteGradient("non-finite policy gradient; lower alpha")
    params.weights = new_w
    return params


@dataclass
class FrameDiagnostics:
    processed_fraction: float
    avg_processed: float
    cost: float
    mean_gain: float


class PolicyAgent:
    """Owns one camera's policy, its refresh memory and its training window.

    Call ``act`` at the start of a frame, feed the detector with the
    returned actions, then call ``finish_frame`` once the server feedback
    for the frame is available.
    """

    def __init__(
        self,
        camera_id: int,
        grid: BlockGrid,
        cfg: PolicyConfig,
        rng: np.random.Generator,
    ):
        self.camera_id = camera_id
        self.grid = grid
        self.cfg = cfg
        self.rng = rng
        self.params = PolicyParams.initial()
        self.last_refresh = np.full(grid.shape, -1, dtype=np.int64)
        self.detection_history: dict[int, tuple[GroundPoint, ...]] = {}
        self.window: list[WindowSample] = []
        self.prev_frame: np.ndarray | None = None
        self.prev_actions = np.zeros(grid.shape, dtype=np.uint8)
        self.prev_detection_boxes: tuple[BBox, ...] = ()
        self.topk_boxes: tuple[BBox, ...] = ()
        self.gamma_mask = np.zeros(grid.shape, dtype=np.uint8)
        self._pending: tuple | None = None

    def act(self, frame_px: np.ndarray, frame_id: int) -> BlockActions:
        if self.prev_frame is None:
            motion = np.zeros_like(frame_px, dtype=np.int16)
        else:
            motion = np.abs(frame_px.astype(np.int16) - self.prev_frame.astype(np.int16))
        state = PolicyState(
            frame_id=frame_id,
            frame=frame_px,
            motion_map=motion,
            topk_boxes=self.topk_boxes,
            mask=self.gamma_mask,
            prev_detection_boxes=self.prev_detection_boxes,
            prev_actions=self.prev_actions,
            last_refresh=self.last_refresh.copy(),
            detection_history=dict(self.detection_history),
        )
        features = extract_block_features(state, self.grid, self.cfg)
        psi = forward(self.params, features, self.cfg.p_floor).reshape(self.grid.shape)
        interval = self.cfg.full_refresh_interval
        forced = frame_id == 0 or (interval > 0 and frame_id % interval == 0)
        actions = sample_actions(psi, self.rng, force_full=forced)
        self._pending = (state, features, psi, actions, forced, frame_px)
        return BlockActions(psi, actions)

    def finish_frame(
        self,
        frame_id: int,
        own_detections: DetectionSet,
        gamma_boxes: tuple[BBox, ...],
        gamma_mask: np.ndarray,
        tau: float,
    ) -> FrameDiagnostics:
        if self._pending is None:
            raise RuntimeError("finish_frame called without a pending act")
        state, features, psi, actions, forced, frame_px = self._pending
        self._pending = None

        r_ig = information_gain(state, own_detections, gamma_mask, self.grid, self.cfg)
        cost, m_new = compute_cost(actions, self.params, tau, self.cfg)
        self.params.prev_processed = float(np.mean(actions))
        self.params.avg_processed = m_new
        rewards = reward(actions, r_ig, cost)

        # forced frames are off-policy and excluded from the gradient window
        if not forced:
            n = self.grid.n_blocks
            self.window.append(
                WindowSample(
                    features,
                    psi.reshape(n).copy(),
                    actions.reshape(n).astype(float),
                    rewards.reshape(n).copy(),
                )
            )
        if len(self.window) >= self.cfg.train_interval:
            try:
                reinforce_update(self.params, self.window, self.cfg)
            except NonFiniteGradient:
                logger.warning("camera %d: skipped non-finite policy update", self.camera_id)
            self.window = []

        self.last_refresh[actions != 0] = frame_id
        self.detection_history[frame_id] = tuple(d.ground for d in own_detections)
        live = set(np.unique(self.last_refresh).tolist()) | {frame_id}
        self.detection_history = {
            f: g for f, g in self.detection_history.items() if f in live
        }
        self.prev_frame = frame_px
        self.prev_actions = actions
        self.prev_detection_boxes = tuple(d.bbox for d in own_detections)
        self.topk_boxes = gamma_boxes
        self.gamma_mask = np.asarray(gamma_mask, dtype=np.uint8)
        return FrameDiagnostics(
            processed_fraction=self.params.prev_processed,
            avg_processed=self.params.avg_processed,
            cost=cost,
            mean_gain=float(r_ig.mean()),
        )
