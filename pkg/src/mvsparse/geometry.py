"""Camera calibration, world<->image projection and block-grid arithmetic.

Coordinate conventions (fixed for the whole pipeline):
  - World frame: right-handed, ground plane at z=0, units in meters.
  - ``rotation`` maps world-frame directions into the camera frame
    (rows are the camera axes expressed in world coordinates).
  - ``translation`` is the camera center expressed in world coordinates,
    so a world point X projects through ``x_cam = R @ (X - t)``.
  - Camera frame: x right, y down, z forward (optical axis).
  - Image frame: u right, v down, pixels, origin at the top-left corner.

Everything in this module is a pure function over immutable values and is
safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class GeometryError(Exception):
    """Base class for projection failures."""


class BehindCamera(GeometryError):
    """Point (or plane intersection) lies at non-positive camera depth."""


class RayParallelToGround(GeometryError):
    """Pixel ray never meets the z=0 plane."""


@dataclass(frozen=True)
class GroundPoint:
    """Point on the z=0 world plane, meters."""

    x: float
    y: float

    def distance_to(self, other: "GroundPoint") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class ImagePoint:
    """Pixel coordinates, u right / v down."""

    u: float
    v: float


@dataclass(frozen=True)
class BBox:
    """Axis-aligned pixel box, top-left corner plus width/height."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"BBox needs positive extent, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def foot(self) -> ImagePoint:
        """Bottom-center pixel, the point assumed to touch the ground."""
        return ImagePoint(self.x + self.w / 2.0, self.y + self.h)

    def intersection_area(self, other: "BBox") -> float:
        ix = min(self.x + self.w, other.x + other.w) - max(self.x, other.x)
        iy = min(self.y + self.h, other.y + other.h) - max(self.y, other.y)
        if ix <= 0 or iy <= 0:
            return 0.0
        return ix * iy

    def clamped(self, width: int, height: int) -> "BBox | None":
        """Intersection with the image rectangle, or None if disjoint."""
        if self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height:
            return self
        x0 = max(self.x, 0.0)
        y0 = max(self.y, 0.0)
        x1 = min(self.x + self.w, float(width))
        y1 = min(self.y + self.h, float(height))
        if x1 <= x0 or y1 <= y0:
            return None
        return BBox(x0, y0, x1 - x0, y1 - y0)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: intrinsics K, rotation R (world->camera directions)
    and translation t = camera center in world coordinates."""

    camera_id: int
    intrinsics: np.ndarray
    rotation: np.ndarray
    translation: np.ndarray
    image_size: tuple[int, int]  # (width, height) in pixels

    def __post_init__(self):
        K = np.asarray(self.intrinsics, dtype=float).reshape(3, 3)
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "intrinsics", K)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if abs(np.linalg.det(K)) < 1e-12:
            raise ValueError("intrinsics matrix is singular")
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9):
            raise ValueError("rotation matrix is not orthonormal (tol 1e-9)")
        w, h = self.image_size
        if w <= 0 or h <= 0:
            raise ValueError(f"image_size must be positive, got {self.image_size}")
        object.__setattr__(self, "image_size", (int(w), int(h)))

    @property
    def width(self) -> int:
        return self.image_size[0]

    @property
    def height(self) -> int:
        return self.image_size[1]

    def world_to_camera(self, point_w: np.ndarray) -> np.ndarray:
        return self.rotation @ (np.asarray(point_w, dtype=float) - self.translation)


def camera_from_pose(
    camera_id: int,
    position: tuple[float, float, float],
    yaw_deg: float,
    pitch_deg: float,
    focal_px: float,
    image_size: tuple[int, int],
) -> CameraModel:
    """Build a camera from a mounting pose.

    yaw is measured from the world +x axis (counter-clockwise, looking down),
    pitch > 0 tilts the optical axis below the horizon. Roll is zero, the
    principal point sits at the image center.
    """
    yaw = math.radians(yaw_deg)
    pitch = math.radians(pitch_deg)
    forward = np.array(
        [math.cos(pitch) * math.cos(yaw), math.cos(pitch) * math.sin(yaw), -math.sin(pitch)]
    )
    # right = forward x world_up keeps the image upright (zero roll)
    right = np.cross(forward, np.array([0.0, 0.0, 1.0]))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    down /= np.linalg.norm(down)
    R = np.stack([right, down, forward])
    w, h = image_size
    K = np.array(
        [
            [focal_px, 0.0, w / 2.0],
            [0.0, focal_px, h / 2.0],
            [0.0, 0.0, 1.0],
        ]
    )
    return CameraModel(camera_id, K, R, np.array(position, dtype=float), (w, h))


def project_world_point(cam: CameraModel, point_w: np.ndarray) -> ImagePoint:
    """Project an arbitrary 3-d world point; raises BehindCamera at depth <= 0."""
    pc = cam.world_to_camera(point_w)
    if pc[2] <= 0:
        raise BehindCamera(f"camera {cam.camera_id}: point at depth {pc[2]:.3f}")
    uvw = cam.intrinsics @ pc
    return ImagePoint(uvw[0] / uvw[2], uvw[1] / uvw[2])


def project_ground_to_image(cam: CameraModel, p: GroundPoint) -> ImagePoint:
    """Pinhole projection of the ground point (p.x, p.y, 0)."""
    return project_world_point(cam, np.array([p.x, p.y, 0.0]))


def project_image_to_ground(cam: CameraModel, q: ImagePoint) -> GroundPoint:
    """Intersect the pixel ray with the z=0 plane (the Pi_g mapping).

    Raises RayParallelToGround when the ray never meets the plane and
    BehindCamera when the intersection lies behind the camera.
    """
    d_cam = np.linalg.solve(cam.intrinsics, np.array([q.u, q.v, 1.0]))
    d_world = cam.rotation.T @ d_cam
    origin = cam.translation
    if abs(d_world[2]) < 1e-12:
        raise RayParallelToGround(f"camera {cam.camera_id}: ray through ({q.u}, {q.v}) is horizontal")
    s = -origin[2] / d_world[2]
    if s <= 0:
        raise BehindCamera(f"camera {cam.camera_id}: ground intersection behind camera (s={s:.3f})")
    hit = origin + s * d_world
    return GroundPoint(hit[0], hit[1])


@dataclass(frozen=True)
class BlockGrid:
    """M x N tiling of an image into B x B pixel blocks.

    Edge blocks may be partial when the image size is not a multiple of the
    block size; they are regular grid cells like any other.
    """

    block_size: int
    rows: int
    cols: int
    image_size: tuple[int, int]

    @classmethod
    def for_image(cls, width: int, height: int, block_size: int) -> "BlockGrid":
        if block_size <= 0 or width <= 0 or height <= 0:
            raise ValueError("block size and image dimensions must be positive")
        rows = -(-height // block_size)
        cols = -(-width // block_size)
        return cls(block_size, rows, cols, (width, height))

    @property
    def n_blocks(self) -> int:
        return self.rows * self.cols

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def block_extent(self, row: int, col: int) -> tuple[float, float, float, float]:
        """Pixel rectangle (x0, y0, x1, y1) of a cell, clipped to the image."""
        B = self.block_size
        w, h = self.image_size
        return (col * B, row * B, min((col + 1) * B, w), min((row + 1) * B, h))

    def block_pixel_counts(self) -> np.ndarray:
        """Per-cell pixel area as an (rows, cols) array; partial cells are smaller."""
        B = self.block_size
        w, h = self.image_size
        row_px = np.minimum(np.arange(1, self.rows + 1) * B, h) - np.arange(self.rows) * B
        col_px = np.minimum(np.arange(1, self.cols + 1) * B, w) - np.arange(self.cols) * B
        return row_px[:, None] * col_px[None, :]


def blocks_for_bbox(grid: BlockGrid, box: BBox) -> set[tuple[int, int]]:
    """Grid cells whose pixel extent intersects the box (clamped to the image)."""
    w, h = grid.image_size
    clamped = box.clamped(w, h)
    if clamped is None:
        return set()
    B = grid.block_size
    c0 = int(clamped.x // B)
    c1 = int(min(clamped.x + clamped.w, w) - 1e-9) // B
    r0 = int(clamped.y // B)
    r1 = int(min(clamped.y + clamped.h, h) - 1e-9) // B
    c1 = min(int(c1), grid.cols - 1)
    r1 = min(int(r1), grid.rows - 1)
    return {(r, c) for r in range(r0, r1 + 1) for c in range(c0, c1 + 1)}


def bbox_block_mask(grid: BlockGrid, boxes: list[BBox]) -> np.ndarray:
    """Binary (rows, cols) mask of all cells touched by any of the boxes."""
    mask = np.zeros(grid.shape, dtype=np.uint8)
    for box in boxes:
        for r, c in blocks_for_bbox(grid, box):
            mask[r, c] = 1
    return mask
