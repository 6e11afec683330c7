"""Sparse voxel map accumulating normalized per-pixel embeddings.

Posed RGB-D observations are backprojected to world points; each point
drops its (unit-normalized) embedding into the voxel containing it.
Freezing turns accumulated sums into unit mean embeddings that can be
cosine-queried by text vectors or classified with probe weights. Voxel
keys are ``floor(coordinate / cell_size)`` per axis in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .closedset import ProbeWeights
from .core import NORM_EPS
from .errors import DimMismatch, ZeroVector

VoxelKey = tuple[int, int, int]

# Cells whose accumulated sum stays below this norm are dropped at freeze.
FREEZE_EPS = 1e-9

DEFAULT_CELL_SIZE = 0.10


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model: focal lengths, principal point, depth unit scale."""

    fx: float
    fy: float
    cx: float
    cy: float
    depth_scale: float  # meters per stored depth unit

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0 or self.depth_scale <= 0:
            raise ValueError("fx, fy, and depth_scale must be positive")


@dataclass(frozen=True)
class Pose:
    """Rigid camera-to-world transform."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        trans = np.asarray(self.translation, dtype=np.float64)
        if rot.shape != (3, 3) or trans.shape != (3,):
            raise DimMismatch(f"rotation {rot.shape} / translation {trans.shape}")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-6:
            raise ValueError("rotation is not orthonormal within 1e-6")
        if abs(np.linalg.det(rot) - 1.0) > 1e-6:
            raise ValueError("rotation determinant must be +1 within 1e-6")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(rotation=np.eye(3), translation=np.zeros(3))

    @classmethod
    def from_matrix(cls, mat: np.ndarray) -> "Pose":
        """Build from a 4x4 homogeneous matrix (last row 0 0 0 1)."""
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape != (4, 4):
            raise DimMismatch(f"expected 4x4 matrix, got {mat.shape}")
        if np.max(np.abs(mat[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-9:
            raise ValueError("last row of a rigid transform must be 0 0 0 1")
        return cls(rotation=mat[:3, :3], translation=mat[:3, 3])


def backproject(
    depth: np.ndarray, intr: CameraIntrinsics, pose: Pose
) -> tuple[np.ndarray, np.ndarray]:
    """Lift a depth image into world space.

    For pixel (u, v) with raw depth d > 0: z = d * depth_scale, camera
    point ((u - cx) z / fx, (v - cy) z / fy, z), world point R @ p + t.
    Zero-depth pixels are omitted.

    Returns:
        (points, pixel_indices): (N, 3) float64 world points and the flat
        row-major pixel index of each.
    """
    depth = np.asarray(depth)
    if depth.ndim != 2:
        raise DimMismatch(f"depth image must be 2-D, got {depth.shape}")
    h, w = depth.shape
    v, u = np.nonzero(depth > 0)
    z = depth[v, u].astype(np.float64) * intr.depth_scale
    x = (u.astype(np.float64) - intr.cx) * z / intr.fx
    y = (v.astype(np.float64) - intr.cy) * z / intr.fy
    cam = np.stack([x, y, z], axis=1)
    world = cam @ pose.rotation.T + pose.translation
    return world, (v * w + u).astype(np.int64)


@dataclass
class _Cell:
    vec_sum: np.ndarray
    count: int


@dataclass
class MapBuilder:
    """Mutable accumulation stage; single writer, no concurrent inserts."""

    cell_size: float
    dim: int
    cells: dict[VoxelKey, _Cell] = field(default_factory=dict)
    skipped: int = 0

    def __post_init__(self):
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")

    @property
    def observations(self) -> int:
        return sum(c.count for c in self.cells.values()) + self.skipped


def map_insert(builder: MapBuilder, points: np.ndarray, embeddings: np.ndarray) -> None:
    """Accumulate unit-normalized embeddings into the voxels of ``points``.

    Each observation adds l2_normalize(embedding) to its cell sum and
    bumps the count; zero-norm embeddings are skipped and tallied in
    ``builder.skipped``.
    """
    points = np.asarray(points, dtype=np.float64)
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DimMismatch(f"points must be (N, 3), got {points.shape}")
    if embeddings.ndim != 2 or embeddings.shape[1] != builder.dim:
        raise DimMismatch(f"embeddings must be (N, {builder.dim}), got {embeddings.shape}")
    if points.shape[0] != embeddings.shape[0]:
        raise DimMismatch(f"{points.shape[0]} points vs {embeddings.shape[0]} embeddings")

    keys = np.floor(points / builder.cell_size).astype(np.int64)
    norms = np.linalg.norm(embeddings, axis=1)
    for i in range(points.shape[0]):
        if norms[i] < NORM_EPS:
            builder.skipped += 1
            continue
        key = (int(keys[i, 0]), int(keys[i, 1]), int(keys[i, 2]))
        unit = embeddings[i] / norms[i]
        cell = builder.cells.get(key)
        if cell is None:
            builder.cells[key] = _Cell(vec_sum=unit, count=1)
        else:
            cell.vec_sum = cell.vec_sum + unit
            cell.count += 1


@dataclass(frozen=True)
class EmbeddingMap3D:
    """Frozen voxel map: unit mean embedding plus observation count per cell.

    Immutable; safe for unrestricted concurrent queries.
    """

    cell_size: float
    dim: int
    cells: dict[VoxelKey, tuple[np.ndarray, int]]

    def __post_init__(self):
        for key, (mean, count) in self.cells.items():
            if mean.shape != (self.dim,):
                raise DimMismatch(f"cell {key}: embedding shape {mean.shape}")
            if abs(float(np.linalg.norm(mean)) - 1.0) > 1e-6:
                raise ZeroVector(f"cell {key}: mean embedding is not unit-norm")
            if count < 1:
                raise ValueError(f"cell {key}: count must be >= 1")

    @property
    def num_cells(self) -> int:
        return len(self.cells)


def map_freeze(builder: MapBuilder) -> tuple[EmbeddingMap3D, list[VoxelKey]]:
    """Normalize every accumulated sum into a unit mean embedding.

    Cells whose sum norm fell below 1e-9 (antipodal cancellation) are
    dropped; their keys are returned alongside the frozen map.
    """
    cells: dict[VoxelKey, tuple[np.ndarray, int]] = {}
    dropped: list[VoxelKey] = []
    for key in sorted(builder.cells):
        cell = builder.cells[key]
        norm = float(np.linalg.norm(cell.vec_sum))
        if norm < FREEZE_EPS:
            dropped.append(key)
            continue
        cells[key] = (cell.vec_sum / norm, cell.count)
    return EmbeddingMap3D(cell_size=builder.cell_size, dim=builder.dim, cells=cells), dropped


def map_query(map3d: EmbeddingMap3D, query: np.ndarray) -> list[tuple[VoxelKey, float]]:
    """Cosine similarity of every cell mean against a query vector.

    Ordered by descending similarity, then lexicographic voxel key.
    """
    query = np.asarray(query, dtype=np.float64)
    if query.ndim != 1 or query.shape[0] != map3d.dim:
        raise DimMismatch(f"query shape {query.shape} vs map dim {map3d.dim}")
    qnorm = float(np.linalg.norm(query))
    if qnorm < NORM_EPS:
        raise ZeroVector("query vector has zero norm")
    unit = query / qnorm
    entries = [
        (key, float(np.clip(np.dot(mean, unit) / np.linalg.norm(mean), -1.0, 1.0)))
        for key, (mean, _) in map3d.cells.items()
    ]
    entries.sort(key=lambda kv: (-kv[1], kv[0]))
    return entries


def map_classify(map3d: EmbeddingMap3D, probe: ProbeWeights) -> list[tuple[VoxelKey, int]]:
    """Affine argmax on every cell mean; lowest index wins ties.

    Returned in lexicographic key order.
    """
    if probe.dim != map3d.dim:
        raise DimMismatch(f"probe dim {probe.dim} vs map dim {map3d.dim}")
    out: list[tuple[VoxelKey, int]] = []
    for key in sorted(map3d.cells):
        mean, _ = map3d.cells[key]
        scores = probe.weight @ mean + probe.bias
        out.append((key, int(np.argmax(scores))))
    return out
