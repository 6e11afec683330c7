"""Vector/volume primitives, context suppression, and teacher volume assembly.

Embeddings are plain numpy arrays: a single embedding is a 1-D float64
vector of length D, a dense embedding map is an (H, W, D) float64 array
stored row-major, a segment mask is an (H, W) uint16 array where id 0
means "unlabeled". All dot products and norms run in 64-bit regardless
of on-disk storage precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import DimMismatch, MissingSegment, ZeroVector

# Norms below this threshold count as zero (64-bit accumulation).
NORM_EPS = 1e-12

# Default embedding width of the vision-language space we align to.
DEFAULT_DIM = 768

# Default context-suppression strength.
DEFAULT_ALPHA = 0.65

# Reserved segment id carrying the whole-image embedding.
GLOBAL_SEGMENT_ID = 0


def as_vector(v, dim: Optional[int] = None) -> np.ndarray:
    """Coerce to a 1-D float64 vector, optionally checking its length."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimMismatch(f"expected a 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimMismatch(f"expected dim {dim}, got {arr.shape[0]}")
    return arr


def l2_normalize(v) -> np.ndarray:
    """Scale ``v`` to unit Euclidean norm.

    Raises:
        ZeroVector: if ``norm(v) < 1e-12``.
    """
    arr = as_vector(v)
    n = float(np.linalg.norm(arr))
    if n < NORM_EPS:
        raise ZeroVector(f"cannot normalize vector with norm {n!r}")
    return arr / n


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between ``a`` and ``b``, clamped to [-1, 1]."""
    va = as_vector(a)
    vb = as_vector(b)
    if va.shape != vb.shape:
        raise DimMismatch(f"dims differ: {va.shape[0]} vs {vb.shape[0]}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na < NORM_EPS or nb < NORM_EPS:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    return float(np.clip(float(np.dot(va, vb)) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class SuppressionConfig:
    """How much normalized whole-image context to subtract from a segment."""

    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


def suppress_context(e_seg, e_img, cfg: SuppressionConfig) -> np.ndarray:
    """Subtract scaled global context from a segment embedding.

    Computes ``e_seg/|e_seg| - alpha * e_img/|e_img|``. The result is
    generally non-unit and may even be the zero vector (alpha = 1 with
    e_seg parallel to e_img); downstream normalization rejects that case.
    """
    seg_unit = l2_normalize(e_seg)
    img_unit = l2_normalize(e_img)
    if seg_unit.shape != img_unit.shape:
        raise DimMismatch(
            f"segment dim {seg_unit.shape[0]} vs image dim {img_unit.shape[0]}"
        )
    return seg_unit - cfg.alpha * img_unit


@dataclass
class SegmentRecord:
    """One teacher output: a segment id with its raw (and refined) embedding.

    ``segment_id`` 0 is reserved for the whole-image embedding; refined
    embeddings hold the raw output of :func:`suppress_context` and are
    not renormalized (cosine consumers only read the direction).
    """

    segment_id: int
    class_id: Optional[int]
    raw_embedding: np.ndarray
    refined_embedding: Optional[np.ndarray] = None

    def __post_init__(self):
        self.raw_embedding = as_vector(self.raw_embedding)
        if float(np.linalg.norm(self.raw_embedding)) < NORM_EPS:
            raise ZeroVector(f"segment {self.segment_id}: raw embedding has zero norm")
        if self.refined_embedding is not None:
            self.refined_embedding = as_vector(self.refined_embedding)


def refine_records(
    records: Mapping[int, SegmentRecord], cfg: SuppressionConfig
) -> dict[int, SegmentRecord]:
    """Fill refined embeddings for every real segment using the global record.

    The record with id 0 supplies the whole-image embedding and is passed
    through untouched.
    """
    if GLOBAL_SEGMENT_ID not in records:
        raise MissingSegment(GLOBAL_SEGMENT_ID, "whole-image record required for refinement")
    e_img = records[GLOBAL_SEGMENT_ID].raw_embedding
    out: dict[int, SegmentRecord] = {}
    for sid, rec in records.items():
        if sid == GLOBAL_SEGMENT_ID:
            out[sid] = rec
            continue
        out[sid] = SegmentRecord(
            segment_id=rec.segment_id,
            class_id=rec.class_id,
            raw_embedding=rec.raw_embedding,
            refined_embedding=suppress_context(rec.raw_embedding, e_img, cfg),
        )
    return out


@dataclass
class TeacherVolume:
    """Per-pixel distillation targets plus the boolean coverage set.

    Invariant: uncovered pixels are all-zero, covered pixels carry a
    finite embedding with nonzero norm.
    """

    embeddings: np.ndarray  # (H, W, D) float64
    coverage: np.ndarray  # (H, W) bool

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        self.coverage = np.asarray(self.coverage, dtype=bool)
        if self.embeddings.ndim != 3:
            raise DimMismatch(f"teacher volume must be (H, W, D), got {self.embeddings.shape}")
        if self.coverage.shape != self.embeddings.shape[:2]:
            raise DimMismatch(
                f"coverage shape {self.coverage.shape} vs volume {self.embeddings.shape[:2]}"
            )
        if not np.all(np.isfinite(self.embeddings)):
            raise ValueError("teacher volume contains non-finite entries")
        if np.any(self.embeddings[~self.coverage] != 0.0):
            raise ValueError("uncovered pixels must be all-zero")
        covered = self.embeddings[self.coverage]
        if covered.size and float(np.min(np.linalg.norm(covered, axis=-1))) < NORM_EPS:
            raise ZeroVector("covered teacher pixel with zero-norm embedding")

    @property
    def height(self) -> int:
        return self.embeddings.shape[0]

    @property
    def width(self) -> int:
        return self.embeddings.shape[1]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[2]

    @property
    def covered_pixels(self) -> int:
        return int(np.count_nonzero(self.coverage))

    @classmethod
    def from_map_and_mask(cls, embeddings: np.ndarray, mask: np.ndarray) -> "TeacherVolume":
        """Build a volume from a dense map and a segment mask.

        Coverage is ``mask != 0``; embeddings at unlabeled pixels are
        zeroed so the type invariant holds regardless of the input.
        """
        emb = np.array(embeddings, dtype=np.float64, copy=True)
        cov = np.asarray(mask) != 0
        if cov.shape != emb.shape[:2]:
            raise DimMismatch(f"mask shape {cov.shape} vs volume {emb.shape[:2]}")
        emb[~cov] = 0.0
        return cls(embeddings=emb, coverage=cov)


def assemble_teacher_volume(
    mask: np.ndarray, records: Mapping[int, SegmentRecord], dim: int
) -> TeacherVolume:
    """Place each segment's refined embedding at every pixel of its mask.

    Pixels with id 0 stay zero and uncovered. A zero covered count is a
    valid outcome (readable from ``TeacherVolume.covered_pixels``).

    Raises:
        MissingSegment: a mask id has no record or no refined embedding.
        ZeroVector: a refined embedding is degenerate (norm < 1e-12).
        DimMismatch: a refined embedding does not have length ``dim``.
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DimMismatch(f"mask must be 2-D, got shape {mask.shape}")
    h, w = mask.shape
    volume = np.zeros((h, w, dim), dtype=np.float64)
    for sid in np.unique(mask):
        sid = int(sid)
        if sid == GLOBAL_SEGMENT_ID:
            continue
        rec = records.get(sid)
        if rec is None:
            raise MissingSegment(sid)
        if rec.refined_embedding is None:
            raise MissingSegment(sid, "record has no refined embedding")
        emb = rec.refined_embedding
        if emb.shape[0] != dim:
            raise DimMismatch(f"segment {sid}: embedding dim {emb.shape[0]} != {dim}")
        if float(np.linalg.norm(emb)) < NORM_EPS:
            raise ZeroVector(f"segment {sid}: refined embedding has zero norm")
        volume[mask == sid] = emb
    return TeacherVolume(embeddings=volume, coverage=mask != 0)
