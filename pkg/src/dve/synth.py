"""Synthetic instances for self-contained tests and experiment scripts.

Feature maps are random projections of one-hot segment layouts plus
noise; teachers come from known linear maps or class embedding tables,
so the pipeline can be exercised end to end without any real data.
"""

from __future__ import annotations

import numpy as np

from .core import SegmentRecord, TeacherVolume, l2_normalize


def segment_layout(height: int, width: int, num_segments: int, rng,
                   unlabeled_fraction: float = 0.0) -> np.ndarray:
    """Random (H, W) uint16 mask with ids 1..num_segments in contiguous blocks.

    A trailing fraction of pixels can be left unlabeled (id 0).
    """
    total = height * width
    ids = rng.integers(1, num_segments + 1, size=total).astype(np.uint16)
    n_unlabeled = int(round(unlabeled_fraction * total))
    if n_unlabeled:
        drop = rng.choice(total, size=n_unlabeled, replace=False)
        ids[drop] = 0
    return ids.reshape(height, width)


def features_for_layout(mask: np.ndarray, feature_dim: int, rng,
                        noise: float = 0.05) -> np.ndarray:
    """Random projection of the one-hot segment layout plus Gaussian noise."""
    mask = np.asarray(mask)
    num_ids = int(mask.max()) + 1
    projection = rng.standard_normal((num_ids, feature_dim))
    feats = projection[mask.astype(np.int64)]
    if noise > 0:
        feats = feats + noise * rng.standard_normal(feats.shape)
    return feats


def linearly_realizable_sample(height: int, width: int, feature_dim: int,
                               embed_dim: int, rng):
    """Features plus a teacher that is an exact linear map of them.

    Returns (features, teacher_volume, matrix) with full coverage, so a
    single linear student can drive the distillation loss to zero.
    """
    features = rng.standard_normal((height, width, feature_dim))
    matrix = rng.standard_normal((embed_dim, feature_dim))
    targets = features.reshape(-1, feature_dim) @ matrix.T
    norms = np.linalg.norm(targets, axis=1)
    # Degenerate target pixels would break the covered-pixel invariant.
    assert float(norms.min()) > 1e-9, "regenerate with a different seed"
    teacher = TeacherVolume(
        embeddings=targets.reshape(height, width, embed_dim),
        coverage=np.ones((height, width), dtype=bool),
    )
    return features, teacher, matrix


def unit_vector_with_cosine(base: np.ndarray, target_cos: float, rng) -> np.ndarray:
    """Unit vector at exactly the requested cosine to ``base``."""
    base = l2_normalize(base)
    raw = rng.standard_normal(base.shape[0])
    orth = raw - np.dot(raw, base) * base
    orth = l2_normalize(orth)
    return target_cos * base + np.sqrt(max(0.0, 1.0 - target_cos**2)) * orth


def two_cluster_map(height: int, width: int, dim: int, rng,
                    center_cos: float = 0.2, noise: float = 0.05):
    """Embedding map drawn from two noisy clusters plus its label map.

    Cluster centers are unit vectors at cosine ``center_cos``; pixels are
    split roughly half/half and perturbed by isotropic Gaussian noise.

    Returns (emb_map, labels, centers) with centers of shape (2, dim).
    """
    c0 = l2_normalize(rng.standard_normal(dim))
    c1 = unit_vector_with_cosine(c0, center_cos, rng)
    centers = np.stack([c0, c1])
    labels = (rng.random((height, width)) < 0.5).astype(np.uint16)
    emb = centers[labels.astype(np.int64)] + noise * rng.standard_normal((height, width, dim))
    return emb, labels, centers


def class_segment_records(centers: np.ndarray, per_class: int, rng,
                          noise: float = 0.05) -> dict[int, SegmentRecord]:
    """Segment records clustered around per-class centers, refined = raw.

    Useful for exercising visual-mean references without running the
    refinement step; ids start at 1.
    """
    records: dict[int, SegmentRecord] = {}
    sid = 1
    for class_id, center in enumerate(centers):
        for _ in range(per_class):
            vec = center + noise * rng.standard_normal(center.shape[0])
            records[sid] = SegmentRecord(
                segment_id=sid, class_id=class_id,
                raw_embedding=vec, refined_embedding=vec,
            )
            sid += 1
    return records


def random_rotation(rng) -> np.ndarray:
    """Uniform random rotation matrix (QR of a Gaussian, det fixed to +1)."""
    mat = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(mat)
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
