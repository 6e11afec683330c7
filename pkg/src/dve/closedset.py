"""Closed-set segmentation from dense embeddings, plus mIoU evaluation.

Three routes from an (H, W, D) embedding map to class labels: cosine
argmax against a reference set (text prompts or visual means), and an
affine probe trained with softmax cross-entropy on frozen embeddings.
Label maps are (H, W) uint16 arrays; 0xFFFF marks ignored pixels.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import NORM_EPS, SegmentRecord, l2_normalize
from .distill import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, TrainConfig
from .errors import (
    DimMismatch,
    EmptyClass,
    NoLabeledPixels,
    NonFinite,
    ShapeMismatch,
    ZeroVector,
)

IGNORE_LABEL = 0xFFFF


@dataclass
class ReferenceSet:
    """One unit-norm reference row per class, in class order.

    Rows are renormalized on construction, so cosine argmax against the
    set is invariant to any positive rescaling of the inputs.
    """

    class_names: list[str]
    rows: np.ndarray  # (C, D) float64, unit rows

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[0] < 1:
            raise DimMismatch(f"reference rows must be (C, D) with C >= 1, got {self.rows.shape}")
        if len(self.class_names) != self.rows.shape[0]:
            raise DimMismatch(
                f"{len(self.class_names)} names vs {self.rows.shape[0]} rows"
            )
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be unique")
        norms = np.linalg.norm(self.rows, axis=1)
        if float(np.min(norms)) < NORM_EPS:
            raise ZeroVector("reference row with zero norm")
        self.rows = self.rows / norms[:, None]

    @property
    def num_classes(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


@dataclass
class ProbeWeights:
    """Affine classifier on single-pixel embeddings."""

    weight: np.ndarray  # (C, D)
    bias: np.ndarray  # (C,)
    class_names: Optional[list[str]] = None

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimMismatch(f"weight {self.weight.shape} / bias {self.bias.shape}")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise NonFinite("probe weights contain non-finite entries")
        if self.class_names is not None and len(self.class_names) != self.weight.shape[0]:
            raise DimMismatch("class_names length must match weight rows")

    @property
    def num_classes(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class MiouReport:
    """Per-class IoU (None where the union is empty) and their mean."""

    per_class_iou: list[tuple[int, Optional[float]]]
    mean_iou: float
    excluded_classes: list[int]


@dataclass(frozen=True)
class ArgmaxResult:
    """Labels, winning cosine per pixel, and how many pixels were degenerate."""

    labels: np.ndarray  # (H, W) uint16, IGNORE_LABEL at zero-norm pixels
    best_similarity: np.ndarray  # (H, W) float64
    zero_norm_pixels: int


def visual_mean_references(
    records: Iterable[SegmentRecord],
    class_names: Sequence[str],
    use_raw: bool = False,
) -> ReferenceSet:
    """Average each class's segment embeddings into one unit reference row.

    Uses refined embeddings by default; ``use_raw`` switches to the raw
    teacher outputs. Records without a class id (including the reserved
    whole-image record) are skipped.

    Raises:
        EmptyClass: a class has no record carrying the chosen embedding.
        ZeroVector: a class mean degenerates to near-zero norm.
    """
    buckets: dict[int, list[np.ndarray]] = {}
    for rec in records:
        if rec.class_id is None:
            continue
        emb = rec.raw_embedding if use_raw else rec.refined_embedding
        if emb is None:
            continue
        buckets.setdefault(int(rec.class_id), []).append(emb)
    rows = []
    for class_id in range(len(class_names)):
        members = buckets.get(class_id)
        if not members:
            raise EmptyClass(class_id)
        mean = np.mean(np.stack(members), axis=0)
        rows.append(l2_normalize(mean))
    return ReferenceSet(class_names=list(class_names), rows=np.stack(rows))


def similarity_matrix(emb_map: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cosine of every pixel against every unit row.

    Returns an (H*W, C) similarity matrix plus the flat boolean mask of
    zero-norm pixels (their similarities are left at 0).
    """
    emb_map = np.asarray(emb_map, dtype=np.float64)
    if emb_map.ndim != 3:
        raise DimMismatch(f"embedding map must be (H, W, D), got {emb_map.shape}")
    if emb_map.shape[2] != rows.shape[1]:
        raise DimMismatch(f"map dim {emb_map.shape[2]} vs reference dim {rows.shape[1]}")
    flat = emb_map.reshape(-1, emb_map.shape[2])
    norms = np.linalg.norm(flat, axis=1)
    zero = norms < NORM_EPS
    unit = np.zeros_like(flat)
    np.divide(flat, norms[:, None], out=unit, where=~zero[:, None])
    sims = np.clip(unit @ rows.T, -1.0, 1.0)
    sims[zero] = 0.0
    return sims, zero


def classify_argmax(emb_map: np.ndarray, refs: ReferenceSet) -> ArgmaxResult:
    """Assign each pixel the class with the highest cosine similarity.

    Exact ties go to the lowest class index. Zero-norm pixels get the
    ignore label and similarity 0; their count lands in the result.
    """
    emb_map = np.asarray(emb_map, dtype=np.float64)
    sims, zero = similarity_matrix(emb_map, refs.rows)
    h, w = emb_map.shape[:2]
    labels = np.argmax(sims, axis=1).astype(np.uint16)
    best = sims[np.arange(sims.shape[0]), labels]
    labels[zero] = IGNORE_LABEL
    best[zero] = 0.0
    return ArgmaxResult(
        labels=labels.reshape(h, w),
        best_similarity=best.reshape(h, w),
        zero_norm_pixels=int(np.count_nonzero(zero)),
    )


def _gather_labeled_pixels(samples, num_classes: int):
    xs, ys = [], []
    dim = None
    for emb_map, labels in samples:
        emb_map = np.asarray(emb_map, dtype=np.float64)
        labels = np.asarray(labels)
        if emb_map.ndim != 3 or labels.shape != emb_map.shape[:2]:
            raise DimMismatch(f"map {emb_map.shape} vs labels {labels.shape}")
        if dim is None:
            dim = emb_map.shape[2]
        elif emb_map.shape[2] != dim:
            raise DimMismatch("samples disagree on embedding dim")
        keep = labels != IGNORE_LABEL
        kept = labels[keep].astype(np.int64)
        if kept.size and int(kept.max()) >= num_classes:
            raise ShapeMismatch(f"label {int(kept.max())} outside {num_classes} classes")
        xs.append(emb_map[keep])
        ys.append(kept)
    x = np.concatenate(xs) if xs else np.zeros((0, dim or 0))
    y = np.concatenate(ys) if ys else np.zeros(0, dtype=np.int64)
    if y.size == 0:
        raise NoLabeledPixels("all pixels are marked ignore")
    return x, y


def train_linear_probe(
    samples: Sequence[tuple[np.ndarray, np.ndarray]],
    num_classes: int,
    cfg: TrainConfig,
    class_names: Optional[Sequence[str]] = None,
) -> ProbeWeights:
    """Fit the affine probe by full-batch softmax cross-entropy descent.

    Weights start at zero, so the run is deterministic. Supports the same
    plain/adaptive optimizers as the student trainer.

    Raises:
        NoLabeledPixels: every pixel carries the ignore label.
        NonFinite: loss or weights left the finite range.
    """
    x, y = _gather_labeled_pixels(samples, num_classes)
    n = x.shape[0]
    weight = np.zeros((num_classes, x.shape[1]))
    bias = np.zeros(num_classes)
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), y] = 1.0

    adam_state = None
    if cfg.optimizer == "adam":
        adam_state = [np.zeros_like(weight), np.zeros_like(bias),
                      np.zeros_like(weight), np.zeros_like(bias)]

    for step in range(1, cfg.iterations + 1):
        logits = x @ weight.T + bias
        logits -= logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        probs = exp / exp.sum(axis=1, keepdims=True)
        loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))
        if not np.isfinite(loss):
            raise NonFinite(f"probe loss diverged at iteration {step}")
        grad_z = (probs - onehot) / n
        gw = grad_z.T @ x
        gb = grad_z.sum(axis=0)
        if cfg.weight_decay > 0.0:
            weight = weight * (1.0 - cfg.learning_rate * cfg.weight_decay)
            bias = bias * (1.0 - cfg.learning_rate * cfg.weight_decay)
        if cfg.optimizer == "adam":
            mw, mb, vw, vb = adam_state
            mw = ADAM_BETA1 * mw + (1 - ADAM_BETA1) * gw
            mb = ADAM_BETA1 * mb + (1 - ADAM_BETA1) * gb
            vw = ADAM_BETA2 * vw + (1 - ADAM_BETA2) * gw**2
            vb = ADAM_BETA2 * vb + (1 - ADAM_BETA2) * gb**2
            adam_state = [mw, mb, vw, vb]
            bc1 = 1 - ADAM_BETA1**step
            bc2 = 1 - ADAM_BETA2**step
            weight = weight - cfg.learning_rate * (mw / bc1) / (np.sqrt(vw / bc2) + ADAM_EPS)
            bias = bias - cfg.learning_rate * (mb / bc1) / (np.sqrt(vb / bc2) + ADAM_EPS)
        else:
            weight = weight - cfg.learning_rate * gw
            bias = bias - cfg.learning_rate * gb
        if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
            raise NonFinite(f"probe weights diverged at iteration {step}")

    names = list(class_names) if class_names is not None else None
    return ProbeWeights(weight=weight, bias=bias, class_names=names)


def probe_predict(emb_map: np.ndarray, probe: ProbeWeights) -> np.ndarray:
    """Affine argmax per pixel; ties go to the lowest class index."""
    emb_map = np.asarray(emb_map, dtype=np.float64)
    if emb_map.ndim != 3:
        raise DimMismatch(f"embedding map must be (H, W, D), got {emb_map.shape}")
    if emb_map.shape[2] != probe.dim:
        raise DimMismatch(f"map dim {emb_map.shape[2]} vs probe dim {probe.dim}")
    h, w = emb_map.shape[:2]
    scores = emb_map.reshape(-1, probe.dim) @ probe.weight.T + probe.bias
    return np.argmax(scores, axis=1).astype(np.uint16).reshape(h, w)


def evaluate_miou(
    pred: np.ndarray,
    gt: np.ndarray,
    num_classes: int,
    excluded: Sequence[int] = (),
) -> MiouReport:
    """Mean intersection-over-union between prediction and ground truth.

    Pixels whose ground truth is ignore or an excluded class are dropped.
    Predicted ignore labels count as misses for the true class. Classes
    with an empty union have no defined IoU and are omitted from the
    mean; if nothing is defined the mean is NaN.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise DimMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    excluded = sorted(set(int(c) for c in excluded))
    valid = gt != IGNORE_LABEL
    for class_id in excluded:
        valid &= gt != class_id
    gt_v = gt[valid].astype(np.int64)
    pred_v = pred[valid].astype(np.int64)
    if gt_v.size and int(gt_v.max()) >= num_classes:
        raise ShapeMismatch(f"gt label {int(gt_v.max())} outside {num_classes} classes")
    bad_pred = (pred_v >= num_classes) & (pred_v != IGNORE_LABEL)
    if np.any(bad_pred):
        raise ShapeMismatch(f"pred label {int(pred_v[bad_pred][0])} outside {num_classes} classes")

    # Confusion rows = gt class, cols = pred class; extra col for pred ignore.
    pred_col = np.where(pred_v == IGNORE_LABEL, num_classes, pred_v)
    conf = np.bincount(
        gt_v * (num_classes + 1) + pred_col, minlength=num_classes * (num_classes + 1)
    ).reshape(num_classes, num_classes + 1)
    tp = np.diagonal(conf[:, :num_classes])
    fn = conf.sum(axis=1) - tp
    fp = conf[:, :num_classes].sum(axis=0) - tp

    # Exact rational IoUs: counts are small integers, so the mean rounds
    # once at the end instead of accumulating float error.
    per_class: list[tuple[int, Optional[float]]] = []
    defined: list[Fraction] = []
    for class_id in range(num_classes):
        if class_id in excluded:
            continue
        union = int(tp[class_id] + fp[class_id] + fn[class_id])
        if union == 0:
            per_class.append((class_id, None))
        else:
            iou = Fraction(int(tp[class_id]), union)
            per_class.append((class_id, float(iou)))
            defined.append(iou)
    mean = float(sum(defined) / len(defined)) if defined else float("nan")
    return MiouReport(per_class_iou=per_class, mean_iou=mean, excluded_classes=excluded)
