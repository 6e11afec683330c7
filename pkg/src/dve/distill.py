"""Cosine distillation loss, its analytic gradient, and a toy per-pixel student.

The student is a per-pixel MLP (rectifier hidden layers, linear output)
applied independently at every pixel of an externally supplied feature
map; it stands in for a full dense encoder-decoder so the distillation
mechanism itself stays testable. Backprop is hand-derived per layer, so
the gradient contract can be checked against finite differences. All
reductions run in float64 single-threaded numpy (pairwise summation),
reproducible run to run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .core import NORM_EPS, TeacherVolume
from .errors import DimMismatch, EmptyCoverage, NonFinite, ZeroVector

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class LossReport:
    """Mean cosine distance over covered pixels plus the coverage size."""

    loss: float
    covered_pixels: int


@dataclass
class StudentParams:
    """Per-pixel MLP parameters: ordered (weight, bias) pairs.

    Hidden layers use a rectifier, the final layer is linear; adjacent
    dims must chain and the last output width is the embedding dim.
    """

    layers: list[tuple[np.ndarray, np.ndarray]]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("student needs at least one layer")
        coerced = []
        prev_out = None
        for i, (w, b) in enumerate(self.layers):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[0]:
                raise DimMismatch(f"layer {i}: weight {w.shape} / bias {b.shape}")
            if prev_out is not None and w.shape[1] != prev_out:
                raise DimMismatch(f"layer {i}: in dim {w.shape[1]} != previous out {prev_out}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NonFinite(f"layer {i}: non-finite parameters")
            prev_out = w.shape[0]
            coerced.append((w, b))
        self.layers = coerced

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]

    def copy(self) -> "StudentParams":
        return StudentParams([(w.copy(), b.copy()) for w, b in self.layers])


@dataclass(frozen=True)
class TrainConfig:
    """Full-batch training hyperparameters.

    ``optimizer`` is plain gradient descent ("gd") or adaptive-moment
    ("adam", beta1=0.9, beta2=0.999, eps=1e-8). Weight decay is decoupled
    from the gradient step. learning_rate = 0 is allowed and leaves the
    parameters untouched each iteration.
    """

    learning_rate: float
    iterations: int
    optimizer: Literal["gd", "adam"] = "gd"
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def _covered_cosines(pred: np.ndarray, teacher: TeacherVolume):
    """Shared setup for loss and gradient: per-covered-pixel cosine terms."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != teacher.embeddings.shape:
        raise DimMismatch(f"pred {pred.shape} vs teacher {teacher.embeddings.shape}")
    n_cov = teacher.covered_pixels
    if n_cov == 0:
        raise EmptyCoverage("teacher volume covers no pixels")
    y = teacher.embeddings[teacher.coverage]
    y_hat = pred[teacher.coverage]
    norm_y = np.linalg.norm(y, axis=1)
    norm_hat = np.linalg.norm(y_hat, axis=1)
    if float(np.min(norm_hat)) < NORM_EPS:
        raise ZeroVector("covered prediction pixel with norm < 1e-12")
    cos = np.einsum("ij,ij->i", y, y_hat) / (norm_y * norm_hat)
    return pred, n_cov, y, y_hat, norm_y, norm_hat, cos


def cosine_distill_loss(pred: np.ndarray, teacher: TeacherVolume) -> LossReport:
    """Mean (1 - cos) between prediction and teacher over covered pixels.

    Uncovered pixels contribute nothing. Cosines are clamped to [-1, 1]
    against rounding, so the loss always lies in [0, 2].
    """
    _, n_cov, _, _, _, _, cos = _covered_cosines(pred, teacher)
    loss = float(np.mean(1.0 - np.clip(cos, -1.0, 1.0)))
    return LossReport(loss=loss, covered_pixels=n_cov)


def cosine_distill_loss_grad(pred: np.ndarray, teacher: TeacherVolume) -> np.ndarray:
    """Gradient of the distillation loss with respect to the prediction.

    At a covered pixel: (cos * y_hat / |y_hat|^2 - y / (|y| |y_hat|)) / |P|;
    zero at uncovered pixels.
    """
    pred, n_cov, y, y_hat, norm_y, norm_hat, cos = _covered_cosines(pred, teacher)
    grad_cov = (
        cos[:, None] * y_hat / (norm_hat**2)[:, None]
        - y / (norm_y * norm_hat)[:, None]
    ) / n_cov
    grad = np.zeros_like(pred)
    grad[teacher.coverage] = grad_cov
    return grad


def student_forward(features: np.ndarray, params: StudentParams) -> np.ndarray:
    """Apply the layer chain at every pixel; no spatial mixing."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 3:
        raise DimMismatch(f"features must be (H, W, F), got {feats.shape}")
    if feats.shape[2] != params.in_dim:
        raise DimMismatch(f"feature dim {feats.shape[2]} != first layer in dim {params.in_dim}")
    h, w, _ = feats.shape
    x = feats.reshape(h * w, -1)
    last = len(params.layers) - 1
    for i, (weight, bias) in enumerate(params.layers):
        x = x @ weight.T + bias
        if i != last:
            x = np.maximum(x, 0.0)
    return x.reshape(h, w, params.out_dim)


def _forward_cached(flat_x: np.ndarray, params: StudentParams):
    """Forward pass keeping per-layer inputs and rectifier masks for backprop."""
    inputs = []
    masks = []
    x = flat_x
    last = len(params.layers) - 1
    for i, (weight, bias) in enumerate(params.layers):
        inputs.append(x)
        z = x @ weight.T + bias
        if i != last:
            mask = z > 0.0
            masks.append(mask)
            x = np.where(mask, z, 0.0)
        else:
            x = z
    return x, inputs, masks


def _backward(grad_out: np.ndarray, inputs, masks, params: StudentParams):
    """Hand-derived backprop through the affine/rectifier chain."""
    grads = [None] * len(params.layers)
    g = grad_out
    for i in range(len(params.layers) - 1, -1, -1):
        weight, _ = params.layers[i]
        grads[i] = (g.T @ inputs[i], g.sum(axis=0))
        if i > 0:
            g = (g @ weight) * masks[i - 1]
    return grads


def _check_samples(samples, params: StudentParams):
    if not samples:
        raise ValueError("need at least one training sample")
    for features, teacher in samples:
        feats = np.asarray(features)
        if feats.ndim != 3 or feats.shape[2] != params.in_dim:
            raise DimMismatch(f"sample features {feats.shape} vs in dim {params.in_dim}")
        if teacher.dim != params.out_dim:
            raise DimMismatch(f"teacher dim {teacher.dim} vs out dim {params.out_dim}")
        if feats.shape[:2] != (teacher.height, teacher.width):
            raise DimMismatch(
                f"sample grid {feats.shape[:2]} vs teacher {(teacher.height, teacher.width)}"
            )
    if all(teacher.covered_pixels == 0 for _, teacher in samples):
        raise EmptyCoverage("no sample covers any pixel")


def train_student(
    samples: Sequence[tuple[np.ndarray, TeacherVolume]],
    cfg: TrainConfig,
    init: StudentParams,
) -> tuple[StudentParams, list[float]]:
    """Full-batch distillation training of the per-pixel student.

    Each iteration runs forward, loss, analytic gradient, and hand-derived
    backprop over every sample; samples with empty coverage are skipped.
    The returned history holds the mean loss (over contributing samples)
    measured before each update. Deterministic for a fixed config.

    Raises:
        EmptyCoverage: if no sample covers any pixel.
        NonFinite: if the loss or parameters leave the finite range.
    """
    _check_samples(samples, init)
    params = init.copy()
    history: list[float] = []
    if cfg.iterations == 0:
        return params, history

    flat = [
        (np.asarray(f, dtype=np.float64).reshape(-1, params.in_dim), t)
        for f, t in samples
        if t.covered_pixels > 0
    ]

    adam_m = adam_v = None
    if cfg.optimizer == "adam":
        adam_m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers]
        adam_v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params.layers]

    for step in range(1, cfg.iterations + 1):
        total_loss = 0.0
        grad_acc = [[np.zeros_like(w), np.zeros_like(b)] for w, b in params.layers]
        for flat_feats, teacher in flat:
            h, w_px = teacher.height, teacher.width
            out, inputs, masks = _forward_cached(flat_feats, params)
            pred = out.reshape(h, w_px, params.out_dim)
            total_loss += cosine_distill_loss(pred, teacher).loss
            grad_pred = cosine_distill_loss_grad(pred, teacher)
            layer_grads = _backward(
                grad_pred.reshape(-1, params.out_dim), inputs, masks, params
            )
            for i, (gw, gb) in enumerate(layer_grads):
                grad_acc[i][0] += gw
                grad_acc[i][1] += gb

        mean_loss = total_loss / len(flat)
        if not np.isfinite(mean_loss):
            raise NonFinite(f"loss diverged at iteration {step}")
        history.append(mean_loss)

        new_layers = []
        for i, (weight, bias) in enumerate(params.layers):
            gw = grad_acc[i][0] / len(flat)
            gb = grad_acc[i][1] / len(flat)
            if cfg.weight_decay > 0.0:
                weight = weight * (1.0 - cfg.learning_rate * cfg.weight_decay)
                bias = bias * (1.0 - cfg.learning_rate * cfg.weight_decay)
            if cfg.optimizer == "adam":
                mw, mb = adam_m[i]
                vw, vb = adam_v[i]
                mw = ADAM_BETA1 * mw + (1 - ADAM_BETA1) * gw
                mb = ADAM_BETA1 * mb + (1 - ADAM_BETA1) * gb
                vw = ADAM_BETA2 * vw + (1 - ADAM_BETA2) * gw**2
                vb = ADAM_BETA2 * vb + (1 - ADAM_BETA2) * gb**2
                adam_m[i] = (mw, mb)
                adam_v[i] = (vw, vb)
                bc1 = 1 - ADAM_BETA1**step
                bc2 = 1 - ADAM_BETA2**step
                weight = weight - cfg.learning_rate * (mw / bc1) / (np.sqrt(vw / bc2) + ADAM_EPS)
                bias = bias - cfg.learning_rate * (mb / bc1) / (np.sqrt(vb / bc2) + ADAM_EPS)
            else:
                weight = weight - cfg.learning_rate * gw
                bias = bias - cfg.learning_rate * gb
            if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
                raise NonFinite(f"parameters diverged at iteration {step}")
            new_layers.append((weight, bias))
        params = StudentParams(new_layers)

    return params, history


def init_student_params(layer_dims: Sequence[int], seed: int = 0) -> StudentParams:
    """Random He-scaled weights, zero biases, for the given dim chain."""
    if len(layer_dims) < 2:
        raise ValueError("need at least input and output dims")
    rng = np.random.default_rng(seed)
    layers = []
    for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
        weight = rng.standard_normal((d_out, d_in)) * np.sqrt(2.0 / d_in)
        layers.append((weight, np.zeros(d_out)))
    return StudentParams(layers)
