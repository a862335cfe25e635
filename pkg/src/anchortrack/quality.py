"""Box-quality targets (centerness, yawness), their losses, and ranking scores."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Anchor3D

EPS = 1e-7


@dataclass(frozen=True)
class QualityTargets:
    centerness: float
    yawness: float

    def __post_init__(self):
        if not 0.0 < self.centerness <= 1.0:
            raise ValueError(f"centerness must be in (0, 1], got {self.centerness}")
        if not -1.0 <= self.yawness <= 1.0:
            raise ValueError(f"yawness must be in [-1, 1], got {self.yawness}")


@dataclass(frozen=True)
class QualityLossWeights:
    ce_weight: float = 1.0
    focal_weight: float = 1.0

    def __post_init__(self):
        for name in ("ce_weight", "focal_weight"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")


def _center(x):
    return np.asarray(x.center if isinstance(x, Anchor3D) else x, dtype=float)


def centerness(pred, gt):
    """``exp(-||c_pred - c_gt||)``; accepts anchors or ``(…, 3)`` center arrays."""
    d = np.linalg.norm(_center(pred) - _center(gt), axis=-1)
    out = np.exp(-d)
    return float(out) if np.ndim(out) == 0 else out


def yawness(pred_yaw, gt_yaw):
    """Dot product of the ``(sin, cos)`` heading encodings."""
    pred_yaw = np.asarray(pred_yaw, dtype=float)
    gt_yaw = np.asarray(gt_yaw, dtype=float)
    out = np.sin(pred_yaw) * np.sin(gt_yaw) + np.cos(pred_yaw) * np.cos(gt_yaw)
    out = np.clip(out, -1.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def quality_targets(pred: Anchor3D, gt: Anchor3D) -> QualityTargets:
    return QualityTargets(centerness(pred, gt), yawness(pred.yaw, gt.yaw))


def _xlogy(x, y):
    return 0.0 if x == 0.0 else x * math.log(y)


def _bce(p: float, t: float) -> float:
    return -(_xlogy(t, p) + _xlogy(1.0 - t, 1.0 - p))


def _bce_grad(p: float, t: float) -> float:
    return -t / p + (1.0 - t) / (1.0 - p)


def soft_cross_entropy(p: float, t: float, eps: float = EPS) -> tuple[float, float]:
    """Binary cross-entropy against a soft target, offset by the target entropy.

    The offset makes the loss vanish at ``p == t``; the gradient is the plain
    BCE gradient. Returns ``(loss, dloss/dp)``.
    """
    pc = min(max(p, eps), 1.0 - eps)
    loss = max(_bce(pc, t) - _bce(t, t), 0.0)
    grad = _bce_grad(pc, t) if eps < p < 1.0 - eps else 0.0
    return loss, grad


def focal_loss(p: float, t: float, gamma: float = 2.0, alpha: float = 0.25, eps: float = EPS) -> tuple[float, float]:
    """Continuous-target binary focal loss ``-a |t-p|^g (t log p + (1-t) log(1-p))``.

    Returns ``(loss, dloss/dp)``.
    """
    pc = min(max(p, eps), 1.0 - eps)
    gap = abs(t - pc)
    mod = gap**gamma
    h = _xlogy(t, pc) + _xlogy(1.0 - t, 1.0 - pc)
    loss = -alpha * mod * h
    if not eps < p < 1.0 - eps:
        return loss, 0.0
    if gap == 0.0:
        dmod = 0.0
    else:
        dmod = gamma * gap ** (gamma - 1.0) * math.copysign(1.0, pc - t)
    dh = t / pc - (1.0 - t) / (1.0 - pc)
    return loss, -alpha * (dmod * h + mod * dh)


def quality_loss_and_grad(
    c_pred: float,
    y_pred: float,
    targets: QualityTargets,
    weights: QualityLossWeights = QualityLossWeights(),
    focal_gamma: float = 2.0,
    focal_alpha: float = 0.25,
    pairing: str = "focal_centerness",
) -> tuple[float, float, float]:
    """Quality loss and its partial derivatives ``(L, dL/dc_pred, dL/dy_pred)``.

    With ``pairing="focal_centerness"`` (default) yawness gets the cross-entropy term
    and centerness the focal term.  ``pairing="focal_yawness"`` swaps them.  Yawness
    lives in ``[-1, 1]`` and is mapped to ``[0, 1]`` by ``(y + 1) / 2`` on
    both prediction and target before its loss.
    """
    for name, v in (("c_pred", c_pred), ("y_pred", y_pred), ("centerness", targets.centerness), ("yawness", targets.yawness)):
        if not math.isfinite(v):
            raise ValueError(f"{name} is not finite: {v}")
    if pairing not in ("focal_centerness", "focal_yawness"):
        raise ValueError(f"unknown pairing {pairing!r}")

    q_pred = (y_pred + 1.0) / 2.0
    q_target = (targets.yawness + 1.0) / 2.0
    if pairing == "focal_centerness":
        lc, gc = focal_loss(c_pred, targets.centerness, focal_gamma, focal_alpha)
        ly, gq = soft_cross_entropy(q_pred, q_target)
        loss = weights.ce_weight * ly + weights.focal_weight * lc
        return loss, weights.focal_weight * gc, weights.ce_weight * gq * 0.5
    ly, gq = focal_loss(q_pred, q_target, focal_gamma, focal_alpha)
    lc, gc = soft_cross_entropy(c_pred, targets.centerness)
    loss = weights.ce_weight * lc + weights.focal_weight * ly
    return loss, weights.ce_weight * gc, weights.focal_weight * gq * 0.5


def quality_loss(
    c_pred: float,
    y_pred: float,
    targets: QualityTargets,
    weights: QualityLossWeights = QualityLossWeights(),
    focal_gamma: float = 2.0,
    focal_alpha: float = 0.25,
    pairing: str = "focal_centerness",
) -> float:
    return quality_loss_and_grad(c_pred, y_pred, targets, weights, focal_gamma, focal_alpha, pairing)[0]


def ranking_score(confidence, c_pred):
    """Detection score used for ranking: confidence times predicted centerness."""
    out = np.asarray(confidence, dtype=float) * np.asarray(c_pred, dtype=float)
    return float(out) if np.ndim(out) == 0 else out
