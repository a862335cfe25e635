"""Temporal instance denoising samples.

Ground-truth anchors are perturbed into ``M`` groups, each holding two
noise bands per ground truth:

* band 0 ("inner"): every component offset drawn uniformly from ``(-x, x)``
* band 1 ("outer"): every offset magnitude drawn from ``[x, 2x)`` with an
  independent fair sign per component

Positive/negative labels are *not* taken from the band.  Each group is
matched to the ground truth with a min-cost bipartite assignment, so an
outer-band anchor that happens to sit closer to its box than the
inner-band one becomes the positive.

Anchor index layout inside a :class:`NoiseGroupSet` is
``((group * 2) + band) * N + gt_index``.  Groups are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from ._seeding import derive_rng
from .geometry import (
    ANCHOR_DIM,
    CENTER,
    DIMS,
    YAW,
    Anchor3D,
    EgoPose,
    anchors_to_array,
    array_to_anchors,
    transform_anchor_array,
    wrap_yaw,
)

NUM_BANDS = 2
NEGATIVE = -1


@dataclass(frozen=True)
class NoiseConfig:
    num_groups: int = 5
    temporal_groups: int = 3
    # scalar, or one scale per anchor component in [x, y, z, w, l, h, yaw, vx, vy, vz] order
    noise_scale: float | tuple[float, ...] = 0.2
    rng_seed: int = 0
    # matching cost = center distance + yaw_weight * (1 - cos dyaw) + dims_weight * |ddims|_1
    yaw_weight: float = 0.0
    dims_weight: float = 0.0

    def __post_init__(self):
        if int(self.num_groups) != self.num_groups or self.num_groups < 1:
            raise ValueError(f"num_groups must be a positive integer, got {self.num_groups}")
        if int(self.temporal_groups) != self.temporal_groups or not 0 <= self.temporal_groups <= self.num_groups:
            raise ValueError(
                f"temporal_groups must be an integer in [0, num_groups], got {self.temporal_groups}"
            )
        scales = self.scales()
        if not np.all(np.isfinite(scales)) or np.any(scales <= 0):
            raise ValueError("noise scales must be finite and > 0")
        if self.yaw_weight < 0 or self.dims_weight < 0:
            raise ValueError("cost weights must be non-negative")
        if not isinstance(self.noise_scale, (int, float)):
            object.__setattr__(self, "noise_scale", tuple(float(v) for v in scales))

    def scales(self) -> np.ndarray:
        arr = np.asarray(self.noise_scale, dtype=float).reshape(-1)
        if arr.size == 1:
            return np.full(ANCHOR_DIM, float(arr[0]))
        if arr.size != ANCHOR_DIM:
            raise ValueError(f"noise_scale must be a scalar or have {ANCHOR_DIM} entries, got {arr.size}")
        return arr


@dataclass(frozen=True)
class NoiseGroupSet:
    """Noisy anchors plus their (group, band, gt) labels.

    ``positive_gt[n]`` is the ground-truth index anchor ``n`` is positive
    for, or ``-1`` for a negative.  It is ``None`` until
    :func:`assign_noise_groups` has run.
    """

    anchors: np.ndarray
    offsets: np.ndarray
    group: np.ndarray
    band: np.ndarray
    gt_index: np.ndarray
    num_groups: int
    num_gt: int
    positive_gt: np.ndarray | None = None

    def __post_init__(self):
        for name in ("anchors", "offsets", "group", "band", "gt_index", "positive_gt"):
            value = getattr(self, name)
            if value is not None:
                value = np.array(value)
                value.setflags(write=False)
                object.__setattr__(self, name, value)

    def __len__(self) -> int:
        return self.anchors.shape[0]

    def anchor_list(self) -> list[Anchor3D]:
        return array_to_anchors(self.anchors)

    def groups(self) -> list[int]:
        return sorted(set(self.group.tolist()))

    def indices_of_group(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.group == j)

    def positives(self, j: int) -> dict[int, int]:
        """``{gt_index: anchor_index}`` for the positives of group ``j``."""
        if self.positive_gt is None:
            raise ValueError("noise groups have not been assigned yet")
        idx = self.indices_of_group(j)
        return {int(self.positive_gt[n]): int(n) for n in idx if self.positive_gt[n] != NEGATIVE}

    def to_dict(self) -> dict:
        out = {
            "num_groups": self.num_groups,
            "num_gt": self.num_gt,
            "anchors": [],
        }
        for n in range(len(self)):
            rec = {
                "group": int(self.group[n]),
                "band": int(self.band[n]),
                "gt_index": int(self.gt_index[n]),
                "anchor": Anchor3D.from_array(self.anchors[n]).to_dict(),
                "offset": self.offsets[n].tolist(),
            }
            if self.positive_gt is not None:
                pos = int(self.positive_gt[n])
                rec["label"] = "negative" if pos == NEGATIVE else "positive"
                rec["positive_gt"] = None if pos == NEGATIVE else pos
            out["anchors"].append(rec)
        return out


def _strict_uniform(rng: np.random.Generator, low: np.ndarray, high: np.ndarray, shape) -> np.ndarray:
    """Uniform draws with float round-off at either edge excluded."""
    draws = rng.uniform(low, high, size=shape)
    bad = (draws <= low) | (draws >= high)
    while np.any(bad):
        fresh = rng.uniform(low, high, size=shape)
        draws = np.where(bad, fresh, draws)
        bad = (draws <= low) | (draws >= high)
    return draws


def sample_band_offsets(rng: np.random.Generator, scales: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` inner-band and ``n`` outer-band offset rows."""
    shape = (n, scales.size)
    inner = _strict_uniform(rng, -scales, scales, shape)

    magnitude = rng.uniform(scales, 2.0 * scales, size=shape)
    bad = (magnitude < scales) | (magnitude >= 2.0 * scales)
    while np.any(bad):
        magnitude = np.where(bad, rng.uniform(scales, 2.0 * scales, size=shape), magnitude)
        bad = (magnitude < scales) | (magnitude >= 2.0 * scales)
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return inner, sign * magnitude


def generate_noise(gt: Sequence[Anchor3D], cfg: NoiseConfig) -> NoiseGroupSet:
    """Build ``|gt| * M * 2`` noisy anchors around the ground truth."""
    if len(gt) == 0:
        raise ValueError("no ground truth")
    gt_arr = anchors_to_array(gt)
    scales = cfg.scales()
    if np.any(gt_arr[:, DIMS] - 2.0 * scales[DIMS] <= 0):
        raise ValueError("noise scale on dims is too large: outer band could make a box dimension non-positive")

    rng = derive_rng(cfg.rng_seed, "denoising", "offsets")
    n = len(gt)
    anchors, offsets, group, band, gt_index = [], [], [], [], []
    for j in range(cfg.num_groups):
        inner, outer = sample_band_offsets(rng, scales, n)
        for k, off in enumerate((inner, outer)):
            noisy = gt_arr + off
            noisy[:, YAW] = wrap_yaw(noisy[:, YAW])
            anchors.append(noisy)
            offsets.append(off)
            group.append(np.full(n, j))
            band.append(np.full(n, k))
            gt_index.append(np.arange(n))
    return NoiseGroupSet(
        anchors=np.concatenate(anchors),
        offsets=np.concatenate(offsets),
        group=np.concatenate(group),
        band=np.concatenate(band),
        gt_index=np.concatenate(gt_index),
        num_groups=cfg.num_groups,
        num_gt=n,
    )


def matching_cost(anchors: np.ndarray, gt: np.ndarray, yaw_weight: float = 0.0, dims_weight: float = 0.0) -> np.ndarray:
    """Cost matrix of shape ``(len(anchors), len(gt))``."""
    anchors = np.asarray(anchors, dtype=float).reshape(-1, ANCHOR_DIM)
    gt = np.asarray(gt, dtype=float).reshape(-1, ANCHOR_DIM)
    diff = anchors[:, None, CENTER] - gt[None, :, CENTER]
    cost = np.sqrt(np.sum(diff * diff, axis=-1))
    if yaw_weight:
        cost = cost + yaw_weight * (1.0 - np.cos(anchors[:, None, YAW] - gt[None, :, YAW]))
    if dims_weight:
        cost = cost + dims_weight * np.abs(anchors[:, None, DIMS] - gt[None, :, DIMS]).sum(-1)
    return cost


def assign_noise_groups(gs: NoiseGroupSet, gt: Sequence[Anchor3D], cfg: NoiseConfig | None = None) -> NoiseGroupSet:
    """Label each noisy anchor positive/negative by per-group bipartite matching.

    Every ground truth receives exactly one positive per group; the other
    ``N`` anchors of the group are negatives.
    """
    cfg = cfg or NoiseConfig()
    gt_arr = anchors_to_array(gt)
    if gt_arr.shape[0] != gs.num_gt:
        raise ValueError(f"group set was built for {gs.num_gt} ground truths, got {gt_arr.shape[0]}")
    positive = np.full(len(gs), NEGATIVE, dtype=int)
    for j in range(gs.num_groups):
        idx = gs.indices_of_group(j)
        if idx.size == 0:
            raise ValueError(f"group {j} has no anchors")
        cost = matching_cost(gs.anchors[idx], gt_arr, cfg.yaw_weight, cfg.dims_weight)
        rows, cols = linear_sum_assignment(cost)
        positive[idx[rows]] = cols
    return replace(gs, positive_gt=positive)


def select_temporal_groups(gs: NoiseGroupSet, cfg: NoiseConfig) -> tuple[int, ...]:
    """Pick ``cfg.temporal_groups`` distinct groups uniformly without replacement."""
    if cfg.temporal_groups > gs.num_groups:
        raise ValueError("temporal_groups exceeds the number of groups")
    rng = derive_rng(cfg.rng_seed, "denoising", "temporal-groups")
    chosen = rng.choice(gs.num_groups, size=cfg.temporal_groups, replace=False)
    return tuple(sorted(int(j) for j in chosen))


def propagate_noise_groups(
    gs: NoiseGroupSet, selected: Iterable[int], src: EgoPose, dst: EgoPose, dt: float
) -> NoiseGroupSet:
    """Carry the selected groups into the next frame with ego/velocity compensation.

    Labels (group, band, gt index, positive/negative) travel unchanged; no
    fresh noise is added.
    """
    selected = sorted(set(int(j) for j in selected))
    bad = [j for j in selected if not 0 <= j < gs.num_groups]
    if bad:
        raise ValueError(f"unknown group indices {bad}")
    keep = np.isin(gs.group, selected)
    moved = transform_anchor_array(gs.anchors[keep], src, dst, dt) if keep.any() else gs.anchors[keep]
    return NoiseGroupSet(
        anchors=moved,
        offsets=gs.offsets[keep],
        group=gs.group[keep],
        band=gs.band[keep],
        gt_index=gs.gt_index[keep],
        num_groups=gs.num_groups,
        num_gt=gs.num_gt,
        positive_gt=None if gs.positive_gt is None else gs.positive_gt[keep],
    )


def segment_labels(num_normal: int, gs: NoiseGroupSet) -> np.ndarray:
    """Per-query segment id: ``-1`` for normal instances, else the noise group."""
    if num_normal < 0:
        raise ValueError("num_normal must be >= 0")
    return np.concatenate([np.full(num_normal, -1, dtype=int), np.asarray(gs.group, dtype=int)])


def build_attention_mask(num_normal: int, gs: NoiseGroupSet) -> np.ndarray:
    """Boolean self-attention mask, ``True`` meaning attention is allowed.

    Queries are ordered normal instances first, then the noisy anchors in
    ``gs`` order.  Attention is allowed only inside a segment.
    """
    labels = segment_labels(num_normal, gs)
    return labels[:, None] == labels[None, :]
