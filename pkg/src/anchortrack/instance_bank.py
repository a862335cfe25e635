"""Current/temporal instance sets carried from frame to frame."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import Anchor3D, EgoPose, anchors_to_array, array_to_anchors, transform_anchor_array


@dataclass(frozen=True)
class Instance:
    confidence: float
    anchor: Anchor3D
    id: Optional[int] = None

    def __post_init__(self):
        c = float(self.confidence)
        if not 0.0 <= c <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {c}")
        object.__setattr__(self, "confidence", c)
        if self.id is not None:
            if int(self.id) != self.id or self.id < 0:
                raise ValueError(f"id must be a non-negative integer, got {self.id}")
            object.__setattr__(self, "id", int(self.id))

    def to_dict(self) -> dict:
        return {"confidence": self.confidence, "id": self.id, "anchor": self.anchor.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Instance":
        try:
            return cls(d["confidence"], Anchor3D.from_dict(d["anchor"]), d.get("id"))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed instance record: {exc}") from exc


@dataclass(frozen=True)
class BankConfig:
    num_current: int = 900
    num_temporal: int = 600

    def __post_init__(self):
        for name in ("num_current", "num_temporal"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value}")


def init_current(cfg: BankConfig, anchor_seed: Sequence[Anchor3D]) -> list[Instance]:
    """Id-less, zero-confidence instances on caller-supplied anchors."""
    if len(anchor_seed) != cfg.num_current:
        raise ValueError(f"expected {cfg.num_current} seed anchors, got {len(anchor_seed)}")
    return [Instance(0.0, a) for a in anchor_seed]


def propagate(temporal: Sequence[Instance], src: EgoPose, dst: EgoPose, dt: float) -> list[Instance]:
    """Ego-pose and velocity compensation; confidence and id are kept verbatim."""
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    if not temporal:
        return []
    if src == dst and dt == 0:
        return list(temporal)
    moved = array_to_anchors(transform_anchor_array(anchors_to_array(i.anchor for i in temporal), src, dst, dt))
    return [Instance(inst.confidence, a, inst.id) for inst, a in zip(temporal, moved)]


def topk_indices(confidences: Sequence[float], k: int) -> list[int]:
    """Indices of the ``k`` largest confidences, ties broken by lower index."""
    conf = np.asarray(confidences, dtype=float)
    if k > conf.size:
        raise ValueError(f"cannot select {k} of {conf.size} instances")
    if k < 0:
        raise ValueError("k must be non-negative")
    # lexsort sorts by the last key first; stable on index
    order = np.lexsort((np.arange(conf.size), -conf))
    return order[:k].tolist()


def select_topk(scored: Sequence[Instance], k: int) -> list[Instance]:
    """The ``k`` highest-confidence instances, in descending confidence order."""
    return [scored[i] for i in topk_indices([s.confidence for s in scored], k)]
