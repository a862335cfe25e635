"""3D anchor algebra: boxes with velocity, ego poses and frame transforms.

An anchor is stored as ``(center, dims, yaw, velocity)``.  The flat array
layout used throughout the package is::

    [x, y, z, w, l, h, yaw, vx, vy, vz]

and the encoded layout fed to networks replaces ``yaw`` by ``sin, cos``::

    [x, y, z, w, l, h, sin(yaw), cos(yaw), vx, vy, vz]
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ANCHOR_DIM = 10
ENCODED_DIM = 11

# slices into the flat (…, 10) layout
CENTER = slice(0, 3)
DIMS = slice(3, 6)
YAW = 6
VELOCITY = slice(7, 10)

ORTHONORMAL_TOL = 1e-9


def wrap_yaw(yaw):
    """Wrap angles to ``(-pi, pi]``. Works on scalars and arrays.

    In-range values are returned unchanged, so wrapping is idempotent.
    """
    yaw = np.asarray(yaw, dtype=float)
    inside = (yaw > -math.pi) & (yaw <= math.pi)
    wrapped = np.where(inside, yaw, math.pi - np.mod(math.pi - yaw, 2.0 * math.pi))
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def yaw_to_unit(yaw):
    """Return ``(sin yaw, cos yaw)``; the last axis has length 2 for array input."""
    yaw = np.asarray(yaw, dtype=float)
    out = np.stack([np.sin(yaw), np.cos(yaw)], axis=-1)
    return out


def _vec3(values, name: str) -> tuple[float, float, float]:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return (float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class Anchor3D:
    """Immutable box state. ``dims`` is ``(w, l, h)``, yaw is wrapped on construction."""

    center: tuple[float, float, float]
    dims: tuple[float, float, float]
    yaw: float = 0.0
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        dims = _vec3(self.dims, "dims")
        if min(dims) <= 0.0:
            raise ValueError(f"dims must be strictly positive, got {dims}")
        object.__setattr__(self, "dims", dims)
        yaw = float(self.yaw)
        if not math.isfinite(yaw):
            raise ValueError("yaw must be finite")
        object.__setattr__(self, "yaw", wrap_yaw(yaw))
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))

    def as_array(self) -> np.ndarray:
        return np.array([*self.center, *self.dims, self.yaw, *self.velocity])

    @classmethod
    def from_array(cls, arr) -> "Anchor3D":
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (ANCHOR_DIM,):
            raise ValueError(f"expected a length-{ANCHOR_DIM} anchor array, got shape {arr.shape}")
        return cls(tuple(arr[CENTER]), tuple(arr[DIMS]), float(arr[YAW]), tuple(arr[VELOCITY]))

    def encoded(self) -> np.ndarray:
        return encode_anchor_array(self.as_array())

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "dims": list(self.dims),
            "yaw": self.yaw,
            "velocity": list(self.velocity),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Anchor3D":
        try:
            return cls(d["center"], d["dims"], d.get("yaw", 0.0), d.get("velocity", (0.0, 0.0, 0.0)))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed anchor record: {exc}") from exc

    def replace(self, **changes) -> "Anchor3D":
        fields = {"center": self.center, "dims": self.dims, "yaw": self.yaw, "velocity": self.velocity}
        fields.update(changes)
        return Anchor3D(**fields)


def anchors_to_array(anchors: Iterable[Anchor3D]) -> np.ndarray:
    rows = [a.as_array() for a in anchors]
    if not rows:
        return np.zeros((0, ANCHOR_DIM))
    return np.stack(rows)


def array_to_anchors(arr) -> list[Anchor3D]:
    arr = np.asarray(arr, dtype=float).reshape(-1, ANCHOR_DIM)
    return [Anchor3D(tuple(r[CENTER]), tuple(r[DIMS]), float(r[YAW]), tuple(r[VELOCITY])) for r in arr]


def encode_anchor_array(arr) -> np.ndarray:
    """Map a ``(…, 10)`` anchor array to the ``(…, 11)`` sin/cos layout."""
    arr = np.asarray(arr, dtype=float)
    unit = yaw_to_unit(arr[..., YAW])
    return np.concatenate([arr[..., :6], unit, arr[..., VELOCITY]], axis=-1)


def center_distance(a, b) -> float:
    """Euclidean distance between box centers (anchors or raw 3-vectors)."""
    ca = np.asarray(a.center if isinstance(a, Anchor3D) else a, dtype=float)
    cb = np.asarray(b.center if isinstance(b, Anchor3D) else b, dtype=float)
    return float(np.linalg.norm(ca - cb))


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class EgoPose:
    """Ego-to-global rigid transform at a timestamp.

    A point ``p`` in the ego frame maps to ``rotation @ p + translation`` in
    the global frame.
    """

    rotation: np.ndarray
    translation: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=float)
        trans = np.array(self.translation, dtype=float).reshape(-1)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if trans.shape != (3,):
            raise ValueError(f"translation must have 3 components, got {trans.shape}")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise ValueError("pose must be finite")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > ORTHONORMAL_TOL:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > ORTHONORMAL_TOL:
            raise ValueError("rotation must have determinant +1")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)
        object.__setattr__(self, "timestamp", float(self.timestamp))

    @classmethod
    def identity(cls, timestamp: float = 0.0) -> "EgoPose":
        return cls(np.eye(3), np.zeros(3), timestamp)

    @classmethod
    def planar(cls, x: float, y: float, heading: float, timestamp: float = 0.0) -> "EgoPose":
        return cls(rotation_z(heading), np.array([x, y, 0.0]), timestamp)

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EgoPose":
        try:
            return cls(d["rotation"], d["translation"], d.get("timestamp", 0.0))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed pose record: {exc}") from exc

    def __eq__(self, other):
        if not isinstance(other, EgoPose):
            return NotImplemented
        return (
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
            and self.timestamp == other.timestamp
        )

    __hash__ = None


def _heading_yaw(rotation: np.ndarray, yaw: np.ndarray) -> np.ndarray:
    # rotate the planar heading vector and read its angle back
    heading = np.stack([np.cos(yaw), np.sin(yaw), np.zeros_like(yaw)], axis=-1)
    rotated = heading @ rotation.T
    return wrap_yaw(np.arctan2(rotated[..., 1], rotated[..., 0]))


def transform_anchor_array(arr, src: EgoPose, dst: EgoPose, dt: float = 0.0) -> np.ndarray:
    """Batch version of :func:`transform_anchor` over a ``(n, 10)`` array."""
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    arr = np.asarray(arr, dtype=float)
    if arr.shape[-1:] != (ANCHOR_DIM,) or arr.ndim > 2:
        raise ValueError(f"expected anchors of shape (n, {ANCHOR_DIM}), got {arr.shape}")
    single = arr.ndim == 1
    arr = arr.reshape(-1, ANCHOR_DIM)
    if src == dst and dt == 0:
        return (arr[0] if single else arr).copy()
    velocity_global = arr[:, VELOCITY] @ src.rotation.T
    center_global = arr[:, CENTER] @ src.rotation.T + src.translation + velocity_global * dt
    rel = dst.rotation.T @ src.rotation

    out = arr.copy()
    out[:, CENTER] = (center_global - dst.translation) @ dst.rotation
    out[:, VELOCITY] = velocity_global @ dst.rotation
    out[:, YAW] = _heading_yaw(rel, arr[:, YAW])
    return out[0] if single else out


def transform_anchor(a: Anchor3D, src: EgoPose, dst: EgoPose, dt: float = 0.0) -> Anchor3D:
    """Move an anchor from the ``src`` ego frame into the ``dst`` ego frame.

    The center is advanced by ``velocity * dt`` in the global frame
    (constant-velocity model) before being re-expressed in ``dst``.  Yaw and
    velocity are rotated by the relative ego rotation; dims are untouched.
    """
    if src == dst and dt == 0:
        return a
    return Anchor3D.from_array(transform_anchor_array(a.as_array(), src, dst, dt))


def transform_anchors(anchors: Sequence[Anchor3D], src: EgoPose, dst: EgoPose, dt: float = 0.0) -> list[Anchor3D]:
    if not anchors:
        return []
    if src == dst and dt == 0:
        return list(anchors)
    return array_to_anchors(transform_anchor_array(anchors_to_array(anchors), src, dst, dt))
