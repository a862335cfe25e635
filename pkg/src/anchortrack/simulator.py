"""Synthetic scenes and a pseudo-detector standing in for the neural model.

Objects move with constant velocity in a global frame that coincides with
the ego frame at ``t = 0``.  Ground truth is reported in every frame's ego
frame.  :class:`PseudoModel` plays the role of the recurrent detector: it
binds each visible object to an instance slot and emits a (noisy) box and a
confidence for every slot, in the slot order the tracker expects.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ._seeding import derive_rng
from .geometry import (
    ANCHOR_DIM,
    CENTER,
    DIMS,
    VELOCITY,
    YAW,
    Anchor3D,
    EgoPose,
    array_to_anchors,
    transform_anchor_array,
    wrap_yaw,
)
from .instance_bank import Instance

EGO_PATHS = ("static", "straight", "arc", "scripted")


@dataclass(frozen=True)
class ScenarioConfig:
    num_objects: int = 10
    duration_frames: int = 40
    frame_rate: float = 2.0
    # spawn region in the global frame, (xmin, xmax, ymin, ymax); z is fixed at spawn_z
    region: tuple[float, float, float, float] = (-40.0, 40.0, -40.0, 40.0)
    spawn_z: float = 0.0
    speed_range: tuple[float, float] = (0.0, 5.0)
    object_dims: tuple[float, float, float] = (1.9, 4.5, 1.7)
    yaw_aligned: bool = True
    # explicit objects override random spawning: dicts with center/velocity and optional
    # dims, yaw, first_frame, last_frame
    objects: tuple = ()
    ego_path: str = "static"
    ego_speed: float = 5.0
    ego_yaw_rate: float = 0.0
    # scripted ego: one planar (x, y, heading) per frame
    ego_poses: tuple = ()
    noise_center: float = 0.0
    noise_dims: float = 0.0
    noise_yaw: float = 0.0
    noise_velocity: float = 0.0
    dropout_prob: float = 0.0
    # (object_id, frame) pairs that are always missed
    forced_dropouts: tuple = ()
    # confidence a dropped (suppressed) slot emits; None draws it from the unclaimed model
    dropout_conf: Optional[float] = None
    false_positive_rate: float = 0.0
    claimed_conf_mean: float = 0.8
    claimed_conf_std: float = 0.1
    claimed_conf_floor: float = 0.3
    unclaimed_conf_mean: float = 0.05
    unclaimed_conf_std: float = 0.03
    unclaimed_conf_ceiling: float = 0.2
    gate_radius: float = 2.0
    current_gate_radius: Optional[float] = None
    rng_seed: int = 0

    def __post_init__(self):
        if self.duration_frames < 1 or int(self.duration_frames) != self.duration_frames:
            raise ValueError("duration_frames must be a positive integer")
        if self.num_objects < 0 or int(self.num_objects) != self.num_objects:
            raise ValueError("num_objects must be a non-negative integer")
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be > 0")
        xmin, xmax, ymin, ymax = self.region
        if not (xmin < xmax and ymin < ymax):
            raise ValueError(f"empty region {self.region}")
        lo, hi = self.speed_range
        if not 0 <= lo <= hi:
            raise ValueError(f"invalid speed range {self.speed_range}")
        if min(self.object_dims) <= 0:
            raise ValueError("object dims must be positive")
        if self.ego_path not in EGO_PATHS:
            raise ValueError(f"ego_path must be one of {EGO_PATHS}, got {self.ego_path!r}")
        if self.ego_path == "scripted" and len(self.ego_poses) != self.duration_frames:
            raise ValueError("scripted ego path needs one pose per frame")
        for name in ("dropout_prob",):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be a probability")
        for name in ("noise_center", "noise_dims", "noise_yaw", "noise_velocity", "false_positive_rate",
                     "claimed_conf_std", "unclaimed_conf_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("claimed_conf_mean", "claimed_conf_floor", "unclaimed_conf_mean", "unclaimed_conf_ceiling"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.dropout_conf is not None and not 0.0 <= self.dropout_conf <= self.unclaimed_conf_ceiling:
            raise ValueError("dropout_conf must lie in [0, unclaimed_conf_ceiling]")
        if self.unclaimed_conf_ceiling >= self.claimed_conf_floor:
            raise ValueError("unclaimed_conf_ceiling must be below claimed_conf_floor")
        if not self.gate_radius > 0:
            raise ValueError("gate_radius must be > 0")
        # normalise sequence fields to tuples so configs hash and compare by value
        object.__setattr__(self, "region", tuple(float(v) for v in self.region))
        object.__setattr__(self, "speed_range", tuple(float(v) for v in self.speed_range))
        object.__setattr__(self, "object_dims", tuple(float(v) for v in self.object_dims))
        object.__setattr__(self, "ego_poses", tuple(tuple(float(v) for v in p) for p in self.ego_poses))
        object.__setattr__(self, "forced_dropouts", tuple(sorted((int(o), int(f)) for o, f in self.forced_dropouts)))
        object.__setattr__(self, "objects", tuple(dict(o) for o in self.objects))

    @property
    def dt(self) -> float:
        return 1.0 / self.frame_rate

    def to_dict(self) -> dict:
        d = asdict(self)
        d["forced_dropouts"] = [list(p) for p in self.forced_dropouts]
        d["ego_poses"] = [list(p) for p in self.ego_poses]
        d["objects"] = [dict(o) for o in self.objects]
        d["region"] = list(self.region)
        d["speed_range"] = list(self.speed_range)
        d["object_dims"] = list(self.object_dims)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        kwargs = dict(d)
        for name in ("region", "speed_range", "object_dims"):
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        return cls(**kwargs)


class GroundTruthFrame(NamedTuple):
    index: int
    pose: EgoPose
    objects: tuple[tuple[int, Anchor3D], ...]


@dataclass(frozen=True)
class GroundTruthLog:
    config: ScenarioConfig
    frames: tuple[GroundTruthFrame, ...]

    def __len__(self):
        return len(self.frames)


class _ObjectTrack(NamedTuple):
    object_id: int
    state: np.ndarray  # global-frame anchor at t = 0
    first_frame: int
    last_frame: int


def ego_pose_at(cfg: ScenarioConfig, frame: int) -> EgoPose:
    t = frame * cfg.dt
    if cfg.ego_path == "static":
        return EgoPose.identity(t)
    if cfg.ego_path == "straight":
        return EgoPose.planar(cfg.ego_speed * t, 0.0, 0.0, t)
    if cfg.ego_path == "arc":
        w = cfg.ego_yaw_rate
        if abs(w) < 1e-12:
            return EgoPose.planar(cfg.ego_speed * t, 0.0, 0.0, t)
        r = cfg.ego_speed / w
        return EgoPose.planar(r * math.sin(w * t), r * (1.0 - math.cos(w * t)), w * t, t)
    x, y, heading = cfg.ego_poses[frame]
    return EgoPose.planar(x, y, heading, t)


def _spawn_objects(cfg: ScenarioConfig) -> list[_ObjectTrack]:
    last = cfg.duration_frames - 1
    if cfg.objects:
        tracks = []
        for k, entry in enumerate(cfg.objects):
            center = np.asarray(entry["center"], dtype=float)
            velocity = np.asarray(entry.get("velocity", (0.0, 0.0, 0.0)), dtype=float)
            if "yaw" in entry:
                yaw = float(entry["yaw"])
            elif cfg.yaw_aligned and np.hypot(velocity[0], velocity[1]) > 0:
                yaw = math.atan2(velocity[1], velocity[0])
            else:
                yaw = 0.0
            dims = np.asarray(entry.get("dims", cfg.object_dims), dtype=float)
            state = np.concatenate([center, dims, [wrap_yaw(yaw)], velocity])
            tracks.append(_ObjectTrack(int(entry.get("id", k)), state,
                                       int(entry.get("first_frame", 0)), int(entry.get("last_frame", last))))
        ids = [t.object_id for t in tracks]
        if len(set(ids)) != len(ids):
            raise ValueError("scripted object ids must be unique")
        return tracks

    rng = derive_rng(cfg.rng_seed, "simulator", "spawn")
    xmin, xmax, ymin, ymax = cfg.region
    tracks = []
    for k in range(cfg.num_objects):
        x, y = rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)
        speed = rng.uniform(*cfg.speed_range)
        heading = rng.uniform(-math.pi, math.pi)
        velocity = np.array([speed * math.cos(heading), speed * math.sin(heading), 0.0])
        yaw = heading if cfg.yaw_aligned else rng.uniform(-math.pi, math.pi)
        state = np.concatenate([[x, y, cfg.spawn_z], cfg.object_dims, [wrap_yaw(yaw)], velocity])
        tracks.append(_ObjectTrack(k, state, 0, last))
    return tracks


def generate_scenario(cfg: ScenarioConfig) -> GroundTruthLog:
    """Constant-velocity world, reported in each frame's ego frame."""
    tracks = _spawn_objects(cfg)
    world = EgoPose.identity()
    frames = []
    for f in range(cfg.duration_frames):
        pose = ego_pose_at(cfg, f)
        t = f * cfg.dt
        alive = [tr for tr in tracks if tr.first_frame <= f <= tr.last_frame]
        if alive:
            states = np.stack([tr.state for tr in alive])
            local = transform_anchor_array(states, world, pose, t)
            objs = tuple((tr.object_id, a) for tr, a in zip(alive, array_to_anchors(local)))
        else:
            objs = ()
        frames.append(GroundTruthFrame(f, pose, objs))
    return GroundTruthLog(cfg, tuple(frames))


def grid_anchors(n: int, region=(-40.0, 40.0, -40.0, 40.0), dims=(1.9, 4.5, 1.7), z: float = 0.0) -> list[Anchor3D]:
    """``n`` anchors on a near-square grid covering ``region`` (ego frame)."""
    if n < 1:
        raise ValueError("n must be positive")
    xmin, xmax, ymin, ymax = region
    nx = math.ceil(math.sqrt(n))
    ny = math.ceil(n / nx)
    xs = xmin + (np.arange(nx) + 0.5) * (xmax - xmin) / nx
    ys = ymin + (np.arange(ny) + 0.5) * (ymax - ymin) / ny
    pts = [(x, y) for y in ys for x in xs][:n]
    return [Anchor3D((x, y, z), dims) for x, y in pts]


def scenario_current_anchors(cfg: ScenarioConfig, n: int) -> list[Anchor3D]:
    """The fixed current-instance anchors used with a scenario: a grid over its region."""
    return grid_anchors(n, cfg.region, cfg.object_dims, cfg.spawn_z)


def _greedy_pairs(dist: np.ndarray, radius: Optional[float]) -> list[tuple[int, int]]:
    # one-to-one pairs (row, col) in ascending distance, row/col index as tie-break
    rows, cols = np.nonzero(dist <= radius) if radius is not None else np.nonzero(np.isfinite(dist))
    order = np.lexsort((cols, rows, dist[rows, cols]))
    used_r, used_c, pairs = set(), set(), []
    for n in order:
        r, c = int(rows[n]), int(cols[n])
        if r in used_r or c in used_c:
            continue
        used_r.add(r)
        used_c.add(c)
        pairs.append((r, c))
    return pairs


def claim_slots(
    gt_frame: GroundTruthFrame,
    temporal: Sequence[Instance],
    current: Sequence[Instance],
    cfg: ScenarioConfig,
) -> dict[int, int]:
    """Bind objects to slots: ``{object_id: slot_index}``.

    Slot indices follow the model-output order (temporal first).  Temporal
    slots within ``gate_radius`` are claimed first, nearest pair first, with
    id-bearing (tracked) slots ahead of id-less ones; the remaining objects
    take the nearest free current slot.
    """
    if not gt_frame.objects:
        return {}
    obj_ids = [oid for oid, _ in gt_frame.objects]
    centers = np.array([a.center for _, a in gt_frame.objects])
    claims: dict[int, int] = {}
    for tracked in (True, False):
        pool = [k for k, inst in enumerate(temporal) if (inst.id is not None) == tracked]
        rows = [r for r, oid in enumerate(obj_ids) if oid not in claims]
        if not pool or not rows:
            continue
        t_centers = np.array([temporal[k].anchor.center for k in pool])
        dist = np.linalg.norm(centers[rows][:, None, :] - t_centers[None, :, :], axis=-1)
        for r, c in _greedy_pairs(dist, cfg.gate_radius):
            claims[obj_ids[rows[r]]] = pool[c]
    left = [r for r, oid in enumerate(obj_ids) if oid not in claims]
    if left and current:
        c_centers = np.array([i.anchor.center for i in current])
        dist = np.linalg.norm(centers[left][:, None, :] - c_centers[None, :, :], axis=-1)
        for r, c in _greedy_pairs(dist, cfg.current_gate_radius):
            claims[obj_ids[left[r]]] = len(temporal) + c
    return claims


class PseudoModel:
    """Stand-in for the detector forward ``Model(D, I_t, I_cur)``.

    Outputs are a pure function of the ground-truth frame, the input slots
    and ``(rng_seed, frame index)``.
    """

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self._forced = set(cfg.forced_dropouts)

    def __call__(self, gt_frame: GroundTruthFrame, temporal: Sequence[Instance], current: Sequence[Instance]):
        cfg = self.cfg
        slots = list(temporal) + list(current)
        n = len(slots)
        rng = derive_rng(cfg.rng_seed, "pseudo-model", gt_frame.index)

        conf = np.clip(rng.normal(cfg.unclaimed_conf_mean, cfg.unclaimed_conf_std, size=n),
                       0.0, cfg.unclaimed_conf_ceiling)
        anchors: list[Anchor3D] = [s.anchor for s in slots]
        claims = claim_slots(gt_frame, temporal, current, cfg)

        for oid, gt_anchor in gt_frame.objects:
            # fixed draw count per object keeps streams aligned across configs
            c = rng.normal(cfg.claimed_conf_mean, cfg.claimed_conf_std)
            noise = rng.normal(size=ANCHOR_DIM)
            dropped = rng.random() < cfg.dropout_prob or (oid, gt_frame.index) in self._forced
            slot = claims.get(oid)
            if slot is None:
                continue
            anchors[slot] = _perturb(gt_anchor, noise, cfg)
            if not dropped:
                conf[slot] = min(max(c, cfg.claimed_conf_floor), 1.0)
            elif cfg.dropout_conf is not None:
                conf[slot] = cfg.dropout_conf

        n_fp = rng.poisson(cfg.false_positive_rate) if cfg.false_positive_rate > 0 else 0
        claimed = set(claims.values())
        free = [k for k in range(len(temporal), n) if k not in claimed]
        if n_fp and free:
            picks = rng.choice(free, size=min(n_fp, len(free)), replace=False)
            for k in sorted(int(p) for p in picks):
                conf[k] = min(max(rng.normal(cfg.claimed_conf_mean, cfg.claimed_conf_std), cfg.claimed_conf_floor), 1.0)
        return [(float(c), a) for c, a in zip(conf, anchors)]


def _perturb(anchor: Anchor3D, noise: np.ndarray, cfg: ScenarioConfig) -> Anchor3D:
    if not (cfg.noise_center or cfg.noise_dims or cfg.noise_yaw or cfg.noise_velocity):
        return anchor
    arr = anchor.as_array()
    arr[CENTER] += cfg.noise_center * noise[CENTER]
    arr[DIMS] = np.maximum(arr[DIMS] + cfg.noise_dims * noise[DIMS], 0.05)
    arr[YAW] = wrap_yaw(arr[YAW] + cfg.noise_yaw * noise[YAW])
    arr[VELOCITY] += cfg.noise_velocity * noise[VELOCITY]
    return Anchor3D.from_array(arr)


def simulate_tracking(cfg: ScenarioConfig, tracker_cfg=None, bank_cfg=None, log: Optional[GroundTruthLog] = None):
    """Generate (or reuse) ground truth and run the tracker on the pseudo-model.

    Returns ``(log, results)`` with one :class:`TrackFrameResult` per frame.
    """
    from .instance_bank import BankConfig
    from .tracker import Frame, TrackerConfig, run_session

    tracker_cfg = tracker_cfg or TrackerConfig()
    bank_cfg = bank_cfg or BankConfig()
    log = log or generate_scenario(cfg)
    frames = (Frame(f.index, f.pose, f) for f in log.frames)
    results = list(run_session(frames, PseudoModel(cfg), scenario_current_anchors(cfg, bank_cfg.num_current),
                               tracker_cfg, bank_cfg))
    return log, results


class RankingScenario(NamedTuple):
    gt: list  # per frame: list of Anchor3D
    detections: list  # per frame: list of Anchor3D
    confidence: list  # per frame: array of detector confidences
    centerness: list  # per frame: array of predicted centerness


def ranking_scenario(
    num_frames: int = 50,
    num_objects: int = 8,
    center_noise: float = 0.5,
    conf_noise: float = 0.15,
    centerness_noise: float = 0.05,
    seed: int = 0,
) -> RankingScenario:
    """Detections whose confidence says little but whose predicted centerness is accurate.

    Each object gets one detection with an isotropic Gaussian center error.
    Confidence is a high base value plus noise that does not depend on the
    error; predicted centerness is ``exp(-error)`` with a small
    multiplicative perturbation, i.e. a good quality estimator.
    """
    rng = derive_rng(seed, "simulator", "ranking")
    gt, dets, conf, cen = [], [], [], []
    for _ in range(num_frames):
        centers = np.column_stack([rng.uniform(-40, 40, num_objects), rng.uniform(-40, 40, num_objects),
                                   np.zeros(num_objects)])
        errors = rng.normal(scale=center_noise, size=(num_objects, 3))
        errors[:, 2] = 0.0
        dist = np.linalg.norm(errors, axis=1)
        gt.append([Anchor3D(c, (1.9, 4.5, 1.7)) for c in centers])
        dets.append([Anchor3D(c + e, (1.9, 4.5, 1.7)) for c, e in zip(centers, errors)])
        conf.append(np.clip(0.7 + conf_noise * rng.normal(size=num_objects), 0.0, 1.0))
        cen.append(np.clip(np.exp(-dist) * np.exp(centerness_noise * rng.normal(size=num_objects)), 0.0, 1.0))
    return RankingScenario(gt, dets, conf, cen)
