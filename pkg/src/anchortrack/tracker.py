"""Query-based tracking by id assignment on top of a recurrent detector.

There is no data association and no motion filter.  A detector output slot
whose confidence reaches ``threshold`` is locked onto a target and gets an
id (a fresh one for current-instance slots or id-less temporal slots, the
inherited one otherwise).  Temporal slots have their confidence decayed
rather than dropped, and the ``num_temporal`` most confident outputs become
the next frame's temporal instances.  Lifecycle management is entirely the
top-k selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, NamedTuple, Optional, Sequence

from .geometry import Anchor3D, EgoPose
from .instance_bank import BankConfig, Instance, init_current, propagate, topk_indices

ModelOutput = Sequence[tuple[float, Anchor3D]]
Model = Callable[[object, list[Instance], list[Instance]], ModelOutput]


@dataclass(frozen=True)
class TrackerConfig:
    threshold: float = 0.25
    decay: float = 0.6

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0, 1), got {self.threshold}")
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay must be in (0, 1), got {self.decay}")


class IdGenerator:
    """Session-scoped monotonically increasing ids."""

    def __init__(self, next_id: int = 0):
        if int(next_id) != next_id or next_id < 0:
            raise ValueError(f"next_id must be a non-negative integer, got {next_id}")
        self.next_id = int(next_id)

    def new(self) -> int:
        out = self.next_id
        self.next_id += 1
        return out

    def __repr__(self):
        return f"IdGenerator(next_id={self.next_id})"


@dataclass(frozen=True)
class TrackFrameResult:
    results: list[Instance]
    updated_temporal: list[Instance]


def track_frame(
    model_out: ModelOutput,
    temporal_in: Sequence[Instance],
    cfg: TrackerConfig,
    ids: IdGenerator,
    bank_cfg: BankConfig,
) -> TrackFrameResult:
    """One frame of id assignment, confidence decay and temporal selection.

    ``model_out[i]`` for ``i < len(temporal_in)`` must be the refined output
    of ``temporal_in[i]``; the remaining ``bank_cfg.num_current`` entries come
    from the current instances.
    """
    n_t = len(temporal_in)
    if n_t > bank_cfg.num_temporal:
        raise ValueError(f"{n_t} temporal instances exceed num_temporal={bank_cfg.num_temporal}")
    if len(model_out) != n_t + bank_cfg.num_current:
        raise ValueError(
            f"model output has {len(model_out)} entries, expected {n_t} temporal + {bank_cfg.num_current} current"
        )
    carried = [t.id for t in temporal_in if t.id is not None]
    if len(set(carried)) != len(carried):
        raise ValueError("duplicate ids among temporal instances")
    if carried and max(carried) >= ids.next_id:
        raise ValueError(f"id generator at {ids.next_id} is behind carried id {max(carried)}")

    results: list[Instance] = []
    confidences: list[float] = []
    slot_ids: list[Optional[int]] = []
    for i, (c, a) in enumerate(model_out):
        c = float(c)
        slot_id = temporal_in[i].id if i < n_t else None
        if c >= cfg.threshold:
            if i >= n_t or slot_id is None:
                slot_id = ids.new()
            results.append(Instance(c, a, slot_id))
        if i < n_t:
            c = max(c, temporal_in[i].confidence * cfg.decay)
        confidences.append(c)
        slot_ids.append(slot_id)

    keep = topk_indices(confidences, min(bank_cfg.num_temporal, len(confidences)))
    updated = [Instance(confidences[i], model_out[i][1], slot_ids[i]) for i in keep]
    return TrackFrameResult(results, updated)


class Frame(NamedTuple):
    index: int
    pose: EgoPose
    payload: object = None


@dataclass
class TrackerState:
    """Everything needed to resume a session: the bank, the id counter and the last pose."""

    temporal: list[Instance] = field(default_factory=list)
    next_id: int = 0
    pose: Optional[EgoPose] = None
    frame_index: int = -1

    def to_dict(self) -> dict:
        return {
            "frame_index": self.frame_index,
            "next_id": self.next_id,
            "pose": None if self.pose is None else self.pose.to_dict(),
            "temporal": [t.to_dict() for t in self.temporal],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrackerState":
        try:
            return cls(
                temporal=[Instance.from_dict(t) for t in d["temporal"]],
                next_id=int(d["next_id"]),
                pose=None if d.get("pose") is None else EgoPose.from_dict(d["pose"]),
                frame_index=int(d.get("frame_index", -1)),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed tracker state: {exc}") from exc


class Tracker:
    """Frame-by-frame driver: propagate the bank, run the model, assign ids."""

    def __init__(
        self,
        model: Model,
        current_anchors: Sequence[Anchor3D],
        cfg: TrackerConfig = TrackerConfig(),
        bank_cfg: BankConfig = BankConfig(),
        state: Optional[TrackerState] = None,
    ):
        self.model = model
        self.cfg = cfg
        self.bank_cfg = bank_cfg
        self.current = init_current(bank_cfg, current_anchors)
        state = state or TrackerState()
        if len(state.temporal) > bank_cfg.num_temporal:
            raise ValueError("resumed bank is larger than num_temporal")
        self._temporal = list(state.temporal)
        self._ids = IdGenerator(state.next_id)
        self._pose = state.pose
        self._frame_index = state.frame_index

    @property
    def state(self) -> TrackerState:
        return TrackerState(list(self._temporal), self._ids.next_id, self._pose, self._frame_index)

    def step(self, frame: Frame) -> TrackFrameResult:
        if self._pose is not None:
            if frame.pose.timestamp <= self._pose.timestamp:
                raise ValueError(
                    f"frame {frame.index} timestamp {frame.pose.timestamp} is not after {self._pose.timestamp}"
                )
            temporal = propagate(self._temporal, self._pose, frame.pose, frame.pose.timestamp - self._pose.timestamp)
        else:
            temporal = list(self._temporal)
        out = self.model(frame.payload, temporal, self.current)
        result = track_frame(out, temporal, self.cfg, self._ids, self.bank_cfg)
        self._temporal = result.updated_temporal
        self._pose = frame.pose
        self._frame_index = frame.index
        return result


def run_session(
    frames: Iterable[Frame],
    model: Model,
    current_anchors: Sequence[Anchor3D],
    cfg: TrackerConfig = TrackerConfig(),
    bank_cfg: BankConfig = BankConfig(),
    state: Optional[TrackerState] = None,
) -> Iterator[TrackFrameResult]:
    tracker = Tracker(model, current_anchors, cfg, bank_cfg, state)
    for frame in frames:
        yield tracker.step(frame)
