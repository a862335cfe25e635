"""Sparse query-based 3D detection and tracking machinery on numpy.

Anchors and ego poses (:mod:`.geometry`), temporal denoising groups
(:mod:`.denoising`), quality targets and losses (:mod:`.quality`),
decoupled attention (:mod:`.attention`), the instance bank and tracker
(:mod:`.instance_bank`, :mod:`.tracker`), a synthetic scene simulator
(:mod:`.simulator`) and tracking metrics (:mod:`.metrics`).
"""

__version__ = "0.1.0"

from .geometry import Anchor3D, EgoPose, transform_anchor, transform_anchors
from .instance_bank import BankConfig, Instance
from .metrics import MatchConfig, evaluate_tracking
from .simulator import PseudoModel, ScenarioConfig, generate_scenario
from .tracker import Tracker, TrackerConfig, TrackerState, run_session, track_frame

__all__ = [
    "Anchor3D",
    "BankConfig",
    "EgoPose",
    "Instance",
    "MatchConfig",
    "PseudoModel",
    "ScenarioConfig",
    "Tracker",
    "TrackerConfig",
    "TrackerState",
    "evaluate_tracking",
    "generate_scenario",
    "run_session",
    "track_frame",
    "transform_anchor",
    "transform_anchors",
]
