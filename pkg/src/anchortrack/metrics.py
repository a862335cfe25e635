"""Tracking and detection metrics with center-distance matching.

Conventions (inherited from the usual 3D MOT evaluators, not invented here):

* a track box and a ground-truth box match when their centers are within
  ``radius`` meters; matching is greedy in ascending distance, one-to-one
  per frame
* an id switch is counted when a ground-truth object is matched to a
  different track id than at its previous matched frame
* AMOTA averages MOTAR over a grid of target recalls.  For a target recall
  ``r`` the evaluator uses the strictest confidence cutoff whose recall is
  at least ``r``; recalls no cutoff reaches score MOTAR 0 and MOTP
  ``radius`` (the worst value)
* MOTAR is evaluated with the recall the selected cutoff actually
  achieves, which keeps it in ``[0, 1]`` when the cutoff overshoots ``r``
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import Anchor3D
from .instance_bank import Instance

GtFrame = Sequence[tuple[Hashable, Anchor3D]]


def default_recall_grid(n: int = 40, start: float = 0.05) -> tuple[float, ...]:
    return tuple(np.linspace(start, 1.0, n).round(12).tolist())


@dataclass(frozen=True)
class MatchConfig:
    radius: float = 2.0
    recall_thresholds: tuple[float, ...] = field(default_factory=default_recall_grid)
    matcher: str = "greedy"
    # "box": cut on each box's own confidence; "track_mean": cut on the mean confidence of its track
    score_mode: str = "box"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        r = tuple(float(x) for x in self.recall_thresholds)
        if not r or any(not 0 < x <= 1 for x in r) or list(r) != sorted(r):
            raise ValueError("recall thresholds must be sorted and lie in (0, 1]")
        object.__setattr__(self, "recall_thresholds", r)
        if self.matcher not in ("greedy", "hungarian"):
            raise ValueError(f"unknown matcher {self.matcher!r}")
        if self.score_mode not in ("box", "track_mean"):
            raise ValueError(f"unknown score_mode {self.score_mode!r}")


@dataclass(frozen=True)
class FrameMatching:
    pairs: tuple[tuple[Hashable, Hashable, float], ...]  # (track id, gt id, distance)
    fp: int
    fn: int

    @property
    def tp(self) -> int:
        return len(self.pairs)


def _centers(items) -> np.ndarray:
    if not items:
        return np.zeros((0, 3))
    return np.array([a.center for a in items])


def _greedy(dist: np.ndarray, radius: float) -> list[tuple[int, int]]:
    rows, cols = np.nonzero(dist <= radius)
    order = np.lexsort((cols, rows, dist[rows, cols]))
    used_r, used_c, out = set(), set(), []
    for n in order:
        r, c = int(rows[n]), int(cols[n])
        if r not in used_r and c not in used_c:
            used_r.add(r)
            used_c.add(c)
            out.append((r, c))
    return out


def _hungarian(dist: np.ndarray, radius: float) -> list[tuple[int, int]]:
    if dist.size == 0:
        return []
    big = radius * 10.0 + 1.0
    cost = np.where(dist <= radius, dist, big)
    rows, cols = linear_sum_assignment(cost)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols) if dist[r, c] <= radius)


def match_frame(tracks: Sequence[Instance], gt: GtFrame, cfg: MatchConfig = MatchConfig()) -> FrameMatching:
    dist = np.linalg.norm(_centers([t.anchor for t in tracks])[:, None, :] - _centers([a for _, a in gt])[None, :, :], axis=-1)
    return _match_from_dist(dist, [t.id for t in tracks], [g for g, _ in gt], cfg)


def _match_from_dist(dist, track_ids, gt_ids, cfg: MatchConfig) -> FrameMatching:
    pairs_idx = (_greedy if cfg.matcher == "greedy" else _hungarian)(dist, cfg.radius)
    pairs = tuple((track_ids[r], gt_ids[c], float(dist[r, c])) for r, c in pairs_idx)
    return FrameMatching(pairs, fp=len(track_ids) - len(pairs), fn=len(gt_ids) - len(pairs))


def count_id_switches(matchings: Sequence[FrameMatching]) -> int:
    last: dict = {}
    switches = 0
    for m in matchings:
        for track_id, gt_id, _ in m.pairs:
            if gt_id in last and last[gt_id] != track_id:
                switches += 1
            last[gt_id] = track_id
    return switches


def mota_motp(matchings: Sequence[FrameMatching], gt_total: int) -> tuple[float, float]:
    """``MOTA = 1 - (FP + FN + IDS) / gt_total``; MOTP is the mean matched distance (NaN if nothing matched)."""
    if gt_total <= 0:
        raise ValueError("gt_total must be positive")
    fp = sum(m.fp for m in matchings)
    fn = sum(m.fn for m in matchings)
    ids = count_id_switches(matchings)
    dists = [d for m in matchings for _, _, d in m.pairs]
    motp = float(np.mean(dists)) if dists else float("nan")
    return 1.0 - (fp + fn + ids) / gt_total, motp


def motar(ids: int, fp: int, fn: int, recall: float, gt_total: int) -> float:
    """``max(0, 1 - (IDS + FP + FN - (1 - r) P) / (r P))``."""
    return max(0.0, 1.0 - (ids + fp + fn - (1.0 - recall) * gt_total) / (recall * gt_total))


@dataclass(frozen=True)
class CutoffStats:
    cutoff: float
    tp: int
    fp: int
    fn: int
    ids: int
    recall: float
    mota: float
    motp: float


def _box_scores(track_log: Sequence[Sequence[Instance]], mode: str) -> list[np.ndarray]:
    if mode == "box":
        return [np.array([t.confidence for t in frame], dtype=float) for frame in track_log]
    per_id: dict = {}
    for frame in track_log:
        for t in frame:
            per_id.setdefault(t.id, []).append(t.confidence)
    mean = {k: float(np.mean(v)) for k, v in per_id.items()}
    return [np.array([mean[t.id] for t in frame], dtype=float) for frame in track_log]


def cutoff_sweep(track_log, gt_log, cfg: MatchConfig = MatchConfig()) -> list[CutoffStats]:
    """Counts for every distinct confidence cutoff, strictest first."""
    if len(track_log) != len(gt_log):
        raise ValueError(f"{len(track_log)} track frames but {len(gt_log)} ground-truth frames")
    gt_total = sum(len(g) for g in gt_log)
    if gt_total == 0:
        raise ValueError("empty ground truth")
    scores = _box_scores(track_log, cfg.score_mode)
    dists = [
        np.linalg.norm(_centers([t.anchor for t in tr])[:, None, :] - _centers([a for _, a in g])[None, :, :], axis=-1)
        for tr, g in zip(track_log, gt_log)
    ]
    track_ids = [[t.id for t in tr] for tr in track_log]
    gt_ids = [[gid for gid, _ in g] for g in gt_log]

    all_scores = np.concatenate(scores) if scores else np.zeros(0)
    out = []
    for cutoff in np.unique(all_scores)[::-1]:
        matchings = []
        for s, d, tids, gids in zip(scores, dists, track_ids, gt_ids):
            keep = np.flatnonzero(s >= cutoff)
            matchings.append(_match_from_dist(d[keep], [tids[k] for k in keep], gids, cfg))
        tp = sum(m.tp for m in matchings)
        mota, motp = mota_motp(matchings, gt_total)
        out.append(CutoffStats(float(cutoff), tp, sum(m.fp for m in matchings), sum(m.fn for m in matchings),
                               count_id_switches(matchings), tp / gt_total, mota, motp))
    return out


def _select(sweep: list[CutoffStats], recall: float) -> Optional[CutoffStats]:
    # strictest cutoff (sweep is ordered strictest first) reaching the target recall
    for st in sweep:
        if st.recall >= recall - 1e-12:
            return st
    return None


def amota_amotp(track_log, gt_log, cfg: MatchConfig = MatchConfig()) -> tuple[float, float]:
    summary = evaluate_tracking(track_log, gt_log, cfg)
    return summary["AMOTA"], summary["AMOTP"]


def evaluate_tracking(track_log, gt_log, cfg: MatchConfig = MatchConfig()) -> dict:
    """Full tracking summary.

    ``AMOTA``/``AMOTP`` are recall-averaged.  ``MOTA``, ``MOTP``, ``IDS``,
    ``Recall`` and ``MOTAR`` are reported at the recall-grid cutoff with the
    best MOTA (ties go to the higher recall); if no grid recall is reachable
    they are reported with every track kept.
    """
    sweep = cutoff_sweep(track_log, gt_log, cfg)
    gt_total = sum(len(g) for g in gt_log)
    motars, motps, chosen = [], [], []
    for r in cfg.recall_thresholds:
        st = _select(sweep, r)
        if st is None:
            motars.append(0.0)
            motps.append(cfg.radius)
            continue
        motars.append(motar(st.ids, st.fp, st.fn, st.recall, gt_total))
        motps.append(st.motp)
        chosen.append((st, r, motars[-1]))

    if chosen:
        best, best_r, best_motar = max(chosen, key=lambda x: (x[0].mota, x[0].recall))
    else:
        best = sweep[-1] if sweep else CutoffStats(float("inf"), 0, 0, gt_total, 0, 0.0, 0.0, float("nan"))
        best_r = best.recall
        best_motar = motar(best.ids, best.fp, best.fn, best_r, gt_total) if best_r > 0 else 0.0
    return {
        "AMOTA": float(np.mean(motars)),
        "AMOTP": float(np.mean(motps)),
        "IDS": int(best.ids),
        "Recall": float(best.recall),
        "MOTA": float(best.mota),
        "MOTP": None if np.isnan(best.motp) else float(best.motp),
        "MOTAR": float(best_motar),
        "TP": int(best.tp),
        "FP": int(best.fp),
        "FN": int(best.fn),
        "gt_total": int(gt_total),
        "score_cutoff": None if not np.isfinite(best.cutoff) else float(best.cutoff),
    }


def detection_pr(dets, gt, radius: float = 2.0) -> dict:
    """Score-ranked precision/recall sweep and trapezoidal AP.

    ``dets`` holds per-frame lists of ``(score, anchor)``; ``gt`` per-frame
    lists of anchors.  Detections are visited in descending score order and
    take the nearest unmatched ground truth in their frame within
    ``radius``.
    """
    if len(dets) != len(gt):
        raise ValueError(f"{len(dets)} detection frames but {len(gt)} ground-truth frames")
    gt_total = sum(len(g) for g in gt)
    flat = [(float(s), f, k, a) for f, frame in enumerate(dets) for k, (s, a) in enumerate(frame)]
    flat.sort(key=lambda x: (-x[0], x[1], x[2]))
    gt_centers = [_centers(g) for g in gt]
    taken = [np.zeros(len(g), dtype=bool) for g in gt]
    hits = []
    for _, f, _, a in flat:
        ok = False
        if len(gt[f]):
            d = np.linalg.norm(gt_centers[f] - np.asarray(a.center), axis=1)
            d[taken[f]] = np.inf
            j = int(np.argmin(d))
            if d[j] <= radius:
                taken[f][j] = True
                ok = True
        hits.append(ok)
    hits = np.array(hits, dtype=bool)
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1) if len(hits) else np.zeros(0)
    recall = tp / gt_total if gt_total else np.zeros(len(hits))
    if len(hits) == 0 or gt_total == 0:
        ap = 0.0
    else:
        ap = float(np.trapezoid(np.concatenate([[precision[0]], precision]), np.concatenate([[0.0], recall])))
    return {"precision": precision, "recall": recall, "scores": np.array([x[0] for x in flat]), "ap": ap}
