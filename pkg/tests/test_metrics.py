import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anchortrack.geometry import Anchor3D
from anchortrack.instance_bank import Instance
from anchortrack.metrics import (
    FrameMatching,
    MatchConfig,
    amota_amotp,
    count_id_switches,
    cutoff_sweep,
    default_recall_grid,
    detection_pr,
    evaluate_tracking,
    match_frame,
    mota_motp,
    motar,
)
from anchortrack.quality import ranking_score
from anchortrack.simulator import ranking_scenario

from oracles import brute_force_tracking_metrics, reference_greedy_match


def box(x, y=0.0):
    return Anchor3D((float(x), float(y), 0.0), (1, 1, 1))


def trk(tid, x, c=1.0, y=0.0):
    return Instance(c, box(x, y), tid)


def to_oracle(track_log, gt_log):
    tl = [[(t.confidence, t.id, t.anchor.center) for t in f] for f in track_log]
    gl = [[(g, a.center) for g, a in f] for f in gt_log]
    return tl, gl


class TestConfig:
    def test_grid(self):
        g = default_recall_grid()
        assert len(g) == 40 and g[0] == 0.05 and g[-1] == 1.0

    @pytest.mark.parametrize("kw", [{"radius": 0}, {"recall_thresholds": (0.5, 0.2)}, {"recall_thresholds": ()},
                                    {"matcher": "lp"}, {"score_mode": "max"}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            MatchConfig(**kw)


class TestMatchFrame:
    def test_examples(self):
        m = match_frame([], [(0, box(0)), (1, box(5))])
        assert (m.tp, m.fp, m.fn) == (0, 0, 2)
        m = match_frame([trk(7, 1.9)], [(0, box(0))])
        assert m.pairs == ((7, 0, pytest.approx(1.9)),)
        m = match_frame([trk(7, 2.1)], [(0, box(0))])
        assert (m.tp, m.fp, m.fn) == (0, 1, 1)

    def test_greedy_differs_from_optimal(self):
        tracks = [trk(0, 1.2), trk(1, -1.5)]
        gts = [(10, box(0.0)), (11, box(2.5))]
        greedy = match_frame(tracks, gts, MatchConfig(radius=2.0))
        opt = match_frame(tracks, gts, MatchConfig(radius=2.0, matcher="hungarian"))
        assert greedy.tp == 1 and opt.tp == 2

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.floats(-4, 4), st.floats(-4, 4)), max_size=5),
           st.lists(st.tuples(st.floats(-4, 4), st.floats(-4, 4)), max_size=5))
    def test_matches_reference_greedy(self, tpos, gpos):
        tracks = [trk(k, x, 1.0, y) for k, (x, y) in enumerate(tpos)]
        gts = [(100 + k, box(x, y)) for k, (x, y) in enumerate(gpos)]
        m = match_frame(tracks, gts)
        pairs, fp, fn = reference_greedy_match([(1.0, t.id, t.anchor.center) for t in tracks],
                                               [(g, a.center) for g, a in gts], 2.0)
        assert sorted((a, b) for a, b, _ in m.pairs) == sorted((a, b) for a, b, _ in pairs)
        assert (m.fp, m.fn) == (fp, fn)
        assert len({a for a, _, _ in m.pairs}) == m.tp and all(d <= 2.0 for _, _, d in m.pairs)


class TestCounts:
    def test_id_switch_examples(self):
        same = [FrameMatching(((1, 0, 0.0),), 0, 0)] * 3
        assert count_id_switches(same) == 0
        swapped = [FrameMatching(((1, 0, 0.0),), 0, 0), FrameMatching(((2, 0, 0.0),), 0, 0)]
        assert count_id_switches(swapped) == 1

    def test_hand_counted_reid(self):
        # object 0 tracked as 1, occluded in frames 2-3, re-acquired as 4; object 1 steady as 2
        tracks = [[trk(1, 0), trk(2, 10)], [trk(1, 0), trk(2, 10)], [trk(2, 10)], [trk(2, 10)],
                  [trk(4, 0), trk(2, 10)]]
        gt = [[(0, box(0)), (1, box(10))]] * 5
        ms = [match_frame(t, g) for t, g in zip(tracks, gt)]
        assert count_id_switches(ms) == 1
        mota, motp = mota_motp(ms, 10)
        assert mota == pytest.approx(1 - (2 + 1) / 10)
        assert motp == 0.0

    def test_mota_examples(self):
        perfect = [FrameMatching(((1, 0, 0.0),), 0, 0)]
        assert mota_motp(perfect, 1) == (1.0, 0.0)
        half = [FrameMatching(((1, 0, 1.0),), 0, 1)]
        assert mota_motp(half, 2) == (0.5, 1.0)
        with pytest.raises(ValueError):
            mota_motp(perfect, 0)

    def test_motar_floor(self):
        assert motar(0, 0, 0, 1.0, 10) == 1.0
        assert motar(50, 50, 0, 1.0, 10) == 0.0


class TestAmota:
    def test_perfect(self):
        tracks = [[trk(0, 0), trk(1, 5)] for _ in range(4)]
        gt = [[(0, box(0)), (1, box(5))] for _ in range(4)]
        s = evaluate_tracking(tracks, gt)
        assert (s["AMOTA"], s["AMOTP"], s["IDS"], s["Recall"], s["MOTA"], s["MOTP"]) == (1.0, 0.0, 0, 1.0, 1.0, 0.0)

    def test_no_tracks(self):
        s = evaluate_tracking([[], []], [[(0, box(0))], [(0, box(0))]])
        assert s["AMOTA"] == 0.0 and s["AMOTP"] == 2.0 and s["Recall"] == 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            evaluate_tracking([[]], [[], []])
        with pytest.raises(ValueError):
            evaluate_tracking([[]], [[]])

    def test_scenario_against_brute_force(self):
        rng = np.random.default_rng(4)
        n_obj, n_frames = 10, 20
        tracks, gt = [], []
        for f in range(n_frames):
            g = [(k, box(10 * k + 0.1 * f)) for k in range(n_obj)]
            t = []
            for k in range(n_obj):
                if (k + f) % 7 == 0:  # scripted dropouts
                    continue
                tid = k if f < 12 or k % 3 else k + 100  # some re-ids late in the run
                t.append(trk(tid, 10 * k + 0.1 * f + rng.normal(scale=0.5), float(rng.uniform(0.3, 1.0))))
            if f % 4 == 0:
                t.append(trk(500 + f, 300.0, float(rng.uniform(0.3, 1.0))))
            tracks.append(t)
            gt.append(g)
        got = evaluate_tracking(tracks, gt)
        ref = brute_force_tracking_metrics(*to_oracle(tracks, gt))
        for key in ("AMOTA", "AMOTP", "MOTA", "MOTP", "IDS", "Recall", "MOTAR"):
            assert got[key] == pytest.approx(ref[key], abs=1e-12), key

    @settings(max_examples=150, deadline=None)
    @given(st.data())
    def test_small_cases_against_brute_force(self, data):
        n_obj = data.draw(st.integers(1, 3))
        n_frames = data.draw(st.integers(1, 5))
        conf = st.sampled_from([0.3, 0.5, 0.7, 0.9, 1.0])
        tracks, gt = [], []
        for f in range(n_frames):
            gt.append([(k, box(5 * k)) for k in range(n_obj)])
            frame = []
            for k in range(n_obj):
                if data.draw(st.booleans()):
                    frame.append(trk(data.draw(st.integers(0, 3)) * 10 + k, 5 * k + data.draw(st.floats(-2.5, 2.5)),
                                     data.draw(conf)))
            if data.draw(st.booleans()):
                frame.append(trk(99, data.draw(st.floats(-3, 13)), data.draw(conf)))
            tracks.append(frame)
        got = evaluate_tracking(tracks, gt)
        ref = brute_force_tracking_metrics(*to_oracle(tracks, gt))
        for key in ("AMOTA", "AMOTP"):
            assert got[key] == pytest.approx(ref[key], abs=1e-12)
        if "MOTA" in ref:
            for key in ("MOTA", "IDS", "Recall", "MOTAR"):
                assert got[key] == pytest.approx(ref[key], abs=1e-12)
            if not math.isnan(ref["MOTP"]):
                assert got["MOTP"] == pytest.approx(ref["MOTP"], abs=1e-12)
        # ranges
        assert 0.0 <= got["AMOTA"] <= 1.0 and got["MOTA"] <= 1.0 and got["IDS"] >= 0
        assert got["MOTP"] is None or got["MOTP"] >= 0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.05, 0.99))
    def test_confidence_rescaling_invariance(self, seed, k):
        rng = np.random.default_rng(seed)
        tracks, gt = [], []
        for f in range(5):
            gt.append([(j, box(5 * j)) for j in range(3)])
            tracks.append([trk(j + 10 * int(rng.integers(0, 2)), 5 * j + rng.normal(scale=1.0),
                               float(rng.uniform(0.01, 1.0))) for j in range(3) if rng.random() < 0.8])
        scaled = [[Instance(t.confidence * k, t.anchor, t.id) for t in f] for f in tracks]
        assert amota_amotp(tracks, gt) == amota_amotp(scaled, gt)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.0, 1.0))
    def test_adding_false_positive_never_helps(self, seed, c):
        rng = np.random.default_rng(seed)
        tracks, gt = [], []
        for f in range(4):
            gt.append([(j, box(5 * j)) for j in range(3)])
            tracks.append([trk(j, 5 * j + rng.normal(scale=0.8), float(rng.uniform(0.1, 1.0))) for j in range(3)
                           if rng.random() < 0.8])
        base = evaluate_tracking(tracks, gt)
        extra = [list(f) for f in tracks]
        extra[int(rng.integers(0, 4))].append(trk(999, 500.0, c))
        more = evaluate_tracking(extra, gt)
        assert more["AMOTA"] <= base["AMOTA"] + 1e-12
        assert more["MOTA"] <= base["MOTA"] + 1e-12

    def test_track_mean_score_mode(self):
        tracks = [[trk(0, 0, 0.9)], [trk(0, 0, 0.3)]]
        gt = [[(0, box(0))], [(0, box(0))]]
        sweep = cutoff_sweep(tracks, gt, MatchConfig(score_mode="track_mean"))
        assert [s.cutoff for s in sweep] == [pytest.approx(0.6)]
        assert sweep[0].recall == 1.0


class TestDetectionPR:
    def test_all_correct(self):
        dets = [[(0.9, box(0)), (0.8, box(5))]]
        assert detection_pr(dets, [[box(0), box(5)]])["ap"] == pytest.approx(1.0)

    def test_confident_far_false_positive_hurts_low_recall(self):
        gt = [[box(0), box(5)]]
        good = detection_pr([[(0.9, box(0)), (0.8, box(5)), (0.1, box(50))]], gt, radius=0.5)
        bad = detection_pr([[(0.95, box(50)), (0.9, box(0)), (0.8, box(5))]], gt, radius=0.5)
        assert bad["precision"][0] == 0.0 and good["precision"][0] == 1.0
        assert bad["ap"] < good["ap"]

    def test_errors_and_empty(self):
        with pytest.raises(ValueError):
            detection_pr([[]], [[], []])
        assert detection_pr([[]], [[box(0)]])["ap"] == 0.0

    def test_informative_centerness_improves_ranking(self):
        sc = ranking_scenario(seed=0)
        by_conf = [list(zip(c, d)) for c, d in zip(sc.confidence, sc.detections)]
        by_prod = [list(zip(ranking_score(c, q), d)) for c, q, d in zip(sc.confidence, sc.centerness, sc.detections)]
        assert detection_pr(by_prod, sc.gt, 0.5)["ap"] >= detection_pr(by_conf, sc.gt, 0.5)["ap"]
