import pytest
from hypothesis import given, settings, strategies as st

from anchortrack.geometry import Anchor3D, EgoPose
from anchortrack.instance_bank import BankConfig, Instance
from anchortrack.simulator import ScenarioConfig, simulate_tracking
from anchortrack.tracker import (
    Frame,
    IdGenerator,
    Tracker,
    TrackerConfig,
    TrackerState,
    run_session,
    track_frame,
)

from oracles import literal_tracking_reference


def box(x):
    return Anchor3D((float(x), 0.0, 0.0), (1, 1, 1))


def scripted(payload, temporal, current):
    # payload holds one confidence per slot, temporal slots first
    slots = list(temporal) + list(current)
    assert len(payload) == len(slots)
    return [(c, s.anchor) for c, s in zip(payload, slots)]


CFG = TrackerConfig()


class TestConfig:
    def test_defaults(self):
        assert (CFG.threshold, CFG.decay) == (0.25, 0.6)

    @pytest.mark.parametrize("kw", [{"threshold": 0.0}, {"threshold": 1.0}, {"decay": 0.0}, {"decay": 1.2}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            TrackerConfig(**kw)

    def test_id_generator(self):
        ids = IdGenerator(5)
        assert [ids.new(), ids.new()] == [5, 6]
        with pytest.raises(ValueError):
            IdGenerator(-1)


class TestHandTraces:
    bank = BankConfig(num_current=1, num_temporal=2)

    def test_redetected_keeps_id(self):
        res = track_frame([(0.8, box(0)), (0.0, box(5))], [Instance(0.9, box(0), 42)], CFG, IdGenerator(43), self.bank)
        assert [(r.id, r.confidence) for r in res.results] == [(42, 0.8)]
        assert res.updated_temporal[0] == Instance(0.8, box(0), 42)

    def test_missed_decays_and_keeps_id(self):
        res = track_frame([(0.1, box(0)), (0.0, box(5))], [Instance(0.9, box(0), 42)], CFG, IdGenerator(43), self.bank)
        assert res.results == []
        top = res.updated_temporal[0]
        assert top.id == 42 and top.confidence == pytest.approx(0.54, abs=1e-15)

    def test_fresh_detection_gets_new_id(self):
        ids = IdGenerator(43)
        res = track_frame([(0.1, box(0)), (0.3, box(5))], [Instance(0.9, box(0), 42)], CFG, ids, self.bank)
        assert [(r.id, r.confidence) for r in res.results] == [(43, 0.3)]
        assert ids.next_id == 44
        assert [t.id for t in res.updated_temporal] == [42, 43]

    def test_all_below_threshold(self):
        res = track_frame([(0.1, box(0)), (0.2, box(1)), (0.05, box(2))], [], CFG, IdGenerator(),
                          BankConfig(3, 2))
        assert res.results == []
        assert [t.confidence for t in res.updated_temporal] == [0.2, 0.1]
        assert all(t.id is None for t in res.updated_temporal)

    def test_idless_temporal_slot_gets_fresh_id(self):
        ids = IdGenerator(0)
        res = track_frame([(0.4, box(0)), (0.0, box(1))], [Instance(0.2, box(0))], CFG, ids, self.bank)
        assert [r.id for r in res.results] == [0]

    def test_threshold_uses_pre_decay_confidence(self):
        # decayed value 0.54 would pass the threshold, the raw output 0.2 does not
        res = track_frame([(0.2, box(0)), (0.0, box(1))], [Instance(0.9, box(0), 1)], CFG, IdGenerator(2), self.bank)
        assert res.results == []

    def test_threshold_is_inclusive(self):
        res = track_frame([(0.25, box(0))], [], CFG, IdGenerator(), BankConfig(1, 1))
        assert len(res.results) == 1


class TestErrors:
    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            track_frame([(0.5, box(0))], [], CFG, IdGenerator(), BankConfig(2, 2))

    def test_too_many_temporal(self):
        temporal = [Instance(0.5, box(0), 0), Instance(0.5, box(1), 1)]
        with pytest.raises(ValueError):
            track_frame([(0.5, box(0))] * 3, temporal, CFG, IdGenerator(2), BankConfig(1, 1))

    def test_generator_behind_carried_ids(self):
        with pytest.raises(ValueError):
            track_frame([(0.5, box(0)), (0.1, box(1))], [Instance(0.5, box(0), 9)], CFG, IdGenerator(3),
                        BankConfig(1, 1))

    def test_duplicate_carried_ids(self):
        temporal = [Instance(0.5, box(0), 2), Instance(0.5, box(1), 2)]
        with pytest.raises(ValueError):
            track_frame([(0.5, box(0))] * 3, temporal, CFG, IdGenerator(3), BankConfig(1, 2))

    def test_timestamps_must_increase(self):
        frames = [Frame(0, EgoPose.identity(0.0), [0.5]), Frame(1, EgoPose.identity(0.0), [0.0, 0.5])]
        with pytest.raises(ValueError):
            list(run_session(frames, scripted, [box(0)], CFG, BankConfig(1, 1)))


levels = st.sampled_from([0.0, 0.05, 0.1, 0.2, 0.25, 0.3, 0.5, 0.54, 0.8, 0.9, 1.0])


@st.composite
def sessions(draw):
    n_cur = draw(st.integers(1, 4))
    n_t = draw(st.integers(1, 6 - n_cur))
    n_frames = draw(st.integers(1, 5))
    return n_cur, n_t, [draw(st.lists(levels, min_size=n_cur + n_t, max_size=n_cur + n_t))
                        for _ in range(n_frames)]


class TestAgainstLiteralTranscription:
    @settings(max_examples=300, deadline=None)
    @given(sessions(), st.sampled_from([0.25, 0.3, 0.5]), st.sampled_from([0.6, 0.5, 0.9]))
    def test_matches_reference(self, session, threshold, decay):
        n_cur, n_t, confs = session
        cfg = TrackerConfig(threshold, decay)
        bank = BankConfig(n_cur, n_t)
        current = [box(10 + k) for k in range(n_cur)]
        tracker = Tracker(scripted, current, cfg, bank)

        ref_bank, next_id = [], 0
        for f, frame_conf in enumerate(confs):
            temporal = [(c, a, i) for c, a, i in ref_bank]
            k = len(temporal)
            conf = frame_conf[: k + n_cur]
            res = tracker.step(Frame(f, EgoPose.identity(float(f)), conf))
            model_out = list(zip(conf, [a for _, a, _ in temporal] + current))
            r_res, ref_bank, next_id = literal_tracking_reference(model_out, temporal, threshold, decay, next_id, n_t)
            assert [(r.confidence, r.anchor, r.id) for r in res.results] == r_res
            assert [(t.confidence, t.anchor, t.id) for t in res.updated_temporal] == ref_bank
            assert tracker.state.next_id == next_id

    @settings(max_examples=200, deadline=None)
    @given(sessions())
    def test_session_invariants(self, session):
        n_cur, n_t, confs = session
        bank = BankConfig(n_cur, n_t)
        tracker = Tracker(scripted, [box(k) for k in range(n_cur)], CFG, bank)
        minted = []
        for f, frame_conf in enumerate(confs):
            before = {t.id for t in tracker.state.temporal if t.id is not None}
            k = len(tracker.state.temporal)
            res = tracker.step(Frame(f, EgoPose.identity(float(f)), frame_conf[: k + n_cur]))
            ids = [r.id for r in res.results]
            assert len(set(ids)) == len(ids)
            assert all(r.confidence >= CFG.threshold for r in res.results)
            fresh = [i for i in ids if i not in before]
            assert not set(fresh) & set(minted)
            minted.extend(fresh)
            assert len(res.updated_temporal) == min(n_t, k + n_cur)
            kept = [t.id for t in res.updated_temporal if t.id is not None]
            assert len(set(kept)) == len(kept)
            assert set(kept) <= before | set(fresh)
        assert minted == sorted(minted)

    def test_decay_with_no_redetection(self):
        bank = BankConfig(1, 2)
        tracker = Tracker(scripted, [box(50)], CFG, bank)
        tracker.step(Frame(0, EgoPose.identity(0.0), [0.9]))
        for k in range(1, 6):
            tracker.step(Frame(k, EgoPose.identity(float(k)), [0.0] * len(tracker.state.temporal) + [0.0]))
            target = [t for t in tracker.state.temporal if t.id == 0]
            assert target and target[0].confidence == pytest.approx(0.9 * 0.6 ** k, rel=1e-12)


class TestSessions:
    def test_single_frame_equals_track_frame(self):
        bank = BankConfig(3, 2)
        current = [box(k) for k in range(3)]
        conf = [0.1, 0.6, 0.3]
        (res,) = run_session([Frame(0, EgoPose.identity(), conf)], scripted, current, CFG, bank)
        direct = track_frame(list(zip(conf, current)), [], CFG, IdGenerator(), bank)
        assert res == direct

    def test_state_round_trip_resume(self):
        bank = BankConfig(2, 2)
        current = [box(0), box(5)]
        confs = [[0.9, 0.1], [0.8, 0.0, 0.0, 0.7], [0.0, 0.6, 0.3, 0.1], [0.5, 0.4, 0.0, 0.0]]
        frames = [Frame(k, EgoPose.planar(k, 0, 0, float(k)), c) for k, c in enumerate(confs)]
        full = list(run_session(frames, scripted, current, CFG, bank))
        t = Tracker(scripted, current, CFG, bank)
        head = [t.step(f) for f in frames[:2]]
        state = TrackerState.from_dict(t.state.to_dict())
        tail = list(run_session(frames[2:], scripted, current, CFG, bank, state))
        assert head + tail == full

    def test_bad_state(self):
        with pytest.raises(ValueError):
            TrackerState.from_dict({"temporal": []})
        big = TrackerState([Instance(0.5, box(k), k) for k in range(3)], next_id=3)
        with pytest.raises(ValueError):
            Tracker(scripted, [box(0)], CFG, BankConfig(1, 2), big)

    def test_persistent_object_same_id(self):
        cfg = ScenarioConfig(objects=({"center": (5, 0, 0), "velocity": (1, 0, 0)},), duration_frames=2,
                             claimed_conf_std=0.0)
        _, results = simulate_tracking(cfg, bank_cfg=BankConfig(16, 4))
        ids = [[r.id for r in res.results] for res in results]
        assert ids == [[0], [0]]

    def test_occlusion_resumes_same_id(self):
        cfg = ScenarioConfig(objects=({"center": (5, 0, 0), "velocity": (1, 0, 0)},), duration_frames=6,
                             claimed_conf_std=0.0, forced_dropouts=((0, 2), (0, 3)))
        _, results = simulate_tracking(cfg, bank_cfg=BankConfig(16, 4))
        ids = [[r.id for r in res.results] for res in results]
        assert ids == [[0], [0], [], [], [0], [0]]
