import numpy as np
import pytest

from anchortrack.geometry import Anchor3D, EgoPose, transform_anchor
from anchortrack.instance_bank import BankConfig, Instance, init_current
from anchortrack.simulator import (
    GroundTruthFrame,
    PseudoModel,
    ScenarioConfig,
    claim_slots,
    ego_pose_at,
    generate_scenario,
    grid_anchors,
    scenario_current_anchors,
    simulate_tracking,
)
from anchortrack.tracker import TrackerConfig

THRESHOLD = TrackerConfig().threshold


def one_object(**kw):
    base = dict(objects=({"center": (10, 0, 0), "velocity": (1, 0, 0)},), duration_frames=3)
    base.update(kw)
    return ScenarioConfig(**base)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"duration_frames": 0},
        {"region": (1, 1, 0, 2)},
        {"dropout_prob": 1.5},
        {"frame_rate": 0.0},
        {"ego_path": "loop"},
        {"ego_path": "scripted", "ego_poses": ((0, 0, 0),)},
        {"unclaimed_conf_ceiling": 0.5},
        {"dropout_conf": 0.3},
        {"noise_center": -1.0},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            ScenarioConfig(**kw)

    def test_dict_round_trip(self):
        cfg = ScenarioConfig(forced_dropouts=((1, 2),), ego_path="arc", ego_yaw_rate=0.1, dropout_conf=0.0)
        assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ValueError):
            ScenarioConfig.from_dict({"bogus": 1})


class TestScenario:
    def test_static_object_static_ego(self):
        cfg = ScenarioConfig(objects=({"center": (3, 4, 0)},), duration_frames=3)
        log = generate_scenario(cfg)
        assert len(log) == 3
        assert len({f.objects for f in log.frames}) == 1

    def test_frame_one_center(self):
        log = generate_scenario(one_object())
        np.testing.assert_allclose(log.frames[1].objects[0][1].center, (10.5, 0, 0), atol=1e-12)
        assert log.frames[1].pose.timestamp == 0.5

    def test_moving_ego_static_object(self):
        cfg = ScenarioConfig(objects=({"center": (10, 0, 0)},), duration_frames=4, ego_path="straight",
                             ego_speed=2.0)
        log = generate_scenario(cfg)
        for f in log.frames:
            x = f.objects[0][1].center[0]
            assert x == pytest.approx(10 - 2.0 * f.pose.timestamp, abs=1e-12)
            back = transform_anchor(f.objects[0][1], f.pose, EgoPose.identity(), 0.0)
            np.testing.assert_allclose(back.center, (10, 0, 0), atol=1e-12)

    def test_arc_and_scripted_paths(self):
        arc = ScenarioConfig(duration_frames=5, ego_path="arc", ego_yaw_rate=0.2)
        assert ego_pose_at(arc, 4).rotation[0, 1] != 0.0
        poses = tuple((k, 0.5 * k, 0.1 * k) for k in range(3))
        scripted = ScenarioConfig(duration_frames=3, ego_path="scripted", ego_poses=poses)
        np.testing.assert_allclose(ego_pose_at(scripted, 2).translation, (2, 1, 0))

    def test_deterministic_and_seed_sensitive(self):
        cfg = ScenarioConfig(num_objects=6, duration_frames=5, rng_seed=3)
        assert generate_scenario(cfg) == generate_scenario(cfg)
        other = generate_scenario(ScenarioConfig(num_objects=6, duration_frames=5, rng_seed=4))
        assert other != generate_scenario(cfg)

    def test_ids_stable_and_lifetimes(self):
        cfg = ScenarioConfig(objects=({"center": (0, 0, 0)}, {"center": (5, 0, 0), "first_frame": 1,
                                                              "last_frame": 2}), duration_frames=4)
        ids = [[oid for oid, _ in f.objects] for f in generate_scenario(cfg).frames]
        assert ids == [[0], [0, 1], [0, 1], [0]]

    def test_yaw_aligned(self):
        cfg = ScenarioConfig(objects=({"center": (0, 0, 0), "velocity": (0, 2, 0)},), duration_frames=1)
        assert generate_scenario(cfg).frames[0].objects[0][1].yaw == pytest.approx(np.pi / 2)

    def test_grid(self):
        g = grid_anchors(10, (-10, 10, -10, 10))
        assert len(g) == 10 and len(set(g)) == 10
        assert all(-10 <= a.center[0] <= 10 and -10 <= a.center[1] <= 10 for a in g)
        with pytest.raises(ValueError):
            grid_anchors(0)


def _current(cfg, n=16):
    return init_current(BankConfig(n, 4), scenario_current_anchors(cfg, n))


class TestPseudoModel:
    def test_noiseless_single_object(self):
        cfg = one_object(claimed_conf_std=0.0)
        log = generate_scenario(cfg)
        out = PseudoModel(cfg)(log.frames[0], [], _current(cfg))
        above = [k for k, (c, _) in enumerate(out) if c >= THRESHOLD]
        assert len(above) == 1
        assert out[above[0]][1] == log.frames[0].objects[0][1]
        assert all(c <= cfg.unclaimed_conf_ceiling for k, (c, _) in enumerate(out) if k not in above)

    def test_forced_dropout(self):
        cfg = one_object(forced_dropouts=((0, 1),))
        log = generate_scenario(cfg)
        model = PseudoModel(cfg)
        for f in log.frames:
            out = model(f, [], _current(cfg))
            hit = max(c for c, _ in out)
            assert (hit < THRESHOLD) == (f.index == 1)

    def test_deterministic(self):
        cfg = ScenarioConfig(num_objects=8, duration_frames=4, noise_center=0.3, false_positive_rate=1.0,
                             dropout_prob=0.2, rng_seed=11)
        a = simulate_tracking(cfg, bank_cfg=BankConfig(64, 32))
        b = simulate_tracking(cfg, bank_cfg=BankConfig(64, 32))
        assert a == b

    def test_temporal_slot_reclaimed(self):
        # a tracked temporal slot near object 3 wins over a nearer id-less one and any current slot
        gt = GroundTruthFrame(0, EgoPose.identity(), ((3, Anchor3D((1, 0, 0), (1, 1, 1))),))
        temporal = [Instance(0.1, Anchor3D((1.2, 0, 0), (1, 1, 1))),
                    Instance(0.7, Anchor3D((2.5, 0, 0), (1, 1, 1)), id=5)]
        current = [Instance(0.0, Anchor3D((1, 0, 0), (1, 1, 1)))]
        cfg = ScenarioConfig()
        assert claim_slots(gt, temporal, current, cfg) == {3: 1}

    def test_slot_index_stable_across_frames(self):
        cfg = ScenarioConfig(objects=({"center": (0, 0, 0), "velocity": (2, 0, 0), "id": 3},
                                      {"center": (0, 8, 0), "velocity": (-1, 0, 0)}),
                             duration_frames=4, claimed_conf_std=0.0)
        log, results = simulate_tracking(cfg, bank_cfg=BankConfig(16, 4))
        ids = {oid: None for oid, _ in log.frames[0].objects}
        for f, res in zip(log.frames, results):
            for oid, gt in f.objects:
                (match,) = [r for r in res.results if np.allclose(r.anchor.center, gt.center)]
                ids[oid] = match.id if ids[oid] is None else ids[oid]
                assert match.id == ids[oid]
        assert len(set(ids.values())) == 2

    def test_gate_exclusivity(self):
        cfg = ScenarioConfig(num_objects=20, duration_frames=1, region=(-5, 5, -5, 5), rng_seed=2)
        log = generate_scenario(cfg)
        temporal = [Instance(0.5, a, k) for k, a in enumerate(grid_anchors(9, (-5, 5, -5, 5)))]
        claims = claim_slots(log.frames[0], temporal, _current(cfg, 30), cfg)
        assert len(set(claims.values())) == len(claims) == 20
        for oid, a in log.frames[0].objects:
            slot = claims[oid]
            if slot < 9:
                assert np.linalg.norm(np.subtract(temporal[slot].anchor.center, a.center)) <= cfg.gate_radius

    def test_false_positives_only_on_free_current_slots(self):
        cfg = one_object(false_positive_rate=5.0, claimed_conf_std=0.0, rng_seed=1)
        log = generate_scenario(cfg)
        temporal = [Instance(0.5, Anchor3D((30, 30, 0), (1, 1, 1)), 0)]
        out = PseudoModel(cfg)(log.frames[0], temporal, _current(cfg))
        assert out[0][0] < THRESHOLD
        assert sum(c >= THRESHOLD for c, _ in out[1:]) > 1

    def test_dropout_conf_override(self):
        cfg = one_object(forced_dropouts=((0, 0),), dropout_conf=0.0)
        log = generate_scenario(cfg)
        out = PseudoModel(cfg)(log.frames[0], [], _current(cfg))
        assert min(c for c, _ in out) == 0.0


def test_noiseless_one_id_per_object():
    cfg = ScenarioConfig(num_objects=12, duration_frames=20, speed_range=(0.0, 3.0), rng_seed=5,
                         ego_path="straight", ego_speed=3.0, claimed_conf_std=0.0)
    log, results = simulate_tracking(cfg, bank_cfg=BankConfig(100, 50))
    seen = {}
    for f, res in zip(log.frames, results):
        assert len(res.results) == len(f.objects)
        by_center = {tuple(np.round(r.anchor.center, 9)): r.id for r in res.results}
        for oid, a in f.objects:
            tid = by_center[tuple(np.round(a.center, 9))]
            assert seen.setdefault(oid, tid) == tid
    assert len(set(seen.values())) == len(seen) == 12
