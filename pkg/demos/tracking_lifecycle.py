"""How ids survive short misses and retire after long ones."""
from anchortrack.instance_bank import BankConfig
from anchortrack.simulator import ScenarioConfig, simulate_tracking
from anchortrack.tracker import TrackerConfig

objects = ({"center": (0, 0, 0), "velocity": (1, 0, 0)},) + tuple(
    {"center": (10 * k, 10, 0), "velocity": (0, 1, 0)} for k in range(1, 4))


def target_ids(misses, **kw):
    cfg = ScenarioConfig(objects=objects, duration_frames=3 + misses + 3, claimed_conf_std=0.0,
                         forced_dropouts=tuple((0, f) for f in range(3, 3 + misses)), **kw)
    log, results = simulate_tracking(cfg, TrackerConfig(0.25, 0.6), BankConfig(16, 4))
    out = []
    for f, res in zip(log.frames, results):
        x = dict(f.objects)[0].center[0]
        out.append(next((r.id for r in res.results if abs(r.anchor.center[0] - x) < 1e-9), None))
    return out, results


ids, _ = target_ids(2)
print("default confidences, missed twice:", ids)

# every idle slot at 0.1 fills the 4-slot bank; the missed target decays 0.8 -> 0.48 -> 0.29 -> ...
flat = dict(unclaimed_conf_mean=0.1, unclaimed_conf_std=0.0, dropout_conf=0.0)
for misses in (2, 4, 5, 6):
    ids, results = target_ids(misses, **flat)
    print(f"saturated bank, missed {misses}x:", ids)

_, results = target_ids(6, **flat)
for k, res in enumerate(results[2:9], start=2):
    print("frame", k, "bank:", [(t.id, round(t.confidence, 3)) for t in res.updated_temporal])
