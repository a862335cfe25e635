"""A noisy simulated drive, tracked and scored."""
from anchortrack.instance_bank import BankConfig
from anchortrack.metrics import MatchConfig, evaluate_tracking
from anchortrack.simulator import ScenarioConfig, simulate_tracking

base = dict(num_objects=15, duration_frames=40, ego_path="arc", ego_speed=6.0, ego_yaw_rate=0.05, rng_seed=2)
for label, extra in [("clean", {}),
                     ("noisy", dict(noise_center=0.3, noise_yaw=0.05, dropout_prob=0.1, false_positive_rate=1.0)),
                     ("harsh", dict(noise_center=0.6, dropout_prob=0.3, false_positive_rate=3.0))]:
    cfg = ScenarioConfig(**base, **extra)
    log, results = simulate_tracking(cfg, bank_cfg=BankConfig(300, 150))
    tracks = [r.results for r in results]
    gt = [list(f.objects) for f in log.frames]
    s = evaluate_tracking(tracks, gt)
    h = evaluate_tracking(tracks, gt, MatchConfig(matcher="hungarian"))
    print(f"{label:6s} AMOTA {s['AMOTA']:.3f} AMOTP {s['AMOTP']:.3f} IDS {s['IDS']:3d} "
          f"Recall {s['Recall']:.3f} MOTA {s['MOTA']:.3f}  (hungarian AMOTA {h['AMOTA']:.3f})")
