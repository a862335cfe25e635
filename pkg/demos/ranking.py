"""Ranking detections by confidence times predicted centerness."""
from anchortrack.metrics import detection_pr
from anchortrack.quality import ranking_score
from anchortrack.simulator import ranking_scenario

for seed in range(3):
    sc = ranking_scenario(seed=seed)
    by_conf = [list(zip(c, d)) for c, d in zip(sc.confidence, sc.detections)]
    by_prod = [list(zip(ranking_score(c, q), d)) for c, q, d in zip(sc.confidence, sc.centerness, sc.detections)]
    a = detection_pr(by_conf, sc.gt, radius=0.5)
    b = detection_pr(by_prod, sc.gt, radius=0.5)
    print(f"seed {seed}: AP conf-only {a['ap']:.3f}  conf x centerness {b['ap']:.3f}  "
          f"precision@first10 {a['precision'][9]:.1f} vs {b['precision'][9]:.1f}")
