"""Centerness and yawness targets, the quality loss, and its gradient."""
import math

from anchortrack.geometry import Anchor3D
from anchortrack.quality import QualityTargets, quality_loss, quality_loss_and_grad, quality_targets

gt = Anchor3D((0, 0, 0), (1.9, 4.5, 1.7), 0.0)
for dx, dyaw in [(0.0, 0.0), (1.0, 0.0), (0.5, math.pi / 3), (2.0, math.pi)]:
    pred = Anchor3D((dx, 0, 0), (1.9, 4.5, 1.7), dyaw)
    t = quality_targets(pred, gt)
    print(f"offset {dx:.1f} m, yaw error {dyaw:.2f}: centerness {t.centerness:.4f}, yawness {t.yawness:+.4f}")

# the loss is zero when predictions hit their targets and grows away from them
t = QualityTargets(math.exp(-1), 0.5)
for c in (0.1, t.centerness, 0.9):
    print(f"c_pred={c:.3f}  loss={quality_loss(c, 0.5, t):.5f}")

loss, dc, dy = quality_loss_and_grad(0.2, -0.3, t)
print("loss", round(loss, 5), "d/dc", round(dc, 5), "d/dy", round(dy, 5))
