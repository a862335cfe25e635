"""Noisy anchor groups for denoising training, and the mask that keeps them apart."""
import numpy as np

from anchortrack.denoising import (NoiseConfig, assign_noise_groups, build_attention_mask,
                                   generate_noise, propagate_noise_groups, select_temporal_groups)
from anchortrack.geometry import Anchor3D, EgoPose

gt = [Anchor3D((10, 0, 0), (1.9, 4.5, 1.7), 0.0, (2, 0, 0)),
      Anchor3D((12, 3, 0), (1.9, 4.5, 1.7), 1.2)]
cfg = NoiseConfig(num_groups=3, temporal_groups=2, noise_scale=0.5, rng_seed=1)

gs = assign_noise_groups(generate_noise(gt, cfg), gt, cfg)
print(len(gs), "noisy anchors in", gs.num_groups, "groups")  # 2 gt * 3 groups * 2 bands

# each group has one positive per ground truth; the rest are negatives
for j in gs.groups():
    print("group", j, "positives (gt -> anchor):", gs.positives(j))

# inner-band offsets stay within the scale, outer-band ones sit between 1x and 2x
inner = np.abs(gs.offsets[gs.band == 0]).max()
outer = np.abs(gs.offsets[gs.band == 1])
print("inner max", inner.round(3), " outer range", outer.min().round(3), outer.max().round(3))

# normal queries first, then the groups; attention only within a segment
mask = build_attention_mask(4, gs)
print(mask.astype(int))

# a subset of groups rides along to the next frame, labels intact
keep = select_temporal_groups(gs, cfg)
nxt = propagate_noise_groups(gs, keep, EgoPose.identity(0.0), EgoPose.planar(1.0, 0, 0, 0.5), 0.5)
print("carried groups", keep, "->", len(nxt), "anchors")
print("first carried center", nxt.anchors[0, :3].round(3), "was", gs.anchors[gs.group == keep[0]][0, :3].round(3))
