"""Adding anchor embeddings to features versus concatenating them."""
import numpy as np

from anchortrack.attention import (attn_additive, attn_decoupled, divergence_witness, encode_anchor,
                                   init_anchor_encoder, init_mha_params, run_self_checks)
from anchortrack.geometry import Anchor3D

enc = init_anchor_encoder()  # (128, 32, 32, 64) sub-encoders
anchors = [Anchor3D((x, 0, 0), (1.9, 4.5, 1.7), 0.3 * x) for x in range(5)]
embs = encode_anchor(anchors, enc)
feats = np.random.default_rng(0).normal(size=embs.shape)
print("embeddings", embs.shape)

out_add, _ = attn_additive(feats, embs, init_mha_params(256, heads=8, head_dim=32))
out_dec, _ = attn_decoupled(feats, embs, init_mha_params(512, heads=8, head_dim=32, value_dim=256))
print("additive output", out_add.shape, " decoupled output", out_dec.shape)

# when an embedding lines up with another instance's feature, summing lets it hijack the attention
wit = divergence_witness()
print("additive weights\n", wit["additive_weights"].round(3))
print("decoupled weights\n", wit["decoupled_weights"].round(3))
print("winning key per query:", wit["additive_argmax"], "vs", wit["decoupled_argmax"])

for r in run_self_checks():
    print("PASS" if r.passed else "FAIL", r.name)
