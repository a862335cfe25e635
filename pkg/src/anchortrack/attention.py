"""Anchor encoder and instance self-attention, additive vs. decoupled.

Forward passes only, in float64 numpy.  Every reduction over instances
(softmax normalisers, value aggregation) is evaluated in a canonical
order so that permuting the instances permutes the outputs bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._seeding import derive_rng
from .geometry import ENCODED_DIM, Anchor3D

# sub-block input slices in the encoded (…, 11) anchor layout
ENCODER_COMPONENTS = (
    ("center", slice(0, 3)),
    ("dims", slice(3, 6)),
    ("yaw", slice(6, 8)),
    ("velocity", slice(8, 11)),
)
DEFAULT_WIDTHS = (128, 32, 32, 64)
INIT_RANGE = 0.1
_CHUNK_ELEMENTS = 4_000_000


def _rowwise_matmul(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # x @ w with a per-row evaluation order that does not depend on the row's position
    x = np.asarray(x, dtype=float)
    if x.shape[0] == 0:
        return np.zeros((0, w.shape[1]))
    return np.stack([(row[:, None] * w).sum(axis=0) for row in x])


def _canonical_sum(values: np.ndarray, axis: int) -> np.ndarray:
    # sorted terms, accumulated plane by plane along a leading axis
    return np.moveaxis(np.sort(values, axis=axis), axis, 0).sum(axis=0)


@dataclass(frozen=True)
class Linear:
    weight: np.ndarray  # (d_in, d_out)
    bias: np.ndarray  # (d_out,)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return _rowwise_matmul(np.atleast_2d(x), self.weight) + self.bias


def _init_linear(rng: np.random.Generator, d_in: int, d_out: int, bias: bool = True) -> Linear:
    w = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(d_in, d_out))
    b = rng.uniform(-INIT_RANGE, INIT_RANGE, size=d_out) if bias else np.zeros(d_out)
    return Linear(w, b)


@dataclass(frozen=True)
class AnchorEncoderParams:
    """One two-layer MLP (linear, ReLU, linear) per anchor component."""

    layers: tuple[tuple[Linear, Linear], ...]
    widths: tuple[int, ...]

    @property
    def embed_dim(self) -> int:
        return sum(self.widths)


def init_anchor_encoder(widths=DEFAULT_WIDTHS, seed: int = 0, bias: bool = True) -> AnchorEncoderParams:
    widths = tuple(int(w) for w in widths)
    if len(widths) != len(ENCODER_COMPONENTS) or min(widths) <= 0:
        raise ValueError(f"need {len(ENCODER_COMPONENTS)} positive sub-encoder widths, got {widths}")
    rng = derive_rng(seed, "attention", "anchor-encoder")
    layers = []
    for (_, sl), width in zip(ENCODER_COMPONENTS, widths):
        d_in = sl.stop - sl.start
        layers.append((_init_linear(rng, d_in, width, bias), _init_linear(rng, width, width, bias)))
    return AnchorEncoderParams(tuple(layers), widths)


def encode_anchor(anchor, params: AnchorEncoderParams, embed_dim: int | None = None) -> np.ndarray:
    """Embed anchors component-wise and concatenate the sub-embeddings.

    ``anchor`` is an :class:`Anchor3D`, a list of them, or an array in the
    11-wide encoded layout.  Returns shape ``(embed_dim,)`` or ``(n, embed_dim)``.
    """
    if embed_dim is not None and params.embed_dim != embed_dim:
        raise ValueError(f"encoder widths {params.widths} sum to {params.embed_dim}, expected {embed_dim}")
    if isinstance(anchor, Anchor3D):
        x = anchor.encoded()
    elif isinstance(anchor, (list, tuple)) and anchor and isinstance(anchor[0], Anchor3D):
        x = np.stack([a.encoded() for a in anchor])
    else:
        x = np.asarray(anchor, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != ENCODED_DIM:
        raise ValueError(f"encoded anchors must have {ENCODED_DIM} columns, got {x.shape[-1]}")
    blocks = []
    for (_, sl), (first, second) in zip(ENCODER_COMPONENTS, params.layers):
        hidden = np.maximum(first(x[:, sl]), 0.0)
        blocks.append(second(hidden))
    out = np.concatenate(blocks, axis=-1)
    return out[0] if single else out


@dataclass(frozen=True)
class MhaParams:
    """Multi-head attention projections.

    ``wq``/``wk`` map the query/key input width to ``heads * head_dim``,
    ``wv`` maps the value input width there, ``wo`` maps back to the output
    width.
    """

    wq: Linear
    wk: Linear
    wv: Linear
    wo: Linear
    heads: int
    head_dim: int

    def __post_init__(self):
        inner = self.heads * self.head_dim
        for name in ("wq", "wk", "wv"):
            if getattr(self, name).weight.shape[1] != inner:
                raise ValueError(f"{name} output width must be heads*head_dim={inner}")
        if self.wq.weight.shape[0] != self.wk.weight.shape[0]:
            raise ValueError("query and key projections must share their input width")
        if self.wo.weight.shape[0] != inner:
            raise ValueError(f"output projection must take heads*head_dim={inner} inputs")

    @property
    def qk_dim(self) -> int:
        return self.wq.weight.shape[0]

    @property
    def value_dim(self) -> int:
        return self.wv.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.wo.weight.shape[1]


def init_mha_params(
    qk_dim: int,
    heads: int = 8,
    head_dim: int = 32,
    value_dim: int | None = None,
    out_dim: int | None = None,
    seed: int = 0,
    bias: bool = True,
) -> MhaParams:
    value_dim = qk_dim if value_dim is None else value_dim
    out_dim = value_dim if out_dim is None else out_dim
    rng = derive_rng(seed, "attention", "mha", qk_dim, value_dim, out_dim)
    inner = heads * head_dim
    return MhaParams(
        wq=_init_linear(rng, qk_dim, inner, bias),
        wk=_init_linear(rng, qk_dim, inner, bias),
        wv=_init_linear(rng, value_dim, inner, bias),
        wo=_init_linear(rng, inner, out_dim, bias),
        heads=heads,
        head_dim=head_dim,
    )


def mha_forward(queries, keys, values, params: MhaParams, mask=None) -> tuple[np.ndarray, np.ndarray]:
    """Scaled dot-product multi-head attention.

    ``mask[q, k]`` is ``True`` where query ``q`` may attend to key ``k``.
    Returns ``(outputs (Q, out_dim), weights (heads, Q, K))``; masked weights
    are exactly zero.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    keys = np.atleast_2d(np.asarray(keys, dtype=float))
    values = np.atleast_2d(np.asarray(values, dtype=float))
    nq, nk = queries.shape[0], keys.shape[0]
    if values.shape[0] != nk:
        raise ValueError(f"{nk} keys but {values.shape[0]} values")
    if queries.shape[1] != params.qk_dim or keys.shape[1] != params.qk_dim:
        raise ValueError(f"query/key width must be {params.qk_dim}")
    if values.shape[1] != params.value_dim:
        raise ValueError(f"value width must be {params.value_dim}")
    if mask is None:
        mask = np.ones((nq, nk), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (nq, nk):
        raise ValueError(f"mask shape {mask.shape} does not match ({nq}, {nk})")
    isolated = ~mask.any(axis=1)
    if isolated.any():
        raise ValueError(f"isolated query: rows {np.flatnonzero(isolated).tolist()} have no allowed key")

    h, d = params.heads, params.head_dim
    q = params.wq(queries).reshape(nq, h, d).transpose(1, 0, 2)
    k = params.wk(keys).reshape(nk, h, d).transpose(1, 0, 2)
    v = params.wv(values).reshape(nk, h, d).transpose(1, 0, 2)

    weights = np.empty((h, nq, nk))
    mixed = np.empty((h, nq, d))
    step = max(1, _CHUNK_ELEMENTS // max(1, h * nk * d))
    for start in range(0, nq, step):
        sl = slice(start, min(nq, start + step))
        # (d, h, q, K) products reduced over the leading head_dim axis
        prod = np.moveaxis(q[:, sl, None, :] * k[:, None, :, :], -1, 0)
        logits = prod.sum(axis=0) / math.sqrt(d)
        logits = np.where(mask[None, sl], logits, -np.inf)
        logits = logits - logits.max(axis=-1, keepdims=True)
        expd = np.exp(logits)
        w = expd / _canonical_sum(expd, axis=-1)[..., None]
        weights[:, sl] = w
        # (h, q, K, d) products, summed over keys in sorted order
        mixed[:, sl] = _canonical_sum(w[..., None] * v[:, None, :, :], axis=2)
    merged = mixed.transpose(1, 0, 2).reshape(nq, h * d)
    return params.wo(merged), weights


def attn_additive(feats, embs, params: MhaParams, mask=None) -> tuple[np.ndarray, np.ndarray]:
    """Self-attention over ``features + embeddings`` (query, key and value all the sum)."""
    feats = np.atleast_2d(np.asarray(feats, dtype=float))
    embs = np.atleast_2d(np.asarray(embs, dtype=float))
    if feats.shape != embs.shape:
        raise ValueError(f"feature shape {feats.shape} and embedding shape {embs.shape} differ")
    x = feats + embs
    return mha_forward(x, x, x, params, mask)


def attn_decoupled(feats, embs, params: MhaParams, mask=None, values: str = "feature") -> tuple[np.ndarray, np.ndarray]:
    """Self-attention with queries/keys ``[features; embeddings]`` (concatenated, not summed).

    ``values="feature"`` feeds ``features`` alone as values, so the output stays an
    instance feature.  ``values="concat"`` feeds ``[features; embeddings]`` and relies on the
    output projection to map back down to the feature width.
    """
    feats = np.atleast_2d(np.asarray(feats, dtype=float))
    embs = np.atleast_2d(np.asarray(embs, dtype=float))
    if feats.shape[0] != embs.shape[0]:
        raise ValueError(f"{feats.shape[0]} features but {embs.shape[0]} embeddings")
    x = np.concatenate([feats, embs], axis=1)
    if values == "feature":
        v = feats
    elif values == "concat":
        v = x
    else:
        raise ValueError(f"unknown values mode {values!r}")
    return mha_forward(x, x, v, params, mask)


def identity_mha(dim: int) -> MhaParams:
    eye = Linear(np.eye(dim), np.zeros(dim))
    return MhaParams(eye, eye, eye, eye, heads=1, head_dim=dim)


def decoupled_identity_mha(feature_dim: int, embed_dim: int, embed_scale: float = 1.0) -> MhaParams:
    """Single-head decoupled params whose query/key logits are ``<F1,F2> + s^2 <E1,E2>``."""
    d = feature_dim + embed_dim
    qk = np.zeros((d, d))
    qk[:feature_dim, :feature_dim] = np.eye(feature_dim)
    qk[feature_dim:, feature_dim:] = embed_scale * np.eye(embed_dim)
    proj = Linear(qk, np.zeros(d))
    wv = Linear(np.hstack([np.eye(feature_dim), np.zeros((feature_dim, embed_dim))]), np.zeros(d))
    wo = Linear(np.vstack([np.eye(feature_dim), np.zeros((embed_dim, feature_dim))]), np.zeros(feature_dim))
    return MhaParams(proj, proj, wv, wo, heads=1, head_dim=d)


def divergence_witness() -> dict:
    """A hand-built case where summing features and embeddings changes which key wins.

    Instance 2 carries a large anchor embedding pointing along instance 0's
    feature direction.  Under additive attention the cross term
    ``<F_0, E_2>`` dominates query 0's logits; the decoupled logits only
    compare features with features and embeddings with embeddings.
    """
    feats = np.array([[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
    embs = np.array([[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0], [3.0, 0.0, 0.0, 0.0]])
    _, w_add = attn_additive(feats, embs, identity_mha(4))
    _, w_dec = attn_decoupled(feats, embs, decoupled_identity_mha(4, 4))
    return {
        "features": feats,
        "embeddings": embs,
        "additive_weights": w_add[0],
        "decoupled_weights": w_dec[0],
        "additive_argmax": w_add[0].argmax(axis=1),
        "decoupled_argmax": w_dec[0].argmax(axis=1),
    }


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def run_self_checks(seed: int = 0, num_instances: int = 12, feature_dim: int = 16,
                    heads: int = 4, head_dim: int = 8) -> list[CheckResult]:
    """Seeded invariant checks on random inputs, as used by ``attn-check``."""
    rng = derive_rng(seed, "attention", "self-check")
    n = num_instances
    feats = rng.normal(size=(n, feature_dim))
    embs = rng.normal(size=(n, feature_dim))
    mask = rng.random((n, n)) < 0.6
    np.fill_diagonal(mask, True)
    add_params = init_mha_params(feature_dim, heads, head_dim, seed=seed)
    dec_params = init_mha_params(2 * feature_dim, heads, head_dim, value_dim=feature_dim, seed=seed)
    out = []

    _, w_add = attn_additive(feats, embs, add_params, mask)
    _, w_dec = attn_decoupled(feats, embs, dec_params, mask)
    err = max(np.abs(w.sum(axis=-1) - 1.0).max() for w in (w_add, w_dec))
    leaked = max(np.abs(w[:, ~mask]).max(initial=0.0) for w in (w_add, w_dec))
    out.append(CheckResult("softmax_normalisation", bool(err <= 1e-6 and leaked == 0.0),
                           f"max |row sum - 1| = {err:.3e}, max masked weight = {leaked:.3e}"))

    perm = rng.permutation(n)
    pm = mask[np.ix_(perm, perm)]
    exact = True
    for fn, params in ((attn_additive, add_params), (attn_decoupled, dec_params)):
        o1, w1 = fn(feats, embs, params, mask)
        o2, w2 = fn(feats[perm], embs[perm], params, pm)
        exact &= np.array_equal(o1[perm], o2) and np.array_equal(w1[:, perm][:, :, perm], w2)
    out.append(CheckResult("permutation_equivariance", bool(exact),
                           "outputs permute bit-for-bit" if exact else "outputs differ after permutation"))

    # block-diagonal projections: logits split into a feature term plus an embedding term
    a_q, a_k = rng.normal(size=(2, feature_dim, head_dim))
    b_q, b_k = rng.normal(size=(2, feature_dim, head_dim))
    wq = np.zeros((2 * feature_dim, 2 * head_dim))
    wk = np.zeros((2 * feature_dim, 2 * head_dim))
    wq[:feature_dim, :head_dim], wq[feature_dim:, head_dim:] = a_q, b_q
    wk[:feature_dim, :head_dim], wk[feature_dim:, head_dim:] = a_k, b_k
    x = np.concatenate([feats, embs], axis=1)
    joint = (x @ wq) @ (x @ wk).T
    split = (feats @ a_q) @ (feats @ a_k).T + (embs @ b_q) @ (embs @ b_k).T
    decomposition = float(np.abs(joint - split).max() / max(1.0, np.abs(split).max()))
    zeros = np.zeros(2 * head_dim)
    wv = Linear(rng.normal(size=(feature_dim, 2 * head_dim)), zeros)
    params = MhaParams(Linear(wq, zeros), Linear(wk, zeros), wv, Linear(np.eye(2 * head_dim), zeros),
                       heads=1, head_dim=2 * head_dim)
    _, w = attn_decoupled(feats, embs, params)
    weight_err = float(np.abs(w[0] - _softmax_rows(split / math.sqrt(2 * head_dim))).max())
    out.append(CheckResult("decoupled_decomposition", decomposition <= 1e-12 and weight_err <= 1e-12,
                           f"relative logit error {decomposition:.3e}, weight error {weight_err:.3e}"))

    wit = divergence_witness()
    differs = np.flatnonzero(wit["additive_argmax"] != wit["decoupled_argmax"])
    out.append(CheckResult("divergence_witness", bool(differs.size > 0),
                           f"argmax differs for queries {differs.tolist()}"))

    enc = init_anchor_encoder((8, 4, 4, 6), seed=seed)
    base = rng.normal(size=ENCODED_DIM)
    bumped = base.copy()
    bumped[6:8] += 1.0
    e0, e1 = encode_anchor(base, enc), encode_anchor(bumped, enc)
    changed = np.flatnonzero(e0 != e1)
    lo, hi = sum(enc.widths[:2]), sum(enc.widths[:3])
    local = bool(changed.size and changed.min() >= lo and changed.max() < hi)
    out.append(CheckResult("encoder_component_locality", local,
                           "a yaw change moves only the yaw sub-embedding" if local
                           else f"changed embedding columns {changed.tolist()}"))
    return out
