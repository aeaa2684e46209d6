"""Demographic feature encoding: continuous scaling, one-hot embedding
lookups, per-feature token construction, and multi-head attention fusion.

Each record yields six feature tokens in a fixed row order (age, height,
weight, duration, gender, pregnancy).  Continuous scalars are lifted to the
model dimension by trainable per-feature affine maps; discrete features are
embedding-table rows.  A single multi-head attention layer mixes the six
tokens and the output positions are mean-pooled into one vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import (
    CONTINUOUS_FIELDS,
    GENDERS,
    PREGNANCY_STATES,
    ContinuousNormalizer,
    PatientRecord,
)

# Fixed token row order; part of the model contract.
FEATURE_ORDER = CONTINUOUS_FIELDS + ("gender", "pregnancy")
N_FEATURES = len(FEATURE_ORDER)


def normalize_continuous(
    record: PatientRecord, norm: ContinuousNormalizer
) -> np.ndarray:
    """Per-feature scaled continuous values (age, height, weight, duration)."""
    return norm.normalize(record)


def one_hot_embed(value: str, domain: Sequence[str], table: np.ndarray) -> np.ndarray:
    """Select the embedding row indexed by the value's one-hot position."""
    try:
        idx = list(domain).index(value)
    except ValueError:
        raise ValueError(f"value {value!r} not in enumeration {list(domain)}") from None
    return table[idx]


def build_feature_tokens(
    cont: np.ndarray,
    disc: Sequence[np.ndarray],
    cont_weight: np.ndarray,
    cont_bias: np.ndarray,
) -> np.ndarray:
    """Stack one token per feature: continuous scalars as c*w_f + b_f, then the
    discrete embedding rows, in the fixed feature order."""
    if cont.shape[0] != cont_weight.shape[0] or cont.shape[0] != cont_bias.shape[0]:
        raise ValueError("continuous features and projections disagree in count")
    rows = [cont[f] * cont_weight[f] + cont_bias[f] for f in range(cont.shape[0])]
    rows.extend(np.asarray(v, dtype=np.float64) for v in disc)
    return np.stack(rows, axis=0)


@dataclass(frozen=True)
class AttentionParams:
    """Multi-head attention weights: shared Q/K/V input projections, per-head
    projection stacks, and the output projection."""

    in_q_w: np.ndarray
    in_q_b: np.ndarray
    in_k_w: np.ndarray
    in_k_b: np.ndarray
    in_v_w: np.ndarray
    in_v_b: np.ndarray
    head_q: np.ndarray  # (heads, d_model, d_head)
    head_k: np.ndarray
    head_v: np.ndarray
    out_w: np.ndarray  # (heads * d_head, d_model)

    def __post_init__(self) -> None:
        heads, d_model, d_head = self.head_q.shape
        if d_model != heads * d_head:
            raise ValueError(
                f"d_model ({d_model}) must equal heads*d_head ({heads}*{d_head})"
            )
        if self.out_w.shape != (heads * d_head, d_model):
            raise ValueError("output projection shape mismatch")

    @property
    def heads(self) -> int:
        return self.head_q.shape[0]

    @property
    def d_model(self) -> int:
        return self.head_q.shape[1]

    @property
    def d_head(self) -> int:
        return self.head_q.shape[2]


@dataclass
class AttentionCache:
    tokens: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    q_heads: np.ndarray
    k_heads: np.ndarray
    v_heads: np.ndarray
    weights: np.ndarray  # softmax output, (heads, n, n)
    concat: np.ndarray


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    expd = np.exp(shifted)
    return expd / expd.sum(axis=-1, keepdims=True)


def attention_forward(
    tokens: np.ndarray, params: AttentionParams
) -> tuple[np.ndarray, AttentionCache]:
    """Scaled dot-product multi-head attention over the feature tokens,
    mean-pooled over positions into a single vector."""
    q = tokens @ params.in_q_w + params.in_q_b
    k = tokens @ params.in_k_w + params.in_k_b
    v = tokens @ params.in_v_w + params.in_v_b
    q_heads = np.einsum("td,hdk->htk", q, params.head_q)
    k_heads = np.einsum("td,hdk->htk", k, params.head_k)
    v_heads = np.einsum("td,hdk->htk", v, params.head_v)
    scores = q_heads @ k_heads.transpose(0, 2, 1) / math.sqrt(params.d_head)
    weights = _softmax_rows(scores)
    per_head = weights @ v_heads  # (heads, n, d_head)
    concat = per_head.transpose(1, 0, 2).reshape(tokens.shape[0], -1)
    mixed = concat @ params.out_w
    out = mixed.mean(axis=0)
    cache = AttentionCache(
        tokens=tokens, q=q, k=k, v=v,
        q_heads=q_heads, k_heads=k_heads, v_heads=v_heads,
        weights=weights, concat=concat,
    )
    return out, cache


def attention_backward(
    cache: AttentionCache, g_out: np.ndarray, grads: AttentionParams,
    params: AttentionParams,
) -> np.ndarray:
    """Accumulate attention parameter gradients; return dLoss/dtokens."""
    n = cache.tokens.shape[0]
    g_mixed = np.tile(g_out / n, (n, 1))
    grads.out_w[...] += cache.concat.T @ g_mixed
    g_concat = g_mixed @ params.out_w.T
    g_per_head = g_concat.reshape(n, params.heads, params.d_head).transpose(1, 0, 2)
    g_weights = g_per_head @ cache.v_heads.transpose(0, 2, 1)
    g_v_heads = cache.weights.transpose(0, 2, 1) @ g_per_head
    # softmax rows: dS = A * (dA - sum(dA * A))
    dot = (g_weights * cache.weights).sum(axis=-1, keepdims=True)
    g_scores = cache.weights * (g_weights - dot) / math.sqrt(params.d_head)
    g_q_heads = g_scores @ cache.k_heads
    g_k_heads = g_scores.transpose(0, 2, 1) @ cache.q_heads
    grads.head_q[...] += np.einsum("td,htk->hdk", cache.q, g_q_heads)
    grads.head_k[...] += np.einsum("td,htk->hdk", cache.k, g_k_heads)
    grads.head_v[...] += np.einsum("td,htk->hdk", cache.v, g_v_heads)
    g_q = np.einsum("htk,hdk->td", g_q_heads, params.head_q)
    g_k = np.einsum("htk,hdk->td", g_k_heads, params.head_k)
    g_v = np.einsum("htk,hdk->td", g_v_heads, params.head_v)
    grads.in_q_w[...] += cache.tokens.T @ g_q
    grads.in_q_b[...] += g_q.sum(axis=0)
    grads.in_k_w[...] += cache.tokens.T @ g_k
    grads.in_k_b[...] += g_k.sum(axis=0)
    grads.in_v_w[...] += cache.tokens.T @ g_v
    grads.in_v_b[...] += g_v.sum(axis=0)
    return g_q @ params.in_q_w.T + g_k @ params.in_k_w.T + g_v @ params.in_v_w.T


def multi_head_attention(tokens: np.ndarray, params: AttentionParams) -> np.ndarray:
    """Forward-only attention fusion of the feature tokens."""
    out, _ = attention_forward(tokens, params)
    return out


@dataclass
class DemoCache:
    cont: np.ndarray
    gender_idx: int
    pregnancy_idx: int
    attention: AttentionCache


def demo_forward(
    cont: np.ndarray,
    gender_idx: int,
    pregnancy_idx: int,
    gender_table: np.ndarray,
    pregnancy_table: np.ndarray,
    cont_weight: np.ndarray,
    cont_bias: np.ndarray,
    attn: AttentionParams,
) -> tuple[np.ndarray, DemoCache]:
    tokens = build_feature_tokens(
        cont,
        (gender_table[gender_idx], pregnancy_table[pregnancy_idx]),
        cont_weight,
        cont_bias,
    )
    out, attn_cache = attention_forward(tokens, attn)
    return out, DemoCache(
        cont=cont, gender_idx=gender_idx, pregnancy_idx=pregnancy_idx,
        attention=attn_cache,
    )


def demo_backward(
    cache: DemoCache,
    g_out: np.ndarray,
    g_gender_table: np.ndarray,
    g_pregnancy_table: np.ndarray,
    g_cont_weight: np.ndarray,
    g_cont_bias: np.ndarray,
    g_attn: AttentionParams,
    attn: AttentionParams,
) -> None:
    g_tokens = attention_backward(cache.attention, g_out, g_attn, attn)
    n_cont = cache.cont.shape[0]
    for f in range(n_cont):
        g_cont_weight[f] += cache.cont[f] * g_tokens[f]
        g_cont_bias[f] += g_tokens[f]
    g_gender_table[cache.gender_idx] += g_tokens[n_cont]
    g_pregnancy_table[cache.pregnancy_idx] += g_tokens[n_cont + 1]


def encode_demographics(
    record: PatientRecord,
    norm: ContinuousNormalizer,
    gender_table: np.ndarray,
    pregnancy_table: np.ndarray,
    cont_weight: np.ndarray,
    cont_bias: np.ndarray,
    attn: AttentionParams,
) -> np.ndarray:
    """Full chain: scale continuous features, embed discrete ones, build
    feature tokens, and fuse with attention."""
    cont = normalize_continuous(record, norm)
    gender_idx = GENDERS.index(record.gender)
    pregnancy_idx = PREGNANCY_STATES.index(record.pregnancy)
    out, _ = demo_forward(
        cont, gender_idx, pregnancy_idx,
        gender_table, pregnancy_table, cont_weight, cont_bias, attn,
    )
    return out
