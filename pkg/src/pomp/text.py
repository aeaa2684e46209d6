"""Narrative text encoding: prompt composition, tokenization, embedding
lookup, masked mean pooling, and L2 normalization.

The token-embedding backend is pluggable: a trainable table over a
vocabulary built from the training split (default), or precomputed sentence
vectors carried by the records themselves, in which case only the final
normalization applies.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .data import Dataset, PatientRecord

# Order in which per-field prompts are concatenated into one sentence.
PROMPT_ORDER = ("chronic", "therapy", "usage", "surgery", "symptom", "allergy")

PAD_ID = 0
UNK_ID = 1

# Lowercase split on whitespace/punctuation; CJK ideographs are single tokens.
_CJK = "㐀-䶿一-鿿豈-﫿"
_TOKEN_RE = re.compile(rf"[{_CJK}]|[^\W_{_CJK}]+", re.UNICODE)


def split_text(text: str) -> list[str]:
    """Unicode-aware lowercase tokenization on whitespace and punctuation."""
    return _TOKEN_RE.findall(text.lower())


def build_prompt(field_type: str, text: str) -> str:
    """Render one field as ``"<field_type> is <text>"``.

    Empty or whitespace-only text yields the empty string: blank fields are
    skipped rather than contributing contentless prompts.
    """
    if field_type not in PROMPT_ORDER:
        raise ValueError(f"unknown text field {field_type!r}")
    if not text.strip():
        return ""
    return f"{field_type} is {text}"


def compose_sentence(record: PatientRecord) -> str:
    """Join the record's non-empty field prompts, in fixed order, with ". "."""
    prompts = [build_prompt(name, record.text(name)) for name in PROMPT_ORDER]
    return ". ".join(p for p in prompts if p)


@dataclass(frozen=True)
class Vocabulary:
    """Frozen token-to-id map built from the training split only.

    Id 0 is padding, id 1 is the unknown token; real tokens start at 2.
    """

    token_to_id: Mapping[str, int]

    def __post_init__(self) -> None:
        ids = list(self.token_to_id.values())
        if len(set(ids)) != len(ids):
            raise ValueError("vocabulary ids must be unique")
        for token, reserved in (("<pad>", PAD_ID), ("<unk>", UNK_ID)):
            if self.token_to_id.get(token, reserved) != reserved:
                raise ValueError(f"{token} must map to id {reserved}")
        for token, idx in self.token_to_id.items():
            if idx in (PAD_ID, UNK_ID) and token not in ("<pad>", "<unk>"):
                raise ValueError(f"id {idx} is reserved, cannot assign to {token!r}")

    @property
    def size(self) -> int:
        """Number of embedding rows needed (highest id + 1, at least 2)."""
        return max(max(self.token_to_id.values(), default=1) + 1, 2)

    def id_for(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    @classmethod
    def build(cls, train: Dataset, max_size: int | None = None) -> "Vocabulary":
        """Count tokens over the training split's composed sentences and assign
        ids by descending frequency (ties broken alphabetically)."""
        counts: dict[str, int] = {}
        for record in train:
            for token in split_text(compose_sentence(record)):
                counts[token] = counts.get(token, 0) + 1
        ordered = sorted(counts, key=lambda t: (-counts[t], t))
        if max_size is not None:
            ordered = ordered[: max(max_size - 2, 0)]
        mapping = {"<pad>": PAD_ID, "<unk>": UNK_ID}
        for offset, token in enumerate(ordered):
            mapping[token] = 2 + offset
        return cls(token_to_id=mapping)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(dict(self.token_to_id), ensure_ascii=False, indent=2),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls(token_to_id=json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class TokenSequence:
    """Ids plus attention mask, padded/truncated to a fixed length."""

    token_ids: np.ndarray
    mask: np.ndarray

    def __post_init__(self) -> None:
        if self.token_ids.shape != self.mask.shape:
            raise ValueError("token_ids and mask must have equal length")

    def real_ids(self) -> np.ndarray:
        """Ids at mask-1 positions (padding stripped)."""
        return self.token_ids[self.mask == 1]


def tokenize(sentence: str, vocab: Vocabulary, max_len: int) -> TokenSequence:
    """Convert a sentence to padded ids and a binary attention mask."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    tokens = split_text(sentence)[:max_len]
    ids = np.full(max_len, PAD_ID, dtype=np.int64)
    mask = np.zeros(max_len, dtype=np.int64)
    for i, token in enumerate(tokens):
        ids[i] = vocab.id_for(token)
        mask[i] = 1
    return TokenSequence(token_ids=ids, mask=mask)


def embed_tokens(tokens: TokenSequence, table: np.ndarray) -> np.ndarray:
    """Row lookup per token id; padding positions get the padding row."""
    if tokens.token_ids.size and int(tokens.token_ids.max()) >= table.shape[0]:
        raise ValueError(
            f"token id {int(tokens.token_ids.max())} out of range for a table "
            f"with {table.shape[0]} rows"
        )
    return table[tokens.token_ids]


def masked_mean_pool(
    emb: np.ndarray, mask: np.ndarray, epsilon: float = 1e-9
) -> np.ndarray:
    """Mask-weighted mean over token positions: sum(mask_i * emb_i) divided by
    max(sum(mask), epsilon)."""
    mask = np.asarray(mask, dtype=np.float64)
    if emb.shape[0] != mask.shape[0]:
        raise ValueError("embedding rows and mask length must agree")
    denom = max(float(mask.sum()), epsilon)
    return (mask[:, None] * emb).sum(axis=0) / denom


def l2_normalize(v: np.ndarray, epsilon: float = 1e-9) -> np.ndarray:
    """v / max(||v||_2, epsilon); the zero vector maps to itself."""
    v = np.asarray(v, dtype=np.float64)
    return v / max(float(np.linalg.norm(v)), epsilon)


def encode_text(
    record: PatientRecord,
    vocab: Vocabulary,
    table: np.ndarray,
    max_len: int,
    epsilon: float = 1e-9,
) -> np.ndarray:
    """Full chain: compose, tokenize, embed, pool, normalize (trainable backend)."""
    seq = tokenize(compose_sentence(record), vocab, max_len)
    pooled = masked_mean_pool(embed_tokens(seq, table), seq.mask, epsilon)
    return l2_normalize(pooled, epsilon)


def encode_text_precomputed(
    record: PatientRecord, d_text: int, epsilon: float = 1e-9
) -> np.ndarray:
    """Normalize a record-supplied sentence vector (precomputed backend)."""
    if record.precomputed_text_embedding is None:
        raise ValueError("record has no precomputed text embedding")
    vector = np.asarray(record.precomputed_text_embedding, dtype=np.float64)
    if vector.shape != (d_text,):
        raise ValueError(
            f"precomputed embedding has length {vector.shape[0]}, expected {d_text}"
        )
    return l2_normalize(vector, epsilon)


# Forward/backward pair used by training.  The forward consumes pre-trimmed
# real-token ids (padding contributes nothing; see the padding-invariance
# property) and caches what the analytic gradient needs.


@dataclass
class TextCache:
    ids: np.ndarray
    denom: float
    pooled: np.ndarray
    norm: float
    out: np.ndarray


def text_forward(
    ids: np.ndarray, table: np.ndarray, epsilon: float
) -> tuple[np.ndarray, TextCache]:
    d_text = table.shape[1]
    if ids.size:
        summed = table[ids].sum(axis=0)
        denom = max(float(ids.size), epsilon)
    else:
        summed = np.zeros(d_text, dtype=np.float64)
        denom = epsilon
    pooled = summed / denom
    norm = float(np.linalg.norm(pooled))
    out = pooled / max(norm, epsilon)
    return out, TextCache(ids=ids, denom=denom, pooled=pooled, norm=norm, out=out)


def normalize_backward(
    g_out: np.ndarray, out: np.ndarray, norm: float, epsilon: float
) -> np.ndarray:
    """Gradient through v -> v / max(||v||, eps)."""
    if norm > epsilon:
        return (g_out - out * float(out @ g_out)) / norm
    return g_out / epsilon


def text_backward(
    cache: TextCache, g_out: np.ndarray, g_table: np.ndarray, epsilon: float
) -> None:
    """Accumulate dLoss/dtable for one record given dLoss/dtext_embedding."""
    g_pooled = normalize_backward(g_out, cache.out, cache.norm, epsilon)
    if cache.ids.size:
        np.add.at(g_table, cache.ids, g_pooled / cache.denom)
