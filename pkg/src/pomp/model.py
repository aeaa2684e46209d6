"""Two-tier classifier: embedding fusion, the category head, and the
per-category disease heads, plus full-record prediction.

Tier 1 fuses the demographic and text embeddings (concat, linear,
L2-normalize) and applies a softmax over categories.  The argmax category
routes to tier 2, where a category-specific fusion and disease head produce
a distribution over that category's disease subset.  Composite per-disease
scores marginalize over categories for a single global ranking.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .config import TrainingConfig
from .data import (
    GENDERS,
    PREGNANCY_STATES,
    ContinuousNormalizer,
    PatientRecord,
    Taxonomy,
)
from .demographics import AttentionParams, demo_forward
from .text import Vocabulary, compose_sentence, l2_normalize, split_text, text_forward

TEXT_TABLE = "text.token_table"


def stable_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    expd = np.exp(shifted)
    return expd / expd.sum()


def rank_descending(scores: np.ndarray) -> np.ndarray:
    """Indices sorted by descending score; ties broken by lowest index."""
    return np.argsort(-np.asarray(scores), kind="stable")


@dataclass
class ModelParams:
    """All trainable tensors plus the frozen artifacts they depend on.

    Tensors live in an insertion-ordered name->array dict so the optimizer,
    gradient checker, and checkpoint writer can treat them generically.
    """

    tensors: dict[str, np.ndarray]
    taxonomy: Taxonomy
    vocab: Vocabulary | None
    normalizer: ContinuousNormalizer
    config: TrainingConfig
    _version: str | None = field(default=None, repr=False)

    def attention(self, source: Mapping[str, np.ndarray] | None = None) -> AttentionParams:
        t = self.tensors if source is None else source
        return AttentionParams(
            in_q_w=t["attn.in_q_w"], in_q_b=t["attn.in_q_b"],
            in_k_w=t["attn.in_k_w"], in_k_b=t["attn.in_k_b"],
            in_v_w=t["attn.in_v_w"], in_v_b=t["attn.in_v_b"],
            head_q=t["attn.head_q"], head_k=t["attn.head_k"],
            head_v=t["attn.head_v"], out_w=t["attn.out_w"],
        )

    def zero_like_tensors(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(arr) for name, arr in self.tensors.items()}

    def clone(self) -> "ModelParams":
        return ModelParams(
            tensors={name: arr.copy() for name, arr in self.tensors.items()},
            taxonomy=self.taxonomy,
            vocab=self.vocab,
            normalizer=self.normalizer,
            config=self.config,
        )

    @property
    def version(self) -> str:
        """Deterministic short digest of the parameter bytes."""
        if self._version is None:
            digest = hashlib.sha256()
            for name in self.tensors:
                digest.update(name.encode())
                digest.update(self.tensors[name].astype("<f8").tobytes())
            self._version = f"1-{digest.hexdigest()[:12]}"
        return self._version

    def invalidate_version(self) -> None:
        self._version = None


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_model(
    taxonomy: Taxonomy,
    vocab: Vocabulary | None,
    normalizer: ContinuousNormalizer,
    config: TrainingConfig,
) -> ModelParams:
    """Freshly initialized parameters: bounded-uniform weights (scale
    1/sqrt(fan_in)), zero biases, deterministic for a given seed."""
    if config.backend == "trainable" and vocab is None:
        raise ValueError("the trainable backend requires a vocabulary")
    rng = np.random.default_rng(config.seed)
    dm, dt, df, h = config.d_model, config.d_text, config.d_fuse, config.heads
    dh = config.d_head
    d_in = dm + dt
    tensors: dict[str, np.ndarray] = {}
    if config.backend == "trainable":
        assert vocab is not None
        tensors[TEXT_TABLE] = _uniform(rng, (vocab.size, dt), dt)
    tensors["demo.gender_table"] = _uniform(rng, (len(GENDERS), dm), dm)
    tensors["demo.pregnancy_table"] = _uniform(rng, (len(PREGNANCY_STATES), dm), dm)
    tensors["demo.cont_weight"] = _uniform(rng, (4, dm), dm)
    tensors["demo.cont_bias"] = np.zeros((4, dm))
    for name in ("q", "k", "v"):
        tensors[f"attn.in_{name}_w"] = _uniform(rng, (dm, dm), dm)
        tensors[f"attn.in_{name}_b"] = np.zeros(dm)
    tensors["attn.head_q"] = _uniform(rng, (h, dm, dh), dm)
    tensors["attn.head_k"] = _uniform(rng, (h, dm, dh), dm)
    tensors["attn.head_v"] = _uniform(rng, (h, dm, dh), dm)
    tensors["attn.out_w"] = _uniform(rng, (h * dh, dm), h * dh)
    tensors["tier1.fuse_w"] = _uniform(rng, (d_in, df), d_in)
    tensors["tier1.fuse_b"] = np.zeros(df)
    tensors["tier1.head_w"] = _uniform(rng, (df, len(taxonomy.categories)), df)
    tensors["tier1.head_b"] = np.zeros(len(taxonomy.categories))
    for i, cate in enumerate(taxonomy.categories):
        m = len(taxonomy.membership[cate])
        tensors[f"tier2.{i:03d}.fuse_w"] = _uniform(rng, (d_in, df), d_in)
        tensors[f"tier2.{i:03d}.fuse_b"] = np.zeros(df)
        tensors[f"tier2.{i:03d}.head_w"] = _uniform(rng, (df, m), df)
        tensors[f"tier2.{i:03d}.head_b"] = np.zeros(m)
    return ModelParams(
        tensors=tensors,
        taxonomy=taxonomy,
        vocab=vocab,
        normalizer=normalizer,
        config=config,
    )


@dataclass(frozen=True)
class RecordFeatures:
    """Model-ready view of one record: trimmed token ids (or a precomputed
    text vector), scaled continuous values, discrete indices, label indices."""

    token_ids: np.ndarray | None
    text_vector: np.ndarray | None
    cont: np.ndarray
    gender_idx: int
    pregnancy_idx: int
    category_idx: int = -1
    disease_local_idx: int = -1
    disease_global_idx: int = -1


def featurize(record: PatientRecord, model: ModelParams) -> RecordFeatures:
    cfg = model.config
    if cfg.backend == "trainable":
        assert model.vocab is not None
        tokens = split_text(compose_sentence(record))[: cfg.max_len]
        token_ids = np.array(
            [model.vocab.id_for(t) for t in tokens], dtype=np.int64
        )
        text_vector = None
    else:
        if record.precomputed_text_embedding is None:
            raise ValueError("record has no precomputed text embedding")
        token_ids = None
        text_vector = np.asarray(record.precomputed_text_embedding, dtype=np.float64)
        if text_vector.shape != (cfg.d_text,):
            raise ValueError(
                f"precomputed embedding has length {text_vector.shape[0]}, "
                f"expected {cfg.d_text}"
            )
    cat_idx = dise_local = dise_global = -1
    if record.category_label:
        taxonomy = model.taxonomy
        cat_idx = taxonomy.category_index[record.category_label]
        dise_local = taxonomy.local_disease_index(
            record.category_label, record.disease_label
        )
        dise_global = taxonomy.disease_index[record.disease_label]
    return RecordFeatures(
        token_ids=token_ids,
        text_vector=text_vector,
        cont=model.normalizer.normalize(record),
        gender_idx=GENDERS.index(record.gender),
        pregnancy_idx=PREGNANCY_STATES.index(record.pregnancy),
        category_idx=cat_idx,
        disease_local_idx=dise_local,
        disease_global_idx=dise_global,
    )


def fuse_embeddings(
    emb_data: np.ndarray,
    emb_text: np.ndarray,
    fuse_w: np.ndarray,
    fuse_b: np.ndarray,
    epsilon: float = 1e-9,
) -> np.ndarray:
    """Concat, linear map, L2-normalize."""
    z = np.concatenate([emb_data, emb_text])
    return l2_normalize(z @ fuse_w + fuse_b, epsilon)


def predict_category(fused: np.ndarray, head_w: np.ndarray, head_b: np.ndarray) -> np.ndarray:
    """Softmax distribution over categories."""
    return stable_softmax(fused @ head_w + head_b)


def predict_disease(
    emb_data: np.ndarray,
    emb_text: np.ndarray,
    category: str,
    model: ModelParams,
) -> np.ndarray:
    """Distribution over one category's disease subset via that category's own
    fusion and head."""
    if category not in model.taxonomy.category_index:
        raise ValueError(f"unknown category {category!r}")
    i = model.taxonomy.category_index[category]
    t = model.tensors
    fused = fuse_embeddings(
        emb_data, emb_text,
        t[f"tier2.{i:03d}.fuse_w"], t[f"tier2.{i:03d}.fuse_b"],
        model.config.epsilon,
    )
    return stable_softmax(fused @ t[f"tier2.{i:03d}.head_w"] + t[f"tier2.{i:03d}.head_b"])


@dataclass(frozen=True)
class Prediction:
    """Tier-1 distribution, routed category, within-category disease
    distribution, and marginalized global disease scores."""

    category_probs: np.ndarray
    selected_category: str
    disease_probs: np.ndarray
    composite_scores: np.ndarray


def encode_record(
    features: RecordFeatures, model: ModelParams, mode: str | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """(Emb_data, Emb_text) for a featurized record.  ``text_only`` mode zeroes
    the demographic embedding."""
    cfg = model.config
    mode = mode or cfg.mode
    t = model.tensors
    if features.token_ids is not None:
        emb_text, _ = text_forward(features.token_ids, t[TEXT_TABLE], cfg.epsilon)
    else:
        assert features.text_vector is not None
        emb_text = l2_normalize(features.text_vector, cfg.epsilon)
    if mode == "text_only":
        emb_data = np.zeros(cfg.d_model)
    else:
        emb_data, _ = demo_forward(
            features.cont, features.gender_idx, features.pregnancy_idx,
            t["demo.gender_table"], t["demo.pregnancy_table"],
            t["demo.cont_weight"], t["demo.cont_bias"], model.attention(),
        )
    return emb_data, emb_text


def predict_features(
    features: RecordFeatures, model: ModelParams, mode: str | None = None
) -> Prediction:
    taxonomy = model.taxonomy
    cfg = model.config
    t = model.tensors
    emb_data, emb_text = encode_record(features, model, mode)
    fused = fuse_embeddings(
        emb_data, emb_text, t["tier1.fuse_w"], t["tier1.fuse_b"], cfg.epsilon
    )
    category_probs = predict_category(fused, t["tier1.head_w"], t["tier1.head_b"])
    selected_idx = int(np.argmax(category_probs))
    selected = taxonomy.categories[selected_idx]
    composite = np.zeros(len(taxonomy.diseases))
    disease_probs: np.ndarray | None = None
    for idx, cate in enumerate(taxonomy.categories):
        probs = predict_disease(emb_data, emb_text, cate, model)
        if idx == selected_idx:
            disease_probs = probs
        for local, disease in enumerate(taxonomy.membership[cate]):
            composite[taxonomy.disease_index[disease]] += (
                category_probs[idx] * probs[local]
            )
    assert disease_probs is not None
    return Prediction(
        category_probs=category_probs,
        selected_category=selected,
        disease_probs=disease_probs,
        composite_scores=composite,
    )


def predict_full(
    record: PatientRecord, model: ModelParams, mode: str | None = None
) -> Prediction:
    """End-to-end prediction for one raw record."""
    return predict_features(featurize(record, model), model, mode)
