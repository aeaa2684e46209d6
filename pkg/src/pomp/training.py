"""Joint weighted cross-entropy objective, analytic backpropagation through
the whole pipeline, finite-difference gradient verification, the training
loop, and binary checkpoint persistence.

Gradients are derived by hand, module by module (softmax heads, L2
normalization, fusion linears, attention, pooling, embedding lookups), and
verified against central finite differences at fp64.  Tier-2 routing is a
hard selection: no gradient flows through the routing decision itself.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .config import TrainingConfig
from .data import ContinuousNormalizer, Dataset, Taxonomy
from .demographics import DemoCache, demo_backward, demo_forward
from .model import (
    TEXT_TABLE,
    ModelParams,
    RecordFeatures,
    featurize,
    init_model,
    stable_softmax,
)
from .text import TextCache, Vocabulary, l2_normalize, normalize_backward, text_backward, text_forward

GradientSet = dict[str, np.ndarray]

CHECKPOINT_MAGIC = b"POMPMDL1"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for unreadable, truncated, or version-mismatched checkpoints."""


def cross_entropy(target: np.ndarray, probs: np.ndarray, epsilon: float = 1e-9) -> float:
    """Negative log-likelihood -sum(y_i * log(max(p_i, eps))) for a one-hot y."""
    target = np.asarray(target, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    return float(-(target * np.log(np.maximum(probs, epsilon))).sum())


def joint_loss(
    cat_target: np.ndarray,
    cat_probs: np.ndarray,
    dise_target: np.ndarray,
    dise_probs: np.ndarray,
    alpha: float,
    epsilon: float = 1e-9,
) -> float:
    """Category cross-entropy plus alpha-weighted disease cross-entropy."""
    return cross_entropy(cat_target, cat_probs, epsilon) + alpha * cross_entropy(
        dise_target, dise_probs, epsilon
    )


@dataclass
class _Context:
    """Static lookups shared across records during training/inference."""

    cfg: TrainingConfig
    taxonomy: Taxonomy
    # per category index: global disease index -> local position in the subset
    local_of: list[dict[int, int]]

    @classmethod
    def build(cls, model: ModelParams, cfg: TrainingConfig | None = None) -> "_Context":
        taxonomy = model.taxonomy
        local_of = []
        for cate in taxonomy.categories:
            local_of.append(
                {
                    taxonomy.disease_index[d]: j
                    for j, d in enumerate(taxonomy.membership[cate])
                }
            )
        return cls(cfg=cfg or model.config, taxonomy=taxonomy, local_of=local_of)


@dataclass
class _RecordCache:
    text: TextCache | None
    demo: DemoCache | None
    emb_data: np.ndarray
    emb_text: np.ndarray
    z: np.ndarray
    f1: np.ndarray
    n1: float
    cat_probs: np.ndarray
    route: int
    target_local: int | None
    f2: np.ndarray | None
    n2: float
    dise_probs: np.ndarray | None


def _ce_by_index(probs: np.ndarray, idx: int, epsilon: float) -> tuple[float, np.ndarray]:
    """Loss and dLoss/dlogits of a stable-softmax cross-entropy at one index.

    When the target probability falls below the epsilon floor the clamped
    loss is constant, so the gradient is zero.
    """
    p = float(probs[idx])
    loss = -math.log(max(p, epsilon))
    if p < epsilon:
        return loss, np.zeros_like(probs)
    grad = probs.copy()
    grad[idx] -= 1.0
    return loss, grad


def _forward_record(
    tensors: Mapping[str, np.ndarray],
    ft: RecordFeatures,
    ctx: _Context,
    want_cache: bool,
) -> tuple[float, _RecordCache | None]:
    cfg = ctx.cfg
    eps = cfg.epsilon
    if ft.token_ids is not None:
        emb_text, text_cache = text_forward(ft.token_ids, tensors[TEXT_TABLE], eps)
    else:
        assert ft.text_vector is not None
        emb_text = l2_normalize(ft.text_vector, eps)
        text_cache = None
    if cfg.mode == "text_only":
        emb_data = np.zeros(cfg.d_model)
        demo_cache = None
    else:
        attn = _attention_view(tensors)
        emb_data, demo_cache = demo_forward(
            ft.cont, ft.gender_idx, ft.pregnancy_idx,
            tensors["demo.gender_table"], tensors["demo.pregnancy_table"],
            tensors["demo.cont_weight"], tensors["demo.cont_bias"], attn,
        )
    z = np.concatenate([emb_data, emb_text])

    u1 = z @ tensors["tier1.fuse_w"] + tensors["tier1.fuse_b"]
    n1 = float(np.linalg.norm(u1))
    f1 = u1 / max(n1, eps)
    cat_probs = stable_softmax(f1 @ tensors["tier1.head_w"] + tensors["tier1.head_b"])
    cat_loss, _ = _ce_by_index(cat_probs, ft.category_idx, eps)

    if cfg.routing_mode == "gold":
        route = ft.category_idx
        target_local: int | None = ft.disease_local_idx
    else:
        route = int(np.argmax(cat_probs))
        target_local = ctx.local_of[route].get(ft.disease_global_idx)

    f2 = None
    n2 = 0.0
    dise_probs = None
    dise_loss = 0.0
    if cfg.alpha > 0 and target_local is not None:
        key = f"tier2.{route:03d}"
        u2 = z @ tensors[f"{key}.fuse_w"] + tensors[f"{key}.fuse_b"]
        n2 = float(np.linalg.norm(u2))
        f2 = u2 / max(n2, eps)
        dise_probs = stable_softmax(f2 @ tensors[f"{key}.head_w"] + tensors[f"{key}.head_b"])
        dise_loss, _ = _ce_by_index(dise_probs, target_local, eps)

    loss = cat_loss + cfg.alpha * dise_loss
    if not want_cache:
        return loss, None
    return loss, _RecordCache(
        text=text_cache, demo=demo_cache, emb_data=emb_data, emb_text=emb_text,
        z=z, f1=f1, n1=n1, cat_probs=cat_probs, route=route,
        target_local=target_local, f2=f2, n2=n2, dise_probs=dise_probs,
    )


def _attention_view(tensors: Mapping[str, np.ndarray]):
    from .demographics import AttentionParams

    return AttentionParams(
        in_q_w=tensors["attn.in_q_w"], in_q_b=tensors["attn.in_q_b"],
        in_k_w=tensors["attn.in_k_w"], in_k_b=tensors["attn.in_k_b"],
        in_v_w=tensors["attn.in_v_w"], in_v_b=tensors["attn.in_v_b"],
        head_q=tensors["attn.head_q"], head_k=tensors["attn.head_k"],
        head_v=tensors["attn.head_v"], out_w=tensors["attn.out_w"],
    )


def _backward_record(
    tensors: Mapping[str, np.ndarray],
    ft: RecordFeatures,
    cache: _RecordCache,
    ctx: _Context,
    grads: GradientSet,
) -> None:
    cfg = ctx.cfg
    eps = cfg.epsilon

    # Tier-1 head and fusion.
    _, g_cat_logits = _ce_by_index(cache.cat_probs, ft.category_idx, eps)
    grads["tier1.head_w"] += np.outer(cache.f1, g_cat_logits)
    grads["tier1.head_b"] += g_cat_logits
    g_f1 = g_cat_logits @ tensors["tier1.head_w"].T
    g_u1 = normalize_backward(g_f1, cache.f1, cache.n1, eps)
    grads["tier1.fuse_w"] += np.outer(cache.z, g_u1)
    grads["tier1.fuse_b"] += g_u1
    g_z = g_u1 @ tensors["tier1.fuse_w"].T

    # Tier-2 head and fusion for the routed category (selection itself gets
    # no gradient).
    if cache.dise_probs is not None:
        assert cache.f2 is not None and cache.target_local is not None
        key = f"tier2.{cache.route:03d}"
        _, g_dise_logits = _ce_by_index(cache.dise_probs, cache.target_local, eps)
        g_dise_logits = cfg.alpha * g_dise_logits
        grads[f"{key}.head_w"] += np.outer(cache.f2, g_dise_logits)
        grads[f"{key}.head_b"] += g_dise_logits
        g_f2 = g_dise_logits @ tensors[f"{key}.head_w"].T
        g_u2 = normalize_backward(g_f2, cache.f2, cache.n2, eps)
        grads[f"{key}.fuse_w"] += np.outer(cache.z, g_u2)
        grads[f"{key}.fuse_b"] += g_u2
        g_z = g_z + g_u2 @ tensors[f"{key}.fuse_w"].T

    g_emb_data = g_z[: cfg.d_model]
    g_emb_text = g_z[cfg.d_model :]

    if cache.text is not None:
        text_backward(cache.text, g_emb_text, grads[TEXT_TABLE], eps)
    if cache.demo is not None:
        demo_backward(
            cache.demo, g_emb_data,
            grads["demo.gender_table"], grads["demo.pregnancy_table"],
            grads["demo.cont_weight"], grads["demo.cont_bias"],
            _attention_view(grads), _attention_view(tensors),
        )


def _featurize_batch(
    batch: Sequence, model: ModelParams
) -> list[RecordFeatures]:
    return [
        item if isinstance(item, RecordFeatures) else featurize(item, model)
        for item in batch
    ]


def backward(
    batch: Sequence,
    model: ModelParams,
    config: TrainingConfig | None = None,
) -> tuple[float, GradientSet]:
    """Mean loss over the batch and exact analytic gradients of every tensor.

    ``batch`` may hold PatientRecords or pre-featurized RecordFeatures.
    """
    ctx = _Context.build(model, config)
    features = _featurize_batch(batch, model)
    if not features:
        raise ValueError("empty batch")
    grads = model.zero_like_tensors()
    total = 0.0
    for ft in features:
        loss, cache = _forward_record(model.tensors, ft, ctx, want_cache=True)
        assert cache is not None
        total += loss
        _backward_record(model.tensors, ft, cache, ctx, grads)
    scale = 1.0 / len(features)
    for name in grads:
        grads[name] *= scale
    return total * scale, grads


def batch_loss(
    tensors: Mapping[str, np.ndarray],
    features: Sequence[RecordFeatures],
    ctx: _Context,
) -> float:
    """Mean loss only; shares the forward path with backward()."""
    total = 0.0
    for ft in features:
        loss, _ = _forward_record(tensors, ft, ctx, want_cache=False)
        total += loss
    return total / len(features)


@dataclass
class FiniteDifferenceReport:
    """Outcome of comparing analytic gradients to central differences."""

    max_relative_error: float
    coordinates_checked: int
    tolerance: float
    passed: bool
    per_tensor: dict[str, float]
    failures: list[dict] = field(default_factory=list)


def finite_difference_check(
    model: ModelParams,
    batch: Sequence,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    sample_size: int = 200,
    seed: int = 0,
    config: TrainingConfig | None = None,
) -> FiniteDifferenceReport:
    """Compare analytic gradients to (L(t+h) - L(t-h)) / 2h on a random sample
    of coordinates spanning every tensor.  Failures are reported, not thrown.

    Relative error uses a 1e-6 magnitude floor so coordinates whose analytic
    and numeric gradients are both numerically zero do not divide by zero.
    """
    ctx = _Context.build(model, config)
    features = _featurize_batch(batch, model)
    _, grads = backward(features, model, config)
    rng = np.random.default_rng(seed)
    names = list(model.tensors)
    per_take = max(1, math.ceil(sample_size / len(names)))
    allocation = {name: min(per_take, model.tensors[name].size) for name in names}
    # small tensors cap out below their share; top up from the largest ones
    deficit = sample_size - sum(allocation.values())
    for name in sorted(names, key=lambda n: -model.tensors[n].size):
        if deficit <= 0:
            break
        spare = model.tensors[name].size - allocation[name]
        extra = min(spare, deficit)
        allocation[name] += extra
        deficit -= extra
    coords: list[tuple[str, int]] = []
    for name in names:
        picks = rng.choice(model.tensors[name].size, size=allocation[name],
                           replace=False)
        coords.extend((name, int(i)) for i in picks)

    max_rel = 0.0
    per_tensor: dict[str, float] = {name: 0.0 for name in names}
    failures: list[dict] = []
    for name, flat_idx in coords:
        tensor = model.tensors[name]
        flat = tensor.reshape(-1)
        original = flat[flat_idx]
        flat[flat_idx] = original + step
        loss_plus = batch_loss(model.tensors, features, ctx)
        flat[flat_idx] = original - step
        loss_minus = batch_loss(model.tensors, features, ctx)
        flat[flat_idx] = original
        numeric = (loss_plus - loss_minus) / (2.0 * step)
        analytic = float(grads[name].reshape(-1)[flat_idx])
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        max_rel = max(max_rel, rel)
        per_tensor[name] = max(per_tensor[name], rel)
        if rel > tolerance:
            failures.append(
                {
                    "tensor": name,
                    "index": flat_idx,
                    "analytic": analytic,
                    "numeric": numeric,
                    "relative_error": rel,
                }
            )
    return FiniteDifferenceReport(
        max_relative_error=max_rel,
        coordinates_checked=len(coords),
        tolerance=tolerance,
        passed=max_rel <= tolerance,
        per_tensor=per_tensor,
        failures=failures,
    )


class _Adam:
    """Standard Adam with bias correction; state per tensor name."""

    def __init__(self, cfg: TrainingConfig, tensors: Mapping[str, np.ndarray]):
        self.cfg = cfg
        self.m = {n: np.zeros_like(a) for n, a in tensors.items()}
        self.v = {n: np.zeros_like(a) for n, a in tensors.items()}
        self.t = 0

    def step(self, tensors: Mapping[str, np.ndarray], grads: GradientSet) -> None:
        cfg = self.cfg
        self.t += 1
        correction1 = 1.0 - cfg.beta1 ** self.t
        correction2 = 1.0 - cfg.beta2 ** self.t
        for name, grad in grads.items():
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * grad
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * grad * grad
            update = (m / correction1) / (np.sqrt(v / correction2) + cfg.adam_epsilon)
            tensors[name] -= cfg.learning_rate * update


def _routed_hits(
    features: Sequence[RecordFeatures],
    tensors: Mapping[str, np.ndarray],
    ctx: _Context,
) -> tuple[float, float]:
    """(category Hit@1, joint disease Hit@1) via argmax routing; cheap
    per-epoch validation metric."""
    eval_ctx = _Context(
        cfg=ctx.cfg.updated(routing_mode="predicted"),
        taxonomy=ctx.taxonomy,
        local_of=ctx.local_of,
    )
    cat_hits = 0
    joint_hits = 0
    for ft in features:
        _, cache = _forward_record(tensors, ft, eval_ctx, want_cache=True)
        assert cache is not None
        selected = int(np.argmax(cache.cat_probs))
        if selected != ft.category_idx:
            continue
        cat_hits += 1
        if cache.dise_probs is None:
            continue
        if int(np.argmax(cache.dise_probs)) == ft.disease_local_idx:
            joint_hits += 1
    n = len(features)
    return cat_hits / n, joint_hits / n


def train(
    train_set: Dataset,
    val_set: Dataset,
    config: TrainingConfig,
) -> tuple[ModelParams, list[dict]]:
    """Mini-batch Adam on the joint objective; deterministic for a fixed seed.

    The vocabulary and normalizer are fitted on the training split only.
    Returns the parameters from the epoch with the best validation joint
    Hit@1 (earliest epoch wins ties) along with the per-epoch history.
    """
    from .data import fit_normalizer

    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("train and validation splits must be non-empty")
    normalizer = fit_normalizer(train_set, config.epsilon)
    vocab = Vocabulary.build(train_set) if config.backend == "trainable" else None
    model = init_model(train_set.taxonomy, vocab, normalizer, config)
    ctx = _Context.build(model)
    train_features = [featurize(r, model) for r in train_set]
    val_features = [featurize(r, model) for r in val_set]

    rng = np.random.default_rng(config.seed)
    optimizer = _Adam(config, model.tensors)
    history: list[dict] = []
    best_joint = -1.0
    best_tensors = {n: a.copy() for n, a in model.tensors.items()}
    n = len(train_features)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = [train_features[i] for i in order[start : start + config.batch_size]]
            loss, grads = backward(batch, model)
            if not math.isfinite(loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}, batch starting at "
                    f"index {start}"
                )
            loss_sum += loss * len(batch)
            optimizer.step(model.tensors, grads)
        val_cat, val_joint = _routed_hits(val_features, model.tensors, ctx)
        history.append(
            {
                "epoch": epoch,
                "train_loss": loss_sum / n,
                "val_category_hit1": val_cat,
                "val_joint_hit1": val_joint,
            }
        )
        if val_joint > best_joint:
            best_joint = val_joint
            best_tensors = {n_: a.copy() for n_, a in model.tensors.items()}
    model.tensors = best_tensors
    model.invalidate_version()
    return model, history


def save_model(model: ModelParams, path: str | Path) -> None:
    """Write the versioned binary checkpoint: magic, header length, JSON
    header (manifest, taxonomy, vocabulary, normalizer, config), then all
    tensors as little-endian float64 in manifest order."""
    manifest = []
    offset = 0
    for name, arr in model.tensors.items():
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "taxonomy": model.taxonomy.to_dict(),
        "vocabulary": dict(model.vocab.token_to_id) if model.vocab else None,
        "normalizer": model.normalizer.to_dict(),
        "tensors": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(struct.pack("<I", len(header_bytes)))
        handle.write(header_bytes)
        for name, _ in ((m["name"], m) for m in manifest):
            handle.write(model.tensors[name].astype("<f8").tobytes())


def load_model(path: str | Path) -> ModelParams:
    """Read a checkpoint; bit-exact inverse of save_model."""
    blob = Path(path).read_bytes()
    if len(blob) < len(CHECKPOINT_MAGIC) + 4:
        raise CheckpointError(f"{path}: truncated checkpoint")
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint (bad magic bytes)")
    header_len = struct.unpack_from("<I", blob, len(CHECKPOINT_MAGIC))[0]
    body_start = len(CHECKPOINT_MAGIC) + 4
    if len(blob) < body_start + header_len:
        raise CheckpointError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(blob[body_start : body_start + header_len].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
    version = header.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint format version {version}, expected {CHECKPOINT_VERSION}"
        )
    config = TrainingConfig.from_dict(header["config"])
    taxonomy = Taxonomy.from_dict(header["taxonomy"])
    vocab = (
        Vocabulary(token_to_id=header["vocabulary"])
        if header["vocabulary"] is not None
        else None
    )
    normalizer = ContinuousNormalizer.from_dict(header["normalizer"])
    tensors: dict[str, np.ndarray] = {}
    data_start = body_start + header_len
    for item in header["tensors"]:
        shape = tuple(item["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = data_start + item["offset"]
        end = start + count * 8
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated tensor data for {item['name']}")
        tensors[item["name"]] = (
            np.frombuffer(blob[start:end], dtype="<f8").reshape(shape).copy()
        )
    return ModelParams(
        tensors=tensors,
        taxonomy=taxonomy,
        vocab=vocab,
        normalizer=normalizer,
        config=config,
    )
