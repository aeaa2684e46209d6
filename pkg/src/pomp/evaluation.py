"""Evaluation: Hit@k for categories, joint-correctness Hit@k for diseases,
and macro-averaged area under the precision-recall curve for both tiers.

A disease prediction counts as correct only when the routed category is the
gold category AND the gold disease ranks inside the top k of that
category's disease distribution.  Disease-tier AUC-PR uses the composite
(category-probability-weighted) scores over the global disease list, since
the joint rule assigns no score to diseases outside the routed category.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import Dataset, Taxonomy
from .model import ModelParams, Prediction, featurize, predict_features, rank_descending


def hit_at_k_category(
    predictions: Sequence[Prediction],
    gold: Sequence[str],
    taxonomy: Taxonomy,
    k: int,
) -> float:
    """Fraction of records whose gold category is in the top-k by probability
    (ties broken by lowest category index)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = 0
    for pred, gold_cate in zip(predictions, gold):
        gold_idx = taxonomy.category_index[gold_cate]
        top = rank_descending(pred.category_probs)[:k]
        if gold_idx in top:
            hits += 1
    return hits / len(predictions)


def hit_at_k_disease_joint(
    predictions: Sequence[Prediction],
    gold: Sequence[tuple[str, str]],
    taxonomy: Taxonomy,
    k: int,
) -> float:
    """Joint-correctness rate: the routed category must equal the gold
    category and the gold disease must rank in the top k within it."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = 0
    for pred, (gold_cate, gold_dise) in zip(predictions, gold):
        if pred.selected_category != gold_cate:
            continue
        local = taxonomy.local_disease_index(gold_cate, gold_dise)
        top = rank_descending(pred.disease_probs)[:k]
        if local in top:
            hits += 1
    return hits / len(predictions)


def average_precision(scores: np.ndarray, positives: np.ndarray) -> float:
    """Step-wise AP over the descending-score sweep with tied scores grouped:
    AP = sum over groups of (R_i - R_{i-1}) * P_i."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positives[order]
    ap = 0.0
    recall_prev = 0.0
    tp = 0
    seen = 0
    i = 0
    n = scores.shape[0]
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        tp += int(sorted_pos[i:j].sum())
        seen += j - i
        recall = tp / n_pos
        precision = tp / seen
        ap += (recall - recall_prev) * precision
        recall_prev = recall
        i = j
    return ap


def auc_pr_macro(scores: np.ndarray, gold: Sequence[int], label_count: int) -> float:
    """Unweighted mean of per-label one-vs-rest average precision.  Labels
    without positives are excluded; if no label has a positive, raises."""
    scores = np.asarray(scores, dtype=np.float64)
    gold = np.asarray(gold, dtype=np.int64)
    if scores.shape != (gold.shape[0], label_count):
        raise ValueError("scores must be (records, labels)")
    values = []
    for label in range(label_count):
        positives = gold == label
        if not positives.any():
            continue
        values.append(average_precision(scores[:, label], positives))
    if not values:
        raise ValueError("no label has any positive record")
    return float(np.mean(values))


@dataclass(frozen=True)
class MetricsReport:
    """Hit rates and macro AUC-PR for both tiers plus per-category detail."""

    category_hit_at_1: float
    category_hit_at_3: float
    category_hit_at_10: float
    disease_joint_hit_at_1: float
    disease_joint_hit_at_3: float
    disease_joint_hit_at_10: float
    category_auc_pr: float
    disease_auc_pr: float
    per_category: dict[str, dict]
    record_count: int

    def to_dict(self) -> dict:
        return {
            "category_hit_at_1": self.category_hit_at_1,
            "category_hit_at_3": self.category_hit_at_3,
            "category_hit_at_10": self.category_hit_at_10,
            "disease_joint_hit_at_1": self.disease_joint_hit_at_1,
            "disease_joint_hit_at_3": self.disease_joint_hit_at_3,
            "disease_joint_hit_at_10": self.disease_joint_hit_at_10,
            "category_auc_pr": self.category_auc_pr,
            "disease_auc_pr": self.disease_auc_pr,
            "per_category": self.per_category,
            "record_count": self.record_count,
        }


def evaluate(model: ModelParams, test_set: Dataset, mode: str = "full") -> MetricsReport:
    """All metrics in one deterministic pass.  ``text_only`` zeroes the
    demographic embedding at inference."""
    if len(test_set) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    taxonomy = model.taxonomy
    predictions: list[Prediction] = []
    gold_categories: list[str] = []
    gold_pairs: list[tuple[str, str]] = []
    for record in test_set:
        predictions.append(predict_features(featurize(record, model), model, mode))
        gold_categories.append(record.category_label)
        gold_pairs.append((record.category_label, record.disease_label))

    n_cat = len(taxonomy.categories)
    n_dise = len(taxonomy.diseases)
    cat_scores = np.stack([p.category_probs for p in predictions])
    dise_scores = np.stack([p.composite_scores for p in predictions])
    cat_gold_idx = [taxonomy.category_index[c] for c in gold_categories]
    dise_gold_idx = [taxonomy.disease_index[d] for _, d in gold_pairs]

    per_category: dict[str, dict] = {}
    for cate in taxonomy.categories:
        indices = [i for i, c in enumerate(gold_categories) if c == cate]
        if not indices:
            per_category[cate] = {"records": 0}
            continue
        preds = [predictions[i] for i in indices]
        golds = [gold_pairs[i] for i in indices]
        per_category[cate] = {
            "records": len(indices),
            "category_hit_at_1": hit_at_k_category(
                preds, [cate] * len(indices), taxonomy, 1
            ),
            "disease_joint_hit_at_1": hit_at_k_disease_joint(preds, golds, taxonomy, 1),
        }

    return MetricsReport(
        category_hit_at_1=hit_at_k_category(predictions, gold_categories, taxonomy, 1),
        category_hit_at_3=hit_at_k_category(predictions, gold_categories, taxonomy, 3),
        category_hit_at_10=hit_at_k_category(predictions, gold_categories, taxonomy, 10),
        disease_joint_hit_at_1=hit_at_k_disease_joint(predictions, gold_pairs, taxonomy, 1),
        disease_joint_hit_at_3=hit_at_k_disease_joint(predictions, gold_pairs, taxonomy, 3),
        disease_joint_hit_at_10=hit_at_k_disease_joint(predictions, gold_pairs, taxonomy, 10),
        category_auc_pr=auc_pr_macro(cat_scores, cat_gold_idx, n_cat),
        disease_auc_pr=auc_pr_macro(dise_scores, dise_gold_idx, n_dise),
        per_category=per_category,
        record_count=len(test_set),
    )


def format_metrics_table(report: MetricsReport) -> str:
    """Plain-text table with the two-tier metric layout (one block per tier,
    one row per metric)."""
    lines = [f"{'':10s}{'Hit@1':>8s}{'Hit@3':>8s}{'Hit@10':>8s}{'AUC-PR':>8s}"]
    lines.append(
        f"{'Category':10s}"
        f"{report.category_hit_at_1:8.3f}{report.category_hit_at_3:8.3f}"
        f"{report.category_hit_at_10:8.3f}{report.category_auc_pr:8.3f}"
    )
    lines.append(
        f"{'Disease':10s}"
        f"{report.disease_joint_hit_at_1:8.3f}{report.disease_joint_hit_at_3:8.3f}"
        f"{report.disease_joint_hit_at_10:8.3f}{report.disease_auc_pr:8.3f}"
    )
    return "\n".join(lines)
