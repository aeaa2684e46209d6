"""Fusion, the two-tier heads, routing, and composite disease scores."""

import numpy as np
import pytest

from pomp.config import TrainingConfig
from pomp.data import Dataset, PatientRecord, Taxonomy, fit_normalizer
from pomp.model import (
    fuse_embeddings,
    init_model,
    predict_category,
    predict_disease,
    predict_full,
    rank_descending,
    stable_softmax,
)
from pomp.text import Vocabulary, l2_normalize


def tiny_vocab():
    return Vocabulary(token_to_id={"<pad>": 0, "<unk>": 1, "x": 2, "y": 3})


def overlap_taxonomy():
    return Taxonomy(
        categories=("catA", "catB"),
        diseases=("d1", "d2", "d3"),
        membership={"catA": ("d1", "d2"), "catB": ("d2", "d3")},
    )


def overlap_model(seed=0):
    taxonomy = overlap_taxonomy()
    record = PatientRecord(text_symptom="x", age=10, height=100, weight=40,
                           duration=3, category_label="catA", disease_label="d1")
    ds = Dataset(records=(record,), taxonomy=taxonomy)
    cfg = TrainingConfig(d_text=8, d_model=8, d_fuse=6, heads=2, max_len=16, seed=seed)
    return init_model(taxonomy, tiny_vocab(), fit_normalizer(ds), cfg), record


class TestFusion:
    def test_zero_inputs_zero_bias(self):
        w = np.random.default_rng(0).normal(size=(6, 4))
        out = fuse_embeddings(np.zeros(3), np.zeros(3), w, np.zeros(4))
        np.testing.assert_array_equal(out, np.zeros(4))

    def test_unit_norm_output(self):
        rng = np.random.default_rng(1)
        out = fuse_embeddings(
            rng.normal(size=3), rng.normal(size=3),
            rng.normal(size=(6, 4)), rng.normal(size=4),
        )
        assert abs(np.linalg.norm(out) - 1.0) <= 1e-6

    def test_matches_manual_chain(self):
        rng = np.random.default_rng(2)
        a, t = rng.normal(size=3), rng.normal(size=5)
        w, b = rng.normal(size=(8, 4)), rng.normal(size=4)
        expected = l2_normalize(np.concatenate([a, t]) @ w + b)
        np.testing.assert_allclose(fuse_embeddings(a, t, w, b), expected)


class TestCategoryHead:
    def test_uniform_logits_over_six(self):
        probs = stable_softmax(np.zeros(6))
        np.testing.assert_allclose(probs, np.full(6, 1 / 6))

    def test_dominant_logit(self):
        probs = stable_softmax(np.array([10.0, 0, 0, 0, 0, 0]))
        assert int(np.argmax(probs)) == 0
        assert probs[0] > 0.99

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=6)
        np.testing.assert_allclose(
            stable_softmax(logits), stable_softmax(logits + 123.456), atol=1e-9
        )

    def test_predict_category_is_softmax_of_head(self):
        rng = np.random.default_rng(4)
        fused = rng.normal(size=5)
        w, b = rng.normal(size=(5, 3)), rng.normal(size=3)
        np.testing.assert_allclose(
            predict_category(fused, w, b), stable_softmax(fused @ w + b)
        )


class TestDiseaseHead:
    def test_single_disease_category(self):
        taxonomy = Taxonomy(
            categories=("solo",), diseases=("only",), membership={"solo": ("only",)}
        )
        record = PatientRecord(text_symptom="x", age=1, height=1, weight=1, duration=1,
                               category_label="solo", disease_label="only")
        ds = Dataset(records=(record,), taxonomy=taxonomy)
        cfg = TrainingConfig(d_text=8, d_model=8, d_fuse=6, heads=2, seed=1)
        model = init_model(taxonomy, tiny_vocab(), fit_normalizer(ds), cfg)
        probs = predict_disease(np.ones(8), np.ones(8), "solo", model)
        np.testing.assert_allclose(probs, [1.0])

    def test_uniform_over_29(self):
        n = 29
        taxonomy = Taxonomy(
            categories=("c",),
            diseases=tuple(f"d{i}" for i in range(n)),
            membership={"c": tuple(f"d{i}" for i in range(n))},
        )
        record = PatientRecord(text_symptom="x", age=1, height=1, weight=1, duration=1,
                               category_label="c", disease_label="d0")
        ds = Dataset(records=(record,), taxonomy=taxonomy)
        cfg = TrainingConfig(d_text=8, d_model=8, d_fuse=6, heads=2, seed=2)
        model = init_model(taxonomy, tiny_vocab(), fit_normalizer(ds), cfg)
        model.tensors["tier2.000.head_w"][:] = 0.0
        model.tensors["tier2.000.head_b"][:] = 0.0
        probs = predict_disease(np.ones(8), np.ones(8), "c", model)
        np.testing.assert_allclose(probs, np.full(n, 1 / n))

    def test_unknown_category_rejected(self):
        model, _ = overlap_model()
        with pytest.raises(ValueError):
            predict_disease(np.zeros(8), np.zeros(8), "nope", model)

    def test_matches_step_by_step_oracle(self):
        model, _ = overlap_model(seed=5)
        rng = np.random.default_rng(6)
        emb_data, emb_text = rng.normal(size=8), rng.normal(size=8)
        t = model.tensors
        z = np.concatenate([emb_data, emb_text])
        fused = l2_normalize(z @ t["tier2.001.fuse_w"] + t["tier2.001.fuse_b"])
        expected = stable_softmax(fused @ t["tier2.001.head_w"] + t["tier2.001.head_b"])
        np.testing.assert_allclose(
            predict_disease(emb_data, emb_text, "catB", model), expected
        )


class TestPredictFull:
    def test_deterministic(self, small_data, small_model):
        ds, _, _ = small_data
        p1 = predict_full(ds[0], small_model)
        p2 = predict_full(ds[0], small_model)
        np.testing.assert_array_equal(p1.category_probs, p2.category_probs)
        np.testing.assert_array_equal(p1.composite_scores, p2.composite_scores)
        assert p1.selected_category == p2.selected_category

    def test_distributions_valid(self, small_data, small_model):
        ds, _, _ = small_data
        for record in ds.records[:10]:
            pred = predict_full(record, small_model)
            assert np.all(pred.category_probs >= 0)
            assert abs(pred.category_probs.sum() - 1.0) <= 1e-9
            assert np.all(pred.disease_probs >= 0)
            assert abs(pred.disease_probs.sum() - 1.0) <= 1e-9

    def test_composite_sums_to_one(self, small_data, small_model):
        ds, _, _ = small_data
        for record in ds.records[:10]:
            pred = predict_full(record, small_model)
            assert abs(pred.composite_scores.sum() - 1.0) <= 1e-6

    def test_overlapping_disease_mixture(self):
        from pomp.model import featurize, encode_record

        model, record = overlap_model(seed=7)
        pred = predict_full(record, model)
        emb_data, emb_text = encode_record(featurize(record, model), model)
        qa = predict_disease(emb_data, emb_text, "catA", model)
        qb = predict_disease(emb_data, emb_text, "catB", model)
        pa, pb = pred.category_probs
        # d2 sits in both categories: catA local 1, catB local 0
        assert pred.composite_scores[1] == pytest.approx(pa * qa[1] + pb * qb[0])
        assert pred.composite_scores[0] == pytest.approx(pa * qa[0])
        assert pred.composite_scores[2] == pytest.approx(pb * qb[1])

    def test_selected_is_argmax_with_low_index_ties(self):
        model, record = overlap_model(seed=8)
        pred = predict_full(record, model)
        assert pred.selected_category == model.taxonomy.categories[
            int(np.argmax(pred.category_probs))
        ]

    def test_routing_invariant_to_logit_shift(self):
        model, record = overlap_model(seed=9)
        before = predict_full(record, model)
        model.tensors["tier1.head_b"][:] += 57.0
        after = predict_full(record, model)
        assert before.selected_category == after.selected_category
        np.testing.assert_allclose(
            before.category_probs, after.category_probs, atol=1e-9
        )

    def test_head_sizes_match_subsets(self, small_model):
        taxonomy = small_model.taxonomy
        for i, cate in enumerate(taxonomy.categories):
            head = small_model.tensors[f"tier2.{i:03d}.head_w"]
            assert head.shape[1] == len(taxonomy.membership[cate])

    def test_text_only_mode_ignores_demographics(self, small_data, small_model):
        ds, _, _ = small_data
        a = ds[0]
        import dataclasses

        b = dataclasses.replace(a, age=87.0, gender="male", pregnancy="unknown")
        pa = predict_full(a, small_model, mode="text_only")
        pb = predict_full(b, small_model, mode="text_only")
        np.testing.assert_array_equal(pa.category_probs, pb.category_probs)


class TestRanking:
    def test_rank_descending_breaks_ties_by_index(self):
        order = rank_descending(np.array([0.5, 0.7, 0.5, 0.7]))
        assert order.tolist() == [1, 3, 0, 2]
