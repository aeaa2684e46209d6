"""Objective, analytic gradients, training loop, and checkpointing."""

import math

import numpy as np
import pytest

import pomp.training as training_module
from pomp.config import TrainingConfig
from pomp.data import fit_normalizer, split_dataset, with_precomputed_embedding
from pomp.model import featurize, init_model, predict_full
from pomp.synthetic import SyntheticSpec, generate_synthetic
from pomp.text import Vocabulary
from pomp.training import (
    CheckpointError,
    backward,
    cross_entropy,
    finite_difference_check,
    joint_loss,
    load_model,
    save_model,
    train,
)


def one_hot(idx, n):
    v = np.zeros(n)
    v[idx] = 1.0
    return v


class TestCrossEntropy:
    def test_perfect_prediction_zero_loss(self):
        assert cross_entropy(one_hot(2, 4), one_hot(2, 4)) == 0.0

    def test_uniform_over_six_is_ln6(self):
        probs = np.full(6, 1 / 6)
        assert cross_entropy(one_hot(0, 6), probs) == pytest.approx(math.log(6))

    def test_matches_neg_log_target(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            raw = rng.uniform(0.01, 1.0, size=5)
            probs = raw / raw.sum()
            idx = int(rng.integers(0, 5))
            assert cross_entropy(one_hot(idx, 5), probs) == pytest.approx(
                -math.log(probs[idx])
            )


class TestJointLoss:
    def test_alpha_zero_is_category_loss(self):
        cat_t, cat_p = one_hot(0, 3), np.array([0.5, 0.3, 0.2])
        dise_t, dise_p = one_hot(1, 2), np.array([0.9, 0.1])
        assert joint_loss(cat_t, cat_p, dise_t, dise_p, alpha=0.0) == pytest.approx(
            cross_entropy(cat_t, cat_p)
        )

    def test_both_perfect_is_zero(self):
        assert joint_loss(one_hot(0, 2), one_hot(0, 2), one_hot(1, 3), one_hot(1, 3),
                          alpha=1.0) == 0.0

    def test_weighted_arithmetic(self):
        cat_p = np.array([math.exp(-1.0), 1 - math.exp(-1.0)])  # CE = 1.0 at idx 0
        dise_p = np.array([math.exp(-2.0), 1 - math.exp(-2.0)])  # CE = 2.0 at idx 0
        got = joint_loss(one_hot(0, 2), cat_p, one_hot(0, 2), dise_p, alpha=0.5)
        assert got == pytest.approx(2.0)


class TestBackward:
    def test_perfect_prediction_zero_gradients(self, small_data, small_model):
        ds, taxonomy, _ = small_data
        record = ds[0]
        model = small_model
        cat_idx = taxonomy.category_index[record.category_label]
        local = taxonomy.local_disease_index(record.category_label, record.disease_label)
        # drive the gold logits to certainty through the head biases
        model.tensors["tier1.head_b"][:] = -500.0
        model.tensors["tier1.head_b"][cat_idx] = 500.0
        key = f"tier2.{cat_idx:03d}"
        model.tensors[f"{key}.head_b"][:] = -500.0
        model.tensors[f"{key}.head_b"][local] = 500.0
        loss, grads = backward([record], model)
        assert loss == 0.0
        for name, grad in grads.items():
            assert np.max(np.abs(grad)) <= 1e-12, name

    def test_duplicated_batch_unchanged(self, small_data, small_model):
        ds, _, _ = small_data
        batch = list(ds.records[:4])
        loss1, grads1 = backward(batch, small_model)
        loss2, grads2 = backward(batch + batch, small_model)
        assert loss1 == pytest.approx(loss2, abs=1e-12)
        for name in grads1:
            np.testing.assert_allclose(grads1[name], grads2[name], atol=1e-12)

    def test_alpha_zero_kills_tier2_gradient(self, small_data, small_config):
        ds, taxonomy, _ = small_data
        cfg = small_config.updated(alpha=0.0)
        model = init_model(taxonomy, Vocabulary.build(ds), fit_normalizer(ds), cfg)
        _, grads = backward(list(ds.records[:6]), model)
        for name, grad in grads.items():
            if name.startswith("tier2."):
                assert np.all(grad == 0.0), name

    def test_empty_batch_rejected(self, small_model):
        with pytest.raises(ValueError):
            backward([], small_model)


class TestFiniteDifference:
    def test_gold_trainable(self, small_data, small_model):
        ds, _, _ = small_data
        report = finite_difference_check(
            small_model, list(ds.records[:6]), sample_size=120
        )
        assert report.passed, report.max_relative_error
        assert report.max_relative_error <= 1e-4

    def test_predicted_routing(self, small_data, small_config):
        ds, taxonomy, _ = small_data
        cfg = small_config.updated(routing_mode="predicted")
        model = init_model(taxonomy, Vocabulary.build(ds), fit_normalizer(ds), cfg)
        report = finite_difference_check(model, list(ds.records[:6]), sample_size=120)
        assert report.passed, report.failures[:3]

    def test_precomputed_backend(self, small_data):
        ds, taxonomy, _ = small_data
        rng = np.random.default_rng(12)
        batch = [
            with_precomputed_embedding(r, rng.normal(size=10))
            for r in ds.records[:6]
        ]
        cfg = TrainingConfig(d_text=10, d_model=16, d_fuse=12, heads=4,
                             backend="precomputed", seed=13)
        model = init_model(taxonomy, None, fit_normalizer(ds), cfg)
        report = finite_difference_check(model, batch, sample_size=120)
        assert report.passed, report.max_relative_error

    def test_zero_tolerance_always_fails(self, small_data, small_model):
        ds, _, _ = small_data
        report = finite_difference_check(
            small_model, list(ds.records[:4]), tolerance=0.0, sample_size=40
        )
        assert not report.passed
        assert report.failures

    def test_alpha_zero_dead_path_is_zero_both_ways(self, small_data, small_config):
        ds, taxonomy, _ = small_data
        cfg = small_config.updated(alpha=0.0)
        model = init_model(taxonomy, Vocabulary.build(ds), fit_normalizer(ds), cfg)
        report = finite_difference_check(model, list(ds.records[:4]), sample_size=80)
        assert report.passed
        # tier-2 coordinates: analytic and numeric gradients both vanish
        for name, worst in report.per_tensor.items():
            if name.startswith("tier2."):
                assert worst == 0.0

    def test_every_tensor_sampled(self, small_data, small_model):
        ds, _, _ = small_data
        report = finite_difference_check(
            small_model, list(ds.records[:2]), sample_size=60
        )
        assert set(report.per_tensor) == set(small_model.tensors)
        assert report.coordinates_checked >= 60


def small_training_run(seed=21, epochs=2, **spec_overrides):
    params = dict(seed=seed, records_per_category=40, category_count=3,
                  diseases_per_category=3)
    params.update(spec_overrides)
    ds, taxonomy, rule = generate_synthetic(SyntheticSpec(**params))
    tr, va, te = split_dataset(ds, (0.7, 0.15, 0.15), seed=seed)
    cfg = TrainingConfig(d_text=24, d_model=16, d_fuse=16, heads=4, max_len=64,
                         epochs=epochs, batch_size=16, seed=seed)
    return tr, va, te, cfg, rule


class TestTrainLoop:
    def test_loss_decreases_on_separable_data(self):
        tr, va, _, cfg, _ = small_training_run(epochs=2)
        _, history = train(tr, va, cfg)
        assert history[1]["train_loss"] < history[0]["train_loss"]

    def test_deterministic_history_and_params(self):
        tr, va, _, cfg, _ = small_training_run(epochs=2)
        m1, h1 = train(tr, va, cfg)
        m2, h2 = train(tr, va, cfg)
        assert h1 == h2
        for name in m1.tensors:
            assert (m1.tensors[name] == m2.tensors[name]).all()

    def test_alpha_zero_freezes_tier2(self):
        tr, va, _, cfg, _ = small_training_run(epochs=2)
        cfg = cfg.updated(alpha=0.0)
        model, _ = train(tr, va, cfg)
        fresh = init_model(model.taxonomy, Vocabulary.build(tr),
                           fit_normalizer(tr, cfg.epsilon), cfg)
        for name in model.tensors:
            if name.startswith("tier2."):
                assert (model.tensors[name] == fresh.tensors[name]).all(), name

    def test_nonfinite_loss_aborts_naming_batch(self, monkeypatch):
        tr, va, _, cfg, _ = small_training_run(epochs=1)

        def poisoned(batch, model, config=None):
            grads = model.zero_like_tensors()
            return float("nan"), grads

        monkeypatch.setattr(training_module, "backward", poisoned)
        with pytest.raises(RuntimeError, match="batch"):
            train(tr, va, cfg)

    def test_empty_split_rejected(self, small_data):
        from pomp.data import Dataset

        ds, taxonomy, _ = small_data
        empty = Dataset(records=(), taxonomy=taxonomy)
        with pytest.raises(ValueError):
            train(empty, ds, TrainingConfig())


class TestLossAnchor:
    def test_uniform_prediction_loss(self, small_data, small_config):
        ds, taxonomy, _ = small_data
        alpha = 0.7
        cfg = small_config.updated(alpha=alpha)
        model = init_model(taxonomy, Vocabulary.build(ds), fit_normalizer(ds), cfg)
        model.tensors["tier1.head_w"][:] = 0.0
        model.tensors["tier1.head_b"][:] = 0.0
        for i in range(len(taxonomy.categories)):
            model.tensors[f"tier2.{i:03d}.head_w"][:] = 0.0
            model.tensors[f"tier2.{i:03d}.head_b"][:] = 0.0
        record = ds[0]
        loss, _ = backward([record], model)
        n_cats = len(taxonomy.categories)
        n_sub = len(taxonomy.membership[record.category_label])
        assert loss == pytest.approx(math.log(n_cats) + alpha * math.log(n_sub),
                                     abs=1e-9)


class TestCheckpoint:
    def test_round_trip_identical_predictions(self, tmp_path, small_data, small_model):
        ds, _, _ = small_data
        path = tmp_path / "model.pomp"
        save_model(small_model, path)
        reloaded = load_model(path)
        for record in ds.records[:20]:
            a = predict_full(record, small_model)
            b = predict_full(record, reloaded)
            np.testing.assert_array_equal(a.category_probs, b.category_probs)
            np.testing.assert_array_equal(a.composite_scores, b.composite_scores)
            assert a.selected_category == b.selected_category

    def test_bit_identical_checkpoints_for_same_run(self, tmp_path):
        tr, va, _, cfg, _ = small_training_run(epochs=1)
        paths = []
        for name in ("a.pomp", "b.pomp"):
            model, _ = train(tr, va, cfg)
            path = tmp_path / name
            save_model(model, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_corrupt_magic_rejected(self, tmp_path, small_model):
        path = tmp_path / "model.pomp"
        save_model(small_model, path)
        blob = bytearray(path.read_bytes())
        blob[0] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="magic"):
            load_model(path)

    def test_version_mismatch_named(self, tmp_path, small_model):
        import json
        import struct

        path = tmp_path / "model.pomp"
        save_model(small_model, path)
        blob = path.read_bytes()
        header_len = struct.unpack_from("<I", blob, 8)[0]
        header = json.loads(blob[12 : 12 + header_len])
        header["format_version"] = 0
        new_header = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        path.write_bytes(
            blob[:8] + struct.pack("<I", len(new_header)) + new_header
            + blob[12 + header_len :]
        )
        with pytest.raises(CheckpointError, match="version 0"):
            load_model(path)

    def test_truncated_file_rejected(self, tmp_path, small_model):
        path = tmp_path / "model.pomp"
        save_model(small_model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CheckpointError, match="truncated"):
            load_model(path)

    def test_metadata_survives(self, tmp_path, small_model):
        path = tmp_path / "model.pomp"
        save_model(small_model, path)
        reloaded = load_model(path)
        assert reloaded.config == small_model.config
        assert reloaded.taxonomy.to_dict() == small_model.taxonomy.to_dict()
        assert dict(reloaded.vocab.token_to_id) == dict(small_model.vocab.token_to_id)
        assert reloaded.normalizer.to_dict() == small_model.normalizer.to_dict()
