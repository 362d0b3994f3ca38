import math
from dataclasses import replace

import numpy as np
import pytest

from hierarchy_embed_tool.core.embedding import EmbeddingMatrix, compute_embeddings
from hierarchy_embed_tool.core.errors import MapperError, TrainingError
from hierarchy_embed_tool.core.mapper import (
    FeatureDataset,
    LossMode,
    MapperModel,
    TrainConfig,
    classify_nearest_centroid,
    embed,
    extract_features,
    generate_synthetic_dataset,
    gradients,
    initialize_model,
    l2_normalize,
    loss_cls,
    loss_combined,
    loss_corr,
    make_lifting,
    nearest_centroid_predictions,
    train,
    training_loss,
)
from hierarchy_embed_tool.core.taxonomy import parse_taxonomy, random_tree, similarity_matrix
from hierarchy_embed_tool.fixtures import SYNTHETIC_20, TOY_TREE


def exact_embedding(path):
    return compute_embeddings(similarity_matrix(parse_taxonomy(path.read_text())))


def identity_model(d, head=False):
    if head:
        return MapperModel(np.eye(d), np.zeros(d), np.zeros((d, d)), np.zeros(d), LossMode.CORR_CLS)
    return MapperModel(np.eye(d), np.zeros(d))


def random_instance(seed, mode):
    rng = np.random.default_rng(seed)
    phi = compute_embeddings(similarity_matrix(random_tree(int(rng.integers(3, 7)), seed=seed)))
    p = phi.dim + 2
    model = initialize_model(p, phi.dim, phi.num_classes, mode, seed)
    X = rng.standard_normal((5, p))
    y = rng.integers(0, phi.num_classes, 5)
    return model, phi, (X, y)


def finite_difference_gradient(model, phi, batch, config, name, h=1e-5):
    params = model.parameters()
    grad = np.zeros_like(params[name])
    for index in np.ndindex(*params[name].shape):
        plus = params[name].copy()
        minus = params[name].copy()
        plus[index] += h
        minus[index] -= h
        f_plus = training_loss(batch, replace(model, **{name: plus}), phi, config)
        f_minus = training_loss(batch, replace(model, **{name: minus}), phi, config)
        grad[index] = (f_plus - f_minus) / (2 * h)
    return grad


class TestNormalizationAndEmbed:
    """Test L2 normalization and the forward map."""

    def test_l2_normalize(self):
        """Test normalization of simple and random vectors."""
        np.testing.assert_allclose(l2_normalize(np.array([3.0, 4.0])), [0.6, 0.8])
        unit = np.array([0.0, 1.0, 0.0])
        np.testing.assert_array_equal(l2_normalize(unit), unit)
        v = np.random.default_rng(0).standard_normal(17)
        assert np.linalg.norm(l2_normalize(v)) == pytest.approx(1.0, abs=1e-12)

    def test_l2_normalize_zero(self):
        """Test that near-zero vectors are rejected."""
        with pytest.raises(MapperError):
            l2_normalize(np.zeros(3))
        with pytest.raises(MapperError):
            l2_normalize(np.array([[1.0, 0.0], [0.0, 1e-13]]))

    def test_embed_identity(self):
        """Test that the identity map returns unit inputs unchanged."""
        x = l2_normalize(np.array([1.0, 2.0, 2.0]))
        np.testing.assert_allclose(embed(identity_model(3), x), x, atol=1e-15)

    def test_embed_hand_computed(self):
        """Test a hand-computed 2x2 case."""
        model = MapperModel(np.array([[1.0, 0.0], [0.0, 2.0]]), np.zeros(2))
        np.testing.assert_allclose(embed(model, np.array([1.0, 1.0])), np.array([1.0, 2.0]) / math.sqrt(5))

    @pytest.mark.parametrize("seed", range(5))
    def test_embed_is_unit_norm(self, seed):
        """Test that every embedding has unit norm."""
        rng = np.random.default_rng(seed)
        model = initialize_model(8, 4, 3, LossMode.CORR, seed)
        out = model.embed_batch(rng.standard_normal((10, 8)))
        np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-12)

    def test_embed_errors(self):
        """Test dimension checks and zero outputs."""
        model = MapperModel(np.zeros((2, 3)), np.zeros(2))
        with pytest.raises(MapperError):
            embed(model, np.ones(3))
        with pytest.raises(MapperError):
            embed(identity_model(3), np.ones(4))

    def test_inconsistent_shapes(self):
        """Test model shape validation."""
        with pytest.raises(MapperError):
            MapperModel(np.eye(3), np.zeros(2))
        with pytest.raises(MapperError):
            MapperModel(np.eye(3), np.zeros(3), np.zeros((4, 2)), np.zeros(4))
        with pytest.raises(MapperError):
            MapperModel(np.eye(3), np.zeros(3), np.zeros((4, 3)), None)


class TestLosses:
    """Test L_CORR, L_CLS and their combination."""

    def test_corr_perfect_alignment(self):
        """Test that embeddings equal to their centroids give zero loss."""
        phi = exact_embedding(TOY_TREE)
        batch = (phi.rows, np.arange(3))
        assert loss_corr(batch, identity_model(3), phi) == pytest.approx(0.0, abs=1e-12)

    def test_corr_orthogonal(self):
        """Test that orthogonal embeddings give loss 1."""
        phi = EmbeddingMatrix(np.eye(3), ("a", "b", "c"))
        batch = (np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 2.0]]), np.array([0, 0]))
        assert loss_corr(batch, identity_model(3), phi) == pytest.approx(1.0)

    def test_corr_single_sample(self):
        """Test 1 - 2/3 for a sibling class."""
        phi = exact_embedding(TOY_TREE)
        batch = (phi.rows[[1]], np.array([0]))
        assert loss_corr(batch, identity_model(3), phi) == pytest.approx(1 / 3, abs=1e-12)

    def test_corr_in_range(self):
        """Test that L_CORR stays in [0, 2]."""
        phi = exact_embedding(SYNTHETIC_20)
        rng = np.random.default_rng(1)
        model = initialize_model(24, 20, 20, LossMode.CORR, 1)
        batch = (rng.standard_normal((30, 24)), rng.integers(0, 20, 30))
        assert 0.0 <= loss_corr(batch, model, phi) <= 2.0

    def test_corr_label_out_of_range(self):
        """Test label validation."""
        phi = exact_embedding(TOY_TREE)
        with pytest.raises(MapperError, match="label"):
            loss_corr((phi.rows, np.array([0, 1, 3])), identity_model(3), phi)

    def test_cls_uniform(self):
        """Test that a zero head gives log n."""
        model = identity_model(3, head=True)
        batch = (np.eye(3), np.arange(3))
        assert loss_cls(batch, model) == pytest.approx(math.log(3))

    def test_cls_two_classes(self):
        """Test logits [0, 0] for two classes."""
        model = MapperModel(np.eye(2), np.zeros(2), np.zeros((2, 2)), np.zeros(2), LossMode.CLS)
        assert loss_cls((np.array([[1.0, 0.0]]), np.array([1])), model) == pytest.approx(0.6931, abs=1e-4)

    def test_cls_confident(self):
        """Test that a confident correct head gives (almost) zero loss."""
        model = MapperModel(np.eye(2), np.zeros(2), 100.0 * np.eye(2), np.zeros(2), LossMode.CLS)
        assert loss_cls((np.array([[1.0, 0.0]]), np.array([0])), model) == pytest.approx(0.0, abs=1e-12)

    def test_cls_matches_predicted_probabilities(self):
        """Test that L_CLS is the mean negative log of the head's probability for the true class."""
        model, _, (X, y) = random_instance(3, LossMode.CORR_CLS)
        probs = model.predict_proba(X)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(probs > 0)
        np.testing.assert_array_equal(np.argmax(probs, axis=1), model.predict(X))
        assert loss_cls((X, y), model) == pytest.approx(-np.mean(np.log(probs[np.arange(len(y)), y])))

    def test_cls_without_head(self):
        """Test that L_CLS needs a classifier head."""
        with pytest.raises(MapperError, match="head"):
            loss_cls((np.eye(3), np.arange(3)), identity_model(3))

    def test_combined(self):
        """Test the weighted sum and the lambda = 0 case."""
        phi = exact_embedding(TOY_TREE)
        rng = np.random.default_rng(2)
        batch = (rng.standard_normal((6, 5)), rng.integers(0, 3, 6))
        model = initialize_model(5, 3, 3, LossMode.CORR_CLS, 2)
        corr, cls = loss_corr(batch, model, phi), loss_cls(batch, model)
        assert loss_combined(batch, model, phi, 0.0) == corr
        assert loss_combined(batch, replace(model, head_weights=None, head_bias=None), phi, 0.0) == corr
        assert loss_combined(batch, model, phi) == pytest.approx(corr + 0.1 * cls)


class TestGradients:
    """Test analytic gradients."""

    @pytest.mark.parametrize("mode", list(LossMode))
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_finite_differences(self, seed, mode):
        """Test every parameter against central finite differences."""
        model, phi, batch = random_instance(seed, mode)
        config = TrainConfig(loss_mode=mode, lam=0.3)
        analytic = gradients(batch, model, phi, config).arrays()
        for name in model.parameters():
            numeric = finite_difference_gradient(model, phi, batch, config, name)
            error = np.linalg.norm(analytic[name] - numeric)
            scale = max(np.linalg.norm(analytic[name]), np.linalg.norm(numeric), 1e-8)
            assert error / scale <= 1e-5, name

    def test_zero_at_perfect_alignment(self):
        """Test that the gradient vanishes when every embedding is its centroid."""
        phi = exact_embedding(TOY_TREE)
        grads = gradients((phi.rows, np.arange(3)), identity_model(3), phi, TrainConfig())
        np.testing.assert_allclose(grads.weights, 0.0, atol=1e-12)
        np.testing.assert_allclose(grads.bias, 0.0, atol=1e-12)

    def test_tangent_to_embedding(self):
        """Test that the gradient w.r.t. the pre-normalization output has no radial part."""
        phi = exact_embedding(TOY_TREE)
        rng = np.random.default_rng(3)
        model = MapperModel(rng.standard_normal((3, 4)), np.zeros(3))
        x = rng.standard_normal(4)
        grads = gradients((x[None, :], np.array([1])), model, phi, TrainConfig())
        # With a single sample the bias gradient is the gradient w.r.t. z.
        assert grads.bias @ embed(model, x) == pytest.approx(0.0, abs=1e-12)

    def test_zero_inputs_leave_weights_alone(self):
        """Test that samples with x = 0 produce no weight gradient."""
        phi = exact_embedding(TOY_TREE)
        model = MapperModel(np.zeros((3, 4)), np.array([0.2, 0.5, 0.1]))
        grads = gradients((np.zeros((2, 4)), np.array([0, 2])), model, phi, TrainConfig())
        assert np.all(grads.weights == 0.0)
        assert np.linalg.norm(grads.bias) > 0

    def test_errors(self):
        """Test zero pre-normalization outputs and missing heads."""
        phi = exact_embedding(TOY_TREE)
        with pytest.raises(MapperError, match="zero"):
            gradients((np.zeros((1, 3)), np.array([0])), MapperModel(np.eye(3), np.zeros(3)), phi, TrainConfig())
        with pytest.raises(MapperError, match="head"):
            gradients((np.eye(3), np.arange(3)), identity_model(3), phi, TrainConfig(loss_mode="cls"))


def toy_dataset(samples_per_class=10, sigma=0.05, p=5, seed=0):
    phi = exact_embedding(TOY_TREE)
    return phi, generate_synthetic_dataset(phi, samples_per_class, sigma, p, seed=seed)


class TestTrain:
    """Test mini-batch training."""

    def test_zero_epochs_returns_initialization(self):
        """Test that no epochs leave the seeded initialization untouched."""
        phi, data = toy_dataset()
        result = train(data, phi, TrainConfig(epochs=0, seed=4))
        expected = initialize_model(5, 3, 3, LossMode.CORR, 4)
        np.testing.assert_array_equal(result.model.weights, expected.weights)
        np.testing.assert_array_equal(result.model.bias, expected.bias)
        assert result.history == ()

    def test_initialization_bounds(self):
        """Test the uniform initialization ranges and head presence."""
        model = initialize_model(16, 4, 3, LossMode.CORR_CLS, 0)
        assert np.abs(model.weights).max() <= 1 / 4
        assert np.abs(model.head_weights).max() <= 1 / 2
        assert not initialize_model(16, 4, 3, LossMode.CORR, 0).has_head

    def test_deterministic(self):
        """Test that equal seeds give bit-identical models."""
        phi, data = toy_dataset()
        config = TrainConfig(epochs=5, batch_size=4, loss_mode=LossMode.CORR_CLS, seed=9)
        first = train(data, phi, config)
        second = train(data, phi, config)
        for name, value in first.model.parameters().items():
            np.testing.assert_array_equal(value, second.model.parameters()[name])
        assert first.history == second.history

    def test_monotone_descent(self):
        """Test that full-batch descent with a small constant rate never increases the loss."""
        phi, data = toy_dataset()
        config = TrainConfig(
            epochs=40, batch_size=len(data), base_lr=0.01, schedule="constant", clip_norm=None, seed=1
        )
        losses = [entry.loss_total for entry in train(data, phi, config).history]
        assert all(b <= a + 1e-9 for a, b in zip(losses, losses[1:]))
        assert losses[-1] < losses[0]

    def test_separable_data_trains_well(self):
        """Test that L_CORR drops below 0.05 on a synthetic benchmark."""
        phi = exact_embedding(SYNTHETIC_20)
        data = generate_synthetic_dataset(phi, 50, 0.15, 32, seed=0)
        result = train(data, phi, TrainConfig(epochs=100, seed=0))
        assert result.history[-1].loss_corr < 0.05
        assert len(result.history) == 100
        assert math.isnan(result.history[-1].loss_cls)

    def test_history_records_schedule(self):
        """Test that the epoch log carries the scheduled learning rate."""
        phi, data = toy_dataset()
        result = train(data, phi, TrainConfig(epochs=4, base_lr=0.2, min_lr=0.0))
        assert [entry.epoch for entry in result.history] == [1, 2, 3, 4]
        assert result.history[0].lr == pytest.approx(0.2)
        assert result.history[2].lr == pytest.approx(0.1)

    def test_divergence_is_reported(self):
        """Test that a non-finite loss stops training."""
        phi, data = toy_dataset()
        huge = FeatureDataset(data.features * 1e308, data.labels, data.num_classes)
        with pytest.raises(TrainingError):
            train(huge, phi, TrainConfig(epochs=2, clip_norm=None))

    def test_class_count_mismatch(self):
        """Test that labels must match the embedding."""
        phi, data = toy_dataset()
        wrong = FeatureDataset(data.features, data.labels, 4)
        with pytest.raises(MapperError):
            train(wrong, phi, TrainConfig(epochs=1))

    def test_invalid_config(self):
        """Test TrainConfig validation."""
        with pytest.raises(MapperError):
            TrainConfig(batch_size=0)
        with pytest.raises(MapperError):
            TrainConfig(base_lr=0.0)
        with pytest.raises(MapperError):
            TrainConfig(lam=-1.0)
        with pytest.raises(ValueError):
            TrainConfig(loss_mode="hinge")


class TestNearestCentroid:
    """Test nearest-centroid classification."""

    def test_exact_centroid(self):
        """Test that a centroid is classified as its own class."""
        phi = exact_embedding(SYNTHETIC_20)
        assert classify_nearest_centroid(identity_model(20), phi, phi.rows[3]) == 3

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_distance_scan(self, seed):
        """Test argmax dot product against argmin Euclidean distance."""
        phi = exact_embedding(SYNTHETIC_20)
        rng = np.random.default_rng(seed)
        model = initialize_model(24, 20, 20, LossMode.CORR, seed)
        for x in rng.standard_normal((20, 24)):
            psi = embed(model, x)
            expected = int(np.argmin(np.linalg.norm(phi.rows - psi, axis=1)))
            assert classify_nearest_centroid(model, phi, x) == expected

    def test_scale_invariance(self):
        """Test that rescaling the pre-normalization output keeps the prediction."""
        phi = exact_embedding(SYNTHETIC_20)
        rng = np.random.default_rng(6)
        model = initialize_model(24, 20, 20, LossMode.CORR, 6)
        scaled = MapperModel(3.7 * model.weights, 3.7 * model.bias)
        X = rng.standard_normal((30, 24))
        np.testing.assert_array_equal(
            nearest_centroid_predictions(model, phi, X), nearest_centroid_predictions(scaled, phi, X)
        )

    def test_extract_features(self):
        """Test normalized and unnormalized feature extraction."""
        model = MapperModel(2.0 * np.eye(2), np.zeros(2))
        X = np.array([[3.0, 4.0]])
        np.testing.assert_allclose(extract_features(model, X, normalize=False), [[6.0, 8.0]])
        np.testing.assert_allclose(extract_features(model, X), [[0.6, 0.8]])


class TestSyntheticData:
    """Test the synthetic dataset generator."""

    def test_noise_free_identity_lifting(self):
        """Test that samples equal their centroids without noise."""
        phi = exact_embedding(TOY_TREE)
        data = generate_synthetic_dataset(phi, 4, 0.0, 3, seed=0, lifting=np.eye(3))
        np.testing.assert_array_equal(data.features, phi.rows[data.labels])
        assert len(data) == 12
        assert data.class_order == phi.class_order

    def test_deterministic(self):
        """Test that equal seeds give identical datasets."""
        phi = exact_embedding(TOY_TREE)
        first = generate_synthetic_dataset(phi, 5, 0.1, 8, seed=3)
        second = generate_synthetic_dataset(phi, 5, 0.1, 8, seed=3)
        np.testing.assert_array_equal(first.features, second.features)

    def test_shared_lifting(self):
        """Test that train and test sets can share one ground-truth lifting."""
        phi = exact_embedding(TOY_TREE)
        lifting = make_lifting(8, 3, seed=1)
        a = generate_synthetic_dataset(phi, 5, 0.0, 8, seed=1, lifting=lifting)
        b = generate_synthetic_dataset(phi, 5, 0.0, 8, seed=2, lifting=lifting)
        np.testing.assert_array_equal(a.features, b.features)
        assert np.linalg.matrix_rank(lifting) == 3

    def test_small_noise_is_separable(self):
        """Test nearest-centroid accuracy on raw normalized features."""
        phi = exact_embedding(SYNTHETIC_20)
        data = generate_synthetic_dataset(phi, 20, 0.05, 20, seed=0, lifting=np.eye(20))
        predictions = np.argmax(l2_normalize(data.features) @ phi.rows.T, axis=1)
        assert np.mean(predictions == data.labels) >= 0.99

    def test_invalid_dimensions(self):
        """Test argument validation."""
        phi = exact_embedding(TOY_TREE)
        with pytest.raises(MapperError):
            generate_synthetic_dataset(phi, 5, 0.1, 2)
        with pytest.raises(MapperError):
            generate_synthetic_dataset(phi, 0, 0.1, 5)
        with pytest.raises(MapperError):
            generate_synthetic_dataset(phi, 5, 0.1, 5, lifting=np.eye(3))

    def test_dataset_validation(self):
        """Test FeatureDataset invariants."""
        with pytest.raises(MapperError):
            FeatureDataset(np.zeros((3, 2)), np.array([0, 1]), 2)
        with pytest.raises(MapperError):
            FeatureDataset(np.zeros((2, 2)), np.array([0, 2]), 2)
