"""Density classifier training, gradients, and guidance plumbing."""

import numpy as np
import pytest
import torch

from notefill import vocab
from notefill.errors import GuidanceNotReadyError
from notefill.guidance import (
    DensityClassifier,
    DensityGuidance,
    density_loss,
    load_density_classifier,
    measure_onset_counts,
    save_density_classifier,
    train_density_classifier,
)


def test_classifier_reaches_validation_bar(density_classifier):
    assert density_classifier.validation_accuracy >= 0.9


def test_counts_from_tokens():
    row = np.full(32, vocab.HOLD, dtype=np.uint16)
    row[[0, 4, 8]] = 10
    row[16] = 50
    assert measure_onset_counts(row).tolist() == [3, 1]


def test_silent_measure_predicts_near_zero(density_classifier):
    silent = torch.zeros((1, 16), dtype=torch.float64)  # no onset mass at all
    prediction = float(density_classifier(silent))
    assert abs(prediction) < 1.0


def test_full_measure_predicts_near_sixteen(density_classifier):
    dense = torch.ones((1, 16), dtype=torch.float64)
    assert abs(float(density_classifier(dense)) - 16.0) < 1.5


def test_one_hot_probs_at_actual_density_near_minimal_loss(
        density_classifier, melody_corpus_sequences):
    seq = melody_corpus_sequences[0]
    tokens = seq.values[:, 0]
    probs = np.zeros((seq.steps, 90))
    probs[np.arange(seq.steps), tokens] = 1.0
    actual = measure_onset_counts(tokens)
    loss_at_actual, _ = density_loss(probs, actual.astype(float), density_classifier)
    loss_off_target, _ = density_loss(probs, actual + 4.0, density_classifier)
    assert loss_at_actual < 0.5
    assert loss_off_target > loss_at_actual + 4.0


def test_density_gradient_matches_finite_differences(density_classifier, rng):
    probs = rng.random((32, 90))
    probs /= probs.sum(axis=1, keepdims=True)
    targets = np.array([5.0, 9.0])
    _, grad = density_loss(probs, targets, density_classifier)

    eps = 1e-6
    worst = 0.0
    for _ in range(120):
        i = int(rng.integers(32))
        j = int(rng.integers(90))
        hi = probs.copy()
        hi[i, j] += eps
        lo = probs.copy()
        lo[i, j] -= eps
        numeric = (density_loss(hi, targets, density_classifier)[0]
                   - density_loss(lo, targets, density_classifier)[0]) / (2 * eps)
        denom = max(abs(numeric), abs(grad[i, j]), 1e-10)
        worst = max(worst, abs(numeric - grad[i, j]) / denom)
    assert worst < 1e-4


def test_unvalidated_classifier_refused():
    clf = DensityClassifier()
    with pytest.raises(GuidanceNotReadyError):
        clf.require_validated()
    with pytest.raises(GuidanceNotReadyError):
        DensityGuidance(clf, [4.0], 1.0)
    clf.validation_accuracy = 0.5
    with pytest.raises(GuidanceNotReadyError):
        DensityGuidance(clf, [4.0], 1.0)


def test_target_count_must_match_measures(density_classifier, rng):
    probs = rng.random((32, 90))
    with pytest.raises(ValueError, match="measures"):
        density_loss(probs, [4.0, 5.0, 6.0], density_classifier)


def test_classifier_round_trip(density_classifier, tmp_path, rng):
    path = tmp_path / "density.pt"
    save_density_classifier(path, density_classifier)
    loaded = load_density_classifier(path)
    assert loaded.validation_accuracy == density_classifier.validation_accuracy
    x = torch.from_numpy(rng.random((4, 16)))
    assert np.allclose(loaded(x).detach(), density_classifier(x).detach())


def test_guidance_gradients_cover_melody_track_only(density_classifier, rng):
    guidance = DensityGuidance(density_classifier, [4.0] * 2, 1.0)
    probs = [rng.random((32, 90)), rng.random((32, 90)), rng.random((32, 512))]
    for p in probs:
        p /= p.sum(axis=1, keepdims=True)
    grads = guidance.gradients(probs, np.ones((32, 3), dtype=bool))
    assert grads[0] is not None and grads[0].shape == (32, 90)
    assert grads[1] is None and grads[2] is None
    assert guidance.last_loss is not None
