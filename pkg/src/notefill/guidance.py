"""Note-density classifier guidance for melody sampling.

A small feed-forward network maps per-measure onset-probability profiles
(16 steps per measure, onset probability = total mass on pitch tokens) to a
predicted onset count.  Trained on real, uncorrupted measures it stays
differentiable through predicted x_0 probabilities, so its squared-error
gradient against per-measure targets can steer the sampler without any
noisy-data retraining.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from . import vocab
from .errors import GuidanceNotReadyError

MIN_VALIDATION_ACCURACY = 0.9
STEPS_PER_MEASURE = 16


def onset_probabilities(melody_probs: torch.Tensor) -> torch.Tensor:
    """(steps, vocab) probabilities -> (steps,) probability of an onset."""
    return melody_probs[:, : vocab.NOTE_OFF].sum(dim=-1)


def measure_features(melody_probs: torch.Tensor) -> torch.Tensor:
    """Reshape onset probabilities into (measures, 16) classifier inputs."""
    onsets = onset_probabilities(melody_probs)
    if onsets.shape[0] % STEPS_PER_MEASURE != 0:
        raise ValueError(f"sequence length {onsets.shape[0]} is not whole measures")
    return onsets.reshape(-1, STEPS_PER_MEASURE)


def measure_onset_counts(tokens: np.ndarray) -> np.ndarray:
    """True onsets per measure of a melody token row (ground truth labels)."""
    tokens = np.asarray(tokens).reshape(-1)
    onsets = (tokens < vocab.NOTE_OFF).astype(np.int64)
    return onsets.reshape(-1, STEPS_PER_MEASURE).sum(axis=1)


class DensityClassifier(nn.Module):
    """Predicts onsets-per-measure from a 16-step onset-probability profile."""

    def __init__(self, hidden: int = 64):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(STEPS_PER_MEASURE, hidden),
            nn.GELU(),
            nn.Linear(hidden, hidden),
            nn.GELU(),
            nn.Linear(hidden, 1),
        )
        self.double()
        self.validation_accuracy: float | None = None

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        return self.net(features.to(torch.float64)).squeeze(-1)

    def predict_counts(self, features: torch.Tensor) -> np.ndarray:
        with torch.no_grad():
            return np.rint(self.forward(features).numpy()).astype(np.int64)

    def require_validated(self) -> None:
        if self.validation_accuracy is None or self.validation_accuracy < MIN_VALIDATION_ACCURACY:
            raise GuidanceNotReadyError(
                f"density classifier not validated to >= {MIN_VALIDATION_ACCURACY:.0%} "
                f"plus/minus-1 accuracy (have {self.validation_accuracy})"
            )


def _one_hot_features(melody_tokens: np.ndarray) -> torch.Tensor:
    onsets = (np.asarray(melody_tokens).reshape(-1) < vocab.NOTE_OFF).astype(np.float64)
    return torch.from_numpy(onsets.reshape(-1, STEPS_PER_MEASURE))


def train_density_classifier(melody_rows, seed: int = 0, epochs: int = 200,
                             learning_rate: float = 1e-2,
                             holdout_fraction: float = 0.2,
                             soft_samples: int = 2000) -> DensityClassifier:
    """Fit on real measures and record held-out plus/minus-1 accuracy.

    melody_rows: iterable of 1-D melody token arrays (multiples of 16 steps).

    Real measures give binary onset-indicator features.  During guided
    sampling the classifier instead receives expected indicators (soft
    probabilities), so the training set is augmented with random soft
    vectors labeled by their expected count; that pins the interior of the
    input cube to the counting function the binary corners already imply.
    Held-out validation uses real measures only.
    """
    features = torch.cat([_one_hot_features(row) for row in melody_rows], dim=0)
    labels = torch.from_numpy(
        np.concatenate([measure_onset_counts(row) for row in melody_rows])
    ).to(torch.float64)

    rng = np.random.default_rng(seed)
    order = rng.permutation(features.shape[0])
    n_holdout = max(1, int(len(order) * holdout_fraction))
    val_idx = torch.from_numpy(order[:n_holdout])
    train_idx = torch.from_numpy(order[n_holdout:])

    x_train, y_train = features[train_idx], labels[train_idx]
    if soft_samples > 0:
        # Per-sample sharpness spreads expected counts over the whole range.
        sharpness = rng.uniform(0.3, 4.0, size=(soft_samples, 1))
        soft = rng.random((soft_samples, STEPS_PER_MEASURE)) ** sharpness
        soft_x = torch.from_numpy(soft)
        x_train = torch.cat([x_train, soft_x], dim=0)
        y_train = torch.cat([y_train, soft_x.sum(dim=1)], dim=0)

    torch.manual_seed(seed)
    clf = DensityClassifier()
    optimizer = torch.optim.Adam(clf.parameters(), lr=learning_rate)
    for _ in range(epochs):
        optimizer.zero_grad()
        loss = torch.mean((clf(x_train) - y_train) ** 2)
        loss.backward()
        optimizer.step()

    predicted = clf.predict_counts(features[val_idx])
    truth = labels[val_idx].numpy()
    clf.validation_accuracy = float(np.mean(np.abs(predicted - truth) <= 1))
    return clf


def density_loss(melody_probs: np.ndarray, targets, classifier: DensityClassifier):
    """Squared error between predicted and target per-measure densities.

    Returns (loss value, gradient with respect to the probability grid).
    """
    classifier.require_validated()
    targets = np.asarray(targets, dtype=np.float64)
    probs = torch.from_numpy(np.asarray(melody_probs, dtype=np.float64))
    probs.requires_grad_(True)
    predictions = classifier(measure_features(probs))
    if predictions.shape[0] != targets.shape[0]:
        raise ValueError(
            f"{predictions.shape[0]} measures but {targets.shape[0]} density targets"
        )
    loss = torch.mean((predictions - torch.from_numpy(targets)) ** 2)
    (grad,) = torch.autograd.grad(loss, probs)
    return float(loss.detach()), grad.numpy()


def save_density_classifier(path, classifier: DensityClassifier) -> None:
    torch.save(
        {
            "state": classifier.state_dict(),
            "validation_accuracy": classifier.validation_accuracy,
        },
        path,
    )


def load_density_classifier(path) -> DensityClassifier:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    clf = DensityClassifier()
    clf.load_state_dict(payload["state"])
    clf.validation_accuracy = payload["validation_accuracy"]
    return clf


class DensityGuidance:
    """Guidance hook for the sampler: push melody probabilities toward
    per-measure onset-count targets."""

    def __init__(self, classifier: DensityClassifier, targets, scale: float,
                 repair: str = "multiplicative"):
        classifier.require_validated()
        if scale < 0:
            raise ValueError("guidance scale must be >= 0")
        self.classifier = classifier
        self.targets = np.asarray(targets, dtype=np.float64)
        self.scale = float(scale)
        self.repair = repair
        self.last_loss: float | None = None

    def gradients(self, probs, masked) -> list[np.ndarray | None]:
        loss, grad = density_loss(probs[0], self.targets, self.classifier)
        self.last_loss = loss
        return [grad] + [None] * (len(probs) - 1)
