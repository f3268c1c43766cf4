"""Shared fixtures: deterministic corpora and the cached overfit model.

The overfit desk model is expensive (minutes of CPU), so it is trained at
most once and cached under .testcache/ together with a sidecar recording
how many steps it took; reruns load the cache and re-verify accuracy.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
import torch

from notefill import demo_corpus
from notefill.diffusion import DiffusionSchedule
from notefill.guidance import train_density_classifier
from notefill.model import DenoiserConfig, load_checkpoint, save_checkpoint
from notefill.training import corpus_array, init_train_state, masked_accuracy, train

torch.set_num_threads(1)

CACHE_DIR = Path(__file__).resolve().parent.parent / ".testcache"
OVERFIT_MAX_STEPS = 20_000
OVERFIT_TARGET = 0.95
CORPUS_SEED = 11
TRAIN_SEED = 0


@pytest.fixture(scope="session")
def melody_corpus_sequences():
    return demo_corpus.demo_sequences(100, bars=16, mode="melody", seed=CORPUS_SEED)


@pytest.fixture(scope="session")
def melody_corpus(melody_corpus_sequences):
    return corpus_array(melody_corpus_sequences)


@pytest.fixture(scope="session")
def trio_corpus_sequences():
    return demo_corpus.demo_sequences(24, bars=16, mode="trio", seed=5)


@pytest.fixture(scope="session")
def schedule():
    return DiffusionSchedule(1024)


@pytest.fixture(scope="session")
def overfit_checkpoint_path(melody_corpus, schedule):
    """Train (or reuse) the desk-scale overfit model; returns the .pt path."""
    CACHE_DIR.mkdir(exist_ok=True)
    ckpt = CACHE_DIR / "overfit_desk.pt"
    sidecar = CACHE_DIR / "overfit_desk.json"
    if ckpt.exists() and sidecar.exists():
        return ckpt
    config = DenoiserConfig.desk_melody()
    state = init_train_state(config, seed=TRAIN_SEED)
    accuracy = 0.0
    curve_chunks = []
    while state.step < OVERFIT_MAX_STEPS:
        result = train(melody_corpus, config, schedule, steps=500, state=state)
        curve_chunks.append(result.loss_curve)
        accuracy = masked_accuracy(state.model, melody_corpus, schedule)
        if accuracy >= OVERFIT_TARGET:
            break
    save_checkpoint(ckpt, state.model, state.optimizer, state.step, state.rng)
    np.save(CACHE_DIR / "overfit_desk_losses.npy", np.concatenate(curve_chunks))
    sidecar.write_text(json.dumps({
        "steps": state.step,
        "accuracy": accuracy,
        "corpus_seed": CORPUS_SEED,
        "train_seed": TRAIN_SEED,
    }))
    return ckpt


@pytest.fixture(scope="session")
def overfit_sidecar(overfit_checkpoint_path):
    return json.loads((CACHE_DIR / "overfit_desk.json").read_text())


@pytest.fixture(scope="session")
def overfit_loss_curve(overfit_checkpoint_path):
    return np.load(CACHE_DIR / "overfit_desk_losses.npy")


@pytest.fixture(scope="session")
def overfit_model(overfit_checkpoint_path):
    checkpoint = load_checkpoint(overfit_checkpoint_path)
    checkpoint.model.eval()
    return checkpoint.model


@pytest.fixture(scope="session")
def density_classifier(melody_corpus_sequences):
    rows = [seq.values[:, 0] for seq in melody_corpus_sequences]
    return train_density_classifier(rows, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def tiny_config(**overrides) -> DenoiserConfig:
    """A sub-10k-parameter config for gradient checks."""
    base = dict(steps=16, vocab_sizes=(6,), token_embed_dim=8, summary_dim=12,
                n_layers=3, n_heads=2)
    base.update(overrides)
    return DenoiserConfig(**base)
