"""Training loop for the unmasking network.

One optimization step: draw a batch, draw a timestep per example, corrupt
with the absorbing forward process (trios mask a uniformly chosen non-empty
track subset), run the network, apply the reweighted masked cross-entropy,
Adam update.  All randomness flows from one numpy generator plus the torch
seed, so a fixed seed reproduces the loss curve bit for bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .diffusion import DiffusionSchedule, corrupt_batch, training_loss
from .errors import TrainingDivergedError
from .model import Checkpoint, Denoiser, DenoiserConfig


@dataclass
class TrainState:
    """Mutable training state; reusable across train() calls for chunked runs."""

    model: Denoiser
    optimizer: torch.optim.Adam
    rng: np.random.Generator
    step: int = 0


@dataclass
class TrainResult:
    state: TrainState
    loss_curve: np.ndarray
    metrics: list[dict] = field(default_factory=list)

    @property
    def model(self) -> Denoiser:
        return self.state.model


def corpus_array(sequences) -> np.ndarray:
    """Stack TokenSequences (equal shape) into an (N, steps, tracks) array."""
    arrays = [np.asarray(s.values, dtype=np.int64) for s in sequences]
    return np.stack(arrays, axis=0)


def init_train_state(config: DenoiserConfig, seed: int, learning_rate: float = 5e-4) -> TrainState:
    torch.manual_seed(seed)
    model = Denoiser(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=learning_rate, betas=(0.9, 0.999))
    rng = np.random.default_rng(seed)
    return TrainState(model=model, optimizer=optimizer, rng=rng)


def resume_train_state(checkpoint: Checkpoint, learning_rate: float = 5e-4) -> TrainState:
    optimizer = torch.optim.Adam(
        checkpoint.model.parameters(), lr=learning_rate, betas=(0.9, 0.999)
    )
    if checkpoint.optimizer_state is not None:
        optimizer.load_state_dict(checkpoint.optimizer_state)
    rng = np.random.default_rng()
    if checkpoint.numpy_rng_state is not None:
        rng.bit_generator.state = checkpoint.numpy_rng_state
    if checkpoint.torch_rng_state is not None:
        torch.set_rng_state(checkpoint.torch_rng_state)
    return TrainState(
        model=checkpoint.model, optimizer=optimizer, rng=rng, step=checkpoint.train_step
    )


def _sample_track_subsets(rng: np.random.Generator, batch: int, tracks: int) -> np.ndarray | None:
    """Uniformly choose a non-empty track subset per example (trio schedule)."""
    if tracks <= 1:
        return None
    picks = rng.integers(1, 2**tracks, size=batch)
    bits = (picks[:, None] >> np.arange(tracks)[None, :]) & 1
    return bits.astype(bool)


def train(corpus: np.ndarray, config: DenoiserConfig, schedule: DiffusionSchedule,
          steps: int, seed: int | None = None, batch_size: int = 32,
          learning_rate: float = 5e-4, weighting: str = "reweighted",
          state: TrainState | None = None, metrics_path=None,
          log_every: int = 100) -> TrainResult:
    """Run `steps` optimization steps; returns state plus the full loss curve."""
    corpus = np.asarray(corpus, dtype=np.int64)
    if corpus.ndim == 2:
        corpus = corpus[:, :, None]
    if corpus.shape[1] != config.steps or corpus.shape[2] != config.tracks:
        raise ValueError(
            f"corpus shape {corpus.shape} incompatible with config "
            f"(steps={config.steps}, tracks={config.tracks})"
        )
    if state is None:
        if seed is None:
            raise ValueError("need a seed when no training state is given")
        state = init_train_state(config, seed, learning_rate)
    model, optimizer, rng = state.model, state.optimizer, state.rng
    mask_ids = config.mask_ids

    losses = np.empty(steps, dtype=np.float64)
    metrics: list[dict] = []
    started = time.monotonic()
    metrics_fh = open(metrics_path, "a") if metrics_path is not None else None
    try:
        model.train()
        for i in range(steps):
            idx = rng.integers(0, corpus.shape[0], size=batch_size)
            t = rng.integers(1, schedule.timesteps + 1, size=batch_size)
            subsets = _sample_track_subsets(rng, batch_size, config.tracks)
            batch = corrupt_batch(corpus[idx], t, schedule, rng, mask_ids, subsets)

            logits = model(torch.from_numpy(batch.xt))
            loss = training_loss(
                logits,
                torch.from_numpy(batch.x0),
                torch.from_numpy(batch.mask),
                torch.from_numpy(batch.t),
                schedule,
                weighting=weighting,
            )
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at step {state.step}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            losses[i] = loss.detach().item()
            state.step += 1
            if state.step % log_every == 0 or i == steps - 1:
                record = {
                    "step": state.step,
                    "loss": losses[i],
                    "lr": learning_rate,
                    "wallclock": time.monotonic() - started,
                }
                metrics.append(record)
                if metrics_fh is not None:
                    metrics_fh.write(json.dumps(record) + "\n")
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    return TrainResult(state=state, loss_curve=losses, metrics=metrics)


def masked_accuracy(model: Denoiser, corpus: np.ndarray, schedule: DiffusionSchedule,
                    t: int | None = None, seed: int = 0, batch_size: int = 32) -> float:
    """Argmax accuracy at absorbed positions, corrupted at a fixed timestep.

    The default timestep masks half the grid (t = T/2): enough context to
    identify a memorized piece, enough masks for a meaningful average.
    """
    corpus = np.asarray(corpus, dtype=np.int64)
    if corpus.ndim == 2:
        corpus = corpus[:, :, None]
    if t is None:
        t = schedule.timesteps // 2
    rng = np.random.default_rng(seed)
    mask_ids = model.config.mask_ids
    correct = 0
    total = 0
    model.eval()
    with torch.no_grad():
        for start in range(0, corpus.shape[0], batch_size):
            x0 = corpus[start : start + batch_size]
            t_vec = np.full(x0.shape[0], t, dtype=np.int64)
            batch = corrupt_batch(x0, t_vec, schedule, rng, mask_ids)
            logits = model(torch.from_numpy(batch.xt))
            for track, track_logits in enumerate(logits):
                pred = track_logits.argmax(dim=-1).numpy()
                m = batch.mask[:, :, track]
                correct += int((pred[m] == x0[:, :, track][m]).sum())
                total += int(m.sum())
    return correct / total if total else float("nan")
