"""Hierarchical unmasking network: token grid with masks -> logits over x_0.

Per track, tokens (mask id included as an extra embedding row) are embedded
and compressed 4-to-1 by a strided 1-D convolution into the summary width;
trio tracks are compressed separately and summed.  A bidirectional pre-norm
transformer stack with learned positional embeddings processes the summary
sequence, a transposed convolution restores full length, and per-track
linear heads emit vocabulary logits.  The mask class never receives a
logit.  No explicit timestep conditioning: mask density carries t.
"""

from __future__ import annotations

import io
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from . import vocab
from .errors import CheckpointError

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class DenoiserConfig:
    steps: int = 256
    vocab_sizes: tuple[int, ...] = vocab.MELODY_VOCAB_SIZES
    token_embed_dim: int = 64
    summary_dim: int = 128
    n_layers: int = 2
    n_heads: int = 4
    conv_kernel: int = 4  # kernel == stride: 4 adjacent embeddings per summary slot

    def __post_init__(self):
        object.__setattr__(self, "vocab_sizes", tuple(int(v) for v in self.vocab_sizes))
        if self.steps % self.conv_kernel != 0:
            raise ValueError(f"steps ({self.steps}) must be divisible by {self.conv_kernel}")
        if self.summary_dim % self.n_heads != 0:
            raise ValueError("attention heads must divide summary_dim")

    @property
    def tracks(self) -> int:
        return len(self.vocab_sizes)

    @property
    def summary_len(self) -> int:
        return self.steps // self.conv_kernel

    @property
    def mask_ids(self) -> tuple[int, ...]:
        return vocab.mask_ids_for(self.vocab_sizes)

    @classmethod
    def paper_melody(cls) -> "DenoiserConfig":
        return cls(steps=1024, vocab_sizes=vocab.MELODY_VOCAB_SIZES,
                   token_embed_dim=128, summary_dim=512, n_layers=24, n_heads=8)

    @classmethod
    def paper_trio(cls) -> "DenoiserConfig":
        return cls(steps=1024, vocab_sizes=vocab.TRIO_VOCAB_SIZES,
                   token_embed_dim=128, summary_dim=512, n_layers=24, n_heads=8)

    @classmethod
    def desk_melody(cls, steps: int = 256) -> "DenoiserConfig":
        return cls(steps=steps, vocab_sizes=vocab.MELODY_VOCAB_SIZES)

    @classmethod
    def desk_trio(cls, steps: int = 256) -> "DenoiserConfig":
        return cls(steps=steps, vocab_sizes=vocab.TRIO_VOCAB_SIZES)


class TransformerBlock(nn.Module):
    """Pre-norm bidirectional block with a 4x GELU feed-forward."""

    def __init__(self, dim: int, n_heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, n_heads, batch_first=True)
        self.ln2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, 4 * dim),
            nn.GELU(),
            nn.Linear(4 * dim, dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h, h, need_weights=False)[0]
        return x + self.mlp(self.ln2(x))


class Denoiser(nn.Module):
    def __init__(self, config: DenoiserConfig):
        super().__init__()
        self.config = config
        k = config.conv_kernel
        self.embeds = nn.ModuleList(
            nn.Embedding(v + 1, config.token_embed_dim) for v in config.vocab_sizes
        )
        self.downs = nn.ModuleList(
            nn.Conv1d(config.token_embed_dim, config.summary_dim, k, stride=k)
            for _ in config.vocab_sizes
        )
        self.pos = nn.Parameter(torch.zeros(config.summary_len, config.summary_dim))
        nn.init.normal_(self.pos, std=0.02)
        self.blocks = nn.ModuleList(
            TransformerBlock(config.summary_dim, config.n_heads)
            for _ in range(config.n_layers)
        )
        self.norm = nn.LayerNorm(config.summary_dim)
        self.ups = nn.ModuleList(
            nn.ConvTranspose1d(config.summary_dim, config.token_embed_dim, k, stride=k)
            for _ in config.vocab_sizes
        )
        self.heads = nn.ModuleList(
            nn.Linear(config.token_embed_dim, v) for v in config.vocab_sizes
        )

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        """x: (batch, steps, tracks) token ids -> per-track (batch, steps, vocab) logits."""
        if x.ndim == 2:
            x = x.unsqueeze(-1)
        if x.shape[1] != self.config.steps or x.shape[2] != self.config.tracks:
            raise ValueError(
                f"input shape {tuple(x.shape)} incompatible with config "
                f"(steps={self.config.steps}, tracks={self.config.tracks})"
            )
        summed = None
        for track in range(self.config.tracks):
            e = self.embeds[track](x[:, :, track].long())          # (B, S, E)
            c = self.downs[track](e.transpose(1, 2))               # (B, D, S/k)
            summed = c if summed is None else summed + c
        h = summed.transpose(1, 2) + self.pos
        for block in self.blocks:
            h = block(h)
        h = self.norm(h)
        out = []
        for track in range(self.config.tracks):
            e = self.ups[track](h.transpose(1, 2)).transpose(1, 2)  # (B, S, E)
            out.append(self.heads[track](e))
        return out

    @torch.no_grad()
    def predict_probs(self, values: np.ndarray) -> list[np.ndarray]:
        """Single unbatched grid -> per-track float64 probability arrays."""
        was_training = self.training
        self.eval()
        try:
            x = torch.from_numpy(np.ascontiguousarray(values, dtype=np.int64)).unsqueeze(0)
            logits = self.forward(x)
            return [
                torch.softmax(l[0].to(torch.float64), dim=-1).numpy() for l in logits
            ]
        finally:
            self.train(was_training)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


@dataclass
class Checkpoint:
    """Everything needed to reproduce forward passes and continue training."""

    config: DenoiserConfig
    model: Denoiser
    optimizer_state: dict | None
    train_step: int
    numpy_rng_state: dict | None
    torch_rng_state: torch.Tensor | None


def save_checkpoint(path, model: Denoiser, optimizer=None, train_step: int = 0,
                    numpy_rng: np.random.Generator | None = None) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "model_state": model.state_dict(),
        "optimizer_state": optimizer.state_dict() if optimizer is not None else None,
        "train_step": int(train_step),
        "numpy_rng_state": numpy_rng.bit_generator.state if numpy_rng is not None else None,
        "torch_rng_state": torch.get_rng_state(),
    }
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    with open(path, "wb") as fh:
        fh.write(buffer.getvalue())


def load_checkpoint(path, expected_config: DenoiserConfig | None = None) -> Checkpoint:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path} is not a checkpoint container")
    if payload["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload['format_version']} != supported {CHECKPOINT_VERSION}"
        )
    stored = payload["config"]
    stored["vocab_sizes"] = tuple(stored["vocab_sizes"])
    config = DenoiserConfig(**stored)
    if expected_config is not None and config != expected_config:
        raise CheckpointError(
            f"checkpoint config {config} does not match requested {expected_config}"
        )
    model = Denoiser(config)
    try:
        model.load_state_dict(payload["model_state"], strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"checkpoint tensors incompatible with config: {exc}") from exc
    return Checkpoint(
        config=config,
        model=model,
        optimizer_state=payload.get("optimizer_state"),
        train_step=payload.get("train_step", 0),
        numpy_rng_state=payload.get("numpy_rng_state"),
        torch_rng_state=payload.get("torch_rng_state"),
    )
