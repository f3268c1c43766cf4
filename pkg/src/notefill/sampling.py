"""Reverse-diffusion sampling: unconditional, infilling, and guided.

The reverse loop counts an index i from `steps` down to 1.  Each iteration
predicts x_0 probabilities for the current grid, draws a candidate token
per absorbed position, and commits each independently with probability
1/i; committed tokens never change again, and positions outside the mask
pattern are preserved verbatim.  With `steps == 1` this is single-jump
unmasking.  An optional guidance hook shifts the predicted probabilities
down its loss gradient before sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diffusion import DiffusionSchedule
from .errors import SamplingCancelledError, ScheduleError
from .tokens import TokenSequence


class MaskPattern:
    """Boolean steps x tracks grid; True marks positions to regenerate."""

    def __init__(self, grid: np.ndarray):
        grid = np.asarray(grid, dtype=bool)
        if grid.ndim == 1:
            grid = grid[:, None]
        if grid.ndim != 2:
            raise ValueError(f"mask grid must be 2-D, got shape {grid.shape}")
        self.grid = grid

    @property
    def steps(self) -> int:
        return self.grid.shape[0]

    @property
    def tracks(self) -> int:
        return self.grid.shape[1]

    def count(self) -> int:
        return int(self.grid.sum())

    @classmethod
    def all(cls, steps: int, tracks: int) -> "MaskPattern":
        return cls(np.ones((steps, tracks), dtype=bool))

    @classmethod
    def none(cls, steps: int, tracks: int) -> "MaskPattern":
        return cls(np.zeros((steps, tracks), dtype=bool))

    @classmethod
    def central(cls, steps: int, tracks: int) -> "MaskPattern":
        """Mask the central half of the grid across all tracks."""
        grid = np.zeros((steps, tracks), dtype=bool)
        grid[steps // 4 : 3 * steps // 4, :] = True
        return cls(grid)

    @classmethod
    def track_subset(cls, steps: int, tracks: int, subset) -> "MaskPattern":
        grid = np.zeros((steps, tracks), dtype=bool)
        for track in subset:
            grid[:, int(track)] = True
        return cls(grid)

    # Run-length encoded JSON: per track, [start, length] spans of True.
    def to_json(self) -> dict:
        runs = []
        for track in range(self.tracks):
            column = self.grid[:, track]
            edges = np.flatnonzero(np.diff(np.concatenate(([False], column, [False]))))
            spans = [
                [int(edges[i]), int(edges[i + 1] - edges[i])]
                for i in range(0, len(edges), 2)
            ]
            runs.append(spans)
        return {"steps": self.steps, "tracks": self.tracks, "runs": runs}

    @classmethod
    def from_json(cls, payload: dict) -> "MaskPattern":
        steps = int(payload["steps"])
        tracks = int(payload["tracks"])
        runs = payload["runs"]
        if len(runs) != tracks:
            raise ValueError(f"expected {tracks} run lists, got {len(runs)}")
        grid = np.zeros((steps, tracks), dtype=bool)
        for track, spans in enumerate(runs):
            for start, length in spans:
                if start < 0 or length < 0 or start + length > steps:
                    raise ValueError(f"run [{start}, {length}] exceeds {steps} steps")
                grid[start : start + length, track] = True
        return cls(grid)

    def __eq__(self, other) -> bool:
        return isinstance(other, MaskPattern) and np.array_equal(self.grid, other.grid)


@dataclass
class StepUpdate:
    """What one reverse step changed; passed to the on_step observer."""

    index: int                 # 1-based message number, 1..steps
    countdown: int             # the 1/i commit index for this step
    committed: list[tuple[int, int, int]]  # (step, track, token)
    remaining_masks: int
    values: np.ndarray         # snapshot of the grid after this step


@dataclass
class SampleStats:
    model_calls: int = 0
    commits_per_step: list[int] = field(default_factory=list)
    guidance_fallbacks: int = 0


def _as_prob_fn(denoiser):
    """Accept a Denoiser model or a raw grid->probability-list callable."""
    predict = getattr(denoiser, "predict_probs", None)
    if predict is not None:
        return predict
    return denoiser


def _model_tracks(denoiser) -> int | None:
    config = getattr(denoiser, "config", None)
    return None if config is None else config.tracks


def sample(denoiser, schedule: DiffusionSchedule, init: TokenSequence,
           pattern: MaskPattern, steps: int, rng: np.random.Generator,
           on_step=None, guidance=None, unmask_order: str = "random",
           stats: SampleStats | None = None) -> TokenSequence:
    """Run the reverse process over the masked positions of `init`.

    `init` must hold the mask id exactly where `pattern` is True.  Exactly
    `steps` observer messages are emitted; sampling aborts with
    SamplingCancelledError when the observer returns False.
    """
    if steps < 1:
        raise ScheduleError(f"steps must be >= 1, got {steps}")
    if steps > schedule.timesteps:
        raise ScheduleError(f"steps ({steps}) exceeds schedule T ({schedule.timesteps})")
    if pattern.grid.shape != init.values.shape:
        raise ValueError(
            f"pattern shape {pattern.grid.shape} != sequence shape {init.values.shape}"
        )
    mask_ids = init.mask_ids
    expected = np.zeros_like(init.values)
    for track, mid in enumerate(mask_ids):
        expected[:, track] = mid
    if not np.array_equal(init.values == expected, pattern.grid):
        raise ValueError("init must hold the mask id exactly where the pattern is True")
    if unmask_order not in ("random", "linear"):
        raise ValueError(f"unknown unmask order {unmask_order!r}")

    prob_fn = _as_prob_fn(denoiser)
    x = init.values.copy()
    masked = pattern.grid.copy()
    if stats is None:
        stats = SampleStats()

    for index, countdown in enumerate(range(steps, 0, -1), start=1):
        committed: list[tuple[int, int, int]] = []
        if masked.any():
            probs = prob_fn(x)
            stats.model_calls += 1
            if guidance is not None:
                probs = _force_known_positions(probs, masked, x)
                probs = _apply_guidance(probs, masked, guidance, stats)
            for track in range(x.shape[1]):
                rows = np.flatnonzero(masked[:, track])
                if rows.size == 0:
                    continue
                p = np.asarray(probs[track], dtype=np.float64)[rows]
                candidates = _categorical_rows(p, rng)
                if countdown == 1:
                    keep = np.ones(rows.size, dtype=bool)
                elif unmask_order == "linear":
                    keep = np.zeros(rows.size, dtype=bool)
                    keep[: -(-rows.size // countdown)] = True  # ceil(n / i) in order
                else:
                    keep = rng.random(rows.size) < 1.0 / countdown
                for row, token in zip(rows[keep], candidates[keep]):
                    x[row, track] = token
                    masked[row, track] = False
                    committed.append((int(row), track, int(token)))
        stats.commits_per_step.append(len(committed))
        if on_step is not None:
            update = StepUpdate(
                index=index,
                countdown=countdown,
                committed=committed,
                remaining_masks=int(masked.sum()),
                values=x.copy(),
            )
            if on_step(update) is False:
                raise SamplingCancelledError(f"observer cancelled at step {index}/{steps}")

    assert not masked.any()
    return TokenSequence(x, init.steps_per_bar)


def _categorical_rows(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of a (n, vocab) probability matrix."""
    cum = np.cumsum(p, axis=1)
    cum /= cum[:, -1:]
    u = rng.random(p.shape[0])
    return np.minimum((cum < u[:, None]).sum(axis=1), p.shape[1] - 1)


def _force_known_positions(probs, masked, x):
    """Replace predictions at unmasked positions with their known one-hot.

    The absorbing forward process never changes token identity, so x_0 at an
    unmasked position is the position's current token with certainty; the
    network output there is only an approximation of that delta.  Guidance
    losses then see exact densities for committed material.
    """
    out = []
    for track, p in enumerate(probs):
        p = np.array(p, dtype=np.float64, copy=True)
        known = ~masked[:, track]
        p[known] = 0.0
        p[known, x[known, track].astype(np.int64)] = 1.0
        out.append(p)
    return out


def _apply_guidance(probs, masked, guidance, stats: SampleStats):
    """Shift probabilities down the guidance gradient, then repair rows.

    Only still-masked positions move.  The default repair is multiplicative,
    p * exp(-scale * grad) renormalized: an additive update with clipping
    has wildly asymmetric authority (adding mass to a whole vocabulary
    row is unbounded, removing it saturates at what each entry holds), which
    systematically biases density guidance upward.  `repair="clip"` keeps
    the literal subtract-clip-renormalize form.  Rows whose mass dies fall
    back to their unguided values and bump the fallback counter.
    """
    if guidance.scale == 0.0:
        return probs  # exact no-op so a zero scale reproduces unguided runs bit for bit
    repair = getattr(guidance, "repair", "multiplicative")
    grads = guidance.gradients(probs, masked)
    adjusted = []
    for track, p in enumerate(probs):
        p = np.asarray(p, dtype=np.float64)
        g = grads[track] if track < len(grads) and grads[track] is not None else None
        if g is None:
            adjusted.append(p)
            continue
        q = p.copy()
        rows = masked[:, track]
        step = guidance.scale * np.asarray(g, dtype=np.float64)[rows]
        if repair == "multiplicative":
            q[rows] = q[rows] * np.exp(-np.clip(step, -500.0, 500.0))
        elif repair == "clip":
            q[rows] = q[rows] - step
            np.clip(q, 0.0, None, out=q)
        else:
            raise ValueError(f"unknown guidance repair {repair!r}")
        sums = q.sum(axis=1)
        dead = rows & (sums <= 0.0)
        if dead.any():
            q[dead] = p[dead]
            sums = q.sum(axis=1)
            stats.guidance_fallbacks += int(dead.sum())
        q /= sums[:, None]
        adjusted.append(q)
    return adjusted


def masked_init(seq: TokenSequence, pattern: MaskPattern) -> TokenSequence:
    """Copy of `seq` with mask ids written where the pattern is True."""
    values = seq.values.copy()
    for track, mid in enumerate(seq.mask_ids):
        values[pattern.grid[:, track], track] = mid
    return TokenSequence(values, seq.steps_per_bar)


def unconditional(denoiser, schedule: DiffusionSchedule, steps: int,
                  rng: np.random.Generator, seq_steps: int | None = None,
                  tracks: int | None = None, on_step=None, guidance=None,
                  stats: SampleStats | None = None) -> TokenSequence:
    """Sample a piece from all-mask: the unconditional generation path."""
    if seq_steps is None or tracks is None:
        config = getattr(denoiser, "config", None)
        if config is None:
            raise ValueError("need seq_steps and tracks for a bare denoiser callable")
        seq_steps = config.steps if seq_steps is None else seq_steps
        tracks = config.tracks if tracks is None else tracks
    pattern = MaskPattern.all(seq_steps, tracks)
    blank = TokenSequence(np.zeros((seq_steps, tracks), dtype=np.uint16))
    init = masked_init(blank, pattern)
    return sample(denoiser, schedule, init, pattern, steps, rng,
                  on_step=on_step, guidance=guidance, stats=stats)


def infill(seq: TokenSequence, pattern: MaskPattern, denoiser,
           schedule: DiffusionSchedule, rng: np.random.Generator,
           steps: int | None = None, on_step=None, guidance=None,
           stats: SampleStats | None = None) -> TokenSequence:
    """Regenerate the patterned positions of a mask-free sequence."""
    if steps is None:
        steps = schedule.timesteps
    init = masked_init(seq, pattern)
    return sample(denoiser, schedule, init, pattern, steps, rng,
                  on_step=on_step, guidance=guidance, stats=stats)


def infill_central(seq: TokenSequence, denoiser, schedule: DiffusionSchedule,
                   rng: np.random.Generator, steps: int | None = None,
                   on_step=None) -> TokenSequence:
    """Mask and regenerate the central 512 of a 1024-step piece, all tracks."""
    if seq.steps != 1024:
        raise ValueError(f"central-512 infilling needs a 1024-step piece, got {seq.steps}")
    pattern = MaskPattern.central(seq.steps, seq.tracks)
    return infill(seq, pattern, denoiser, schedule, rng, steps=steps, on_step=on_step)


def accompany(seq: TokenSequence, tracks_to_generate, denoiser,
              schedule: DiffusionSchedule, rng: np.random.Generator,
              steps: int | None = None, on_step=None) -> TokenSequence:
    """Regenerate whole tracks of a trio, preserving the others exactly."""
    subset = sorted({int(track) for track in tracks_to_generate})
    if not subset:
        raise ValueError("track subset must be non-empty")
    if seq.tracks != 3:
        raise ValueError("accompaniment needs a trio sequence")
    model_tracks = _model_tracks(denoiser)
    if model_tracks is not None and model_tracks != 3:
        raise ValueError("a melody-only model cannot generate trio accompaniment")
    if any(track < 0 or track >= seq.tracks for track in subset):
        raise ValueError(f"track subset {subset} outside 0..{seq.tracks - 1}")
    pattern = MaskPattern.track_subset(seq.steps, seq.tracks, subset)
    return infill(seq, pattern, denoiser, schedule, rng, steps=steps, on_step=on_step)


def guided_sample(denoiser, schedule: DiffusionSchedule, guidance, steps: int,
                  rng: np.random.Generator, init: TokenSequence | None = None,
                  pattern: MaskPattern | None = None, on_step=None,
                  stats: SampleStats | None = None) -> TokenSequence:
    """Classifier-guided sampling; with guidance.scale == 0 this is sample()."""
    if guidance.scale < 0:
        raise ValueError("guidance scale must be >= 0")
    if init is None:
        return unconditional(denoiser, schedule, steps, rng, on_step=on_step,
                             guidance=guidance, stats=stats)
    if pattern is None:
        pattern = MaskPattern.all(init.steps, init.tracks)
    return sample(denoiser, schedule, masked_init(init, pattern), pattern, steps,
                  rng, on_step=on_step, guidance=guidance, stats=stats)
