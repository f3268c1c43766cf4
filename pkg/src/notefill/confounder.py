"""Adversarial audit of the self-similarity metrics.

Derives a non-musical note set from a binarized image (one note per
occupied column, pitch sampled from the column's intensity profile) and
anneals pitches and durations until the set's Overlapping-Area statistics
match a reference piece's, while every note stays within a small visual
envelope of its image origin.  The result scores near-perfect Consistency
and Variance despite being, audibly and visibly, the image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfounderError
from .metrics import (
    VARIANCE_FLOOR,
    _fsum_mean_var,
    overlap_area,
    piece_pair_oas,
    relative_scores,
    sequence_pair_oas,
    window_stats,
)
from .tokens import STEPS_PER_BAR, NoteEvent, TokenSequence

WINDOW_STEPS = 4 * STEPS_PER_BAR
HOP_STEPS = 2 * STEPS_PER_BAR


@dataclass(frozen=True)
class AnnealerConfig:
    iterations: int = 200_000
    initial_temperature: float | None = None   # None: calibrate for ~50% uphill acceptance
    cooling_rate: float | None = None          # None: reach 1e-4 * T0 at the budget's end
    pitch_sigma: float = 1.2
    duration_sigma: float = 1.6
    envelope_rows: int = 2
    target_score: float = 0.98
    check_every: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.initial_temperature is not None and self.initial_temperature <= 0:
            raise ValueError("initial temperature must be > 0")
        if self.cooling_rate is not None and not 0 < self.cooling_rate < 1:
            raise ValueError("cooling rate must be in (0, 1)")


@dataclass
class ImageScore:
    """Notes sampled column-wise from a binarized image."""

    width: int
    height: int
    threshold: float
    pitches: np.ndarray     # row index per note, row 0 = lowest pitch
    onsets: np.ndarray      # column index per note
    durations: np.ndarray   # steps, >= 1

    @property
    def note_count(self) -> int:
        return len(self.pitches)

    def note_events(self) -> list[NoteEvent]:
        return [
            NoteEvent(int(p), int(o), int(d))
            for p, o, d in zip(self.pitches, self.onsets, self.durations)
        ]


def load_image(path) -> np.ndarray:
    """Grayscale image in [0, 1] with row 0 at the bottom (pitch order)."""
    from PIL import Image

    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    return arr[::-1, :].copy()


def image_to_notes(image: np.ndarray, threshold: float,
                   rng: np.random.Generator) -> ImageScore:
    """Sample one pitch per occupied column; empty columns stay silent."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.size == 0:
        raise ConfounderError(f"image must be a non-empty 2-D grid, got shape {image.shape}")
    height, width = image.shape
    passing = image > threshold
    if not passing.any():
        raise ConfounderError("no pixel exceeds the binarization threshold")
    pitches, onsets = [], []
    for column in range(width):
        rows = np.flatnonzero(passing[:, column])
        if rows.size == 0:
            continue
        weights = np.full(rows.size, 1.0 / rows.size)
        pitches.append(int(rng.choice(rows, p=weights)))
        onsets.append(column)
    return ImageScore(
        width=width,
        height=height,
        threshold=threshold,
        pitches=np.asarray(pitches, dtype=np.int64),
        onsets=np.asarray(onsets, dtype=np.int64),
        durations=np.ones(len(pitches), dtype=np.int64),
    )


@dataclass
class ReferenceStats:
    """OA mean/variance targets taken from one reference piece."""

    mu_pitch: float
    var_pitch: float
    mu_duration: float
    var_duration: float

    @classmethod
    def from_sequence(cls, seq: TokenSequence) -> "ReferenceStats":
        pitch, duration = sequence_pair_oas(seq)
        if len(pitch) < 2:
            raise ConfounderError("reference piece has too few window pairs for statistics")
        mu_p, var_p = _fsum_mean_var(pitch)
        mu_d, var_d = _fsum_mean_var(duration)
        if min(mu_p, mu_d) <= 0 or min(var_p, var_d) <= 0:
            raise ConfounderError("reference OA statistics are degenerate")
        return cls(mu_p, var_p, mu_d, var_d)


@dataclass
class AnnealResult:
    score: ImageScore               # best-so-far forged notes
    trace: np.ndarray               # best objective after each iteration
    converged: bool
    iterations_used: int
    objective: float
    scores: dict[str, float]        # Consistency/Variance recomputed via metrics
    anchored_fraction: float


class _ForgedState:
    """Window statistics and pair OAs with O(affected windows) updates.

    Window membership is by onset and onsets never move, so the member
    index lists are static; a proposal touching one note only recomputes
    its (at most two) windows and their adjacent pairs.
    """

    def __init__(self, score: ImageScore, reference: ReferenceStats):
        self.pitches = score.pitches.astype(np.float64).copy()
        self.durations = score.durations.astype(np.float64).copy()
        self.reference = reference
        total_steps = score.width
        bars = total_steps // STEPS_PER_BAR
        self.n_windows = max(0, (bars - 4) // 2 + 1)
        if self.n_windows < 2:
            raise ConfounderError(
                f"image width {score.width} gives {self.n_windows} windows; need >= 2"
            )
        self.members: list[np.ndarray] = []
        for w in range(self.n_windows):
            start = w * HOP_STEPS
            inside = (score.onsets >= start) & (score.onsets < start + WINDOW_STEPS)
            self.members.append(np.flatnonzero(inside))
        self.window_of_note: list[list[int]] = [[] for _ in range(score.note_count)]
        for w, idx in enumerate(self.members):
            for j in idx:
                self.window_of_note[j].append(w)

        self.w_stats = np.zeros((self.n_windows, 4))  # mu_p, var_p, mu_d, var_d
        self.w_valid = np.zeros(self.n_windows, dtype=bool)
        for w in range(self.n_windows):
            self._recompute_window(w)
        self.pairs = [
            (w, w + 1)
            for w in range(self.n_windows - 1)
            if self.w_valid[w] and self.w_valid[w + 1]
        ]
        if len(self.pairs) < 2:
            raise ConfounderError("too few non-empty window pairs in the image score")
        self.pairs_of_window: list[list[int]] = [[] for _ in range(self.n_windows)]
        for pair_index, (a, b) in enumerate(self.pairs):
            self.pairs_of_window[a].append(pair_index)
            self.pairs_of_window[b].append(pair_index)
        self.oa = np.zeros((len(self.pairs), 2))  # pitch, duration
        for pair_index in range(len(self.pairs)):
            self._recompute_pair(pair_index)

    def _recompute_window(self, w: int) -> None:
        idx = self.members[w]
        if idx.size == 0:
            self.w_valid[w] = False
            return
        self.w_valid[w] = True
        p = self.pitches[idx]
        d = self.durations[idx]
        self.w_stats[w, 0] = p.mean()
        self.w_stats[w, 1] = max(p.var(), VARIANCE_FLOOR)
        self.w_stats[w, 2] = d.mean()
        self.w_stats[w, 3] = max(d.var(), VARIANCE_FLOOR)

    def _recompute_pair(self, pair_index: int) -> None:
        a, b = self.pairs[pair_index]
        sa, sb = self.w_stats[a], self.w_stats[b]
        self.oa[pair_index, 0] = overlap_area(sa[0], sa[1], sb[0], sb[1])
        self.oa[pair_index, 1] = overlap_area(sa[2], sa[3], sb[2], sb[3])

    def components(self) -> np.ndarray:
        """The four normalized distances to the reference statistics."""
        mu_p = self.oa[:, 0].mean()
        var_p = self.oa[:, 0].var()
        mu_d = self.oa[:, 1].mean()
        var_d = self.oa[:, 1].var()
        r = self.reference
        return np.array([
            abs(mu_p - r.mu_pitch) / r.mu_pitch,
            abs(var_p - r.var_pitch) / r.var_pitch,
            abs(mu_d - r.mu_duration) / r.mu_duration,
            abs(var_d - r.var_duration) / r.var_duration,
        ])

    def objective(self) -> float:
        return float(self.components().sum())

    def apply(self, note: int, pitch: float, duration: float) -> list[int]:
        """Write a candidate note value; returns the affected pair indices."""
        self.pitches[note] = pitch
        self.durations[note] = duration
        affected: list[int] = []
        for w in self.window_of_note[note]:
            self._recompute_window(w)
            affected.extend(self.pairs_of_window[w])
        for pair_index in set(affected):
            self._recompute_pair(pair_index)
        return affected


def anneal(start: ImageScore, reference: TokenSequence | ReferenceStats,
           config: AnnealerConfig = AnnealerConfig()) -> AnnealResult:
    """Steer the image score toward the reference's OA statistics.

    Proposals jitter one note's pitch and/or duration; anything moving a
    pitch beyond the visual envelope of its image origin is rejected
    outright.  Acceptance is Metropolis with geometric cooling; the best
    state seen is tracked and returned.
    """
    if start.note_count == 0:
        raise ConfounderError("image score has no notes")
    if isinstance(reference, TokenSequence):
        reference = ReferenceStats.from_sequence(reference)
    rng = np.random.default_rng(config.seed)
    state = _ForgedState(start, reference)
    origin = start.pitches.astype(np.int64).copy()
    tol = 1.0 - config.target_score

    def propose():
        """(note, new pitch, new duration) or None when outside the envelope."""
        j = int(rng.integers(start.note_count))
        move_pitch = rng.random() < 0.5
        move_duration = rng.random() < 0.5
        if not (move_pitch or move_duration):
            move_pitch = True
        pitch = state.pitches[j]
        duration = state.durations[j]
        if move_pitch:
            pitch = pitch + round(rng.normal(0.0, config.pitch_sigma))
            if abs(pitch - origin[j]) > config.envelope_rows or not 0 <= pitch < start.height:
                return None
        if move_duration:
            duration = max(1.0, duration + round(rng.normal(0.0, config.duration_sigma)))
        return j, float(pitch), float(duration)

    current = state.objective()
    best = current
    best_pitches = state.pitches.copy()
    best_durations = state.durations.copy()
    best_components = state.components()
    trace = np.empty(config.iterations)
    converged = bool((best_components <= tol).all())
    iterations_used = 0

    temperature = config.initial_temperature
    if temperature is None:
        temperature = _calibrate_temperature(state, propose, current, rng)
    cooling = config.cooling_rate
    if cooling is None:
        cooling = (1e-6) ** (1.0 / max(1, config.iterations))

    for i in range(config.iterations):
        if converged:
            trace[i:] = best
            break
        iterations_used = i + 1
        candidate = propose()
        if candidate is not None:
            j, pitch, duration = candidate
            old_pitch = state.pitches[j]
            old_duration = state.durations[j]
            state.apply(j, pitch, duration)
            new = state.objective()
            delta = new - current
            if delta < 0 or rng.random() < math.exp(-delta / temperature):
                current = new
                if new < best:
                    best = new
                    best_pitches = state.pitches.copy()
                    best_durations = state.durations.copy()
                    best_components = state.components()
            else:
                state.apply(j, old_pitch, old_duration)
        temperature *= cooling
        trace[i] = best
        if (i + 1) % config.check_every == 0 and (best_components <= tol).all():
            converged = True
            trace[i + 1 :] = best
            break
    else:
        converged = bool((best_components <= tol).all())

    forged = ImageScore(
        width=start.width,
        height=start.height,
        threshold=start.threshold,
        pitches=best_pitches.astype(np.int64),
        onsets=start.onsets.copy(),
        durations=best_durations.astype(np.int64),
    )
    scores = forged_scores(forged, reference)
    anchored = anchored_fraction(forged, origin, start.onsets, config.envelope_rows)
    return AnnealResult(
        score=forged,
        trace=trace,
        converged=converged,
        iterations_used=iterations_used,
        objective=best,
        scores=scores,
        anchored_fraction=anchored,
    )


def _calibrate_temperature(state: _ForgedState, propose, current: float,
                           rng: np.random.Generator, probes: int = 500) -> float:
    """Initial temperature from the first probes' uphill move sizes.

    Targets roughly 50% acceptance of the large (90th percentile) uphill
    moves: degenerate starts (all durations equal) sit behind objective
    cliffs that a median-based temperature would never cross.
    """
    uphill = []
    for _ in range(probes):
        candidate = propose()
        if candidate is None:
            continue
        j, pitch, duration = candidate
        old_pitch = state.pitches[j]
        old_duration = state.durations[j]
        state.apply(j, pitch, duration)
        delta = state.objective() - current
        state.apply(j, old_pitch, old_duration)
        if delta > 0:
            uphill.append(delta)
    if not uphill:
        return 1e-3
    return float(np.quantile(uphill, 0.9) / math.log(2.0))


def forged_scores(score: ImageScore, reference: ReferenceStats) -> dict[str, float]:
    """Consistency/Variance of the forged notes, recomputed via the metrics module."""
    stats = window_stats(score.note_events(), score.width)
    pitch, duration = piece_pair_oas(stats)
    mu_p, var_p = _fsum_mean_var(pitch)
    mu_d, var_d = _fsum_mean_var(duration)
    c_p, v_p = relative_scores(mu_p, var_p, reference.mu_pitch, reference.var_pitch)
    c_d, v_d = relative_scores(mu_d, var_d, reference.mu_duration, reference.var_duration)
    return {
        "consistency_pitch": c_p,
        "variance_pitch": v_p,
        "consistency_duration": c_d,
        "variance_duration": v_d,
    }


def anchored_fraction(score: ImageScore, origin_pitches: np.ndarray,
                      origin_onsets: np.ndarray, envelope: int = 2) -> float:
    rows = np.abs(score.pitches - origin_pitches) <= envelope
    cols = np.abs(score.onsets - origin_onsets) <= envelope
    return float(np.mean(rows & cols))


def render_comparison(image: np.ndarray, forged: ImageScore,
                      reference: TokenSequence, out_path,
                      scores: dict[str, float] | None = None) -> dict:
    """Three stacked piano-roll panels (image, forged notes, reference) plus
    the four scores; writes a PNG and returns the report dict."""
    if forged.note_count == 0:
        raise ConfounderError("nothing to render: forged note set is empty")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if scores is None:
        scores = forged_scores(forged, ReferenceStats.from_sequence(reference))

    fig, axes = plt.subplots(3, 1, figsize=(10, 8), constrained_layout=True)
    axes[0].imshow(image, cmap="gray", origin="lower", aspect="auto")
    axes[0].set_title("source image")

    axes[1].hlines(
        forged.pitches,
        forged.onsets,
        forged.onsets + forged.durations,
        colors="tab:red",
        linewidth=2,
    )
    axes[1].set_xlim(0, forged.width)
    axes[1].set_title("forged notes")

    from .tokens import note_events

    ref_notes = [n for n in note_events(reference) if n.track < 2]
    axes[2].hlines(
        [n.pitch for n in ref_notes],
        [n.onset_step for n in ref_notes],
        [n.end_step for n in ref_notes],
        colors="tab:blue",
        linewidth=2,
    )
    axes[2].set_xlim(0, reference.steps)
    axes[2].set_title("reference piece")

    caption = "  ".join(f"{k}={v:.3f}" for k, v in scores.items())
    fig.suptitle(caption, fontsize=10)
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return {"scores": scores, "notes": forged.note_count, "image_size": [forged.height, forged.width]}
