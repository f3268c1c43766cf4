"""Deterministic synthetic corpus: small tonal pieces rendered as MIDI.

Generates melodies (and trios) with per-piece keys, rhythm patterns, and
contours from a seeded generator, then renders them as standard MIDI files
with slight tick jitter (small enough that nearest-step quantization
recovers the intended grid).  Useful for demos, overfit fixtures, and
round-trip tests without shipping a real corpus.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import midi as smf
from . import vocab
from .tokens import STEPS_PER_BAR, GridNote, extract_melody, extract_trio, parse_midi

SCALES = {
    "major": (0, 2, 4, 5, 7, 9, 11),
    "minor": (0, 2, 3, 5, 7, 8, 10),
    "dorian": (0, 2, 3, 5, 7, 9, 10),
    "pentatonic": (0, 2, 4, 7, 9),
}

RHYTHMS = (
    tuple(range(16)),
    (0, 1, 2, 4, 5, 6, 8, 9, 10, 12, 13, 14),
    (0, 2, 3, 4, 6, 8, 10, 11, 12, 14),
    (0, 2, 4, 6, 8, 10, 12, 14),
    (0, 4, 8, 12),
    (0, 3, 6, 8, 11, 14),
    (0, 2, 4, 8, 10, 12),
    (0, 4, 6, 10, 12, 14),
    (0, 6, 12),
    (0, 8),
    (4,),
)

DRUM_PATTERNS = (
    # (kick steps, snare steps, hat steps)
    ((0, 8), (4, 12), (0, 2, 4, 6, 8, 10, 12, 14)),
    ((0, 6, 8), (4, 12), (0, 4, 8, 12)),
    ((0, 8, 10), (4, 12, 14), (0, 2, 4, 6, 8, 10, 12, 14)),
)

KICK, SNARE, CLOSED_HAT = 36, 38, 42


def melody_grid_notes(rng: np.random.Generator, bars: int,
                      program: int = 0, channel: int = 0, track: int = 0) -> list[GridNote]:
    """One seeded melody: scale walk over a per-piece rhythm.

    Half the pieces follow a fixed beat pattern; the rest draw onsets per
    step at a piece-specific rate, which spreads note density smoothly
    from sparse to dense across the corpus.
    """
    scale = list(SCALES.values())[rng.integers(len(SCALES))]
    tonic = int(rng.integers(48, 68))
    rhythm = RHYTHMS[rng.integers(len(RHYTHMS))] if rng.random() < 0.5 else None
    onset_rate = float(rng.uniform(0.12, 0.85))
    degree = int(rng.integers(-3, 4))
    notes: list[GridNote] = []
    for bar in range(bars):
        if rng.random() < 0.05:
            continue  # whole-bar rest
        if rhythm is not None:
            onsets = [s for s in rhythm if rng.random() > 0.15]
        else:
            onsets = [s for s in range(STEPS_PER_BAR) if rng.random() < onset_rate]
        for i, step in enumerate(onsets):
            degree += int(rng.integers(-2, 3))
            degree = int(np.clip(degree, -8, 12))
            pitch = tonic + 12 * (degree // len(scale)) + scale[degree % len(scale)]
            pitch = int(np.clip(pitch, vocab.PITCH_LO, vocab.PITCH_HI))
            gap = (onsets[i + 1] if i + 1 < len(onsets) else STEPS_PER_BAR) - step
            roll = rng.random()
            if roll < 0.55:
                duration = gap                       # legato
            elif roll < 0.8:
                duration = max(1, gap - 1)           # detached
            else:
                duration = int(rng.integers(1, gap + 1))  # staccato to full
            notes.append(
                GridNote(pitch, bar * STEPS_PER_BAR + step, duration, channel, program, track)
            )
    return notes


def bass_grid_notes(rng: np.random.Generator, bars: int, melody: list[GridNote],
                    program: int = 33, channel: int = 1, track: int = 1) -> list[GridNote]:
    """Roots and fifths under the melody, half- or quarter-note pulse."""
    anchor = int(np.median([n.pitch for n in melody])) - 24 if melody else 40
    anchor = int(np.clip(anchor, vocab.PITCH_LO, 60))
    notes = []
    for bar in range(bars):
        steps = (0, 8) if rng.random() < 0.7 else (0, 4, 8, 12)
        for step in steps:
            offset = int(rng.choice((0, 0, 7, 5)))
            pitch = int(np.clip(anchor + offset, vocab.PITCH_LO, vocab.PITCH_HI))
            duration = 16 // len(steps)
            notes.append(
                GridNote(pitch, bar * STEPS_PER_BAR + step, duration, channel, program, track)
            )
    return notes


def drum_grid_notes(rng: np.random.Generator, bars: int,
                    channel: int = smf.DRUM_CHANNEL, track: int = 2) -> list[GridNote]:
    kick, snare, hat = DRUM_PATTERNS[rng.integers(len(DRUM_PATTERNS))]
    notes = []
    for bar in range(bars):
        base = bar * STEPS_PER_BAR
        for step in kick:
            notes.append(GridNote(KICK, base + step, 1, channel, 0, track))
        for step in snare:
            notes.append(GridNote(SNARE, base + step, 1, channel, 0, track))
        for step in hat:
            if rng.random() > 0.1:
                notes.append(GridNote(CLOSED_HAT, base + step, 1, channel, 0, track))
    return notes


def _to_midi(notes: list[GridNote], rng: np.random.Generator | None,
             ticks_per_quarter: int = 480, tempo_bpm: float = 120.0) -> bytes:
    """Render grid notes, optionally with sub-step tick jitter (< 0.2 step)."""
    ticks_per_step = ticks_per_quarter * 4 // STEPS_PER_BAR

    def jitter() -> int:
        if rng is None:
            return 0
        return int(rng.integers(-ticks_per_step // 5, ticks_per_step // 5 + 1))

    by_track: dict[tuple[int, int, int], list[smf.MidiNote]] = {}
    for n in notes:
        start = max(0, n.onset_step * ticks_per_step + jitter())
        end = (n.onset_step + n.duration_steps) * ticks_per_step + jitter()
        by_track.setdefault((n.track, n.channel, n.program), []).append(
            smf.MidiNote(n.pitch, 96, start, max(start + 1, end), n.channel, n.program, n.track)
        )
    specs = [
        smf.TrackSpec(tuple(sorted(v, key=lambda m: m.start_tick)), program, channel)
        for (_, channel, program), v in sorted(by_track.items())
    ]
    return smf.write_smf(specs, ticks_per_quarter, tempo_bpm)


def demo_midi_bytes(seed: int, bars: int = 16, mode: str = "melody",
                    jitter: bool = True) -> bytes:
    rng = np.random.default_rng(seed)
    melody = melody_grid_notes(rng, bars)
    notes = list(melody)
    if mode == "trio":
        notes += bass_grid_notes(rng, bars, melody)
        notes += drum_grid_notes(rng, bars)
    elif mode != "melody":
        raise ValueError(f"unknown mode {mode!r}")
    return _to_midi(notes, rng if jitter else None)


def write_demo_corpus(out_dir, count: int, bars: int = 16, mode: str = "melody",
                      seed: int = 0, jitter: bool = True) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(count):
        path = out / f"piece_{i:03d}.mid"
        path.write_bytes(demo_midi_bytes(seed * 100_003 + i, bars, mode, jitter))
        paths.append(path)
    return paths


def demo_sequences(count: int, bars: int = 16, mode: str = "melody", seed: int = 0):
    """Parse+extract `count` generated pieces at their natural length."""
    steps = bars * STEPS_PER_BAR
    sequences = []
    for i in range(count):
        notes, _ = parse_midi(demo_midi_bytes(seed * 100_003 + i, bars, mode))
        if mode == "melody":
            seq, _ = extract_melody(notes, steps)
        else:
            seq, _ = extract_trio(notes, steps)
        sequences.append(seq)
    return sequences


def demo_scene_image(width: int = 512, height: int = 96, seed: int = 7) -> np.ndarray:
    """A blocky platformer-like grayscale scene for the confounder demo.

    Thin platforms wander in height across the scene with occasional gaps
    and sparse block decorations above them, so column pitch profiles stay
    locally coherent while drifting scene-wide.  Row 0 is the bottom of the
    scene (low pitch).  Values in [0, 1].
    """
    rng = np.random.default_rng(seed)
    img = np.zeros((height, width), dtype=np.float64)
    level = height // 3
    x = 0
    while x < width:
        length = int(rng.integers(20, 44))
        end = min(width, x + length)
        if rng.random() < 0.15:
            x = end  # gap: a run of silent columns
            continue
        level = int(np.clip(level + rng.integers(-6, 7), 8, height - 16))
        img[level : level + 2, x:end] = 1.0  # thin platform
        for bx in range(x, end, 6):          # sparse decorations just above
            if rng.random() < 0.3:
                top = level + int(rng.integers(3, 6))
                img[top : top + 2, bx : bx + 2] = 1.0
        x = end
    return img
