"""Fixed-grid token sequences and their MIDI conversions.

A piece is a grid of categorical tokens at 16 steps per 4/4 bar: one track
for melodies, three (melody, bass, drums) for trios.  This module quantizes
parsed MIDI onto the grid, encodes/decodes the token vocabularies, exports
grids back to MIDI, and reads/writes the binary token file format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import midi as smf
from . import vocab
from .errors import (
    MaskedTokensError,
    MidiRejectedError,
    TokenFileError,
    TokenRangeError,
    TransposeRangeError,
)

STEPS_PER_BAR = 16
MELODY_PROGRAM = 0    # acoustic grand, arbitrary but stable for round-trips
BASS_PROGRAM = 32     # GM acoustic bass; bass-role detection keys off family 32..39
EXPORT_VELOCITY = 96

TOKEN_FILE_MAGIC = b"NFTK"
TOKEN_FILE_VERSION = 1
_HEADER = struct.Struct("<4sHHIH2x")  # magic, version, tracks, steps, steps_per_bar


@dataclass(frozen=True)
class GridNote:
    """A quantized note: grid positions instead of ticks."""

    pitch: int
    onset_step: int
    duration_steps: int
    channel: int = 0
    program: int = 0
    track: int = 0

    @property
    def is_drum(self) -> bool:
        return self.channel == smf.DRUM_CHANNEL

    @property
    def end_step(self) -> int:
        return self.onset_step + self.duration_steps


@dataclass(frozen=True)
class NoteEvent:
    """Decoded view of one sounding note inside a TokenSequence track."""

    pitch: int
    onset_step: int
    duration_steps: int
    track: int = 0

    @property
    def end_step(self) -> int:
        return self.onset_step + self.duration_steps


@dataclass
class SkipReport:
    """Counts of events dropped during extraction."""

    out_of_range: int = 0
    unknown_drum: int = 0
    dropped_steps: list[int] = field(default_factory=list)

    def merge(self, other: "SkipReport") -> None:
        self.out_of_range += other.out_of_range
        self.unknown_drum += other.unknown_drum
        self.dropped_steps.extend(other.dropped_steps)


class TokenSequence:
    """A steps x tracks grid of token indices.

    Values are uint16; mask ids (== per-track vocabulary size) are legal
    only in diffusion contexts and are rejected by MIDI export.
    """

    def __init__(self, values: np.ndarray, steps_per_bar: int = STEPS_PER_BAR):
        values = np.asarray(values, dtype=np.uint16)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise TokenRangeError(f"token grid must be 2-D, got shape {values.shape}")
        if values.shape[0] % steps_per_bar != 0:
            raise TokenRangeError(
                f"steps ({values.shape[0]}) must be a multiple of steps_per_bar ({steps_per_bar})"
            )
        if values.shape[1] not in (1, 3):
            raise TokenRangeError(f"expected 1 or 3 tracks, got {values.shape[1]}")
        self.values = values
        self.steps_per_bar = steps_per_bar
        self._validate_ranges()

    def _validate_ranges(self) -> None:
        for track, size in enumerate(self.vocab_sizes):
            bad = self.values[:, track] > size  # mask id == size is allowed
            if bad.any():
                step = int(np.argmax(bad))
                raise TokenRangeError(
                    f"track {track} step {step}: token {int(self.values[step, track])} "
                    f"exceeds vocabulary {size}"
                )

    @property
    def steps(self) -> int:
        return self.values.shape[0]

    @property
    def tracks(self) -> int:
        return self.values.shape[1]

    @property
    def bars(self) -> int:
        return self.steps // self.steps_per_bar

    @property
    def vocab_sizes(self) -> tuple[int, ...]:
        return vocab.TRIO_VOCAB_SIZES if self.tracks == 3 else vocab.MELODY_VOCAB_SIZES

    @property
    def mask_ids(self) -> tuple[int, ...]:
        return vocab.mask_ids_for(self.vocab_sizes)

    def has_masks(self) -> bool:
        return any(
            (self.values[:, k] == m).any() for k, m in enumerate(self.mask_ids)
        )

    def copy(self) -> "TokenSequence":
        return TokenSequence(self.values.copy(), self.steps_per_bar)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TokenSequence)
            and self.steps_per_bar == other.steps_per_bar
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"TokenSequence(steps={self.steps}, tracks={self.tracks})"

    # -- binary token file format ------------------------------------------

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(
            TOKEN_FILE_MAGIC, TOKEN_FILE_VERSION, self.tracks, self.steps, self.steps_per_bar
        )
        body = np.ascontiguousarray(self.values, dtype="<u2").tobytes()
        return header + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "TokenSequence":
        if len(data) < _HEADER.size:
            raise TokenFileError(f"token file truncated: {len(data)} bytes")
        magic, version, tracks, steps, steps_per_bar = _HEADER.unpack_from(data)
        if magic != TOKEN_FILE_MAGIC:
            raise TokenFileError(f"bad token file magic {magic!r}")
        if version != TOKEN_FILE_VERSION:
            raise TokenFileError(f"unsupported token file version {version}")
        expected = _HEADER.size + 2 * tracks * steps
        if len(data) != expected:
            raise TokenFileError(f"token file size {len(data)} != expected {expected}")
        values = np.frombuffer(data, dtype="<u2", offset=_HEADER.size).reshape(steps, tracks)
        return cls(values.copy(), steps_per_bar)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "TokenSequence":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# -- MIDI ingestion ---------------------------------------------------------

def parse_midi(data: bytes, steps_per_bar: int = STEPS_PER_BAR) -> tuple[list[GridNote], smf.SmfFile]:
    """Quantize an SMF byte stream onto the 16th-note grid.

    Onsets snap to the nearest grid step; durations round to whole steps with
    a floor of one.  Pieces carrying any non-4/4 time signature are rejected
    (the corpus convention covers 4/4 only).
    """
    parsed = smf.read_smf(data)
    for _, num, den in parsed.time_signatures:
        if (num, den) != (4, 4):
            raise MidiRejectedError(f"time signature {num}/{den} is not 4/4")

    # 4/4 bar = 4 quarters; the grid divides each quarter into steps_per_bar/4.
    ticks_per_step = parsed.ticks_per_quarter * 4.0 / steps_per_bar
    notes: list[GridNote] = []
    for note in parsed.notes:
        onset = int(round(note.start_tick / ticks_per_step))
        duration = max(1, int(round((note.end_tick - note.start_tick) / ticks_per_step)))
        notes.append(
            GridNote(
                pitch=note.pitch,
                onset_step=onset,
                duration_steps=duration,
                channel=note.channel,
                program=note.program,
                track=note.track,
            )
        )
    notes.sort(key=lambda n: (n.onset_step, n.track, n.channel, n.pitch))
    return notes, parsed


def _monophonic_track(notes: list[GridNote], steps: int, report: SkipReport) -> np.ndarray:
    """Reduce overlapping notes to the 90-token monophonic encoding.

    Conflict rule: at a shared onset step the highest pitch wins, ties broken
    by later event order; a new onset always cuts off whatever was sounding.
    """
    pv = vocab.PITCH_VOCAB
    onset_pitch = np.full(steps, -1, dtype=np.int32)
    onset_end = np.zeros(steps, dtype=np.int64)
    for order, note in enumerate(notes):
        if not pv.pitch_lo <= note.pitch <= pv.pitch_hi:
            report.out_of_range += 1
            report.dropped_steps.append(note.onset_step)
            continue
        step = note.onset_step
        if step >= steps or step < 0:
            continue
        if note.pitch >= onset_pitch[step]:  # >= : later order wins ties
            onset_pitch[step] = note.pitch
            onset_end[step] = min(steps, note.end_step)

    tokens = np.empty(steps, dtype=np.uint16)
    sounding_until = 0
    silent = False  # inside a silence region that already emitted NOTE_OFF
    for step in range(steps):
        if onset_pitch[step] >= 0:
            tokens[step] = pv.token_of_pitch(int(onset_pitch[step]))
            sounding_until = max(step + 1, int(onset_end[step]))
            silent = False
        elif step < sounding_until:
            tokens[step] = pv.hold_id
        elif not silent:
            tokens[step] = pv.note_off_id
            silent = True
        else:
            tokens[step] = pv.hold_id
    return tokens


def _drum_track(notes: list[GridNote], steps: int, report: SkipReport) -> np.ndarray:
    tokens = np.zeros(steps, dtype=np.uint16)
    for note in notes:
        bit = vocab.DRUM_BIT_OF_NOTE.get(note.pitch)
        if bit is None:
            report.unknown_drum += 1
            report.dropped_steps.append(note.onset_step)
            continue
        if 0 <= note.onset_step < steps:
            tokens[note.onset_step] |= 1 << bit
    return tokens


def _infer_steps(notes: list[GridNote], steps_per_bar: int) -> int:
    last = max((n.end_step for n in notes), default=0)
    bars = max(1, -(-last // steps_per_bar))
    return bars * steps_per_bar


def extract_melody(notes: list[GridNote], steps: int | None = None,
                   steps_per_bar: int = STEPS_PER_BAR) -> tuple[TokenSequence, SkipReport]:
    """Build a 1-track TokenSequence from quantized non-drum notes."""
    report = SkipReport()
    melodic = [n for n in notes if not n.is_drum]
    if steps is None:
        steps = _infer_steps(melodic, steps_per_bar)
    tokens = _monophonic_track(melodic, steps, report)
    return TokenSequence(tokens[:, None], steps_per_bar), report


def split_roles(notes: list[GridNote],
                program_map: dict[str, set[int]] | None = None) -> dict[str, list[GridNote]]:
    """Assign quantized notes to melody/bass/drums roles.

    Drums come from the MIDI drum channel.  Bass is any group whose program
    falls in the configured bass family (GM 32..39 by default), else the
    non-drum group with the lowest mean pitch.  Melody is the remaining
    group with the highest mean pitch.  Raises when a role has no notes.
    """
    bass_programs = (program_map or {}).get("bass", set(range(32, 40)))
    drums = [n for n in notes if n.is_drum]
    groups: dict[tuple[int, int, int], list[GridNote]] = {}
    for n in notes:
        if not n.is_drum:
            groups.setdefault((n.track, n.channel, n.program), []).append(n)

    if not groups or not drums:
        missing = [role for role, ok in [("melody", bool(groups)), ("drums", bool(drums))] if not ok]
        raise MidiRejectedError(f"missing trio role(s): {', '.join(missing) or 'bass'}")

    keys = sorted(groups)
    bass_keys = [k for k in keys if k[2] in bass_programs]
    if bass_keys:
        bass_key = bass_keys[0]
    elif len(keys) >= 2:
        bass_key = min(keys, key=lambda k: (np.mean([n.pitch for n in groups[k]]), k))
    else:
        raise MidiRejectedError("missing trio role(s): bass")

    melody_keys = [k for k in keys if k != bass_key]
    if not melody_keys:
        raise MidiRejectedError("missing trio role(s): melody")
    melody_key = max(melody_keys, key=lambda k: (np.mean([n.pitch for n in groups[k]]), k))

    return {"melody": groups[melody_key], "bass": groups[bass_key], "drums": drums}


def extract_trio(notes: list[GridNote], steps: int | None = None,
                 steps_per_bar: int = STEPS_PER_BAR,
                 program_map: dict[str, set[int]] | None = None) -> tuple[TokenSequence, SkipReport]:
    """Build a 3-track TokenSequence (melody, bass, drums)."""
    roles = split_roles(notes, program_map)
    if steps is None:
        steps = _infer_steps(notes, steps_per_bar)
    report = SkipReport()
    melody = _monophonic_track(roles["melody"], steps, report)
    bass = _monophonic_track(roles["bass"], steps, report)
    drums = _drum_track(roles["drums"], steps, report)
    values = np.stack([melody, bass, drums], axis=1)
    return TokenSequence(values, steps_per_bar), report


# -- decoding and export -----------------------------------------------------

def track_note_events(seq: TokenSequence, track: int) -> list[NoteEvent]:
    """Decode one melodic track into NoteEvents (pitch, onset, hold-run length)."""
    pv = vocab.PITCH_VOCAB
    column = seq.values[:, track]
    events: list[NoteEvent] = []
    step = 0
    while step < seq.steps:
        token = int(column[step])
        if pv.is_onset(token):
            duration = 1
            while step + duration < seq.steps and int(column[step + duration]) == pv.hold_id:
                duration += 1
            events.append(NoteEvent(pv.pitch_of_token(token), step, duration, track))
            step += duration
        else:
            step += 1
    return events


def drum_note_events(seq: TokenSequence, track: int = 2) -> list[NoteEvent]:
    """Decode the drum track into one-step NoteEvents per canonical drum note."""
    events: list[NoteEvent] = []
    for step, token in enumerate(seq.values[:, track]):
        for note in vocab.DRUM_VOCAB_SPEC.notes_of_token(int(token)):
            events.append(NoteEvent(note, step, 1, track))
    return events


def note_events(seq: TokenSequence) -> list[NoteEvent]:
    """All decoded notes; drums included only to drive MIDI export."""
    events: list[NoteEvent] = []
    for track in range(min(seq.tracks, 2)):
        events.extend(track_note_events(seq, track))
    if seq.tracks == 3:
        events.extend(drum_note_events(seq, 2))
    return events


def export_midi(seq: TokenSequence, tempo_bpm: float = 120.0,
                ticks_per_quarter: int = 480) -> bytes:
    """Render a mask-free TokenSequence as a standard MIDI file."""
    if seq.has_masks():
        raise MaskedTokensError("sequence contains mask tokens; sample or infill first")

    ticks_per_step = ticks_per_quarter * 4 // seq.steps_per_bar

    def to_midi_notes(events: list[NoteEvent], channel: int, program: int) -> tuple[smf.MidiNote, ...]:
        return tuple(
            smf.MidiNote(
                pitch=e.pitch,
                velocity=EXPORT_VELOCITY,
                start_tick=e.onset_step * ticks_per_step,
                end_tick=e.end_step * ticks_per_step,
                channel=channel,
                program=program,
                track=e.track,
            )
            for e in events
        )

    tracks = [
        smf.TrackSpec(to_midi_notes(track_note_events(seq, 0), 0, MELODY_PROGRAM), MELODY_PROGRAM, 0)
    ]
    if seq.tracks == 3:
        tracks.append(
            smf.TrackSpec(to_midi_notes(track_note_events(seq, 1), 1, BASS_PROGRAM), BASS_PROGRAM, 1)
        )
        tracks.append(
            smf.TrackSpec(to_midi_notes(drum_note_events(seq, 2), smf.DRUM_CHANNEL, 0), 0, smf.DRUM_CHANNEL)
        )
    return smf.write_smf(tracks, ticks_per_quarter, tempo_bpm)


def extract_auto(data: bytes, mode: str, steps: int | None = None) -> tuple[TokenSequence, SkipReport]:
    """parse + extract in one call; mode is 'melody' or 'trio'."""
    notes, _ = parse_midi(data)
    if mode == "melody":
        return extract_melody(notes, steps)
    if mode == "trio":
        return extract_trio(notes, steps)
    raise ValueError(f"unknown mode {mode!r}")


# -- augmentation -------------------------------------------------------------

def transpose_augment(seq: TokenSequence, semitones: int) -> TokenSequence:
    """Shift all pitch tokens on melodic tracks; drums and markers unchanged."""
    if semitones == 0:
        return seq.copy()
    values = seq.values.copy()
    for track in range(min(seq.tracks, 2)):
        column = values[:, track].astype(np.int32)
        pitched = column < vocab.NOTE_OFF
        shifted = column + np.where(pitched, semitones, 0)
        bad = pitched & ((shifted < 0) | (shifted >= vocab.NOTE_OFF))
        if bad.any():
            step = int(np.argmax(bad))
            raise TransposeRangeError(
                f"transpose by {semitones} leaves pitch range at track {track} step {step}"
            )
        values[:, track] = shifted.astype(np.uint16)
    return TokenSequence(values, seq.steps_per_bar)
