"""Corpus ingestion: MIDI directory -> token windows plus a JSON manifest.

Long pieces are cut into non-overlapping windows of the target length at
the note level (a note belongs to the window containing its onset and is
clipped at the window edge), so every window re-encodes canonically.
Pieces of at least `min_bars` but shorter than one window are padded with
explicit trailing silence; shorter ones are rejected.  Files are processed
in sorted order for a deterministic manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MidiParseError, MidiRejectedError
from .tokens import (
    STEPS_PER_BAR,
    GridNote,
    SkipReport,
    TokenSequence,
    _drum_track,
    _monophonic_track,
    parse_midi,
    split_roles,
)

import numpy as np

DEFAULT_STEPS = 1024   # 64 bars
MIN_BARS = 16


@dataclass
class FileEntry:
    path: str
    status: str                      # "ok" or "rejected"
    reason: str | None = None
    windows: int = 0
    roles: dict | None = None
    skipped_events: int = 0


@dataclass
class CorpusResult:
    mode: str
    steps: int
    sequences: list[TokenSequence] = field(default_factory=list)
    sources: list[tuple[int, int]] = field(default_factory=list)  # (file index, window index)
    entries: list[FileEntry] = field(default_factory=list)

    def manifest(self) -> dict:
        return {
            "mode": self.mode,
            "steps": self.steps,
            "steps_per_bar": STEPS_PER_BAR,
            "files": [
                {
                    "path": e.path,
                    "status": e.status,
                    "reason": e.reason,
                    "windows": e.windows,
                    "roles": e.roles,
                    "skipped_events": e.skipped_events,
                }
                for e in self.entries
            ],
        }

    def write_manifest(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2)
            fh.write("\n")


def _window_notes(notes: list[GridNote], start: int, end: int) -> list[GridNote]:
    """Notes onsetting in [start, end), shifted and clipped to the window."""
    out = []
    for n in notes:
        if start <= n.onset_step < end:
            duration = min(n.duration_steps, end - n.onset_step)
            out.append(
                GridNote(n.pitch, n.onset_step - start, duration, n.channel, n.program, n.track)
            )
    return out


def _piece_windows(notes: list[GridNote], steps: int, min_bars: int) -> list[tuple[int, int]]:
    """[start, end) spans of full token windows covering the piece."""
    last = max((n.end_step for n in notes), default=0)
    if last >= steps:
        count = last // steps  # only full windows; a short tail is dropped
        spans = [(w * steps, (w + 1) * steps) for w in range(count)]
        tail = last - count * steps
        if tail >= min_bars * STEPS_PER_BAR:
            spans.append((count * steps, (count + 1) * steps))
        return spans
    if last >= min_bars * STEPS_PER_BAR:
        return [(0, steps)]  # padded with trailing silence by extraction
    return []


def tokenize_file(data: bytes, mode: str, steps: int = DEFAULT_STEPS,
                  min_bars: int = MIN_BARS) -> tuple[list[TokenSequence], dict | None, SkipReport]:
    """All token windows of one MIDI byte stream."""
    notes, _ = parse_midi(data)
    report = SkipReport()
    roles_info: dict | None = None

    if mode == "melody":
        melodic = [n for n in notes if not n.is_drum]
        spans = _piece_windows(melodic, steps, min_bars)
        if not spans:
            raise MidiRejectedError(f"piece shorter than {min_bars} bars")
        sequences = []
        for start, end in spans:
            tokens = _monophonic_track(_window_notes(melodic, start, end), steps, report)
            sequences.append(TokenSequence(tokens[:, None]))
        return sequences, roles_info, report

    if mode == "trio":
        roles = split_roles(notes)
        roles_info = {name: len(role_notes) for name, role_notes in roles.items()}
        spans = _piece_windows(notes, steps, min_bars)
        if not spans:
            raise MidiRejectedError(f"piece shorter than {min_bars} bars")
        sequences = []
        for start, end in spans:
            melody = _monophonic_track(_window_notes(roles["melody"], start, end), steps, report)
            bass = _monophonic_track(_window_notes(roles["bass"], start, end), steps, report)
            drums = _drum_track(_window_notes(roles["drums"], start, end), steps, report)
            sequences.append(TokenSequence(np.stack([melody, bass, drums], axis=1)))
        return sequences, roles_info, report

    raise ValueError(f"unknown mode {mode!r}")


def tokenize_corpus(midi_dir, mode: str, steps: int = DEFAULT_STEPS,
                    min_bars: int = MIN_BARS) -> CorpusResult:
    """Ingest every .mid/.midi file under a directory (sorted, recursive)."""
    root = Path(midi_dir)
    paths = sorted(p for p in root.rglob("*") if p.suffix.lower() in (".mid", ".midi"))
    result = CorpusResult(mode=mode, steps=steps)
    for file_index, path in enumerate(paths):
        rel = str(path.relative_to(root))
        try:
            sequences, roles, report = tokenize_file(path.read_bytes(), mode, steps, min_bars)
        except (MidiParseError, MidiRejectedError) as exc:
            result.entries.append(FileEntry(path=rel, status="rejected", reason=str(exc)))
            continue
        for window_index, seq in enumerate(sequences):
            result.sequences.append(seq)
            result.sources.append((file_index, window_index))
        result.entries.append(
            FileEntry(
                path=rel,
                status="ok",
                windows=len(sequences),
                roles=roles,
                skipped_events=report.out_of_range + report.unknown_drum,
            )
        )
    return result


def save_token_dir(result: CorpusResult, out_dir) -> None:
    """Write NNNNN.tok window files plus manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, seq in enumerate(result.sequences):
        seq.save(out / f"{i:05d}.tok")
    result.write_manifest(out / "manifest.json")


def load_token_dir(token_dir) -> list[TokenSequence]:
    paths = sorted(Path(token_dir).glob("*.tok"))
    return [TokenSequence.load(p) for p in paths]
