"""Token vocabularies for the fixed-grid music representation.

Melody and bass tracks use a 90-token vocabulary: tokens 0..87 are pitches
(MIDI 21..108 ascending), 88 marks a note release, 89 continues the previous
token for one more grid step.  Drum tracks use 512 tokens, each a 9-bit
onset bitmask over the drum classes below.  Every track vocabulary reserves
one extra id (== vocabulary size) as the absorbing mask state used by the
diffusion process; mask ids never appear in exported music.
"""

from __future__ import annotations

from dataclasses import dataclass, field

PITCH_LO = 21
PITCH_HI = 108
NOTE_OFF = 88
HOLD = 89
MELODY_VOCAB = 90
MELODY_MASK = 90

# Bit order for the 9-class drum reduction.  Several General-MIDI drum notes
# collapse onto one bit; the first note of each group is the canonical note
# written back on export.
DRUM_GROUPS: tuple[tuple[int, ...], ...] = (
    (36, 35),          # kick
    (38, 40),          # snare
    (42, 44),          # closed hi-hat
    (46,),             # open hi-hat
    (45, 41, 43),      # low tom
    (48, 47),          # mid tom
    (50,),             # high tom
    (49, 57),          # crash
    (51, 59),          # ride
)
DRUM_VOCAB = 512
DRUM_MASK = 512

DRUM_BIT_OF_NOTE: dict[int, int] = {
    note: bit for bit, group in enumerate(DRUM_GROUPS) for note in group
}
DRUM_CANONICAL_NOTE: tuple[int, ...] = tuple(group[0] for group in DRUM_GROUPS)


@dataclass(frozen=True)
class PitchVocab:
    """Vocabulary of a monophonic (melody or bass) track."""

    pitch_lo: int = PITCH_LO
    pitch_hi: int = PITCH_HI
    note_off_id: int = NOTE_OFF
    hold_id: int = HOLD

    @property
    def size(self) -> int:
        return (self.pitch_hi - self.pitch_lo + 1) + 2

    @property
    def mask_id(self) -> int:
        # The absorbing state is the (K+1)-th category.
        return self.size

    def token_of_pitch(self, pitch: int) -> int:
        if not self.pitch_lo <= pitch <= self.pitch_hi:
            raise ValueError(f"pitch {pitch} outside [{self.pitch_lo}, {self.pitch_hi}]")
        return pitch - self.pitch_lo

    def pitch_of_token(self, token: int) -> int:
        if not 0 <= token < self.note_off_id:
            raise ValueError(f"token {token} is not a pitch token")
        return token + self.pitch_lo

    def is_onset(self, token: int) -> bool:
        return 0 <= token < self.note_off_id


@dataclass(frozen=True)
class DrumVocab:
    """Vocabulary of the polyphonic drum track (9-bit onset bitmasks)."""

    groups: tuple[tuple[int, ...], ...] = field(default=DRUM_GROUPS)

    @property
    def size(self) -> int:
        return 1 << len(self.groups)

    @property
    def mask_id(self) -> int:
        return self.size

    def token_of_notes(self, midi_notes) -> int:
        token = 0
        for note in midi_notes:
            bit = DRUM_BIT_OF_NOTE.get(note)
            if bit is None:
                raise ValueError(f"MIDI drum note {note} has no class bit")
            token |= 1 << bit
        return token

    def notes_of_token(self, token: int) -> tuple[int, ...]:
        if not 0 <= token < self.size:
            raise ValueError(f"drum token {token} outside [0, {self.size})")
        return tuple(
            DRUM_CANONICAL_NOTE[bit]
            for bit in range(len(self.groups))
            if token & (1 << bit)
        )


PITCH_VOCAB = PitchVocab()
DRUM_VOCAB_SPEC = DrumVocab()

MELODY_VOCAB_SIZES: tuple[int, ...] = (MELODY_VOCAB,)
TRIO_VOCAB_SIZES: tuple[int, ...] = (MELODY_VOCAB, MELODY_VOCAB, DRUM_VOCAB)


def mask_ids_for(vocab_sizes) -> tuple[int, ...]:
    """Mask id per track: always the vocabulary size itself."""
    return tuple(int(v) for v in vocab_sizes)
