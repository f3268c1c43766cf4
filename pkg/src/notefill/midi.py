"""Minimal Standard MIDI File reader and writer.

Supports format 0 and 1 files with tick-based (PPQ) division, which is all
the tokenizer needs: note on/off pairing, program changes, tempo and time
signature meta events.  Unknown events are skipped.  Structural problems
raise :class:`MidiParseError` carrying the byte offset of the failure.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .errors import MidiParseError

DRUM_CHANNEL = 9
DEFAULT_TEMPO_US = 500_000  # 120 bpm


@dataclass(frozen=True)
class MidiNote:
    """One paired note with absolute tick times."""

    pitch: int
    velocity: int
    start_tick: int
    end_tick: int
    channel: int
    program: int
    track: int

    @property
    def is_drum(self) -> bool:
        return self.channel == DRUM_CHANNEL


@dataclass
class SmfFile:
    """Parsed contents of a Standard MIDI File."""

    format: int
    ticks_per_quarter: int
    notes: list[MidiNote] = field(default_factory=list)
    tempos: list[tuple[int, int]] = field(default_factory=list)        # (tick, us per quarter)
    time_signatures: list[tuple[int, int, int]] = field(default_factory=list)  # (tick, num, den)

    @property
    def initial_tempo_us(self) -> int:
        for tick, us in sorted(self.tempos):
            if tick <= 0:
                return us
        return self.tempos[0][1] if self.tempos else DEFAULT_TEMPO_US

    @property
    def initial_bpm(self) -> float:
        return 60_000_000.0 / self.initial_tempo_us


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def need(self, n: int, what: str) -> None:
        if self.pos + n > len(self.data):
            raise MidiParseError(f"unexpected end of data while reading {what}", self.pos)

    def bytes(self, n: int, what: str) -> bytes:
        self.need(n, what)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.bytes(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack(">H", self.bytes(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack(">I", self.bytes(4, what))[0]

    def varlen(self, what: str) -> int:
        value = 0
        for _ in range(4):
            byte = self.u8(what)
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise MidiParseError(f"variable-length quantity too long in {what}", self.pos)


def read_smf(data: bytes) -> SmfFile:
    """Parse a format 0/1 SMF byte stream into notes and meta events."""
    r = _Reader(data)
    magic = r.bytes(4, "header chunk")
    if magic != b"MThd":
        raise MidiParseError(f"bad header magic {magic!r}", 0)
    header_len = r.u32("header length")
    if header_len < 6:
        raise MidiParseError(f"header chunk too short ({header_len} bytes)", r.pos - 4)
    fmt = r.u16("format")
    n_tracks = r.u16("track count")
    division = r.u16("division")
    r.bytes(header_len - 6, "header padding")
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported SMF format {fmt}", 8)
    if division & 0x8000:
        raise MidiParseError("SMPTE time division is not supported", 12)
    if division == 0:
        raise MidiParseError("zero ticks-per-quarter division", 12)

    smf = SmfFile(format=fmt, ticks_per_quarter=division)
    for track_index in range(n_tracks):
        _read_track(r, smf, track_index)
    smf.notes.sort(key=lambda n: (n.start_tick, n.track, n.channel, n.pitch))
    smf.tempos.sort()
    smf.time_signatures.sort()
    return smf


def _read_track(r: _Reader, smf: SmfFile, track_index: int) -> None:
    chunk_start = r.pos
    magic = r.bytes(4, "track chunk")
    if magic != b"MTrk":
        raise MidiParseError(f"bad track magic {magic!r}", chunk_start)
    length = r.u32("track length")
    end = r.pos + length
    if end > len(r.data):
        raise MidiParseError(f"track length {length} overruns file", chunk_start + 4)

    tick = 0
    running_status: int | None = None
    programs = [0] * 16
    # (channel, pitch) -> stack of (start_tick, velocity, program)
    open_notes: dict[tuple[int, int], list[tuple[int, int, int]]] = {}

    while r.pos < end:
        tick += r.varlen("delta time")
        status_pos = r.pos
        first = r.u8("event status")
        if first < 0x80:
            if running_status is None:
                raise MidiParseError("data byte with no running status", status_pos)
            status = running_status
            data1 = first
        else:
            status = first
            data1 = None

        if status == 0xFF:
            meta_type = r.u8("meta type")
            meta_len = r.varlen("meta length")
            payload = r.bytes(meta_len, "meta payload")
            running_status = None
            if meta_type == 0x51 and meta_len == 3:
                smf.tempos.append((tick, int.from_bytes(payload, "big")))
            elif meta_type == 0x58 and meta_len >= 2:
                smf.time_signatures.append((tick, payload[0], 1 << payload[1]))
            elif meta_type == 0x2F:
                break
            continue
        if status in (0xF0, 0xF7):
            skip = r.varlen("sysex length")
            r.bytes(skip, "sysex payload")
            running_status = None
            continue
        if status >= 0xF0:
            raise MidiParseError(f"unsupported system message 0x{status:02X}", status_pos)

        running_status = status
        kind = status & 0xF0
        channel = status & 0x0F
        if data1 is None:
            data1 = r.u8("event data")
        if kind in (0x80, 0x90, 0xA0, 0xB0, 0xE0):
            data2 = r.u8("event data")
        else:
            data2 = 0

        if kind == 0x90 and data2 > 0:
            open_notes.setdefault((channel, data1), []).append(
                (tick, data2, programs[channel])
            )
        elif kind == 0x80 or (kind == 0x90 and data2 == 0):
            stack = open_notes.get((channel, data1))
            if stack:
                start_tick, velocity, program = stack.pop()
                if tick > start_tick:
                    smf.notes.append(
                        MidiNote(data1, velocity, start_tick, tick, channel, program, track_index)
                    )
        elif kind == 0xC0:
            programs[channel] = data1

    # Close any dangling notes at the last seen tick.
    for (channel, pitch), stack in open_notes.items():
        for start_tick, velocity, program in stack:
            if tick > start_tick:
                smf.notes.append(
                    MidiNote(pitch, velocity, start_tick, tick, channel, program, track_index)
                )
    r.pos = end


def _write_varlen(value: int) -> bytes:
    chunks = [value & 0x7F]
    value >>= 7
    while value:
        chunks.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(chunks))


@dataclass(frozen=True)
class TrackSpec:
    """Notes of one output track plus the program to announce for it."""

    notes: tuple[MidiNote, ...]
    program: int
    channel: int


def write_smf(tracks: list[TrackSpec], ticks_per_quarter: int = 480,
              tempo_bpm: float = 120.0) -> bytes:
    """Serialize note tracks as a format 1 SMF (meta track + one per spec)."""
    chunks: list[bytes] = []

    tempo_us = int(round(60_000_000.0 / tempo_bpm))
    meta = b"".join([
        _write_varlen(0), bytes([0xFF, 0x58, 0x04, 4, 2, 24, 8]),
        _write_varlen(0), bytes([0xFF, 0x51, 0x03]), tempo_us.to_bytes(3, "big"),
        _write_varlen(0), bytes([0xFF, 0x2F, 0x00]),
    ])
    chunks.append(b"MTrk" + struct.pack(">I", len(meta)) + meta)

    for spec in tracks:
        events: list[tuple[int, int, bytes]] = []  # (tick, order, payload)
        if spec.channel != DRUM_CHANNEL:
            events.append((0, 0, bytes([0xC0 | spec.channel, spec.program & 0x7F])))
        for note in spec.notes:
            events.append(
                (note.start_tick, 2, bytes([0x90 | spec.channel, note.pitch, note.velocity]))
            )
            events.append((note.end_tick, 1, bytes([0x80 | spec.channel, note.pitch, 0])))
        events.sort(key=lambda e: (e[0], e[1]))

        body = bytearray()
        last_tick = 0
        for tick, _, payload in events:
            body += _write_varlen(tick - last_tick)
            body += payload
            last_tick = tick
        body += _write_varlen(0) + bytes([0xFF, 0x2F, 0x00])
        chunks.append(b"MTrk" + struct.pack(">I", len(body)) + bytes(body))

    header = b"MThd" + struct.pack(">IHHH", 6, 1, len(chunks), ticks_per_quarter)
    return header + b"".join(chunks)
