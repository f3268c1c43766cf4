"""Standard MIDI file reader/writer behavior."""

import struct

import pytest

from notefill import midi as smf
from notefill.errors import MidiParseError, MidiRejectedError
from notefill.tokens import parse_midi


def single_note_midi(pitch=60, start=0, end=480, tpq=480, extra_meta=b"") -> bytes:
    events = bytearray()
    events += b"\x00" + bytes([0xFF, 0x51, 0x03]) + (500000).to_bytes(3, "big")
    events += extra_meta
    events += b"\x00" + bytes([0x90, pitch, 100])
    # delta to note off
    delta = end - start
    events += smf._write_varlen(delta) + bytes([0x80, pitch, 0])
    events += b"\x00" + bytes([0xFF, 0x2F, 0x00])
    track = b"MTrk" + struct.pack(">I", len(events)) + bytes(events)
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 1, tpq)
    return header + track


def test_single_quarter_note_quantizes_to_four_steps():
    notes, parsed = parse_midi(single_note_midi())
    assert parsed.ticks_per_quarter == 480
    assert parsed.initial_bpm == pytest.approx(120.0)
    assert len(notes) == 1
    note = notes[0]
    assert (note.pitch, note.onset_step, note.duration_steps) == (60, 0, 4)


def test_empty_track_list_gives_no_notes():
    header = b"MThd" + struct.pack(">IHHH", 6, 1, 0, 480)
    notes, _ = parse_midi(header)
    assert notes == []


def test_non_four_four_rejected():
    meta = b"\x00" + bytes([0xFF, 0x58, 0x04, 3, 2, 24, 8])  # 3/4
    data = single_note_midi(extra_meta=meta)
    with pytest.raises(MidiRejectedError, match="3/4"):
        parse_midi(data)


def test_bad_header_magic_reports_offset_zero():
    with pytest.raises(MidiParseError) as exc_info:
        smf.read_smf(b"XXXX" + b"\x00" * 10)
    assert exc_info.value.offset == 0


def test_truncated_track_reports_offset():
    data = single_note_midi()
    with pytest.raises(MidiParseError) as exc_info:
        smf.read_smf(data[:20])
    assert exc_info.value.offset > 0


def test_bad_track_magic_reports_offset():
    data = bytearray(single_note_midi())
    data[14:18] = b"MTrX"
    with pytest.raises(MidiParseError, match="track magic"):
        smf.read_smf(bytes(data))


def test_smpte_division_rejected():
    header = b"MThd" + struct.pack(">IHHH", 6, 0, 0, 0x8000 | 25)
    with pytest.raises(MidiParseError, match="SMPTE"):
        smf.read_smf(header)


def test_running_status_notes_parse():
    events = bytearray()
    events += b"\x00" + bytes([0x90, 60, 100])
    events += bytes([0x60]) + bytes([60, 0])        # running status note off
    events += b"\x00" + bytes([0xFF, 0x2F, 0x00])
    track = b"MTrk" + struct.pack(">I", len(events)) + bytes(events)
    data = b"MThd" + struct.pack(">IHHH", 6, 0, 1, 96) + track
    parsed = smf.read_smf(data)
    assert len(parsed.notes) == 1
    assert parsed.notes[0].end_tick == 0x60


def test_write_then_read_round_trip():
    notes = (
        smf.MidiNote(60, 96, 0, 480, 0, 0, 0),
        smf.MidiNote(64, 96, 480, 960, 0, 0, 0),
    )
    data = smf.write_smf([smf.TrackSpec(notes, 0, 0)], 480, 120.0)
    parsed = smf.read_smf(data)
    assert [(n.pitch, n.start_tick, n.end_tick) for n in parsed.notes] == [
        (60, 0, 480), (64, 480, 960),
    ]
    assert parsed.initial_bpm == pytest.approx(120.0)


def test_varlen_round_trip():
    reader = smf._Reader(smf._write_varlen(0) + smf._write_varlen(127)
                         + smf._write_varlen(128) + smf._write_varlen(200_000))
    assert reader.varlen("x") == 0
    assert reader.varlen("x") == 127
    assert reader.varlen("x") == 128
    assert reader.varlen("x") == 200_000
