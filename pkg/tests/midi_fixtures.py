"""Hand-built MIDI files for the preprocessing tests."""

import mido

TPB = 96


def write_midi(path, tracks, ticks_per_beat=TPB, file_type=1):
    """``tracks`` is a list of message lists with absolute tick times: ``(tick, mido.Message)``."""
    mid = mido.MidiFile(type=file_type, ticks_per_beat=ticks_per_beat)
    for events in tracks:
        track = mido.MidiTrack()
        last = 0
        for tick, msg in sorted(events, key=lambda e: e[0]):
            track.append(msg.copy(time=tick - last))
            last = tick
        track.append(mido.MetaMessage("end_of_track", time=0))
        mid.tracks.append(track)
    mid.save(str(path))
    return path


def notes(pitches_beats, channel=0, tpb=TPB):
    """``[(pitch, onset_beat, offset_beat), ...]`` -> absolute-tick note events."""
    events = []
    for pitch, on, off in pitches_beats:
        events.append((int(on * tpb), mido.Message("note_on", note=pitch, velocity=90, channel=channel)))
        events.append((int(off * tpb), mido.Message("note_off", note=pitch, velocity=0, channel=channel)))
    return events


def meta_ts(num, den, tick=0):
    return (tick, mido.MetaMessage("time_signature", numerator=num, denominator=den))


def scale(n_beats=16, start=60):
    return [(start + (i % 12), i, i + 1) for i in range(n_beats)]




def drums(n_beats=16):
    return notes([(36, i, i + 0.5) for i in range(n_beats)], channel=9)


# file name -> expected rejection reason (None: accepted)
FIXTURE_LABELS = {
    "01_piano_4_4.mid": None,
    "02_piano_and_drums.mid": None,
    "03_no_time_signature.mid": None,
    "04_repeated_4_4.mid": None,
    "05_waltz_3_4.mid": "not_4_4",
    "06_compound_6_8.mid": "not_4_4",
    "07_switch_to_3_4.mid": "time_signature_change",
    "08_drums_only.mid": "drums_only",
    "09_late_first_beat.mid": "first_beat_not_zero",
    "10_truncated.mid": "parse_error",
}


def build_fixture_corpus(directory):
    """Write the 10-file corpus into ``directory``; returns ``FIXTURE_LABELS``."""
    d = directory
    write_midi(d / "01_piano_4_4.mid", [[meta_ts(4, 4)] + notes(scale(32))])
    write_midi(d / "02_piano_and_drums.mid", [[meta_ts(4, 4)] + notes(scale(16)), drums(16)])
    write_midi(d / "03_no_time_signature.mid", [notes(scale(16, 48))])
    write_midi(d / "04_repeated_4_4.mid", [[meta_ts(4, 4), meta_ts(4, 4, 4 * TPB * 4)] + notes(scale(32))])
    write_midi(d / "05_waltz_3_4.mid", [[meta_ts(3, 4)] + notes(scale(24))])
    write_midi(d / "06_compound_6_8.mid", [[meta_ts(6, 8)] + notes(scale(24))])
    write_midi(d / "07_switch_to_3_4.mid", [[meta_ts(4, 4), meta_ts(3, 4, 8 * TPB)] + notes(scale(24))])
    write_midi(d / "08_drums_only.mid", [[meta_ts(4, 4)] + drums(16)])
    write_midi(d / "09_late_first_beat.mid", [[meta_ts(4, 4, TPB)] + notes(scale(16))])
    write_midi(d / "tmp_full.mid", [[meta_ts(4, 4)] + notes(scale(16))])
    raw = (d / "tmp_full.mid").read_bytes()
    (d / "10_truncated.mid").write_bytes(raw[: len(raw) // 2])
    (d / "tmp_full.mid").unlink()
    return dict(FIXTURE_LABELS)
