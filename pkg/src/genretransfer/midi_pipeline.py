"""MIDI corpus -> binary 64x84 piano-roll phrases, and phrases -> MIDI.

Time is measured in beats (quarter notes) and kept exact with
:class:`fractions.Fraction`. The piano-roll grid has 16 steps per 4/4 bar, so
one step is a sixteenth note; column ``c`` holds MIDI pitch ``24 + c``
(C1..B7, 84 pitches).

Dataset archive format (one pair of files per genre, see :func:`save_dataset`):

``<genre>.npy``
    ``uint8`` array of shape ``(N, 64, 84)`` with entries in {0, 1}.
``<genre>.json``
    manifest: ``genre``, ``n_phrases``, ``shape``, ``source_ids`` (one
    ``"<file>#<phrase index>"`` per row) and the corpus ``report``
    (accepted files, rejected files with reason codes, counts per reason).
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import mido
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import LOWEST_PITCH, N_PITCHES, N_STEPS

logger = logging.getLogger(__name__)

STEPS_PER_BEAT = 4
STEPS_PER_BAR = 16
BARS_PER_PHRASE = 4
HIGHEST_PITCH = LOWEST_PITCH + N_PITCHES - 1  # 107
DRUM_CHANNEL = 9
RENDER_TICKS_PER_BEAT = 480

# rejection reason codes
FIRST_BEAT_NOT_ZERO = "first_beat_not_zero"
TIME_SIGNATURE_CHANGE = "time_signature_change"
NOT_4_4 = "not_4_4"
PARSE_ERROR = "parse_error"
DRUMS_ONLY = "drums_only"
EMPTY_ROLL = "empty_roll"


class MidiParseError(ValueError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: cannot parse MIDI file ({reason})")
        self.path = str(path)


class EmptySongError(ValueError):
    pass


class EmptyRollError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Note:
    onset: Fraction
    offset: Fraction
    pitch: int
    velocity: int = 127

    def __post_init__(self):
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside [0, 127]")
        if not self.offset > self.onset:
            raise ValueError(f"note offset {self.offset} must be after onset {self.onset}")


@dataclass
class Track:
    notes: list[Note] = field(default_factory=list)
    is_drum: bool = False
    name: str = ""


@dataclass
class MidiSong:
    tracks: list[Track]
    # (numerator, denominator, start beat)
    time_signatures: list[tuple[int, int, Fraction]] = field(default_factory=lambda: [(4, 4, Fraction(0))])
    initial_beat: Fraction = Fraction(0)
    end_beat: Fraction = Fraction(0)
    source: str = ""

    @property
    def notes(self) -> list[Note]:
        return [n for t in self.tracks for n in t.notes]


@dataclass(frozen=True)
class Decision:
    accepted: bool
    reason: str | None = None

    def __bool__(self):
        return self.accepted


@dataclass
class PianoRollPhrase:
    grid: np.ndarray
    genre_label: str = ""
    source_id: str = ""

    def __post_init__(self):
        grid = np.asarray(self.grid)
        if grid.shape != (N_STEPS, N_PITCHES):
            raise ValueError(f"phrase grid must be {(N_STEPS, N_PITCHES)}, got {grid.shape}")
        if not np.all((grid == 0) | (grid == 1)):
            raise ValueError("phrase grid must be binary")
        self.grid = grid.astype(np.uint8)


@dataclass
class PhraseDataset:
    phrases: np.ndarray  # (N, 64, 84) uint8
    genre: str = ""
    source_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        phrases = np.asarray(self.phrases, dtype=np.uint8)
        if phrases.size == 0:
            phrases = phrases.reshape(0, N_STEPS, N_PITCHES)
        if phrases.ndim != 3 or phrases.shape[1:] != (N_STEPS, N_PITCHES):
            raise ValueError(f"phrases must have shape (N, {N_STEPS}, {N_PITCHES}), got {phrases.shape}")
        self.phrases = phrases
        if not self.source_ids:
            self.source_ids = [f"#{i}" for i in range(len(phrases))]
        if len(self.source_ids) != len(phrases):
            raise ValueError("need one source id per phrase")

    @property
    def size(self) -> int:
        return len(self.phrases)

    def __len__(self):
        return len(self.phrases)

    def __getitem__(self, i) -> PianoRollPhrase:
        return PianoRollPhrase(self.phrases[i], self.genre, self.source_ids[i])

    def subset(self, indices) -> "PhraseDataset":
        indices = np.asarray(indices, dtype=int)
        return PhraseDataset(self.phrases[indices], self.genre, [self.source_ids[i] for i in indices])

    @classmethod
    def concatenate(cls, parts: list["PhraseDataset"], genre: str) -> "PhraseDataset":
        if not parts:
            return cls(np.zeros((0, N_STEPS, N_PITCHES), np.uint8), genre, [])
        return cls(
            np.concatenate([p.phrases for p in parts]), genre, [s for p in parts for s in p.source_ids]
        )


def load_midi(path) -> MidiSong:
    """Parse a Standard MIDI File into beat-timed notes per (track, channel)."""
    path = Path(path)
    try:
        mid = mido.MidiFile(path)
    except Exception as exc:  # mido raises EOFError, OSError, ValueError, KeyError, ...
        raise MidiParseError(path, exc) from exc
    return _parse(mid, path)


def _parse(mid: mido.MidiFile, path) -> MidiSong:
    if mid.type == 2:
        raise MidiParseError(path, "asynchronous (type 2) files are not supported")
    tpb = mid.ticks_per_beat
    if not tpb or tpb <= 0:
        raise MidiParseError(path, "SMPTE or zero time division is not supported")
    if not mid.tracks:
        raise MidiParseError(path, "no tracks")

    tracks: list[Track] = []
    signatures: list[tuple[int, int, int]] = []
    tempo_ticks: list[int] = []
    end_tick = 0
    for t_index, mtrack in enumerate(mid.tracks):
        tick = 0
        name = ""
        open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}
        by_channel: dict[int, list[Note]] = {}

        def close(channel, pitch, at):
            stack = open_notes.get((channel, pitch))
            if not stack:
                return
            start, velocity = stack.pop(0)
            if at > start:
                by_channel.setdefault(channel, []).append(
                    Note(Fraction(start, tpb), Fraction(at, tpb), pitch, velocity)
                )

        for msg in mtrack:
            tick += msg.time
            if msg.type == "time_signature":
                signatures.append((tick, msg.numerator, msg.denominator))
            elif msg.type == "set_tempo":
                tempo_ticks.append(tick)
            elif msg.type == "track_name":
                name = msg.name
            elif msg.type == "note_on" and msg.velocity > 0:
                open_notes.setdefault((msg.channel, msg.note), []).append((tick, msg.velocity))
            elif msg.type == "note_off" or (msg.type == "note_on" and msg.velocity == 0):
                close(msg.channel, msg.note, tick)
        for (channel, pitch), stack in list(open_notes.items()):
            while stack:
                close(channel, pitch, tick)
        end_tick = max(end_tick, tick)
        for channel in sorted(by_channel):
            tracks.append(Track(sorted(by_channel[channel]), channel == DRUM_CHANNEL, name or f"track{t_index}"))

    signatures.sort()
    if signatures:
        initial_beat = Fraction(signatures[0][0], tpb)
    elif tempo_ticks:
        initial_beat = Fraction(min(tempo_ticks), tpb)
    else:
        initial_beat = Fraction(0)
    time_signatures: list[tuple[int, int, Fraction]] = []
    for tick, num, den in signatures:
        # repeated identical signatures are not a change
        if time_signatures and time_signatures[-1][:2] == (num, den):
            continue
        time_signatures.append((num, den, Fraction(tick, tpb)))
    if not time_signatures:
        # MIDI default when no time signature is given
        time_signatures = [(4, 4, Fraction(0))]
    last_offset = max((n.offset for t in tracks for n in t.notes), default=Fraction(0))
    return MidiSong(tracks, time_signatures, initial_beat, max(Fraction(end_tick, tpb), last_offset), str(path))


def accept_song(song: MidiSong) -> Decision:
    """Keep songs that start at beat 0 and stay in 4/4 throughout."""
    if song.initial_beat != 0:
        return Decision(False, FIRST_BEAT_NOT_ZERO)
    if len(song.time_signatures) != 1:
        return Decision(False, TIME_SIGNATURE_CHANGE)
    num, den, _ = song.time_signatures[0]
    if (num, den) != (4, 4):
        return Decision(False, NOT_4_4)
    return Decision(True)


def merge_tracks(song: MidiSong) -> MidiSong:
    """Union of all non-drum notes in one track; drum tracks are dropped."""
    notes = sorted({n for t in song.tracks if not t.is_drum for n in t.notes})
    if not notes:
        raise EmptySongError(f"{song.source or 'song'}: no non-drum notes to merge")
    return MidiSong(
        [Track(notes, False, "merged")], list(song.time_signatures), song.initial_beat, song.end_beat, song.source
    )


def rasterize(song: MidiSong) -> np.ndarray:
    """Binary ``(16 * n_bars, 84)`` roll; a note marks every step it overlaps."""
    notes = [n for t in song.tracks if not t.is_drum for n in t.notes
             if LOWEST_PITCH <= n.pitch <= HIGHEST_PITCH]
    if not notes:
        raise EmptyRollError(f"{song.source or 'song'}: no notes within MIDI pitches {LOWEST_PITCH}-{HIGHEST_PITCH}")
    length = max(song.end_beat, max(n.offset for n in notes))
    n_steps = math.ceil(length * STEPS_PER_BEAT)
    n_steps = max(STEPS_PER_BAR, -(-n_steps // STEPS_PER_BAR) * STEPS_PER_BAR)
    roll = np.zeros((n_steps, N_PITCHES), dtype=np.uint8)
    for n in notes:
        start = math.floor(n.onset * STEPS_PER_BEAT)
        end = math.ceil(n.offset * STEPS_PER_BEAT)
        roll[start:end, n.pitch - LOWEST_PITCH] = 1
    return roll


def segment_phrases(roll: np.ndarray, genre: str = "", source: str = "") -> PhraseDataset:
    """Cut a roll into consecutive non-overlapping 4-bar phrases.

    A trailing remainder shorter than a phrase and all-zero phrases are dropped.
    """
    roll = np.asarray(roll, dtype=np.uint8)
    if roll.ndim != 2 or roll.shape[1] != N_PITCHES:
        raise ValueError(f"roll must have shape (T, {N_PITCHES}), got {roll.shape}")
    if roll.shape[0] % STEPS_PER_BAR:
        raise ValueError(f"roll length {roll.shape[0]} is not a whole number of bars")
    n_windows = roll.shape[0] // N_STEPS
    windows = roll[: n_windows * N_STEPS].reshape(n_windows, N_STEPS, N_PITCHES)
    keep = [i for i in range(n_windows) if windows[i].any()]
    return PhraseDataset(windows[keep], genre, [f"{source}#{i}" for i in keep])


def balance(pair: tuple[PhraseDataset, PhraseDataset], seed: int = 0) -> tuple[PhraseDataset, PhraseDataset]:
    """Downsample the larger dataset (without replacement) to the smaller's size."""
    a, b = pair
    if len(a) == 0 or len(b) == 0:
        raise ValueError("cannot balance an empty dataset")
    if len(a) == len(b):
        return a, b
    rng = np.random.default_rng(seed)
    big, small = (a, b) if len(a) > len(b) else (b, a)
    keep = np.sort(rng.choice(len(big), size=len(small), replace=False))
    big = big.subset(keep)
    return (big, small) if len(a) > len(b) else (small, big)


def split_dataset(ds: PhraseDataset, test_fraction: float = 0.1, seed: int = 0) -> tuple[PhraseDataset, PhraseDataset]:
    """Seeded random train/test split; both parts keep their original order."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    n_test = int(round(len(ds) * test_fraction))
    if n_test < 1 or n_test >= len(ds):
        raise ValueError(f"dataset of {len(ds)} phrases is too small for a {test_fraction:.0%} test split")
    perm = np.random.default_rng(seed).permutation(len(ds))
    return ds.subset(np.sort(perm[n_test:])), ds.subset(np.sort(perm[:n_test]))


def binarize(roll, threshold: float = 0.5) -> np.ndarray:
    """Cells strictly above ``threshold`` become 1."""
    roll = np.asarray(roll)
    if roll.size and (np.nanmin(roll) < 0 or np.nanmax(roll) > 1 or np.isnan(roll).any()):
        raise ValueError("values to binarize must lie in [0, 1]")
    return (roll > threshold).astype(np.uint8)


def _as_grids(phrases) -> np.ndarray:
    if isinstance(phrases, PhraseDataset):
        return phrases.phrases
    if isinstance(phrases, np.ndarray):
        grids = phrases
    else:
        grids = [p.grid if isinstance(p, PianoRollPhrase) else PianoRollPhrase(p).grid for p in phrases]
        grids = np.stack(grids) if grids else np.zeros((0, N_STEPS, N_PITCHES), np.uint8)
    grids = np.asarray(grids)
    if grids.ndim == 4 and grids.shape[-1] == 1:
        grids = grids[..., 0]
    if grids.ndim == 2:
        grids = grids[None]
    return grids


def render_midi(phrases, tempo: float = 120.0, path=None) -> mido.MidiFile:
    """Write phrases back to back as a format-0 MIDI file with velocity 127.

    Consecutive active steps of one pitch become one sustained note.
    """
    grids = _as_grids(phrases)
    if len(grids) == 0:
        raise ValueError("no phrases to render")
    for g in grids:
        PianoRollPhrase(g)
    roll = grids.reshape(-1, N_PITCHES).astype(np.int8)
    ticks_per_step = RENDER_TICKS_PER_BEAT // STEPS_PER_BEAT
    events = []  # (tick, order, message); note-offs sort before note-ons at one tick
    padded = np.pad(roll, ((1, 1), (0, 0)))
    edges = np.diff(padded, axis=0)
    for step, col in zip(*np.nonzero(edges == 1)):
        events.append((step * ticks_per_step, 1, mido.Message("note_on", note=int(col) + LOWEST_PITCH, velocity=127)))
    for step, col in zip(*np.nonzero(edges == -1)):
        events.append((step * ticks_per_step, 0, mido.Message("note_off", note=int(col) + LOWEST_PITCH, velocity=0)))
    events.sort(key=lambda e: (e[0], e[1], e[2].note))

    track = mido.MidiTrack()
    track.append(mido.MetaMessage("track_name", name="genretransfer", time=0))
    track.append(mido.MetaMessage("time_signature", numerator=4, denominator=4, time=0))
    track.append(mido.MetaMessage("set_tempo", tempo=mido.bpm2tempo(tempo), time=0))
    now = 0
    for tick, _, msg in events:
        track.append(msg.copy(time=tick - now))
        now = tick
    total = len(roll) * ticks_per_step
    track.append(mido.MetaMessage("end_of_track", time=total - now))
    mid = mido.MidiFile(type=0, ticks_per_beat=RENDER_TICKS_PER_BEAT)
    mid.tracks.append(track)
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        mid.save(path)
    return mid


def song_from_midifile(mid: mido.MidiFile, source: str = "") -> MidiSong:
    """Parse an in-memory :class:`mido.MidiFile`."""
    return _parse(mid, source)


def process_file(path, genre: str = "", force: bool = False) -> tuple[PhraseDataset | None, str | None, np.ndarray | None]:
    """Run one file through load -> accept -> merge -> rasterize -> segment.

    Returns ``(phrases, reason, roll)``; ``reason`` is ``None`` when accepted.
    ``force`` skips the time-signature/first-beat filter.
    """
    try:
        song = load_midi(path)
    except MidiParseError:
        return None, PARSE_ERROR, None
    if not force:
        decision = accept_song(song)
        if not decision:
            return None, decision.reason, None
    try:
        roll = rasterize(merge_tracks(song))
    except EmptySongError:
        return None, DRUMS_ONLY, None
    except EmptyRollError:
        return None, EMPTY_ROLL, None
    return segment_phrases(roll, genre, Path(path).name), None, roll


def _process_for_pool(args):
    path, genre = args
    ds, reason, _ = process_file(path, genre)
    return ds, reason


def build_corpus(paths, genre: str, n_jobs: int = 1) -> tuple[PhraseDataset, dict]:
    """Process MIDI files of one genre into a phrase dataset plus a corpus report."""
    paths = sorted(str(p) for p in paths)
    jobs = [(p, genre) for p in paths]
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as pool:
            results = list(pool.map(_process_for_pool, jobs))
    else:
        results = [_process_for_pool(j) for j in jobs]
    parts, accepted, rejected = [], {}, {}
    for path, (ds, reason) in zip(paths, results):
        name = Path(path).name
        if reason is None:
            parts.append(ds)
            accepted[name] = len(ds)
        else:
            rejected[name] = reason
            logger.debug("rejected %s: %s", name, reason)
    dataset = PhraseDataset.concatenate(parts, genre)
    report = {
        "genre": genre,
        "n_files": len(paths),
        "accepted": accepted,
        "rejected": rejected,
        "rejection_counts": dict(sorted(Counter(rejected.values()).items())),
        "n_phrases": len(dataset),
    }
    return dataset, report


def save_dataset(ds: PhraseDataset, directory, report: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    np.save(directory / f"{ds.genre}.npy", ds.phrases.astype(np.uint8))
    manifest = {
        "genre": ds.genre,
        "n_phrases": len(ds),
        "shape": list(ds.phrases.shape),
        "dtype": "uint8",
        "source_ids": ds.source_ids,
        "report": report or {},
    }
    path = directory / f"{ds.genre}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(directory, genre: str) -> PhraseDataset:
    directory = Path(directory)
    npy, manifest_path = directory / f"{genre}.npy", directory / f"{genre}.json"
    if not npy.exists():
        raise FileNotFoundError(f"no dataset for genre {genre!r} in {directory}")
    phrases = np.load(npy, allow_pickle=False)
    source_ids = []
    if manifest_path.exists():
        source_ids = json.loads(manifest_path.read_text()).get("source_ids", [])
    return PhraseDataset(phrases, genre, source_ids)


class PianoRollExtractor(TransformerMixin, BaseEstimator):
    """Transformer from MIDI file paths to stacked ``(N, 64, 84)`` phrases.

    Stateless; ``transform`` records the corpus report in ``report_``.
    """

    def __init__(self, genre="", n_jobs=1):
        self.genre = genre
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        ds, self.report_ = build_corpus(X, self.genre, self.n_jobs)
        self.source_ids_ = ds.source_ids
        return ds.phrases
