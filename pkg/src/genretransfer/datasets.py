"""Synthetic phrase corpora with known genre structure.

Each synthetic "genre" is a pitch-column band. A phrase is a sequence of
sustained tone clusters (runs of adjacent pitches) placed so the whole cluster
stays inside the band. Cluster size and slot length are shared across genres,
so every genre has the same note density.
"""

from __future__ import annotations

import numpy as np

from .midi_pipeline import PhraseDataset
from .validation import N_PITCHES, N_STEPS

LOW_BAND = (0, 41)
HIGH_BAND = (42, 83)
MID_BAND = (21, 62)
CLUSTER = 21  # half a band: dense enough that reconstruction under MAE does not collapse to silence
SLOT_STEPS = 16


def make_band_phrases(n: int, band: tuple[int, int], seed=None, slot_steps: int = SLOT_STEPS,
                      cluster: int = CLUSTER) -> np.ndarray:
    """``n`` phrases of ``cluster``-wide clusters, one per ``slot_steps`` steps, inside ``band``."""
    lo, hi = band
    if not (0 <= lo and hi < N_PITCHES and hi - lo + 1 >= cluster >= 1):
        raise ValueError(f"band {band} cannot hold a {cluster}-pitch cluster inside 0..{N_PITCHES - 1}")
    if slot_steps < 1 or N_STEPS % slot_steps:
        raise ValueError(f"slot_steps must divide {N_STEPS}, got {slot_steps}")
    rng = np.random.default_rng(seed)
    n_slots = N_STEPS // slot_steps
    roots = rng.integers(lo, hi - cluster + 2, size=(n, n_slots))
    X = np.zeros((n, N_STEPS, N_PITCHES), dtype=np.uint8)
    rows = np.arange(n)[:, None]
    for s in range(n_slots):
        for p in range(cluster):
            X[rows, s * slot_steps:(s + 1) * slot_steps, (roots[:, s] + p)[:, None]] = 1
    return X


def make_register_genres(n_per_genre: int = 500, seed: int = 0, with_c: bool = False, **kwargs):
    """Low-register genre ``A`` (columns 0-41) and high-register genre ``B`` (42-83).

    With ``with_c``, also a middle-register genre ``C`` (21-62) for the mixed
    set of the full variant. Extra keyword arguments go to
    :func:`make_band_phrases`. Returns a tuple of :class:`PhraseDataset`.
    """
    seeds = np.random.SeedSequence(seed).generate_state(3)
    bands = [LOW_BAND, HIGH_BAND] + ([MID_BAND] if with_c else [])
    return tuple(
        PhraseDataset(make_band_phrases(n_per_genre, band, s, **kwargs), name)
        for band, s, name in zip(bands, seeds, "ABC")
    )
