"""Symbolic-music genre transfer with a CycleGAN on 4-bar piano-roll phrases."""

from .datasets import make_band_phrases, make_register_genres
from .genre_eval import (
    ClassifierReport,
    GenreClassifier,
    TransferReport,
    direction_strength,
    evaluate_model,
    robustness_curve,
    total_strength,
    train_classifier,
    transfer_success,
)
from .midi_pipeline import (
    MidiSong,
    Note,
    PhraseDataset,
    PianoRollExtractor,
    accept_song,
    balance,
    binarize,
    build_corpus,
    load_midi,
    merge_tracks,
    rasterize,
    render_midi,
    segment_phrases,
    split_dataset,
)
from .networks import Discriminator, GenreClassifierNet, Generator
from .objectives import LossWeights
from .trainer import CycleGANTransfer, TrainConfig, TrainingAborted, build_model, converged, train, transfer

__version__ = "0.1.0"

__all__ = [
    "ClassifierReport",
    "CycleGANTransfer",
    "Discriminator",
    "GenreClassifier",
    "GenreClassifierNet",
    "Generator",
    "LossWeights",
    "MidiSong",
    "Note",
    "PhraseDataset",
    "PianoRollExtractor",
    "TrainConfig",
    "TrainingAborted",
    "TransferReport",
    "accept_song",
    "balance",
    "binarize",
    "build_corpus",
    "build_model",
    "converged",
    "direction_strength",
    "evaluate_model",
    "load_midi",
    "make_band_phrases",
    "make_register_genres",
    "merge_tracks",
    "rasterize",
    "render_midi",
    "robustness_curve",
    "segment_phrases",
    "split_dataset",
    "total_strength",
    "train",
    "train_classifier",
    "transfer",
    "transfer_success",
]
