"""Input validation helpers shared by the estimators and the training code."""

from __future__ import annotations

import numbers

import numpy as np
import torch

N_STEPS = 64
N_PITCHES = 84
LOWEST_PITCH = 24


def check_phrases(X, *, binary: bool = False, dtype=np.float32, allow_empty: bool = False) -> np.ndarray:
    """Coerce ``X`` to an ``(n, 64, 84, 1)`` array.

    Accepts ``(n, 64, 84)``, ``(n, 64, 84, 1)`` or a single ``(64, 84)`` phrase.
    With ``binary=True`` every entry must be 0 or 1.
    """
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    if X.ndim == 3:
        X = X[..., None]
    if X.ndim != 4 or X.shape[1:] != (N_STEPS, N_PITCHES, 1):
        raise ValueError(
            f"expected phrases of shape (n, {N_STEPS}, {N_PITCHES}, 1), got {np.shape(X)}"
        )
    if X.shape[0] == 0 and not allow_empty:
        raise ValueError("got an empty batch of phrases")
    if not np.issubdtype(X.dtype, np.number) and X.dtype != bool:
        raise TypeError(f"phrases must be numeric, got dtype {X.dtype}")
    X = X.astype(dtype, copy=False)
    if not np.all(np.isfinite(X)):
        raise ValueError("phrases contain NaN or inf")
    if binary and not np.all((X == 0) | (X == 1)):
        raise ValueError("phrases must be binary (0/1)")
    return X


def check_nonnegative(value, name: str) -> float:
    if not isinstance(value, numbers.Real) or value < 0 or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite non-negative number, got {value!r}")
    return float(value)


def check_batch_tensor(x: torch.Tensor) -> None:
    """Raise ``ValueError`` unless ``x`` is an NHWC phrase batch."""
    if x.ndim != 4 or tuple(x.shape[1:]) != (N_STEPS, N_PITCHES, 1):
        raise ValueError(
            f"expected input of shape (n, {N_STEPS}, {N_PITCHES}, 1), got {tuple(x.shape)}"
        )
    if x.shape[0] < 1:
        raise ValueError("batch size must be at least 1")


def torch_generator(seed: int | None) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(int(seed) if seed is not None else torch.seed())
    return gen


def to_tensor(X: np.ndarray, dtype=torch.float32) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(X)).to(dtype)
