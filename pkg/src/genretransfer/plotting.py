"""Piano-roll images: time on the x axis, pitch increasing upwards."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .validation import LOWEST_PITCH  # noqa: E402


def roll_image(phrases) -> np.ndarray:
    """Concatenate ``(n, 64, 84)`` phrases in time and return a ``(84, 64n)`` image, pitch 0 at the bottom."""
    phrases = np.asarray(phrases)
    if phrases.ndim == 2:
        phrases = phrases[None]
    roll = phrases.reshape(-1, phrases.shape[-1])
    return roll.T[::-1]


def save_roll_png(phrases, path) -> Path:
    """Pixel-exact image: one pixel per cell, active cells black."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    plt.imsave(path, roll_image(phrases).astype(float), cmap="gray_r", vmin=0.0, vmax=1.0)
    return path


def read_roll_png(path) -> np.ndarray:
    """Inverse of :func:`save_roll_png`; returns ``(T, 84)`` 0/1 cells."""
    img = plt.imread(path)
    gray = img[..., :3].mean(axis=-1) if img.ndim == 3 else img
    return (gray < 0.5).astype(np.uint8)[::-1].T


def save_comparison(rows: dict[str, np.ndarray], path, max_phrases: int = 4) -> Path:
    """Grid of phrases: one row per named set (e.g. original, transferred), one column per phrase."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(rows)
    n_cols = min(max_phrases, min(len(np.atleast_3d(v)) for v in rows.values()))
    fig, axes = plt.subplots(len(names), n_cols, figsize=(2.6 * n_cols, 2.2 * len(names)), squeeze=False)
    for r, name in enumerate(names):
        for c in range(n_cols):
            ax = axes[r][c]
            ax.imshow(rows[name][c].T, origin="lower", aspect="auto", cmap="gray_r", vmin=0, vmax=1,
                      interpolation="nearest")
            ax.set_xticks([0, 16, 32, 48])
            ax.set_yticks([0, 36, 72])
            ax.set_yticklabels([str(LOWEST_PITCH + p) for p in (0, 36, 72)])
            if c == 0:
                ax.set_ylabel(name)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
