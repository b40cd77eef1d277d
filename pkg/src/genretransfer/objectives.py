"""Least-squares adversarial losses, cycle-consistency loss and discriminator input noise.

Norms are per-element means: ``||D(x) - 1||_2`` is the mean squared deviation
of the score map from 1 and ``||a - b||_1`` is the mean absolute difference.
Every function accepts torch tensors (differentiable) or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .validation import check_nonnegative


@dataclass(frozen=True)
class LossWeights:
    lambda_cycle: float = 10.0
    gamma_extra: float = 1.0
    sigma_d: float = 0.0

    def __post_init__(self):
        check_nonnegative(self.lambda_cycle, "lambda_cycle")
        check_nonnegative(self.gamma_extra, "gamma_extra")
        check_nonnegative(self.sigma_d, "sigma_d")


@dataclass
class CycleBatch:
    """Real batches, their translations and reconstructions, plus a mixed-domain batch."""

    x_a: torch.Tensor
    x_b: torch.Tensor
    fake_b: torch.Tensor  # G_ab(x_a)
    fake_a: torch.Tensor  # G_ba(x_b)
    cycle_a: torch.Tensor  # G_ba(fake_b)
    cycle_b: torch.Tensor  # G_ab(fake_a)
    x_m: torch.Tensor | None = None

    def __post_init__(self):
        arrays = [self.x_a, self.x_b, self.fake_b, self.fake_a, self.cycle_a, self.cycle_b]
        if self.x_m is not None:
            arrays.append(self.x_m)
        shapes = {tuple(a.shape) for a in arrays}
        if len(shapes) != 1:
            raise ValueError(f"cycle batch arrays disagree in shape: {sorted(shapes)}")


def _t(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x, dtype=np.float64))


def gen_adv_loss(scores) -> torch.Tensor:
    """Generator side of the LSGAN objective: mean of (D(fake) - 1)^2."""
    scores = _t(scores)
    return torch.mean((scores - 1.0) ** 2)


def cycle_loss(x_a, cycle_a, x_b, cycle_b) -> torch.Tensor:
    x_a, cycle_a, x_b, cycle_b = map(_t, (x_a, cycle_a, x_b, cycle_b))
    if x_a.shape != cycle_a.shape or x_b.shape != cycle_b.shape:
        raise ValueError(
            f"shape mismatch: {tuple(x_a.shape)} vs {tuple(cycle_a.shape)}, "
            f"{tuple(x_b.shape)} vs {tuple(cycle_b.shape)}"
        )
    return torch.mean(torch.abs(cycle_a - x_a)) + torch.mean(torch.abs(cycle_b - x_b))


def total_generator_loss(
    batch: CycleBatch | None,
    scores_b,
    scores_a,
    w: LossWeights,
    *,
    cycle=None,
    extra_scores=None,
) -> torch.Tensor:
    """``L_G(A->B) + L_G(B->A) + lambda * L_c``.

    ``scores_b`` are D_B's scores on ``fake_b``, ``scores_a`` are D_A's on
    ``fake_a``. Pass ``cycle`` to reuse an already computed cycle loss instead
    of deriving it from ``batch``. ``extra_scores=(s_a_m, s_b_m)`` adds the
    multi-domain discriminators' generator terms weighted by ``gamma_extra``;
    without it the sum is exactly the three-term objective.
    """
    if cycle is None:
        cycle = cycle_loss(batch.x_a, batch.cycle_a, batch.x_b, batch.cycle_b)
    total = gen_adv_loss(scores_b) + gen_adv_loss(scores_a) + w.lambda_cycle * _t(cycle)
    if extra_scores is not None:
        s_a_m, s_b_m = extra_scores
        total = total + w.gamma_extra * (gen_adv_loss(s_a_m) + gen_adv_loss(s_b_m))
    return total


def disc_loss(real_scores, fake_scores) -> torch.Tensor:
    real_scores, fake_scores = _t(real_scores), _t(fake_scores)
    if real_scores.shape != fake_scores.shape:
        raise ValueError("real and fake score maps must have the same shape")
    return 0.5 * (torch.mean((real_scores - 1.0) ** 2) + torch.mean(fake_scores ** 2))


def extra_disc_loss(mixed_real_scores, fake_scores) -> torch.Tensor:
    """Same form as :func:`disc_loss`; the real side comes from the mixed set M."""
    return disc_loss(mixed_real_scores, fake_scores)


def total_discriminator_loss(standard, extra, w: LossWeights) -> torch.Tensor:
    """``L_DA + L_DB + gamma * (L_DAm + L_DBm)``; ``extra=None`` for the base variant."""
    l_da, l_db = standard
    total = _t(l_da) + _t(l_db)
    if extra is not None:
        l_dam, l_dbm = extra
        total = total + w.gamma_extra * (_t(l_dam) + _t(l_dbm))
    return total


def add_input_noise(batch, sigma: float, rng: torch.Generator | np.random.Generator | None = None):
    """Add i.i.d. N(0, sigma^2) noise element-wise; no clipping.

    Returns the input object itself when ``sigma == 0``. Torch tensors take a
    ``torch.Generator``; numpy arrays take a ``numpy.random.Generator``.
    """
    if sigma < 0:
        raise ValueError(f"noise sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return batch
    if isinstance(batch, torch.Tensor):
        noise = torch.randn(batch.shape, generator=rng, dtype=batch.dtype, device=batch.device)
        return batch + sigma * noise
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    batch = np.asarray(batch)
    return batch + rng.normal(0.0, sigma, size=batch.shape).astype(batch.dtype, copy=False)
