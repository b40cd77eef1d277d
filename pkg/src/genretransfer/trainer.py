"""Adversarial training of the two-generator transfer model.

One training step updates both generators on the generator objective, then
all discriminators on the discriminator objective (1:1 schedule). Gaussian
noise with std ``sigma_d`` is added to the input of every discriminator
evaluation, in both phases, with a fresh draw each time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import objectives as obj
from .checkpoint import load_checkpoint, read_metadata, save_checkpoint
from .midi_pipeline import binarize
from .networks import Discriminator, Generator, init_weights
from .validation import check_phrases, to_tensor, torch_generator

logger = logging.getLogger(__name__)

VARIANTS = ("base", "partial", "full")
DIRECTIONS = {"a2b": "a2b", "A->B": "a2b", "AtoB": "a2b", "b2a": "b2a", "B->A": "b2a", "BtoA": "b2a"}
CONVERGENCE_TOL = 0.01
CONVERGENCE_WINDOW = 3


class TrainingAborted(RuntimeError):
    """Raised when a loss becomes non-finite; ``record`` holds the diagnostics."""

    def __init__(self, message: str, record: dict):
        super().__init__(message)
        self.record = record


@dataclass
class TrainConfig:
    variant: str = "base"
    sigma_d: float = 0.0
    lambda_cycle: float = 10.0
    gamma_extra: float = 1.0
    learning_rate: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    batch_size: int = 16
    max_epochs: int = 30
    seed: int = 0
    # genres that make up the mixed set M; derived from the variant when None
    mixed_set_spec: tuple[str, ...] | None = None
    width: int = 64
    n_res_blocks: int = 10
    disc_width: int = 64
    stop_on_convergence: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        self.weights  # validates the non-negative weights
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ValueError("batch_size must be >= 1 and max_epochs >= 0")
        if self.mixed_set_spec is not None:
            self.mixed_set_spec = tuple(self.mixed_set_spec)

    @property
    def weights(self) -> obj.LossWeights:
        return obj.LossWeights(self.lambda_cycle, self.gamma_extra, self.sigma_d)

    def mixed_genres(self) -> tuple[str, ...]:
        if self.variant == "base":
            return ()
        if self.mixed_set_spec is not None:
            return self.mixed_set_spec
        return ("A", "B") if self.variant == "partial" else ("A", "B", "C")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["mixed_set_spec"] is not None:
            d["mixed_set_spec"] = list(d["mixed_set_spec"])
        return d


@dataclass
class TransferModel:
    gen_ab: Generator
    gen_ba: Generator
    disc_a: Discriminator
    disc_b: Discriminator
    disc_a_m: Discriminator | None = None
    disc_b_m: Discriminator | None = None
    variant: str = "base"
    genres: tuple[str, str] = ("A", "B")
    optimizers: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        has_extra = self.disc_a_m is not None and self.disc_b_m is not None
        if has_extra != (self.variant != "base"):
            raise ValueError("extra discriminators must be present iff variant != 'base'")

    @property
    def generators(self) -> dict:
        return {"gen_ab": self.gen_ab, "gen_ba": self.gen_ba}

    @property
    def discriminators(self) -> dict:
        ds = {"disc_a": self.disc_a, "disc_b": self.disc_b}
        if self.variant != "base":
            ds.update(disc_a_m=self.disc_a_m, disc_b_m=self.disc_b_m)
        return ds

    @property
    def networks(self) -> dict:
        return {**self.generators, **self.discriminators}

    def init_optimizers(self, cfg: TrainConfig) -> None:
        self.optimizers = {
            name: torch.optim.Adam(
                net.parameters(), lr=cfg.learning_rate, betas=(cfg.adam_beta1, cfg.adam_beta2)
            )
            for name, net in self.networks.items()
        }


def build_model(cfg: TrainConfig, genres: tuple[str, str] = ("A", "B")) -> TransferModel:
    init_gen = torch_generator(_seeds(cfg.seed)[0])

    def gen():
        return init_weights(Generator(cfg.width, cfg.n_res_blocks), init_gen)

    def disc():
        return init_weights(Discriminator(cfg.disc_width), init_gen)

    extra = (disc(), disc()) if cfg.variant != "base" else (None, None)
    model = TransferModel(gen(), gen(), disc(), disc(), *extra, variant=cfg.variant, genres=tuple(genres))
    model.init_optimizers(cfg)
    return model


def _seeds(seed: int) -> list[int]:
    # independent streams: init, discriminator noise, data order
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(3)]


class LossHistory:
    """Per-epoch mean losses; one record per completed epoch."""

    def __init__(self, records: list[dict] | None = None):
        self.records: list[dict] = []
        for r in records or []:
            self.append(r)

    def append(self, record: dict) -> None:
        expected = len(self.records) + 1
        if record.get("epoch") != expected:
            raise ValueError(f"expected epoch {expected}, got {record.get('epoch')}")
        self.records.append(dict(record))

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def __eq__(self, other):
        return isinstance(other, LossHistory) and self.records == other.records

    def series(self, key: str) -> list[float]:
        return [r[key] for r in self.records]

    @property
    def cycle(self) -> list[float]:
        return self.series("cycle")

    def to_list(self) -> list[dict]:
        return [dict(r) for r in self.records]


def converged(history, tol: float = CONVERGENCE_TOL, window: int = CONVERGENCE_WINDOW) -> bool:
    """True iff the epoch-mean cycle loss moved by less than ``tol`` over each of
    the last ``window`` epoch transitions. Needs at least ``window + 1`` epochs."""
    values = history.cycle if isinstance(history, LossHistory) else list(history)
    if len(values) < window + 1:
        return False
    tail = values[-(window + 1):]
    return all(abs(b - a) < tol for a, b in zip(tail, tail[1:]))


def _set_grad(nets, flag: bool) -> None:
    for net in nets:
        for p in net.parameters():
            p.requires_grad_(flag)


def train_step(
    model: TransferModel,
    x_a: torch.Tensor,
    x_b: torch.Tensor,
    x_m: torch.Tensor | None,
    cfg: TrainConfig,
    rng: torch.Generator,
) -> dict:
    """One generator update followed by one discriminator update.

    Returns the scalar losses of this step as floats.
    """
    if not model.optimizers:
        model.init_optimizers(cfg)
    w = cfg.weights
    sigma = cfg.sigma_d
    gens = list(model.generators.values())
    discs = list(model.discriminators.values())
    extra = model.variant != "base"
    if extra and x_m is None:
        raise ValueError(f"variant {model.variant!r} needs a mixed-set batch x_m")

    def noisy(x):
        return obj.add_input_noise(x, sigma, rng)

    # generator phase
    _set_grad(gens, True)
    _set_grad(discs, False)
    fake_b = model.gen_ab(x_a)
    fake_a = model.gen_ba(x_b)
    cycle_a = model.gen_ba(fake_b)
    cycle_b = model.gen_ab(fake_a)
    s_b = model.disc_b(noisy(fake_b))
    s_a = model.disc_a(noisy(fake_a))
    l_cycle = obj.cycle_loss(x_a, cycle_a, x_b, cycle_b)
    extra_scores = None
    if extra:
        extra_scores = (model.disc_a_m(noisy(fake_a)), model.disc_b_m(noisy(fake_b)))
    l_g = obj.total_generator_loss(None, s_b, s_a, w, cycle=l_cycle, extra_scores=extra_scores)
    record = {
        "cycle": l_cycle.item(),
        "gen_ab": obj.gen_adv_loss(s_b).item(),
        "gen_ba": obj.gen_adv_loss(s_a).item(),
        "gen": l_g.item(),
    }
    if not math.isfinite(record["gen"]):
        raise TrainingAborted("non-finite generator loss", record)
    for name in model.generators:
        model.optimizers[name].zero_grad(set_to_none=True)
    l_g.backward()
    for name in model.generators:
        model.optimizers[name].step()

    # discriminator phase, on the translations produced before the generator update
    _set_grad(gens, False)
    _set_grad(discs, True)
    fake_a, fake_b = fake_a.detach(), fake_b.detach()
    l_da = obj.disc_loss(model.disc_a(noisy(x_a)), model.disc_a(noisy(fake_a)))
    l_db = obj.disc_loss(model.disc_b(noisy(x_b)), model.disc_b(noisy(fake_b)))
    extra_losses = None
    if extra:
        l_dam = obj.extra_disc_loss(model.disc_a_m(noisy(x_m)), model.disc_a_m(noisy(fake_a)))
        l_dbm = obj.extra_disc_loss(model.disc_b_m(noisy(x_m)), model.disc_b_m(noisy(fake_b)))
        extra_losses = (l_dam, l_dbm)
    l_d_all = obj.total_discriminator_loss((l_da, l_db), extra_losses, w)
    record.update(disc_a=l_da.item(), disc_b=l_db.item(), disc=(l_da + l_db).item(), disc_all=l_d_all.item())
    if extra:
        record.update(disc_a_m=extra_losses[0].item(), disc_b_m=extra_losses[1].item())
    if not math.isfinite(record["disc_all"]):
        raise TrainingAborted("non-finite discriminator loss", record)
    for name in model.discriminators:
        model.optimizers[name].zero_grad(set_to_none=True)
    l_d_all.backward()
    for name in model.discriminators:
        model.optimizers[name].step()
    _set_grad(gens, True)
    return record


def _mixed_batch(pool: list[np.ndarray], n: int, rng: np.random.Generator) -> np.ndarray:
    # genre first (uniform over M), then a phrase uniformly within that genre
    which = rng.integers(len(pool), size=n)
    return np.stack([pool[g][rng.integers(len(pool[g]))] for g in which])


def train(
    model: TransferModel,
    datasets,
    cfg: TrainConfig,
    checkpoint_dir=None,
    callback=None,
) -> tuple[TransferModel, LossHistory]:
    """Train ``model`` on ``datasets = (X_a, X_b[, X_c])`` (arrays of phrases).

    Runs shuffled mini-batch epochs until ``cfg.max_epochs`` or until the cycle
    loss has converged (see :func:`converged`). With ``checkpoint_dir`` set, a
    checkpoint is written after every epoch and as ``final.npz`` at the end.
    """
    data = [check_phrases(X, allow_empty=True) for X in datasets]
    if len(data) < 2 or any(len(X) == 0 for X in data):
        raise ValueError("training needs non-empty datasets for both domains")
    x_a_all, x_b_all = data[0], data[1]
    by_name = {"A": x_a_all, "B": x_b_all}
    if len(data) > 2:
        by_name["C"] = data[2]
    mixed = cfg.mixed_genres()
    missing = [g for g in mixed if g not in by_name]
    if missing:
        raise ValueError(f"variant {cfg.variant!r} needs dataset(s) {missing} for the mixed set")
    pool = [by_name[g] for g in mixed]

    _, noise_seed, data_seed = _seeds(cfg.seed)
    noise_rng = torch_generator(noise_seed)
    data_rng = np.random.default_rng(data_seed)
    history = LossHistory()
    n = min(len(x_a_all), len(x_b_all))
    bs = min(cfg.batch_size, n)
    n_steps = n // bs

    for epoch in range(1, cfg.max_epochs + 1):
        perm_a = data_rng.permutation(len(x_a_all))
        perm_b = data_rng.permutation(len(x_b_all))
        sums: dict[str, float] = {}
        for step in range(n_steps):
            sl = slice(step * bs, (step + 1) * bs)
            x_a = to_tensor(x_a_all[perm_a[sl]])
            x_b = to_tensor(x_b_all[perm_b[sl]])
            x_m = to_tensor(_mixed_batch(pool, bs, data_rng)) if pool else None
            try:
                rec = train_step(model, x_a, x_b, x_m, cfg, noise_rng)
            except TrainingAborted as exc:
                exc.record.update(epoch=epoch, step=step)
                raise
            for k, v in rec.items():
                sums[k] = sums.get(k, 0.0) + v
        record = {"epoch": epoch, **{k: v / n_steps for k, v in sums.items()}}
        history.append(record)
        logger.info("epoch %d: %s", epoch, ", ".join(f"{k}={v:.4f}" for k, v in record.items() if k != "epoch"))
        if callback is not None:
            callback(record)
        if checkpoint_dir is not None:
            save_transfer_model(Path(checkpoint_dir) / f"epoch_{epoch:03d}.npz", model, cfg, epoch=epoch)
        if cfg.stop_on_convergence and converged(history):
            logger.info("cycle loss converged after %d epochs", epoch)
            break

    if checkpoint_dir is not None:
        save_transfer_model(Path(checkpoint_dir) / "final.npz", model, cfg, epoch=len(history), tag="final")
    return model, history


def _direction(direction: str) -> str:
    try:
        return DIRECTIONS[direction]
    except KeyError:
        raise ValueError(f"direction must be one of {sorted(DIRECTIONS)}, got {direction!r}") from None


@torch.no_grad()
def transfer(model: TransferModel, phrases, direction: str = "a2b", batch_size: int = 64, threshold: float = 0.5):
    """Apply one generator without noise. Returns ``(raw, binary)`` arrays of shape (n, 64, 84)."""
    direction = _direction(direction)
    X = check_phrases(getattr(phrases, "phrases", phrases))
    gen = model.gen_ab if direction == "a2b" else model.gen_ba
    out = np.concatenate([
        gen(to_tensor(X[i:i + batch_size])).numpy() for i in range(0, len(X), batch_size)
    ])[..., 0]
    return out, binarize(out, threshold)


def save_transfer_model(path, model: TransferModel, cfg: TrainConfig, **extra_meta) -> Path:
    meta = {"kind": "transfer_model", "config": cfg.to_dict(), "genres": list(model.genres), **extra_meta}
    return save_checkpoint(path, model.networks, meta)


def load_transfer_model(path) -> tuple[TransferModel, TrainConfig, dict]:
    meta = read_metadata(path)
    if meta.get("kind") != "transfer_model":
        raise ValueError(f"{path} is not a transfer-model checkpoint")
    cfg = TrainConfig(**meta["config"])
    model = build_model(cfg, tuple(meta["genres"]))
    load_checkpoint(path, model.networks)
    return model, cfg, meta


class CycleGANTransfer(TransformerMixin, BaseEstimator):
    """Unpaired two-domain phrase transfer with optional multi-domain discriminators.

    Parameters
    ----------
    variant : {"base", "partial", "full"}
        ``base`` trains two discriminators. ``partial`` and ``full`` add one
        extra discriminator per direction whose real data is the mixed set
        M = A+B (partial) or A+B+C (full).
    sigma_d : float
        Std of the Gaussian noise added to every discriminator input.
    lambda_cycle, gamma_extra : float
        Weights of the cycle loss and of the extra discriminators.
    domains : tuple of labels, optional
        ``(A, B)`` or ``(A, B, C)``. Required when ``y`` has more than two
        labels; otherwise the sorted labels of ``y`` are used.
    width, n_res_blocks, disc_width : int
        Network size; 64 / 10 / 64 is the full-size model.
    checkpoint_dir : str or None
        Write a checkpoint after every epoch when set.

    Attributes
    ----------
    model_ : TransferModel
    history_ : LossHistory
    domains_ : tuple
    converged_ : bool
    """

    def __init__(
        self,
        variant="base",
        sigma_d=0.0,
        lambda_cycle=10.0,
        gamma_extra=1.0,
        learning_rate=2e-4,
        beta1=0.5,
        beta2=0.999,
        batch_size=16,
        max_epochs=30,
        width=64,
        n_res_blocks=10,
        disc_width=64,
        stop_on_convergence=True,
        domains=None,
        checkpoint_dir=None,
        random_state=0,
    ):
        self.variant = variant
        self.sigma_d = sigma_d
        self.lambda_cycle = lambda_cycle
        self.gamma_extra = gamma_extra
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.width = width
        self.n_res_blocks = n_res_blocks
        self.disc_width = disc_width
        self.stop_on_convergence = stop_on_convergence
        self.domains = domains
        self.checkpoint_dir = checkpoint_dir
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            variant=self.variant,
            sigma_d=self.sigma_d,
            lambda_cycle=self.lambda_cycle,
            gamma_extra=self.gamma_extra,
            learning_rate=self.learning_rate,
            adam_beta1=self.beta1,
            adam_beta2=self.beta2,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            seed=self.random_state,
            width=self.width,
            n_res_blocks=self.n_res_blocks,
            disc_width=self.disc_width,
            stop_on_convergence=self.stop_on_convergence,
        )

    def fit(self, X, y, callback=None):
        """Fit on phrases ``X`` with domain labels ``y``."""
        X = check_phrases(X)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError(f"X has {len(X)} phrases but y has {len(y)} labels")
        labels = np.unique(y)
        if self.domains is not None:
            domains = tuple(self.domains)
        elif len(labels) == 2:
            domains = tuple(labels.tolist())
        else:
            raise ValueError(f"found labels {labels.tolist()}; pass domains=(A, B[, C])")
        cfg = self._config()
        if cfg.variant == "full" and len(domains) < 3:
            raise ValueError("the full variant needs a third domain C")
        data = [X[y == d] for d in domains]
        for d, part in zip(domains, data):
            if len(part) == 0:
                raise ValueError(f"no phrases labelled {d!r}")
        self.domains_ = domains
        self.config_ = cfg
        self.model_ = build_model(cfg, tuple(str(d) for d in domains[:2]))
        self.model_, self.history_ = train(self.model_, data, cfg, self.checkpoint_dir, callback)
        self.converged_ = converged(self.history_)
        return self

    def transform(self, X, direction="a2b", binary=True):
        """Translate phrases; returns ``(n, 64, 84)`` (0/1 when ``binary``)."""
        check_is_fitted(self, "model_")
        raw, bits = transfer(self.model_, X, direction)
        return bits if binary else raw

    def inverse_transform(self, X, binary=True):
        return self.transform(X, direction="b2a", binary=binary)

    def save(self, path, **extra_meta) -> Path:
        check_is_fitted(self, "model_")
        return save_transfer_model(
            path, self.model_, self.config_, epoch=len(self.history_),
            domains=[str(d) for d in self.domains_], history=self.history_.to_list(), **extra_meta,
        )

    @classmethod
    def load(cls, path) -> "CycleGANTransfer":
        model, cfg, meta = load_transfer_model(path)
        est = cls(
            variant=cfg.variant, sigma_d=cfg.sigma_d, lambda_cycle=cfg.lambda_cycle,
            gamma_extra=cfg.gamma_extra, learning_rate=cfg.learning_rate, beta1=cfg.adam_beta1,
            beta2=cfg.adam_beta2, batch_size=cfg.batch_size, max_epochs=cfg.max_epochs,
            width=cfg.width, n_res_blocks=cfg.n_res_blocks, disc_width=cfg.disc_width,
            stop_on_convergence=cfg.stop_on_convergence, random_state=cfg.seed,
        )
        est.model_ = model
        est.config_ = cfg
        est.domains_ = tuple(meta.get("domains", model.genres))
        est.history_ = LossHistory(meta.get("history", []))
        est.converged_ = converged(est.history_)
        return est
