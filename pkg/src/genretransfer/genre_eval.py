"""Genre classifier and the classifier-based transfer metrics.

For a transfer A -> B -> A the classifier's probability of the *source* genre
is read on the original phrase, on its translation and on its reconstruction.
The direction strength is::

    S_ab = (P(A|x_a) - P(A|fake_b) + P(A|cycle_a) - P(A|fake_b)) / 2

and the model's total strength is the mean of both directions. The headline
numbers use dataset-mean probabilities (means first, then the formula); the
report also carries per-sample success fractions and the strength restricted
to successful samples.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted
from torch.nn import functional as F

from .checkpoint import load_checkpoint, read_metadata, save_checkpoint
from .midi_pipeline import PhraseDataset, split_dataset
from .networks import GenreClassifierNet, init_weights
from .objectives import add_input_noise
from .trainer import TransferModel, transfer
from .validation import check_phrases, to_tensor, torch_generator

ROBUSTNESS_SIGMAS = (0.0, 0.01, 0.1, 0.2, 0.3, 0.5)


class GenreClassifier(ClassifierMixin, BaseEstimator):
    """Two-genre convolutional classifier trained with cross-entropy.

    ``predict_proba`` columns follow ``classes_`` (sorted labels).
    """

    def __init__(
        self,
        width=64,
        learning_rate=2e-4,
        beta1=0.5,
        beta2=0.999,
        batch_size=16,
        max_epochs=10,
        random_state=0,
    ):
        self.width = width
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.random_state = random_state

    def fit(self, X, y):
        X = check_phrases(X)
        y = np.asarray(y)
        if len(y) != len(X):
            raise ValueError(f"X has {len(X)} phrases but y has {len(y)} labels")
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"need exactly two genres, got {self.classes_.tolist()}")
        targets = np.searchsorted(self.classes_, y)
        init_seed, order_seed = np.random.SeedSequence(self.random_state).generate_state(2)
        self.net_ = init_weights(GenreClassifierNet(self.width), torch_generator(int(init_seed)))
        opt = torch.optim.Adam(self.net_.parameters(), lr=self.learning_rate, betas=(self.beta1, self.beta2))
        rng = np.random.default_rng(int(order_seed))
        self.loss_curve_ = []
        self.net_.train()
        for _ in range(self.max_epochs):
            perm = rng.permutation(len(X))
            total = 0.0
            for i in range(0, len(X), self.batch_size):
                idx = perm[i:i + self.batch_size]
                logits = self.net_.logits(to_tensor(X[idx]))
                loss = F.cross_entropy(logits, torch.from_numpy(targets[idx]))
                opt.zero_grad(set_to_none=True)
                loss.backward()
                opt.step()
                total += loss.item() * len(idx)
            self.loss_curve_.append(total / len(X))
        self.net_.eval()
        return self

    @torch.no_grad()
    def predict_proba(self, X, noise_sigma=0.0, random_state=None):
        """Class probabilities; ``noise_sigma`` adds N(0, sigma^2) to the inputs first."""
        check_is_fitted(self, "net_")
        X = check_phrases(X)
        rng = torch_generator(0 if random_state is None else random_state)
        out = []
        for i in range(0, len(X), 256):
            batch = add_input_noise(to_tensor(X[i:i + 256]), noise_sigma, rng)
            out.append(self.net_(batch).double().numpy())
        return np.concatenate(out)

    def predict(self, X, noise_sigma=0.0, random_state=None):
        proba = self.predict_proba(X, noise_sigma, random_state)
        return self.classes_[np.argmax(proba, axis=1)]

    def genre_column(self, genre) -> int:
        check_is_fitted(self, "classes_")
        hits = np.flatnonzero(self.classes_.astype(str) == str(genre))
        if len(hits) != 1:
            raise ValueError(f"classifier was trained on {self.classes_.tolist()}, not {genre!r}")
        return int(hits[0])

    def save(self, path, report: "ClassifierReport | None" = None) -> Path:
        check_is_fitted(self, "net_")
        meta = {
            "kind": "genre_classifier",
            "classes": [str(c) for c in self.classes_],
            "params": self.get_params(),
            "report": report.to_dict() if report is not None else None,
        }
        return save_checkpoint(path, {"classifier": self.net_}, meta)

    @classmethod
    def load(cls, path) -> "GenreClassifier":
        meta = read_metadata(path)
        if meta.get("kind") != "genre_classifier":
            raise ValueError(f"{path} is not a genre-classifier checkpoint")
        clf = cls(**meta["params"])
        clf.net_ = GenreClassifierNet(clf.width)
        load_checkpoint(path, {"classifier": clf.net_})
        clf.net_.eval()
        clf.classes_ = np.asarray(meta["classes"])
        return clf


@dataclass
class ClassifierReport:
    test_accuracy: float
    sigma_grid: list[float] = field(default_factory=lambda: list(ROBUSTNESS_SIGMAS))
    accuracies: list[float] = field(default_factory=list)
    n_train: int = 0
    n_test: int = 0
    seed: int = 0
    genres: list[str] = field(default_factory=list)
    trials: int = 1

    def __post_init__(self):
        for acc in [self.test_accuracy, *self.accuracies]:
            if not 0.0 <= acc <= 1.0:
                raise ValueError(f"accuracy {acc} outside [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierReport":
        return cls(**d)


def _xy(ds_a: PhraseDataset, ds_b: PhraseDataset):
    X = np.concatenate([ds_a.phrases, ds_b.phrases])
    y = np.array([ds_a.genre] * len(ds_a) + [ds_b.genre] * len(ds_b))
    return X, y


def train_classifier(
    ds_a: PhraseDataset,
    ds_b: PhraseDataset,
    split: float = 0.9,
    seed: int = 0,
    sigma_grid=ROBUSTNESS_SIGMAS,
    trials: int = 3,
    **params,
) -> tuple[GenreClassifier, ClassifierReport]:
    """Fit a classifier on the ``split`` training fraction of both genres.

    The held-out part uses the same seeded split as :func:`split_dataset`, so a
    transfer model trained with the same seed is evaluated on the same phrases.
    """
    if ds_a.genre == ds_b.genre:
        raise ValueError("the two datasets must carry different genre labels")
    train_a, test_a = split_dataset(ds_a, 1.0 - split, seed)
    train_b, test_b = split_dataset(ds_b, 1.0 - split, seed)
    params.setdefault("random_state", seed)
    clf = GenreClassifier(**params).fit(*_xy(train_a, train_b))
    X_test, y_test = _xy(test_a, test_b)
    report = robustness_curve(clf, X_test, y_test, sigma_grid, trials, seed)
    report.n_train = len(train_a) + len(train_b)
    return clf, report


def robustness_curve(clf: GenreClassifier, X_test, y_test, sigma_grid=ROBUSTNESS_SIGMAS, trials: int = 3, seed: int = 0) -> ClassifierReport:
    """Test accuracy under Gaussian input noise, averaged over ``trials`` draws per sigma."""
    y_test = np.asarray(y_test)
    accuracies = []
    for k, sigma in enumerate(sigma_grid):
        runs = 1 if sigma == 0 else trials
        accs = [
            float(np.mean(clf.predict(X_test, sigma, random_state=seed * 1000 + 10 * k + t) == y_test))
            for t in range(runs)
        ]
        accuracies.append(float(np.mean(accs)))
    clean = float(np.mean(clf.predict(X_test) == y_test))
    return ClassifierReport(
        test_accuracy=clean,
        sigma_grid=[float(s) for s in sigma_grid],
        accuracies=accuracies,
        n_test=len(y_test),
        seed=seed,
        genres=[str(c) for c in clf.classes_],
        trials=trials,
    )


def transfer_success(p_before, p_after):
    """Source genre recognised before (> 0.5) and rejected after (< 0.5)."""
    ok = np.logical_and(np.asarray(p_before) > 0.5, np.asarray(p_after) < 0.5)
    return bool(ok) if ok.ndim == 0 else ok


def direction_strength(p_src_before, p_src_after, p_src_cycle) -> float:
    return (p_src_before - p_src_after + p_src_cycle - p_src_after) / 2


def total_strength(s_ab, s_ba) -> float:
    return (s_ab + s_ba) / 2


@dataclass
class TransferReport:
    genres: list[str]
    p_a_real: float
    p_a_transfer: float
    p_a_cycle: float
    p_b_real: float
    p_b_transfer: float
    p_b_cycle: float
    strength_ab: float
    strength_ba: float
    total_strength: float
    success_ab: float
    success_ba: float
    filtered_strength_ab: float | None = None
    filtered_strength_ba: float | None = None
    sigma_c: float = 0.0
    n_a: int = 0
    n_b: int = 0
    model_id: str = ""
    classifier_id: str = ""

    ROW_LABELS = ("A", "A->B", "A->B->A", "B", "B->A", "B->A->B", "S_tot")

    def table_rows(self) -> list[tuple[str, float]]:
        return list(zip(self.ROW_LABELS, (
            self.p_a_real, self.p_a_transfer, self.p_a_cycle,
            self.p_b_real, self.p_b_transfer, self.p_b_cycle, self.total_strength,
        )))

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TransferReport":
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "TransferReport":
        return cls.from_dict(json.loads(text))


def _strengths(p_real, p_transfer, p_cycle):
    """Mean-aggregated strength plus success fraction and success-filtered strength."""
    success = transfer_success(p_real, p_transfer)
    mean_strength = direction_strength(p_real.mean(), p_transfer.mean(), p_cycle.mean())
    filtered = None
    if success.any():
        filtered = float(direction_strength(p_real[success].mean(), p_transfer[success].mean(), p_cycle[success].mean()))
    return float(mean_strength), float(success.mean()), filtered


def evaluate_model(
    model,
    clf: GenreClassifier,
    test_a,
    test_b,
    eval_sigma_c: float = 0.0,
    seed: int = 0,
    return_probabilities: bool = False,
):
    """Classify originals, translations and reconstructions in both directions.

    ``model`` is a :class:`TransferModel` or a fitted ``CycleGANTransfer``.
    Translations and reconstructions are binarized at 0.5 before
    classification; the reconstruction is computed from the continuous
    translation, as in training.
    """
    model_id = getattr(model, "model_id", "")
    if not isinstance(model, TransferModel):
        check_is_fitted(model, "model_")
        model = model.model_
    genre_a, genre_b = (str(g) for g in model.genres)
    if {genre_a, genre_b} != set(clf.classes_.astype(str)):
        raise ValueError(
            f"classifier genres {clf.classes_.tolist()} do not match model genres {[genre_a, genre_b]}"
        )
    col_a, col_b = clf.genre_column(genre_a), clf.genre_column(genre_b)
    X_a = check_phrases(getattr(test_a, "phrases", test_a))
    X_b = check_phrases(getattr(test_b, "phrases", test_b))

    raw_b, fake_b = transfer(model, X_a, "a2b")
    _, cycle_a = transfer(model, raw_b, "b2a")
    raw_a, fake_a = transfer(model, X_b, "b2a")
    _, cycle_b = transfer(model, raw_a, "a2b")

    streams = iter(np.random.SeedSequence(seed).generate_state(6))

    def prob(X, col):
        return clf.predict_proba(X, eval_sigma_c, random_state=int(next(streams)))[:, col]

    probs = {
        "a_real": prob(X_a, col_a), "a_transfer": prob(fake_b, col_a), "a_cycle": prob(cycle_a, col_a),
        "b_real": prob(X_b, col_b), "b_transfer": prob(fake_a, col_b), "b_cycle": prob(cycle_b, col_b),
    }
    s_ab, succ_ab, f_ab = _strengths(probs["a_real"], probs["a_transfer"], probs["a_cycle"])
    s_ba, succ_ba, f_ba = _strengths(probs["b_real"], probs["b_transfer"], probs["b_cycle"])
    report = TransferReport(
        genres=[genre_a, genre_b],
        p_a_real=float(probs["a_real"].mean()),
        p_a_transfer=float(probs["a_transfer"].mean()),
        p_a_cycle=float(probs["a_cycle"].mean()),
        p_b_real=float(probs["b_real"].mean()),
        p_b_transfer=float(probs["b_transfer"].mean()),
        p_b_cycle=float(probs["b_cycle"].mean()),
        strength_ab=s_ab,
        strength_ba=s_ba,
        total_strength=float(total_strength(s_ab, s_ba)),
        success_ab=succ_ab,
        success_ba=succ_ba,
        filtered_strength_ab=f_ab,
        filtered_strength_ba=f_ba,
        sigma_c=float(eval_sigma_c),
        n_a=len(X_a),
        n_b=len(X_b),
        model_id=model_id,
    )
    if return_probabilities:
        return report, probs
    return report


def format_transfer_table(reports: dict[str, TransferReport]) -> str:
    """Side-by-side table: one column per report, rows A ... S_tot in percent."""
    names = list(reports)
    width = max(10, *(len(n) for n in names))
    lines = [" " * 9 + "".join(f"{n:>{width + 2}}" for n in names)]
    for i, label in enumerate(TransferReport.ROW_LABELS):
        vals = [reports[n].table_rows()[i][1] for n in names]
        lines.append(f"{label:<9}" + "".join(f"{100 * v:>{width + 1}.2f}%" for v in vals))
    return "\n".join(lines)


def format_classifier_table(reports: dict[str, ClassifierReport]) -> str:
    sigmas = next(iter(reports.values())).sigma_grid
    lines = ["sigma_C".ljust(20) + "".join(f"{s:>9g}" for s in sigmas)]
    for name, rep in reports.items():
        lines.append(name.ljust(20) + "".join(f"{100 * a:>8.2f}%" for a in rep.accuracies))
    return "\n".join(lines)
