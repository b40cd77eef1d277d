"""Command-line entry point: ``genretransfer <subcommand>``.

Subcommands: preprocess, train-classifier, train, sweep, transfer, evaluate,
classify, report, render.

``--config FILE`` reads a flat JSON object whose keys are option names
(``sigma_d`` or ``sigma-d``); flags given on the command line win. Every
subcommand that writes outputs also writes the fully resolved options to
``config.json`` in its output directory. Relative ``--out`` paths are placed
under ``$GENRETRANSFER_OUTPUT_ROOT`` when that variable is set.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training aborted.
"""

from __future__ import annotations

import itertools
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import midi_pipeline as mp
from .checkpoint import CheckpointError
from .genre_eval import (
    ClassifierReport,
    GenreClassifier,
    TransferReport,
    evaluate_model,
    format_classifier_table,
    format_transfer_table,
    train_classifier,
)
from .plotting import save_comparison, save_roll_png
from .sweep import SIGMA_GRID, sweep
from .trainer import VARIANTS, CycleGANTransfer, TrainConfig, TrainingAborted, transfer

logger = logging.getLogger("genretransfer")

EXIT_CONFIG, EXIT_DATA, EXIT_ABORT = 2, 3, 4
OUTPUT_ROOT_ENV = "GENRETRANSFER_OUTPUT_ROOT"
TEST_FRACTION = 0.1


class CLIError(click.ClickException):
    def __init__(self, message, exit_code):
        super().__init__(message)
        self.exit_code = exit_code


def config_error(msg):
    return CLIError(msg, EXIT_CONFIG)


def data_error(msg):
    return CLIError(msg, EXIT_DATA)


def _out_dir(out) -> Path:
    out = Path(out)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not out.is_absolute():
        out = Path(root) / out
    out.mkdir(parents=True, exist_ok=True)
    return out


def _freeze_config(out: Path, ctx: click.Context) -> None:
    params = {k: (str(v) if isinstance(v, Path) else list(v) if isinstance(v, tuple) else v)
              for k, v in ctx.params.items()}
    doc = {"command": ctx.info_name, **params}
    (out / "config.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise config_error(f"not a comma-separated list of numbers: {text!r}") from None


def load_balanced(data_dir, genre_a: str, genre_b: str, seed: int):
    """Balanced ``(ds_a, ds_b)`` for one genre pair.

    Uses the pre-balanced pair written by ``preprocess`` when present,
    otherwise balances the per-genre datasets with ``seed``.
    """
    data_dir = Path(data_dir)
    pair_dir = data_dir / "pairs" / f"{genre_a}__{genre_b}"
    try:
        if pair_dir.is_dir():
            return mp.load_dataset(pair_dir, genre_a), mp.load_dataset(pair_dir, genre_b)
        return mp.balance((mp.load_dataset(data_dir, genre_a), mp.load_dataset(data_dir, genre_b)), seed)
    except (FileNotFoundError, ValueError) as exc:
        raise data_error(str(exc)) from exc


def load_pair(data_dir, genre_a: str, genre_b: str, seed: int, test_fraction: float = TEST_FRACTION):
    """``(train_a, test_a, train_b, test_b)``: the balanced pair with a seeded held-out split."""
    a, b = load_balanced(data_dir, genre_a, genre_b, seed)
    try:
        train_a, test_a = mp.split_dataset(a, test_fraction, seed)
        train_b, test_b = mp.split_dataset(b, test_fraction, seed)
    except ValueError as exc:
        raise data_error(str(exc)) from exc
    return train_a, test_a, train_b, test_b


@click.group()
@click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False),
              help="Flat JSON file of option values; command-line flags override it.")
@click.option("-v", "--verbose", is_flag=True, help="Log progress (per-epoch losses).")
@click.pass_context
def cli(ctx, config_file, verbose):
    """Genre transfer for symbolic music with CycleGAN."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if config_file:
        try:
            values = json.loads(Path(config_file).read_text())
        except json.JSONDecodeError as exc:
            raise config_error(f"{config_file}: invalid JSON ({exc})") from exc
        if not isinstance(values, dict):
            raise config_error(f"{config_file}: expected a flat JSON object")
        values = {k.replace("-", "_"): v for k, v in values.items()}
        ctx.default_map = {name: values for name in cli.commands}


@cli.command()
@click.option("--genre", "genres", multiple=True, required=True, metavar="NAME=DIR",
              help="Genre name and directory of MIDI files; repeat per genre.")
@click.option("--out", default="data", show_default=True, type=click.Path(file_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--n-jobs", default=1, show_default=True, type=int)
@click.pass_context
def preprocess(ctx, genres, out, seed, n_jobs):
    """Filter, merge and rasterize MIDI corpora into phrase datasets."""
    parsed = {}
    for item in genres:
        name, sep, directory = item.partition("=")
        if not sep or not name or not directory:
            raise config_error(f"--genre expects NAME=DIR, got {item!r}")
        if not Path(directory).is_dir():
            raise data_error(f"{directory}: not a directory")
        parsed[name] = Path(directory)
    out = _out_dir(out)
    datasets, reports = {}, {}
    for name, directory in parsed.items():
        files = sorted(p for p in directory.rglob("*") if p.suffix.lower() in (".mid", ".midi"))
        ds, report = mp.build_corpus(files, name, n_jobs)
        reports[name] = report
        if not report["accepted"]:
            raise data_error(
                f"genre {name!r}: no accepted MIDI files in {directory} "
                f"(rejections: {report['rejection_counts'] or 'no files found'})"
            )
        mp.save_dataset(ds, out, report)
        datasets[name] = ds
        click.echo(f"{name}: {len(ds)} phrases from {len(report['accepted'])} files, "
                   f"{len(report['rejected'])} rejected {report['rejection_counts']}")
    for a, b in itertools.combinations(sorted(datasets), 2):
        if len(datasets[a]) and len(datasets[b]):
            ba, bb = mp.balance((datasets[a], datasets[b]), seed)
            pair_dir = out / "pairs" / f"{a}__{b}"
            mp.save_dataset(ba, pair_dir)
            mp.save_dataset(bb, pair_dir)
    _write_json(out / "corpus_report.json", reports)
    _freeze_config(out, ctx)


def _train_options(f):
    options = [
        click.option("--data", required=True, type=click.Path(exists=True, file_okay=False),
                     help="Dataset directory written by preprocess."),
        click.option("--genre-a", required=True),
        click.option("--genre-b", required=True),
        click.option("--genre-c", default=None, help="Third genre for the full variant's mixed set."),
        click.option("--lambda", "lambda_cycle", default=10.0, show_default=True, type=float),
        click.option("--gamma", "gamma_extra", default=1.0, show_default=True, type=float),
        click.option("--lr", "learning_rate", default=2e-4, show_default=True, type=float),
        click.option("--epochs", default=30, show_default=True, type=int),
        click.option("--batch-size", default=16, show_default=True, type=int),
        click.option("--seed", default=0, show_default=True, type=int),
        click.option("--width", default=64, show_default=True, type=int),
        click.option("--res-blocks", default=10, show_default=True, type=int),
        click.option("--disc-width", default=64, show_default=True, type=int),
        click.option("--no-early-stop", is_flag=True, help="Always run all epochs."),
    ]
    for opt in reversed(options):
        f = opt(f)
    return f


def _training_data(data, genre_a, genre_b, genre_c, variant, seed):
    train_a, test_a, train_b, test_b = load_pair(data, genre_a, genre_b, seed)
    parts = [train_a.phrases, train_b.phrases]
    labels = [genre_a] * len(train_a) + [genre_b] * len(train_b)
    domains = [genre_a, genre_b]
    if variant == "full":
        if not genre_c:
            raise config_error("the full variant needs --genre-c")
        try:
            c = mp.load_dataset(data, genre_c)
        except FileNotFoundError as exc:
            raise data_error(str(exc)) from exc
        parts.append(c.phrases)
        labels += [genre_c] * len(c)
        domains.append(genre_c)
    return np.concatenate(parts), np.array(labels), tuple(domains), (test_a, test_b)


@cli.command()
@_train_options
@click.option("--variant", type=click.Choice(VARIANTS), default="base", show_default=True)
@click.option("--sigma-d", default=0.0, show_default=True, type=float)
@click.option("--out", default="runs/train", show_default=True, type=click.Path(file_okay=False))
@click.pass_context
def train(ctx, data, genre_a, genre_b, genre_c, lambda_cycle, gamma_extra, learning_rate, epochs,
          batch_size, seed, width, res_blocks, disc_width, no_early_stop, variant, sigma_d, out):
    """Train one transfer model."""
    X, y, domains, _ = _training_data(data, genre_a, genre_b, genre_c, variant, seed)
    out = _out_dir(out)
    _freeze_config(out, ctx)
    est = CycleGANTransfer(
        variant=variant, sigma_d=sigma_d, lambda_cycle=lambda_cycle, gamma_extra=gamma_extra,
        learning_rate=learning_rate, batch_size=batch_size, max_epochs=epochs, width=width,
        n_res_blocks=res_blocks, disc_width=disc_width, stop_on_convergence=not no_early_stop,
        domains=domains, checkpoint_dir=str(out / "checkpoints"), random_state=seed,
    )
    try:
        est.fit(X, y)
    except TrainingAborted as exc:
        _write_json(out / "abort.json", {"error": str(exc), "record": exc.record})
        raise CLIError(f"training aborted: {exc} (diagnostics in {out / 'abort.json'})", EXIT_ABORT) from exc
    except ValueError as exc:
        raise config_error(str(exc)) from exc
    est.save(out / "model.npz", split_seed=seed, test_fraction=TEST_FRACTION)
    _write_json(out / "history.json", est.history_.to_list())
    last = est.history_[-1] if len(est.history_) else {}
    click.echo(f"trained {len(est.history_)} epochs; final losses: "
               + ", ".join(f"{k}={v:.4f}" for k, v in last.items() if k != "epoch"))


@cli.command("train-classifier")
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--genre-a", required=True)
@click.option("--genre-b", required=True)
@click.option("--epochs", default=10, show_default=True, type=int)
@click.option("--batch-size", default=16, show_default=True, type=int)
@click.option("--lr", "learning_rate", default=2e-4, show_default=True, type=float)
@click.option("--width", default=64, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default="runs/classifier", show_default=True, type=click.Path(file_okay=False))
@click.pass_context
def train_classifier_cmd(ctx, data, genre_a, genre_b, epochs, batch_size, learning_rate, width, seed, out):
    """Train the genre classifier used for evaluation (90/10 split)."""
    a, b = load_balanced(data, genre_a, genre_b, seed)
    out = _out_dir(out)
    _freeze_config(out, ctx)
    # same seeded split as load_pair, so the classifier never sees the transfer test split
    clf, report = train_classifier(a, b, 1.0 - TEST_FRACTION, seed, max_epochs=epochs, batch_size=batch_size,
                                   learning_rate=learning_rate, width=width)
    clf.save(out / "classifier.npz", report)
    _write_json(out / "classifier_report.json", report.to_dict())
    click.echo(format_classifier_table({f"{genre_a} vs. {genre_b}": report}))


@cli.command("sweep")
@_train_options
@click.option("--classifier", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--variants", default=",".join(VARIANTS), show_default=True)
@click.option("--sigma-grid", default=",".join(f"{s:g}" for s in SIGMA_GRID), show_default=True)
@click.option("--sigma-c", default=0.0, show_default=True, type=float)
@click.option("--out", default="runs/sweep", show_default=True, type=click.Path(file_okay=False))
@click.pass_context
def sweep_cmd(ctx, data, genre_a, genre_b, genre_c, lambda_cycle, gamma_extra, learning_rate, epochs,
              batch_size, seed, width, res_blocks, disc_width, no_early_stop, classifier, variants,
              sigma_grid, sigma_c, out):
    """Train and rank one model per (variant, sigma_D) cell."""
    variant_list = [v.strip() for v in variants.split(",") if v.strip()]
    bad = [v for v in variant_list if v not in VARIANTS]
    if bad or not variant_list:
        raise config_error(f"unknown variants {bad}; choose from {VARIANTS}")
    grid = _float_list(sigma_grid)
    train_a, test_a, train_b, test_b = load_pair(data, genre_a, genre_b, seed)
    sets = [train_a.phrases, train_b.phrases]
    if "full" in variant_list:
        if not genre_c:
            raise config_error("the full variant needs --genre-c")
        sets.append(mp.load_dataset(data, genre_c).phrases)
    clf = _load_classifier(classifier)
    template = TrainConfig(
        lambda_cycle=lambda_cycle, gamma_extra=gamma_extra, learning_rate=learning_rate, max_epochs=epochs,
        batch_size=batch_size, seed=seed, width=width, n_res_blocks=res_blocks, disc_width=disc_width,
        stop_on_convergence=not no_early_stop,
    )
    out = _out_dir(out)
    _freeze_config(out, ctx)
    result = sweep(sets, (test_a.phrases, test_b.phrases), clf, template, variant_list, grid,
                   (genre_a, genre_b), out, sigma_c)
    click.echo(format_sweep_grid(result))


def format_sweep_grid(result: dict) -> str:
    grid = result["sigma_grid"]
    by_cell = {(c["variant"], c["sigma_d"]): c for c in result["cells"]}
    lines = ["S_tot".ljust(10) + "".join(f"{'sd=' + format(s, 'g'):>10}" for s in grid)]
    for v in result["variants"]:
        row = []
        for s in grid:
            cell = by_cell.get((v, s))
            row.append(f"{100 * cell['total_strength']:>9.1f}%" if cell and cell["status"] == "ok" else f"{'failed':>10}")
        lines.append(v.ljust(10) + "".join(row))
    if result.get("best"):
        lines.append(f"best: {result['best']}")
    return "\n".join(lines)


def _load_classifier(path) -> GenreClassifier:
    try:
        return GenreClassifier.load(path)
    except (CheckpointError, ValueError, KeyError) as exc:
        raise data_error(f"{path}: {exc}") from exc


def _load_model(path) -> CycleGANTransfer:
    try:
        return CycleGANTransfer.load(path)
    except (CheckpointError, ValueError, KeyError) as exc:
        raise data_error(f"{path}: {exc}") from exc


@cli.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--direction", type=click.Choice(["a2b", "b2a"]), default="a2b", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Output .mid path.")
@click.option("--force", is_flag=True, help="Rasterize inputs that fail the 4/4 / first-beat filter.")
@click.option("--tempo", default=120.0, show_default=True, type=float)
@click.pass_context
def transfer_cmd(ctx, model_path, input_path, direction, out, force, tempo):
    """Transfer a MIDI file to the other genre and draw before/after piano rolls."""
    est = _load_model(model_path)
    ds, reason, _ = mp.process_file(input_path, force=force)
    if reason is not None:
        raise data_error(f"{input_path}: rejected ({reason}); use --force to transfer anyway")
    if len(ds) == 0:
        raise data_error(f"{input_path}: no non-empty 4-bar phrase")
    raw, after = transfer(est.model_, ds.phrases, direction)
    out = Path(out)
    if os.environ.get(OUTPUT_ROOT_ENV) and not out.is_absolute():
        out = Path(os.environ[OUTPUT_ROOT_ENV]) / out
    out.parent.mkdir(parents=True, exist_ok=True)
    mp.render_midi(after, tempo=tempo, path=out)
    stem = out.with_suffix("")
    save_roll_png(ds.phrases, f"{stem}_before.png")
    save_roll_png(after, f"{stem}_after.png")
    a, b = est.model_.genres
    src, dst = (a, b) if direction == "a2b" else (b, a)
    save_comparison({f"original ({src})": ds.phrases, f"transferred ({dst})": after}, f"{stem}_comparison.png")
    np.savez_compressed(f"{stem}_rolls.npz", before=ds.phrases, after=after, raw=raw.astype(np.float32))
    _freeze_config(out.parent, ctx)
    click.echo(f"wrote {out} ({len(after)} phrases, {src} -> {dst})")


@cli.command("evaluate")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--classifier", "classifier_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--sigma-c", default=0.0, show_default=True, type=float)
@click.option("--seed", default=None, type=int, help="Split seed; defaults to the model's training seed.")
@click.option("--out", default=None, type=click.Path(dir_okay=False), help="Write the report as JSON.")
@click.pass_context
def evaluate_cmd(ctx, model_path, classifier_path, data, sigma_c, seed, out):
    """Measure transfer strength on the held-out split."""
    est = _load_model(model_path)
    clf = _load_classifier(classifier_path)
    genre_a, genre_b = est.model_.genres
    split_seed = est.config_.seed if seed is None else seed
    _, test_a, _, test_b = load_pair(data, genre_a, genre_b, split_seed)
    try:
        report = evaluate_model(est, clf, test_a, test_b, eval_sigma_c=sigma_c, seed=split_seed)
    except ValueError as exc:
        raise config_error(str(exc)) from exc
    report.model_id = str(model_path)
    report.classifier_id = str(classifier_path)
    click.echo(format_transfer_table({Path(model_path).stem: report}))
    click.echo(f"success A->B: {report.success_ab:.2%}  B->A: {report.success_ba:.2%}")
    if out:
        out = Path(out)
        if os.environ.get(OUTPUT_ROOT_ENV) and not out.is_absolute():
            out = Path(os.environ[OUTPUT_ROOT_ENV]) / out
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(report.to_json() + "\n")
        _freeze_config(out.parent, ctx)


def _phrases_from_file(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        X = np.load(path, allow_pickle=False)
        if X.ndim == 2:
            X = X[None]
        return X
    if path.suffix == ".npz":
        with np.load(path, allow_pickle=False) as z:
            return z[z.files[0]]
    ds, reason, _ = mp.process_file(path, force=True)
    if reason is not None or len(ds) == 0:
        raise data_error(f"{path}: no phrases ({reason or 'too short'})")
    return ds.phrases


@cli.command()
@click.option("--classifier", "classifier_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="MIDI file or .npy phrase array.")
@click.option("--sigma-c", default=0.0, show_default=True, type=float)
def classify(classifier_path, input_path, sigma_c):
    """Print genre probabilities for every phrase of a file."""
    clf = _load_classifier(classifier_path)
    X = _phrases_from_file(input_path)
    try:
        proba = clf.predict_proba(X, sigma_c)
    except ValueError as exc:
        raise data_error(str(exc)) from exc
    classes = [str(c) for c in clf.classes_]
    doc = {
        "classes": classes,
        "phrases": [dict(zip(classes, map(float, row))) for row in proba],
        "mean": dict(zip(classes, map(float, proba.mean(axis=0)))),
        "predicted": classes[int(np.argmax(proba.mean(axis=0)))],
    }
    click.echo(json.dumps(doc, indent=2))


@cli.command()
@click.option("--input", "inputs", multiple=True, required=True, type=click.Path(),
              help="Sweep directory, evaluation report or classifier report; repeatable.")
def report(inputs):
    """Summarise run artifacts as tables."""
    missing = [p for p in inputs if not Path(p).exists()]
    if missing:
        raise data_error("missing artifacts: " + ", ".join(missing))
    files = []
    for p in map(Path, inputs):
        files += sorted(p.rglob("*.json")) if p.is_dir() else [p]
    sections = []
    transfer_reports = {}
    classifier_reports = {}
    for f in files:
        try:
            doc = json.loads(f.read_text())
        except (json.JSONDecodeError, UnicodeDecodeError):
            continue
        if isinstance(doc, dict) and "cells" in doc and "sigma_grid" in doc:
            sections.append(f"# sweep {f.parent}\n" + format_sweep_grid(doc))
        elif isinstance(doc, dict) and "total_strength" in doc and "p_a_real" in doc:
            transfer_reports[f.stem] = TransferReport.from_dict(doc)
        elif isinstance(doc, dict) and "accuracies" in doc and "test_accuracy" in doc:
            rep = ClassifierReport.from_dict(doc)
            classifier_reports[" vs. ".join(rep.genres) or f.stem] = rep
    if transfer_reports:
        sections.append("# transfer\n" + format_transfer_table(transfer_reports))
    if classifier_reports:
        sections.append("# classifier accuracy\n" + format_classifier_table(classifier_reports))
    if not sections:
        raise data_error("no artifacts found in " + ", ".join(inputs))
    click.echo("\n\n".join(sections))


@cli.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="MIDI file, .npy phrase array or rolls .npz.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--limit", default=4, show_default=True, type=int, help="Phrases shown in the comparison figure.")
@click.option("--midi", is_flag=True, help="Also render the phrases to MIDI.")
@click.option("--tempo", default=120.0, show_default=True, type=float)
@click.pass_context
def render(ctx, input_path, out, limit, midi, tempo):
    """Draw piano-roll images (and optionally MIDI) for phrases in a file."""
    out = _out_dir(out)
    stem = Path(input_path).stem
    path = Path(input_path)
    if path.suffix == ".npz":
        with np.load(path, allow_pickle=False) as z:
            rows = {k: z[k] for k in z.files if k != "raw"}
    else:
        rows = {stem: _phrases_from_file(path)}
    for name, X in rows.items():
        X = np.asarray(X)
        if X.ndim == 4:
            X = X[..., 0]
        rows[name] = mp.binarize(X) if X.dtype.kind == "f" else X.astype(np.uint8)
        save_roll_png(rows[name], out / f"{stem}_{name}.png")
        if midi:
            mp.render_midi(rows[name], tempo=tempo, path=out / f"{stem}_{name}.mid")
    save_comparison(rows, out / f"{stem}_comparison.png", max_phrases=limit)
    _freeze_config(out, ctx)
    click.echo(f"wrote images for {', '.join(rows)} to {out}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="genretransfer", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except CLIError as exc:
        exc.show()
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
