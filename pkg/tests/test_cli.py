import json

import numpy as np
import pytest
from click.testing import CliRunner

from genretransfer import cli as cli_mod
from genretransfer.cli import cli, main
from genretransfer.datasets import make_register_genres
from genretransfer.midi_pipeline import render_midi
from genretransfer.plotting import read_roll_png
from genretransfer.trainer import TrainingAborted
from midi_fixtures import meta_ts, notes, scale, write_midi

TINY = ["--width", "4", "--res-blocks", "1", "--disc-width", "4", "--batch-size", "8", "--epochs", "1"]


def run(*args, env=None):
    result = CliRunner().invoke(cli, [str(a) for a in args], env=env, catch_exceptions=False)
    return result


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """MIDI corpora for three register genres, preprocessed, plus a model and a classifier."""
    root = tmp_path_factory.mktemp("cli")
    for ds in make_register_genres(24, seed=2, with_c=True):
        d = root / "midi" / ds.genre.lower()
        for i in range(6):
            render_midi(ds.phrases[4 * i: 4 * i + 4], path=d / f"{ds.genre}{i}.mid")
    args = ["preprocess", "--out", root / "data"]
    for g in ("a", "b", "c"):
        args += ["--genre", f"{g}={root / 'midi' / g}"]
    res = run(*args)
    assert res.exit_code == 0, res.output
    res = run("train", "--data", root / "data", "--genre-a", "a", "--genre-b", "b", "--out", root / "model", *TINY)
    assert res.exit_code == 0, res.output
    res = run("train-classifier", "--data", root / "data", "--genre-a", "a", "--genre-b", "b", "--width", "4",
              "--epochs", "2", "--out", root / "clf")
    assert res.exit_code == 0, res.output
    return root


def test_preprocess_outputs(workspace):
    data = workspace / "data"
    for g in ("a", "b", "c"):
        assert np.load(data / f"{g}.npy").shape == (24, 64, 84)
    assert (data / "pairs" / "a__b" / "a.npy").exists()
    report = json.loads((data / "corpus_report.json").read_text())
    assert report["a"]["n_phrases"] == 24 and report["a"]["rejected"] == {}
    assert json.loads((data / "config.json").read_text())["command"] == "preprocess"


def test_train_outputs(workspace):
    out = workspace / "model"
    assert (out / "model.npz").exists() and (out / "checkpoints" / "final.npz").exists()
    assert len(json.loads((out / "history.json").read_text())) == 1
    frozen = json.loads((out / "config.json").read_text())
    assert frozen["variant"] == "base" and frozen["epochs"] == 1


def test_evaluate(workspace, tmp_path):
    res = run("evaluate", "--model", workspace / "model" / "model.npz", "--classifier", workspace / "clf" / "classifier.npz",
              "--data", workspace / "data", "--out", tmp_path / "eval.json")
    assert res.exit_code == 0, res.output
    assert "S_tot" in res.output
    rep = json.loads((tmp_path / "eval.json").read_text())
    assert rep["n_a"] == rep["n_b"] == 2  # 10% of 24, held out with the training seed


def test_transfer(workspace, tmp_path):
    src = workspace / "midi" / "a" / "A0.mid"
    out = tmp_path / "song_b.mid"
    res = run("transfer", "--model", workspace / "model" / "model.npz", "--input", src, "--out", out)
    assert res.exit_code == 0, res.output
    rolls = np.load(tmp_path / "song_b_rolls.npz")
    assert rolls["before"].shape == rolls["after"].shape == (4, 64, 84)
    before_png = read_roll_png(tmp_path / "song_b_before.png")
    assert np.array_equal(before_png, rolls["before"].reshape(-1, 84))
    assert np.array_equal(read_roll_png(tmp_path / "song_b_after.png"), rolls["after"].reshape(-1, 84))
    assert (tmp_path / "song_b_comparison.png").exists() and out.exists()


def test_transfer_rejects_unless_forced(workspace, tmp_path):
    waltz = write_midi(tmp_path / "waltz.mid", [[meta_ts(3, 4)] + notes(scale(32))])
    args = ["transfer", "--model", workspace / "model" / "model.npz", "--input", waltz, "--out", tmp_path / "o.mid"]
    res = run(*args)
    assert res.exit_code == 3 and "not_4_4" in res.output
    assert run(*args, "--force").exit_code == 0


def test_classify(workspace):
    res = run("classify", "--classifier", workspace / "clf" / "classifier.npz", "--input", workspace / "data" / "b.npy")
    assert res.exit_code == 0, res.output
    doc = json.loads(res.output)
    assert len(doc["phrases"]) == 24 and doc["classes"] == ["a", "b"]
    assert abs(sum(doc["mean"].values()) - 1) < 1e-6


def test_sweep_and_report(workspace, tmp_path):
    res = run("sweep", "--data", workspace / "data", "--genre-a", "a", "--genre-b", "b", "--genre-c", "c",
              "--classifier", workspace / "clf" / "classifier.npz", "--variants", "base,full", "--sigma-grid", "0,1",
              "--out", tmp_path / "sweep", *TINY)
    assert res.exit_code == 0, res.output
    report = json.loads((tmp_path / "sweep" / "sweep_report.json").read_text())
    assert len(report["cells"]) == 4
    res = run("report", "--input", tmp_path / "sweep", "--input", workspace / "clf")
    assert res.exit_code == 0, res.output
    assert "sd=1" in res.output and "classifier accuracy" in res.output


def test_report_errors(tmp_path):
    res = run("report", "--input", tmp_path / "nope")
    assert res.exit_code == 3 and "missing" in res.output
    (tmp_path / "empty").mkdir()
    res = run("report", "--input", tmp_path / "empty")
    assert res.exit_code == 3 and "no artifacts" in res.output


def test_render(workspace, tmp_path):
    res = run("render", "--input", workspace / "data" / "a.npy", "--out", tmp_path, "--midi", "--limit", "2")
    assert res.exit_code == 0, res.output
    assert np.array_equal(read_roll_png(tmp_path / "a_a.png"), np.load(workspace / "data" / "a.npy").reshape(-1, 84))
    assert (tmp_path / "a_a.mid").exists() and (tmp_path / "a_comparison.png").exists()


def test_config_file_and_override(workspace, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sigma-d": 0.5, "epochs": 3, "width": 4, "res_blocks": 1, "disc_width": 4, "batch_size": 8}))
    res = run("--config", cfg, "train", "--data", workspace / "data", "--genre-a", "a", "--genre-b", "b",
              "--epochs", "1", "--out", tmp_path / "m")
    assert res.exit_code == 0, res.output
    frozen = json.loads((tmp_path / "m" / "config.json").read_text())
    assert frozen["sigma_d"] == 0.5 and frozen["epochs"] == 1 and frozen["width"] == 4


def test_output_root_env(workspace, tmp_path):
    res = run("render", "--input", workspace / "data" / "a.npy", "--out", "imgs", env={"GENRETRANSFER_OUTPUT_ROOT": str(tmp_path)})
    assert res.exit_code == 0 and (tmp_path / "imgs" / "a_a.png").exists()


@pytest.mark.parametrize("args, code", [
    (["preprocess", "--genre", "nodir"], 2),
    (["preprocess", "--genre", "x=/does/not/exist"], 3),
    (["train", "--data", ".", "--genre-a", "a", "--genre-b", "b", "--variant", "nope"], 2),
])
def test_error_codes(args, code):
    assert main(args) == code


def test_full_variant_needs_genre_c(workspace):
    assert main(["train", "--data", str(workspace / "data"), "--genre-a", "a", "--genre-b", "b", "--variant", "full"]) == 2


def test_missing_genre_is_data_error(workspace):
    assert main(["train", "--data", str(workspace / "data"), "--genre-a", "a", "--genre-b", "zzz"]) == 3


def test_bad_config_json(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["--config", str(bad), "report", "--input", str(tmp_path)]) == 2


def test_preprocess_no_accepted_files(tmp_path):
    d = tmp_path / "waltzes"
    d.mkdir()
    write_midi(d / "w.mid", [[meta_ts(3, 4)] + notes(scale(32))])
    assert main(["preprocess", "--genre", f"w={d}", "--out", str(tmp_path / "o")]) == 3


def test_training_abort_exit_code(workspace, tmp_path, monkeypatch):
    def boom(self, X, y, callback=None):
        raise TrainingAborted("non-finite generator loss", {"gen": float("nan"), "epoch": 1})

    monkeypatch.setattr(cli_mod.CycleGANTransfer, "fit", boom)
    code = main(["train", "--data", str(workspace / "data"), "--genre-a", "a", "--genre-b", "b",
                 "--out", str(tmp_path / "m")])
    assert code == 4
    assert json.loads((tmp_path / "m" / "abort.json").read_text())["record"]["epoch"] == 1
