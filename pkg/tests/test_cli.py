import csv
import json
import shutil

import pytest

from pielab import plots
from pielab.cli import EXIT_CONFIG, EXIT_MISSING, EXIT_NUMERIC, EXIT_OK, main

from conftest import TINY_CONFIG


@pytest.fixture
def run_copy(tiny_run, tmp_path):
    dest = tmp_path / "tiny"
    shutil.copytree(tiny_run, dest)
    return dest


def _write_config(path, **overrides):
    path.write_text(json.dumps({**TINY_CONFIG, **overrides}))
    return path


def test_gen_corpus(tmp_path, capsys):
    spec = tmp_path / "syn.json"
    spec.write_text(json.dumps({"n_train": 30, "n_validation": 10, "n_test": 10}))
    assert main(["gen-corpus", "--config", str(spec), "--out", str(tmp_path / "c"),
                 "--seed", "4"]) == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "c").iterdir()) == [
        "manifest.json", "test.jsonl", "train.jsonl", "validation.jsonl"]
    spec.write_text(json.dumps({"n_trian": 30}))
    assert main(["gen-corpus", "--config", str(spec), "--out", str(tmp_path / "d")]) == EXIT_CONFIG
    assert "n_trian" in capsys.readouterr().err


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = _write_config(tmp_path / "c.json", thresholdz=[0.5])
    assert main(["prune-exp", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "thresholdz" in capsys.readouterr().err
    cfg = _write_config(tmp_path / "c.json", pruners=[
        {"scoring": "random", "schedule": "iterative", "tuning": "rewind"}])
    assert main(["prune-exp", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "rewind" in capsys.readouterr().err
    assert not (tmp_path / "tiny").exists()


def test_missing_inputs_exit_3(tmp_path, run_copy, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.json")]) == EXIT_MISSING
    assert main(["pies", "--run", str(tmp_path / "nowhere")]) == EXIT_MISSING
    for name in ("pies.csv", "influence_bins.csv"):
        (run_copy / name).unlink()
    assert main(["report", "--run", str(run_copy)]) == EXIT_MISSING
    err = capsys.readouterr().err
    assert "pies.csv" in err and "influence_bins.csv" in err


def test_nan_predictions_exit_4(run_copy, capsys):
    path = run_copy / "RP-AI_0.5" / "init_0" / "predictions_test.csv"
    lines = path.read_text().splitlines()
    cells = lines[1].split(",")
    cells[1] = "nan"
    lines[1] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    assert main(["pies", "--run", str(run_copy)]) == EXIT_NUMERIC
    assert "NaN" in capsys.readouterr().err


def test_corpus_path_from_data_root(tmp_path, monkeypatch):
    assert main(["gen-corpus", "--out", str(tmp_path / "data" / "mini"), "--config",
                 str(_write_syn(tmp_path))]) == EXIT_OK
    cfg = _write_config(tmp_path / "c.json", corpus={"path": "mini"}, pruners=["MP-AI"],
                        thresholds=[0.5], n_initializations=1, epochs=1)
    monkeypatch.chdir(tmp_path)
    assert main(["train", "--config", str(cfg), "--out", "out"]) == EXIT_CONFIG
    monkeypatch.setenv("PIELAB_DATA", str(tmp_path / "data"))
    assert main(["train", "--config", str(cfg), "--out", "out"]) == EXIT_OK
    assert (tmp_path / "out" / "tiny" / "unpruned" / "init_0" / "run.json").exists()
    assert not (tmp_path / "out" / "tiny" / "MP-AI_0.5").exists()


def _write_syn(tmp_path):
    p = tmp_path / "syn.json"
    p.write_text(json.dumps({"n_train": 40, "n_validation": 10, "n_test": 20}))
    return p


def test_analysis_commands_are_idempotent(run_copy, capsys):
    before = {p.name: p.read_bytes() for p in run_copy.glob("*.csv")}
    for cmd in ("pies", "influence", "readability", "report"):
        assert main([cmd, "--run", str(run_copy)]) == EXIT_OK
    after = {p.name: p.read_bytes() for p in run_copy.glob("*.csv")}
    assert before == after
    assert sorted(p.name for p in (run_copy / "figures").iterdir()) == sorted(plots.FIGURES)


def test_report_bundle_single_threshold(tmp_path):
    cfg = _write_config(tmp_path / "c.json", thresholds=[0.9], pruners=["MP-AI"],
                        n_initializations=2, epochs=1, name="one")
    assert main(["prune-exp", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    run = str(tmp_path / "one")
    for cmd in ("pies", "influence", "readability", "report"):
        assert main([cmd, "--run", run]) == EXIT_OK
    for name in plots.FIGURES:
        text = (tmp_path / "one" / "figures" / name).read_text()
        assert text.startswith("<?xml") and "<svg" in text


def test_plotted_numbers_are_csv_numbers(run_copy, monkeypatch):
    import matplotlib.axes

    seen = []
    real_plot, real_bar = matplotlib.axes.Axes.plot, matplotlib.axes.Axes.bar

    def plot(self, x, y, *a, **k):
        seen.extend(float(v) for v in y)
        return real_plot(self, x, y, *a, **k)

    def bar(self, x, h, *a, **k):
        seen.extend(float(v) for v in h)
        return real_bar(self, x, h, *a, **k)

    monkeypatch.setattr(matplotlib.axes.Axes, "plot", plot)
    monkeypatch.setattr(matplotlib.axes.Axes, "bar", bar)
    plots.report(run_copy)
    cells = set()
    for p in run_copy.glob("*.csv"):
        with p.open() as fh:
            for row in csv.reader(fh):
                for c in row:
                    try:
                        cells.add(float(c))
                    except ValueError:
                        pass
    assert seen and all(v in cells for v in seen)


def test_figures_are_deterministic(run_copy, tmp_path):
    plots.report(run_copy)
    first = {p.name: p.read_bytes() for p in (run_copy / "figures").iterdir()}
    plots.report(run_copy)
    assert first == {p.name: p.read_bytes() for p in (run_copy / "figures").iterdir()}
