import csv
import json

import numpy as np
import pytest
import yaml

from neuropathnet import cli
from neuropathnet import tensor as tn
from neuropathnet.dfc import read_paths
from neuropathnet.model import load_checkpoint

TINY = {
    "seed": 3,
    "scheme": "yeo7",
    "window": {"window_length": 30, "stride": 15},
    "model": {"d": 8, "heads": 2, "layers": 1, "dropout": 0.0},
    "train": {"epochs": 4, "batch_size": 8, "folds": 2, "patience": None, "learning_rate": 0.003},
    "synth": {"preset": "mixed_contrast", "gap": 1.2, "subjects_per_class": 6, "scan_length": 90},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return path


@pytest.fixture
def extracted(tmp_path, config):
    assert cli.main(["synth", "--config", str(config), "--out", str(tmp_path / "syn"), "-q"]) == 0
    assert cli.main(["extract", "--config", str(config), "--data", str(tmp_path / "syn"),
                     "--out", str(tmp_path / "ext"), "-q"]) == 0
    return tmp_path / "ext"


def _read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_synth_writes_all_subjects_deterministically(tmp_path, config):
    for name in ("a", "b"):
        assert cli.main(["synth", "--config", str(config), "--out", str(tmp_path / name), "-q"]) == 0
    files = sorted((tmp_path / "a" / "timeseries").glob("*.csv"))
    assert len(files) == 12
    for f in files:
        assert f.read_bytes() == (tmp_path / "b" / "timeseries" / f.name).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["seed"] == 3 and len(man["config_sha256"]) == 64
    assert "labels.csv" in man["outputs"]


def test_synth_rejects_infeasible_coupling(tmp_path, capsys):
    doc = dict(TINY, synth={
        "subjects_per_class": 2,
        "classes": [{"pairs": [{"pair": [1, 4], "kind": "constant", "value": 1.5}]}, {}],
    })
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(doc))
    assert cli.main(["synth", "--config", str(path), "--out", str(tmp_path / "o"), "-q"]) == 1
    assert "(1, 4)" in capsys.readouterr().err


def test_extract_produces_21_paths_and_matches_reload(tmp_path, extracted):
    files = sorted((extracted / "paths").glob("*.csv"))
    assert len(files) == 12
    from neuropathnet.dfc import WindowSpec, extract_paths, read_timeseries
    from neuropathnet.partitions import load_scheme
    ts = read_timeseries(tmp_path / "syn" / "timeseries" / files[0].name)
    fresh = extract_paths(ts, load_scheme("yeo7"), WindowSpec(30, 15))
    back = read_paths(files[0])
    assert len(back) == 21
    assert back.weights.tobytes() == fresh.weights.tobytes()


def test_extract_short_scan_names_subject(tmp_path, config, capsys):
    assert cli.main(["synth", "--config", str(config), "--set", "synth.scan_length=20",
                     "--out", str(tmp_path / "s"), "-q"]) == 0
    code = cli.main(["extract", "--config", str(config), "--data", str(tmp_path / "s"),
                     "--out", str(tmp_path / "e"), "-q"])
    assert code == 2
    assert "sub-0000" in capsys.readouterr().err


def test_train_eval_report_consistency(tmp_path, config, extracted):
    run = tmp_path / "run"
    assert cli.main(["train", "--config", str(config), "--data", str(extracted), "--out", str(run), "-q"]) == 0
    table = _read(run / "metrics.csv")
    assert table[0] == ["fold", "ACC", "AUC", "F1", "SEN", "SPE"]
    assert [r[0] for r in table[1:]] == ["0", "1", "mean", "std"]
    summary = json.loads((run / "summary.json").read_text())

    ev = tmp_path / "ev"
    assert cli.main(["eval", "--config", str(config), "--checkpoint", str(run / "model.ckpt"),
                     "--data", str(extracted), "--out", str(ev), "-q"]) == 0
    rows = _read(ev / "metrics.csv")
    assert rows[0] == ["ACC", "AUC", "F1", "SEN", "SPE"]
    got = dict(zip(rows[0], map(float, rows[1])))
    assert got == summary["final_train_metrics"]
    assert (ev / "representations.csv").read_bytes() == (run / "representations.csv").read_bytes()

    assert cli.main(["report", "--run", str(run), "-q"]) == 0
    sim = _read(run / "similarity.csv")
    m = np.array([[float(v) for v in r[2:]] for r in sim[1:]])
    assert m.shape == (12, 12)
    np.testing.assert_array_equal(m, m.T)
    np.testing.assert_array_equal(np.diag(m), 1.0)
    labels = [int(r[1]) for r in sim[1:]]
    assert labels == sorted(labels)


def test_train_is_bit_reproducible(tmp_path, config, extracted):
    for name in ("r1", "r2"):
        assert cli.main(["train", "--config", str(config), "--data", str(extracted),
                         "--out", str(tmp_path / name), "-q"]) == 0
    for f in ("metrics.csv", "cv_predictions.csv", "model.ckpt", "representations.csv", "summary.json"):
        assert (tmp_path / "r1" / f).read_bytes() == (tmp_path / "r2" / f).read_bytes(), f


def test_eval_missing_checkpoint(tmp_path, config, extracted, capsys):
    code = cli.main(["eval", "--config", str(config), "--checkpoint", str(tmp_path / "none.ckpt"),
                     "--data", str(extracted), "--out", str(tmp_path / "ev"), "-q"])
    assert code == 2
    assert "checkpoint not found" in capsys.readouterr().err


def test_ablate_rows_and_equality_with_plain_train(tmp_path, config, extracted):
    out = tmp_path / "abl"
    assert cli.main(["ablate", "--config", str(config), "--data", str(extracted), "--out", str(out), "-q"]) == 0
    rows = _read(out / "ablation.csv")
    assert [r[0] for r in rows[1:]] == ["PM", "PM+GE", "PM+GE+MHA", "PM+GE+MHA+TP"]
    assert cli.main(["train", "--config", str(config), "--data", str(extracted), "--out", str(tmp_path / "t"), "-q"]) == 0
    mean = _read(tmp_path / "t" / "metrics.csv")[-2]
    assert rows[-1][1:6] == mean[1:]


def test_gradcheck_passes_and_is_deterministic(tmp_path, capsys):
    assert cli.main(["gradcheck", "--out", str(tmp_path / "g1"), "-q"]) == 0
    first = capsys.readouterr().out
    assert cli.main(["gradcheck", "--out", str(tmp_path / "g2"), "-q"]) == 0
    assert capsys.readouterr().out == first
    assert "FAIL" not in first
    assert (tmp_path / "g1" / "gradcheck.csv").read_bytes() == (tmp_path / "g2" / "gradcheck.csv").read_bytes()


def test_gradcheck_reports_a_corrupted_backward(monkeypatch, capsys):
    real = tn.tanh

    def broken_tanh(a):
        out = real(a)
        inner = out._backward
        out._backward = lambda g: inner(g * 1.5)
        return out

    monkeypatch.setattr(tn, "tanh", broken_tanh)
    assert cli.main(["gradcheck", "-q"]) == 3
    out = capsys.readouterr().out
    assert "FAIL  tanh" in out


def test_precedence_cli_over_file_over_default(tmp_path, config, capsys):
    cfg, sources = cli.resolve_config(config, [("train.epochs", 9)])
    assert cfg["train"]["epochs"] == 9 and sources["train.epochs"] == "cli"
    assert cfg["model"]["d"] == 8 and sources["model.d"] == "file"
    assert cfg["model"]["fusion_layers"] == 1 and sources["model.fusion_layers"] == "default"
    cli.print_config(cfg, sources)
    err = capsys.readouterr().err
    assert "train.epochs" in err and "[cli]" in err


def test_usage_and_config_errors_exit_1(tmp_path, capsys):
    assert cli.main(["train", "--out", str(tmp_path), "--set", "model.heads=3", "-q"]) == 1
    assert cli.main(["train", "--out", str(tmp_path), "--set", "train.seed=1", "-q"]) == 1
    assert cli.main(["synth", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path), "-q"]) == 1
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 1


def test_nan_data_exits_2(tmp_path, extracted):
    f = sorted((extracted / "paths").glob("*.csv"))[0]
    lines = f.read_text().splitlines()
    parts = lines[2].split(",")
    parts[3] = "nan"
    lines[2] = ",".join(parts)
    f.write_text("\n".join(lines) + "\n")
    code = cli.main(["train", "--config", str(tmp_path / "run.yaml"), "--data", str(extracted),
                     "--out", str(tmp_path / "t"), "-q"])
    assert code in (2, 3)


def test_checkpoint_loads_after_train(tmp_path, config, extracted):
    run = tmp_path / "run"
    cli.main(["train", "--config", str(config), "--data", str(extracted), "--out", str(run), "-q"])
    model, meta = load_checkpoint(run / "model.ckpt")
    assert model.cfg.d == 8 and meta["seed"] == 3


def test_sweep_partitions_table(tmp_path, config):
    out = tmp_path / "sweep"
    assert cli.main(["sweep-partitions", "--config", str(config), "--set", "synth.subjects_per_class=4",
                     "--set", "train.epochs=1", "--out", str(out), "-q"]) == 0
    rows = _read(out / "partitions.csv")
    assert rows[0][:8] == ["scheme", "communities", "paths", "ACC", "AUC", "F1", "SEN", "SPE"]
    assert [(r[0], r[1], r[2]) for r in rows[1:]] == [("yeo7", "7", "21"), ("yeo17", "17", "136"),
                                                      ("schaefer100_10", "10", "45")]


def test_ablation_switches_bind_in_the_forward_pass():
    from dataclasses import replace
    from neuropathnet.model import ModelConfig, forward, init_params
    base = ModelConfig(d=8, heads=2, layers=1)
    w = np.random.default_rng(0).uniform(-1, 1, (2, 21, 5))
    seen = {}
    for label, switches in cli.ABLATION_ROWS:
        cfg = replace(base, **switches)
        trace = {}
        forward(w, init_params(cfg, 0), cfg, trace=trace)
        seen[label] = np.array_equal(trace["H_fused"], trace["H"])
    assert seen == {"PM": True, "PM+GE": False, "PM+GE+MHA": False, "PM+GE+MHA+TP": False}


def test_report_separates_classes_on_separable_data(tmp_path):
    doc = dict(TINY)
    doc["train"] = dict(TINY["train"], epochs=30, folds=2)
    doc["synth"] = dict(TINY["synth"], gap=1.6, subjects_per_class=10, scan_length=150)
    cfg = tmp_path / "sep.yaml"
    cfg.write_text(yaml.safe_dump(doc))
    for argv in (["synth", "--out", str(tmp_path / "s")],
                 ["extract", "--data", str(tmp_path / "s"), "--out", str(tmp_path / "e")],
                 ["train", "--data", str(tmp_path / "e"), "--out", str(tmp_path / "r")],
                 ["report", "--run", str(tmp_path / "r")]):
        assert cli.main([*argv, "--config", str(cfg), "-q"]) == 0
    summary = json.loads((tmp_path / "r" / "similarity_summary.json").read_text())
    assert summary["mean_within_class"] > summary["mean_between_class"]
    first = (tmp_path / "r" / "similarity.csv").read_bytes()
    assert cli.main(["report", "--run", str(tmp_path / "r"), "-q"]) == 0
    assert (tmp_path / "r" / "similarity.csv").read_bytes() == first
