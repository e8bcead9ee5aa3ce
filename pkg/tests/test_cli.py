import json
import shutil

import numpy as np
import pytest

from hybridecg import cli
from hybridecg.beatfile import read_beats
from hybridecg.metrics import TABLE_COLUMNS
from hybridecg.nn.layers import Conv1d
from hybridecg.nn.serialize import load_model
from hybridecg.synthetic import make_record
from hybridecg.wfdb_io import export_csv, write_record


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, data_dir):
    root = tmp_path_factory.mktemp("cli")
    db = root / "db"
    db.mkdir()
    for i in range(3):
        write_record(make_record(f"90{i}", n_beats=250, seed=20 + i), db)
    for ext in ("hea", "dat", "atr"):
        shutil.copy(data_dir / f"g102.{ext}", db)
    cfg = {"data_dir": "db", "beat_file": "beats.ecgb", "output_dir": "runs", "variant": "CNNef",
           "train": {"max_epochs": 2, "batch_size": 128}}
    (root / "tiny.json").write_text(json.dumps(cfg))
    return root


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def ingested(workspace):
    assert run("ingest", "--config", workspace / "tiny.json") == 0
    return workspace / "beats.ecgb"


@pytest.fixture(scope="module")
def trained(workspace, ingested):
    assert run("train", "--config", workspace / "tiny.json", "-q") == 0
    return workspace / "runs" / "CNNef.ecgm"


def test_ingest_skips_record_without_lead(workspace, ingested, capsys):
    assert run("ingest", "--config", workspace / "tiny.json", "-o", workspace / "again.ecgb") == 0
    out = capsys.readouterr()
    assert "warning: skipping g102" in out.err
    assert "3 records used, 1 skipped" in out.out
    beats, header = read_beats(ingested)
    assert sorted(set(beats.record_ids)) == ["900", "901", "902"]
    assert header["records"] == "900,901,902" and header["lead"] == "MLII"
    assert (workspace / "again.ecgb").read_bytes() == ingested.read_bytes()


def test_ingest_only_missing_lead_is_data_error(tmp_path, data_dir, capsys):
    for ext in ("hea", "dat", "atr"):
        shutil.copy(data_dir / f"g102.{ext}", tmp_path)
    assert run("ingest", tmp_path, "-o", tmp_path / "b.ecgb") == 2
    assert "has a MLII lead" in capsys.readouterr().err
    assert not (tmp_path / "b.ecgb").exists()


def test_ingest_missing_dir(tmp_path):
    assert run("ingest", tmp_path / "nope", "-o", tmp_path / "b.ecgb") == 2


def test_ingest_csv_fallback_same_schema(tmp_path, workspace, ingested):
    from hybridecg.wfdb_io import load_record
    csv_dir = tmp_path / "csv"
    csv_dir.mkdir()
    for name in ("900", "901", "902"):
        export_csv(load_record(workspace / "db", name), csv_dir / f"{name}.csv", "MLII")
    assert run("ingest", csv_dir, "-o", tmp_path / "c.csv") == 0
    a, _ = read_beats(ingested)
    b, header = read_beats(tmp_path / "c.csv")
    assert header["source"] == "csv"
    assert np.array_equal(a.labels, b.labels) and np.array_equal(a.beat_index, b.beat_index)
    assert np.allclose(a.windows, b.windows) and np.allclose(a.rr, b.rr)


def test_train_writes_deterministic_model(workspace, trained, tmp_path):
    net, meta = load_model(trained)
    assert net.variant == "CNNef" and meta["variant"] == "CNNef"
    assert meta["seeds"] == {"split": 0, "smote": 0, "train": 0, "noise": 0}
    assert len(set(meta["train_class_counts"])) == 1
    assert (workspace / "runs" / "CNNef_train_log.csv").exists()
    assert run("train", "--config", workspace / "tiny.json", "-q", "--out", tmp_path) == 0
    assert (tmp_path / "CNNef.ecgm").read_bytes() == trained.read_bytes()


def test_train_rr_variant_needs_rr(workspace, ingested, tmp_path):
    from hybridecg.beatfile import write_beats
    beats, header = read_beats(ingested)
    beats.rr = None
    write_beats(beats, tmp_path / "norr.ecgb", header)
    assert run("train", "--config", workspace / "tiny.json", "--beats", tmp_path / "norr.ecgb",
               "--out", tmp_path) == 1


def test_evaluate_table(workspace, trained, capsys):
    assert run("evaluate", trained, "--config", workspace / "tiny.json") == 0
    doc = json.loads((workspace / "runs" / "CNNef_test_eval.json").read_text())
    assert tuple(doc["table"]) == TABLE_COLUMNS
    assert doc["header"]["variant"] == "CNNef" and doc["header"]["partition"] == "test"
    assert all(0 <= v <= 1 for v in doc["table"].values())
    assert "CNNef: Accuracy" in capsys.readouterr().out
    assert (workspace / "runs" / "CNNef_test_eval.csv").exists()


def test_noise_sweep_zero_matches_evaluate(workspace, trained, tmp_path):
    assert run("evaluate", trained, "--config", workspace / "tiny.json", "--out", tmp_path) == 0
    assert run("noise-sweep", trained, "--config", workspace / "tiny.json", "--out", tmp_path,
               "--etas", "0") == 0
    doc = json.loads((tmp_path / "CNNef_test_eval.json").read_text())
    rows = [l for l in (tmp_path / "noise_sweep.csv").read_text().splitlines() if not l.startswith("#")]
    values = dict(zip(rows[0].split(","), rows[1].split(",")))
    assert float(values["accuracy"]) == doc["table"]["Accuracy"]
    assert float(values["f1"]) == doc["table"]["F1 Score"]


def test_noise_sweep_default_levels(workspace, trained, tmp_path):
    assert run("noise-sweep", trained, "--config", workspace / "tiny.json", "--out", tmp_path) == 0
    rows = [l for l in (tmp_path / "noise_sweep.csv").read_text().splitlines() if not l.startswith("#")][1:]
    etas = [float(r.split(",")[1]) for r in rows]
    assert etas == sorted(etas) and len(etas) == 10
    long_rows = (tmp_path / "noise_sweep_long.csv").read_text().splitlines()
    assert len([l for l in long_rows if not l.startswith("#")]) == 1 + 10 * 5


def test_gradcheck_exit_codes(monkeypatch, capsys):
    assert run("gradcheck") == 0
    capsys.readouterr()
    original = Conv1d.backward

    def broken(self, dout):
        dx = original(self, dout)
        self.grads["weight"] = self.grads["weight"] * 1.01
        return dx

    monkeypatch.setattr(Conv1d, "backward", broken)
    assert run("gradcheck") == 3
    assert "FAIL  Conv1d/weight" in capsys.readouterr().out


def test_usage_errors(tmp_path, capsys):
    assert run("bogus") == 1
    assert run("train", "--variant", "CNNz") == 1
    (tmp_path / "bad.json").write_text('{"varient": "CNN"}')
    assert run("train", "--config", tmp_path / "bad.json") == 1
    assert "varient" in capsys.readouterr().err
    assert run("evaluate", tmp_path / "missing.ecgm") == 2
    assert run("train", "--beats", tmp_path / "missing.ecgb") == 2
