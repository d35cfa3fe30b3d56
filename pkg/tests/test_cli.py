import json
import subprocess
import sys
import time

import numpy as np
import pytest

from fairmtl.cli import main
from fairmtl.data import load_csv
from fairmtl.mtl import MtlNetwork

TRAIN = {"network": {"hidden": [8], "repr_dim": 4}, "yoto": {"epochs": 3, "grid_size": 3}}


def write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def workspace(tmp_path):
    synth = write(tmp_path / "synth.json", {"n": 300, "d": 3, "seed": 5})
    train = write(tmp_path / "train.json", TRAIN)
    assert main(["synth", "--config", synth, "--out", str(tmp_path / "data.csv")]) == 0
    return tmp_path, synth, train


def test_synth_writes_header_plus_rows(workspace):
    tmp, _, _ = workspace
    assert len((tmp / "data.csv").read_text().splitlines()) == 301


def test_missing_config_exit_2(tmp_path, capsys):
    assert main(["synth", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "d.csv")]) == 2
    assert "nope.json" in capsys.readouterr().err


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["synth"])
    assert exc.value.code == 2


def test_invalid_config_value_exit_2(tmp_path):
    cfg = write(tmp_path / "s.json", {"noise": -1})
    assert main(["synth", "--config", cfg, "--out", str(tmp_path / "d.csv")]) == 2


def test_missing_data_exit_3(tmp_path):
    cfg = write(tmp_path / "t.json", TRAIN)
    assert main(["train", "--data", str(tmp_path / "none.csv"), "--config", cfg, "--out", str(tmp_path / "m.json")]) == 3


def test_bad_schema_exit_3(tmp_path, capsys):
    (tmp_path / "d.csv").write_text("x0,y1,y2\n1,2,1\n")
    code = main(["train", "--data", str(tmp_path / "d.csv"), "--out", str(tmp_path / "m.json")])
    assert code == 3
    assert "SchemaError" in capsys.readouterr().err


def test_full_chain_is_byte_identical(workspace):
    tmp, synth, train = workspace
    data = str(tmp / "data.csv")

    def run(tag):
        model, preds, cal = tmp / f"model{tag}.json", tmp / f"preds{tag}.csv", tmp / f"cal{tag}.json"
        report, table = tmp / f"report{tag}.json", tmp / f"table{tag}.txt"
        assert main(["synth", "--config", synth, "--out", str(tmp / f"data{tag}.csv")]) == 0
        assert main(["train", "--data", data, "--config", train, "--out", str(model)]) == 0
        assert main(["fairify", "--model", str(model), "--data", data, "--calibrator-out", str(cal),
                     "--out", str(preds)]) == 0
        assert main(["evaluate", "--predictions", str(preds), "--labels", data, "--table", str(table),
                     "--out", str(report)]) == 0
        return [p.read_bytes() for p in (tmp / f"data{tag}.csv", model, preds, cal, report, table)]

    first, second = run("a"), run("b")
    assert first == second
    assert first[0] == (tmp / "data.csv").read_bytes()


def test_fairify_rows_match_input(workspace):
    tmp, _, train = workspace
    data = str(tmp / "data.csv")
    main(["train", "--data", data, "--config", train, "--out", str(tmp / "m.json")])
    assert main(["fairify", "--model", str(tmp / "m.json"), "--data", data, "--lambda", "1.0,0.6",
                 "--out", str(tmp / "p.csv")]) == 0
    lines = (tmp / "p.csv").read_text().splitlines()
    assert len(lines) == 301
    assert lines[0] == "row,s,split,base_y1,base_y2,fair_y1,fair_y2"


def test_fairify_bad_lambda(workspace):
    tmp, _, train = workspace
    data = str(tmp / "data.csv")
    main(["train", "--data", data, "--config", train, "--out", str(tmp / "m.json")])
    args = ["fairify", "--model", str(tmp / "m.json"), "--data", data, "--out", str(tmp / "p.csv")]
    assert main(args + ["--lambda", "a,b"]) == 2
    assert main(args + ["--lambda", "1,-1"]) == 2


def test_reloaded_model_reproduces_predictions(workspace):
    tmp, _, train = workspace
    data = str(tmp / "data.csv")
    main(["train", "--data", data, "--config", train, "--out", str(tmp / "m.json")])
    net = MtlNetwork.from_json((tmp / "m.json").read_text())
    again = MtlNetwork.from_json(net.to_json())
    ds = load_csv(data)
    assert np.array_equal(net.predict(ds.X, ds.s, net.meta["lambda"]), again.predict(ds.X, ds.s, net.meta["lambda"]))


def test_evaluate_report_schema_and_table(workspace, capsys):
    tmp, _, train = workspace
    data = str(tmp / "data.csv")
    main(["train", "--data", data, "--config", train, "--out", str(tmp / "m.json")])
    main(["fairify", "--model", str(tmp / "m.json"), "--data", data, "--out", str(tmp / "p.csv")])
    cfg = write(tmp / "e.json", {"bootstrap": 20, "split": "test"})
    assert main(["evaluate", "--predictions", str(tmp / "p.csv"), "--labels", data, "--config", cfg,
                 "--out", str(tmp / "r.json")]) == 0
    report = json.loads((tmp / "r.json").read_text())
    assert set(report) == {"base", "fair"}
    assert set(report["fair"]["y2"]) == {"performance", "unfairness"}
    out = capsys.readouterr().out
    assert " ± " in out


def test_evaluate_empty_predictions_exit_3(workspace, capsys):
    tmp, _, _ = workspace
    (tmp / "p.csv").write_text("row,s,split,base_y1,fair_y1\n")
    code = main(["evaluate", "--predictions", str(tmp / "p.csv"), "--labels", str(tmp / "data.csv"),
                 "--out", str(tmp / "r.json")])
    assert code == 3
    assert "EmptyInput" in capsys.readouterr().err


def test_numerical_error_exit_4(workspace):
    tmp, _, _ = workspace
    cfg = write(tmp / "t.json", {"network": {"activation": "relu"}, "yoto": {"epochs": 3, "learning_rate": 1e6}})
    assert main(["train", "--data", str(tmp / "data.csv"), "--config", cfg, "--out", str(tmp / "m.json")]) == 4


def test_experiment_bundle(tmp_path):
    protocol = {
        "synth": {"n": 400, "d": 3},
        "network": {"hidden": [6], "repr_dim": 3},
        "yoto": {"epochs": 2, "grid_size": 2},
        "replications": 2,
        "missing_fractions": [0, 0.5],
    }
    cfg = write(tmp_path / "p.json", protocol)
    for out in ("a", "b"):
        assert main(["experiment", "--config", cfg, "--seed", "3", "--out", str(tmp_path / out)]) == 0
    for name in ("report.json", "table.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["seed"] == 3 and set(report["results"]) == {"0", "0.5"}


def test_train_5k_within_budget(tmp_path):
    synth = write(tmp_path / "s.json", {"n": 5000, "seed": 0})
    main(["synth", "--config", synth, "--out", str(tmp_path / "d.csv")])
    start = time.perf_counter()
    assert main(["train", "--data", str(tmp_path / "d.csv"), "--out", str(tmp_path / "m.json")]) == 0
    assert time.perf_counter() - start < 60


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fairmtl.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "experiment" in proc.stdout
