import csv
import json
import subprocess
import sys

import pytest

from hinrep.cli import divergences, load_config, main
from hinrep.data_io import load_dataset, read_embeddings
from hinrep.errors import ConfigError
from hinrep.training import TrainConfig

SMALL_GEN = ["--legislators", "30", "--states", "5", "--terms", "2", "--governors", "5",
             "--presidents", "2", "--justices", "3", "--feature-dim", "8"]


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "small.json"
    assert main(["gen", "--out", str(path), "--seed", "1"] + SMALL_GEN) == 0
    return path


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "small.json"
    path.write_text(json.dumps({"d_hidden": 8, "n_layers": 1}))
    return path


def write_config(tmp_path, **kw):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(kw))
    return str(path)


# ---------------------------------------------------------------- gen


def test_gen_default_legislators_loads_and_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["gen", "--legislators", "200", "--seed", "1", "--out", str(a)]) == 0
    assert main(["gen", "--legislators", "200", "--seed", "1", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    hin, labels = load_dataset(a)
    assert hin.num_nodes == 322 and len(labels) > 0


def test_gen_rejects_noise_out_of_range(tmp_path, capsys):
    assert main(["gen", "--noise", "2.0", "--out", str(tmp_path / "x.json")]) == 2
    assert "noise" in capsys.readouterr().err
    assert not (tmp_path / "x.json").exists()


# ---------------------------------------------------------------- train


def test_train_defaults_write_a_run_with_100_epochs(tmp_path, small_data):
    out = tmp_path / "runs"
    assert main(["train", "--data", str(small_data), "--out", str(out)]) == 0
    (run,) = list(out.iterdir())
    lines = (run / "train_log.jsonl").read_text().splitlines()
    assert len(lines) == 100
    assert [json.loads(l)["epoch"] for l in lines] == list(range(100))
    for name in ("checkpoint.json", "config.json", "report.json", "meta.json"):
        assert (run / name).exists()
    report = json.loads((run / "report.json").read_text())
    assert 0 <= report["test"]["harmonic"]["accuracy"] <= 1
    assert json.loads((run / "config.json").read_text()) == TrainConfig().to_dict()


def test_train_with_zero_layers(tmp_path, small_data):
    cfg = write_config(tmp_path, n_layers=0, d_hidden=8)
    assert main(["train", "--data", str(small_data), "--config", cfg, "--epochs", "3",
                 "--out", str(tmp_path / "r")]) == 0
    (run,) = list((tmp_path / "r").iterdir())
    ckpt = json.loads((run / "checkpoint.json").read_text())
    assert not any(k.startswith("layers.") for k in ckpt["tensors"])


def test_train_missing_data_exits_3(tmp_path):
    assert main(["train", "--data", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 3


def test_train_bad_config_exits_2(tmp_path, small_data):
    assert main(["train", "--data", str(small_data), "--config",
                 write_config(tmp_path, lambda2=-1.0)]) == 2
    assert main(["train", "--data", str(small_data), "--config",
                 write_config(tmp_path, learning_rate=0.1)]) == 2
    assert main(["train", "--data", str(small_data), "--config", str(tmp_path / "nope.json")]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_blowup_exits_4(tmp_path, small_data, capsys):
    cfg = write_config(tmp_path, lr=1e200, d_hidden=8, n_layers=1)
    assert main(["train", "--data", str(small_data), "--config", cfg, "--epochs", "5",
                 "--out", str(tmp_path / "r")]) == 4
    assert "epoch" in capsys.readouterr().err


def test_train_log_is_byte_identical_across_runs(tmp_path, small_data, small_config):
    logs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["train", "--data", str(small_data), "--config", str(small_config),
                     "--epochs", "5", "--seed", "3", "--out", str(out)]) == 0
        (run,) = list(out.iterdir())
        logs.append((run / "train_log.jsonl").read_bytes())
    assert logs[0] == logs[1]


def test_divergences_printed_at_startup(tmp_path, small_data, small_config, capsys):
    main(["train", "--data", str(small_data), "--config", str(small_config), "--epochs", "1",
          "--out", str(tmp_path)])
    err = capsys.readouterr().err
    for key in ("lambda1", "lambda3", "activation", "q", "batch_size"):
        assert f"note: {key} =" in err


def test_load_config_overrides():
    assert load_config(None, seed=4, max_epochs=None).seed == 4
    keys = {k for k, *_ in divergences(TrainConfig(lambda1=0.01, lambda3=1.0))}
    assert "lambda1" not in keys and "lambda3" not in keys and "q" in keys
    with pytest.raises(ConfigError):
        load_config(None, d_hidden=0)


# ---------------------------------------------------------------- eval / export


@pytest.fixture(scope="module")
def balanced_data(tmp_path_factory):
    """A synthetic graph whose labels cycle through all five classes."""
    d = tmp_path_factory.mktemp("bal")
    raw = d / "raw.json"
    assert main(["gen", "--out", str(raw), "--legislators", "1000", "--states", "10",
                 "--coverage", "1.0", "--seed", "5"]) == 0
    doc = json.loads(raw.read_text())
    centers = (0.05, 0.175, 0.5, 0.825, 0.95)
    for k, rec in enumerate(doc["labels"]):
        rec["score"] = centers[k % 5]
    path = d / "balanced.json"
    path.write_text(json.dumps(doc))
    return path


def test_eval_untrained_model_is_at_chance(tmp_path, balanced_data, capsys):
    out = tmp_path / "rep.json"
    assert main(["eval", "--data", str(balanced_data), "--split", "test", "--out", str(out)]) == 0
    acc = json.loads(out.read_text())["harmonic"]["accuracy"]
    assert abs(acc - 0.2) <= 0.1, acc
    assert json.loads(capsys.readouterr().out)["split"] == "test"


def test_eval_and_export_from_a_run(tmp_path, small_data, small_config, capsys):
    runs = tmp_path / "runs"
    assert main(["train", "--data", str(small_data), "--config", str(small_config),
                 "--epochs", "5", "--out", str(runs)]) == 0
    (run,) = list(runs.iterdir())
    capsys.readouterr()
    assert main(["eval", "--data", str(small_data), "--run", str(run), "--split", "test"]) == 0
    report = json.loads(capsys.readouterr().out)
    stored = json.loads((run / "report.json").read_text())["test"]
    assert report["harmonic"] == stored["harmonic"]

    csv_path = tmp_path / "emb.csv"
    assert main(["export", "--data", str(small_data), "--run", str(run), "--out", str(csv_path),
                 "--group-by", "party,kind,label,random"]) == 0
    printed = capsys.readouterr().out
    for name in ("party", "kind", "label", "random"):
        assert f"DBI({name}) = " in printed
    ids, _, _, values = read_embeddings(csv_path)
    assert values.shape == (len(ids), 8)


def test_export_party_prints_dbi(tmp_path, small_data, small_config, capsys):
    assert main(["export", "--data", str(small_data), "--config", str(small_config),
                 "--out", str(tmp_path / "e.csv"), "--group-by", "party"]) == 0
    assert "DBI(party) = " in capsys.readouterr().out


def test_export_unknown_grouping_exits_2(tmp_path, small_data):
    assert main(["export", "--data", str(small_data), "--out", str(tmp_path / "e.csv"),
                 "--group-by", "color"]) == 2


def test_eval_feature_dim_mismatch_exits_3(tmp_path, small_data, small_config, balanced_data):
    runs = tmp_path / "runs"
    main(["train", "--data", str(small_data), "--config", str(small_config), "--epochs", "1",
          "--out", str(runs)])
    (run,) = list(runs.iterdir())
    assert main(["eval", "--data", str(balanced_data), "--run", str(run)]) == 3


# ---------------------------------------------------------------- gradcheck


def test_gradcheck_command_passes(tmp_path, capsys):
    out = tmp_path / "g.json"
    assert main(["gradcheck", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "PASS" in printed
    doc = json.loads(out.read_text())
    assert doc["passed"] and doc["worst"] < 1e-4


# ---------------------------------------------------------------- ablate


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_ablate_loss_and_layer_tables(tmp_path, small_data, small_config):
    out = tmp_path / "abl"
    assert main(["ablate", "--data", str(small_data), "--grid", "loss;layers", "--seeds", "0,1",
                 "--config", str(small_config), "--epochs", "2", "--workers", "1",
                 "--out", str(out)]) == 0
    rows = read_csv(out / "ablation.csv")
    loss_rows = [r for r in rows if r["axis"] == "loss"]
    layer_rows = [r for r in rows if r["axis"] == "layers"]
    assert [r["value"] for r in loss_rows] == ["L1", "L1+L2", "L1+L3", "L1+L2+L3"]
    assert [r["value"] for r in layer_rows] == ["0", "1", "2", "3", "4"]
    assert all(r["n_seeds"] == "2" for r in rows)
    assert len((out / "runs.jsonl").read_text().splitlines()) == 2 * 9


@pytest.mark.parametrize("grid", ["", "loss;loss", "bogus", "layers=-1", "edge_frac=1.5", "loss="])
def test_ablate_bad_grid_exits_2(tmp_path, small_data, grid):
    assert main(["ablate", "--data", str(small_data), "--grid", grid,
                 "--out", str(tmp_path / "a")]) == 2


# ---------------------------------------------------------------- process level


def test_module_entry_point_exit_codes(tmp_path):
    run = lambda *a: subprocess.run([sys.executable, "-m", "hinrep", *a], capture_output=True,
                                    text=True)
    ok = run("--version")
    assert ok.returncode == 0 and "0.1.0" in ok.stdout
    bad = run("train", "--data", str(tmp_path / "missing.json"))
    assert bad.returncode == 3 and "data error" in bad.stderr
    usage = run("frobnicate")
    assert usage.returncode == 2
