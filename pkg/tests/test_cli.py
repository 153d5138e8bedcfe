import json

import pytest

from conftest import write_shard_csv
from fedtrees.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_PROTOCOL, main
from fedtrees.forest import load_model
from fedtrees.synth import make_blobs


@pytest.fixture()
def blob_csv(tmp_path):
    shard = make_blobs(n=150, n_features=3, n_classes=2, seed=12)
    path = tmp_path / "blobs.csv"
    write_shard_csv(shard, path)
    return path


def _simulate_args(blob_csv, tmp_path, *extra):
    return [
        "simulate",
        "--data",
        str(blob_csv),
        "--label-column",
        "label",
        "--clients",
        "2",
        "--trees",
        "3",
        "--max-depth",
        "3",
        "--seed",
        "5",
        *extra,
    ]


class TestSimulateCommand:
    def test_writes_model_and_report(self, blob_csv, tmp_path, capsys):
        model = tmp_path / "model.json"
        report = tmp_path / "report.json"
        code = main(
            _simulate_args(blob_csv, tmp_path, "--out", str(model), "--report", str(report))
        )
        assert code == EXIT_OK
        assert model.exists() and report.exists()
        doc = json.loads(report.read_text())
        assert 0.0 <= doc["accuracy"] <= 1.0
        out = capsys.readouterr().out
        assert "privacy budget" in out

    def test_ldp_run_reports_epsilon(self, blob_csv, tmp_path, capsys):
        code = main(
            _simulate_args(blob_csv, tmp_path, "--privacy", "ldp", "--epsilon-node", "0.5")
        )
        assert code == EXIT_OK
        assert "epsilon =" in capsys.readouterr().out

    def test_unknown_config_key_names_it(self, blob_csv, tmp_path, capsys):
        cfg = tmp_path / "run.toml"
        cfg.write_text('label_column = "label"\nmystery_knob = 3\n')
        code = main(["simulate", "--config", str(cfg), "--data", str(blob_csv)])
        assert code == EXIT_CONFIG
        assert "mystery_knob" in capsys.readouterr().err

    def test_flag_overrides_config_file(self, blob_csv, tmp_path):
        cfg = tmp_path / "run.toml"
        cfg.write_text(
            f'dataset = "{blob_csv}"\nlabel_column = "label"\n'
            "trees = 2\nmax_depth = 2\nclients = 2\nseed = 5\n"
        )
        model = tmp_path / "model.json"
        code = main(
            ["simulate", "--config", str(cfg), "--trees", "4", "--out", str(model)]
        )
        assert code == EXIT_OK
        forest = load_model(model)
        assert len(forest.trees) == 4  # flag beat the file's 2
        assert forest.training_config["trees"] == 4

    def test_missing_dataset_setting(self, tmp_path, capsys):
        code = main(["simulate", "--label-column", "label"])
        assert code == EXIT_CONFIG
        assert "dataset" in capsys.readouterr().err

    def test_invalid_privacy_value_rejected_by_parser(self, blob_csv, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(_simulate_args(blob_csv, tmp_path, "--privacy", "secret"))
        assert exc.value.code == 2


class TestPredictCommand:
    def _trained_model(self, blob_csv, tmp_path):
        model = tmp_path / "model.json"
        assert main(_simulate_args(blob_csv, tmp_path, "--out", str(model))) == EXIT_OK
        return model

    def test_predict_writes_class_names(self, blob_csv, tmp_path):
        model = self._trained_model(blob_csv, tmp_path)
        features = tmp_path / "features.csv"
        lines = blob_csv.read_text().splitlines()
        features.write_text(
            "\n".join(",".join(line.split(",")[:-1]) for line in lines) + "\n"
        )
        out = tmp_path / "preds.txt"
        code = main(["predict", "--model", str(model), "--data", str(features), "--out", str(out)])
        assert code == EXIT_OK
        names = out.read_text().splitlines()
        assert len(names) == 150
        assert set(names) <= {"c0", "c1"}

    def test_predict_empty_input(self, blob_csv, tmp_path):
        model = self._trained_model(blob_csv, tmp_path)
        empty = tmp_path / "empty.csv"
        empty.write_text("x0,x1,x2\n")
        out = tmp_path / "preds.txt"
        code = main(["predict", "--model", str(model), "--data", str(empty), "--out", str(out)])
        assert code == EXIT_OK
        assert out.read_text() == ""

    def test_predict_column_mismatch_names_counts(self, blob_csv, tmp_path, capsys):
        model = self._trained_model(blob_csv, tmp_path)
        bad = tmp_path / "bad.csv"
        bad.write_text("1.0,2.0\n")
        out = tmp_path / "preds.txt"
        code = main(
            ["predict", "--model", str(model), "--data", str(bad), "--out", str(out), "--no-header"]
        )
        assert code == EXIT_IO
        err = capsys.readouterr().err
        assert "expected 3" in err and "got 2" in err

    def test_predict_missing_model(self, tmp_path, capsys):
        code = main(
            ["predict", "--model", str(tmp_path / "no.json"), "--data", "x", "--out", "y"]
        )
        assert code == EXIT_IO


class TestEvalCommand:
    def test_eval_labeled_csv(self, blob_csv, tmp_path, capsys):
        model = tmp_path / "model.json"
        assert main(_simulate_args(blob_csv, tmp_path, "--out", str(model))) == EXIT_OK
        code = main(
            ["eval", "--model", str(model), "--data", str(blob_csv), "--label-column", "label"]
        )
        assert code == EXIT_OK
        assert "accuracy" in capsys.readouterr().out


class TestSweepCommand:
    def test_sweep_clients_axis(self, blob_csv, tmp_path):
        out = tmp_path / "sweep.csv"
        code = main(
            [
                "sweep",
                "--axis",
                "clients",
                "--values",
                "1,2,3",
                "--data",
                str(blob_csv),
                "--label-column",
                "label",
                "--trees",
                "2",
                "--max-depth",
                "3",
                "--seed",
                "4",
                "--out",
                str(out),
            ]
        )
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0].startswith("clients,accuracy_mean")
        assert len(lines) == 4

    def test_sweep_trees_axis_single_tree_not_better_than_forest(self, tmp_path):
        # noisier clusters so a single tree actually pays for its variance
        shard = make_blobs(n=400, n_features=4, n_classes=3, spread=2.5, seed=21)
        csv_path = tmp_path / "noisy.csv"
        write_shard_csv(shard, csv_path)
        out = tmp_path / "sweep.csv"
        code = main(
            [
                "sweep",
                "--axis",
                "trees",
                "--values",
                "1,20",
                "--data",
                str(csv_path),
                "--label-column",
                "label",
                "--max-depth",
                "6",
                "--seed",
                "8",
                "--repeats",
                "3",
                "--out",
                str(out),
            ]
        )
        assert code == EXIT_OK
        rows = [line.split(",") for line in out.read_text().splitlines()[1:]]
        accuracy = {int(r[0]): float(r[1]) for r in rows}
        assert accuracy[1] <= accuracy[20] + 0.02

    def test_sweep_bad_values(self, blob_csv, capsys):
        code = main(
            [
                "sweep",
                "--axis",
                "trees",
                "--values",
                "1,x",
                "--data",
                str(blob_csv),
                "--label-column",
                "label",
            ]
        )
        assert code == EXIT_CONFIG


class TestNetworkCommands:
    def test_client_connection_refused(self, blob_csv, capsys):
        code = main(
            [
                "client",
                "--connect",
                "127.0.0.1:1",
                "--client-id",
                "0",
                "--data",
                str(blob_csv),
                "--label-column",
                "label",
                "--timeout",
                "1",
            ]
        )
        assert code == EXIT_IO

    def test_master_times_out_without_clients(self, capsys):
        code = main(
            ["master", "--listen", "127.0.0.1:0", "--clients", "1", "--timeout", "0.3"]
        )
        assert code == EXIT_PROTOCOL
        assert "0 of 1 clients" in capsys.readouterr().err

    def test_master_requires_listen(self, capsys):
        code = main(["master", "--clients", "1"])
        assert code == EXIT_CONFIG
