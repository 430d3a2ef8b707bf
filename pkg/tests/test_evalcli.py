import threading
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from fedkit.evalcli import (
    CrossEvalMatrix,
    default_config,
    load_config,
    parse_config,
    read_curves_csv,
    read_matrix_csv,
    write_curves_csv,
    write_curves_svg,
    write_matrix_csv,
    write_matrix_svg,
)
from fedkit.evalcli.cli import main
from fedkit.evalcli.experiment import merge_train_splits, run_seed, write_seed_outputs
from fedkit.simharness import build_silos

TINY_CONFIG = """\
[experiment]
name = tiny
seeds = 3
rounds = 2
val_fraction = 0.1
aggregation = weighted

[arch]
input_size = 8
channels = 1
num_classes = 4
stem_stride = 1
stages = 1x4

[optimizer]
learning_rate = 0.01
momentum = 0.9
max_grad_norm = 5.0

[silo:north]
abdomen = 6
brain = 6
femur = 6
thorax = 6
augmentation_factor = 2
train_fraction = 0.8
epochs_per_round = 1
batch_size = 4
device_class = cpu
speed_iters_per_s = 2.0

[silo:south]
abdomen = 6
brain = 6
femur = 6
augmentation_factor = 2
train_fraction = 0.5
epochs_per_round = 1
batch_size = 4
device_class = raspberry
speed_iters_per_s = 0.4
"""


@pytest.fixture(scope="module")
def tiny_config():
    return parse_config(TINY_CONFIG)


@pytest.fixture(scope="module")
def tiny_result(tiny_config):
    return run_seed(tiny_config, seed=3)


class TestConfig:
    def test_default_config_parses(self):
        cfg = default_config()
        assert cfg.silo_ids == ("spain", "malawi", "egypt", "uganda", "ghana", "algeria")
        assert cfg.rounds >= 1
        assert len(cfg.config_hash) == 64

    def test_silo_and_profile_fields(self, tiny_config):
        assert tiny_config.silo_ids == ("north", "south")
        south = tiny_config.silos[1]
        assert "thorax" not in south.class_counts
        assert tiny_config.profiles[1].device_class == "raspberry"
        assert tiny_config.profiles[1].train_fraction == 0.5

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text(TINY_CONFIG)
        cfg = load_config(path)
        assert cfg.name == "tiny"
        assert cfg.config_hash == parse_config(TINY_CONFIG).config_hash

    def test_seed_override(self, tiny_config):
        assert tiny_config.with_seeds((9,)).seeds == (9,)

    def test_bad_aggregation_rejected(self):
        bad = TINY_CONFIG.replace("aggregation = weighted", "aggregation = median")
        with pytest.raises(ValueError):
            parse_config(bad)


class TestReports:
    def _matrix(self):
        rng = np.random.default_rng(0)
        return CrossEvalMatrix(
            model_names=tuple(f"local-s{i}" for i in range(6)) + ("centralized", "federated"),
            silo_ids=tuple(f"s{i}" for i in range(6)),
            values=rng.uniform(0, 1, size=(8, 6)),
        )

    def test_matrix_csv_has_nine_lines_and_roundtrips(self, tmp_path):
        matrix = self._matrix()
        path = tmp_path / "matrix.csv"
        write_matrix_csv(matrix, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 9
        assert lines[0] == "model," + ",".join(matrix.silo_ids)
        loaded = read_matrix_csv(path)
        assert loaded.model_names == matrix.model_names
        assert np.allclose(loaded.values, matrix.values, atol=1e-6)

    def test_matrix_csv_byte_identical_on_rewrite(self, tmp_path):
        matrix = self._matrix()
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        write_matrix_csv(matrix, a)
        write_matrix_csv(matrix, b)
        assert a.read_bytes() == b.read_bytes()

    def test_matrix_svg_wellformed_with_48_cells(self, tmp_path):
        path = tmp_path / "matrix.svg"
        write_matrix_svg(self._matrix(), path)
        root = ET.parse(path).getroot()
        cells = [el for el in root.iter() if el.get("class") == "cell"]
        assert len(cells) == 48

    def test_curves_csv_and_svg(self, tmp_path):
        curves = {"centralized": [0.5, 0.8, 0.9], "federated": [0.4, 0.7, 0.85]}
        csv_path = tmp_path / "curves.csv"
        write_curves_csv(curves, csv_path)
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "round,centralized,federated"
        assert len(lines) == 4
        assert read_curves_csv(csv_path) == {
            "centralized": [0.5, 0.8, 0.9], "federated": [0.4, 0.7, 0.85]
        }
        svg_path = tmp_path / "curves.svg"
        write_curves_svg(curves, svg_path)
        root = ET.parse(svg_path).getroot()
        polylines = [el for el in root.iter() if el.get("class") == "curve"]
        assert len(polylines) == 2


class TestExperiment:
    def test_merged_training_set_size(self, tiny_config):
        silos = build_silos(list(tiny_config.silos), seed=3,
                            val_fraction=tiny_config.val_fraction)
        merged = merge_train_splits(silos, list(tiny_config.silo_ids))
        expected = sum(len(s.splits.train) for s in silos.values())
        assert len(merged) == expected
        assert len(merged.splits.train) == expected

    def test_eight_models_oh_wait_two_silos_make_four(self, tiny_result, tiny_config):
        # rows = one local per silo + centralized + federated
        assert tiny_result.matrix.model_names == ("local-north", "local-south",
                                                  "centralized", "federated")
        assert tiny_result.matrix.values.shape == (4, 2)

    def test_curves_have_round_per_point(self, tiny_result, tiny_config):
        assert len(tiny_result.curves["federated"]) == tiny_config.rounds
        assert len(tiny_result.curves["centralized"]) == tiny_config.rounds

    def test_deterministic_rerun(self, tiny_config, tiny_result):
        again = run_seed(tiny_config, seed=3)
        assert np.array_equal(again.matrix.values, tiny_result.matrix.values)
        assert again.curves == tiny_result.curves

    def test_seed_changes_results(self, tiny_config, tiny_result):
        other = run_seed(tiny_config, seed=4)
        assert not np.array_equal(other.matrix.values, tiny_result.matrix.values)

    def test_write_seed_outputs(self, tiny_config, tiny_result, tmp_path):
        files = write_seed_outputs(tiny_config, tiny_result, tmp_path)
        for name in ("matrix.csv", "matrix.svg", "curves.csv", "curves.svg",
                     "ledger.csv", "session.json"):
            assert (tmp_path / name).exists(), name


class TestCli:
    def test_experiment_command_and_determinism(self, tmp_path):
        cfg = tmp_path / "exp.ini"
        cfg.write_text(TINY_CONFIG)
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert main(["experiment", "--config", str(cfg), "--seed", "3", "--out", str(out_a)]) == 0
        assert main(["experiment", "--config", str(cfg), "--seed", "3", "--out", str(out_b)]) == 0
        assert (out_a / "matrix.csv").read_bytes() == (out_b / "matrix.csv").read_bytes()

    def test_sim_command(self, tmp_path, capsys):
        cfg = tmp_path / "exp.ini"
        cfg.write_text(TINY_CONFIG)
        out = tmp_path / "sim"
        assert main(["sim", "--config", str(cfg), "--seed", "3", "--out", str(out),
                     "--mode", "inline"]) == 0
        assert (out / "sim_report.csv").exists()
        assert (out / "stragglers.csv").exists()
        assert (out / "federated.weights").exists()
        assert (out / "session.json").exists()
        assert (out / "ledger.csv").exists()
        assert "slowest" in capsys.readouterr().out

    def test_profile_file_parsing(self, tmp_path):
        from fedkit.evalcli.cli import _load_profile_file

        path = tmp_path / "edge.ini"
        path.write_text(
            "[profile]\nclient_id = edge7\nepochs_per_round = 3\nbatch_size = 2\n"
            "train_fraction = 0.4\ndevice_class = raspberry\nspeed_iters_per_s = 0.3\n"
        )
        profile = _load_profile_file(path)
        assert profile.client_id == "edge7"
        assert (profile.epochs_per_round, profile.batch_size) == (3, 2)
        assert profile.device_class == "raspberry"

    def test_plot_command_regenerates_svgs(self, tmp_path):
        cfg = tmp_path / "exp.ini"
        cfg.write_text(TINY_CONFIG)
        out = tmp_path / "run"
        main(["experiment", "--config", str(cfg), "--seed", "3", "--out", str(out)])
        (out / "matrix.svg").unlink()
        assert main(["plot", "--out", str(out)]) == 0
        assert (out / "matrix.svg").exists()

    def test_plot_errors_when_nothing_to_plot(self, tmp_path):
        assert main(["plot", "--out", str(tmp_path)]) == 2

    def test_server_and_clients_over_tcp(self, tmp_path):
        cfg = tmp_path / "exp.ini"
        cfg.write_text(TINY_CONFIG)
        out = tmp_path / "dist"
        import socket

        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        addr = f"127.0.0.1:{port}"

        server_rc = {}

        def serve():
            server_rc["rc"] = main([
                "server", "--config", str(cfg), "--seed", "3",
                "--listen", addr, "--out", str(out / "server"),
            ])

        server_thread = threading.Thread(target=serve, daemon=True)
        server_thread.start()

        client_threads = []
        client_rcs = {}
        import time

        time.sleep(0.4)
        for cid in ("north", "south"):
            def run_client(cid=cid):
                client_rcs[cid] = main([
                    "client", "--config", str(cfg), "--seed", "3",
                    "--profile", cid, "--connect", addr,
                    "--out", str(out / cid),
                ])

            t = threading.Thread(target=run_client, daemon=True)
            t.start()
            client_threads.append(t)
        for t in client_threads:
            t.join(timeout=120.0)
        server_thread.join(timeout=120.0)
        assert server_rc["rc"] == 0
        assert client_rcs == {"north": 0, "south": 0}
        assert (out / "server" / "ledger.csv").exists()
        assert (out / "server" / "federated.weights").exists()
        assert (out / "north" / "north.weights").exists()
