"""CLI tests: subcommands, exit codes, output formats, evaluators."""

import csv
import random
import re

import numpy as np
import pytest

from deepasp.cli import (
    EXIT_EMPTY, EXIT_OK, EXIT_RESOURCE, EXIT_USAGE, FIXTURE_DIR,
    SudokuPipeline, best_assignments, bfs_distance, board_matrix,
    count_solutions, digits_conflict, evaluate_spath, evaluate_sudoku,
    flip_matrix, generate_board, generate_spath_instance, grid_edges, main,
    render_metrics_figures, spath_predict, synth_digit_data, write_metrics,
)

COIN_LP = str(FIXTURE_DIR / "coin.lp")
COIN_NET = str(FIXTURE_DIR / "coin_net.json")
COIN_OBS = str(FIXTURE_DIR / "coin.obs")


class TestSubcommands:
    def test_models_lists_both(self, capsys):
        rc = main(["models", "--program", COIN_LP, "--networks", COIN_NET])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        lines = [l for l in out.strip().splitlines()]
        assert len(lines) == 2
        assert "0.9" in out and "0.1" in out

    def test_models_csv(self, capsys, tmp_path):
        out_csv = tmp_path / "models.csv"
        rc = main([
            "models", "--program", COIN_LP, "--networks", COIN_NET,
            "--observations", COIN_OBS, "--out", str(out_csv),
        ])
        assert rc == EXIT_OK
        rows = list(csv.DictReader(open(out_csv)))
        assert rows[0].keys() == {
            "model_id", "probability", "satisfies_observation"
        }
        sats = sorted(r["satisfies_observation"] for r in rows)
        assert sats == ["0", "1"]

    def test_models_unsat_exit_1(self, capsys, tmp_path):
        prog = tmp_path / "u.lp"
        prog.write_text("p. :- p.")
        assert main(["models", "--program", str(prog)]) == EXIT_EMPTY

    def test_models_deterministic(self, capsys):
        main(["models", "--program", COIN_LP, "--networks", COIN_NET])
        a = capsys.readouterr().out
        main(["models", "--program", COIN_LP, "--networks", COIN_NET])
        assert capsys.readouterr().out == a

    def test_infer_twelve_significant_digits(self, capsys):
        rc = main([
            "infer", "--program", COIN_LP, "--networks", COIN_NET,
            "--observations", COIN_OBS,
        ])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        m = re.search(r"P\(O\) = ([\d.eE+-]+)", out)
        assert m and float(m.group(1)) == pytest.approx(0.9, abs=1e-12)
        assert "MAP" in out

    def test_infer_zero_probability_exit_1(self, capsys, tmp_path):
        obs = tmp_path / "o.obs"
        obs.write_text(":- not win.\n")
        prog = tmp_path / "p.lp"
        prog.write_text(
            "nn(coin(1,c),[heads,tails]). win :- coin(0,c,heads). :- win."
        )
        rc = main([
            "infer", "--program", str(prog), "--networks", COIN_NET,
            "--observations", str(obs),
        ])
        assert rc == EXIT_EMPTY

    def test_parse_error_exit_2(self, tmp_path, capsys):
        prog = tmp_path / "bad.lp"
        prog.write_text("p :- ")
        assert main(["models", "--program", str(prog)]) == EXIT_USAGE

    def test_usage_error_exit_2(self):
        assert main(["no-such-command"]) == EXIT_USAGE

    def test_resource_budget_exit_3(self, tmp_path, capsys):
        prog = tmp_path / "hard.lp"
        text = " ".join(f"{{p({i});q({i})}}1." for i in range(12)) + " " + (
            " ".join(f":- p({i}), q({i})." for i in range(12))
        )
        prog.write_text(text)
        rc = main(["models", "--program", str(prog), "--conflict-budget", "3"])
        assert rc == EXIT_RESOURCE

    def test_check_coherent(self, capsys):
        rc = main(["check", "--program", COIN_LP, "--networks", COIN_NET])
        assert rc == EXIT_OK
        assert "coherent" in capsys.readouterr().out

    def test_check_incoherent_exit_1(self, tmp_path, capsys):
        prog = tmp_path / "inc.lp"
        prog.write_text("nn(m(1,t),[0,1]). :- m(0,t,0).")
        rc = main(["check", "--program", str(prog)])
        assert rc == EXIT_EMPTY

    def test_sample_frequencies(self, capsys):
        rc = main([
            "sample", "--program", COIN_LP, "--networks", COIN_NET,
            "--samples", "400", "--seed", "5",
        ])
        out = capsys.readouterr().out
        assert rc == EXIT_OK
        freqs = [float(l.split("\t")[0]) for l in out.strip().splitlines()]
        assert sum(freqs) == pytest.approx(1.0)

    def test_dump_ground(self, tmp_path, capsys):
        dump = tmp_path / "g.lp"
        main([
            "models", "--program", COIN_LP, "--networks", COIN_NET,
            "--dump-ground", str(dump),
        ])
        assert "nn(coin" in dump.read_text()

    def test_learn_writes_metrics_weights_figures(self, tmp_path, capsys):
        manifest = tmp_path / "net.json"
        manifest.write_text(
            '{"name": "coin", "kind": "mlp", "input_dim": 1, "hidden": [],'
            ' "activation": "relu", "events": 1, "outcomes": 2,'
            ' "labels": ["heads", "tails"], "bindings": {"c": "vec:[1.0]"}}'
        )
        obs = tmp_path / "train.obs"
        obs.write_text(":- not win.\n\n:- not win.\n")
        metrics = tmp_path / "metrics.csv"
        weights = tmp_path / "w.bin"
        rc = main([
            "learn", "--program", COIN_LP, "--networks", str(manifest),
            "--observations", str(obs), "--epochs", "3", "--lr", "0.5",
            "--metrics", str(metrics), "--out", str(weights),
        ])
        assert rc == EXIT_OK
        rows = list(csv.reader(open(metrics)))
        assert rows[0] == ["run", "epoch", "metric", "value"]
        assert len(rows) == 4
        assert weights.exists()
        figs = list(tmp_path.glob("metrics_*.png"))
        assert len(figs) == 1


class TestMetricsHelpers:
    def test_write_and_render(self, tmp_path):
        path = tmp_path / "m.csv"
        write_metrics(path, [("r", 0, "label_acc", 0.5), ("r", 1, "label_acc", 0.9)])
        figures = render_metrics_figures(path)
        assert len(figures) == 1
        assert figures[0].exists()
        assert figures[0].suffix == ".png"


class TestSudokuHarness:
    def test_generated_board_unique(self):
        rng = random.Random(0)
        board = generate_board(rng)
        assert count_solutions(board["clues"]) == 1
        assert count_solutions([0] * 81, limit=2) == 2
        # the solution is consistent with the clues
        for pos, v in enumerate(board["clues"]):
            if v:
                assert board["solution"][pos] == v

    def test_digits_conflict(self):
        assert digits_conflict({(0, 0): 5, (0, 8): 5})
        assert digits_conflict({(0, 0): 5, (8, 0): 5})
        assert digits_conflict({(0, 0): 5, (1, 1): 5})
        assert not digits_conflict({(0, 0): 5, (1, 1): 6})
        assert not digits_conflict({(0, 0): 5, (8, 8): 5})

    def test_best_assignments_order(self):
        m = np.array([[0.6, 0.4], [0.9, 0.1]])
        got = list(best_assignments(m, cap=4))
        ps = [np.exp(lp) for _, lp in got]
        assert ps == sorted(ps, reverse=True)
        assert got[0][0] == (0, 0)
        assert len(got) == 4

    def test_pipeline_identifies_and_solves(self):
        rng_py = random.Random(1)
        rng = np.random.default_rng(1)
        pipeline = SudokuPipeline()
        board = generate_board(rng_py)
        matrix = board_matrix(board["clues"], 0.1, rng)
        pred = pipeline.identify(matrix, "solve")
        res = evaluate_sudoku([board], [pred], "solve", pipeline)
        assert res["acc_identify"] == 1.0
        assert res["acc_sol"] == 1.0

    def test_flip_repaired_by_constraints(self):
        rng_py = random.Random(2)
        rng = np.random.default_rng(2)
        pipeline = SudokuPipeline()
        board = generate_board(rng_py)
        matrix = flip_matrix(
            board_matrix(board["clues"], 0.05, rng), board, 2, rng_py
        )
        raw = pipeline.identify(matrix, "raw")
        fixed = pipeline.identify(matrix, "check")
        assert evaluate_sudoku([board], [raw], "raw")["acc_identify"] == 0.0
        assert evaluate_sudoku([board], [fixed], "raw")["acc_identify"] == 1.0


class TestSpathHarness:
    def test_grid_shape(self):
        edges = grid_edges()
        assert len(edges) == 24
        assert edges[0] == (0, 1)
        assert edges[-1] == (14, 15)

    def test_instance_keeps_endpoints_connected(self):
        rng = random.Random(0)
        for _ in range(5):
            inst = generate_spath_instance(rng)
            assert len(inst["removed"]) == 8
            edges = grid_edges()
            adj = {}
            for e, (x, y) in enumerate(edges):
                if e not in inst["removed"]:
                    adj.setdefault(x, []).append(y)
                    adj.setdefault(y, []).append(x)
            assert bfs_distance(adj, inst["source"], inst["target"]) is not None

    def test_evaluate_flags(self):
        rng = random.Random(1)
        inst = generate_spath_instance(rng)
        # a degree-3 junction fails p
        flags = evaluate_spath(inst, [0, 1, 3])
        assert not flags["p"]
        # a removed edge fails nr
        flags = evaluate_spath(inst, [inst["removed"][0]])
        assert not flags["nr"]

    def test_predicted_path_is_shortest(self):
        rng_py = random.Random(3)
        rng = np.random.default_rng(3)
        inst = generate_spath_instance(rng_py)
        noise = rng.random((24, 1))
        matrix = np.hstack([noise, 1 - noise])
        pred = spath_predict(inst, matrix)
        flags = evaluate_spath(inst, pred)
        assert flags["p"] and flags["r"] and flags["nr"] and flags["o"]


class TestSynthData:
    def test_deterministic(self):
        a, la = synth_digit_data(10, seed=4)
        b, lb = synth_digit_data(10, seed=4)
        assert np.array_equal(a, b) and np.array_equal(la, lb)

    def test_ranges(self):
        imgs, labels = synth_digit_data(50, seed=0)
        assert imgs.min() >= 0.0 and imgs.max() <= 1.0
        assert set(np.unique(labels)) <= set(range(10))
