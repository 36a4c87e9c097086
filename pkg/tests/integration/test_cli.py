"""
Command-line integration tests.

Each test drives ``app.main.run`` with an argument list, the way the ``ladder``
console script does, and inspects the files and summary lines it produces.
"""

import json
from pathlib import Path

import pandas as pd
import pytest

from app.main import run

SIMULATE_ARGS = ["--n-men", "150", "--n-women", "150", "--seed", "5"]


def summary_line(capsys) -> dict:
    lines = [line for line in capsys.readouterr().out.splitlines() if line.strip()]
    return json.loads(lines[-1])


def simulate(out: Path, *extra: str) -> int:
    return run(["simulate", *SIMULATE_ARGS, *extra, "--out", str(out)])


class TestRank:
    """ladder rank"""

    def test_two_node_scores(self, two_node_files, tmp_path, capsys):
        """A single message m1 -> f1 scores 1 and 1.85."""
        out = tmp_path / "results"

        code = run(
            [
                "rank",
                "--users",
                str(two_node_files["users"]),
                "--messages",
                str(two_node_files["messages"]),
                "--alpha",
                "0.85",
                "--out",
                str(out),
            ]
        )

        assert code == 0
        table = pd.read_csv(out / "desirability.csv").set_index("user_id")
        assert table.loc["m1", "pagerank"] == pytest.approx(1.0)
        assert table.loc["f1", "pagerank"] == pytest.approx(1.85)
        summary = summary_line(capsys)
        assert summary["stage"] == "rank"
        assert summary["ranked"] == 2

    def test_missing_input_names_path(self, two_node_files, tmp_path, capsys):
        """A missing file exits nonzero and names the path."""
        missing = tmp_path / "nowhere" / "users.csv"

        code = run(
            [
                "rank",
                "--users",
                str(missing),
                "--messages",
                str(two_node_files["messages"]),
                "--out",
                str(tmp_path / "results"),
            ]
        )

        assert code == 2
        assert str(missing) in capsys.readouterr().err
        assert not (tmp_path / "results" / "desirability.csv").exists()

    def test_invalid_alpha(self, two_node_files, tmp_path):
        """Alpha outside [0, 1) is rejected before any output is written."""
        code = run(
            [
                "rank",
                "--users",
                str(two_node_files["users"]),
                "--messages",
                str(two_node_files["messages"]),
                "--alpha",
                "1.0",
                "--out",
                str(tmp_path / "results"),
            ]
        )

        assert code != 0
        assert not (tmp_path / "results").exists()


class TestSimulate:
    """ladder simulate"""

    def test_same_seed_gives_identical_files(self, tmp_path, capsys):
        """Two runs with one seed produce byte-identical outputs."""
        first, second = tmp_path / "a", tmp_path / "b"

        assert simulate(first) == 0
        assert simulate(second) == 0

        names = ["users.csv", "messages.csv", "latent_rank.csv", "ground_truth.json"]
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes()
        assert summary_line(capsys)["stage"] == "simulate"

    def test_thread_count_does_not_change_outputs(self, tmp_path):
        """One seed gives byte-identical files with one or four threads."""
        single, pooled = tmp_path / "single", tmp_path / "pooled"

        assert simulate(single, "--threads", "1") == 0
        assert simulate(pooled, "--threads", "4") == 0

        names = ["users.csv", "messages.csv", "latent_rank.csv", "ground_truth.json"]
        for name in names:
            assert (single / name).read_bytes() == (pooled / name).read_bytes()

    def test_simulated_market_feeds_pipeline(self, tmp_path, capsys):
        """Simulated CSVs go through ingest, gaps and fit."""
        market = tmp_path / "market"
        assert simulate(market) == 0
        inputs = [
            "--users",
            str(market / "users.csv"),
            "--messages",
            str(market / "messages.csv"),
        ]

        assert run(["ingest", *inputs, "--out", str(tmp_path / "ingest")]) == 0
        ingest = summary_line(capsys)
        assert ingest["users"] == 300
        assert ingest["same_sex"] == 0

        assert run(["gaps", *inputs, "--out", str(tmp_path / "gaps")]) == 0
        gaps = pd.read_csv(tmp_path / "gaps" / "gap_records.csv")
        assert gaps["gap"].between(-1, 1).all()
        assert summary_line(capsys)["records"] == len(gaps)

        code = run(
            [
                "fit",
                *inputs,
                "--model",
                "reply_by_length",
                "--out",
                str(tmp_path / "fit"),
            ]
        )
        assert code == 0
        fit = json.loads((tmp_path / "fit" / "fit_reply_by_length_male.json").read_text())
        assert fit["model"] == "reply_by_length"
        assert fit["converged"] is True
        assert (tmp_path / "fit" / "predicted_reply_by_length_male.csv").exists()


class TestDispatch:
    """Subcommand dispatch"""

    def test_unknown_subcommand(self, tmp_path):
        """An unknown subcommand exits nonzero."""
        assert run(["rerank", "--out", str(tmp_path)]) != 0

    def test_unknown_model(self, two_node_files, tmp_path):
        """fit rejects a model outside the catalogue."""
        code = run(
            [
                "fit",
                "--users",
                str(two_node_files["users"]),
                "--messages",
                str(two_node_files["messages"]),
                "--model",
                "height",
                "--out",
                str(tmp_path),
            ]
        )

        assert code != 0
