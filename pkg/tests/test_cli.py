from __future__ import annotations

import csv
import io
import json
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import yaml

from rank2s.cli import EXIT_INFEASIBLE, EXIT_INPUT_ERROR, EXIT_OK, main
from tests.fixtures import data_path, small_power_config


def run_cli(*argv: str) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def run_json(*argv: str) -> dict:
    code, out, err = run_cli(*argv)
    if code != EXIT_OK:
        raise AssertionError(f"exit {code}: {err}")
    return json.loads(out)


class TestTestCommand(unittest.TestCase):
    def test_exact_rank_test(self) -> None:
        payload = run_json(
            "test", str(data_path("x_example.txt")), str(data_path("y_example.txt")), "--null", "exact", "--no-cache"
        )

        self.assertAlmostEqual(payload["statistic_value"], 0.125)
        self.assertEqual(payload["p_value"], 1.0)
        self.assertEqual(payload["decision"], "accept")
        self.assertEqual(payload["method"], "T")
        self.assertEqual((payload["m"], payload["n"]), (2, 2))
        self.assertEqual(payload["schema_version"], "1")

    def test_cramer_von_mises_matches(self) -> None:
        payload = run_json(
            "test",
            str(data_path("x_example.txt")),
            str(data_path("y_example.txt")),
            "--statistic",
            "CvM",
            "--null",
            "exact",
            "--no-cache",
        )

        self.assertAlmostEqual(payload["statistic_value"], 0.125)

    def test_output_file(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            target = Path(td) / "outcome.json"
            run_json(
                "test",
                str(data_path("x_example.txt")),
                str(data_path("y_example.txt")),
                "--statistic",
                "W",
                "--output",
                str(target),
            )
            saved = json.loads(target.read_text(encoding="utf-8"))

        self.assertEqual(saved["method"], "Wilcoxon")
        self.assertEqual(saved["null_model"], "normal")

    def test_input_errors(self) -> None:
        x, y = str(data_path("x_example.txt")), str(data_path("y_example.txt"))
        cases = [
            ("test", str(data_path("missing.txt")), y),
            ("test", str(data_path("bad_column.txt")), y),
            ("test", x, y, "--alpha", "1.5"),
            ("test", x, y, "--statistic", "bogus"),
            ("test", x, y, "--null", "mc:oops"),
        ]
        for argv in cases:
            with self.subTest(argv=argv):
                code, _, err = run_cli(*argv, "--no-cache")
                self.assertEqual(code, EXIT_INPUT_ERROR)
                self.assertTrue(err.startswith("error:"))

    def test_unwritable_output_is_an_input_error(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            blocker = Path(td) / "plain_file"
            blocker.write_text("", encoding="utf-8")

            code, _, err = run_cli(
                "test",
                str(data_path("x_example.txt")),
                str(data_path("y_example.txt")),
                "--statistic",
                "W",
                "--output",
                str(blocker / "nested" / "outcome.json"),
            )

        self.assertEqual(code, EXIT_INPUT_ERROR)
        self.assertTrue(err.startswith("error:"))

    def test_parse_error_reports_the_line(self) -> None:
        _, _, err = run_cli("test", str(data_path("bad_column.txt")), str(data_path("y_example.txt")), "--no-cache")

        self.assertIn("bad_column.txt:3", err)

    def test_ties(self) -> None:
        x, y = str(data_path("x_ties.txt")), str(data_path("y_ties.txt"))

        code, _, err = run_cli("test", x, y, "--null", "exact", "--no-cache")
        self.assertEqual(code, EXIT_INPUT_ERROR)
        self.assertIn("midrank", err)

        payload = run_json("test", x, y, "--null", "exact", "--tie-policy", "midrank", "--no-cache")
        self.assertFalse(payload["metadata"]["distribution_free"])

    def test_infeasible_requests(self) -> None:
        x, y = str(data_path("x_example.txt")), str(data_path("y_example.txt"))

        code, _, _ = run_cli("test", x, y, "--statistic", "Energy", "--null", "exact", "--no-cache")
        self.assertEqual(code, EXIT_INFEASIBLE)


class TestMtestCommand(unittest.TestCase):
    def test_detects_shift(self) -> None:
        payload = run_json(
            "mtest",
            str(data_path("mv_normal_d2_x.csv")),
            str(data_path("mv_normal_d2_y_shift1.csv")),
            "--B",
            "199",
            "--seed",
            "3",
        )

        self.assertEqual(payload["method"], "TM")
        self.assertEqual(payload["decision"], "reject")
        self.assertEqual(payload["metadata"]["dimension"], 2)
        self.assertEqual(payload["seed"], 3)

    def test_same_file_twice(self) -> None:
        path = str(data_path("mv_normal_d2_x.csv"))

        payload = run_json("mtest", path, path, "--B", "199")

        self.assertGreaterEqual(payload["p_value"], 1.0 / 200.0)
        self.assertEqual(payload["decision"], "accept")

    def test_too_few_permutations(self) -> None:
        path = str(data_path("mv_normal_d2_x.csv"))

        code, _, _ = run_cli("mtest", path, path, "--B", "10")

        self.assertEqual(code, EXIT_INPUT_ERROR)


class TestNullAndCritvalCommands(unittest.TestCase):
    def test_null_table(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            target = Path(td) / "null.csv"
            payload = run_json("null", "--m", "2", "--n", "2", "--output", str(target), "--no-cache")
            with target.open("r", encoding="utf-8") as f:
                rows = list(csv.reader(f))

        self.assertEqual(payload["total"], 6)
        self.assertEqual(payload["support_size"], 2)
        self.assertAlmostEqual(payload["mean"], 5.0 / 24.0)
        self.assertEqual(rows[0], ["value", "probability", "upper_tail"])
        self.assertAlmostEqual(float(rows[1][2]), 1.0)
        self.assertAlmostEqual(float(rows[2][1]), 1.0 / 3.0)

    def test_exact_critical_value_is_cached(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            argv = ("critval", "--m", "7", "--n", "7", "--method", "exact", "--cache-dir", td)
            first = run_json(*argv)
            second = run_json(*argv)

        self.assertAlmostEqual(first["critical_value"], 0.4643, places=4)
        self.assertAlmostEqual(first["attained_size"], 0.049, delta=5e-4)
        self.assertFalse(first["cache_hit"])
        self.assertTrue(second["cache_hit"])
        self.assertEqual(first["critical_value"], second["critical_value"])

    def test_asymptotic_critical_value_caches_its_quantile(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            argv = (
                "critval",
                "--m",
                "50",
                "--n",
                "50",
                "--method",
                "asymptotic",
                "--d",
                "1",
                "--mixture-samples",
                "200000",
                "--cache-dir",
                td,
            )
            first = run_json(*argv)
            second = run_json(*argv)
            cached = (Path(td) / "mixture_quantiles.csv").exists()

        self.assertTrue(cached)
        self.assertFalse(first["cache_hit"])
        self.assertTrue(second["cache_hit"])
        self.assertEqual(first["critical_value"], second["critical_value"])
        self.assertAlmostEqual(first["critical_value"], first["mean"] + first["sd"] * first["quantile"])
        self.assertAlmostEqual(first["quantile"], 1.9313, delta=0.05)

    def test_infeasible_enumeration(self) -> None:
        code, _, err = run_cli(
            "critval", "--m", "30", "--n", "30", "--method", "exact", "--enumeration-cap", "1000", "--no-cache"
        )

        self.assertEqual(code, EXIT_INFEASIBLE)
        self.assertIn("cap", err)

    def test_asymptotic_needs_the_rank_statistic(self) -> None:
        code, _, _ = run_cli("critval", "--m", "5", "--n", "5", "--method", "asymptotic", "--statistic", "KS")

        self.assertEqual(code, EXIT_INFEASIBLE)


class TestPowerCommand(unittest.TestCase):
    def test_writes_csv_metadata_and_log(self) -> None:
        with tempfile.TemporaryDirectory() as td:
            root = Path(td)
            config_path = root / "tiny.yaml"
            config_path.write_text(yaml.safe_dump(small_power_config()), encoding="utf-8")
            out_dir = root / "out"

            code, out, _ = run_cli(
                "power", str(config_path), "--output-dir", str(out_dir), "--iterations", "120", "--no-cache"
            )
            metadata = json.loads((out_dir / "run_metadata.json").read_text(encoding="utf-8"))
            csv_exists = (out_dir / "power.csv").exists()
            log_text = (out_dir / "run.log").read_text(encoding="utf-8")

        self.assertEqual(code, EXIT_OK)
        self.assertTrue(csv_exists)
        self.assertEqual(metadata["iterations"], 120)
        self.assertEqual(len(metadata["config_file_hash"]), 64)
        self.assertIn("power study tiny", out)
        self.assertIn("wrote", log_text)

    def test_invalid_config_exits_with_input_error(self) -> None:
        cfg = small_power_config(iterations=10)
        with tempfile.TemporaryDirectory() as td:
            config_path = Path(td) / "bad.yaml"
            config_path.write_text(yaml.safe_dump(cfg), encoding="utf-8")

            code, _, err = run_cli("power", str(config_path), "--output-dir", str(Path(td) / "out"))

        self.assertEqual(code, EXIT_INPUT_ERROR)
        self.assertIn("study.iterations", err)


if __name__ == "__main__":
    unittest.main()
