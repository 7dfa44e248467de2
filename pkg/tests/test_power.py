from __future__ import annotations

import copy
import csv
import json
import tempfile
import unittest
from pathlib import Path

import pytest

from rank2s.errors import ConfigValidationError
from rank2s.inference import NullModelKind
from rank2s.sim.power import (
    POWER_CSV_HEADER,
    PowerCell,
    PowerStudyConfig,
    run_power_study,
    write_power_outputs,
)
from rank2s.utils.config import load_yaml_config
from tests.fixtures import CONFIG_DIR, small_power_config

DESK_CONFIGS = ["location_normal", "location_t3", "location_pareto", "univariate_scale", "mv_location", "mv_scatter"]


class TestPowerStudyConfig(unittest.TestCase):
    def test_parses_small_config(self) -> None:
        config = PowerStudyConfig.from_mapping(small_power_config())

        self.assertEqual(config.name, "tiny")
        self.assertEqual([t.label for t in config.tests], ["W", "KS"])
        self.assertEqual(config.tests[0].null_model.kind, NullModelKind.NORMAL)
        cells = config.cells()
        self.assertEqual([(c.delta, c.m, c.n) for c in cells], [(0.0, 20, 20), (1.0, 20, 20)])
        self.assertEqual(cells[1].y.params["mu"], 1.0)
        self.assertEqual(cells[1].x.params["mu"], 0.0)

    def test_bundled_desk_configs_are_valid(self) -> None:
        for name in DESK_CONFIGS:
            with self.subTest(config=name):
                config = PowerStudyConfig.from_mapping(load_yaml_config(CONFIG_DIR / f"{name}.yaml"))
                self.assertEqual(config.name, name)
                self.assertTrue(config.cells())

    def test_null_model_defaults_come_from_the_config(self) -> None:
        config = PowerStudyConfig.from_mapping(load_yaml_config(CONFIG_DIR / "location_normal.yaml"))
        by_label = {t.label: t for t in config.tests}

        self.assertEqual(by_label["T"].null_model.label, "mc:100000")
        self.assertEqual(by_label["CT"].null_model.label, "permutation:499")

    def test_validation_names_the_offending_field(self) -> None:
        def broken(mutate) -> dict:
            cfg = copy.deepcopy(small_power_config())
            mutate(cfg)
            return cfg

        cases = {
            "study.iterations": broken(lambda c: c["study"].update(iterations=50)),
            "study.alpha": broken(lambda c: c["study"].update(alpha=1.2)),
            "tests": broken(lambda c: c["tests"].append({"label": "W", "statistic": "Mood"})),
            "tests[0].null": broken(lambda c: c["tests"][0].update(null="exact:3")),
            "tests[1].statistic": broken(lambda c: c["tests"][1].update(statistic="Hotelling")),
            "scenarios[0].tests": broken(lambda c: c["scenarios"][0].update(tests=["CT"])),
            "scenarios[0].vary.param": broken(lambda c: c["scenarios"][0]["vary"].update(param="rate")),
            "scenarios[0].sizes[0]": broken(lambda c: c["scenarios"][0].update(sizes=[[1, 20]])),
            "scenarios[0].x": broken(lambda c: c["scenarios"][0].update(x={"family": "normal", "sigma": -2})),
        }
        for field, cfg in cases.items():
            with self.subTest(field=field):
                with self.assertRaises(ConfigValidationError) as ctx:
                    PowerStudyConfig.from_mapping(cfg)
                self.assertEqual(ctx.exception.field, field)

    def test_rank_tests_rejected_on_multivariate_scenarios(self) -> None:
        cfg = small_power_config()
        cfg["scenarios"][0]["x"] = {"family": "mv_normal", "d": 2}
        cfg["scenarios"][0]["y"] = {"family": "mv_normal", "d": 2}
        cfg["scenarios"][0]["vary"] = {"param": "mean", "mode": "offset"}

        with self.assertRaises(ConfigValidationError) as ctx:
            PowerStudyConfig.from_mapping(cfg)

        self.assertEqual(ctx.exception.field, "scenarios[0].tests")


class TestPowerCell(unittest.TestCase):
    def test_standard_error_and_interval(self) -> None:
        cell = PowerCell("s", 50, 50, 0.5, "T", rejections=50, iterations=100)

        self.assertAlmostEqual(cell.power, 0.5)
        self.assertAlmostEqual(cell.se, 0.05)
        self.assertAlmostEqual(cell.ci_low, 0.402)
        self.assertAlmostEqual(cell.ci_high, 0.598)
        self.assertEqual(cell.to_row(), ["s", "50", "50", "0.5", "T", "0.5000", "0.0500", "0.4020", "0.5980"])

    def test_interval_is_clipped(self) -> None:
        cell = PowerCell("s", 10, 10, None, "T", rejections=100, iterations=100)

        self.assertEqual((cell.ci_low, cell.ci_high), (1.0, 1.0))
        self.assertEqual(cell.to_row()[3], "")


class TestRunPowerStudy(unittest.TestCase):
    def test_deterministic_and_independent_of_workers(self) -> None:
        serial_cfg = small_power_config()
        threaded_cfg = small_power_config()
        threaded_cfg["study"]["workers"] = 3

        first = run_power_study(PowerStudyConfig.from_mapping(serial_cfg))
        second = run_power_study(PowerStudyConfig.from_mapping(serial_cfg))
        threaded = run_power_study(PowerStudyConfig.from_mapping(threaded_cfg))

        self.assertEqual(first.powers, second.powers)
        self.assertEqual(first.powers, threaded.powers)
        self.assertEqual(first.config_hash, second.config_hash)

    def test_power_grows_with_the_shift(self) -> None:
        logs: list[str] = []
        result = run_power_study(PowerStudyConfig.from_mapping(small_power_config()), log=logs.append)

        self.assertLessEqual(result.power("normal_location", "W", delta=0.0), 0.15)
        self.assertGreater(result.power("normal_location", "W", delta=1.0), 0.6)
        self.assertGreater(
            result.power("normal_location", "KS", delta=1.0),
            result.power("normal_location", "KS", delta=0.0),
        )
        self.assertEqual(len(result.cells), 4)
        self.assertTrue(any("normal_location" in line for line in logs))
        with self.assertRaises(KeyError):
            result.power("normal_location", "T", delta=0.0)

    def test_seed_changes_the_draws(self) -> None:
        a = run_power_study(PowerStudyConfig.from_mapping(small_power_config(seed=1)))
        b = run_power_study(PowerStudyConfig.from_mapping(small_power_config(seed=2)))

        self.assertNotEqual(a.config_hash, b.config_hash)
        self.assertNotEqual([c.rejections for c in a.cells], [c.rejections for c in b.cells])

    def test_outputs(self) -> None:
        config = PowerStudyConfig.from_mapping(small_power_config())
        result = run_power_study(config)

        with tempfile.TemporaryDirectory() as td:
            csv_path, metadata_path = write_power_outputs(result, config, Path(td) / "out", config_path="tiny.yaml")
            with csv_path.open("r", encoding="utf-8") as f:
                rows = list(csv.reader(f))
            metadata = json.loads(metadata_path.read_text(encoding="utf-8"))

        self.assertEqual(tuple(rows[0]), POWER_CSV_HEADER)
        self.assertEqual(len(rows), 1 + 4)
        self.assertEqual({r[4] for r in rows[1:]}, {"W", "KS"})
        self.assertEqual(metadata["resolved_config_hash"], result.config_hash)
        self.assertEqual(metadata["seed"], 7)
        self.assertEqual(metadata["iterations"], 100)
        self.assertEqual(metadata["config_path"], "tiny.yaml")
        self.assertIsNone(metadata["config_file_hash"])
        self.assertIsNone(metadata["git_commit"])


def _desk_study(name: str, scenario: str, deltas: list[float]) -> PowerStudyConfig:
    cfg = load_yaml_config(CONFIG_DIR / f"{name}.yaml")
    cfg["study"]["iterations"] = 2000
    cfg["tests"] = [{"label": "T", "statistic": "T", "null": "mc:100000"}]
    cfg["scenarios"] = [s for s in cfg["scenarios"] if s["name"] == scenario]
    cfg["scenarios"][0]["deltas"] = deltas
    cfg["scenarios"][0]["sizes"] = [[50, 50]]
    return PowerStudyConfig.from_mapping(cfg)


@pytest.mark.slow
class TestDeskReproductions(unittest.TestCase):
    def test_normal_location_curve(self) -> None:
        expected = {0.0: 0.050, 0.25: 0.217, 0.5: 0.652, 0.75: 0.936, 1.0: 0.996}
        result = run_power_study(_desk_study("location_normal", "normal_location", list(expected)))

        powers = [result.power("normal_location", "T", delta=d) for d in expected]
        for (delta, target), power in zip(expected.items(), powers):
            self.assertAlmostEqual(power, target, delta=0.03, msg=f"delta={delta}")
        self.assertEqual(powers, sorted(powers))

    def test_heavy_tailed_location(self) -> None:
        t3 = run_power_study(_desk_study("location_t3", "t3_location", [1.0]))
        pareto = run_power_study(_desk_study("location_pareto", "pareto_location", [0.5]))

        self.assertAlmostEqual(t3.power("t3_location", "T", delta=1.0), 0.971, delta=0.03)
        self.assertAlmostEqual(pareto.power("pareto_location", "T", delta=0.5), 0.968, delta=0.03)


if __name__ == "__main__":
    unittest.main()
