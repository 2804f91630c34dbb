"""CLI subcommands, schedule JSON round trips, exit codes and the
four-stage pipeline."""

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from evosched.cli import (
    EXIT_STAGE,
    EXIT_VALIDATION,
    main,
    read_schedule,
    run_pipeline,
    schedule_from_json,
    schedule_to_json,
    write_schedule,
)
from evosched.decode import Decoder
from evosched.evolution import EvolutionConfig
from evosched.model import parse_instance, serialize_instance
from evosched.objective import Schedule, evaluate_schedule

from .conftest import battery, make_instance, oo, rec


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def tiny_files(tmp_path):
    inst = make_instance(
        [rec(0, power=15.0), rec(1, power=10.0), oo(2, value=300.0), oo(3, value=200.0)],
        rooms=2,
        batteries=[battery(power=50.0, steps=2)],
        base=20.0 + 10.0 * np.sin(np.arange(30 * 96) / 40.0),
    )
    path = tmp_path / "inst.json"
    serialize_instance(inst, path)
    return inst, path


class TestScheduleJson:
    def test_round_trip(self, tiny_files, tmp_path):
        inst, _ = tiny_files
        decoder = Decoder(inst)
        schedule = decoder.evaluate(
            np.array([1.0, 3.0, 2.0, 5.0, 40.0, 400.0])
        ).schedule
        schedule.battery_actions = np.zeros((1, inst.horizon.n_slots), dtype=np.int8)
        schedule.battery_actions[0, :3] = [1, -1, 1]
        write_schedule(schedule, tmp_path / "s.json")
        back = read_schedule(tmp_path / "s.json", inst)
        assert back.recurring == schedule.recurring
        assert {a: (p.scheduled, p.start_slot) for a, p in back.once_off.items()} == {
            a: (p.scheduled, p.start_slot) for a, p in schedule.once_off.items()
        }
        assert np.array_equal(back.battery_actions, schedule.battery_actions)
        assert evaluate_schedule(inst, back).total == pytest.approx(
            evaluate_schedule(inst, schedule).total
        )

    def test_out_of_hours_flag_recomputed(self, tiny_files):
        inst, _ = tiny_files
        doc = {
            "recurring": [],
            "once_off": [{"id": 2, "start_slot": 0, "rooms": [0], "scheduled": True}],
            "battery_actions": [],
        }
        schedule = schedule_from_json(doc, inst)
        assert schedule.once_off[2].outside_working_hours

    def test_empty_actions_mean_none(self, tiny_files):
        inst, _ = tiny_files
        doc = schedule_to_json(Schedule())
        assert doc["battery_actions"] == []
        assert schedule_from_json(doc, inst).battery_actions is None


class TestSubcommands:
    def test_gen_instance(self, runner, tmp_path):
        out = tmp_path / "gen" / "small.json"
        result = runner.invoke(
            main, ["gen-instance", "--size", "small", "--seed", "4", "--out", str(out)]
        )
        assert result.exit_code == 0, result.output
        inst = parse_instance(out)
        assert inst.size_class == "small"

    def test_full_stage_chain(self, runner, tiny_files, tmp_path):
        _, inst_path = tiny_files
        out_dir = tmp_path / "run"
        result = runner.invoke(
            main,
            ["evolve", "--instance", str(inst_path), "--pop", "8",
             "--max-generations", "4", "--seed", "0", "--out", str(out_dir)],
        )
        assert result.exit_code == 0, result.output
        assert (out_dir / "base_schedule.json").exists()
        assert (out_dir / "trace.csv").read_text().startswith("generation,best_cost")

        improved = tmp_path / "improved.json"
        result = runner.invoke(
            main,
            ["improve", "--instance", str(inst_path),
             "--schedule", str(out_dir / "base_schedule.json"),
             "--max-evaluations", "200", "--out", str(improved)],
        )
        assert result.exit_code == 0, result.output

        final = tmp_path / "final.json"
        result = runner.invoke(
            main,
            ["battery", "--instance", str(inst_path), "--schedule", str(improved),
             "--out", str(final)],
        )
        assert result.exit_code == 0, result.output

        report_path = tmp_path / "report.json"
        result = runner.invoke(
            main,
            ["evaluate", "--instance", str(inst_path), "--schedule", str(final),
             "--out", str(report_path)],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(report_path.read_text())
        assert report["total"] == pytest.approx(
            report["energy_cost"] + report["peak_cost"] - report["once_off_reward"]
        )

    def test_evaluate_with_actual_load(self, runner, tiny_files, tmp_path):
        inst, inst_path = tiny_files
        sched_path = tmp_path / "empty.json"
        write_schedule(Schedule(), sched_path)
        actual = tmp_path / "actual.csv"
        from .conftest import series

        series(inst.base_load.values * 1.5).to_csv(actual)
        out = tmp_path / "report.json"
        result = runner.invoke(
            main,
            ["evaluate", "--instance", str(inst_path), "--schedule", str(sched_path),
             "--actual", str(actual), "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        report = json.loads(out.read_text())
        assert "total_actual" in report
        assert report["total_actual"] != report["total"]

    def test_validation_error_exit_code(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        result = runner.invoke(
            main, ["evolve", "--instance", str(bad), "--pop", "8", "--out", str(tmp_path / "o")]
        )
        assert result.exit_code == EXIT_VALIDATION

    def test_stage_error_exit_code(self, runner, tiny_files, tmp_path):
        _, inst_path = tiny_files
        sched = tmp_path / "s.json"
        sched.write_text(json.dumps({
            "recurring": [], "battery_actions": [],
            "once_off": [{"id": 999, "start_slot": 0, "rooms": [], "scheduled": True}],
        }))
        result = runner.invoke(
            main,
            ["improve", "--instance", str(inst_path), "--schedule", str(sched),
             "--out", str(tmp_path / "out.json")],
        )
        assert result.exit_code == EXIT_STAGE


class TestPipeline:
    def config(self, seed=0):
        return EvolutionConfig(
            algorithm="cmaes", population_size=8, max_generations=4,
            max_restarts=1, seed=seed, f_tol=0.0, x_tol=0.0,
        )

    def test_stage_costs_non_increasing(self, tiny_files, tmp_path):
        inst, _ = tiny_files
        report = run_pipeline(
            inst, None, self.config(), tmp_path / "out",
            top_k=2, improve_max_evaluations=300,
        )
        assert report["base_cost"] >= report["improved_cost"] - 1e-9
        assert report["improved_cost"] >= report["final_cost"] - 1e-9
        for name in ("base_schedule", "improved_schedule", "final_schedule"):
            assert (tmp_path / "out" / f"{name}.json").exists()
        assert (tmp_path / "out" / "report.json").exists()

    def test_deterministic_report_bytes(self, tiny_files, tmp_path):
        inst, _ = tiny_files
        blobs = []
        for name in ("a", "b"):
            run_pipeline(
                inst, None, self.config(), tmp_path / name,
                top_k=2, improve_max_evaluations=300,
            )
            blobs.append((tmp_path / name / "report.json").read_bytes())
        assert blobs[0] == blobs[1]

    def test_zero_activity_zero_battery(self, tmp_path):
        inst = make_instance([])
        report = run_pipeline(inst, None, self.config(), tmp_path / "out")
        assert report["final_cost"] == pytest.approx(
            evaluate_schedule(inst, Schedule()).total
        )

    def test_pipeline_command(self, runner, tiny_files, tmp_path):
        _, inst_path = tiny_files
        result = runner.invoke(
            main,
            ["pipeline", "--instance", str(inst_path), "--pop", "8",
             "--max-generations", "4", "--top-k", "2",
             "--improve-max-evaluations", "300", "--out", str(tmp_path / "run")],
        )
        assert result.exit_code == 0, result.output
        report = json.loads((tmp_path / "run" / "report.json").read_text())
        assert report["base_cost"] >= report["final_cost"] - 1e-9
