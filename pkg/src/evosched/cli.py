"""Command line interface and pipeline orchestration.

Subcommands: gen-instance, evolve, improve, battery, evaluate, pipeline.
Exit codes: 0 success, 2 validation error, 3 stage failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import battery as battery_mod
from . import local_search
from .decode import Decoder, UnschedulableInstanceError, check_schedule
from .evolution import (
    CMAES,
    GA,
    EvolutionConfig,
    TopKArchive,
    run_cma_es,
    run_ga,
)
from .model import (
    Instance,
    InstanceError,
    ParseError,
    SeriesFrame,
    generate_synthetic_instance,
    parse_instance,
    serialize_instance,
)
from .objective import (
    OnceOffPlacement,
    RecurringPlacement,
    Schedule,
    evaluate_schedule,
    total_load_series,
    within_working_hours,
)

EXIT_VALIDATION = 2
EXIT_STAGE = 3


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


# ---------------------------------------------------------------------------
# Schedule JSON
# ---------------------------------------------------------------------------

def schedule_to_json(schedule: Schedule) -> dict:
    doc = {
        "recurring": [
            {
                "id": aid,
                "weekday": p.weekday,
                "start_slot_of_day": p.start_slot_of_day,
                "rooms": list(p.room_ids),
            }
            for aid, p in sorted(schedule.recurring.items())
        ],
        "once_off": [
            {
                "id": aid,
                "start_slot": p.start_slot,
                "rooms": list(p.room_ids),
                "scheduled": p.scheduled,
            }
            for aid, p in sorted(schedule.once_off.items())
        ],
        "battery_actions": (
            schedule.battery_actions.tolist()
            if schedule.battery_actions is not None
            else []
        ),
    }
    return doc


def schedule_from_json(doc: dict, instance: Instance) -> Schedule:
    schedule = Schedule()
    h = instance.horizon
    for r in doc.get("recurring", []):
        schedule.recurring[r["id"]] = RecurringPlacement(
            weekday=r["weekday"],
            start_slot_of_day=r["start_slot_of_day"],
            room_ids=tuple(r["rooms"]),
        )
    for o in doc.get("once_off", []):
        activity = instance.activity_by_id(o["id"])
        schedule.once_off[o["id"]] = OnceOffPlacement(
            start_slot=o["start_slot"],
            room_ids=tuple(o["rooms"]),
            scheduled=o["scheduled"],
            outside_working_hours=not within_working_hours(
                h, o["start_slot"], activity.duration_slots
            ),
        )
    acts = doc.get("battery_actions", [])
    if acts:
        schedule.battery_actions = np.array(acts, dtype=np.int8)
    return schedule


def write_schedule(schedule: Schedule, path: Path) -> None:
    path.write_text(json.dumps(schedule_to_json(schedule), indent=2) + "\n")


def read_schedule(path: Path, instance: Instance) -> Schedule:
    return schedule_from_json(json.loads(Path(path).read_text()), instance)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

def run_pipeline(
    instance: Instance,
    forecast: SeriesFrame | None,
    config: EvolutionConfig,
    out_dir: Path,
    algo: str = CMAES,
    variant: str = "both",
    top_k: int = 10,
    improve_max_evaluations: int | None = None,
    actual: SeriesFrame | None = None,
) -> dict:
    """Evolve -> improve -> battery -> evaluate; returns the report dict."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    decoder = Decoder(instance, load_forecast=forecast)

    # stage: evolve
    try:
        archive = TopKArchive(top_k)
        runner = run_cma_es if algo == CMAES else run_ga
        best, trace = runner(instance, config, evaluator=decoder, archive=archive)
        trace.to_csv(out_dir / "trace.csv")
    except Exception as exc:  # noqa: BLE001 - stage name attached
        raise StageError("evolve", exc) from exc
    if best.schedule is None:
        raise StageError("evolve", RuntimeError("no feasible base schedule found"))
    base_cost = best.cost
    write_schedule(best.schedule, out_dir / "base_schedule.json")

    # stage: improve
    try:
        variants = [variant] if variant in (local_search.KEEP, local_search.DROP) else [
            local_search.KEEP,
            local_search.DROP,
        ]
        best_improved = None
        for cost, genome in archive.best() or [(best.cost, best.genome)]:
            individual = decoder.evaluate(np.asarray(genome, dtype=float))
            if individual.schedule is None:
                continue
            for v in variants:
                improved = local_search.improve_schedule(
                    instance,
                    individual.schedule,
                    variant=v,
                    decoder=decoder,
                    max_evaluations=improve_max_evaluations,
                )
                if best_improved is None or improved.cost < best_improved.cost:
                    best_improved = improved
    except Exception as exc:  # noqa: BLE001
        raise StageError("improve", exc) from exc
    if best_improved is None or best_improved.schedule is None:
        raise StageError("improve", RuntimeError("no feasible improved schedule"))
    improved_cost = min(best_improved.cost, base_cost)
    if best_improved.cost > base_cost:
        # keep-variant improvement of the best base can never be worse; guard anyway
        best_improved = best
    write_schedule(best_improved.schedule, out_dir / "improved_schedule.json")

    # stage: battery
    try:
        final_schedule = Schedule(
            recurring=dict(best_improved.schedule.recurring),
            once_off=dict(best_improved.schedule.once_off),
            battery_actions=None,
        )
        activity_load = total_load_series(instance, final_schedule, forecast)
        plan = battery_mod.optimize_dispatch(instance, activity_load)
        final_schedule.battery_actions = plan.actions
    except Exception as exc:  # noqa: BLE001
        raise StageError("battery", exc) from exc
    write_schedule(final_schedule, out_dir / "final_schedule.json")

    # stage: evaluate
    try:
        final_forecast = evaluate_schedule(instance, final_schedule, forecast)
        report = {
            "instance_size": instance.size_class,
            "algorithm": algo,
            "seed": config.seed,
            "base_cost": base_cost,
            "improved_cost": improved_cost,
            "final_cost": final_forecast.total,
            "final_breakdown": {
                "energy_cost": final_forecast.energy_cost,
                "peak_cost": final_forecast.peak_cost,
                "once_off_reward": final_forecast.once_off_reward,
                "peak_kw": final_forecast.peak_kw,
            },
        }
        if actual is not None:
            actual_eval = evaluate_schedule(instance, final_schedule, actual)
            report["final_cost_actual"] = actual_eval.total
        violations = check_schedule(instance, final_schedule)
        if violations:
            raise RuntimeError("final schedule infeasible: " + "; ".join(violations))
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001
        raise StageError("evaluate", exc) from exc
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


# ---------------------------------------------------------------------------
# Click commands
# ---------------------------------------------------------------------------

def _load_instance(path: str) -> Instance:
    return parse_instance(path)


def _load_series(path: str | None) -> SeriesFrame | None:
    return SeriesFrame.from_csv(path) if path else None


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, (ParseError, InstanceError, UnschedulableInstanceError, ValueError)):
        sys.exit(EXIT_VALIDATION)
    sys.exit(EXIT_STAGE)


@click.group()
def main():
    """Campus activity and battery scheduling against forecasted load."""


@main.command("gen-instance")
@click.option("--size", type=click.Choice(["small", "large"]), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--days", type=int, default=30, show_default=True)
@click.option("--out", type=click.Path(), required=True, help="instance JSON path")
def gen_instance_cmd(size, seed, days, out):
    """Generate a deterministic synthetic instance."""
    try:
        inst = generate_synthetic_instance(size, seed, n_days=days)
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        serialize_instance(inst, out)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    click.echo(f"wrote {out} ({size}, seed {seed})")


def _evolution_config(algo, pop, seed, time_budget_s, max_generations, max_restarts):
    return EvolutionConfig(
        algorithm=algo,
        population_size=pop,
        seed=seed,
        time_budget_s=time_budget_s,
        max_generations=max_generations,
        max_restarts=max_restarts,
    )


@main.command("evolve")
@click.option("--instance", "instance_path", type=click.Path(exists=True), required=True)
@click.option("--algo", type=click.Choice([CMAES, GA]), default=CMAES, show_default=True)
@click.option("--pop", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--time-budget-s", type=float, default=None)
@click.option("--max-generations", type=int, default=10_000, show_default=True)
@click.option("--max-restarts", type=int, default=1, show_default=True)
@click.option("--forecast", type=click.Path(exists=True), default=None, help="base-load CSV")
@click.option("--out", type=click.Path(), required=True, help="output directory")
def evolve_cmd(instance_path, algo, pop, seed, time_budget_s, max_generations, max_restarts, forecast, out):
    """Search for a base schedule with CMA-ES or the GA."""
    try:
        inst = _load_instance(instance_path)
        cfg = _evolution_config(algo, pop, seed, time_budget_s, max_generations, max_restarts)
        runner = run_cma_es if algo == CMAES else run_ga
        best, trace = runner(inst, cfg, load_forecast=_load_series(forecast))
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        if best.schedule is None:
            raise RuntimeError("no feasible schedule found")
        write_schedule(best.schedule, out / "base_schedule.json")
        trace.to_csv(out / "trace.csv")
    except (ParseError, InstanceError, UnschedulableInstanceError) as exc:
        _fail(exc)
    except Exception as exc:  # noqa: BLE001
        click.echo(f"error: stage 'evolve' failed: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    click.echo(f"base cost {best.cost:.2f} -> {out / 'base_schedule.json'}")


@main.command("improve")
@click.option("--instance", "instance_path", type=click.Path(exists=True), required=True)
@click.option("--schedule", "schedule_path", type=click.Path(exists=True), required=True)
@click.option("--variant", type=click.Choice(["keep", "drop", "both"]), default="both", show_default=True)
@click.option("--forecast", type=click.Path(exists=True), default=None)
@click.option("--max-evaluations", type=int, default=None)
@click.option("--out", type=click.Path(), required=True, help="improved schedule JSON path")
def improve_cmd(instance_path, schedule_path, variant, forecast, max_evaluations, out):
    """Improve a base schedule by one-activity time moves."""
    try:
        inst = _load_instance(instance_path)
        base = read_schedule(Path(schedule_path), inst)
        decoder = Decoder(inst, load_forecast=_load_series(forecast))
        variants = [variant] if variant != "both" else ["keep", "drop"]
        best = None
        for v in variants:
            improved = local_search.improve_schedule(
                inst, base, variant=v, decoder=decoder, max_evaluations=max_evaluations
            )
            if best is None or improved.cost < best.cost:
                best = improved
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        write_schedule(best.schedule, Path(out))
    except (ParseError, InstanceError, UnschedulableInstanceError) as exc:
        _fail(exc)
    except Exception as exc:  # noqa: BLE001
        click.echo(f"error: stage 'improve' failed: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    click.echo(f"improved cost {best.cost:.2f} -> {out}")


@main.command("battery")
@click.option("--instance", "instance_path", type=click.Path(exists=True), required=True)
@click.option("--schedule", "schedule_path", type=click.Path(exists=True), required=True)
@click.option("--forecast", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True, help="schedule JSON with battery actions")
def battery_cmd(instance_path, schedule_path, forecast, out):
    """Compute the dispatch plan for a fixed activity schedule."""
    try:
        inst = _load_instance(instance_path)
        schedule = read_schedule(Path(schedule_path), inst)
        schedule.battery_actions = None
        load = total_load_series(inst, schedule, _load_series(forecast))
        plan = battery_mod.optimize_dispatch(inst, load)
        schedule.battery_actions = plan.actions
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        write_schedule(schedule, Path(out))
    except (ParseError, InstanceError) as exc:
        _fail(exc)
    except Exception as exc:  # noqa: BLE001
        click.echo(f"error: stage 'battery' failed: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    click.echo(f"dispatch cost {plan.total_cost:.2f} -> {out}")


@main.command("evaluate")
@click.option("--instance", "instance_path", type=click.Path(exists=True), required=True)
@click.option("--schedule", "schedule_path", type=click.Path(exists=True), required=True)
@click.option("--forecast", type=click.Path(exists=True), default=None)
@click.option("--actual", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), default=None, help="report JSON path")
def evaluate_cmd(instance_path, schedule_path, forecast, actual, out):
    """Evaluate a schedule's cost with forecast and optionally actual load."""
    try:
        inst = _load_instance(instance_path)
        schedule = read_schedule(Path(schedule_path), inst)
        breakdown = evaluate_schedule(inst, schedule, _load_series(forecast))
        report = {
            "total": breakdown.total,
            "energy_cost": breakdown.energy_cost,
            "peak_cost": breakdown.peak_cost,
            "once_off_reward": breakdown.once_off_reward,
            "peak_kw": breakdown.peak_kw,
        }
        if actual:
            actual_eval = evaluate_schedule(inst, schedule, _load_series(actual))
            report["total_actual"] = actual_eval.total
        if out:
            Path(out).write_text(json.dumps(report, indent=2) + "\n")
    except (ParseError, InstanceError) as exc:
        _fail(exc)
    except Exception as exc:  # noqa: BLE001
        click.echo(f"error: stage 'evaluate' failed: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    click.echo(json.dumps({k: round(v, 2) for k, v in report.items()}, indent=2))


@main.command("pipeline")
@click.option("--instance", "instance_path", type=click.Path(exists=True), required=True)
@click.option("--algo", type=click.Choice([CMAES, GA]), default=CMAES, show_default=True)
@click.option("--pop", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--time-budget-s", type=float, default=None)
@click.option("--max-generations", type=int, default=100, show_default=True)
@click.option("--max-restarts", type=int, default=1, show_default=True)
@click.option("--variant", type=click.Choice(["keep", "drop", "both"]), default="both", show_default=True)
@click.option("--top-k", type=int, default=10, show_default=True)
@click.option("--improve-max-evaluations", type=int, default=None)
@click.option("--forecast", type=click.Path(exists=True), default=None)
@click.option("--actual", type=click.Path(exists=True), default=None)
@click.option("--out", type=click.Path(), required=True, help="output directory")
def pipeline_cmd(
    instance_path, algo, pop, seed, time_budget_s, max_generations, max_restarts,
    variant, top_k, improve_max_evaluations, forecast, actual, out,
):
    """Full evolve -> improve -> battery -> evaluate run."""
    try:
        inst = _load_instance(instance_path)
        cfg = _evolution_config(algo, pop, seed, time_budget_s, max_generations, max_restarts)
        report = run_pipeline(
            inst,
            _load_series(forecast),
            cfg,
            Path(out),
            algo=algo,
            variant=variant,
            top_k=top_k,
            improve_max_evaluations=improve_max_evaluations,
            actual=_load_series(actual),
        )
    except (ParseError, InstanceError, UnschedulableInstanceError) as exc:
        _fail(exc)
    except StageError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_STAGE)
    click.echo(
        f"base {report['base_cost']:.2f} >= improved {report['improved_cost']:.2f} "
        f">= final {report['final_cost']:.2f}"
    )


if __name__ == "__main__":
    main()
