"""Experiment driver.

Subcommands::

    simulate               generate a synthetic dataset CSV
    run                    estimate over a dataset (or a fresh simulation)
    sweep                  (k_t, k_w) error and timing sweep
    ablate-drag            paired run with and without the drag model
    analyze-observability  per-sample rank / conditioning over a dataset

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import dataio, metrics, observability, simulator
from .errors import ConfigError, DataError, RangeNavError, SolverError
from .estimator import Estimate, wriggle
from .model import DragModel, StateVector, discretize
from .simulator import Dataset, FaultSchedule

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4


@dataclass
class Scenario:
    """One resolved experiment: data source, config, faults, initialization."""

    run_config: dataio.RunConfig
    dataset_path: str | None = None
    simulate: bool = False
    faults: FaultSchedule = FaultSchedule()
    wrong_init: float | None = None
    out: str | None = None
    seed: int | None = None

    def __post_init__(self):
        if bool(self.dataset_path) == bool(self.simulate):
            raise ConfigError("exactly one data source: --dataset or --simulate")


def _apply_faults(dataset: Dataset, faults: FaultSchedule) -> Dataset:
    """Mask measurements inside fault intervals (copy-on-write)."""
    if not faults.intervals:
        return dataset
    uwb = dataset.uwb.copy()
    uwb[faults.mask("range", dataset.t)] = np.nan
    flow = dataset.flow
    if flow is not None:
        flow = flow.copy()
        flow[faults.mask("flow", dataset.t)] = np.nan
    return Dataset(
        t=dataset.t, imu=dataset.imu, uwb=uwb, flow=flow,
        truth_pos=dataset.truth_pos, truth_vel=dataset.truth_vel,
        anchor=dataset.anchor, faults=faults,
    )


def _load_or_simulate(scenario: Scenario) -> Dataset:
    rc = scenario.run_config
    if scenario.dataset_path:
        dataset = dataio.read_dataset(scenario.dataset_path)
    else:
        spec = rc.trajectory
        if scenario.seed is not None:
            spec = replace(spec, seed=scenario.seed)
            noise = replace(rc.noise, seed=scenario.seed + 1)
        else:
            noise = rc.noise
        trajectory = simulator.generate(spec, rc.drag)
        dataset = simulator.sense(trajectory, noise, anchor=spec.anchor)
    return _apply_faults(dataset, scenario.faults)


def _initial_state(dataset: Dataset, wrong_init: float | None, d: int) -> np.ndarray:
    first_range = dataset.uwb[~np.isnan(dataset.uwb)]
    if wrong_init is not None:
        if first_range.size == 0:
            raise DataError("cannot wrong-init: no range measurements")
        return np.full(2 * d, wrong_init * float(first_range[0]))
    if dataset.truth_pos is None:
        raise DataError("dataset has no ground truth; use --wrong-init to seed x0")
    p0 = dataset.truth_pos[0] - dataset.anchor
    v0 = dataset.truth_vel[0] if dataset.truth_vel is not None else np.zeros(d)
    return np.concatenate([p0, v0])


def run_scenario(scenario: Scenario) -> tuple[list[Estimate], metrics.ErrorSummary | None, Dataset]:
    """Estimate over the scenario's data; return estimates and a summary."""
    rc = scenario.run_config
    dataset = _load_or_simulate(scenario)
    model = discretize(rc.drag)
    cfg = rc.estimator
    x0 = _initial_state(dataset, scenario.wrong_init, cfg.d)
    records = dataio.dataset_records(dataset, cfg.ell)
    estimates = list(wriggle(records, cfg, model, x0))
    summary = None
    if dataset.truth_pos is not None and estimates:
        truth = {round(float(t), 9): dataset.truth_pos[i] for i, t in enumerate(dataset.t)}
        errors = np.array(
            [e.state[: cfg.d] + dataset.anchor - truth[round(e.t, 9)] for e in estimates]
        )
        times = [e.report.solve_time for e in estimates]
        summary = metrics.summarize(errors, times)
    if scenario.out:
        dataio.write_trace(scenario.out, estimates, dataset)
    return estimates, summary, dataset


def _print_summary(tag: str, summary: metrics.ErrorSummary | None) -> None:
    if summary is None:
        print(f"{tag}: no ground truth, no error summary")
        return
    mae = " ".join(f"{v:.3f}" for v in summary.mae)
    rmse = " ".join(f"{v:.3f}" for v in summary.rmse)
    sae = " ".join(f"{v:.3f}" for v in summary.sae)
    print(
        f"{tag}: n={summary.count} MAE[m]=({mae}) RMSE[m]=({rmse}) SAE[m]=({sae})"
        f" solve_mean={1e3 * summary.solve_time_mean:.2f}ms"
    )


def _parse_faults(specs: list[str]) -> FaultSchedule:
    intervals = []
    for spec in specs or []:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"--fault wants sensor:start:end, got {spec!r}")
        sensor, start, end = parts
        try:
            intervals.append((sensor, float(start), float(end)))
        except ValueError as exc:
            raise ConfigError(f"bad fault interval {spec!r}") from exc
    try:
        return FaultSchedule(tuple(intervals))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _scenario_from_args(args) -> Scenario:
    rc = dataio.load_config(args.config, profile=args.profile, mode=args.mode)
    est = rc.estimator
    overrides = {}
    if args.kt is not None:
        overrides["k_t"] = args.kt
    if args.kw is not None:
        overrides["k_w"] = args.kw
    if args.stride is not None:
        overrides["stride"] = args.stride
    if args.ell is not None:
        overrides["ell"] = args.ell
    if overrides:
        try:
            est = replace(est, **overrides)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    rc = replace(rc, estimator=est)
    if getattr(args, "duration", None) is not None:
        rc = replace(rc, trajectory=replace(rc.trajectory, duration=args.duration))
    if getattr(args, "traj", None) is not None:
        rc = replace(rc, trajectory=replace(rc.trajectory, kind=args.traj))
    return Scenario(
        run_config=rc,
        dataset_path=args.dataset,
        simulate=args.dataset is None,
        faults=_parse_faults(args.fault),
        wrong_init=args.wrong_init,
        out=args.out,
        seed=args.seed,
    )


def cmd_simulate(args) -> int:
    rc = dataio.load_config(args.config, profile=args.profile, mode=args.mode)
    spec = rc.trajectory
    if args.traj is not None:
        spec = replace(spec, kind=args.traj)
    if args.duration is not None:
        spec = replace(spec, duration=args.duration)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    noise = rc.noise if args.seed is None else replace(rc.noise, seed=args.seed + 1)
    trajectory = simulator.generate(spec, rc.drag)
    dataset = simulator.sense(
        trajectory, noise, anchor=spec.anchor, faults=_parse_faults(args.fault)
    )
    dataio.write_dataset(args.out, dataset)
    print(f"wrote {dataset.t.size} samples to {args.out}")
    return 0


def cmd_run(args) -> int:
    scenario = _scenario_from_args(args)
    _, summary, _ = run_scenario(scenario)
    _print_summary(f"run[{args.mode}]", summary)
    if scenario.out:
        print(f"trace written to {scenario.out}")
    return 0


def cmd_sweep(args) -> int:
    kts = [int(v) for v in args.kt_list.split(",") if v]
    kws = [int(v) for v in args.kw_list.split(",") if v]
    scenario = _scenario_from_args(args)
    dataset = _load_or_simulate(scenario)
    rc = scenario.run_config
    model = discretize(rc.drag)
    results: dict[tuple[int, int], metrics.ErrorSummary] = {}
    d = rc.estimator.d
    for k_t in kts:
        for k_w in kws:
            try:
                cfg = replace(rc.estimator, k_t=k_t, k_w=k_w)
            except ValueError as exc:
                print(f"skipping k_t={k_t} k_w={k_w}: {exc}", file=sys.stderr)
                continue
            x0 = _initial_state(dataset, scenario.wrong_init, d)
            estimates = list(wriggle(dataio.dataset_records(dataset, cfg.ell), cfg, model, x0))
            if dataset.truth_pos is None or not estimates:
                continue
            truth = {round(float(t), 9): dataset.truth_pos[i] for i, t in enumerate(dataset.t)}
            errors = np.array(
                [e.state[:d] + dataset.anchor - truth[round(e.t, 9)] for e in estimates]
            )
            results[(k_t, k_w)] = metrics.summarize(
                errors, [e.report.solve_time for e in estimates]
            )
    rows = metrics.sweep_table(results)
    print(metrics.format_table(rows), end="")
    if args.out:
        metrics.write_rows_csv(args.out, rows)
        print(f"sweep table written to {args.out}")
    return 0


def cmd_ablate_drag(args) -> int:
    scenario = _scenario_from_args(args)
    dataset = _load_or_simulate(scenario)
    rc = scenario.run_config
    summaries = {}
    if dataset.truth_pos is None:
        raise DataError("drag ablation needs ground truth")
    for tag, drag in (
        ("with_drag", rc.drag),
        ("no_drag", DragModel(mu=np.zeros(rc.drag.d), dt=rc.drag.dt)),
    ):
        model = discretize(drag)
        cfg = rc.estimator
        x0 = _initial_state(dataset, scenario.wrong_init, cfg.d)
        estimates = list(wriggle(dataio.dataset_records(dataset, cfg.ell), cfg, model, x0))
        truth = {round(float(t), 9): dataset.truth_pos[i] for i, t in enumerate(dataset.t)}
        errors = np.array(
            [e.state[: cfg.d] + dataset.anchor - truth[round(e.t, 9)] for e in estimates]
        )
        summaries[tag] = metrics.summarize(errors, [e.report.solve_time for e in estimates])
        _print_summary(f"ablate[{tag}]", summaries[tag])
    ratio = float(np.mean(summaries["no_drag"].mae) / np.mean(summaries["with_drag"].mae))
    print(f"degradation ratio (no_drag / with_drag mean MAE): {ratio:.3f}")
    return 0


def cmd_analyze_observability(args) -> int:
    rc = dataio.load_config(args.config, profile=args.profile, mode=args.mode)
    dataset = dataio.read_dataset(args.dataset)
    if dataset.truth_pos is None:
        raise DataError("observability analysis needs ground-truth columns")
    d = dataset.imu.shape[1]
    vel = dataset.truth_vel
    if vel is None:
        # fall back to differenced positions when velocities are absent
        vel = np.gradient(dataset.truth_pos, dataset.t, axis=0)
    pairs = (
        (StateVector(dataset.truth_pos[i] - dataset.anchor, vel[i]), dataset.imu[i])
        for i in range(dataset.t.size)
    )
    reports = observability.observability_timeline(
        pairs, rc.drag.mu, mode=args.mode, condition_threshold=args.threshold
    )
    flagged = sum(r.flagged for r in reports)
    print(
        f"{len(reports)} samples, rank range [{min(r.numerical_rank for r in reports)},"
        f" {max(r.numerical_rank for r in reports)}], {flagged} flagged quasi-static"
    )
    if args.out:
        import csv

        with open(args.out, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["t", "rank", "condition_number", "flagged"])
            for t, r in zip(dataset.t, reports):
                writer.writerow([format(t, ".17g"), r.numerical_rank,
                                 format(r.condition_number, ".17g"), int(r.flagged)])
        print(f"timeline written to {args.out}")
    return 0


def _add_common(p: argparse.ArgumentParser, with_data_source: bool = True) -> None:
    p.add_argument("--mode", choices=("srio", "srifo"), default="srio")
    p.add_argument("--profile", choices=dataio.PROFILES, default="indoor")
    p.add_argument("--config", default=None, help="YAML overrides file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output file path")
    p.add_argument("--fault", action="append", default=[],
                   metavar="SENSOR:START:END", help="mask a sensor over [start, end] s")
    if with_data_source:
        p.add_argument("--dataset", default=None, help="dataset CSV (default: simulate)")
        p.add_argument("--traj", choices=simulator.TRAJECTORY_KINDS, default=None)
        p.add_argument("--duration", type=float, default=None)
        p.add_argument("--wrong-init", dest="wrong_init", type=float, default=None,
                       help="initialize x0 = factor * r0 * ones")
        p.add_argument("--kt", type=int, default=None)
        p.add_argument("--kw", type=int, default=None)
        p.add_argument("--stride", type=int, default=None)
        p.add_argument("--ell", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rangenav", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a dataset CSV")
    _add_common(p, with_data_source=False)
    p.add_argument("--traj", choices=simulator.TRAJECTORY_KINDS, default=None)
    p.add_argument("--duration", type=float, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="single estimation run")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="(k_t, k_w) sweep")
    _add_common(p)
    p.add_argument("--kt-list", default="4", help="comma-separated fitting orders")
    p.add_argument("--kw-list", default="38", help="comma-separated window sizes")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate-drag", help="paired run with and without drag")
    _add_common(p)
    p.set_defaults(func=cmd_ablate_drag)

    p = sub.add_parser("analyze-observability", help="rank timeline over a dataset")
    _add_common(p, with_data_source=False)
    p.add_argument("--dataset", required=True)
    p.add_argument("--threshold", type=float, default=observability.QUASI_STATIC_CONDITION)
    p.set_defaults(func=cmd_analyze_observability)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except RangeNavError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
