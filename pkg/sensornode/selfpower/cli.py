#
#   Copyright (c) 2024 The selfpower authors. All rights reserved.
#
#   Distributed under the Affero GPL license
#
"""
Command-line front end for the self-powered sensor node toolkit.

Run from the sensornode directory, e.g.
    python -m selfpower.cli step-response --preset mica2 --out out --svg
    python -m selfpower.cli tune --ku 33.727 --tu 3.90176
    python -m selfpower.cli stability --poly 1,1,-1,-1
    python -m selfpower.cli simulate --preset mica2 --no-controller

Exit codes: 0 ok, 2 not settled or usage error, 3 ultimate gain search failed,
4 unstable, 5 marginally stable, 6 duty cycle livelock.
"""
import argparse
import csv
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .energy import cycle_energy, threshold_distance, transmit_branch
from .lti import NotSettledError, simulate_step, step_metrics
from .nodesim import LivelockError, run_sim, summary
from .pid import (NoUltimateGainError, OscillationSearchConfig, UltimateParams, closed_loop, explain_table, find_ultimate,
                  tuning_report, zn_gains)
from .plotting import line_plot_svg
from .presets import preset_names
from .report import write_report
from .scenario import Scenario, resolve_scenario, scenario_to_dict
from .stability import MARGINAL, UNSTABLE, is_stable

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_SETTLED = 2
EXIT_SEARCH_FAILED = 3
EXIT_UNSTABLE = 4
EXIT_MARGINAL = 5
EXIT_LIVELOCK = 6

DEFAULT_PRESET = "mica2"


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got '{text}'")


def _plant(text: str) -> Tuple[float, float, float]:
    values = _floats(text)
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected M,D,K, got '{text}'")
    return values[0], values[1], values[2]


def _emit_json(data) -> None:
    sys.stdout.write(json.dumps(data, indent=2) + "\n")


def _emit_csv(header: List[str], rows: List[List]) -> None:
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args, overrides: Optional[Dict] = None) -> Scenario:
    preset = args.preset
    if preset is None and args.scenario is None:
        preset = DEFAULT_PRESET
    return resolve_scenario(preset=preset, scenario_file=args.scenario, overrides=overrides)


def _ultimate(scenario: Scenario) -> Tuple[UltimateParams, Optional[float]]:
    if isinstance(scenario.tuning, UltimateParams):
        return scenario.tuning, None
    return find_ultimate(scenario.plant_tf(), scenario.tuning), scenario.tuning.sample_period_s


def cmd_step_response(args) -> int:
    overrides = {}
    if args.plant is not None:
        overrides = {"plant.mass_kg": args.plant[0], "plant.damping_Ns_per_m": args.plant[1],
                     "plant.stiffness_N_per_m": args.plant[2]}
    scenario = _scenario(args, overrides)
    if args.closed_loop:
        ultimate, _ = _ultimate(scenario)
        tf = closed_loop(scenario.plant_tf(), zn_gains(ultimate))
        dt = args.dt or scenario.sim.closed_loop_dt_s
        t_end = args.t_end or scenario.sim.closed_loop_t_end_s
        name = "closed_loop_step"
    else:
        tf = scenario.plant_tf()
        dt = args.dt or scenario.sim.dt_s
        t_end = args.t_end or scenario.sim.t_end_s
        name = "open_loop_step"
    trace = simulate_step(tf, dt, t_end)
    out = _out_dir(args)
    with open(out / f"{name}.csv", "w", encoding="utf-8", newline="") as f:
        trace.write_csv(f)
    if args.svg:
        line_plot_svg(out / f"{name}.svg", trace.times(), {"output": trace.outputs()}, "time [s]", "displacement",
                      f"{'Closed' if args.closed_loop else 'Open'}-loop step response, {scenario.name}")
    try:
        metrics = step_metrics(trace)
    except NotSettledError as e:
        logger.error("%s", e)
        return EXIT_NOT_SETTLED
    if args.format == "csv":
        sys.stdout.write(trace.to_csv())
    else:
        _emit_json(metrics.to_dict())
    return EXIT_OK


def cmd_tune(args) -> int:
    if args.ku is not None or args.tu is not None:
        if args.ku is None or args.tu is None:
            raise ValueError("--ku and --tu must be given together")
        ultimate, sample_period = UltimateParams(args.ku, args.tu), None
    else:
        scenario = _scenario(args)
        search = scenario.tuning if isinstance(scenario.tuning, OscillationSearchConfig) else None
        if args.search or search is not None:
            config = search or OscillationSearchConfig()
            changes = {"sample_period_s": args.sample_period, "gain_lo": args.gain_lo, "gain_hi": args.gain_hi,
                       "cycles_required": args.cycles}
            config = dataclasses.replace(config, **{k: v for k, v in changes.items() if v is not None})
            try:
                ultimate = find_ultimate(scenario.plant_tf(), config)
            except NoUltimateGainError as e:
                logger.error("%s", e)
                return EXIT_SEARCH_FAILED
            sample_period = config.sample_period_s
        else:
            ultimate, sample_period = scenario.tuning, None
    report = tuning_report(ultimate, zn_gains(ultimate), sample_period)
    if args.format == "csv":
        _emit_csv(list(report.keys()), [list(report.values())])
    else:
        _emit_json(report)
    return EXIT_OK


def cmd_stability(args) -> int:
    if args.poly is not None:
        charpoly = args.poly
    else:
        scenario = _scenario(args)
        if args.closed_loop:
            ultimate, _ = _ultimate(scenario)
            charpoly = closed_loop(scenario.plant_tf(), zn_gains(ultimate)).den
        else:
            charpoly = scenario.plant_tf().den
    verdict = is_stable(charpoly)
    if args.format == "json":
        _emit_json(verdict.to_dict())
    elif args.format == "csv":
        width = max(len(row) for row in verdict.table.rows)
        _emit_csv(["row"] + [f"c{i + 1}" for i in range(width)],
                  [[label] + list(row) for label, row in zip(verdict.table.row_labels(), verdict.table.rows)])
    else:
        sys.stdout.write(verdict.table.to_text())
        sys.stdout.write(f"{verdict.status}: {verdict.sign_changes} sign changes in the first column\n")
    if verdict.status == UNSTABLE:
        return EXIT_UNSTABLE
    if verdict.status == MARGINAL:
        return EXIT_MARGINAL
    return EXIT_OK


def cmd_energy(args) -> int:
    scenario = _scenario(args)
    distance = scenario.harvest.distance_m if args.distance is None else args.distance
    breakdown = cycle_energy(scenario.energy, distance)
    if args.format == "csv":
        _emit_csv(["component", "energy_J"], [[k, v] for k, v in breakdown.to_dict().items()])
        return EXIT_OK
    data = breakdown.to_dict()
    data.update({"distance_m": distance,
                 "branch": transmit_branch(scenario.energy, distance),
                 "threshold_distance_m": threshold_distance(scenario.energy)})
    _emit_json(data)
    return EXIT_OK


def _harvest_overrides(args) -> Dict:
    return {"harvest.dt_s": args.dt, "sim.node_t_end_s": args.t_end, "harvest.distance_m": args.distance}


def cmd_simulate(args) -> int:
    scenario = _scenario(args, _harvest_overrides(args))
    harvest = scenario.harvest.without_controller() if args.no_controller else scenario.harvest
    try:
        trace = run_sim(scenario.energy, harvest, scenario.sim.node_t_end_s)
    except LivelockError as e:
        logger.error("%s", e)
        return EXIT_LIVELOCK
    out = _out_dir(args)
    name = "node_trace_passive" if args.no_controller else "node_trace"
    with open(out / f"{name}.csv", "w", encoding="utf-8", newline="") as f:
        trace.write_csv(f)
    if args.svg:
        line_plot_svg(out / f"{name}.svg", trace.times(), {"residual energy": trace.residuals()}, "time [s]",
                      "energy [J]", f"Residual energy, {scenario.name}",
                      hlines={"threshold": scenario.energy.threshold_energy_J,
                              "reference": scenario.energy.reference_energy_J})
    if args.format == "csv":
        sys.stdout.write(trace.to_csv())
    else:
        _emit_json(summary(trace))
    return EXIT_OK


def cmd_show_preset(args) -> int:
    _emit_json(scenario_to_dict(_scenario(args)))
    return EXIT_OK


def cmd_explain(args) -> int:
    sys.stdout.write(explain_table())
    return EXIT_OK


def cmd_report(args) -> int:
    scenario = _scenario(args)
    failures = {}
    plant = scenario.plant_tf()
    ultimate, _ = _ultimate(scenario)
    gains = zn_gains(ultimate)
    metrics = {}
    for key, tf, dt, t_end in (("open_loop", plant, scenario.sim.dt_s, scenario.sim.t_end_s),
                               ("closed_loop", closed_loop(plant, gains), scenario.sim.closed_loop_dt_s,
                                scenario.sim.closed_loop_t_end_s)):
        try:
            metrics[key] = step_metrics(simulate_step(tf, dt, t_end))
        except NotSettledError as e:
            metrics[key] = None
            failures[key] = str(e)
    runs = {}
    for key, harvest in (("controlled", scenario.harvest), ("passive", scenario.harvest.without_controller())):
        try:
            runs[key] = summary(run_sim(scenario.energy, harvest, scenario.sim.node_t_end_s))
        except LivelockError as e:
            runs[key] = None
            failures[key] = str(e)
    path = write_report(_out_dir(args) / "report.md", scenario, metrics["open_loop"], metrics["closed_loop"],
                        ultimate, gains, is_stable(closed_loop(plant, gains).den), scenario.harvest.distance_m,
                        runs["controlled"], runs["passive"], failures)
    sys.stdout.write(f"{path}\n")
    return EXIT_OK


def _sweep_point(job) -> dict:
    energy, harvest, t_end = job
    result = summary(run_sim(energy, harvest, t_end))
    return {"electrical_damping_Ns_per_m": harvest.electrical_damping_Ns_per_m,
            "cycles": result["cycles"],
            "recharge_times_s": result["recharge_times_s"],
            "max_residual_J": result["max_residual_J"]}


def cmd_sweep(args) -> int:
    scenario = _scenario(args, _harvest_overrides(args))
    harvest = scenario.harvest.without_controller() if args.no_controller else scenario.harvest
    jobs = [(scenario.energy, dataclasses.replace(harvest, electrical_damping_Ns_per_m=c), scenario.sim.node_t_end_s)
            for c in args.damping]
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_sweep_point, jobs))
        else:
            results = [_sweep_point(job) for job in jobs]
    except LivelockError as e:
        logger.error("%s", e)
        return EXIT_LIVELOCK
    if args.format == "csv":
        _emit_csv(["electrical_damping_Ns_per_m", "cycles", "first_recharge_s", "max_residual_J"],
                  [[r["electrical_damping_Ns_per_m"], r["cycles"],
                    r["recharge_times_s"][0] if r["recharge_times_s"] else "", r["max_residual_J"]] for r in results])
    else:
        _emit_json(results)
    return EXIT_OK


def create_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", help=f"built-in scenario, one of {', '.join(preset_names())} "
                                         f"(default {DEFAULT_PRESET} unless --scenario is given)")
    common.add_argument("--scenario", help="scenario JSON file, layered over the preset it names")
    common.add_argument("--out", default=".", help="directory for CSV and SVG files (default: current directory)")
    common.add_argument("--svg", action="store_true", help="also write an SVG plot")
    common.add_argument("--format", choices=["json", "csv"], help="stdout format")
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging on stderr")
    common.add_argument("--quiet", "-q", action="store_true", help="only log errors")

    parser = argparse.ArgumentParser(prog="selfpower", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    commands = parser.add_subparsers(dest="command", required=True)

    step = commands.add_parser("step-response", parents=[common], help="step response and its metrics")
    step.add_argument("--closed-loop", action="store_true", help="plant under Ziegler-Nichols PID control")
    step.add_argument("--plant", type=_plant, help="mass-spring-damper parameters M,D,K")
    step.add_argument("--dt", type=float, help="integration step [s]")
    step.add_argument("--t-end", type=float, help="simulated time [s]")
    step.set_defaults(func=cmd_step_response)

    tune = commands.add_parser("tune", parents=[common], help="Ziegler-Nichols PID gains")
    tune.add_argument("--ku", type=float, help="ultimate gain")
    tune.add_argument("--tu", type=float, help="ultimate period [s]")
    tune.add_argument("--search", action="store_true", help="search the ultimate gain on the sampled loop")
    tune.add_argument("--sample-period", type=float, help="controller sample period h [s]")
    tune.add_argument("--gain-lo", type=float, help="lower end of the gain search range")
    tune.add_argument("--gain-hi", type=float, help="upper end of the gain search range")
    tune.add_argument("--cycles", type=int, help="cycles of sustained oscillation required")
    tune.set_defaults(func=cmd_tune)

    stability = commands.add_parser("stability", parents=[common], help="Routh-Hurwitz table and verdict")
    stability.add_argument("--poly", type=_floats, help="characteristic polynomial, descending powers")
    stability.add_argument("--closed-loop", action="store_true", help="use the closed-loop characteristic polynomial")
    stability.set_defaults(func=cmd_stability)

    energy = commands.add_parser("energy", parents=[common], help="energy per activity cycle")
    energy.add_argument("--distance", type=float, help="distance to the receiver [m]")
    energy.set_defaults(func=cmd_energy)

    for name, func, text in (("simulate", cmd_simulate, "duty-cycle simulation"),
                             ("sweep", cmd_sweep, "duty-cycle simulation over electrical damping values")):
        sim = commands.add_parser(name, parents=[common], help=text)
        sim.add_argument("--no-controller", action="store_true", help="passive harvester without PID")
        sim.add_argument("--t-end", type=float, help="simulated time [s]")
        sim.add_argument("--dt", type=float, help="integration step [s]")
        sim.add_argument("--distance", type=float, help="distance to the receiver [m]")
        sim.set_defaults(func=func)
        if name == "sweep":
            sim.add_argument("--damping", type=_floats, required=True, help="electrical damping values [N s/m]")
            sim.add_argument("--jobs", type=int, default=1, help="worker processes")

    commands.add_parser("show-preset", parents=[common], help="print the resolved scenario").set_defaults(
        func=cmd_show_preset)
    commands.add_parser("explain", parents=[common], help="effect of each PID gain").set_defaults(func=cmd_explain)
    commands.add_parser("report", parents=[common], help="Markdown report of all analyses").set_defaults(
        func=cmd_report)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = create_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.ERROR if args.quiet else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except NoUltimateGainError as e:
        logger.error("%s", e)
        return EXIT_SEARCH_FAILED
    except LivelockError as e:
        logger.error("%s", e)
        return EXIT_LIVELOCK
    except NotSettledError as e:
        logger.error("%s", e)
        return EXIT_NOT_SETTLED
    except ValueError as e:
        logger.error("%s", e)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
