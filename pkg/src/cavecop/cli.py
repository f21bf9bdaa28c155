"""Command line front end: scenario generation, solver runs, simulation,
policy comparison, and oracle checks, all emitting reproducible artifacts.

Exit codes: 0 success, 1 runtime failure inside a command, 2 usage error,
3 unreadable/unwritable files, 4 validation error (bad scenario or
unknown override key).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import model
from .candidates import CandidateSpace
from .cave import StepSchedule, cave_run
from .cop import cop_run, round_placement
from .model import Scenario, ScenarioParams, generate_scenario, load_scenario, save_scenario
from .oracle import SmallInstance, brute_force_cavecop
from .placement import Placement
from .sim import PolicyKind, compare_policies, run_policy

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_VALIDATION = 4

METRICS_HEADER = ["tick", "time_s", "policy", "total_utility", "pct_stall"]
TRACE_HEADER = ["iteration", "D_lambda", "total_utility_selected", "max_link_overload"]
PLACEMENT_HEADER = ["cache_id", "video_id", "version_id", "p_prime", "p_rounded"]


class ValidationFailure(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    command: str
    scenario_path: str | None
    seed: int
    output_dir: str | None
    overrides: dict[str, str]
    options: argparse.Namespace


def _parse_set(pairs: list[str]) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValidationFailure(f"override must look like key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cavecop",
        description="Joint cache-version selection and content placement: "
                    "solvers, simulator, and oracle checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a scenario JSON file")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="scenario file path")
    gen.add_argument("--videos", type=int, default=None)
    gen.add_argument("--versions-per-video", type=int, default=None)
    gen.add_argument("--users-per-edge", type=int, default=None)
    gen.add_argument("--duration-ticks", type=int, default=None)
    gen.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override any scenario parameter by field name")

    def common(p, scenario_required=True):
        p.add_argument("--scenario", required=scenario_required)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override schedule fields of the scenario")
        p.add_argument("--h0", type=float, default=None, help="step size scale")
        p.add_argument("--gamma", type=float, default=None, help="step decay exponent")

    cave_p = sub.add_parser("solve-cave", help="run the selection solver")
    common(cave_p)
    cave_p.add_argument("--iterations", type=int, default=2000)
    cave_p.add_argument("--placement", default=None,
                        help="placement CSV from solve-cop; defaults to root-only")

    cop_p = sub.add_parser("solve-cop", help="run the placement solver")
    common(cop_p)
    cop_p.add_argument("--iterations", type=int, default=100)

    sim_p = sub.add_parser("simulate", help="simulate one policy")
    common(sim_p)
    sim_p.add_argument("--policy", required=True,
                       choices=[p.value for p in PolicyKind])
    sim_p.add_argument("--dump-lambda", action="store_true",
                       help="append per-link price columns to the metrics CSV")

    cmp_p = sub.add_parser("compare", help="simulate all three policies")
    common(cmp_p)

    orc = sub.add_parser("oracle", help="brute-force optimum of a tiny scenario")
    common(orc)
    return parser


def parse_args(argv) -> RunConfig:
    opts = build_parser().parse_args(argv)
    return RunConfig(
        command=opts.command,
        scenario_path=getattr(opts, "scenario", None),
        seed=getattr(opts, "seed", 0),
        output_dir=getattr(opts, "out", None),
        overrides=_parse_set(getattr(opts, "set", [])),
        options=opts,
    )


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")


def _write_manifest(out_dir: Path, config: RunConfig, extra: dict | None = None) -> None:
    doc = {
        "format": model.SCENARIO_FORMAT,
        "command": config.command,
        "scenario": config.scenario_path,
        "seed": config.seed,
        "overrides": config.overrides,
    }
    doc.update(extra or {})
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _apply_generate_overrides(params: ScenarioParams,
                              config: RunConfig) -> ScenarioParams:
    opts = config.options
    direct = {
        "n_videos": opts.videos,
        "versions_per_video": opts.versions_per_video,
        "users_per_edge": opts.users_per_edge,
        "duration_ticks": opts.duration_ticks,
    }
    updates = {k: v for k, v in direct.items() if v is not None}
    fields = {f.name: f.type for f in dataclasses.fields(ScenarioParams)}
    for key, raw in config.overrides.items():
        if key not in fields:
            raise ValidationFailure(f"unknown scenario parameter {key!r}")
        current = getattr(params, key)
        if isinstance(current, tuple):
            updates[key] = tuple(type(current[0])(x) for x in raw.split(","))
        else:
            updates[key] = type(current)(raw)
    return dataclasses.replace(params, **updates)


SCENARIO_OVERRIDE_KEYS = ("duration_ticks", "tick_seconds",
                          "cop_period_ticks", "placement_apply_tick")


def _load_scenario_checked(config: RunConfig) -> Scenario:
    try:
        scenario = load_scenario(config.scenario_path)
    except (OSError, json.JSONDecodeError) as exc:
        raise OSError(f"cannot read scenario {config.scenario_path}: {exc}") from exc
    updates = {}
    for key, raw in config.overrides.items():
        if key not in SCENARIO_OVERRIDE_KEYS:
            raise ValidationFailure(
                f"unknown override {key!r}; scenario overrides are "
                f"{', '.join(SCENARIO_OVERRIDE_KEYS)}")
        updates[key] = type(getattr(scenario, key))(raw)
    if updates:
        scenario = dataclasses.replace(scenario, **updates)
    problems = model.validate(scenario)
    if problems:
        raise ValidationFailure("invalid scenario: " + "; ".join(problems[:5]))
    return scenario


def _schedule_from(config: RunConfig) -> StepSchedule | None:
    h0, gamma = config.options.h0, config.options.gamma
    if h0 is None and gamma is None:
        return None
    base = StepSchedule()
    return StepSchedule(h0 if h0 is not None else base.h0,
                        gamma if gamma is not None else base.gamma)


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _placement_rows(scenario, pseudo, placement):
    rows = []
    cat = scenario.catalog
    for i, cache_id in enumerate(pseudo.cache_ids):
        for v in range(len(cat.versions)):
            p_prime = pseudo.matrix[i, v]
            p_round = int(placement.matrix[i, v])
            if p_prime > 0.0 or p_round:
                rows.append((cache_id, cat.versions[v].video_id, v,
                             repr(float(p_prime)), p_round))
    return rows


def _cmd_generate(config: RunConfig) -> int:
    params = _apply_generate_overrides(ScenarioParams(), config)
    scenario = generate_scenario(params, config.options.seed)
    problems = model.validate(scenario)
    if problems:
        raise ValidationFailure("generated scenario is invalid: " + problems[0])
    save_scenario(scenario, config.options.out)
    print(f"scenario: {len(scenario.topology.caches)} caches, "
          f"{len(scenario.users)} users, {scenario.catalog.n_videos} videos "
          f"-> {config.options.out}")
    return EXIT_OK


def _cmd_solve_cave(config: RunConfig) -> int:
    scenario = _load_scenario_checked(config)
    placement = Placement.root_only(scenario)
    if config.options.placement:
        placement = _load_placement_csv(config.options.placement, scenario)
    result = cave_run(scenario, placement, config.options.iterations,
                      schedule=_schedule_from(config))
    out = _out_dir(config)
    _write_csv(out / "cave_trace.csv", TRACE_HEADER,
               [(r.iteration, repr(r.dual_value), repr(r.total_utility),
                 repr(r.max_link_overload)) for r in result.trace])
    _write_manifest(out, config, {"iterations": config.options.iterations})
    last = result.trace[-1]
    print(f"D(lambda)={last.dual_value:.4f} utility={last.total_utility:.4f} "
          f"max_overload={last.max_link_overload:.4f}")
    return EXIT_OK


def _load_placement_csv(path: str, scenario: Scenario) -> Placement:
    placement = Placement.root_only(scenario)
    try:
        lines = Path(path).read_text(encoding="utf-8").strip().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read placement {path}: {exc}") from exc
    for line in lines[1:]:
        cache_id, _, version_id, _, p_round = line.split(",")
        if int(p_round):
            placement.matrix[placement.row_index(int(cache_id)), int(version_id)] = True
    return placement


def _cmd_solve_cop(config: RunConfig) -> int:
    scenario = _load_scenario_checked(config)
    result = cop_run(scenario, config.options.iterations,
                     schedule=_schedule_from(config))
    out = _out_dir(config)
    _write_csv(out / "placement.csv", PLACEMENT_HEADER,
               _placement_rows(scenario, result.pseudo, result.placement))
    _write_manifest(out, config, {"iterations": config.options.iterations})
    stored = int(result.placement.matrix.sum())
    print(f"D'(lambda',mu')={result.trace[-1].dual_value:.4f} "
          f"stored_versions={stored} avg_utility={result.averaged_utility:.4f}")
    return EXIT_OK


def _metrics_csv_rows(rows, price_log=None, link_ids=None):
    for i, r in enumerate(rows):
        base = (r.tick, repr(r.time_s), r.policy,
                repr(r.total_utility), repr(r.pct_stall))
        if price_log is not None:
            yield base + tuple(repr(float(x)) for x in price_log[i])
        else:
            yield base


def _cmd_simulate(config: RunConfig) -> int:
    scenario = _load_scenario_checked(config)
    policy = PolicyKind(config.options.policy)
    price_log = [] if config.options.dump_lambda else None
    rows = run_policy(scenario, policy, cave_schedule=_schedule_from(config),
                      price_log=price_log)
    out = _out_dir(config)
    header = list(METRICS_HEADER)
    if price_log is not None:
        space = CandidateSpace.from_scenario(scenario)
        header += [f"lambda_{l}" for l in space.link_ids]
    _write_csv(out / f"metrics_{policy.value}.csv", header,
               _metrics_csv_rows(rows, price_log))
    _write_manifest(out, config, {"policy": policy.value})
    last = rows[-1]
    print(f"policy={policy.value} final_utility={last.total_utility:.4f} "
          f"final_pct_stall={last.pct_stall:.4f}")
    return EXIT_OK


def _cmd_compare(config: RunConfig) -> int:
    scenario = _load_scenario_checked(config)
    out = _out_dir(config)
    space = CandidateSpace.from_scenario(scenario)
    summaries = {}
    tail = max(1, scenario.duration_ticks // 4)
    for policy in PolicyKind:
        rows = run_policy(scenario, policy, cave_schedule=_schedule_from(config),
                          space=space)
        _write_csv(out / f"metrics_{policy.value}.csv", METRICS_HEADER,
                   _metrics_csv_rows(rows))
        last = rows[-tail:]
        summaries[policy.value] = (
            sum(r.total_utility for r in last) / len(last),
            sum(r.pct_stall for r in last) / len(last),
        )
    _write_manifest(out, config)
    print(f"{'policy':<12} {'mean_utility':>14} {'mean_pct_stall':>15}")
    for name, (util, stall) in summaries.items():
        print(f"{name:<12} {util:>14.4f} {stall:>15.4f}")
    return EXIT_OK


def _cmd_oracle(config: RunConfig) -> int:
    scenario = _load_scenario_checked(config)
    instance = SmallInstance(scenario)
    result = brute_force_cavecop(instance)
    if config.output_dir:
        out = _out_dir(config)
        doc = {"best_utility": result.best_utility,
               "best_z": {str(k): list(v) for k, v in result.best_z.items()}}
        with open(out / "oracle.json", "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        _write_manifest(out, config)
    print(f"integer_optimum={result.best_utility:.6f}")
    return EXIT_OK


COMMANDS = {
    "generate": _cmd_generate,
    "solve-cave": _cmd_solve_cave,
    "solve-cop": _cmd_solve_cop,
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "oracle": _cmd_oracle,
}


def execute(config: RunConfig) -> int:
    try:
        return COMMANDS[config.command](config)
    except ValidationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # solver/oracle failures
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main(argv=None) -> int:
    try:
        config = parse_args(sys.argv[1:] if argv is None else argv)
    except ValidationFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return execute(config)


if __name__ == "__main__":
    sys.exit(main())
