"""The `metamine` command line tool.

Six subcommands cover the pipeline end to end: simulate episodes, collect
traces into a dataset, mine a model, compile it into a policy, run the
full gated cycle experiment, and flatten an experiment report to CSV.
Every output file is byte-deterministic given the same inputs and seed;
stochastic subcommands require an explicit seed (there is no wall-clock
default).
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path
from typing import Any

from .cycle import (
    cycle_config_from_json,
    cycles_csv_from_json,
    experiment_to_json,
    run_experiment,
)
from .errors import ConsistencyError, InputFormatError, MetamineError, MiningError, PolicyError, SchemaError
from .introspection import MetadataProvider, collect_report, featurise, load_dataset, save_dataset
from .jsonio import read_json, write_json
from .knowledge import load_schema, save_schema
from .mining import MiningConfig, fit_rules_model, fit_tree_model, load_model, mining_config_from_json, save_model
from .policy import (
    compile_policy,
    initial_policy,
    load_policy,
    policy_id,
    rules_to_ruleset,
    save_policy,
    tree_to_rules,
)
from .rover import load_traces, load_world, run_episodes, save_traces, world_schema

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_SCHEMA = 4
EXIT_INTERNAL = 5

EXIT_CODES_DOC = """\
exit codes:
  0  success
  2  usage error (unknown subcommand, bad or missing arguments)
  3  input format error (missing or unparsable file)
  4  schema or consistency error (valid files that do not fit together)
  5  internal error
"""


class UsageError(Exception):
    """Argument combinations argparse cannot express (e.g. missing seed)."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metamine",
        description="Closed-loop self-adaptation: simulate, introspect, mine, compile, deploy.",
        epilog=EXIT_CODES_DOC,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("simulate", help="run episodes on a world and write a trace CSV",
                       epilog=EXIT_CODES_DOC, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--world", required=True, help="world definition JSON")
    p.add_argument("--policy", help="policy JSON (default: the world's naive default policy)")
    p.add_argument("--episodes", type=int, default=100, help="episode count (default 100)")
    p.add_argument("--seed", type=int, help="master seed (falls back to the world file's master_seed)")
    p.add_argument("--explore", type=float, default=0.0, help="exploration rate in [0,1] (default 0)")
    p.add_argument("--threads", type=int, default=1, help="episode workers (default 1)")
    p.add_argument("--out", required=True, help="trace CSV to write")

    p = sub.add_parser("collect", help="turn a trace CSV into a labeled dataset CSV (+ sidecar)",
                       epilog=EXIT_CODES_DOC, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--traces", required=True, help="trace CSV from `simulate`")
    p.add_argument("--world", help="world definition JSON (source of the schema)")
    p.add_argument("--schema", help="schema JSON (alternative to --world)")
    p.add_argument("--label-rule", required=True, choices=("outcome-as-class", "strategy-as-class"),
                   help="how rows are labeled")
    p.add_argument("--select", help="comma-separated attributes to keep (default: world attributes + class)")
    p.add_argument("--bins", type=int, default=4, help="equal-width bins for numeric attributes (default 4)")
    p.add_argument("--out", required=True, help="dataset CSV to write (sidecar: <out>.meta.json)")

    p = sub.add_parser("mine", help="mine a model from a dataset CSV",
                       epilog=EXIT_CODES_DOC, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--data", required=True, help="dataset CSV from `collect`")
    p.add_argument("--algo", required=True, choices=("tree", "apriori"), help="model family")
    p.add_argument("--config", help="mining config JSON (flag values override it)")
    p.add_argument("--max-depth", type=int, help="tree depth limit")
    p.add_argument("--min-leaf", type=int, help="minimum rows to keep splitting")
    p.add_argument("--min-support", type=float, help="apriori support threshold")
    p.add_argument("--min-confidence", type=float, help="rule confidence threshold")
    p.add_argument("--cv-folds", type=int, help="cross-validation folds")
    p.add_argument("--seed", type=int, help="fold shuffle seed (required for --algo tree)")
    p.add_argument("--out", required=True, help="model JSON to write")

    p = sub.add_parser("compile", help="compile a model file into a policy file",
                       epilog=EXIT_CODES_DOC, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--model", required=True, help="model JSON from `mine`")
    p.add_argument("--default", required=True, help="default action when no rule matches")
    p.add_argument("--schema", help="schema JSON for domain validation and typed values")
    p.add_argument("--min-confidence", type=float, default=0.0,
                   help="drop association rules below this confidence (default: keep all)")
    p.add_argument("--out", required=True, help="policy JSON to write")

    p = sub.add_parser("cycle", help="run a full gated multi-cycle experiment",
                       epilog=EXIT_CODES_DOC, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", required=True, help="experiment config JSON (see README)")
    p.add_argument("--world", help="world definition JSON (overrides the config's world path)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config's master_seed)")
    p.add_argument("--cycles", type=int, help="cycle count (overrides the config's cycles)")
    p.add_argument("--threads", type=int, default=1, help="episode workers (default 1)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("report", help="flatten an experiment JSON into a per-cycle CSV",
                       epilog=EXIT_CODES_DOC, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--experiment", required=True, help="experiment JSON from `cycle`")
    p.add_argument("--out", required=True, help="CSV to write")

    return parser


def _say(text: str) -> None:
    print(text)


def cmd_simulate(args: argparse.Namespace) -> int:
    world = load_world(args.world)
    schema = world_schema(world)
    policy = load_policy(args.policy) if args.policy else initial_policy(schema)
    seed = args.seed if args.seed is not None else world.master_seed
    if seed is None:
        raise UsageError("simulate needs --seed (or a master_seed in the world file)")
    if args.episodes < 1:
        raise UsageError("--episodes must be >= 1")
    traces = run_episodes(world, policy, args.episodes, seed, explore=args.explore, threads=args.threads)
    save_traces(traces, schema, args.out)
    reached = sum(t.reached_goal for t in traces)
    _say(f"wrote {len(traces)} episodes ({reached}/{len(traces)} reached the goal) to {args.out}")
    return EXIT_OK


def _schema_from_args(args: argparse.Namespace):
    if args.schema and args.world:
        raise UsageError("give either --schema or --world, not both")
    if args.schema:
        return load_schema(args.schema)
    if args.world:
        return world_schema(load_world(args.world))
    raise UsageError("one of --schema or --world is required")


def cmd_collect(args: argparse.Namespace) -> int:
    schema = _schema_from_args(args)
    traces = load_traces(args.traces, schema)
    if args.select:
        selected = tuple(name.strip() for name in args.select.split(",") if name.strip())
    else:
        selected = tuple(a.name for a in schema.scoped("world")) + (schema.class_attribute,)
    provider = MetadataProvider(selected, args.label_rule)
    reports = [collect_report(t, provider, schema) for t in traces]
    dataset = featurise(reports, args.bins)
    save_dataset(dataset, args.out)
    _say(f"wrote {len(dataset)} instances ({args.label_rule}) to {args.out}")
    return EXIT_OK


def cmd_mine(args: argparse.Namespace) -> int:
    config = mining_config_from_json(read_json(args.config)) if args.config else MiningConfig()
    overrides: dict[str, Any] = {}
    for flag, field_name in (("max_depth", "max_depth"), ("min_leaf", "min_leaf_instances"),
                             ("min_support", "min_support"), ("min_confidence", "min_confidence"),
                             ("cv_folds", "cv_folds"), ("seed", "seed")):
        value = getattr(args, flag)
        if value is not None:
            overrides[field_name] = value
    if overrides:
        config = dataclasses.replace(config, **overrides)
    if args.algo == "tree":
        seed_given = args.seed is not None or (args.config and "seed" in read_json(args.config))
        if not seed_given:
            raise UsageError("mine --algo tree shuffles cross-validation folds; give --seed "
                             "(or a seed in the config file)")
    dataset = load_dataset(args.data)
    model = fit_tree_model(dataset, config) if args.algo == "tree" else fit_rules_model(dataset, config)
    save_model(model, args.out)
    if model.kind == "tree":
        detail = f"cv_mean={model.evaluation['cv_mean']}"
    else:
        detail = f"{model.evaluation['n_frequent']} frequent sets, {model.evaluation['n_rules']} rules"
    _say(f"wrote {model.kind} model ({detail}) to {args.out}")
    return EXIT_OK


def _typed_action(value: str, schema, control: str) -> Any:
    if schema is None:
        return value
    attr = schema.attribute(control)
    if attr.kind == "boolean":
        if value in ("true", "false"):
            return value == "true"
        raise UsageError(f"--default for boolean control must be true or false, got {value!r}")
    return value


def cmd_compile(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    schema = load_schema(args.schema) if args.schema else None
    control = schema.class_attribute if schema is not None else model.label_attribute
    if model.kind == "tree":
        ruleset = tree_to_rules(model.tree, control)
    else:
        ruleset = rules_to_ruleset(model.rules, control, args.min_confidence)
    default = _typed_action(args.default, schema, control)
    policy = compile_policy(ruleset, default, schema=schema,
                            provenance={"sources": [model.kind], "model_scope": model.scope})
    save_policy(policy, args.out)
    _say(f"wrote policy {policy_id(policy)} ({len(ruleset.rules)} rules, default {args.default}) to {args.out}")
    return EXIT_OK


def cmd_cycle(args: argparse.Namespace) -> int:
    raw = read_json(args.config)
    if not isinstance(raw, dict):
        raise InputFormatError("NotAnObject", "cycle config must be a JSON object")
    raw = dict(raw)
    world_path = args.world or raw.pop("world", None)
    if world_path is None:
        raise UsageError("cycle needs a world: --world or a \"world\" path in the config file")
    if not Path(world_path).is_absolute() and not args.world:
        world_path = Path(args.config).parent / world_path
    n_cycles = args.cycles if args.cycles is not None else raw.pop("cycles", None)
    raw.pop("cycles", None)
    if n_cycles is None:
        raise UsageError("cycle needs a cycle count: --cycles or \"cycles\" in the config file")
    if args.seed is not None:
        raw["master_seed"] = args.seed
    if "master_seed" not in raw:
        raise UsageError("cycle needs a master seed: --seed or \"master_seed\" in the config file")
    world = load_world(world_path)
    config = cycle_config_from_json(raw)

    out_dir = Path(args.out)
    traces_dir = out_dir / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)
    schema = world_schema(world)

    def sink(cycle_index: int, traces) -> None:
        save_traces(traces, schema, traces_dir / f"cycle_{cycle_index:02d}.csv")

    experiment = run_experiment(world, config, n_cycles, trace_sink=sink, threads=args.threads)
    exp_json = experiment_to_json(experiment)
    write_json(out_dir / "experiment.json", exp_json)
    (out_dir / "cycles.csv").write_text(cycles_csv_from_json(exp_json), encoding="utf-8")
    save_policy(experiment.final_policy, out_dir / "final.policy.json")
    save_schema(schema, out_dir / "schema.json")
    for cycle in experiment.cycles:
        _say(f"cycle {cycle.index}: {cycle.decision} ({cycle.reason})")
    _say(f"final policy {exp_json['final_policy_id']} -> {out_dir / 'final.policy.json'}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    exp_json = read_json(args.experiment)
    if not isinstance(exp_json, dict):
        raise InputFormatError("NotAnObject", "experiment file must be a JSON object")
    csv_text = cycles_csv_from_json(exp_json)
    Path(args.out).write_text(csv_text, encoding="utf-8")
    _say(f"wrote {len(csv_text.splitlines()) - 1} cycle rows to {args.out}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "collect": cmd_collect,
    "mine": cmd_mine,
    "compile": cmd_compile,
    "cycle": cmd_cycle,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:  # argparse already printed usage/help
        code = exit_.code
        return code if isinstance(code, int) else EXIT_USAGE
    if not args.command:
        parser.print_usage(sys.stderr)
        print("metamine: error: a subcommand is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"metamine: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InputFormatError as exc:
        print(f"metamine: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SchemaError, ConsistencyError, MiningError, PolicyError) as exc:
        print(f"metamine: error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except MetamineError as exc:
        print(f"metamine: error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except KeyError as exc:
        print(f"metamine: error: missing field {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # anything else is a bug, not user error
        print(f"metamine: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
