"""Command-line interface: run experiments, verify properties, replay traces,
and emit scenario fixtures.

Exit codes: 0 ok, 1 property failure (or nonempty replay diff), 2 config
or schema error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .configio import ConfigError, load_config
from .experiment import (
    ExperimentConfig,
    experiment_config_from_raw,
    run_experiment,
    suite_config_from_raw,
    verify_suite,
)
from .runio import (
    DECISION_COLUMNS,
    RUN_COLUMNS,
    STAGE_COLUMNS,
    SUMMARY_COLUMNS,
    SchemaError,
    load_run_document,
    replay_run,
    save_run_document,
    write_csv,
)
from .scenario import gen_scenario, save_scenario

EXIT_OK = 0
EXIT_PROPERTY_FAILURE = 1
EXIT_CONFIG_ERROR = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sensebid",
        description="Service-constrained procurement auction simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment sweep")
    run_p.add_argument("--config", required=True, help="experiment config (YAML)")
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--out", default="out", help="output directory")
    run_p.add_argument("--workers", type=int, default=None, help="parallel replications")
    run_p.add_argument("--format", choices=("csv", "json"), default="csv")

    verify_p = sub.add_parser("verify", help="run the property suites")
    verify_p.add_argument("--config", required=True, help="suite config (YAML)")
    verify_p.add_argument("--out", default=None, help="directory for the report")
    verify_p.add_argument("--format", choices=("csv", "json"), default="json")

    replay_p = sub.add_parser("replay", help="re-execute a recorded run and diff it")
    replay_p.add_argument("trace", help="run document (JSON) produced by `run --format json`")

    gen_p = sub.add_parser("gen", help="emit a scenario fixture")
    gen_p.add_argument("--config", required=True, help="config with a scenario section")
    gen_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    gen_p.add_argument("--out", required=True, help="output JSON path")
    return parser


def cmd_run(args) -> int:
    raw = load_config(args.config)
    cfg = experiment_config_from_raw(raw)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.workers is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)
    with_documents = args.format == "json"
    result = run_experiment(cfg, with_documents=with_documents)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "runs.csv", RUN_COLUMNS, result.run_rows())
    write_csv(
        out / "decisions.csv",
        DECISION_COLUMNS,
        [row for rec in result.records for row in rec.decision_rows],
    )
    write_csv(
        out / "stages.csv",
        STAGE_COLUMNS,
        [row for rec in result.records for row in rec.stage_rows],
    )
    write_csv(out / "summary.csv", SUMMARY_COLUMNS, result.summary_rows)
    if with_documents:
        runs_dir = out / "runs"
        runs_dir.mkdir(exist_ok=True)
        for rec in result.records:
            if rec.document is not None:
                save_run_document(rec.document, runs_dir / f"{rec.run_id}.json")
        with open(out / "summary.json", "w") as fh:
            json.dump(
                {"schema": "sensebid.summary.v1",
                 "columns": list(SUMMARY_COLUMNS),
                 "rows": result.summary_rows},
                fh, sort_keys=True, indent=1,
            )
            fh.write("\n")
    print(f"wrote {len(result.records)} runs to {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    raw = load_config(args.config)
    cfg = suite_config_from_raw(raw)
    result = verify_suite(cfg)
    doc = result.to_dict()
    for check in doc["checks"]:
        status = "pass" if check["passed"] else "FAIL"
        extra = "" if check["mandatory"] else " (advisory)"
        print(f"{status}  {check['name']}{extra}  {check['stats']}")
        if not check["passed"]:
            for violation in check["violations"][:5]:
                print(f"      counterexample: {violation}")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "verify_report.json", "w") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")
        if args.format == "csv":
            rows = [
                ["sensebid.verify.v1", c["name"], "true" if c["passed"] else "false",
                 "true" if c["mandatory"] else "false", json.dumps(c["stats"], sort_keys=True)]
                for c in doc["checks"]
            ]
            write_csv(out / "verify_summary.csv",
                      ("schema_version", "check", "passed", "mandatory", "stats"), rows)
    return EXIT_OK if result.passed else EXIT_PROPERTY_FAILURE


def cmd_replay(args) -> int:
    doc = load_run_document(args.trace)
    _outcome, diffs = replay_run(doc)
    if not diffs:
        print(f"replay of {doc['run_id']}: outcomes identical")
        return EXIT_OK
    print(f"replay of {doc['run_id']}: {len(diffs)} differing rows")
    for diff in diffs[:20]:
        print(f"  {diff.section}[{diff.index}]")
        print(f"    recorded:   {diff.recorded}")
        print(f"    recomputed: {diff.recomputed}")
    return EXIT_PROPERTY_FAILURE


def cmd_gen(args) -> int:
    raw = load_config(args.config)
    cfg = experiment_config_from_raw(raw) if raw.has("mechanism") else None
    if cfg is not None:
        scenario_cfg = cfg.scenario
        seed = cfg.seed
    else:
        # allow a bare config with only a scenario section
        from .scenario import ScenarioConfig

        kw = raw.get("scenario")
        if not isinstance(kw, dict):
            raise ConfigError("missing scenario section", raw.source)
        try:
            scenario_cfg = ScenarioConfig(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"scenario: {exc}", raw.source, raw.line_of("scenario"))
        seed = raw.get_typed("seed", int, 0)
    if args.seed is not None:
        seed = args.seed
    scenario = gen_scenario(scenario_cfg, seed)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_scenario(scenario, out)
    print(f"wrote scenario with {scenario.n} users to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "replay":
            return cmd_replay(args)
        if args.command == "gen":
            return cmd_gen(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    parser.error("unknown command")
    return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
