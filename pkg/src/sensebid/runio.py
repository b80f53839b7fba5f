"""Run-document and CSV serialization, plus trace replay.

Column orders are frozen; every table carries a schema_version column so
downstream plotting stays stable.  A run document embeds the scenario it
consumed, which makes it a self-contained fixture: replaying it must
reproduce the recorded rows byte for byte.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction

from .baseline import run_random_threshold
from .core import AuctionOutcome
from .money import fmt_micro, to_micro
from .oms import OmsConfig, run_oms
from .scenario import Scenario, scenario_from_dict, scenario_to_dict
from .sos import SosConfig, run_sos

SCHEMA_RUN = "sensebid.run.v1"
SCHEMA_TABLES = "sensebid.tables.v1"

DECISION_COLUMNS = (
    "schema_version",
    "run_id",
    "clock",
    "user",
    "threshold",
    "accepted",
    "payment",
    "reason",
    "offer",
    "value_before",
    "value_after",
    "stage_service",
)
STAGE_COLUMNS = (
    "schema_version",
    "run_id",
    "stage",
    "t",
    "stage_service",
    "threshold",
    "sample_size",
    "selected_size",
    "value",
    "spend",
)
RUN_COLUMNS = (
    "schema_version",
    "run_id",
    "mechanism",
    "required_service",
    "replication",
    "seed",
    "users",
    "winners",
    "achieved_value",
    "completed",
    "total_payment",
    "frugality_ratio",
    "frugality_basis",
)
SUMMARY_COLUMNS = (
    "schema_version",
    "mechanism",
    "required_service",
    "replications",
    "mean_total_payment",
    "std_total_payment",
    "mean_achieved_value",
    "std_achieved_value",
    "completion_rate",
    "mean_winner_count",
    "mean_frugality_ratio",
    "frugality_basis",
)


class SchemaError(ValueError):
    pass


def fmt_fraction(x: Fraction | None) -> str:
    if x is None:
        return ""
    return f"{float(x):.12g}"


def fmt_bool(x: bool) -> str:
    return "true" if x else "false"


def decision_rows(run_id: str, outcome: AuctionOutcome) -> list[list[str]]:
    rows = []
    for d in outcome.decisions:
        rows.append(
            [
                SCHEMA_TABLES,
                run_id,
                str(d.clock),
                str(d.user),
                fmt_fraction(d.threshold),
                fmt_bool(d.accepted),
                fmt_micro(d.payment_micro),
                d.reason,
                "" if d.offer_micro is None else fmt_micro(d.offer_micro),
                str(d.value_before),
                str(d.value_after),
                fmt_fraction(d.stage_service),
            ]
        )
    return rows


def stage_rows(run_id: str, outcome: AuctionOutcome) -> list[list[str]]:
    rows = []
    for s in outcome.stages:
        rows.append(
            [
                SCHEMA_TABLES,
                run_id,
                str(s.stage),
                str(s.t),
                fmt_fraction(s.stage_service),
                fmt_fraction(s.threshold),
                str(s.sample_size),
                str(s.selected_size),
                str(s.value),
                fmt_micro(s.spend_micro),
            ]
        )
    return rows


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def mechanism_config_dict(mechanism: str, config) -> dict:
    if mechanism == "sos":
        return {
            "required_service": fmt_fraction(config.required_service),
            "deadline": config.deadline,
            "blowup": fmt_fraction(config.blowup),
            "shrink": fmt_fraction(config.shrink),
            "initial_threshold": fmt_fraction(config.initial_threshold),
        }
    if mechanism == "oms":
        return {
            "required_service": fmt_fraction(config.required_service),
            "winner_rule": config.winner_rule,
            "payment_rule": config.payment_rule,
            "payment_cap": None
            if config.payment_cap_micro is None
            else fmt_micro(config.payment_cap_micro),
        }
    if mechanism == "baseline":
        return {
            "required_service": fmt_fraction(config["required_service"]),
            "deadline": config["deadline"],
            "price": fmt_micro(config["price_micro"]),
        }
    raise ValueError(f"unknown mechanism {mechanism}")


def run_document(
    run_id: str,
    mechanism: str,
    config,
    scenario: Scenario,
    outcome: AuctionOutcome,
    replication: int | None = None,
) -> dict:
    return {
        "schema": SCHEMA_RUN,
        "run_id": run_id,
        "mechanism": mechanism,
        "replication": replication,
        "config": mechanism_config_dict(mechanism, config),
        "scenario": scenario_to_dict(scenario),
        "outcome": {
            "winners": list(outcome.winners),
            "payments": {str(u): fmt_micro(p) for u, p in sorted(outcome.payments_micro.items())},
            "achieved_value": outcome.achieved_value,
            "total_payment": fmt_micro(outcome.total_payment_micro),
            "decisions": decision_rows(run_id, outcome),
            "stages": stage_rows(run_id, outcome),
            "notes": list(outcome.notes),
        },
    }


def save_run_document(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_run_document(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SchemaError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    _check_run_document(doc)
    return doc


def _check_run_document(doc) -> None:
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA_RUN:
        raise SchemaError("not a run document (schema mismatch)")
    for key in ("run_id", "mechanism", "config", "scenario", "outcome"):
        if key not in doc:
            raise SchemaError(f"run document missing key: {key}")
    for key in ("winners", "payments", "decisions", "stages", "total_payment"):
        if key not in doc["outcome"]:
            raise SchemaError(f"run outcome missing key: {key}")


def execute_recorded(doc: dict) -> AuctionOutcome:
    """Re-run the mechanism of a run document on its embedded stream."""
    scenario = scenario_from_dict(doc["scenario"])
    mechanism = doc["mechanism"]
    cfg = doc["config"]
    fn = scenario.value_fn()
    if mechanism == "sos":
        config = SosConfig(
            required_service=cfg["required_service"],
            deadline=int(cfg["deadline"]),
            blowup=cfg["blowup"],
            shrink=cfg["shrink"],
            initial_threshold=cfg["initial_threshold"],
        )
        return run_sos(scenario.stream(), fn, config)
    if mechanism == "oms":
        config = OmsConfig(
            required_service=cfg["required_service"],
            winner_rule=cfg["winner_rule"],
            payment_rule=cfg["payment_rule"],
            payment_cap_micro=None
            if cfg.get("payment_cap") in (None, "")
            else to_micro(cfg["payment_cap"]),
        )
        return run_oms(scenario.stream(), fn, config)
    if mechanism == "baseline":
        return run_random_threshold(
            scenario.stream(),
            fn,
            required_service=cfg["required_service"],
            deadline=int(cfg["deadline"]),
            price_micro=to_micro(cfg["price"]),
        )
    raise SchemaError(f"unknown mechanism {mechanism!r}")


@dataclass
class ReplayDiff:
    section: str
    index: int
    recorded: object
    recomputed: object


def replay_run(doc: dict) -> tuple[AuctionOutcome, list[ReplayDiff]]:
    """Re-execute a recorded run and diff it against the stored outcome."""
    outcome = execute_recorded(doc)
    run_id = doc["run_id"]
    diffs: list[ReplayDiff] = []
    fresh = {
        "winners": list(outcome.winners),
        "payments": {str(u): fmt_micro(p) for u, p in sorted(outcome.payments_micro.items())},
        "achieved_value": outcome.achieved_value,
        "total_payment": fmt_micro(outcome.total_payment_micro),
        "decisions": decision_rows(run_id, outcome),
        "stages": stage_rows(run_id, outcome),
    }
    recorded = doc["outcome"]
    for section in ("winners", "payments", "achieved_value", "total_payment"):
        if recorded.get(section) != fresh[section]:
            diffs.append(ReplayDiff(section, -1, recorded.get(section), fresh[section]))
    for section in ("decisions", "stages"):
        old_rows = recorded.get(section, [])
        new_rows = fresh[section]
        for i in range(max(len(old_rows), len(new_rows))):
            old = old_rows[i] if i < len(old_rows) else None
            new = new_rows[i] if i < len(new_rows) else None
            if old != new:
                diffs.append(ReplayDiff(section, i, old, new))
    return outcome, diffs
