"""
Command-line front end.

    run      SCENARIO [--out FILE]            one run with the scripted schedule
    explore  SCENARIO... [--out-dir DIR]      bounded exploration, summary and witnesses
    check    TRACE [--properties ...] [--format json|csv]
    report   SUMMARY [--format json|csv|html]

CSV output has one row per (trace, property).

Exit codes: 0 success, 1 violated or unexpected verdicts, 2 invalid input,
3 exploration larger than the cap. Environment overrides: CRA_CONFIG,
CRA_SEED, CRA_WORKERS, CRA_CAP, CRA_LOG_LEVEL.
"""
import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

from lib.data.dataplot import verdict_plotter

from .campaign import Campaign
from .core import Trace
from .explorer import VERDICT_COLUMNS, decision_text, verdict_rows
from .errors import ConfigurationError, CRAError, ExplorationTooLarge, ScenarioError, SpecError, TraceError
from .tracecheck import parse_properties
from .utils import Config

EXIT_OK = 0
EXIT_VIOLATED = 1
EXIT_INVALID = 2
EXIT_TOO_LARGE = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cra", description="Collective remote attestation simulator and trace checker")
    parser.add_argument("--config", default=os.environ.get("CRA_CONFIG", "config.yaml"), help="Path to config.yaml")
    parser.add_argument("--log-level", default=os.environ.get("CRA_LOG_LEVEL"), help="Logging level")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Execute one run of a scenario and write its trace")
    run.add_argument("scenario")
    run.add_argument("--out", help="Trace file (default: <trace_dir>/<scenario>.trace)")
    run.add_argument("--seed", type=int, default=_env_int("CRA_SEED"))

    exp = sub.add_parser("explore", help="Explore adversary schedules within the scenario bounds")
    exp.add_argument("scenarios", nargs="+")
    exp.add_argument("--out-dir", help="Report directory (default: <report_dir>/<scenario>); "
                                       "one subdirectory per scenario when several are given")
    exp.add_argument("--seed", type=int, default=_env_int("CRA_SEED"))
    exp.add_argument("--workers", type=int, default=_env_int("CRA_WORKERS"))
    exp.add_argument("--cap", type=int, default=_env_int("CRA_CAP"))
    exp.add_argument("--properties", help="Comma-separated property list (default: the scenario's)")

    chk = sub.add_parser("check", help="Check properties on a trace file")
    chk.add_argument("trace")
    chk.add_argument("--properties", help="Comma-separated property list (default: all)")
    chk.add_argument("--format", choices=["json", "csv"], default="json")

    rep = sub.add_parser("report", help="Render a saved summary")
    rep.add_argument("summary")
    rep.add_argument("--format", choices=["json", "csv", "html"], default="json")
    rep.add_argument("--out", help="Output file (default: stdout; required for html)")
    return parser


def _env_int(name: str) -> Optional[int]:
    value = os.environ.get(name)
    return int(value) if value not in (None, "") else None


def _properties(text: Optional[str]):
    if text is None:
        return None
    properties = parse_properties(text.split(","))
    if not properties:
        raise SpecError("empty property list")
    return properties


def cmd_run(campaign: Campaign, args) -> int:
    scenario = campaign.load(args.scenario)
    if args.seed is not None:
        scenario.data["seed"] = args.seed
    out = args.out or str(Path(campaign.config.get('output.trace_dir', 'traces')) / f"{scenario.name}.trace")
    campaign.run(scenario, out)
    return EXIT_OK


def cmd_explore(campaign: Campaign, args) -> int:
    scenarios = [campaign.load(path) for path in args.scenarios]
    if args.seed is not None:
        for scenario in scenarios:
            scenario.data["seed"] = args.seed
    properties = _properties(args.properties)
    report_dir = Path(campaign.config.get('output.report_dir', 'reports'))
    if len(scenarios) > 1:
        problems = campaign.suite(scenarios, args.out_dir or report_dir, properties)
        return EXIT_VIOLATED if any(problems.values()) else EXIT_OK

    scenario = scenarios[0]
    out_dir = args.out_dir or str(report_dir / scenario.name)
    result = campaign.explore(scenario, out_dir, properties)
    mismatches = result.mismatches(scenario.expect)
    for problem in mismatches:
        campaign.logger.error(f"❌ {problem}")
    if mismatches or result.ordering_violations:
        return EXIT_VIOLATED
    return EXIT_OK


def cmd_check(campaign: Campaign, args) -> int:
    try:
        trace = Trace.load(args.trace)
    except OSError as e:
        raise TraceError(f"cannot read trace {args.trace}: {e}") from e
    verdicts = campaign.check(trace, _properties(args.properties))
    if args.format == "csv":
        rows = verdict_rows(trace.header.get("scenario", ""), Path(args.trace).stem, trace.header.get("variant", ""),
                            decision_text(trace), [(v.property.value, v.result.value, v.witness) for v in verdicts])
        sys.stdout.write(render_csv(rows))
    else:
        print(json.dumps([v.to_json() for v in verdicts], sort_keys=True))
    return EXIT_VIOLATED if any(v.violated for v in verdicts) else EXIT_OK


def render_csv(rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(VERDICT_COLUMNS)
    writer.writerows(rows)
    return buffer.getvalue()


def _summary_rows(summary: dict) -> list:
    path = summary.get("verdicts")
    if not path:
        raise ConfigurationError("summary has no per-trace verdicts")
    try:
        with open(path, newline="") as f:
            return list(csv.reader(f))[1:]
    except OSError as e:
        raise ConfigurationError(f"cannot read verdicts {path}: {e}") from e


def cmd_report(campaign: Campaign, args) -> int:
    try:
        summary = json.loads(Path(args.summary).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ScenarioError(f"cannot read summary {args.summary}", [str(e)]) from e
    if args.format == "html":
        if not args.out:
            raise ConfigurationError("--out is required for html reports")
        verdict_plotter(summary).write_html(args.out)
        campaign.logger.info(f"📈 Report written to {args.out}")
        return EXIT_OK
    if args.format == "csv":
        text = render_csv(_summary_rows(summary))
    else:
        text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "explore": cmd_explore, "check": cmd_check, "report": cmd_report}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    config = Config(args.config)
    logger = config.logger(args.command, args.log_level)
    campaign = Campaign(config, workers=getattr(args, "workers", None), cap=getattr(args, "cap", None),
                        logger=logger)
    try:
        return COMMANDS[args.command](campaign, args)
    except ExplorationTooLarge as e:
        logger.error(f"Exploration too large: {e}")
        return EXIT_TOO_LARGE
    except (ScenarioError, ConfigurationError, SpecError, TraceError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_INVALID
    except CRAError as e:
        logger.error(f"Error: {e}")
        return EXIT_INVALID
