import csv
import json
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .core import Trace
from .explorer import VERDICT_COLUMNS, Bounds, ExplorationResult, explore
from .scenario import Scenario
from .tracecheck import PropertyId, Verdict, check_all, classify_qosa
from .errors import NoClaims
from .utils import Config, Logger


def write_json(path: Path, data) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path: Path, rows) -> Path:
    """Verdict rows under the standard column header."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(VERDICT_COLUMNS)
        writer.writerows(rows)
    return path


class Campaign:
    """Runs scenarios, checks their traces and writes traces, summaries and witnesses."""

    def __init__(self, config: Optional[Config] = None, workers: Optional[int] = None,
                 cap: Optional[int] = None, logger: Optional[Logger] = None):
        self.config = config or Config()
        self.workers = workers or self.config.get('explorer.workers', 1)
        self.cap = cap or self.config.get('explorer.cap', 10_000_000)
        self.logger = logger or self.config.logger("campaign")

    def load(self, path) -> Scenario:
        return Scenario.load(path, self.config)

    def run(self, scenario: Scenario, out_path) -> Trace:
        """Single run with the scenario's scripted schedule."""
        self.logger.info(f"▶️ Running {scenario.name} ({scenario.protocol_name}, "
                         f"adversary {scenario.model.flags or ['none']})")
        trace = scenario.run()
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        trace.dump(out_path)
        if "fault" in trace.header:
            self.logger.warning(f"⚠️ Run stopped by a handler fault: {trace.header['fault']}")
        self.logger.info(f"💾 {len(trace)} events written to {out_path}")
        return trace

    def check(self, trace: Trace, properties: Optional[List[PropertyId]] = None) -> List[Verdict]:
        verdicts = check_all(trace, properties)
        for v in verdicts:
            self.logger.verdict(v.property.value, v.result.value, v.detail)
        try:
            self.logger.info(f"QoSA: {classify_qosa(trace).value}")
        except NoClaims:
            self.logger.info("QoSA: no claims")
        return verdicts

    def explore(self, scenario: Scenario, out_dir, properties: Optional[List[PropertyId]] = None,
                bounds: Optional[Bounds] = None) -> ExplorationResult:
        out_dir = Path(out_dir)
        bounds = bounds or Bounds.of(scenario, max_interventions=scenario.bounds.get(
            'max_interventions', self.config.get('explorer.max_interventions', 2)))

        self.logger.banner(f"🔍 EXPLORING {scenario.name}")
        self.logger.info(f"Protocol: {scenario.protocol_name} | variants: {scenario.variants}")
        self.logger.info(f"Adversary: {scenario.model.flags or ['none']} | bounds: {bounds}")
        self.logger.rule()

        started = time.perf_counter()
        result = explore(scenario, bounds, properties, workers=self.workers, cap=self.cap)
        elapsed = time.perf_counter() - started

        witness_paths = {}
        for prop, trace in sorted(result.witnesses.items()):
            path = out_dir / "witnesses" / f"{scenario.name}_{prop}.trace"
            trace.dump(path)
            witness_paths[prop] = str(path)
        verdicts_path = write_csv(out_dir / "verdicts.csv", result.verdict_rows())
        write_json(out_dir / "summary.json", result.summary(witness_paths, str(verdicts_path)))
        write_json(out_dir / "timing.json", {
            "seconds": round(elapsed, 3),
            "schedules": result.schedules,
            "schedules_per_second": round(result.schedules / elapsed, 1) if elapsed > 0 else None,
        })
        self._print_result(result, elapsed)
        return result

    def suite(self, scenarios: List[Scenario], out_dir,
              properties: Optional[List[PropertyId]] = None) -> Dict[str, List[str]]:
        """Explore several scenarios into out_dir/<name>; returns the problems found per scenario."""
        mismatches = {}
        runtimes = []
        for scenario in scenarios:
            started = time.perf_counter()
            result = self.explore(scenario, Path(out_dir) / scenario.name, properties)
            runtimes.append(time.perf_counter() - started)
            problems = result.mismatches(scenario.expect)
            if result.ordering_violations:
                problems.append(f"strength ordering broken on {len(result.ordering_violations)} traces")
            mismatches[scenario.name] = problems
        self.logger.banner("📊 SUITE COMPLETE")
        if runtimes:
            self.logger.info(f"Scenarios: {len(runtimes)} | total {np.sum(runtimes):.1f}s | "
                             f"mean {np.mean(runtimes):.1f}s | max {np.max(runtimes):.1f}s")
        for name, problems in mismatches.items():
            self.logger.info(f"{'✅' if not problems else '❌'} {name}")
            for problem in problems:
                self.logger.info(f"    {problem}")
        return mismatches

    def _print_result(self, result: ExplorationResult, elapsed: float):
        self.logger.info(f"Schedules explored: {result.schedules} (estimate {result.estimate}) in {elapsed:.1f}s")
        for prop, counts in sorted(result.counts.items()):
            outcome = result.outcome(PropertyId(prop))
            self.logger.verdict(prop, outcome,
                                f"{counts['holds']} holds / {counts['violated']} violated / "
                                f"{counts['inapplicable']} inapplicable")
        if result.faults:
            self.logger.warning(f"⚠️ {result.faults} runs stopped by handler faults")
        if result.ordering_violations:
            self.logger.error(f"Strength ordering broken on {len(result.ordering_violations)} traces")
        self.logger.rule()
