"""
Bounded exploration of adversary schedules.

Exhaustive mode walks the tree of engine choice points depth first: a run is
replayed from a prefix of option indices, and the next prefix is the
odometer successor of the choices the run recorded. Every schedule within the
bounds is executed exactly once. Random mode samples runs with seeded
uniform choices. Violations are shrunk by removing adversary decisions one at
a time and re-executing.
"""
from __future__ import annotations

import concurrent.futures
import logging
from dataclasses import dataclass, field
from typing import Iterator

from .core import Trace
from .errors import ConfigurationError, ExplorationTooLarge, NotAViolation
from .scenario import Scenario
from .strategies import RandomStrategy, ReplayStrategy, ScriptedStrategy, next_prefix
from .tracecheck import GroupSpec, PropertyId, Result, check, check_all, strength_violations

log = logging.getLogger("cra.explorer")

DEFAULT_CAP = 10_000_000
VERDICT_COLUMNS = ["scenario", "trace", "variant", "decisions", "property", "result", "witness"]


@dataclass(frozen=True)
class Bounds:
    max_provers: int = 2
    max_rounds: int = 2
    max_inject_depth: int = 4
    max_delay: int = 3
    max_interventions: int = 2

    def __post_init__(self):
        if self.max_provers < 1 or self.max_rounds < 1:
            raise ConfigurationError("max_provers and max_rounds must be positive")
        if min(self.max_inject_depth, self.max_delay, self.max_interventions) < 0:
            raise ConfigurationError("bounds must be non-negative")

    @classmethod
    def of(cls, scenario: Scenario, **overrides) -> "Bounds":
        values = {**scenario.bounds, **{k: v for k, v in overrides.items() if v is not None}}
        return cls(**values)

    def admit(self, scenario: Scenario):
        rounds = scenario.data["protocol"].get("rounds", 1)
        if len(scenario.provers) > self.max_provers or rounds > self.max_rounds:
            raise ConfigurationError(
                f"{scenario.name}: {len(scenario.provers)} provers / {rounds} rounds exceed bounds "
                f"({self.max_provers} / {self.max_rounds})")


def _run(scenario: Scenario, bounds: Bounds, variant, strategy) -> Trace:
    engine = scenario.engine(strategy, variant, bounds.max_delay, bounds.max_inject_depth)
    return engine.run()


def _walk(scenario: Scenario, bounds: Bounds, variant, prefix: list[int], floor: int = 0) -> Iterator[Trace]:
    """Depth-first over the schedule subtree below prefix[:floor]."""
    while prefix is not None:
        strategy = ReplayStrategy(prefix, bounds.max_interventions)
        yield _run(scenario, bounds, variant, strategy)
        prefix = next_prefix(strategy.choices, floor)


def enumerate_traces(scenario: Scenario, bounds: Bounds | None = None) -> Iterator[Trace]:
    bounds = bounds or Bounds.of(scenario)
    bounds.admit(scenario)
    for variant in scenario.variants:
        yield from _walk(scenario, bounds, variant, [])


def estimate(scenario: Scenario, bounds: Bounds | None = None) -> int:
    """
    Schedule count predicted from the honest run of every variant: each choice
    point contributes its free options unconditionally and its intervention
    options up to the budget. An approximation, not a bound: branches that
    add choice points (dup, inject, delay) are not foreseen, and branches that
    remove them (drop, capture) still count every later point, which usually
    makes the estimate run high.
    """
    bounds = bounds or Bounds.of(scenario)
    total = 0
    for variant in scenario.variants:
        strategy = ReplayStrategy([], None)
        _run(scenario, bounds, variant, strategy)
        # poly[k] = schedules using k interventions
        poly = [1] + [0] * bounds.max_interventions
        for choice in strategy.choices:
            free, paid = choice.free, choice.n_options - choice.free
            nxt = [0] * len(poly)
            for k, count in enumerate(poly):
                nxt[k] += count * free
                if k + 1 < len(poly):
                    nxt[k + 1] += count * paid
            poly = nxt
        total += sum(poly)
    return total


def random_runs(scenario: Scenario, n: int, seed: int | None = None,
                bounds: Bounds | None = None) -> list[Trace]:
    if n < 1:
        raise ConfigurationError("random exploration needs at least one run")
    bounds = bounds or Bounds.of(scenario)
    seed = scenario.seed if seed is None else seed
    variants = scenario.variants
    return [
        _run(scenario, bounds, variants[i % len(variants)],
             RandomStrategy([seed, i], bounds.max_interventions))
        for i in range(n)
    ]


def _variant_of(scenario: Scenario, trace: Trace):
    name = trace.header.get("variant")
    for variant in scenario.variants:
        if variant == name:
            return variant
    return scenario.variants[0]


def minimize(scenario: Scenario, trace: Trace, prop: PropertyId, spec: GroupSpec | None = None,
             bounds: Bounds | None = None, variant=None) -> Trace:
    """Locally minimal decision set that still violates prop, by removal and re-execution."""
    bounds = bounds or Bounds.of(scenario)
    if spec is None:
        spec = GroupSpec.from_dict(trace.header.get("groups"))
    if not check(trace, prop, spec).violated:
        raise NotAViolation(f"{prop.value} is not violated by this trace")
    variant = _variant_of(scenario, trace) if variant is None else variant

    def replay(decisions):
        candidate = _run(scenario, bounds, variant, ScriptedStrategy(decisions, bounds.max_interventions))
        return candidate if check(candidate, prop, spec).violated else None

    decisions = [tuple(d) for d in trace.header.get("decisions", [])]
    best = replay(decisions) or trace
    shrinking = True
    while shrinking:
        shrinking = False
        for i in range(len(decisions)):
            candidate = replay(decisions[:i] + decisions[i + 1:])
            if candidate is not None:
                best = candidate
                decisions = [tuple(d) for d in candidate.header["decisions"]]
                shrinking = True
                break
    log.debug(f"minimised {prop.value} witness to {len(decisions)} decisions")
    return best


# --- campaigns ---

@dataclass
class _Partial:
    """What one worker reports for its slice of the schedule tree, in walk order."""
    schedules: int = 0
    counts: dict = field(default_factory=dict)
    first_violation: dict = field(default_factory=dict)
    ordering: list = field(default_factory=list)
    faults: int = 0
    keys: set = field(default_factory=set)
    duplicates: int = 0
    # one (variant, decisions, verdicts) entry per trace
    traces: list = field(default_factory=list)


def _tally(part: _Partial, trace: Trace, properties, spec):
    part.schedules += 1
    key = (trace.header.get("variant"), tuple(tuple(d) for d in trace.header.get("decisions", [])))
    if key in part.keys:
        part.duplicates += 1
    part.keys.add(key)
    if "fault" in trace.header:
        part.faults += 1
    verdicts = check_all(trace, properties, spec)
    part.traces.append((key[0], decision_text(trace), [(v.property.value, v.result.value, list(v.witness))
                                                       for v in verdicts]))
    for v in verdicts:
        counts = part.counts.setdefault(v.property.value, {r.value: 0 for r in Result})
        counts[v.result.value] += 1
        if v.violated and v.property.value not in part.first_violation:
            part.first_violation[v.property.value] = trace.dumps()
    for strong, weak in strength_violations(verdicts):
        part.ordering.append([strong.value, weak.value, trace.header.get("decisions", [])])


def decision_text(trace: Trace) -> str:
    return ";".join(f"{key}={label}" for key, label in trace.header.get("decisions", []))


def verdict_rows(scenario: str, trace_id, variant, decisions: str, verdicts) -> Iterator[list]:
    for prop, result, witness in verdicts:
        yield [scenario, trace_id, variant, decisions, prop, result, " ".join(map(str, witness))]


def _explore_slice(scenario: Scenario, bounds: Bounds, variant, prefix, floor, properties, spec) -> _Partial:
    part = _Partial()
    for trace in _walk(scenario, bounds, variant, prefix, floor):
        _tally(part, trace, properties, spec)
    return part


def _slices(scenario: Scenario, bounds: Bounds) -> list[tuple]:
    """Split each variant's tree by the option taken at its first choice point."""
    slices = []
    for variant in scenario.variants:
        strategy = ReplayStrategy([], bounds.max_interventions)
        _run(scenario, bounds, variant, strategy)
        if not strategy.choices:
            slices.append((variant, [], 0))
            continue
        slices += [(variant, [j], 1) for j in range(strategy.choices[0].n_options)]
    return slices


@dataclass
class ExplorationResult:
    scenario: str
    mode: str
    schedules: int
    estimate: int
    counts: dict[str, dict[str, int]]
    witnesses: dict[str, Trace]
    ordering_violations: list
    faults: int
    duplicates: int = 0
    traces: list = field(default_factory=list)

    def outcome(self, prop: PropertyId) -> str:
        counts = self.counts.get(prop.value, {})
        if counts.get("violated"):
            return "violated"
        if counts.get("holds"):
            return "holds"
        return "inapplicable"

    def mismatches(self, expect: dict[PropertyId, str]) -> list[str]:
        return [f"{p.value}: expected {want}, got {self.outcome(p)}"
                for p, want in sorted(expect.items(), key=lambda kv: kv[0].value)
                if self.outcome(p) != want]

    def summary(self, witness_paths: dict[str, str] | None = None, verdicts_path: str | None = None) -> dict:
        return {
            "verdicts": verdicts_path,
            "scenario": self.scenario,
            "mode": self.mode,
            "schedules": self.schedules,
            "estimate": self.estimate,
            "faults": self.faults,
            "properties": {
                p: {**counts, "outcome": self.outcome(PropertyId(p)),
                    "witness": (witness_paths or {}).get(p)}
                for p, counts in sorted(self.counts.items())
            },
            "ordering_violations": self.ordering_violations,
        }

    def verdict_rows(self) -> Iterator[list]:
        """One row per (trace, property), traces numbered in walk order."""
        for i, (variant, decisions, verdicts) in enumerate(self.traces):
            yield from verdict_rows(self.scenario, i, variant, decisions, verdicts)


def explore(scenario: Scenario, bounds: Bounds | None = None, properties: list[PropertyId] | None = None,
            workers: int = 1, cap: int | None = DEFAULT_CAP, spec: GroupSpec | None = None,
            shrink: bool = True) -> ExplorationResult:
    bounds = bounds or Bounds.of(scenario)
    properties = properties or scenario.properties
    spec = spec or scenario.group_spec
    mode = scenario.data.get("explore", {}).get("mode", "exhaustive")

    if mode == "random":
        runs = scenario.data.get("explore", {}).get("runs", 1000)
        guess = runs
        parts = [_Partial()]
        for trace in random_runs(scenario, runs, bounds=bounds):
            _tally(parts[0], trace, properties, spec)
    else:
        bounds.admit(scenario)
        guess = estimate(scenario, bounds)
        if cap is not None and guess > cap:
            raise ExplorationTooLarge(guess, cap)
        slices = _slices(scenario, bounds)
        log.info(f"{scenario.name}: ~{guess} schedules in {len(slices)} slices, {workers} worker(s)")
        if workers > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_explore_slice, scenario, bounds, v, p, f, properties, spec)
                           for v, p, f in slices]
                parts = [future.result() for future in futures]
        else:
            parts = [_explore_slice(scenario, bounds, v, p, f, properties, spec) for v, p, f in slices]

    counts: dict[str, dict[str, int]] = {}
    first: dict[str, str] = {}
    ordering, faults, schedules, duplicates, traces = [], 0, 0, 0, []
    seen: set = set()
    for part in parts:
        schedules += part.schedules
        faults += part.faults
        duplicates += part.duplicates + len(seen & part.keys)
        seen |= part.keys
        ordering += part.ordering
        traces += part.traces
        for prop, c in part.counts.items():
            total = counts.setdefault(prop, {r.value: 0 for r in Result})
            for result, n in c.items():
                total[result] += n
        for prop, text in part.first_violation.items():
            first.setdefault(prop, text)

    witnesses = {}
    for prop, text in sorted(first.items()):
        trace = Trace.loads(text)
        if shrink and mode == "exhaustive":
            trace = minimize(scenario, trace, PropertyId(prop), spec, bounds)
        witnesses[prop] = trace
    if mode == "random":
        duplicates = 0
    elif duplicates:
        log.warning(f"{scenario.name}: {duplicates} schedules were explored twice")
    return ExplorationResult(scenario.name, mode, schedules, guess, counts, witnesses, ordering, faults, duplicates,
                             traces)
