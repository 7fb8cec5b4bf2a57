"""
Trace properties: initiator authentication, the eight individual/group x
(a)synchronous x weak/strong attestation properties and the quality of
swarm attestation.

Quantification over a claim interval T uses the points where validity can
change (state_change_points); on monotone traces (no restores, no acceptable
state updates) the asynchronous checks only look at T.start and T.end. The
oracle_* variants enumerate every tick and exist for equivalence testing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

from .core import DeviceId, Event, EventKind, Interval, Status, Trace, is_valid_state, state_change_points
from .errors import NoClaims, SpecError, TraceError, UnknownDevice


class PropertyId(Enum):
    IA = "IA"
    IAW = "IAW"
    IAS = "IAS"
    ISW = "ISW"
    ISS = "ISS"
    GAW = "GAW"
    GAS = "GAS"
    GSW = "GSW"
    GSS = "GSS"

    @property
    def group(self) -> bool:
        return self.value[0] == "G"

    @property
    def sync(self) -> bool:
        return self.value[1] == "S"

    @property
    def strong(self) -> bool:
        return self.value[2] == "S"

    @classmethod
    def of(cls, group: bool, sync: bool, strong: bool) -> "PropertyId":
        return cls(("G" if group else "I") + ("S" if sync else "A") + ("S" if strong else "W"))


ALL_PROPERTIES = list(PropertyId)


class Result(Enum):
    HOLDS = "holds"
    VIOLATED = "violated"
    INAPPLICABLE = "inapplicable"


class QoSA(Enum):
    BINARY = "Binary"
    INTERMEDIATE = "Intermediate"
    LIST = "List"


@dataclass(frozen=True)
class Verdict:
    property: PropertyId
    result: Result
    witness: tuple[int, ...] = ()
    detail: str = ""

    def __post_init__(self):
        if self.result == Result.VIOLATED and not self.witness:
            raise ValueError("a violated verdict needs a witness")

    @property
    def holds(self) -> bool:
        return self.result == Result.HOLDS

    @property
    def violated(self) -> bool:
        return self.result == Result.VIOLATED

    def to_json(self) -> dict:
        return {"property": self.property.value, "result": self.result.value, "witness": list(self.witness)}


@dataclass(frozen=True)
class GroupSpec:
    """Groups to judge and the tolerated number of bad members; no groups means all claimed provers."""
    groups: tuple[frozenset, ...] = ()
    threshold: int = 0

    def __post_init__(self):
        if self.threshold < 0:
            raise SpecError("group threshold must be non-negative")
        if any(not g for g in self.groups):
            raise SpecError("groups must be non-empty")

    @classmethod
    def from_dict(cls, data: dict | None) -> "GroupSpec":
        data = data or {}
        return cls(tuple(frozenset(g) for g in data.get("groups", [])), data.get("threshold", 0))

    def to_dict(self) -> dict:
        return {"groups": [sorted(g) for g in self.groups], "threshold": self.threshold}


# --- initiator authentication ---

def check_ia(trace: Trace) -> Verdict:
    if not trace.interactive:
        return Verdict(PropertyId.IA, Result.INAPPLICABLE, detail="non-interactive protocol")
    unused: dict[tuple, list[int]] = {}
    used: dict[tuple, list[int]] = {}
    for i, ev in enumerate(trace.events):
        try:
            if ev.kind == EventKind.SEND_REQUEST:
                key = (ev.args["initiator"], ev.args["prover"], ev.args["request"])
                unused.setdefault(key, []).append(i)
            elif ev.kind == EventKind.RUN_COMPLETE:
                key = (ev.args["initiator"], ev.args["prover"], ev.args["request"])
                if unused.get(key):
                    used.setdefault(key, []).append(unused[key].pop(0))
                    used[key].append(i)
                else:
                    witness = sorted(used.get(key, []) + [i])
                    return Verdict(PropertyId.IA, Result.VIOLATED, tuple(witness),
                                   f"run of {key[1]} at tick {ev.at} matches no unused request")
        except KeyError as e:
            raise TraceError(f"event {i} ({ev.kind.value}) lacks argument {e}") from e
    return Verdict(PropertyId.IA, Result.HOLDS)


# --- helpers ---

def _claimed(ev: Event) -> dict[DeviceId, Status]:
    return {p: s for p, s in ev.statuses().items() if s != Status.UNKNOWN}


def _check_provers(trace: Trace, provers: Iterable[DeviceId]):
    known = set(trace.provers)
    for p in provers:
        if p not in known:
            raise UnknownDevice(p)


def _witness(trace: Trace, claim_index: int, provers: Iterable[DeviceId]) -> tuple[int, ...]:
    until = trace.events[claim_index].at
    indices = {claim_index}
    for p in provers:
        indices.update(trace.state_events(p, until))
    return tuple(sorted(indices))


def _union_points(trace: Trace, provers: Iterable[DeviceId], T: Interval) -> list[int]:
    points = {T.start, T.end}
    for p in provers:
        points.update(state_change_points(trace, p, T))
    return sorted(points)


def _status_ok(trace: Trace, p: DeviceId, status: Status, t: int, strong: bool) -> bool:
    if status == Status.HEALTHY:
        return is_valid_state(trace, p, t)
    return not strong or not is_valid_state(trace, p, t)


# --- individual attestation ---

def _individual_failures(trace: Trace, claimed: dict, T: Interval, sync: bool, strong: bool) -> list[DeviceId]:
    """Provers for which the claim is not correct; empty when it is."""
    if not claimed:
        return []
    if sync:
        for t in _union_points(trace, claimed, T):
            if all(_status_ok(trace, p, s, t, strong) for p, s in claimed.items()):
                return []
        return sorted(claimed)
    failures = []
    monotone = trace.monotone()
    for p, s in sorted(claimed.items()):
        if s == Status.UNHEALTHY and not strong:
            continue
        if monotone:
            candidates = [T.start] if s == Status.HEALTHY else [T.end]
        else:
            candidates = state_change_points(trace, p, T)
        if not any(_status_ok(trace, p, s, t, strong) for t in candidates):
            failures.append(p)
    return failures


def check_individual(trace: Trace, sync: bool, strong: bool) -> Verdict:
    prop = PropertyId.of(False, sync, strong)
    claims = trace.of_kind(EventKind.CLAIM_INDIVIDUAL)
    if not claims:
        return Verdict(prop, Result.INAPPLICABLE, detail="no individual claims")
    for i, ev in claims:
        claimed = _claimed(ev)
        _check_provers(trace, claimed)
        failures = _individual_failures(trace, claimed, ev.interval, sync, strong)
        if failures:
            return Verdict(prop, Result.VIOLATED, _witness(trace, i, failures),
                           f"claim at tick {ev.at} incorrect for {failures}")
    return Verdict(prop, Result.HOLDS)


# --- group attestation ---

def _group_claims(trace: Trace, spec: GroupSpec) -> list[tuple[int, Interval, list[tuple[frozenset, Status]]]]:
    """Group claims of the trace, derived from individual claims when there are none."""
    out = []
    group_claims = trace.of_kind(EventKind.CLAIM_GROUP)
    if group_claims:
        for i, ev in group_claims:
            groups = ev.groups()
            universe = frozenset().union(*(g for g, _ in groups)) if groups else frozenset()
            _check_provers(trace, universe)
            for g in spec.groups:
                if not g <= universe:
                    raise SpecError(f"group {sorted(g)} is not within the claimed provers {sorted(universe)}")
            out.append((i, ev.interval, groups))
        return out
    for i, ev in trace.of_kind(EventKind.CLAIM_INDIVIDUAL):
        claimed = _claimed(ev)
        _check_provers(trace, claimed)
        universe = frozenset(claimed)
        groups = list(spec.groups) or ([universe] if universe else [])
        derived = []
        for g in groups:
            if not g <= universe:
                raise SpecError(f"group {sorted(g)} is not within the claimed provers {sorted(universe)}")
            healthy = all(claimed[p] == Status.HEALTHY for p in g)
            derived.append((g, Status.HEALTHY if healthy else Status.UNHEALTHY))
        out.append((i, ev.interval, derived))
    return out


def _invalid(trace: Trace, members: Iterable[DeviceId], t: int) -> int:
    return sum(1 for p in members if not is_valid_state(trace, p, t))


def _group_failures(trace: Trace, groups, T: Interval, k: int, sync: bool, strong: bool) -> list[frozenset]:
    relevant = [(g, s) for g, s in groups if s == Status.HEALTHY or (strong and s == Status.UNHEALTHY)]
    if not relevant:
        return []
    if sync:
        members = frozenset().union(*(g for g, _ in relevant))
        for t in _union_points(trace, members, T):
            ok = all(_invalid(trace, g, t) <= k if s == Status.HEALTHY else _invalid(trace, g, t) > k
                     for g, s in relevant)
            if ok:
                return []
        return [g for g, _ in relevant]
    failures = []
    monotone = trace.monotone()
    for g, s in relevant:
        if s == Status.HEALTHY:
            lacking = 0
            for p in sorted(g):
                candidates = [T.start] if monotone else state_change_points(trace, p, T)
                if not any(is_valid_state(trace, p, t) for t in candidates):
                    lacking += 1
            if lacking > k:
                failures.append(g)
        else:
            candidates = [T.end] if monotone else _union_points(trace, g, T)
            if not any(_invalid(trace, g, t) > k for t in candidates):
                failures.append(g)
    return failures


def check_group(trace: Trace, spec: GroupSpec | None, sync: bool, strong: bool) -> Verdict:
    spec = spec or GroupSpec()
    prop = PropertyId.of(True, sync, strong)
    claims = _group_claims(trace, spec)
    if not claims:
        return Verdict(prop, Result.INAPPLICABLE, detail="no claims")
    for i, T, groups in claims:
        failures = _group_failures(trace, groups, T, spec.threshold, sync, strong)
        if failures:
            members = sorted(frozenset().union(*failures))
            return Verdict(prop, Result.VIOLATED, _witness(trace, i, members),
                           f"claim at tick {trace.events[i].at} incorrect for groups {[sorted(g) for g in failures]}")
    return Verdict(prop, Result.HOLDS)


# --- oracles: every tick, no shortcuts ---

def oracle_check_individual(trace: Trace, sync: bool, strong: bool) -> Verdict:
    prop = PropertyId.of(False, sync, strong)
    claims = trace.of_kind(EventKind.CLAIM_INDIVIDUAL)
    if not claims:
        return Verdict(prop, Result.INAPPLICABLE)
    for i, ev in claims:
        claimed = _claimed(ev)
        _check_provers(trace, claimed)
        ticks = ev.interval.ticks()

        def correct(p, t):
            valid = is_valid_state(trace, p, t)
            return valid if claimed[p] == Status.HEALTHY else (not strong or not valid)

        if sync:
            bad = sorted(claimed) if claimed and not any(all(correct(p, t) for p in claimed) for t in ticks) else []
        else:
            bad = [p for p in sorted(claimed) if not any(correct(p, t) for t in ticks)]
        if bad:
            return Verdict(prop, Result.VIOLATED, _witness(trace, i, bad))
    return Verdict(prop, Result.HOLDS)


def oracle_check_group(trace: Trace, spec: GroupSpec | None, sync: bool, strong: bool) -> Verdict:
    spec = spec or GroupSpec()
    prop = PropertyId.of(True, sync, strong)
    claims = _group_claims(trace, spec)
    if not claims:
        return Verdict(prop, Result.INAPPLICABLE)
    k = spec.threshold
    for i, T, groups in claims:
        healthy = [g for g, s in groups if s == Status.HEALTHY]
        unhealthy = [g for g, s in groups if s == Status.UNHEALTHY] if strong else []
        ticks = T.ticks()

        def bad_at(g, t):
            return sum(1 for p in g if not is_valid_state(trace, p, t))

        if sync:
            if not healthy and not unhealthy:
                continue
            ok = any(all(bad_at(g, t) <= k for g in healthy) and all(bad_at(g, t) > k for g in unhealthy)
                     for t in ticks)
            failing = [] if ok else healthy + unhealthy
        else:
            failing = [g for g in healthy
                       if sum(1 for p in g if not any(is_valid_state(trace, p, t) for t in ticks)) > k]
            failing += [g for g in unhealthy if not any(bad_at(g, t) > k for t in ticks)]
        if failing:
            return Verdict(prop, Result.VIOLATED, _witness(trace, i, sorted(frozenset().union(*failing))))
    return Verdict(prop, Result.HOLDS)


# --- QoSA ---

def classify_qosa(trace: Trace) -> QoSA:
    claims = trace.claims()
    if not claims:
        raise NoClaims("trace contains no attestation claims")
    shapes = set()
    everyone = frozenset(trace.provers)
    for _, ev in claims:
        if ev.kind == EventKind.CLAIM_INDIVIDUAL:
            shapes.add(QoSA.LIST)
            continue
        groups = [g for g, _ in ev.groups()]
        if len(groups) == 1 and groups[0] == everyone:
            shapes.add(QoSA.BINARY)
        elif groups and all(len(g) == 1 for g in groups):
            shapes.add(QoSA.LIST)
        else:
            shapes.add(QoSA.INTERMEDIATE)
    return shapes.pop() if len(shapes) == 1 else QoSA.INTERMEDIATE


# --- aggregate ---

def check(trace: Trace, prop: PropertyId, spec: GroupSpec | None = None) -> Verdict:
    if prop == PropertyId.IA:
        return check_ia(trace)
    if prop.group:
        return check_group(trace, spec, prop.sync, prop.strong)
    return check_individual(trace, prop.sync, prop.strong)


def check_all(trace: Trace, properties: Iterable[PropertyId] | None = None,
              spec: GroupSpec | None = None) -> list[Verdict]:
    if spec is None:
        spec = GroupSpec.from_dict(trace.header.get("groups"))
    return [check(trace, p, spec) for p in (properties or ALL_PROPERTIES)]


# stronger property -> weaker ones it implies
IMPLIES = {
    PropertyId.ISS: (PropertyId.ISW, PropertyId.IAS, PropertyId.IAW),
    PropertyId.ISW: (PropertyId.IAW,),
    PropertyId.IAS: (PropertyId.IAW,),
    PropertyId.GSS: (PropertyId.GSW, PropertyId.GAS, PropertyId.GAW),
    PropertyId.GSW: (PropertyId.GAW,),
    PropertyId.GAS: (PropertyId.GAW,),
}


def strength_violations(verdicts: Iterable[Verdict]) -> list[tuple[PropertyId, PropertyId]]:
    """Pairs (stronger, weaker) where the stronger property holds but the weaker one is violated."""
    by_prop = {v.property: v for v in verdicts}
    out = []
    for strong, weaker in IMPLIES.items():
        if strong in by_prop and by_prop[strong].holds:
            out += [(strong, w) for w in weaker if w in by_prop and by_prop[w].violated]
    return out


def parse_properties(names: Iterable[str]) -> list[PropertyId]:
    try:
        return [PropertyId(n.strip().upper()) for n in names if n.strip()]
    except ValueError as e:
        raise SpecError(f"unknown property: {e}") from e
