"""
Time, device, health-state and trace model shared by every other module.

Time is a global logical tick. A device's software state at tick t is the
state after every event stamped at or before t, reconstructed by replaying
Compromise / Restore / writing CaptureBegin events of the trace.
"""
from __future__ import annotations

import json
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import EmptyTrace, TraceError, UnknownDevice
from .symcrypto import Term, parse_term

TimePoint = int
DeviceId = str

ORIGINAL_LABEL = "good"
COMPROMISED_PREFIX = "compromised"


@dataclass(frozen=True)
class Interval:
    start: TimePoint
    end: TimePoint

    def __post_init__(self):
        if self.start < 0 or self.start > self.end:
            raise TraceError(f"invalid interval [{self.start}, {self.end}]")

    def __contains__(self, t: TimePoint) -> bool:
        return self.start <= t <= self.end

    def ticks(self) -> range:
        return range(self.start, self.end + 1)


class Role(Enum):
    PROVER = "prover"
    INITIATOR = "initiator"
    VERIFIER = "verifier"
    AGGREGATOR = "aggregator"
    RELYING_PARTY = "relying_party"


@dataclass(frozen=True)
class SoftwareState:
    label: str

    @classmethod
    def compromised(cls, tag: str = "") -> "SoftwareState":
        return cls(f"{COMPROMISED_PREFIX}:{tag}" if tag else COMPROMISED_PREFIX)

    @property
    def is_compromised(self) -> bool:
        return self.label.startswith(COMPROMISED_PREFIX)


class Status(Enum):
    HEALTHY = "healthy"
    UNHEALTHY = "unhealthy"
    UNKNOWN = "unknown"


class AcceptableStates:
    """Per-prover acceptable labels, constant except at configured update ticks."""

    def __init__(self, initial: dict[DeviceId, str],
                 default: dict[DeviceId, Iterable[str]] | None = None,
                 updates: Iterable[tuple[TimePoint, DeviceId, Iterable[str]]] = ()):
        self.initial = dict(initial)
        default = default or {p: [label] for p, label in initial.items()}
        self._epochs: dict[DeviceId, list[tuple[TimePoint, frozenset]]] = {
            p: [(0, frozenset(labels))] for p, labels in default.items()
        }
        for at, p, labels in sorted(updates, key=lambda u: (u[0], u[1])):
            if p not in self._epochs:
                raise UnknownDevice(p)
            self._epochs[p].append((at, frozenset(labels)))
        for p, epochs in self._epochs.items():
            for _, labels in epochs:
                if not labels:
                    raise TraceError(f"empty acceptable-state set for {p}")
                if any(label.startswith(COMPROMISED_PREFIX) for label in labels):
                    raise TraceError(f"compromised label listed as acceptable for {p}")

    def at(self, p: DeviceId, t: TimePoint) -> frozenset:
        epochs = self._epochs.get(p)
        if epochs is None:
            raise UnknownDevice(p)
        current = epochs[0][1]
        for since, labels in epochs:
            if since > t:
                break
            current = labels
        return current

    def update_ticks(self, p: DeviceId) -> list[TimePoint]:
        return [since for since, _ in self._epochs.get(p, [])[1:]]

    def has_updates(self) -> bool:
        return any(len(e) > 1 for e in self._epochs.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "initial": dict(sorted(self.initial.items())),
            "default": {p: sorted(e[0][1]) for p, e in sorted(self._epochs.items())},
            "updates": [
                {"at": at, "prover": p, "labels": sorted(labels)}
                for p, e in sorted(self._epochs.items()) for at, labels in e[1:]
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AcceptableStates":
        return cls(
            data["initial"],
            data.get("default"),
            [(u["at"], u["prover"], u["labels"]) for u in data.get("updates", [])],
        )


class EventKind(Enum):
    SEND_REQUEST = "SendRequest"
    RECV_REQUEST = "RecvRequest"
    RUN_COMPLETE = "RunComplete"
    MEASURE_TAKEN = "MeasureTaken"
    COMPROMISE = "Compromise"
    RESTORE = "Restore"
    CAPTURE_BEGIN = "CaptureBegin"
    CAPTURE_END = "CaptureEnd"
    SECRET_READ = "SecretRead"
    MSG_SEND = "MsgSend"
    MSG_RECV = "MsgRecv"
    ATT_START = "AttStart"
    CLAIM_INDIVIDUAL = "ClaimIndividual"
    CLAIM_GROUP = "ClaimGroup"
    HEARTBEAT_SEND = "HeartbeatSend"
    HEARTBEAT_RECV = "HeartbeatRecv"
    EPOCH_KEY_UPDATE = "EpochKeyUpdate"
    NET_DECISION = "NetDecision"
    REJECT = "Reject"
    ABSENCE_FLAG = "AbsenceFlag"
    WARNING = "Warning"
    FAULT = "Fault"


# args holding symbolic terms; everything else is plain JSON
TERM_ARGS = ("request", "body")
CLAIM_KINDS = (EventKind.CLAIM_INDIVIDUAL, EventKind.CLAIM_GROUP)
STATE_KINDS = (EventKind.COMPROMISE, EventKind.RESTORE, EventKind.CAPTURE_BEGIN)


@dataclass(frozen=True)
class Event:
    at: TimePoint
    kind: EventKind
    args: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind in CLAIM_KINDS:
            start, end = self.args["interval"]
            if not (0 <= start <= end <= self.at):
                raise TraceError(f"claim interval [{start}, {end}] not within [0, {self.at}]")

    def get(self, name: str, default=None):
        return self.args.get(name, default)

    @property
    def interval(self) -> Interval:
        start, end = self.args["interval"]
        return Interval(start, end)

    def statuses(self) -> dict[DeviceId, Status]:
        return {p: Status(s) for p, s in self.args["statuses"].items()}

    def groups(self) -> list[tuple[frozenset, Status]]:
        return [(frozenset(members), Status(s)) for members, s in self.args["groups"]]

    def to_json(self) -> dict[str, Any]:
        args = {k: (str(v) if k in TERM_ARGS and v is not None else v) for k, v in self.args.items()}
        return {"at": self.at, "kind": self.kind.value, "args": args}

    @classmethod
    def from_json(cls, data: dict[str, Any]) -> "Event":
        try:
            args = dict(data["args"])
            for name in TERM_ARGS:
                if isinstance(args.get(name), str):
                    args[name] = parse_term(args[name])
            return cls(int(data["at"]), EventKind(data["kind"]), args)
        except (KeyError, ValueError, TypeError) as e:
            raise TraceError(f"malformed event {data!r}: {e}") from e



@dataclass
class Trace:
    header: dict
    events: list[Event] = field(default_factory=list)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def provers(self) -> list[DeviceId]:
        return list(self.header.get("provers", []))

    @property
    def flags(self) -> frozenset:
        return frozenset(self.header.get("adversary", {}).get("flags", []))

    @property
    def interactive(self) -> bool:
        return bool(self.header.get("interactive", True))

    @property
    def acceptable(self) -> AcceptableStates:
        if "acceptable" not in self._cache:
            data = self.header.get("acceptable") or {"initial": {p: ORIGINAL_LABEL for p in self.provers}}
            self._cache["acceptable"] = AcceptableStates.from_dict(data)
        return self._cache["acceptable"]

    @property
    def horizon(self) -> TimePoint:
        return self.events[-1].at if self.events else 0

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def of_kind(self, *kinds: EventKind) -> list[tuple[int, Event]]:
        return [(i, ev) for i, ev in enumerate(self.events) if ev.kind in kinds]

    def claims(self) -> list[tuple[int, Event]]:
        return self.of_kind(*CLAIM_KINDS)

    def subtrace(self, indices: Iterable[int]) -> "Trace":
        return Trace(self.header, [self.events[i] for i in sorted(set(indices))])

    def monotone(self) -> bool:
        """True when validity can only go from valid to invalid (no restores, no acceptable updates)."""
        if "msw" in self.flags or self.acceptable.has_updates():
            return False
        return not any(ev.kind == EventKind.RESTORE for ev in self.events)

    def state_events(self, p: DeviceId, until: TimePoint | None = None) -> list[int]:
        """Indices of events that change p's software state, up to tick `until`."""
        return [
            i for i, ev in enumerate(self.events)
            if ev.kind in STATE_KINDS and ev.get("prover") == p and (until is None or ev.at <= until)
        ]

    # --- serialization ---

    def dumps(self) -> str:
        lines = [json.dumps({"header": self.header}, sort_keys=True, separators=(",", ":"))]
        lines += [json.dumps(ev.to_json(), sort_keys=True, separators=(",", ":")) for ev in self.events]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Trace":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise TraceError("empty trace file")
        try:
            first = json.loads(lines[0])
            header = first["header"]
            events = [Event.from_json(json.loads(line)) for line in lines[1:]]
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise TraceError(f"unparseable trace: {e}") from e
        for a, b in zip(events, events[1:]):
            if b.at < a.at:
                raise TraceError(f"timestamps decrease at tick {b.at}")
        return cls(header, events)

    def dump(self, path: str | Path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "Trace":
        return cls.loads(Path(path).read_text())


def _timeline(trace: Trace, p: DeviceId) -> tuple[list[TimePoint], list[str]]:
    key = ("timeline", p)
    if key not in trace._cache:
        if p not in trace.provers:
            raise UnknownDevice(p)
        original = trace.acceptable.initial.get(p, ORIGINAL_LABEL)
        ticks, labels = [0], [original]
        for ev in trace.events:
            if ev.get("prover") != p:
                continue
            if ev.kind == EventKind.COMPROMISE:
                label = ev.get("label") or SoftwareState.compromised().label
            elif ev.kind == EventKind.RESTORE:
                label = original
            elif ev.kind == EventKind.CAPTURE_BEGIN and ev.get("write"):
                label = ev.get("label") or SoftwareState.compromised("capture").label
            else:
                continue
            if ticks[-1] == ev.at:
                labels[-1] = label
            else:
                ticks.append(ev.at)
                labels.append(label)
        trace._cache[key] = (ticks, labels)
    return trace._cache[key]


def software_state(trace: Trace, p: DeviceId, t: TimePoint) -> SoftwareState:
    ticks, labels = _timeline(trace, p)
    return SoftwareState(labels[bisect_right(ticks, t) - 1])


def is_valid_state(trace: Trace, p: DeviceId, t: TimePoint) -> bool:
    if p not in trace.provers:
        raise UnknownDevice(p)
    if t < 0 or t > trace.horizon:
        raise TraceError(f"tick {t} outside trace horizon [0, {trace.horizon}]")
    return software_state(trace, p, t).label in trace.acceptable.at(p, t)


def state_change_points(trace: Trace, p: DeviceId, T: Interval) -> list[TimePoint]:
    """T.start, T.end and every tick in T at which p's validity flips."""
    if not trace.events:
        raise EmptyTrace("trace has no events")
    ticks, _ = _timeline(trace, p)
    candidates = sorted({t for t in ticks[1:] + trace.acceptable.update_ticks(p) if T.start < t <= T.end})
    points = [T.start]
    previous = is_valid_state(trace, p, T.start)
    for t in candidates:
        current = is_valid_state(trace, p, t)
        if current != previous:
            points.append(t)
            previous = current
    if points[-1] != T.end:
        points.append(T.end)
    return points
