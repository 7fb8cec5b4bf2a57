"""
Deterministic discrete-event engine.

Queue items are ordered by (tick, priority, insertion sequence): scheduled
adversary actions first, then message deliveries, then timers, each FIFO.
Device handlers belong to the protocol; they receive the device they run on
and return a list of actions (Send, SetTimer, Record) that the engine applies
in order. Under the dy flag every send is a choice point whose options are
the network actions the adversary may take.
"""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from lib.utils.time import DeviceClock

from .adversary import Adversary, AdversaryModel
from .core import ORIGINAL_LABEL, DeviceId, Event, EventKind, Role, SoftwareState, Trace
from .errors import InvalidTimer
from .strategies import DecisionStrategy, ScriptedStrategy
from .symcrypto import DEFAULT_DEPTH, Term, parse_term

log = logging.getLogger("cra.simnet")

PRIORITY_ADVERSARY = 0
PRIORITY_DELIVERY = 1
PRIORITY_TIMER = 2

NET_ACTIONS = ("deliver", "drop", "delay", "dup", "inject")


@dataclass(frozen=True)
class PendingMessage:
    src: DeviceId
    dst: DeviceId
    body: Term
    sent_at: int
    channel: str = "protocol"


# --- handler actions ---

@dataclass(frozen=True)
class Send:
    dst: DeviceId
    body: Term
    channel: str = "protocol"


@dataclass(frozen=True)
class SetTimer:
    at: int
    tag: Any


@dataclass(frozen=True)
class Record:
    kind: EventKind
    args: dict


def record(kind: EventKind, **args) -> Record:
    return Record(kind, args)


@dataclass
class Device:
    id: DeviceId
    roles: frozenset
    clock: DeviceClock = field(default_factory=DeviceClock)
    trusted: dict = field(default_factory=dict)
    software: SoftwareState = field(default_factory=lambda: SoftwareState(ORIGINAL_LABEL))
    memory: dict = field(default_factory=dict)
    online: bool = True
    atomic: bool = False
    original_label: str = ORIGINAL_LABEL
    deferred: list = field(default_factory=list)

    @property
    def is_prover(self) -> bool:
        return Role.PROVER in self.roles


@dataclass(order=True)
class _Item:
    at: int
    priority: int
    seq: int
    kind: str = field(compare=False)
    payload: Any = field(compare=False)


def parse_net_action(label: str) -> tuple[str, Any]:
    """Split a network option label into (action, argument)."""
    name, _, arg = label.partition(":")
    if name == "delay":
        return name, int(arg)
    if name == "inject":
        return name, parse_term(arg)
    return name, None


class Engine:
    """Single-threaded simulator of one protocol run under one adversary schedule."""

    def __init__(self, protocol=None, devices: Iterable[Device] = (), *,
                 model: AdversaryModel | None = None,
                 strategy: DecisionStrategy | None = None,
                 latency: int = 1, horizon: int | None = None,
                 depth: int = DEFAULT_DEPTH, max_delay: int = 3, max_inject_depth: int = 4,
                 net_actions: Iterable[str] | None = None, t_attack: int | None = None,
                 header: dict | None = None):
        self.protocol = protocol
        self.devices: dict[DeviceId, Device] = {d.id: d for d in devices}
        self.model = model or AdversaryModel()
        self.strategy = strategy or ScriptedStrategy()
        self.latency = latency
        self.horizon = horizon
        self.max_delay = max_delay
        self.max_inject_depth = max_inject_depth
        self.net_actions = tuple(net_actions) if net_actions else NET_ACTIONS
        self.adversary = Adversary(self, self.model, t_attack, depth)
        self.header = dict(header or {})
        self.now = 0
        self.events: list[Event] = []
        self.in_handler: DeviceId | None = None
        self.fault: str | None = None
        self._queue: list[_Item] = []
        self._seq = 0
        self._sends: dict[tuple[str, str], int] = {}
        self._device_points: dict[str, int] = {}
        self._delivered_bodies: dict[tuple[DeviceId, str], dict[str, Term]] = {}
        self._started = False

    # --- scheduling ---

    def _push(self, at: int, priority: int, kind: str, payload):
        heapq.heappush(self._queue, _Item(at, priority, self._seq, kind, payload))
        self._seq += 1

    def schedule_adversary(self, at: int, action: Callable[[], None]):
        if at < self.now:
            raise InvalidTimer(f"adversary action at {at} is in the past (now {self.now})")
        self._push(at, PRIORITY_ADVERSARY, "adversary", action)

    def set_timer(self, device: DeviceId, fire_at: int, tag):
        if fire_at < self.now:
            raise InvalidTimer(f"timer {tag!r} for {device} at {fire_at} is in the past (now {self.now})")
        self._push(fire_at, PRIORITY_TIMER, "timer", (device, tag))

    def resume(self, device: DeviceId):
        """Re-queue timers a device missed while offline."""
        dev = self.devices[device]
        for tag in dict.fromkeys(dev.deferred):
            self.set_timer(device, self.now, tag)
        dev.deferred.clear()

    def record(self, kind: EventKind, **args):
        self.events.append(Event(self.now, kind, args))

    # --- network ---

    def send(self, src: DeviceId, dst: DeviceId, body: Term, channel: str = "protocol"):
        self.record(EventKind.MSG_SEND, src=src, dst=dst, body=body, channel=channel)
        self.adversary.cover(body)
        if dst not in self.devices:
            self.adversary.learn(body)
            self.record(EventKind.NET_DECISION, action="drop-unknown", src=src, dst=dst, body=body)
            return
        n = self._sends.get((src, dst), 0)
        self._sends[(src, dst)] = n + 1
        msg = PendingMessage(src, dst, body, self.now, channel)
        label = "deliver"
        if self.model.dy:
            self.adversary.learn(body)
            label = self.strategy.decide(f"net:{src}>{dst}#{n}", self._net_options(msg))
        self._apply_net(label, msg)

    def _net_options(self, msg: PendingMessage) -> list[str]:
        options = ["deliver", "drop"]
        options += [f"delay:{k}" for k in range(1, self.max_delay + 1)]
        options.append("dup")
        options += [f"inject:{t}" for t in self._inject_candidates(msg)]
        return [o for o in options if o == "deliver" or o.partition(":")[0] in self.net_actions]

    def _inject_candidates(self, msg: PendingMessage) -> list[Term]:
        if "inject" not in self.net_actions:
            return []
        candidates = {str(t): t for t in self._delivered_bodies.get((msg.dst, msg.channel), {}).values()}
        if self.protocol is not None:
            for t in self.protocol.forged_templates(self, msg.dst):
                self.adversary.cover(t)
                if self.adversary.can_inject(t, self.max_inject_depth):
                    candidates.setdefault(str(t), t)
        candidates.pop(str(msg.body), None)
        return [candidates[k] for k in sorted(candidates)]

    def _apply_net(self, label: str, msg: PendingMessage):
        action, arg = parse_net_action(label)
        deliver_at = self.now + self.latency
        match action:
            case "deliver":
                self._schedule_delivery(msg, deliver_at)
            case "drop":
                deliver_at = None
            case "delay":
                deliver_at += arg
                self._schedule_delivery(msg, deliver_at)
            case "dup":
                self._schedule_delivery(msg, deliver_at)
                self._schedule_delivery(msg, deliver_at)
            case "inject":
                forged = PendingMessage(msg.src, msg.dst, arg, self.now, msg.channel)
                self._schedule_delivery(forged, deliver_at)
                self._schedule_delivery(msg, deliver_at)
        args = dict(action=action, src=msg.src, dst=msg.dst, body=msg.body, deliver_at=deliver_at)
        if action == "inject":
            args["injected"] = str(arg)
        self.record(EventKind.NET_DECISION, **args)

    def _schedule_delivery(self, msg: PendingMessage, at: int):
        self._delivered_bodies.setdefault((msg.dst, msg.channel), {})[str(msg.body)] = msg.body
        self._push(at, PRIORITY_DELIVERY, "deliver", msg)

    # --- device choice points ---

    def _device_options(self, dev: Device) -> list[str]:
        options = ["none"]
        if self.model.sw and not dev.software.is_compromised and not dev.atomic:
            options.append("compromise")
        if self.model.msw and dev.software.is_compromised:
            options.append("restore")
        if self.model.reads_secrets and not dev.memory.get("_secrets_read"):
            options.append("read")
        if self.model.pi and dev.online and self.adversary.t_attack:
            options.append("capture")
        return options

    def _device_choice(self, dev: Device):
        options = self._device_options(dev)
        if len(options) == 1:
            return
        n = self._device_points.get(dev.id, 0)
        self._device_points[dev.id] = n + 1
        label = self.strategy.decide(f"dev:{dev.id}#{n}", options)
        match label:
            case "compromise":
                self.adversary.compromise(dev.id)
            case "restore":
                self.adversary.restore(dev.id)
            case "read":
                dev.memory["_secrets_read"] = True
                self.adversary.read_secrets(dev.id)
            case "capture":
                self.adversary.capture(dev.id, self.now, self.now + self.adversary.t_attack)
                self._run_due_adversary()

    def _run_due_adversary(self):
        while self._queue and self._queue[0].at == self.now and self._queue[0].priority == PRIORITY_ADVERSARY:
            heapq.heappop(self._queue).payload()

    # --- dispatch ---

    def _invoke(self, dev: Device, handler, *args):
        self.in_handler = dev.id
        actions = handler(self, dev, *args) or []
        self.in_handler = None
        for action in actions:
            match action:
                case Send(dst=dst, body=body, channel=channel):
                    self.send(dev.id, dst, body, channel)
                case SetTimer(at=at, tag=tag):
                    self.set_timer(dev.id, at, tag)
                case Record(kind=kind, args=args):
                    self.record(kind, **args)

    def _dispatch(self, item: _Item):
        match item.kind:
            case "adversary":
                item.payload()
            case "deliver":
                msg: PendingMessage = item.payload
                dev = self.devices[msg.dst]
                if dev.online and dev.is_prover and msg.channel in ("protocol", "query"):
                    self._device_choice(dev)
                if not dev.online:
                    self.record(EventKind.NET_DECISION, action="offline-drop", src=msg.src,
                                dst=msg.dst, body=msg.body, deliver_at=None)
                    return
                self.record(EventKind.MSG_RECV, dst=msg.dst, src=msg.src, body=msg.body,
                            channel=msg.channel)
                self._invoke(dev, self.protocol.on_message, msg.src, msg.body, msg.channel)
            case "timer":
                device, tag = item.payload
                dev = self.devices[device]
                if not dev.online:
                    dev.deferred.append(tag)
                    return
                if dev.is_prover and self.protocol.is_measurement_timer(tag):
                    self._device_choice(dev)
                    if not dev.online:
                        dev.deferred.append(tag)
                        return
                self._invoke(dev, self.protocol.on_timer, tag)

    def run(self) -> Trace:
        """Execute until the queue empties or the horizon passes; always returns the trace."""
        if not self._started:
            self._started = True
            if self.protocol is not None:
                self.protocol.setup(self)
        while self._queue:
            if self.horizon is not None and self._queue[0].at > self.horizon:
                break
            item = heapq.heappop(self._queue)
            self.now = item.at
            try:
                self._dispatch(item)
            except Exception as e:
                self.fault = f"{type(e).__name__}: {e}"
                log.warning(f"handler fault at tick {self.now}: {self.fault}")
                self.record(EventKind.FAULT, device=self.in_handler, message=self.fault)
                self.in_handler = None
                break
        return self.trace()

    def trace(self) -> Trace:
        header = dict(self.header)
        header["decisions"] = [list(d) for d in self.strategy.decisions]
        if self.fault:
            header["fault"] = self.fault
        return Trace(header, list(self.events))
