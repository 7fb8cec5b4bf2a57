"""
SAP : synchronised measurement over a balanced binary tree, validated by the verifier.

The request carries a target time t*. Every prover measures when its local
clock shows t*, and each subtree reports a hash chain
h(pair(h(a(label)), <list of child digests>)). The verifier compares what it
receives against the digests the acceptable states allow, which amounts to
and-ing every prover's health, and claims one status for the whole group over
[t* - epsilon, t* + epsilon].
"""
from __future__ import annotations

import itertools

from lib.utils.time import DeviceClock

from ..core import EventKind, Status
from ..errors import ConfigurationError
from ..simnet import record
from ..symcrypto import Atom, Counter, Hash, Pair, term_list
from .base import VERIFIER, KeyKind, Protocol, TopologyKind, opened, signed

MISSING = Atom("missing")


class Sap(Protocol):
    name = "sap"
    validator = "Verifier"
    measurement_timers = ("measure",)

    @property
    def epsilon(self) -> int:
        return self.cfg.sap.get("epsilon", 0)

    @property
    def offsets(self) -> dict[str, int]:
        return dict(self.cfg.sap.get("offsets", {}))

    @property
    def lead(self) -> int:
        default = 2 * self.cfg.latency * max(1, self.cfg.topology.depth) + self.epsilon + 1
        return self.cfg.sap.get("lead", default)

    def validate(self):
        super().validate()
        if self.cfg.topology.kind != TopologyKind.BALANCED_BINARY_TREE:
            raise ConfigurationError("SAP requires a balanced binary tree")
        if self.cfg.key_policy.kind != KeyKind.SWARM_SHARED:
            raise ConfigurationError("SAP requires swarm-shared keys")
        for p, offset in sorted(self.offsets.items()):
            if not DeviceClock(offset).within(self.epsilon):
                raise ConfigurationError(f"clock offset {offset} of {p} exceeds epsilon {self.epsilon}")

    def build_devices(self, offsets=None):
        return super().build_devices(offsets or self.offsets)

    def expected_digests(self, engine, n: str) -> set:
        children = self.cfg.topology.children(n)
        child_sets = [sorted(self.expected_digests(engine, c), key=str) for c in children]
        digests = set()
        for label in self.acceptable_now(engine, n):
            for combo in itertools.product(*child_sets):
                digests.add(Hash(Pair(Hash(Atom(label)), term_list(combo))))
        return digests

    # --- verifier ---

    def start(self, engine):
        engine.set_timer(VERIFIER, self.cfg.start_at, ("round", 1))

    def _open_round(self, engine, dev, c: int):
        target = engine.now + self.lead
        payload = Pair(Counter(c), Counter(target))
        children = self.cfg.topology.children(VERIFIER)
        dev.memory.update(round=c, target=target, open=True, digests={}, waiting=set(children))
        actions = [record(EventKind.ATT_START, verifier=VERIFIER, counter=c)]
        actions += [record(EventKind.SEND_REQUEST, initiator=VERIFIER, prover=p, request=payload)
                    for p in self.cfg.provers]
        request = signed(dev.trusted["auth"], payload)
        actions += [self.send(child, request) for child in children]
        return actions + [self.timer(target + max(self.epsilon, self.cfg.deadline), "deadline", c)]

    def _claim(self, engine, dev):
        c, target = dev.memory["round"], dev.memory["target"]
        dev.memory["open"] = False
        healthy = all(dev.memory["digests"].get(child) in self.expected_digests(engine, child)
                      for child in self.cfg.topology.children(VERIFIER))
        status = Status.HEALTHY if healthy else Status.UNHEALTHY
        actions = [record(EventKind.CLAIM_GROUP, relying_party=VERIFIER,
                          groups=[[sorted(self.cfg.provers), status.value]],
                          interval=[max(0, target - self.epsilon), target + self.epsilon], counter=c)]
        if c < self.cfg.rounds:
            actions.append(self.timer(engine.now + self.cfg.round_gap, "round", c + 1))
        return actions

    def _ready_to_claim(self, engine, dev):
        if engine.now >= dev.memory["target"] + self.epsilon:
            return self._claim(engine, dev)
        return [self.timer(dev.memory["target"] + self.epsilon, "claim", dev.memory["round"])]

    # --- prover ---

    def _prover_request(self, engine, dev, src, payload):
        c, target = payload.left.value, payload.right.value
        if self.cfg.counter and c <= dev.trusted["counter"]:
            return [self.reject(dev, src, "stale-counter")]
        dev.trusted["counter"] = max(c, dev.trusted["counter"])
        children = self.cfg.topology.children(dev.id)
        dev.memory.setdefault("rounds", {})[c] = {
            "target": target, "own": None, "digests": {}, "waiting": set(children), "sent": False,
        }
        actions = [record(EventKind.RECV_REQUEST, prover=dev.id, request=payload)]
        actions += [self.send(child, signed(dev.trusted["auth"], payload)) for child in children]
        return actions + [self.timer(dev.clock.to_global(target), "measure", c)]

    def _measure(self, engine, dev, c: int):
        pending = dev.memory["rounds"][c]
        pending["own"] = Hash(Atom(dev.software.label))
        actions = [self.measure(engine, dev, local=dev.clock.local(engine.now)),
                   record(EventKind.RUN_COMPLETE, prover=dev.id, initiator=VERIFIER,
                          request=Pair(Counter(c), Counter(pending["target"])))]
        if not pending["waiting"]:
            return actions + self._report(dev, c)
        wait = 2 * self.cfg.latency * self.cfg.topology.height(dev.id) + self.cfg.latency
        return actions + [self.timer(engine.now + wait, "agg", c)]

    def _report(self, dev, c: int):
        pending = dev.memory["rounds"][c]
        pending["sent"] = True
        children = self.cfg.topology.children(dev.id)
        digest = Hash(Pair(pending["own"], term_list(pending["digests"].get(ch, MISSING) for ch in children)))
        payload = Pair(Counter(c), digest)
        key = self.report_key(dev, dev.trusted["auth"])
        return [self.send(self.cfg.topology.parent(dev.id), signed(key, payload))]

    def _child_report(self, engine, dev, src, c: int, digest):
        if dev.id == VERIFIER:
            if not dev.memory.get("open") or c != dev.memory["round"] or src not in dev.memory["waiting"]:
                return [self.reject(dev, src, "unexpected-report")]
            dev.memory["digests"][src] = digest
            dev.memory["waiting"].discard(src)
            return self._ready_to_claim(engine, dev) if not dev.memory["waiting"] else []
        pending = dev.memory.get("rounds", {}).get(c)
        if pending is None or pending["sent"] or src not in pending["waiting"]:
            return [self.reject(dev, src, "unexpected-report")]
        pending["digests"][src] = digest
        pending["waiting"].discard(src)
        if not pending["waiting"] and pending["own"] is not None:
            return self._report(dev, c)
        return []

    # --- dispatch ---

    def handle_message(self, engine, dev, src, body):
        from_parent = src == self.cfg.topology.parent(dev.id)
        keys = [dev.trusted["auth"]] if from_parent else self.accepted_keys(engine, dev, dev.trusted["auth"])
        payload, reason = opened(body, keys)
        if payload is None:
            return [self.reject(dev, src, reason)]
        if not (isinstance(payload, Pair) and isinstance(payload.left, Counter)):
            return [self.reject(dev, src, "malformed")]
        if from_parent and isinstance(payload.right, Counter):
            return self._prover_request(engine, dev, src, payload)
        if not from_parent and isinstance(payload.right, Hash):
            return self._child_report(engine, dev, src, payload.left.value, payload.right)
        return [self.reject(dev, src, "malformed")]

    def handle_timer(self, engine, dev, tag):
        match tag:
            case ("round", c):
                return self._open_round(engine, dev, c)
            case ("deadline", c) | ("claim", c):
                if dev.memory.get("open") and dev.memory.get("round") == c:
                    if tag[0] == "claim" or engine.now >= dev.memory["target"] + self.epsilon:
                        return self._claim(engine, dev)
            case ("measure", c):
                return self._measure(engine, dev, c)
            case ("agg", c):
                pending = dev.memory.get("rounds", {}).get(c)
                if pending is not None and not pending["sent"]:
                    return self._report(dev, c)
        return []
