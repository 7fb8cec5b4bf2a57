"""
SIMPLE+ : shared swarm keys, self-validation against verifier-supplied
expected states, one report bit per prover aggregated with bitwise or.

Message layouts (ours, the protocol's own formats are not public):

    request  pair(P, mac(k(auth), P))   P = pair(ctr(c), pair(<expected list>, bv(mask)))
    report   pair(R, mac(K, R))         R = pair(ctr(c), bv(bits))

K is k(auth), or pair(k(auth), k(epoch:e)) when secret updates are enabled.
"""
from __future__ import annotations

import numpy as np

from ..core import EventKind, Status
from ..errors import ConfigurationError, TypeMismatch
from ..simnet import record
from ..symcrypto import ONE, Atom, BitVec, Counter, Key, Or, Pair, bitvec, list_items, normalize, term_list
from .base import VERIFIER, KeyKind, Protocol, opened, signed


def simpleplus_forged_request(counter: int, provers: list[str], expected: list[str]):
    """Request for round `counter` over every prover, as the key holder would build it."""
    payload = Pair(Counter(counter), Pair(term_list(Atom(l) for l in sorted(expected)),
                                          bitvec(*[True] * len(provers))))
    return signed(Key("auth"), payload)


class SimplePlus(Protocol):
    name = "simpleplus"
    validator = "Self-V"

    def validate(self):
        super().validate()
        if self.cfg.key_policy.kind != KeyKind.SWARM_SHARED:
            raise ConfigurationError("SIMPLE+ requires swarm-shared keys")
        if not self.cfg.topology.is_tree or self.cfg.topology.root != VERIFIER:
            raise ConfigurationError("SIMPLE+ requires a spanning tree rooted at the verifier")
        policy = self.cfg.sampling.get("policy", "all")
        if policy not in ("all", "uniform"):
            raise ConfigurationError(f"unknown sampling policy {policy!r}")
        if policy == "uniform" and not 1 <= self.cfg.sampling.get("size", 0) <= len(self.cfg.provers):
            raise ConfigurationError("uniform sampling size must be between 1 and the swarm size")

    # --- helpers ---

    @property
    def width(self) -> int:
        return len(self.cfg.provers)

    def sample(self, c: int) -> list[str]:
        if self.cfg.sampling.get("policy", "all") == "all":
            return list(self.cfg.provers)
        rng = np.random.default_rng([self.cfg.seed, c])
        chosen = rng.choice(len(self.cfg.provers), size=self.cfg.sampling["size"], replace=False)
        return [self.cfg.provers[i] for i in sorted(chosen)]

    def expected(self, engine) -> list[str]:
        labels = set()
        for p in self.cfg.provers:
            labels |= self.acceptable_now(engine, p)
        return sorted(labels)

    def zeros(self) -> BitVec:
        return bitvec(*[False] * self.width)

    def _report(self, dev, c: int, bits: BitVec):
        parent = self.cfg.topology.parent(dev.id)
        dev.memory["rounds"][c]["sent"] = True
        if parent is None:
            return []
        payload = Pair(Counter(c), bits)
        return [self.send(parent, signed(self.report_key(dev, dev.trusted["auth"]), payload))]

    # --- verifier ---

    def start(self, engine):
        engine.set_timer(VERIFIER, self.cfg.start_at, ("round", 1))

    def _open_round(self, engine, dev, c: int):
        members = self.sample(c)
        mask = bitvec(*[p in members for p in self.cfg.provers])
        payload = Pair(Counter(c), Pair(term_list(Atom(l) for l in self.expected(engine)), mask))
        children = self.cfg.topology.children(VERIFIER)
        dev.memory.update(round=c, start=engine.now, open=True, acc=self.zeros(),
                          waiting=set(children), members=members)
        actions = [record(EventKind.ATT_START, verifier=VERIFIER, counter=c)]
        actions += [record(EventKind.SEND_REQUEST, initiator=VERIFIER, prover=p, request=payload)
                    for p in members]
        request = signed(dev.trusted["auth"], payload)
        actions += [self.send(child, request) for child in children]
        if not children:
            return actions + self._claim(engine, dev)
        return actions + [self.timer(engine.now + self.cfg.deadline, "deadline", c)]

    def _claim(self, engine, dev):
        c = dev.memory["round"]
        dev.memory["open"] = False
        bits = dev.memory["acc"].bits
        index = self.cfg.index
        statuses = {p: (Status.HEALTHY if bits[index[p]] == ONE else Status.UNHEALTHY).value
                    for p in dev.memory["members"]}
        actions = [record(EventKind.CLAIM_INDIVIDUAL, relying_party=VERIFIER, statuses=statuses,
                          interval=[dev.memory["start"], engine.now], counter=c)]
        if c < self.cfg.rounds:
            actions.append(self.timer(engine.now + self.cfg.round_gap, "round", c + 1))
        return actions

    def _verifier_report(self, engine, dev, src, c: int, bits: BitVec):
        if not dev.memory.get("open") or c != dev.memory["round"] or src not in dev.memory["waiting"]:
            return [self.reject(dev, src, "unexpected-report")]
        dev.memory["acc"] = normalize(Or(dev.memory["acc"], bits))
        dev.memory["waiting"].discard(src)
        if not dev.memory["waiting"]:
            return self._claim(engine, dev)
        return []

    # --- prover ---

    def _prover_request(self, engine, dev, src, payload):
        c = payload.left.value
        expected = list_items(payload.right.left)
        mask = payload.right.right
        if expected is None or not isinstance(mask, BitVec) or len(mask.bits) != self.width:
            return [self.reject(dev, src, "malformed")]
        if self.cfg.counter and c <= dev.trusted["counter"]:
            return [self.reject(dev, src, "stale-counter")]
        dev.trusted["counter"] = max(c, dev.trusted["counter"])
        selected = mask.bits[self.cfg.index[dev.id]] == ONE
        actions = [record(EventKind.RECV_REQUEST, prover=dev.id, request=payload)]
        own = [False] * self.width
        if selected:
            actions.append(self.measure(engine, dev))
            own[self.cfg.index[dev.id]] = Atom(dev.software.label) in expected
        children = self.cfg.topology.children(dev.id)
        actions += [self.send(child, signed(dev.trusted["auth"], payload)) for child in children]
        if selected:
            actions.append(record(EventKind.RUN_COMPLETE, prover=dev.id, initiator=VERIFIER, request=payload))
        dev.memory.setdefault("rounds", {})[c] = {"acc": bitvec(*own), "waiting": set(children), "sent": False}
        if not children:
            return actions + self._report(dev, c, bitvec(*own))
        wait = 2 * self.cfg.latency * self.cfg.topology.height(dev.id) + self.cfg.latency
        return actions + [self.timer(engine.now + wait, "agg", c)]

    def _aggregator_report(self, engine, dev, src, c: int, bits: BitVec):
        pending = dev.memory.get("rounds", {}).get(c)
        if pending is None or pending["sent"] or src not in pending["waiting"]:
            return [self.reject(dev, src, "unexpected-report")]
        pending["acc"] = normalize(Or(pending["acc"], bits))
        pending["waiting"].discard(src)
        if not pending["waiting"]:
            return self._report(dev, c, pending["acc"])
        return []

    # --- dispatch ---

    def handle_message(self, engine, dev, src, body):
        inner = body.left if isinstance(body, Pair) else None
        is_report = isinstance(inner, Pair) and isinstance(inner.right, BitVec)
        keys = self.accepted_keys(engine, dev, dev.trusted["auth"]) if is_report else [dev.trusted["auth"]]
        payload, reason = opened(body, keys)
        if payload is None:
            return [self.reject(dev, src, reason)]
        if not isinstance(payload, Pair) or not isinstance(payload.left, Counter):
            return [self.reject(dev, src, "malformed")]
        c = payload.left.value
        try:
            if is_report:
                if len(payload.right.bits) != self.width:
                    return [self.reject(dev, src, "malformed")]
                if dev.id == VERIFIER:
                    return self._verifier_report(engine, dev, src, c, payload.right)
                return self._aggregator_report(engine, dev, src, c, payload.right)
            if dev.id == VERIFIER or not isinstance(payload.right, Pair):
                return [self.reject(dev, src, "malformed")]
            return self._prover_request(engine, dev, src, payload)
        except TypeMismatch:
            return [self.reject(dev, src, "malformed")]

    def handle_timer(self, engine, dev, tag):
        match tag:
            case ("round", c):
                return self._open_round(engine, dev, c)
            case ("deadline", c):
                if dev.memory.get("open") and dev.memory.get("round") == c:
                    return self._claim(engine, dev)
            case ("agg", c):
                pending = dev.memory.get("rounds", {}).get(c)
                if pending is not None and not pending["sent"]:
                    return self._report(dev, c, pending["acc"])
        return []

    def forged_templates(self, engine, dst):
        v = engine.devices[VERIFIER].memory
        current = v.get("round", 0)
        templates = []
        if dst != VERIFIER:
            templates.append(simpleplus_forged_request(current + 1, self.cfg.provers, self.expected(engine)))
        if dst == VERIFIER or self.cfg.topology.children(dst):
            key = self.report_key(engine.devices[dst], Key("auth"))
            templates.append(signed(key, Pair(Counter(max(current, 1)), bitvec(*[True] * self.width))))
        return templates
