"""
SEDA : per-link keys over a spanning tree, parents validate their children
against locally stored acceptable states and sum attested/total counts.

    request  pair(Q, mac(k(link:A-B), Q))   Q = pair(ctr(c), a(seda))
    report   pair(R, mac(K, R))             R = pair(ctr(c), pair(h(a(label)), pair(ctr(att), ctr(tot))))
"""
from __future__ import annotations

from ..core import EventKind, Status
from ..errors import ConfigurationError
from ..simnet import record
from ..symcrypto import Atom, Counter, Hash, Pair
from .base import VERIFIER, KeyKind, KeyPolicy, Protocol, opened, signed

TAG = Atom("seda")


class Seda(Protocol):
    name = "seda"
    validator = "Self-L"

    def validate(self):
        super().validate()
        topology = self.cfg.topology
        if self.cfg.key_policy.kind != KeyKind.PER_LINK:
            raise ConfigurationError("SEDA requires per-link keys")
        if not topology.is_tree or topology.root != VERIFIER:
            raise ConfigurationError("SEDA requires a spanning tree rooted at the verifier")
        if len(topology.children(VERIFIER)) != 1:
            raise ConfigurationError("SEDA verifier must have exactly one child, the initial prover")

    @property
    def initial_prover(self) -> str:
        return self.cfg.topology.children(VERIFIER)[0]

    def healthy_digest(self, engine, p: str, digest) -> bool:
        return digest in {Hash(Atom(label)) for label in self.acceptable_now(engine, p)}

    def _report(self, dev, c: int):
        pending = dev.memory["rounds"][c]
        pending["sent"] = True
        parent = self.cfg.topology.parent(dev.id)
        payload = Pair(Counter(c), Pair(pending["digest"], Pair(Counter(pending["att"]), Counter(pending["tot"]))))
        key = self.report_key(dev, KeyPolicy.link_key(dev.id, parent))
        return [self.send(parent, signed(key, payload))]

    # --- verifier ---

    def start(self, engine):
        engine.set_timer(VERIFIER, self.cfg.start_at, ("round", 1))

    def _open_round(self, engine, dev, c: int):
        payload = Pair(Counter(c), TAG)
        dev.memory.update(round=c, start=engine.now, open=True)
        actions = [record(EventKind.ATT_START, verifier=VERIFIER, counter=c)]
        actions += [record(EventKind.SEND_REQUEST, initiator=VERIFIER, prover=p, request=payload)
                    for p in self.cfg.provers]
        child = self.initial_prover
        actions.append(self.send(child, signed(KeyPolicy.link_key(VERIFIER, child), payload)))
        return actions + [self.timer(engine.now + self.cfg.deadline, "deadline", c)]

    def _claim(self, engine, dev, healthy: bool):
        c = dev.memory["round"]
        dev.memory["open"] = False
        status = Status.HEALTHY if healthy else Status.UNHEALTHY
        actions = [record(EventKind.CLAIM_GROUP, relying_party=VERIFIER,
                          groups=[[sorted(self.cfg.provers), status.value]],
                          interval=[dev.memory["start"], engine.now], counter=c)]
        if c < self.cfg.rounds:
            actions.append(self.timer(engine.now + self.cfg.round_gap, "round", c + 1))
        return actions

    # --- prover ---

    def _prover_request(self, engine, dev, src, c: int, payload):
        if self.cfg.counter and c <= dev.trusted["counter"]:
            return [self.reject(dev, src, "stale-counter")]
        dev.trusted["counter"] = max(c, dev.trusted["counter"])
        children = self.cfg.topology.children(dev.id)
        actions = [record(EventKind.RECV_REQUEST, prover=dev.id, request=payload),
                   self.measure(engine, dev)]
        actions += [self.send(child, signed(KeyPolicy.link_key(dev.id, child), payload)) for child in children]
        actions.append(record(EventKind.RUN_COMPLETE, prover=dev.id, initiator=VERIFIER, request=payload))
        dev.memory.setdefault("rounds", {})[c] = {
            "digest": Hash(Atom(dev.software.label)), "att": 0, "tot": 0,
            "waiting": set(children), "sent": False,
        }
        if self.cfg.topology.parent(dev.id) is None:
            return actions
        if not children:
            return actions + self._report(dev, c)
        wait = 2 * self.cfg.latency * self.cfg.topology.height(dev.id) + self.cfg.latency
        return actions + [self.timer(engine.now + wait, "agg", c)]

    def _child_report(self, engine, dev, src, c: int, digest, att: int, tot: int):
        if dev.id == VERIFIER:
            if not dev.memory.get("open") or c != dev.memory["round"] or src != self.initial_prover:
                return [self.reject(dev, src, "unexpected-report")]
            s = len(self.cfg.provers)
            healthy = self.healthy_digest(engine, src, digest) and att == tot == s - 1
            return self._claim(engine, dev, healthy)
        pending = dev.memory.get("rounds", {}).get(c)
        if pending is None or pending["sent"] or src not in pending["waiting"]:
            return [self.reject(dev, src, "unexpected-report")]
        ok = self.healthy_digest(engine, src, digest)
        pending["att"] += int(ok) + att
        pending["tot"] += 1 + tot
        pending["waiting"].discard(src)
        if not pending["waiting"]:
            return self._report(dev, c)
        return []

    # --- dispatch ---

    def handle_message(self, engine, dev, src, body):
        link = KeyPolicy.link_key(dev.id, src)
        if src == self.cfg.topology.parent(dev.id):
            payload, reason = opened(body, [link])
            if payload is None:
                return [self.reject(dev, src, reason)]
            if not (isinstance(payload, Pair) and isinstance(payload.left, Counter) and payload.right == TAG):
                return [self.reject(dev, src, "malformed")]
            return self._prover_request(engine, dev, src, payload.left.value, payload)
        if src not in self.cfg.topology.children(dev.id):
            return [self.reject(dev, src, "unknown-link")]
        payload, reason = opened(body, self.accepted_keys(engine, dev, link))
        if payload is None:
            return [self.reject(dev, src, reason)]
        try:
            c, digest = payload.left, payload.right.left
            att, tot = payload.right.right.left, payload.right.right.right
        except AttributeError:
            return [self.reject(dev, src, "malformed")]
        if not all(isinstance(x, Counter) for x in (c, att, tot)):
            return [self.reject(dev, src, "malformed")]
        return self._child_report(engine, dev, src, c.value, digest, att.value, tot.value)

    def handle_timer(self, engine, dev, tag):
        match tag:
            case ("round", c):
                return self._open_round(engine, dev, c)
            case ("deadline", c):
                if dev.memory.get("open") and dev.memory.get("round") == c:
                    return self._claim(engine, dev, False)
            case ("agg", c):
                pending = dev.memory.get("rounds", {}).get(c)
                if pending is not None and not pending["sent"]:
                    return self._report(dev, c)
        return []

    def forged_templates(self, engine, dst):
        if dst != VERIFIER:
            return []
        c = max(engine.devices[VERIFIER].memory.get("round", 1), 1)
        s = len(self.cfg.provers)
        root = self.initial_prover
        label = sorted(self.acceptable_now(engine, root))[0]
        payload = Pair(Counter(c), Pair(Hash(Atom(label)), Pair(Counter(s - 1), Counter(s - 1))))
        return [signed(self.report_key(engine.devices[VERIFIER], KeyPolicy.link_key(VERIFIER, root)), payload)]
