"""
PADS : non-interactive self-attestation with gossip consensus.

Every prover keeps a vector over the swarm of (status, freshness), where
freshness is the tick of the measurement the entry stems from. Vectors are
gossiped to neighbours and merged: higher freshness wins, at equal freshness
unhealthy beats healthy beats unknown. A relying-party query to any prover
turns its current vector into a claim over the provers with known status.

    gossip  pair(L, mac(k(auth), L))   L = list of pair(a(P), pair(a(status), ctr(freshness)))
"""
from __future__ import annotations

import logging

from ..core import EventKind, Role, Status
from ..errors import ConfigurationError
from ..simnet import record
from ..symcrypto import Atom, Counter, Key, Pair, list_items, term_list
from .base import RELYING_PARTY, VERIFIER, KeyKind, Protocol, TopologyKind, opened, signed

log = logging.getLogger("cra.pads")

RANK = {Status.UNKNOWN: 0, Status.HEALTHY: 1, Status.UNHEALTHY: 2}
NEVER = -1


def merge_entry(mine: tuple[Status, int], theirs: tuple[Status, int]) -> tuple[Status, int]:
    if theirs[1] != mine[1]:
        return theirs if theirs[1] > mine[1] else mine
    return theirs if RANK[theirs[0]] > RANK[mine[0]] else mine


def encode_vector(vector: dict[str, tuple[Status, int]]):
    return term_list(
        Pair(Atom(p), Pair(Atom(status.value), Counter(fresh)))
        for p, (status, fresh) in sorted(vector.items()) if fresh != NEVER
    )


class Pads(Protocol):
    name = "pads"
    interactive = False
    validator = "Self-LC"
    measurement_timers = ("self",)

    def validate(self):
        super().validate()
        if self.cfg.topology.kind != TopologyKind.DISTRIBUTED_GRAPH:
            raise ConfigurationError("PADS requires a distributed graph topology")
        if self.cfg.key_policy.kind != KeyKind.SWARM_SHARED:
            raise ConfigurationError("PADS requires swarm-shared keys")
        for q in self.queries:
            if q["prover"] not in self.cfg.provers:
                raise ConfigurationError(f"query targets unknown prover {q['prover']}")

    @property
    def option(self):
        return self.cfg.pads.get

    @property
    def queries(self) -> list[dict]:
        default_prover = self.cfg.provers[0] if self.cfg.provers else None
        out = []
        for q in self.cfg.pads.get("queries", []):
            out.append(q if isinstance(q, dict) else {"at": q, "prover": default_prover})
        return sorted(out, key=lambda q: (q["at"], q["prover"]))

    def roles(self):
        roles = {p: [Role.PROVER.value, Role.AGGREGATOR.value] for p in self.cfg.provers}
        roles[VERIFIER] = [Role.VERIFIER.value]
        roles[RELYING_PARTY] = [Role.RELYING_PARTY.value]
        return roles

    def start(self, engine):
        first_attest = self.option("first_attest", 0)
        first_gossip = self.option("first_gossip", first_attest + 1)
        for p in self.cfg.provers:
            dev = engine.devices[p]
            dev.memory["vector"] = {q: (Status.UNKNOWN, NEVER) for q in self.cfg.provers}
            engine.set_timer(p, first_attest, ("self",))
            engine.set_timer(p, first_gossip, ("gossip", 1))
        for i, q in enumerate(self.queries):
            engine.set_timer(q["prover"], q["at"], ("query", i + 1))

    # --- handlers ---

    def _self_attest(self, engine, dev):
        healthy = dev.software.label in self.acceptable_now(engine, dev.id)
        status = Status.HEALTHY if healthy else Status.UNHEALTHY
        vector = dev.memory["vector"]
        vector[dev.id] = merge_entry(vector[dev.id], (status, engine.now))
        return [self.measure(engine, dev),
                self.timer(engine.now + self.option("attest_period", 4), "self")]

    def _gossip(self, engine, dev, k: int):
        body = signed(dev.trusted["auth"], encode_vector(dev.memory["vector"]))
        actions = [self.send(n, body) for n in self.cfg.topology.neighbours(dev.id)]
        rounds = self.option("gossip_rounds")
        if rounds is None or k < rounds:
            actions.append(self.timer(engine.now + self.option("gossip_period", 2), "gossip", k + 1))
        return actions

    def _query(self, engine, dev, i: int):
        known = {p: entry for p, entry in dev.memory["vector"].items() if entry[0] != Status.UNKNOWN}
        start = min((fresh for _, fresh in known.values()), default=engine.now)
        return [
            record(EventKind.ATT_START, verifier=RELYING_PARTY, counter=i),
            record(EventKind.CLAIM_INDIVIDUAL, relying_party=RELYING_PARTY, via=dev.id,
                   statuses={p: status.value for p, (status, _) in sorted(known.items())},
                   interval=[start, engine.now], counter=i),
        ]

    def _decode(self, payload) -> list[tuple[str, Status, int]] | None:
        items = list_items(payload)
        if items is None:
            return None
        entries = []
        for item in items:
            try:
                p, status, fresh = item.left.name, Status(item.right.left.name), item.right.right.value
            except (AttributeError, ValueError):
                return None
            if p not in self.cfg.provers or status == Status.UNKNOWN:
                return None
            entries.append((p, status, fresh))
        return entries

    def handle_message(self, engine, dev, src, body):
        payload, reason = opened(body, [dev.trusted["auth"]])
        entries = self._decode(payload) if payload is not None else None
        if entries is None:
            log.warning(f"{dev.id} ignores malformed vector from {src} at tick {engine.now}")
            return [self.reject(dev, src, reason or "malformed")]
        vector = dev.memory["vector"]
        for p, status, fresh in entries:
            vector[p] = merge_entry(vector[p], (status, fresh))
        return []

    def handle_timer(self, engine, dev, tag):
        match tag:
            case ("self",):
                return self._self_attest(engine, dev)
            case ("gossip", k):
                return self._gossip(engine, dev, k)
            case ("query", i):
                return self._query(engine, dev, i)
        return []

    def forged_templates(self, engine, dst):
        if dst not in self.cfg.provers:
            return []
        forged = {p: (Status.HEALTHY, engine.now) for p in self.cfg.provers}
        return [signed(Key("auth"), encode_vector(forged))]
