"""
Physical-capture detection add-ons: heartbeat (hb), secret update (su) and
frequent attestation (att). Each service owns its message channels and timer
tags; the protocol base class routes to it.
"""
from __future__ import annotations

import logging
from typing import TYPE_CHECKING

from ..core import DeviceId, EventKind, Trace
from ..errors import ConfigurationError
from ..simnet import Device, Send, SetTimer, record
from ..symcrypto import Atom, Counter, Key, Pair, Term
from .base import VERIFIER, KeyPolicy, ProtocolConfig, opened, signed

if TYPE_CHECKING:
    from ..simnet import Engine
    from .base import Protocol

log = logging.getLogger("cra.defenses")

DEFENSES = ("hb", "su", "att")


def epoch_key(e: int) -> Key:
    return Key(f"epoch:{e}")


class Service:
    channels: tuple = ()
    timer_tags: tuple = ()

    def __init__(self, cfg: ProtocolConfig):
        self.cfg = cfg

    def setup(self, engine: "Engine", protocol: "Protocol"):
        pass

    def on_message(self, engine: "Engine", protocol: "Protocol", dev: Device, src: DeviceId, body: Term):
        return []

    def on_timer(self, engine: "Engine", protocol: "Protocol", dev: Device, tag):
        return []


class HeartbeatService(Service):
    """Provers beat every period; the observer flags silence longer than T_attack."""
    channels = ("hb",)
    timer_tags = ("hb", "hb-check")

    def setup(self, engine, protocol):
        observer = engine.devices[VERIFIER]
        observer.memory["last_seen"] = {p: engine.now for p in self.cfg.provers}
        observer.memory["flagged"] = {p: False for p in self.cfg.provers}
        for p in self.cfg.provers:
            engine.devices[p].memory["hb_seq"] = 0
            engine.set_timer(p, engine.now, ("hb",))
        engine.set_timer(VERIFIER, engine.now + self.cfg.heartbeat_period, ("hb-check",))

    def on_timer(self, engine, protocol, dev, tag):
        period = self.cfg.heartbeat_period
        if tag[0] == "hb":
            seq = dev.memory["hb_seq"]
            dev.memory["hb_seq"] = seq + 1
            beat = signed(dev.trusted["device"], Pair(Atom(dev.id), Counter(seq)))
            return [record(EventKind.HEARTBEAT_SEND, prover=dev.id),
                    Send(VERIFIER, beat, "hb"),
                    SetTimer(engine.now + period, ("hb",))]
        actions = []
        for p in self.cfg.provers:
            silence = engine.now - dev.memory["last_seen"][p]
            if silence > self.cfg.t_attack and not dev.memory["flagged"][p]:
                dev.memory["flagged"][p] = True
                actions.append(record(EventKind.ABSENCE_FLAG, observer=dev.id, prover=p,
                                      silent_since=dev.memory["last_seen"][p]))
        actions.append(SetTimer(engine.now + period, ("hb-check",)))
        return actions

    def on_message(self, engine, protocol, dev, src, body):
        if src not in self.cfg.provers:
            return [protocol.reject(dev, src, "unknown-heartbeat-sender")]
        payload, reason = opened(body, [KeyPolicy.device_key(src)])
        if payload is None or not isinstance(payload, Pair) or payload.left != Atom(src):
            return [protocol.reject(dev, src, reason or "malformed")]
        seen = dev.memory.setdefault("hb_last_seq", {})
        if not isinstance(payload.right, Counter) or payload.right.value < seen.get(src, 0):
            return [protocol.reject(dev, src, "stale-heartbeat")]
        seen[src] = payload.right.value + 1
        actions = [record(EventKind.HEARTBEAT_RECV, observer=dev.id, prover=src)]
        last = dev.memory["last_seen"][src]
        if engine.now - last > self.cfg.t_attack and not dev.memory["flagged"][src]:
            actions.append(record(EventKind.ABSENCE_FLAG, observer=dev.id, prover=src, silent_since=last))
        dev.memory["last_seen"][src] = engine.now
        dev.memory["flagged"][src] = False
        return actions


class SecretUpdateService(Service):
    """
    The verifier rotates an epoch key every epoch_length ticks. A fresh key is
    provisioned straight into the trusted environment of every prover that is
    online and current; it never crosses the network. A prover captured over
    a rotation misses it and is never provisioned again.
    """
    timer_tags = ("su",)

    def setup(self, engine, protocol):
        for dev in engine.devices.values():
            dev.trusted["epoch"] = 0
            dev.trusted["epoch_key"] = epoch_key(0)
        engine.set_timer(VERIFIER, engine.now + self.cfg.epoch_length, ("su",))

    def on_timer(self, engine, protocol, dev, tag):
        e = dev.trusted["epoch"] + 1
        _install(engine, dev, e)
        updated, missed = [], []
        for p in self.cfg.provers:
            prover = engine.devices[p]
            if prover.online and prover.trusted.get("epoch") == e - 1:
                _install(engine, prover, e)
                updated.append(p)
            else:
                missed.append(p)
        if missed:
            log.debug(f"epoch {e}: {missed} not provisioned")
        return [record(EventKind.EPOCH_KEY_UPDATE, epoch=e, updated=updated, missed=missed),
                SetTimer(engine.now + self.cfg.epoch_length, ("su",))]


def _install(engine: "Engine", dev: Device, e: int):
    dev.trusted["previous_epoch_key"] = dev.trusted["epoch_key"]
    dev.trusted["epoch"] = e
    dev.trusted["epoch_key"] = epoch_key(e)
    dev.memory["epoch_since"] = engine.now


class FrequentAttestationService(Service):
    """Periodic self-measurement of every prover."""
    timer_tags = ("att",)

    def setup(self, engine, protocol):
        for p in self.cfg.provers:
            engine.set_timer(p, engine.now, ("att",))

    def on_timer(self, engine, protocol, dev, tag):
        return [protocol.measure(engine, dev, source="att"),
                SetTimer(engine.now + self.cfg.att_period, ("att",))]


def build_services(cfg: ProtocolConfig) -> list[Service]:
    unknown = sorted(set(cfg.defenses) - set(DEFENSES))
    if unknown:
        raise ConfigurationError(f"unknown defenses {unknown}")
    services: list[Service] = []
    if "hb" in cfg.defenses:
        if not cfg.heartbeat_period or cfg.t_attack is None or cfg.heartbeat_period > cfg.t_attack:
            raise ConfigurationError("heartbeat requires 0 < heartbeat_period <= t_attack")
        services.append(HeartbeatService(cfg))
    if "su" in cfg.defenses:
        if not cfg.epoch_length or cfg.t_attack is None or cfg.epoch_length > cfg.t_attack:
            raise ConfigurationError("secret update requires 0 < epoch_length <= t_attack")
        services.append(SecretUpdateService(cfg))
    if "att" in cfg.defenses:
        if not cfg.att_period:
            raise ConfigurationError("frequent attestation requires att_period")
        services.append(FrequentAttestationService(cfg))
    return services


def attestation_frequency_monitor(cfg: ProtocolConfig | None, trace: Trace) -> list[DeviceId]:
    """
    Provers with a measurement gap strictly longer than T_attack, counting the
    stretch from the trace start to the first measurement and from the last
    measurement to the end of the trace.
    """
    t_attack = cfg.t_attack if cfg is not None and cfg.t_attack is not None else \
        trace.header.get("adversary", {}).get("t_attack")
    if t_attack is None:
        raise ConfigurationError("attestation frequency monitor needs t_attack")
    provers = list(cfg.provers) if cfg is not None else trace.provers
    start = trace.events[0].at if trace.events else 0
    last: dict[DeviceId, int] = {p: start for p in provers}
    flagged = set()
    for ev in trace.events:
        if ev.kind != EventKind.MEASURE_TAKEN:
            continue
        p = ev.get("prover")
        if ev.at - last.get(p, start) > t_attack:
            flagged.add(p)
        last[p] = ev.at
    flagged.update(p for p, at in last.items() if trace.horizon - at > t_attack)
    return sorted(flagged)


def heartbeat_flags(trace: Trace) -> dict[DeviceId, list[int]]:
    flags: dict[DeviceId, list[int]] = {}
    for ev in trace.events:
        if ev.kind == EventKind.ABSENCE_FLAG:
            flags.setdefault(ev.get("prover"), []).append(ev.at)
    return flags
