"""Protocol registry and per-protocol entry points."""
from __future__ import annotations

from ..core import Trace
from ..errors import ConfigurationError
from .base import (RELYING_PARTY, VERIFIER, KeyKind, KeyPolicy, Protocol, ProtocolConfig, Topology,
                   TopologyKind)
from .defenses import (HeartbeatService, SecretUpdateService, attestation_frequency_monitor,
                       heartbeat_flags)
from .pads import Pads
from .sap import Sap
from .seda import Seda
from .simpleplus import SimplePlus, simpleplus_forged_request

PROTOCOLS: dict[str, type[Protocol]] = {
    "simpleplus": SimplePlus,
    "seda": Seda,
    "pads": Pads,
    "sap": Sap,
}

DEFAULT_TOPOLOGY = {"simpleplus": "star", "seda": "hub", "pads": "complete", "sap": "balanced"}
DEFAULT_KEYS = {"simpleplus": "swarm_shared", "seda": "per_link", "pads": "swarm_shared", "sap": "swarm_shared"}


def build_protocol(cfg: ProtocolConfig) -> Protocol:
    cls = PROTOCOLS.get(cfg.protocol)
    if cls is None:
        raise ConfigurationError(f"unknown protocol {cfg.protocol!r}")
    return cls(cfg)


def _run(cls: type[Protocol], cfg: ProtocolConfig, engine) -> Trace:
    if cfg.protocol != cls.name:
        raise ConfigurationError(f"{cls.name} cannot run a {cfg.protocol} configuration")
    protocol = cls(cfg)
    engine.protocol = protocol
    if not engine.devices:
        engine.devices = {d.id: d for d in protocol.build_devices()}
    return engine.run()


def simpleplus_run(cfg: ProtocolConfig, engine) -> Trace:
    return _run(SimplePlus, cfg, engine)


def seda_run(cfg: ProtocolConfig, engine) -> Trace:
    return _run(Seda, cfg, engine)


def pads_run(cfg: ProtocolConfig, engine) -> Trace:
    return _run(Pads, cfg, engine)


def sap_run(cfg: ProtocolConfig, engine) -> Trace:
    return _run(Sap, cfg, engine)


def heartbeat_service(cfg: ProtocolConfig, engine) -> Trace:
    """Run the configured protocol with heartbeats enabled."""
    cfg.defenses = frozenset(cfg.defenses) | {"hb"}
    return _run(PROTOCOLS[cfg.protocol], cfg, engine)


def secret_update_epoch(cfg: ProtocolConfig, engine) -> Trace:
    """Run the configured protocol with epoch-key rotation enabled."""
    cfg.defenses = frozenset(cfg.defenses) | {"su"}
    return _run(PROTOCOLS[cfg.protocol], cfg, engine)


__all__ = [
    "PROTOCOLS", "DEFAULT_TOPOLOGY", "DEFAULT_KEYS", "VERIFIER", "RELYING_PARTY",
    "KeyKind", "KeyPolicy", "Protocol", "ProtocolConfig", "Topology", "TopologyKind",
    "SimplePlus", "Seda", "Pads", "Sap", "HeartbeatService", "SecretUpdateService",
    "build_protocol", "simpleplus_run", "seda_run", "pads_run", "sap_run",
    "heartbeat_service", "secret_update_epoch", "attestation_frequency_monitor",
    "heartbeat_flags", "simpleplus_forged_request",
]
