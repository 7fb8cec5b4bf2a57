"""
Scenario files: YAML documents (version 1) describing a protocol
configuration, an adversary, bounds and the properties to check.

A scenario is validated against SCHEMA before anything runs; unknown fields
are rejected. Scheduled adversary actions are checked against the adversary
flags at load time, so a scenario can never ask for a capability it lacks.
"""
from __future__ import annotations

import logging
from functools import partial
from pathlib import Path
from typing import Any

import yaml
from jsonschema import Draft202012Validator

from .adversary import FLAGS, AdversaryModel
from .core import COMPROMISED_PREFIX, ORIGINAL_LABEL, AcceptableStates, Trace
from .errors import ScenarioError
from .protocols import DEFAULT_KEYS, DEFAULT_TOPOLOGY, PROTOCOLS, build_protocol
from .protocols.base import KeyKind, KeyPolicy, ProtocolConfig, Topology
from .protocols.defenses import DEFENSES
from .simnet import NET_ACTIONS, Engine
from .strategies import DecisionStrategy, ScriptedStrategy
from .tracecheck import ALL_PROPERTIES, GroupSpec, PropertyId
from .utils import Config

log = logging.getLogger("cra.scenario")

_NAT = {"type": "integer", "minimum": 0}
_POS = {"type": "integer", "minimum": 1}
_STR = {"type": "string", "minLength": 1}
_NAMES = {"type": "array", "items": _STR, "uniqueItems": True}

_TOPOLOGY = {
    "oneOf": [
        _STR,
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["edges"],
            "properties": {
                "kind": {"enum": ["tree", "graph"]},
                "root": _STR,
                "edges": {"type": "array", "items": {"type": "array", "items": _STR, "minItems": 2, "maxItems": 2}},
            },
        },
    ]
}

_ACTION = {
    "type": "object",
    "additionalProperties": False,
    "required": ["at", "action", "prover"],
    "properties": {
        "at": _NAT,
        "action": {"enum": ["compromise", "restore", "read", "capture"]},
        "prover": _STR,
        "label": _STR,
        "until": _NAT,
        "write": {"type": "boolean"},
        "rewrite_counter": _NAT,
    },
}

_QUERY = {
    "oneOf": [
        _NAT,
        {"type": "object", "additionalProperties": False, "required": ["at", "prover"],
         "properties": {"at": _NAT, "prover": _STR}},
    ]
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "protocol"],
    "properties": {
        "version": {"const": 1},
        "name": _STR,
        "description": {"type": "string"},
        "protocol": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": sorted(PROTOCOLS)},
                "provers": {"oneOf": [_POS, {**_NAMES, "minItems": 1}]},
                "topology": _TOPOLOGY,
                "key_policy": {"enum": [k.value for k in KeyKind]},
                "defenses": {"type": "array", "items": {"enum": list(DEFENSES)}, "uniqueItems": True},
                "rounds": _POS,
                "round_gap": _POS,
                "start_at": _NAT,
                "latency": _POS,
                "response_deadline": _POS,
                "counter": {"type": "boolean"},
                "sampling": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"policy": {"enum": ["all", "uniform"]}, "size": _POS},
                },
                "pads": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "first_attest": _NAT,
                        "first_gossip": _NAT,
                        "attest_period": _POS,
                        "gossip_period": _POS,
                        "gossip_rounds": _POS,
                        "queries": {"type": "array", "items": _QUERY},
                    },
                },
                "sap": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "epsilon": _NAT,
                        "lead": _POS,
                        "offsets": {"type": "object", "additionalProperties": {"type": "integer"}},
                    },
                },
                "group_threshold": _NAT,
                "heartbeat_period": _POS,
                "epoch_length": _POS,
                "att_period": _POS,
            },
        },
        "topology_variants": {"type": "array", "items": _TOPOLOGY, "minItems": 1},
        "adversary": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "flags": {"type": "array", "items": {"enum": list(FLAGS)}, "uniqueItems": True},
                "t_attack": _POS,
                "net_actions": {"type": "array", "items": {"enum": list(NET_ACTIONS)}, "uniqueItems": True},
                "schedule": {"type": "array", "items": _ACTION},
                "decisions": {"type": "object", "additionalProperties": _STR},
            },
        },
        "acceptable": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "initial": {"type": "object", "additionalProperties": _STR},
                "labels": {"type": "object", "additionalProperties": {**_NAMES, "minItems": 1}},
                "updates": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["at", "prover", "labels"],
                        "properties": {"at": _NAT, "prover": _STR, "labels": {**_NAMES, "minItems": 1}},
                    },
                },
            },
        },
        "bounds": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_provers": _POS,
                "max_rounds": _POS,
                "max_inject_depth": _NAT,
                "max_delay": _NAT,
                "max_interventions": _NAT,
            },
        },
        "horizon": _POS,
        "seed": _NAT,
        "properties": {"type": "array", "items": {"enum": [p.value for p in PropertyId]},
                       "minItems": 1, "uniqueItems": True},
        "groups": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "threshold": _NAT,
                "groups": {"type": "array", "items": {**_NAMES, "minItems": 1}},
            },
        },
        "expect": {
            "type": "object",
            "propertyNames": {"enum": [p.value for p in PropertyId]},
            "additionalProperties": {"enum": ["holds", "violated", "inapplicable"]},
        },
        "explore": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"mode": {"enum": ["exhaustive", "random"]}, "runs": _POS},
        },
    },
}

VALIDATOR = Draft202012Validator(SCHEMA)


def validate_with_schema(obj: Any) -> list[str]:
    return [f"{list(e.absolute_path)}: {e.message}" for e in sorted(VALIDATOR.iter_errors(obj), key=str)]


def _prover_names(spec) -> list[str]:
    if isinstance(spec, int):
        return [f"P{i}" for i in range(spec)]
    return list(spec)


class Scenario:
    """A validated scenario document with builders for configs and engines."""

    def __init__(self, data: dict, source: str = "<scenario>", config: Config | None = None):
        problems = validate_with_schema(data)
        if problems:
            raise ScenarioError(f"{source}: scenario does not match the schema", problems)
        self.data = data
        self.source = source
        self.defaults = config or Config()
        problems = self._lint_schedule()
        if problems:
            raise ScenarioError(f"{source}: adversary schedule exceeds its capabilities", problems)

    @classmethod
    def load(cls, path: str | Path, config: Config | None = None) -> "Scenario":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as e:
            raise ScenarioError(f"{path}: cannot read scenario", [str(e)]) from e
        if not isinstance(data, dict):
            raise ScenarioError(f"{path}: scenario must be a mapping")
        return cls(data, str(path), config)

    @classmethod
    def from_yaml(cls, text: str, config: Config | None = None) -> "Scenario":
        return cls(yaml.safe_load(text), "<string>", config)

    # --- fields ---

    @property
    def name(self) -> str:
        return self.data.get("name") or Path(self.source).stem

    @property
    def protocol_name(self) -> str:
        return self.data["protocol"]["name"]

    @property
    def provers(self) -> list[str]:
        return _prover_names(self.data["protocol"].get("provers", 2))

    @property
    def adversary(self) -> dict:
        return self.data.get("adversary", {})

    @property
    def model(self) -> AdversaryModel:
        return AdversaryModel.from_flags(self.adversary.get("flags", []))

    @property
    def t_attack(self) -> int | None:
        return self.adversary.get("t_attack")

    @property
    def seed(self) -> int:
        return self.data.get("seed", 0)

    @property
    def horizon(self) -> int:
        return self.data.get("horizon", self.defaults.get("engine.horizon", 200))

    @property
    def decisions(self) -> dict[str, str]:
        return dict(self.adversary.get("decisions", {}))

    @property
    def properties(self) -> list[PropertyId]:
        names = self.data.get("properties")
        return [PropertyId(n) for n in names] if names else list(ALL_PROPERTIES)

    @property
    def group_spec(self) -> GroupSpec:
        return GroupSpec.from_dict(self.data.get("groups"))

    @property
    def expect(self) -> dict[PropertyId, str]:
        return {PropertyId(k): v for k, v in self.data.get("expect", {}).items()}

    @property
    def bounds(self) -> dict:
        return dict(self.data.get("bounds", {}))

    @property
    def variants(self) -> list:
        variants = self.data.get("topology_variants")
        if variants:
            return list(variants)
        return [self.data["protocol"].get("topology", DEFAULT_TOPOLOGY[self.protocol_name])]

    # --- checks ---

    def _lint_schedule(self) -> list[str]:
        model = self.model
        t_attack = self.t_attack
        provers = set(self.provers)
        problems = []
        for i, action in enumerate(self.adversary.get("schedule", [])):
            where = f"schedule[{i}] {action['action']} of {action['prover']} at {action['at']}"
            if action["prover"] not in provers:
                problems.append(f"{where}: unknown prover")
            match action["action"]:
                case "compromise":
                    if not model.sw:
                        problems.append(f"{where}: needs flag sw")
                    label = action.get("label")
                    if label and not label.startswith(COMPROMISED_PREFIX):
                        problems.append(f"{where}: label must start with {COMPROMISED_PREFIX!r}")
                case "restore" if not model.msw:
                    problems.append(f"{where}: needs flag msw")
                case "read" if not model.reads_secrets:
                    problems.append(f"{where}: needs flag pni or pi")
                case "capture":
                    if not model.pi:
                        problems.append(f"{where}: needs flag pi")
                    if t_attack is None:
                        problems.append(f"{where}: needs adversary.t_attack")
                    elif "until" not in action:
                        problems.append(f"{where}: needs until")
                    elif action["until"] - action["at"] < t_attack:
                        problems.append(f"{where}: window shorter than T_attack={t_attack}")
            if action["action"] != "capture" and ("until" in action or "rewrite_counter" in action):
                problems.append(f"{where}: until/rewrite_counter only apply to capture")
        return problems

    # --- builders ---

    def topology(self, variant=None) -> Topology:
        return Topology.from_spec(self.variants[0] if variant is None else variant, self.provers)

    def acceptable(self, provers: list[str]) -> AcceptableStates:
        spec = self.data.get("acceptable", {})
        initial = {p: spec.get("initial", {}).get(p, ORIGINAL_LABEL) for p in provers}
        labels = spec.get("labels", {})
        default = {p: labels.get(p, [initial[p]]) for p in provers}
        updates = [(u["at"], u["prover"], u["labels"]) for u in spec.get("updates", []) if u["prover"] in provers]
        return AcceptableStates(initial, default, updates)

    def config(self, variant=None) -> ProtocolConfig:
        proto = self.data["protocol"]
        topology = self.topology(variant)
        nodes = set(topology.nodes())
        provers = [p for p in self.provers if p in nodes]
        default = self.defaults.get
        return ProtocolConfig(
            protocol=self.protocol_name,
            provers=provers,
            topology=topology,
            key_policy=KeyPolicy(KeyKind(proto.get("key_policy", DEFAULT_KEYS[self.protocol_name]))),
            acceptable=self.acceptable(provers),
            defenses=frozenset(proto.get("defenses", [])),
            rounds=proto.get("rounds", 1),
            round_gap=proto.get("round_gap", default("engine.round_gap", 1)),
            start_at=proto.get("start_at", default("engine.start_at", 1)),
            latency=proto.get("latency", default("engine.latency", 1)),
            response_deadline=proto.get("response_deadline"),
            counter=proto.get("counter", True),
            sampling=dict(proto.get("sampling", {"policy": "all"})),
            pads=dict(proto.get("pads", {})),
            sap=dict(proto.get("sap", {})),
            group_threshold=proto.get("group_threshold", self.group_spec.threshold),
            heartbeat_period=proto.get("heartbeat_period"),
            epoch_length=proto.get("epoch_length"),
            att_period=proto.get("att_period"),
            t_attack=self.t_attack,
            seed=self.seed,
        )

    def header(self, cfg: ProtocolConfig, protocol, variant) -> dict:
        return {
            "scenario": self.name,
            "variant": variant if isinstance(variant, str) else cfg.topology.name,
            "protocol": cfg.protocol,
            "validator": protocol.validator,
            "interactive": protocol.interactive,
            "provers": list(cfg.provers),
            "roles": protocol.roles(),
            "topology": [list(e) for e in cfg.topology.edges()],
            "adversary": {"flags": self.model.flags, "t_attack": self.t_attack},
            "acceptable": cfg.acceptable.to_dict(),
            "groups": self.group_spec.to_dict(),
            "seed": self.seed,
        }

    def engine(self, strategy: DecisionStrategy | None = None, variant=None,
               max_delay: int | None = None, max_inject_depth: int | None = None) -> Engine:
        variant = self.variants[0] if variant is None else variant
        cfg = self.config(variant)
        protocol = build_protocol(cfg)
        bounds = self.bounds
        if strategy is None:
            budget = bounds.get("max_interventions")
            strategy = ScriptedStrategy(self.decisions, budget)
        engine = Engine(
            protocol, protocol.build_devices(),
            model=self.model,
            strategy=strategy,
            latency=cfg.latency,
            horizon=self.horizon,
            depth=self.defaults.get("symbolic.depth", 6),
            max_delay=bounds.get("max_delay", 3) if max_delay is None else max_delay,
            max_inject_depth=bounds.get("max_inject_depth", 4) if max_inject_depth is None else max_inject_depth,
            net_actions=self.adversary.get("net_actions"),
            t_attack=self.t_attack,
            header=self.header(cfg, protocol, variant),
        )
        self.schedule(engine)
        return engine

    def schedule(self, engine: Engine):
        """Queue the scripted adversary actions on a fresh engine."""
        adversary = engine.adversary
        for action in sorted(self.adversary.get("schedule", []), key=lambda a: a["at"]):
            p, at = action["prover"], action["at"]
            if p not in engine.devices:
                log.debug(f"{self.name}: {p} not in this topology, skipping {action['action']} at {at}")
                continue
            match action["action"]:
                case "compromise":
                    adversary.compromise_at(p, at, action.get("label"))
                case "restore":
                    engine.schedule_adversary(at, partial(adversary.restore, p))
                case "read":
                    engine.schedule_adversary(at, partial(adversary.read_secrets, p))
                case "capture":
                    rewrite = None
                    if "rewrite_counter" in action:
                        rewrite = {"counter": action["rewrite_counter"]}
                    adversary.capture(p, at, action["until"], action.get("write", False), rewrite)

    def run(self, strategy: DecisionStrategy | None = None, variant=None) -> Trace:
        return self.engine(strategy, variant).run()
