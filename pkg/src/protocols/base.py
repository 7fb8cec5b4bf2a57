"""
Shared protocol machinery: topologies, key assignment, configuration and the
handler base class the engine drives.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any

import networkx as nx

from lib.utils.time import DeviceClock

from ..core import ORIGINAL_LABEL, AcceptableStates, DeviceId, EventKind, Role, SoftwareState
from ..errors import ConfigurationError
from ..simnet import Device, Record, Send, SetTimer, record
from ..symcrypto import Key, Mac, Pair, Term

if TYPE_CHECKING:
    from ..simnet import Engine

VERIFIER = "V"
RELYING_PARTY = "R"


class TopologyKind(Enum):
    SPANNING_TREE = "spanning_tree"
    BALANCED_BINARY_TREE = "balanced_binary_tree"
    DISTRIBUTED_GRAPH = "distributed_graph"


@dataclass
class Topology:
    kind: TopologyKind
    graph: nx.Graph
    root: DeviceId | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind == TopologyKind.DISTRIBUTED_GRAPH:
            if self.graph.number_of_nodes() and not nx.is_connected(self.graph):
                raise ConfigurationError(f"topology {self.name or self.kind.value} is not connected")
            return
        if not nx.is_arborescence(self.graph):
            raise ConfigurationError(f"topology {self.name or self.kind.value} is not a rooted tree")
        roots = [n for n, d in self.graph.in_degree() if d == 0]
        if roots != [self.root]:
            raise ConfigurationError(f"tree root must be {self.root}, found {roots}")

    # --- constructors ---

    @classmethod
    def chain(cls, nodes: list[DeviceId]) -> "Topology":
        tree = nx.DiGraph()
        tree.add_node(nodes[0])
        nx.add_path(tree, nodes)
        return cls(TopologyKind.SPANNING_TREE, tree, nodes[0], "-".join(nodes))

    @classmethod
    def star(cls, root: DeviceId, leaves: list[DeviceId]) -> "Topology":
        tree = nx.DiGraph()
        tree.add_node(root)
        tree.add_edges_from((root, leaf) for leaf in leaves)
        return cls(TopologyKind.SPANNING_TREE, tree, root, "star")

    @classmethod
    def hub(cls, root: DeviceId, provers: list[DeviceId]) -> "Topology":
        """Root with a single child that parents every other prover."""
        tree = nx.DiGraph()
        tree.add_node(root)
        if provers:
            tree.add_edge(root, provers[0])
            tree.add_edges_from((provers[0], p) for p in provers[1:])
        return cls(TopologyKind.SPANNING_TREE, tree, root, "hub")

    @classmethod
    def balanced_binary(cls, root: DeviceId, provers: list[DeviceId]) -> "Topology":
        nodes = [root] + list(provers)
        tree = nx.DiGraph()
        tree.add_node(root)
        for i in range(1, len(nodes)):
            tree.add_edge(nodes[(i - 1) // 2], nodes[i])
        return cls(TopologyKind.BALANCED_BINARY_TREE, tree, root, "balanced")

    @classmethod
    def tree(cls, root: DeviceId, edges: list[list[DeviceId]]) -> "Topology":
        tree = nx.DiGraph()
        tree.add_node(root)
        tree.add_edges_from((a, b) for a, b in edges)
        return cls(TopologyKind.SPANNING_TREE, tree, root, "tree")

    @classmethod
    def complete(cls, provers: list[DeviceId]) -> "Topology":
        return cls(TopologyKind.DISTRIBUTED_GRAPH, nx.complete_graph(provers), None, "complete")

    @classmethod
    def ring(cls, provers: list[DeviceId]) -> "Topology":
        graph = nx.cycle_graph(provers) if len(provers) > 2 else nx.complete_graph(provers)
        return cls(TopologyKind.DISTRIBUTED_GRAPH, graph, None, "ring")

    @classmethod
    def graph_of(cls, provers: list[DeviceId], edges: list[list[DeviceId]]) -> "Topology":
        graph = nx.Graph()
        graph.add_nodes_from(provers)
        graph.add_edges_from((a, b) for a, b in edges)
        return cls(TopologyKind.DISTRIBUTED_GRAPH, graph, None, "graph")

    @classmethod
    def from_spec(cls, spec: Any, provers: list[DeviceId], root: DeviceId = VERIFIER) -> "Topology":
        """Build from a scenario value: a keyword, a dash-separated chain or an edge list."""
        if isinstance(spec, dict):
            if spec.get("kind", "tree") == "graph":
                return cls.graph_of(provers, spec["edges"])
            return cls.tree(spec.get("root", root), spec["edges"])
        match spec:
            case "star":
                return cls.star(root, provers)
            case "chain":
                return cls.chain([root] + list(provers))
            case "hub":
                return cls.hub(root, provers)
            case "balanced":
                return cls.balanced_binary(root, provers)
            case "complete":
                return cls.complete(provers)
            case "ring":
                return cls.ring(provers)
            case str() if "-" in spec:
                return cls.chain(spec.split("-"))
        raise ConfigurationError(f"unknown topology {spec!r}")

    # --- queries ---

    @property
    def is_tree(self) -> bool:
        return self.kind != TopologyKind.DISTRIBUTED_GRAPH

    def nodes(self) -> list[DeviceId]:
        return list(self.graph.nodes)

    def children(self, n: DeviceId) -> list[DeviceId]:
        if n not in self.graph:
            return []
        return list(self.graph.successors(n))

    def parent(self, n: DeviceId) -> DeviceId | None:
        if n not in self.graph:
            return None
        preds = list(self.graph.predecessors(n))
        return preds[0] if preds else None

    def neighbours(self, n: DeviceId) -> list[DeviceId]:
        if n not in self.graph:
            return []
        return sorted(self.graph.neighbors(n))

    def height(self, n: DeviceId) -> int:
        """Edges on the longest downward path from n."""
        if n not in self.graph:
            return 0
        lengths = nx.single_source_shortest_path_length(self.graph, n)
        return max(lengths.values())

    @property
    def depth(self) -> int:
        if self.is_tree:
            return self.height(self.root)
        return nx.diameter(self.graph) if self.graph.number_of_nodes() > 1 else 0

    def edges(self) -> list[tuple[DeviceId, DeviceId]]:
        return sorted(tuple(e) for e in self.graph.edges)


class KeyKind(Enum):
    SWARM_SHARED = "swarm_shared"
    PER_LINK = "per_link"
    PER_DEVICE = "per_device"


@dataclass(frozen=True)
class KeyPolicy:
    kind: KeyKind

    @staticmethod
    def link_key(a: DeviceId, b: DeviceId) -> Key:
        x, y = sorted((a, b))
        return Key(f"link:{x}-{y}")

    @staticmethod
    def device_key(p: DeviceId) -> Key:
        return Key(f"dev:{p}")

    def secrets(self, dev: DeviceId, topology: Topology) -> dict[str, Term]:
        """Keys placed in dev's trusted environment."""
        keys: dict[str, Term] = {"device": self.device_key(dev)}
        match self.kind:
            case KeyKind.SWARM_SHARED:
                keys["att"] = Key("att")
                keys["auth"] = Key("auth")
            case KeyKind.PER_LINK:
                peers = topology.neighbours(dev) if not topology.is_tree else \
                    topology.children(dev) + [p for p in [topology.parent(dev)] if p]
                for peer in peers:
                    keys[f"link:{peer}"] = self.link_key(dev, peer)
            case KeyKind.PER_DEVICE:
                keys["sign"] = Key(f"sign:{dev}")
        return keys


@dataclass
class ProtocolConfig:
    protocol: str
    provers: list[DeviceId]
    topology: Topology
    key_policy: KeyPolicy
    acceptable: AcceptableStates
    defenses: frozenset = frozenset()
    rounds: int = 1
    round_gap: int = 1
    start_at: int = 1
    latency: int = 1
    response_deadline: int | None = None
    counter: bool = True
    sampling: dict = field(default_factory=lambda: {"policy": "all"})
    pads: dict = field(default_factory=dict)
    sap: dict = field(default_factory=dict)
    group_threshold: int = 0
    heartbeat_period: int | None = None
    epoch_length: int | None = None
    att_period: int | None = None
    t_attack: int | None = None
    seed: int = 0

    @property
    def deadline(self) -> int:
        if self.response_deadline is not None:
            return self.response_deadline
        return 3 * self.latency * max(1, self.topology.depth)

    @property
    def index(self) -> dict[DeviceId, int]:
        return {p: i for i, p in enumerate(self.provers)}


def signed(key: Term, payload: Term) -> Term:
    """Authenticated message: the payload next to its MAC."""
    return Pair(payload, Mac(key, payload))


def opened(body: Term, keys: list[Term]) -> tuple[Term | None, str]:
    """Payload of an authenticated message if its MAC verifies under one of keys."""
    if not isinstance(body, Pair) or not isinstance(body.right, Mac):
        return None, "malformed"
    mac = body.right
    if mac.body != body.left:
        return None, "bad-mac"
    if mac.key not in keys:
        return None, "bad-mac"
    return body.left, ""


class Protocol:
    """
    Base class of the protocol state machines.

    Subclasses implement start, handle_message and handle_timer; defense
    services (heartbeat, secret update, frequent attestation) are composed in
    and receive their own channels and timer tags.
    """
    name = "base"
    interactive = True
    validator = ""
    measurement_timers: tuple = ()

    def __init__(self, cfg: ProtocolConfig):
        from .defenses import build_services
        self.cfg = cfg
        self.validate()
        self.services = build_services(cfg)

    # --- configuration ---

    def validate(self):
        cfg = self.cfg
        if cfg.rounds < 1:
            raise ConfigurationError("rounds must be at least 1")
        unknown = [n for n in cfg.topology.nodes() if n not in cfg.provers and n not in (VERIFIER, RELYING_PARTY)]
        if unknown:
            raise ConfigurationError(f"topology references unknown devices {unknown}")

    def roles(self) -> dict[DeviceId, list[str]]:
        roles = {p: [Role.PROVER.value] for p in self.cfg.provers}
        if self.cfg.topology.is_tree:
            for p in self.cfg.provers:
                if self.cfg.topology.children(p):
                    roles[p].append(Role.AGGREGATOR.value)
        roles[VERIFIER] = [Role.VERIFIER.value, Role.INITIATOR.value, Role.RELYING_PARTY.value]
        return roles

    def build_devices(self, offsets: dict[DeviceId, int] | None = None) -> list[Device]:
        offsets = offsets or {}
        devices = []
        for dev_id, roles in sorted(self.roles().items()):
            trusted: dict[str, Any] = dict(self.cfg.key_policy.secrets(dev_id, self.cfg.topology))
            trusted["counter"] = 0
            label = self.cfg.acceptable.initial.get(dev_id, ORIGINAL_LABEL)
            devices.append(Device(
                id=dev_id,
                roles=frozenset(Role(r) for r in roles),
                clock=DeviceClock(offsets.get(dev_id, 0)),
                trusted=trusted,
                original_label=label,
                software=SoftwareState(label),
            ))
        return devices

    # --- engine interface ---

    def setup(self, engine: "Engine"):
        for service in self.services:
            service.setup(engine, self)
        self.start(engine)

    def on_message(self, engine: "Engine", dev: Device, src: DeviceId, body: Term, channel: str):
        for service in self.services:
            if channel in service.channels:
                return service.on_message(engine, self, dev, src, body)
        return self.handle_message(engine, dev, src, body)

    def on_timer(self, engine: "Engine", dev: Device, tag):
        for service in self.services:
            if tag[0] in service.timer_tags:
                return service.on_timer(engine, self, dev, tag)
        return self.handle_timer(engine, dev, tag)

    def is_measurement_timer(self, tag) -> bool:
        return tag[0] in self.measurement_timers or tag[0] == "att"

    def forged_templates(self, engine: "Engine", dst: DeviceId) -> list[Term]:
        return []

    # --- to implement ---

    def start(self, engine: "Engine"):
        raise NotImplementedError

    def handle_message(self, engine: "Engine", dev: Device, src: DeviceId, body: Term) -> list:
        raise NotImplementedError

    def handle_timer(self, engine: "Engine", dev: Device, tag) -> list:
        raise NotImplementedError

    # --- shared helpers ---

    def acceptable_now(self, engine: "Engine", p: DeviceId) -> frozenset:
        return self.cfg.acceptable.at(p, engine.now)

    def measure(self, engine: "Engine", dev: Device, **extra) -> Record:
        return record(EventKind.MEASURE_TAKEN, prover=dev.id, label=dev.software.label, **extra)

    def report_key(self, dev: Device, base: Term) -> Term:
        """Key authenticating dev's reports; composed with the epoch key under secret updates."""
        if "su" in self.cfg.defenses:
            return Pair(base, dev.trusted["epoch_key"])
        return base

    def accepted_keys(self, engine: "Engine", dev: Device, base: Term) -> list[Term]:
        if "su" not in self.cfg.defenses:
            return [base]
        keys = [Pair(base, dev.trusted["epoch_key"])]
        previous = dev.trusted.get("previous_epoch_key")
        if previous is not None and engine.now - dev.memory.get("epoch_since", 0) <= self.cfg.latency:
            keys.append(Pair(base, previous))
        return keys

    def reject(self, dev: Device, src: DeviceId, reason: str) -> Record:
        return record(EventKind.REJECT, receiver=dev.id, sender=src, reason=reason)

    def send(self, dst: DeviceId, body: Term) -> Send:
        return Send(dst, body)

    def timer(self, at: int, *tag) -> SetTimer:
        return SetTimer(at, tuple(tag))
