"""
Capability-gated adversary actions.

The five adversary models are combinations of the flags sw (software
compromise), msw (mobile software, may also restore), pni (physical
non-intrusive, read-only access to secrets), pi (physical intrusive, capture
with read/write access) and dy (network control). Every action mutates device
state or adversary knowledge through the engine and leaves an event in the
trace.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

from .core import COMPROMISED_PREFIX, EventKind, SoftwareState, Trace
from .errors import (ConfigurationError, RejectedAtomic, RejectedCapability, RejectedRestore,
                     RejectedTrusted, RejectedWindow, UnknownDevice)
from .symcrypto import DEFAULT_DEPTH, Counter, Term, analyze, derivable_in, injection_steps

if TYPE_CHECKING:
    from .simnet import Engine

log = logging.getLogger("cra.adversary")

FLAGS = ("sw", "msw", "pni", "pi", "dy")
# network decisions the engine takes on its own, without an adversary
ENGINE_NET_ACTIONS = ("deliver", "offline-drop", "drop-unknown")


@dataclass(frozen=True)
class AdversaryModel:
    sw: bool = False
    msw: bool = False
    pni: bool = False
    pi: bool = False
    dy: bool = False

    def __post_init__(self):
        # mobile malware inherits the abilities of the software adversary
        if self.msw and not self.sw:
            object.__setattr__(self, "sw", True)

    @classmethod
    def from_flags(cls, flags: Iterable[str]) -> "AdversaryModel":
        flags = list(flags)
        unknown = sorted(set(flags) - set(FLAGS))
        if unknown:
            raise ConfigurationError(f"unknown adversary flags: {unknown}")
        return cls(**{f: True for f in flags})

    @property
    def flags(self) -> list[str]:
        return [f for f in FLAGS if getattr(self, f)]

    @property
    def reads_secrets(self) -> bool:
        return self.pni or self.pi


@dataclass(frozen=True)
class CaptureWindow:
    device: str
    begin: int
    end: int

    def check(self, t_attack: int):
        if self.end - self.begin < t_attack:
            raise RejectedWindow(
                f"capture of {self.device} over [{self.begin}, {self.end}) shorter than T_attack={t_attack}")


def trusted_terms(trusted: dict) -> list[Term]:
    """Secrets held in a trusted environment, as terms (integer counters become ctr terms)."""
    terms = []
    for _, value in sorted(trusted.items()):
        if isinstance(value, Term):
            terms.append(value)
        elif isinstance(value, int) and not isinstance(value, bool):
            terms.append(Counter(value))
    return terms


class Adversary:
    """Adversary state bound to one engine run: capabilities, knowledge, captures."""

    def __init__(self, engine: "Engine", model: AdversaryModel, t_attack: int | None = None,
                 depth: int = DEFAULT_DEPTH):
        self.engine = engine
        self.model = model
        self.t_attack = t_attack
        self.depth = depth
        self._knowledge: set[Term] = set()
        self._analysed: set | None = set()
        self.captures: dict[str, CaptureWindow] = {}
        self._pending_rewrites: dict[str, dict] = {}

    # --- knowledge ---

    @property
    def knowledge(self) -> frozenset:
        return frozenset(self._knowledge)

    def learn(self, *terms: Term):
        new = [t for t in terms if t not in self._knowledge]
        if new:
            self._knowledge.update(new)
            self._analysed = None

    def cover(self, t: Term):
        """Widen the construction bound to t's size, so protocol-shaped messages stay constructible."""
        if t.size() > self.depth:
            self.depth = t.size()
            self._analysed = None

    def analysed(self) -> set:
        if self._analysed is None:
            self._analysed = analyze(self._knowledge, self.depth)
        return self._analysed

    def can_derive(self, t: Term, depth: int | None = None) -> bool:
        return derivable_in(self.analysed(), t, depth or self.depth)

    def can_inject(self, t: Term, max_steps: int) -> bool:
        steps = injection_steps(self.analysed(), t)
        return steps is not None and steps <= max_steps

    # --- actions ---

    def _device(self, p: str):
        dev = self.engine.devices.get(p)
        if dev is None:
            raise UnknownDevice(p)
        return dev

    def compromise(self, p: str, label: str | None = None):
        if not self.model.sw:
            raise RejectedCapability("software compromise requires the sw flag")
        if self.engine.in_handler == p:
            raise RejectedAtomic(f"{p} is executing attestation code")
        dev = self._device(p)
        state = SoftwareState(label) if label else SoftwareState.compromised()
        if not state.is_compromised:
            raise ConfigurationError(f"compromise label must start with {COMPROMISED_PREFIX!r}")
        dev.software = state
        self.engine.record(EventKind.COMPROMISE, prover=p, label=state.label)

    def compromise_at(self, p: str, at: int, label: str | None = None):
        """Schedule a compromise; postponed tick by tick while p is in an atomic section."""
        def attempt():
            if self._device(p).atomic:
                self.engine.schedule_adversary(self.engine.now + 1, attempt)
                return
            self.compromise(p, label)
        self.engine.schedule_adversary(at, attempt)

    def restore(self, p: str):
        if not self.model.msw:
            raise RejectedRestore("restoring memory requires the msw flag")
        dev = self._device(p)
        if not dev.software.is_compromised:
            self.engine.record(EventKind.WARNING, device=p, message="restore of uncompromised device")
            return
        dev.software = SoftwareState(dev.original_label)
        self.engine.record(EventKind.RESTORE, prover=p)

    def read_secrets(self, p: str):
        if not self.model.reads_secrets:
            raise RejectedCapability("reading secrets requires the pni or pi flag")
        dev = self._device(p)
        self.learn(*trusted_terms(dev.trusted))
        self.engine.record(EventKind.SECRET_READ, prover=p)

    def capture(self, p: str, begin: int, end: int, write: bool = False,
                rewrite: dict | None = None):
        """Schedule a capture of p over [begin, end)."""
        if not self.model.pi:
            raise RejectedCapability("capture requires the pi flag")
        self._device(p)
        window = CaptureWindow(p, begin, end)
        window.check(self.t_attack or 0)
        self.engine.schedule_adversary(begin, lambda: self._capture_begin(window, write, rewrite))
        self.engine.schedule_adversary(end, lambda: self._capture_end(window))

    def _capture_begin(self, window: CaptureWindow, write: bool, rewrite: dict | None):
        dev = self._device(window.device)
        dev.online = False
        self.captures[window.device] = window
        self.learn(*trusted_terms(dev.trusted))
        label = None
        if write:
            dev.software = SoftwareState.compromised("capture")
            label = dev.software.label
        self.engine.record(EventKind.CAPTURE_BEGIN, prover=window.device, until=window.end,
                           write=write, label=label)
        if rewrite:
            self._pending_rewrites[window.device] = dict(rewrite)

    def _capture_end(self, window: CaptureWindow):
        dev = self._device(window.device)
        rewrites = self._pending_rewrites.pop(window.device, {})
        for name, value in sorted(rewrites.items()):
            dev.trusted[name] = value
        self.captures.pop(window.device, None)
        dev.online = True
        self.engine.record(EventKind.CAPTURE_END, prover=window.device,
                           rewritten=sorted(rewrites))
        self.engine.resume(window.device)

    def tamper_trusted(self, p: str, name: str, value):
        """Queue a trusted-state rewrite, committed at CaptureEnd."""
        if p not in self.captures:
            raise RejectedTrusted(f"{p} trusted state is only writable during a capture")
        self._pending_rewrites.setdefault(p, {})[name] = value


def lint_capabilities(trace: Trace) -> list[tuple[int, str]]:
    """Adversary events a trace contains that its flags do not permit."""
    model = AdversaryModel.from_flags(trace.flags)
    t_attack = trace.header.get("adversary", {}).get("t_attack") or 0
    problems = []
    for i, ev in enumerate(trace.events):
        match ev.kind:
            case EventKind.COMPROMISE if not model.sw:
                problems.append((i, "Compromise without sw"))
            case EventKind.RESTORE if not model.msw:
                problems.append((i, "Restore without msw"))
            case EventKind.SECRET_READ if not model.reads_secrets:
                problems.append((i, "SecretRead without pni/pi"))
            case EventKind.CAPTURE_BEGIN:
                if not model.pi:
                    problems.append((i, "CaptureBegin without pi"))
                if ev.get("until") is not None and ev.get("until") - ev.at < t_attack:
                    problems.append((i, "capture window shorter than T_attack"))
            case EventKind.CAPTURE_END if not model.pi:
                problems.append((i, "CaptureEnd without pi"))
            case EventKind.NET_DECISION if not model.dy and ev.get("action") not in ENGINE_NET_ACTIONS:
                problems.append((i, f"network action {ev.get('action')} without dy"))
    return problems
