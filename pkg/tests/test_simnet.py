import pytest

from src.adversary import AdversaryModel
from src.core import EventKind, Role
from src.errors import InvalidTimer
from src.simnet import Device, Engine, PendingMessage, Send, parse_net_action, record
from src.strategies import ScriptedStrategy
from src.symcrypto import Atom, Counter


class Echo:
    """V sends `hello` to P0 at tick 1; every delivery and timer leaves a Warning event."""

    def __init__(self, timers=(("P0", 2),), fail_on=None):
        self.timers = timers
        self.fail_on = fail_on

    def setup(self, engine):
        engine.set_timer("V", 1, ("send",))
        for device, at in self.timers:
            engine.set_timer(device, at, ("tick",))

    def on_message(self, engine, dev, src, body, channel):
        return [record(EventKind.WARNING, device=dev.id, message=f"got {body}")]

    def on_timer(self, engine, dev, tag):
        if tag == self.fail_on:
            raise RuntimeError("boom")
        if tag == ("send",):
            return [Send("P0", Atom("hello"))]
        return [record(EventKind.WARNING, device=dev.id, message="timer")]

    def is_measurement_timer(self, tag):
        return False

    def forged_templates(self, engine, dst):
        return []


def build(protocol=None, flags=(), strategy=None, **kwargs):
    devices = [Device("V", frozenset({Role.VERIFIER})), Device("P0", frozenset({Role.PROVER}))]
    return Engine(protocol or Echo(), devices, model=AdversaryModel.from_flags(flags),
                  strategy=strategy, **kwargs)


def messages(trace):
    return [(ev.at, ev.get("message")) for ev in trace if ev.kind == EventKind.WARNING]


def test_same_tick_order_is_adversary_delivery_timer():
    engine = build()
    engine.schedule_adversary(2, lambda: engine.record(EventKind.WARNING, message="adversary"))
    trace = engine.run()
    assert messages(trace) == [(2, "adversary"), (2, "got a(hello)"), (2, "timer")]


def test_timers_in_the_past_are_refused():
    engine = build()
    engine.now = 5
    with pytest.raises(InvalidTimer):
        engine.set_timer("P0", 3, ("tick",))
    with pytest.raises(InvalidTimer):
        engine.schedule_adversary(4, lambda: None)


def test_delivery_to_captured_device_is_dropped():
    engine = build(flags=["pi"], t_attack=2)
    engine.adversary.capture("P0", 1, 4)
    trace = engine.run()
    drops = [ev for ev in trace if ev.kind == EventKind.NET_DECISION and ev.get("action") == "offline-drop"]
    assert [ev.at for ev in drops] == [2]
    assert not any(ev.kind == EventKind.MSG_RECV for ev in trace)


def test_deferred_timers_fire_once_on_resume():
    engine = build(Echo(timers=(("P0", 2), ("P0", 3))), flags=["pi"], t_attack=2)
    engine.adversary.capture("P0", 1, 4)
    trace = engine.run()
    assert [m for m in messages(trace) if m[1] == "timer"] == [(4, "timer")]


def test_dy_drop_decision_is_recorded():
    engine = build(Echo(timers=()), flags=["dy"], strategy=ScriptedStrategy({"net:V>P0#0": "drop"}))
    trace = engine.run()
    assert not any(ev.kind == EventKind.MSG_RECV for ev in trace)
    assert trace.header["decisions"] == [["net:V>P0#0", "drop"]]
    assert Atom("hello") in engine.adversary.knowledge


def test_net_options_follow_bounds():
    engine = build(flags=["dy"], max_delay=2, net_actions=["deliver", "drop", "delay"])
    options = engine._net_options(PendingMessage("V", "P0", Atom("hello"), 0))
    assert options == ["deliver", "drop", "delay:1", "delay:2"]


def test_delay_and_dup():
    trace = build(Echo(timers=()), flags=["dy"], strategy=ScriptedStrategy({"net:V>P0#0": "delay:2"})).run()
    assert [ev.at for ev in trace if ev.kind == EventKind.MSG_RECV] == [4]
    trace = build(Echo(timers=()), flags=["dy"], strategy=ScriptedStrategy({"net:V>P0#0": "dup"})).run()
    assert [ev.at for ev in trace if ev.kind == EventKind.MSG_RECV] == [2, 2]


def test_handler_fault_ends_the_run():
    trace = build(Echo(fail_on=("tick",))).run()
    assert trace.events[-1].kind == EventKind.FAULT
    assert trace.events[-1].get("device") == "P0"
    assert trace.header["fault"] == "RuntimeError: boom"


def test_horizon_stops_the_run():
    engine = build(Echo(timers=(("P0", 2), ("P0", 9))), horizon=5)
    trace = engine.run()
    assert messages(trace)[-1] == (2, "timer")


def test_parse_net_action():
    assert parse_net_action("delay:3") == ("delay", 3)
    assert parse_net_action("inject:ctr(2)") == ("inject", Counter(2))
    assert parse_net_action("drop") == ("drop", None)
