import pytest

from conftest import SCENARIOS, compromise, make_trace
from src.adversary import AdversaryModel, lint_capabilities, trusted_terms
from src.core import EventKind, Role
from src.errors import (ConfigurationError, RejectedAtomic, RejectedCapability, RejectedRestore, RejectedTrusted,
                        RejectedWindow)
from src.protocols.base import KeyKind, KeyPolicy, Topology
from src.simnet import Device, Engine
from src.symcrypto import DEFAULT_DEPTH, Counter, Key, Mac, Pair, SymEnc, bitvec


def engine_with(*flags, t_attack=None):
    devices = [Device("P0", frozenset({Role.PROVER}), trusted={"auth": Key("auth"), "counter": 3}),
               Device("P1", frozenset({Role.PROVER}), trusted={"auth": Key("auth"), "counter": 0})]
    return Engine(None, devices, model=AdversaryModel.from_flags(flags), t_attack=t_attack)


def kinds(trace):
    return [ev.kind for ev in trace]


def test_model_flags():
    assert AdversaryModel.from_flags(["msw"]).sw
    assert AdversaryModel.from_flags(["pi"]).reads_secrets
    assert AdversaryModel.from_flags(["dy", "sw"]).flags == ["sw", "dy"]
    with pytest.raises(ConfigurationError):
        AdversaryModel.from_flags(["root"])


def test_capabilities_are_enforced():
    engine = engine_with("dy")
    with pytest.raises(RejectedCapability):
        engine.adversary.compromise("P0")
    with pytest.raises(RejectedRestore):
        engine.adversary.restore("P0")
    with pytest.raises(RejectedCapability):
        engine.adversary.read_secrets("P0")
    with pytest.raises(RejectedCapability):
        engine.adversary.capture("P0", 1, 9)


def test_compromise_refused_inside_attestation_code():
    engine = engine_with("sw")
    engine.in_handler = "P0"
    with pytest.raises(RejectedAtomic):
        engine.adversary.compromise("P0")
    engine.adversary.compromise("P1")
    assert engine.devices["P1"].software.is_compromised


def test_scheduled_compromise_waits_for_atomic_section():
    engine = engine_with("sw")
    dev = engine.devices["P0"]
    dev.atomic = True
    engine.adversary.compromise_at("P0", 2)
    engine.schedule_adversary(4, lambda: setattr(dev, "atomic", False))
    trace = engine.run()
    assert [(ev.at, ev.kind) for ev in trace] == [(4, EventKind.COMPROMISE)]


def test_restore_needs_a_compromised_device():
    engine = engine_with("msw")
    engine.adversary.restore("P0")
    engine.adversary.compromise("P0")
    engine.adversary.restore("P0")
    assert kinds(engine.trace()) == [EventKind.WARNING, EventKind.COMPROMISE, EventKind.RESTORE]
    assert not engine.devices["P0"].software.is_compromised


def test_read_secrets_extends_knowledge():
    engine = engine_with("pni")
    assert not engine.adversary.can_derive(Mac(Key("auth"), Counter(1)))
    engine.adversary.read_secrets("P0")
    assert Counter(3) in engine.adversary.knowledge
    assert engine.adversary.can_derive(Mac(Key("auth"), Counter(1)))
    assert engine.adversary.can_inject(Mac(Key("auth"), Counter(1)), max_steps=1)
    assert not engine.adversary.can_inject(Mac(Key("auth"), Pair(Counter(1), Counter(1))), max_steps=1)


def test_learned_ciphertext_opens_with_read_key():
    engine = engine_with("pi", t_attack=2)
    engine.adversary.learn(SymEnc(Key("auth"), Key("epoch:1")))
    assert not engine.adversary.can_derive(Key("epoch:1"))
    engine.adversary.read_secrets("P1")
    assert engine.adversary.can_derive(Key("epoch:1"))


def test_capture_window_and_rewrite():
    engine = engine_with("pi", t_attack=4)
    with pytest.raises(RejectedWindow):
        engine.adversary.capture("P0", 1, 4)
    with pytest.raises(RejectedTrusted):
        engine.adversary.tamper_trusted("P0", "counter", 9)
    engine.adversary.capture("P0", 5, 10)
    engine.schedule_adversary(6, lambda: engine.adversary.tamper_trusted("P0", "counter", 9))
    trace = engine.run()
    assert kinds(trace) == [EventKind.CAPTURE_BEGIN, EventKind.CAPTURE_END]
    assert trace.events[1].get("rewritten") == ["counter"]
    assert engine.devices["P0"].trusted["counter"] == 9
    assert engine.devices["P0"].online


def test_trusted_terms():
    assert trusted_terms({"b": Key("x"), "a": 2, "flag": True}) == [Counter(2), Key("x")]


def test_lint_capabilities():
    assert lint_capabilities(make_trace(["P0"], [compromise(1, "P0")], flags=["sw"])) == []
    problems = lint_capabilities(make_trace(["P0"], [compromise(1, "P0")], flags=["dy"]))
    assert problems == [(0, "Compromise without sw")]


def test_read_shared_key_forges_any_report(from_yaml):
    scenario = from_yaml("version: 1\nname: shared_read\nprotocol:\n  name: simpleplus\n  provers: [P0, P1]\n"
                         "  rounds: 2\nadversary:\n  flags: [pni]\n  schedule:\n"
                         "    - {at: 0, action: read, prover: P0}\n")
    engine = scenario.engine()
    engine.run()
    first = Mac(Key("auth"), Pair(Counter(1), bitvec(True, True)))
    second = Mac(Key("auth"), Pair(Counter(2), bitvec(True, True)))
    assert first.size() > DEFAULT_DEPTH
    assert engine.adversary.can_derive(first)
    assert engine.adversary.can_derive(second)
    assert not engine.adversary.can_derive(Mac(Key("dev:P1"), Pair(Counter(1), bitvec(True, True))))


def test_unique_keys_stop_cross_device_forgery():
    policy = KeyPolicy(KeyKind.PER_DEVICE)
    topology = Topology.from_spec("star", ["P0", "P1"])
    devices = [Device(p, frozenset({Role.PROVER}), trusted=policy.secrets(p, topology)) for p in ("P0", "P1")]
    engine = Engine(None, devices, model=AdversaryModel.from_flags(["pni"]))
    body = Pair(Counter(1), bitvec(True, False))
    engine.send("P0", "V", Pair(body, Mac(Key("sign:P0"), body)))
    engine.adversary.read_secrets("P0")
    own, other = Mac(Key("sign:P0"), body), Mac(Key("sign:P1"), body)
    assert own.size() == other.size() > DEFAULT_DEPTH
    assert engine.adversary.can_derive(own)
    assert not engine.adversary.can_derive(other)


def test_rotated_epoch_key_stays_out_of_reach(from_yaml):
    text = (SCENARIOS / "secret_update.scn").read_text().replace("flags: [pi]", "flags: [pi, dy]")
    engine = from_yaml(text).engine()
    engine.run()
    body = Pair(Counter(2), bitvec(True, True))
    captured = Mac(Pair(Key("auth"), Key("epoch:1")), body)
    rotated = Mac(Pair(Key("auth"), Key("epoch:3")), body)
    assert captured.size() == rotated.size() > DEFAULT_DEPTH
    assert engine.adversary.can_derive(captured)
    assert not engine.adversary.can_derive(rotated)
    assert not any(Key(f"epoch:{e}") in engine.adversary.analysed() for e in range(2, 6))
