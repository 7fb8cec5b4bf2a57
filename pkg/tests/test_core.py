import pytest

from conftest import claim, compromise, make_trace, restore
from src.core import (AcceptableStates, Event, EventKind, Interval, SoftwareState, Trace, is_valid_state,
                      software_state, state_change_points)
from src.errors import EmptyTrace, TraceError, UnknownDevice
from src.symcrypto import Counter, Pair, bitvec


@pytest.fixture
def hop():
    """P0 compromised until 3, P1 compromised from 3, one claim at 5."""
    return make_trace(["P0", "P1"], [
        compromise(0, "P0"), restore(3, "P0"), compromise(3, "P1"),
        claim(5, 1, 5, P0="healthy", P1="healthy"),
    ], flags=["msw"])


def test_interval():
    T = Interval(2, 4)
    assert 2 in T and 4 in T and 5 not in T
    assert list(T.ticks()) == [2, 3, 4]
    with pytest.raises(TraceError):
        Interval(5, 4)
    with pytest.raises(TraceError):
        Interval(-1, 2)


def test_software_state(hop):
    assert software_state(hop, "P0", 2).is_compromised
    assert software_state(hop, "P0", 3) == SoftwareState("good")
    assert not is_valid_state(hop, "P1", 3)
    assert is_valid_state(hop, "P1", 2)


def test_validity_queries_are_checked(hop):
    with pytest.raises(UnknownDevice):
        is_valid_state(hop, "P9", 1)
    with pytest.raises(TraceError):
        is_valid_state(hop, "P0", 6)


def test_state_change_points(hop):
    assert state_change_points(hop, "P0", Interval(0, 5)) == [0, 3, 5]
    assert state_change_points(hop, "P1", Interval(1, 5)) == [1, 3, 5]
    assert state_change_points(hop, "P0", Interval(4, 5)) == [4, 5]
    with pytest.raises(EmptyTrace):
        state_change_points(make_trace(["P0"], []), "P0", Interval(0, 0))


def test_acceptable_updates_change_validity():
    acceptable = AcceptableStates({"P0": "good"}, updates=[(4, "P0", ["v2"])])
    assert acceptable.at("P0", 3) == {"good"}
    assert acceptable.at("P0", 4) == {"v2"}
    trace = make_trace(["P0"], [claim(6, 0, 6, P0="healthy")], acceptable=acceptable.to_dict())
    assert state_change_points(trace, "P0", Interval(0, 6)) == [0, 4, 6]
    assert not trace.monotone()


def test_acceptable_states_reject_compromised_labels():
    with pytest.raises(TraceError):
        AcceptableStates({"P0": "good"}, {"P0": ["good", "compromised:x"]})
    with pytest.raises(UnknownDevice):
        AcceptableStates({"P0": "good"}, updates=[(1, "P1", ["v2"])])


def test_monotone(hop):
    assert not hop.monotone()
    assert make_trace(["P0"], [compromise(2, "P0")]).monotone()


def test_claim_interval_must_end_by_claim_time():
    with pytest.raises(TraceError):
        Event(3, EventKind.CLAIM_INDIVIDUAL, {"statuses": {}, "interval": [1, 4]})


def test_serialization_is_byte_stable(hop):
    hop.events.insert(0, Event(0, EventKind.SEND_REQUEST,
                               {"initiator": "V", "prover": "P0", "request": Pair(Counter(1), bitvec(True))}))
    text = hop.dumps()
    again = Trace.loads(text)
    assert again.events[0].get("request") == Pair(Counter(1), bitvec(True))
    assert again.dumps() == text


def test_loads_rejects_bad_traces(hop):
    with pytest.raises(TraceError):
        Trace.loads("")
    with pytest.raises(TraceError):
        Trace.loads('{"header": {}}\n{"at": 1, "kind": "Nope", "args": {}}\n')
    lines = hop.dumps().splitlines()
    with pytest.raises(TraceError):
        Trace.loads("\n".join([lines[0], lines[-1], lines[1]]))


def test_dump_and_load(tmp_path, hop):
    path = tmp_path / "traces" / "hop.trace"
    hop.dump(path)
    assert Trace.load(path).dumps() == hop.dumps()
