import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import claim, compromise, group_claim, make_trace, restore
from src.core import ORIGINAL_LABEL, Event, EventKind, Trace
from src.errors import NoClaims, SpecError, TraceError, UnknownDevice
from src.symcrypto import Counter
from src.tracecheck import (ALL_PROPERTIES, GroupSpec, PropertyId, QoSA, Result, Verdict, check, check_all,
                            check_group, check_ia, check_individual, classify_qosa, oracle_check_group,
                            oracle_check_individual, parse_properties, strength_violations)

HEALTHY, UNHEALTHY = "healthy", "unhealthy"


@pytest.fixture
def hop():
    return make_trace(["P0", "P1"], [
        compromise(0, "P0"), restore(3, "P0"), compromise(3, "P1"),
        claim(5, 1, 5, P0=HEALTHY, P1=HEALTHY),
    ], flags=["msw"])


def request(at, kind, prover, c=1):
    return (at, kind, {"initiator": "V", "prover": prover, "request": Counter(c)})


def test_property_ids():
    assert PropertyId.of(group=True, sync=False, strong=True) == PropertyId.GAS
    assert PropertyId.ISW.sync and not PropertyId.ISW.strong and not PropertyId.ISW.group
    assert parse_properties(["iaw", " GSS "]) == [PropertyId.IAW, PropertyId.GSS]
    with pytest.raises(SpecError):
        parse_properties(["IAX"])


def test_violated_verdict_needs_witness():
    with pytest.raises(ValueError):
        Verdict(PropertyId.IA, Result.VIOLATED)


# --- initiator authentication ---

def test_ia_matches_each_request_once():
    trace = make_trace(["P0"], [request(1, EventKind.SEND_REQUEST, "P0"),
                                request(2, EventKind.RUN_COMPLETE, "P0")])
    assert check_ia(trace).holds
    replayed = make_trace(["P0"], [request(1, EventKind.SEND_REQUEST, "P0"),
                                   request(2, EventKind.RUN_COMPLETE, "P0"),
                                   request(2, EventKind.RUN_COMPLETE, "P0")])
    verdict = check_ia(replayed)
    assert verdict.violated
    assert verdict.witness == (0, 1, 2)


def test_ia_run_without_request():
    trace = make_trace(["P0"], [request(1, EventKind.SEND_REQUEST, "P0", c=1),
                                request(2, EventKind.RUN_COMPLETE, "P0", c=2)])
    assert check_ia(trace).witness == (1,)


def test_ia_inapplicable_without_initiator():
    trace = make_trace(["P0"], [request(2, EventKind.RUN_COMPLETE, "P0")], interactive=False)
    assert check_ia(trace).result == Result.INAPPLICABLE


def test_ia_missing_argument():
    trace = make_trace(["P0"], [(1, EventKind.RUN_COMPLETE, {"prover": "P0"})])
    with pytest.raises(TraceError):
        check_ia(trace)


# --- individual properties ---

def test_malware_hop_is_async_only(hop):
    assert check_individual(hop, sync=False, strong=False).holds
    verdict = check_individual(hop, sync=True, strong=False)
    assert verdict.violated
    assert verdict.witness == (0, 1, 2, 3)
    assert check_individual(hop.subtrace(verdict.witness), sync=True, strong=False).violated


def test_unhealthy_claim_needs_invalid_state_only_when_strong():
    trace = make_trace(["P0"], [claim(4, 0, 4, P0=UNHEALTHY)])
    assert check_individual(trace, sync=False, strong=False).holds
    assert check_individual(trace, sync=False, strong=True).violated
    compromised = make_trace(["P0"], [compromise(4, "P0"), claim(4, 0, 4, P0=UNHEALTHY)])
    assert check_individual(compromised, sync=True, strong=True).holds


def test_healthy_claim_after_compromise():
    trace = make_trace(["P0"], [compromise(2, "P0"), claim(5, 3, 5, P0=HEALTHY)])
    assert check_individual(trace, sync=False, strong=False).violated
    early = make_trace(["P0"], [compromise(2, "P0"), claim(5, 1, 5, P0=HEALTHY)])
    assert check_individual(early, sync=False, strong=False).holds


def test_unknown_status_is_not_judged():
    trace = make_trace(["P0"], [compromise(0, "P0"), claim(3, 0, 3, P0="unknown")])
    assert check_individual(trace, sync=True, strong=True).holds


def test_no_claims_is_inapplicable():
    trace = make_trace(["P0"], [compromise(1, "P0")])
    assert all(v.result == Result.INAPPLICABLE for v in check_all(trace, ALL_PROPERTIES[1:]))
    with pytest.raises(NoClaims):
        classify_qosa(trace)


def test_claim_about_unknown_device():
    trace = make_trace(["P0"], [claim(2, 0, 2, P9=HEALTHY)])
    with pytest.raises(UnknownDevice):
        check_individual(trace, sync=False, strong=False)


def test_every_claim_is_checked():
    trace = make_trace(["P0"], [claim(1, 0, 1, P0=HEALTHY), compromise(2, "P0"), claim(4, 3, 4, P0=HEALTHY)])
    verdict = check_individual(trace, sync=False, strong=False)
    assert verdict.violated
    assert verdict.witness == (1, 2)


# --- group properties ---

def test_group_threshold():
    events = [compromise(0, "P2"), group_claim(3, 0, 3, ({"P0", "P1", "P2"}, HEALTHY))]
    trace = make_trace(["P0", "P1", "P2"], events)
    assert check_group(trace, GroupSpec(threshold=0), sync=False, strong=False).violated
    assert check_group(trace, GroupSpec(threshold=1), sync=False, strong=False).holds


def test_unhealthy_group_needs_more_than_threshold_bad_members():
    events = [compromise(0, "P2"), group_claim(3, 0, 3, ({"P0", "P1", "P2"}, UNHEALTHY))]
    trace = make_trace(["P0", "P1", "P2"], events)
    assert check_group(trace, GroupSpec(threshold=0), sync=True, strong=True).holds
    assert check_group(trace, GroupSpec(threshold=1), sync=True, strong=True).violated


def test_group_claims_derived_from_individual_claims(hop):
    assert check_group(hop, None, sync=False, strong=False).holds
    assert check_group(hop, None, sync=True, strong=False).violated
    split = GroupSpec((frozenset({"P0"}), frozenset({"P1"})))
    assert check_group(hop, split, sync=True, strong=False).violated
    assert check_group(hop, GroupSpec((frozenset({"P0"}),)), sync=True, strong=False).holds


def test_spec_group_outside_claim():
    trace = make_trace(["P0", "P1"], [group_claim(2, 0, 2, ({"P0"}, HEALTHY))])
    with pytest.raises(SpecError):
        check_group(trace, GroupSpec((frozenset({"P0", "P1"}),)), sync=False, strong=False)
    with pytest.raises(SpecError):
        GroupSpec(threshold=-1)


def test_qosa():
    provers = ["P0", "P1"]
    binary = make_trace(provers, [group_claim(1, 0, 1, (set(provers), HEALTHY))])
    listed = make_trace(provers, [group_claim(1, 0, 1, ({"P0"}, HEALTHY), ({"P1"}, HEALTHY))])
    partial = make_trace(["P0", "P1", "P2"], [group_claim(1, 0, 1, ({"P0", "P1"}, HEALTHY))])
    assert classify_qosa(binary) == QoSA.BINARY
    assert classify_qosa(listed) == QoSA.LIST
    assert classify_qosa(partial) == QoSA.INTERMEDIATE


def test_check_all_uses_header_groups(hop):
    hop.header["groups"] = {"groups": [["P1"]], "threshold": 0}
    verdicts = {v.property: v for v in check_all(hop, [PropertyId.GSW])}
    assert verdicts[PropertyId.GSW].holds


def test_strength_violations():
    hold = Verdict(PropertyId.ISS, Result.HOLDS)
    broken = Verdict(PropertyId.IAW, Result.VIOLATED, (0,))
    assert strength_violations([hold, broken]) == [(PropertyId.ISS, PropertyId.IAW)]
    assert strength_violations([Verdict(PropertyId.ISS, Result.INAPPLICABLE), broken]) == []


# --- optimised checkers against the tick-by-tick oracles ---

STATUSES = st.sampled_from([HEALTHY, UNHEALTHY, "unknown"])
LABEL_SETS = st.sampled_from([[ORIGINAL_LABEL], ["v2"], [ORIGINAL_LABEL, "v2"]])


@st.composite
def small_traces(draw):
    provers = [f"P{i}" for i in range(draw(st.integers(1, 4)))]
    mobile = draw(st.booleans())
    horizon = draw(st.integers(0, 60))
    kinds = [EventKind.COMPROMISE, EventKind.CAPTURE_BEGIN] + ([EventKind.RESTORE] if mobile else [])
    events = []
    for _ in range(draw(st.integers(0, 8))):
        at = draw(st.integers(0, horizon))
        kind = draw(st.sampled_from(kinds))
        args = {"prover": draw(st.sampled_from(provers))}
        if kind == EventKind.CAPTURE_BEGIN:
            args.update(write=draw(st.booleans()), until=at + 1)
        events.append(Event(at, kind, args))
    for _ in range(draw(st.integers(1, 3))):
        at = draw(st.integers(0, horizon))
        start = draw(st.integers(0, at))
        interval = [start, draw(st.integers(start, at))]
        members = draw(st.lists(st.sampled_from(provers), unique=True))
        if draw(st.booleans()):
            statuses = {p: draw(STATUSES) for p in members}
            events.append(Event(at, EventKind.CLAIM_INDIVIDUAL, {"statuses": statuses, "interval": interval}))
        elif members:
            groups = [[sorted(g), draw(st.sampled_from([HEALTHY, UNHEALTHY]))]
                      for g in draw(st.lists(st.sets(st.sampled_from(members), min_size=1), min_size=1, max_size=2))]
            events.append(Event(at, EventKind.CLAIM_GROUP, {"groups": groups, "interval": interval}))
    events.sort(key=lambda ev: ev.at)
    # at most one update per (tick, prover)
    changes = {(draw(st.integers(0, horizon)), draw(st.sampled_from(provers))): draw(LABEL_SETS)
               for _ in range(draw(st.integers(0, 3)))}
    updates = [{"at": at, "prover": p, "labels": labels} for (at, p), labels in sorted(changes.items())]
    header = {"provers": provers, "adversary": {"flags": ["msw" if mobile else "sw"]},
              "acceptable": {"initial": {p: ORIGINAL_LABEL for p in provers}, "updates": updates}}
    return Trace(header, events), GroupSpec(threshold=draw(st.integers(0, 2)))


@pytest.mark.slow
@settings(max_examples=10_000, deadline=None)
@given(small_traces())
def test_checkers_agree_with_oracles(case):
    trace, spec = case
    for sync in (False, True):
        for strong in (False, True):
            assert check_individual(trace, sync, strong).result == oracle_check_individual(trace, sync, strong).result
            assert check_group(trace, spec, sync, strong).result == oracle_check_group(trace, spec, sync, strong).result


@settings(max_examples=300, deadline=None)
@given(small_traces())
def test_stronger_properties_imply_weaker(case):
    trace, spec = case
    verdicts = [check(trace, p, spec) for p in ALL_PROPERTIES if p != PropertyId.IA]
    assert strength_violations(verdicts) == []
    for v in verdicts:
        if v.violated:
            assert check(trace.subtrace(v.witness), v.property, spec).violated
