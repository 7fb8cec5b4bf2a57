import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.errors import TermSyntaxError, TypeMismatch
from src.symcrypto import (ONE, ZERO, And, Atom, Bit, BitVec, Counter, Hash, Key, KnowledgeSet, Mac, Nonce, Or,
                           Pair, Sign, SymEnc, analyze, bitvec, can_derive, dy_close, injection_steps,
                           list_items, normalize, parse_term, term_list)


def test_canonical_text():
    t = Mac(Key("auth"), Pair(Counter(2), bitvec(True, False)))
    assert str(t) == "mac(k(auth), pair(ctr(2), bv(1,0)))"
    assert parse_term(str(t)) == t
    assert parse_term("senc( k(x) ,h(n(r)) )") == SymEnc(Key("x"), Hash(Nonce("r")))


@pytest.mark.parametrize("text", ["pair(a(x))", "ctr(-1)", "foo(a(x))", "a(x) a(y)", "bv()"])
def test_parse_errors(text):
    with pytest.raises(TermSyntaxError):
        parse_term(text)


def test_or_and_equations():
    assert normalize(Or(ONE, ZERO)) == ONE
    assert normalize(And(ONE, ZERO)) == ZERO
    assert normalize(Or(bitvec(True, False), bitvec(False, False))) == bitvec(True, False)
    assert normalize(And(Or(bitvec(True, False), bitvec(False, True)), bitvec(True, True))) == bitvec(True, True)
    # equations apply below other constructors too
    assert normalize(Pair(Counter(1), Or(ZERO, ZERO))) == Pair(Counter(1), ZERO)


def test_or_type_mismatch():
    with pytest.raises(TypeMismatch):
        normalize(Or(bitvec(True), bitvec(True, False)))
    with pytest.raises(TypeMismatch):
        normalize(And(Atom("x"), ONE))


def test_term_list():
    items = [Atom("good"), Atom("updated")]
    assert list_items(term_list(items)) == items
    assert list_items(Pair(Atom("x"), Atom("y"))) is None


def test_decryption_needs_the_key():
    secret = Nonce("s")
    enc = SymEnc(Key("k"), secret)
    assert not can_derive(KnowledgeSet.of(enc), secret)
    assert can_derive(KnowledgeSet.of(enc, Key("k")), secret)
    # key hidden inside a pair is still found
    assert can_derive([enc, Pair(Atom("x"), Key("k"))], secret)


def test_mac_does_not_leak_its_key():
    known = KnowledgeSet.of(Mac(Key("auth"), Atom("m")), Atom("m"))
    assert not can_derive(known, Key("auth"))
    assert not can_derive(known, Mac(Key("auth"), Atom("other")))
    assert can_derive(known, Mac(Key("auth"), Atom("m")))


def test_signature_opens_without_key():
    assert can_derive([Sign(Key("sk"), Atom("m"))], Atom("m"))


def test_construction_bounded_by_depth():
    known = [Atom("x")]
    assert can_derive(known, Hash(Hash(Atom("x"))), depth=3)
    assert not can_derive(known, Hash(Hash(Atom("x"))), depth=2)
    assert can_derive([], Counter(3), depth=6)
    assert not can_derive([], Atom("fresh"))


def test_injection_steps():
    known = analyze([Key("auth")])
    assert injection_steps(known, Key("auth")) == 0
    assert injection_steps(known, Mac(Key("auth"), Pair(ONE, Counter(4)))) == 2
    assert injection_steps(known, Hash(Atom("unknown"))) is None
    assert injection_steps(known, Or(bitvec(True), bitvec(True, True))) is None


def test_dy_close_agrees_with_can_derive():
    k = KnowledgeSet.of(SymEnc(Key("k"), Atom("m")), Key("k"))
    closed = dy_close(k, depth=3)
    assert Atom("m") in closed
    assert Hash(Atom("m")) in closed
    assert all(can_derive(k, t, depth=3) for t in closed)
    assert Key("other") not in closed


def test_dy_close_rejects_zero_depth():
    with pytest.raises(ValueError):
        dy_close(KnowledgeSet(), 0)


bits = st.sampled_from([ONE, ZERO])


@st.composite
def bit_exprs(draw, width=None):
    """Well-typed or/and expressions over bits (width None) or bit-vectors of one width."""
    leaf = bits if width is None else st.builds(BitVec, st.tuples(*[bits] * width))
    return draw(st.recursive(leaf, lambda sub: st.builds(Or, sub, sub) | st.builds(And, sub, sub),
                             max_leaves=8))


@settings(max_examples=200)
@given(st.one_of(bit_exprs(), bit_exprs(width=3)))
def test_normalize_is_idempotent(t):
    once = normalize(t)
    assert normalize(once) == once
    assert isinstance(once, (Bit, BitVec))


@settings(max_examples=200)
@given(bit_exprs(width=2), bit_exprs(width=2))
def test_or_commutes_after_normalize(a, b):
    assert normalize(Or(a, b)) == normalize(Or(b, a))
    assert normalize(And(a, b)) == normalize(And(b, a))
