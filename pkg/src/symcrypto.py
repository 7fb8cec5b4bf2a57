"""
Symbolic message algebra with perfect-cryptography semantics.

Terms form a free algebra except for the bitwise or/and equations over the
constants one/zero, which `normalize` applies pointwise to bits and
bit-vectors. Adversary knowledge is closed under a bounded Dolev-Yao
deduction: decomposition (projection, decryption with a derivable key,
opening signatures) is unbounded, construction is limited to terms whose size
does not exceed the configured depth. A counter counts as one unit of size
whatever its value, and every counter is public.

Canonical text syntax (bit-exact)::

    a(name)  n(name)  k(name)  ctr(N)  1  0
    pair(t, u)  mac(k, t)  senc(k, t)  sign(k, t)  h(t)
    bv(b,b,...)  or(t, u)  and(t, u)

e.g. ``mac(k(auth), pair(ctr(2), bv(1,0)))``.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Iterator

from .errors import TermSyntaxError, TypeMismatch

DEFAULT_DEPTH = 6


class Term:
    """Base class of all symbolic terms."""
    __slots__ = ()

    def size(self) -> int:
        return 1

    def children(self) -> tuple["Term", ...]:
        return ()


@dataclass(frozen=True, slots=True)
class Atom(Term):
    name: str

    def __str__(self):
        return f"a({self.name})"


@dataclass(frozen=True, slots=True)
class Nonce(Term):
    id: str

    def __str__(self):
        return f"n({self.id})"


@dataclass(frozen=True, slots=True)
class Key(Term):
    id: str

    def __str__(self):
        return f"k({self.id})"


@dataclass(frozen=True, slots=True)
class Counter(Term):
    """Counter as a multiset of units: value v is v+1 units, compared by cardinality."""
    value: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("counter value must be non-negative")

    def __lt__(self, other: "Counter") -> bool:
        return self.value < other.value

    def __le__(self, other: "Counter") -> bool:
        return self.value <= other.value

    def __str__(self):
        return f"ctr({self.value})"


@dataclass(frozen=True, slots=True)
class Bit(Term):
    one: bool

    def __str__(self):
        return "1" if self.one else "0"


ONE = Bit(True)
ZERO = Bit(False)


@dataclass(frozen=True, slots=True)
class BitVec(Term):
    bits: tuple[Term, ...]

    def size(self) -> int:
        return 1 + sum(b.size() for b in self.bits)

    def children(self):
        return self.bits

    def __str__(self):
        return "bv(" + ",".join(str(b) for b in self.bits) + ")"


@dataclass(frozen=True, slots=True)
class _Binary(Term):
    left: Term
    right: Term

    def size(self) -> int:
        return 1 + self.left.size() + self.right.size()

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, slots=True)
class Pair(_Binary):

    def __str__(self):
        return f"pair({self.left}, {self.right})"


@dataclass(frozen=True, slots=True)
class _Keyed(Term):
    key: Term
    body: Term

    def size(self) -> int:
        return 1 + self.key.size() + self.body.size()

    def children(self):
        return (self.key, self.body)


@dataclass(frozen=True, slots=True)
class Mac(_Keyed):

    def __str__(self):
        return f"mac({self.key}, {self.body})"


@dataclass(frozen=True, slots=True)
class SymEnc(_Keyed):

    def __str__(self):
        return f"senc({self.key}, {self.body})"


@dataclass(frozen=True, slots=True)
class Sign(_Keyed):

    def __str__(self):
        return f"sign({self.key}, {self.body})"


@dataclass(frozen=True, slots=True)
class Hash(Term):
    body: Term

    def size(self) -> int:
        return 1 + self.body.size()

    def children(self):
        return (self.body,)

    def __str__(self):
        return f"h({self.body})"


@dataclass(frozen=True, slots=True)
class BitOp(Term):
    """Unevaluated or/and application; `normalize` rewrites it away."""
    op: str
    left: Term
    right: Term

    def __post_init__(self):
        if self.op not in ("or", "and"):
            raise ValueError(f"unknown bit operation {self.op!r}")

    def size(self) -> int:
        return 1 + self.left.size() + self.right.size()

    def children(self):
        return (self.left, self.right)

    def __str__(self):
        return f"{self.op}({self.left}, {self.right})"


def Or(left: Term, right: Term) -> BitOp:
    return BitOp("or", left, right)


def And(left: Term, right: Term) -> BitOp:
    return BitOp("and", left, right)


def bitvec(*ones: bool) -> BitVec:
    return BitVec(tuple(ONE if b else ZERO for b in ones))


def term_list(items: Iterable[Term]) -> Term:
    """Right-nested pair list terminated by a(nil)."""
    result: Term = Atom("nil")
    for item in reversed(list(items)):
        result = Pair(item, result)
    return result


def list_items(term: Term) -> list[Term] | None:
    """Inverse of term_list; None when the term is not a well-formed list."""
    items = []
    while isinstance(term, Pair):
        items.append(term.left)
        term = term.right
    if term != Atom("nil"):
        return None
    return items


# --- equations -------------------------------------------------------------

def _apply(op: str, a: Term, b: Term) -> Term:
    if isinstance(a, Bit) and isinstance(b, Bit):
        value = (a.one or b.one) if op == "or" else (a.one and b.one)
        return ONE if value else ZERO
    if isinstance(a, BitVec) and isinstance(b, BitVec):
        if len(a.bits) != len(b.bits):
            raise TypeMismatch(f"{op} over bit-vectors of width {len(a.bits)} and {len(b.bits)}")
        return BitVec(tuple(_apply(op, x, y) for x, y in zip(a.bits, b.bits)))
    raise TypeMismatch(f"{op} applied to {a} and {b}")


def normalize(t: Term) -> Term:
    """Apply the or/and equations until fixpoint; other constructors keep their shape."""
    match t:
        case BitOp(op=op, left=left, right=right):
            return _apply(op, normalize(left), normalize(right))
        case Pair(left=left, right=right):
            return Pair(normalize(left), normalize(right))
        case Mac(key=key, body=body):
            return Mac(normalize(key), normalize(body))
        case SymEnc(key=key, body=body):
            return SymEnc(normalize(key), normalize(body))
        case Sign(key=key, body=body):
            return Sign(normalize(key), normalize(body))
        case Hash(body=body):
            return Hash(normalize(body))
        case BitVec(bits=bits):
            return BitVec(tuple(normalize(b) for b in bits))
        case _:
            return t


# --- parsing ---------------------------------------------------------------

_LEAF_NAME = re.compile(r"[^()\s,]+")
_HEAD = re.compile(r"\s*([a-z]+)\(")


class _Parser:

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def fail(self, msg: str):
        raise TermSyntaxError(f"{msg} at offset {self.pos} in {self.text!r}")

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, ch: str):
        self.skip()
        if not self.text.startswith(ch, self.pos):
            self.fail(f"expected {ch!r}")
        self.pos += 1

    def leaf(self) -> str:
        self.skip()
        m = _LEAF_NAME.match(self.text, self.pos)
        if not m:
            self.fail("expected a name")
        self.pos = m.end()
        return m.group(0)

    def term(self) -> Term:
        self.skip()
        if self.pos < len(self.text) and self.text[self.pos] in "01":
            nxt = self.text[self.pos + 1:self.pos + 2]
            if not (nxt.isalnum() or nxt == "_"):
                self.pos += 1
                return ONE if self.text[self.pos - 1] == "1" else ZERO
        m = _HEAD.match(self.text, self.pos)
        if not m:
            self.fail("expected a term")
        self.pos = m.end()
        head = m.group(1)
        match head:
            case "a" | "n" | "k":
                name = self.leaf()
                self.expect(")")
                return {"a": Atom, "n": Nonce, "k": Key}[head](name)
            case "ctr":
                raw = self.leaf()
                self.expect(")")
                if not raw.isdigit():
                    self.fail("counter value must be a non-negative integer")
                return Counter(int(raw))
            case "h":
                body = self.term()
                self.expect(")")
                return Hash(body)
            case "bv":
                bits = [self.term()]
                self.skip()
                while self.text.startswith(",", self.pos):
                    self.pos += 1
                    bits.append(self.term())
                    self.skip()
                self.expect(")")
                return BitVec(tuple(bits))
            case "pair" | "mac" | "senc" | "sign" | "or" | "and":
                left = self.term()
                self.expect(",")
                right = self.term()
                self.expect(")")
                if head in ("or", "and"):
                    return BitOp(head, left, right)
                return {"pair": Pair, "mac": Mac, "senc": SymEnc, "sign": Sign}[head](left, right)
        self.fail(f"unknown constructor {head!r}")


def parse_term(text: str) -> Term:
    parser = _Parser(text)
    term = parser.term()
    parser.skip()
    if parser.pos != len(text):
        parser.fail("trailing input")
    return term


# --- knowledge -------------------------------------------------------------

@dataclass(frozen=True)
class KnowledgeSet:
    terms: frozenset = frozenset()

    @classmethod
    def of(cls, *terms: Term) -> "KnowledgeSet":
        return cls(frozenset(normalize(t) for t in terms))

    def __contains__(self, t: Term) -> bool:
        return normalize(t) in self.terms

    def __iter__(self) -> Iterator[Term]:
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    def __le__(self, other: "KnowledgeSet") -> bool:
        return self.terms <= other.terms


def _synthesizable(t: Term, known: set, depth: int) -> bool:
    if t in known or isinstance(t, (Bit, Counter)):
        return True
    if t.size() > depth:
        return False
    if isinstance(t, (Atom, Nonce, Key)):
        return False
    if isinstance(t, BitVec):
        return all(isinstance(b, Bit) for b in t.bits)
    return all(_synthesizable(c, known, depth) for c in t.children())


def analyze(terms: Iterable[Term], depth: int = DEFAULT_DEPTH) -> set:
    """Decomposition closure: projection, decryption with derivable keys, signature opening."""
    known: set = set()
    pending: list[SymEnc] = []
    work = [normalize(t) for t in terms]
    while work:
        while work:
            t = work.pop()
            if t in known:
                continue
            known.add(t)
            if isinstance(t, Pair):
                work.extend((t.left, t.right))
            elif isinstance(t, Sign):
                work.append(t.body)
            elif isinstance(t, SymEnc):
                pending.append(t)
        still = []
        for enc in pending:
            if _synthesizable(enc.key, known, depth):
                work.append(enc.body)
            else:
                still.append(enc)
        pending = still
    return known


def can_derive(k: KnowledgeSet | Iterable[Term], t: Term, depth: int = DEFAULT_DEPTH) -> bool:
    """True iff t belongs to dy_close(k, depth)."""
    return derivable_in(analyze(k, depth), t, depth)


def derivable_in(known: set, t: Term, depth: int = DEFAULT_DEPTH) -> bool:
    """can_derive against an already analysed term set."""
    try:
        target = normalize(t)
    except TypeMismatch:
        return False
    return _synthesizable(target, known, depth)


def injection_steps(known: set, t: Term) -> int | None:
    """
    Number of constructor applications needed to build t on top of analysed
    knowledge, or None if t is not constructible. Bits and counters are free.
    """
    try:
        t = normalize(t)
    except TypeMismatch:
        return None
    if t in known or isinstance(t, (Bit, Counter)):
        return 0
    if isinstance(t, (Atom, Nonce, Key)):
        return None
    if isinstance(t, BitVec) and not all(isinstance(b, Bit) for b in t.bits):
        return None
    steps = 1
    for child in t.children():
        sub = injection_steps(known, child)
        if sub is None:
            return None
        steps += sub
    return steps


def dy_close(k: KnowledgeSet, depth: int = DEFAULT_DEPTH) -> KnowledgeSet:
    """
    Explicit bounded closure; exponential in depth, meant for small knowledge sets.
    Counters are listed for values below depth only.
    """
    if depth < 1:
        raise ValueError("depth must be at least 1")
    closed = analyze(k, depth)
    closed |= {ONE, ZERO}
    closed |= {Counter(v) for v in range(depth)}
    by_size: dict[int, set] = {}
    for t in closed:
        if t.size() <= depth:
            by_size.setdefault(t.size(), set()).add(t)
    for s in range(2, depth + 1):
        level = by_size.setdefault(s, set())
        for body in by_size.get(s - 1, ()):
            level.add(Hash(body))
        level.update(BitVec(bits) for bits in itertools.product((ZERO, ONE), repeat=s - 1))
        for i in range(1, s - 1):
            lefts = sorted(by_size.get(i, ()), key=str)
            rights = sorted(by_size.get(s - 1 - i, ()), key=str)
            for x, y in itertools.product(lefts, rights):
                level.update((Pair(x, y), Mac(x, y), SymEnc(x, y), Sign(x, y)))
    for level in by_size.values():
        closed |= level
    return KnowledgeSet(frozenset(closed))
