"""Multi-version semiring annotations.

An annotation is a symbolic expression built from base-semiring elements,
``+``, ``*`` and version annotations ``X[T,v,id](...)`` for X in I, U, D, C.
Expressions are decided equal by bringing them into a canonical normal form:
a sum of addition-free summands, each summand being a coefficient times a
sorted product of atoms (variables or version-annotated sub-products).

Coefficients float out of version annotations (``U(3) == 3 * U(1)``), which
follows from ``A(k + k') = A(k) + A(k')``.  Rendering pushes a coefficient
back inside a single annotation chain, so ``U[T,5,1](10 + 5)`` prints as
``U[T,5,1](15)``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, NamedTuple, Union

KINDS = ("I", "U", "D", "C")


class NotAdmissible(ValueError):
    """A summand lacks the single outermost version annotation an operation needs."""


# ---------------------------------------------------------------------------
# base semirings


class Polynomial:
    """Element of N[X]: natural-number coefficients over variables."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Mapping[tuple, int] | Iterable[tuple[tuple, int]] = ()):
        acc: dict[tuple, int] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for mono, coef in items:
            if coef < 0:
                raise ValueError("polynomial coefficients must be natural numbers")
            if coef:
                mono = tuple(sorted(mono))
                acc[mono] = acc.get(mono, 0) + coef
        self.terms = tuple(sorted(acc.items()))
        self._hash = hash(self.terms)

    @classmethod
    def var(cls, name: str) -> "Polynomial":
        return cls({(name,): 1})

    @classmethod
    def const(cls, n: int) -> "Polynomial":
        return cls({(): n})

    def is_zero(self) -> bool:
        return not self.terms

    def variables(self) -> set[str]:
        return {v for mono, _ in self.terms for v in mono}

    def evaluate(self, valuation: Callable[[str], object], semiring: "BaseSemiring"):
        """Evaluate into ``semiring`` given a value for every variable."""
        total = semiring.zero
        for mono, coef in self.terms:
            term = semiring.from_coef(coef)
            for v in mono:
                term = semiring.mul(term, valuation(v))
            total = semiring.add(total, term)
        return total

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(self.terms + other.terms)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(
            (m1 + m2, c1 * c2) for m1, c1 in self.terms for m2, c2 in other.terms
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.terms == other.terms

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Polynomial({self})"

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for mono, coef in self.terms:
            factors = ([str(coef)] if coef != 1 or not mono else []) + list(mono)
            parts.append(" * ".join(factors))
        return " + ".join(parts)


BaseElem = Union[int, bool, Polynomial]


@dataclass(frozen=True, eq=False)
class BaseSemiring:
    """One of the supported commutative semirings N, B and N[X].

    Normal forms keep coefficients in the scalar part of the semiring (naturals
    for NAT and PROV_POLY, ``True`` for BOOL) and variables as atoms.
    """

    id: str
    zero: BaseElem
    one: BaseElem
    add: Callable[[BaseElem, BaseElem], BaseElem]
    mul: Callable[[BaseElem, BaseElem], BaseElem]
    idempotent: bool

    def eq(self, a: BaseElem, b: BaseElem) -> bool:
        return a == b

    def contains(self, a) -> bool:
        if self.id == "BOOL":
            return isinstance(a, bool)
        if self.id == "NAT":
            return isinstance(a, int) and not isinstance(a, bool) and a >= 0
        return isinstance(a, Polynomial)

    # scalar (coefficient) arithmetic used inside normal forms
    @property
    def coef_one(self):
        return True if self.idempotent else 1

    def coef_add(self, a, b):
        return True if self.idempotent else a + b

    def coef_mul(self, a, b):
        return True if self.idempotent else a * b

    def from_coef(self, c) -> BaseElem:
        if self.id == "PROV_POLY":
            return Polynomial.const(c)
        if self.id == "BOOL":
            return bool(c)
        return int(c)

    def decompose(self, elem: BaseElem) -> list[tuple[tuple[str, ...], object]]:
        """Split a base element into (variables, coefficient) terms."""
        if not self.contains(elem):
            raise TypeError(f"{elem!r} is not an element of {self.id}")
        if self.id == "PROV_POLY":
            return list(elem.terms)
        if self.id == "BOOL":
            return [((), True)] if elem else []
        return [((), elem)] if elem else []

    def render_coef(self, c) -> str:
        return "true" if self.id == "BOOL" else str(c)

    def render_elem(self, elem: BaseElem) -> str:
        if self.id == "BOOL":
            return "true" if elem else "false"
        return str(elem)

    def __repr__(self) -> str:
        return self.id


NAT = BaseSemiring("NAT", 0, 1, lambda a, b: a + b, lambda a, b: a * b, False)
BOOL = BaseSemiring("BOOL", False, True, lambda a, b: a or b, lambda a, b: a and b, True)
PROV_POLY = BaseSemiring(
    "PROV_POLY", Polynomial(), Polynomial.const(1),
    lambda a, b: a + b, lambda a, b: a * b, False,
)
SEMIRINGS = {k.id: k for k in (NAT, BOOL, PROV_POLY)}


def var(name: str) -> Polynomial:
    return Polynomial.var(name)


# ---------------------------------------------------------------------------
# version annotations and normal-form atoms


class VersionAnnotation(NamedTuple):
    kind: str
    txn: str
    time: int
    tid: int

    def check(self) -> "VersionAnnotation":
        if self.kind not in KINDS:
            raise ValueError(f"unknown annotation kind {self.kind!r}")
        if self.time < 1:
            raise ValueError("annotation time must be >= 1")
        return self

    def render(self) -> str:
        return f"{self.kind}[{self.txn},{self.time},{self.tid}]"


class Var:
    __slots__ = ("name", "key", "_hash")

    def __init__(self, name: str):
        self.name = name
        self.key = (1, name)
        self._hash = hash(self.key)

    def __eq__(self, other) -> bool:
        return isinstance(other, Var) and other.name == self.name

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return self.name


class Versioned:
    """An annotation applied to an addition-free product of atoms."""

    __slots__ = ("ann", "inner", "key", "_hash")

    def __init__(self, ann: VersionAnnotation, inner: tuple):
        self.ann = ann
        self.inner = inner
        self.key = (0, ann.time, ann.txn, ann.kind, ann.tid, tuple(a.key for a in inner))
        self._hash = hash(self.key)

    def __eq__(self, other) -> bool:
        return isinstance(other, Versioned) and other.key == self.key

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"Versioned({self.ann.render()}, {self.inner!r})"


Atom = Union[Var, Versioned]


def _mono(atoms: Iterable[Atom]) -> tuple:
    return tuple(sorted(atoms, key=lambda a: a.key))


def _mono_key(mono: tuple) -> tuple:
    return tuple(a.key for a in mono)


class Summand(NamedTuple):
    """coef * product(factors); factors sorted, coefficient never zero."""

    factors: tuple
    coef: object

    @property
    def key(self) -> tuple:
        return _mono_key(self.factors)


class NormalForm:
    """Canonical representative of an MV-semiring congruence class."""

    __slots__ = ("semiring", "summands", "_index", "_hash")

    def __init__(self, semiring: BaseSemiring, terms: Mapping[tuple, object] = None):
        self.semiring = semiring
        terms = terms or {}
        self.summands = tuple(
            Summand(f, c) for f, c in sorted(terms.items(), key=lambda fc: _mono_key(fc[0]))
        )
        self._index = dict(terms)
        self._hash = None

    # constructors ---------------------------------------------------------
    @classmethod
    def zero(cls, semiring: BaseSemiring) -> "NormalForm":
        return cls(semiring)

    @classmethod
    def one(cls, semiring: BaseSemiring) -> "NormalForm":
        return cls(semiring, {(): semiring.coef_one})

    @classmethod
    def base(cls, semiring: BaseSemiring, elem: BaseElem) -> "NormalForm":
        terms: dict[tuple, object] = {}
        for vars_, coef in semiring.decompose(elem):
            mono = _mono(Var(v) for v in vars_)
            terms[mono] = semiring.coef_add(terms[mono], coef) if mono in terms else coef
        return cls(semiring, terms)

    @classmethod
    def of_summand(cls, semiring: BaseSemiring, s: Summand) -> "NormalForm":
        return cls(semiring, {s.factors: s.coef})

    @classmethod
    def from_summands(cls, semiring: BaseSemiring, summands: Iterable[Summand]) -> "NormalForm":
        terms: dict[tuple, object] = {}
        for f, c in summands:
            terms[f] = semiring.coef_add(terms[f], c) if f in terms else c
        return cls(semiring, terms)

    # algebra ----------------------------------------------------------------
    def is_zero(self) -> bool:
        return not self.summands

    def __add__(self, other: "NormalForm") -> "NormalForm":
        self._same(other)
        if not other.summands:
            return self
        if not self.summands:
            return other
        return NormalForm.from_summands(self.semiring, self.summands + other.summands)

    def __mul__(self, other: "NormalForm") -> "NormalForm":
        self._same(other)
        K = self.semiring
        terms: dict[tuple, object] = {}
        for f1, c1 in self.summands:
            for f2, c2 in other.summands:
                mono = _mono(f1 + f2) if f1 and f2 else (f1 or f2)
                c = K.coef_mul(c1, c2)
                terms[mono] = K.coef_add(terms[mono], c) if mono in terms else c
        return NormalForm(K, terms)

    def wrap(self, ann: VersionAnnotation) -> "NormalForm":
        """Apply one version annotation to every summand (A distributes over +)."""
        return NormalForm(self.semiring, {(Versioned(ann, f),): c for f, c in self.summands})

    def wrap_each(self, ann_for: Callable[[Summand], VersionAnnotation]) -> "NormalForm":
        return NormalForm.from_summands(
            self.semiring,
            (Summand((Versioned(ann_for(s), s.factors),), s.coef) for s in self.summands),
        )

    def filter(self, keep: Callable[[Summand], bool]) -> "NormalForm":
        kept = [s for s in self.summands if keep(s)]
        if len(kept) == len(self.summands):
            return self
        return NormalForm(self.semiring, dict(kept))

    def map_summands(self, f: Callable[[Summand], Summand]) -> "NormalForm":
        return NormalForm.from_summands(self.semiring, (f(s) for s in self.summands))

    def coefficient(self, factors: tuple):
        return self._index.get(factors)

    def _same(self, other: "NormalForm") -> None:
        if other.semiring is not self.semiring:
            raise TypeError(f"cannot combine {self.semiring} and {other.semiring} annotations")

    # container protocol -----------------------------------------------------
    def __len__(self) -> int:
        return len(self.summands)

    def __iter__(self) -> Iterator[Summand]:
        return iter(self.summands)

    def __getitem__(self, i: int) -> Summand:
        return self.summands[i]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, NormalForm)
            and other.semiring is self.semiring
            and other.summands == self.summands
        )

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.semiring.id, self.summands))
        return self._hash

    def __repr__(self) -> str:
        return f"<{self.semiring.id} {self.render()}>"

    def __str__(self) -> str:
        return self.render()

    def render(self) -> str:
        if not self.summands:
            return self.semiring.render_elem(self.semiring.zero)
        return " + ".join(render_summand(s, self.semiring) for s in self.summands)

    def to_expr(self) -> "AnnotExpr":
        """Rebuild an expression tree denoting this normal form."""
        K = self.semiring
        if not self.summands:
            return Base(K.zero)
        parts = [_summand_expr(s, K) for s in self.summands]
        out = parts[0]
        for p in parts[1:]:
            out = Sum(out, p)
        return out


def render_summand(s: Summand, K: BaseSemiring) -> str:
    return _render_term(s.factors, s.coef, K)


def _render_term(factors: tuple, coef, K: BaseSemiring) -> str:
    if coef == K.coef_one:
        if not factors:
            return K.render_elem(K.one)
        return " * ".join(_render_atom(a, K) for a in factors)
    if not factors:
        return K.render_coef(coef)
    if len(factors) == 1 and isinstance(factors[0], Versioned):
        a = factors[0]
        return f"{a.ann.render()}({_render_term(a.inner, coef, K)})"
    return " * ".join([K.render_coef(coef)] + [_render_atom(a, K) for a in factors])


def _render_atom(a: Atom, K: BaseSemiring) -> str:
    if isinstance(a, Var):
        return a.name
    return f"{a.ann.render()}({_render_term(a.inner, K.coef_one, K)})"


def _summand_expr(s: Summand, K: BaseSemiring) -> "AnnotExpr":
    out: AnnotExpr = Base(K.from_coef(s.coef))
    for a in s.factors:
        out = Product(out, _atom_expr(a, K))
    return out


def _atom_expr(a: Atom, K: BaseSemiring) -> "AnnotExpr":
    if isinstance(a, Var):
        return Base(Polynomial.var(a.name))
    inner = _summand_expr(Summand(a.inner, K.coef_one), K)
    return Wrapped(a.ann, inner)


# ---------------------------------------------------------------------------
# expression trees


@dataclass(frozen=True)
class Base:
    elem: BaseElem

    def __add__(self, other):
        return Sum(self, other)

    def __mul__(self, other):
        return Product(self, other)


@dataclass(frozen=True)
class Sum:
    left: "AnnotExpr"
    right: "AnnotExpr"

    __add__ = Base.__add__
    __mul__ = Base.__mul__


@dataclass(frozen=True)
class Product:
    left: "AnnotExpr"
    right: "AnnotExpr"

    __add__ = Base.__add__
    __mul__ = Base.__mul__


@dataclass(frozen=True)
class Wrapped:
    ann: VersionAnnotation
    inner: "AnnotExpr"

    __add__ = Base.__add__
    __mul__ = Base.__mul__


AnnotExpr = Union[Base, Sum, Product, Wrapped]


def ann(kind: str, txn: str, time: int, tid: int) -> Callable[["AnnotExpr"], Wrapped]:
    """Curried constructor: ``ann("U", "T7", 22, 4)(inner)``."""
    a = VersionAnnotation(kind, txn, time, tid).check()
    return lambda inner: Wrapped(a, inner)


def render_expr(e: AnnotExpr, K: BaseSemiring) -> str:
    """Render an unnormalized expression with explicit parentheses."""
    if isinstance(e, Base):
        return K.render_elem(e.elem) if K.id != "PROV_POLY" else (
            str(e.elem) if len(e.elem.terms) <= 1 else f"({e.elem})"
        )
    if isinstance(e, Sum):
        return f"({render_expr(e.left, K)} + {render_expr(e.right, K)})"
    if isinstance(e, Product):
        return f"({render_expr(e.left, K)} * {render_expr(e.right, K)})"
    return f"{e.ann.render()}({render_expr(e.inner, K)})"


def _base_elem(elem, K: BaseSemiring) -> BaseElem:
    # integers are accepted as constants of N[X]
    if K.id == "PROV_POLY" and isinstance(elem, int) and not isinstance(elem, bool):
        return Polynomial.const(elem)
    return elem


def normalize(e: AnnotExpr, K: BaseSemiring) -> NormalForm:
    """Bring an expression into canonical normal form over base semiring ``K``."""
    if isinstance(e, NormalForm):
        return e
    if isinstance(e, Base):
        return NormalForm.base(K, _base_elem(e.elem, K))
    if isinstance(e, Sum):
        return normalize(e.left, K) + normalize(e.right, K)
    if isinstance(e, Product):
        return normalize(e.left, K) * normalize(e.right, K)
    if isinstance(e, Wrapped):
        return normalize(e.inner, K).wrap(e.ann)
    raise TypeError(f"not an annotation expression: {e!r}")


def equivalent(e1: AnnotExpr, e2: AnnotExpr, K: BaseSemiring) -> bool:
    return normalize(e1, K) == normalize(e2, K)


def num_summands(n: NormalForm) -> int:
    return len(n.summands)


def get_summand(n: NormalForm, i: int) -> Summand:
    if not 0 <= i < len(n.summands):
        raise IndexError(f"summand index {i} out of range for {len(n.summands)} summands")
    return n.summands[i]


# ---------------------------------------------------------------------------
# summand inspection


def outer(s: Summand) -> VersionAnnotation:
    """The outermost version annotation of an admissible summand."""
    if len(s.factors) != 1 or not isinstance(s.factors[0], Versioned):
        raise NotAdmissible(f"summand {s.factors!r} has no single outermost version annotation")
    return s.factors[0].ann


def id_of(s: Summand) -> int:
    return outer(s).tid


def version_of(s: Summand) -> int:
    return outer(s).time


def has_created(txn: str, s: Summand) -> bool:
    return outer(s).txn == txn


def do_commit(txn: str, time: int, s: Summand) -> Summand:
    """Wrap ``s`` in ``C[txn,time+1,id]`` if its outermost layer is an I/U/D of ``txn``."""
    a = outer(s)
    if a.kind != "C" and a.txn == txn:
        return Summand((Versioned(VersionAnnotation("C", txn, time + 1, a.tid), s.factors),), s.coef)
    return s


def layers(s: Summand) -> list[VersionAnnotation]:
    """Annotation chain from the outside in, following single-factor nesting."""
    out = []
    factors = s.factors
    while len(factors) == 1 and isinstance(factors[0], Versioned):
        out.append(factors[0].ann)
        factors = factors[0].inner
    return out


def contains_kind(s: Summand, kind: str) -> bool:
    """Whether any version annotation of ``kind`` occurs anywhere in the summand."""
    stack = list(s.factors)
    while stack:
        a = stack.pop()
        if isinstance(a, Versioned):
            if a.ann.kind == kind:
                return True
            stack.extend(a.inner)
    return False


# ---------------------------------------------------------------------------
# lifted homomorphisms


@dataclass(frozen=True, eq=False)
class LiftedHom:
    """A base-semiring homomorphism applied at the leaves of annotations.

    ``base_map`` must map source base elements to target base elements and
    preserve 0, 1, + and *.  Version annotations pass through untouched.
    """

    source: BaseSemiring
    target: BaseSemiring
    base_map: Callable[[BaseElem], BaseElem]
    name: str = "h"

    @classmethod
    def from_valuation(cls, target: BaseSemiring, valuation, default=None, name: str = "h") -> "LiftedHom":
        """Homomorphism out of N[X] fixed by the image of each variable."""
        if callable(valuation):
            look = valuation
        else:
            def look(v):
                if v in valuation:
                    return valuation[v]
                if default is None:
                    raise KeyError(f"no value for variable {v!r}")
                return default
        return cls(PROV_POLY, target, lambda p: p.evaluate(look, target), name)

    @classmethod
    def identity(cls, K: BaseSemiring) -> "LiftedHom":
        return cls(K, K, lambda x: x, "id")

    def __call__(self, x):
        if isinstance(x, NormalForm):
            return self.apply_normal_form(x)
        return apply_lifted(self, x)

    def apply_normal_form(self, n: NormalForm) -> NormalForm:
        if n.semiring is not self.source:
            raise TypeError(f"{self.name} maps {self.source} annotations, got {n.semiring}")
        S, K = self.source, self.target
        cache: dict = {}

        def atom(a: Atom) -> NormalForm:
            got = cache.get(a)
            if got is None:
                if isinstance(a, Var):
                    got = NormalForm.base(K, self.base_map(Polynomial.var(a.name)))
                else:
                    got = mono(a.inner).wrap(a.ann)
                cache[a] = got
            return got

        def mono(factors: tuple, coef=None) -> NormalForm:
            out = NormalForm.base(K, self.base_map(S.from_coef(S.coef_one if coef is None else coef)))
            for a in factors:
                if out.is_zero():
                    break
                out = out * atom(a)
            return out

        total = NormalForm.zero(K)
        for s in n.summands:
            total = total + mono(s.factors, s.coef)
        return total


def apply_lifted(h: LiftedHom, e: AnnotExpr) -> AnnotExpr:
    """Replace every base leaf by its image; annotation structure is kept verbatim."""
    if isinstance(e, NormalForm):
        return h.apply_normal_form(e)
    if isinstance(e, Base):
        return Base(h.base_map(_base_elem(e.elem, h.source)))
    if isinstance(e, Sum):
        return Sum(apply_lifted(h, e.left), apply_lifted(h, e.right))
    if isinstance(e, Product):
        return Product(apply_lifted(h, e.left), apply_lifted(h, e.right))
    return Wrapped(e.ann, apply_lifted(h, e.inner))


def ones_hom(target: BaseSemiring = NAT) -> LiftedHom:
    """N[X] -> target sending every variable to 1 (drops provenance, keeps multiplicity)."""
    return LiftedHom.from_valuation(target, lambda v: target.one, name=f"ones->{target.id}")


def nat_to_bool() -> LiftedHom:
    return LiftedHom(NAT, BOOL, lambda n: n > 0, "nat->bool")


# ---------------------------------------------------------------------------
# parsing rendered annotations

_TOKEN = re.compile(r"\s*(?:(?P<ann>[IUDC])\[(?P<txn>[^,\]]+),(?P<time>\d+),(?P<tid>-?\d+)\]\(|(?P<num>\d+)|(?P<name>[A-Za-z_][\w@.]*)|(?P<sym>[()+*]))")


def parse_annotation(text: str, K: BaseSemiring) -> NormalForm:
    """Parse the rendering produced by ``NormalForm.render`` (or any expression
    in the same syntax) back into a normal form."""
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"cannot parse annotation at offset {pos}: {text[pos:pos + 20]!r}")
        pos = m.end()
        if m.group("ann"):
            tokens.append(("ann", VersionAnnotation(m.group("ann"), m.group("txn"), int(m.group("time")), int(m.group("tid")))))
        elif m.group("num"):
            tokens.append(("num", int(m.group("num"))))
        elif m.group("name"):
            tokens.append(("name", m.group("name")))
        else:
            tokens.append(("sym", m.group("sym")))
    tokens.append(("end", None))
    i = 0

    def peek():
        return tokens[i]

    def take(kind, value=None):
        nonlocal i
        tk = tokens[i]
        if tk[0] != kind or (value is not None and tk[1] != value):
            raise ValueError(f"expected {value or kind} in annotation, got {tk[1]!r}")
        i += 1
        return tk[1]

    def parse_sum():
        out = parse_prod()
        while peek() == ("sym", "+"):
            take("sym", "+")
            out = Sum(out, parse_prod())
        return out

    def parse_prod():
        out = parse_atom()
        while peek() == ("sym", "*"):
            take("sym", "*")
            out = Product(out, parse_atom())
        return out

    def parse_atom():
        kind, value = peek()
        if kind == "ann":
            take("ann")
            inner = parse_sum()
            take("sym", ")")
            return Wrapped(value, inner)
        if kind == "num":
            take("num")
            return Base(value > 0 if K.id == "BOOL" else value)
        if kind == "name":
            take("name")
            if value in ("true", "false"):
                return Base(value == "true") if K.id == "BOOL" else Base(int(value == "true"))
            if K.id != "PROV_POLY":
                raise ValueError(f"variable {value!r} outside PROV_POLY")
            return Base(Polynomial.var(value))
        if (kind, value) == ("sym", "("):
            take("sym", "(")
            inner = parse_sum()
            take("sym", ")")
            return inner
        raise ValueError(f"unexpected token {value!r} in annotation")

    e = parse_sum()
    take("end")
    return normalize(e, K)
