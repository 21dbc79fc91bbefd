"""Annotated relations and the evaluator for the extended relational algebra.

Besides the positive operators (select, project, join, union, singleton) the
algebra has three version-aware operators: the annotation operator that wraps
every summand in an I/U/D/C layer, the version merge that keeps the newest
version per tuple id, and the version filter that drops summands by the time
of their outermost annotation.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Union

from .mvsemiring import (
    BOOL,
    PROV_POLY,
    SEMIRINGS,
    BaseSemiring,
    NormalForm,
    NotAdmissible,
    Polynomial,
    Summand,
    VersionAnnotation,
    do_commit,
    id_of,
    outer,
    parse_annotation,
    version_of,
)

INT, STRING, BOOLEAN = "INT", "STRING", "BOOL"


class TypeMismatch(TypeError):
    pass


class SchemaError(ValueError):
    pass


class UnboundRelation(KeyError):
    pass


# ---------------------------------------------------------------------------
# schemas


@dataclass(frozen=True)
class Schema:
    name: str
    attrs: tuple  # ((name, type), ...)

    def __post_init__(self):
        names = [a for a, _ in self.attrs]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate attribute names in {self.name}: {names}")
        for a, t in self.attrs:
            if t not in (INT, STRING, BOOLEAN):
                raise SchemaError(f"attribute {a} has unsupported type {t}")

    @classmethod
    def of(cls, name: str, *attrs) -> "Schema":
        """``Schema.of("Bonus", "ID", "EmpID", ("Name", STRING))``; bare names are INT."""
        return cls(name, tuple((a, INT) if isinstance(a, str) else tuple(a) for a in attrs))

    @property
    def names(self) -> tuple:
        return tuple(a for a, _ in self.attrs)

    @property
    def types(self) -> tuple:
        return tuple(t for _, t in self.attrs)

    def index(self, attr: str) -> int:
        for i, (a, _) in enumerate(self.attrs):
            if a == attr:
                return i
        raise SchemaError(f"unknown attribute {attr!r} in {self.name}")

    def type_of(self, attr: str) -> str:
        return self.attrs[self.index(attr)][1]

    def renamed(self, name: str) -> "Schema":
        return Schema(name, self.attrs)

    def same_attrs(self, other: "Schema") -> bool:
        return self.attrs == other.attrs

    def check_tuple(self, t: tuple) -> None:
        if len(t) != len(self.attrs):
            raise SchemaError(f"tuple {t!r} does not have arity {len(self.attrs)}")
        for v, (a, ty) in zip(t, self.attrs):
            if value_type(v) != ty:
                raise TypeMismatch(f"value {v!r} for {a} is not {ty}")

    def render(self) -> str:
        return f"{self.name}(" + ", ".join(f"{a} {t}" for a, t in self.attrs) + ")"


def value_type(v) -> str:
    if isinstance(v, bool):
        return BOOLEAN
    if isinstance(v, int):
        return INT
    if isinstance(v, str):
        return STRING
    raise TypeMismatch(f"unsupported value {v!r}")


def render_value(v) -> str:
    if isinstance(v, bool):
        return "TRUE" if v else "FALSE"
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    return str(v)


# ---------------------------------------------------------------------------
# scalar expressions and conditions


@dataclass(frozen=True)
class Col:
    name: str


@dataclass(frozen=True)
class Const:
    value: object


@dataclass(frozen=True)
class Arith:
    op: str  # + - *
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Cmp:
    op: str  # = <> < <= > >=
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class And:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Or:
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Not:
    child: "Expr"


Expr = Union[Col, Const, Arith, Cmp, And, Or, Not]

TRUE = Const(True)
FALSE = Const(False)

_ARITH = {"+": lambda a, b: a + b, "-": lambda a, b: a - b, "*": lambda a, b: a * b}
_CMP = {
    "=": lambda a, b: a == b,
    "<>": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}
NEGATED_CMP = {"=": "<>", "<>": "=", "<": ">=", ">=": "<", ">": "<=", "<=": ">"}


def conj(*conds: Expr) -> Expr:
    out = None
    for c in conds:
        out = c if out is None else And(out, c)
    return TRUE if out is None else out


def compile_expr(e: Expr, schema: Schema) -> tuple[Callable[[tuple], object], str]:
    """Compile an expression against ``schema`` into (function of tuple, result type)."""
    if isinstance(e, Col):
        i = schema.index(e.name)
        return (lambda t: t[i]), schema.attrs[i][1]
    if isinstance(e, Const):
        v = e.value
        return (lambda t: v), value_type(v)
    if isinstance(e, Arith):
        lf, lt = compile_expr(e.left, schema)
        rf, rt = compile_expr(e.right, schema)
        if lt != INT or rt != INT or e.op not in _ARITH:
            raise TypeMismatch(f"arithmetic {e.op!r} needs INT operands, got {lt} and {rt}")
        op = _ARITH[e.op]
        return (lambda t: op(lf(t), rf(t))), INT
    if isinstance(e, Cmp):
        lf, lt = compile_expr(e.left, schema)
        rf, rt = compile_expr(e.right, schema)
        if lt != rt or lt == BOOLEAN and e.op not in ("=", "<>") or e.op not in _CMP:
            raise TypeMismatch(f"cannot compare {lt} {e.op} {rt}")
        op = _CMP[e.op]
        return (lambda t: op(lf(t), rf(t))), BOOLEAN
    if isinstance(e, (And, Or)):
        lf, lt = compile_expr(e.left, schema)
        rf, rt = compile_expr(e.right, schema)
        if lt != BOOLEAN or rt != BOOLEAN:
            raise TypeMismatch("AND/OR need boolean operands")
        if isinstance(e, And):
            return (lambda t: lf(t) and rf(t)), BOOLEAN
        return (lambda t: lf(t) or rf(t)), BOOLEAN
    if isinstance(e, Not):
        f, ty = compile_expr(e.child, schema)
        if ty != BOOLEAN:
            raise TypeMismatch("NOT needs a boolean operand")
        return (lambda t: not f(t)), BOOLEAN
    raise TypeMismatch(f"not an expression: {e!r}")


def compile_condition(e: Expr, schema: Schema) -> Callable[[tuple], bool]:
    f, ty = compile_expr(e, schema)
    if ty != BOOLEAN:
        raise TypeMismatch(f"condition has type {ty}, expected BOOL")
    return f


def render_expr(e: Expr) -> str:
    """SQL-like rendering; nested binary operations are always parenthesized."""
    if isinstance(e, Col):
        return e.name if _IDENT.fullmatch(e.name) else '"' + e.name.replace('"', '""') + '"'
    if isinstance(e, Const):
        return render_value(e.value)
    if isinstance(e, (Arith, Cmp)):
        return f"{_sub(e.left)} {e.op} {_sub(e.right)}"
    if isinstance(e, And):
        return f"{_sub(e.left)} AND {_sub(e.right)}"
    if isinstance(e, Or):
        return f"{_sub(e.left)} OR {_sub(e.right)}"
    if isinstance(e, Not):
        return f"NOT {_sub(e.child)}"
    raise TypeMismatch(f"not an expression: {e!r}")


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _sub(e: Expr) -> str:
    s = render_expr(e)
    return f"({s})" if isinstance(e, (Arith, Cmp, And, Or, Not)) else s


def expr_columns(e: Expr) -> set[str]:
    if isinstance(e, Col):
        return {e.name}
    if isinstance(e, Const):
        return set()
    if isinstance(e, Not):
        return expr_columns(e.child)
    return expr_columns(e.left) | expr_columns(e.right)


VERSION_SCHEMA = Schema("V", (("V", INT),))


# ---------------------------------------------------------------------------
# annotated relations


def tuple_key(t: tuple) -> tuple:
    return tuple((0, v) if isinstance(v, int) else (1, v) for v in t)


class AnnotatedRelation:
    """A K^v-relation: a finite map from tuples to nonzero normalized annotations."""

    __slots__ = ("schema", "semiring", "rows")

    def __init__(self, schema: Schema, semiring: BaseSemiring, rows: Mapping[tuple, NormalForm] = None):
        self.schema = schema
        self.semiring = semiring
        self.rows = {t: k for t, k in (rows or {}).items() if not k.is_zero()}

    @classmethod
    def empty(cls, schema: Schema, semiring: BaseSemiring) -> "AnnotatedRelation":
        return cls(schema, semiring)

    @classmethod
    def build(cls, schema: Schema, semiring: BaseSemiring, pairs: Iterable[tuple[tuple, NormalForm]]):
        """Sum annotations of repeated tuples."""
        rows: dict[tuple, NormalForm] = {}
        for t, k in pairs:
            rows[t] = rows[t] + k if t in rows else k
        return cls(schema, semiring, rows)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.sorted_items())

    def __contains__(self, t) -> bool:
        return t in self.rows

    def __getitem__(self, t) -> NormalForm:
        return self.rows.get(t) or NormalForm.zero(self.semiring)

    def sorted_items(self) -> list[tuple[tuple, NormalForm]]:
        return sorted(self.rows.items(), key=lambda kv: tuple_key(kv[0]))

    def summands(self) -> Iterable[tuple[tuple, Summand]]:
        for t, k in self.sorted_items():
            for s in k:
                yield t, s

    def num_summands(self) -> int:
        return sum(len(k) for k in self.rows.values())

    def map_rows(self, f: Callable[[tuple, NormalForm], NormalForm], schema: Schema = None):
        return AnnotatedRelation(schema or self.schema, self.semiring, {t: f(t, k) for t, k in self.rows.items()})

    def filter_summands(self, keep: Callable[[tuple, Summand], bool]) -> "AnnotatedRelation":
        return AnnotatedRelation(
            self.schema, self.semiring,
            {t: k.filter(lambda s, t=t: keep(t, s)) for t, k in self.rows.items()},
        )

    def map_hom(self, h) -> "AnnotatedRelation":
        """Apply a lifted homomorphism to every annotation."""
        return AnnotatedRelation(self.schema, h.target, {t: h(k) for t, k in self.rows.items()})

    def renamed(self, name: str) -> "AnnotatedRelation":
        return AnnotatedRelation(self.schema.renamed(name), self.semiring, self.rows)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, AnnotatedRelation)
            and self.schema.attrs == other.schema.attrs
            and self.semiring is other.semiring
            and self.rows == other.rows
        )

    def __repr__(self) -> str:
        return f"<AnnotatedRelation {self.schema.name} {len(self.rows)} rows>"

    def check_admissible(self) -> None:
        """Every summand has one outermost annotation; an id occurs on one tuple and one version."""
        seen: dict[int, tuple] = {}
        for t, s in self.summands():
            a = outer(s)
            prev = seen.setdefault(a.tid, (t, a.time))
            if prev != (t, a.time):
                raise NotAdmissible(f"tuple id {a.tid} occurs on {prev} and {(t, a.time)}")

    # serialization ---------------------------------------------------------
    def to_text(self) -> str:
        lines = [f"{self.schema.render()} [{self.semiring.id}]"]
        for t, k in self.sorted_items():
            lines.append("(" + ", ".join(render_value(v) for v in t) + ") : " + k.render())
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "relation": self.schema.name,
            "semiring": self.semiring.id,
            "attributes": [[a, ty] for a, ty in self.schema.attrs],
            "rows": [
                {"tuple": list(t), "annotation": k.render(), "summands": [NormalForm.of_summand(k.semiring, s).render() for s in k]}
                for t, k in self.sorted_items()
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotatedRelation":
        K = SEMIRINGS[d["semiring"]]
        schema = Schema(d["relation"], tuple(tuple(a) for a in d["attributes"]))
        return cls.build(schema, K, ((tuple(r["tuple"]), parse_annotation(r["annotation"], K)) for r in d["rows"]))


# ---------------------------------------------------------------------------
# operators


def _check_union(R: AnnotatedRelation, S: AnnotatedRelation) -> None:
    if not R.schema.same_attrs(S.schema):
        raise SchemaError(f"schema mismatch: {R.schema.render()} vs {S.schema.render()}")
    if R.semiring is not S.semiring:
        raise TypeMismatch(f"semiring mismatch: {R.semiring} vs {S.semiring}")


def eval_select(cond: Expr, R: AnnotatedRelation) -> AnnotatedRelation:
    f = compile_condition(cond, R.schema)
    return AnnotatedRelation(R.schema, R.semiring, {t: k for t, k in R.rows.items() if f(t)})


def eval_project(exprs: tuple, R: AnnotatedRelation, name: str = None) -> AnnotatedRelation:
    """``exprs`` is a sequence of (expression, output name); colliding outputs are summed."""
    compiled = [compile_expr(e, R.schema) for e, _ in exprs]
    schema = Schema(name or R.schema.name, tuple((n, ty) for (_, n), (_, ty) in zip(exprs, compiled)))
    fns = [f for f, _ in compiled]
    return AnnotatedRelation.build(
        schema, R.semiring, ((tuple(f(t) for f in fns), k) for t, k in R.rows.items())
    )


def eval_join(R: AnnotatedRelation, S: AnnotatedRelation) -> AnnotatedRelation:
    clash = set(R.schema.names) & set(S.schema.names)
    if clash:
        raise SchemaError(f"join operands share attributes {sorted(clash)}")
    if R.semiring is not S.semiring:
        raise TypeMismatch(f"semiring mismatch: {R.semiring} vs {S.semiring}")
    schema = Schema(f"{R.schema.name}_{S.schema.name}", R.schema.attrs + S.schema.attrs)
    return AnnotatedRelation(
        schema, R.semiring,
        {t + u: k * l for t, k in R.rows.items() for u, l in S.rows.items()},
    )


def eval_union(R: AnnotatedRelation, S: AnnotatedRelation) -> AnnotatedRelation:
    _check_union(R, S)
    rows = dict(R.rows)
    for t, k in S.rows.items():
        rows[t] = rows[t] + k if t in rows else k
    return AnnotatedRelation(R.schema, R.semiring, rows)


def coerce_base(k, K: BaseSemiring):
    """Interpret a singleton annotation literal in semiring ``K``."""
    if isinstance(k, Polynomial):
        if K is PROV_POLY:
            return k
        if k.variables():
            raise TypeMismatch(f"annotation {k} has variables but the semiring is {K.id}")
        n = sum(c for _, c in k.terms)
        return n > 0 if K is BOOL else n
    if isinstance(k, bool):
        return k if K is BOOL else K.from_coef(int(k))
    if isinstance(k, int):
        if k < 0:
            raise TypeMismatch("negative annotation")
        return k > 0 if K is BOOL else K.from_coef(k)
    raise TypeMismatch(f"unsupported annotation literal {k!r}")


def eval_singleton(schema: Schema, values: tuple, k, K: BaseSemiring) -> AnnotatedRelation:
    schema.check_tuple(values)
    return AnnotatedRelation(schema, K, {tuple(values): NormalForm.base(K, coerce_base(k, K))})


class IdAllocator:
    """Deterministic fresh tuple ids for inserted tuples.

    Allocations are recorded per (txn, annotation time, tuple).  When built
    with a ``reference`` table, recorded ids are reused, which keeps ids stable
    when the same history is re-executed under a homomorphism that removes
    some tuples.
    """

    def __init__(self, start: int = 1, reference: Mapping = None):
        self.next = start
        self.table: dict[tuple, int] = {}
        self.reference = dict(reference or {})
        if self.reference:
            self.next = max(self.next, max(self.reference.values()) + 1)

    def allocate(self, txn: str, time: int, tuples: list) -> list[int]:
        out = []
        for t in sorted(tuples, key=tuple_key):
            key = (txn, time, t)
            if key in self.table:
                out.append(self.table[key])
                continue
            if key in self.reference:
                tid = self.reference[key]
            else:
                tid = self.next
                self.next += 1
            self.table[key] = tid
            out.append(tid)
        return out


def eval_annot_op(kind: str, txn: str, time: int, R: AnnotatedRelation, ids=None) -> AnnotatedRelation:
    if kind == "C":
        return R.map_rows(lambda t, k: k.map_summands(lambda s: do_commit(txn, time - 1, s)))
    if kind in ("U", "D"):
        return R.map_rows(
            lambda t, k: k.wrap_each(lambda s: VersionAnnotation(kind, txn, time, id_of(s)))
        )
    if kind == "I":
        if not R.rows:
            return R
        if ids is None:
            raise UnboundRelation("insert annotation needs an id allocator")
        order = sorted(R.rows, key=tuple_key)
        tids = ids.allocate(txn, time, order)
        return AnnotatedRelation(
            R.schema, R.semiring,
            {t: R.rows[t].wrap(VersionAnnotation("I", txn, time, tid)) for t, tid in zip(order, tids)},
        )
    raise ValueError(f"unknown annotation kind {kind!r}")


def max_versions(R: AnnotatedRelation) -> dict[int, int]:
    out: dict[int, int] = {}
    for k in R.rows.values():
        for s in k:
            a = outer(s)
            if a.time > out.get(a.tid, -1):
                out[a.tid] = a.time
    return out


def is_max(R: AnnotatedRelation, s: Summand) -> int:
    """0 if R holds a summand with the same id and a strictly greater version."""
    return int(version_of(s) >= max_versions(R).get(id_of(s), -1))


def is_strict_max(R: AnnotatedRelation, s: Summand) -> int:
    """0 if R holds a summand with the same id and a greater or equal version."""
    return int(version_of(s) > max_versions(R).get(id_of(s), -1))


def eval_version_merge(R1: AnnotatedRelation, R2: AnnotatedRelation) -> AnnotatedRelation:
    _check_union(R1, R2)
    m1, m2 = max_versions(R1), max_versions(R2)

    def newest_of_first(t, s):
        a = outer(s)
        return a.time >= m2.get(a.tid, -1)

    def newer_in_second(t, s):
        a = outer(s)
        return a.time > m1.get(a.tid, -1)

    return eval_union(R1.filter_summands(newest_of_first), R2.filter_summands(newer_in_second))


def eval_version_filter(cond: Expr, R: AnnotatedRelation) -> AnnotatedRelation:
    f = compile_condition(cond, VERSION_SCHEMA)
    return R.filter_summands(lambda t, s: f((version_of(s),)))


# ---------------------------------------------------------------------------
# query plans


@dataclass(frozen=True, eq=True)
class BaseRel:
    """A stored relation; ``version`` names a committed version, None the current binding."""
    name: str
    version: int = None


@dataclass(frozen=True)
class Empty:
    schema: Schema


@dataclass(frozen=True)
class Select:
    cond: Expr
    child: "Plan"


@dataclass(frozen=True)
class Project:
    exprs: tuple  # ((expr, name), ...)
    child: "Plan"


@dataclass(frozen=True)
class Join:
    left: "Plan"
    right: "Plan"


@dataclass(frozen=True)
class UnionAll:
    left: "Plan"
    right: "Plan"


@dataclass(frozen=True)
class Singleton:
    schema: Schema
    values: tuple
    annotation: object = 1


@dataclass(frozen=True)
class AnnotOp:
    kind: str
    txn: str
    time: int
    child: "Plan"


@dataclass(frozen=True)
class VersionMerge:
    left: "Plan"
    right: "Plan"


@dataclass(frozen=True)
class VersionFilter:
    cond: Expr
    child: "Plan"


Plan = Union[BaseRel, Empty, Select, Project, Join, UnionAll, Singleton, AnnotOp, VersionMerge, VersionFilter]


def children(p: Plan) -> tuple:
    if isinstance(p, (Select, Project, AnnotOp, VersionFilter)):
        return (p.child,)
    if isinstance(p, (Join, UnionAll, VersionMerge)):
        return (p.left, p.right)
    return ()


def union_all(plans: Iterable[Plan]) -> Plan:
    out = None
    for p in plans:
        out = p if out is None else UnionAll(out, p)
    if out is None:
        raise SchemaError("union of no plans")
    return out


def base_relations(p: Plan) -> list[BaseRel]:
    """BaseRel leaves in left-to-right order (shared subplans visited once)."""
    out, seen = [], set()

    def walk(q):
        if id(q) in seen:
            return
        seen.add(id(q))
        if isinstance(q, BaseRel):
            out.append(q)
        for c in children(q):
            walk(c)

    walk(p)
    return out


def _lookup(db, name: str, version):
    if hasattr(db, "resolve"):
        return db.resolve(name, version)
    for key in ((name, version), name) if version is not None else (name,):
        if key in db:
            return db[key]
    raise UnboundRelation(f"relation {name}" + (f"@{version}" if version is not None else "") + " is not bound")


def eval_plan(plan: Plan, db, ids=None, semiring: BaseSemiring = None) -> AnnotatedRelation:
    """Evaluate bottom-up.

    ``db`` maps relation names or (name, version) pairs to relations, or is
    an object with ``resolve(name, version)``.  ``ids`` allocates tuple ids for
    insert annotations; it defaults to ``db`` itself when that can allocate.
    ``semiring`` is needed only for plans without base relations.
    """
    if ids is None and hasattr(db, "allocate"):
        ids = db
    if semiring is None:
        semiring = getattr(db, "semiring", None)
    memo: dict[int, AnnotatedRelation] = {}

    def K_of():
        if semiring is None:
            raise TypeMismatch("cannot infer the semiring of a plan without base relations")
        return semiring

    def ev(p):
        got = memo.get(id(p))
        if got is not None:
            return got
        if isinstance(p, BaseRel):
            r = _lookup(db, p.name, p.version)
        elif isinstance(p, Empty):
            r = AnnotatedRelation.empty(p.schema, K_of())
        elif isinstance(p, Select):
            r = eval_select(p.cond, ev(p.child))
        elif isinstance(p, Project):
            r = eval_project(p.exprs, ev(p.child))
        elif isinstance(p, Join):
            r = eval_join(ev(p.left), ev(p.right))
        elif isinstance(p, UnionAll):
            r = eval_union(ev(p.left), ev(p.right))
        elif isinstance(p, Singleton):
            r = eval_singleton(p.schema, p.values, p.annotation, K_of())
        elif isinstance(p, AnnotOp):
            r = eval_annot_op(p.kind, p.txn, p.time, ev(p.child), ids)
        elif isinstance(p, VersionMerge):
            r = eval_version_merge(ev(p.left), ev(p.right))
        elif isinstance(p, VersionFilter):
            r = eval_version_filter(p.cond, ev(p.child))
        else:
            raise TypeError(f"not a plan node: {p!r}")
        memo[id(p)] = r
        return r

    return ev(plan)


def plan_schema(plan: Plan, schemas: Mapping[str, Schema]) -> Schema:
    """Output schema of a plan given base relation schemas."""
    if isinstance(plan, BaseRel):
        if plan.name not in schemas:
            raise UnboundRelation(f"relation {plan.name} is not declared")
        return schemas[plan.name]
    if isinstance(plan, Empty):
        return plan.schema
    if isinstance(plan, Singleton):
        return plan.schema
    if isinstance(plan, (Select, AnnotOp, VersionFilter)):
        s = plan_schema(plan.child, schemas)
        if isinstance(plan, Select):
            compile_condition(plan.cond, s)
        if isinstance(plan, VersionFilter):
            compile_condition(plan.cond, VERSION_SCHEMA)
        return s
    if isinstance(plan, Project):
        s = plan_schema(plan.child, schemas)
        return Schema(s.name, tuple((n, compile_expr(e, s)[1]) for e, n in plan.exprs))
    if isinstance(plan, Join):
        l, r = plan_schema(plan.left, schemas), plan_schema(plan.right, schemas)
        clash = set(l.names) & set(r.names)
        if clash:
            raise SchemaError(f"join operands share attributes {sorted(clash)}")
        return Schema(f"{l.name}_{r.name}", l.attrs + r.attrs)
    l, r = plan_schema(plan.left, schemas), plan_schema(plan.right, schemas)
    if not l.same_attrs(r):
        raise SchemaError(f"schema mismatch: {l.render()} vs {r.render()}")
    return l


# ---------------------------------------------------------------------------
# plan printing


def describe(p: Plan) -> str:
    if isinstance(p, BaseRel):
        return f"CommittedAt {p.name}@{p.version}" if p.version is not None else f"Relation {p.name}"
    if isinstance(p, Empty):
        return f"Empty {p.schema.render()}"
    if isinstance(p, Select):
        return f"Select {render_expr(p.cond)}"
    if isinstance(p, Project):
        cols = []
        for e, n in p.exprs:
            s = render_expr(e)
            cols.append(s if isinstance(e, Col) and e.name == n else f"{s} AS {n}")
        return "Project [" + ", ".join(cols) + "]"
    if isinstance(p, Join):
        return "Join"
    if isinstance(p, UnionAll):
        return "Union"
    if isinstance(p, Singleton):
        return "Singleton (" + ", ".join(render_value(v) for v in p.values) + f") : {p.annotation}"
    if isinstance(p, AnnotOp):
        return f"Annotate {p.kind}[{p.txn},{p.time}]"
    if isinstance(p, VersionMerge):
        return "VersionMerge"
    if isinstance(p, VersionFilter):
        return f"VersionFilter {render_expr(p.cond)}"
    raise TypeError(f"not a plan node: {p!r}")


def render_plan(p: Plan, indent: str = "  ") -> str:
    lines = []

    def walk(q, depth):
        lines.append(indent * depth + describe(q))
        for c in children(q):
            walk(c, depth + 1)

    walk(p, 0)
    return "\n".join(lines)
