"""Provenance of one transaction, restricted and encoded as a flat table.

``restrict_to_transaction`` keeps the tuples a transaction touched and cuts
each derivation down to that transaction's layers.  Whatever the transaction
read is replaced by a placeholder variable ``t<id>@<version>`` naming the
tuple version it read.  ``encode_relational`` turns a restricted relation
into rows of (output tuple, input tuple, one flag per statement).
"""
from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass

from .history import Commit, HistoryState, Transaction, op_kind
from .mvsemiring import PROV_POLY, Summand, Var, Versioned, outer
from .relalg import (
    BOOLEAN,
    And,
    AnnotatedRelation,
    Arith,
    Cmp,
    Col,
    Const,
    Not,
    Or,
    Schema,
    compile_condition,
    tuple_key,
)

_PLACEHOLDER = re.compile(r"^t(\d+)@(\d+)$")


def placeholder(tid: int, time: int) -> str:
    return f"t{tid}@{time}"


def _chain(s: Summand) -> tuple[list, tuple]:
    """Peel single-atom version layers: (annotations outside in, remaining factors)."""
    anns = []
    factors = s.factors
    while len(factors) == 1 and isinstance(factors[0], Versioned):
        anns.append(factors[0].ann)
        factors = factors[0].inner
    return anns, factors


def _restrict_summand(s: Summand, txn: str, K) -> Summand | None:
    anns, rest = _chain(s)
    start = next((i for i, a in enumerate(anns) if a.txn == txn), None)
    if start is None:
        return None
    end = start
    while end < len(anns) and anns[end].txn == txn:
        end += 1
    coef = s.coef
    if end < len(anns):
        below = anns[end]
        if K is PROV_POLY:
            inner = (Var(placeholder(below.tid, below.time)),)
        else:
            inner = ()
    else:
        inner = tuple(
            Var(placeholder(a.ann.tid, a.ann.time)) if isinstance(a, Versioned) and K is PROV_POLY else a
            for a in rest
            if not (isinstance(a, Versioned) and K is not PROV_POLY)
        )
        inner = tuple(sorted(inner, key=lambda a: a.key))
    for a in reversed(anns[start:end]):
        inner = (Versioned(a, inner),)
    return Summand(inner, coef)


def restrict_to_transaction(R: AnnotatedRelation, txn: str) -> AnnotatedRelation:
    """Tuples with a version created by ``txn``, derivations cut to its layers."""
    K = R.semiring
    pairs = []
    for t, k in R.rows.items():
        kept = [r for r in (_restrict_summand(s, txn, K) for s in k) if r is not None]
        if kept:
            pairs.append((t, k.from_summands(K, kept)))
    return AnnotatedRelation.build(R.schema, K, pairs)


@dataclass
class ProvenanceTable:
    relation: str
    txn: str
    columns: list  # [(name, type)]
    rows: list  # list of tuples aligned with columns

    @property
    def names(self) -> list:
        return [n for n, _ in self.columns]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.names)
        for row in self.rows:
            w.writerow([_csv_value(v) for v in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "relation": self.relation,
            "transaction": self.txn,
            "columns": [{"name": n, "type": t} for n, t in self.columns],
            "rows": [dict(zip(self.names, row)) for row in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def __len__(self) -> int:
        return len(self.rows)


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "T" if v else "F"
    return str(v)


def flag_columns(T: Transaction) -> list[tuple[str, int]]:
    """(column name, annotation time) per non-commit statement of T, in order."""
    out = []
    for i, op in enumerate((op for op in T.ops if not isinstance(op, Commit)), start=1):
        out.append((f"{op_kind(op)}{i}", op.time + 1))
    return out


def encode_relational(R: AnnotatedRelation, txn: str, state: HistoryState) -> ProvenanceTable:
    """One row per (tuple, summand) of a relation restricted to ``txn``.

    The P(...) columns hold the tuple version the summand was derived from,
    looked up among the committed versions of the same relation; they are
    empty for tuples the transaction inserted.  A summand that reads several
    tuple versions gets one row per version, and a ``Group`` column then
    numbers the summands.
    """
    T = state.history.txn(txn)
    schema = R.schema
    flags = flag_columns(T)
    by_time = {time: i for i, (_, time) in enumerate(flags)}
    rows = []
    grouped = False
    for group, (t, s) in enumerate(R.summands(), start=1):
        anns, rest = _chain(s)
        on = [False] * len(flags)
        for a in anns:
            if a.txn == txn and a.kind != "C" and a.time in by_time:
                on[by_time[a.time]] = True
        sources = [a.name for a in rest if isinstance(a, Var) and _PLACEHOLDER.match(a.name)]
        inputs = [_lookup_input(state, schema.name, name) for name in sources] or [None]
        if len(inputs) > 1:
            grouped = True
        for inp in inputs:
            values = inp if inp is not None else (None,) * len(schema.attrs)
            rows.append((group, tuple(t) + tuple(values) + tuple(on)))
    columns = list(schema.attrs)
    columns += [(f"P({schema.name},{a})", ty) for a, ty in schema.attrs]
    columns += [(name, BOOLEAN) for name, _ in flags]
    if grouped:
        columns = [("Group", "INT")] + columns
        out = [(g,) + row for g, row in rows]
    else:
        out = [row for _, row in rows]
    return ProvenanceTable(schema.name, txn, columns, out)


def _lookup_input(state: HistoryState, rel: str, name: str):
    m = _PLACEHOLDER.match(name)
    tid, time = int(m.group(1)), int(m.group(2))
    committed = state.committed_at(rel, time)
    for t, k in committed.sorted_items():
        for s in k:
            a = outer(s)
            if a.tid == tid and a.time == time:
                return t
    return None


def transaction_provenance(state: HistoryState, rel: str, txn: str) -> ProvenanceTable:
    """Provenance table of ``rel`` right after ``txn`` committed."""
    T = state.history.txn(txn)
    R = state.relation_in_txn(rel, txn, T.finish + 1)
    return encode_relational(restrict_to_transaction(R, txn), txn, state)


def filter_provenance(p: ProvenanceTable, cond) -> ProvenanceTable:
    """Keep rows satisfying ``cond``; comparisons involving an empty value are false."""
    schema = Schema(p.relation, tuple(p.columns))
    compile_condition(cond, schema)  # type check
    index = {n: i for i, n in enumerate(p.names)}
    rows = [row for row in p.rows if _eval(cond, row, index) is True]
    return ProvenanceTable(p.relation, p.txn, p.columns, rows)


_OPS = {
    "+": lambda a, b: a + b, "-": lambda a, b: a - b, "*": lambda a, b: a * b,
    "=": lambda a, b: a == b, "<>": lambda a, b: a != b, "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b, ">": lambda a, b: a > b, ">=": lambda a, b: a >= b,
}


def _eval(e, row, index):
    if isinstance(e, Col):
        return row[index[e.name]]
    if isinstance(e, Const):
        return e.value
    if isinstance(e, (Arith, Cmp)):
        a, b = _eval(e.left, row, index), _eval(e.right, row, index)
        if a is None or b is None:
            return None if isinstance(e, Arith) else False
        return _OPS[e.op](a, b)
    if isinstance(e, And):
        return _eval(e.left, row, index) is True and _eval(e.right, row, index) is True
    if isinstance(e, Or):
        return _eval(e.left, row, index) is True or _eval(e.right, row, index) is True
    if isinstance(e, Not):
        return _eval(e.child, row, index) is not True
    raise TypeError(f"not an expression: {e!r}")


def affected_tuples(R: AnnotatedRelation, txn: str) -> list[tuple]:
    """Tuples with at least one version created by ``txn``, in canonical order."""
    return sorted(restrict_to_transaction(R, txn).rows, key=tuple_key)
