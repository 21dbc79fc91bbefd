"""Direct execution of RC-SI histories over annotated relations.

This is the reference semantics.  Every statement of a transaction reads the
versions committed before it plus the transaction's own earlier changes, and
produces new tuple versions wrapped in I/U/D annotations.  A commit wraps the
transaction's own versions in C annotations, which makes them visible to
statements of other transactions that run later.

``execute_history`` sweeps a history in time order and memoizes, per
relation, the state seen inside each transaction and the committed state at
each point in time.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Union

from .mvsemiring import (
    PROV_POLY,
    BaseSemiring,
    NormalForm,
    Summand,
    VersionAnnotation,
    contains_kind,
    do_commit,
    id_of,
    outer,
)
from .relalg import (
    AnnotatedRelation,
    BaseRel,
    Col,
    Expr,
    IdAllocator,
    Join,
    Plan,
    Project,
    Schema,
    Select,
    Singleton,
    TypeMismatch,
    UnionAll,
    coerce_base,
    compile_condition,
    compile_expr,
    eval_annot_op,
    eval_plan,
    plan_schema,
    tuple_key,
)


class IllFormedHistory(ValueError):
    pass


class LockViolation(IllFormedHistory):
    pass


class UnknownRelation(KeyError):
    pass


class UnknownTransaction(KeyError):
    pass


# ---------------------------------------------------------------------------
# operations


@dataclass(frozen=True)
class Update:
    rel: str
    cond: Expr
    assignments: tuple  # ((expr, attr), ...) covering every attribute in schema order
    txn: str
    time: int


@dataclass(frozen=True)
class Insert:
    rel: str
    query: Plan
    txn: str
    time: int


@dataclass(frozen=True)
class Delete:
    rel: str
    cond: Expr
    txn: str
    time: int


@dataclass(frozen=True)
class Commit:
    txn: str
    time: int


UpdateOp = Union[Update, Insert, Delete, Commit]
WRITE_KINDS = {Update: "U", Insert: "I", Delete: "D"}


def op_kind(op: UpdateOp) -> str:
    return WRITE_KINDS.get(type(op), "C")


def identity_assignments(schema: Schema, changes: Mapping[str, Expr] = None) -> tuple:
    """Full projection list: listed attributes get their expression, the rest map to themselves."""
    changes = dict(changes or {})
    for a in changes:
        schema.index(a)
    return tuple((changes.get(a, Col(a)), a) for a in schema.names)


def is_values_insert(op: UpdateOp) -> bool:
    """Insert whose query is a union of singletons (reads no relation)."""
    if not isinstance(op, Insert):
        return False
    stack = [op.query]
    while stack:
        p = stack.pop()
        if isinstance(p, UnionAll):
            stack += [p.left, p.right]
        elif not isinstance(p, Singleton):
            return False
    return True


def insert_reads(op: Insert) -> set[str]:
    out = set()
    stack = [op.query]
    while stack:
        p = stack.pop()
        if isinstance(p, BaseRel):
            out.add(p.name)
        for attr in ("child", "left", "right"):
            if hasattr(p, attr):
                stack.append(getattr(p, attr))
    return out


def _check_insert_query(p: Plan) -> None:
    if isinstance(p, BaseRel):
        if p.version is not None:
            raise IllFormedHistory("insert queries read current relations, not versions")
        return
    if isinstance(p, (Select, Project)):
        _check_insert_query(p.child)
    elif isinstance(p, (UnionAll, Join)):
        _check_insert_query(p.left)
        _check_insert_query(p.right)
    elif not isinstance(p, Singleton):
        raise IllFormedHistory(f"operator {type(p).__name__} is not allowed in an insert query")


def _map_query(p: Plan, f) -> Plan:
    if isinstance(p, Singleton):
        return replace(p, annotation=f(p.annotation))
    if isinstance(p, (Select, Project)):
        return replace(p, child=_map_query(p.child, f))
    if isinstance(p, (UnionAll, Join)):
        return replace(p, left=_map_query(p.left, f), right=_map_query(p.right, f))
    return p


# ---------------------------------------------------------------------------
# transactions and histories


@dataclass(frozen=True)
class Transaction:
    id: str
    ops: tuple

    @property
    def start(self) -> int:
        return self.ops[0].time

    @property
    def finish(self) -> int:
        return self.ops[-1].time

    @property
    def writes(self) -> tuple:
        return tuple(op for op in self.ops if not isinstance(op, Commit))

    def relations(self) -> list[str]:
        """Modified relations in order of first modification."""
        out = []
        for op in self.writes:
            if op.rel not in out:
                out.append(op.rel)
        return out


@dataclass(frozen=True)
class History:
    schemas: Mapping[str, Schema]
    transactions: tuple
    semiring: BaseSemiring = PROV_POLY
    annotate: str = "one"  # how the log annotates VALUES rows: "one" or "variables"

    def __post_init__(self):
        object.__setattr__(self, "schemas", dict(self.schemas))
        object.__setattr__(self, "transactions", tuple(self.transactions))
        self.validate()

    def validate(self) -> None:
        seen_times: dict[int, str] = {}
        seen_ids = set()
        for T in self.transactions:
            if T.id in seen_ids:
                raise IllFormedHistory(f"transaction {T.id} appears twice")
            seen_ids.add(T.id)
            if not T.ops or not isinstance(T.ops[-1], Commit):
                raise IllFormedHistory(f"transaction {T.id} does not end with a commit")
            prev = None
            for op in T.ops:
                if op.txn != T.id:
                    raise IllFormedHistory(f"operation at {op.time} is tagged {op.txn}, not {T.id}")
                if isinstance(op, Commit) and op is not T.ops[-1]:
                    raise IllFormedHistory(f"transaction {T.id} has an operation after its commit")
                if op.time < 1:
                    raise IllFormedHistory(f"time {op.time} must be positive")
                if prev is not None and op.time <= prev:
                    raise IllFormedHistory(f"operations of {T.id} are not in increasing time order")
                prev = op.time
                if op.time in seen_times:
                    raise IllFormedHistory(f"two operations at time {op.time}")
                seen_times[op.time] = T.id
                self._check_op(op)

    def _check_op(self, op: UpdateOp) -> None:
        if isinstance(op, Commit):
            return
        if op.rel not in self.schemas:
            raise UnknownRelation(op.rel)
        schema = self.schemas[op.rel]
        if isinstance(op, (Update, Delete)):
            compile_condition(op.cond, schema)
        if isinstance(op, Update):
            if tuple(n for _, n in op.assignments) != schema.names:
                raise IllFormedHistory(f"update at {op.time} must assign every attribute of {op.rel} in order")
            for e, n in op.assignments:
                if compile_expr(e, schema)[1] != schema.type_of(n):
                    raise TypeMismatch(f"assignment to {n} has the wrong type")
        if isinstance(op, Insert):
            _check_insert_query(op.query)
            for leaf in _singletons(op.query):
                coerce_base(leaf.annotation, self.semiring)
            out = plan_schema(op.query, self.schemas)
            if out.types != schema.types:
                raise TypeMismatch(f"insert at {op.time} produces {out.render()}, expected {schema.render()}")

    # lookups ----------------------------------------------------------------
    def txn(self, tid: str) -> Transaction:
        for T in self.transactions:
            if T.id == tid:
                return T
        raise UnknownTransaction(tid)

    def ops(self) -> list[UpdateOp]:
        return sorted((op for T in self.transactions for op in T.ops), key=lambda op: op.time)

    def commit_order(self) -> list[Transaction]:
        return sorted(self.transactions, key=lambda T: T.finish)

    @property
    def horizon(self) -> int:
        """First time at which every transaction's commit is visible."""
        return max((T.finish for T in self.transactions), default=0) + 1

    def schema(self, rel: str) -> Schema:
        if rel not in self.schemas:
            raise UnknownRelation(rel)
        return self.schemas[rel]

    # derived histories ------------------------------------------------------
    def map(self, h) -> "History":
        """The same history with every VALUES annotation sent through base homomorphism ``h``."""
        def f(k):
            return h.base_map(coerce_base(k, h.source))

        def op_map(op):
            return replace(op, query=_map_query(op.query, f)) if isinstance(op, Insert) else op

        txns = [Transaction(T.id, tuple(op_map(op) for op in T.ops)) for T in self.transactions]
        return History(self.schemas, txns, h.target, self.annotate)

    def with_transactions(self, txns: Iterable[Transaction]) -> "History":
        return History(self.schemas, tuple(txns), self.semiring, self.annotate)

    def with_semiring(self, K: BaseSemiring) -> "History":
        return History(self.schemas, self.transactions, K, self.annotate)


def _singletons(p: Plan):
    if isinstance(p, Singleton):
        yield p
    for attr in ("child", "left", "right"):
        if hasattr(p, attr):
            yield from _singletons(getattr(p, attr))


# ---------------------------------------------------------------------------
# single operations


def apply_update(u: Update, R: AnnotatedRelation) -> AnnotatedRelation:
    """Matching tuples are re-projected; each of their summands gets U[T,v+1,id]."""
    return _rewrite(R, u.cond, "U", u.txn, u.time, u.assignments)


def apply_delete(u: Delete, R: AnnotatedRelation) -> AnnotatedRelation:
    """Matching summands get D[T,v+1,id] and stay on their tuple as a tombstone."""
    return _rewrite(R, u.cond, "D", u.txn, u.time, None)


def _rewrite(R, cond, kind, txn, time, assignments) -> AnnotatedRelation:
    theta = compile_condition(cond, R.schema)
    if assignments is not None:
        fns = [compile_expr(e, R.schema)[0] for e, _ in assignments]
    pairs = []
    for t, k in R.rows.items():
        if not theta(t):
            pairs.append((t, k))
            continue
        new_t = tuple(f(t) for f in fns) if assignments is not None else t
        pairs.append((new_t, k.wrap_each(lambda s: VersionAnnotation(kind, txn, time + 1, id_of(s)))))
    return AnnotatedRelation.build(R.schema, R.semiring, pairs)


def apply_insert(u: Insert, R: AnnotatedRelation, db: Mapping[str, AnnotatedRelation], ids) -> AnnotatedRelation:
    """Evaluate the query over ``db`` and add every result tuple with I[T,v+1,fresh id]."""
    result = eval_plan(u.query, db, ids=None, semiring=R.semiring)
    new = eval_annot_op("I", u.txn, u.time + 1, result, ids)
    return AnnotatedRelation.build(R.schema, R.semiring, list(R.rows.items()) + list(new.rows.items()))


def apply_commit(txn: str, time: int, R: AnnotatedRelation) -> AnnotatedRelation:
    """Wrap the transaction's own versions in C[T,v+1,id]."""
    return R.map_rows(lambda t, k: k.map_summands(lambda s: do_commit(txn, time, s)))


# ---------------------------------------------------------------------------
# summand validity


def valid_in(txn: str, s: Summand) -> bool:
    """Own, uncommitted version: the outermost layer is an I/U/D of ``txn``."""
    a = outer(s)
    return a.kind != "C" and a.txn == txn


def is_live(s: Summand) -> bool:
    """A version is live unless a delete occurs anywhere in its derivation."""
    return not contains_kind(s, "D")


def live_multiplicity(k: NormalForm) -> int:
    """Number of live copies a NAT annotation stands for."""
    return sum(int(s.coef) for s in k if is_live(s))


# ---------------------------------------------------------------------------
# execution


@dataclass
class _Writes:
    """Pre-images overwritten by one transaction on one relation: (time, factor sets)."""

    times: list = field(default_factory=list)
    sets: list = field(default_factory=list)

    def add(self, time: int, factors: frozenset) -> None:
        self.times.append(time)
        self.sets.append(factors)

    def before(self, time: int) -> set:
        out = set()
        for t, s in zip(self.times, self.sets):
            if t < time:
                out |= s
        return out

    def all(self) -> set:
        out = set()
        for s in self.sets:
            out |= s
        return out


class HistoryState:
    """Every relation version induced by a history.

    ``relation_in_txn(R, T, v)``: R as seen inside T just before time v.
    ``visible_to_update(R, T, v)``: the versions a statement of T at v reads.
    ``committed_at(R, v)``: versions committed by transactions finished before v.
    """

    def __init__(self, history: History, ids: Mapping = None):
        self.history = history
        self.semiring = history.semiring
        self.schemas = history.schemas
        self.allocator = IdAllocator(reference=ids)
        self._extra_ids: dict = {}
        # (rel, txn) -> sorted event times and relation values
        self._events: dict[tuple, tuple[list, list]] = {}
        self._writes: dict[tuple, _Writes] = {}
        self._commit_points: list[int] = []
        self._committed: dict[str, list] = {r: [] for r in history.schemas}
        self._visible: dict[tuple, AnnotatedRelation] = {}
        self._write_log: dict[int, list] = {}
        self._run()

    # sweep ------------------------------------------------------------------
    def _empty(self, rel: str) -> AnnotatedRelation:
        return AnnotatedRelation.empty(self.schemas[rel], self.semiring)

    def _record(self, rel: str, txn: str, time: int, value: AnnotatedRelation) -> None:
        times, values = self._events.setdefault((rel, txn), ([], []))
        times.append(time)
        values.append(value)

    def _run(self) -> None:
        H = self.history
        txn_of = {T.id: T for T in H.transactions}
        for op in H.ops():
            T = txn_of[op.txn]
            v = op.time
            if v == T.start:
                for rel in self.schemas:
                    self._record(rel, T.id, v, self.committed_at(rel, v))
            if isinstance(op, Commit):
                for rel in self.schemas:
                    if (rel, T.id) in self._writes:
                        self._record(rel, T.id, v + 1, apply_commit(T.id, v, self.relation_in_txn(rel, T.id, v)))
                self._publish(T)
                continue
            visible = self.visible_to_update(op.rel, T.id, v)
            if isinstance(op, Insert):
                db = {r: self.visible_to_update(r, T.id, v) for r in insert_reads(op)}
                new = apply_insert(op, visible, db, self.allocator)
                pre = frozenset()
            else:
                theta = compile_condition(op.cond, visible.schema)
                matched = [(t, s) for t, k in visible.rows.items() if theta(t) for s in k]
                pre = frozenset(s.factors for _, s in matched)
                for t, s in matched:
                    self._note_write(id_of(s), T, v)
                new = apply_update(op, visible) if isinstance(op, Update) else apply_delete(op, visible)
            self._writes.setdefault((op.rel, T.id), _Writes()).add(v, pre)
            self._record(op.rel, T.id, v + 1, new)

    def _note_write(self, tid: int, T: Transaction, time: int) -> None:
        for other, other_time, other_finish in self._write_log.get(tid, []):
            if other != T.id and other_time < time < other_finish:
                err = LockViolation(
                    f"{T.id} writes tuple id {tid} at {time} while {other} holds it until {other_finish}"
                )
                err.txn, err.time, err.holder, err.holder_finish = T.id, time, other, other_finish
                raise err
        self._write_log.setdefault(tid, []).append((T.id, time, T.finish))

    def _publish(self, T: Transaction) -> None:
        """Recompute committed versions for the point right after T's commit."""
        point = T.finish + 1
        finished = [U for U in self.history.transactions if U.finish < point]
        for rel in self.schemas:
            overwritten: dict[str, set] = {
                U.id: self._writes[(rel, U.id)].all() for U in finished if (rel, U.id) in self._writes
            }
            pairs = []
            for U in finished:
                if (rel, U.id) not in self._writes:
                    continue
                state = self.relation_in_txn(rel, U.id, U.finish + 1)
                for t, k in state.rows.items():
                    keep = k.filter(lambda s: self._valid_at(U.id, s, overwritten))
                    if not keep.is_zero():
                        pairs.append((t, keep))
            self._committed[rel].append(AnnotatedRelation.build(self.schemas[rel], self.semiring, pairs))
        self._commit_points.append(point)

    @staticmethod
    def _valid_at(txn: str, s: Summand, overwritten: Mapping[str, set]) -> bool:
        a = outer(s)
        if a.kind != "C" or a.txn != txn:
            return False
        return not any(s.factors in pre for other, pre in overwritten.items() if other != txn)

    # queries ----------------------------------------------------------------
    def _check(self, rel: str, txn: str = None) -> None:
        if rel not in self.schemas:
            raise UnknownRelation(rel)
        if txn is not None:
            self.history.txn(txn)

    def committed_at(self, rel: str, time: int) -> AnnotatedRelation:
        self._check(rel)
        i = bisect.bisect_right(self._commit_points, time) - 1
        return self._committed[rel][i] if i >= 0 else self._empty(rel)

    def relation_in_txn(self, rel: str, txn: str, time: int) -> AnnotatedRelation:
        self._check(rel, txn)
        times, values = self._events.get((rel, txn), ([], []))
        i = bisect.bisect_right(times, time) - 1
        return values[i] if i >= 0 else self._empty(rel)

    def updated(self, rel: str, txn: str, s: Summand, time: int) -> bool:
        """Whether a statement of ``txn`` before ``time`` overwrote version ``s``."""
        w = self._writes.get((rel, txn))
        return bool(w) and s.factors in w.before(time)

    def visible_to_update(self, rel: str, txn: str, time: int) -> AnnotatedRelation:
        self._check(rel, txn)
        key = (rel, txn, time)
        got = self._visible.get(key)
        if got is not None:
            return got
        w = self._writes.get((rel, txn))
        done = w.before(time) if w else set()
        committed = self.committed_at(rel, time).filter_summands(lambda t, s: s.factors not in done)
        own = self.relation_in_txn(rel, txn, time).filter_summands(lambda t, s: valid_in(txn, s))
        pairs = list(committed.rows.items()) + list(own.rows.items())
        got = AnnotatedRelation.build(self.schemas[rel], self.semiring, pairs)
        self._visible[key] = got
        return got

    def valid_at(self, rel: str, txn: str, s: Summand, time: int) -> bool:
        """Committed by ``txn`` and not overwritten by another transaction finished before ``time``."""
        finished = [U for U in self.history.transactions if U.finish < time]
        overwritten = {U.id: self._writes[(rel, U.id)].all() for U in finished if (rel, U.id) in self._writes}
        return self._valid_at(txn, s, overwritten)

    def database_at(self, time: int) -> dict[str, AnnotatedRelation]:
        return {rel: self.committed_at(rel, time) for rel in self.schemas}

    def database_in_txn(self, txn: str, time: int) -> dict[str, AnnotatedRelation]:
        return {rel: self.relation_in_txn(rel, txn, time) for rel in self.schemas}

    def map(self, h) -> "MappedState":
        return MappedState(self, h)

    # binding protocol for plan evaluation -------------------------------------
    @property
    def id_table(self) -> dict:
        return dict(self.allocator.table)

    def resolve(self, name: str, version) -> AnnotatedRelation:
        if version is None:
            raise UnknownRelation(f"{name} needs a version to be read from a history")
        return self.committed_at(name, version)

    def allocate(self, txn: str, time: int, tuples: list) -> list[int]:
        """Ids the history gave to these inserted tuples; unknown ones get fresh ids."""
        out = []
        top = max(self.allocator.table.values(), default=0)
        for t in sorted(tuples, key=tuple_key):
            key = (txn, time, t)
            if key in self.allocator.table:
                out.append(self.allocator.table[key])
            else:
                if key not in self._extra_ids:
                    self._extra_ids[key] = top + 1 + len(self._extra_ids)
                out.append(self._extra_ids[key])
        return out

    def dump(self, time: int, txn: str = None) -> str:
        parts = []
        for rel in self.schemas:
            r = self.relation_in_txn(rel, txn, time) if txn else self.committed_at(rel, time)
            parts.append(r.to_text())
        return "\n".join(parts)


class MappedState:
    """A HistoryState viewed through a lifted homomorphism."""

    def __init__(self, state: HistoryState, h):
        self.state = state
        self.h = h
        self.semiring = h.target
        self.schemas = state.schemas

    def committed_at(self, rel, time):
        return self.state.committed_at(rel, time).map_hom(self.h)

    def relation_in_txn(self, rel, txn, time):
        return self.state.relation_in_txn(rel, txn, time).map_hom(self.h)

    def visible_to_update(self, rel, txn, time):
        return self.state.visible_to_update(rel, txn, time).map_hom(self.h)


def execute_history(history: History, ids: Mapping = None) -> HistoryState:
    """Run a history.  ``ids`` optionally fixes tuple ids from an earlier run."""
    return HistoryState(history, ids)


def relation_in_txn(state: HistoryState, rel: str, txn: str, time: int) -> AnnotatedRelation:
    return state.relation_in_txn(rel, txn, time)


def visible_to_update(state: HistoryState, rel: str, txn: str, time: int) -> AnnotatedRelation:
    return state.visible_to_update(rel, txn, time)


def committed_at(state: HistoryState, rel: str, time: int) -> AnnotatedRelation:
    return state.committed_at(rel, time)


def serial_fold(history: History) -> dict[str, AnnotatedRelation]:
    """Apply the operations of a serial history one after another.

    Only meaningful when no two transactions overlap; used to cross-check the
    executor on serial histories.
    """
    txns = history.commit_order()
    for a, b in zip(txns, txns[1:]):
        if b.start < a.finish:
            raise IllFormedHistory("history is not serial")
    db = {rel: AnnotatedRelation.empty(s, history.semiring) for rel, s in history.schemas.items()}
    ids = IdAllocator()
    for op in history.ops():
        if isinstance(op, Commit):
            db = {rel: apply_commit(op.txn, op.time, r) for rel, r in db.items()}
        elif isinstance(op, Update):
            db[op.rel] = apply_update(op, db[op.rel])
        elif isinstance(op, Delete):
            db[op.rel] = apply_delete(op, db[op.rel])
        else:
            db[op.rel] = apply_insert(op, db[op.rel], db, ids)
    return db
