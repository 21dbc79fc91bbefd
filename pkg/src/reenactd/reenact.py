"""Compile past transactions into reenactment queries.

A reenactment query reads committed relation versions and reproduces both
the data and the annotations a transaction produced.  ``reenact_transaction``
chains one stage per statement and merges the statement's own snapshot into
the chain with a version merge.  ``reenact_transaction_opt`` reads every
relation once, at the version committed just before the transaction
finished, and uses version filters to split what each statement could see
from what was committed later.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

from .history import (
    Delete,
    History,
    Insert,
    Transaction,
    Update,
    insert_reads,
    is_values_insert,
)
from .relalg import (
    AnnotatedRelation,
    AnnotOp,
    BaseRel,
    Cmp,
    Col,
    Const,
    Empty,
    Join,
    Not,
    Plan,
    Project,
    Select,
    UnionAll,
    VersionFilter,
    VersionMerge,
    children,
    eval_plan,
    render_plan,
)


class OptimizationInapplicable(ValueError):
    pass


class UnsupportedOp(ValueError):
    pass


def committed_ref(rel: str, time: int) -> BaseRel:
    """Plan leaf reading the version of ``rel`` committed before ``time``."""
    return BaseRel(rel, time)


@dataclass
class ReenactPlan:
    txn: str
    plans: dict = field(default_factory=dict)  # relation -> plan
    optimized: bool = False

    @property
    def access_profile(self) -> dict:
        out: dict[str, set] = {}
        seen = set()
        stack = list(self.plans.values())
        while stack:
            p = stack.pop()
            if id(p) in seen:
                continue
            seen.add(id(p))
            if isinstance(p, BaseRel) and p.version is not None:
                out.setdefault(p.name, set()).add(p.version)
            stack.extend(children(p))
        return {rel: len(vs) for rel, vs in sorted(out.items())}

    def render(self) -> str:
        parts = []
        for rel, p in self.plans.items():
            parts.append(f"-- {rel}\n{render_plan(p)}")
        profile = ", ".join(f"{r}={n}" for r, n in self.access_profile.items())
        parts.append(f"access profile: {profile or 'none'}")
        return "\n".join(parts) + "\n"

    def evaluate(self, state) -> dict[str, AnnotatedRelation]:
        return {rel: eval_plan(p, state) for rel, p in self.plans.items()}


def access_count(rp: ReenactPlan, rel: str) -> int:
    return rp.access_profile.get(rel, 0)


def _negate(cond):
    return Not(cond)


def _substitute(p: Plan, visible: Mapping[str, Plan]) -> Plan:
    """Bind the current-relation leaves of an insert query to plans."""
    if isinstance(p, BaseRel) and p.version is None:
        return visible[p.name]
    if isinstance(p, Select):
        return Select(p.cond, _substitute(p.child, visible))
    if isinstance(p, Project):
        return Project(p.exprs, _substitute(p.child, visible))
    if isinstance(p, UnionAll):
        return UnionAll(_substitute(p.left, visible), _substitute(p.right, visible))
    if isinstance(p, Join):
        return Join(_substitute(p.left, visible), _substitute(p.right, visible))
    return p


def reenact_update(u, source: Plan, visible: Mapping[str, Plan] = None) -> Plan:
    """The relation after statement ``u``, given a plan for what ``u`` reads.

    ``visible`` binds the relations an insert query reads; by default each is
    read as committed at the statement's time.
    """
    if isinstance(u, Update):
        return UnionAll(
            AnnotOp("U", u.txn, u.time + 1, Project(u.assignments, Select(u.cond, source))),
            Select(_negate(u.cond), source),
        )
    if isinstance(u, Delete):
        return UnionAll(
            AnnotOp("D", u.txn, u.time + 1, Select(u.cond, source)),
            Select(_negate(u.cond), source),
        )
    if isinstance(u, Insert):
        binding = {rel: committed_ref(rel, u.time) for rel in insert_reads(u)}
        binding.update(visible or {})
        return UnionAll(source, AnnotOp("I", u.txn, u.time + 1, _substitute(u.query, binding)))
    raise UnsupportedOp(f"cannot reenact {type(u).__name__} on its own")


def reenact_transaction(T: Transaction | str, H: History, merge: Callable[[Plan, Plan], Plan] = VersionMerge) -> ReenactPlan:
    """One plan per modified relation: the statements chained in order.

    Each statement reads the chain so far merged with the version committed
    at the statement's time.  ``merge`` builds that merge node; it exists so
    tests can swap in a broken operator.
    """
    T = H.txn(T) if isinstance(T, str) else T
    current: dict[str, Plan] = {}

    def reads(rel: str, time: int) -> Plan:
        base = committed_ref(rel, time)
        return base if rel not in current else merge(current[rel], base)

    for op in T.writes:
        source = reads(op.rel, op.time)
        visible = None
        if isinstance(op, Insert):
            visible = {rel: source if rel == op.rel else reads(rel, op.time) for rel in insert_reads(op)}
        current[op.rel] = reenact_update(op, source, visible)
    plans = {rel: AnnotOp("C", T.id, T.finish + 1, p) for rel, p in current.items()}
    return ReenactPlan(T.id, plans)


def reenact_transaction_opt(T: Transaction | str, H: History) -> ReenactPlan:
    """Single-read form; only for transactions whose inserts are VALUES lists."""
    T = H.txn(T) if isinstance(T, str) else T
    for op in T.writes:
        if isinstance(op, Insert) and not is_values_insert(op):
            raise OptimizationInapplicable(
                f"{T.id} inserts the result of a query at {op.time}; only VALUES inserts can be reenacted this way"
            )
    current: dict[str, Plan] = {}
    for op in T.writes:
        cur = current.get(op.rel) or committed_ref(op.rel, T.finish - 1)
        if isinstance(op, Insert):
            current[op.rel] = UnionAll(cur, AnnotOp("I", T.id, op.time + 1, op.query))
            continue
        seen = VersionFilter(Cmp("<=", Col("V"), Const(op.time)), cur)
        later = VersionFilter(Cmp(">", Col("V"), Const(op.time)), cur)
        if isinstance(op, Update):
            changed = AnnotOp("U", T.id, op.time + 1, Project(op.assignments, Select(op.cond, seen)))
        else:
            changed = AnnotOp("D", T.id, op.time + 1, Select(op.cond, seen))
        current[op.rel] = UnionAll(UnionAll(changed, Select(_negate(op.cond), seen)), later)
    plans = {rel: AnnotOp("C", T.id, T.finish + 1, p) for rel, p in current.items()}
    return ReenactPlan(T.id, plans, optimized=True)


def _replace_leaves(p: Plan, f: Callable[[BaseRel], Plan], memo: dict) -> Plan:
    got = memo.get(id(p))
    if got is not None:
        return got
    if isinstance(p, BaseRel) and p.version is not None:
        out = f(p)
    elif isinstance(p, (Select, VersionFilter)):
        out = type(p)(p.cond, _replace_leaves(p.child, f, memo))
    elif isinstance(p, Project):
        out = Project(p.exprs, _replace_leaves(p.child, f, memo))
    elif isinstance(p, AnnotOp):
        out = AnnotOp(p.kind, p.txn, p.time, _replace_leaves(p.child, f, memo))
    elif isinstance(p, (UnionAll, Join, VersionMerge)):
        out = type(p)(_replace_leaves(p.left, f, memo), _replace_leaves(p.right, f, memo))
    else:
        out = p
    memo[id(p)] = out
    return out


def reenact_history(H: History, time: int) -> ReenactPlan:
    """Plans reading no stored version: committed states rebuilt from every
    transaction finished before ``time``, merged in commit order."""
    by_rel: dict[str, list[Transaction]] = {rel: [] for rel in H.schemas}
    for T in H.commit_order():
        for rel in T.relations():
            by_rel[rel].append(T)
    compiled = {T.id: reenact_transaction(T, H) for T in H.transactions}
    folds: dict[tuple, Plan] = {}
    memo: dict = {}

    def fold(rel: str, t: int) -> Plan:
        key = (rel, t)
        if key in folds:
            return folds[key]
        out = Empty(H.schemas[rel])
        first = True
        for T in by_rel[rel]:
            if T.finish >= t:
                break
            step = _replace_leaves(compiled[T.id].plans[rel], lambda leaf: fold(leaf.name, leaf.version), memo)
            out = step if first else VersionMerge(out, step)
            first = False
        folds[key] = out
        return out

    return ReenactPlan(f"history@{time}", {rel: fold(rel, time) for rel in H.schemas})


def writes_of(T: Transaction, rel: str) -> list:
    return [op for op in T.writes if op.rel == rel]


def update_stage_count(T: Transaction, rel: str) -> int:
    """Statements of T that modify ``rel`` (each is one stage of its chain)."""
    return len(writes_of(T, rel))
