"""Differential testing of the executor and the reenactment compiler.

The fuzzer generates small RC-SI histories that respect write locks, then
checks them four ways:

* theorem1: every transaction's reenactment query reproduces the direct
  semantics exactly (and the single-read form agrees where it applies);
* homs: lifted homomorphisms commute with execution, version merge and
  version filter;
* lemma4: the versions a transaction overwrote are still committed just
  before it commits;
* bag: live tuple counts agree with a plain multiset interpreter that shares
  no code with the executor.

Failures are shrunk by deleting statements and then whole transactions.
"""
from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable

from .auditlog import serialize_log
from .history import (
    Commit,
    Delete,
    History,
    IllFormedHistory,
    Insert,
    LockViolation,
    Transaction,
    Update,
    execute_history,
    identity_assignments,
    is_live,
    is_values_insert,
    live_multiplicity,
)
from .mvsemiring import BOOL, NAT, PROV_POLY, LiftedHom, Polynomial, Summand, outer, ones_hom
from .provenance import _chain
from .relalg import (
    INT,
    STRING,
    TRUE,
    And,
    AnnotatedRelation,
    Arith,
    BaseRel,
    Cmp,
    Col,
    Const,
    Join,
    Not,
    Or,
    Project,
    Schema,
    Select,
    Singleton,
    UnionAll,
    VersionMerge,
    compile_condition,
    compile_expr,
    eval_version_filter,
    eval_version_merge,
    tuple_key,
)
from .reenact import (
    OptimizationInapplicable,
    access_count,
    reenact_transaction,
    reenact_transaction_opt,
    update_stage_count,
)

CHECKS = ("theorem1", "homs", "lemma4", "bag")


@dataclass(frozen=True)
class FuzzConfig:
    seed: int = 0
    max_txns: int = 4  # including the transaction that loads the initial data
    max_ops_per_txn: int = 6  # including the commit
    max_relations: int = 2
    max_tuples: int = 12
    value_domain: int = 8
    op_mix: tuple = (("update", 0.4), ("insert_values", 0.25), ("insert_select", 0.15), ("delete", 0.2))
    interleaving: float = 0.5  # chance of switching transaction after each statement

    def validate(self) -> None:
        for name in ("max_txns", "max_ops_per_txn", "max_relations", "max_tuples", "value_domain"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.max_ops_per_txn < 2:
            raise ValueError("max_ops_per_txn must leave room for a statement and a commit")
        weights = [w for _, w in self.op_mix]
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError("op_mix weights must be non-negative and sum to 1")
        if not 0.0 <= self.interleaving <= 1.0:
            raise ValueError("interleaving must be within [0, 1]")


@dataclass
class Verdict:
    status: str  # PASS or FAIL
    check: str
    message: str = ""
    txn: str = None
    relation: str = None
    tuple: tuple = None
    time: int = None
    expected: str = None
    actual: str = None
    history: str = None
    seed: object = None
    stats: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "PASS"

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.tuple is not None:
            d["tuple"] = list(self.tuple)
        return {k: v for k, v in d.items() if v is not None and v != {}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def passed(check: str, **stats) -> Verdict:
    return Verdict("PASS", check, stats=stats)


def first_divergence(expected: AnnotatedRelation, actual: AnnotatedRelation):
    """First tuple (canonical order) whose annotations differ: (tuple, expected, actual)."""
    for t in sorted(set(expected.rows) | set(actual.rows), key=tuple_key):
        e, a = expected[t], actual[t]
        if e != a:
            return t, e.render(), a.render()
    return None


def _diverged(check, msg, expected, actual, **where) -> Verdict:
    d = first_divergence(expected, actual)
    t, e, a = d if d else (None, None, None)
    return Verdict("FAIL", check, msg, tuple=t, expected=e, actual=a, **where)


# ---------------------------------------------------------------------------
# history generation


def _schemas(rng: random.Random, n: int) -> dict:
    out = {}
    for i, name in enumerate(["R", "S"][:n] if n <= 2 else [f"R{j}" for j in range(n)]):
        attrs = [("A", INT), ("B", INT)]
        if rng.random() < 0.4:
            attrs.append(("C", STRING))
        out[name] = Schema(name, tuple(attrs))
    return out


def _value(rng, ty, d):
    return rng.randrange(d) if ty == INT else f"s{rng.randrange(d)}"


def _comparison(rng, schema, d):
    a, ty = rng.choice(schema.attrs)
    op = rng.choice(["=", "<>"] if ty == STRING else ["=", "<>", "<", "<=", ">", ">="])
    return Cmp(op, Col(a), Const(_value(rng, ty, d)))


def _condition(rng, schema, d):
    r = rng.random()
    if r < 0.08:
        return TRUE
    if r < 0.7:
        return _comparison(rng, schema, d)
    if r < 0.82:
        return And(_comparison(rng, schema, d), _comparison(rng, schema, d))
    if r < 0.94:
        return Or(_comparison(rng, schema, d), _comparison(rng, schema, d))
    return Not(_comparison(rng, schema, d))


def _scalar(rng, source: Schema, ty, d):
    cols = [a for a, t in source.attrs if t == ty]
    r = rng.random()
    if cols and r < 0.6:
        return Col(rng.choice(cols))
    if ty == INT and cols and r < 0.8:
        return Arith(rng.choice("+-"), Col(rng.choice(cols)), Const(rng.randrange(1, 3)))
    return Const(_value(rng, ty, d))


def _write(rng, cfg, schemas, kind):
    rel = rng.choice(sorted(schemas))
    schema = schemas[rel]
    d = cfg.value_domain
    if kind == "update":
        changes = {}
        for a, ty in rng.sample(list(schema.attrs), rng.randint(1, min(2, len(schema.attrs)))):
            changes[a] = _scalar(rng, schema, ty, d)
        return Update(rel, _condition(rng, schema, d), identity_assignments(schema, changes), "", 0)
    if kind == "delete":
        return Delete(rel, _condition(rng, schema, d), "", 0)
    if kind == "insert_values":
        return Insert(rel, _values_plan(rng, schema, d, rng.randint(1, 2)), "", 0)
    src = schemas[rng.choice(sorted(schemas))]
    exprs = tuple((_scalar(rng, src, ty, d), a) for a, ty in schema.attrs)
    return Insert(rel, Project(exprs, Select(_condition(rng, src, d), BaseRel(src.name))), "", 0)


def _values_plan(rng, schema, d, n):
    plan = None
    for _ in range(n):
        leaf = Singleton(schema, tuple(_value(rng, ty, d) for _, ty in schema.attrs), 1)
        plan = leaf if plan is None else UnionAll(plan, leaf)
    return plan


def renumber_variables(H: History) -> History:
    """Name VALUES annotations x1, x2, ... in time order (the log convention)."""
    counter = 0

    def walk(p):
        nonlocal counter
        if isinstance(p, Singleton):
            counter += 1
            return replace(p, annotation=Polynomial.var(f"x{counter}"))
        if isinstance(p, UnionAll):
            left = walk(p.left)
            return UnionAll(left, walk(p.right))
        return p

    new_ops = {}
    for op in H.ops():
        if isinstance(op, Insert) and is_values_insert(op):
            new_ops[op.time] = replace(op, query=walk(op.query))
    txns = [Transaction(T.id, tuple(new_ops.get(op.time, op) for op in T.ops)) for T in H.transactions]
    return History(H.schemas, txns, PROV_POLY, "variables")


def _build(schemas, order, per_txn, gaps) -> History:
    """Assign times to a global order of (txn index, op index) and build the history."""
    time = 0
    placed: dict[int, list] = {i: [] for i in per_txn}
    for n, (i, j) in enumerate(order):
        time += 1 + gaps[n % len(gaps)]
        placed[i].append(replace(per_txn[i][j], txn=f"T{i}", time=time))
    txns = sorted((Transaction(f"T{i}", tuple(ops)) for i, ops in placed.items() if ops), key=lambda T: T.start)
    return renumber_variables(History(schemas, txns, PROV_POLY, "variables"))


def generate_history(cfg: FuzzConfig, rng: random.Random, attempts: int = 50) -> History:
    """A random lock-admissible history within the configured bounds."""
    cfg.validate()
    for _ in range(attempts):
        H = _attempt(cfg, rng)
        if H is not None:
            return H
    raise RuntimeError("could not generate a history within the bounds")


def _attempt(cfg: FuzzConfig, rng: random.Random):
    schemas = _schemas(rng, rng.randint(1, cfg.max_relations))
    d = cfg.value_domain
    seed_rows = max(1, min(3, cfg.max_tuples // (2 * len(schemas))))
    per_txn = {0: [Insert(rel, _values_plan(rng, s, d, rng.randint(1, seed_rows)), "", 0) for rel, s in schemas.items()]}
    per_txn[0] = per_txn[0][: cfg.max_ops_per_txn - 1] + [Commit("", 0)]
    kinds = [k for k, _ in cfg.op_mix]
    weights = [w for _, w in cfg.op_mix]
    # favour several concurrent transactions; a lone one only exercises the serial case
    others = max(rng.randint(1, cfg.max_txns - 1), rng.randint(1, cfg.max_txns - 1)) if cfg.max_txns > 1 else 0
    for i in range(1, others + 1):
        n = rng.randint(1, cfg.max_ops_per_txn - 1)
        per_txn[i] = [_write(rng, cfg, schemas, rng.choices(kinds, weights)[0]) for _ in range(n)] + [Commit("", 0)]

    order = [(0, j) for j in range(len(per_txn[0]))]
    pending = {i: 0 for i in per_txn if i}
    current = None
    while pending:
        if current not in pending or rng.random() < cfg.interleaving:
            current = rng.choice(sorted(pending))
        order.append((current, pending[current]))
        pending[current] += 1
        if pending[current] == len(per_txn[current]):
            del pending[current]
    gaps = [1 if rng.random() < 0.1 else 0 for _ in range(len(order))]

    for _ in range(25):
        H = _build(schemas, order, per_txn, gaps)
        try:
            state = execute_history(H)
        except LockViolation as e:
            order = _reschedule(order, per_txn, H, e)
            continue
        if _within_bounds(H, state, cfg):
            return H
        return None
    return None


def _reschedule(order, per_txn, H: History, e: LockViolation):
    """Delay the blocked statement (and the rest of its transaction) until the lock holder commits."""
    blocked = int(e.txn[1:])
    holder = int(e.holder[1:])
    times = {}
    t_index = {T.id: T for T in H.transactions}
    for pos, (i, j) in enumerate(order):
        times[(i, j)] = t_index[f"T{i}"].ops[sum(1 for (a, _) in order[:pos] if a == i)].time
    start = next(pos for pos, key in enumerate(order) if key[0] == blocked and times[key] == e.time)
    moved = [key for key in order[start:] if key[0] == blocked]
    rest = [key for key in order if key not in moved]
    commit_pos = rest.index((holder, len(per_txn[holder]) - 1))
    return rest[: commit_pos + 1] + moved + rest[commit_pos + 1:]


def _within_bounds(H, state, cfg) -> bool:
    for t in range(1, H.horizon + 1):
        total = 0
        for rel in H.schemas:
            total += state.committed_at(rel, t).num_summands()
        if total > cfg.max_tuples:
            return False
    return True


# ---------------------------------------------------------------------------
# checks


def _state(H, state):
    return state if state is not None else execute_history(H)


def check_reenactment(H: History, T, state=None, merge=VersionMerge) -> Verdict:
    """Reenactment of T equals the direct semantics right after T commits."""
    T = H.txn(T) if isinstance(T, str) else T
    try:
        state = _state(H, state)
        plan = reenact_transaction(T, H, merge)
        after = T.finish + 1
        for rel, p in plan.plans.items():
            direct = state.relation_in_txn(rel, T.id, after)
            got = plan.evaluate(state)[rel] if len(plan.plans) == 1 else _eval_one(p, state)
            if got != direct:
                return _diverged("theorem1", "reenactment differs from direct execution",
                                 direct, got, txn=T.id, relation=rel, time=after)
        try:
            opt = reenact_transaction_opt(T, H)
        except OptimizationInapplicable:
            return passed("theorem1", optimized=False)
        for rel, p in opt.plans.items():
            direct = state.relation_in_txn(rel, T.id, after)
            got = _eval_one(p, state)
            own = _created_by(T.id)
            if got.filter_summands(own) != direct.filter_summands(own):
                return _diverged("theorem1", "single-read reenactment differs on the transaction's own versions",
                                 direct.filter_summands(own), got.filter_summands(own), txn=T.id, relation=rel, time=after)
            merged = eval_version_merge(direct, state.committed_at(rel, T.finish - 1))
            if got != merged:
                return _diverged("theorem1", "single-read reenactment differs from the merged direct result",
                                 merged, got, txn=T.id, relation=rel, time=after)
        return passed("theorem1", optimized=True)
    except Exception as e:  # surfaced as a failing verdict
        return Verdict("FAIL", "theorem1", f"{type(e).__name__}: {e}", txn=T.id)


def _eval_one(p, state):
    from .relalg import eval_plan

    return eval_plan(p, state)


def _created_by(txn: str):
    return lambda t, s: outer(s).txn == txn


def check_access_counts(H: History, T) -> Verdict:
    """The single-read form reads each relation once; the chained form once per statement."""
    T = H.txn(T) if isinstance(T, str) else T
    if any(isinstance(op, Insert) for op in T.writes):
        return passed("access", applicable=False)
    chained = reenact_transaction(T, H)
    opt = reenact_transaction_opt(T, H)
    for rel in T.relations():
        if access_count(opt, rel) != 1:
            return Verdict("FAIL", "access", f"single-read plan reads {rel} {access_count(opt, rel)} times", txn=T.id, relation=rel)
        if access_count(chained, rel) != update_stage_count(T, rel):
            return Verdict("FAIL", "access", f"chained plan reads {rel} {access_count(chained, rel)} times, "
                           f"expected {update_stage_count(T, rel)}", txn=T.id, relation=rel)
    return passed("access", applicable=True)


def _times(H: History) -> range:
    return range(0, H.horizon + 2)


def check_history_commutation(H: History, h: LiftedHom, state=None) -> Verdict:
    """Executing h(H) gives h applied to every relation version of H."""
    try:
        state = _state(H, state)
        mapped = execute_history(H.map(h), ids=state.id_table)
        for rel in H.schemas:
            for t in _times(H):
                a, b = state.committed_at(rel, t).map_hom(h), mapped.committed_at(rel, t)
                if a != b:
                    return _diverged("homs", f"committed versions differ under {h.name}", a, b, relation=rel, time=t)
            for T in H.transactions:
                for t in range(T.start - 1, T.finish + 3):
                    a, b = state.relation_in_txn(rel, T.id, t).map_hom(h), mapped.relation_in_txn(rel, T.id, t)
                    if a != b:
                        return _diverged("homs", f"in-transaction versions differ under {h.name}", a, b,
                                         relation=rel, txn=T.id, time=t)
                for op in T.writes:
                    a = state.visible_to_update(rel, T.id, op.time).map_hom(h)
                    b = mapped.visible_to_update(rel, T.id, op.time)
                    if a != b:
                        return _diverged("homs", f"visible versions differ under {h.name}", a, b,
                                         relation=rel, txn=T.id, time=op.time)
        return passed("homs")
    except Exception as e:
        return Verdict("FAIL", "homs", f"{type(e).__name__}: {e}")


def random_version_condition(rng: random.Random, horizon: int):
    def atom():
        return Cmp(rng.choice(["=", "<>", "<", "<=", ">", ">="]), Col("V"), Const(rng.randrange(0, horizon + 2)))

    r = rng.random()
    if r < 0.1:
        return TRUE
    if r < 0.6:
        return atom()
    if r < 0.8:
        return And(atom(), atom())
    if r < 0.9:
        return Or(atom(), atom())
    return Not(atom())


def check_operator_commutation(R: AnnotatedRelation, S: AnnotatedRelation, h: LiftedHom, vcond) -> Verdict:
    """h commutes with version merge of R and S and with a version filter on R."""
    a = eval_version_merge(R, S).map_hom(h)
    b = eval_version_merge(R.map_hom(h), S.map_hom(h))
    if a != b:
        return _diverged("homs", f"version merge does not commute with {h.name}", a, b, relation=R.schema.name)
    a = eval_version_filter(vcond, R).map_hom(h)
    b = eval_version_filter(vcond, R.map_hom(h))
    if a != b:
        return _diverged("homs", f"version filter does not commute with {h.name}", a, b, relation=R.schema.name)
    return passed("homs")


def relation_versions(H: History, state) -> dict[str, list[AnnotatedRelation]]:
    """Every distinct version of each relation the history produced."""
    out: dict[str, list] = {rel: [] for rel in H.schemas}
    for rel in H.schemas:
        seen = []
        cands = [state.committed_at(rel, t) for t in _times(H)]
        for T in H.transactions:
            cands += [state.relation_in_txn(rel, T.id, t) for t in range(T.start, T.finish + 2)]
        for r in cands:
            if r not in seen:
                seen.append(r)
        out[rel] = seen
    return out


def sample_relation_pairs(H: History, state, rng: random.Random, n: int):
    versions = relation_versions(H, state)
    rels = [r for r in versions if versions[r]]
    for _ in range(n):
        rel = rng.choice(rels)
        yield rng.choice(versions[rel]), rng.choice(versions[rel])


def check_hom_commutation(H: History, h: LiftedHom, state=None, rng: random.Random = None, pairs: int = 5) -> Verdict:
    """History-level commutation plus operator-level checks on sampled relation pairs."""
    state = _state(H, state)
    v = check_history_commutation(H, h, state)
    if not v.ok:
        return v
    rng = rng or random.Random(0)
    for R, S in sample_relation_pairs(H, state, rng, pairs):
        v = check_operator_commutation(R, S, h, random_version_condition(rng, H.horizon))
        if not v.ok:
            return v
    return passed("homs", pairs=pairs)


def immediate_predecessor(txn: str, s: Summand):
    """The version below the transaction's own layers, or None for its own inserts."""
    anns, rest = _chain(s)
    i = 0
    while i < len(anns) and anns[i].txn == txn:
        i += 1
    if i == 0 or i == len(anns):
        return None
    if not any(a.kind in ("U", "D") for a in anns[:i]):
        return None
    inner = s.factors
    for _ in range(i):
        inner = inner[0].inner
    return Summand(inner, s.coef)


def check_immediate_predecessors(H: History, T, state=None) -> Verdict:
    """Versions T overwrote are still committed right before T commits."""
    T = H.txn(T) if isinstance(T, str) else T
    if any(isinstance(op, Insert) and not is_values_insert(op) for op in T.writes):
        return passed("lemma4", applicable=False)
    state = _state(H, state)
    for rel in T.relations():
        before = state.committed_at(rel, T.finish - 1)
        present = {s.factors for _, s in before.summands()}
        for t, s in state.relation_in_txn(rel, T.id, T.finish + 1).summands():
            if outer(s).txn != T.id:
                continue
            pred = immediate_predecessor(T.id, s)
            if pred is not None and pred.factors not in present:
                return Verdict("FAIL", "lemma4", "immediate predecessor missing before commit",
                               txn=T.id, relation=rel, tuple=t, time=T.finish - 1,
                               expected=pred.factors and repr(pred.factors), actual=before.to_text())
    return passed("lemma4", applicable=True)


# ---------------------------------------------------------------------------
# multiset oracle


@dataclass
class _Row:
    values: tuple
    writer: str
    ended_by: str = None


class BagInterpreter:
    """RC-SI over plain multisets of rows, with per-row writer bookkeeping.

    A statement sees rows whose writer committed before it and that no
    committed transaction replaced, plus its own transaction's live rows.
    """

    def __init__(self, H: History):
        self.H = H
        self.rows: dict[str, list[_Row]] = {rel: [] for rel in H.schemas}
        self.finished: dict[str, int] = {}

    def _done_before(self, txn, time) -> bool:
        return txn is not None and txn in self.finished and self.finished[txn] < time

    def visible(self, rel, txn, time) -> list[_Row]:
        out = []
        for r in self.rows[rel]:
            if r.writer == txn:
                if r.ended_by != txn:
                    out.append(r)
            elif self._done_before(r.writer, time) and not self._done_before(r.ended_by, time) and r.ended_by != txn:
                out.append(r)
        return out

    def committed(self, rel, time) -> Counter:
        return Counter(
            r.values for r in self.rows[rel]
            if self._done_before(r.writer, time) and not self._done_before(r.ended_by, time)
        )

    def run(self) -> dict[int, dict[str, Counter]]:
        snapshots = {}
        ops = self.H.ops()
        i = 0
        for t in range(0, self.H.horizon + 2):
            while i < len(ops) and ops[i].time < t:
                self.apply(ops[i])
                i += 1
            snapshots[t] = {rel: self.committed(rel, t) for rel in self.H.schemas}
        return snapshots

    def apply(self, op) -> None:
        if isinstance(op, Commit):
            self.finished[op.txn] = op.time
            return
        schema = self.H.schemas[op.rel]
        if isinstance(op, Insert):
            bags = {rel: Counter(r.values for r in self.visible(rel, op.txn, op.time)) for rel in self.H.schemas}
            for values, n in sorted(self._query(op.query, bags).items(), key=lambda kv: tuple_key(kv[0])):
                for _ in range(n):
                    self.rows[op.rel].append(_Row(values, op.txn))
            return
        match = compile_condition(op.cond, schema)
        hits = [r for r in self.visible(op.rel, op.txn, op.time) if match(r.values)]
        for r in hits:
            r.ended_by = op.txn
            if isinstance(op, Update):
                fns = [compile_expr(e, schema)[0] for e, _ in op.assignments]
                self.rows[op.rel].append(_Row(tuple(f(r.values) for f in fns), op.txn))

    def _query(self, p, bags) -> Counter:
        if isinstance(p, BaseRel):
            return Counter(bags[p.name])
        if isinstance(p, Singleton):
            k = p.annotation
            n = sum(c for _, c in k.terms) if isinstance(k, Polynomial) else int(k)
            return Counter({tuple(p.values): n}) if n else Counter()
        if isinstance(p, UnionAll):
            return self._query(p.left, bags) + self._query(p.right, bags)
        if isinstance(p, Select):
            f = compile_condition(p.cond, self._schema(p.child))
            return Counter({t: n for t, n in self._query(p.child, bags).items() if f(t)})
        if isinstance(p, Project):
            schema = self._schema(p.child)
            fns = [compile_expr(e, schema)[0] for e, _ in p.exprs]
            out = Counter()
            for t, n in self._query(p.child, bags).items():
                out[tuple(f(t) for f in fns)] += n
            return out
        if isinstance(p, Join):
            left, right = self._query(p.left, bags), self._query(p.right, bags)
            return Counter({a + b: m * n for a, m in left.items() for b, n in right.items()})
        raise TypeError(f"unsupported query node {p!r}")

    def _schema(self, p) -> Schema:
        from .relalg import plan_schema

        return plan_schema(p, self.H.schemas)


def bag_oracle(H: History) -> dict[int, dict[str, Counter]]:
    """Committed multisets per time and relation, computed without annotations."""
    return BagInterpreter(H).run()


def live_bag(R: AnnotatedRelation) -> Counter:
    """Live tuple counts of a relation after dropping provenance (variables to 1)."""
    h = ones_hom(NAT) if R.semiring is PROV_POLY else None
    out = Counter()
    for t, k in R.rows.items():
        n = live_multiplicity(h(k) if h else k) if R.semiring is not BOOL else int(any(is_live(s) for s in k))
        if n:
            out[t] = n
    return out


def check_bag_oracle(H: History, state=None) -> Verdict:
    state = _state(H, state)
    try:
        bags = bag_oracle(H)
    except Exception as e:
        return Verdict("FAIL", "bag", f"{type(e).__name__}: {e}")
    for t, per_rel in bags.items():
        for rel, expected in per_rel.items():
            got = live_bag(state.committed_at(rel, t))
            if got != expected:
                diff = sorted(set(got) ^ set(expected) | {k for k in got if got[k] != expected.get(k)}, key=tuple_key)
                return Verdict("FAIL", "bag", "live tuples differ from the multiset interpreter",
                               relation=rel, time=t, tuple=diff[0] if diff else None,
                               expected=str(dict(expected)), actual=str(dict(got)))
    return passed("bag")


# ---------------------------------------------------------------------------
# fuzzing


def sample_hom(rng: random.Random, H: History) -> LiftedHom:
    r = rng.random()
    if r < 0.35:
        return ones_hom(NAT)
    if r < 0.7:
        return ones_hom(BOOL)
    names = sorted({v for T in H.transactions for op in T.writes if isinstance(op, Insert)
                    for v in _variables(op.query)})
    valuation = {v: rng.choice([0, 1, 1, 2, 3]) for v in names}
    return LiftedHom.from_valuation(NAT, valuation, default=1, name="random->NAT")


def _variables(p):
    if isinstance(p, Singleton) and isinstance(p.annotation, Polynomial):
        yield from p.annotation.variables()
    for attr in ("child", "left", "right"):
        if hasattr(p, attr):
            yield from _variables(getattr(p, attr))


def run_checks(H: History, checks: Iterable[str] = CHECKS, rng: random.Random = None,
               merge=VersionMerge, pairs: int = 5) -> list[Verdict]:
    """Run the selected checks on one history; returns every verdict."""
    rng = rng or random.Random(0)
    state = execute_history(H)
    out = []
    for name in checks:
        if name == "theorem1":
            out += [check_reenactment(H, T, state, merge) for T in H.transactions]
        elif name == "homs":
            out.append(check_hom_commutation(H, sample_hom(rng, H), state, rng, pairs))
        elif name == "lemma4":
            out += [check_immediate_predecessors(H, T, state) for T in H.transactions]
        elif name == "bag":
            out.append(check_bag_oracle(H, state))
        else:
            raise ValueError(f"unknown check {name!r}")
    return out


def minimize(H: History, fails: Callable[[History], bool]) -> History:
    """Shrink a failing history: drop statements, then whole transactions."""
    def attempt(candidate_txns):
        try:
            cand = renumber_variables(H.with_transactions(candidate_txns))
            execute_history(cand)
        except (IllFormedHistory, LockViolation, ValueError, KeyError, TypeError):
            return None
        return cand if fails(cand) else None

    changed = True
    while changed:
        changed = False
        for ti, T in enumerate(H.transactions):
            for oi in range(len(T.ops) - 1):
                ops = T.ops[:oi] + T.ops[oi + 1:]
                txns = list(H.transactions)
                txns[ti] = Transaction(T.id, ops)
                cand = attempt(txns)
                if cand is not None:
                    H, changed = cand, True
                    break
            if changed:
                break
        if changed:
            continue
        for ti in range(len(H.transactions)):
            txns = list(H.transactions[:ti] + H.transactions[ti + 1:])
            cand = attempt(txns)
            if cand is not None:
                H, changed = cand, True
                break
    return H


def iteration_rng(seed, i: int) -> random.Random:
    return random.Random(f"{seed}:{i}")


def fuzz(cfg: FuzzConfig = FuzzConfig(), iters: int = 1, checks: Iterable[str] = CHECKS,
         merge=VersionMerge, shrink: bool = True) -> Verdict:
    """Generate ``iters`` histories and check each; the first failure is minimized and returned."""
    cfg.validate()
    checks = tuple(checks)
    counts = Counter()
    for i in range(iters):
        rng = iteration_rng(cfg.seed, i)
        H = generate_history(cfg, rng)
        check_rng = random.Random(rng.random())
        for v in run_checks(H, checks, check_rng, merge):
            counts[v.check] += 1
            if v.ok:
                continue
            if shrink:
                def fails(cand, check=v.check):
                    return any(not w.ok for w in run_checks(cand, (check,), random.Random(0), merge))
                try:
                    small = minimize(H, fails)
                except Exception:
                    small = H
                retry = [w for w in run_checks(small, (v.check,), random.Random(0), merge) if not w.ok]
                if retry:
                    v = retry[0]
                    H = small
            v.history = serialize_log(H)
            v.seed = cfg.seed
            v.stats = {"iteration": i, "checked": dict(counts)}
            return v
    return Verdict("PASS", ",".join(checks), f"{iters} histories", seed=cfg.seed,
                   stats={"histories": iters, "checked": dict(counts)})
