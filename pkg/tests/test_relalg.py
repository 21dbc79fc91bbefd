import random
from collections import Counter

import pytest
from hypothesis import given, settings

from reenactd.mvsemiring import (
    BOOL,
    NAT,
    PROV_POLY,
    Base,
    NormalForm,
    NotAdmissible,
    Polynomial,
    VersionAnnotation,
    Wrapped,
    normalize,
)
from reenactd.relalg import (
    INT,
    STRING,
    And,
    AnnotatedRelation,
    AnnotOp,
    Arith,
    BaseRel,
    Cmp,
    Col,
    Const,
    IdAllocator,
    Join,
    Not,
    Or,
    Project,
    Schema,
    SchemaError,
    Select,
    Singleton,
    TRUE,
    TypeMismatch,
    UnboundRelation,
    UnionAll,
    VersionFilter,
    VersionMerge,
    base_relations,
    eval_plan,
    eval_version_filter,
    eval_version_merge,
    plan_schema,
    render_expr,
    render_plan,
)
from strategies import SCHEMA, admissible_relation, relations, version_condition

R_SCHEMA = Schema("R", (("A", INT), ("B", INT)))
S_SCHEMA = Schema("S", (("C", INT), ("D", STRING)))


def nat_relation(schema, bag: Counter) -> AnnotatedRelation:
    return AnnotatedRelation.build(schema, NAT, ((t, NormalForm.base(NAT, n)) for t, n in bag.items() if n))


def as_bag(R: AnnotatedRelation) -> Counter:
    out = Counter()
    for t, k in R.rows.items():
        n = sum(s.coef for s in k if not s.factors)
        if n:
            out[t] = n
    return out


# A deliberately simple evaluator over Counters, used as the oracle for the
# annotated operators on plain N-relations.
def naive(plan, bags, schemas):
    if isinstance(plan, BaseRel):
        return Counter(bags[plan.name])
    if isinstance(plan, Select):
        s = plan_schema(plan.child, schemas)
        out = Counter()
        for t, n in naive(plan.child, bags, schemas).items():
            if truth(plan.cond, dict(zip(s.names, t))):
                out[t] += n
        return out
    if isinstance(plan, Project):
        s = plan_schema(plan.child, schemas)
        out = Counter()
        for t, n in naive(plan.child, bags, schemas).items():
            env = dict(zip(s.names, t))
            out[tuple(value(e, env) for e, _ in plan.exprs)] += n
        return out
    if isinstance(plan, Join):
        l, r = naive(plan.left, bags, schemas), naive(plan.right, bags, schemas)
        return Counter({a + b: m * n for a, m in l.items() for b, n in r.items()})
    if isinstance(plan, UnionAll):
        return naive(plan.left, bags, schemas) + naive(plan.right, bags, schemas)
    raise TypeError(plan)


def value(e, env):
    if isinstance(e, Col):
        return env[e.name]
    if isinstance(e, Const):
        return e.value
    a, b = value(e.left, env), value(e.right, env)
    return {"+": a + b, "-": a - b, "*": a * b}[e.op]


def truth(c, env):
    if isinstance(c, Const):
        return c.value
    if isinstance(c, Cmp):
        a, b = value(c.left, env), value(c.right, env)
        return {"=": a == b, "<>": a != b, "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[c.op]
    if isinstance(c, And):
        return truth(c.left, env) and truth(c.right, env)
    if isinstance(c, Or):
        return truth(c.left, env) or truth(c.right, env)
    return not truth(c.child, env)


def random_plan(rng, depth=3):
    r = rng.random()
    if depth == 0 or r < 0.25:
        return BaseRel("R")
    child = random_plan(rng, depth - 1)
    if r < 0.5:
        cond = Cmp(rng.choice(["=", "<", ">="]), Col(rng.choice("AB")), Const(rng.randrange(4)))
        return Select(rng.choice([cond, Not(cond), And(cond, cond), Or(cond, TRUE)]), child)
    if r < 0.75:
        a = rng.choice("AB")
        return Project(((Arith("+", Col(a), Const(1)), "A"), (Col("B"), "B")), child)
    return UnionAll(child, random_plan(rng, depth - 1))


def test_operators_match_multiset_oracle():
    rng = random.Random(3)
    schemas = {"R": R_SCHEMA, "S": S_SCHEMA}
    for _ in range(300):
        bag = Counter({(rng.randrange(4), rng.randrange(4)): rng.randint(1, 3) for _ in range(rng.randint(0, 5))})
        sbag = Counter({(rng.randrange(3), f"s{rng.randrange(2)}"): 1 for _ in range(rng.randint(0, 3))})
        db = {"R": nat_relation(R_SCHEMA, bag), "S": nat_relation(S_SCHEMA, sbag)}
        plan = random_plan(rng)
        if rng.random() < 0.3:
            plan = Join(plan, BaseRel("S"))
        bags = {"R": bag, "S": sbag}
        assert as_bag(eval_plan(plan, db)) == naive(plan, bags, schemas)


def test_projection_sums_colliding_tuples():
    R = nat_relation(R_SCHEMA, Counter({(1, 2): 2, (1, 3): 5}))
    out = eval_plan(Project(((Col("A"), "A"),), BaseRel("R")), {"R": R})
    assert as_bag(out) == Counter({(1,): 7})


def test_type_errors():
    R = nat_relation(R_SCHEMA, Counter({(1, 2): 1}))
    with pytest.raises(TypeMismatch):
        eval_plan(Select(Cmp("=", Col("A"), Const("x")), BaseRel("R")), {"R": R})
    with pytest.raises(TypeMismatch):
        eval_plan(Select(Col("A"), BaseRel("R")), {"R": R})
    with pytest.raises(SchemaError):
        eval_plan(Join(BaseRel("R"), BaseRel("R")), {"R": R})
    with pytest.raises(UnboundRelation):
        eval_plan(BaseRel("Q"), {"R": R})


def test_singleton_checks_types_and_semiring():
    with pytest.raises(TypeMismatch):
        eval_plan(Singleton(R_SCHEMA, (1, "x")), {}, semiring=NAT)
    with pytest.raises(TypeMismatch):
        eval_plan(Singleton(R_SCHEMA, (1, 2), Polynomial.var("x1")), {}, semiring=NAT)
    got = eval_plan(Singleton(R_SCHEMA, (1, 2), Polynomial.var("x1")), {}, semiring=PROV_POLY)
    assert got[(1, 2)].render() == "x1"


def test_insert_annotation_allocates_ids_in_tuple_order():
    ids = IdAllocator()
    plan = AnnotOp("I", "T1", 3, UnionAll(Singleton(R_SCHEMA, (5, 0)), Singleton(R_SCHEMA, (2, 0))))
    out = eval_plan(plan, {}, ids=ids, semiring=NAT)
    assert out[(2, 0)].render() == "I[T1,3,1](1)"
    assert out[(5, 0)].render() == "I[T1,3,2](1)"
    assert ids.table == {("T1", 3, (2, 0)): 1, ("T1", 3, (5, 0)): 2}


def test_allocator_reuses_reference_ids():
    ids = IdAllocator(reference={("T1", 3, (5, 0)): 9})
    assert ids.allocate("T1", 3, [(5, 0), (1, 1)]) == [10, 9]


def versioned(K, *chain, inner=1):
    e = Base(inner if K is not BOOL else True)
    for kind, txn, time, tid in reversed(chain):
        e = Wrapped(VersionAnnotation(kind, txn, time, tid), e)
    return normalize(e, K)


def rel(K, *rows):
    return AnnotatedRelation.build(R_SCHEMA, K, rows)


def test_version_merge_keeps_newest_version_per_id():
    old = versioned(NAT, ("C", "T1", 5, 1), ("I", "T1", 3, 1))
    new = versioned(NAT, ("U", "T2", 8, 1), ("C", "T1", 5, 1), ("I", "T1", 3, 1))
    other = versioned(NAT, ("C", "T1", 5, 2), ("I", "T1", 4, 2))
    R1 = rel(NAT, ((1, 1), new))
    R2 = rel(NAT, ((1, 0), old), ((2, 2), other))
    merged = eval_version_merge(R1, R2)
    assert merged == rel(NAT, ((1, 1), new), ((2, 2), other))
    assert eval_version_merge(R2, R1) == merged


def test_version_merge_prefers_left_on_ties():
    a = versioned(NAT, ("C", "T1", 5, 1), ("I", "T1", 3, 1))
    R1 = rel(NAT, ((1, 1), a))
    R2 = rel(NAT, ((1, 1), a))
    assert eval_version_merge(R1, R2) == R1


def test_version_filter():
    a = versioned(NAT, ("C", "T1", 5, 1))
    b = versioned(NAT, ("C", "T2", 9, 2))
    R = rel(NAT, ((1, 1), a), ((2, 2), b))
    assert eval_version_filter(Cmp("<=", Col("V"), Const(5)), R) == rel(NAT, ((1, 1), a))
    assert eval_version_filter(TRUE, R) == R


@settings(max_examples=150, deadline=None)
@given(relations())
def test_merge_with_itself_is_identity(R):
    R.check_admissible()
    assert eval_version_merge(R, R) == R


@settings(max_examples=150, deadline=None)
@given(relations(), relations())
def test_version_filters_compose(R, _):
    rng = random.Random(len(R))
    c1, c2 = version_condition(rng), version_condition(rng)
    assert eval_version_filter(c1, eval_version_filter(c2, R)) == eval_version_filter(And(c1, c2), R)


def test_text_and_dict_serialization_round_trip():
    rng = random.Random(5)
    for K in (NAT, BOOL, PROV_POLY):
        for _ in range(30):
            R = admissible_relation(rng, K)
            assert AnnotatedRelation.from_dict(R.to_dict()) == R
    R = rel(NAT, ((1, 2), versioned(NAT, ("I", "T1", 3, 1), inner=2)))
    assert R.to_text() == "R(A INT, B INT) [NAT]\n(1, 2) : I[T1,3,1](2)\n"


def test_render_expr_parenthesizes_and_quotes():
    e = And(Cmp("=", Col("A"), Arith("+", Col("B"), Const(1))), Not(Cmp(">", Col("P(R,A)"), Const("x'y"))))
    assert render_expr(e) == "(A = (B + 1)) AND (NOT (\"P(R,A)\" > 'x''y'))"


def test_plan_rendering_and_leaves():
    p = AnnotOp("C", "T7", 26, VersionMerge(BaseRel("Bonus", 21), VersionFilter(Cmp("<=", Col("V"), Const(21)), BaseRel("Bonus", 24))))
    assert render_plan(p) == (
        "Annotate C[T7,26]\n"
        "  VersionMerge\n"
        "    CommittedAt Bonus@21\n"
        "    VersionFilter V <= 21\n"
        "      CommittedAt Bonus@24"
    )
    assert [b.version for b in base_relations(p)] == [21, 24]


def test_admissibility_check():
    a = versioned(NAT, ("C", "T1", 5, 1))
    b = versioned(NAT, ("C", "T1", 6, 1))
    with pytest.raises(NotAdmissible):
        rel(NAT, ((1, 1), a), ((2, 2), b)).check_admissible()
    assert SCHEMA.names == ("A", "B")
