import json
import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from reenactd.auditlog import (
    InsertQuery,
    LogError,
    SelectStmt,
    parse_audit,
    parse_condition,
    parse_log,
    serialize_log,
)
from reenactd.history import Insert, Update
from reenactd.mvsemiring import NAT
from reenactd.relalg import And, Arith, Cmp, Col, Const, Not, Or, render_expr
from reenactd.verify import FuzzConfig, generate_history

MALFORMED = Path(__file__).parent / "fixtures" / "malformed"


def test_running_example_parses(example):
    assert [T.id for T in example.transactions] == ["T0", "T1", "T2", "T4", "T7", "T8"]
    T7 = example.txn("T7")
    assert (T7.start, T7.finish) == (20, 25)
    assert [type(op).__name__ for op in T7.ops] == ["Update", "Update", "Commit"]
    assert example.annotate == "variables"


def test_reads_are_kept_in_the_audit_but_not_the_history(example_text):
    log = parse_audit(example_text)
    reads = [e for e in log.entries if isinstance(e.ast, SelectStmt)]
    assert [(e.time, e.txn, e.ast.into) for e in reads] == [(24, "T7", "amounts")]


def test_insert_select_lowering(example):
    op = example.txn("T8").ops[0]
    assert isinstance(op, Insert)
    assert render_expr(op.query.child.cond) == "Position = 'Software Engineer'"


def test_update_lowering_assigns_every_column(example):
    op = example.txn("T7").ops[1]
    assert isinstance(op, Update)
    assert [n for _, n in op.assignments] == ["ID", "EmpID", "Amount"]
    assert op.assignments[2][0] == Arith("+", Col("Amount"), Const(1000))


def test_running_example_round_trip(example, example_text):
    text = serialize_log(example)
    assert parse_log(text) == example
    assert serialize_log(parse_log(text)) == text


def test_comments_blank_lines_and_quoted_names():
    text = """-- leading comment
TABLE R(A INT, "B C" STRING)

1 | T0 | INSERT INTO R (A, "B C") VALUES (1, 'it''s -- not a comment'); -- trailing
2 | T0 | COMMIT;
"""
    H = parse_log(text)
    leaf = H.txn("T0").ops[0].query
    assert leaf.values == (1, "it's -- not a comment")
    assert parse_log(serialize_log(H)) == H


def test_condition_precedence():
    c = parse_condition("NOT A = 1 OR B < 2 AND C >= -3")
    assert c == Or(
        Not(Cmp("=", Col("A"), Const(1))),
        And(Cmp("<", Col("B"), Const(2)), Cmp(">=", Col("C"), Const(-3))),
    )
    assert parse_condition('"P(Bonus,Amount)" != 1000') == Cmp("<>", Col("P(Bonus,Amount)"), Const(1000))
    assert parse_condition("A + 2 * B = 7") == Cmp("=", Arith("+", Col("A"), Arith("*", Const(2), Col("B"))), Const(7))


def test_annotate_one_uses_unit_annotations():
    H = parse_log("TABLE R(A INT)\n1 | T | INSERT INTO R (A) VALUES (1);\n2 | T | COMMIT;\n", NAT)
    assert H.txn("T").ops[0].query.annotation == 1


def test_insert_query_with_parenthesized_select():
    text = """TABLE R(A INT)
1 | T0 | INSERT INTO R (A) VALUES (1);
2 | T0 | COMMIT;
3 | T1 | INSERT INTO R (SELECT A + 1 AS A FROM R);
4 | T1 | COMMIT;
"""
    log = parse_audit(text)
    assert isinstance(log.entries[2].ast, InsertQuery)
    assert parse_log(serialize_log(parse_log(text))) == parse_log(text)


EXPECTED = json.loads((MALFORMED / "expected.json").read_text())


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_malformed_inputs_give_positioned_errors(name):
    want = EXPECTED[name]
    with pytest.raises(LogError) as e:
        parse_log((MALFORMED / name).read_text())
    err = e.value
    assert (err.kind, err.line, err.column) == (want["kind"], want["line"], want["column"])
    payload = json.loads(err.to_json())
    assert payload["line"] >= 1 and payload["column"] >= 1


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_fuzzed_round_trip(seed):
    H = generate_history(FuzzConfig(seed=seed), random.Random(seed))
    assert parse_log(serialize_log(H)) == H


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet="TABLEINSRTUPDWHVOCM()|;,'\"=<>!-+*0123456789 \nxyzR", max_size=80))
def test_garbage_never_crashes(text):
    try:
        parse_log(text)
    except LogError as e:
        assert e.line >= 0
