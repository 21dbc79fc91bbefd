import pytest

from reenactd.auditlog import parse_log
from reenactd.history import execute_history
from reenactd.relalg import BaseRel, UnionAll, VersionMerge, base_relations, eval_plan, eval_version_merge
from reenactd.reenact import (
    OptimizationInapplicable,
    access_count,
    reenact_history,
    reenact_transaction,
    reenact_transaction_opt,
    update_stage_count,
)


@pytest.mark.parametrize("txn", ["T0", "T1", "T2", "T4", "T7", "T8"])
def test_reenactment_reproduces_every_running_example_transaction(example, example_state, txn):
    T = example.txn(txn)
    rp = reenact_transaction(T, example)
    for rel, got in rp.evaluate(example_state).items():
        assert got == example_state.relation_in_txn(rel, txn, T.finish + 1)


def test_single_read_form_for_t7(example, example_state):
    rp = reenact_transaction_opt("T7", example)
    assert rp.access_profile == {"Bonus": 1, "Employee": 1}
    assert {b.version for p in rp.plans.values() for b in base_relations(p)} == {24}
    T = example.txn("T7")
    for rel, got in rp.evaluate(example_state).items():
        direct = example_state.relation_in_txn(rel, "T7", 26)
        assert got == eval_version_merge(direct, example_state.committed_at(rel, 24))


def test_single_read_form_includes_concurrent_commits(example, example_state):
    # T8's insert commits while T7 runs; the single-read form passes it through.
    got = reenact_transaction_opt("T7", example).evaluate(example_state)["Bonus"]
    assert (4, 101, 500) in got
    assert (4, 101, 500) not in example_state.relation_in_txn("Bonus", "T7", 26)


def test_single_read_form_rejects_insert_queries(example):
    with pytest.raises(OptimizationInapplicable):
        reenact_transaction_opt("T8", example)


def test_insert_query_reads_the_statement_snapshot(example):
    rp = reenact_transaction("T8", example)
    leaves = {(b.name, b.version) for b in base_relations(rp.plans["Bonus"])}
    assert leaves == {("Bonus", 22), ("Employee", 22)}


def test_plan_rendering_ends_with_access_profile(example):
    text = reenact_transaction("T7", example).render()
    assert text.startswith("-- Employee\nAnnotate C[T7,26]\n")
    assert text.endswith("access profile: Bonus=1, Employee=1\n")


CHAIN = """TABLE R(A INT, B INT)
1 | T0 | INSERT INTO R (A, B) VALUES (1, 0), (2, 0), (3, 0);
2 | T0 | COMMIT;
3 | T1 | UPDATE R SET B = B + 1 WHERE A = 1;
4 | T2 | UPDATE R SET B = 5 WHERE A = 2;
5 | T2 | COMMIT;
6 | T1 | UPDATE R SET B = B + 1 WHERE A >= 2;
7 | T1 | DELETE FROM R WHERE A = 3;
8 | T1 | COMMIT;
"""


def test_statement_chain_reads_each_snapshot():
    H = parse_log(CHAIN)
    state = execute_history(H)
    rp = reenact_transaction("T1", H)
    assert update_stage_count(H.txn("T1"), "R") == 3
    assert access_count(rp, "R") == 3
    assert rp.evaluate(state)["R"] == state.relation_in_txn("R", "T1", 9)
    # the second update sees T2's committed change
    assert (2, 6) in rp.evaluate(state)["R"]
    opt = reenact_transaction_opt("T1", H)
    assert access_count(opt, "R") == 1
    assert opt.evaluate(state)["R"] == eval_version_merge(state.relation_in_txn("R", "T1", 9), state.committed_at("R", 7))


def test_plain_union_instead_of_merge_breaks_the_chain():
    H = parse_log(CHAIN)
    state = execute_history(H)
    broken = reenact_transaction("T1", H, merge=UnionAll).evaluate(state)["R"]
    assert broken != state.relation_in_txn("R", "T1", 9)


def test_history_reenactment_reads_nothing_stored(example, example_state):
    rp = reenact_history(example, 26)
    assert rp.access_profile == {}
    got = {rel: eval_plan(p, {}, ids=example_state, semiring=example.semiring) for rel, p in rp.plans.items()}
    for rel in example.schemas:
        assert got[rel] == example_state.committed_at(rel, 26)


def test_history_reenactment_at_an_earlier_time(example, example_state):
    rp = reenact_history(example, 18)
    for rel, p in rp.plans.items():
        assert eval_plan(p, {}, ids=example_state, semiring=example.semiring) == example_state.committed_at(rel, 18)


def test_history_folds_merge_in_commit_order(example):
    p = reenact_history(example, 26).plans["Bonus"]
    assert isinstance(p, VersionMerge)
    assert not any(isinstance(b, BaseRel) for b in base_relations(p))
