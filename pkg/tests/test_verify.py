import json
import random

import pytest

from reenactd.auditlog import parse_log, serialize_log
from reenactd.history import execute_history
from reenactd.mvsemiring import BOOL, NAT, LiftedHom, ones_hom
from reenactd.relalg import UnionAll
from reenactd.verify import (
    FuzzConfig,
    bag_oracle,
    check_access_counts,
    check_bag_oracle,
    check_hom_commutation,
    check_immediate_predecessors,
    check_reenactment,
    fuzz,
    generate_history,
    iteration_rng,
    live_bag,
    run_checks,
)


def test_default_run_passes():
    v = fuzz(FuzzConfig(seed=0), iters=30)
    assert v.ok, v.to_json()
    assert v.stats["histories"] == 30


def test_single_transaction_config_passes():
    v = fuzz(FuzzConfig(seed=3, max_txns=1), iters=20)
    assert v.ok, v.to_json()


def test_generation_is_deterministic():
    cfg = FuzzConfig(seed=11)
    a = [serialize_log(generate_history(cfg, iteration_rng(11, i))) for i in range(10)]
    b = [serialize_log(generate_history(cfg, iteration_rng(11, i))) for i in range(10)]
    assert a == b
    assert fuzz(cfg, 10).to_json() == fuzz(cfg, 10).to_json()


def test_generated_histories_respect_bounds():
    cfg = FuzzConfig(seed=5)
    for i in range(60):
        H = generate_history(cfg, iteration_rng(5, i))
        assert len(H.transactions) <= cfg.max_txns
        assert all(len(T.ops) <= cfg.max_ops_per_txn for T in H.transactions)
        assert len(H.schemas) <= cfg.max_relations
        state = execute_history(H)  # raises on a lock violation
        for t in range(H.horizon + 1):
            assert sum(state.committed_at(r, t).num_summands() for r in H.schemas) <= cfg.max_tuples


def test_config_validation():
    with pytest.raises(ValueError):
        FuzzConfig(max_ops_per_txn=1).validate()
    with pytest.raises(ValueError):
        FuzzConfig(op_mix=(("update", 0.5),)).validate()


def test_mutated_compiler_is_caught_and_minimized():
    v = fuzz(FuzzConfig(seed=0), iters=200, checks=["theorem1"], merge=UnionAll)
    assert not v.ok
    assert v.check == "theorem1" and v.txn and v.expected != v.actual
    H = parse_log(v.history)
    # the minimized history still fails
    assert any(not w.ok for w in run_checks(H, ["theorem1"], merge=UnionAll))
    assert all(w.ok for w in run_checks(H, ["theorem1"]))
    assert json.loads(v.to_json())["status"] == "FAIL"


def test_running_example_passes_every_check(example, example_state):
    for T in example.transactions:
        assert check_reenactment(example, T, example_state).ok
        assert check_immediate_predecessors(example, T, example_state).ok
    for h in (ones_hom(NAT), ones_hom(BOOL), LiftedHom.from_valuation(NAT, {"x1": 0}, default=2)):
        v = check_hom_commutation(example, h, example_state, random.Random(1), pairs=20)
        assert v.ok, v.to_json()
    assert check_bag_oracle(example, example_state).ok
    assert check_access_counts(example, "T7").ok


def test_bag_oracle_on_running_example(example):
    bags = bag_oracle(example)
    assert dict(bags[26]["Bonus"]) == {(1, 101, 2000): 1, (2, 102, 2000): 1, (3, 103, 500): 1, (4, 101, 500): 1}
    assert dict(bags[25]["Employee"])[(101, "Mark Smith", "Software Engineer")] == 1


def test_live_bag_ignores_deleted_versions():
    H = parse_log("""TABLE R(A INT)
1 | T0 | INSERT INTO R (A) VALUES (1), (1), (2);
2 | T0 | COMMIT;
3 | T1 | DELETE FROM R WHERE A = 2;
4 | T1 | COMMIT;
""")
    state = execute_history(H)
    assert dict(live_bag(state.committed_at("R", 5))) == {(1,): 2}
    assert dict(bag_oracle(H)[5]["R"]) == {(1,): 2}


def test_access_counts_skip_transactions_with_inserts(example):
    v = check_access_counts(example, "T8")
    assert v.ok and v.stats == {"applicable": False}


def test_verdict_serialization():
    v = fuzz(FuzzConfig(seed=1), iters=2)
    d = json.loads(v.to_json())
    assert d["status"] == "PASS" and d["seed"] == 1
