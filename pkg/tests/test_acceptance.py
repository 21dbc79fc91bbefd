"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run with pytest (the lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""
import json
import random
import sys
import time
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from reenactd.auditlog import LogError, parse_log, serialize_log  # noqa: E402
from reenactd.history import Insert, execute_history  # noqa: E402
from reenactd.mvsemiring import BOOL, NAT, PROV_POLY, NormalForm, normalize, ones_hom  # noqa: E402
from reenactd.provenance import transaction_provenance  # noqa: E402
from reenactd.relalg import And, TRUE, eval_version_filter, eval_version_merge  # noqa: E402
from reenactd.verify import (  # noqa: E402
    FuzzConfig,
    check_access_counts,
    check_bag_oracle,
    check_history_commutation,
    check_immediate_predecessors,
    check_operator_commutation,
    check_reenactment,
    generate_history,
    iteration_rng,
    random_version_condition,
    sample_hom,
    sample_relation_pairs,
)
from strategies import admissible_relation, expr, version_annotation, version_condition  # noqa: E402
from conftest import running_example_text  # noqa: E402

TESTS = Path(__file__).parent
RESULTS: dict = {}
CONFIG = FuzzConfig(seed=2024)


def report(n: int, title: str, ok: bool, detail: str) -> None:
    RESULTS[n] = f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} ({detail})"


@lru_cache(maxsize=None)
def fuzzed(n: int):
    """The first ``n`` fuzzed histories with their executed states."""
    out = []
    for i in range(n):
        H = generate_history(CONFIG, iteration_rng(CONFIG.seed, i))
        out.append((H, execute_history(H)))
    return out


# 1 -------------------------------------------------------------------------

GOLDEN = {
    ("Employee", (101, "Mark Smith", "Software Architect")): "C[T7,26,1](U[T7,21,1](C[T0,6,1](I[T0,2,1](x1))))",
    ("Bonus", (1, 101, 2000)): "C[T7,26,4](U[T7,22,4](C[T1,10,4](I[T1,8,4](x4))))",
    ("Bonus", (4, 101, 500)): "C[T8,24,7](I[T8,23,7](C[T0,6,1](I[T0,2,1](x1))))",
}


def test_criterion_1_running_example_annotations():
    start = time.perf_counter()
    state = execute_history(parse_log(running_example_text()))
    got = {key: state.committed_at(key[0], 26)[key[1]].render() for key in GOLDEN}
    elapsed = time.perf_counter() - start
    bad = [k for k in GOLDEN if got[k] != GOLDEN[k]]
    ok = not bad and elapsed < 1.0
    report(1, "running example e1', b1', b4 at time 26", ok, f"{len(GOLDEN) - len(bad)}/3 exact, {elapsed:.3f}s")
    assert not bad, {k: got[k] for k in bad}
    assert elapsed < 1.0


# 2 -------------------------------------------------------------------------


def test_criterion_2_reenactment_equals_direct_semantics():
    start = time.perf_counter()
    txns = optimized = 0
    failures = []
    for H, state in fuzzed(1000):
        for T in H.transactions:
            v = check_reenactment(H, T, state)
            txns += 1
            optimized += bool(v.stats.get("optimized"))
            if not v.ok:
                v.history = serialize_log(H)
                failures.append(v)
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 300
    report(2, "1000 fuzzed histories, direct = R(T) = R_opt(T)", ok,
           f"{txns} transactions, {optimized} also single-read, {len(failures)} divergences, {elapsed:.1f}s")
    assert not failures, failures[0].to_json()
    assert elapsed < 300


# 3 -------------------------------------------------------------------------


def test_criterion_3_homomorphisms_and_predecessors():
    failures = []
    histories = 0
    for H, state in fuzzed(200):
        for h in (ones_hom(NAT), ones_hom(BOOL)):
            v = check_history_commutation(H, h, state)
            if not v.ok:
                failures.append(v)
        histories += 1

    rng = random.Random(99)
    pairs = nonempty = 0
    pool = fuzzed(500)
    while pairs < 500:
        H, state = pool[rng.randrange(len(pool))]
        (R, S), = sample_relation_pairs(H, state, rng, 1)
        R.check_admissible()
        S.check_admissible()
        nonempty += bool(R.rows) and bool(S.rows)
        h = sample_hom(rng, H)
        v = check_operator_commutation(R, S, h, random_version_condition(rng, H.horizon))
        if not v.ok:
            failures.append(v)
        pairs += 1

    eligible = 0
    for H, state in fuzzed(500):
        for T in H.transactions:
            v = check_immediate_predecessors(H, T, state)
            eligible += bool(v.stats.get("applicable"))
            if not v.ok:
                failures.append(v)
    report(3, "homomorphism commutation and immediate predecessors", not failures,
           f"{histories} histories x 2 homomorphisms, {pairs} relation pairs ({nonempty} both non-empty), "
           f"{eligible} eligible transactions, {len(failures)} failures")
    assert not failures, failures[0].to_json()


# 4 -------------------------------------------------------------------------


def test_criterion_4_multiset_oracle():
    failures = [v for H, state in fuzzed(500) for v in [check_bag_oracle(H, state)] if not v.ok]
    report(4, "live contents match the multiset interpreter", not failures,
           f"500 histories, every time point, {len(failures)} mismatches")
    assert not failures, failures[0].to_json()


# 5 -------------------------------------------------------------------------


def test_criterion_5_access_counts():
    checked = 0
    failures = []
    for H, _ in fuzzed(1000):
        for T in H.transactions:
            if any(isinstance(op, Insert) for op in T.writes):
                continue
            v = check_access_counts(H, T)
            checked += 1
            if not v.ok:
                failures.append(v)
    ok = not failures and checked > 0
    report(5, "single-read form reads each relation once", ok,
           f"{checked} update/delete-only transactions, {len(failures)} failures")
    assert checked > 0
    assert not failures, failures[0].to_json()


# 6 -------------------------------------------------------------------------


def test_criterion_6_provenance_encoding_golden():
    state = execute_history(parse_log(running_example_text()))
    p = transaction_provenance(state, "Bonus", "T7")
    csv1 = p.to_csv()
    csv2 = transaction_provenance(execute_history(parse_log(running_example_text())), "Bonus", "T7").to_csv()
    golden = (TESTS / "golden" / "t7_bonus_provenance.csv").read_text()
    row_ok = p.rows == [(1, 101, 2000, 1, 101, 1000, False, True)]
    ok = row_ok and csv1 == golden and csv1 == csv2
    report(6, "T7 provenance row and byte-stable CSV", ok, csv1.splitlines()[1])
    assert row_ok and csv1 == golden and csv1 == csv2


# 7 -------------------------------------------------------------------------

CASES = 10_000


def test_criterion_7_algebraic_laws():
    rng = random.Random(7)
    failures = {"laws": 0, "idempotence": 0, "merge": 0, "filter": 0}
    Ks = (NAT, BOOL, PROV_POLY)
    for i in range(CASES):
        K = Ks[i % 3]
        a, b, c = (normalize(expr(rng, K), K) for _ in range(3))
        zero, one = NormalForm.zero(K), NormalForm.one(K)
        A = version_annotation(rng)
        laws = (
            (a + b) + c == a + (b + c), a + b == b + a, a + zero == a,
            (a * b) * c == a * (b * c), a * b == b * a, a * one == a, (a * zero).is_zero(),
            a * (b + c) == a * b + a * c, (a + b).wrap(A) == a.wrap(A) + b.wrap(A),
        )
        failures["laws"] += not all(laws)

        e = expr(rng, K, depth=4)
        n = normalize(e, K)
        failures["idempotence"] += normalize(n.to_expr(), K) != n or normalize(n, K) != n

        R = admissible_relation(rng, K)
        failures["merge"] += eval_version_merge(R, R) != R

        c1, c2 = version_condition(rng), version_condition(rng)
        failures["filter"] += (
            eval_version_filter(TRUE, R) != R
            or eval_version_filter(c1, eval_version_filter(c2, R)) != eval_version_filter(And(c1, c2), R)
        )
    ok = not any(failures.values())
    report(7, "semiring laws, normalization, merge and filter identities", ok,
           f"{CASES} cases each, failures {json.dumps(failures)}")
    assert ok, failures


# 8 -------------------------------------------------------------------------


def test_criterion_8_log_round_trip_and_positioned_errors():
    bad_trips = 0
    for H, _ in fuzzed(1000):
        if parse_log(serialize_log(H)) != H:
            bad_trips += 1
    example = parse_log(running_example_text())
    bad_trips += parse_log(serialize_log(example)) != example

    expected = json.loads((TESTS / "fixtures" / "malformed" / "expected.json").read_text())
    unpositioned = []
    for name in sorted(expected):
        try:
            parse_log((TESTS / "fixtures" / "malformed" / name).read_text())
            unpositioned.append(name)
        except LogError as e:
            if e.line < 1 or e.column < 1:
                unpositioned.append(name)
        except Exception:  # a crash counts as a failure
            unpositioned.append(name)
    ok = not bad_trips and not unpositioned
    report(8, "log round trip and positioned parse errors", ok,
           f"1001 histories, {bad_trips} mismatches; {len(expected)} malformed inputs, {len(unpositioned)} unpositioned")
    assert not bad_trips
    assert not unpositioned, unpositioned


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
