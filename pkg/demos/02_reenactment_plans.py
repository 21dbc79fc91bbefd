# Compile T7 two ways and check both against direct execution.
from importlib import resources

from reenactd import execute_history, parse_log, reenact_history, reenact_transaction, reenact_transaction_opt
from reenactd.relalg import eval_plan, eval_version_merge

H = parse_log(resources.files("reenactd").joinpath("data/running_example.log").read_text())
state = execute_history(H)
T7 = H.txn("T7")

chained = reenact_transaction(T7, H)
print(chained.render())
for rel, got in chained.evaluate(state).items():
    print(rel, "matches direct execution:", got == state.relation_in_txn(rel, "T7", T7.finish + 1))

# one read per relation, at the version committed just before T7 finished
single = reenact_transaction_opt(T7, H)
print(single.render())
for rel, got in single.evaluate(state).items():
    direct = eval_version_merge(state.relation_in_txn(rel, "T7", 26), state.committed_at(rel, 24))
    print(rel, "matches direct execution merged with concurrent commits:", got == direct)

# the whole history as a query over nothing stored
plans = reenact_history(H, 26)
print("stored versions read:", plans.access_profile or "none")
for rel, p in plans.plans.items():
    print(rel, eval_plan(p, {}, ids=state, semiring=H.semiring) == state.committed_at(rel, 26))
