# Execute the employee/bonus audit log and look at tuple versions over time.
from importlib import resources

from reenactd import execute_history, parse_log

text = resources.files("reenactd").joinpath("data/running_example.log").read_text()
H = parse_log(text)
state = execute_history(H)

for T in H.transactions:
    print(f"{T.id}: starts {T.start}, commits {T.finish}, writes {T.relations()}")

# the seed data, once every loading transaction committed
print(state.dump(18))

# T7 and T8 overlap: T8's insert-select still sees Mark Smith as a Software Engineer
print(state.visible_to_update("Employee", "T8", 22).to_text())

# inside T7, before its commit
print(state.relation_in_txn("Bonus", "T7", 25).to_text())

# final committed state; every annotation records which transaction made which version
print(state.dump(26))
