# Provenance of T7's bonus update, as a flat table.
from importlib import resources

from reenactd import execute_history, parse_log, restrict_to_transaction, transaction_provenance
from reenactd.auditlog import parse_condition
from reenactd.provenance import filter_provenance

H = parse_log(resources.files("reenactd").joinpath("data/running_example.log").read_text())
state = execute_history(H)

# the derivation cut down to T7: t4@10 names the version T7 read
R = state.relation_in_txn("Bonus", "T7", 26)
print(restrict_to_transaction(R, "T7").to_text())

table = transaction_provenance(state, "Bonus", "T7")
print(table.to_csv())

# T8 inserted its row from an Employee tuple, so it has no Bonus input
print(transaction_provenance(state, "Bonus", "T8").to_csv())

# rows changed by the second statement whose input amount was at least 1000
print(filter_provenance(table, parse_condition('U2 AND "P(Bonus,Amount)" >= 1000')).to_json())
