# Differential testing: random histories, four checks, and a deliberately broken compiler.
from reenactd.relalg import UnionAll
from reenactd.verify import FuzzConfig, fuzz, generate_history, iteration_rng
from reenactd.auditlog import serialize_log

cfg = FuzzConfig(seed=7)
print(serialize_log(generate_history(cfg, iteration_rng(cfg.seed, 0))))

print(fuzz(cfg, iters=50).to_json())

# replacing the version merge by a plain union double-counts rows; the shrunk history shows why
broken = fuzz(cfg, iters=200, checks=["theorem1"], merge=UnionAll)
print(broken.status, broken.message)
print(broken.history)
print("expected:", broken.expected)
print("actual:  ", broken.actual)
