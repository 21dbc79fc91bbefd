"""reenactd: execute audit logs, reenact past transactions, export their provenance."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .auditlog import LogError, parse_condition, parse_log
from .history import IllFormedHistory, LockViolation, UnknownRelation, UnknownTransaction, execute_history
from .mvsemiring import BOOL, NAT, PROV_POLY, ones_hom
from .provenance import filter_provenance, transaction_provenance
from .reenact import OptimizationInapplicable, reenact_transaction, reenact_transaction_opt
from .relalg import SchemaError, TypeMismatch, eval_version_merge
from .verify import CHECKS, FuzzConfig, fuzz

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SEMIRING_NAMES = {"prov": PROV_POLY, "nat": NAT, "bool": BOOL}


class UsageError(Exception):
    pass


def _error(kind: str, message: str, line: int = None, column: int = None) -> str:
    d = {"error": kind, "message": message}
    if line is not None:
        d.update(line=line, column=column)
    return json.dumps(d)


def _load(args):
    path = Path(args.log)
    if not path.is_file():
        raise UsageError(f"no such log file: {args.log}")
    H = parse_log(path.read_text(encoding="utf-8"))
    if args.semiring != "prov":
        # drop the variables: every inserted row counts once
        H = H.map(ones_hom(SEMIRING_NAMES[args.semiring]))
    return H, execute_history(H)


def cmd_run(args, out) -> int:
    H, state = _load(args)
    times = args.dump_at or [H.horizon + 1]
    for i, t in enumerate(times):
        if len(times) > 1:
            out.write(f"-- committed at {t}\n")
        out.write(state.dump(t))
        if i + 1 < len(times):
            out.write("\n")
    return EXIT_OK


def cmd_history(args, out) -> int:
    H, state = _load(args)
    if args.txn:
        H.txn(args.txn)
    out.write(state.dump(args.at, args.txn))
    return EXIT_OK


def cmd_reenact(args, out) -> int:
    H, state = _load(args)
    T = H.txn(args.txn)
    rp = reenact_transaction_opt(T, H) if args.opt else reenact_transaction(T, H)
    out.write(rp.render())
    if args.plan_only:
        return EXIT_OK
    status = EXIT_OK
    for rel, got in rp.evaluate(state).items():
        direct = state.relation_in_txn(rel, T.id, T.finish + 1)
        if args.opt:
            direct = eval_version_merge(direct, state.committed_at(rel, T.finish - 1))
        same = got == direct
        out.write("\n" + got.to_text() + "\n")
        out.write(f"equivalent to direct execution: {'yes' if same else 'NO'}\n")
        if not same:
            status = EXIT_FAIL
    return status


def cmd_provenance(args, out) -> int:
    H, state = _load(args)
    T = H.txn(args.txn)
    rels = [args.rel] if args.rel else T.relations()
    cond = parse_condition(args.filter) if args.filter else None
    tables = []
    for rel in rels:
        H.schema(rel)
        p = transaction_provenance(state, rel, T.id)
        tables.append(filter_provenance(p, cond) if cond is not None else p)
    if args.format == "json":
        payload = tables[0].to_dict() if len(tables) == 1 else [p.to_dict() for p in tables]
        out.write(json.dumps(payload, indent=2) + "\n")
        return EXIT_OK
    for i, p in enumerate(tables):
        if len(tables) > 1:
            out.write(("\n" if i else "") + f"# {p.relation}\n")
        out.write(p.to_csv())
    return EXIT_OK


def cmd_verify(args, out) -> int:
    cfg = FuzzConfig(
        seed=args.seed,
        max_txns=args.max_txns,
        max_ops_per_txn=args.max_ops,
        max_relations=args.relations,
        value_domain=args.domain,
        max_tuples=args.max_tuples,
    )
    try:
        cfg.validate()
    except ValueError as e:
        raise UsageError(str(e)) from None
    checks = CHECKS if args.check == "all" else (args.check,)
    verdict = fuzz(cfg, args.iters, checks)
    out.write(verdict.to_json() + "\n")
    return EXIT_OK if verdict.ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reenactd", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def with_log(p):
        p.add_argument("--log", required=True, help="audit log file")
        p.add_argument("--semiring", choices=sorted(SEMIRING_NAMES), default="prov",
                       help="annotation semiring (default: provenance polynomials)")
        return p

    p = with_log(sub.add_parser("run", help="execute a log and print committed relations"))
    p.add_argument("--dump-at", type=int, action="append", metavar="NU",
                   help="time to dump (repeatable); default: after the last commit")
    p.set_defaults(fn=cmd_run)

    p = with_log(sub.add_parser("history", aliases=["dump"], help="print one snapshot"))
    p.add_argument("--at", type=int, required=True, metavar="NU")
    p.add_argument("--txn", help="show the relations as this transaction sees them")
    p.set_defaults(fn=cmd_history)

    p = with_log(sub.add_parser("reenact", help="compile (and evaluate) a transaction's reenactment"))
    p.add_argument("--txn", required=True)
    p.add_argument("--opt", action="store_true", help="single-read form (VALUES inserts only)")
    p.add_argument("--plan-only", action="store_true")
    p.set_defaults(fn=cmd_reenact)

    p = with_log(sub.add_parser("provenance", help="a transaction's provenance as a table"))
    p.add_argument("--txn", required=True)
    p.add_argument("--rel", help="only this relation (default: every relation the transaction wrote)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--filter", metavar="COND", help='row condition, e.g. \'U2 AND "P(Bonus,Amount)" >= 1000\'')
    p.set_defaults(fn=cmd_provenance)

    p = sub.add_parser("verify", help="fuzz histories and check the reenactment guarantees")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--max-txns", type=int, default=4)
    p.add_argument("--max-ops", type=int, default=6)
    p.add_argument("--relations", type=int, default=2)
    p.add_argument("--domain", type=int, default=8)
    p.add_argument("--max-tuples", type=int, default=12)
    p.add_argument("--check", choices=[*CHECKS, "all"], default="all")
    p.set_defaults(fn=cmd_verify)
    return ap


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return args.fn(args, out)
    except LogError as e:
        err.write(e.to_json() + "\n")
    except LockViolation as e:
        err.write(_error("lock-violation", str(e)) + "\n")
    except IllFormedHistory as e:
        err.write(_error("ill-formed-history", str(e)) + "\n")
    except (UnknownTransaction, UnknownRelation) as e:
        what = "transaction" if isinstance(e, UnknownTransaction) else "relation"
        err.write(_error("unknown-name", f"unknown {what} {e.args[0] if e.args else ''}".strip()) + "\n")
    except OptimizationInapplicable as e:
        err.write(_error("optimization-inapplicable", str(e)) + "\n")
    except (TypeMismatch, SchemaError) as e:
        err.write(_error("type", str(e)) + "\n")
    except UsageError as e:
        err.write(_error("usage", str(e)) + "\n")
    return EXIT_USAGE


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
