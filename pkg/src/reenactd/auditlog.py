"""Reading and writing audit logs.

An audit log is a schema preamble followed by one timestamped statement per
line::

    -- comments start with two dashes
    TABLE Bonus(ID INT, EmpID INT, Amount INT)
    ANNOTATE variables

    21 | T7 | UPDATE Bonus SET Amount = Amount + 1000 WHERE EmpID = 101;
    25 | T7 | COMMIT;

``ANNOTATE variables`` gives every inserted VALUES row a fresh variable
``x1, x2, ...`` in log order; the default ``ANNOTATE one`` annotates them
with 1.  Supported statements: UPDATE ... SET ... [WHERE], INSERT INTO t
[(cols)] VALUES (...), ..., INSERT INTO t [(cols)] SELECT ... FROM s
[WHERE], DELETE FROM t [WHERE], COMMIT, and read-only SELECT ... [INTO v]
FROM t [WHERE], which is kept as a log entry but does not change any state.
Keywords are case-insensitive; names are case-sensitive.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .history import (
    Commit,
    Delete,
    History,
    IllFormedHistory,
    Insert,
    Transaction,
    Update,
    identity_assignments,
)
from .mvsemiring import PROV_POLY, BaseSemiring, Polynomial
from .relalg import (
    INT,
    STRING,
    TRUE,
    And,
    Arith,
    BaseRel,
    Cmp,
    Col,
    Const,
    Not,
    Or,
    Project,
    Schema,
    SchemaError,
    Select,
    Singleton,
    TypeMismatch,
    UnionAll,
    compile_condition,
    compile_expr,
    render_expr,
    render_value,
)


class LogError(Exception):
    """A problem in an audit log, located at a 1-based line and column."""

    kind = "error"

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column

    def to_json(self) -> str:
        return json.dumps(
            {"error": self.kind, "message": self.message, "line": self.line, "column": self.column}
        )


class LogSyntaxError(LogError):
    kind = "syntax"

    def __init__(self, expected: str, found: str, line: int, column: int):
        super().__init__(f"expected {expected}, found {found}", line, column)
        self.expected = expected
        self.found = found


class UnknownTable(LogError):
    kind = "unknown-table"


class UnknownColumn(LogError):
    kind = "unknown-column"


class LogTypeError(LogError):
    kind = "type"


class DuplicateTimestamp(LogError):
    kind = "duplicate-timestamp"


class StatementAfterCommit(LogError):
    kind = "statement-after-commit"


class MissingCommit(LogError):
    kind = "missing-commit"


# ---------------------------------------------------------------------------
# tokens

_TOKEN = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<num>\d+)"
    r"|(?P<str>'(?:[^']|'')*')"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r'|(?P<qname>"(?:[^"]|"")*")'
    r"|(?P<sym><>|<=|>=|!=|[(),;*+\-=<>|])"
)

KEYWORDS = {
    "TABLE", "ANNOTATE", "UPDATE", "SET", "WHERE", "INSERT", "INTO", "VALUES",
    "SELECT", "FROM", "DELETE", "COMMIT", "AND", "OR", "NOT", "TRUE", "FALSE", "AS",
}


@dataclass(frozen=True)
class Token:
    kind: str  # num, str, name, kw, sym, end
    value: object
    line: int
    column: int

    def show(self) -> str:
        if self.kind == "end":
            return "end of line"
        if self.kind == "str":
            return render_value(self.value)
        return repr(str(self.value))


def tokenize(text: str, line: int, offset: int = 0) -> list[Token]:
    out = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise LogSyntaxError("a token", repr(text[pos]), line, offset + pos + 1)
        kind = m.lastgroup
        raw = m.group()
        col = offset + pos + 1
        pos = m.end()
        if kind == "ws":
            continue
        if kind == "num":
            out.append(Token("num", int(raw), line, col))
        elif kind == "str":
            out.append(Token("str", raw[1:-1].replace("''", "'"), line, col))
        elif kind == "name" and raw.upper() in KEYWORDS:
            out.append(Token("kw", raw.upper(), line, col))
        elif kind == "name":
            out.append(Token("name", raw, line, col))
        elif kind == "qname":
            out.append(Token("name", raw[1:-1].replace('""', '"'), line, col))
        else:
            out.append(Token("sym", "<>" if raw == "!=" else raw, line, col))
    out.append(Token("end", None, line, offset + len(text) + 1))
    return out


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0
        self.columns: list[tuple[str, Token]] = []

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def fail(self, expected: str):
        raise LogSyntaxError(expected, self.tok.show(), self.tok.line, self.tok.column)

    def at(self, kind: str, value=None) -> bool:
        t = self.tok
        return t.kind == kind and (value is None or t.value == value)

    def accept(self, kind: str, value=None):
        if self.at(kind, value):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, kind: str, value=None, what: str = None) -> Token:
        t = self.accept(kind, value)
        if t is None:
            self.fail(what or (value if value is not None else kind))
        return t

    def name(self, what: str) -> Token:
        return self.expect("name", what=what)

    def end(self) -> None:
        self.accept("sym", ";")
        self.expect("end", what="end of statement")

    # expressions ------------------------------------------------------------
    def condition(self):
        e = self.conjunction()
        while self.accept("kw", "OR"):
            e = Or(e, self.conjunction())
        return e

    def conjunction(self):
        e = self.negation()
        while self.accept("kw", "AND"):
            e = And(e, self.negation())
        return e

    def negation(self):
        if self.accept("kw", "NOT"):
            return Not(self.negation())
        return self.comparison()

    def comparison(self):
        e = self.arith()
        if self.tok.kind == "sym" and self.tok.value in ("=", "<>", "<", "<=", ">", ">="):
            op = self.tok.value
            self.i += 1
            e = Cmp(op, e, self.arith())
        return e

    def arith(self):
        e = self.term()
        while self.tok.kind == "sym" and self.tok.value in ("+", "-"):
            op = self.tok.value
            self.i += 1
            e = Arith(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.accept("sym", "*"):
            e = Arith("*", e, self.unary())
        return e

    def unary(self):
        if self.accept("sym", "-"):
            inner = self.unary()
            if isinstance(inner, Const) and isinstance(inner.value, int) and not isinstance(inner.value, bool):
                return Const(-inner.value)
            return Arith("-", Const(0), inner)
        return self.primary()

    def primary(self):
        t = self.tok
        if t.kind == "num" or t.kind == "str":
            self.i += 1
            return Const(t.value)
        if t.kind == "kw" and t.value in ("TRUE", "FALSE"):
            self.i += 1
            return Const(t.value == "TRUE")
        if t.kind == "name":
            self.i += 1
            self.columns.append((t.value, t))
            return Col(t.value)
        if self.accept("sym", "("):
            e = self.condition()
            self.expect("sym", ")")
            return e
        self.fail("an expression")


# ---------------------------------------------------------------------------
# statements


@dataclass(frozen=True)
class UpdateStmt:
    table: str
    sets: tuple  # ((attr, expr), ...)
    where: object


@dataclass(frozen=True)
class InsertValues:
    table: str
    columns: tuple
    rows: tuple


@dataclass(frozen=True)
class SelectStmt:
    items: tuple  # ((expr, alias or None), ...)
    table: str
    where: object
    into: str = None


@dataclass(frozen=True)
class InsertQuery:
    table: str
    columns: tuple
    select: SelectStmt


@dataclass(frozen=True)
class DeleteStmt:
    table: str
    where: object


@dataclass(frozen=True)
class CommitStmt:
    pass


@dataclass
class AuditEntry:
    time: int
    txn: str
    stmt: str
    ast: object
    parsed: object = None  # the lowered operation; None for reads
    line: int = 0


@dataclass
class AuditLog:
    schemas: dict
    entries: list = field(default_factory=list)
    annotate: str = "one"


def _parse_statement(p: _Parser, schemas: dict):
    t = p.tok
    if p.accept("kw", "COMMIT"):
        p.end()
        return CommitStmt(), t
    if p.accept("kw", "UPDATE"):
        table = _table(p, schemas)
        p.expect("kw", "SET")
        sets = []
        while True:
            col = p.name("a column name")
            p.columns.append((col.value, col))
            p.expect("sym", "=")
            sets.append((col.value, p.arith()))
            if not p.accept("sym", ","):
                break
        where = p.condition() if p.accept("kw", "WHERE") else TRUE
        p.end()
        return UpdateStmt(table.value, tuple(sets), where), table
    if p.accept("kw", "DELETE"):
        p.expect("kw", "FROM")
        table = _table(p, schemas)
        where = p.condition() if p.accept("kw", "WHERE") else TRUE
        p.end()
        return DeleteStmt(table.value, where), table
    if p.accept("kw", "INSERT"):
        p.expect("kw", "INTO")
        table = _table(p, schemas)
        columns = ()
        nxt = p.toks[p.i + 1] if p.i + 1 < len(p.toks) else None
        if p.at("sym", "(") and not (nxt.kind == "kw" and nxt.value == "SELECT"):
            p.i += 1
            cols = []
            while True:
                c = p.name("a column name")
                p.columns.append((c.value, c))
                cols.append(c.value)
                if not p.accept("sym", ","):
                    break
            p.expect("sym", ")")
            columns = tuple(cols)
        if p.accept("kw", "VALUES"):
            rows = []
            while True:
                p.expect("sym", "(")
                row = []
                while True:
                    row.append(_literal(p))
                    if not p.accept("sym", ","):
                        break
                p.expect("sym", ")")
                rows.append(tuple(row))
                if not p.accept("sym", ","):
                    break
            p.end()
            return InsertValues(table.value, columns, tuple(rows)), table
        paren = p.accept("sym", "(")
        if not p.at("kw", "SELECT"):
            p.fail("VALUES or SELECT")
        select = _select(p, schemas, into_allowed=False)
        if paren:
            p.expect("sym", ")")
        p.end()
        return InsertQuery(table.value, columns, select), table
    if p.at("kw", "SELECT"):
        select = _select(p, schemas, into_allowed=True)
        p.end()
        return select, t
    p.fail("UPDATE, INSERT, DELETE, SELECT or COMMIT")


def _table(p: _Parser, schemas: dict) -> Token:
    t = p.name("a table name")
    if t.value not in schemas:
        raise UnknownTable(f"unknown table {t.value}", t.line, t.column)
    return t


def _literal(p: _Parser):
    e = p.unary()
    if not isinstance(e, Const):
        raise LogSyntaxError("a literal", "an expression", p.tok.line, p.tok.column)
    return e.value


def _select(p: _Parser, schemas: dict, into_allowed: bool) -> SelectStmt:
    p.expect("kw", "SELECT")
    items = []
    if p.accept("sym", "*"):
        items = None
    else:
        while True:
            e = p.arith()
            alias = p.name("an alias").value if p.accept("kw", "AS") else None
            items.append((e, alias))
            if not p.accept("sym", ","):
                break
    into = None
    if into_allowed and p.accept("kw", "INTO"):
        into = p.name("a variable name").value
    p.expect("kw", "FROM")
    table = _table(p, schemas)
    where = p.condition() if p.accept("kw", "WHERE") else TRUE
    if items is None:
        items = [(Col(a), None) for a in schemas[table.value].names]
    return SelectStmt(tuple(items), table.value, where, into)


# ---------------------------------------------------------------------------
# lowering


class _Lowering:
    def __init__(self, schemas: dict, annotate: str):
        self.schemas = schemas
        self.annotate = annotate
        self.counter = 0

    def annotation(self):
        if self.annotate == "variables":
            self.counter += 1
            return Polynomial.var(f"x{self.counter}")
        return 1

    def lower(self, ast, txn: str, time: int):
        if isinstance(ast, CommitStmt):
            return Commit(txn, time)
        if isinstance(ast, UpdateStmt):
            schema = self.schemas[ast.table]
            seen = set()
            for a, _ in ast.sets:
                if a in seen:
                    raise SchemaError(f"column {a} is assigned twice")
                seen.add(a)
            return Update(ast.table, ast.where, identity_assignments(schema, dict(ast.sets)), txn, time)
        if isinstance(ast, DeleteStmt):
            return Delete(ast.table, ast.where, txn, time)
        if isinstance(ast, InsertValues):
            schema = self.schemas[ast.table]
            order = self._order(schema, ast.columns)
            plan = None
            for row in ast.rows:
                if len(row) != len(schema.names):
                    raise SchemaError(f"row has {len(row)} values, {ast.table} has {len(schema.names)} columns")
                values = tuple(row[order[a]] for a in schema.names)
                schema.check_tuple(values)
                leaf = Singleton(schema, values, self.annotation())
                plan = leaf if plan is None else UnionAll(plan, leaf)
            return Insert(ast.table, plan, txn, time)
        if isinstance(ast, InsertQuery):
            schema = self.schemas[ast.table]
            sel = ast.select
            if len(sel.items) != len(schema.names):
                raise SchemaError(f"select has {len(sel.items)} columns, {ast.table} has {len(schema.names)}")
            order = self._order(schema, ast.columns)
            exprs = tuple((sel.items[order[a]][0], a) for a in schema.names)
            return Insert(ast.table, Project(exprs, Select(sel.where, BaseRel(sel.table))), txn, time)
        return None  # read-only select

    @staticmethod
    def _order(schema: Schema, columns: tuple) -> dict:
        if not columns:
            return {a: i for i, a in enumerate(schema.names)}
        if sorted(columns) != sorted(schema.names):
            raise SchemaError(f"column list must name every column of {schema.name} exactly once")
        return {a: i for i, a in enumerate(columns)}


def _check_types(ast, schemas: dict) -> None:
    if isinstance(ast, UpdateStmt):
        s = schemas[ast.table]
        compile_condition(ast.where, s)
        for a, e in ast.sets:
            if compile_expr(e, s)[1] != s.type_of(a):
                raise TypeMismatch(f"{a} is {s.type_of(a)}")
    elif isinstance(ast, DeleteStmt):
        compile_condition(ast.where, schemas[ast.table])
    elif isinstance(ast, SelectStmt):
        s = schemas[ast.table]
        compile_condition(ast.where, s)
        for e, _ in ast.items:
            compile_expr(e, s)
    elif isinstance(ast, InsertQuery):
        _check_types(ast.select, schemas)


_ENTRY = re.compile(r"^\s*(\d+)\s*\|\s*([A-Za-z_][A-Za-z0-9_]*)\s*\|(.*)$")


def parse_audit(text: str) -> AuditLog:
    """Parse a log into schemas and entries (reads included), without building a History."""
    schemas: dict[str, Schema] = {}
    log = AuditLog(schemas)
    lowering = None
    times: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = _strip_comment(raw)
        if not body.strip():
            continue
        m = _ENTRY.match(body)
        if m is None:
            if lowering is not None:
                toks = tokenize(body, lineno)
                raise LogSyntaxError("an entry 'time | txn | statement'", toks[0].show(), lineno, toks[0].column)
            _preamble(body, lineno, log)
            continue
        if lowering is None:
            lowering = _Lowering(schemas, log.annotate)
        time, txn, stmt = int(m.group(1)), m.group(2), m.group(3)
        if time in times:
            raise DuplicateTimestamp(f"time {time} already used on line {times[time]}", lineno, m.start(1) + 1)
        times[time] = lineno
        p = _Parser(tokenize(stmt, lineno, m.start(3)))
        ast, anchor = _parse_statement(p, schemas)
        _resolve_columns(ast, p.columns, schemas)
        try:
            _check_types(ast, schemas)
            op = lowering.lower(ast, txn, time)
        except (TypeMismatch, SchemaError) as e:
            raise LogTypeError(str(e), lineno, anchor.column) from None
        log.entries.append(AuditEntry(time, txn, stmt.strip(), ast, op, lineno))
    return log


def _strip_comment(raw: str) -> str:
    # drop a trailing "--" comment that is not inside a string literal
    quoted = False
    for i, ch in enumerate(raw):
        if ch == "'":
            quoted = not quoted
        elif not quoted and raw.startswith("--", i):
            return raw[:i]
    return raw


def _resolve_columns(ast, refs: list, schemas: dict) -> None:
    if isinstance(ast, InsertQuery):
        target = schemas[ast.table]
        source = schemas[ast.select.table]
        n_target = len(ast.columns)
        for i, (name, tok) in enumerate(refs):
            s = target if i < n_target else source
            if name not in s.names:
                raise UnknownColumn(f"unknown column {name} in {s.name}", tok.line, tok.column)
        return
    table = getattr(ast, "table", None)
    if table is None:
        return
    s = schemas[table]
    for name, tok in refs:
        if name not in s.names:
            raise UnknownColumn(f"unknown column {name} in {s.name}", tok.line, tok.column)


def _preamble(body: str, lineno: int, log: AuditLog) -> None:
    p = _Parser(tokenize(body, lineno))
    if p.accept("kw", "ANNOTATE"):
        t = p.name("'variables' or 'one'")
        if t.value.lower() not in ("variables", "one"):
            raise LogSyntaxError("'variables' or 'one'", t.show(), t.line, t.column)
        log.annotate = t.value.lower()
        p.end()
        return
    if not p.accept("kw", "TABLE"):
        p.fail("TABLE, ANNOTATE or an entry")
    name = p.name("a table name")
    if name.value in log.schemas:
        raise LogSyntaxError("a new table name", name.show(), name.line, name.column)
    p.expect("sym", "(")
    attrs = []
    while True:
        col = p.name("a column name")
        ty = p.name("INT or STRING")
        if ty.value.upper() not in (INT, STRING):
            raise LogSyntaxError("INT or STRING", ty.show(), ty.line, ty.column)
        if col.value in [a for a, _ in attrs]:
            raise LogSyntaxError("a new column name", col.show(), col.line, col.column)
        attrs.append((col.value, ty.value.upper()))
        if not p.accept("sym", ","):
            break
    p.expect("sym", ")")
    p.end()
    log.schemas[name.value] = Schema(name.value, tuple(attrs))


def build_history(log: AuditLog, semiring: BaseSemiring = PROV_POLY) -> History:
    by_txn: dict[str, list[AuditEntry]] = {}
    for e in sorted(log.entries, key=lambda e: e.time):
        by_txn.setdefault(e.txn, []).append(e)
    txns = []
    for tid, entries in by_txn.items():
        ops = []
        committed = None
        for e in entries:
            if committed is not None:
                raise StatementAfterCommit(f"{tid} committed at {committed.time}", e.line, 1)
            if isinstance(e.ast, CommitStmt):
                committed = e
            if e.parsed is not None:
                ops.append(e.parsed)
        if committed is None:
            last = entries[-1]
            raise MissingCommit(f"transaction {tid} never commits", last.line, 1)
        txns.append(Transaction(tid, tuple(ops)))
    txns.sort(key=lambda T: T.start)
    try:
        return History(log.schemas, txns, semiring, log.annotate)
    except (IllFormedHistory, TypeMismatch) as e:
        raise LogError(str(e)) from None


def parse_condition(text: str):
    """Parse a standalone condition, e.g. ``U2 AND "P(Bonus,Amount)" >= 1000``."""
    p = _Parser(tokenize(text, 1))
    cond = p.condition()
    p.expect("end", what="end of condition")
    return cond


def parse_log(text: str, semiring: BaseSemiring = PROV_POLY) -> History:
    """Parse an audit log into a History; raises a positioned LogError on bad input."""
    return build_history(parse_audit(text), semiring)


# ---------------------------------------------------------------------------
# serialization


def _q(name: str) -> str:
    """A table or column name as the tokenizer reads it back."""
    if _PLAIN_NAME.fullmatch(name) and name.upper() not in KEYWORDS:
        return name
    return '"' + name.replace('"', '""') + '"'


_PLAIN_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def serialize_log(history: History) -> str:
    """Render a history in the log format; ``parse_log`` inverts this."""
    lines = [
        f"TABLE {_q(s.name)}(" + ", ".join(f"{_q(a)} {t}" for a, t in s.attrs) + ")"
        for s in history.schemas.values()
    ]
    if history.annotate == "variables":
        lines.append("ANNOTATE variables")
    counter = 0
    entries = []
    for op in history.ops():
        stmt, counter = _render_op(op, history, counter)
        entries.append(f"{op.time} | {op.txn} | {stmt};")
    if entries:
        lines.append("")
        lines += entries
    return "\n".join(lines) + "\n" if lines else ""


def _where(cond) -> str:
    return "" if cond == TRUE else f" WHERE {render_expr(cond)}"


def _render_op(op, history: History, counter: int) -> tuple[str, int]:
    if isinstance(op, Commit):
        return "COMMIT", counter
    if isinstance(op, Update):
        sets = [(a, e) for e, a in op.assignments if e != Col(a)] or [(op.assignments[0][1], op.assignments[0][0])]
        body = ", ".join(f"{_q(a)} = {render_expr(e)}" for a, e in sets)
        return f"UPDATE {_q(op.rel)} SET {body}{_where(op.cond)}", counter
    if isinstance(op, Delete):
        return f"DELETE FROM {_q(op.rel)}{_where(op.cond)}", counter
    schema = history.schemas[op.rel]
    cols = ", ".join(_q(a) for a in schema.names)
    q = op.query
    if isinstance(q, Project) and isinstance(q.child, Select) and isinstance(q.child.child, BaseRel):
        items = ", ".join(render_expr(e) for e, _ in q.exprs)
        source = _q(q.child.child.name)
        return f"INSERT INTO {_q(op.rel)} ({cols}) SELECT {items} FROM {source}{_where(q.child.cond)}", counter
    leaves = []
    while isinstance(q, UnionAll) and isinstance(q.right, Singleton):
        leaves.append(q.right)
        q = q.left
    if not isinstance(q, Singleton):
        raise ValueError(f"insert at {op.time} has a query the log format cannot express")
    leaves.append(q)
    leaves.reverse()
    for leaf in leaves:
        counter += 1
        expected = Polynomial.var(f"x{counter}") if history.annotate == "variables" else 1
        if leaf.annotation != expected:
            raise ValueError(f"insert at {op.time} has annotation {leaf.annotation}, the log implies {expected}")
    rows = ", ".join("(" + ", ".join(render_value(v) for v in leaf.values) + ")" for leaf in leaves)
    return f"INSERT INTO {_q(op.rel)} ({cols}) VALUES {rows}", counter
