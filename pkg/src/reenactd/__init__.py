"""Provenance for past transactions under read-committed snapshot isolation.

Audit logs are executed over multi-version annotated relations, and any past
transaction can be reenacted as a query over committed relation versions.
"""
from .auditlog import LogError, parse_log, serialize_log
from .history import History, HistoryState, execute_history
from .mvsemiring import BOOL, NAT, PROV_POLY, NormalForm, normalize, parse_annotation
from .provenance import encode_relational, restrict_to_transaction, transaction_provenance
from .reenact import reenact_history, reenact_transaction, reenact_transaction_opt
from .relalg import AnnotatedRelation, Schema
from .verify import FuzzConfig, fuzz

__version__ = "0.1.0"

__all__ = [
    "AnnotatedRelation", "BOOL", "FuzzConfig", "History", "HistoryState", "LogError", "NAT",
    "NormalForm", "PROV_POLY", "Schema", "encode_relational", "execute_history", "fuzz",
    "normalize", "parse_annotation", "parse_log", "reenact_history", "reenact_transaction",
    "reenact_transaction_opt", "restrict_to_transaction", "serialize_log", "transaction_provenance",
]
