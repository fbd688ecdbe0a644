"""Embedded record store: JSON documents in sqlite with per-table schemas.

Domain tables hold one JSON document per row plus a monotone version
counter; the series table additionally carries a separate PHI column so the
safe partition can be read and queried without ever touching PHI. Queries on
PHI fields require an explicit grant and are refused otherwise.

Audit and event rows are append-only with a global sequence, which is what
the pipeline-ordering assertions and audit exports rely on.
"""

from __future__ import annotations

import json
import sqlite3
import threading
import time
from dataclasses import dataclass, field

DOMAIN_TABLES = ("studies", "series", "cohorts", "projects", "users", "annotations", "audit", "models")

# Internal plumbing tables (idempotency ledger, auth tokens, dead letters...).
INTERNAL_TABLES = ("applied_keys", "dead_letter", "tokens", "notes", "events", "protocols", "proposals")

_REQUIRED_FIELDS = {
    "series": ("id",),
    "studies": ("id",),
    "projects": ("id",),
    "users": ("id",),
    "annotations": ("id",),
    "cohorts": ("id",),
    "models": ("id",),
}

_OPS = {
    "eq": "=",
    "ne": "!=",
    "lt": "<",
    "le": "<=",
    "gt": ">",
    "ge": ">=",
}


class RecordSchemaError(ValueError):
    pass


class AccessDeniedError(PermissionError):
    """PHI-partition access attempted without a grant."""


@dataclass(frozen=True)
class Predicate:
    field: str
    op: str  # eq ne lt le gt ge contains
    value: object


@dataclass(frozen=True)
class RecordQuery:
    table: str
    predicates: tuple = ()
    order_by: str | None = None
    descending: bool = False
    limit: int | None = None

    def __post_init__(self):
        object.__setattr__(
            self,
            "predicates",
            tuple(p if isinstance(p, Predicate) else Predicate(*p) for p in self.predicates),
        )


def _is_phi_field(name):
    return name == "phi" or name.startswith("phi.")


class RecordStore:
    def __init__(self, db_path):
        self.db_path = str(db_path)
        self._local = threading.local()
        self._init_schema()

    def _conn(self) -> sqlite3.Connection:
        conn = getattr(self._local, "conn", None)
        if conn is None:
            conn = sqlite3.connect(self.db_path, timeout=60.0)
            conn.execute("PRAGMA journal_mode=WAL")
            conn.execute("PRAGMA synchronous=NORMAL")
            conn.execute("PRAGMA busy_timeout=60000")
            # small per-connection page cache: many threads hold connections,
            # and server memory must stay flat in the user count
            conn.execute("PRAGMA cache_size=-256")
            self._local.conn = conn
        return conn

    def _init_schema(self):
        conn = self._conn()
        with conn:
            for table in DOMAIN_TABLES + INTERNAL_TABLES:
                if table in ("audit", "events"):
                    continue
                conn.execute(
                    f"CREATE TABLE IF NOT EXISTS t_{table} ("
                    "  id TEXT PRIMARY KEY,"
                    "  version INTEGER NOT NULL,"
                    "  doc TEXT NOT NULL,"
                    "  phi TEXT NOT NULL DEFAULT '{}')"
                )
            for table in ("audit", "events"):
                conn.execute(
                    f"CREATE TABLE IF NOT EXISTS t_{table} ("
                    "  seq INTEGER PRIMARY KEY AUTOINCREMENT,"
                    "  ts REAL NOT NULL,"
                    "  doc TEXT NOT NULL)"
                )

    def close(self):
        conn = getattr(self._local, "conn", None)
        if conn is not None:
            conn.close()
            self._local.conn = None

    @staticmethod
    def _check_table(table):
        if table not in DOMAIN_TABLES + INTERNAL_TABLES:
            raise RecordSchemaError(f"unknown table {table!r}")

    def upsert(self, table, record, phi=None):
        """Atomically insert or replace one record; returns the new version.

        The stored version increments on every write, so interleaved writers
        always leave some serial order behind (no torn records).
        """
        self._check_table(table)
        if table in ("audit", "events"):
            raise RecordSchemaError(f"{table} is append-only; use append()")
        for fld in _REQUIRED_FIELDS.get(table, ("id",)):
            if fld not in record:
                raise RecordSchemaError(f"{table} record missing required field {fld!r}")
        rid = str(record["id"])
        doc = json.dumps(record, separators=(",", ":"), sort_keys=True)
        phi_doc = json.dumps(phi or {}, separators=(",", ":"), sort_keys=True)
        conn = self._conn()
        with conn:
            row = conn.execute(
                f"INSERT INTO t_{table} (id, version, doc, phi) VALUES (?, 1, ?, ?) "
                "ON CONFLICT(id) DO UPDATE SET "
                "  version = version + 1, doc = excluded.doc, phi = excluded.phi "
                "RETURNING version",
                (rid, doc, phi_doc),
            ).fetchone()
        return int(row[0])

    def insert_if_absent(self, table, record, phi=None):
        """Insert only if the id is new; returns True when this call won."""
        self._check_table(table)
        rid = str(record["id"])
        doc = json.dumps(record, separators=(",", ":"), sort_keys=True)
        phi_doc = json.dumps(phi or {}, separators=(",", ":"), sort_keys=True)
        conn = self._conn()
        with conn:
            cur = conn.execute(
                f"INSERT OR IGNORE INTO t_{table} (id, version, doc, phi) VALUES (?, 1, ?, ?)",
                (rid, doc, phi_doc),
            )
        return cur.rowcount == 1

    def get(self, table, record_id, phi_grant=False):
        """Fetch one record; PHI partition attached only under a grant."""
        self._check_table(table)
        row = self._conn().execute(
            f"SELECT doc, phi, version FROM t_{table} WHERE id = ?", (str(record_id),)
        ).fetchone()
        if row is None:
            return None
        doc = json.loads(row[0])
        doc["_version"] = row[2]
        if phi_grant:
            doc["_phi"] = json.loads(row[1])
        return doc

    def delete(self, table, record_id):
        self._check_table(table)
        conn = self._conn()
        with conn:
            conn.execute(f"DELETE FROM t_{table} WHERE id = ?", (str(record_id),))

    def query(self, q: RecordQuery, phi_grant=False):
        """Run a predicate query; read-your-writes within one client.

        Predicates address document fields by dotted path; a `phi.` prefix
        addresses the PHI partition and is refused without a grant.
        """
        self._check_table(q.table)
        if q.table in ("audit", "events"):
            raise RecordSchemaError(f"{q.table} is append-only; use read_events()")
        clauses, params = [], []
        for p in q.predicates:
            if _is_phi_field(p.field):
                if not phi_grant:
                    raise AccessDeniedError(f"predicate on PHI field {p.field!r} without grant")
                column, path = "phi", p.field[len("phi.") :] if p.field != "phi" else ""
            else:
                column, path = "doc", p.field
            expr = f"json_extract({column}, '$.{path}')"
            if p.op in _OPS:
                clauses.append(f"{expr} {_OPS[p.op]} ?")
                params.append(p.value)
            elif p.op == "contains":
                clauses.append(f"{expr} LIKE ?")
                params.append(f"%{p.value}%")
            elif p.op == "in":
                vals = list(p.value)
                clauses.append(f"{expr} IN ({','.join('?' * len(vals))})")
                params.extend(vals)
            else:
                raise RecordSchemaError(f"unknown predicate op {p.op!r}")
        sql = f"SELECT doc, phi, version FROM t_{q.table}"
        if clauses:
            sql += " WHERE " + " AND ".join(clauses)
        if q.order_by:
            if _is_phi_field(q.order_by) and not phi_grant:
                raise AccessDeniedError(f"ordering on PHI field {q.order_by!r} without grant")
            sql += f" ORDER BY json_extract(doc, '$.{q.order_by}')"
            if q.descending:
                sql += " DESC"
        if q.limit is not None:
            sql += f" LIMIT {int(q.limit)}"
        out = []
        for doc, phi, version in self._conn().execute(sql, params):
            d = json.loads(doc)
            d["_version"] = version
            if phi_grant:
                d["_phi"] = json.loads(phi)
            out.append(d)
        return out

    def count(self, table):
        self._check_table(table)
        return self._conn().execute(f"SELECT COUNT(*) FROM t_{table}").fetchone()[0]

    # Append-only logs -------------------------------------------------

    def append(self, table, doc):
        if table not in ("audit", "events"):
            raise RecordSchemaError(f"{table} is not an append-only log")
        conn = self._conn()
        with conn:
            cur = conn.execute(
                f"INSERT INTO t_{table} (ts, doc) VALUES (?, ?)",
                (time.time(), json.dumps(doc, separators=(",", ":"), sort_keys=True)),
            )
        return cur.lastrowid

    def read_log(self, table, after_seq=0, limit=None):
        if table not in ("audit", "events"):
            raise RecordSchemaError(f"{table} is not an append-only log")
        sql = f"SELECT seq, ts, doc FROM t_{table} WHERE seq > ? ORDER BY seq"
        if limit is not None:
            sql += f" LIMIT {int(limit)}"
        rows = self._conn().execute(sql, (after_seq,)).fetchall()
        return [{"seq": seq, "ts": ts, **json.loads(doc)} for seq, ts, doc in rows]
