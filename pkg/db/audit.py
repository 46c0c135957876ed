"""
Audit Log
SQLite database recording every CLI invocation and its key metrics.
"""

import os
import sqlite3
from datetime import datetime, timezone

DEFAULT_DB_PATH = os.path.join(os.path.dirname(__file__), "audit.db")


def db_path() -> str:
    """SALAD_AUDIT_DB if set, else db/audit.db next to this module."""
    return os.environ.get("SALAD_AUDIT_DB") or DEFAULT_DB_PATH


def get_connection():
    conn = sqlite3.connect(db_path())
    conn.row_factory = sqlite3.Row
    return conn


def init_db():
    conn = get_connection()
    conn.execute("""
        CREATE TABLE IF NOT EXISTS run_log (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            subcommand TEXT,
            scenario TEXT,
            adapter TEXT,
            seed INTEGER,
            status TEXT DEFAULT 'ok',
            long_term_bler REAL,
            normalized_tp REAL,
            adaptation_time INTEGER,
            output_dir TEXT,
            detail TEXT,
            created_at TEXT
        )
    """)
    conn.commit()
    conn.close()


def log_run(subcommand: str, scenario: str = None, adapter: str = None, seed: int = None,
            status: str = "ok", metrics: dict = None, output_dir: str = None, detail: str = None):
    """Record one CLI invocation."""
    metrics = metrics or {}
    conn = get_connection()
    conn.execute(
        """
        INSERT INTO run_log
            (subcommand, scenario, adapter, seed, status, long_term_bler,
             normalized_tp, adaptation_time, output_dir, detail, created_at)
        VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
        """,
        (
            subcommand,
            scenario,
            adapter,
            seed,
            status,
            metrics.get("long_term_bler"),
            metrics.get("normalized_tp"),
            metrics.get("adaptation_time"),
            output_dir,
            detail,
            datetime.now(timezone.utc).isoformat(),
        ),
    )
    conn.commit()
    conn.close()


def get_all_logs():
    """Retrieve all run log entries, newest first."""
    conn = get_connection()
    rows = conn.execute("SELECT * FROM run_log ORDER BY id DESC").fetchall()
    conn.close()
    return [dict(row) for row in rows]


if __name__ == "__main__":
    init_db()
    print(f"Database initialized at {db_path()}")

    for log in get_all_logs()[:20]:
        print(f"  [{log['created_at']}] {log['subcommand']} {log['scenario'] or '-'} "
              f"{log['adapter'] or '-'} seed={log['seed']} → {log['status']}")
