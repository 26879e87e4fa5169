import sqlite3
import json
from datetime import datetime

class HFNetDB:
    def __init__(self, db_path="hfnet.db"):
        self.db_path = db_path
        self.init_database()

    def get_connection(self):
        """Get database connection"""
        return sqlite3.connect(self.db_path)

    def init_database(self):
        """Initialize database with all required tables"""
        conn = self.get_connection()
        cursor = conn.cursor()

        # Runs table - one row per compiled/solved scenario
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                scenario_id TEXT NOT NULL,
                model_name TEXT,
                status TEXT DEFAULT 'started', -- 'started', 'optimal', 'infeasible', 'max-iterations', 'failed', 'dims-only'
                objective REAL,
                total_co2 REAL,
                out_dir TEXT,
                details TEXT, -- JSON with solver stats and verification summary
                started_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                finished_at TIMESTAMP
            )
        ''')

        # Audit log table - every agent action
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS audit_log (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                agent_name TEXT NOT NULL,
                action TEXT NOT NULL,
                run_id INTEGER,
                details TEXT, -- JSON with additional context
                timestamp TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                FOREIGN KEY (run_id) REFERENCES runs (id)
            )
        ''')

        conn.commit()
        conn.close()

    def log_audit(self, agent_name, action, run_id=None, details=None):
        """Log an action to the audit trail"""
        conn = self.get_connection()
        cursor = conn.cursor()

        details_json = json.dumps(details, default=str) if details else None

        cursor.execute('''
            INSERT INTO audit_log (agent_name, action, run_id, details)
            VALUES (?, ?, ?, ?)
        ''', (agent_name, action, run_id, details_json))

        conn.commit()
        conn.close()

    def insert_run(self, scenario_id, model_name=None, out_dir=None):
        """Open a run record"""
        conn = self.get_connection()
        cursor = conn.cursor()

        cursor.execute('''
            INSERT INTO runs (scenario_id, model_name, out_dir, started_at)
            VALUES (?, ?, ?, ?)
        ''', (scenario_id, model_name, out_dir, datetime.now().isoformat()))

        run_id = cursor.lastrowid
        conn.commit()
        conn.close()

        self.log_audit("Governance Agent", "RUN_STARTED", run_id, {
            "scenario_id": scenario_id,
            "model_name": model_name
        })

        return run_id

    def update_run(self, run_id, status, objective=None, total_co2=None, details=None):
        """Close a run record with its outcome"""
        conn = self.get_connection()
        cursor = conn.cursor()

        details_json = json.dumps(details, default=str) if details else None

        cursor.execute('''
            UPDATE runs
            SET status = ?, objective = ?, total_co2 = ?, details = ?, finished_at = ?
            WHERE id = ?
        ''', (status, objective, total_co2, details_json, datetime.now().isoformat(), run_id))

        conn.commit()
        conn.close()

    def get_runs(self, limit=20, scenario_id=None):
        """Get recent runs, newest first"""
        conn = self.get_connection()
        cursor = conn.cursor()

        if scenario_id is None:
            cursor.execute('''
                SELECT id, scenario_id, model_name, status, objective, total_co2, out_dir, started_at, finished_at
                FROM runs
                ORDER BY id DESC
                LIMIT ?
            ''', (limit,))
        else:
            cursor.execute('''
                SELECT id, scenario_id, model_name, status, objective, total_co2, out_dir, started_at, finished_at
                FROM runs
                WHERE scenario_id = ?
                ORDER BY id DESC
                LIMIT ?
            ''', (scenario_id, limit))

        results = cursor.fetchall()
        conn.close()

        return results

    def get_audit_log(self, limit=100, run_id=None):
        """Get recent audit log entries"""
        conn = self.get_connection()
        cursor = conn.cursor()

        if run_id is None:
            cursor.execute('''
                SELECT agent_name, action, run_id, details, timestamp
                FROM audit_log
                ORDER BY id DESC
                LIMIT ?
            ''', (limit,))
        else:
            cursor.execute('''
                SELECT agent_name, action, run_id, details, timestamp
                FROM audit_log
                WHERE run_id = ?
                ORDER BY id DESC
                LIMIT ?
            ''', (run_id, limit))

        results = cursor.fetchall()
        conn.close()

        return results

    def clear_all_data(self):
        """Purge runs and the audit trail.
        Order matters if foreign keys are enforced: audit_log -> runs.
        """
        conn = self.get_connection()
        cursor = conn.cursor()
        try:
            cursor.execute('DELETE FROM audit_log')
            cursor.execute('DELETE FROM runs')
            conn.commit()
        finally:
            conn.close()
