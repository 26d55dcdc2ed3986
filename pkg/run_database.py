"""
Render Run Database
Stores render runs and their error-versus-time logs for later comparison
"""

import sqlite3
from typing import Optional

import pandas as pd


class RunDatabase:
    def __init__(self, db_path='mlt_runs.db'):
        self.db_path = db_path
        self.init_database()

    def init_database(self):
        """Initialize the database with required tables"""
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        # One row per render
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS runs (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                created DATETIME DEFAULT CURRENT_TIMESTAMP,
                scene TEXT NOT NULL,
                strategy TEXT NOT NULL,
                perturbation TEXT NOT NULL,
                seed INTEGER NOT NULL,
                mutations INTEGER NOT NULL,
                seconds REAL,
                b REAL,
                mean_acceptance REAL,
                rrmse REAL,
                manifest TEXT
            )
        ''')

        # Error-versus-time rows of a render
        cursor.execute('''
            CREATE TABLE IF NOT EXISTS run_log (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                run_id INTEGER NOT NULL,
                time_s REAL NOT NULL,
                mutations INTEGER NOT NULL,
                rrmse REAL,
                mean_acceptance REAL,
                FOREIGN KEY (run_id) REFERENCES runs (id)
            )
        ''')

        conn.commit()
        conn.close()

    def record_run(self, scene, result, rrmse_value: Optional[float] = None):
        """Store a RenderResult and its run log; returns the new run id"""
        config = result.config
        conn = sqlite3.connect(self.db_path)
        cursor = conn.cursor()

        cursor.execute('''
            INSERT INTO runs (scene, strategy, perturbation, seed, mutations, seconds, b,
                              mean_acceptance, rrmse, manifest)
            VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
        ''', (scene, config.strategy, config.perturbation, config.seed, result.mutations,
              result.seconds, result.b, result.mean_acceptance, rrmse_value,
              '\n'.join(config.to_manifest())))
        run_id = cursor.lastrowid

        rows = [(run_id, row['time_s'], row['mutations'], row['rrmse'], row['mean_acceptance'])
                for row in result.run_log.rows]
        if rows:
            cursor.executemany('''
                INSERT INTO run_log (run_id, time_s, mutations, rrmse, mean_acceptance)
                VALUES (?, ?, ?, ?, ?)
            ''', rows)

        conn.commit()
        conn.close()

        return run_id

    def get_runs(self, scene=None, strategy=None):
        """All runs, optionally filtered by scene and strategy"""
        conn = sqlite3.connect(self.db_path)

        query = 'SELECT * FROM runs WHERE 1 = 1'
        params = []
        if scene is not None:
            query += ' AND scene = ?'
            params.append(scene)
        if strategy is not None:
            query += ' AND strategy = ?'
            params.append(strategy)
        query += ' ORDER BY id'

        df = pd.read_sql_query(query, conn, params=params)
        conn.close()
        return df

    def get_run_log(self, run_id):
        conn = sqlite3.connect(self.db_path)
        df = pd.read_sql_query('''
            SELECT time_s, mutations, rrmse, mean_acceptance
            FROM run_log
            WHERE run_id = ?
            ORDER BY mutations
        ''', conn, params=(run_id,))
        conn.close()
        return df

    def get_logs_with_strategy(self, scene=None):
        """Every run-log row joined with its run's strategy and seed"""
        conn = sqlite3.connect(self.db_path)

        query = '''
            SELECT runs.strategy, runs.seed, run_log.run_id, run_log.time_s,
                   run_log.mutations, run_log.rrmse, run_log.mean_acceptance
            FROM run_log
            JOIN runs ON runs.id = run_log.run_id
        '''
        params = []
        if scene is not None:
            query += ' WHERE runs.scene = ?'
            params.append(scene)
        query += ' ORDER BY run_log.run_id, run_log.mutations'

        df = pd.read_sql_query(query, conn, params=params)
        conn.close()
        return df
