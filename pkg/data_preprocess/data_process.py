import csv
import logging
import sqlite3

import pandas as pd

logger = logging.getLogger(__name__)

SWEEP_COLUMN_FORMATS = {
    "param_value": "REAL",
    "seed": "INTEGER",
    "final_wssr_nats": "REAL",
    "final_wssr_clamped_nats": "REAL",
    "iters": "INTEGER",
    "total_ms": "REAL",
}


def trace_column_formats(num_users: int) -> dict:
    """
    SQL column types of a trace CSV with `num_users` rate columns.
    """
    formats = {"iter": "INTEGER", "wssr_nats": "REAL", "wssr_clamped_nats": "REAL"}
    formats.update({f"rate_user_{k + 1}": "REAL" for k in range(num_users)})
    formats.update({"admm_iters": "INTEGER", "qp_iters": "INTEGER", "sdp_gap": "REAL", "wall_ms": "REAL"})
    return formats


class DataProcess:
    """
    SQLite archive of sweep and trace outputs.
    """
    def __init__(self):
        self.db_connection = None
        self.cursor = None

    def connect_db(self, db_dir: str = 'data/database.db'):
        """
        Connect to the SQLite database.
        Args:
            db_dir (str): Path to the SQLite database file.
        """
        self.db_connection = sqlite3.connect(db_dir)
        self.cursor = self.db_connection.cursor()

    def disconnect_db(self):
        """
        Close the connection to the SQLite database.
        """
        if self.db_connection is not None:
            self.db_connection.close()
            self.db_connection, self.cursor = None, None

    def create_db_table_from_csv(self, csv_dir: str, table_name: str, column_formats: dict, overwrite_table: bool = True):
        """
        Create a data table in the database from a CSV file.
        Args:
            csv_dir (str): Directory to the CSV file.
            table_name (str): Name of the data table to create.
            column_formats (dict): Dictionary of column names and their SQL data types.
            overwrite_table (bool): Whether to overwrite the existing table if it exists. Default is to overwrite (True).
        """
        if not column_formats:
            raise ValueError("column_formats dictionary must not be empty.")
        column_formats = {k.lower().replace(' ', '_'): v for k, v in column_formats.items()}
        column_format_sql = ', '.join([f"{k} {v}" for k, v in column_formats.items()])
        if overwrite_table:
            self.cursor.execute(f"DROP TABLE IF EXISTS {table_name}")
        self.cursor.execute(f"CREATE TABLE IF NOT EXISTS {table_name}({column_format_sql})")
        with open(csv_dir, 'r', newline='') as file:
            contents = csv.reader(file)
            header = next(contents)  # the column names come from column_formats
            if len(header) != len(column_formats):
                raise ValueError(f"{csv_dir} has {len(header)} columns, expected {len(column_formats)}.")
            # empty cells (e.g. a missing duality gap) are stored as NULL
            rows = [[value if value != '' else None for value in row] for row in contents]
            insert_records = f"INSERT INTO {table_name} ({', '.join(column_formats.keys())}) VALUES ({', '.join(['?'] * len(column_formats))})"
            self.cursor.executemany(insert_records, rows)
            self.db_connection.commit()
        logger.info("CSV file %s written into table %s (overwrite: %s)", csv_dir, table_name, overwrite_table)

    def archive_sweep(self, csv_dir: str, table_name: str = 'sweep', overwrite_table: bool = True):
        self.create_db_table_from_csv(csv_dir, table_name, SWEEP_COLUMN_FORMATS, overwrite_table)

    def archive_trace(self, csv_dir: str, num_users: int, table_name: str = 'trace', overwrite_table: bool = True):
        self.create_db_table_from_csv(csv_dir, table_name, trace_column_formats(num_users), overwrite_table)

    def get_data(self, query: str, params: tuple = ()) -> pd.DataFrame:
        """
        Query data from the SQLite database and return it as a pandas DataFrame. We must connect to the database before calling this function.
        Args:
            query (str): SQL query.
            params (tuple): Values bound to the query placeholders.
        Returns:
            pd.DataFrame: Pandas DataFrame containing the queried data.
        """
        return pd.read_sql_query(query, self.db_connection, params=params)
