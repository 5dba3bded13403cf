#!/usr/bin/env python3
"""
Experiment Reports

Collects per-seed metric rows, averages them over seeds and writes a JSON
report plus CSV tables (sweep values down, attack F1 and HR@K across).
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List

import pandas as pd

logger = logging.getLogger(__name__)

REPORT_JSON = "report.json"
TABLE_CSV = "table.csv"
ROWS_CSV = "rows.csv"
FLOAT_FORMAT = "%.12g"

# Sweeps whose table gets an across-value average row
AVERAGED_SWEEPS = ("model.latent_dim",)

ROW_COLUMNS = ["sweep_value", "seed", "attack", "f1", "sensitive_f1", "hr_at_k", "users"]


@dataclass
class EvalReport:
    """
    Metrics of one experiment.

    Attributes:
        config_hash (str): Hash of the validated configuration
        version (str): Version of the code that produced the report
        config (dict): The configuration itself
        sweep_key (str): Swept config key, or None
        top_k (int): K of the hit ratio
        rows (list): One dict per (sweep value, seed, attack) with the
            aggregate F1, sensitive F1 and HR@K over users
        users (list): Per-user records
    """

    config_hash: str
    version: str
    config: Dict[str, Any]
    sweep_key: Any = None
    top_k: int = 10
    rows: List[Dict[str, Any]] = field(default_factory=list)
    users: List[Dict[str, Any]] = field(default_factory=list)

    def add_row(self, sweep_value, seed, attack, f1, sensitive_f1, hr, users):
        self.rows.append({
            'sweep_value': sweep_value,
            'seed': seed,
            'attack': attack,
            'f1': f1,
            'sensitive_f1': sensitive_f1,
            'hr_at_k': hr,
            'users': users,
        })

    def to_dict(self):
        return {
            'config_hash': self.config_hash,
            'version': self.version,
            'config': self.config,
            'sweep_key': self.sweep_key,
            'top_k': self.top_k,
            'rows': self.rows,
            'users': self.users,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data['config_hash'], data['version'], data['config'], data.get('sweep_key'),
                   data.get('top_k', 10), list(data.get('rows', [])), list(data.get('users', [])))

    def frame(self):
        """Per-seed rows as a DataFrame."""
        return pd.DataFrame(self.rows, columns=ROW_COLUMNS)

    def summary(self):
        """
        Seed-averaged table.

        Returns:
            pandas.DataFrame: Index ``sweep_value``; columns ``F1 <attack>``,
            ``Sensitive F1 <attack>`` (when measured) and ``HR@K``
        """
        rows = self.frame()
        if rows.empty:
            return pd.DataFrame()
        rows[["f1", "sensitive_f1", "hr_at_k"]] = rows[["f1", "sensitive_f1", "hr_at_k"]].astype(float)
        rows["sweep_value"] = rows["sweep_value"].map(_label)
        order = list(dict.fromkeys(rows["sweep_value"]))
        means = rows.groupby(["sweep_value", "attack"], sort=False)[["f1", "sensitive_f1"]].mean()
        table = means["f1"].unstack("attack").add_prefix("F1 ")
        sensitive = means["sensitive_f1"].unstack("attack").dropna(axis=1, how="all")
        if not sensitive.empty:
            table = table.join(sensitive.add_prefix("Sensitive F1 "))
        # HR@K does not depend on the attack
        hr = rows.drop_duplicates(["sweep_value", "seed"]).groupby("sweep_value", sort=False)["hr_at_k"].mean()
        table[f"HR@{self.top_k}"] = hr
        table = table.reindex(order)
        if self.sweep_key in AVERAGED_SWEEPS and len(table) > 1:
            table.loc["average"] = table.mean()
        table.index.name = self.sweep_key or "sweep_value"
        return table


def _label(value):
    return "-" if value is None else json.dumps(value)


def emit_report(report, out_dir, formats=("json", "csv")):
    """
    Write the report in the requested formats.

    Output is byte-identical for identical reports.

    Args:
        report (EvalReport): Completed report
        out_dir (str): Target directory (created if missing)
        formats (tuple): Any of "json" and "csv"

    Returns:
        list: Paths written
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "json" in formats:
        path = os.path.join(out_dir, REPORT_JSON)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, sort_keys=True, indent=1)
            f.write("\n")
        written.append(path)
    if "csv" in formats:
        path = os.path.join(out_dir, TABLE_CSV)
        report.summary().to_csv(path, float_format=FLOAT_FORMAT, lineterminator="\n")
        written.append(path)
        path = os.path.join(out_dir, ROWS_CSV)
        frame = report.frame()
        frame["sweep_value"] = frame["sweep_value"].map(_label)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        written.append(path)
    for path in written:
        logger.info("wrote %s", path)
    return written


def load_report(path):
    """Read a report written by ``emit_report``."""
    with open(path, encoding="utf-8") as f:
        return EvalReport.from_dict(json.load(f))
