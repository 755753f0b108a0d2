"""Result tables and their CSV serialization.

Numbers are written with 17 significant digits and LF line endings so a
re-run of the same spec produces a byte-identical file; footer records
(fitted slopes, pass/fail) ride along as '#'-prefixed comment lines.
"""

from dataclasses import dataclass, field

import numpy as np


def format_float(v) -> str:
    v = float(v)
    if v != v:
        return "nan"
    return f"{v:.17g}"


@dataclass
class ResultTable:
    name: str
    columns: list
    rows: list = field(default_factory=list)
    footer: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add_row(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"row width {len(values)} != header width "
                             f"{len(self.columns)}")
        self.rows.append([float(v) for v in values])

    def add_footer(self, key, value):
        self.footer.append((str(key), value))

    def check(self, condition: bool, message: str):
        """Record an assertion; failures mark the table (and exit code)."""
        if not condition:
            self.failures.append(message)
        return condition

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(self.columns) + "\n")
            for row in self.rows:
                fh.write(",".join(format_float(v) for v in row) + "\n")
            for key, value in self.footer:
                if isinstance(value, float):
                    value = format_float(value)
                fh.write(f"# {key} = {value}\n")
            fh.write(f"# status = {'pass' if self.passed else 'fail'}\n")
            for msg in self.failures:
                fh.write(f"# failure: {msg}\n")

    def column(self, name) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([row[j] for row in self.rows])


def read_csv(path):
    """Round-trip reader for result tables (data rows and footer)."""
    columns, rows, footer = None, [], []
    with open(path, "r") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                footer.append(line[1:].strip())
            elif columns is None:
                columns = line.split(",")
            else:
                rows.append([float(tok) for tok in line.split(",")])
    return columns, np.array(rows) if rows else np.empty((0, 0)), footer
