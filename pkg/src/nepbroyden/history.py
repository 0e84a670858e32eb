"""Convergence bookkeeping and the delimited history format used by the CLI.

Every solver records one row per completed iteration: iteration index,
residual norm, eigenvalue estimate split into real/imaginary parts, and the
cumulative wall time. The CSV layout is a stable external contract; apart
from the wall-time column, a run reproduces it byte for byte under a fixed
seed in double precision.
"""

import csv

import numpy as np

CSV_HEADER = ["k", "residual_norm", "lambda_re", "lambda_im", "wall_time_s"]


class ConvergenceHistory:
    """Per-iteration record of (k, ||r||, lambda, wall seconds)."""

    def __init__(self):
        self.k = []
        self.residual = []
        self.lam = []
        self.wall = []

    def __len__(self):
        return len(self.k)

    def record(self, k, residual, lam, wall):
        self.k.append(int(k))
        self.residual.append(float(residual))
        self.lam.append(complex(lam))
        self.wall.append(float(wall))

    def extend(self, other, renumber=True):
        """Append another history; renumber keeps the k column global."""
        base = self.k[-1] if (renumber and self.k) else 0
        for i in range(len(other)):
            k = other.k[i] + base if renumber else other.k[i]
            self.record(k, other.residual[i], other.lam[i], other.wall[i])

    def lambda_errors(self, target):
        """|lambda_k - target| as an array, for rate analysis."""
        return np.abs(np.asarray(self.lam, dtype=complex) - complex(target))

    def rows(self):
        for i in range(len(self)):
            yield (self.k[i],
                   format(self.residual[i], ".17g"),
                   format(self.lam[i].real, ".17g"),
                   format(self.lam[i].imag, ".17g"),
                   format(self.wall[i], ".6f"))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for row in self.rows():
                writer.writerow(row)

    @classmethod
    def read_csv(cls, path):
        """Parse a history file, raising ValueError on any malformed content."""
        hist = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValueError(f"malformed history file {path!r}: empty")
            if header != CSV_HEADER:
                raise ValueError(f"malformed history file {path!r}: bad header")
            for line_no, row in enumerate(reader, start=2):
                if len(row) != len(CSV_HEADER):
                    raise ValueError(
                        f"malformed history file {path!r}: line {line_no}")
                try:
                    k = int(row[0])
                    res = float(row[1])
                    lam = complex(float(row[2]), float(row[3]))
                    wall = float(row[4])
                except ValueError:
                    raise ValueError(
                        f"malformed history file {path!r}: line {line_no}") from None
                hist.record(k, res, lam, wall)
        return hist
