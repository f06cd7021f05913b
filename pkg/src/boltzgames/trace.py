"""Convergence traces shared by the solvers."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field


@dataclass
class SolveTrace:
    """Per-iteration convergence record for one solve (or one stage of one).

    Attributes:
        residuals: sup-norm residual after each sweep/iteration.
        wall_ms: wall-clock milliseconds spent on each sweep/iteration.
        converged: whether the stop tolerance was reached before the cap.
        label: optional tag (e.g. the stage index of a finite-horizon solve).
    """

    residuals: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    converged: bool = False
    label: str = ""

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    def record(self, residual: float, elapsed_ms: float) -> None:
        self.residuals.append(float(residual))
        self.wall_ms.append(float(elapsed_ms))

    def rows(self):
        """Yield (iteration, residual, wall_ms) rows, iterations 1-based."""
        for k, (res, ms) in enumerate(zip(self.residuals, self.wall_ms), start=1):
            yield k, res, ms


def write_trace_csv(path, trace: SolveTrace) -> None:
    """Write a single trace as CSV with columns: sweep, residual, wall_ms."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sweep", "residual", "wall_ms"])
        for row in trace.rows():
            writer.writerow([row[0], repr(row[1]), repr(row[2])])


def write_stage_traces_csv(path, traces) -> None:
    """Write per-stage traces as CSV with columns: stage, inner_iter, residual, wall_ms."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "inner_iter", "residual", "wall_ms"])
        for trace in traces:
            for it, res, ms in trace.rows():
                writer.writerow([trace.label, it, repr(res), repr(ms)])
