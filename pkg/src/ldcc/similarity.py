"""Task similarity from posterior Dirichlet parameters.

A task's embedding is the Dirichlet parameter lambda of its inferred
task-theme posterior.  Dissimilarity is the closed-form KL divergence
between Dirichlet distributions, directed from the test task's posterior to
the training task's.  On top of that sit the mean-distance report, the
distance-vs-accuracy correlation diagram, and nearest-task selection.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, NumericError
from .special import digamma, log_beta_dirichlet

_NEGATIVE_KL_TOL = -1e-9


def dirichlet_kl(a, b) -> float:
    """KL[Dir(a) || Dir(b)] in closed form.

    ln B(b) - ln B(a) + sum_k (a_k - b_k)(psi(a_k) - psi(sum_j a_j))
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"parameter vectors must match, got {a.shape} and {b.shape}")
    with np.errstate(over="ignore"):
        if not (np.isfinite(a.sum()) and np.isfinite(b.sum())):
            raise NumericError("dirichlet parameters overflow the KL computation")
    value = (
        log_beta_dirichlet(b)
        - log_beta_dirichlet(a)
        + ((a - b) * (digamma(a) - digamma(a.sum()))).sum()
    )
    return float(value)


@dataclass
class DistanceReport:
    """Per-test-task mean KL to the training tasks, plus the full matrix."""

    mean_kl: np.ndarray
    matrix: np.ndarray | None = None


def distance_matrix(test_lambdas, train_lambdas, keep_matrix=True) -> DistanceReport:
    """KL of every test posterior from every training posterior.

    Entry (i, d) is dirichlet_kl(test_i, train_d); mean_kl averages each row.
    """
    test_lambdas = np.asarray(test_lambdas, dtype=np.float64)
    train_lambdas = np.asarray(train_lambdas, dtype=np.float64)
    if test_lambdas.ndim != 2 or train_lambdas.ndim != 2:
        raise ValueError("lambda inputs must be 2-d (tasks by themes)")
    if test_lambdas.shape[1] != train_lambdas.shape[1]:
        raise DataError(
            f"test and train lambdas disagree on theme count: "
            f"{test_lambdas.shape[1]} vs {train_lambdas.shape[1]}"
        )
    matrix = np.empty((test_lambdas.shape[0], train_lambdas.shape[0]))
    for i, a in enumerate(test_lambdas):
        for d, b in enumerate(train_lambdas):
            matrix[i, d] = dirichlet_kl(a, b)
    if matrix.min() < _NEGATIVE_KL_TOL or not np.isfinite(matrix).all():
        raise NumericError(
            f"KL matrix contains invalid entries (min {matrix.min()})"
        )
    matrix = np.maximum(matrix, 0.0)
    report = DistanceReport(mean_kl=matrix.mean(axis=1))
    if keep_matrix:
        report.matrix = matrix
    return report


@dataclass
class DiagramBin:
    """One occupied bin of the correlation diagram."""

    index: int
    low: float
    high: float
    mean_distance: float
    mean_accuracy: float
    count: int


def correlation_diagram(distances, accuracies, num_bins: int) -> list[DiagramBin]:
    """Bin tasks by mean distance and average accuracy within each bin.

    Bin j covers ((j - 1) w, j w] with w = max(distances) / num_bins; exact
    zeros land in bin 1, empty bins are omitted.  If every distance is zero
    the single degenerate bin (0, 0] holds everything.
    """
    distances = np.asarray(distances, dtype=np.float64)
    accuracies = np.asarray(accuracies, dtype=np.float64)
    if distances.ndim != 1 or distances.shape != accuracies.shape:
        raise ValueError("distances and accuracies must be matching vectors")
    if distances.size == 0:
        raise ValueError("cannot bin an empty distance vector")
    if num_bins < 1:
        raise ValueError(f"num_bins must be >= 1, got {num_bins}")
    if (distances < 0).any() or not np.isfinite(distances).all():
        raise ValueError("distances must be finite and nonnegative")
    top = distances.max()
    if top == 0.0:
        return [
            DiagramBin(
                index=1,
                low=0.0,
                high=0.0,
                mean_distance=0.0,
                mean_accuracy=float(accuracies.mean()),
                count=int(distances.size),
            )
        ]
    width = top / num_bins
    assignment = np.ceil(distances / width).astype(int)
    assignment = np.clip(assignment, 1, num_bins)
    bins = []
    for j in range(1, num_bins + 1):
        members = assignment == j
        if not members.any():
            continue
        bins.append(
            DiagramBin(
                index=j,
                low=float((j - 1) * width),
                high=float(j * width),
                mean_distance=float(distances[members].mean()),
                mean_accuracy=float(accuracies[members].mean()),
                count=int(members.sum()),
            )
        )
    return bins


def select_tasks(train_lambdas, test_lambdas, count: int) -> list[int]:
    """Indices of the `count` training tasks closest to the test set.

    A training task's score is its mean KL from all test posteriors;
    smallest scores win, ties broken by ascending index.
    """
    train_lambdas = np.asarray(train_lambdas, dtype=np.float64)
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if count > train_lambdas.shape[0]:
        raise ValueError(
            f"cannot select {count} of {train_lambdas.shape[0]} training tasks"
        )
    if count == 0:
        return []
    report = distance_matrix(test_lambdas, train_lambdas)
    scores = report.matrix.mean(axis=0)
    order = np.lexsort((np.arange(scores.size), scores))
    return [int(i) for i in order[:count]]


def write_distance_csv(path, ids, mean_kl) -> None:
    """Mean-distance output: test_id, mean_kl."""
    mean_kl = np.asarray(mean_kl, dtype=np.float64)
    if len(ids) != mean_kl.shape[0]:
        raise DataError("ids and mean_kl lengths differ")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["test_id", "mean_kl"])
        for task_id, value in zip(ids, mean_kl):
            writer.writerow([task_id, repr(float(value))])


def read_distance_csv(path):
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["test_id", "mean_kl"]:
            raise FormatError(f"{path}: expected header test_id,mean_kl")
        ids, values = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}:{line_no}: expected 2 fields")
            try:
                values.append(float(row[1]))
            except ValueError as exc:
                raise FormatError(f"{path}:{line_no}: {exc}") from exc
            ids.append(row[0])
    if not ids:
        raise FormatError(f"{path}: no data rows")
    return ids, np.asarray(values)


def read_accuracy_csv(path):
    """Per-task accuracies: task_id, accuracy in [0, 1]."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["task_id", "accuracy"]:
            raise FormatError(f"{path}: expected header task_id,accuracy")
        table = {}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}:{line_no}: expected 2 fields")
            try:
                value = float(row[1])
            except ValueError as exc:
                raise FormatError(f"{path}:{line_no}: {exc}") from exc
            if not 0.0 <= value <= 1.0 or not math.isfinite(value):
                raise FormatError(f"{path}:{line_no}: accuracy must lie in [0, 1]")
            if row[0] in table:
                raise FormatError(f"{path}:{line_no}: duplicate task id {row[0]!r}")
            table[row[0]] = value
    if not table:
        raise FormatError(f"{path}: no data rows")
    return table


def write_diagram_csv(path, bins) -> None:
    """Diagram output: bin, low, high, mean_distance, mean_accuracy, count."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["bin", "low", "high", "mean_distance", "mean_accuracy", "count"])
        for b in bins:
            writer.writerow(
                [b.index, repr(b.low), repr(b.high), repr(b.mean_distance),
                 repr(b.mean_accuracy), b.count]
            )


def write_selection(path, ids) -> None:
    """Selected training-task ids, one per line."""
    Path(path).write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")
