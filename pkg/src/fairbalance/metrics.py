"""Verification-pair accuracies, fairness aggregates, and Pareto analysis.

Trained-model accuracies enter this module as data (verification outcomes,
similarity scores, or pre-computed per-group accuracy lists); nothing here
trains or evaluates a model.
"""

import csv
import math
import statistics
from dataclasses import dataclass

from ._util import atomic_write, fmt_float
from .errors import MetricsError

_MODES = ("outcomes", "similarity")


@dataclass(frozen=True)
class PairRecord:
    """One verification pair. ``correct`` is set in outcomes mode;
    ``similarity`` and ``is_genuine`` in similarity mode."""

    group: str
    correct: bool = None
    similarity: float = None
    is_genuine: bool = None


def group_accuracy(pairs, mode):
    """Per-group verification accuracy.

    In ``outcomes`` mode each pair carries its own verdict and the accuracy
    is the plain fraction correct. In ``similarity`` mode each group gets the
    accuracy of its single best threshold; candidate thresholds sit between
    consecutive distinct similarity values, plus one below the minimum and
    one above the maximum. The result depends only on the ordering of the
    similarities, so any strictly monotone rescaling leaves it unchanged.
    Groups are returned in first-appearance order.
    """
    if mode not in _MODES:
        raise MetricsError(f"unknown mode {mode!r}; expected one of {_MODES}")
    grouped = {}
    for pair in pairs:
        grouped.setdefault(pair.group, []).append(pair)
    if not grouped:
        raise MetricsError("no pairs given")

    result = {}
    for group, records in grouped.items():
        if mode == "outcomes":
            if any(r.correct is None for r in records):
                raise MetricsError(f"group {group!r}: pair without a verdict")
            result[group] = sum(1 for r in records if r.correct) / len(records)
        else:
            if any(r.similarity is None or r.is_genuine is None for r in records):
                raise MetricsError(
                    f"group {group!r}: pair without similarity or genuineness"
                )
            genuine = [r.similarity for r in records if r.is_genuine]
            impostor = [r.similarity for r in records if not r.is_genuine]
            if not genuine or not impostor:
                raise MetricsError(
                    f"group {group!r}: similarity mode needs both genuine "
                    "and impostor pairs"
                )
            result[group] = _best_threshold_accuracy(genuine, impostor)
    return result


def _best_threshold_accuracy(genuine, impostor):
    """Best single-threshold accuracy, predicting genuine at or above the
    threshold. Sweeps from below the minimum (everything genuine) upwards;
    crossing a value flips all its pairs to the impostor side."""
    marks = sorted([(s, True) for s in genuine] + [(s, False) for s in impostor])
    n = len(marks)
    correct = len(genuine)
    best = correct
    i = 0
    while i < n:
        j = i
        delta = 0
        while j < n and marks[j][0] == marks[i][0]:
            delta += -1 if marks[j][1] else 1
            j += 1
        correct += delta
        if correct > best:
            best = correct
        i = j
    return best / n


@dataclass
class FairnessReport:
    """Fairness aggregates over per-group accuracies.

    Accuracies are stored as fractions in [0, 1]. ``std`` is the sample
    (n-1) standard deviation of the accuracies on the percent scale; ``ser``
    is the ratio of the worst group's error to the best group's error, which
    is 1 for perfect balance and infinite when some group is error-free.
    """

    per_group: dict
    average: float
    std: float
    ser: float
    flags: tuple

    def to_dict(self):
        """JSON-ready form; accuracy fields on the percent scale."""
        return {
            "per_group": {k: v * 100.0 for k, v in self.per_group.items()},
            "average": self.average * 100.0,
            "std": self.std,
            "ser": self.ser,
            "flags": list(self.flags),
        }


def fairness_report(accuracies):
    """Build a FairnessReport from per-group accuracies.

    Accepts a mapping from group label to accuracy or a plain sequence
    (labelled g1..gd). Values may be fractions in [0, 1] or percents; any
    value above 1 switches the whole input to the percent reading.
    """
    if hasattr(accuracies, "items"):
        labels = list(accuracies.keys())
        values = [float(v) for v in accuracies.values()]
    else:
        values = [float(v) for v in accuracies]
        labels = [f"g{i + 1}" for i in range(len(values))]
    if len(values) < 2:
        raise MetricsError("need accuracies for at least two groups")
    if any(not math.isfinite(v) or v < 0 for v in values):
        raise MetricsError("accuracies must be finite and non-negative")
    if any(v > 1.0 for v in values):
        values = [v / 100.0 for v in values]
    if any(v > 1.0 for v in values):
        raise MetricsError("accuracies above 100 percent")

    average = math.fsum(values) / len(values)
    std = statistics.stdev([v * 100.0 for v in values])
    worst, best = min(values), max(values)
    flags = []
    if best >= 1.0:
        ser = math.inf
        flags.append("infinite_ser")
    else:
        ser = (1.0 - worst) / (1.0 - best)
    return FairnessReport(
        per_group=dict(zip(labels, values)),
        average=average,
        std=std,
        ser=ser,
        flags=tuple(flags),
    )


@dataclass(frozen=True)
class RunPoint:
    """One training run placed on the error/bias plane. ``error`` is
    1 - average accuracy as a fraction; ``bias`` is the chosen spread
    measure (std or ser)."""

    run_id: str
    strategy: str
    size: str
    error: float
    bias: float


def pareto_frontier(points):
    """Points not strictly dominated by any other.

    A point dominates another when it is no worse on both coordinates and
    strictly better on at least one. Duplicated coordinates survive together
    (neither strictly dominates the other). Output is sorted by error,
    keeping input order among equal errors.
    """
    points = list(points)
    if not points:
        raise MetricsError("no points given")
    ordered = sorted(points, key=lambda p: p.error)
    kept = []
    best_before = math.inf
    i = 0
    while i < len(ordered):
        j = i
        while j < len(ordered) and ordered[j].error == ordered[i].error:
            j += 1
        tier = ordered[i:j]
        tier_min = min(p.bias for p in tier)
        for p in tier:
            if p.bias < best_before and p.bias == tier_min:
                kept.append(p)
        if tier_min < best_before:
            best_before = tier_min
        i = j
    return kept


def read_pairs_csv(path, mode):
    """Load verification pairs: ``group,correct`` for outcomes mode,
    ``group,similarity,is_genuine`` for similarity mode (flags are 0/1)."""
    if mode not in _MODES:
        raise MetricsError(f"unknown mode {mode!r}; expected one of {_MODES}")
    expected = (
        ["group", "correct"]
        if mode == "outcomes"
        else ["group", "similarity", "is_genuine"]
    )
    pairs = []
    with open(path, encoding="utf-8-sig", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != expected:
            raise MetricsError(
                f"{path}: expected header {','.join(expected)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected) or not row[0]:
                raise MetricsError(f"{path}: line {lineno}: malformed row")
            try:
                if mode == "outcomes":
                    pairs.append(
                        PairRecord(group=row[0], correct=_parse_flag(row[1]))
                    )
                else:
                    similarity = float(row[1])
                    if not math.isfinite(similarity):
                        raise ValueError
                    pairs.append(
                        PairRecord(
                            group=row[0],
                            similarity=similarity,
                            is_genuine=_parse_flag(row[2]),
                        )
                    )
            except ValueError:
                raise MetricsError(
                    f"{path}: line {lineno}: malformed value"
                ) from None
    if not pairs:
        raise MetricsError(f"{path}: no pairs")
    return pairs


def _parse_flag(cell):
    if cell == "0":
        return False
    if cell == "1":
        return True
    raise ValueError(cell)


def read_runs_csv(path):
    """Load run summaries: ``run_id,strategy,size`` plus one ``acc_<group>``
    column per group. Returns (group_labels, rows) where each row is a dict
    with the raw fields and an ``accs`` mapping."""
    with open(path, encoding="utf-8-sig", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or header[:3] != ["run_id", "strategy", "size"]:
            raise MetricsError(
                f"{path}: header must start with run_id,strategy,size"
            )
        acc_cols = header[3:]
        if len(acc_cols) < 2 or not all(c.startswith("acc_") for c in acc_cols):
            raise MetricsError(f"{path}: need at least two acc_<group> columns")
        labels = tuple(c[len("acc_"):] for c in acc_cols)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MetricsError(f"{path}: line {lineno}: malformed row")
            try:
                accs = {
                    label: float(cell) for label, cell in zip(labels, row[3:])
                }
            except ValueError:
                raise MetricsError(
                    f"{path}: line {lineno}: non-numeric accuracy"
                ) from None
            rows.append(
                {
                    "run_id": row[0],
                    "strategy": row[1],
                    "size": row[2],
                    "accs": accs,
                }
            )
    if not rows:
        raise MetricsError(f"{path}: no runs")
    return labels, rows


def runs_to_points(rows, bias_axis):
    """Convert run rows into RunPoints on the chosen bias axis.

    Rows whose ser is flagged infinite are skipped when ser is the axis (an
    infinite coordinate cannot sit on a meaningful frontier); the skip count
    is returned alongside the points.
    """
    if bias_axis not in ("std", "ser"):
        raise MetricsError(f"bias axis must be 'std' or 'ser', got {bias_axis!r}")
    points = []
    skipped = 0
    for row in rows:
        report = fairness_report(row["accs"])
        if bias_axis == "ser" and not math.isfinite(report.ser):
            skipped += 1
            points.append(None)
            continue
        points.append(
            RunPoint(
                run_id=row["run_id"],
                strategy=row["strategy"],
                size=row["size"],
                error=1.0 - report.average,
                bias=report.std if bias_axis == "std" else report.ser,
            )
        )
    return points, skipped


def write_frontier_csv(labels, rows, points, frontier, path):
    """Input runs plus an ``on_frontier`` column. ``points`` aligns with
    ``rows`` (None where a row was skipped); frontier membership is by
    object identity so duplicate coordinates stay distinct."""
    frontier_ids = {id(p) for p in frontier}
    with atomic_write(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["run_id", "strategy", "size"]
            + [f"acc_{label}" for label in labels]
            + ["on_frontier"]
        )
        for row, point in zip(rows, points):
            writer.writerow(
                [row["run_id"], row["strategy"], row["size"]]
                + [fmt_float(row["accs"][label]) for label in labels]
                + ["true" if point is not None and id(point) in frontier_ids else "false"]
            )
