"""Identity-level and group-level score aggregation, plus relabeling.

Three aggregation protocols share one pipeline. A averages each identity's
image scores and then averages identities within a group, so every value
stays on the per-image scale. B sums within an identity (image-rich
identities weigh more) but still averages across a group. C sums at both
levels, so a group's entry grows with its population.

All reductions use math.fsum, which returns the exactly rounded sum of its
inputs regardless of order. That makes every table and matrix here a pure
function of the data multiset, bit for bit, which downstream sampling relies
on when it compares an incremental run against a full recomputation.
"""

import csv
import logging
import math
import statistics
from dataclasses import dataclass, replace
from enum import Enum

from ._util import atomic_write, fmt_float
from .errors import ScoringError
from .manifest import Manifest

log = logging.getLogger(__name__)


class Protocol(Enum):
    """Aggregation protocol: A = mean/mean, B = sum/mean, C = sum/sum."""

    A = "A"
    B = "B"
    C = "C"

    @property
    def identity_mean(self):
        return self is Protocol.A

    @property
    def group_mean(self):
        return self is not Protocol.C


@dataclass(frozen=True)
class IdsTable:
    """Per-identity aggregated score vectors, keyed by identity id in
    first-appearance order."""

    protocol: Protocol
    entries: dict

    def own_scores(self, manifest):
        """Each identity's component for its own assigned group."""
        return {
            ident: self.entries[ident][rec.group]
            for ident, rec in manifest.identities.items()
        }


@dataclass(frozen=True)
class EsMatrix:
    """Group-by-group score matrix. Row r aggregates the identities assigned
    to group r; column c is their score mass on group c. The diagonal is what
    the greedy samplers steer on."""

    protocol: Protocol
    groups: tuple
    values: tuple

    def diag(self):
        return tuple(self.values[i][i] for i in range(len(self.values)))


def compute_ids(manifest, protocol):
    """Aggregate image scores into one vector per identity.

    Mean over the identity's images under protocol A, componentwise sum
    under B and C.
    """
    protocol = Protocol(protocol)
    stacked = {}
    for img in manifest.images:
        stacked.setdefault(img.identity_id, []).append(img.scores)
    d = manifest.groups.d
    entries = {}
    for ident, rows in stacked.items():
        totals = [math.fsum(row[c] for row in rows) for c in range(d)]
        if protocol.identity_mean:
            count = len(rows)
            totals = [t / count for t in totals]
        entries[ident] = tuple(totals)
    return IdsTable(protocol=protocol, entries=entries)


def compute_es(manifest, protocol, ids=None):
    """Aggregate identity vectors into the group-by-group matrix.

    Rows are means over the group's identities for A and B, sums for C.
    A and B reject empty groups (their mean is undefined); under C an empty
    group contributes a zero row.
    """
    protocol = Protocol(protocol)
    if ids is None:
        ids = compute_ids(manifest, protocol)
    elif ids.protocol is not protocol:
        raise ScoringError(
            f"ids table was built for protocol {ids.protocol.value}, "
            f"not {protocol.value}"
        )
    d = manifest.groups.d
    members = [[] for _ in range(d)]
    for ident, rec in manifest.identities.items():
        members[rec.group].append(ids.entries[ident])
    rows = []
    for r in range(d):
        vectors = members[r]
        if not vectors:
            if protocol.group_mean:
                raise ScoringError(
                    f"group {manifest.groups.labels[r]!r} has no identities; "
                    "its mean is undefined under protocol "
                    f"{protocol.value}"
                )
            rows.append(tuple(0.0 for _ in range(d)))
            continue
        totals = [math.fsum(vec[c] for vec in vectors) for c in range(d)]
        if protocol.group_mean:
            n = len(vectors)
            totals = [t / n for t in totals]
        rows.append(tuple(totals))
    return EsMatrix(protocol=protocol, groups=manifest.groups.labels, values=tuple(rows))


def relabel(manifest):
    """Reassign every identity to the group its mean score vector favours.

    The argmax of the protocol-A identity vector decides; exact ties go to
    the lowest group index. Labels feed only the group assignment, never the
    scores, so applying this twice changes nothing.
    """
    ids = compute_ids(manifest, Protocol.A)
    new_group = {}
    for ident, vector in ids.entries.items():
        best = 0
        for c in range(1, len(vector)):
            if vector[c] > vector[best]:
                best = c
        new_group[ident] = best
    images = [
        img
        if new_group[img.identity_id] == img.group
        else replace(img, group=new_group[img.identity_id])
        for img in manifest.images
    ]
    return Manifest.from_images(manifest.groups, images)


@dataclass(frozen=True)
class ScatterResult:
    """Per-image pairing of own-group score against an external score.

    ``correlations`` maps each group label to a Pearson coefficient, or None
    when it is undefined (fewer than two points, or a constant side).
    """

    rows: tuple
    correlations: dict
    skipped: int


def score_scatter(manifest, external_scores):
    """Join own-group image scores with an externally supplied score table.

    ``external_scores`` maps image ids to floats. Images without an external
    value are skipped and counted; an empty intersection is an error.
    """
    rows = []
    per_group = [[] for _ in manifest.groups.labels]
    skipped = 0
    for img in manifest.images:
        if img.image_id not in external_scores:
            skipped += 1
            continue
        ext = float(external_scores[img.image_id])
        own = img.scores[img.group]
        rows.append((img.image_id, manifest.groups.labels[img.group], own, ext))
        per_group[img.group].append((own, ext))
    if not rows:
        raise ScoringError("no overlap between manifest and external scores")

    correlations = {}
    for i, label in enumerate(manifest.groups.labels):
        points = per_group[i]
        if len(points) < 2:
            correlations[label] = None
            continue
        own_values = [p[0] for p in points]
        ext_values = [p[1] for p in points]
        try:
            correlations[label] = statistics.correlation(own_values, ext_values)
        except statistics.StatisticsError:
            log.warning(
                "group %s: correlation undefined (constant input)", label
            )
            correlations[label] = None
    return ScatterResult(rows=tuple(rows), correlations=correlations, skipped=skipped)


def write_ids_csv(manifest, ids, path):
    labels = manifest.groups.labels
    with atomic_write(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["identity_id", "group"] + [f"ids_{label}" for label in labels]
        )
        for ident, rec in manifest.identities.items():
            writer.writerow(
                [ident, labels[rec.group]]
                + [fmt_float(v) for v in ids.entries[ident]]
            )


def write_es_csv(es, path):
    with atomic_write(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["group"] + list(es.groups))
        for label, row in zip(es.groups, es.values):
            writer.writerow([label] + [fmt_float(v) for v in row])


def write_scatter_csv(result, path):
    with atomic_write(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["image_id", "group", "own_score", "external_score"])
        for image_id, group, own, ext in result.rows:
            writer.writerow([image_id, group, fmt_float(own), fmt_float(ext)])
