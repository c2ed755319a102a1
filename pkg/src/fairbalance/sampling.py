"""Greedy removal loops, random baselines, and trace bookkeeping.

The greedy samplers remove one identity per step. Under the mean-based
protocols (A, B) a step targets the group whose own-group diagonal entry is
lowest and removes that group's weakest identity, which can only raise the
group's mean. Under the sum-based protocol (C) a step targets the group with
the highest own-group total and pulls it down. Ties on the diagonal go to the
lowest group index; ties on identity score go to the earliest identity in
first-appearance order.

``sample_protocol`` keeps one min-heap per group plus cached diagonal
entries. A step pops the target group's heap and recomputes only that group's
entry, as an exact fsum over its survivors, so a run costs O(z * group size)
rather than the full rescan ``sample_naive`` performs every iteration.
Because fsum is exactly rounded and order independent, both samplers see
bitwise-identical diagonals and therefore make identical choices;
``sample_naive`` exists as the literal-transcription oracle that certifies
the fast path.
"""

import csv
import heapq
import logging
import math
from dataclasses import dataclass, field

from ._util import atomic_write, fmt_float
from .errors import SamplingError
from .manifest import Manifest
from .rng import SplitMix64
from .scoring import Protocol, compute_es, compute_ids

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RemovalEvent:
    """One removal: who was removed, from which group, with which own-group
    score, and the diagonal right before and right after. Only the touched
    group's entry may differ between the two vectors."""

    step: int
    identity_id: str
    group: str
    own_group_ids: float
    diag_before: tuple
    diag_after: tuple


@dataclass
class RemovalTrace:
    name: str
    group_labels: tuple
    initial_diag: tuple
    seed: int = None
    events: list = field(default_factory=list)
    final_manifest: Manifest = None

    def removed_ids(self):
        return [event.identity_id for event in self.events]


def _check_protocol_budget(manifest, protocol, z):
    if not isinstance(z, int) or z < 0:
        raise SamplingError(f"removal budget must be a non-negative integer, got {z!r}")
    total = manifest.identity_count
    if protocol.group_mean:
        floor = manifest.groups.d
        if total - z < floor:
            raise SamplingError(
                f"budget {z} would leave fewer than one identity per group "
                f"({total} identities, {floor} groups)"
            )
        for i, count in enumerate(manifest.group_counts):
            if count == 0:
                raise SamplingError(
                    f"group {manifest.groups.labels[i]!r} has no identities; "
                    f"protocol {protocol.value} needs every group non-empty"
                )
    else:
        if total - z < 1:
            raise SamplingError(
                f"budget {z} would remove every identity ({total} available)"
            )


def _pick_target(diag, counts, protocol):
    """Index of the group to shrink. Lowest diagonal for A/B, highest for C
    (ignoring exhausted groups); exact ties resolve to the lowest index."""
    best = None
    for i, value in enumerate(diag):
        if not protocol.group_mean and counts[i] == 0:
            continue
        if best is None:
            best = i
        elif protocol.group_mean:
            if value < diag[best]:
                best = i
        elif value > diag[best]:
            best = i
    return best


def sample_protocol(manifest, protocol, z):
    """Remove ``z`` identities greedily under one protocol.

    Returns ``(subset_manifest, trace)``. A step that would empty a group
    under A or B raises SamplingError with the partial trace attached.
    """
    protocol = Protocol(protocol)
    _check_protocol_budget(manifest, protocol, z)

    ids = compute_ids(manifest, protocol)
    own = ids.own_scores(manifest)
    labels = manifest.groups.labels
    d = manifest.groups.d

    heaps = [[] for _ in range(d)]
    for rank, (ident, rec) in enumerate(manifest.identities.items()):
        heaps[rec.group].append((own[ident], rank, ident))
    for heap in heaps:
        heapq.heapify(heap)
    counts = list(manifest.group_counts)

    def group_entry(i):
        if counts[i] == 0:
            return 0.0
        total = math.fsum(item[0] for item in heaps[i])
        return total / counts[i] if protocol.group_mean else total

    diag = [group_entry(i) for i in range(d)]
    trace = RemovalTrace(
        name=protocol.value,
        group_labels=labels,
        initial_diag=tuple(diag),
    )

    removed = set()
    for step in range(1, z + 1):
        target = _pick_target(diag, counts, protocol)
        if protocol.group_mean and counts[target] == 1:
            trace.final_manifest = manifest.remove_identities(removed)
            raise SamplingError(
                f"step {step}: removing the last identity of group "
                f"{labels[target]!r} would empty it under protocol "
                f"{protocol.value}",
                partial_trace=trace,
            )
        own_value, _rank, ident = heapq.heappop(heaps[target])
        counts[target] -= 1
        removed.add(ident)
        before = tuple(diag)
        diag[target] = group_entry(target)
        trace.events.append(
            RemovalEvent(
                step=step,
                identity_id=ident,
                group=labels[target],
                own_group_ids=own_value,
                diag_before=before,
                diag_after=tuple(diag),
            )
        )

    subset = manifest.remove_identities(removed) if removed else manifest
    trace.final_manifest = subset
    return subset, trace


def sample_naive(manifest, protocol, z):
    """Literal transcription of the per-step procedure: rebuild every score
    table from scratch each iteration. Slow on purpose; it is the oracle the
    incremental sampler is tested against."""
    protocol = Protocol(protocol)
    _check_protocol_budget(manifest, protocol, z)

    labels = manifest.groups.labels
    current = manifest
    diag = compute_es(current, protocol).diag()
    trace = RemovalTrace(
        name=protocol.value,
        group_labels=labels,
        initial_diag=diag,
    )

    for step in range(1, z + 1):
        counts = current.group_counts
        target = _pick_target(diag, counts, protocol)
        if protocol.group_mean and counts[target] == 1:
            trace.final_manifest = current
            raise SamplingError(
                f"step {step}: removing the last identity of group "
                f"{labels[target]!r} would empty it under protocol "
                f"{protocol.value}",
                partial_trace=trace,
            )
        ids = compute_ids(current, protocol)
        victim = None
        victim_own = None
        for rank, (ident, rec) in enumerate(current.identities.items()):
            if rec.group != target:
                continue
            value = ids.entries[ident][target]
            if victim is None or value < victim_own:
                victim, victim_own = ident, value
        current = current.remove_identities({victim})
        after = compute_es(current, protocol).diag()
        trace.events.append(
            RemovalEvent(
                step=step,
                identity_id=victim,
                group=labels[target],
                own_group_ids=victim_own,
                diag_before=diag,
                diag_after=after,
            )
        )
        diag = after

    trace.final_manifest = current
    return current, trace


class _GroupDiagTracker:
    """Mean-scale (protocol A) diagonal bookkeeping for the baselines, which
    remove arbitrary identities rather than the group minimum."""

    def __init__(self, manifest):
        self.labels = manifest.groups.labels
        ids = compute_ids(manifest, Protocol.A)
        self.own = ids.own_scores(manifest)
        self.members = [
            {rec.identity_id for rec in manifest.identities.values() if rec.group == g}
            for g in range(manifest.groups.d)
        ]
        self.diag = [self._entry(g) for g in range(manifest.groups.d)]

    def _entry(self, g):
        members = self.members[g]
        if not members:
            return 0.0
        return math.fsum(self.own[i] for i in members) / len(members)

    def remove(self, group_index, ident):
        before = tuple(self.diag)
        self.members[group_index].remove(ident)
        self.diag[group_index] = self._entry(group_index)
        return before, tuple(self.diag), self.own[ident]


def _baseline_trace(manifest, name, seed, removals):
    """Build a trace for a set-style removal. ``removals`` is a list of
    (group_index, identity_id), already in the order events should appear."""
    tracker = _GroupDiagTracker(manifest)
    trace = RemovalTrace(
        name=name,
        group_labels=manifest.groups.labels,
        initial_diag=tuple(tracker.diag),
        seed=seed,
    )
    for step, (group_index, ident) in enumerate(removals, start=1):
        before, after, own_value = tracker.remove(group_index, ident)
        trace.events.append(
            RemovalEvent(
                step=step,
                identity_id=ident,
                group=manifest.groups.labels[group_index],
                own_group_ids=own_value,
                diag_before=before,
                diag_after=after,
            )
        )
    subset = manifest.remove_identities([ident for _, ident in removals])
    trace.final_manifest = subset
    return subset, trace


def sample_random(manifest, z, seed):
    """Remove ``z`` identities uniformly at random, keeping per-group removal
    counts as equal as possible.

    Every group loses floor(z / d); the remainder is spread over distinct
    groups chosen by a seeded draw (restricted to groups that can afford the
    extra removal). Identical seeds give identical results.
    """
    if not isinstance(z, int) or z < 0:
        raise SamplingError(f"removal budget must be a non-negative integer, got {z!r}")
    if seed is None:
        raise SamplingError("sample_random requires an explicit seed")
    total = manifest.identity_count
    if z >= total:
        raise SamplingError(f"budget {z} would remove every identity ({total} available)")

    d = manifest.groups.d
    quota, remainder = divmod(z, d)
    counts = manifest.group_counts
    short = [i for i, c in enumerate(counts) if c < quota]
    if short:
        raise SamplingError(
            f"group {manifest.groups.labels[short[0]]!r} has {counts[short[0]]} "
            f"identities, fewer than the per-group removal quota {quota}"
        )
    if remainder:
        if len(set(counts)) == 1:
            log.warning(
                "budget %d is not divisible by %d groups; removal counts "
                "will differ by one",
                z,
                d,
            )
        eligible = [i for i, c in enumerate(counts) if c >= quota + 1]
        if len(eligible) < remainder:
            raise SamplingError(
                "not enough groups can afford an extra removal "
                f"(need {remainder}, have {len(eligible)})"
            )

    rng = SplitMix64(seed)
    extras = set(rng.sample(eligible, remainder)) if remainder else set()

    rank = {ident: i for i, ident in enumerate(manifest.identities)}
    removals = []
    for g in range(d):
        members = [rec.identity_id for rec in manifest.identities_of_group(g)]
        take = quota + (1 if g in extras else 0)
        chosen = rng.sample(members, take)
        for ident in sorted(chosen, key=rank.__getitem__):
            removals.append((g, ident))
    return _baseline_trace(manifest, "random", seed, removals)


_SINGLE_STRATEGIES = ("min", "max", "rand")


def sample_single_group(manifest, group, strategy, keep_fraction, seed=None):
    """Shrink one group, leaving the others untouched.

    Keeps ceil(keep_fraction * N) identities of the group: those with the
    smallest own-group mean scores (``min``), the largest (``max``), or a
    seeded uniform subset (``rand``).
    """
    if strategy not in _SINGLE_STRATEGIES:
        raise SamplingError(
            f"unknown strategy {strategy!r}; expected one of {_SINGLE_STRATEGIES}"
        )
    if not (
        isinstance(keep_fraction, (int, float))
        and math.isfinite(keep_fraction)
        and 0.0 < keep_fraction <= 1.0
    ):
        raise SamplingError(f"keep_fraction must be in (0, 1], got {keep_fraction!r}")
    g = manifest.groups.index(group)
    members = [rec.identity_id for rec in manifest.identities_of_group(g)]
    if not members:
        raise SamplingError(f"group {group!r} has no identities")

    keep = math.ceil(keep_fraction * len(members))
    ids = compute_ids(manifest, Protocol.A)
    own = ids.own_scores(manifest)
    rank = {ident: i for i, ident in enumerate(manifest.identities)}

    if strategy == "min":
        ordered = sorted(members, key=lambda i: (own[i], rank[i]))
        kept = set(ordered[:keep])
    elif strategy == "max":
        ordered = sorted(members, key=lambda i: (-own[i], rank[i]))
        kept = set(ordered[:keep])
    else:
        if seed is None:
            raise SamplingError("strategy 'rand' requires an explicit seed")
        kept = set(SplitMix64(seed).sample(members, keep))

    removals = [
        (g, ident)
        for ident in sorted(set(members) - kept, key=rank.__getitem__)
    ]
    name = f"single-{strategy}-{manifest.groups.labels[g]}"
    return _baseline_trace(
        manifest, name, seed if strategy == "rand" else None, removals
    )


def equilibrium_step(trace, epsilon):
    """First step whose post-removal diagonal spread drops below epsilon.

    Accepts a RemovalTrace or an iterable of (step, diagonal) pairs; returns
    None when the spread never gets there.
    """
    if not (isinstance(epsilon, (int, float)) and epsilon > 0):
        raise SamplingError(f"epsilon must be positive, got {epsilon!r}")
    if isinstance(trace, RemovalTrace):
        series = [(event.step, event.diag_after) for event in trace.events]
    else:
        series = list(trace)
    if not series:
        raise SamplingError("empty trace")
    for step, diag in series:
        if max(diag) - min(diag) < epsilon:
            return step
    return None


def write_removal_log(trace, path):
    labels = trace.group_labels
    with atomic_write(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(
            ["step", "identity_id", "group", "own_group_ids"]
            + [f"diag_{g}_before" for g in labels]
            + [f"diag_{g}_after" for g in labels]
        )
        for event in trace.events:
            writer.writerow(
                [event.step, event.identity_id, event.group, fmt_float(event.own_group_ids)]
                + [fmt_float(v) for v in event.diag_before]
                + [fmt_float(v) for v in event.diag_after]
            )


def write_evolution(trace, path):
    """Step-by-step diagonal series; step 0 is the pre-removal state."""
    labels = trace.group_labels
    with atomic_write(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["step"] + [f"diag_{g}" for g in labels])
        writer.writerow([0] + [fmt_float(v) for v in trace.initial_diag])
        for event in trace.events:
            writer.writerow(
                [event.step] + [fmt_float(v) for v in event.diag_after]
            )


def read_diag_series(path):
    """Diagonal series from a removal log or an evolution file.

    Returns (group_labels, [(step, diag), ...]) with step 0 rows skipped, so
    the result is directly usable with :func:`equilibrium_step`.
    """
    with open(path, encoding="utf-8-sig", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SamplingError(f"{path}: empty file") from None
        if header and header[0] == "step" and all(
            col.startswith("diag_") and not col.endswith(("_before", "_after"))
            for col in header[1:]
        ) and len(header) > 1:
            labels = tuple(col[len("diag_"):] for col in header[1:])
            columns = list(range(1, len(header)))
        else:
            after = [
                i
                for i, col in enumerate(header)
                if col.startswith("diag_") and col.endswith("_after")
            ]
            if header[:1] != ["step"] or not after:
                raise SamplingError(
                    f"{path}: not a removal log or evolution file"
                )
            labels = tuple(header[i][len("diag_"):-len("_after")] for i in after)
            columns = after
        series = []
        for row in reader:
            if not row:
                continue
            step = int(row[0])
            if step == 0:
                continue
            series.append((step, tuple(float(row[i]) for i in columns)))
    return labels, series
