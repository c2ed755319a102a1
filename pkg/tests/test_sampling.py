"""Greedy removal, baselines, equilibrium detection and trace files."""

import logging
import math

import pytest

from fairbalance import (
    Protocol,
    RemovalTrace,
    SamplingError,
    compute_es,
    equilibrium_step,
    read_diag_series,
    sample_naive,
    sample_protocol,
    sample_random,
    sample_single_group,
    write_evolution,
    write_removal_log,
)

from conftest import build_manifest, tie_heavy_manifests


def event_tuples(trace):
    return [(e.step, e.identity_id, e.group) for e in trace.events]


def one_hot_four():
    rows = []
    for g in range(4):
        scores = tuple(1.0 if c == g else 0.0 for c in range(4))
        rows.append((f"i{g}", f"id{g}", g, scores))
    return build_manifest(("a", "b", "c", "d"), rows)


class TestBudgetValidation:
    def test_rejects_negative_and_non_integer(self, two_groups):
        for bad in (-1, 1.5, "2"):
            with pytest.raises(SamplingError, match="non-negative integer"):
                sample_protocol(two_groups, Protocol.A, bad)

    def test_mean_protocols_keep_one_per_group(self, two_groups):
        with pytest.raises(SamplingError, match="fewer than one identity"):
            sample_protocol(two_groups, Protocol.A, 3)

    def test_boundary_budget_reachable_when_means_cross(self):
        # removing g1's weak identity lifts its mean above g2's, so the
        # second step switches groups and the run ends at one per group
        m = build_manifest(
            ("g1", "g2"),
            [
                ("i1", "a", 0, (0.5, 0.5)),
                ("i2", "b", 0, (0.96, 0.04)),
                ("i3", "c", 1, (0.05, 0.95)),
                ("i4", "d", 1, (0.06, 0.94)),
            ],
        )
        subset, trace = sample_protocol(m, Protocol.A, 2)
        assert subset.group_counts == (1, 1)
        assert [e.group for e in trace.events] == ["g1", "g2"]

    def test_sum_protocol_keeps_one_overall(self, two_groups):
        with pytest.raises(SamplingError, match="remove every identity"):
            sample_protocol(two_groups, Protocol.C, 4)
        subset, _ = sample_protocol(two_groups, Protocol.C, 3)
        assert subset.identity_count == 1

    def test_mean_protocols_reject_empty_group_upfront(self):
        m = build_manifest(
            ("a", "b"),
            [
                ("i1", "x", 0, (0.9, 0.1)),
                ("i2", "y", 0, (0.8, 0.2)),
                ("i3", "z", 0, (0.7, 0.3)),
            ],
        )
        with pytest.raises(SamplingError, match="needs every group non-empty"):
            sample_protocol(m, Protocol.B, 1)


class TestGreedyRemoval:
    def test_zero_budget_is_identity(self):
        m = one_hot_four()
        subset, trace = sample_protocol(m, Protocol.C, 0)
        assert subset == m
        assert trace.events == []
        assert trace.final_manifest == m

    def test_hand_example_first_removal(self, two_groups):
        subset, trace = sample_protocol(two_groups, Protocol.A, 1)
        assert trace.initial_diag == (0.75, 0.945)
        event = trace.events[0]
        assert event.identity_id == "b"
        assert event.group == "g1"
        assert event.own_group_ids == 0.6
        assert event.diag_after == (0.9, 0.945)
        assert "b" not in subset.identities

    def test_sum_protocol_targets_largest(self, two_groups):
        _, trace = sample_protocol(two_groups, Protocol.C, 1)
        # sums: g1 = 1.5, g2 = 1.89; C pulls from the larger group
        assert trace.events[0].group == "g2"
        assert trace.events[0].identity_id == "d"

    @pytest.mark.parametrize("protocol", list(Protocol))
    def test_matches_naive_on_modest_budgets(self, small_corpus, protocol):
        for m in small_corpus[:15]:
            max_z = (
                m.identity_count - m.groups.d
                if protocol.group_mean
                else m.identity_count - 1
            )
            for z in {1, 5, min(10, max_z)}:
                if z < 1 or z > max_z:
                    continue
                try:
                    fast = sample_protocol(m, protocol, z)
                except SamplingError as exc:
                    with pytest.raises(SamplingError) as caught:
                        sample_naive(m, protocol, z)
                    assert event_tuples(exc.partial_trace) == event_tuples(
                        caught.value.partial_trace
                    )
                    continue
                slow = sample_naive(m, protocol, z)
                assert event_tuples(fast[1]) == event_tuples(slow[1])
                assert [e.diag_after for e in fast[1].events] == [
                    e.diag_after for e in slow[1].events
                ]
                assert fast[0] == slow[0]

    def test_score_tie_takes_earliest_identity(self):
        flat, mirrored = tie_heavy_manifests()
        _, trace = sample_protocol(flat, Protocol.A, 2)
        # every g2 identity scores 0.7 > 0.6, so g1 is drained in file order
        assert trace.removed_ids() == ["fa0", "fa1"]

        # groups g1 and g2 mirror each other's scores, so their diagonal
        # entries tie exactly (g3 sits higher); the lowest index wins
        diag = sample_protocol(mirrored, Protocol.A, 0)[1].initial_diag
        assert diag[0] == diag[1] < diag[2]
        _, trace = sample_protocol(mirrored, Protocol.A, 1)
        assert trace.events[0].group == "g1"
        assert trace.events[0].identity_id == "x2"

    def test_emptying_error_carries_partial_trace(self):
        m = build_manifest(
            ("a", "b"),
            [
                ("i1", "lone", 0, (0.2, 0.8)),
                ("i2", "r1", 1, (0.1, 0.9)),
                ("i3", "r2", 1, (0.15, 0.85)),
                ("i4", "r3", 1, (0.2, 0.8)),
            ],
        )
        # group a holds one weak identity; the first step already targets it
        with pytest.raises(SamplingError, match="would empty it") as caught:
            sample_protocol(m, Protocol.A, 2)
        partial = caught.value.partial_trace
        assert isinstance(partial, RemovalTrace)
        assert partial.events == []
        assert partial.final_manifest == m

    def test_greedy_prefix_property(self, small_corpus):
        for m in small_corpus[:8]:
            budget = m.identity_count - m.groups.d
            if budget < 4:
                continue
            z1, z2 = budget // 2, budget - budget // 2
            try:
                whole, whole_trace = sample_protocol(m, Protocol.A, z1 + z2)
            except SamplingError:
                continue
            first, first_trace = sample_protocol(m, Protocol.A, z1)
            second, second_trace = sample_protocol(first, Protocol.A, z2)
            assert (
                first_trace.removed_ids() + second_trace.removed_ids()
                == whole_trace.removed_ids()
            )
            assert second == whole

    def test_trace_diag_matches_full_recompute_exactly(self, small_corpus):
        for m in small_corpus[:5]:
            z = min(8, m.identity_count - m.groups.d)
            if z < 1:
                continue
            try:
                _, trace = sample_protocol(m, Protocol.B, z)
            except SamplingError:
                continue
            current = m
            for event in trace.events:
                current = current.remove_identities({event.identity_id})
                assert event.diag_after == compute_es(current, Protocol.B).diag()

    def test_sum_protocol_runs_to_a_single_identity(self):
        flat, _ = tie_heavy_manifests()
        subset, trace = sample_protocol(flat, Protocol.C, flat.identity_count - 1)
        assert subset.identity_count == 1
        assert len(trace.events) == flat.identity_count - 1

    def test_events_touch_only_the_target_group(self, two_groups):
        _, trace = sample_protocol(two_groups, Protocol.C, 3)
        for event in trace.events:
            touched = trace.group_labels.index(event.group)
            for i, (before, after) in enumerate(
                zip(event.diag_before, event.diag_after)
            ):
                if i != touched:
                    assert before == after


class TestSampleRandom:
    def make_balanced(self, per_group=5, d=3):
        rows = []
        for g in range(d):
            for k in range(per_group):
                scores = [0.1 / (d - 1)] * d
                scores[g] = 0.9
                # tweak so identities differ without breaking the sum
                scores[g] -= 0.001 * k
                scores[(g + 1) % d] += 0.001 * k
                rows.append((f"im{g}_{k}", f"id{g}_{k}", g, tuple(scores)))
        return build_manifest(tuple(f"g{i}" for i in range(d)), rows)

    def test_requires_seed(self, two_groups):
        with pytest.raises(SamplingError, match="explicit seed"):
            sample_random(two_groups, 1, None)

    def test_deterministic_per_seed(self):
        m = self.make_balanced()
        a = sample_random(m, 6, seed=3)
        b = sample_random(m, 6, seed=3)
        assert a[0] == b[0]
        assert event_tuples(a[1]) == event_tuples(b[1])
        c = sample_random(m, 6, seed=4)
        assert event_tuples(c[1]) != event_tuples(a[1])

    def test_even_split_when_divisible(self):
        m = self.make_balanced(per_group=5, d=3)
        subset, trace = sample_random(m, 6, seed=1)
        assert subset.group_counts == (3, 3, 3)
        assert trace.name == "random"
        assert trace.seed == 1

    def test_remainder_rule(self, caplog):
        m = self.make_balanced(per_group=5, d=4)
        with caplog.at_level(logging.WARNING):
            subset, _ = sample_random(m, 6, seed=9)
        removed_per_group = [5 - c for c in subset.group_counts]
        assert sorted(removed_per_group) == [1, 1, 2, 2]
        assert any("not divisible" in r.message for r in caplog.records)

    def test_unbalanced_input_no_warning(self, caplog):
        m = build_manifest(
            ("a", "b"),
            [("i1", "x", 0, (0.9, 0.1))]
            + [(f"j{k}", f"y{k}", 1, (0.2, 0.8)) for k in range(4)],
        )
        with caplog.at_level(logging.WARNING):
            subset, _ = sample_random(m, 1, seed=2)
        assert not caplog.records
        assert subset.identity_count == 4

    def test_quota_errors(self):
        m = build_manifest(
            ("a", "b"),
            [("i1", "x", 0, (0.9, 0.1))]
            + [(f"j{k}", f"y{k}", 1, (0.2, 0.8)) for k in range(4)],
        )
        with pytest.raises(SamplingError, match="fewer than the per-group"):
            sample_random(m, 4, seed=0)
        with pytest.raises(SamplingError, match="remove every identity"):
            sample_random(m, 5, seed=0)

    def test_extra_removals_respect_affordability(self):
        # group a can afford the quota but not the +1 remainder
        m = build_manifest(
            ("a", "b"),
            [("i1", "x", 0, (0.9, 0.1))]
            + [(f"j{k}", f"y{k}", 1, (0.2, 0.8)) for k in range(5)],
        )
        subset, trace = sample_random(m, 3, seed=7)
        # quota 1 each, remainder 1 must fall on group b
        assert subset.group_counts == (0, 3)
        assert trace.events[0].diag_after[0] == 0.0

    def test_events_in_first_appearance_order_per_group(self):
        m = self.make_balanced(per_group=4, d=2)
        _, trace = sample_random(m, 4, seed=5)
        by_group = {}
        for event in trace.events:
            by_group.setdefault(event.group, []).append(event.identity_id)
        order = list(m.identities)
        for idents in by_group.values():
            assert idents == sorted(idents, key=order.index)


class TestSampleSingleGroup:
    def make_group(self):
        rows = []
        for k in range(10):
            own = 0.5 + k * 0.04
            rows.append((f"i{k}", f"id{k}", 0, (own, 1.0 - own)))
        rows.append(("other", "oid", 1, (0.1, 0.9)))
        return build_manifest(("a", "b"), rows)

    def test_min_max_partition_the_group(self):
        m = self.make_group()
        low, _ = sample_single_group(m, "a", "min", 0.5)
        high, _ = sample_single_group(m, "a", "max", 0.5)
        low_kept = {i for i in low.identities if low.identities[i].group == 0}
        high_kept = {i for i in high.identities if high.identities[i].group == 0}
        assert low_kept == {f"id{k}" for k in range(5)}
        assert high_kept == {f"id{k}" for k in range(5, 10)}
        assert low_kept | high_kept == {f"id{k}" for k in range(10)}

    def test_ceil_keep_count(self):
        m = self.make_group()
        subset, trace = sample_single_group(m, "a", "min", 0.55)
        assert subset.group_counts[0] == 6  # ceil(5.5)
        assert trace.name == "single-min-a"
        assert len(trace.events) == 4

    def test_keep_fraction_one_is_identity(self):
        m = self.make_group()
        subset, trace = sample_single_group(m, "a", "max", 1.0)
        assert subset == m
        assert trace.events == []

    def test_other_groups_untouched(self):
        m = self.make_group()
        subset, _ = sample_single_group(m, "a", "min", 0.3)
        assert "oid" in subset.identities
        assert subset.group_counts[1] == 1

    def test_rand_needs_seed_and_is_deterministic(self):
        m = self.make_group()
        with pytest.raises(SamplingError, match="requires an explicit seed"):
            sample_single_group(m, "a", "rand", 0.5)
        one = sample_single_group(m, "a", "rand", 0.5, seed=11)
        two = sample_single_group(m, "a", "rand", 0.5, seed=11)
        assert one[0] == two[0]
        assert one[1].seed == 11
        assert one[1].name == "single-rand-a"

    def test_bad_arguments(self):
        m = self.make_group()
        with pytest.raises(SamplingError, match="unknown strategy"):
            sample_single_group(m, "a", "median", 0.5)
        for bad in (0.0, -0.5, 1.5, math.nan):
            with pytest.raises(SamplingError, match="keep_fraction"):
                sample_single_group(m, "a", "min", bad)

    def test_unknown_group_label(self):
        with pytest.raises(Exception, match="unknown group"):
            sample_single_group(self.make_group(), "z", "min", 0.5)


class TestEquilibriumStep:
    def spread_series(self):
        return [
            (1, (0.95, 0.90, 0.905, 0.9101)),
            (2, (0.93, 0.90, 0.905, 0.9101)),
            (3, (0.91, 0.90, 0.905, 0.9101)),
            (4, (0.91, 0.905, 0.905, 0.9101)),
        ]

    def test_first_step_below_epsilon(self):
        assert equilibrium_step(self.spread_series(), 0.02) == 3

    def test_epsilon_above_initial_spread_returns_first_step(self):
        assert equilibrium_step(self.spread_series(), 0.5) == 1

    def test_never_reached_is_none(self):
        assert equilibrium_step(self.spread_series(), 1e-6) is None

    def test_accepts_trace_objects(self, two_groups):
        _, trace = sample_protocol(two_groups, Protocol.A, 1)
        # diag_after = (0.9, 0.945), spread 0.045
        assert equilibrium_step(trace, 0.05) == 1
        assert equilibrium_step(trace, 0.01) is None

    def test_errors(self):
        with pytest.raises(SamplingError, match="epsilon"):
            equilibrium_step(self.spread_series(), 0.0)
        with pytest.raises(SamplingError, match="empty trace"):
            equilibrium_step([], 0.1)


class TestTraceFiles:
    def test_removal_log_round_trip(self, two_groups, tmp_path):
        _, trace = sample_protocol(two_groups, Protocol.C, 2)
        path = str(tmp_path / "log.csv")
        write_removal_log(trace, path)
        labels, series = read_diag_series(path)
        assert labels == ("g1", "g2")
        assert series == [(e.step, e.diag_after) for e in trace.events]

    def test_evolution_round_trip_skips_step_zero(self, two_groups, tmp_path):
        _, trace = sample_protocol(two_groups, Protocol.C, 2)
        path = str(tmp_path / "evo.csv")
        write_evolution(trace, path)
        with open(path) as handle:
            assert handle.readline().strip() == "step,diag_g1,diag_g2"
            assert handle.readline().startswith("0,")
        labels, series = read_diag_series(path)
        assert labels == ("g1", "g2")
        assert series[0][0] == 1
        assert len(series) == 2

    def test_equilibrium_from_file_matches_trace(self, two_groups, tmp_path):
        _, trace = sample_protocol(two_groups, Protocol.C, 2)
        path = str(tmp_path / "evo.csv")
        write_evolution(trace, path)
        _, series = read_diag_series(path)
        for epsilon in (0.01, 0.06, 0.7):
            assert equilibrium_step(series, epsilon) == (
                equilibrium_step(trace, epsilon)
            )

    def test_rejects_unrelated_csv(self, tmp_path):
        path = tmp_path / "junk.csv"
        path.write_text("foo,bar\n1,2\n")
        with pytest.raises(SamplingError, match="not a removal log"):
            read_diag_series(str(path))
