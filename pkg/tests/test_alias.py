"""Alias grouping tests, including the brute-force partition oracle."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snmpscout.alias import (
    DEFAULT_VARIANT,
    AliasSet,
    Variant,
    alias_key,
    bin_lrt,
    group_aliases,
    merge_dual_stack,
    set_statistics,
    sets_to_rows,
    variant_comparison,
)
from snmpscout.errors import InvalidArgumentError
from snmpscout.records import ValidRecord


def record(ip, engine_id="80000009030000aabbccdd", boots=7,
           lrt1=1_617_990_000, lrt2=None):
    return ValidRecord(ip=ip, engine_id_hex=engine_id, boots=boots,
                       last_reboot_unix_s_scan1=lrt1,
                       last_reboot_unix_s_scan2=lrt2 if lrt2 is not None
                       else lrt1,
                       format="MAC", enterprise_number=9)


def brute_force_partition(records, variant):
    """O(n^2) pairwise grouping by key equality."""
    keys = [alias_key(r, variant) for r in records]
    parent = list(range(len(records)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            if keys[i] == keys[j]:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
    groups = {}
    for index, rec in enumerate(records):
        groups.setdefault(find(index), set()).add(rec.ip)
    return {frozenset(g) for g in groups.values()}


class TestBinning:
    def test_div20_paper_value(self):
        assert bin_lrt(1617990019, Variant.DIV20_BOTH) == 80899500

    def test_round_nearest_ten(self):
        assert bin_lrt(15, Variant.ROUND_BOTH) == 20
        assert bin_lrt(14, Variant.ROUND_BOTH) == 10
        assert bin_lrt(-15, Variant.ROUND_FIRST) == -10  # half-up

    def test_exact_is_identity(self):
        assert bin_lrt(123456, Variant.EXACT_FIRST) == 123456

    def test_div20_round(self):
        assert bin_lrt(29, Variant.DIV20_ROUND_BOTH) == 1
        assert bin_lrt(31, Variant.DIV20_ROUND_BOTH) == 2

    @given(st.integers(min_value=0, max_value=2 ** 33))
    def test_div20_bin_stability(self, lrt):
        top = lrt + 19 - (lrt % 20)
        assert bin_lrt(lrt, Variant.DIV20_BOTH) == \
            bin_lrt(top, Variant.DIV20_BOTH)

    @given(st.integers(min_value=-2 ** 33, max_value=2 ** 33))
    def test_binnings_are_many_to_one_coarsenings(self, lrt):
        # nearby timestamps never land in bins out of order
        for variant in (Variant.ROUND_BOTH, Variant.DIV20_BOTH,
                        Variant.DIV20_ROUND_BOTH):
            assert bin_lrt(lrt, variant) <= bin_lrt(lrt + 25, variant)


class TestGrouping:
    def test_singleton(self):
        sets = group_aliases([record("192.0.2.1")])
        assert len(sets) == 1 and sets[0].members == ("192.0.2.1",)
        assert sets[0].family == "V4Only"

    def test_same_device_interfaces_group(self):
        records = [record("192.0.2.1"), record("192.0.2.2"),
                   record("fd00::1")]
        sets = group_aliases(records)
        assert len(sets) == 1
        assert sets[0].members == ("192.0.2.1", "192.0.2.2", "fd00::1")
        assert sets[0].family == "DualStack"

    def test_constant_id_distinct_reboot_never_merges(self):
        hour = 3600
        one = record("192.0.2.1", lrt1=1_617_990_000)
        two = record("192.0.2.2", lrt1=1_617_990_000 + hour)
        for variant in Variant:
            sets = group_aliases([one, two], variant)
            assert len(sets) == 2, variant

    def test_boots_split_groups(self):
        sets = group_aliases([record("192.0.2.1", boots=7),
                              record("192.0.2.2", boots=8)])
        assert len(sets) == 2

    def test_first_variant_ignores_second_scan(self):
        base = record("192.0.2.1", lrt2=1_617_990_000)
        drifted = record("192.0.2.2", lrt2=1_617_990_000 + 40)
        assert len(group_aliases([base, drifted], Variant.DIV20_FIRST)) == 1
        assert len(group_aliases([base, drifted], Variant.DIV20_BOTH)) == 2

    def test_partition_property(self):
        records = [record(f"192.0.2.{i}", boots=i % 3,
                          lrt1=1_617_990_000 + i * 7) for i in range(1, 40)]
        sets = group_aliases(records)
        seen = [ip for s in sets for ip in s.members]
        assert sorted(seen) == sorted(r.ip for r in records)
        assert len(seen) == len(set(seen))

    def test_sets_ordered_by_smallest_member(self):
        records = [record("192.0.2.9", boots=1), record("192.0.2.2", boots=2),
                   record("192.0.2.30", boots=3)]
        sets = group_aliases(records)
        assert [s.members[0] for s in sets] == \
            ["192.0.2.2", "192.0.2.9", "192.0.2.30"]

    def test_rows_numbered_in_order(self):
        rows = sets_to_rows(group_aliases([record("192.0.2.1"),
                                           record("192.0.2.2", boots=9)]))
        assert [row.set_id for row in rows] == [1, 2]
        assert rows[0].member_count == 1


class TestDualStackMerge:
    def test_union_by_key(self):
        v4 = group_aliases([record(f"192.0.2.{i}") for i in (1, 2, 3)])
        v6 = group_aliases([record(f"fd00::{i}") for i in (1, 2)])
        combined = merge_dual_stack(v4, v6)
        assert len(combined) == 1
        assert combined[0].family == "DualStack"
        assert len(combined[0].members) == 5

    def test_disjoint_keys_pass_through(self):
        v4 = group_aliases([record("192.0.2.1", boots=1)])
        v6 = group_aliases([record("fd00::1", boots=2)])
        combined = merge_dual_stack(v4, v6)
        assert len(combined) == 2
        assert {s.family for s in combined} == {"V4Only", "V6Only"}

    def test_idempotent_and_commutative(self):
        v4 = group_aliases([record("192.0.2.1"), record("192.0.2.8", boots=3)])
        v6 = group_aliases([record("fd00::1"), record("fd00::9", boots=4)])
        once = merge_dual_stack(v4, v6)
        assert merge_dual_stack(once, []) == once
        assert merge_dual_stack(v6, v4) == once

    def test_variant_mismatch_rejected(self):
        v4 = group_aliases([record("192.0.2.1")], Variant.DIV20_BOTH)
        v6 = group_aliases([record("fd00::1")], Variant.EXACT_BOTH)
        with pytest.raises(InvalidArgumentError, match="variant"):
            merge_dual_stack(v4, v6)


class TestStatistics:
    def test_empty(self):
        stats = set_statistics([])
        assert stats.total == 0 and stats.non_singleton == 0
        assert stats.mean_members_non_singleton == 0.0

    def test_small_example(self):
        sets = group_aliases([record("192.0.2.1", boots=1),
                              record("192.0.2.2", boots=2),
                              record("192.0.2.3", boots=2)])
        stats = set_statistics(sets)
        assert stats.total == 2
        assert stats.non_singleton == 1
        assert stats.member_histogram == {1: 1, 2: 1}
        assert stats.mean_members_non_singleton == 2.0

    def test_variant_comparison_single_device(self):
        table = variant_comparison([record("192.0.2.1"),
                                    record("192.0.2.2")])
        assert set(table) == set(Variant)
        assert all(row.total == 1 for row in table.values())


def random_records(rng, count):
    """Records engineered to collide across keys at every granularity."""
    ids = [f"80000009030000aabb{suffix:02x}{suffix:02x}"
           for suffix in range(max(2, count // 30))]
    base = 1_600_000_000
    out = []
    for index in range(count):
        lrt1 = base + rng.randrange(0, 400)
        drift = rng.choice((0, 1, 3, 9, 10))
        out.append(ValidRecord(
            ip=f"10.{index // 65536}.{(index // 256) % 256}.{index % 256}",
            engine_id_hex=rng.choice(ids),
            boots=rng.randrange(1, 4),
            last_reboot_unix_s_scan1=lrt1,
            last_reboot_unix_s_scan2=lrt1 + drift,
            format="MAC", enterprise_number=9))
    return out


class TestOracle:
    @pytest.mark.parametrize("seed", range(20))
    def test_matches_brute_force_partition(self, seed):
        rng = random.Random(f"oracle:{seed}")
        records = random_records(rng, rng.randrange(60, 801))
        variant = rng.choice(list(Variant))
        sets = group_aliases(records, variant)
        got = {frozenset(s.members) for s in sets}
        assert got == brute_force_partition(records, variant)

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_coarsening_never_splits(self, seed):
        rng = random.Random(seed)
        records = random_records(rng, 120)
        exact_both = len(group_aliases(records, Variant.EXACT_BOTH))
        exact_first = len(group_aliases(records, Variant.EXACT_FIRST))
        for variant in Variant:
            count = len(group_aliases(records, variant))
            ceiling = exact_both if variant.uses_both_scans else exact_first
            assert count <= ceiling, variant
            assert count >= 1
