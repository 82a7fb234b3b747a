"""Alias resolution: group validated records into per-device sets.

Two addresses are aliases when they report the same engine ID, the same
engine boots, and last-reboot times falling into the same bin. Eight
variants cover the bin function (exact, nearest-10 rounding, 20-second
floor bins, 20-second rounded bins) crossed with keying on scan-1 fields
only ("First") or on both scans ("Both").
"""

from __future__ import annotations

import enum
import ipaddress
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Mapping, Sequence

from .errors import InvalidArgumentError
from .records import AliasSetRow, ValidRecord

FAMILY_V4 = "V4Only"
FAMILY_V6 = "V6Only"
FAMILY_DUAL = "DualStack"


class Variant(enum.Enum):
    EXACT_FIRST = "exact-first"
    EXACT_BOTH = "exact-both"
    ROUND_FIRST = "round-first"
    ROUND_BOTH = "round-both"
    DIV20_FIRST = "div20-first"
    DIV20_BOTH = "div20-both"
    DIV20_ROUND_FIRST = "div20-round-first"
    DIV20_ROUND_BOTH = "div20-round-both"

    @property
    def uses_both_scans(self) -> bool:
        return self.value.endswith("-both")

    @property
    def binning(self) -> str:
        return self.value.rsplit("-", 1)[0]


DEFAULT_VARIANT = Variant.DIV20_BOTH


def bin_lrt(lrt: int, variant: Variant) -> int:
    """Map a last-reboot timestamp to its bin under the variant.

    Bins are anchored at the Unix epoch. Rounding is half-up so results
    are stable for .5 cases regardless of float banker's rounding.
    """
    binning = variant.binning
    if binning == "exact":
        return lrt
    if binning == "round":
        return int(math.floor(lrt / 10 + 0.5)) * 10
    if binning == "div20":
        return math.floor(lrt / 20)
    if binning == "div20-round":
        return int(math.floor(lrt / 20 + 0.5))
    raise InvalidArgumentError(f"unknown binning {binning!r}")


@dataclass(frozen=True)
class AliasKey:
    engine_id: bytes
    boots1: int
    boots2: int | None
    lrt1_binned: int
    lrt2_binned: int | None


@dataclass(frozen=True)
class AliasSet:
    key: AliasKey
    members: tuple[str, ...]
    family: str
    variant: Variant
    vendor: str = "Unknown"
    router_tagged: bool = False


def alias_key(record: ValidRecord, variant: Variant) -> AliasKey:
    """Grouping key for one validated record under a variant.

    "First" variants ignore the second scan entirely (a 3-field key);
    validated records always carry equal boots across scans, so boots1
    doubles for both."""
    if variant.uses_both_scans:
        return AliasKey(
            engine_id=bytes.fromhex(record.engine_id_hex),
            boots1=record.boots,
            boots2=record.boots,
            lrt1_binned=bin_lrt(record.last_reboot_unix_s_scan1, variant),
            lrt2_binned=bin_lrt(record.last_reboot_unix_s_scan2, variant),
        )
    return AliasKey(
        engine_id=bytes.fromhex(record.engine_id_hex),
        boots1=record.boots,
        boots2=None,
        lrt1_binned=bin_lrt(record.last_reboot_unix_s_scan1, variant),
        lrt2_binned=None,
    )


def _ip_sort_key(ip: str):
    addr = ipaddress.ip_address(ip)
    return (addr.version, int(addr))


def _family_of(members: Sequence[str]) -> str:
    versions = {ipaddress.ip_address(ip).version for ip in members}
    if versions == {4}:
        return FAMILY_V4
    if versions == {6}:
        return FAMILY_V6
    return FAMILY_DUAL


def _build_set(key: AliasKey, members: Iterable[str],
               variant: Variant) -> AliasSet:
    ordered = tuple(sorted(set(members), key=_ip_sort_key))
    return AliasSet(key=key, members=ordered, family=_family_of(ordered),
                    variant=variant)


def group_aliases(records: Sequence[ValidRecord],
                  variant: Variant = DEFAULT_VARIANT) -> list[AliasSet]:
    """Partition record IPs into alias sets; two IPs share a set iff
    their keys are equal. Sets are ordered by smallest member IP."""
    buckets: dict[AliasKey, list[str]] = {}
    for record in records:
        buckets.setdefault(alias_key(record, variant), []).append(record.ip)
    sets = [_build_set(key, members, variant)
            for key, members in buckets.items()]
    sets.sort(key=lambda s: _ip_sort_key(s.members[0]))
    return sets


def merge_dual_stack(v4_sets: Sequence[AliasSet],
                     v6_sets: Sequence[AliasSet]) -> list[AliasSet]:
    """Union sets across families by full key equality.

    Sets with a key seen in both inputs merge into one DualStack set;
    all others pass through unchanged."""
    variants = {s.variant for s in v4_sets} | {s.variant for s in v6_sets}
    if len(variants) > 1:
        raise InvalidArgumentError(
            "cannot merge alias sets built with different variants")
    merged: dict[AliasKey, list[str]] = {}
    variant = next(iter(variants)) if variants else DEFAULT_VARIANT
    for alias_set in list(v4_sets) + list(v6_sets):
        merged.setdefault(alias_set.key, []).extend(alias_set.members)
    out = [_build_set(key, members, variant)
           for key, members in merged.items()]
    out.sort(key=lambda s: _ip_sort_key(s.members[0]))
    return out


@dataclass(frozen=True)
class SetStatistics:
    total: int
    non_singleton: int
    member_histogram: dict[int, int]
    mean_members_non_singleton: float


def set_statistics(sets: Sequence[AliasSet]) -> SetStatistics:
    histogram: dict[int, int] = {}
    for alias_set in sets:
        size = len(alias_set.members)
        histogram[size] = histogram.get(size, 0) + 1
    non_singleton = [len(s.members) for s in sets if len(s.members) > 1]
    mean = (sum(non_singleton) / len(non_singleton)) if non_singleton else 0.0
    return SetStatistics(total=len(sets), non_singleton=len(non_singleton),
                         member_histogram=histogram,
                         mean_members_non_singleton=mean)


def variant_comparison(records: Sequence[ValidRecord]
                       ) -> dict[Variant, SetStatistics]:
    """All eight variants computed over the same input."""
    return {variant: set_statistics(group_aliases(records, variant))
            for variant in Variant}


def sets_to_rows(sets: Sequence[AliasSet]) -> list[AliasSetRow]:
    return [AliasSetRow(set_id=index, family=s.family, vendor=s.vendor,
                        member_count=len(s.members), ips=s.members)
            for index, s in enumerate(sets, start=1)]


def annotate(sets: Sequence[AliasSet],
             vendor_fn: Callable[[AliasSet], str] | None = None,
             router_tags: frozenset[str] | set[str] | None = None
             ) -> list[AliasSet]:
    """Return sets with vendor labels and router tags filled in."""
    out = []
    for alias_set in sets:
        vendor = vendor_fn(alias_set) if vendor_fn else alias_set.vendor
        tagged = (bool(router_tags and any(ip in router_tags
                                           for ip in alias_set.members)))
        out.append(replace(alias_set, vendor=vendor, router_tagged=tagged))
    return out
