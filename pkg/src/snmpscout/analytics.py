"""Vendor identification and aggregate studies over alias sets.

Everything here is a pure aggregation: vendor labeling from engine IDs,
uptime distributions, per-AS coverage and dominance, regional vendor
shares, and the identifier-tuple uniqueness measure. Figure data tables
for the offline renderer are assembled at the end.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .alias import AliasSet, set_statistics
from .engineid import (
    EngineIdFormat,
    EngineIdInfo,
    bundled_enterprise_table,
    bundled_oui_table,
    enterprise_lookup,
    format_census,
    hamming_fraction,
    oui_lookup,
    parse_engine_id,
)
from .errors import InvalidArgumentError
from .records import ValidRecord

UNKNOWN_VENDOR = "Unknown"
UNMAPPED_AS = 0
COVERAGE_THRESHOLDS = (2, 5, 10, 50, 100)


# ---------------------------------------------------------------------------
# Vendor identification
# ---------------------------------------------------------------------------

def vendor_of(info: EngineIdInfo,
              oui_table: Mapping[str, str] | None = None,
              enterprise_table: Mapping[int, str] | None = None) -> str:
    """Vendor label for one engine ID.

    A registered MAC OUI wins (highest confidence), then a registered
    enterprise number, else Unknown. Depends only on the ID's format,
    MAC, and enterprise number."""
    if oui_table is None:
        oui_table = bundled_oui_table()
    if enterprise_table is None:
        enterprise_table = bundled_enterprise_table()
    if info.format is EngineIdFormat.MAC and info.mac is not None:
        name = oui_lookup(info.mac, oui_table)
        if name is not None:
            return name
    if info.enterprise_number is not None:
        name = enterprise_lookup(info.enterprise_number, enterprise_table)
        if name is not None:
            return name
    return UNKNOWN_VENDOR


def make_vendor_labeler(records: Sequence[ValidRecord],
                        oui_table: Mapping[str, str] | None = None,
                        enterprise_table: Mapping[int, str] | None = None):
    """Vendor function for alias-set annotation, keyed by member IP."""
    by_ip = {record.ip: record.engine_id_hex for record in records}

    def label(alias_set: AliasSet) -> str:
        engine_hex = by_ip.get(alias_set.members[0])
        if engine_hex is None:
            return UNKNOWN_VENDOR
        return vendor_of(parse_engine_id(bytes.fromhex(engine_hex)),
                         oui_table, enterprise_table)

    return label


# ---------------------------------------------------------------------------
# IP-to-AS mapping
# ---------------------------------------------------------------------------

class AsMapping:
    """Longest-prefix-match IP-to-AS table with optional AS regions."""

    def __init__(self, prefixes: Iterable[tuple[str, int]],
                 regions: Mapping[int, str] | None = None):
        # bucket prefixes by (family version, prefix length)
        self._buckets: dict[tuple[int, int], dict[int, int]] = {}
        for cidr, asn in prefixes:
            network = ipaddress.ip_network(cidr, strict=False)
            bucket = self._buckets.setdefault(
                (network.version, network.prefixlen), {})
            bucket[int(network.network_address)] = asn
        self._lengths = {
            version: sorted((plen for (v, plen) in self._buckets
                             if v == version), reverse=True)
            for version in (4, 6)}
        self.regions = dict(regions or {})

    def lookup(self, ip: str) -> int:
        """AS number of the most specific covering prefix; 0 if none."""
        addr = ipaddress.ip_address(ip)
        width = addr.max_prefixlen
        value = int(addr)
        for plen in self._lengths[addr.version]:
            prefix = value >> (width - plen) << (width - plen)
            asn = self._buckets[(addr.version, plen)].get(prefix)
            if asn is not None:
                return asn
        return UNMAPPED_AS

    def region_of(self, asn: int) -> str:
        return self.regions.get(asn, "Unknown")


def load_as_mapping(prefix_path, region_path=None) -> AsMapping:
    """prefix file: CIDR<TAB>ASN per line; region file: ASN<TAB>region."""
    prefixes = []
    with open(prefix_path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                cidr, asn = line.split("\t")
                prefixes.append((cidr, int(asn)))
            except ValueError as exc:
                raise InvalidArgumentError(
                    f"bad prefix line {line!r}") from exc
    regions = {}
    if region_path is not None:
        with open(region_path, "r", encoding="utf-8") as handle:
            for line in handle:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                try:
                    asn, region = line.split("\t")
                    regions[int(asn)] = region
                except ValueError as exc:
                    raise InvalidArgumentError(
                        f"bad region line {line!r}") from exc
    return AsMapping(prefixes, regions)


def load_router_tags(path) -> frozenset[str]:
    """One IP per line; '#' comments."""
    tags = set()
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.split("#", 1)[0].strip()
            if line:
                tags.add(str(ipaddress.ip_address(line)))
    return frozenset(tags)


# ---------------------------------------------------------------------------
# Distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Ecdf:
    """Right-continuous empirical CDF over a finite sample."""

    xs: tuple[float, ...]
    ys: tuple[float, ...]

    @classmethod
    def from_samples(cls, samples: Iterable[float]) -> "Ecdf":
        ordered = sorted(samples)
        if not ordered:
            raise InvalidArgumentError("ECDF of an empty sample")
        n = len(ordered)
        xs: list[float] = []
        ys: list[float] = []
        for index, value in enumerate(ordered):
            if index + 1 < n and ordered[index + 1] == value:
                continue
            xs.append(value)
            ys.append((index + 1) / n)
        return cls(xs=tuple(xs), ys=tuple(ys))

    def evaluate(self, x: float) -> float:
        from bisect import bisect_right
        index = bisect_right(self.xs, x)
        return self.ys[index - 1] if index else 0.0


def uptime_distribution(sets: Sequence[AliasSet],
                        records: Sequence[ValidRecord],
                        asof: int) -> Ecdf:
    """ECDF of seconds since last reboot, one sample per alias set.

    Each set is represented by its smallest member IP; that record's
    scan-1 last reboot provides the sample."""
    lrt_by_ip = {record.ip: record.last_reboot_unix_s_scan1
                 for record in records}
    samples = []
    for alias_set in sets:
        lrt = lrt_by_ip.get(alias_set.members[0])
        if lrt is None:
            raise InvalidArgumentError(
                f"no record for set representative {alias_set.members[0]}")
        if lrt > asof:
            raise InvalidArgumentError("asof precedes a last reboot time")
        samples.append(asof - lrt)
    return Ecdf.from_samples(samples)


# ---------------------------------------------------------------------------
# Per-AS aggregations
# ---------------------------------------------------------------------------

def sets_by_as(sets: Sequence[AliasSet], mapping: AsMapping
               ) -> dict[int, list[AliasSet]]:
    grouped: dict[int, list[AliasSet]] = {}
    for alias_set in sets:
        asn = mapping.lookup(alias_set.members[0])
        grouped.setdefault(asn, []).append(alias_set)
    return grouped


def vendor_popularity(sets: Sequence[AliasSet]
                      ) -> dict[str, dict[str, int]]:
    """Alias-set counts per vendor, split by address family."""
    table: dict[str, dict[str, int]] = {}
    for alias_set in sets:
        per_family = table.setdefault(alias_set.vendor, {})
        per_family[alias_set.family] = per_family.get(alias_set.family, 0) + 1
    return table


def vendor_dominance(by_as: Mapping[int, Sequence[AliasSet]]
                     ) -> dict[int, float]:
    """Per AS: fraction of sets belonging to its most common vendor."""
    dominance = {}
    for asn, sets in by_as.items():
        if not sets:
            continue
        counts: dict[str, int] = {}
        for alias_set in sets:
            counts[alias_set.vendor] = counts.get(alias_set.vendor, 0) + 1
        dominance[asn] = max(counts.values()) / len(sets)
    return dominance


def vendors_per_as(by_as: Mapping[int, Sequence[AliasSet]]) -> dict[int, int]:
    """Distinct identified vendors per AS; Unknown is not identified."""
    return {asn: len({s.vendor for s in sets} - {UNKNOWN_VENDOR})
            for asn, sets in by_as.items()}


def regional_popularity(sets: Sequence[AliasSet], mapping: AsMapping
                        ) -> dict[str, dict[str, float]]:
    """Vendor share of alias sets per region; shares sum to 1."""
    counts: dict[str, dict[str, int]] = {}
    for alias_set in sets:
        region = mapping.region_of(mapping.lookup(alias_set.members[0]))
        per_vendor = counts.setdefault(region, {})
        per_vendor[alias_set.vendor] = per_vendor.get(alias_set.vendor, 0) + 1
    shares = {}
    for region, per_vendor in counts.items():
        total = sum(per_vendor.values())
        shares[region] = {vendor: count / total
                          for vendor, count in per_vendor.items()}
    return shares


def per_as_coverage(responsive_ips: Iterable[str],
                    router_tags: Iterable[str],
                    mapping: AsMapping, min_ips: int) -> dict[int, float]:
    """Responsive fraction of tagged router addresses, per AS.

    Only ASes holding at least min_ips tagged addresses are reported."""
    if min_ips < 1:
        raise InvalidArgumentError("min_ips must be >= 1")
    responsive = set(responsive_ips)
    tagged_by_as: dict[int, set[str]] = {}
    for ip in router_tags:
        tagged_by_as.setdefault(mapping.lookup(ip), set()).add(ip)
    return {asn: len(tagged & responsive) / len(tagged)
            for asn, tagged in tagged_by_as.items()
            if len(tagged) >= min_ips}


def coverage_by_threshold(responsive_ips: Iterable[str],
                          router_tags: Iterable[str], mapping: AsMapping,
                          thresholds: Sequence[int] = COVERAGE_THRESHOLDS
                          ) -> dict[int, dict[int, float]]:
    responsive = set(responsive_ips)
    return {min_ips: per_as_coverage(responsive, router_tags, mapping,
                                     min_ips)
            for min_ips in thresholds}


def coverage_comparison(named_responsive: Mapping[str, Iterable[str]],
                        router_tags: Iterable[str], mapping: AsMapping,
                        min_ips: int) -> dict[int, dict[str, float]]:
    """Per-AS coverage for several responsive sets plus their union.

    The union row is named "combined"."""
    if "combined" in named_responsive:
        raise InvalidArgumentError("'combined' is a reserved series name")
    tags = list(router_tags)
    union: set[str] = set()
    tables = {}
    for name, responsive in named_responsive.items():
        responsive = set(responsive)
        union |= responsive
        tables[name] = per_as_coverage(responsive, tags, mapping, min_ips)
    tables["combined"] = per_as_coverage(union, tags, mapping, min_ips)
    out: dict[int, dict[str, float]] = {}
    for name, table in tables.items():
        for asn, ratio in table.items():
            out.setdefault(asn, {})[name] = ratio
    return out


# ---------------------------------------------------------------------------
# Identifier tuple uniqueness
# ---------------------------------------------------------------------------

def tuple_uniqueness(records: Sequence[ValidRecord]
                     ) -> tuple[float, dict[int, int]]:
    """Fraction of IPs whose (last reboot, boots) tuple maps to one
    engine ID, plus the engine-IDs-per-tuple histogram."""
    if not records:
        raise InvalidArgumentError("tuple uniqueness of an empty input")
    ids_per_tuple: dict[tuple[int, int], set[str]] = {}
    for record in records:
        key = (record.last_reboot_unix_s_scan1, record.boots)
        ids_per_tuple.setdefault(key, set()).add(record.engine_id_hex)
    unique_ips = sum(
        1 for record in records
        if len(ids_per_tuple[(record.last_reboot_unix_s_scan1,
                              record.boots)]) == 1)
    histogram: dict[int, int] = {}
    for ids in ids_per_tuple.values():
        histogram[len(ids)] = histogram.get(len(ids), 0) + 1
    return unique_ips / len(records), histogram


# ---------------------------------------------------------------------------
# Figure data export
# ---------------------------------------------------------------------------

ECDF_COLUMNS = ("series", "x", "y")
BAR_COLUMNS = ("category", "value")
HEATMAP_COLUMNS = ("series", "x", "y")

FIGDATA_KINDS = {
    "format_census": "bar",
    "hamming": "ecdf",
    "lrt_drift": "ecdf",
    "set_sizes": "bar",
    "vendor_popularity": "bar",
    "vendor_popularity_by_family": "heatmap",
    "uptime": "ecdf",
    "vendors_per_as": "bar",
    "regional_popularity": "heatmap",
    "vendor_dominance": "ecdf",
    "coverage": "ecdf",
    "tuple_histogram": "bar",
}


def _ecdf_rows(name: str, ecdf: Ecdf) -> list[tuple]:
    return [(name, x, y) for x, y in zip(ecdf.xs, ecdf.ys)]


def build_figdata(records: Sequence[ValidRecord],
                  sets: Sequence[AliasSet], asof: int,
                  mapping: AsMapping | None = None,
                  router_tags: Iterable[str] | None = None,
                  responsive_ips: Iterable[str] | None = None,
                  thresholds: Sequence[int] = COVERAGE_THRESHOLDS
                  ) -> dict[str, tuple[tuple[str, ...], list[tuple]]]:
    """Tidy (columns, rows) tables per figure, keyed by figure name.

    AS-based tables appear only when a mapping is given; the coverage
    table additionally needs router tags and a responsive-IP set."""
    tables: dict[str, tuple[tuple[str, ...], list[tuple]]] = {}

    distinct_ids = sorted({bytes.fromhex(r.engine_id_hex) for r in records})
    infos = [parse_engine_id(engine_id) for engine_id in distinct_ids]
    census = format_census(infos)
    tables["format_census"] = (BAR_COLUMNS, [
        (fmt.value, count) for fmt, count in census.items()])
    if distinct_ids:
        tables["hamming"] = (ECDF_COLUMNS, _ecdf_rows(
            "relative_hamming_weight",
            Ecdf.from_samples(hamming_fraction(e) for e in distinct_ids)))
    if records:
        drift = Ecdf.from_samples(
            r.last_reboot_unix_s_scan2 - r.last_reboot_unix_s_scan1
            for r in records)
        tables["lrt_drift"] = (ECDF_COLUMNS, _ecdf_rows("drift_s", drift))

    stats = set_statistics(sets)
    tables["set_sizes"] = (BAR_COLUMNS, [
        (str(size), count)
        for size, count in sorted(stats.member_histogram.items())])

    popularity = vendor_popularity(sets)
    tables["vendor_popularity"] = (BAR_COLUMNS, sorted(
        ((vendor, sum(per_family.values()))
         for vendor, per_family in popularity.items()),
        key=lambda row: (-row[1], row[0])))
    tables["vendor_popularity_by_family"] = (HEATMAP_COLUMNS, sorted(
        (family, vendor, count)
        for vendor, per_family in popularity.items()
        for family, count in per_family.items()))

    if sets:
        tables["uptime"] = (ECDF_COLUMNS, _ecdf_rows(
            "uptime_s", uptime_distribution(sets, records, asof)))
    if records:
        _fraction, histogram = tuple_uniqueness(records)
        tables["tuple_histogram"] = (BAR_COLUMNS, [
            (str(ids), count) for ids, count in sorted(histogram.items())])

    if mapping is not None:
        by_as = sets_by_as(sets, mapping)
        per_as_vendors = vendors_per_as(by_as)
        counts: dict[int, int] = {}
        for vendor_count in per_as_vendors.values():
            counts[vendor_count] = counts.get(vendor_count, 0) + 1
        tables["vendors_per_as"] = (BAR_COLUMNS, [
            (str(k), v) for k, v in sorted(counts.items())])
        tables["regional_popularity"] = (HEATMAP_COLUMNS, sorted(
            (region, vendor, share)
            for region, per_vendor in
            regional_popularity(sets, mapping).items()
            for vendor, share in per_vendor.items()))
        dominance = vendor_dominance(by_as)
        if dominance:
            tables["vendor_dominance"] = (ECDF_COLUMNS, _ecdf_rows(
                "dominance", Ecdf.from_samples(dominance.values())))
        if router_tags is not None and responsive_ips is not None:
            rows: list[tuple] = []
            for min_ips, table in coverage_by_threshold(
                    responsive_ips, router_tags, mapping,
                    thresholds).items():
                if table:
                    rows.extend(_ecdf_rows(
                        f"min_ips_{min_ips}",
                        Ecdf.from_samples(table.values())))
            if rows:
                tables["coverage"] = (ECDF_COLUMNS, rows)
    return tables
