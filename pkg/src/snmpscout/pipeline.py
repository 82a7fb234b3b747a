"""Two-pass merge and the ten-step validation filter chain.

merge_scans pairs the first decodable response per IP from each pass;
apply_filters then removes broken, inconsistent, and implausible
observations in a fixed order, attributing each removal to the first
filter that triggers, and reports per-filter removal counts.
"""

from __future__ import annotations

import ipaddress
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import codec
from .engineid import (
    EngineIdFormat,
    EngineIdInfo,
    bundled_oui_table,
    oui_lookup,
    parse_engine_id,
)
from .errors import InvalidArgumentError, MalformedPacketError
from .records import ScanRecord, ValidRecord

# Removal order is fixed; each record is charged to the first filter
# that triggers on it.
FILTER_NAMES = (
    "missing_engine_id",
    "inconsistent_engine_id",
    "short_engine_id",
    "promiscuous_engine_id",
    "unroutable_ipv4_engine_id",
    "unregistered_mac_oui",
    "zero_time_or_boots",
    "engine_time_in_future",
    "inconsistent_engine_boots",
    "inconsistent_last_reboot",
)


@dataclass(frozen=True)
class Observation:
    """One decoded discovery answer for one IP in one pass."""

    ip: str
    engine_id: bytes
    engine_boots: int
    engine_time: int
    recv_time: float
    payload_size: int

    @property
    def last_reboot(self) -> int:
        # receive timestamp truncated to whole seconds minus engine time
        return math.floor(self.recv_time) - self.engine_time


@dataclass(frozen=True)
class MergedRecord:
    ip: str
    obs1: Observation
    obs2: Observation
    engine_info: EngineIdInfo | None

    @property
    def engine_id(self) -> bytes:
        return self.obs1.engine_id


@dataclass
class MergeStats:
    scan1_responsive: int = 0
    scan2_responsive: int = 0
    undecodable_scan1: int = 0
    undecodable_scan2: int = 0
    conflicting_scan1: int = 0
    conflicting_scan2: int = 0
    overlap: int = 0


@dataclass(frozen=True)
class FilterConfig:
    drift_threshold_s: int = 10
    min_engine_id_bytes: int = 4
    promiscuity_enterprises: int = 2

    def validated(self) -> "FilterConfig":
        if self.drift_threshold_s < 0:
            raise InvalidArgumentError("drift threshold must be non-negative")
        if self.min_engine_id_bytes < 1:
            raise InvalidArgumentError("minimum engine ID length must be >= 1")
        if self.promiscuity_enterprises < 2:
            raise InvalidArgumentError("promiscuity needs at least 2 vendors")
        return self


@dataclass
class FilterReport:
    rows: tuple[tuple[str, int], ...]
    input_count: int
    surviving_count: int
    # IPs removed, mapped to the filter that claimed them
    attribution: dict[str, str] = field(default_factory=dict)

    def count(self, name: str) -> int:
        for row_name, count in self.rows:
            if row_name == name:
                return count
        raise InvalidArgumentError(f"no filter named {name!r}")


def _ip_sort_key(ip: str):
    addr = ipaddress.ip_address(ip)
    return (addr.version, int(addr))


def decode_pass(records: Iterable[ScanRecord]
                ) -> tuple[dict[str, Observation], int, int]:
    """First decodable response per IP; returns (observations,
    undecodable-IP count, conflicting-IP count).

    An IP is undecodable when every one of its responses fails to parse;
    it is conflicting when a later decodable response disagrees with the
    kept one on engine ID or boots (the first response still wins).
    """
    kept: dict[str, Observation] = {}
    saw: dict[str, bool] = {}
    conflicting: set[str] = set()
    for record in records:
        saw.setdefault(record.ip, False)
        try:
            msg = codec.decode_message(record.payload)
        except MalformedPacketError:
            continue
        report = codec.extract_discovery_report(msg, len(record.payload))
        saw[record.ip] = True
        obs = Observation(ip=record.ip, engine_id=report.engine_id,
                          engine_boots=report.engine_boots,
                          engine_time=report.engine_time,
                          recv_time=record.recv_time_s,
                          payload_size=report.payload_size)
        held = kept.get(record.ip)
        if held is None:
            kept[record.ip] = obs
        elif (held.engine_id, held.engine_boots) != (obs.engine_id,
                                                     obs.engine_boots):
            conflicting.add(record.ip)
    undecodable = sum(1 for ip, decodable in saw.items() if not decodable)
    return kept, undecodable, len(conflicting)


def merge_scans(scan1: Sequence[ScanRecord], scan2: Sequence[ScanRecord]
                ) -> tuple[list[MergedRecord], MergeStats]:
    """Pair per-IP observations present in both passes, ordered by IP."""
    obs1, undec1, conf1 = decode_pass(scan1)
    obs2, undec2, conf2 = decode_pass(scan2)
    stats = MergeStats(
        scan1_responsive=len(obs1) + undec1,
        scan2_responsive=len(obs2) + undec2,
        undecodable_scan1=undec1, undecodable_scan2=undec2,
        conflicting_scan1=conf1, conflicting_scan2=conf2)
    merged: list[MergedRecord] = []
    for ip in sorted(set(obs1) & set(obs2), key=_ip_sort_key):
        first, second = obs1[ip], obs2[ip]
        if first.recv_time > second.recv_time:
            raise InvalidArgumentError(
                "scan passes appear swapped: scan1 received after scan2")
        try:
            info = parse_engine_id(first.engine_id)
        except Exception:
            info = None
        merged.append(MergedRecord(ip=ip, obs1=first, obs2=second,
                                   engine_info=info))
    stats.overlap = len(merged)
    return merged, stats


def routability_check(ip) -> bool:
    """True for publicly routable IPv4 unicast addresses only."""
    addr = ipaddress.ip_address(ip)
    return addr.version == 4 and addr.is_global and not addr.is_multicast


def _promiscuity_index(records: Sequence[MergedRecord],
                       cfg: FilterConfig) -> set[bytes]:
    """Engine-ID payloads claimed by too many distinct enterprises.

    Indexed over records that pass the presence, consistency, and length
    checks, since only those carry one attributable (payload, enterprise)
    observation."""
    enterprises: dict[bytes, set[int]] = {}
    for record in records:
        if _structural_failure(record, cfg) is not None:
            continue
        info = record.engine_info
        if info is None or info.enterprise_number is None:
            continue
        enterprises.setdefault(info.data, set()).add(info.enterprise_number)
    return {data for data, owners in enterprises.items()
            if len(owners) >= cfg.promiscuity_enterprises}


def _structural_failure(record: MergedRecord,
                        cfg: FilterConfig) -> str | None:
    # filters 1-3 in order
    if not record.obs1.engine_id or not record.obs2.engine_id:
        return "missing_engine_id"
    if record.obs1.engine_id != record.obs2.engine_id:
        return "inconsistent_engine_id"
    if len(record.obs1.engine_id) < cfg.min_engine_id_bytes:
        return "short_engine_id"
    return None


def _classify(record: MergedRecord, cfg: FilterConfig,
              promiscuous: set[bytes],
              oui_table: Mapping[str, str]) -> str | None:
    """Name of the first filter removing this record, or None."""
    structural = _structural_failure(record, cfg)
    if structural is not None:
        return structural
    info = record.engine_info
    if info is not None and info.enterprise_number is not None \
            and info.data in promiscuous:
        return "promiscuous_engine_id"
    if info is not None and info.format is EngineIdFormat.IPV4:
        if info.ipv4 is None or not routability_check(info.ipv4):
            return "unroutable_ipv4_engine_id"
    if info is not None and info.format is EngineIdFormat.MAC:
        if info.mac is None or oui_lookup(info.mac, oui_table) is None:
            return "unregistered_mac_oui"
    for obs in (record.obs1, record.obs2):
        if obs.engine_time == 0 or obs.engine_boots == 0:
            return "zero_time_or_boots"
    for obs in (record.obs1, record.obs2):
        if obs.last_reboot > math.floor(obs.recv_time):
            return "engine_time_in_future"
    if record.obs1.engine_boots != record.obs2.engine_boots:
        return "inconsistent_engine_boots"
    if abs(record.obs1.last_reboot - record.obs2.last_reboot) \
            > cfg.drift_threshold_s:
        return "inconsistent_last_reboot"
    return None


def apply_filters(records: Sequence[MergedRecord],
                  cfg: FilterConfig | None = None,
                  oui_table: Mapping[str, str] | None = None
                  ) -> tuple[list[ValidRecord], FilterReport]:
    """Run the ten filters in order over merged records.

    Surviving records come back in input order as ValidRecord rows;
    removal counts always list all ten filters, zeros included.
    """
    cfg = (cfg or FilterConfig()).validated()
    if oui_table is None:
        oui_table = bundled_oui_table()
    promiscuous = _promiscuity_index(records, cfg)
    counts = {name: 0 for name in FILTER_NAMES}
    attribution: dict[str, str] = {}
    valid: list[ValidRecord] = []
    for record in records:
        verdict = _classify(record, cfg, promiscuous, oui_table)
        if verdict is not None:
            counts[verdict] += 1
            attribution[record.ip] = verdict
            continue
        info = record.engine_info
        valid.append(ValidRecord(
            ip=record.ip,
            engine_id_hex=record.engine_id.hex(),
            boots=record.obs1.engine_boots,
            last_reboot_unix_s_scan1=record.obs1.last_reboot,
            last_reboot_unix_s_scan2=record.obs2.last_reboot,
            format=info.format.value if info is not None else "",
            enterprise_number=(info.enterprise_number
                               if info is not None else None),
        ))
    report = FilterReport(
        rows=tuple((name, counts[name]) for name in FILTER_NAMES),
        input_count=len(records),
        surviving_count=len(valid),
        attribution=attribution,
    )
    return valid, report
