"""On-disk record formats shared by the scan, validation, and alias stages.

All files are UTF-8 CSV with a header row. Raw responses are stored as
hex payloads so a scan file is replayable through the validation pipeline
without any live network.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidArgumentError

SCAN_COLUMNS = ("ip", "scan_label", "recv_time_unix_ms", "response_index",
                "payload_hex")
VALID_COLUMNS = ("ip", "engine_id_hex", "boots", "last_reboot_unix_s_scan1",
                 "last_reboot_unix_s_scan2", "format", "enterprise_number")
ALIAS_COLUMNS = ("set_id", "family", "vendor", "member_count", "ips")
GROUND_TRUTH_COLUMNS = ("device_id", "engine_id_hex", "boots", "reboot_epoch",
                        "ips")


@dataclass(frozen=True)
class ScanRecord:
    ip: str
    scan_label: str
    recv_time_unix_ms: int
    response_index: int
    payload_hex: str

    @property
    def payload(self) -> bytes:
        return bytes.fromhex(self.payload_hex)

    @property
    def recv_time_s(self) -> float:
        return self.recv_time_unix_ms / 1000.0


@dataclass(frozen=True)
class ValidRecord:
    ip: str
    engine_id_hex: str
    boots: int
    last_reboot_unix_s_scan1: int
    last_reboot_unix_s_scan2: int
    format: str
    enterprise_number: int | None


@dataclass(frozen=True)
class AliasSetRow:
    set_id: int
    family: str
    vendor: str
    member_count: int
    ips: tuple[str, ...]


def _open_reader(path):
    handle = open(path, "r", encoding="utf-8", newline="")
    return handle, csv.reader(handle)


def _check_header(header: Sequence[str], expected: Sequence[str], path) -> None:
    if tuple(header) != tuple(expected):
        raise InvalidArgumentError(
            f"{path}: expected columns {','.join(expected)}, "
            f"found {','.join(header)}")


def write_scan_records(path, records: Iterable[ScanRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SCAN_COLUMNS)
        for r in records:
            writer.writerow([r.ip, r.scan_label, r.recv_time_unix_ms,
                             r.response_index, r.payload_hex])


def read_scan_records(path) -> list[ScanRecord]:
    handle, reader = _open_reader(path)
    with handle:
        _check_header(next(reader, []), SCAN_COLUMNS, path)
        return [ScanRecord(ip=row[0], scan_label=row[1],
                           recv_time_unix_ms=int(row[2]),
                           response_index=int(row[3]), payload_hex=row[4])
                for row in reader]


def write_valid_records(path, records: Iterable[ValidRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(VALID_COLUMNS)
        for r in records:
            enterprise = "" if r.enterprise_number is None else r.enterprise_number
            writer.writerow([r.ip, r.engine_id_hex, r.boots,
                             r.last_reboot_unix_s_scan1,
                             r.last_reboot_unix_s_scan2, r.format, enterprise])


def read_valid_records(path) -> list[ValidRecord]:
    handle, reader = _open_reader(path)
    with handle:
        _check_header(next(reader, []), VALID_COLUMNS, path)
        return [ValidRecord(ip=row[0], engine_id_hex=row[1], boots=int(row[2]),
                            last_reboot_unix_s_scan1=int(row[3]),
                            last_reboot_unix_s_scan2=int(row[4]),
                            format=row[5],
                            enterprise_number=int(row[6]) if row[6] else None)
                for row in reader]


def write_alias_sets(path, rows: Iterable[AliasSetRow]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ALIAS_COLUMNS)
        for r in rows:
            writer.writerow([r.set_id, r.family, r.vendor, r.member_count,
                             ";".join(r.ips)])


def read_alias_sets(path) -> list[AliasSetRow]:
    handle, reader = _open_reader(path)
    with handle:
        _check_header(next(reader, []), ALIAS_COLUMNS, path)
        return [AliasSetRow(set_id=int(row[0]), family=row[1], vendor=row[2],
                            member_count=int(row[3]),
                            ips=tuple(row[4].split(";")) if row[4] else ())
                for row in reader]


def write_filter_report(path, rows: Iterable[tuple[str, int]]) -> None:
    """Two-column name,count file; row order is meaningful."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("name", "count"))
        for name, count in rows:
            writer.writerow([name, count])


def read_filter_report(path) -> list[tuple[str, int]]:
    handle, reader = _open_reader(path)
    with handle:
        _check_header(next(reader, []), ("name", "count"), path)
        return [(row[0], int(row[1])) for row in reader]


def write_ground_truth(path, rows) -> None:
    """rows: iterables of (device_id, engine_id_hex, boots, reboot_epoch, ips)."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(GROUND_TRUTH_COLUMNS)
        for device_id, engine_id_hex, boots, reboot_epoch, ips in rows:
            writer.writerow([device_id, engine_id_hex, boots, reboot_epoch,
                             ";".join(ips)])


def read_ground_truth(path) -> list[tuple[int, str, int, int, tuple[str, ...]]]:
    handle, reader = _open_reader(path)
    with handle:
        _check_header(next(reader, []), GROUND_TRUTH_COLUMNS, path)
        return [(int(row[0]), row[1], int(row[2]), int(row[3]),
                 tuple(row[4].split(";")) if row[4] else ())
                for row in reader]


def write_tidy_csv(path: str | Path, columns: Sequence[str],
                   rows: Iterable[Sequence]) -> None:
    """Write a small analytics table with fixed float formatting so equal
    inputs always produce byte-identical files."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([f"{v:.6f}" if isinstance(v, float) else v
                             for v in row])
