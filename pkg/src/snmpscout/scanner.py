"""Rate-limited discovery scanning with replayable record output.

A scan probes each deduplicated target exactly once, paced by a token
bucket, records every response (duplicates get an incrementing
response_index), and demultiplexes responses by source address only.
Transports are pluggable: an in-process simulator endpoint for tests or
a real UDP socket. With a virtual clock and the in-process transport a
scan is fully deterministic, including receive timestamps.
"""

from __future__ import annotations

import ipaddress
import random
import select
import socket
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Protocol

from .codec import encode_discovery_request
from .errors import InvalidArgumentError, ScanError
from .records import ScanRecord, write_scan_records

DEFAULT_PORT = 161
DEFAULT_TIMEOUT = 5.0
# Token replenishment granularity; also the smallest pacing sleep.
PACING_GRANULARITY = 0.01


class Clock(Protocol):
    def now(self) -> float: ...
    def sleep(self, seconds: float) -> None: ...


class RealClock:
    def now(self) -> float:
        return time.time()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class VirtualClock:
    """Deterministic clock: sleeping advances time instantly."""

    def __init__(self, start: float):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            self._now += seconds


class TokenBucket:
    """Sustained-rate limiter; burst capped at 5% of one second's budget."""

    def __init__(self, rate: float, clock: Clock, capacity: float | None = None):
        if rate <= 0:
            raise InvalidArgumentError("rate must be positive")
        self.rate = rate
        self.clock = clock
        self.capacity = capacity if capacity is not None else max(1.0, rate / 20.0)
        self._tokens = min(1.0, self.capacity)
        self._last = clock.now()

    def acquire(self) -> None:
        while True:
            now = self.clock.now()
            self._tokens = min(self.capacity,
                               self._tokens + (now - self._last) * self.rate)
            self._last = now
            if self._tokens >= 1.0:
                self._tokens -= 1.0
                return
            shortfall = (1.0 - self._tokens) / self.rate
            self.clock.sleep(max(shortfall, PACING_GRANULARITY))


# ---------------------------------------------------------------------------
# Plans and summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScanPlan:
    targets: tuple[str, ...]
    rate: float = 256.0
    port: int = DEFAULT_PORT
    timeout: float = DEFAULT_TIMEOUT
    seed: int = 0
    label: str = "scan1"
    blocklist: tuple[str, ...] = ()


@dataclass
class ScanSummary:
    label: str
    targets_total: int = 0
    blocked: int = 0
    invalid_targets: int = 0
    sent: int = 0
    responded: int = 0
    duplicate_responders: int = 0
    bytes_out: int = 0
    bytes_in: int = 0
    late_dropped: int = 0
    unmatched: int = 0
    send_failures: int = 0


class Transport(Protocol):
    def send(self, target: str, payload: bytes, now: float) -> None: ...
    def poll(self, max_wait: float) -> list[tuple[str, bytes, float]]: ...
    @property
    def exhausted(self) -> bool: ...
    def close(self) -> None: ...


class InProcessTransport:
    """Synchronous function-call transport against a simulator agent.

    Responses are timestamped with the probe's send time, which keeps a
    virtual-clock scan bit-for-bit reproducible."""

    def __init__(self, agent):
        self._agent = agent
        self._queue: deque[tuple[str, bytes, float]] = deque()

    def send(self, target: str, payload: bytes, now: float) -> None:
        for reply in self._agent.query(target, payload, now):
            self._queue.append((target, reply, now))

    def poll(self, max_wait: float) -> list[tuple[str, bytes, float]]:
        items = list(self._queue)
        self._queue.clear()
        return items

    @property
    def exhausted(self) -> bool:
        return not self._queue

    def close(self) -> None:
        self._queue.clear()


class UdpTransport:
    """Real UDP sockets, one per address family, source port fixed per pass."""

    def __init__(self, port: int = DEFAULT_PORT, bind_host: str = ""):
        self.port = port
        self._bind_host = bind_host
        self._socks: dict[int, socket.socket] = {}

    def _sock_for(self, family: int) -> socket.socket:
        if family not in self._socks:
            sock = socket.socket(family, socket.SOCK_DGRAM)
            sock.setblocking(False)
            sock.bind((self._bind_host, 0))
            self._socks[family] = sock
        return self._socks[family]

    def send(self, target: str, payload: bytes, now: float) -> None:
        addr = ipaddress.ip_address(target)
        family = socket.AF_INET if addr.version == 4 else socket.AF_INET6
        self._sock_for(family).sendto(payload, (target, self.port))

    def poll(self, max_wait: float) -> list[tuple[str, bytes, float]]:
        socks = list(self._socks.values())
        if not socks:
            return []
        readable, _, _ = select.select(socks, [], [], max(max_wait, 0))
        out: list[tuple[str, bytes, float]] = []
        for sock in readable:
            while True:
                try:
                    payload, addr = sock.recvfrom(65535)
                except BlockingIOError:
                    break
                except OSError:
                    break
                src = str(ipaddress.ip_address(addr[0].split("%")[0]))
                out.append((src, payload, time.time()))
        return out

    @property
    def exhausted(self) -> bool:
        return False

    def close(self) -> None:
        for sock in self._socks.values():
            sock.close()
        self._socks.clear()


# ---------------------------------------------------------------------------
# Scanning
# ---------------------------------------------------------------------------

def load_blocklist(path) -> tuple[str, ...]:
    """One CIDR per line, '#' comments."""
    entries = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.split("#", 1)[0].strip()
            if line:
                entries.append(str(ipaddress.ip_network(line, strict=False)))
    return tuple(entries)


def _prepare_targets(plan: ScanPlan) -> tuple[list[str], int, int]:
    """Deduplicate, drop unparseable targets, apply the blocklist."""
    blocks = [ipaddress.ip_network(cidr, strict=False) for cidr in plan.blocklist]
    seen: set[str] = set()
    kept: list[str] = []
    blocked = 0
    invalid = 0
    for raw in plan.targets:
        try:
            addr = ipaddress.ip_address(raw.strip())
        except ValueError:
            invalid += 1
            continue
        canonical = str(addr)
        if canonical in seen:
            continue
        seen.add(canonical)
        if any(addr in net for net in blocks if addr.version == net.version):
            blocked += 1
            continue
        kept.append(canonical)
    return kept, blocked, invalid


def run_scan(plan: ScanPlan, transport: Transport, clock: Clock | None = None,
             sink: Callable[[ScanRecord], None] | None = None
             ) -> tuple[ScanSummary, list[ScanRecord]]:
    """Probe every target once, then drain responses until the timeout.

    Demultiplexes by source address only: responses from addresses that
    were not probed are counted and dropped, responses after the deadline
    are counted and dropped. Returns the summary and all kept records in
    arrival order.
    """
    clock = clock or RealClock()
    targets, blocked, invalid = _prepare_targets(plan)
    summary = ScanSummary(label=plan.label, targets_total=len(plan.targets),
                          blocked=blocked, invalid_targets=invalid)
    rng = random.Random(f"scan:{plan.seed}:{plan.label}")
    order = list(targets)
    rng.shuffle(order)
    target_set = set(targets)
    bucket = TokenBucket(plan.rate, clock)
    records: list[ScanRecord] = []
    response_counts: dict[str, int] = {}

    def ingest(src: str, payload: bytes, recv_time: float,
               deadline: float | None) -> None:
        if src not in target_set:
            summary.unmatched += 1
            return
        if deadline is not None and recv_time > deadline:
            summary.late_dropped += 1
            return
        index = response_counts.get(src, 0) + 1
        response_counts[src] = index
        summary.bytes_in += len(payload)
        record = ScanRecord(ip=src, scan_label=plan.label,
                            recv_time_unix_ms=int(round(recv_time * 1000)),
                            response_index=index, payload_hex=payload.hex())
        records.append(record)
        if sink is not None:
            sink(record)

    for target in order:
        bucket.acquire()
        payload = encode_discovery_request(rng.randrange(0, 2 ** 15))
        now = clock.now()
        try:
            transport.send(target, payload, now)
        except OSError:
            summary.send_failures += 1
            continue
        summary.sent += 1
        summary.bytes_out += len(payload)
        for src, blob, recv_time in transport.poll(0):
            ingest(src, blob, recv_time, None)

    deadline = clock.now() + plan.timeout
    while clock.now() < deadline:
        if transport.exhausted:
            break
        chunk = transport.poll(min(0.05, max(deadline - clock.now(), 0)))
        if not chunk and transport.exhausted:
            break
        for src, blob, recv_time in chunk:
            ingest(src, blob, recv_time, deadline)

    summary.responded = len(response_counts)
    summary.duplicate_responders = sum(
        1 for count in response_counts.values() if count > 1)
    return summary, records


def probe_one(target: str, transport: Transport, clock: Clock | None = None,
              timeout: float = DEFAULT_TIMEOUT, seed: int = 0
              ) -> ScanRecord | None:
    """Ad-hoc single-target probe; first response or None."""
    plan = ScanPlan(targets=(target,), rate=1000.0, timeout=timeout, seed=seed)
    _summary, found = run_scan(plan, transport, clock)
    return found[0] if found else None


def two_scan_campaign(plan: ScanPlan, gap: float,
                      transport_factory: Callable[[str], Transport],
                      clock: Clock | None = None,
                      out_paths: tuple[str, str] | None = None,
                      ) -> list[tuple[ScanSummary, list[ScanRecord]]]:
    """Run the same plan twice, labels scan1/scan2, separated by gap
    seconds; optionally persist both passes as scan record files."""
    if gap < 0:
        raise InvalidArgumentError("gap must be non-negative")
    clock = clock or RealClock()
    results = []
    for index, label in enumerate(("scan1", "scan2")):
        if index:
            clock.sleep(gap)
        pass_plan = replace(plan, label=label)
        transport = transport_factory(label)
        try:
            summary, records = run_scan(pass_plan, transport, clock)
        finally:
            transport.close()
        if out_paths is not None:
            write_scan_records(out_paths[index], records)
        results.append((summary, records))
    return results
