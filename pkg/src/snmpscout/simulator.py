"""Deterministic agent population simulator with ground truth.

Generates device populations (engine ID, boots, reboot epoch, interface
addresses, vendor, clock skew) from a seeded plain-text spec and serves
discovery answers for them, either in-process (function-call transport)
or over real UDP sockets. Reply bytes are identical on both paths.

Device clocks are integer-second by default so derived last-reboot times
are exact; fractional_reboot mode draws sub-second boot instants, which
reproduces the real-world +/- 1 s wobble of last-reboot estimates.
"""

from __future__ import annotations

import ipaddress
import math
import random
import socket
import struct
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from . import codec
from .errors import InvalidArgumentError, MalformedPacketError

# Anomaly kinds a device can carry; assignment slices are disjoint.
ANOMALY_KINDS = ("constant_engine_id", "ephemeral_ip", "amplifier",
                 "malformed", "zero_time", "future_time", "tuple_collision")

FAMILY_KINDS = ("v4", "v6", "dual")
FORMAT_KINDS = ("mac", "ipv4", "ipv6", "text", "octets", "netsnmp",
                "nonconforming")

# The designated buggy constant ID: a well-formed MAC-format value with a
# registered OUI, shared verbatim by every constant_engine_id device.
BUGGY_ENGINE_ID = bytes.fromhex("80000009" "03" "00000cabcdef")

_VENDOR_REGISTRY = {
    # name -> (enterprise number, OUI byte prefix)
    "Cisco": (9, bytes.fromhex("00000c")),
    "Huawei": (2011, bytes.fromhex("001882")),
    "Juniper": (2636, bytes.fromhex("000585")),
    "Brocade": (1991, bytes.fromhex("748ef8")),
    "MikroTik": (14988, bytes.fromhex("4c5e0c")),
    "Arista": (30065, bytes.fromhex("001c73")),
    "Fortinet": (12356, bytes.fromhex("00090f")),
    "Nokia": (6527, bytes.fromhex("00233e")),
}

_DEFAULT_EPOCH = 1_700_000_000

# Not exposed by every interpreter build; 8 on Linux.
IP_PKTINFO = getattr(socket, "IP_PKTINFO", 8)


@dataclass
class PopulationSpec:
    device_count: int
    seed: int = 1
    epoch: int = _DEFAULT_EPOCH
    interfaces: str = "geometric:3"
    family_mix: dict[str, float] = field(
        default_factory=lambda: {"v4": 0.6, "dual": 0.25, "v6": 0.15})
    format_mix: dict[str, float] = field(
        default_factory=lambda: {"mac": 0.5, "netsnmp": 0.2, "text": 0.1,
                                 "octets": 0.1, "ipv4": 0.05, "ipv6": 0.02,
                                 "nonconforming": 0.03})
    vendor_mix: dict[str, float] = field(
        default_factory=lambda: {"Cisco": 0.4, "Huawei": 0.3, "Juniper": 0.3})
    uptime: str = "uniform:86400,31536000"
    boots: str = "uniform:1,300"
    clock_skew_stddev: float = 0.0
    jitter_stddev: float = 0.0
    fractional_reboot: bool = False
    response_size: int = codec.DEFAULT_RESPONSE_SIZE
    amplifier_replies: int = 50
    anomalies: dict[str, float] = field(default_factory=dict)
    v4_pool: str = "127.64.0.0/14"
    v6_pool: str = "fd53:c0de::/96"


@dataclass
class Device:
    device_id: int
    vendor: str
    engine_id: bytes
    boots: int
    reboot_epoch: float
    skew: int
    v4_addrs: tuple[str, ...]
    v6_addrs: tuple[str, ...]
    anomalies: frozenset[str]

    @property
    def addrs(self) -> tuple[str, ...]:
        return self.v4_addrs + self.v6_addrs


class DevicePopulation:
    def __init__(self, spec: PopulationSpec, devices: list[Device]):
        self.spec = spec
        self.devices = devices
        self._ownership: dict[str, dict[str, Device]] = {}

    @property
    def all_ips(self) -> list[str]:
        return [ip for device in self.devices for ip in device.addrs]

    def with_anomaly(self, kind: str) -> list[Device]:
        return [d for d in self.devices if kind in d.anomalies]

    def normal_devices(self) -> list[Device]:
        return [d for d in self.devices if not d.anomalies]

    def ownership(self, pass_label: str) -> dict[str, Device]:
        if pass_label not in self._ownership:
            self._ownership[pass_label] = reassign_ephemeral(self, pass_label)
        return self._ownership[pass_label]

    def ground_truth_rows(self):
        for d in self.devices:
            yield (d.device_id, d.engine_id.hex(), d.boots,
                   int(d.reboot_epoch), d.addrs)


# ---------------------------------------------------------------------------
# Spec parsing
# ---------------------------------------------------------------------------

def _parse_mix(value: str, allowed: Iterable[str] | None, what: str) -> dict[str, float]:
    mix: dict[str, float] = {}
    for part in value.split(","):
        name, sep, share = part.partition(":")
        name = name.strip()
        if not sep:
            raise InvalidArgumentError(f"{what} entry {part!r} needs name:share")
        if allowed is not None and name not in allowed:
            raise InvalidArgumentError(f"unknown {what} entry {name!r}")
        mix[name] = float(share)
    if any(share < 0 for share in mix.values()):
        raise InvalidArgumentError(f"{what} shares must be non-negative")
    if abs(sum(mix.values()) - 1.0) > 1e-6:
        raise InvalidArgumentError(f"{what} shares must sum to 1")
    return mix


def parse_population_spec(text: str) -> PopulationSpec:
    """Parse the key=value population config format."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidArgumentError(f"config line {lineno} is not key=value")
        values[key.strip()] = value.strip()

    if "device_count" not in values:
        raise InvalidArgumentError("config must set device_count")

    spec = PopulationSpec(device_count=int(values.pop("device_count")))
    anomalies: dict[str, float] = {}
    for key, value in values.items():
        if key.startswith("anomaly_"):
            kind = key[len("anomaly_"):]
            if kind not in ANOMALY_KINDS:
                raise InvalidArgumentError(f"unknown anomaly {kind!r}")
            anomalies[kind] = float(value)
        elif key in ("seed", "epoch", "response_size", "amplifier_replies"):
            setattr(spec, key, int(value))
        elif key in ("clock_skew_stddev", "jitter_stddev"):
            setattr(spec, key, float(value))
        elif key == "fractional_reboot":
            if value.lower() not in ("true", "false"):
                raise InvalidArgumentError("fractional_reboot must be true/false")
            spec.fractional_reboot = value.lower() == "true"
        elif key == "family_mix":
            spec.family_mix = _parse_mix(value, FAMILY_KINDS, "family_mix")
        elif key == "format_mix":
            spec.format_mix = _parse_mix(value, FORMAT_KINDS, "format_mix")
        elif key == "vendor_mix":
            spec.vendor_mix = _parse_mix(value, _VENDOR_REGISTRY, "vendor_mix")
        elif key in ("interfaces", "uptime", "boots", "v4_pool", "v6_pool"):
            setattr(spec, key, value)
        else:
            raise InvalidArgumentError(f"unknown config key {key!r}")
    spec.anomalies = anomalies
    validate_spec(spec)
    return spec


def load_population_spec(path) -> PopulationSpec:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_population_spec(handle.read())


def validate_spec(spec: PopulationSpec) -> None:
    if spec.device_count < 0:
        raise InvalidArgumentError("device_count must be non-negative")
    for kind, rate in spec.anomalies.items():
        if kind not in ANOMALY_KINDS:
            raise InvalidArgumentError(f"unknown anomaly {kind!r}")
        if not 0 <= rate <= 1:
            raise InvalidArgumentError(f"anomaly rate {kind} outside [0,1]")
    if sum(spec.anomalies.values()) > 1 + 1e-9:
        raise InvalidArgumentError("anomaly rates sum above 1; slices overlap")
    for mix, allowed, what in ((spec.family_mix, FAMILY_KINDS, "family_mix"),
                               (spec.format_mix, FORMAT_KINDS, "format_mix"),
                               (spec.vendor_mix, _VENDOR_REGISTRY, "vendor_mix")):
        if not mix:
            raise InvalidArgumentError(f"{what} must not be empty")
        for name in mix:
            if name not in allowed:
                raise InvalidArgumentError(f"unknown {what} entry {name!r}")
        if abs(sum(mix.values()) - 1.0) > 1e-6:
            raise InvalidArgumentError(f"{what} shares must sum to 1")
    _parse_count_dist(spec.interfaces)
    _parse_range_dist(spec.uptime)
    _parse_range_dist(spec.boots)
    if spec.amplifier_replies < 1:
        raise InvalidArgumentError("amplifier_replies must be >= 1")


def _parse_count_dist(value: str):
    kind, sep, args = value.partition(":")
    if kind == "fixed":
        return ("fixed", int(args))
    if kind == "uniform":
        lo, hi = (int(x) for x in args.split(","))
        if not 1 <= lo <= hi:
            raise InvalidArgumentError("uniform interface bounds invalid")
        return ("uniform", lo, hi)
    if kind == "geometric":
        mean = float(args)
        if mean < 1:
            raise InvalidArgumentError("geometric mean must be >= 1")
        return ("geometric", mean)
    raise InvalidArgumentError(f"unknown count distribution {value!r}")


def _parse_range_dist(value: str):
    kind, sep, args = value.partition(":")
    if kind == "uniform":
        lo, hi = (float(x) for x in args.split(","))
        if lo > hi:
            raise InvalidArgumentError("uniform range inverted")
        return ("uniform", lo, hi)
    if kind == "exponential":
        mean = float(args)
        if mean <= 0:
            raise InvalidArgumentError("exponential mean must be positive")
        return ("exponential", mean)
    raise InvalidArgumentError(f"unknown range distribution {value!r}")


def _largest_remainder(mix: Mapping[str, float], total: int) -> dict[str, int]:
    floors = {name: int(math.floor(share * total)) for name, share in mix.items()}
    remainder = total - sum(floors.values())
    order = sorted(mix, key=lambda name: (-(mix[name] * total % 1), name))
    for name in order[:remainder]:
        floors[name] += 1
    return floors


# ---------------------------------------------------------------------------
# Population generation
# ---------------------------------------------------------------------------

def _draw_count(rng: random.Random, dist) -> int:
    if dist[0] == "fixed":
        return dist[1]
    if dist[0] == "uniform":
        return rng.randint(dist[1], dist[2])
    mean = dist[1]
    if mean == 1.0:
        return 1
    p = 1.0 / mean
    # shifted geometric, capped to keep populations sane
    k = 1 + int(math.log(max(rng.random(), 1e-12)) / math.log(1.0 - p))
    return min(k, 64)


def _draw_range(rng: random.Random, dist) -> float:
    if dist[0] == "uniform":
        return rng.uniform(dist[1], dist[2])
    return rng.expovariate(1.0 / dist[1])


def _mixed_bytes(rng: random.Random, size: int, ordinal: int) -> bytes:
    # Random filler with the device ordinal folded into the tail.
    blob = bytearray(rng.randbytes(size))
    k = min(size, 4)
    tail = int.from_bytes(blob[-k:], "big") ^ (ordinal & ((1 << (8 * k)) - 1))
    blob[-k:] = tail.to_bytes(k, "big")
    return bytes(blob)


def generate_population(spec: PopulationSpec) -> DevicePopulation:
    """Build the device population deterministically from spec.seed."""
    validate_spec(spec)
    n = spec.device_count
    rng = random.Random(f"population:{spec.seed}")

    # Exact vendor allocation, shuffled.
    vendor_counts = _largest_remainder(spec.vendor_mix, n)
    vendors = [name for name, count in sorted(vendor_counts.items())
               for _ in range(count)]
    rng.shuffle(vendors)

    # Disjoint exact-count anomaly slices over a shuffled device order.
    anomaly_of: dict[int, str] = {}
    order = list(range(n))
    rng.shuffle(order)
    cursor = 0
    anomaly_counts = {kind: int(round(rate * n))
                      for kind, rate in spec.anomalies.items() if rate > 0}
    if sum(anomaly_counts.values()) > n:
        raise InvalidArgumentError("anomaly counts exceed device count")
    for kind in ANOMALY_KINDS:
        count = anomaly_counts.get(kind, 0)
        for device_index in order[cursor:cursor + count]:
            anomaly_of[device_index] = kind
        cursor += count

    iface_dist = _parse_count_dist(spec.interfaces)
    uptime_dist = _parse_range_dist(spec.uptime)
    boots_dist = _parse_range_dist(spec.boots)
    format_names = sorted(spec.format_mix)
    format_weights = [spec.format_mix[name] for name in format_names]
    family_names = sorted(spec.family_mix)
    family_weights = [spec.family_mix[name] for name in family_names]

    v4_hosts = ipaddress.ip_network(spec.v4_pool).hosts()
    v6_hosts = ipaddress.ip_network(spec.v6_pool).hosts()

    used_ids: set[bytes] = {BUGGY_ENGINE_ID}
    used_tuples: set[tuple[int, int]] = set()
    devices: list[Device] = []
    pending_collision: Device | None = None

    for device_id in range(n):
        vendor = vendors[device_id]
        enterprise, oui = _VENDOR_REGISTRY[vendor]
        anomaly = anomaly_of.get(device_id)
        fmt = rng.choices(format_names, weights=format_weights)[0]

        if anomaly == "constant_engine_id":
            engine_id = BUGGY_ENGINE_ID
        else:
            engine_id = _make_engine_id(rng, fmt, enterprise, oui,
                                        used_ids, device_id)

        boots = max(1, int(round(_draw_range(rng, boots_dist))))
        uptime = _draw_range(rng, uptime_dist)
        reboot = spec.epoch - uptime
        reboot = reboot if spec.fractional_reboot else float(int(reboot))
        # Distinct (reboot, boots) tuples unless a collision is forced.
        while (int(reboot), boots) in used_tuples:
            reboot -= 1
        used_tuples.add((int(reboot), boots))

        skew = int(round(rng.gauss(0, spec.clock_skew_stddev))) \
            if spec.clock_skew_stddev else 0

        iface_count = _draw_count(rng, iface_dist)
        family = rng.choices(family_names, weights=family_weights)[0]
        if family == "dual":
            iface_count = max(2, iface_count)
            v4_count = rng.randint(1, iface_count - 1)
        elif family == "v4":
            v4_count = iface_count
        else:
            v4_count = 0
        try:
            v4_addrs = tuple(str(next(v4_hosts)) for _ in range(v4_count))
            v6_addrs = tuple(str(next(v6_hosts))
                             for _ in range(iface_count - v4_count))
        except StopIteration:
            raise InvalidArgumentError("address pool exhausted; enlarge pools")

        device = Device(device_id=device_id, vendor=vendor,
                        engine_id=engine_id, boots=boots, reboot_epoch=reboot,
                        skew=skew, v4_addrs=v4_addrs, v6_addrs=v6_addrs,
                        anomalies=frozenset([anomaly] if anomaly else []))

        if anomaly == "tuple_collision":
            if pending_collision is None:
                pending_collision = device
            else:
                device.reboot_epoch = pending_collision.reboot_epoch
                device.boots = pending_collision.boots
                pending_collision = None
        devices.append(device)

    # An odd trailing collision device pairs with the last completed pair.
    if pending_collision is not None:
        for other in reversed(devices):
            if ("tuple_collision" in other.anomalies
                    and other is not pending_collision):
                pending_collision.reboot_epoch = other.reboot_epoch
                pending_collision.boots = other.boots
                break

    return DevicePopulation(spec, devices)


def _make_engine_id(rng: random.Random, fmt: str, enterprise: int,
                    oui: bytes, used: set[bytes], ordinal: int) -> bytes:
    """Draw one engine ID; uniqueness is enforced on the complete value."""
    head = (0x80000000 | enterprise).to_bytes(4, "big")
    while True:
        if fmt == "mac":
            engine_id = head + b"\x03" + oui + _mixed_bytes(rng, 3, ordinal)
        elif fmt == "ipv4":
            # embedded address must be globally routable
            addr = (0xC1000001 + ordinal).to_bytes(4, "big")
            engine_id = head + b"\x01" + addr
        elif fmt == "ipv6":
            engine_id = (head + b"\x02" + bytes.fromhex("2a010db8")
                         + _mixed_bytes(rng, 12, ordinal))
        elif fmt == "text":
            engine_id = head + b"\x04" + f"agent-{ordinal:08d}".encode()
        elif fmt == "octets":
            engine_id = head + b"\x05" + _mixed_bytes(rng, 8, ordinal)
        elif fmt == "netsnmp":
            engine_id = ((0x80000000 | 8072).to_bytes(4, "big") + b"\x80"
                         + _mixed_bytes(rng, 8, ordinal))
        elif fmt == "nonconforming":
            engine_id = (bytes([rng.randrange(0x80)])
                         + _mixed_bytes(rng, 7, ordinal))
        else:
            raise InvalidArgumentError(f"unknown engine ID format {fmt!r}")
        if engine_id not in used:
            used.add(engine_id)
            return engine_id


def reassign_ephemeral(population: DevicePopulation,
                       pass_label: str) -> dict[str, Device]:
    """Ownership map for a pass: ephemeral-flagged devices trade addresses.

    The first pass ("scan1") keeps generated ownership. Later passes
    rotate all ephemeral interfaces one device forward, so every such IP
    is answered by a different device while the probed IP set stays
    identical across passes.
    """
    ownership = {ip: device for device in population.devices
                 for ip in device.addrs}
    if pass_label == "scan1":
        return ownership
    ephemeral = [d for d in population.devices if "ephemeral_ip" in d.anomalies]
    if len(ephemeral) < 2:
        return ownership
    for current, successor in zip(ephemeral, ephemeral[1:] + ephemeral[:1]):
        for ip in current.addrs:
            ownership[ip] = successor
    return ownership


# ---------------------------------------------------------------------------
# Agents
# ---------------------------------------------------------------------------

class AgentCore:
    """Answer logic shared by the in-process and UDP transports."""

    def __init__(self, population: DevicePopulation, pass_label: str):
        self.population = population
        self.spec = population.spec
        self.pass_label = pass_label
        self.ownership = population.ownership(pass_label)
        self.request_log: list[tuple[str, int]] = []
        self.request_counts: dict[str, int] = {}
        self._discovery_counter: dict[int, int] = {}
        self._jitter: dict[int, int] = {}

    def _pass_jitter(self, device: Device) -> int:
        if self.spec.jitter_stddev == 0:
            return 0
        if device.device_id not in self._jitter:
            rng = random.Random(
                f"jitter:{self.spec.seed}:{device.device_id}:{self.pass_label}")
            self._jitter[device.device_id] = int(round(
                rng.gauss(0, self.spec.jitter_stddev)))
        return self._jitter[device.device_id]

    def engine_time(self, device: Device, now: float) -> int:
        if "zero_time" in device.anomalies:
            return 0
        if "future_time" in device.anomalies:
            return -3600
        uptime = math.floor(now - device.reboot_epoch)
        return uptime + device.skew + self._pass_jitter(device)

    def handle(self, target_ip: str, payload: bytes, now: float) -> list[bytes]:
        """Replies an agent at target_ip would send; [] means silence."""
        self.request_log.append((target_ip, len(payload)))
        self.request_counts[target_ip] = self.request_counts.get(target_ip, 0) + 1
        device = self.ownership.get(target_ip)
        if device is None:
            return []
        try:
            msg = codec.decode_message(payload)
        except MalformedPacketError:
            return []
        if "malformed" in device.anomalies:
            noise = random.Random(f"noise:{device.device_id}").randbytes(48)
            return [b"\xfe" + noise]
        count = self._discovery_counter.get(device.device_id, 0) + 1
        self._discovery_counter[device.device_id] = count
        pad_to = self.spec.response_size if self.spec.response_size > 0 else None
        report_oid = (codec.OID_USM_UNKNOWN_ENGINE_IDS
                      if codec.is_discovery_request(msg)
                      else codec.OID_USM_UNKNOWN_USER_NAMES)
        reply = codec.encode_discovery_response(
            device.engine_id, device.boots, self.engine_time(device, now),
            msg_id=msg.msg_id, counter=count, report_oid=report_oid,
            pad_to=pad_to)
        replies = (self.spec.amplifier_replies
                   if "amplifier" in device.anomalies else 1)
        return [reply] * replies


class InProcessAgent:
    """Function-call transport endpoint over one scan pass."""

    def __init__(self, population: DevicePopulation, pass_label: str):
        self.core = AgentCore(population, pass_label)

    def query(self, target_ip: str, payload: bytes, now: float) -> list[bytes]:
        return self.core.handle(target_ip, payload, now)


class UdpAgentServer:
    """Serve a population over a real UDP socket.

    One socket answers for every simulated address: the destination each
    probe was sent to is recovered from the IP_PKTINFO ancillary data and
    replies are sourced from that same address, so the population must
    live inside 127.0.0.0/8 (every address there is local on loopback).
    """

    def __init__(self, population: DevicePopulation, pass_label: str,
                 port: int = 0, host: str = "0.0.0.0"):
        self.core = AgentCore(population, pass_label)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.setsockopt(socket.IPPROTO_IP, IP_PKTINFO, 1)
        self.sock.bind((host, port))
        self.port = self.sock.getsockname()[1]
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._serve, daemon=True)

    def start(self) -> "UdpAgentServer":
        self._thread.start()
        return self

    def _serve(self) -> None:
        import time as _time
        while not self._stop.is_set():
            try:
                payload, ancdata, _flags, client = self.sock.recvmsg(65535, 512)
            except OSError:
                break
            if self._stop.is_set():
                break
            target = None
            for level, ctype, cdata in ancdata:
                if level == socket.IPPROTO_IP and ctype == IP_PKTINFO:
                    # struct in_pktinfo { int ifindex; in_addr spec_dst, addr; }
                    target = socket.inet_ntoa(cdata[8:12])
            if target is None:
                continue
            for reply in self.core.handle(target, payload, _time.time()):
                pktinfo = struct.pack("I4s4s", 0, socket.inet_aton(target),
                                      b"\x00" * 4)
                self.sock.sendmsg([reply],
                                  [(socket.IPPROTO_IP, IP_PKTINFO,
                                    pktinfo)], 0, client)

    def close(self) -> None:
        self._stop.set()
        # unblock the receive loop
        try:
            poke = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            poke.sendto(b"", ("127.0.0.1", self.port))
            poke.close()
        except OSError:
            pass
        self._thread.join(timeout=5)
        self.sock.close()


def serve(population: DevicePopulation, pass_label: str,
          port: int = 0, host: str = "0.0.0.0") -> UdpAgentServer:
    """Start a UDP agent server; caller must close() the handle."""
    return UdpAgentServer(population, pass_label, port=port,
                          host=host).start()
