"""Engine ID parsing, vendor registries, and corpus-level ID statistics.

Autonomously generated engine IDs follow a fixed layout: when the top bit
of byte 0 is set, bytes 0-3 (top bit masked) carry the vendor's private
enterprise number, byte 4 selects how to read the remainder (IPv4/IPv6
address, MAC address, text, octets, or a vendor-specific scheme for codes
128 and up), and the tail is the payload. IDs without the top bit are
free-form values and are kept whole.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Mapping

from .errors import InvalidArgumentError, MissingEngineIdError


class EngineIdFormat(enum.Enum):
    IPV4 = "IPv4"
    IPV6 = "IPv6"
    MAC = "MAC"
    TEXT = "Text"
    OCTETS = "Octets"
    ENTERPRISE_SPECIFIC = "EnterpriseSpecific"
    NON_CONFORMING = "NonConforming"

    def __str__(self) -> str:
        return self.value


# Fixed census category order, used everywhere counts are reported.
FORMAT_CATEGORIES = (
    EngineIdFormat.IPV4,
    EngineIdFormat.IPV6,
    EngineIdFormat.MAC,
    EngineIdFormat.TEXT,
    EngineIdFormat.OCTETS,
    EngineIdFormat.ENTERPRISE_SPECIFIC,
    EngineIdFormat.NON_CONFORMING,
)

NET_SNMP_ENTERPRISE = 8072

_FORMAT_CODES = {
    1: EngineIdFormat.IPV4,
    2: EngineIdFormat.IPV6,
    3: EngineIdFormat.MAC,
    4: EngineIdFormat.TEXT,
    5: EngineIdFormat.OCTETS,
}


@dataclass(frozen=True)
class EngineIdInfo:
    raw: bytes
    conformant: bool
    format: EngineIdFormat
    enterprise_number: int | None
    format_code: int | None
    data: bytes
    mac: str | None = None
    ipv4: str | None = None
    ipv6: str | None = None
    text: str | None = None

    @property
    def is_net_snmp(self) -> bool:
        """True for the stock open-source agent's ID scheme: enterprise
        8072 with a vendor-specific format code."""
        return (self.enterprise_number == NET_SNMP_ENTERPRISE
                and self.format_code is not None and self.format_code >= 128)


def parse_engine_id(raw: bytes) -> EngineIdInfo:
    """Classify an engine ID; never fails on odd lengths or layouts.

    Anything that does not follow the structured layout (top bit clear,
    fewer than 5 bytes, or a reserved format code) is reported whole as
    NonConforming. Typed views are populated only when the payload length
    matches the claimed format.
    """
    raw = bytes(raw)
    if len(raw) == 0:
        raise MissingEngineIdError("empty engine ID")
    conformant = bool(raw[0] & 0x80)
    enterprise = None
    if len(raw) >= 5:
        enterprise = int.from_bytes(raw[0:4], "big") & 0x7FFFFFFF

    if not conformant or len(raw) < 5:
        return EngineIdInfo(raw=raw, conformant=conformant,
                            format=EngineIdFormat.NON_CONFORMING,
                            enterprise_number=enterprise,
                            format_code=None, data=raw)

    code = raw[4]
    data = raw[5:]
    if code >= 128:
        fmt = EngineIdFormat.ENTERPRISE_SPECIFIC
    elif code in _FORMAT_CODES:
        fmt = _FORMAT_CODES[code]
    else:
        # Reserved format code: treat the whole value as free-form.
        return EngineIdInfo(raw=raw, conformant=conformant,
                            format=EngineIdFormat.NON_CONFORMING,
                            enterprise_number=enterprise,
                            format_code=code, data=raw)

    mac = ipv4 = ipv6 = text = None
    if fmt is EngineIdFormat.MAC and len(data) == 6:
        mac = ":".join(f"{b:02x}" for b in data)
    elif fmt is EngineIdFormat.IPV4 and len(data) == 4:
        ipv4 = ".".join(str(b) for b in data)
    elif fmt is EngineIdFormat.IPV6 and len(data) == 16:
        ipv6 = ":".join(data[i:i + 2].hex() for i in range(0, 16, 2))
    elif fmt is EngineIdFormat.TEXT:
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            text = None

    return EngineIdInfo(raw=raw, conformant=conformant, format=fmt,
                        enterprise_number=enterprise, format_code=code,
                        data=data, mac=mac, ipv4=ipv4, ipv6=ipv6, text=text)


# ---------------------------------------------------------------------------
# Vendor registries
# ---------------------------------------------------------------------------

def _read_table_lines(text: str) -> Iterable[tuple[int, str]]:
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].rstrip()
        if not line:
            continue
        yield number, line


def load_oui_table(text: str) -> dict[str, str]:
    """Parse 'XX-XX-XX<TAB>registrant' lines into a prefix -> name map."""
    table: dict[str, str] = {}
    for lineno, line in _read_table_lines(text):
        prefix, sep, name = line.partition("\t")
        prefix = prefix.strip().upper()
        if not sep or not name.strip() or len(prefix.replace("-", "")) != 6:
            raise InvalidArgumentError(f"bad OUI table line {lineno}: {line!r}")
        table[prefix] = name.strip()
    return table


def load_enterprise_table(text: str) -> dict[int, str]:
    """Parse '<decimal><TAB>organization' lines into a number -> name map."""
    table: dict[int, str] = {}
    for lineno, line in _read_table_lines(text):
        number, sep, name = line.partition("\t")
        if not sep or not name.strip() or not number.strip().isdigit():
            raise InvalidArgumentError(
                f"bad enterprise table line {lineno}: {line!r}")
        table[int(number)] = name.strip()
    return table


@functools.cache
def bundled_oui_table() -> dict[str, str]:
    text = resources.files("snmpscout.data").joinpath("oui.tsv").read_text("utf-8")
    return load_oui_table(text)


@functools.cache
def bundled_enterprise_table() -> dict[int, str]:
    text = resources.files("snmpscout.data").joinpath("enterprise.tsv").read_text("utf-8")
    return load_enterprise_table(text)


def normalize_oui(mac: str) -> str:
    """Reduce a MAC or OUI string to the canonical 'XX-XX-XX' prefix."""
    octets = mac.replace(":", "-").split("-")
    if len(octets) < 3 or any(len(o) != 2 for o in octets[:3]):
        raise InvalidArgumentError(f"not a MAC or OUI string: {mac!r}")
    return "-".join(o.upper() for o in octets[:3])


def oui_lookup(mac: str, table: Mapping[str, str]) -> str | None:
    """Return the registrant for a MAC's first three octets, if registered."""
    return table.get(normalize_oui(mac))


def enterprise_lookup(number: int, table: Mapping[int, str]) -> str | None:
    return table.get(number)


# ---------------------------------------------------------------------------
# Corpus statistics
# ---------------------------------------------------------------------------

def hamming_fraction(data: bytes) -> float:
    """Fraction of set bits; 0.5 is expected of uniformly random bytes."""
    if len(data) == 0:
        raise InvalidArgumentError("hamming fraction of empty bytes")
    return int.from_bytes(data, "big").bit_count() / (8 * len(data))


def format_census(infos: Iterable[EngineIdInfo]) -> dict[EngineIdFormat, int]:
    """Count parsed IDs per format; all categories present, zero-filled."""
    census = {fmt: 0 for fmt in FORMAT_CATEGORIES}
    for info in infos:
        census[info.format] += 1
    return census
