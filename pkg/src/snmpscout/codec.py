"""BER codec for unauthenticated SNMPv3 USM discovery exchanges.

Implements the definite-length subset of BER that the SNMPv3 message
envelope needs: INTEGER, OCTET STRING, OBJECT IDENTIFIER, SEQUENCE and
the context-class PDU tags. The scoped PDU is carried opaquely so that
any plaintext payload survives a decode/encode round trip byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import (
    InvalidArgumentError,
    MalformedPacketError,
    UnsupportedSecurityModelError,
    UnsupportedVersionError,
)

# ---------------------------------------------------------------------------
# Tags and protocol constants
# ---------------------------------------------------------------------------

TAG_INTEGER = 0x02
TAG_OCTET_STRING = 0x04
TAG_OID = 0x06
TAG_SEQUENCE = 0x30
TAG_GET_REQUEST = 0xA0
TAG_REPORT = 0xA8
TAG_COUNTER32 = 0x41

FLAG_AUTH = 0x01
FLAG_PRIV = 0x02
FLAG_REPORTABLE = 0x04

SNMP_VERSION_3 = 3
USM_SECURITY_MODEL = 3
DEFAULT_MAX_SIZE = 65507

# Report OIDs agents attach when answering engine-ID discovery or when a
# request names a user they do not know.
OID_USM_UNKNOWN_ENGINE_IDS = (1, 3, 6, 1, 6, 3, 15, 1, 1, 4, 0)
OID_USM_UNKNOWN_USER_NAMES = (1, 3, 6, 1, 6, 3, 15, 1, 1, 3, 0)

# The standard discovery probe is 60 payload bytes, which is an 88-byte
# IPv4 datagram (20 IP + 8 UDP + 60) and a 108-byte IPv6 datagram.
DISCOVERY_REQUEST_SIZE = 60
DEFAULT_RESPONSE_SIZE = 130


# ---------------------------------------------------------------------------
# Primitive encoders
# ---------------------------------------------------------------------------

def encode_length(length: int, long_form: bool = False) -> bytes:
    """Encode a definite BER length, optionally forcing the long form."""
    if length < 0:
        raise InvalidArgumentError("length must be non-negative")
    if length < 0x80 and not long_form:
        return bytes([length])
    body = length.to_bytes(max(1, (length.bit_length() + 7) // 8), "big")
    if len(body) > 4:
        raise InvalidArgumentError("length too large to encode")
    return bytes([0x80 | len(body)]) + body


def encode_tlv(tag: int, content: bytes, long_form_length: bool = False) -> bytes:
    if not 0 <= tag <= 0xFF:
        raise InvalidArgumentError("tag must fit one byte")
    return bytes([tag]) + encode_length(len(content), long_form_length) + content


def _integer_body(value: int, min_width: int = 1) -> bytes:
    # Two's complement, big endian; widths above the minimum are legal BER
    # and are used to pin probe/response packets to exact byte sizes.
    width = max(1, min_width)
    while True:
        try:
            return value.to_bytes(width, "big", signed=True)
        except OverflowError:
            width += 1


def encode_integer(value: int, min_width: int = 1) -> bytes:
    return encode_tlv(TAG_INTEGER, _integer_body(value, min_width))


def encode_octet_string(value: bytes) -> bytes:
    return encode_tlv(TAG_OCTET_STRING, bytes(value))


def encode_sequence(parts: Iterable[bytes]) -> bytes:
    return encode_tlv(TAG_SEQUENCE, b"".join(parts))


def encode_oid(arcs: Sequence[int]) -> bytes:
    if len(arcs) < 2 or arcs[0] > 2 or arcs[1] > 39:
        raise InvalidArgumentError("invalid object identifier")
    body = bytearray([40 * arcs[0] + arcs[1]])
    for arc in arcs[2:]:
        if arc < 0:
            raise InvalidArgumentError("negative OID arc")
        chunk = [arc & 0x7F]
        arc >>= 7
        while arc:
            chunk.append(0x80 | (arc & 0x7F))
            arc >>= 7
        body.extend(reversed(chunk))
    return encode_tlv(TAG_OID, bytes(body))


# ---------------------------------------------------------------------------
# Primitive decoders
# ---------------------------------------------------------------------------

def decode_length(data: bytes, offset: int) -> tuple[int, int]:
    """Return (length, offset of first content byte)."""
    if offset >= len(data):
        raise MalformedPacketError("truncated length field")
    first = data[offset]
    if first < 0x80:
        return first, offset + 1
    if first == 0x80:
        raise MalformedPacketError("indefinite lengths are not supported")
    count = first & 0x7F
    if count > 4:
        raise MalformedPacketError("length-of-length exceeds 4 bytes")
    if offset + 1 + count > len(data):
        raise MalformedPacketError("truncated long-form length")
    value = int.from_bytes(data[offset + 1:offset + 1 + count], "big")
    return value, offset + 1 + count


def decode_tlv(data: bytes, offset: int) -> tuple[int, bytes, int]:
    """Return (tag, content, offset just past the element)."""
    if offset >= len(data):
        raise MalformedPacketError("truncated tag")
    tag = data[offset]
    if tag & 0x1F == 0x1F:
        raise MalformedPacketError("multi-byte tags are not supported")
    length, body_offset = decode_length(data, offset + 1)
    end = body_offset + length
    if end > len(data):
        raise MalformedPacketError("element overruns the datagram")
    return tag, data[body_offset:end], end


def decode_integer_content(content: bytes) -> int:
    if len(content) == 0:
        raise MalformedPacketError("INTEGER with empty contents")
    if len(content) > 16:
        raise MalformedPacketError("INTEGER contents unreasonably long")
    return int.from_bytes(content, "big", signed=True)


def _expect_tag(tag: int, want: int, what: str) -> None:
    if tag != want:
        raise MalformedPacketError(f"expected {what}, found tag 0x{tag:02x}")


# ---------------------------------------------------------------------------
# Message model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UsmParameters:
    """User-based security model header fields.

    All-empty values (engine_id b"", boots/time 0) are exactly what a
    discovery request carries. Compliant agents answer with non-negative
    boots/time, but the decoder deliberately tolerates negative values so
    the validation pipeline can observe broken agents.
    """

    engine_id: bytes = b""
    engine_boots: int = 0
    engine_time: int = 0
    user_name: bytes = b""
    auth_params: bytes = b""
    priv_params: bytes = b""


@dataclass(frozen=True)
class SnmpV3Message:
    msg_id: int
    max_size: int = DEFAULT_MAX_SIZE
    flags: int = 0
    security_model: int = USM_SECURITY_MODEL
    usm: UsmParameters = field(default_factory=UsmParameters)
    # Raw TLV of the plaintext scoped PDU, preserved opaquely.
    scoped_pdu: bytes = b""


@dataclass(frozen=True)
class DiscoveryReport:
    """The fields a discovery exchange is run for."""

    engine_id: bytes
    engine_boots: int
    engine_time: int
    payload_size: int


# ---------------------------------------------------------------------------
# Message encoding
# ---------------------------------------------------------------------------

def encode_message(msg: SnmpV3Message, id_min_width: int = 1,
                   outer_long_form: bool = False) -> bytes:
    """Encode a full SNMPv3 message; the scoped PDU must be one whole TLV."""
    if not 0 <= msg.msg_id < 2 ** 31:
        raise InvalidArgumentError("msg_id out of range")
    if not 0 <= msg.max_size < 2 ** 31:
        raise InvalidArgumentError("max_size out of range")
    if not 0 <= msg.flags <= 0xFF:
        raise InvalidArgumentError("flags must fit one byte")
    _tag, _content, end = decode_tlv(msg.scoped_pdu, 0)
    if end != len(msg.scoped_pdu):
        raise InvalidArgumentError("scoped_pdu must be exactly one TLV")
    global_data = encode_sequence([
        encode_integer(msg.msg_id, min_width=id_min_width),
        encode_integer(msg.max_size),
        encode_octet_string(bytes([msg.flags])),
        encode_integer(msg.security_model),
    ])
    usm = msg.usm
    usm_blob = encode_sequence([
        encode_octet_string(usm.engine_id),
        encode_integer(usm.engine_boots),
        encode_integer(usm.engine_time),
        encode_octet_string(usm.user_name),
        encode_octet_string(usm.auth_params),
        encode_octet_string(usm.priv_params),
    ])
    body = (encode_integer(SNMP_VERSION_3) + global_data
            + encode_octet_string(usm_blob) + msg.scoped_pdu)
    return encode_tlv(TAG_SEQUENCE, body, long_form_length=outer_long_form)


def encode_discovery_request(msg_id: int) -> bytes:
    """Build the unauthenticated engine-ID discovery probe.

    Only the reportable flag is set; every USM field is empty and the
    scoped PDU is a GetRequest with no varbinds whose request-id mirrors
    msg_id. msg_id and request-id are padded to two octets so the probe
    is the fixed 60-byte payload (an 88-byte IPv4 datagram) for any
    msg_id below 2**15.
    """
    if not 0 <= msg_id < 2 ** 31:
        raise InvalidArgumentError("msg_id out of range")
    pdu = encode_tlv(TAG_GET_REQUEST, b"".join([
        encode_integer(msg_id, min_width=2),
        encode_integer(0),
        encode_integer(0),
        encode_sequence([]),
    ]))
    scoped = encode_sequence([
        encode_octet_string(b""),
        encode_octet_string(b""),
        pdu,
    ])
    msg = SnmpV3Message(
        msg_id=msg_id,
        max_size=DEFAULT_MAX_SIZE,
        flags=FLAG_REPORTABLE,
        security_model=USM_SECURITY_MODEL,
        usm=UsmParameters(),
        scoped_pdu=scoped,
    )
    return encode_message(msg, id_min_width=2)


# Integer fields a response may legally widen (in this order) to reach an
# exact target size; cap keeps the result within plausible agent output.
_PAD_ORDER = ("msg_id", "request_id", "boots", "time", "counter",
              "max_size", "security_model", "error_status", "error_index")
_PAD_CAP = 8


def _widths_after(bumps: int) -> dict[str, int]:
    """Field widths after widening one byte at a time in _PAD_ORDER."""
    widths = {name: 1 for name in _PAD_ORDER}
    widths["msg_id"] = widths["request_id"] = 2
    for name in _PAD_ORDER:
        take = min(_PAD_CAP - widths[name], bumps)
        widths[name] += take
        bumps -= take
        if bumps == 0:
            break
    return widths


def _build_response(engine_id: bytes, boots: int, time: int, msg_id: int,
                    counter: int, report_oid: Sequence[int], flags: int,
                    context_engine_id: bytes, widths: dict[str, int],
                    outer_long: bool) -> bytes:
    pdu = encode_tlv(TAG_REPORT, b"".join([
        encode_integer(msg_id, min_width=widths["request_id"]),
        encode_integer(0, min_width=widths["error_status"]),
        encode_integer(0, min_width=widths["error_index"]),
        encode_sequence([
            encode_sequence([
                encode_oid(report_oid),
                encode_tlv(TAG_COUNTER32, _integer_body(counter, widths["counter"])),
            ]),
        ]),
    ]))
    scoped = encode_sequence([
        encode_octet_string(context_engine_id),
        encode_octet_string(b""),
        pdu,
    ])
    global_data = encode_sequence([
        encode_integer(msg_id, min_width=widths["msg_id"]),
        encode_integer(DEFAULT_MAX_SIZE, min_width=widths["max_size"]),
        encode_octet_string(bytes([flags])),
        encode_integer(USM_SECURITY_MODEL, min_width=widths["security_model"]),
    ])
    usm_blob = encode_sequence([
        encode_octet_string(engine_id),
        encode_integer(boots, min_width=widths["boots"]),
        encode_integer(time, min_width=widths["time"]),
        encode_octet_string(b""),
        encode_octet_string(b""),
        encode_octet_string(b""),
    ])
    body = (encode_integer(SNMP_VERSION_3) + global_data
            + encode_octet_string(usm_blob) + scoped)
    return encode_tlv(TAG_SEQUENCE, body, long_form_length=outer_long)


def encode_discovery_response(engine_id: bytes, engine_boots: int,
                              engine_time: int, msg_id: int,
                              counter: int = 1,
                              report_oid: Sequence[int] = OID_USM_UNKNOWN_ENGINE_IDS,
                              flags: int = 0,
                              context_engine_id: bytes | None = None,
                              pad_to: int | None = DEFAULT_RESPONSE_SIZE) -> bytes:
    """Build an agent's report answer to a discovery probe.

    The engine ID is echoed both in the USM header and as the context
    engine ID, the way real agents respond. When pad_to is given and the
    natural encoding is shorter, INTEGER fields are widened (and the
    outer length switched to the long form if needed) until the payload
    is exactly pad_to bytes; a natural encoding already at or past the
    target is returned unpadded.
    """
    if not 0 <= msg_id < 2 ** 31:
        raise InvalidArgumentError("msg_id out of range")
    if context_engine_id is None:
        context_engine_id = engine_id

    def build(bumps: int, outer_long: bool) -> bytes:
        return _build_response(engine_id, engine_boots, engine_time, msg_id,
                               counter, report_oid, flags, context_engine_id,
                               _widths_after(bumps), outer_long)

    max_bumps = sum(_PAD_CAP - w for w in _widths_after(0).values())
    for outer_long in (False, True):
        packet = build(0, outer_long)
        if pad_to is None or len(packet) >= pad_to:
            if pad_to is None or not outer_long:
                return packet
            continue
        # widening never shrinks the packet, so its length is monotone in
        # the bump count: binary-search the smallest count reaching the
        # target (a bump can also add nothing when the field's value
        # already needs more bytes than the requested minimum width)
        lo, hi = 1, max_bumps
        best = None
        while lo <= hi:
            mid = (lo + hi) // 2
            candidate = build(mid, outer_long)
            if len(candidate) >= pad_to:
                best = candidate
                hi = mid - 1
            else:
                lo = mid + 1
        if best is not None and len(best) == pad_to:
            return best
    raise InvalidArgumentError(f"cannot pad response to {pad_to} bytes")


# ---------------------------------------------------------------------------
# Message decoding
# ---------------------------------------------------------------------------

def decode_message(datagram: bytes) -> SnmpV3Message:
    """Decode an SNMPv3 message, never reading past the datagram.

    Raises MalformedPacketError (or its UnsupportedVersionError /
    UnsupportedSecurityModelError refinements) on anything that is not a
    well-formed version-3 USM message occupying the whole datagram.
    """
    data = bytes(datagram)
    tag, body, end = decode_tlv(data, 0)
    _expect_tag(tag, TAG_SEQUENCE, "message SEQUENCE")
    if end != len(data):
        raise MalformedPacketError("trailing bytes after the message")

    tag, content, offset = decode_tlv(body, 0)
    _expect_tag(tag, TAG_INTEGER, "msgVersion INTEGER")
    version = decode_integer_content(content)
    if version != SNMP_VERSION_3:
        raise UnsupportedVersionError(f"unsupported SNMP version {version}")

    tag, global_data, offset = decode_tlv(body, offset)
    _expect_tag(tag, TAG_SEQUENCE, "msgGlobalData SEQUENCE")
    gtag, gcontent, goffset = decode_tlv(global_data, 0)
    _expect_tag(gtag, TAG_INTEGER, "msgID INTEGER")
    msg_id = decode_integer_content(gcontent)
    gtag, gcontent, goffset = decode_tlv(global_data, goffset)
    _expect_tag(gtag, TAG_INTEGER, "msgMaxSize INTEGER")
    max_size = decode_integer_content(gcontent)
    gtag, gcontent, goffset = decode_tlv(global_data, goffset)
    _expect_tag(gtag, TAG_OCTET_STRING, "msgFlags OCTET STRING")
    if len(gcontent) < 1:
        raise MalformedPacketError("msgFlags must carry at least one byte")
    flags = gcontent[0]
    gtag, gcontent, goffset = decode_tlv(global_data, goffset)
    _expect_tag(gtag, TAG_INTEGER, "msgSecurityModel INTEGER")
    security_model = decode_integer_content(gcontent)
    if goffset != len(global_data):
        raise MalformedPacketError("trailing bytes in msgGlobalData")
    if security_model != USM_SECURITY_MODEL:
        raise UnsupportedSecurityModelError(
            f"unsupported security model {security_model}")

    tag, usm_blob, offset = decode_tlv(body, offset)
    _expect_tag(tag, TAG_OCTET_STRING, "msgSecurityParameters OCTET STRING")
    utag, usm_body, uend = decode_tlv(usm_blob, 0)
    _expect_tag(utag, TAG_SEQUENCE, "USM parameter SEQUENCE")
    if uend != len(usm_blob):
        raise MalformedPacketError("trailing bytes after USM parameters")
    fields: list[bytes | int] = []
    uoffset = 0
    for name, want in (("engine ID", TAG_OCTET_STRING),
                       ("engine boots", TAG_INTEGER),
                       ("engine time", TAG_INTEGER),
                       ("user name", TAG_OCTET_STRING),
                       ("auth parameters", TAG_OCTET_STRING),
                       ("priv parameters", TAG_OCTET_STRING)):
        ftag, fcontent, uoffset = decode_tlv(usm_body, uoffset)
        _expect_tag(ftag, want, name)
        fields.append(decode_integer_content(fcontent)
                      if want == TAG_INTEGER else fcontent)
    if uoffset != len(usm_body):
        raise MalformedPacketError("trailing bytes in USM parameters")
    usm = UsmParameters(
        engine_id=fields[0],      # type: ignore[arg-type]
        engine_boots=fields[1],   # type: ignore[arg-type]
        engine_time=fields[2],    # type: ignore[arg-type]
        user_name=fields[3],      # type: ignore[arg-type]
        auth_params=fields[4],    # type: ignore[arg-type]
        priv_params=fields[5],    # type: ignore[arg-type]
    )

    scoped_pdu = body[offset:]
    _stag, _scontent, send = decode_tlv(scoped_pdu, 0)
    if send != len(scoped_pdu):
        raise MalformedPacketError("trailing bytes after the scoped PDU")

    return SnmpV3Message(
        msg_id=msg_id,
        max_size=max_size,
        flags=flags,
        security_model=security_model,
        usm=usm,
        scoped_pdu=scoped_pdu,
    )


def extract_discovery_report(msg: SnmpV3Message, received_size: int) -> DiscoveryReport:
    """Pull the discovery triple out of a decoded response.

    payload_size is the size of the datagram the message was decoded
    from, as reported by the receiver. An empty engine ID is copied
    through untouched; removing such responses is the validation
    pipeline's job, not the codec's.
    """
    if received_size < 0:
        raise InvalidArgumentError("received_size must be non-negative")
    return DiscoveryReport(
        engine_id=msg.usm.engine_id,
        engine_boots=msg.usm.engine_boots,
        engine_time=msg.usm.engine_time,
        payload_size=received_size,
    )


def is_discovery_request(msg: SnmpV3Message) -> bool:
    """True when a message is an engine-ID discovery probe: empty USM
    fields with boots and time both zero."""
    usm = msg.usm
    return (len(usm.engine_id) == 0 and len(usm.user_name) == 0
            and usm.engine_boots == 0 and usm.engine_time == 0)
