"""Exception types shared across the toolkit."""


class SnmpscoutError(Exception):
    """Base class for all toolkit errors."""


class InvalidArgumentError(SnmpscoutError, ValueError):
    """A caller supplied an argument outside the documented domain."""


class MalformedPacketError(SnmpscoutError):
    """A datagram could not be decoded as a well-formed SNMPv3 message."""


class UnsupportedVersionError(MalformedPacketError):
    """The message decodes but carries a version other than 3."""


class UnsupportedSecurityModelError(MalformedPacketError):
    """The message decodes but uses a security model other than USM."""


class MissingEngineIdError(SnmpscoutError):
    """An operation needing an engine ID was handed an empty one."""


class ScanError(SnmpscoutError):
    """A scan could not be started or completed."""
