"""SNMPv3 discovery scanning, alias resolution, and fingerprinting toolkit."""

__version__ = "0.1.0"
