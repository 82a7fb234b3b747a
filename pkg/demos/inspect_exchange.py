"""Anatomy of one discovery exchange.

An SNMPv3 agent answers an unauthenticated, 60-byte discovery probe
with a report that names its engine ID, engine boots, and engine time.
This script builds the probe, lets a simulated agent answer it, and
walks through everything the reply gives away: hardware vendor, MAC
address, and the wall-clock moment the device last rebooted.

Run:  python3 demos/inspect_exchange.py
"""

import math

from snmpscout import codec, simulator
from snmpscout.engineid import (
    bundled_enterprise_table,
    bundled_oui_table,
    enterprise_lookup,
    oui_lookup,
    parse_engine_id,
)

# --- 1. the probe -----------------------------------------------------------

request = codec.encode_discovery_request(msg_id=7)
print(f"probe: {len(request)} bytes")
print(f"  {request.hex()}")

# --- 2. a simulated agent answers -------------------------------------------

spec = simulator.parse_population_spec(
    "device_count = 1\nseed = 6\ninterfaces = fixed:1\nepoch = 1700000000\n")
population = simulator.generate_population(spec)
device = population.devices[0]
agent = simulator.AgentCore(population, "scan1")

now = float(spec.epoch)
reply = agent.handle(device.addrs[0], request, now)[0]
print(f"\nreply: {len(reply)} bytes (padded to the size real agents use)")
print(f"  {reply.hex()}")

# --- 3. what the reply reveals ----------------------------------------------

report = codec.extract_discovery_report(codec.decode_message(reply), len(reply))
print("\nreport fields:")
print(f"  engine id    : {report.engine_id.hex()}")
print(f"  engine boots : {report.engine_boots}")
print(f"  engine time  : {report.engine_time} s since last reboot")

info = parse_engine_id(report.engine_id)
print("\nengine id, decoded:")
print(f"  conformant   : {info.conformant}")
print(f"  enterprise   : {info.enterprise_number} "
      f"({enterprise_lookup(info.enterprise_number, bundled_enterprise_table())})")
print(f"  format       : {info.format}")
if info.mac is not None:
    vendor = oui_lookup(info.mac, bundled_oui_table())
    print(f"  mac          : {info.mac} (OUI registered to {vendor})")

# the receive timestamp minus engine time dates the last reboot
last_reboot = math.floor(now) - report.engine_time
print(f"\nlast reboot  : unix {last_reboot}")
print(f"ground truth : unix {int(device.reboot_epoch)} "
      f"(device {device.device_id}, {device.vendor})")
assert last_reboot == int(device.reboot_epoch)
