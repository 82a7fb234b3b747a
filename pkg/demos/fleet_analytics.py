"""Fleet analytics over one campaign: vendors, uptimes, AS structure.

Runs a medium campaign, then asks the questions the validated records
can answer: which vendors dominate, how long devices have been up,
how vendors spread across networks, and how often the (reboot, boots)
tuple is unique to one engine.

Run:  python3 demos/fleet_analytics.py
"""

from snmpscout import alias, analytics, pipeline, scanner, simulator
from snmpscout.engineid import bundled_enterprise_table, bundled_oui_table

SPEC = """
device_count = 600
seed = 9
interfaces = geometric:3
epoch = 1700000000
"""

spec = simulator.parse_population_spec(SPEC)
population = simulator.generate_population(spec)
targets = tuple(population.all_ips)

passes = []
for label, epoch in (("scan1", spec.epoch), ("scan2", spec.epoch + 14 * 86400)):
    agent = simulator.InProcessAgent(population, label)
    plan = scanner.ScanPlan(targets=targets, rate=5000.0, seed=5, label=label)
    _, records = scanner.run_scan(
        plan, scanner.InProcessTransport(agent),
        scanner.VirtualClock(float(epoch)))
    passes.append(records)
merged, _ = pipeline.merge_scans(passes[0], passes[1])
valid, _ = pipeline.apply_filters(merged)

sets = alias.annotate(
    alias.group_aliases(valid),
    vendor_fn=analytics.make_vendor_labeler(
        valid, bundled_oui_table(), bundled_enterprise_table()))

# --- vendors ------------------------------------------------------------------

print("alias sets per vendor and address family:")
for vendor, by_family in sorted(analytics.vendor_popularity(sets).items(),
                                key=lambda kv: -sum(kv[1].values())):
    families = ", ".join(f"{family} {count}"
                         for family, count in sorted(by_family.items()))
    print(f"  {vendor:12s} {families}")

# --- uptime -------------------------------------------------------------------

asof = max(r.last_reboot_unix_s_scan2 for r in valid)
uptime = analytics.uptime_distribution(sets, valid, asof=asof)
print("\nuptime quantiles (days):")
for q in (0.25, 0.5, 0.9):
    # smallest sample whose cumulative share reaches q
    days = next(x for x, y in zip(uptime.xs, uptime.ys) if y >= q) / 86400
    print(f"  {int(q * 100):3d}th percentile: {days:8.1f}")

# --- network structure ---------------------------------------------------------

mapping = analytics.AsMapping(
    [("127.64.0.0/15", 65001), ("127.66.0.0/15", 65002),
     ("fd53:c0de::/96", 65003)],
    regions={65001: "Europe", 65002: "Asia", 65003: "Americas"})
by_as = analytics.sets_by_as(sets, mapping)
vendor_counts = analytics.vendors_per_as(by_as)
print("\nalias sets per AS:")
for asn, as_sets in sorted(by_as.items()):
    print(f"  AS{asn}: {len(as_sets)} sets, "
          f"{vendor_counts[asn]} identified vendors")

print("\nvendor share by region:")
for region, shares in sorted(analytics.regional_popularity(
        sets, mapping).items()):
    mix = ", ".join(f"{vendor} {share:.0%}"
                    for vendor, share in sorted(shares.items(),
                                                key=lambda kv: -kv[1]))
    print(f"  {region}: {mix}")

# --- identifier quality ---------------------------------------------------------

fraction, histogram = analytics.tuple_uniqueness(valid)
print(f"\n(last reboot, boots) tuples unique to one engine: {fraction:.1%}")
print(f"engines per tuple histogram: {dict(sorted(histogram.items()))}")
