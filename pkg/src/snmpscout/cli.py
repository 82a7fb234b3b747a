"""Command-line entry point wiring the scan, filter, alias, analytics,
simulator, and figure-data modules together.

Every tunable threshold is a flag with the study defaults; all
randomness flows from explicit seeds, so rerunning a command with the
same inputs produces byte-identical output files.
"""

from __future__ import annotations

import argparse
import ipaddress
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import alias as alias_mod
from . import analytics, pipeline, records, scanner, simulator
from .engineid import (
    bundled_enterprise_table,
    bundled_oui_table,
    load_enterprise_table,
    load_oui_table,
)
from .errors import SnmpscoutError

PROG = "snmpscout"


class _Parser(argparse.ArgumentParser):
    """Usage problems exit 1 (argparse's default of 2 is our runtime code)."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Shared plumbing
# ---------------------------------------------------------------------------

def _read_lines(path) -> list[str]:
    """Plain-text list file: one entry per line, '#' comments."""
    out = []
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.split("#", 1)[0].strip()
            if line:
                out.append(line)
    return out


def _oui_table(path):
    if path is None:
        return bundled_oui_table()
    return load_oui_table(Path(path).read_text(encoding="utf-8"))


def _enterprise_table(path):
    if path is None:
        return bundled_enterprise_table()
    return load_enterprise_table(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class _SetView:
    """Alias-set shape the analytics functions need, rebuilt from a CSV row."""
    members: tuple[str, ...]
    vendor: str
    family: str


def _read_set_views(path) -> list[_SetView]:
    return [_SetView(members=row.ips, vendor=row.vendor, family=row.family)
            for row in records.read_alias_sets(path)]


def _as_mapping(args) -> analytics.AsMapping | None:
    if args.pfx2as is None:
        return None
    return analytics.load_as_mapping(args.pfx2as, args.as_region)


def _default_asof(valid: Sequence[records.ValidRecord]) -> int:
    # latest observed reboot: a reproducible stand-in for "now"
    return max(r.last_reboot_unix_s_scan2 for r in valid)


def _distinct_outputs(*paths) -> None:
    given = [str(Path(p)) for p in paths if p is not None]
    if len(set(given)) != len(given):
        raise SnmpscoutError("output paths must be distinct")


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_scan(args) -> int:
    targets = _read_lines(args.targets)
    blocklist = (scanner.load_blocklist(args.blocklist)
                 if args.blocklist else ())
    plan = scanner.ScanPlan(targets=tuple(targets), rate=args.rate,
                            port=args.port, timeout=args.timeout,
                            seed=args.seed, label=args.label,
                            blocklist=blocklist)
    if args.sim_spec is not None:
        spec = simulator.load_population_spec(args.sim_spec)
        population = simulator.generate_population(spec)
        agent = simulator.InProcessAgent(population, args.label)
        transport = scanner.InProcessTransport(agent)
        epoch = args.epoch if args.epoch is not None else spec.epoch
        clock: scanner.Clock = scanner.VirtualClock(float(epoch))
    else:
        transport = scanner.UdpTransport(args.port, args.bind)
        clock = scanner.RealClock()
    try:
        summary, scan_records = scanner.run_scan(plan, transport, clock)
    finally:
        transport.close()
    records.write_scan_records(args.out, scan_records)
    print(f"{summary.label}: sent {summary.sent} probes, "
          f"{summary.responded} responders, {summary.blocked} blocked, "
          f"{summary.invalid_targets} invalid -> {args.out}")
    return 0


def _cmd_filter(args) -> int:
    _distinct_outputs(args.out, args.report)
    cfg = pipeline.FilterConfig(
        drift_threshold_s=args.drift_threshold,
        min_engine_id_bytes=args.min_engine_id_bytes,
        promiscuity_enterprises=args.promiscuity_count).validated()
    scan1 = records.read_scan_records(args.scan1)
    scan2 = records.read_scan_records(args.scan2)
    merged, stats = pipeline.merge_scans(scan1, scan2)
    valid, report = pipeline.apply_filters(merged, cfg, _oui_table(args.oui))
    records.write_valid_records(args.out, valid)
    rows = [("scan1_responsive", stats.scan1_responsive),
            ("scan2_responsive", stats.scan2_responsive),
            ("undecodable_scan1", stats.undecodable_scan1),
            ("undecodable_scan2", stats.undecodable_scan2),
            ("input", report.input_count)]
    rows.extend(report.rows)
    rows.append(("surviving", report.surviving_count))
    records.write_filter_report(args.report, rows)
    print(f"merged {report.input_count} dual-scan responders, "
          f"{report.surviving_count} valid -> {args.out}")
    return 0


def _cmd_alias(args) -> int:
    valid = records.read_valid_records(args.infile)
    variant = alias_mod.Variant(args.variant)
    sets = alias_mod.group_aliases(valid, variant)
    labeler = analytics.make_vendor_labeler(
        valid, _oui_table(args.oui), _enterprise_table(args.enterprise))
    tags = (analytics.load_router_tags(args.router_tags)
            if args.router_tags else None)
    sets = alias_mod.annotate(sets, labeler, tags)
    records.write_alias_sets(args.out, alias_mod.sets_to_rows(sets))
    stats = alias_mod.set_statistics(sets)
    print(f"{variant.value}: {stats.total} sets "
          f"({stats.non_singleton} with >1 member) -> {args.out}")
    return 0


def _cmd_analyze(args) -> int:
    valid = records.read_valid_records(args.valid)
    if not valid:
        raise SnmpscoutError(f"{args.valid}: no validated records")
    sets = _read_set_views(args.sets)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    asof = args.asof if args.asof is not None else _default_asof(valid)
    written = []

    def table(name: str, columns, rows):
        path = out_dir / f"{name}.csv"
        records.write_tidy_csv(path, columns, rows)
        written.append(path)

    popularity = analytics.vendor_popularity(sets)
    table("vendor_popularity", ("vendor", "family", "sets"), sorted(
        (vendor, family, count)
        for vendor, per_family in popularity.items()
        for family, count in per_family.items()))

    stats = alias_mod.set_statistics(sets)
    table("set_sizes", ("members", "sets"),
          sorted(stats.member_histogram.items()))

    ecdf = analytics.uptime_distribution(sets, valid, asof)
    table("uptime", ("uptime_s", "cumulative_fraction"),
          list(zip(ecdf.xs, ecdf.ys)))

    fraction, histogram = analytics.tuple_uniqueness(valid)
    table("tuple_uniqueness", ("metric", "value"),
          [("unique_ip_fraction", fraction),
           ("total_ips", len(valid)), ("total_tuples",
                                       sum(histogram.values()))])
    table("tuple_histogram", ("engine_ids", "tuples"),
          sorted(histogram.items()))

    mapping = _as_mapping(args)
    if mapping is not None:
        by_as = analytics.sets_by_as(sets, mapping)
        table("vendor_dominance", ("asn", "dominance"),
              sorted(analytics.vendor_dominance(by_as).items()))
        table("vendors_per_as", ("asn", "vendors"),
              sorted(analytics.vendors_per_as(by_as).items()))
        table("regional_popularity", ("region", "vendor", "share"), sorted(
            (region, vendor, share)
            for region, per_vendor in
            analytics.regional_popularity(sets, mapping).items()
            for vendor, share in per_vendor.items()))
        if args.router_tags is not None:
            tags = analytics.load_router_tags(args.router_tags)
            responsive = (set(_read_lines(args.responsive))
                          if args.responsive else {r.ip for r in valid})
            table("coverage", ("min_ips", "asn", "ratio"), sorted(
                (min_ips, asn, ratio)
                for min_ips, per_as in analytics.coverage_by_threshold(
                    responsive, tags, mapping, args.thresholds).items()
                for asn, ratio in per_as.items()))
    for path in written:
        print(path)
    return 0


def _cmd_export_figdata(args) -> int:
    valid = records.read_valid_records(args.valid)
    if not valid:
        raise SnmpscoutError(f"{args.valid}: no validated records")
    sets = _read_set_views(args.sets)
    asof = args.asof if args.asof is not None else _default_asof(valid)
    mapping = _as_mapping(args)
    tags = (analytics.load_router_tags(args.router_tags)
            if args.router_tags else None)
    responsive = (set(_read_lines(args.responsive)) if args.responsive
                  else {r.ip for r in valid})
    tables = analytics.build_figdata(
        valid, sets, asof=asof, mapping=mapping, router_tags=tags,
        responsive_ips=responsive if tags is not None else None,
        thresholds=args.thresholds)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in sorted(tables):
        columns, rows = tables[name]
        path = out_dir / f"figdata_{name}.csv"
        records.write_tidy_csv(path, columns, rows)
        print(path)
    return 0


def _cmd_simulate(args) -> int:
    spec = simulator.load_population_spec(args.spec)
    population = simulator.generate_population(spec)
    interfaces = sum(len(d.addrs) for d in population.devices)
    print(f"population: {len(population.devices)} devices, "
          f"{interfaces} interfaces (seed {spec.seed})")
    if args.ground_truth is not None:
        records.write_ground_truth(args.ground_truth,
                                   population.ground_truth_rows())
        print(f"ground truth -> {args.ground_truth}")
    if args.targets is not None:
        with open(args.targets, "w", encoding="utf-8") as handle:
            for ip in population.all_ips:
                handle.write(ip + "\n")
        print(f"targets -> {args.targets}")
    if args.serve is not None:
        host, _, port = args.serve.rpartition(":")
        try:
            ipaddress.ip_address(host)
            port_number = int(port)
        except ValueError as exc:
            raise SnmpscoutError(
                f"--serve wants HOST:PORT, got {args.serve!r}") from exc
        server = simulator.serve(population, args.pass_label,
                                 port=port_number, host=host)
        print(f"agents for pass {args.pass_label!r} listening on "
              f"{host}:{server.port}")
        try:
            if args.serve_seconds is not None:
                time.sleep(args.serve_seconds)
            else:
                while True:
                    time.sleep(3600)
        except KeyboardInterrupt:
            pass
        finally:
            server.close()
    return 0


def _cmd_report(args) -> int:
    base = Path(args.dir)
    report_path = base / "fr.csv"
    valid_path = base / "valid.csv"
    sets_path = base / "sets.csv"
    lines = []
    summary_rows: list[tuple[str, object]] = []
    found = False

    if report_path.exists():
        found = True
        rows = records.read_filter_report(report_path)
        by_name = dict(rows)
        lines.append("validation pipeline")
        for name, count in rows:
            marker = "  - " if name in pipeline.FILTER_NAMES else "  "
            lines.append(f"{marker}{name}: {count}")
        if "input" in by_name and by_name["input"]:
            kept = by_name.get("surviving", 0) / by_name["input"]
            lines.append(f"  kept {kept:.1%} of dual-scan responders")
            summary_rows.append(("valid_fraction", kept))
        summary_rows.extend(rows)

    if valid_path.exists():
        found = True
        valid = records.read_valid_records(valid_path)
        lines.append(f"validated IPs: {len(valid)}")
        summary_rows.append(("validated_ips", len(valid)))
        if valid:
            fraction, histogram = analytics.tuple_uniqueness(valid)
            lines.append(f"identifier tuple uniqueness: {fraction:.4f} "
                         f"over {sum(histogram.values())} tuples")
            summary_rows.append(("tuple_uniqueness", fraction))

    if sets_path.exists():
        found = True
        views = _read_set_views(sets_path)
        stats = alias_mod.set_statistics(views)
        lines.append(f"alias sets: {stats.total} total, "
                     f"{stats.non_singleton} non-singleton, mean "
                     f"{stats.mean_members_non_singleton:.2f} members "
                     "among non-singletons")
        summary_rows.append(("alias_sets", stats.total))
        summary_rows.append(("non_singleton_sets", stats.non_singleton))
        vendors: dict[str, int] = {}
        for view in views:
            vendors[view.vendor] = vendors.get(view.vendor, 0) + 1
        for vendor, count in sorted(vendors.items(),
                                    key=lambda kv: (-kv[1], kv[0])):
            lines.append(f"  {vendor}: {count} sets")

    if not found:
        raise SnmpscoutError(
            f"{base}: none of fr.csv, valid.csv, sets.csv present")
    text = "\n".join(lines) + "\n"
    out = Path(args.out) if args.out else base / "summary.txt"
    out.write_text(text, encoding="utf-8")
    records.write_tidy_csv(base / "summary.csv", ("metric", "value"),
                           summary_rows)
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}")


def _add_analysis_inputs(sub, with_thresholds: bool = True) -> None:
    sub.add_argument("--valid", required=True,
                     help="validated-record CSV from `filter`")
    sub.add_argument("--sets", required=True,
                     help="alias-set CSV from `alias`")
    sub.add_argument("--out-dir", required=True)
    sub.add_argument("--asof", type=int, default=None,
                     help="reference time for uptimes "
                          "(default: latest observed reboot)")
    sub.add_argument("--pfx2as", default=None,
                     help="prefix-to-AS file, CIDR<TAB>ASN per line")
    sub.add_argument("--as-region", default=None,
                     help="AS-region file, ASN<TAB>region per line")
    sub.add_argument("--router-tags", default=None,
                     help="known-router addresses, one IP per line")
    sub.add_argument("--responsive", default=None,
                     help="responsive-IP list for coverage "
                          "(default: the validated IPs)")
    if with_thresholds:
        sub.add_argument("--thresholds", type=_int_list,
                         default=analytics.COVERAGE_THRESHOLDS,
                         help="per-AS coverage minimum tagged-IP counts")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog=PROG, description=__doc__)
    subs = parser.add_subparsers(dest="subcommand", required=True)

    scan = subs.add_parser("scan", help="probe targets over two UDP passes")
    scan.add_argument("--targets", required=True,
                      help="target list, one IP per line")
    scan.add_argument("--rate", type=float, default=256.0,
                      help="probes per second")
    scan.add_argument("--port", type=int, default=scanner.DEFAULT_PORT)
    scan.add_argument("--timeout", type=float,
                      default=scanner.DEFAULT_TIMEOUT)
    scan.add_argument("--seed", type=int, default=0)
    scan.add_argument("--out", required=True)
    scan.add_argument("--blocklist", default=None,
                      help="CIDR list; matching targets are never probed")
    scan.add_argument("--label", default="scan1",
                      choices=("scan1", "scan2"))
    scan.add_argument("--bind", default="", help="local bind address")
    scan.add_argument("--sim-spec", default=None,
                      help="population spec file: probe an in-process "
                           "simulator under a virtual clock instead of "
                           "the network")
    scan.add_argument("--epoch", type=float, default=None,
                      help="virtual-clock start for --sim-spec scans")
    scan.set_defaults(handler=_cmd_scan)

    filt = subs.add_parser("filter",
                           help="merge two passes and validate responders")
    filt.add_argument("--scan1", required=True)
    filt.add_argument("--scan2", required=True)
    filt.add_argument("--out", required=True,
                      help="validated-record CSV")
    filt.add_argument("--report", required=True,
                      help="per-filter removal counts CSV")
    filt.add_argument("--drift-threshold", type=int, default=10,
                      help="max last-reboot drift between passes, seconds")
    filt.add_argument("--min-engine-id-bytes", type=int, default=4)
    filt.add_argument("--promiscuity-count", type=int, default=2,
                      help="enterprises sharing an ID payload before "
                           "removal")
    filt.add_argument("--oui", default=None,
                      help="MAC registry file (default: bundled)")
    filt.set_defaults(handler=_cmd_filter)

    aliasp = subs.add_parser("alias",
                             help="group validated IPs into alias sets")
    aliasp.add_argument("--in", dest="infile", required=True,
                        help="validated-record CSV")
    aliasp.add_argument("--out", required=True)
    aliasp.add_argument("--variant", default=alias_mod.DEFAULT_VARIANT.value,
                        choices=[v.value for v in alias_mod.Variant])
    aliasp.add_argument("--oui", default=None)
    aliasp.add_argument("--enterprise", default=None)
    aliasp.add_argument("--router-tags", default=None)
    aliasp.set_defaults(handler=_cmd_alias)

    analyze = subs.add_parser("analyze",
                              help="write aggregate study CSVs")
    _add_analysis_inputs(analyze)
    analyze.set_defaults(handler=_cmd_analyze)

    figdata = subs.add_parser("export-figdata",
                              help="write per-figure tidy CSV tables")
    _add_analysis_inputs(figdata)
    figdata.set_defaults(handler=_cmd_export_figdata)

    sim = subs.add_parser("simulate",
                          help="generate a device population; optionally "
                               "serve it over UDP")
    sim.add_argument("--spec", required=True,
                     help="key=value population spec file")
    sim.add_argument("--ground-truth", default=None,
                     help="write the device table to this CSV")
    sim.add_argument("--targets", default=None,
                     help="write all interface addresses to this file")
    sim.add_argument("--serve", default=None, metavar="HOST:PORT",
                     help="answer discovery probes on this UDP endpoint")
    sim.add_argument("--pass-label", default="scan1",
                     choices=("scan1", "scan2"),
                     help="which pass the served agents believe is running")
    sim.add_argument("--serve-seconds", type=float, default=None,
                     help="stop serving after this long (default: forever)")
    sim.set_defaults(handler=_cmd_simulate)

    report = subs.add_parser("report",
                             help="summarize previously emitted CSVs")
    report.add_argument("--dir", required=True,
                        help="directory holding fr.csv / valid.csv / "
                             "sets.csv")
    report.add_argument("--out", default=None,
                        help="summary text path (default: DIR/summary.txt)")
    report.set_defaults(handler=_cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except (SnmpscoutError, OSError, ValueError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
