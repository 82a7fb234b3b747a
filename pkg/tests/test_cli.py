"""End-to-end command-line tests driving main() in process."""

from __future__ import annotations

import socket

import pytest

from snmpscout.cli import main
from snmpscout.pipeline import FILTER_NAMES
from snmpscout.records import (
    read_alias_sets,
    read_filter_report,
    read_ground_truth,
    read_scan_records,
    read_valid_records,
)

SPEC_TEXT = """\
device_count = 120
seed = 42
epoch = 1700000000
interfaces = geometric:3
family_mix = v4:0.7,dual:0.2,v6:0.1
vendor_mix = Cisco:0.5,Huawei:0.3,Juniper:0.2
anomaly_ephemeral_ip = 0.05
anomaly_zero_time = 0.03
anomaly_malformed = 0.02
"""

GAP = 14 * 86400


@pytest.fixture()
def workspace(tmp_path):
    spec = tmp_path / "population.cfg"
    spec.write_text(SPEC_TEXT)
    return tmp_path


def run(*argv: str) -> int:
    return main([str(a) for a in argv])


def _scan_both_passes(ws, spec):
    targets = ws / "targets.txt"
    assert run("simulate", "--spec", spec, "--targets", targets,
               "--ground-truth", ws / "gt.csv") == 0
    for label, epoch in (("scan1", 1700000000), ("scan2", 1700000000 + GAP)):
        assert run("scan", "--targets", targets, "--sim-spec", spec,
                   "--label", label, "--epoch", epoch, "--rate", "100000",
                   "--seed", "7", "--out", ws / f"{label}.csv") == 0


class TestExitCodes:
    def test_unknown_flag_is_usage_error(self, capsys):
        assert run("scan", "--no-such-flag") == 1
        assert "error" in capsys.readouterr().err

    def test_unknown_subcommand_is_usage_error(self):
        assert run("frobnicate") == 1

    def test_missing_required_flag_is_usage_error(self):
        assert run("alias", "--out", "x.csv") == 1

    def test_help_exits_zero(self, capsys):
        assert run("--help") == 0
        assert "scan" in capsys.readouterr().out

    def test_missing_input_file_is_runtime_error(self, tmp_path, capsys):
        assert run("alias", "--in", tmp_path / "absent.csv",
                   "--out", tmp_path / "sets.csv") == 2
        assert "error" in capsys.readouterr().err

    def test_bad_serve_endpoint_is_runtime_error(self, workspace):
        assert run("simulate", "--spec", workspace / "population.cfg",
                   "--serve", "nonsense") == 2

    def test_same_path_for_both_filter_outputs(self, workspace):
        ws = workspace
        _scan_both_passes(ws, ws / "population.cfg")
        twice = ws / "same.csv"
        assert run("filter", "--scan1", ws / "scan1.csv", "--scan2",
                   ws / "scan2.csv", "--out", twice, "--report", twice) == 2


class TestSimulate:
    def test_ground_truth_and_targets(self, workspace):
        ws = workspace
        assert run("simulate", "--spec", ws / "population.cfg",
                   "--targets", ws / "targets.txt",
                   "--ground-truth", ws / "gt.csv") == 0
        rows = read_ground_truth(ws / "gt.csv")
        assert len(rows) == 120
        targets = (ws / "targets.txt").read_text().split()
        assert sorted(targets) == sorted(
            ip for row in rows for ip in row[4])

    def test_serve_answers_probes(self, workspace):
        from snmpscout.codec import (
            decode_message,
            encode_discovery_request,
            extract_discovery_report,
        )
        import threading

        ws = workspace
        # 0.0.0.0 so the one socket sees datagrams for every pool address
        thread = threading.Thread(
            target=run,
            args=("simulate", "--spec", ws / "population.cfg", "--serve",
                  "0.0.0.0:16133", "--serve-seconds", "6.0"),
            daemon=True)
        thread.start()
        try:
            assert run("simulate", "--spec", ws / "population.cfg",
                       "--ground-truth", ws / "gt.csv") == 0
            rows = read_ground_truth(ws / "gt.csv")
            target = rows[0][4][0]
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            sock.settimeout(0.25)
            reply = None
            for _ in range(20):
                sock.sendto(encode_discovery_request(4242),
                            (target, 16133))
                try:
                    reply, _addr = sock.recvfrom(4096)
                    break
                except socket.timeout:
                    continue
            sock.close()
            assert reply is not None
            report = extract_discovery_report(
                decode_message(reply), len(reply))
            assert report.engine_id.hex() == rows[0][1]
        finally:
            thread.join(timeout=10)


class TestPipeline:
    def test_scan_output_parses(self, workspace):
        ws = workspace
        _scan_both_passes(ws, ws / "population.cfg")
        records = read_scan_records(ws / "scan1.csv")
        truth = read_ground_truth(ws / "gt.csv")
        all_ips = {ip for row in truth for ip in row[4]}
        malformed_ids = {row[0] for row in truth}  # sanity: ids are ints
        assert malformed_ids
        assert records
        assert {r.ip for r in records} <= all_ips
        assert all(r.scan_label == "scan1" for r in records)

    def test_filter_report_lists_ten_filters_in_order(self, workspace):
        ws = workspace
        _scan_both_passes(ws, ws / "population.cfg")
        assert run("filter", "--scan1", ws / "scan1.csv",
                   "--scan2", ws / "scan2.csv", "--out", ws / "valid.csv",
                   "--report", ws / "fr.csv") == 0
        rows = read_filter_report(ws / "fr.csv")
        names = [name for name, _ in rows]
        assert [n for n in names if n in FILTER_NAMES] == list(FILTER_NAMES)
        counts = dict(rows)
        assert counts["input"] - sum(
            counts[n] for n in FILTER_NAMES) == counts["surviving"]
        valid = read_valid_records(ws / "valid.csv")
        assert len(valid) == counts["surviving"]
        # expected removals: 6 ephemeral devices rotate ids, 4 zero-time
        # devices report engine time 0 (rates 0.05/0.03 of 120)
        assert counts["inconsistent_engine_id"] >= 1
        assert counts["zero_time_or_boots"] >= 1

    def test_alias_variants_coarsen(self, workspace):
        ws = workspace
        _scan_both_passes(ws, ws / "population.cfg")
        run("filter", "--scan1", ws / "scan1.csv", "--scan2",
            ws / "scan2.csv", "--out", ws / "valid.csv",
            "--report", ws / "fr.csv")
        counts = {}
        for variant in ("exact-both", "div20-both"):
            out = ws / f"sets_{variant}.csv"
            assert run("alias", "--in", ws / "valid.csv", "--out", out,
                       "--variant", variant) == 0
            counts[variant] = len(read_alias_sets(out))
        assert counts["exact-both"] >= counts["div20-both"]

    def test_alias_rows_recover_devices(self, workspace):
        ws = workspace
        _scan_both_passes(ws, ws / "population.cfg")
        run("filter", "--scan1", ws / "scan1.csv", "--scan2",
            ws / "scan2.csv", "--out", ws / "valid.csv",
            "--report", ws / "fr.csv")
        assert run("alias", "--in", ws / "valid.csv",
                   "--out", ws / "sets.csv") == 0
        rows = read_alias_sets(ws / "sets.csv")
        truth = {row[1]: set(row[4]) for row in read_ground_truth(
            ws / "gt.csv")}
        valid = read_valid_records(ws / "valid.csv")
        id_of = {r.ip: r.engine_id_hex for r in valid}
        for row in rows:
            device_ips = truth[id_of[row.ips[0]]]
            assert set(row.ips) <= device_ips
        # open-source-agent and non-conforming ID formats hide the maker
        vendors = {row.vendor for row in rows}
        assert vendors <= {"Cisco", "Huawei", "Juniper", "Net-SNMP",
                           "Unknown"}
        assert "Cisco" in vendors

    def test_analyze_and_report(self, workspace):
        ws = workspace
        _scan_both_passes(ws, ws / "population.cfg")
        run("filter", "--scan1", ws / "scan1.csv", "--scan2",
            ws / "scan2.csv", "--out", ws / "valid.csv",
            "--report", ws / "fr.csv")
        run("alias", "--in", ws / "valid.csv", "--out", ws / "sets.csv")
        (ws / "pfx.tsv").write_text("127.64.0.0/15\t100\n127.66.0.0/15\t200\n"
                                    "fd53:c0de::/32\t300\n")
        (ws / "regions.tsv").write_text("100\tEU\n200\tNA\n300\tAP\n")
        (ws / "tags.txt").write_text((ws / "targets.txt").read_text())
        assert run("analyze", "--valid", ws / "valid.csv", "--sets",
                   ws / "sets.csv", "--out-dir", ws / "out",
                   "--pfx2as", ws / "pfx.tsv", "--as-region",
                   ws / "regions.tsv", "--router-tags", ws / "tags.txt",
                   "--thresholds", "2,5") == 0
        for name in ("vendor_popularity", "set_sizes", "uptime",
                     "tuple_uniqueness", "tuple_histogram",
                     "vendor_dominance", "vendors_per_as",
                     "regional_popularity", "coverage"):
            assert (ws / "out" / f"{name}.csv").exists(), name
        # report reads only the emitted CSVs
        renamed = ws / "out"
        (ws / "fr.csv").rename(renamed / "fr.csv")
        (ws / "valid.csv").rename(renamed / "valid.csv")
        (ws / "sets.csv").rename(renamed / "sets.csv")
        assert run("report", "--dir", renamed) == 0
        summary = (renamed / "summary.txt").read_text()
        assert "alias sets:" in summary
        assert (renamed / "summary.csv").exists()

    def test_report_on_empty_dir_fails(self, tmp_path):
        assert run("report", "--dir", tmp_path) == 2

    def test_export_figdata(self, workspace):
        ws = workspace
        _scan_both_passes(ws, ws / "population.cfg")
        run("filter", "--scan1", ws / "scan1.csv", "--scan2",
            ws / "scan2.csv", "--out", ws / "valid.csv",
            "--report", ws / "fr.csv")
        run("alias", "--in", ws / "valid.csv", "--out", ws / "sets.csv")
        assert run("export-figdata", "--valid", ws / "valid.csv",
                   "--sets", ws / "sets.csv",
                   "--out-dir", ws / "figdata") == 0
        written = sorted(p.name for p in (ws / "figdata").iterdir())
        assert "figdata_hamming.csv" in written
        assert "figdata_uptime.csv" in written
        assert all(name.startswith("figdata_") for name in written)


class TestDeterminism:
    def test_full_pipeline_is_byte_identical(self, workspace):
        ws = workspace
        spec = ws / "population.cfg"
        outputs = {}
        for attempt in ("a", "b"):
            base = ws / attempt
            base.mkdir()
            assert run("simulate", "--spec", spec, "--targets",
                       base / "targets.txt",
                       "--ground-truth", base / "gt.csv") == 0
            for label, epoch in (("scan1", 1700000000),
                                 ("scan2", 1700000000 + GAP)):
                assert run("scan", "--targets", base / "targets.txt",
                           "--sim-spec", spec, "--label", label,
                           "--epoch", epoch, "--rate", "100000",
                           "--seed", "11",
                           "--out", base / f"{label}.csv") == 0
            assert run("filter", "--scan1", base / "scan1.csv",
                       "--scan2", base / "scan2.csv",
                       "--out", base / "valid.csv",
                       "--report", base / "fr.csv") == 0
            assert run("alias", "--in", base / "valid.csv",
                       "--out", base / "sets.csv") == 0
            assert run("export-figdata", "--valid", base / "valid.csv",
                       "--sets", base / "sets.csv",
                       "--out-dir", base / "figdata") == 0
            blobs = {}
            for path in sorted(base.rglob("*.csv")):
                blobs[str(path.relative_to(base))] = path.read_bytes()
            outputs[attempt] = blobs
        assert outputs["a"] == outputs["b"]
