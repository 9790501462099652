"""Exponentiation counts and wall-clock latency of the ballot audit, per role and ballot length.

Counts are exact and asserted (exit 1 if any differs from the expected per-element cost);
timings are informational.
"""
import argparse
import dataclasses
import logging
import statistics
import sys
import tempfile
import time
import typing

import polars
import scipy.stats
import xlsxwriter

import cai_protocol
import election_config
import enc_schemes
import group_arith
import object_store
import protocol_stages
import verifiability
import zk_protocols
from election_config import ElectionConfig


# Per ballot element
EXPECTED_DEVICE_CAST: int = 3
EXPECTED_SERVER_AUDIT: int = 6
EXPECTED_DEVICE_AUDIT: int = 8

# Standalone two-base proof; the prover pays one more when it has to create k
EXPECTED_DLEQ_PROVER_REUSED_KEY: int = 4
EXPECTED_DLEQ_PROVER_FRESH_KEY: int = 5
EXPECTED_DLEQ_VERIFIER: int = 6


@dataclasses.dataclass(frozen=True, slots=True)
class AuditMeasurement:
    ballot_length: int
    device_cast: int
    server_audit: int
    device_audit: int
    audit_seconds: float
    verdict: str


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser: argparse.ArgumentParser = argparse.ArgumentParser(
        description="Count exponentiations and time the cast-as-intended ballot audit")

    default_group: str = "production"
    default_max_length: int = 4
    default_repetitions: int = 5
    default_seed: int = 7

    parser.add_argument("--config", help="Path to flat key=value election config (default: built-in demo)")
    parser.add_argument("--group", choices=sorted(group_arith.GROUPS_BY_NAME), default=default_group,
                        help=f"Group to benchmark (default: \"{default_group}\")")
    parser.add_argument("--max-ballot-length", type=int, default=default_max_length,
                        help=f"Measure ballot lengths 1..N (default: {default_max_length})")
    parser.add_argument("--repetitions", type=int, default=default_repetitions,
                        help=f"Audits per ballot length, median time reported (default: {default_repetitions})")
    parser.add_argument("--seed", type=int, default=default_seed, help=f"Seed (default: {default_seed})")
    parser.add_argument("--xlsx", help="Write the benchmark workbook here, s3:// supported")
    parser.add_argument("--verbose", action="store_true", help="Log protocol steps at DEBUG level")
    return parser.parse_args(argv)


def measure_dleq_counts(group: group_arith.PrimeOrderGroup, seed: int, reuse_key: bool) -> tuple[int, int]:
    """(prover, verifier) exponentiations for one two-base proof run."""
    root: group_arith.SeededEntropy = group_arith.SeededEntropy(seed)
    setup_context: group_arith.GroupContext = group_arith.GroupContext(group)
    witness: zk_protocols.DleqWitness = zk_protocols.DleqWitness(setup_context.random_scalar(root.spawn("witness")))
    h: group_arith.GroupElement = setup_context.exp(setup_context.g, setup_context.random_scalar(root.spawn("h")))
    statement: zk_protocols.DleqStatement = zk_protocols.DleqStatement(
        g=setup_context.g, h=h, X=setup_context.exp(setup_context.g, witness.x), Y=setup_context.exp(h, witness.x))

    commitment_key: zk_protocols.CommitmentKey | None = None
    if reuse_key:
        commitment_key = zk_protocols.new_commitment_key(setup_context, root.spawn("earlier-run"))

    prover_context: group_arith.GroupContext = group_arith.GroupContext(group)
    verifier_context: group_arith.GroupContext = group_arith.GroupContext(group)
    transcript: zk_protocols.DleqTranscript = zk_protocols.run_dleq(prover_context, verifier_context, statement,
                                                                    witness, root.spawn("prover"),
                                                                    root.spawn("verifier"), commitment_key)
    if not transcript.accept:
        raise RuntimeError("honest proof rejected during benchmark")
    return prover_context.exponentiations, verifier_context.exponentiations


def measure_audit(config: ElectionConfig, ballot_length: int, seed: int) -> AuditMeasurement:
    """One voter cast and audited; audit counts exclude everything done at submission time."""
    config = dataclasses.replace(config, ballot_length=ballot_length)
    group: group_arith.PrimeOrderGroup = config.group
    root: group_arith.SeededEntropy = group_arith.SeededEntropy(seed)

    setup_context: group_arith.GroupContext = group_arith.GroupContext(group)
    keys: enc_schemes.KeyPair = enc_schemes.keygen(setup_context, root.spawn("election-key"))
    signing_key: verifiability.SigningKeyPair = verifiability.signing_keygen(setup_context, root.spawn("signing-key"))
    election: cai_protocol.ElectionPublic = cai_protocol.ElectionPublic(
        election_id=config.election_id, pk=keys.pk, encoding=config.vote_encoding(),
        server_verification=signing_key.verification, ballot_length=ballot_length)
    intent: cai_protocol.VoterIntent = cai_protocol.VoterIntent(
        "bench-voter", tuple(config.alphabet[position % len(config.alphabet)] for position in range(ballot_length)))

    device_context: group_arith.GroupContext = group_arith.GroupContext(group)
    server: cai_protocol.VotingServer = cai_protocol.VotingServer(group_arith.GroupContext(group), election,
                                                                  signing_key, root.spawn("server"),
                                                                  root.spawn("tokens"))
    device_state, submit = cai_protocol.vd_cast(device_context, election, intent, root.spawn("device"))
    device_state, payload = cai_protocol.vd_finalize(device_context, election, device_state,
                                                     server.receive_ballot(submit))

    server_before_audit: int = server.context.exponentiations
    audit_context: group_arith.GroupContext = group_arith.GroupContext(group)
    audit_start: float = time.perf_counter()
    offer: cai_protocol.AuditOffer = server.open_audit(cai_protocol.AuditRequest(election.election_id,
                                                                                 intent.voter_id))
    outcome: cai_protocol.AuditOutcome = cai_protocol.ad_audit(audit_context, election, payload, offer,
                                                               server.channel_for(intent.voter_id),
                                                               root.spawn("audit"))
    audit_seconds: float = time.perf_counter() - audit_start

    return AuditMeasurement(ballot_length=ballot_length,
                            device_cast=device_context.exponentiations,
                            server_audit=server.context.exponentiations - server_before_audit,
                            device_audit=audit_context.exponentiations,
                            audit_seconds=audit_seconds,
                            verdict=outcome.verdict.value)


def cmd_bench(config: ElectionConfig,
              max_ballot_length: int,
              repetitions: int,
              seed: int) -> tuple[polars.DataFrame, polars.DataFrame]:
    """Returns (per-length measurements, affine fits per measured quantity)."""
    rows: list[dict[str, typing.Any]] = []
    for ballot_length in range(1, max_ballot_length + 1):
        runs: list[AuditMeasurement] = [measure_audit(config, ballot_length, seed + repetition)
                                        for repetition in range(repetitions)]
        rows.append({
            "ballot_length"         : ballot_length,
            "device_cast"           : runs[0].device_cast,
            "server_audit"          : runs[0].server_audit,
            "device_audit"          : runs[0].device_audit,
            "expected_server_audit" : EXPECTED_SERVER_AUDIT * ballot_length,
            "expected_device_audit" : EXPECTED_DEVICE_AUDIT * ballot_length,
            "audit_seconds"         : statistics.median(run.audit_seconds for run in runs),
            "all_accepted"          : all(run.verdict == cai_protocol.Verdict.ACCEPT.value for run in runs),
        })
    measurements: polars.DataFrame = polars.DataFrame(rows)

    fit_rows: list[dict[str, typing.Any]] = []
    for column in ("server_audit", "device_audit", "audit_seconds"):
        if measurements.height < 2:
            break
        fit: typing.Any = scipy.stats.linregress(measurements.get_column("ballot_length").to_list(),
                                                 measurements.get_column(column).to_list())
        fit_rows.append({"quantity": column, "slope": float(fit.slope), "intercept": float(fit.intercept),
                         "r_squared": float(fit.rvalue) ** 2})
    fits: polars.DataFrame = polars.DataFrame(fit_rows, schema={"quantity": polars.String, "slope": polars.Float64,
                                                                "intercept": polars.Float64,
                                                                "r_squared": polars.Float64})
    return measurements, fits


def count_mismatches(measurements: polars.DataFrame, dleq_counts: dict[str, tuple[int, int]]) -> list[str]:
    mismatches: list[str] = []
    for row in measurements.iter_rows(named=True):
        length: int = row["ballot_length"]
        expected: dict[str, int] = {
            "device_cast"  : EXPECTED_DEVICE_CAST * length,
            "server_audit" : EXPECTED_SERVER_AUDIT * length,
            "device_audit" : EXPECTED_DEVICE_AUDIT * length,
        }
        for column, expected_count in expected.items():
            if row[column] != expected_count:
                mismatches.append(f"{column} at ballot length {length}: {row[column]} != {expected_count}")

    expected_dleq: dict[str, tuple[int, int]] = {
        "reused_key": (EXPECTED_DLEQ_PROVER_REUSED_KEY, EXPECTED_DLEQ_VERIFIER),
        "fresh_key" : (EXPECTED_DLEQ_PROVER_FRESH_KEY, EXPECTED_DLEQ_VERIFIER),
    }
    for variant, counts in dleq_counts.items():
        if counts != expected_dleq[variant]:
            mismatches.append(f"standalone proof with {variant}: {counts} != {expected_dleq[variant]}")
    return mismatches


def _generate_output_xlsx(xlsx_path_or_file_handle: str | typing.BinaryIO,
                          measurements: polars.DataFrame,
                          fits: polars.DataFrame) -> None:
    with xlsxwriter.Workbook(xlsx_path_or_file_handle) as excel_workbook:
        header_format: xlsxwriter.workbook.Format = excel_workbook.add_format(
            {
                'bold'      : True,
                'border'    : 1,
                'align'     : 'center',
                'valign'    : 'vcenter',
                'font_color': '#FFFFFF',
                'bg_color'  : '#606060',
            }
        )
        seconds_format: xlsxwriter.workbook.Format = excel_workbook.add_format({'num_format': '0.0000', 'border': 1})
        plain_format: xlsxwriter.workbook.Format = excel_workbook.add_format({'border': 1})

        for sheet_name, frame in (("Audit cost", measurements), ("Affine fits", fits)):
            excel_sheet: xlsxwriter.workbook.Worksheet = excel_workbook.add_worksheet(sheet_name)
            for column_index, column_name in enumerate(frame.columns):
                excel_sheet.write(0, column_index, column_name, header_format)
                excel_sheet.set_column(column_index, column_index, max(14, len(column_name) + 2))
            for row_index, row in enumerate(frame.iter_rows(), start=1):
                for column_index, value in enumerate(row):
                    cell_format: xlsxwriter.workbook.Format = seconds_format if isinstance(value, float) \
                        else plain_format
                    excel_sheet.write(row_index, column_index, value, cell_format)

        if measurements.height:
            chart: typing.Any = excel_workbook.add_chart({'type': 'scatter', 'subtype': 'straight_with_markers'})
            for column_name in ("server_audit", "device_audit"):
                column_index: int = measurements.columns.index(column_name)
                chart.add_series({
                    'name'      : column_name,
                    'categories': ["Audit cost", 1, 0, measurements.height, 0],
                    'values'    : ["Audit cost", 1, column_index, measurements.height, column_index],
                })
            chart.set_x_axis({'name': 'Ballot length'})
            chart.set_y_axis({'name': 'Exponentiations'})
            excel_workbook.get_worksheet_by_name("Audit cost").insert_chart(measurements.height + 3, 1, chart)


def _main() -> None:
    processing_start: float = time.perf_counter()
    args: argparse.Namespace = _parse_args()
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")

    config: ElectionConfig = election_config.load_config(args.config) if args.config else ElectionConfig()
    config = config.with_group(args.group)

    protocol_stages.create_pipeline(["Standalone proof counts", "Audit counts and latency per ballot length",
                                     "Check counts and linearity", "Write workbook"], label="Benchmark")

    print(protocol_stages.next_stage_banner())
    dleq_counts: dict[str, tuple[int, int]] = {
        "reused_key": measure_dleq_counts(config.group, args.seed, reuse_key=True),
        "fresh_key" : measure_dleq_counts(config.group, args.seed, reuse_key=False),
    }
    for variant, (prover_count, verifier_count) in dleq_counts.items():
        print(f"\t{variant}: prover {prover_count}, verifier {verifier_count} exponentiations")

    print(protocol_stages.next_stage_banner())
    measurements, fits = cmd_bench(config, args.max_ballot_length, args.repetitions, args.seed)
    with polars.Config(tbl_cols=-1, tbl_width_chars=160):
        print(measurements)
        print(fits)

    print(protocol_stages.next_stage_banner())
    mismatches: list[str] = count_mismatches(measurements, dleq_counts)
    for mismatch in mismatches:
        print(f"\tCOUNT MISMATCH: {mismatch}")
    if fits.height:
        latency_fit: dict[str, typing.Any] = fits.filter(polars.col("quantity") == "audit_seconds").row(0, named=True)
        print(f"\tAudit latency ~ {latency_fit['slope']:.4f} s per element + {latency_fit['intercept']:.4f} s, "
              f"R^2 {latency_fit['r_squared']:.4f}")

    print(protocol_stages.next_stage_banner())
    if args.xlsx is None:
        print("\tNo --xlsx given, skipping workbook")
    elif object_store.is_s3_uri(args.xlsx):
        with tempfile.TemporaryFile(suffix=".xlsx") as tempfile_handle:
            _generate_output_xlsx(tempfile_handle, measurements, fits)
            tempfile_handle.seek(0)
            binary_content: bytes = tempfile_handle.read()
        object_store.write_bytes(args.xlsx, binary_content)
        print(f"\tCreated output XLSX: \"{args.xlsx}\"")
    else:
        _generate_output_xlsx(args.xlsx, measurements, fits)
        print(f"\tCreated output XLSX: \"{args.xlsx}\"")

    processing_duration: float = time.perf_counter() - processing_start
    print(f"\nBenchmark total processing time: {processing_duration:.01f} seconds\n")

    if mismatches:
        print("reason=CountMismatch")
        sys.exit(1)


if __name__ == "__main__":
    _main()
