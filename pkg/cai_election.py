"""Demo election operator CLI: setup, cast, audit, tally, bulletin-board checks and attack scenarios.

Exit status: 0 when every verdict accepts, 1 on a protocol-level rejection or misbehavior evidence
(``reason=<Reason>`` on stdout), 2 on usage errors.

The election file holds the election secret key so that ``tally`` can run; it stands in for a
trusted tallying authority and is only fit for demos.
"""
import argparse
import dataclasses
import json
import logging
import sys
import time
import typing

import polars

import cai_errors
import cai_protocol
import election_config
import enc_schemes
import group_arith
import object_store
import protocol_stages
import transport_harness
import verifiability
import zk_protocols
from election_config import ElectionConfig


EXIT_ACCEPT: int = 0
EXIT_REJECT: int = 1
EXIT_USAGE: int = 2


def _parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser: argparse.ArgumentParser = argparse.ArgumentParser(
        description="Second-device cast-as-intended verification: demo election operator")
    parser.add_argument("--verbose", action="store_true", help="Log protocol steps at DEBUG level")
    subparsers: argparse._SubParsersAction = parser.add_subparsers(dest="command", required=True)

    default_election_file: str = "election.json"
    default_qr_file: str = "ballot.qr"

    setup_parser: argparse.ArgumentParser = subparsers.add_parser("setup", help="Create election keys")
    setup_parser.add_argument("--config", help="Path to flat key=value election config (default: built-in demo)")
    setup_parser.add_argument("--group", choices=sorted(group_arith.GROUPS_BY_NAME),
                              help="Override the group named in the config")
    setup_parser.add_argument("--seed", type=int, help="Derive all keys from this seed (default: OS entropy)")
    setup_parser.add_argument("--out", default=default_election_file,
                              help=f"Election file to write, s3:// supported (default: \"{default_election_file}\")")
    setup_parser.set_defaults(handler=_cmd_setup)

    cast_parser: argparse.ArgumentParser = subparsers.add_parser("cast", help="Cast one ballot and print its QR text")
    cast_parser.add_argument("--election", default=default_election_file,
                             help=f"Election file (default: \"{default_election_file}\")")
    cast_parser.add_argument("--voter", required=True, help="Voter identifier (1-16 UTF-8 bytes)")
    cast_parser.add_argument("--vote", required=True, help="Comma-separated choices, one per ballot element")
    cast_parser.add_argument("--seed", type=int, help="Seed for device and server randomness")
    cast_parser.add_argument("--qr-out", default=default_qr_file,
                             help=f"Where to write the voter's QR text (default: \"{default_qr_file}\")")
    cast_parser.set_defaults(handler=_cmd_cast)

    audit_parser: argparse.ArgumentParser = subparsers.add_parser("audit", help="Audit a cast ballot from its QR text")
    audit_parser.add_argument("--election", default=default_election_file,
                              help=f"Election file (default: \"{default_election_file}\")")
    audit_parser.add_argument("--qr", default=default_qr_file, help=f"QR text file (default: \"{default_qr_file}\")")
    audit_parser.add_argument("--expect", help="Comma-separated choices the voter intended; checked against the display")
    audit_parser.add_argument("--seed", type=int, help="Seed for audit randomness")
    audit_parser.set_defaults(handler=_cmd_audit)

    tally_parser: argparse.ArgumentParser = subparsers.add_parser("tally", help="Decrypt and count the board")
    tally_parser.add_argument("--election", default=default_election_file,
                              help=f"Election file (default: \"{default_election_file}\")")
    tally_parser.add_argument("--out", help="Also write the tally as JSON, s3:// supported")
    tally_parser.set_defaults(handler=_cmd_tally)

    export_parser: argparse.ArgumentParser = subparsers.add_parser("export-board", help="Write the board export")
    export_parser.add_argument("--election", default=default_election_file,
                               help=f"Election file (default: \"{default_election_file}\")")
    export_parser.add_argument("--out", required=True, help="Board export path, s3:// supported")
    export_parser.set_defaults(handler=_cmd_export_board)

    verify_parser: argparse.ArgumentParser = subparsers.add_parser("verify-board",
                                                                   help="Check every signature in a board export")
    verify_parser.add_argument("--election", default=default_election_file,
                               help=f"Election file (default: \"{default_election_file}\")")
    verify_parser.add_argument("--board", required=True, help="Board export path, s3:// supported")
    verify_parser.set_defaults(handler=_cmd_verify_board)

    default_seed: int = 7
    default_transport: str = "in-process"
    default_audit_devices: int = 1
    default_matrix_seeds: int = 100
    scenario_parser: argparse.ArgumentParser = subparsers.add_parser("scenario", help="Replay a scripted scenario")
    scenario_parser.add_argument("--config", help="Path to flat key=value election config (default: built-in demo)")
    scenario_parser.add_argument("--group", choices=sorted(group_arith.GROUPS_BY_NAME),
                                 help="Override the group named in the config")
    scenario_parser.add_argument("--scenario", required=True,
                                 help=f"One of {sorted(transport_harness.SCENARIOS)}, or \"matrix\"")
    scenario_parser.add_argument("--seed", type=int, default=default_seed, help=f"Seed (default: {default_seed})")
    scenario_parser.add_argument("--seeds", type=int, default=default_matrix_seeds,
                                 help=f"Seeds per matrix cell (default: {default_matrix_seeds})")
    scenario_parser.add_argument("--transport", choices=transport_harness.TRANSPORTS, default=default_transport,
                                 help=f"Message transport (default: \"{default_transport}\")")
    scenario_parser.add_argument("--audit-devices", type=int, default=default_audit_devices,
                                 help=f"Number of audit devices (default: {default_audit_devices})")
    scenario_parser.add_argument("--out", help="Write the report JSON here, s3:// supported (default: stdout)")
    scenario_parser.set_defaults(handler=_cmd_scenario)

    return parser.parse_args(argv)


# ---- Election file --------------------------------------------------------------------------------

@dataclasses.dataclass(slots=True)
class _ElectionState:
    config: ElectionConfig
    keys: enc_schemes.KeyPair
    signing_key: verifiability.SigningKeyPair
    sessions: dict[str, cai_protocol.AuditSession]
    board_lines: list[str]
    confirmed: dict[str, bool] = dataclasses.field(default_factory=dict)

    def election_public(self) -> cai_protocol.ElectionPublic:
        return cai_protocol.ElectionPublic(election_id=self.config.election_id,
                                           pk=self.keys.pk,
                                           encoding=self.config.vote_encoding(),
                                           server_verification=self.signing_key.verification,
                                           ballot_length=self.config.ballot_length)

    def board(self) -> verifiability.BulletinBoard:
        return verifiability.BulletinBoard.from_export(self.config.group, self.signing_key.verification,
                                                       self.board_lines, self.config.board_allows_replacement)


def _session_to_json(session: cai_protocol.AuditSession) -> dict[str, typing.Any]:
    return {
        "c"             : enc_schemes.encode_ballot(session.c).hex(),
        "x"             : [x.encode().hex() for x in session.x],
        "token"         : session.token.hex(),
        "confirmation"  : session.confirmation.encode().hex(),
        "tau"           : session.commitment_key.tau.encode().hex(),
    }


def _session_from_json(group: group_arith.PrimeOrderGroup,
                       voter_id: str,
                       fields: dict[str, typing.Any]) -> cai_protocol.AuditSession:
    setup_context: group_arith.GroupContext = group_arith.GroupContext(group)
    tau: group_arith.Scalar = group.decode_scalar(bytes.fromhex(fields["tau"]))
    return cai_protocol.AuditSession(
        voter_id=voter_id,
        c=enc_schemes.decode_ballot(group, bytes.fromhex(fields["c"])),
        x=tuple(group.decode_scalar(bytes.fromhex(x)) for x in fields["x"]),
        token=bytes.fromhex(fields["token"]),
        confirmation=verifiability.Confirmation.decode(group, bytes.fromhex(fields["confirmation"])),
        commitment_key=zk_protocols.CommitmentKey(tau=tau, k=setup_context.exp(setup_context.g, tau)),
    )


def _save_state(path: str, state: _ElectionState) -> None:
    document: dict[str, typing.Any] = {
        "config"        : state.config.to_text(),
        "election_id"   : state.config.election_id.hex(),
        "election_sk"   : state.keys.sk.encode().hex(),
        "election_pk"   : state.keys.pk.encode().hex(),
        "signing_sk"    : state.signing_key.signing.encode().hex(),
        "signing_vk"    : state.signing_key.verification.encode().hex(),
        "sessions"      : {voter_id: _session_to_json(session) for voter_id, session in state.sessions.items()},
        "board"         : state.board_lines,
        "confirmed"     : state.confirmed,
    }
    object_store.write_text(path, json.dumps(document, sort_keys=True, indent=2) + "\n")


def _load_state(path: str) -> _ElectionState:
    try:
        document: dict[str, typing.Any] = json.loads(object_store.read_text(path))
    except json.JSONDecodeError as json_error:
        raise cai_errors.ConfigError(f"election file \"{path}\" is not JSON: {json_error}") from json_error

    try:
        return _state_from_json(document)
    except cai_errors.ConfigError:
        raise
    except (KeyError, ValueError, TypeError, AttributeError) as field_error:
        raise cai_errors.ConfigError(f"election file \"{path}\" is malformed: {field_error!r}") from field_error


def _state_from_json(document: dict[str, typing.Any]) -> _ElectionState:
    config: ElectionConfig = election_config.parse_config(document["config"])
    group: group_arith.PrimeOrderGroup = config.group
    return _ElectionState(
        config=config,
        keys=enc_schemes.KeyPair(sk=group.decode_scalar(bytes.fromhex(document["election_sk"])),
                                 pk=group.decode_element(bytes.fromhex(document["election_pk"]))),
        signing_key=verifiability.SigningKeyPair(
            signing=group.decode_scalar(bytes.fromhex(document["signing_sk"])),
            verification=group.decode_element(bytes.fromhex(document["signing_vk"]))),
        sessions={voter_id: _session_from_json(group, voter_id, fields)
                  for voter_id, fields in document["sessions"].items()},
        board_lines=list(document["board"]),
        confirmed={voter_id: bool(accept) for voter_id, accept in document.get("confirmed", {}).items()},
    )


def _entropy(seed: int | None, label: str) -> group_arith.EntropySource:
    if seed is None:
        return group_arith.SystemEntropy()
    return group_arith.SeededEntropy(seed).spawn(label)


def _voting_server(state: _ElectionState, seed: int | None, label: str) -> cai_protocol.VotingServer:
    server: cai_protocol.VotingServer = cai_protocol.VotingServer(
        group_arith.GroupContext(state.config.group), state.election_public(), state.signing_key,
        _entropy(seed, f"{label}/server"), _entropy(seed, f"{label}/tokens"),
        allow_replacement=state.config.allow_replacement, confirmation_codes=state.config.confirmation_codes,
        allow_recast_after_failed_audit=state.config.allow_recast_after_failed_audit)
    server.sessions = dict(state.sessions)
    server.confirmed = dict(state.confirmed)
    return server


def _reject(reason: str) -> int:
    print(f"reason={reason}")
    return EXIT_REJECT


# ---- Commands -------------------------------------------------------------------------------------

def _cmd_setup(args: argparse.Namespace) -> int:
    protocol_stages.create_pipeline(["Load election config", "Generate election and server keys",
                                     "Write election file"], label="Setup")

    print(protocol_stages.next_stage_banner())
    config: ElectionConfig = election_config.load_config(args.config) if args.config else ElectionConfig()
    config = config.with_group(args.group)
    print(f"\tElection \"{config.election_name}\" ({config.election_id.hex()}), group \"{config.group_name}\", "
          f"alphabet {list(config.alphabet)}, ballot length {config.ballot_length}")

    print(protocol_stages.next_stage_banner())
    setup_context: group_arith.GroupContext = group_arith.GroupContext(config.group)
    keys: enc_schemes.KeyPair = enc_schemes.keygen(setup_context, _entropy(args.seed, "setup/election-key"))
    signing_key: verifiability.SigningKeyPair = verifiability.signing_keygen(setup_context,
                                                                             _entropy(args.seed, "setup/signing-key"))
    print(f"\tElection public key: {keys.pk.encode().hex()}")
    print(f"\tServer verification key: {signing_key.verification.encode().hex()}")

    print(protocol_stages.next_stage_banner())
    _save_state(args.out, _ElectionState(config=config, keys=keys, signing_key=signing_key, sessions={},
                                         board_lines=[]))
    print(f"\tCreated election file: \"{args.out}\"")
    return EXIT_ACCEPT


def _cmd_cast(args: argparse.Namespace) -> int:
    state: _ElectionState = _load_state(args.election)
    election: cai_protocol.ElectionPublic = state.election_public()
    intent: cai_protocol.VoterIntent = cai_protocol.VoterIntent(
        args.voter, tuple(label.strip() for label in args.vote.split(",")))

    protocol_stages.create_pipeline(["Encrypt ballot on the voting device", "Submit ballot to the voting server",
                                     "Publish on the bulletin board", "Finalize QR payload"], label="Cast")

    print(protocol_stages.next_stage_banner())
    device_context: group_arith.GroupContext = group_arith.GroupContext(election.group)
    device_state, submit = cai_protocol.vd_cast(device_context, election, intent,
                                                _entropy(args.seed, f"cast/{args.voter}/device"))
    print(f"\tEncrypted {len(device_state.c)} ballot element(s) with {device_context.exponentiations} exponentiations")

    print(protocol_stages.next_stage_banner())
    server: cai_protocol.VotingServer = _voting_server(state, args.seed, f"cast/{args.voter}")
    try:
        blind: cai_protocol.BlindMsg = server.receive_ballot(submit)
    except cai_errors.DuplicateBallot as duplicate_error:
        print(f"\t{duplicate_error}")
        return _reject(duplicate_error.reason)
    session: cai_protocol.AuditSession = server.sessions[args.voter]
    print(f"\tServer confirmation: {blind.confirmation.encode().hex()}")

    print(protocol_stages.next_stage_banner())
    board: verifiability.BulletinBoard = verifiability.bb_publish(
        state.board(), verifiability.BallotRecord(args.voter, session.c, session.confirmation))
    print(f"\tBoard now holds {len(board)} record(s), head {board.prefix_digest().hex()}")

    print(protocol_stages.next_stage_banner())
    device_state, payload = cai_protocol.vd_finalize(device_context, election, device_state, blind)
    object_store.write_text(args.qr_out, payload.armor() + "\n")
    print(f"\tQR text: {payload.armor()}")
    print(f"\tWrote QR text to \"{args.qr_out}\"")

    state.sessions = server.sessions
    state.confirmed = server.confirmed
    state.board_lines = board.export_lines()
    _save_state(args.election, state)
    return EXIT_ACCEPT


def _cmd_audit(args: argparse.Namespace) -> int:
    state: _ElectionState = _load_state(args.election)
    election: cai_protocol.ElectionPublic = state.election_public()

    protocol_stages.create_pipeline(["Scan QR payload", "Fetch audit offer", "Verify re-randomization proof"],
                                    label="Audit")

    print(protocol_stages.next_stage_banner())
    payload: cai_protocol.QrPayload = cai_protocol.QrPayload.from_armor(election.group, object_store.read_text(args.qr))
    print(f"\tVoter \"{payload.voter_id}\", {len(payload.r_star)} ballot element(s)")

    print(protocol_stages.next_stage_banner())
    server: cai_protocol.VotingServer = _voting_server(state, args.seed, f"audit/{payload.voter_id}")
    offer: cai_protocol.AuditOffer = server.open_audit(cai_protocol.AuditRequest(election.election_id,
                                                                                 payload.voter_id))

    expected_intent: cai_protocol.VoterIntent | None = None
    if args.expect is not None:
        expected_intent = cai_protocol.VoterIntent(payload.voter_id,
                                                   tuple(label.strip() for label in args.expect.split(",")))

    print(protocol_stages.next_stage_banner())
    audit_start: float = time.perf_counter()
    audit_context: group_arith.GroupContext = group_arith.GroupContext(election.group)
    outcome: cai_protocol.AuditOutcome = cai_protocol.ad_audit(audit_context, election, payload, offer,
                                                               server.channel_for(payload.voter_id),
                                                               _entropy(args.seed, f"audit/{payload.voter_id}/device"),
                                                               state.config.confirmation_codes, expected_intent)
    audit_duration: float = time.perf_counter() - audit_start
    print(f"\tAudit finished in {audit_duration:.01f} seconds, {audit_context.exponentiations} exponentiations")

    if state.config.confirmation_codes and expected_intent is not None:
        state.confirmed = server.confirmed
        _save_state(args.election, state)

    if not outcome.accepted:
        return _reject(outcome.reason)

    print(f"\tDisplayed vote: {','.join(str(choice) for choice in outcome.displayed_vote)}")
    if expected_intent is not None and not cai_protocol.voter_accepts(expected_intent, outcome):
        return _reject("DisplayedVoteMismatch")

    print("verdict=accept")
    return EXIT_ACCEPT


def _cmd_tally(args: argparse.Namespace) -> int:
    state: _ElectionState = _load_state(args.election)
    board: verifiability.BulletinBoard = state.board()

    tally: dict[str, int] = verifiability.naive_tally(group_arith.GroupContext(state.config.group), state.keys.sk,
                                                      board, state.config.vote_encoding())
    tally_frame: polars.DataFrame = polars.DataFrame(
        {"choice": list(state.config.alphabet), "votes": [tally.get(label, 0) for label in state.config.alphabet]})
    print(f"\nTally over {len(board.live_records())} live ballot(s):")
    print(tally_frame)

    if args.out:
        object_store.write_text(args.out, json.dumps(tally, sort_keys=True, indent=2) + "\n")
        print(f"\tWrote tally: \"{args.out}\"")
    return EXIT_ACCEPT


def _cmd_export_board(args: argparse.Namespace) -> int:
    state: _ElectionState = _load_state(args.election)
    object_store.write_text(args.out, "".join(f"{line}\n" for line in state.board_lines))
    print(f"\tWrote {len(state.board_lines)} board record(s) to \"{args.out}\"")
    return EXIT_ACCEPT


def _cmd_verify_board(args: argparse.Namespace) -> int:
    state: _ElectionState = _load_state(args.election)
    lines: list[str] = object_store.read_text(args.board).splitlines()
    board: verifiability.BulletinBoard = verifiability.BulletinBoard.from_export(
        state.config.group, state.signing_key.verification, lines, state.config.board_allows_replacement)
    print(f"\t{len(board)} record(s) verified, board head {board.prefix_digest().hex()}")
    print("verdict=accept")
    return EXIT_ACCEPT


def _scenario_reason(report: transport_harness.ScenarioReport) -> str | None:
    if report.errors:
        return report.errors[0]
    for audit in report.audits:
        if audit.verdict != cai_protocol.Verdict.ACCEPT.value:
            return audit.reason
    if report.voter_verdict != cai_protocol.Verdict.ACCEPT.value:
        return "DisplayedVoteMismatch"
    if report.receipt == verifiability.ReceiptVerdict.SERVER_MISBEHAVIOR_EVIDENCE.value:
        return report.receipt
    if report.receipt != verifiability.ReceiptVerdict.ACCEPT.value:
        return "ReceiptRejected"
    return None


def _run_matrix(args: argparse.Namespace, config: ElectionConfig) -> int:
    matrix: list[transport_harness.ScriptSet] = transport_harness.scenario_matrix()
    protocol_stages.create_pipeline([f"Run {len(matrix)} script combinations x {args.seeds} seeds",
                                     "Summarize"], label="Scenario matrix")

    print(protocol_stages.next_stage_banner())
    matrix_start: float = time.perf_counter()
    rows: list[dict[str, typing.Any]] = []
    for scripts in matrix:
        for seed in range(args.seed, args.seed + args.seeds):
            report: transport_harness.ScenarioReport = transport_harness.run_scenario(
                scripts, config, seed, args.transport, args.audit_devices,
                scenario_name=transport_harness.scripts_label(scripts))
            rows.append({"scripts": report.scenario, "seed": seed, "voter_verdict": report.voter_verdict,
                         "receipt": report.receipt, "intent_guarantee_holds": report.intent_guarantee_holds})
    print(f"\tRan {len(rows):,} scenarios in {time.perf_counter() - matrix_start:.01f} seconds")

    print(protocol_stages.next_stage_banner())
    results: polars.DataFrame = polars.DataFrame(rows)
    summary: polars.DataFrame = results.group_by("scripts").agg(
        polars.len().alias("runs"),
        (polars.col("voter_verdict") == "accept").sum().alias("voter_accepts"),
        (polars.col("receipt") == verifiability.ReceiptVerdict.SERVER_MISBEHAVIOR_EVIDENCE.value).sum()
            .alias("misbehavior_evidence"),
        (~polars.col("intent_guarantee_holds")).sum().alias("counterexamples"),
    ).sort("scripts")
    with polars.Config(tbl_rows=-1, fmt_str_lengths=80):
        print(summary)

    if args.out:
        object_store.write_text(args.out, json.dumps(rows, sort_keys=True, indent=2) + "\n")

    counterexamples: int = int(summary.get_column("counterexamples").sum())
    if counterexamples:
        return _reject("IntentGuaranteeViolation")
    print("verdict=accept")
    return EXIT_ACCEPT


def _cmd_scenario(args: argparse.Namespace) -> int:
    config: ElectionConfig = election_config.load_config(args.config) if args.config else ElectionConfig()
    config = config.with_group(args.group)
    if args.scenario == "matrix":
        return _run_matrix(args, config)

    report: transport_harness.ScenarioReport = transport_harness.run_scenario(
        transport_harness.scenario_scripts(args.scenario), config, args.seed, args.transport, args.audit_devices,
        scenario_name=args.scenario)

    if args.out:
        object_store.write_text(args.out, report.to_json() + "\n")
    else:
        print(report.to_json())

    reason: str | None = _scenario_reason(report)
    if reason is not None:
        return _reject(reason)
    print("verdict=accept")
    return EXIT_ACCEPT


def main(argv: list[str] | None = None) -> int:
    args: argparse.Namespace = _parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")

    try:
        return args.handler(args)
    except cai_errors.ConfigError as config_error:
        print(f"usage error: {config_error}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as io_error:
        print(f"usage error: {io_error}", file=sys.stderr)
        return EXIT_USAGE
    except cai_errors.CastAsIntendedError as protocol_error:
        print(f"\t{protocol_error}")
        return _reject(protocol_error.reason)


def _main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    _main()
