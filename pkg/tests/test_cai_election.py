import base64
import json

import pytest

import cai_election
import cai_protocol
import enc_schemes
import group_arith
from group_arith import GroupContext
from verifiability import BallotRecord


VOTES: dict[str, str] = {
    "ana":   "yes",
    "ben":   "no",
    "cleo":  "yes",
    "dmitri": "abstain",
    "eve":   "yes",
}


@pytest.fixture
def election_file(tmp_path) -> str:
    path: str = str(tmp_path / "election.json")
    assert cai_election.main(["setup", "--seed", "1", "--out", path]) == cai_election.EXIT_ACCEPT
    return path


def _cast(election_file: str, tmp_path, voter: str, vote: str, seed: int = 2) -> str:
    qr_path: str = str(tmp_path / f"{voter}.qr")
    exit_code: int = cai_election.main(["cast", "--election", election_file, "--voter", voter, "--vote", vote,
                                        "--seed", str(seed), "--qr-out", qr_path])
    assert exit_code == cai_election.EXIT_ACCEPT
    return qr_path


def test_full_election(election_file, tmp_path, capsys):
    qr_paths: dict[str, str] = {voter: _cast(election_file, tmp_path, voter, vote) for voter, vote in VOTES.items()}

    for voter, vote in VOTES.items():
        capsys.readouterr()
        exit_code: int = cai_election.main(["audit", "--election", election_file, "--qr", qr_paths[voter],
                                            "--expect", vote, "--seed", "3"])
        assert exit_code == cai_election.EXIT_ACCEPT
        output: str = capsys.readouterr().out
        assert f"Displayed vote: {vote}" in output
        assert "verdict=accept" in output

    tally_path: str = str(tmp_path / "tally.json")
    assert cai_election.main(["tally", "--election", election_file, "--out", tally_path]) == cai_election.EXIT_ACCEPT
    with open(tally_path) as tally_handle:
        assert json.load(tally_handle) == {"yes": 3, "no": 1, "abstain": 1}


def test_audit_catches_a_display_the_voter_did_not_intend(election_file, tmp_path, capsys):
    qr_path: str = _cast(election_file, tmp_path, "ana", "no")
    capsys.readouterr()
    exit_code: int = cai_election.main(["audit", "--election", election_file, "--qr", qr_path, "--expect", "yes"])
    assert exit_code == cai_election.EXIT_REJECT
    assert "reason=DisplayedVoteMismatch" in capsys.readouterr().out


def test_corrupted_qr_digest(election_file, tmp_path, capsys):
    qr_path: str = _cast(election_file, tmp_path, "ben", "yes")
    with open(qr_path) as qr_handle:
        payload = cai_protocol.QrPayload.from_armor(group_arith.TINY_GROUP, qr_handle.read())
    corrupted = cai_protocol.QrPayload(payload.election_id, payload.voter_id, payload.r_star, bytes(32))
    with open(qr_path, "w") as qr_handle:
        qr_handle.write(corrupted.armor())

    capsys.readouterr()
    assert cai_election.main(["audit", "--election", election_file, "--qr", qr_path]) == cai_election.EXIT_REJECT
    assert "reason=HashMismatch" in capsys.readouterr().out


def test_second_cast_is_refused(election_file, tmp_path, capsys):
    _cast(election_file, tmp_path, "cleo", "yes")
    capsys.readouterr()
    exit_code: int = cai_election.main(["cast", "--election", election_file, "--voter", "cleo", "--vote", "no",
                                        "--qr-out", str(tmp_path / "again.qr")])
    assert exit_code == cai_election.EXIT_REJECT
    assert "reason=DuplicateBallot" in capsys.readouterr().out


def test_unknown_vote_label(election_file, tmp_path, capsys):
    exit_code: int = cai_election.main(["cast", "--election", election_file, "--voter", "dmitri", "--vote", "maybe",
                                        "--qr-out", str(tmp_path / "x.qr")])
    assert exit_code == cai_election.EXIT_REJECT
    assert "reason=UnknownVote" in capsys.readouterr().out


def test_board_export_and_tampering(tmp_path, capsys):
    # Production group, so a re-randomized record cannot slip past the signature check by chance
    election_file: str = str(tmp_path / "election.json")
    assert cai_election.main(["setup", "--group", "production", "--seed", "4", "--out", election_file]) == 0
    _cast(election_file, tmp_path, "eve", "abstain")
    _cast(election_file, tmp_path, "ana", "no")

    board_path: str = str(tmp_path / "board.txt")
    assert cai_election.main(["export-board", "--election", election_file, "--out", board_path]) == 0
    capsys.readouterr()
    assert cai_election.main(["verify-board", "--election", election_file, "--board", board_path]) == 0
    assert "2 record(s) verified" in capsys.readouterr().out

    with open(board_path) as board_handle:
        lines: list[str] = board_handle.read().splitlines()
    group = group_arith.PRODUCTION_GROUP
    record: BallotRecord = BallotRecord.decode(group, base64.b64decode(lines[0]))
    with open(election_file) as election_handle:
        pk = group.decode_element(bytes.fromhex(json.load(election_handle)["election_pk"]))
    reblinded = enc_schemes.rerand_ballot(GroupContext(group), pk, record.c, (group.scalar(1),))
    lines[0] = base64.b64encode(BallotRecord(record.voter_id, reblinded, record.confirmation).encode()).decode()
    with open(board_path, "w") as board_handle:
        board_handle.write("\n".join(lines) + "\n")

    assert cai_election.main(["verify-board", "--election", election_file, "--board", board_path]) == 1
    assert "reason=InvalidSignature" in capsys.readouterr().out


def test_usage_errors(tmp_path, capsys):
    config_path = tmp_path / "bad.conf"
    config_path.write_text("colour = red\n")
    assert cai_election.main(["setup", "--config", str(config_path), "--out", str(tmp_path / "e.json")]) == 2
    assert cai_election.main(["tally", "--election", str(tmp_path / "missing.json")]) == 2
    assert cai_election.main(["scenario", "--scenario", "no-such-scenario"]) == 2
    assert "usage error" in capsys.readouterr().err


@pytest.mark.parametrize(
    "scenario, exit_code, reason",
    [
        ("all-honest", 0, None),
        ("flip-vote-device", 1, "DisplayedVoteMismatch"),
        ("substitute-ciphertext-server", 1, "HashMismatch"),
        ("withhold-record-server", 1, "ServerMisbehaviorEvidence"),
    ],
)
def test_scenarios(tmp_path, capsys, scenario, exit_code, reason):
    report_path: str = str(tmp_path / "report.json")
    assert cai_election.main(["scenario", "--scenario", scenario, "--out", report_path]) == exit_code

    output: str = capsys.readouterr().out
    if reason is None:
        assert "verdict=accept" in output
    else:
        assert f"reason={reason}" in output
    with open(report_path) as report_handle:
        assert json.load(report_handle)["scenario"] == scenario


def test_scenario_matrix(tmp_path, capsys):
    rows_path: str = str(tmp_path / "matrix.json")
    assert cai_election.main(["scenario", "--scenario", "matrix", "--seeds", "2", "--out", rows_path]) == 0
    assert "verdict=accept" in capsys.readouterr().out
    with open(rows_path) as rows_handle:
        rows: list[dict] = json.load(rows_handle)
    assert len(rows) == 16 * 2
    assert all(row["intent_guarantee_holds"] for row in rows)


def test_recast_after_the_voter_rejects_the_audit(tmp_path, capsys):
    config_path = tmp_path / "recast.conf"
    config_path.write_text("confirmation_codes = true\nallow_recast_after_failed_audit = true\n")
    election_file: str = str(tmp_path / "election.json")
    assert cai_election.main(["setup", "--config", str(config_path), "--seed", "5", "--out", election_file]) == 0

    qr_path: str = _cast(election_file, tmp_path, "fay", "no")
    assert cai_election.main(["audit", "--election", election_file, "--qr", qr_path, "--expect", "yes"]) == 1
    with open(election_file) as election_handle:
        assert json.load(election_handle)["confirmed"] == {"fay": False}

    qr_path = _cast(election_file, tmp_path, "fay", "yes", seed=6)
    assert cai_election.main(["audit", "--election", election_file, "--qr", qr_path, "--expect", "yes"]) == 0
    capsys.readouterr()
    assert cai_election.main(["cast", "--election", election_file, "--voter", "fay", "--vote", "no",
                              "--qr-out", str(tmp_path / "third.qr")]) == cai_election.EXIT_REJECT
    assert "reason=DuplicateBallot" in capsys.readouterr().out

    tally_path: str = str(tmp_path / "tally.json")
    assert cai_election.main(["tally", "--election", election_file, "--out", tally_path]) == 0
    with open(tally_path) as tally_handle:
        assert json.load(tally_handle) == {"yes": 1}


@pytest.mark.parametrize(
    "field, value",
    [
        ("election_sk", None),
        ("sessions", None),
        ("election_pk", "not hex"),
        ("signing_sk", "0000"),
        ("board", 7),
    ],
)
def test_malformed_election_file(election_file, capsys, field, value):
    with open(election_file) as election_handle:
        document: dict = json.load(election_handle)
    if value is None:
        del document[field]
    else:
        document[field] = value
    with open(election_file, "w") as election_handle:
        json.dump(document, election_handle)

    assert cai_election.main(["tally", "--election", election_file]) == cai_election.EXIT_USAGE
    assert "is malformed" in capsys.readouterr().err
