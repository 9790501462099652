import pytest

import cai_errors
import transport_harness
from election_config import ElectionConfig
from transport_harness import ActorScript, Behavior, ScenarioReport
from wire_codec import Role


TINY_CONFIG: ElectionConfig = ElectionConfig()


def _run(name: str, seed: int = 7, **kwargs) -> ScenarioReport:
    return transport_harness.run_scenario(transport_harness.scenario_scripts(name), TINY_CONFIG, seed,
                                          scenario_name=name, **kwargs)


def test_all_honest():
    report: ScenarioReport = _run("all-honest")

    assert report.voter_verdict == "accept"
    assert report.audits[0].verdict == "accept"
    assert report.audits[0].displayed_vote == report.intent
    assert report.receipt == "accept"
    assert report.confirmation_copies_match
    assert report.counted_vote == report.intent
    assert report.tally == {report.intent[0]: 1}
    assert report.errors == []
    assert report.intent_guarantee_holds
    assert report.exponentiations == {"voting_device": 3, "voting_server": 2 + 6, "audit_devices": [8]}
    assert report.board["length"] == 1


def test_flipped_vote_on_the_voting_device():
    report: ScenarioReport = _run("flip-vote-device")
    assert report.audits[0].verdict == "accept"
    assert report.audits[0].displayed_vote != report.intent
    assert report.voter_verdict == "reject"
    assert report.counted_vote != report.intent
    assert report.intent_guarantee_holds


def test_substituted_ciphertext():
    report: ScenarioReport = _run("substitute-ciphertext-server")
    assert report.audits[0].reason == "HashMismatch"
    assert report.voter_verdict == "reject"


@pytest.mark.parametrize("seed", range(5))
def test_bad_proof_never_convinces_the_voter(seed):
    report: ScenarioReport = _run("bad-proof-server", seed=seed)
    assert report.voter_verdict == "reject"
    assert report.intent_guarantee_holds


def test_withheld_record_yields_evidence():
    report: ScenarioReport = _run("withhold-record-server")
    assert report.voter_verdict == "accept"
    assert report.receipt == "ServerMisbehaviorEvidence"
    assert report.board["length"] == 0
    assert report.tally == {}
    assert report.intent_guarantee_holds


def test_lying_audit_device():
    report: ScenarioReport = _run("flip-vote-audit-device")
    assert report.voter_verdict == "reject"
    assert report.counted_vote == report.intent


def test_replayed_frames_are_refused():
    report: ScenarioReport = _run("replay-device")
    assert report.voter_verdict == "accept"
    assert report.replay == ["DuplicateBallot", "UnknownSession", "UnknownSession", "UnknownSession"]
    assert report.board["length"] == 1


def test_confirmation_codes_reach_the_server():
    config: ElectionConfig = ElectionConfig(confirmation_codes=True)
    report: ScenarioReport = transport_harness.run_scenario(transport_harness.scenario_scripts("replay-device"),
                                                            config, 7)
    assert report.voter_verdict == "accept"
    # The replayed confirmation code names a session the fresh server never opened
    assert report.replay[-1] == "UnknownSession"
    assert len(report.replay) == 5


@pytest.mark.parametrize(
    "name, confirmed",
    [
        ("all-honest", True),
        ("flip-vote-device", False),
        ("bad-proof-server", False),
        ("flip-vote-audit-device", None),
    ],
)
def test_confirmation_code_follows_the_voter_verdict(name, confirmed):
    report: ScenarioReport = transport_harness.run_scenario(transport_harness.scenario_scripts(name),
                                                            ElectionConfig(confirmation_codes=True), 7)
    assert report.server_confirmed is confirmed
    assert (report.voter_verdict == "accept") is (confirmed is True)
    assert _run(name).server_confirmed is None


@pytest.mark.parametrize("name", sorted(transport_harness.SCENARIOS))
def test_transports_are_interchangeable(name):
    in_process: dict = _run(name, transport="in-process").to_dict()
    over_socket: dict = _run(name, transport="socket").to_dict()
    assert in_process.pop("transport") == "in-process"
    assert over_socket.pop("transport") == "socket"
    assert in_process == over_socket


def test_reports_are_reproducible_for_a_seed():
    assert _run("all-honest", seed=3).to_json() == _run("all-honest", seed=3).to_json()


def test_several_audit_devices():
    report: ScenarioReport = _run("all-honest", audit_devices=3)
    assert [audit.verdict for audit in report.audits] == ["accept"] * 3
    assert report.exponentiations["audit_devices"] == [8, 8, 8]
    assert report.exponentiations["voting_server"] == 2 + 3 * 6
    assert report.confirmation_copies_match


def test_only_the_first_audit_device_follows_its_script():
    report: ScenarioReport = _run("flip-vote-audit-device", audit_devices=2)
    assert report.audits[0].displayed_vote != report.intent
    assert report.audits[1].displayed_vote == report.intent


def test_multi_element_ballots():
    config: ElectionConfig = ElectionConfig(ballot_length=3)
    report: ScenarioReport = transport_harness.run_scenario(transport_harness.scenario_scripts("all-honest"),
                                                            config, 11)
    assert len(report.intent) == 3
    assert report.voter_verdict == "accept"
    assert report.exponentiations == {"voting_device": 9, "voting_server": 2 + 18, "audit_devices": [24]}
    assert sum(report.tally.values()) == 3


def test_script_validation():
    with pytest.raises(cai_errors.ConfigError):
        ActorScript(Role.AUDIT_DEVICE, Behavior.BAD_PROOF)
    with pytest.raises(cai_errors.ConfigError):
        transport_harness.scenario_scripts("everyone-lies")
    with pytest.raises(cai_errors.ConfigError):
        transport_harness.run_scenario([ActorScript(Role.VOTING_DEVICE)], TINY_CONFIG, 1)
    with pytest.raises(cai_errors.ConfigError):
        transport_harness.run_scenario(transport_harness.scenario_scripts("all-honest"), TINY_CONFIG, 1,
                                       transport="carrier-pigeon")


def test_matrix_never_corrupts_both_voter_devices():
    matrix = transport_harness.scenario_matrix()
    assert len(matrix) == 16
    for scripts in matrix:
        assert Behavior.HONEST in (scripts[Role.VOTING_DEVICE].behavior, scripts[Role.AUDIT_DEVICE].behavior)


def test_matrix_on_tiny_group():
    for scripts in transport_harness.scenario_matrix():
        for seed in range(3):
            report: ScenarioReport = transport_harness.run_scenario(scripts, TINY_CONFIG, seed)
            assert report.intent_guarantee_holds, transport_harness.scripts_label(scripts)


@pytest.mark.slow
def test_matrix_on_production_group():
    config: ElectionConfig = TINY_CONFIG.with_group("production")
    for scripts in transport_harness.scenario_matrix():
        for seed in range(100):
            report: ScenarioReport = transport_harness.run_scenario(scripts, config, seed)
            assert report.intent_guarantee_holds, (transport_harness.scripts_label(scripts), seed)
