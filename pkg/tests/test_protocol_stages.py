import pytest

import protocol_stages


@pytest.fixture(autouse=True)
def _fresh_stage_state(monkeypatch):
    monkeypatch.setitem(protocol_stages._stage_state, 'label', None)
    monkeypatch.setitem(protocol_stages._stage_state, 'stages', None)
    monkeypatch.setitem(protocol_stages._stage_state, 'curr_stage_idx', None)


def test_banner_before_pipeline():
    with pytest.raises(ValueError):
        protocol_stages.next_stage_banner()
    assert protocol_stages.stage_count() == 0


def test_banners_in_order():
    protocol_stages.create_pipeline(["Cast", "Audit"], label="Voter")
    assert protocol_stages.stage_count() == 2
    assert protocol_stages.next_stage_banner() == "\nVoter stage  1 of  2: Cast"
    assert protocol_stages.next_stage_banner() == "\nVoter stage  2 of  2: Audit"
    with pytest.raises(ValueError):
        protocol_stages.next_stage_banner()


def test_unfinished_pipeline_is_replaced_with_a_warning(capsys):
    protocol_stages.create_pipeline(["Setup", "Tally"], label="Election")
    protocol_stages.next_stage_banner()
    protocol_stages.create_pipeline(["Only"])
    assert "WARN" in capsys.readouterr().out
    assert protocol_stages.next_stage_banner() == "\nProtocol run stage  1 of  1: Only"
