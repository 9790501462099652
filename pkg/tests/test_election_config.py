import pathlib

import pytest

import cai_errors
import election_config
from election_config import ElectionConfig
from group_arith import PRODUCTION_GROUP, TINY_GROUP


def test_defaults():
    config: ElectionConfig = election_config.parse_config("")
    assert config == ElectionConfig()
    assert config.group is TINY_GROUP
    assert config.alphabet == ("yes", "no", "abstain")
    assert len(config.election_id) == 16


def test_parse_every_key():
    config: ElectionConfig = election_config.parse_config(
        "election_name = city-council\n"
        "group = production\n"
        "alphabet = red, green ,blue,\n"
        "ballot_length = 2\n"
        "allow_replacement = true\n"
        "confirmation_codes = yes\n"
        "allow_recast_after_failed_audit = on\n"
        "message_timeout_seconds = 0.5\n")

    assert config.election_name == "city-council"
    assert config.group is PRODUCTION_GROUP
    assert config.alphabet == ("red", "green", "blue")
    assert config.ballot_length == 2
    assert config.allow_replacement and config.confirmation_codes and config.allow_recast_after_failed_audit
    assert config.message_timeout_seconds == 0.5
    assert election_config.parse_config(config.to_text()) == config


@pytest.mark.parametrize(
    "text",
    [
        "colour = red\n",
        "group = modp-2048\n",
        "ballot_length = zero\n",
        "ballot_length = 0\n",
        "allow_replacement = maybe\n",
        "allow_recast_after_failed_audit = true\n",
        "message_timeout_seconds = -1\n",
        "alphabet = only\n",
        "alphabet = a,b,a\n",
        "alphabet = " + ",".join(f"c{index}" for index in range(11)) + "\n",
        "no equals sign here\n",
    ],
)
def test_bad_configs(text):
    with pytest.raises(cai_errors.ConfigError):
        election_config.parse_config(text)


def test_election_id_follows_the_name():
    assert ElectionConfig(election_name="a").election_id != ElectionConfig(election_name="b").election_id
    assert ElectionConfig().with_group("production").election_id == ElectionConfig().election_id


def test_with_group():
    config: ElectionConfig = ElectionConfig()
    assert config.with_group(None) is config
    assert config.with_group("production").group is PRODUCTION_GROUP
    with pytest.raises(cai_errors.ConfigError):
        config.with_group("nonsense")


def test_load_config(tmp_path):
    path = tmp_path / "election.conf"
    path.write_text("alphabet = left,right\n")
    assert election_config.load_config(str(path)).alphabet == ("left", "right")

    with pytest.raises(cai_errors.ConfigError):
        election_config.load_config(str(tmp_path / "missing.conf"))


def test_shipped_example_config_parses():
    assert election_config.load_config(str(pathlib.Path(__file__).parent.parent / "election.conf")).group is TINY_GROUP
