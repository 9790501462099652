"""Election configuration: a flat ``key = value`` file, one setting per line."""
import configparser
import dataclasses
import hashlib

import cai_errors
import enc_schemes
import group_arith


_SECTION: str = "election"

_BOOLEAN_KEYS: tuple[str, ...] = ("allow_replacement", "confirmation_codes", "allow_recast_after_failed_audit")
_KNOWN_KEYS: frozenset[str] = frozenset({
    "election_name", "group", "alphabet", "ballot_length", "message_timeout_seconds", *_BOOLEAN_KEYS,
})


@dataclasses.dataclass(frozen=True, slots=True)
class ElectionConfig:
    election_name: str = "demo-election"
    group_name: str = "tiny"
    alphabet: tuple[str, ...] = ("yes", "no", "abstain")
    ballot_length: int = 1
    allow_replacement: bool = False
    confirmation_codes: bool = False
    allow_recast_after_failed_audit: bool = False
    message_timeout_seconds: float = 5.0

    def __post_init__(self) -> None:
        # Alphabet size and duplicates are checked by the encoding itself
        self.vote_encoding()
        if self.ballot_length < 1:
            raise cai_errors.ConfigError(f"ballot_length must be at least 1, got {self.ballot_length}")
        if self.message_timeout_seconds <= 0:
            raise cai_errors.ConfigError(f"message_timeout_seconds must be positive, got {self.message_timeout_seconds}")
        if self.allow_recast_after_failed_audit and not self.confirmation_codes:
            # The server only learns of a failed audit through the voter's confirmation code
            raise cai_errors.ConfigError("allow_recast_after_failed_audit needs confirmation_codes")

    @property
    def election_id(self) -> bytes:
        return hashlib.sha256(self.election_name.encode("utf-8")).digest()[:16]

    @property
    def group(self) -> group_arith.PrimeOrderGroup:
        return group_arith.group_by_name(self.group_name)

    def vote_encoding(self) -> enc_schemes.VoteEncoding:
        return enc_schemes.VoteEncoding(self.group, self.alphabet)

    @property
    def board_allows_replacement(self) -> bool:
        return self.allow_replacement or self.allow_recast_after_failed_audit

    def with_group(self, group_name: str | None) -> "ElectionConfig":
        if group_name is None:
            return self
        return dataclasses.replace(self, group_name=group_name)

    def to_text(self) -> str:
        return "\n".join([
            f"election_name = {self.election_name}",
            f"group = {self.group_name}",
            f"alphabet = {','.join(self.alphabet)}",
            f"ballot_length = {self.ballot_length}",
            f"allow_replacement = {str(self.allow_replacement).lower()}",
            f"confirmation_codes = {str(self.confirmation_codes).lower()}",
            f"allow_recast_after_failed_audit = {str(self.allow_recast_after_failed_audit).lower()}",
            f"message_timeout_seconds = {self.message_timeout_seconds}",
        ]) + "\n"


def parse_config(text: str) -> ElectionConfig:
    parser: configparser.ConfigParser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(f"[{_SECTION}]\n{text}")
    except configparser.Error as parse_error:
        raise cai_errors.ConfigError(f"unreadable election config: {parse_error}") from parse_error

    section: configparser.SectionProxy = parser[_SECTION]
    unknown_keys: set[str] = set(section.keys()) - _KNOWN_KEYS
    if unknown_keys:
        raise cai_errors.ConfigError(f"unknown config keys: {sorted(unknown_keys)}")

    defaults: ElectionConfig = ElectionConfig()
    try:
        alphabet: tuple[str, ...] = defaults.alphabet
        if "alphabet" in section:
            alphabet = tuple(label.strip() for label in section["alphabet"].split(",") if label.strip())

        return ElectionConfig(
            election_name=section.get("election_name", defaults.election_name),
            group_name=section.get("group", defaults.group_name),
            alphabet=alphabet,
            ballot_length=section.getint("ballot_length", defaults.ballot_length),
            allow_replacement=section.getboolean("allow_replacement", defaults.allow_replacement),
            confirmation_codes=section.getboolean("confirmation_codes", defaults.confirmation_codes),
            allow_recast_after_failed_audit=section.getboolean("allow_recast_after_failed_audit",
                                                               defaults.allow_recast_after_failed_audit),
            message_timeout_seconds=section.getfloat("message_timeout_seconds", defaults.message_timeout_seconds),
        )
    except ValueError as value_error:
        if isinstance(value_error, cai_errors.ConfigError):
            raise
        raise cai_errors.ConfigError(f"bad config value: {value_error}") from value_error


def load_config(path: str) -> ElectionConfig:
    try:
        with open(path, "r") as config_handle:
            return parse_config(config_handle.read())
    except OSError as read_error:
        raise cai_errors.ConfigError(f"cannot read election config \"{path}\": {read_error}") from read_error
