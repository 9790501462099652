class CastAsIntendedError(ValueError):
    """Base class for every protocol-level failure.

    ``reason`` is the stable machine-readable tag the CLI prints as ``reason=...``.
    """

    @property
    def reason(self) -> str:
        return type(self).__name__


# Encoding / arithmetic
class NotInGroup(CastAsIntendedError):
    pass


class BadLength(CastAsIntendedError):
    pass


class ScalarOutOfRange(CastAsIntendedError):
    pass


class EntropyExhausted(CastAsIntendedError):
    pass


# Encryption and commitment schemes
class RandomnessMismatch(CastAsIntendedError):
    pass


class OpeningMismatch(CastAsIntendedError):
    pass


class UnknownVote(CastAsIntendedError):
    pass


# Interactive proofs
class DecommitMismatch(CastAsIntendedError):
    pass


class PhaseError(CastAsIntendedError):
    pass


class ZkpRejected(CastAsIntendedError):
    pass


# Server sessions and audit
class DuplicateBallot(CastAsIntendedError):
    pass


class UnknownSession(CastAsIntendedError):
    pass


class HashMismatch(CastAsIntendedError):
    pass


# Bulletin board
class InvalidSignature(CastAsIntendedError):
    pass


class DuplicateVoter(CastAsIntendedError):
    pass


# Transport
class UnknownVersion(CastAsIntendedError):
    pass


class TransportTimeout(CastAsIntendedError):
    pass


class ConfigError(CastAsIntendedError):
    pass
