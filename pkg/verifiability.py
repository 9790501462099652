"""Bulletin board, signed cast confirmations and receipt checks.

The voting server signs every cast ballot; the voter receives that confirmation from both devices
and later checks that the board holds the ballot it names. A correctly signed confirmation whose
ballot is missing from the board is evidence against the server.
"""
import base64
import binascii
import collections
import dataclasses
import enum
import hashlib
import logging
import typing

import cai_errors
import enc_schemes
import group_arith
from enc_schemes import Ballot
from group_arith import GroupContext, GroupElement, Scalar


logger: logging.Logger = logging.getLogger(__name__)

VOTER_ID_LENGTH: int = 16
DIGEST_LENGTH: int = 32
CONFIRMATION_TAG: bytes = b"cast-as-intended/confirmation"
SIGNATURE_TAG: bytes = b"cast-as-intended/schnorr-signature"
BOARD_CHAIN_TAG: bytes = b"cast-as-intended/board"


def encode_voter_id(voter_id: str) -> bytes:
    """Fixed 16-byte voter identifier field: UTF-8, zero padded."""
    raw: bytes = voter_id.encode("utf-8")
    if not raw or len(raw) > VOTER_ID_LENGTH or b"\x00" in raw:
        raise cai_errors.BadLength(f"voter id \"{voter_id}\" must be 1-{VOTER_ID_LENGTH} UTF-8 bytes without NUL")
    return raw.ljust(VOTER_ID_LENGTH, b"\x00")


def decode_voter_id(field: bytes) -> str:
    if len(field) != VOTER_ID_LENGTH:
        raise cai_errors.BadLength(f"voter id field must be {VOTER_ID_LENGTH} bytes, got {len(field)}")
    try:
        return field.rstrip(b"\x00").decode("utf-8")
    except UnicodeDecodeError as decode_error:
        raise cai_errors.BadLength(f"voter id field {field.hex()} is not UTF-8") from decode_error


# ---- Schnorr signatures ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, slots=True)
class SigningKeyPair:
    signing: Scalar
    verification: GroupElement


@dataclasses.dataclass(frozen=True, slots=True)
class Signature:
    e: Scalar
    s: Scalar

    def encode(self) -> bytes:
        return self.e.encode() + self.s.encode()

    @classmethod
    def decode(cls, group: group_arith.PrimeOrderGroup, data: bytes) -> "Signature":
        scalar_length: int = group.params.scalar_length
        if len(data) != 2 * scalar_length:
            raise cai_errors.BadLength(f"signature must be {2 * scalar_length} bytes, got {len(data)}")
        return cls(group.decode_scalar(data[:scalar_length]), group.decode_scalar(data[scalar_length:]))


def signing_keygen(context: GroupContext, rng: group_arith.EntropySource) -> SigningKeyPair:
    signing: Scalar = context.random_scalar(rng)
    return SigningKeyPair(signing=signing, verification=context.exp(context.g, signing))


def _signature_challenge(group: group_arith.PrimeOrderGroup,
                         nonce_commitment: GroupElement,
                         verification: GroupElement,
                         message: bytes) -> Scalar:
    return group.hash_to_scalar(SIGNATURE_TAG, nonce_commitment.encode(), verification.encode(), message)


def schnorr_sign(context: GroupContext,
                 key: SigningKeyPair,
                 message: bytes,
                 rng: group_arith.EntropySource) -> Signature:
    nonce: Scalar = context.random_scalar(rng)
    nonce_commitment: GroupElement = context.exp(context.g, nonce)
    e: Scalar = _signature_challenge(context.group, nonce_commitment, key.verification, message)
    return Signature(e=e, s=nonce + e * key.signing)


def schnorr_verify(group: group_arith.PrimeOrderGroup,
                   verification: GroupElement,
                   message: bytes,
                   signature: Signature) -> bool:
    # Signature checks run on their own context; the audit exponentiation budget does not include them
    context: GroupContext = GroupContext(group)
    nonce_commitment: GroupElement = context.exp(context.g, signature.s) / context.exp(verification, signature.e)
    return _signature_challenge(group, nonce_commitment, verification, message) == signature.e


# ---- Confirmations --------------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, slots=True)
class Confirmation:
    voter_id: str
    digest: bytes
    signature: Signature

    def signed_message(self) -> bytes:
        return confirmation_message(self.voter_id, self.digest)

    def encode(self) -> bytes:
        return encode_voter_id(self.voter_id) + self.digest + self.signature.encode()

    @classmethod
    def decode(cls, group: group_arith.PrimeOrderGroup, data: bytes) -> "Confirmation":
        expected_length: int = VOTER_ID_LENGTH + DIGEST_LENGTH + 2 * group.params.scalar_length
        if len(data) != expected_length:
            raise cai_errors.BadLength(f"confirmation must be {expected_length} bytes, got {len(data)}")
        return cls(voter_id=decode_voter_id(data[:VOTER_ID_LENGTH]),
                   digest=data[VOTER_ID_LENGTH:VOTER_ID_LENGTH + DIGEST_LENGTH],
                   signature=Signature.decode(group, data[VOTER_ID_LENGTH + DIGEST_LENGTH:]))


def confirmation_message(voter_id: str, digest: bytes) -> bytes:
    return CONFIRMATION_TAG + encode_voter_id(voter_id) + digest


def sign_confirmation(context: GroupContext,
                      key: SigningKeyPair,
                      voter_id: str,
                      c: Ballot,
                      rng: group_arith.EntropySource) -> Confirmation:
    digest: bytes = enc_schemes.ballot_digest(c)
    signature: Signature = schnorr_sign(context, key, confirmation_message(voter_id, digest), rng)
    return Confirmation(voter_id=voter_id, digest=digest, signature=signature)


def verify_confirmation(group: group_arith.PrimeOrderGroup,
                        verification: GroupElement,
                        confirmation: Confirmation,
                        c: Ballot | None = None) -> bool:
    """Signature check, plus the ballot binding when the ballot itself is at hand."""
    if c is not None and enc_schemes.ballot_digest(c) != confirmation.digest:
        return False
    return schnorr_verify(group, verification, confirmation.signed_message(), confirmation.signature)


# ---- Bulletin board -------------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, slots=True)
class BallotRecord:
    voter_id: str
    c: Ballot
    confirmation: Confirmation

    def encode(self) -> bytes:
        return encode_voter_id(self.voter_id) + enc_schemes.encode_ballot(self.c) + self.confirmation.signature.encode()

    @classmethod
    def decode(cls, group: group_arith.PrimeOrderGroup, data: bytes) -> "BallotRecord":
        signature_length: int = 2 * group.params.scalar_length
        if len(data) <= VOTER_ID_LENGTH + signature_length:
            raise cai_errors.BadLength(f"ballot record of {len(data)} bytes is too short")
        voter_id: str = decode_voter_id(data[:VOTER_ID_LENGTH])
        c: Ballot = enc_schemes.decode_ballot(group, data[VOTER_ID_LENGTH:-signature_length])
        signature: Signature = Signature.decode(group, data[-signature_length:])
        return cls(voter_id=voter_id,
                   c=c,
                   confirmation=Confirmation(voter_id, enc_schemes.ballot_digest(c), signature))


@dataclasses.dataclass(frozen=True, slots=True)
class BulletinBoard:
    """Append-only list of ballot records; ``bb_publish`` returns a new board."""
    group: group_arith.PrimeOrderGroup
    verification: GroupElement
    allow_replacement: bool = False
    records: tuple[BallotRecord, ...] = ()
    chain: tuple[bytes, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def prefix_digest(self, length: int | None = None) -> bytes:
        """Hash-chain head after the first ``length`` records (all of them by default)."""
        if length is None:
            length = len(self.records)
        if not 0 <= length <= len(self.records):
            raise IndexError(f"board has {len(self.records)} records, no prefix of length {length}")
        return self.chain[length - 1] if length else hashlib.sha256(BOARD_CHAIN_TAG).digest()

    def lookup(self, voter_id: str) -> BallotRecord | None:
        """The live record for a voter: the latest one published."""
        for record in reversed(self.records):
            if record.voter_id == voter_id:
                return record
        return None

    def live_records(self) -> list[BallotRecord]:
        latest_position: dict[str, int] = {record.voter_id: position for position, record in enumerate(self.records)}
        return [self.records[position] for position in sorted(latest_position.values())]

    def verify_records(self) -> None:
        """Re-check every published signature; raises ``InvalidSignature`` on the first bad record."""
        for position, record in enumerate(self.records):
            if not verify_confirmation(self.group, self.verification, record.confirmation, record.c):
                raise cai_errors.InvalidSignature(
                    f"record {position} for voter \"{record.voter_id}\" does not carry a valid server signature")

    def export_lines(self) -> list[str]:
        return [base64.b64encode(record.encode()).decode("ascii") for record in self.records]

    @classmethod
    def from_export(cls,
                    group: group_arith.PrimeOrderGroup,
                    verification: GroupElement,
                    lines: typing.Iterable[str],
                    allow_replacement: bool = False) -> "BulletinBoard":
        board: BulletinBoard = cls(group=group, verification=verification, allow_replacement=allow_replacement)
        for line_number, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                record_bytes: bytes = base64.b64decode(line.strip(), validate=True)
            except binascii.Error as decode_error:
                raise cai_errors.BadLength(f"board line {line_number} is not base64") from decode_error
            board = bb_publish(board, BallotRecord.decode(group, record_bytes))
        return board


def bb_publish(board: BulletinBoard, record: BallotRecord) -> BulletinBoard:
    if record.confirmation.voter_id != record.voter_id or \
            not verify_confirmation(board.group, board.verification, record.confirmation, record.c):
        raise cai_errors.InvalidSignature(f"record for voter \"{record.voter_id}\" is not signed by the voting server")

    if not board.allow_replacement and board.lookup(record.voter_id) is not None:
        raise cai_errors.DuplicateVoter(f"voter \"{record.voter_id}\" already has a ballot on the board")

    link: bytes = hashlib.sha256(board.prefix_digest() + record.encode()).digest()
    logger.debug("published ballot for voter %s at position %d", record.voter_id, len(board.records))
    return dataclasses.replace(board, records=board.records + (record,), chain=board.chain + (link,))


# ---- Receipt checks and tally ---------------------------------------------------------------------

class ReceiptVerdict(enum.Enum):
    ACCEPT                      = "accept"
    REJECT                      = "reject"
    SERVER_MISBEHAVIOR_EVIDENCE = "ServerMisbehaviorEvidence"


def receipt_check(board: BulletinBoard, confirmation: Confirmation, expected_c: Ballot) -> ReceiptVerdict:
    if not verify_confirmation(board.group, board.verification, confirmation, expected_c):
        logger.warning("confirmation for voter %s does not verify against the expected ballot",
                       confirmation.voter_id)
        return ReceiptVerdict.REJECT

    record: BallotRecord | None = board.lookup(confirmation.voter_id)
    if record is None or enc_schemes.ballot_digest(record.c) != confirmation.digest:
        logger.warning("server signed a ballot for voter %s that is not on the board", confirmation.voter_id)
        return ReceiptVerdict.SERVER_MISBEHAVIOR_EVIDENCE

    return ReceiptVerdict.ACCEPT


def naive_tally(context: GroupContext,
                sk: Scalar,
                board: BulletinBoard,
                encoding: enc_schemes.VoteEncoding) -> dict[str, int]:
    """Trusted decryption of every live ballot; each ciphertext of a multi-element ballot counts once."""
    counts: collections.Counter[str] = collections.Counter()
    for record in board.live_records():
        for ciphertext in record.c:
            counts[encoding.decode(enc_schemes.dec(context, sk, ciphertext))] += 1
    return dict(counts)
