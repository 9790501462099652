import base64

import pytest

import cai_errors
import enc_schemes
import verifiability
from enc_schemes import Ciphertext, VoteEncoding
from group_arith import PRODUCTION_GROUP, TINY_GROUP, GroupContext, ScriptedEntropy, SeededEntropy
from verifiability import BallotRecord, BulletinBoard, ReceiptVerdict, SigningKeyPair

from conftest import tiny_element, tiny_scalar


# Signature checks in the tiny group accept forgeries with probability 1/11, so these run on P-256
GROUP = PRODUCTION_GROUP
ALPHABET: tuple[str, ...] = ("yes", "no", "abstain")


def _signing_key(seed: int = 5) -> SigningKeyPair:
    return verifiability.signing_keygen(GroupContext(GROUP), SeededEntropy(seed))


def _ballot(context: GroupContext, pk, label: str, seed: int) -> enc_schemes.Ballot:
    encoding: VoteEncoding = VoteEncoding(GROUP, ALPHABET)
    return (enc_schemes.enc(context, pk, encoding.encode(context, label), context.random_scalar(SeededEntropy(seed))),)


def _record(key: SigningKeyPair, voter_id: str, c: enc_schemes.Ballot, seed: int = 1) -> BallotRecord:
    confirmation = verifiability.sign_confirmation(GroupContext(GROUP), key, voter_id, c, SeededEntropy(seed))
    return BallotRecord(voter_id=voter_id, c=c, confirmation=confirmation)


@pytest.fixture
def keys() -> enc_schemes.KeyPair:
    return enc_schemes.keygen(GroupContext(GROUP), SeededEntropy(2))


def test_signatures_verify_only_under_the_signing_key():
    key: SigningKeyPair = _signing_key()
    other: SigningKeyPair = _signing_key(6)
    signature = verifiability.schnorr_sign(GroupContext(GROUP), key, b"ballot digest", SeededEntropy(9))

    assert verifiability.schnorr_verify(GROUP, key.verification, b"ballot digest", signature)
    assert not verifiability.schnorr_verify(GROUP, other.verification, b"ballot digest", signature)
    assert not verifiability.schnorr_verify(GROUP, key.verification, b"ballot digesT", signature)
    assert verifiability.Signature.decode(GROUP, signature.encode()) == signature


def test_seeded_signatures_are_deterministic():
    key: SigningKeyPair = verifiability.signing_keygen(GroupContext(TINY_GROUP), ScriptedEntropy([3]))
    assert key.verification == tiny_element(8)

    first = verifiability.schnorr_sign(GroupContext(TINY_GROUP), key, b"message", ScriptedEntropy([4]))
    second = verifiability.schnorr_sign(GroupContext(TINY_GROUP), key, b"message", ScriptedEntropy([4]))
    assert first == second
    assert first.s == tiny_scalar(4) + first.e * tiny_scalar(3)
    assert verifiability.schnorr_verify(TINY_GROUP, key.verification, b"message", first)


def test_confirmation_binds_the_ballot(keys):
    context: GroupContext = GroupContext(GROUP)
    key: SigningKeyPair = _signing_key()
    c = _ballot(context, keys.pk, "yes", 1)
    confirmation = verifiability.sign_confirmation(context, key, "voter-1", c, SeededEntropy(3))

    assert verifiability.verify_confirmation(GROUP, key.verification, confirmation, c)
    assert verifiability.verify_confirmation(GROUP, key.verification, confirmation)
    assert not verifiability.verify_confirmation(GROUP, key.verification, confirmation, _ballot(context, keys.pk, "yes", 2))
    assert verifiability.Confirmation.decode(GROUP, confirmation.encode()) == confirmation


@pytest.mark.parametrize("voter_id", ["", "x" * 17, "a\x00b"])
def test_voter_id_field_limits(voter_id):
    with pytest.raises(cai_errors.BadLength):
        verifiability.encode_voter_id(voter_id)


def test_voter_id_field_round_trip():
    field: bytes = verifiability.encode_voter_id("zoë")
    assert len(field) == 16
    assert verifiability.decode_voter_id(field) == "zoë"


def test_publish_and_lookup(keys):
    context: GroupContext = GroupContext(GROUP)
    key: SigningKeyPair = _signing_key()
    board: BulletinBoard = BulletinBoard(group=GROUP, verification=key.verification)
    record: BallotRecord = _record(key, "voter-1", _ballot(context, keys.pk, "no", 1))

    published: BulletinBoard = verifiability.bb_publish(board, record)
    assert len(board) == 0
    assert len(published) == 1
    assert published.lookup("voter-1") == record
    assert published.lookup("voter-2") is None

    with pytest.raises(cai_errors.DuplicateVoter):
        verifiability.bb_publish(published, _record(key, "voter-1", _ballot(context, keys.pk, "yes", 2)))


def test_replacement_keeps_only_the_latest_ballot(keys):
    context: GroupContext = GroupContext(GROUP)
    key: SigningKeyPair = _signing_key()
    board: BulletinBoard = BulletinBoard(group=GROUP, verification=key.verification, allow_replacement=True)
    first: BallotRecord = _record(key, "voter-1", _ballot(context, keys.pk, "no", 1))
    second: BallotRecord = _record(key, "voter-1", _ballot(context, keys.pk, "yes", 2))
    board = verifiability.bb_publish(verifiability.bb_publish(board, first), second)

    assert len(board) == 2
    assert board.lookup("voter-1") == second
    assert board.live_records() == [second]
    assert verifiability.naive_tally(context, keys.sk, board, VoteEncoding(GROUP, ALPHABET)) == {"yes": 1}


def test_publish_rejects_records_not_signed_by_the_server(keys):
    context: GroupContext = GroupContext(GROUP)
    key: SigningKeyPair = _signing_key()
    board: BulletinBoard = BulletinBoard(group=GROUP, verification=key.verification)

    foreign: BallotRecord = _record(_signing_key(6), "voter-1", _ballot(context, keys.pk, "no", 1))
    with pytest.raises(cai_errors.InvalidSignature):
        verifiability.bb_publish(board, foreign)

    honest: BallotRecord = _record(key, "voter-1", _ballot(context, keys.pk, "no", 1))
    swapped = BallotRecord(voter_id="voter-1", c=_ballot(context, keys.pk, "yes", 1), confirmation=honest.confirmation)
    with pytest.raises(cai_errors.InvalidSignature):
        verifiability.bb_publish(board, swapped)


def test_board_prefix_digests_are_stable():
    context: GroupContext = GroupContext(TINY_GROUP)
    key: SigningKeyPair = verifiability.signing_keygen(context, SeededEntropy(5))
    board: BulletinBoard = BulletinBoard(group=TINY_GROUP, verification=key.verification)
    empty_head: bytes = board.prefix_digest()

    heads: list[bytes] = []
    for index in range(1000):
        c = (Ciphertext(tiny_element(4), tiny_element(3)),)
        confirmation = verifiability.sign_confirmation(context, key, f"voter-{index:04d}", c, SeededEntropy(index))
        board = verifiability.bb_publish(board, BallotRecord(f"voter-{index:04d}", c, confirmation))
        heads.append(board.prefix_digest())

    assert len(board) == 1000
    assert board.prefix_digest(0) == empty_head
    assert all(board.prefix_digest(length) == heads[length - 1] for length in (1, 10, 500, 1000))
    assert len(set(heads)) == 1000
    with pytest.raises(IndexError):
        board.prefix_digest(1001)


def test_export_round_trip_and_tampering(keys):
    context: GroupContext = GroupContext(GROUP)
    key: SigningKeyPair = _signing_key()
    board: BulletinBoard = BulletinBoard(group=GROUP, verification=key.verification)
    for index, label in enumerate(("yes", "no", "yes")):
        board = verifiability.bb_publish(board, _record(key, f"voter-{index}", _ballot(context, keys.pk, label, index)))

    lines: list[str] = board.export_lines()
    restored: BulletinBoard = BulletinBoard.from_export(GROUP, key.verification, lines)
    assert restored.records == board.records
    assert restored.prefix_digest() == board.prefix_digest()
    restored.verify_records()

    record: BallotRecord = BallotRecord.decode(GROUP, base64.b64decode(lines[1]))
    reblinded = enc_schemes.rerand_ballot(context, keys.pk, record.c, (GROUP.scalar(1),))
    tampered = BallotRecord(record.voter_id, reblinded, record.confirmation).encode()
    with pytest.raises(cai_errors.InvalidSignature):
        BulletinBoard.from_export(GROUP, key.verification,
                                  [lines[0], base64.b64encode(tampered).decode(), lines[2]])

    with pytest.raises(cai_errors.BadLength):
        BulletinBoard.from_export(GROUP, key.verification, ["not base64!"])


def test_receipt_check_verdicts(keys):
    context: GroupContext = GroupContext(GROUP)
    key: SigningKeyPair = _signing_key()
    board: BulletinBoard = BulletinBoard(group=GROUP, verification=key.verification)
    c = _ballot(context, keys.pk, "abstain", 1)
    record: BallotRecord = _record(key, "voter-1", c)

    assert verifiability.receipt_check(board, record.confirmation, c) is ReceiptVerdict.SERVER_MISBEHAVIOR_EVIDENCE
    board = verifiability.bb_publish(board, record)
    assert verifiability.receipt_check(board, record.confirmation, c) is ReceiptVerdict.ACCEPT
    assert verifiability.receipt_check(board, record.confirmation,
                                       _ballot(context, keys.pk, "abstain", 2)) is ReceiptVerdict.REJECT

    foreign = _record(_signing_key(6), "voter-1", c).confirmation
    assert verifiability.receipt_check(board, foreign, c) is ReceiptVerdict.REJECT
    assert ReceiptVerdict.SERVER_MISBEHAVIOR_EVIDENCE.value == "ServerMisbehaviorEvidence"


def test_tally_counts_every_live_ballot(keys):
    context: GroupContext = GroupContext(GROUP)
    key: SigningKeyPair = _signing_key()
    board: BulletinBoard = BulletinBoard(group=GROUP, verification=key.verification)
    encoding: VoteEncoding = VoteEncoding(GROUP, ALPHABET)

    assert verifiability.naive_tally(context, keys.sk, board, encoding) == {}

    for index, label in enumerate(("yes", "no", "yes", "yes", "abstain")):
        board = verifiability.bb_publish(board, _record(key, f"voter-{index}", _ballot(context, keys.pk, label, index)))
    assert verifiability.naive_tally(context, keys.sk, board, encoding) == {"yes": 3, "no": 1, "abstain": 1}


def test_tally_ignores_rerandomization(keys):
    context: GroupContext = GroupContext(GROUP)
    key: SigningKeyPair = _signing_key()
    encoding: VoteEncoding = VoteEncoding(GROUP, ALPHABET)
    c = _ballot(context, keys.pk, "no", 4)
    blinded = enc_schemes.rerand_ballot(context, keys.pk, c, (context.random_scalar(SeededEntropy(8)),))

    tallies: list[dict[str, int]] = []
    for ballot in (c, blinded):
        board: BulletinBoard = BulletinBoard(group=GROUP, verification=key.verification)
        board = verifiability.bb_publish(board, _record(key, "voter-1", ballot))
        tallies.append(verifiability.naive_tally(context, keys.sk, board, encoding))
    assert tallies == [{"no": 1}, {"no": 1}]


def test_tally_rejects_ballots_outside_the_alphabet(keys):
    context: GroupContext = GroupContext(GROUP)
    key: SigningKeyPair = _signing_key()
    outside = (enc_schemes.enc(context, keys.pk, GROUP.identity(), GROUP.scalar(7)),)
    board: BulletinBoard = verifiability.bb_publish(BulletinBoard(group=GROUP, verification=key.verification),
                                                    _record(key, "voter-1", outside))
    with pytest.raises(cai_errors.UnknownVote):
        verifiability.naive_tally(context, keys.sk, board, VoteEncoding(GROUP, ALPHABET))
