"""Cast-as-intended ballot submission and second-device audit.

Roles: the voter, the voting device (VD) that encrypts, the voting server (VS) that blinds and
proves, and the audit device (AD) that scans the voter's QR payload and verifies.

Submission:
    VD -> VS   c = Enc(pk, v; r)
    VS -> VD   x, confirmation s                 VS keeps (c, x)
    VD         r* = x + r, shown to the voter as a QR payload bound to digest(c)

Audit:
    AD -> VS   audit request for the voter
    VS -> AD   c, c* = ReRand(pk, c; x), s, k
    AD <-> VS  committed-challenge proof that c* re-randomizes c (one run per ballot element)
    AD         shows v* = decode(Dec'(pk, c*, r*)); the voter accepts iff v* is the intended vote
"""
import base64
import binascii
import dataclasses
import enum
import logging
import struct
import typing

import cai_errors
import enc_schemes
import group_arith
import verifiability
import zk_protocols
from enc_schemes import Ballot, Ciphertext
from group_arith import GroupContext, GroupElement, Scalar
from verifiability import Confirmation, SigningKeyPair
from zk_protocols import DleqStatement, DleqTranscript, ProverState, VerifierState


logger: logging.Logger = logging.getLogger(__name__)

QR_VERSION: int = 0x01
QR_ARMOR_PREFIX: str = "CAI1-"
ELECTION_ID_LENGTH: int = 16
SESSION_TOKEN_LENGTH: int = 16

type DisplayedVote = tuple[str | int, ...]


@dataclasses.dataclass(frozen=True, slots=True)
class ElectionPublic:
    """Everything a device needs to know about the election: all of it public."""
    election_id: bytes
    pk: GroupElement
    encoding: enc_schemes.VoteEncoding
    server_verification: GroupElement
    ballot_length: int = 1

    def __post_init__(self) -> None:
        if len(self.election_id) != ELECTION_ID_LENGTH:
            raise cai_errors.BadLength(f"election id must be {ELECTION_ID_LENGTH} bytes")
        if self.ballot_length < 1:
            raise cai_errors.ConfigError(f"ballot length must be at least 1, got {self.ballot_length}")

    @property
    def group(self) -> group_arith.PrimeOrderGroup:
        return self.pk.group


@dataclasses.dataclass(frozen=True, slots=True)
class RoleContexts:
    """One exponentiation counter per party."""
    device: GroupContext
    server: GroupContext
    audit: GroupContext

    @classmethod
    def fresh(cls, group: group_arith.PrimeOrderGroup) -> "RoleContexts":
        return cls(GroupContext(group), GroupContext(group), GroupContext(group))

    def counts(self) -> dict[str, int]:
        return {
            "device": self.device.exponentiations,
            "server": self.server.exponentiations,
            "audit":  self.audit.exponentiations,
        }


@dataclasses.dataclass(frozen=True, slots=True)
class VoterIntent:
    voter_id: str
    v: tuple[str, ...]

    def __post_init__(self) -> None:
        if isinstance(self.v, str):
            object.__setattr__(self, "v", (self.v,))


@dataclasses.dataclass(frozen=True, slots=True)
class DeviceBallotState:
    intent: VoterIntent
    r: tuple[Scalar, ...]
    c: Ballot
    r_star: tuple[Scalar, ...] | None = None
    confirmation: Confirmation | None = None


@dataclasses.dataclass(frozen=True, slots=True)
class AuditSession:
    voter_id: str
    c: Ballot
    x: tuple[Scalar, ...]
    token: bytes
    confirmation: Confirmation
    commitment_key: zk_protocols.CommitmentKey


# ---- Messages -------------------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, slots=True)
class SubmitMsg:
    voter_id: str
    c: Ballot

    def encode(self) -> bytes:
        return verifiability.encode_voter_id(self.voter_id) + enc_schemes.encode_ballot(self.c)

    @classmethod
    def decode(cls, group: group_arith.PrimeOrderGroup, data: bytes) -> "SubmitMsg":
        return cls(voter_id=verifiability.decode_voter_id(data[:verifiability.VOTER_ID_LENGTH]),
                   c=enc_schemes.decode_ballot(group, data[verifiability.VOTER_ID_LENGTH:]))


@dataclasses.dataclass(frozen=True, slots=True)
class BlindMsg:
    token: bytes
    x: tuple[Scalar, ...]
    confirmation: Confirmation

    def encode(self) -> bytes:
        return self.token + self.confirmation.encode() + b"".join(x.encode() for x in self.x)

    @classmethod
    def decode(cls, group: group_arith.PrimeOrderGroup, data: bytes) -> "BlindMsg":
        scalar_length: int = group.params.scalar_length
        confirmation_end: int = (SESSION_TOKEN_LENGTH + verifiability.VOTER_ID_LENGTH
                                 + verifiability.DIGEST_LENGTH + 2 * scalar_length)
        blinding: bytes = data[confirmation_end:]
        if len(data) < confirmation_end or not blinding or len(blinding) % scalar_length != 0:
            raise cai_errors.BadLength(f"blinding message of {len(data)} bytes has no whole list of factors")
        return cls(token=data[:SESSION_TOKEN_LENGTH],
                   x=tuple(group.decode_scalar(blinding[offset:offset + scalar_length])
                           for offset in range(0, len(blinding), scalar_length)),
                   confirmation=Confirmation.decode(group, data[SESSION_TOKEN_LENGTH:confirmation_end]))


@dataclasses.dataclass(frozen=True, slots=True)
class AuditRequest:
    election_id: bytes
    voter_id: str

    def encode(self) -> bytes:
        return self.election_id + verifiability.encode_voter_id(self.voter_id)

    @classmethod
    def decode(cls, data: bytes) -> "AuditRequest":
        if len(data) != ELECTION_ID_LENGTH + verifiability.VOTER_ID_LENGTH:
            raise cai_errors.BadLength(f"audit request must be 32 bytes, got {len(data)}")
        return cls(data[:ELECTION_ID_LENGTH], verifiability.decode_voter_id(data[ELECTION_ID_LENGTH:]))


@dataclasses.dataclass(frozen=True, slots=True)
class AuditOffer:
    c: Ballot
    c_star: Ballot
    confirmation: Confirmation
    k: GroupElement

    def encode(self) -> bytes:
        return (self.k.encode() + self.confirmation.encode()
                + enc_schemes.encode_ballot(self.c) + enc_schemes.encode_ballot(self.c_star))

    @classmethod
    def decode(cls, group: group_arith.PrimeOrderGroup, data: bytes) -> "AuditOffer":
        element_length: int = group.params.element_length
        confirmation_end: int = (element_length + verifiability.VOTER_ID_LENGTH
                                 + verifiability.DIGEST_LENGTH + 2 * group.params.scalar_length)
        ballots: bytes = data[confirmation_end:]
        if len(data) < confirmation_end or len(ballots) % (4 * element_length) != 0:
            raise cai_errors.BadLength(f"audit offer of {len(data)} bytes does not hold two equal ballots")
        half: int = len(ballots) // 2
        return cls(c=enc_schemes.decode_ballot(group, ballots[:half]),
                   c_star=enc_schemes.decode_ballot(group, ballots[half:]),
                   confirmation=Confirmation.decode(group, data[element_length:confirmation_end]),
                   k=group.decode_element(data[:element_length]))


@dataclasses.dataclass(frozen=True, slots=True)
class ZkBatch:
    """One zero-knowledge message per ballot element, sent as a single round."""
    messages: tuple[zk_protocols.ZkMessage, ...]

    def encode(self) -> bytes:
        encoded: list[bytes] = [message.encode() for message in self.messages]
        return struct.pack(">H", len(encoded)) + b"".join(struct.pack(">H", len(part)) + part for part in encoded)

    @classmethod
    def decode(cls, group: group_arith.PrimeOrderGroup, data: bytes) -> "ZkBatch":
        try:
            (count,) = struct.unpack_from(">H", data, 0)
            offset: int = 2
            messages: list[zk_protocols.ZkMessage] = []
            for _ in range(count):
                (length,) = struct.unpack_from(">H", data, offset)
                offset += 2
                if offset + length > len(data):
                    raise cai_errors.BadLength("zero-knowledge batch truncated")
                messages.append(zk_protocols.decode_zk_message(group, data[offset:offset + length]))
                offset += length
        except struct.error as unpack_error:
            raise cai_errors.BadLength("zero-knowledge batch truncated") from unpack_error
        if offset != len(data):
            raise cai_errors.BadLength(f"{len(data) - offset} trailing bytes after zero-knowledge batch")
        return cls(tuple(messages))


# ---- QR payload -----------------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, slots=True)
class QrPayload:
    election_id: bytes
    voter_id: str
    r_star: tuple[Scalar, ...]
    digest: bytes

    def encode(self) -> bytes:
        return (bytes([QR_VERSION]) + self.election_id + verifiability.encode_voter_id(self.voter_id)
                + b"".join(r.encode() for r in self.r_star) + self.digest)

    @classmethod
    def decode(cls, group: group_arith.PrimeOrderGroup, data: bytes) -> "QrPayload":
        header_length: int = 1 + ELECTION_ID_LENGTH + verifiability.VOTER_ID_LENGTH
        scalar_length: int = group.params.scalar_length
        scalars_length: int = len(data) - header_length - verifiability.DIGEST_LENGTH

        if len(data) < 1:
            raise cai_errors.BadLength("empty QR payload")
        if data[0] != QR_VERSION:
            raise cai_errors.UnknownVersion(f"QR payload version 0x{data[0]:02x} is not supported")
        if scalars_length <= 0 or scalars_length % scalar_length != 0:
            raise cai_errors.BadLength(f"QR payload of {len(data)} bytes does not hold a whole number of scalars")

        scalars: bytes = data[header_length:header_length + scalars_length]
        return cls(election_id=data[1:1 + ELECTION_ID_LENGTH],
                   voter_id=verifiability.decode_voter_id(data[1 + ELECTION_ID_LENGTH:header_length]),
                   r_star=tuple(group.decode_scalar(scalars[offset:offset + scalar_length])
                                for offset in range(0, scalars_length, scalar_length)),
                   digest=data[header_length + scalars_length:])

    def armor(self) -> str:
        return QR_ARMOR_PREFIX + base64.b32encode(self.encode()).decode("ascii").rstrip("=")

    @classmethod
    def from_armor(cls, group: group_arith.PrimeOrderGroup, text: str) -> "QrPayload":
        text = text.strip()
        if not text.startswith(QR_ARMOR_PREFIX):
            raise cai_errors.UnknownVersion(f"QR text does not start with {QR_ARMOR_PREFIX}")
        body: str = text[len(QR_ARMOR_PREFIX):]
        try:
            data: bytes = base64.b32decode(body + "=" * (-len(body) % 8))
        except binascii.Error as decode_error:
            raise cai_errors.BadLength("QR text is not valid base32") from decode_error
        return cls.decode(group, data)


# ---- Outcomes and transcripts ---------------------------------------------------------------------

class Verdict(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"


@dataclasses.dataclass(frozen=True, slots=True)
class AuditTranscript:
    c: Ballot
    c_star: Ballot
    r_star: tuple[Scalar, ...]
    proofs: tuple[DleqTranscript, ...]

    def encode(self) -> bytes:
        return (enc_schemes.encode_ballot(self.c) + enc_schemes.encode_ballot(self.c_star)
                + b"".join(r.encode() for r in self.r_star) + b"".join(proof.encode() for proof in self.proofs))


@dataclasses.dataclass(frozen=True, slots=True)
class AuditOutcome:
    verdict: Verdict
    displayed_vote: DisplayedVote | None = None
    reason: str | None = None
    transcript: AuditTranscript | None = None

    def __post_init__(self) -> None:
        if (self.verdict is Verdict.ACCEPT) != (self.displayed_vote is not None):
            raise ValueError("an audit accepts exactly when it has a vote to display")

    @property
    def accepted(self) -> bool:
        return self.verdict is Verdict.ACCEPT

    @classmethod
    def reject(cls, reason: str) -> "AuditOutcome":
        return cls(verdict=Verdict.REJECT, reason=reason)


def voter_accepts(intent: VoterIntent, outcome: AuditOutcome) -> bool:
    """The voter's own final check: the device displayed what the voter meant to cast."""
    return outcome.accepted and outcome.displayed_vote == intent.v


def rerandomization_statement(pk: GroupElement, c: Ciphertext, c_star: Ciphertext) -> DleqStatement:
    return DleqStatement(g=pk.group.generator(), h=pk, X=c_star.u / c.u, Y=c_star.w / c.w)


# ---- Voting device --------------------------------------------------------------------------------

def _encrypt_intent(context: GroupContext,
                    election: ElectionPublic,
                    intent: VoterIntent,
                    rng: group_arith.EntropySource) -> tuple[tuple[Scalar, ...], Ballot]:
    if len(intent.v) != election.ballot_length:
        raise cai_errors.BadLength(f"intent has {len(intent.v)} choices, ballot length is {election.ballot_length}")

    r: tuple[Scalar, ...] = tuple(context.random_scalar(rng) for _ in intent.v)
    c: Ballot = tuple(enc_schemes.enc(context, election.pk, election.encoding.encode(context, label), r_i)
                      for label, r_i in zip(intent.v, r))
    return r, c


def basic_submit(context: GroupContext,
                 election: ElectionPublic,
                 intent: VoterIntent,
                 rng: group_arith.EntropySource) -> SubmitMsg:
    """Plain encrypted submission with no audit support."""
    _, c = _encrypt_intent(context, election, intent, rng)
    return SubmitMsg(intent.voter_id, c)


def vd_cast(context: GroupContext,
            election: ElectionPublic,
            intent: VoterIntent,
            rng: group_arith.EntropySource) -> tuple[DeviceBallotState, SubmitMsg]:
    r, c = _encrypt_intent(context, election, intent, rng)
    logger.debug("voting device encrypted a %d-element ballot for %s", len(c), intent.voter_id)
    return DeviceBallotState(intent=intent, r=r, c=c), SubmitMsg(intent.voter_id, c)


def vd_finalize(context: GroupContext,
                election: ElectionPublic,
                state: DeviceBallotState,
                blind: BlindMsg) -> tuple[DeviceBallotState, QrPayload]:
    confirmation: Confirmation = blind.confirmation
    if confirmation.voter_id != state.intent.voter_id or \
            not verifiability.verify_confirmation(election.group, election.server_verification, confirmation, state.c):
        raise cai_errors.InvalidSignature("server confirmation does not sign the ballot this device cast")
    if len(blind.x) != len(state.r):
        raise cai_errors.BadLength(f"{len(blind.x)} blinding factors for a ballot of {len(state.r)} ciphertexts")

    r_star: tuple[Scalar, ...] = tuple(x + r for x, r in zip(blind.x, state.r))
    payload: QrPayload = QrPayload(election_id=election.election_id,
                                   voter_id=state.intent.voter_id,
                                   r_star=r_star,
                                   digest=enc_schemes.ballot_digest(state.c))
    return dataclasses.replace(state, r_star=r_star, confirmation=confirmation), payload


# ---- Voting server --------------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, slots=True)
class ServerAuditState:
    session: AuditSession
    c_star: Ballot
    provers: tuple[ProverState, ...]

    @property
    def done(self) -> bool:
        return all(prover.phase is zk_protocols.Phase.DONE for prover in self.provers)


def vs_receive_ballot(context: GroupContext,
                      election: ElectionPublic,
                      signing_key: SigningKeyPair,
                      submit: SubmitMsg,
                      rng: group_arith.EntropySource,
                      token_rng: group_arith.EntropySource,
                      existing: AuditSession | None = None,
                      allow_replacement: bool = False) -> tuple[AuditSession, BlindMsg]:
    if existing is not None and not allow_replacement:
        raise cai_errors.DuplicateBallot(f"voter \"{submit.voter_id}\" already cast a ballot")
    if len(submit.c) != election.ballot_length:
        raise cai_errors.BadLength(f"ballot has {len(submit.c)} ciphertexts, expected {election.ballot_length}")

    x: tuple[Scalar, ...] = tuple(context.random_scalar(rng) for _ in submit.c)
    commitment_key: zk_protocols.CommitmentKey = zk_protocols.new_commitment_key(context, rng)
    confirmation: Confirmation = verifiability.sign_confirmation(context, signing_key, submit.voter_id, submit.c, rng)
    token: bytes = token_rng.randbelow(1 << (8 * SESSION_TOKEN_LENGTH)).to_bytes(SESSION_TOKEN_LENGTH, "big")

    session: AuditSession = AuditSession(voter_id=submit.voter_id, c=submit.c, x=x, token=token,
                                         confirmation=confirmation, commitment_key=commitment_key)
    return session, BlindMsg(token=token, x=x, confirmation=confirmation)


def vs_audit_init(context: GroupContext,
                  election: ElectionPublic,
                  session: AuditSession | None,
                  rng: group_arith.EntropySource) -> tuple[ServerAuditState, AuditOffer]:
    if session is None:
        raise cai_errors.UnknownSession("no ballot has been cast for this voter")

    c_star: Ballot = enc_schemes.rerand_ballot(context, election.pk, session.c, session.x)
    provers: list[ProverState] = []
    for c_i, c_star_i, x_i in zip(session.c, c_star, session.x):
        prover, _ = zk_protocols.dleq_prover_start(context,
                                                   rerandomization_statement(election.pk, c_i, c_star_i),
                                                   zk_protocols.DleqWitness(x_i),
                                                   rng,
                                                   session.commitment_key)
        provers.append(prover)

    offer: AuditOffer = AuditOffer(c=session.c, c_star=c_star, confirmation=session.confirmation,
                                   k=session.commitment_key.k)
    return ServerAuditState(session=session, c_star=c_star, provers=tuple(provers)), offer


def vs_audit_step(context: GroupContext,
                  state: ServerAuditState,
                  batch: ZkBatch,
                  rng: group_arith.EntropySource) -> tuple[ServerAuditState, ZkBatch]:
    if len(batch.messages) != len(state.provers):
        raise cai_errors.BadLength(f"{len(batch.messages)} proof messages for {len(state.provers)} ballot elements")

    stepped: list[tuple[ProverState, zk_protocols.ZkMessage]] = [
        zk_protocols.dleq_prover_step(context, prover, message, rng)
        for prover, message in zip(state.provers, batch.messages)
    ]
    return (dataclasses.replace(state, provers=tuple(prover for prover, _ in stepped)),
            ZkBatch(tuple(reply for _, reply in stepped)))


class AuditChannel(typing.Protocol):
    """The audit device's connection to the voting server for one open audit."""

    def exchange(self, batch: ZkBatch) -> ZkBatch: ...

    def confirm(self, code: zk_protocols.VerdictMsg) -> None: ...


class VotingServer:
    """Session table plus the server half of every protocol step; keeps a log of received messages."""

    def __init__(self,
                 context: GroupContext,
                 election: ElectionPublic,
                 signing_key: SigningKeyPair,
                 rng: group_arith.EntropySource,
                 token_rng: group_arith.EntropySource | None = None,
                 allow_replacement: bool = False,
                 confirmation_codes: bool = False,
                 allow_recast_after_failed_audit: bool = False) -> None:
        self.context: GroupContext = context
        self.election: ElectionPublic = election
        self.signing_key: SigningKeyPair = signing_key
        self.rng: group_arith.EntropySource = rng
        self.token_rng: group_arith.EntropySource = token_rng if token_rng is not None else group_arith.SystemEntropy()
        self.allow_replacement: bool = allow_replacement
        self.confirmation_codes: bool = confirmation_codes
        self.allow_recast_after_failed_audit: bool = allow_recast_after_failed_audit
        self.sessions: dict[str, AuditSession] = {}
        self.audits: dict[str, ServerAuditState] = {}
        self.confirmed: dict[str, bool] = {}
        self.received_log: list[bytes] = []

    def receive_ballot(self, submit: SubmitMsg) -> BlindMsg:
        self.received_log.append(submit.encode())
        session, blind = vs_receive_ballot(self.context, self.election, self.signing_key, submit, self.rng,
                                           self.token_rng, self.sessions.get(submit.voter_id),
                                           self._accepts_recast(submit.voter_id))
        self.sessions[submit.voter_id] = session
        self.audits.pop(submit.voter_id, None)
        self.confirmed.pop(submit.voter_id, None)
        return blind

    def _accepts_recast(self, voter_id: str) -> bool:
        if self.allow_replacement:
            return True
        # An explicit reject code, not a missing one, reopens the ballot
        return self.allow_recast_after_failed_audit and self.confirmed.get(voter_id) is False

    def audit_offer(self, session: AuditSession) -> tuple[ServerAuditState, AuditOffer]:
        return vs_audit_init(self.context, self.election, session, self.rng)

    def open_audit(self, request: AuditRequest) -> AuditOffer:
        self.received_log.append(request.encode())
        if request.election_id != self.election.election_id:
            raise cai_errors.UnknownSession("audit request names a different election")

        state, offer = self.audit_offer(self.sessions.get(request.voter_id))
        self.audits[request.voter_id] = state
        logger.debug("opened audit for voter %s", request.voter_id)
        return offer

    def continue_audit(self, voter_id: str, batch: ZkBatch) -> ZkBatch:
        self.received_log.append(batch.encode())
        state: ServerAuditState | None = self.audits.get(voter_id)
        if state is None:
            raise cai_errors.UnknownSession(f"no audit open for voter \"{voter_id}\"")

        state, reply = vs_audit_step(self.context, state, batch, self.rng)
        if state.done:
            del self.audits[voter_id]
        else:
            self.audits[voter_id] = state
        return reply

    def receive_confirmation_code(self, voter_id: str, code: zk_protocols.VerdictMsg) -> None:
        self.received_log.append(code.encode())
        if not self.confirmation_codes:
            raise cai_errors.PhaseError("this election does not take confirmation codes")
        self.confirmed[voter_id] = code.accept

    def channel_for(self, voter_id: str) -> AuditChannel:
        return _ServerChannel(self, voter_id)


@dataclasses.dataclass(slots=True)
class _ServerChannel:
    server: VotingServer
    voter_id: str

    def exchange(self, batch: ZkBatch) -> ZkBatch:
        return self.server.continue_audit(self.voter_id, batch)

    def confirm(self, code: zk_protocols.VerdictMsg) -> None:
        self.server.receive_confirmation_code(self.voter_id, code)


# ---- Audit device ---------------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, slots=True)
class DeviceAuditState:
    payload: QrPayload
    offer: AuditOffer
    verifiers: tuple[VerifierState, ...]
    outcome: AuditOutcome | None = None


def ad_audit_start(context: GroupContext,
                   election: ElectionPublic,
                   payload: QrPayload,
                   offer: AuditOffer,
                   rng: group_arith.EntropySource) -> tuple[DeviceAuditState, ZkBatch]:
    """Checks the offer against the scanned payload and sends the challenge commitments."""
    if payload.election_id != election.election_id:
        raise cai_errors.HashMismatch("QR payload was issued for a different election")
    if enc_schemes.ballot_digest(offer.c) != payload.digest:
        raise cai_errors.HashMismatch("server offered a ballot other than the one the voter scanned")
    if not len(offer.c) == len(offer.c_star) == len(payload.r_star):
        raise cai_errors.BadLength("offer and QR payload disagree on the ballot length")
    if offer.confirmation.voter_id != payload.voter_id or \
            not verifiability.verify_confirmation(election.group, election.server_verification,
                                                  offer.confirmation, offer.c):
        raise cai_errors.InvalidSignature("offer carries no valid server confirmation for this ballot")

    verifiers: list[VerifierState] = []
    commits: list[zk_protocols.ZkMessage] = []
    for c_i, c_star_i in zip(offer.c, offer.c_star):
        verifier: VerifierState = zk_protocols.dleq_verifier_start(rerandomization_statement(election.pk, c_i, c_star_i))
        verifier, commit = zk_protocols.dleq_verifier_step(context, verifier, zk_protocols.CommitKeyMsg(offer.k), rng)
        verifiers.append(verifier)
        commits.append(commit)

    return DeviceAuditState(payload=payload, offer=offer, verifiers=tuple(verifiers)), ZkBatch(tuple(commits))


def ad_audit_step(context: GroupContext,
                  election: ElectionPublic,
                  state: DeviceAuditState,
                  batch: ZkBatch,
                  rng: group_arith.EntropySource) -> tuple[DeviceAuditState, ZkBatch | None]:
    """Feeds one server round; returns the next round to send, or None once the outcome is set."""
    if len(batch.messages) != len(state.verifiers):
        raise cai_errors.BadLength(f"{len(batch.messages)} proof messages for {len(state.verifiers)} ballot elements")

    stepped: list[tuple[VerifierState, zk_protocols.ZkMessage]] = [
        zk_protocols.dleq_verifier_step(context, verifier, message, rng)
        for verifier, message in zip(state.verifiers, batch.messages)
    ]
    verifiers: tuple[VerifierState, ...] = tuple(verifier for verifier, _ in stepped)
    state = dataclasses.replace(state, verifiers=verifiers)

    if not all(verifier.phase is zk_protocols.Phase.DONE for verifier in verifiers):
        return state, ZkBatch(tuple(reply for _, reply in stepped))

    if not all(verifier.accept for verifier in verifiers):
        raise cai_errors.ZkpRejected("server could not prove that c* re-randomizes the cast ballot")

    displayed: DisplayedVote = tuple(
        election.encoding.decode(enc_schemes.special_dec(context, election.pk, c_star_i, r_star_i))
        for c_star_i, r_star_i in zip(state.offer.c_star, state.payload.r_star))
    transcript: AuditTranscript = AuditTranscript(c=state.offer.c, c_star=state.offer.c_star,
                                                  r_star=state.payload.r_star,
                                                  proofs=tuple(verifier.transcript() for verifier in verifiers))
    outcome: AuditOutcome = AuditOutcome(verdict=Verdict.ACCEPT, displayed_vote=displayed, transcript=transcript)
    return dataclasses.replace(state, outcome=outcome), None


def ad_audit(context: GroupContext,
             election: ElectionPublic,
             payload: QrPayload,
             offer: AuditOffer,
             channel: AuditChannel,
             rng: group_arith.EntropySource,
             confirmation_codes: bool = False,
             intent: VoterIntent | None = None) -> AuditOutcome:
    """Full audit-device run. Failures come back as a rejecting outcome carrying the reason.

    With confirmation codes on, the code carries the voter's own verdict: accept only when the
    displayed vote matches ``intent``, reject otherwise or when the audit failed. No code is sent
    when the voter never compared (``intent`` is None).
    """
    try:
        state, outgoing = ad_audit_start(context, election, payload, offer, rng)
        while outgoing is not None:
            state, outgoing = ad_audit_step(context, election, state, channel.exchange(outgoing), rng)
    except cai_errors.CastAsIntendedError as audit_error:
        logger.warning("audit for voter %s rejected: %s (%s)", payload.voter_id, audit_error.reason, audit_error)
        outcome: AuditOutcome = AuditOutcome.reject(audit_error.reason)
    else:
        outcome = state.outcome

    if confirmation_codes and intent is not None:
        _send_confirmation_code(channel, payload.voter_id, voter_accepts(intent, outcome))
    return outcome


def _send_confirmation_code(channel: AuditChannel, voter_id: str, accept: bool) -> None:
    try:
        channel.confirm(zk_protocols.VerdictMsg(accept))
    except cai_errors.CastAsIntendedError as code_error:
        logger.warning("confirmation code for voter %s was not delivered: %s", voter_id, code_error.reason)


def verify_audit_transcript(context: GroupContext,
                            election: ElectionPublic,
                            transcript: AuditTranscript) -> AuditOutcome:
    """What an honest audit device concludes from a complete (possibly simulated) transcript."""
    try:
        for c_i, c_star_i, proof in zip(transcript.c, transcript.c_star, transcript.proofs, strict=True):
            if not zk_protocols.verify_transcript(context, rerandomization_statement(election.pk, c_i, c_star_i), proof):
                raise cai_errors.ZkpRejected("transcript does not verify")
        displayed: DisplayedVote = tuple(
            election.encoding.decode(enc_schemes.special_dec(context, election.pk, c_star_i, r_star_i))
            for c_star_i, r_star_i in zip(transcript.c_star, transcript.r_star, strict=True))
    except ValueError as transcript_error:
        reason: str = getattr(transcript_error, "reason", "BadLength")
        return AuditOutcome.reject(reason)
    return AuditOutcome(verdict=Verdict.ACCEPT, displayed_vote=displayed, transcript=transcript)


# ---- Simulators -----------------------------------------------------------------------------------

def sim_cai_transcript(context: GroupContext,
                       election: ElectionPublic,
                       claimed_vote: tuple[str, ...],
                       c: Ballot,
                       rng: group_arith.EntropySource) -> AuditTranscript:
    """An accepting audit transcript for ``c`` that displays ``claimed_vote``, whatever c encrypts."""
    if len(claimed_vote) != len(c):
        raise cai_errors.BadLength(f"claimed vote has {len(claimed_vote)} choices for {len(c)} ciphertexts")

    commitment_key: zk_protocols.CommitmentKey = zk_protocols.new_commitment_key(context, rng)
    r_star: list[Scalar] = []
    c_star: list[Ciphertext] = []
    proofs: list[DleqTranscript] = []
    for label, c_i in zip(claimed_vote, c):
        r_star_i: Scalar = context.random_scalar(rng)
        c_star_i: Ciphertext = enc_schemes.enc(context, election.pk, election.encoding.encode(context, label), r_star_i)
        statement: DleqStatement = rerandomization_statement(election.pk, c_i, c_star_i)
        r_star.append(r_star_i)
        c_star.append(c_star_i)
        proofs.append(zk_protocols.dleq_simulate(context, statement, rng, commitment_key))

    return AuditTranscript(c=c, c_star=tuple(c_star), r_star=tuple(r_star), proofs=tuple(proofs))


def sim_server_view(context: GroupContext,
                    pk: GroupElement,
                    offer: AuditOffer,
                    channel: AuditChannel,
                    rng: group_arith.EntropySource,
                    confirmation_codes: bool = False) -> tuple[bytes, ...]:
    """Plays the audit device's part towards the server from public values only.

    Returns the messages sent to the server. With confirmation codes on, the code says accept
    iff every proof accepted.
    """
    sent: list[bytes] = []
    verifiers: list[VerifierState] = []
    commits: list[zk_protocols.ZkMessage] = []
    for c_i, c_star_i in zip(offer.c, offer.c_star):
        verifier: VerifierState = zk_protocols.dleq_verifier_start(rerandomization_statement(pk, c_i, c_star_i))
        verifier, commit = zk_protocols.dleq_verifier_step(context, verifier, zk_protocols.CommitKeyMsg(offer.k), rng)
        verifiers.append(verifier)
        commits.append(commit)

    outgoing: ZkBatch = ZkBatch(tuple(commits))
    while True:
        sent.append(outgoing.encode())
        reply: ZkBatch = channel.exchange(outgoing)
        stepped: list[tuple[VerifierState, zk_protocols.ZkMessage]] = [
            zk_protocols.dleq_verifier_step(context, verifier, message, rng)
            for verifier, message in zip(verifiers, reply.messages)
        ]
        verifiers = [verifier for verifier, _ in stepped]
        if all(verifier.phase is zk_protocols.Phase.DONE for verifier in verifiers):
            break
        outgoing = ZkBatch(tuple(message for _, message in stepped))

    if confirmation_codes:
        code: zk_protocols.VerdictMsg = zk_protocols.VerdictMsg(all(verifier.accept for verifier in verifiers))
        sent.append(code.encode())
        channel.confirm(code)
    return tuple(sent)


# ---- Commitment-based ballots ---------------------------------------------------------------------

def run_commitment_variant(contexts: RoleContexts,
                           params: enc_schemes.PedersenParams,
                           v: int,
                           alphabet: typing.Sequence[int],
                           device_rng: group_arith.EntropySource,
                           server_rng: group_arith.EntropySource,
                           audit_rng: group_arith.EntropySource,
                           forged_vote: int | None = None,
                           guessed_e: Scalar | None = None) -> AuditOutcome:
    """The same submit-blind-audit flow over Pedersen-committed ballots.

    With ``forged_vote`` set the server presents c* opening to that vote and proves with a forging
    prover that bets on ``guessed_e``.
    """
    r: Scalar = contexts.device.random_scalar(device_rng)
    c: GroupElement = enc_schemes.commit(contexts.device, params, v, r)

    x: Scalar = contexts.server.random_scalar(server_rng)
    c_star: GroupElement = enc_schemes.rerand_commit(contexts.server, params, c, x)
    if forged_vote is not None:
        c_star = c_star * contexts.server.exp(params.g, forged_vote - v)
    r_star: Scalar = x + r

    statement: zk_protocols.DlogStatement = zk_protocols.DlogStatement(base=params.h_ind, target=c_star / c)
    if forged_vote is not None:
        prover, first = zk_protocols.forging_prover_start(
            contexts.server, statement,
            guessed_e if guessed_e is not None else contexts.server.random_scalar(server_rng), server_rng)
    else:
        prover, first = zk_protocols.dleq_prover_start(contexts.server, statement, zk_protocols.DleqWitness(x),
                                                       server_rng)
    proof: DleqTranscript = zk_protocols.run_proof(contexts.server, contexts.audit, prover, first, statement,
                                                   server_rng, audit_rng)
    if not proof.accept:
        return AuditOutcome.reject(cai_errors.ZkpRejected.__name__)

    try:
        opened: int = enc_schemes.open_via_randomness(contexts.audit, params, c_star, r_star, alphabet)
    except cai_errors.OpeningMismatch as opening_error:
        return AuditOutcome.reject(opening_error.reason)
    return AuditOutcome(verdict=Verdict.ACCEPT, displayed_vote=(opened,))
