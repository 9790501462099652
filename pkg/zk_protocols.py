"""Interactive zero-knowledge proofs of discrete-log relations.

The sigma protocol (Chaum-Pedersen for two bases, Schnorr for one) is made fully zero-knowledge
by having the verifier commit to its challenge with a Pedersen commitment under a prover-chosen
key k = g^tau before the prover's first message:

    P -> V   k = g^tau
    V -> P   com = g^r_c * k^e
    P -> V   A_i = base_i^a               (one per base)
    V -> P   e, r_c
    P -> V   z = a + e*x                  (P aborts if com != g^r_c * k^e)
    V        accept iff A_i == base_i^z / target_i^e for every i

Both roles are immutable state machines advanced one message at a time.
"""
import dataclasses
import enum
import logging
import typing

import cai_errors
import group_arith
from group_arith import GroupContext, GroupElement, Scalar


logger: logging.Logger = logging.getLogger(__name__)


class Phase(enum.Enum):
    AWAIT_COMMIT_KEY        = "AwaitCommitKey"
    AWAIT_CHALLENGE_COMMIT  = "AwaitChallengeCommit"
    AWAIT_FIRST_MESSAGE     = "AwaitFirstMessage"
    AWAIT_DECOMMIT          = "AwaitDecommit"
    AWAIT_RESPONSE          = "AwaitResponse"
    DONE                    = "Done"


@dataclasses.dataclass(frozen=True, slots=True)
class DleqStatement:
    g: GroupElement
    h: GroupElement
    X: GroupElement
    Y: GroupElement

    def tracks(self) -> tuple[tuple[GroupElement, GroupElement], ...]:
        return (self.g, self.X), (self.h, self.Y)


@dataclasses.dataclass(frozen=True, slots=True)
class DlogStatement:
    base: GroupElement
    target: GroupElement

    def tracks(self) -> tuple[tuple[GroupElement, GroupElement], ...]:
        return ((self.base, self.target),)


type LinearStatement = DleqStatement | DlogStatement


@dataclasses.dataclass(frozen=True, slots=True)
class DleqWitness:
    x: Scalar

    def holds_for(self, context: GroupContext, statement: LinearStatement) -> bool:
        return all(context.exp(base, self.x) == target for base, target in statement.tracks())


@dataclasses.dataclass(frozen=True, slots=True)
class CommitmentKey:
    tau: Scalar
    k: GroupElement


# ---- Messages -------------------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, slots=True)
class CommitKeyMsg:
    TAG: typing.ClassVar[int] = 0x01
    k: GroupElement

    def encode(self) -> bytes:
        return bytes([self.TAG]) + self.k.encode()


@dataclasses.dataclass(frozen=True, slots=True)
class ChallengeCommitMsg:
    TAG: typing.ClassVar[int] = 0x02
    com: GroupElement

    def encode(self) -> bytes:
        return bytes([self.TAG]) + self.com.encode()


@dataclasses.dataclass(frozen=True, slots=True)
class FirstMsg:
    TAG: typing.ClassVar[int] = 0x03
    announcements: tuple[GroupElement, ...]

    def encode(self) -> bytes:
        return bytes([self.TAG]) + b"".join(element.encode() for element in self.announcements)


@dataclasses.dataclass(frozen=True, slots=True)
class DecommitMsg:
    TAG: typing.ClassVar[int] = 0x04
    e: Scalar
    r_c: Scalar

    def encode(self) -> bytes:
        return bytes([self.TAG]) + self.e.encode() + self.r_c.encode()


@dataclasses.dataclass(frozen=True, slots=True)
class ResponseMsg:
    TAG: typing.ClassVar[int] = 0x05
    z: Scalar

    def encode(self) -> bytes:
        return bytes([self.TAG]) + self.z.encode()


@dataclasses.dataclass(frozen=True, slots=True)
class VerdictMsg:
    TAG: typing.ClassVar[int] = 0x06
    accept: bool

    def encode(self) -> bytes:
        return bytes([self.TAG, 1 if self.accept else 0])


type ZkMessage = CommitKeyMsg | ChallengeCommitMsg | FirstMsg | DecommitMsg | ResponseMsg | VerdictMsg


def decode_zk_message(group: group_arith.PrimeOrderGroup, data: bytes) -> ZkMessage:
    if not data:
        raise cai_errors.BadLength("empty zero-knowledge message")

    tag: int = data[0]
    body: bytes = data[1:]
    element_length: int = group.params.element_length
    scalar_length: int = group.params.scalar_length

    if tag == CommitKeyMsg.TAG:
        return CommitKeyMsg(group.decode_element(body))
    if tag == ChallengeCommitMsg.TAG:
        return ChallengeCommitMsg(group.decode_element(body))
    if tag == FirstMsg.TAG:
        if not body or len(body) % element_length != 0:
            raise cai_errors.BadLength(f"first message body of {len(body)} bytes is not a list of elements")
        return FirstMsg(tuple(group.decode_element(body[offset:offset + element_length])
                              for offset in range(0, len(body), element_length)))
    if tag == DecommitMsg.TAG:
        if len(body) != 2 * scalar_length:
            raise cai_errors.BadLength(f"decommit body must be {2 * scalar_length} bytes, got {len(body)}")
        return DecommitMsg(group.decode_scalar(body[:scalar_length]), group.decode_scalar(body[scalar_length:]))
    if tag == ResponseMsg.TAG:
        return ResponseMsg(group.decode_scalar(body))
    if tag == VerdictMsg.TAG:
        if body not in (b"\x00", b"\x01"):
            raise cai_errors.BadLength("verdict body must be a single 0/1 byte")
        return VerdictMsg(body == b"\x01")

    raise cai_errors.PhaseError(f"unknown zero-knowledge message tag 0x{tag:02x}")


# ---- Transcripts ----------------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, slots=True)
class DleqTranscript:
    k: GroupElement
    com: GroupElement
    announcements: tuple[GroupElement, ...]
    e: Scalar
    r_c: Scalar
    z: Scalar
    accept: bool

    def encode(self) -> bytes:
        return (self.k.encode() + self.com.encode()
                + b"".join(element.encode() for element in self.announcements)
                + self.e.encode() + self.r_c.encode() + self.z.encode()
                + (b"\x01" if self.accept else b"\x00"))


def verify_transcript(context: GroupContext, statement: LinearStatement, transcript: DleqTranscript) -> bool:
    g: GroupElement = context.g
    if transcript.com != context.exp(g, transcript.r_c) * context.exp(transcript.k, transcript.e):
        return False
    return _responses_verify(context, statement, transcript.announcements, transcript.e, transcript.z)


def _responses_verify(context: GroupContext,
                      statement: LinearStatement,
                      announcements: tuple[GroupElement, ...],
                      e: Scalar,
                      z: Scalar) -> bool:
    tracks: tuple[tuple[GroupElement, GroupElement], ...] = statement.tracks()
    if len(announcements) != len(tracks):
        return False
    # Evaluate every track so the verifier cost does not depend on where a forgery fails
    track_results: list[bool] = [
        announcement == context.exp(base, z) / context.exp(target, e)
        for announcement, (base, target) in zip(announcements, tracks)
    ]
    return all(track_results)


# ---- Prover ---------------------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, slots=True)
class ProverState:
    phase: Phase
    statement: LinearStatement
    commitment_key: CommitmentKey
    witness: DleqWitness | None = None
    forged_e: Scalar | None = None
    com: GroupElement | None = None
    a: Scalar | None = None
    forged_z: Scalar | None = None
    announcements: tuple[GroupElement, ...] = ()
    e: Scalar | None = None
    r_c: Scalar | None = None
    z: Scalar | None = None


def new_commitment_key(context: GroupContext, rng: group_arith.EntropySource) -> CommitmentKey:
    tau: Scalar = context.random_scalar(rng)
    return CommitmentKey(tau=tau, k=context.exp(context.g, tau))


def dleq_prover_start(context: GroupContext,
                      statement: LinearStatement,
                      witness: DleqWitness,
                      rng: group_arith.EntropySource,
                      commitment_key: CommitmentKey | None = None) -> tuple[ProverState, CommitKeyMsg]:
    """Step 1. A reused commitment key costs nothing here; a fresh one costs one exponentiation."""
    if commitment_key is None:
        commitment_key = new_commitment_key(context, rng)

    state: ProverState = ProverState(phase=Phase.AWAIT_CHALLENGE_COMMIT,
                                     statement=statement,
                                     commitment_key=commitment_key,
                                     witness=witness)
    return state, CommitKeyMsg(commitment_key.k)


def dleq_prover_step(context: GroupContext,
                     state: ProverState,
                     message: ZkMessage,
                     rng: group_arith.EntropySource) -> tuple[ProverState, ZkMessage]:
    """Steps 3 and 5 of the protocol for any linear statement (two bases for DLEQ, one for DLOG)."""
    if state.phase is Phase.AWAIT_CHALLENGE_COMMIT and isinstance(message, ChallengeCommitMsg):
        if state.forged_e is not None:
            return _forging_first_message(context, state, message, rng)

        a: Scalar = context.random_scalar(rng)
        announcements: tuple[GroupElement, ...] = tuple(context.exp(base, a) for base, _ in state.statement.tracks())
        logger.debug("prover sent first message with %d announcements", len(announcements))
        return (dataclasses.replace(state, phase=Phase.AWAIT_DECOMMIT, com=message.com, a=a,
                                    announcements=announcements),
                FirstMsg(announcements))

    if state.phase is Phase.AWAIT_DECOMMIT and isinstance(message, DecommitMsg):
        if state.forged_e is not None:
            z_forged: Scalar = state.forged_z if message.e == state.forged_e else context.random_scalar(rng)
            return (dataclasses.replace(state, phase=Phase.DONE, e=message.e, r_c=message.r_c, z=z_forged),
                    ResponseMsg(z_forged))

        expected_com: GroupElement = (context.exp(context.g, message.r_c)
                                      * context.exp(state.commitment_key.k, message.e))
        if expected_com != state.com:
            logger.warning("verifier decommitment does not open its challenge commitment; prover aborts")
            raise cai_errors.DecommitMismatch("challenge decommitment does not match the commitment")

        z: Scalar = state.a + message.e * state.witness.x
        return (dataclasses.replace(state, phase=Phase.DONE, e=message.e, r_c=message.r_c, z=z),
                ResponseMsg(z))

    raise cai_errors.PhaseError(f"prover in phase {state.phase.value} cannot accept {type(message).__name__}")


def forging_prover_start(context: GroupContext,
                         statement: LinearStatement,
                         guessed_e: Scalar,
                         rng: group_arith.EntropySource,
                         commitment_key: CommitmentKey | None = None) -> tuple[ProverState, CommitKeyMsg]:
    """A prover without a witness that bets on the challenge being ``guessed_e``."""
    if commitment_key is None:
        commitment_key = new_commitment_key(context, rng)

    state: ProverState = ProverState(phase=Phase.AWAIT_CHALLENGE_COMMIT,
                                     statement=statement,
                                     commitment_key=commitment_key,
                                     forged_e=guessed_e)
    return state, CommitKeyMsg(commitment_key.k)


def _forging_first_message(context: GroupContext,
                           state: ProverState,
                           message: ChallengeCommitMsg,
                           rng: group_arith.EntropySource) -> tuple[ProverState, ZkMessage]:
    z: Scalar = context.random_scalar(rng)
    announcements: tuple[GroupElement, ...] = tuple(
        context.exp(base, z) / context.exp(target, state.forged_e) for base, target in state.statement.tracks())
    return (dataclasses.replace(state, phase=Phase.AWAIT_DECOMMIT, com=message.com, forged_z=z,
                                announcements=announcements),
            FirstMsg(announcements))


# ---- Verifier -------------------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, slots=True)
class VerifierState:
    phase: Phase
    statement: LinearStatement
    k: GroupElement | None = None
    e: Scalar | None = None
    r_c: Scalar | None = None
    com: GroupElement | None = None
    announcements: tuple[GroupElement, ...] = ()
    z: Scalar | None = None
    accept: bool | None = None

    def transcript(self) -> DleqTranscript:
        if self.phase is not Phase.DONE:
            raise cai_errors.PhaseError(f"no transcript before the proof completes (phase {self.phase.value})")
        return DleqTranscript(k=self.k, com=self.com, announcements=self.announcements,
                              e=self.e, r_c=self.r_c, z=self.z, accept=bool(self.accept))


def dleq_verifier_start(statement: LinearStatement) -> VerifierState:
    return VerifierState(phase=Phase.AWAIT_COMMIT_KEY, statement=statement)


def dleq_verifier_step(context: GroupContext,
                       state: VerifierState,
                       message: ZkMessage,
                       rng: group_arith.EntropySource) -> tuple[VerifierState, ZkMessage]:
    """Steps 2, 4 and 6. Costs 2 exponentiations for the challenge commitment plus 2 per base."""
    if state.phase is Phase.AWAIT_COMMIT_KEY and isinstance(message, CommitKeyMsg):
        e: Scalar = context.random_scalar(rng)
        r_c: Scalar = context.random_scalar(rng)
        com: GroupElement = context.exp(context.g, r_c) * context.exp(message.k, e)
        return (dataclasses.replace(state, phase=Phase.AWAIT_FIRST_MESSAGE, k=message.k, e=e, r_c=r_c, com=com),
                ChallengeCommitMsg(com))

    if state.phase is Phase.AWAIT_FIRST_MESSAGE and isinstance(message, FirstMsg):
        return (dataclasses.replace(state, phase=Phase.AWAIT_RESPONSE, announcements=message.announcements),
                DecommitMsg(state.e, state.r_c))

    if state.phase is Phase.AWAIT_RESPONSE and isinstance(message, ResponseMsg):
        accept: bool = _responses_verify(context, state.statement, state.announcements, state.e, message.z)
        if not accept:
            logger.warning("proof rejected: response does not match the announcements")
        return (dataclasses.replace(state, phase=Phase.DONE, z=message.z, accept=accept),
                VerdictMsg(accept))

    raise cai_errors.PhaseError(f"verifier in phase {state.phase.value} cannot accept {type(message).__name__}")


# ---- Drivers --------------------------------------------------------------------------------------

def run_proof(prover_context: GroupContext,
              verifier_context: GroupContext,
              prover_state: ProverState,
              first_message: CommitKeyMsg,
              statement: LinearStatement,
              prover_rng: group_arith.EntropySource,
              verifier_rng: group_arith.EntropySource) -> DleqTranscript:
    """Run a started prover against a fresh honest verifier in-process."""
    verifier_state: VerifierState = dleq_verifier_start(statement)
    outgoing: ZkMessage = first_message

    while verifier_state.phase is not Phase.DONE:
        verifier_state, reply = dleq_verifier_step(verifier_context, verifier_state, outgoing, verifier_rng)
        if verifier_state.phase is Phase.DONE:
            break
        prover_state, outgoing = dleq_prover_step(prover_context, prover_state, reply, prover_rng)

    return verifier_state.transcript()


def run_dleq(prover_context: GroupContext,
             verifier_context: GroupContext,
             statement: DleqStatement,
             witness: DleqWitness,
             prover_rng: group_arith.EntropySource,
             verifier_rng: group_arith.EntropySource,
             commitment_key: CommitmentKey | None = None) -> DleqTranscript:
    prover_state, first_message = dleq_prover_start(prover_context, statement, witness, prover_rng, commitment_key)
    return run_proof(prover_context, verifier_context, prover_state, first_message, statement,
                     prover_rng, verifier_rng)


def schnorr_dlog_zk(prover_context: GroupContext,
                    verifier_context: GroupContext,
                    statement: DlogStatement,
                    witness: DleqWitness,
                    prover_rng: group_arith.EntropySource,
                    verifier_rng: group_arith.EntropySource,
                    commitment_key: CommitmentKey | None = None) -> DleqTranscript:
    """Single-base variant: proves knowledge of x with target = base^x."""
    prover_state, first_message = dleq_prover_start(prover_context, statement, witness, prover_rng, commitment_key)
    return run_proof(prover_context, verifier_context, prover_state, first_message, statement,
                     prover_rng, verifier_rng)


def dleq_simulate(context: GroupContext,
                  statement: LinearStatement,
                  rng: group_arith.EntropySource,
                  commitment_key: CommitmentKey | None = None) -> DleqTranscript:
    """Accepting transcript produced without any witness; works for false statements too."""
    if commitment_key is None:
        commitment_key = new_commitment_key(context, rng)
    k: GroupElement = commitment_key.k
    e: Scalar = context.random_scalar(rng)
    r_c: Scalar = context.random_scalar(rng)
    com: GroupElement = context.exp(context.g, r_c) * context.exp(k, e)
    z: Scalar = context.random_scalar(rng)
    announcements: tuple[GroupElement, ...] = tuple(
        context.exp(base, z) / context.exp(target, e) for base, target in statement.tracks())
    return DleqTranscript(k=k, com=com, announcements=announcements, e=e, r_c=r_c, z=z, accept=True)


def extract_witness(first: DleqTranscript, second: DleqTranscript) -> Scalar:
    """Special soundness: two accepting transcripts sharing announcements but not challenges give x."""
    if first.announcements != second.announcements:
        raise ValueError("transcripts must share their first message")
    if first.e == second.e:
        raise ValueError("transcripts must have distinct challenges")
    return (first.z - second.z) * (first.e - second.e).inverse()
