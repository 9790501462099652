"""Multi-party scenario harness: voter, voting device, voting server and audit devices.

Each role follows an ``ActorScript`` (honest or one of the scripted corruptions). The devices
talk to the server through a ``Transport`` that carries framed ``WireMessage``s, either directly
in-process or across a local socket pair; both produce the same ``ScenarioReport`` for a seed.
"""
import dataclasses
import enum
import itertools
import json
import logging
import socket
import threading
import typing

import cai_errors
import cai_protocol
import enc_schemes
import group_arith
import verifiability
import wire_codec
import zk_protocols
from cai_protocol import AuditOffer, AuditOutcome, ElectionPublic, VoterIntent, ZkBatch
from election_config import ElectionConfig
from wire_codec import Phase, Role, WireMessage


logger: logging.Logger = logging.getLogger(__name__)


class Behavior(enum.StrEnum):
    HONEST                = "honest"
    FLIP_VOTE             = "flip-vote"
    SUBSTITUTE_CIPHERTEXT = "substitute-ciphertext"
    BAD_PROOF             = "bad-proof"
    WITHHOLD_RECORD       = "withhold-record"
    REPLAY                = "replay"


ROLE_BEHAVIORS: dict[Role, frozenset[Behavior]] = {
    Role.VOTING_DEVICE: frozenset({Behavior.HONEST, Behavior.FLIP_VOTE, Behavior.REPLAY}),
    Role.VOTING_SERVER: frozenset({Behavior.HONEST, Behavior.SUBSTITUTE_CIPHERTEXT, Behavior.BAD_PROOF,
                                   Behavior.WITHHOLD_RECORD}),
    Role.AUDIT_DEVICE:  frozenset({Behavior.HONEST, Behavior.FLIP_VOTE}),
}


@dataclasses.dataclass(frozen=True, slots=True)
class ActorScript:
    role: Role
    behavior: Behavior = Behavior.HONEST

    def __post_init__(self) -> None:
        if self.behavior not in ROLE_BEHAVIORS[self.role]:
            raise cai_errors.ConfigError(f"{self.role.name} cannot follow behavior \"{self.behavior}\"")


type ScriptSet = dict[Role, ActorScript]


def _scripts(device: Behavior = Behavior.HONEST,
             server: Behavior = Behavior.HONEST,
             audit: Behavior = Behavior.HONEST) -> ScriptSet:
    return {
        Role.VOTING_DEVICE: ActorScript(Role.VOTING_DEVICE, device),
        Role.VOTING_SERVER: ActorScript(Role.VOTING_SERVER, server),
        Role.AUDIT_DEVICE:  ActorScript(Role.AUDIT_DEVICE, audit),
    }


SCENARIOS: dict[str, ScriptSet] = {
    "all-honest":                   _scripts(),
    "flip-vote-device":             _scripts(device=Behavior.FLIP_VOTE),
    "replay-device":                _scripts(device=Behavior.REPLAY),
    "substitute-ciphertext-server": _scripts(server=Behavior.SUBSTITUTE_CIPHERTEXT),
    "bad-proof-server":             _scripts(server=Behavior.BAD_PROOF),
    "withhold-record-server":       _scripts(server=Behavior.WITHHOLD_RECORD),
    "flip-vote-audit-device":       _scripts(audit=Behavior.FLIP_VOTE),
}


def scenario_scripts(name: str) -> ScriptSet:
    if name not in SCENARIOS:
        raise cai_errors.ConfigError(f"unknown scenario \"{name}\" (expected one of {sorted(SCENARIOS)})")
    return dict(SCENARIOS[name])


def scenario_matrix() -> list[ScriptSet]:
    """Every behavior combination in which at most one of the two voter devices is corrupted."""
    matrix: list[ScriptSet] = []
    for device, server, audit in itertools.product(sorted(ROLE_BEHAVIORS[Role.VOTING_DEVICE]),
                                                   sorted(ROLE_BEHAVIORS[Role.VOTING_SERVER]),
                                                   sorted(ROLE_BEHAVIORS[Role.AUDIT_DEVICE])):
        if device is not Behavior.HONEST and audit is not Behavior.HONEST:
            continue
        matrix.append(_scripts(device, server, audit))
    return matrix


def scripts_label(scripts: ScriptSet) -> str:
    return "/".join(f"{role.name.lower()}={scripts[role].behavior}" for role in Role)


# ---- Scripted server ------------------------------------------------------------------------------

class ScriptedVotingServer(cai_protocol.VotingServer):
    """Voting server that deviates at audit time according to its script."""

    def __init__(self, *args: typing.Any, behavior: Behavior = Behavior.HONEST,
                 adversary_rng: group_arith.EntropySource | None = None, **kwargs: typing.Any) -> None:
        super().__init__(*args, **kwargs)
        self.behavior: Behavior = behavior
        self.adversary_rng: group_arith.EntropySource = adversary_rng or group_arith.SystemEntropy()

    @property
    def publishes_records(self) -> bool:
        return self.behavior is not Behavior.WITHHOLD_RECORD

    def audit_offer(self, session: cai_protocol.AuditSession | None) \
            -> tuple[cai_protocol.ServerAuditState, AuditOffer]:
        if session is None or self.behavior not in (Behavior.SUBSTITUTE_CIPHERTEXT, Behavior.BAD_PROOF):
            return super().audit_offer(session)

        if self.behavior is Behavior.SUBSTITUTE_CIPHERTEXT:
            # Same plaintexts, different ciphertexts: proves honestly about a ballot the voter never cast
            extra: list[group_arith.Scalar] = [self.context.random_scalar(self.adversary_rng) for _ in session.c]
            substitute: enc_schemes.Ballot = enc_schemes.rerand_ballot(self.context, self.election.pk, session.c, extra)
            return super().audit_offer(dataclasses.replace(session, c=substitute))

        state, offer = super().audit_offer(session)
        shifted: enc_schemes.Ballot = tuple(enc_schemes.Ciphertext(c_star_i.u, c_star_i.w * self.context.g)
                                            for c_star_i in state.c_star)
        provers: list[zk_protocols.ProverState] = []
        for c_i, c_star_i in zip(session.c, shifted):
            statement: zk_protocols.DleqStatement = cai_protocol.rerandomization_statement(self.election.pk, c_i, c_star_i)
            prover, _ = zk_protocols.forging_prover_start(self.context, statement,
                                                          self.context.random_scalar(self.adversary_rng),
                                                          self.adversary_rng, session.commitment_key)
            provers.append(prover)
        return (dataclasses.replace(state, c_star=shifted, provers=tuple(provers)),
                dataclasses.replace(offer, c_star=shifted))


# ---- Server endpoint and transports ---------------------------------------------------------------

class ServerEndpoint:
    """Turns framed requests into framed replies; protocol errors travel back as ERROR frames."""

    def __init__(self, server: cai_protocol.VotingServer) -> None:
        self.server: cai_protocol.VotingServer = server
        self._lock: threading.Lock = threading.Lock()

    def handle_frame(self, data: bytes) -> bytes:
        token: bytes = wire_codec.NO_SESSION
        try:
            request: WireMessage = wire_codec.unframe(data)
            token = request.token
            with self._lock:
                reply: WireMessage = self._dispatch(request)
        except cai_errors.CastAsIntendedError as request_error:
            logger.warning("server refused a request: %s (%s)", request_error.reason, request_error)
            reply = WireMessage(Role.VOTING_SERVER, Phase.ERROR, request_error.reason.encode("ascii"), token)
        return wire_codec.frame(reply)

    def _voter_for(self, token: bytes) -> str:
        for voter_id, session in self.server.sessions.items():
            if session.token == token:
                return voter_id
        raise cai_errors.UnknownSession("session token does not name a cast ballot")

    def _dispatch(self, request: WireMessage) -> WireMessage:
        group: group_arith.PrimeOrderGroup = self.server.election.group

        match request.phase:
            case Phase.SUBMIT:
                blind: cai_protocol.BlindMsg = self.server.receive_ballot(
                    cai_protocol.SubmitMsg.decode(group, request.payload))
                return WireMessage(Role.VOTING_SERVER, Phase.BLIND, blind.encode(), blind.token)

            case Phase.AUDIT_REQUEST:
                audit_request: cai_protocol.AuditRequest = cai_protocol.AuditRequest.decode(request.payload)
                offer: AuditOffer = self.server.open_audit(audit_request)
                session_token: bytes = self.server.sessions[audit_request.voter_id].token
                return WireMessage(Role.VOTING_SERVER, Phase.AUDIT_OFFER, offer.encode(), session_token)

            case Phase.ZK_ROUND:
                reply: ZkBatch = self.server.continue_audit(self._voter_for(request.token),
                                                            ZkBatch.decode(group, request.payload))
                return WireMessage(Role.VOTING_SERVER, Phase.ZK_ROUND, reply.encode(), request.token)

            case Phase.CONFIRMATION_CODE:
                code: zk_protocols.ZkMessage = zk_protocols.decode_zk_message(group, request.payload)
                if not isinstance(code, zk_protocols.VerdictMsg):
                    raise cai_errors.PhaseError("confirmation code frame does not carry a verdict")
                self.server.receive_confirmation_code(self._voter_for(request.token), code)
                return WireMessage(Role.VOTING_SERVER, Phase.ACK, b"", request.token)

        raise cai_errors.PhaseError(f"server does not accept {request.phase.name} frames")


def _raise_if_error(reply: WireMessage) -> WireMessage:
    if reply.phase is not Phase.ERROR:
        return reply

    reason: str = reply.payload.decode("ascii", errors="replace")
    error_type: typing.Any = getattr(cai_errors, reason, None)
    if isinstance(error_type, type) and issubclass(error_type, cai_errors.CastAsIntendedError):
        raise error_type(f"voting server replied {reason}")
    raise cai_errors.CastAsIntendedError(f"voting server replied with unknown error \"{reason}\"")


class Transport(typing.Protocol):
    sent_frames: list[bytes]

    def request(self, message: WireMessage) -> WireMessage: ...

    def close(self) -> None: ...


class InProcessTransport:
    def __init__(self, endpoint: ServerEndpoint) -> None:
        self.endpoint: ServerEndpoint = endpoint
        self.sent_frames: list[bytes] = []

    def request(self, message: WireMessage) -> WireMessage:
        data: bytes = wire_codec.frame(message)
        self.sent_frames.append(data)
        return _raise_if_error(wire_codec.unframe(self.endpoint.handle_frame(data)))

    def close(self) -> None:
        pass


class SocketTransport:
    """Frames over a local stream socket pair, with the server side on its own thread."""

    def __init__(self, endpoint: ServerEndpoint, timeout_seconds: float) -> None:
        self.endpoint: ServerEndpoint = endpoint
        self.sent_frames: list[bytes] = []
        self._client, self._server_side = socket.socketpair()
        self._client.settimeout(timeout_seconds)
        self._thread: threading.Thread = threading.Thread(target=self._serve, name="voting-server", daemon=True)
        self._thread.start()

    def _serve(self) -> None:
        while True:
            try:
                data: bytes = wire_codec.read_frame_bytes(self._server_side)
            except (cai_errors.CastAsIntendedError, OSError):
                return
            self._server_side.sendall(self.endpoint.handle_frame(data))

    def request(self, message: WireMessage) -> WireMessage:
        data: bytes = wire_codec.frame(message)
        self.sent_frames.append(data)
        self._client.sendall(data)
        return _raise_if_error(wire_codec.read_frame(self._client))

    def close(self) -> None:
        # Closing the client end gives the server thread EOF, which ends its loop
        self._client.close()
        self._thread.join(timeout=1.0)
        self._server_side.close()


TRANSPORTS: tuple[str, ...] = ("in-process", "socket")


def open_transport(kind: str, endpoint: ServerEndpoint, timeout_seconds: float) -> Transport:
    if kind == "in-process":
        return InProcessTransport(endpoint)
    if kind == "socket":
        return SocketTransport(endpoint, timeout_seconds)
    raise cai_errors.ConfigError(f"unknown transport \"{kind}\" (expected one of {list(TRANSPORTS)})")


class RemoteServer:
    """The devices' view of the voting server across a transport."""

    def __init__(self, transport: Transport, group: group_arith.PrimeOrderGroup) -> None:
        self.transport: Transport = transport
        self.group: group_arith.PrimeOrderGroup = group

    def submit(self, submit: cai_protocol.SubmitMsg) -> cai_protocol.BlindMsg:
        reply: WireMessage = self.transport.request(WireMessage(Role.VOTING_DEVICE, Phase.SUBMIT, submit.encode()))
        return cai_protocol.BlindMsg.decode(self.group, reply.payload)

    def request_audit(self, request: cai_protocol.AuditRequest) -> tuple[AuditOffer, bytes]:
        reply: WireMessage = self.transport.request(
            WireMessage(Role.AUDIT_DEVICE, Phase.AUDIT_REQUEST, request.encode()))
        return AuditOffer.decode(self.group, reply.payload), reply.token

    def channel(self, token: bytes) -> cai_protocol.AuditChannel:
        return _RemoteChannel(self, token)


@dataclasses.dataclass(slots=True)
class _RemoteChannel:
    remote: RemoteServer
    token: bytes

    def exchange(self, batch: ZkBatch) -> ZkBatch:
        reply: WireMessage = self.remote.transport.request(
            WireMessage(Role.AUDIT_DEVICE, Phase.ZK_ROUND, batch.encode(), self.token))
        return ZkBatch.decode(self.remote.group, reply.payload)

    def confirm(self, code: zk_protocols.VerdictMsg) -> None:
        self.remote.transport.request(
            WireMessage(Role.AUDIT_DEVICE, Phase.CONFIRMATION_CODE, code.encode(), self.token))


# ---- Scenario runner ------------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True, slots=True)
class AuditRecord:
    device: int
    behavior: str
    verdict: str
    displayed_vote: list[str | int] | None
    reason: str | None
    transcript: str | None


@dataclasses.dataclass(frozen=True, slots=True)
class ScenarioReport:
    scenario: str
    seed: int
    group: str
    transport: str
    behaviors: dict[str, str]
    intent: list[str]
    audits: list[AuditRecord]
    voter_verdict: str
    receipt: str | None
    confirmation_copies_match: bool | None
    server_confirmed: bool | None
    counted_vote: list[str] | None
    tally: dict[str, int]
    replay: list[str]
    errors: list[str]
    exponentiations: dict[str, typing.Any]
    board: dict[str, typing.Any]
    intent_guarantee_holds: bool

    def to_dict(self) -> dict[str, typing.Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _flipped(vote: tuple[str | int, ...], alphabet: tuple[str, ...]) -> tuple[str | int, ...]:
    """The same vote with its first choice moved to the next alphabet entry."""
    if not vote or vote[0] not in alphabet:
        return vote
    return (alphabet[(alphabet.index(vote[0]) + 1) % len(alphabet)],) + tuple(vote[1:])


def _check_scripts(scripts: typing.Mapping[Role, ActorScript] | typing.Iterable[ActorScript]) -> ScriptSet:
    script_list: list[ActorScript] = list(scripts.values()) if isinstance(scripts, typing.Mapping) else list(scripts)
    by_role: ScriptSet = {}
    for script in script_list:
        if script.role in by_role:
            raise cai_errors.ConfigError(f"more than one script for {script.role.name}")
        by_role[script.role] = script
    missing: list[str] = [role.name for role in Role if role not in by_role]
    if missing:
        raise cai_errors.ConfigError(f"no script for {missing}")
    return by_role


def _replay_streams(endpoint: ServerEndpoint, fresh_endpoint: ServerEndpoint, sent_frames: list[bytes]) -> list[str]:
    """Re-sends recorded submissions to the live server and recorded audit traffic to a fresh one."""
    results: list[str] = []
    for data in sent_frames:
        target: ServerEndpoint = endpoint if wire_codec.unframe(data).phase is Phase.SUBMIT else fresh_endpoint
        reply: WireMessage = wire_codec.unframe(target.handle_frame(data))
        results.append(reply.payload.decode("ascii") if reply.phase is Phase.ERROR else "accepted")
    return results


def run_scenario(scripts: typing.Mapping[Role, ActorScript] | typing.Iterable[ActorScript],
                 config: ElectionConfig,
                 seed: int,
                 transport: str = "in-process",
                 audit_devices: int = 1,
                 voter_id: str = "voter-0001",
                 scenario_name: str = "custom") -> ScenarioReport:
    """One voter through submission, audit by ``audit_devices`` devices, publication and tally.

    The script for the audit device applies to the first device; any further devices are honest.
    """
    by_role: ScriptSet = _check_scripts(scripts)
    if audit_devices < 1:
        raise cai_errors.ConfigError(f"need at least one audit device, got {audit_devices}")

    device_behavior: Behavior = by_role[Role.VOTING_DEVICE].behavior
    server_behavior: Behavior = by_role[Role.VOTING_SERVER].behavior
    group: group_arith.PrimeOrderGroup = config.group
    encoding: enc_schemes.VoteEncoding = config.vote_encoding()
    root: group_arith.SeededEntropy = group_arith.SeededEntropy(seed)

    setup_context: group_arith.GroupContext = group_arith.GroupContext(group)
    election_keys: enc_schemes.KeyPair = enc_schemes.keygen(setup_context, root.spawn("election-key"))
    signing_key: verifiability.SigningKeyPair = verifiability.signing_keygen(setup_context, root.spawn("signing-key"))
    election: ElectionPublic = ElectionPublic(election_id=config.election_id, pk=election_keys.pk, encoding=encoding,
                                              server_verification=signing_key.verification,
                                              ballot_length=config.ballot_length)

    intent_rng: group_arith.SeededEntropy = root.spawn("intent")
    intent: VoterIntent = VoterIntent(voter_id, tuple(encoding.alphabet[intent_rng.randbelow(len(encoding.alphabet))]
                                                      for _ in range(config.ballot_length)))

    device_context: group_arith.GroupContext = group_arith.GroupContext(group)
    server_context: group_arith.GroupContext = group_arith.GroupContext(group)
    audit_contexts: list[group_arith.GroupContext] = [group_arith.GroupContext(group) for _ in range(audit_devices)]

    server: ScriptedVotingServer = ScriptedVotingServer(
        server_context, election, signing_key, root.spawn("server"), root.spawn("tokens"),
        allow_replacement=config.allow_replacement, confirmation_codes=config.confirmation_codes,
        allow_recast_after_failed_audit=config.allow_recast_after_failed_audit,
        behavior=server_behavior, adversary_rng=root.spawn("adversary"))
    endpoint: ServerEndpoint = ServerEndpoint(server)
    board: verifiability.BulletinBoard = verifiability.BulletinBoard(group, signing_key.verification,
                                                                     config.board_allows_replacement)

    audits: list[AuditRecord] = []
    outcomes: list[AuditOutcome] = []
    offers: list[AuditOffer] = []
    errors: list[str] = []
    device_copy: bytes | None = None
    replay: list[str] = []

    link: Transport = open_transport(transport, endpoint, config.message_timeout_seconds)
    try:
        remote: RemoteServer = RemoteServer(link, group)

        cast_intent: VoterIntent = intent
        if device_behavior is Behavior.FLIP_VOTE:
            cast_intent = VoterIntent(voter_id, _flipped(intent.v, encoding.alphabet))

        device_state, submit = cai_protocol.vd_cast(device_context, election, cast_intent, root.spawn("device"))
        blind: cai_protocol.BlindMsg = remote.submit(submit)
        if server.publishes_records:
            session: cai_protocol.AuditSession = server.sessions[voter_id]
            board = verifiability.bb_publish(board, verifiability.BallotRecord(voter_id, session.c,
                                                                               session.confirmation))

        device_state, payload = cai_protocol.vd_finalize(device_context, election, device_state, blind)
        device_copy = blind.confirmation.encode()
        qr_text: str = payload.armor()

        for device_index in range(audit_devices):
            audit_behavior: Behavior = by_role[Role.AUDIT_DEVICE].behavior if device_index == 0 else Behavior.HONEST
            scanned: cai_protocol.QrPayload = cai_protocol.QrPayload.from_armor(group, qr_text)
            try:
                offer, token = remote.request_audit(cai_protocol.AuditRequest(election.election_id, voter_id))
            except cai_errors.CastAsIntendedError as request_error:
                outcome: AuditOutcome = AuditOutcome.reject(request_error.reason)
            else:
                offers.append(offer)
                # A lying audit device shows the voter something else, so it relays no code
                outcome = cai_protocol.ad_audit(audit_contexts[device_index], election, scanned, offer,
                                                remote.channel(token), root.spawn(f"audit-{device_index}"),
                                                config.confirmation_codes,
                                                intent if audit_behavior is Behavior.HONEST else None)

            if audit_behavior is Behavior.FLIP_VOTE and outcome.accepted:
                outcome = dataclasses.replace(outcome, displayed_vote=_flipped(outcome.displayed_vote,
                                                                                encoding.alphabet))
            outcomes.append(outcome)
            audits.append(AuditRecord(device=device_index,
                                      behavior=str(audit_behavior),
                                      verdict=outcome.verdict.value,
                                      displayed_vote=list(outcome.displayed_vote) if outcome.accepted else None,
                                      reason=outcome.reason,
                                      transcript=outcome.transcript.encode().hex() if outcome.transcript else None))

        if device_behavior is Behavior.REPLAY:
            fresh_server: cai_protocol.VotingServer = cai_protocol.VotingServer(
                group_arith.GroupContext(group), election, signing_key, root.spawn("replay-server"),
                root.spawn("replay-tokens"))
            replay = _replay_streams(endpoint, ServerEndpoint(fresh_server), link.sent_frames)
    except cai_errors.CastAsIntendedError as scenario_error:
        logger.warning("scenario %s stopped early: %s", scenario_name, scenario_error.reason)
        errors.append(scenario_error.reason)
    finally:
        link.close()

    voter_verdict: bool = bool(outcomes) and not errors and all(
        cai_protocol.voter_accepts(intent, outcome) for outcome in outcomes)

    receipt: verifiability.ReceiptVerdict | None = None
    copies_match: bool | None = None
    if device_copy is not None and offers:
        voter_confirmation: verifiability.Confirmation = verifiability.Confirmation.decode(group, device_copy)
        receipt = verifiability.receipt_check(board, voter_confirmation, offers[0].c)
        copies_match = all(offer.confirmation.encode() == device_copy for offer in offers)

    record: verifiability.BallotRecord | None = board.lookup(voter_id)
    counted_vote: list[str] | None = None
    if record is not None:
        counted_vote = [encoding.decode(enc_schemes.dec(setup_context, election_keys.sk, ciphertext))
                        for ciphertext in record.c]

    intent_guarantee_holds: bool = (not voter_verdict
                            or receipt is verifiability.ReceiptVerdict.SERVER_MISBEHAVIOR_EVIDENCE
                            or (receipt is verifiability.ReceiptVerdict.ACCEPT and counted_vote == list(intent.v)))
    if not intent_guarantee_holds:
        logger.warning("voter accepted but the intended vote is not what gets counted (%s, seed %d)",
                       scripts_label(by_role), seed)

    return ScenarioReport(
        scenario=scenario_name,
        seed=seed,
        group=config.group_name,
        transport=transport,
        behaviors={role.name.lower(): str(by_role[role].behavior) for role in Role},
        intent=list(intent.v),
        audits=audits,
        voter_verdict=cai_protocol.Verdict.ACCEPT.value if voter_verdict else cai_protocol.Verdict.REJECT.value,
        receipt=receipt.value if receipt is not None else None,
        confirmation_copies_match=copies_match,
        server_confirmed=server.confirmed.get(voter_id) if config.confirmation_codes else None,
        counted_vote=counted_vote,
        tally=verifiability.naive_tally(setup_context, election_keys.sk, board, encoding),
        replay=replay,
        errors=errors,
        exponentiations={
            "voting_device": device_context.exponentiations,
            "voting_server": server_context.exponentiations,
            "audit_devices": [context.exponentiations for context in audit_contexts],
        },
        board={
            "length": len(board),
            "prefix_digest": board.prefix_digest().hex(),
            "records": board.export_lines(),
        },
        intent_guarantee_holds=intent_guarantee_holds,
    )
