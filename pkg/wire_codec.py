"""Length-prefixed frames carried between the protocol roles.

Frame layout (network byte order):

    total length (4) | version (1) | role (1) | phase (1) | session token (16) | payload

``total length`` counts every byte after itself.
"""
import dataclasses
import enum
import socket
import struct

import cai_errors


WIRE_VERSION: int = 0x01
TOKEN_LENGTH: int = 16
MAX_FRAME_LENGTH: int = 1 << 20

_LENGTH_STRUCT: struct.Struct = struct.Struct("!I")
_HEADER_STRUCT: struct.Struct = struct.Struct(f"!BBB{TOKEN_LENGTH}s")


class Role(enum.IntEnum):
    VOTING_DEVICE = 1
    VOTING_SERVER = 2
    AUDIT_DEVICE  = 3


class Phase(enum.IntEnum):
    SUBMIT            = 1
    BLIND             = 2
    AUDIT_REQUEST     = 3
    AUDIT_OFFER       = 4
    ZK_ROUND          = 5
    CONFIRMATION_CODE = 6
    ACK               = 7
    ERROR             = 8


NO_SESSION: bytes = bytes(TOKEN_LENGTH)


@dataclasses.dataclass(frozen=True, slots=True)
class WireMessage:
    role: Role
    phase: Phase
    payload: bytes
    token: bytes = NO_SESSION
    version: int = WIRE_VERSION


def frame(message: WireMessage) -> bytes:
    if message.version != WIRE_VERSION:
        raise cai_errors.UnknownVersion(f"cannot frame wire version 0x{message.version:02x}")
    if len(message.token) != TOKEN_LENGTH:
        raise cai_errors.BadLength(f"session token must be {TOKEN_LENGTH} bytes, got {len(message.token)}")

    body: bytes = _HEADER_STRUCT.pack(message.version, int(message.role), int(message.phase),
                                      message.token) + message.payload
    if len(body) > MAX_FRAME_LENGTH:
        raise cai_errors.BadLength(f"frame of {len(body)} bytes exceeds {MAX_FRAME_LENGTH}")
    return _LENGTH_STRUCT.pack(len(body)) + body


def unframe(data: bytes) -> WireMessage:
    if len(data) < _LENGTH_STRUCT.size:
        raise cai_errors.BadLength("frame shorter than its length prefix")

    (declared_length,) = _LENGTH_STRUCT.unpack_from(data, 0)
    body: bytes = data[_LENGTH_STRUCT.size:]
    if declared_length != len(body):
        raise cai_errors.BadLength(f"frame declares {declared_length} bytes but carries {len(body)}")
    if declared_length < _HEADER_STRUCT.size:
        raise cai_errors.BadLength("frame shorter than the message header")

    version, role, phase, token = _HEADER_STRUCT.unpack_from(body, 0)
    if version != WIRE_VERSION:
        raise cai_errors.UnknownVersion(f"unsupported wire version 0x{version:02x}")
    try:
        decoded_role: Role = Role(role)
        decoded_phase: Phase = Phase(phase)
    except ValueError as tag_error:
        raise cai_errors.PhaseError(f"unknown role {role} or phase {phase} tag") from tag_error

    return WireMessage(role=decoded_role, phase=decoded_phase, payload=body[_HEADER_STRUCT.size:],
                       token=token, version=version)


def _recv_exactly(connection: socket.socket, length: int) -> bytes:
    chunks: list[bytes] = []
    remaining: int = length
    while remaining:
        try:
            chunk: bytes = connection.recv(remaining)
        except TimeoutError as timeout_error:
            raise cai_errors.TransportTimeout(f"peer sent nothing for {connection.gettimeout()} s") from timeout_error
        if not chunk:
            raise cai_errors.BadLength(f"connection closed with {remaining} bytes of the frame outstanding")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame_bytes(connection: socket.socket) -> bytes:
    """One whole frame, length prefix included, still undecoded."""
    prefix: bytes = _recv_exactly(connection, _LENGTH_STRUCT.size)
    (declared_length,) = _LENGTH_STRUCT.unpack(prefix)
    if declared_length > MAX_FRAME_LENGTH:
        raise cai_errors.BadLength(f"peer announced a {declared_length}-byte frame")
    return prefix + _recv_exactly(connection, declared_length)


def read_frame(connection: socket.socket) -> WireMessage:
    return unframe(read_frame_bytes(connection))


def write_frame(connection: socket.socket, message: WireMessage) -> None:
    connection.sendall(frame(message))
