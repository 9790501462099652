import random
import socket
import struct

import pytest

import cai_errors
import wire_codec
from wire_codec import Phase, Role, WireMessage


def test_frame_layout():
    message: WireMessage = WireMessage(Role.AUDIT_DEVICE, Phase.ZK_ROUND, b"\x01\x02", token=b"T" * 16)
    framed: bytes = wire_codec.frame(message)

    assert framed[:4] == struct.pack("!I", 1 + 1 + 1 + 16 + 2)
    assert framed[4:7] == bytes([wire_codec.WIRE_VERSION, 3, 5])
    assert framed[7:23] == b"T" * 16
    assert framed[23:] == b"\x01\x02"


def test_random_messages_survive_framing():
    rng: random.Random = random.Random(1)
    for _ in range(1000):
        message: WireMessage = WireMessage(role=rng.choice(list(Role)),
                                           phase=rng.choice(list(Phase)),
                                           payload=rng.randbytes(rng.randrange(0, 300)),
                                           token=rng.randbytes(16))
        assert wire_codec.unframe(wire_codec.frame(message)) == message


@pytest.mark.parametrize("cut", [0, 3, 10, 22])
def test_truncated_frames(cut):
    framed: bytes = wire_codec.frame(WireMessage(Role.VOTING_DEVICE, Phase.SUBMIT, b"payload"))
    with pytest.raises(cai_errors.BadLength):
        wire_codec.unframe(framed[:cut])
    with pytest.raises(cai_errors.BadLength):
        wire_codec.unframe(framed + b"\x00")


def test_unknown_version_byte():
    framed: bytearray = bytearray(wire_codec.frame(WireMessage(Role.VOTING_SERVER, Phase.ACK, b"")))
    framed[4] = 0xFF
    with pytest.raises(cai_errors.UnknownVersion):
        wire_codec.unframe(bytes(framed))
    with pytest.raises(cai_errors.UnknownVersion):
        wire_codec.frame(WireMessage(Role.VOTING_SERVER, Phase.ACK, b"", version=0xFF))


def test_unknown_role_or_phase_tag():
    framed: bytearray = bytearray(wire_codec.frame(WireMessage(Role.VOTING_SERVER, Phase.ACK, b"")))
    framed[6] = 0x42
    with pytest.raises(cai_errors.PhaseError):
        wire_codec.unframe(bytes(framed))


def test_frame_size_limits():
    with pytest.raises(cai_errors.BadLength):
        wire_codec.frame(WireMessage(Role.VOTING_SERVER, Phase.ACK, bytes(wire_codec.MAX_FRAME_LENGTH)))
    with pytest.raises(cai_errors.BadLength):
        wire_codec.frame(WireMessage(Role.VOTING_SERVER, Phase.ACK, b"", token=b"short"))


def test_frames_over_a_socket():
    left, right = socket.socketpair()
    with left, right:
        right.settimeout(1.0)
        message: WireMessage = WireMessage(Role.VOTING_DEVICE, Phase.SUBMIT, b"x" * 5000)
        wire_codec.write_frame(left, message)
        assert wire_codec.read_frame(right) == message

        left.sendall(struct.pack("!I", wire_codec.MAX_FRAME_LENGTH + 1))
        with pytest.raises(cai_errors.BadLength):
            wire_codec.read_frame_bytes(right)


def test_silent_peer_times_out():
    left, right = socket.socketpair()
    with left, right:
        right.settimeout(0.05)
        with pytest.raises(cai_errors.TransportTimeout):
            wire_codec.read_frame(right)


def test_closed_peer_mid_frame():
    left, right = socket.socketpair()
    with right:
        left.sendall(struct.pack("!I", 40) + b"\x01\x01")
        left.close()
        right.settimeout(1.0)
        with pytest.raises(cai_errors.BadLength):
            wire_codec.read_frame(right)
