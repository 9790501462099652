"""Re-randomizable ElGamal with special decryption, and the Pedersen-commitment ballot analogue.

Every function takes the caller's ``GroupContext`` so exponentiations land on the right role's counter.
"""
import dataclasses
import functools
import hashlib
import typing

import cai_errors
import group_arith
from group_arith import GroupContext, GroupElement, Scalar


PEDERSEN_TAG: bytes = b"cast-as-intended/pedersen-h"


@dataclasses.dataclass(frozen=True, slots=True)
class KeyPair:
    sk: Scalar
    pk: GroupElement


@dataclasses.dataclass(frozen=True, slots=True)
class Ciphertext:
    u: GroupElement
    w: GroupElement

    def encode(self) -> bytes:
        return self.u.encode() + self.w.encode()

    @classmethod
    def decode(cls, group: group_arith.PrimeOrderGroup, data: bytes) -> "Ciphertext":
        element_length: int = group.params.element_length
        if len(data) != 2 * element_length:
            raise cai_errors.BadLength(f"ciphertext encoding must be {2 * element_length} bytes, got {len(data)}")
        return cls(group.decode_element(data[:element_length]), group.decode_element(data[element_length:]))


class VoteEncoding:
    """Invertible table between the vote alphabet and group elements.

    Alphabet position i maps to g^(i+1), so no label ever maps to the identity.
    """

    def __init__(self, group: group_arith.PrimeOrderGroup, alphabet: typing.Sequence[str]) -> None:
        if len(alphabet) < 2:
            raise cai_errors.ConfigError("vote alphabet needs at least 2 entries")
        if len(set(alphabet)) != len(alphabet):
            raise cai_errors.ConfigError(f"vote alphabet has duplicate entries: {list(alphabet)}")
        if len(alphabet) >= group.order:
            raise cai_errors.ConfigError(f"vote alphabet of {len(alphabet)} does not fit a group of order {group.order}")

        self.group: group_arith.PrimeOrderGroup = group
        self.alphabet: tuple[str, ...] = tuple(alphabet)

        # Table construction is setup work and stays off every role's counter
        setup_context: GroupContext = GroupContext(group)
        self._label_by_encoding: dict[bytes, str] = {
            setup_context.exp(setup_context.g, position + 1).encode(): label
            for position, label in enumerate(self.alphabet)
        }

    def index_of(self, label: str) -> int:
        if label not in self.alphabet:
            raise cai_errors.UnknownVote(f"\"{label}\" is not in the vote alphabet {list(self.alphabet)}")
        return self.alphabet.index(label)

    def encode(self, context: GroupContext, label: str) -> GroupElement:
        return context.exp(context.g, self.index_of(label) + 1)

    def decode(self, element: GroupElement) -> str:
        label: str | None = self._label_by_encoding.get(element.encode())
        if label is None:
            raise cai_errors.UnknownVote(f"{element!r} does not encode any vote in the alphabet")
        return label

    def elements(self) -> dict[str, GroupElement]:
        return {label: self.group.decode_element(encoding) for encoding, label in self._label_by_encoding.items()}


@dataclasses.dataclass(frozen=True, slots=True)
class PedersenParams:
    g: GroupElement
    h_ind: GroupElement

    @classmethod
    def derive(cls, group: group_arith.PrimeOrderGroup, tag: bytes = PEDERSEN_TAG) -> "PedersenParams":
        return cls(g=group.generator(), h_ind=group.hash_to_element(tag))


def keygen(context: GroupContext, rng: group_arith.EntropySource) -> KeyPair:
    sk: Scalar = context.random_scalar(rng)
    return keypair_from_secret(context, sk)


def keypair_from_secret(context: GroupContext, sk: Scalar) -> KeyPair:
    return KeyPair(sk=sk, pk=context.exp(context.g, sk))


def enc(context: GroupContext, pk: GroupElement, m: GroupElement, r: Scalar) -> Ciphertext:
    return Ciphertext(u=context.exp(context.g, r), w=m * context.exp(pk, r))


def dec(context: GroupContext, sk: Scalar, c: Ciphertext) -> GroupElement:
    return c.w / context.exp(c.u, sk)


def rerand(context: GroupContext, pk: GroupElement, c: Ciphertext, x: Scalar) -> Ciphertext:
    return Ciphertext(u=c.u * context.exp(context.g, x), w=c.w * context.exp(pk, x))


def special_dec(context: GroupContext, pk: GroupElement, c: Ciphertext, r: Scalar) -> GroupElement:
    if context.exp(context.g, r) != c.u:
        raise cai_errors.RandomnessMismatch("first ciphertext component is not g^r for the supplied randomness")
    return c.w / context.exp(pk, r)


def special_dec_bruteforce(context: GroupContext,
                           pk: GroupElement,
                           c: Ciphertext,
                           r: Scalar,
                           encoding: VoteEncoding) -> str:
    # Re-encrypt every candidate under r until one reproduces c
    for label in encoding.alphabet:
        if enc(context, pk, encoding.encode(context, label), r) == c:
            return label

    raise cai_errors.RandomnessMismatch("no alphabet entry encrypts to this ciphertext under the supplied randomness")


def commit(context: GroupContext, params: PedersenParams, v: Scalar | int, r: Scalar) -> GroupElement:
    return context.exp(params.g, v) * context.exp(params.h_ind, r)


def rerand_commit(context: GroupContext, params: PedersenParams, c: GroupElement, x: Scalar) -> GroupElement:
    return c * context.exp(params.h_ind, x)


@functools.lru_cache(maxsize=64)
def _opening_table(g: GroupElement, alphabet: tuple[int, ...]) -> dict[GroupElement, int]:
    setup_context: GroupContext = GroupContext(g.group)
    return {setup_context.exp(g, v): v for v in alphabet}


def open_via_randomness(context: GroupContext,
                        params: PedersenParams,
                        c: GroupElement,
                        r: Scalar,
                        alphabet: typing.Iterable[int]) -> int:
    target: GroupElement = c / context.exp(params.h_ind, r)
    opened: int | None = _opening_table(params.g, tuple(alphabet)).get(target)
    if opened is None:
        raise cai_errors.OpeningMismatch("commitment does not open to any alphabet index under the supplied randomness")
    return opened


type Ballot = tuple[Ciphertext, ...]

BALLOT_DIGEST_TAG: bytes = b"cast-as-intended/ballot"


def encode_ballot(ballot: Ballot) -> bytes:
    return b"".join(ciphertext.encode() for ciphertext in ballot)


def decode_ballot(group: group_arith.PrimeOrderGroup, data: bytes) -> Ballot:
    ciphertext_length: int = 2 * group.params.element_length
    if not data or len(data) % ciphertext_length != 0:
        raise cai_errors.BadLength(f"ballot encoding of {len(data)} bytes is not a list of ciphertexts")
    return tuple(Ciphertext.decode(group, data[offset:offset + ciphertext_length])
                 for offset in range(0, len(data), ciphertext_length))


def ballot_digest(ballot: Ballot) -> bytes:
    return hashlib.sha256(BALLOT_DIGEST_TAG + encode_ballot(ballot)).digest()


def rerand_ballot(context: GroupContext, pk: GroupElement, ballot: Ballot, blinding: typing.Sequence[Scalar]) -> Ballot:
    if len(blinding) != len(ballot):
        raise cai_errors.BadLength(f"{len(blinding)} blinding factors for a ballot of {len(ballot)} ciphertexts")
    return tuple(rerand(context, pk, ciphertext, x) for ciphertext, x in zip(ballot, blinding))
