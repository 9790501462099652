"""Prime-order group arithmetic shared by every protocol layer.

Two interchangeable backends sit behind ``PrimeOrderGroup``:

* ``SchnorrGroup`` -- the order-q subgroup of Z_p^*; ``TINY_GROUP`` (p=23, q=11, g=2) is small
  enough to enumerate exhaustively in tests.
* ``P256Group`` -- NIST P-256 through pycryptodome's ``EccPoint``, used on production paths.

Exponentiations only happen through a ``GroupContext`` so each role can count its own.
"""
import abc
import dataclasses
import functools
import hashlib
import random
import secrets
import typing

from Crypto.PublicKey import ECC

import cai_errors


class EntropySource(typing.Protocol):
    def randbelow(self, upper_bound: int) -> int: ...


class SystemEntropy:
    """OS entropy; the default for anything that is not a test."""

    def __init__(self) -> None:
        self._system_random: secrets.SystemRandom = secrets.SystemRandom()

    def randbelow(self, upper_bound: int) -> int:
        return self._system_random.randrange(upper_bound)


class SeededEntropy:
    """Deterministic entropy for reproducible transcripts. Not for production use."""

    def __init__(self, seed: int) -> None:
        self.seed: int = seed
        self._random: random.Random = random.Random(seed)

    def randbelow(self, upper_bound: int) -> int:
        return self._random.randrange(upper_bound)

    def spawn(self, label: str) -> "SeededEntropy":
        # Independent child stream per role, stable for a given (seed, label)
        child_seed: int = int.from_bytes(
            hashlib.sha256(f"{self.seed}:{label}".encode()).digest()[:8], "big")
        return SeededEntropy(child_seed)


class ScriptedEntropy:
    """Replays a fixed list of values; raises ``EntropyExhausted`` once the list runs out."""

    def __init__(self, values: typing.Iterable[int]) -> None:
        self._values: list[int] = list(values)
        self._position: int = 0

    def randbelow(self, upper_bound: int) -> int:
        if self._position >= len(self._values):
            raise cai_errors.EntropyExhausted(f"scripted entropy exhausted after {self._position} draws")
        value: int = self._values[self._position]
        self._position += 1
        if not 0 <= value < upper_bound:
            raise cai_errors.ScalarOutOfRange(f"scripted value {value} not below {upper_bound}")
        return value

    @property
    def remaining(self) -> int:
        return len(self._values) - self._position


@dataclasses.dataclass(frozen=True, slots=True)
class GroupParams:
    name: str
    order: int
    generator_encoding: bytes
    element_length: int
    scalar_length: int


@dataclasses.dataclass(frozen=True, slots=True)
class Scalar:
    value: int
    order: int

    def __post_init__(self) -> None:
        if not 0 <= self.value < self.order:
            raise cai_errors.ScalarOutOfRange(f"scalar {self.value} outside Z_{self.order}")

    def _other_value(self, other: "Scalar | int") -> int:
        if isinstance(other, Scalar):
            if other.order != self.order:
                raise ValueError(f"mixing scalars mod {self.order} and mod {other.order}")
            return other.value
        return other

    def __add__(self, other: "Scalar | int") -> "Scalar":
        return Scalar((self.value + self._other_value(other)) % self.order, self.order)

    __radd__ = __add__

    def __sub__(self, other: "Scalar | int") -> "Scalar":
        return Scalar((self.value - self._other_value(other)) % self.order, self.order)

    def __rsub__(self, other: int) -> "Scalar":
        return Scalar((other - self.value) % self.order, self.order)

    def __mul__(self, other: "Scalar | int") -> "Scalar":
        return Scalar((self.value * self._other_value(other)) % self.order, self.order)

    __rmul__ = __mul__

    def __neg__(self) -> "Scalar":
        return Scalar((-self.value) % self.order, self.order)

    def __int__(self) -> int:
        return self.value

    def inverse(self) -> "Scalar":
        if self.value == 0:
            raise ZeroDivisionError("zero scalar has no multiplicative inverse")
        return Scalar(pow(self.value, -1, self.order), self.order)

    def encode(self) -> bytes:
        return self.value.to_bytes((self.order.bit_length() + 7) // 8, "big")


@dataclasses.dataclass(frozen=True, slots=True)
class GroupElement:
    group: "PrimeOrderGroup"
    raw: typing.Hashable

    def _check_same_group(self, other: "GroupElement") -> None:
        if other.group is not self.group and other.group != self.group:
            raise ValueError(f"mixing elements of {self.group.params.name} and {other.group.params.name}")

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        self._check_same_group(other)
        return GroupElement(self.group, self.group.raw_multiply(self.raw, other.raw))

    def __truediv__(self, other: "GroupElement") -> "GroupElement":
        self._check_same_group(other)
        return GroupElement(self.group, self.group.raw_multiply(self.raw, self.group.raw_inverse(other.raw)))

    def inverse(self) -> "GroupElement":
        return GroupElement(self.group, self.group.raw_inverse(self.raw))

    def is_identity(self) -> bool:
        return self.raw == self.group.identity().raw

    def encode(self) -> bytes:
        return self.group.encode_raw(self.raw)

    def __repr__(self) -> str:
        return f"GroupElement({self.group.params.name}, {self.encode().hex()})"


class PrimeOrderGroup(abc.ABC):
    """Common interface of both backends. Subclasses only supply raw arithmetic and encodings."""

    @property
    @abc.abstractmethod
    def params(self) -> GroupParams: ...

    @abc.abstractmethod
    def identity(self) -> GroupElement: ...

    @abc.abstractmethod
    def generator(self) -> GroupElement: ...

    @abc.abstractmethod
    def raw_multiply(self, a: typing.Any, b: typing.Any) -> typing.Any: ...

    @abc.abstractmethod
    def raw_inverse(self, a: typing.Any) -> typing.Any: ...

    @abc.abstractmethod
    def raw_power(self, a: typing.Any, exponent: int) -> typing.Any: ...

    @abc.abstractmethod
    def encode_raw(self, a: typing.Any) -> bytes: ...

    @abc.abstractmethod
    def decode_raw(self, data: bytes) -> typing.Any: ...

    @abc.abstractmethod
    def hash_to_element(self, tag: bytes) -> GroupElement:
        """Element with no known discrete log relative to the generator."""

    @property
    def order(self) -> int:
        return self.params.order

    def scalar(self, value: int) -> Scalar:
        return Scalar(value % self.params.order, self.params.order)

    def decode_scalar(self, data: bytes) -> Scalar:
        if len(data) != self.params.scalar_length:
            raise cai_errors.BadLength(f"scalar encoding must be {self.params.scalar_length} bytes, got {len(data)}")
        value: int = int.from_bytes(data, "big")
        if value >= self.params.order:
            raise cai_errors.ScalarOutOfRange(f"scalar encoding {data.hex()} is not below the group order")
        return Scalar(value, self.params.order)

    def decode_element(self, data: bytes) -> GroupElement:
        if len(data) != self.params.element_length:
            raise cai_errors.BadLength(
                f"{self.params.name} element encoding must be {self.params.element_length} bytes, got {len(data)}")
        return GroupElement(self, self.decode_raw(data))

    def hash_to_scalar(self, *parts: bytes) -> Scalar:
        digest_input: bytes = b"".join(len(part).to_bytes(4, "big") + part for part in parts)
        wide_digest: bytes = hashlib.sha512(digest_input).digest()
        return self.scalar(int.from_bytes(wide_digest, "big"))


@dataclasses.dataclass(frozen=True)
class SchnorrGroup(PrimeOrderGroup):
    name: str
    p: int
    q: int
    g: int

    def __post_init__(self) -> None:
        if (self.p - 1) % self.q != 0:
            raise ValueError(f"q={self.q} does not divide p-1={self.p - 1}")
        if self.g in (0, 1) or pow(self.g, self.q, self.p) != 1:
            raise ValueError(f"g={self.g} does not generate the order-{self.q} subgroup")

    @functools.cached_property
    def params(self) -> GroupParams:
        element_length: int = (self.p.bit_length() + 7) // 8
        return GroupParams(name=self.name,
                           order=self.q,
                           generator_encoding=self.g.to_bytes(element_length, "big"),
                           element_length=element_length,
                           scalar_length=(self.q.bit_length() + 7) // 8)

    def element(self, value: int) -> GroupElement:
        return self.decode_element(value.to_bytes(self.params.element_length, "big"))

    def identity(self) -> GroupElement:
        return GroupElement(self, 1)

    def generator(self) -> GroupElement:
        return GroupElement(self, self.g)

    def raw_multiply(self, a: int, b: int) -> int:
        return (a * b) % self.p

    def raw_inverse(self, a: int) -> int:
        return pow(a, -1, self.p)

    def raw_power(self, a: int, exponent: int) -> int:
        return pow(a, exponent, self.p)

    def encode_raw(self, a: int) -> bytes:
        return a.to_bytes(self.params.element_length, "big")

    def decode_raw(self, data: bytes) -> int:
        value: int = int.from_bytes(data, "big")
        if not 1 <= value < self.p or pow(value, self.q, self.p) != 1:
            raise cai_errors.NotInGroup(f"{value} is not in the order-{self.q} subgroup mod {self.p}")
        return value

    def hash_to_element(self, tag: bytes) -> GroupElement:
        cofactor: int = (self.p - 1) // self.q
        for counter in range(1, 1024):
            digest: bytes = hashlib.sha256(b"hash-to-group|" + tag + counter.to_bytes(4, "big")).digest()
            candidate: int = pow(int.from_bytes(digest, "big") % self.p, cofactor, self.p)
            if candidate not in (0, 1):
                return GroupElement(self, candidate)

        raise RuntimeError(f"hash_to_element found no subgroup element for tag {tag!r}")


# NIST P-256 (FIPS 186-4, D.1.2.3)
_P256_P: int = 2**256 - 2**224 + 2**192 + 2**96 - 1
_P256_N: int = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
_P256_B: int = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B
_P256_GX: int = 0x6B17D1F2E12C4247F8BCE6E563A440F277037D812DEB33A0F4A13945D898C296
_P256_GY: int = 0x4FE342E2FE1A7F9B8EE7EB4A7C0F9E162BCE33576B315ECECBB6406837BF51F5

# pycryptodome represents the point at infinity as (0, 0); (0, 0) is not on the curve
type P256Raw = tuple[int, int]
_P256_INFINITY: P256Raw = (0, 0)


@dataclasses.dataclass(frozen=True)
class P256Group(PrimeOrderGroup):
    name: str = "p256"

    @functools.cached_property
    def params(self) -> GroupParams:
        return GroupParams(name=self.name,
                           order=_P256_N,
                           generator_encoding=self.encode_raw((_P256_GX, _P256_GY)),
                           element_length=33,
                           scalar_length=32)

    @staticmethod
    def _to_point(a: P256Raw) -> ECC.EccPoint:
        return ECC.EccPoint(a[0], a[1], curve="P-256")

    @staticmethod
    def _from_point(point: ECC.EccPoint) -> P256Raw:
        if point.is_point_at_infinity():
            return _P256_INFINITY
        return int(point.x), int(point.y)

    def identity(self) -> GroupElement:
        return GroupElement(self, _P256_INFINITY)

    def generator(self) -> GroupElement:
        return GroupElement(self, (_P256_GX, _P256_GY))

    def raw_multiply(self, a: P256Raw, b: P256Raw) -> P256Raw:
        if a == _P256_INFINITY:
            return b
        if b == _P256_INFINITY:
            return a
        return self._from_point(self._to_point(a) + self._to_point(b))

    def raw_inverse(self, a: P256Raw) -> P256Raw:
        if a == _P256_INFINITY:
            return a
        return a[0], (-a[1]) % _P256_P

    def raw_power(self, a: P256Raw, exponent: int) -> P256Raw:
        exponent %= _P256_N
        if exponent == 0 or a == _P256_INFINITY:
            return _P256_INFINITY
        return self._from_point(self._to_point(a) * exponent)

    def encode_raw(self, a: P256Raw) -> bytes:
        if a == _P256_INFINITY:
            return bytes(33)
        return bytes([2 | (a[1] & 1)]) + a[0].to_bytes(32, "big")

    def decode_raw(self, data: bytes) -> P256Raw:
        if data == bytes(33):
            return _P256_INFINITY
        prefix: int = data[0]
        if prefix not in (2, 3):
            raise cai_errors.NotInGroup(f"bad P-256 point prefix 0x{prefix:02x}")
        x: int = int.from_bytes(data[1:], "big")
        if x >= _P256_P:
            raise cai_errors.NotInGroup("P-256 x coordinate not reduced")
        y_squared: int = (pow(x, 3, _P256_P) - 3 * x + _P256_B) % _P256_P
        # p = 3 mod 4, so a square root is a single exponentiation
        y: int = pow(y_squared, (_P256_P + 1) // 4, _P256_P)
        if (y * y) % _P256_P != y_squared:
            raise cai_errors.NotInGroup(f"x={x:#x} is not the abscissa of a P-256 point")
        if (y & 1) != (prefix & 1):
            y = _P256_P - y
        return x, y

    def hash_to_element(self, tag: bytes) -> GroupElement:
        # Try-and-increment; the cofactor is 1 so every curve point is in the group
        for counter in range(1, 1024):
            digest: bytes = hashlib.sha256(b"hash-to-group|" + tag + counter.to_bytes(4, "big")).digest()
            candidate_x: int = int.from_bytes(digest, "big") % _P256_P
            try:
                return self.decode_element(b"\x02" + candidate_x.to_bytes(32, "big"))
            except cai_errors.NotInGroup:
                continue

        raise RuntimeError(f"hash_to_element found no curve point for tag {tag!r}")


TINY_GROUP: SchnorrGroup = SchnorrGroup(name="tiny", p=23, q=11, g=2)
PRODUCTION_GROUP: P256Group = P256Group()

GROUPS_BY_NAME: dict[str, PrimeOrderGroup] = {
    "tiny"          : TINY_GROUP,
    "production"    : PRODUCTION_GROUP,
}


@dataclasses.dataclass(slots=True)
class GroupContext:
    """A group plus the exponentiation counter of whichever role owns this context."""
    group: PrimeOrderGroup
    exponentiations: int = 0

    @property
    def g(self) -> GroupElement:
        return self.group.generator()

    @property
    def order(self) -> int:
        return self.group.order

    def exp(self, base: GroupElement, exponent: Scalar | int) -> GroupElement:
        self.exponentiations += 1
        return GroupElement(base.group, base.group.raw_power(base.raw, int(exponent)))

    def random_scalar(self, rng: EntropySource) -> Scalar:
        return Scalar(rng.randbelow(self.group.order), self.group.order)

    def fork(self) -> "GroupContext":
        return GroupContext(self.group)


def exp(context: GroupContext, base: GroupElement, exponent: Scalar | int) -> GroupElement:
    return context.exp(base, exponent)


def random_scalar(context: GroupContext, rng: EntropySource) -> Scalar:
    return context.random_scalar(rng)


def decode_element(group: PrimeOrderGroup, data: bytes) -> GroupElement:
    return group.decode_element(data)


def group_by_name(name: str) -> PrimeOrderGroup:
    if name not in GROUPS_BY_NAME:
        raise cai_errors.ConfigError(f"unknown group \"{name}\" (expected one of {sorted(GROUPS_BY_NAME)})")
    return GROUPS_BY_NAME[name]
