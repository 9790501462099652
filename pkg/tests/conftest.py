import dataclasses

import pytest

import cai_protocol
import enc_schemes
import group_arith
import verifiability
from group_arith import TINY_GROUP, GroupContext


# Subgroup of Z_23^* generated by 2, indexed by discrete log
TINY_POWERS: list[int] = [pow(2, exponent, 23) for exponent in range(11)]

# Alphabet position i encodes as 2^(i+1): v1->2, v2->4, v3->8, v4->16, v5->9
FIVE_CHOICES: tuple[str, ...] = ("v1", "v2", "v3", "v4", "v5")
ELECTION_ID: bytes = bytes(range(16))


@dataclasses.dataclass
class TinyElection:
    """Running example: sk=3, pk=8 in the p=23, q=11, g=2 group."""
    keys: enc_schemes.KeyPair
    signing_key: verifiability.SigningKeyPair
    election: cai_protocol.ElectionPublic

    def server(self, rng: group_arith.EntropySource, **kwargs) -> cai_protocol.VotingServer:
        return cai_protocol.VotingServer(GroupContext(TINY_GROUP), self.election, self.signing_key, rng,
                                         group_arith.SeededEntropy(99), **kwargs)


def tiny_scalar(value: int) -> group_arith.Scalar:
    return TINY_GROUP.scalar(value)


def tiny_element(value: int) -> group_arith.GroupElement:
    return TINY_GROUP.element(value)


def make_election(group: group_arith.PrimeOrderGroup,
                  sk: int,
                  alphabet: tuple[str, ...] = FIVE_CHOICES,
                  ballot_length: int = 1,
                  signing_seed: int = 5) -> TinyElection:
    setup_context: GroupContext = GroupContext(group)
    keys: enc_schemes.KeyPair = enc_schemes.keypair_from_secret(setup_context, group.scalar(sk))
    signing_key: verifiability.SigningKeyPair = verifiability.signing_keygen(
        setup_context, group_arith.SeededEntropy(signing_seed))
    election: cai_protocol.ElectionPublic = cai_protocol.ElectionPublic(
        election_id=ELECTION_ID, pk=keys.pk, encoding=enc_schemes.VoteEncoding(group, alphabet),
        server_verification=signing_key.verification, ballot_length=ballot_length)
    return TinyElection(keys=keys, signing_key=signing_key, election=election)


@pytest.fixture
def tiny_election() -> TinyElection:
    return make_election(TINY_GROUP, sk=3)


@pytest.fixture
def production_election() -> TinyElection:
    return make_election(group_arith.PRODUCTION_GROUP, sk=0x1234567890ABCDEF, alphabet=("yes", "no", "abstain"))
