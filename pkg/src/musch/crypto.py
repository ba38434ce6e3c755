"""Hashing, per-node signatures and aggregate signatures.

The simulator uses :class:`MockScheme`: a signature is a keyed hash of the
signed digest under a per-identity secret derived from the run seed, and an
aggregate is the sorted signer set plus a hash over the constituent tags.
Nodes receive a :class:`Signer` bound to the identities they own, so the
adversary can only sign for corrupted nodes.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass
from typing import Hashable, Iterable, Protocol, Sequence

from .encoding import encode, register

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)

Identity = Hashable  # replica ids are ints, client ids are strings


def hash_bytes(*parts: bytes) -> bytes:
    h = hashlib.sha256()
    for p in parts:
        h.update(len(p).to_bytes(4, "big"))
        h.update(p)
    return h.digest()


def digest_of(value) -> bytes:
    """Digest of the canonical encoding of ``value``."""
    return hashlib.sha256(encode(value)).digest()


class CryptoError(ValueError):
    pass


@register
@dataclass(frozen=True)
class Signature:
    signer: object
    over: bytes
    tag: bytes


@register
@dataclass(frozen=True)
class AggregateSignature:
    signers: tuple  # sorted, distinct
    over: bytes
    tag: bytes

    def __len__(self) -> int:
        return len(self.signers)


class SignatureScheme(Protocol):
    def sign(self, digest: bytes, signer: Identity) -> Signature: ...

    def verify(self, sig: Signature | None, digest: bytes, signer: Identity) -> bool: ...

    def aggregate(self, sigs: Iterable[Signature]) -> AggregateSignature: ...

    def verify_aggregate(self, agg: AggregateSignature, digests: Sequence[bytes],
                         identities: Sequence[Identity]) -> bool: ...


def _pairs_over(pairs) -> bytes:
    return digest_of(tuple(sorted(pairs, key=lambda p: encode(p[0]))))


class MockScheme:
    """Deterministic keyed-hash signature scheme."""

    def __init__(self, seed: int, identities: Iterable[Identity]):
        self._seed = seed
        self._keys = {i: hash_bytes(b"musch-key", encode(seed), encode(i)) for i in identities}

    def register(self, identity: Identity) -> None:
        self._keys.setdefault(identity, hash_bytes(b"musch-key", encode(self._seed), encode(identity)))

    def _tag(self, digest: bytes, signer: Identity) -> bytes:
        try:
            key = self._keys[signer]
        except KeyError:
            raise CryptoError(f"unknown signer identity {signer!r}") from None
        return hmac.new(key, digest, hashlib.sha256).digest()

    def sign(self, digest: bytes, signer: Identity) -> Signature:
        return Signature(signer, digest, self._tag(digest, signer))

    def verify(self, sig: Signature | None, digest: bytes, signer: Identity) -> bool:
        if sig is None or sig.signer != signer or sig.over != digest:
            return False
        if signer not in self._keys:
            return False
        return hmac.compare_digest(sig.tag, self._tag(digest, signer))

    def aggregate(self, sigs: Iterable[Signature]) -> AggregateSignature:
        sigs = list(sigs)
        seen = set()
        for s in sigs:
            if s.signer in seen:
                raise CryptoError(f"duplicate signer {s.signer!r}")
            seen.add(s.signer)
            if not self.verify(s, s.over, s.signer):
                raise CryptoError(f"invalid constituent signature from {s.signer!r}")
        sigs.sort(key=lambda s: encode(s.signer))
        return AggregateSignature(
            signers=tuple(s.signer for s in sigs),
            over=_pairs_over((s.signer, s.over) for s in sigs),
            tag=digest_of(tuple(s.tag for s in sigs)),
        )

    def verify_aggregate(self, agg: AggregateSignature, digests: Sequence[bytes],
                         identities: Sequence[Identity]) -> bool:
        """``digests[k]`` is the message signed by ``identities[k]``; pair order is irrelevant."""
        if len(digests) != len(identities) or len(set(identities)) != len(identities):
            return False
        pairs = sorted(zip(identities, digests), key=lambda p: encode(p[0]))
        if tuple(p[0] for p in pairs) != tuple(agg.signers):
            return False
        if _pairs_over(pairs) != agg.over:
            return False
        try:
            tags = tuple(self._tag(d, i) for i, d in pairs)
        except CryptoError:
            return False
        return hmac.compare_digest(digest_of(tags), agg.tag)


class Signer:
    """Signing capability for a fixed set of owned identities."""

    def __init__(self, scheme: SignatureScheme, owned: Iterable[Identity]):
        self.scheme = scheme
        self.owned = frozenset(owned)

    def sign(self, digest: bytes, identity: Identity) -> Signature:
        if identity not in self.owned:
            raise CryptoError(f"identity {identity!r} is not owned by this signer")
        return self.scheme.sign(digest, identity)
