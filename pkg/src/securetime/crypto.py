"""Signature schemes and the hash used for key ids and SYNC/FOLLOWUP linking.

Two schemes are registered:

``ed25519``
    128-bit elliptic-curve signatures (32 B public keys, 64 B signatures),
    backed by the ``cryptography`` package.
``test``
    A fast, deliberately insecure keyed-digest tag with the same sizes.
    Anyone holding the public key can produce tags, so it is only useful for
    high-volume simulations where the adversary never computes signatures.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

SEED_LEN = 32
DIGEST_LEN = 32
KEY_ID_LEN = 8


class CryptoError(Exception):
    pass


class UnsupportedScheme(CryptoError):
    pass


@dataclass(frozen=True)
class KeyPair:
    secret: bytes
    public: bytes


@dataclass(frozen=True)
class SignatureScheme:
    name: str
    signature_len: int
    public_key_len: int

    def keypair_from_seed(self, seed: bytes) -> KeyPair:
        raise NotImplementedError

    def sign(self, secret: bytes, message: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, public: bytes, message: bytes, sig: bytes) -> bool:
        raise NotImplementedError


@lru_cache(maxsize=1024)
def _ed_private(secret: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(secret)


@lru_cache(maxsize=1024)
def _ed_public(public: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(public)


class Ed25519Scheme(SignatureScheme):
    def __init__(self) -> None:
        super().__init__("ed25519", 64, 32)

    def keypair_from_seed(self, seed: bytes) -> KeyPair:
        pub = _ed_private(seed).public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        )
        return KeyPair(secret=bytes(seed), public=pub)

    def sign(self, secret: bytes, message: bytes) -> bytes:
        return _ed_private(secret).sign(message)

    def verify(self, public: bytes, message: bytes, sig: bytes) -> bool:
        if len(public) != self.public_key_len or len(sig) != self.signature_len:
            return False
        try:
            _ed_public(bytes(public)).verify(bytes(sig), bytes(message))
        except (InvalidSignature, ValueError):
            return False
        return True


class TestScheme(SignatureScheme):
    # Not collected by pytest despite the name.
    __test__ = False

    def __init__(self) -> None:
        super().__init__("test", 64, 32)

    def keypair_from_seed(self, seed: bytes) -> KeyPair:
        return KeyPair(secret=bytes(seed), public=hashlib.sha256(b"test-pk" + seed).digest())

    def _tag(self, public: bytes, message: bytes) -> bytes:
        return hashlib.sha512(public + message).digest()

    def sign(self, secret: bytes, message: bytes) -> bytes:
        return self._tag(self.keypair_from_seed(secret).public, message)

    def verify(self, public: bytes, message: bytes, sig: bytes) -> bool:
        if len(public) != self.public_key_len or len(sig) != self.signature_len:
            return False
        return self._tag(bytes(public), bytes(message)) == bytes(sig)


SCHEMES: dict[str, SignatureScheme] = {s.name: s for s in (Ed25519Scheme(), TestScheme())}


def get_scheme(name: str | SignatureScheme) -> SignatureScheme:
    if isinstance(name, SignatureScheme):
        return name
    try:
        return SCHEMES[name]
    except KeyError:
        raise UnsupportedScheme(f"unsupported signature scheme: {name!r}") from None


def generate_keypair(scheme: str | SignatureScheme, seed: bytes) -> KeyPair:
    scheme = get_scheme(scheme)
    if len(seed) != SEED_LEN:
        raise CryptoError(f"seed must be {SEED_LEN} bytes, got {len(seed)}")
    return scheme.keypair_from_seed(bytes(seed))


def sign(scheme: str | SignatureScheme, secret: bytes, message: bytes) -> bytes:
    return get_scheme(scheme).sign(secret, message)


def verify(scheme: str | SignatureScheme, public: bytes, message: bytes, sig: bytes) -> bool:
    """Total over arbitrary input: malformed keys or signatures just reject."""
    return get_scheme(scheme).verify(public, message, sig)


def digest(message: bytes) -> bytes:
    return hashlib.sha256(message).digest()


def key_id(public: bytes) -> bytes:
    return digest(public)[:KEY_ID_LEN]
