"""Asymmetric identities: Ed25519 key pairs, hash-derived account ids, signatures.

Accounts are identified by the SHA-256 digest of their Ed25519 public key.
Key generation is deterministic from a 64-bit seed so that any run can be
reproduced; production-grade entropy is explicitly out of scope.

Signatures carry the signer's public key so that a record plus its
signatures is self-contained: any third party can check the key against
the account id and the signature against the message, without a key
directory. This is what makes fraud evidence independently verifiable.
"""

import hashlib
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

DIGEST_LEN = 32
PUBLIC_KEY_LEN = 32
SECRET_KEY_LEN = 32
SIGNATURE_LEN = 64

_KEYGEN_DOMAIN = b"latticesim:keygen:"


class MalformedKeyError(ValueError):
    """Raised for key material of the wrong shape."""


@dataclass(frozen=True, order=True)
class AccountId:
    """SHA-256 digest of a public key, the canonical account identity."""

    digest: bytes

    def __post_init__(self):
        if len(self.digest) != DIGEST_LEN:
            raise MalformedKeyError(f"account digest must be {DIGEST_LEN} bytes")

    @property
    def hex(self) -> str:
        return self.digest.hex()

    @classmethod
    def from_hex(cls, text: str) -> "AccountId":
        return cls(bytes.fromhex(text))

    def short(self) -> str:
        return self.digest.hex()[:12]

    def __str__(self) -> str:
        return self.hex


@dataclass(frozen=True)
class KeyPair:
    secret_key: bytes
    public_key: bytes

    @property
    def account(self) -> AccountId:
        return account_id(self.public_key)


@dataclass(frozen=True)
class Signature:
    """Detached Ed25519 signature, carrying the signer id and public key."""

    signer: AccountId
    public_key: bytes
    data: bytes


def generate_keypair(seed: int) -> KeyPair:
    """Derive an Ed25519 key pair from a 64-bit seed.

    The same seed yields bitwise-identical keys on any platform: the seed
    is expanded with SHA-256 and fed to Ed25519 as the private key bytes.
    """
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    secret = hashlib.sha256(_KEYGEN_DOMAIN + seed.to_bytes(8, "big")).digest()
    priv = Ed25519PrivateKey.from_private_bytes(secret)
    return KeyPair(secret_key=secret, public_key=priv.public_key().public_bytes_raw())


def account_id(public_key: bytes) -> AccountId:
    if len(public_key) != PUBLIC_KEY_LEN:
        raise MalformedKeyError(f"public key must be {PUBLIC_KEY_LEN} bytes")
    return AccountId(hashlib.sha256(public_key).digest())


def sign(secret_key: bytes, message: bytes) -> Signature:
    if len(secret_key) != SECRET_KEY_LEN:
        raise MalformedKeyError(f"secret key must be {SECRET_KEY_LEN} bytes")
    priv = Ed25519PrivateKey.from_private_bytes(secret_key)
    public_key = priv.public_key().public_bytes_raw()
    return Signature(
        signer=account_id(public_key),
        public_key=public_key,
        data=priv.sign(message),
    )


def verify(public_key: bytes, message: bytes, signature: Signature) -> bool:
    """True iff ``signature`` was produced over exactly ``message`` by the
    secret key matching ``public_key``. Total: malformed input returns False."""
    try:
        Ed25519PublicKey.from_public_bytes(public_key).verify(signature.data, message)
        return True
    except (InvalidSignature, ValueError, TypeError):
        return False


def signature_valid(message: bytes, signature: Signature) -> bool:
    """Self-contained check: the carried key must hash to the claimed signer
    and the signature must verify under it."""
    if account_id_safe(signature.public_key) != signature.signer:
        return False
    return verify(signature.public_key, message, signature)


def account_id_safe(public_key: bytes):
    try:
        return account_id(public_key)
    except MalformedKeyError:
        return None
