"""Hashing, signatures, hybrid sealing, passphrase-protected keys, secure erasure.

Every other service builds on the small contract here: SHA-256 digests,
sign/verify, seal/open (public-key hybrid encryption), scrypt-protected
private keys, and best-effort in-memory erasure of secrets.

Two interchangeable schemes sit behind the same interface:

* ``curve25519`` (default): Ed25519 signatures plus X25519 + HKDF +
  AES-256-GCM sealing.  Key generation accepts a seed, so test runs are
  fully reproducible.
* ``rsa2048``: RSA-PSS signatures plus RSA-OAEP-wrapped AES-256-GCM
  sealing.  Seeded generation is not supported by the backend.

Key files on disk use a small length-prefixed container with a 4-byte
magic header; see docs/formats.md for the exact byte layout.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.kdf.scrypt import Scrypt

from .encoding import FormatError, lp_read, lp_write

KEYFILE_MAGIC = b"QVK1"
_KIND_PUBLIC = 1
_KIND_ENCRYPTED_PRIVATE = 2

# Interactive-strength scrypt parameters; memory-hard on purpose.
SCRYPT_N = 2**14
SCRYPT_R = 8
SCRYPT_P = 1

DEFAULT_SCHEME = "curve25519"


class CryptoError(Exception):
    """Base class for failures in this module."""


class WrongPassphraseError(CryptoError):
    """Authenticated decryption of a protected private key failed."""


class OpenError(CryptoError):
    """A sealed envelope could not be opened (wrong key or corrupted)."""


class KeyPurpose(str, Enum):
    HTTPS = "https"
    COMMUNICATION = "communication"
    DATABASE = "database"


@dataclass(frozen=True)
class Digest:
    """A SHA-256 output; always exactly 32 bytes."""

    value: bytes

    def __post_init__(self) -> None:
        if len(self.value) != 32:
            raise CryptoError(f"digest must be 32 bytes, got {len(self.value)}")

    @property
    def hex(self) -> str:
        return self.value.hex()


@dataclass(frozen=True)
class Signature:
    value: bytes
    signer_purpose: KeyPurpose


@dataclass(frozen=True)
class PublicKey:
    value: bytes
    purpose: KeyPurpose
    scheme: str

    @property
    def key_id(self) -> str:
        return hashlib.sha256(self.value).hexdigest()


@dataclass(frozen=True)
class KeyPair:
    public: bytes
    private: bytes
    purpose: KeyPurpose
    scheme: str

    def public_key(self) -> PublicKey:
        return PublicKey(value=self.public, purpose=self.purpose, scheme=self.scheme)

    @property
    def key_id(self) -> str:
        return self.public_key().key_id


@dataclass(frozen=True)
class EncryptedPrivateKey:
    ciphertext: bytes
    kdf_salt: bytes
    purpose: KeyPurpose
    scheme: str


@dataclass(frozen=True)
class SealedEnvelope:
    recipient_key_id: str
    wrapped_key: bytes
    ciphertext: bytes
    scheme: str

    def to_wire(self) -> dict:
        from .encoding import b64

        return {
            "recipient_key_id": self.recipient_key_id,
            "wrapped_key": b64(self.wrapped_key),
            "ciphertext": b64(self.ciphertext),
            "scheme": self.scheme,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "SealedEnvelope":
        from .encoding import unb64

        return cls(
            recipient_key_id=str(obj["recipient_key_id"]),
            wrapped_key=unb64(obj["wrapped_key"]),
            ciphertext=unb64(obj["ciphertext"]),
            scheme=str(obj["scheme"]),
        )


def hash_bytes(data: bytes) -> Digest:
    """SHA-256 of the input."""
    return Digest(hashlib.sha256(data).digest())


# ---------------------------------------------------------------------------
# Schemes
# ---------------------------------------------------------------------------


class _Curve25519Scheme:
    """Ed25519 signatures + X25519/HKDF/AES-GCM hybrid sealing; seedable."""

    name = "curve25519"

    def generate(self, seed: bytes | None) -> tuple[bytes, bytes]:
        if seed is None:
            ed_seed = os.urandom(32)
            x_seed = os.urandom(32)
        else:
            ed_seed = hashlib.sha256(b"qv-ed25519:" + seed).digest()
            x_seed = hashlib.sha256(b"qv-x25519:" + seed).digest()
        ed_priv = Ed25519PrivateKey.from_private_bytes(ed_seed)
        x_priv = X25519PrivateKey.from_private_bytes(x_seed)
        public = self._raw_public(ed_priv.public_key()) + self._raw_public_x(x_priv.public_key())
        private = ed_seed + x_seed
        return public, private

    @staticmethod
    def _raw_public(key: Ed25519PublicKey) -> bytes:
        return key.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)

    @staticmethod
    def _raw_public_x(key: X25519PublicKey) -> bytes:
        return key.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)

    def sign(self, private: bytes, message: bytes) -> bytes:
        return Ed25519PrivateKey.from_private_bytes(private[:32]).sign(message)

    def verify(self, public: bytes, message: bytes, sig: bytes) -> bool:
        try:
            Ed25519PublicKey.from_public_bytes(public[:32]).verify(sig, message)
            return True
        except (InvalidSignature, ValueError):
            return False

    def seal(self, public: bytes, plaintext: bytes) -> tuple[bytes, bytes]:
        recipient = X25519PublicKey.from_public_bytes(public[32:64])
        ephemeral = X25519PrivateKey.generate()
        shared = ephemeral.exchange(recipient)
        eph_pub = self._raw_public_x(ephemeral.public_key())
        key = HKDF(
            algorithm=hashes.SHA256(),
            length=32,
            salt=None,
            info=b"qv-seal-v1" + eph_pub + public[32:64],
        ).derive(shared)
        nonce = os.urandom(12)
        ct = AESGCM(key).encrypt(nonce, plaintext, None)
        return eph_pub, nonce + ct

    def open(self, private: bytes, wrapped_key: bytes, ciphertext: bytes) -> bytes:
        if len(wrapped_key) != 32 or len(ciphertext) < 13:
            raise OpenError("malformed sealed envelope")
        x_priv = X25519PrivateKey.from_private_bytes(private[32:64])
        my_pub = self._raw_public_x(x_priv.public_key())
        try:
            shared = x_priv.exchange(X25519PublicKey.from_public_bytes(wrapped_key))
        except ValueError as exc:
            raise OpenError(f"bad ephemeral key: {exc}") from exc
        key = HKDF(
            algorithm=hashes.SHA256(),
            length=32,
            salt=None,
            info=b"qv-seal-v1" + wrapped_key + my_pub,
        ).derive(shared)
        try:
            return AESGCM(key).decrypt(ciphertext[:12], ciphertext[12:], None)
        except InvalidTag as exc:
            raise OpenError("seal authentication failed") from exc


class _Rsa2048Scheme:
    """RSA-PSS signatures + RSA-OAEP-wrapped AES-GCM sealing."""

    name = "rsa2048"

    def generate(self, seed: bytes | None) -> tuple[bytes, bytes]:
        if seed is not None:
            raise CryptoError("rsa2048 does not support seeded key generation")
        priv = rsa.generate_private_key(public_exponent=65537, key_size=2048)
        public = priv.public_key().public_bytes(
            serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
        )
        private = priv.private_bytes(
            serialization.Encoding.DER,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )
        return public, private

    @staticmethod
    def _pss() -> padding.PSS:
        return padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=padding.PSS.MAX_LENGTH)

    @staticmethod
    def _oaep() -> padding.OAEP:
        return padding.OAEP(mgf=padding.MGF1(hashes.SHA256()), algorithm=hashes.SHA256(), label=None)

    def sign(self, private: bytes, message: bytes) -> bytes:
        key = serialization.load_der_private_key(private, password=None)
        return key.sign(message, self._pss(), hashes.SHA256())

    def verify(self, public: bytes, message: bytes, sig: bytes) -> bool:
        try:
            key = serialization.load_der_public_key(public)
            key.verify(sig, message, self._pss(), hashes.SHA256())
            return True
        except (InvalidSignature, ValueError, TypeError):
            return False

    def seal(self, public: bytes, plaintext: bytes) -> tuple[bytes, bytes]:
        pub = serialization.load_der_public_key(public)
        session_key = os.urandom(32)
        wrapped = pub.encrypt(session_key, self._oaep())
        nonce = os.urandom(12)
        ct = AESGCM(session_key).encrypt(nonce, plaintext, None)
        return wrapped, nonce + ct

    def open(self, private: bytes, wrapped_key: bytes, ciphertext: bytes) -> bytes:
        if len(ciphertext) < 13:
            raise OpenError("malformed sealed envelope")
        key = serialization.load_der_private_key(private, password=None)
        try:
            session_key = key.decrypt(wrapped_key, self._oaep())
        except ValueError as exc:
            raise OpenError("session key unwrap failed") from exc
        try:
            return AESGCM(session_key).decrypt(ciphertext[:12], ciphertext[12:], None)
        except InvalidTag as exc:
            raise OpenError("seal authentication failed") from exc


_SCHEMES = {s.name: s for s in (_Curve25519Scheme(), _Rsa2048Scheme())}


def _scheme(name: str):
    try:
        return _SCHEMES[name]
    except KeyError:
        raise CryptoError(f"unknown scheme: {name!r}") from None


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def generate_keypair(
    purpose: KeyPurpose, seed: bytes | None = None, scheme: str = DEFAULT_SCHEME
) -> KeyPair:
    """Create a fresh keypair; identical (seed, scheme, purpose) reproduces it."""
    if seed is not None:
        # Mix the purpose in so one seed yields distinct pairs per role.
        seed = hashlib.sha256(purpose.value.encode() + b":" + seed).digest()
    public, private = _scheme(scheme).generate(seed)
    return KeyPair(public=public, private=private, purpose=purpose, scheme=scheme)


def sign(keypair: KeyPair, message: bytes) -> Signature:
    raw = _scheme(keypair.scheme).sign(keypair.private, message)
    return Signature(value=raw, signer_purpose=keypair.purpose)


def verify(public_key: PublicKey, message: bytes, signature: Signature | bytes) -> bool:
    raw = signature.value if isinstance(signature, Signature) else signature
    return _scheme(public_key.scheme).verify(public_key.value, message, raw)


def seal(recipient: PublicKey, plaintext: bytes) -> SealedEnvelope:
    wrapped, ct = _scheme(recipient.scheme).seal(recipient.value, plaintext)
    return SealedEnvelope(
        recipient_key_id=recipient.key_id, wrapped_key=wrapped, ciphertext=ct, scheme=recipient.scheme
    )


def open_envelope(keypair: KeyPair, envelope: SealedEnvelope) -> bytes:
    if envelope.recipient_key_id != keypair.key_id:
        raise OpenError("envelope is addressed to a different key")
    if envelope.scheme != keypair.scheme:
        raise OpenError("scheme mismatch")
    return _scheme(keypair.scheme).open(keypair.private, envelope.wrapped_key, envelope.ciphertext)


def protect_private_key(keypair: KeyPair, passphrase: str) -> EncryptedPrivateKey:
    """Encrypt the private half under a passphrase-derived key (scrypt + AES-GCM)."""
    if not passphrase:
        raise CryptoError("passphrase must be non-empty")
    salt = os.urandom(16)
    key = _derive_passphrase_key(passphrase, salt)
    nonce = os.urandom(12)
    aad = f"{keypair.scheme}:{keypair.purpose.value}".encode()
    ct = AESGCM(key).encrypt(nonce, keypair.private, aad)
    return EncryptedPrivateKey(
        ciphertext=nonce + ct, kdf_salt=salt, purpose=keypair.purpose, scheme=keypair.scheme
    )


def unlock_private_key(epk: EncryptedPrivateKey, passphrase: str, public: bytes) -> KeyPair:
    """Recover the keypair; a wrong passphrase raises WrongPassphraseError."""
    if not passphrase:
        raise WrongPassphraseError("passphrase must be non-empty")
    key = _derive_passphrase_key(passphrase, epk.kdf_salt)
    aad = f"{epk.scheme}:{epk.purpose.value}".encode()
    try:
        private = AESGCM(key).decrypt(epk.ciphertext[:12], epk.ciphertext[12:], aad)
    except InvalidTag as exc:
        raise WrongPassphraseError("wrong passphrase") from exc
    return KeyPair(public=public, private=private, purpose=epk.purpose, scheme=epk.scheme)


def _derive_passphrase_key(passphrase: str, salt: bytes) -> bytes:
    kdf = Scrypt(salt=salt, length=32, n=SCRYPT_N, r=SCRYPT_R, p=SCRYPT_P)
    return kdf.derive(passphrase.encode("utf-8"))


def secure_erase(buffer: bytearray | memoryview) -> None:
    """Overwrite a caller-owned secret buffer with pseudorandom bytes.

    Best-effort at the application layer: Python may hold other copies of
    the value (interning, swap); OS-level hygiene is a deployment concern.
    """
    if isinstance(buffer, memoryview) and buffer.readonly:
        raise TypeError("cannot erase a read-only buffer")
    if not isinstance(buffer, (bytearray, memoryview)):
        raise TypeError("secure_erase needs a mutable byte buffer")
    buffer[:] = os.urandom(len(buffer))


def constant_time_equal(a: bytes, b: bytes) -> bool:
    return hmac.compare_digest(a, b)


# ---------------------------------------------------------------------------
# Key files on disk
# ---------------------------------------------------------------------------


def save_public_key(path: Path, pub: PublicKey) -> None:
    with open(path, "wb") as fp:
        fp.write(KEYFILE_MAGIC)
        fp.write(struct.pack(">B", _KIND_PUBLIC))
        lp_write(fp, pub.scheme.encode())
        lp_write(fp, pub.purpose.value.encode())
        lp_write(fp, pub.value)


def save_encrypted_private_key(path: Path, epk: EncryptedPrivateKey) -> None:
    with open(path, "wb") as fp:
        fp.write(KEYFILE_MAGIC)
        fp.write(struct.pack(">B", _KIND_ENCRYPTED_PRIVATE))
        lp_write(fp, epk.scheme.encode())
        lp_write(fp, epk.purpose.value.encode())
        lp_write(fp, epk.kdf_salt)
        lp_write(fp, struct.pack(">III", SCRYPT_N, SCRYPT_R, SCRYPT_P))
        lp_write(fp, epk.ciphertext)


def _read_header(fp, expect_kind: int) -> tuple[str, KeyPurpose]:
    magic = fp.read(4)
    if magic != KEYFILE_MAGIC:
        raise FormatError("not a key file (bad magic)")
    (kind,) = struct.unpack(">B", fp.read(1))
    if kind != expect_kind:
        raise FormatError(f"unexpected key file kind {kind}")
    scheme = lp_read(fp).decode()
    purpose = KeyPurpose(lp_read(fp).decode())
    return scheme, purpose


def load_public_key(path: Path) -> PublicKey:
    with open(path, "rb") as fp:
        scheme, purpose = _read_header(fp, _KIND_PUBLIC)
        value = lp_read(fp)
    return PublicKey(value=value, purpose=purpose, scheme=scheme)


def load_encrypted_private_key(path: Path) -> EncryptedPrivateKey:
    with open(path, "rb") as fp:
        scheme, purpose = _read_header(fp, _KIND_ENCRYPTED_PRIVATE)
        salt = lp_read(fp)
        params = lp_read(fp)
        if struct.unpack(">III", params) != (SCRYPT_N, SCRYPT_R, SCRYPT_P):
            raise FormatError("unsupported KDF parameters")
        ciphertext = lp_read(fp)
    return EncryptedPrivateKey(ciphertext=ciphertext, kdf_salt=salt, purpose=purpose, scheme=scheme)


def load_keypair(pub_path: Path, priv_path: Path, passphrase: str) -> KeyPair:
    pub = load_public_key(pub_path)
    epk = load_encrypted_private_key(priv_path)
    if (epk.scheme, epk.purpose) != (pub.scheme, pub.purpose):
        raise FormatError("public/private key file mismatch")
    return unlock_private_key(epk, passphrase, pub.value)
