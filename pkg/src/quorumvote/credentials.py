"""Pre-voting credential ceremony.

Generates voter credentials, produces the dual-signed register rows
(registry signs the password hash, validator counter-signs the registry's
signature), signs the whole register, and exports credentials for
distribution under cover.

Register rows hold: voter id, SHA-256 password hash, registry signature,
validator signature.  Neither server ever stores the password itself.
"""

from __future__ import annotations

import random
import secrets
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path

from .crypto import (
    CryptoError,
    Digest,
    KeyPair,
    KeyPurpose,
    PublicKey,
    SealedEnvelope,
    Signature,
    hash_bytes,
    open_envelope,
    seal,
    sign,
    verify,
    generate_keypair,
)
from .encoding import FormatError, b64, canonical_json_bytes, lp_bytes, unb64

# Characters that survive the image-map keyboard: no 0/O or 1/l lookalikes.
PASSWORD_ALPHABET = "23456789abcdefghijkmnopqrstuvwxyz"

CREDENTIAL_FILE_HEADER = "qv-credentials v1"
REGISTER_FILE_HEADER = "qv-register v1"


class CredentialError(Exception):
    pass


class AlreadyRevealedError(CredentialError):
    """A covered credential may be revealed exactly once."""


@dataclass(frozen=True)
class PasswordPolicy:
    min_length: int = 12
    alphabet: str = PASSWORD_ALPHABET

    def check(self, password: str) -> bool:
        return len(password) >= self.min_length and all(c in self.alphabet for c in password)


@dataclass(frozen=True)
class Credential:
    voter_id: str
    password: str


@dataclass(frozen=True)
class CredentialRecord:
    voter_id: str
    pw_hash: Digest
    sig_ers: Signature
    sig_vs: Signature


@dataclass(frozen=True)
class SignedRegister:
    records: tuple[CredentialRecord, ...]
    register_signature: Signature


@dataclass
class CredentialEnvelope:
    """Models the covered credential letter: a one-way reveal.

    The secret is sealed under a per-export cover key held by the envelope
    itself; reveal() opens it once and refuses thereafter.
    """

    voter_id: str
    covered_secret: SealedEnvelope
    revealed: bool = False
    _cover_key: KeyPair = field(repr=False, default=None)  # type: ignore[assignment]

    def reveal(self) -> Credential:
        if self.revealed:
            raise AlreadyRevealedError(f"envelope for {self.voter_id} was already revealed")
        plaintext = open_envelope(self._cover_key, self.covered_secret)
        self.revealed = True
        voter_id, password = plaintext.decode("utf-8").split("\t", 1)
        return Credential(voter_id=voter_id, password=password)


@dataclass
class RecordCheck:
    voter_id: str
    ers_signature_ok: bool
    vs_signature_ok: bool


@dataclass
class RegisterVerification:
    record_checks: list[RecordCheck]
    register_signature_ok: bool
    malformed: str | None = None

    @property
    def ok(self) -> bool:
        return (
            self.malformed is None
            and self.register_signature_ok
            and all(c.ers_signature_ok and c.vs_signature_ok for c in self.record_checks)
        )


def generate_credentials(
    count: int,
    policy: PasswordPolicy | None = None,
    seed: int | None = None,
) -> list[Credential]:
    """Create `count` credentials with unique sequential+random-suffix ids."""
    if count < 1:
        raise CredentialError("count must be >= 1")
    policy = policy or PasswordPolicy()
    rng = random.Random(seed) if seed is not None else secrets.SystemRandom()
    credentials = []
    for index in range(1, count + 1):
        suffix = "".join(rng.choice(policy.alphabet) for _ in range(6))
        voter_id = f"V{index:06d}-{suffix}"
        password = "".join(rng.choice(policy.alphabet) for _ in range(policy.min_length))
        credentials.append(Credential(voter_id=voter_id, password=password))
    return credentials


def sign_credential(
    credential: Credential, ers_comm_key: KeyPair, vs_comm_key: KeyPair
) -> CredentialRecord:
    """Build one register row: the registry signs hash(password), the
    validator signs the registry's signature bytes."""
    for key, who in ((ers_comm_key, "registry"), (vs_comm_key, "validator")):
        if key.purpose is not KeyPurpose.COMMUNICATION:
            raise CryptoError(f"{who} key must have communication purpose, got {key.purpose.value}")
    pw_hash = hash_bytes(credential.password.encode("utf-8"))
    sig_ers = sign(ers_comm_key, pw_hash.value)
    sig_vs = sign(vs_comm_key, sig_ers.value)
    return CredentialRecord(
        voter_id=credential.voter_id, pw_hash=pw_hash, sig_ers=sig_ers, sig_vs=sig_vs
    )


def _canonical_register_bytes(records: tuple[CredentialRecord, ...] | list[CredentialRecord]) -> bytes:
    # Records sorted by voter id, every field length-prefixed.
    chunks = []
    for record in sorted(records, key=lambda r: r.voter_id):
        chunks.append(
            lp_bytes(
                record.voter_id.encode("utf-8"),
                record.pw_hash.value,
                record.sig_ers.value,
                record.sig_vs.value,
            )
        )
    return b"".join(chunks)


def build_signed_register(records: list[CredentialRecord], ers_comm_key: KeyPair) -> SignedRegister:
    if not records:
        raise CredentialError("register must contain at least one record")
    ids = [r.voter_id for r in records]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise CredentialError(f"duplicate voter ids: {dupes}")
    ordered = tuple(sorted(records, key=lambda r: r.voter_id))
    signature = sign(ers_comm_key, _canonical_register_bytes(ordered))
    return SignedRegister(records=ordered, register_signature=signature)


def verify_register(
    register: SignedRegister, ers_pub: PublicKey, vs_pub: PublicKey
) -> RegisterVerification:
    """Per-record signature checks plus the whole-register check."""
    if not register.records:
        return RegisterVerification(record_checks=[], register_signature_ok=False, malformed="empty register")
    checks = []
    for record in register.records:
        checks.append(
            RecordCheck(
                voter_id=record.voter_id,
                ers_signature_ok=verify(ers_pub, record.pw_hash.value, record.sig_ers),
                vs_signature_ok=verify(vs_pub, record.sig_ers.value, record.sig_vs),
            )
        )
    register_ok = verify(
        ers_pub, _canonical_register_bytes(register.records), register.register_signature
    )
    return RegisterVerification(record_checks=checks, register_signature_ok=register_ok)


# ---------------------------------------------------------------------------
# File formats (documented in docs/formats.md)
# ---------------------------------------------------------------------------


def credentials_to_text(credentials: list[Credential]) -> str:
    lines = [CREDENTIAL_FILE_HEADER]
    for c in credentials:
        lines.append(f"{c.voter_id}\t{c.password}")
    return "\n".join(lines) + "\n"


def credentials_from_text(text: str) -> list[Credential]:
    lines = text.splitlines()
    if not lines or lines[0] != CREDENTIAL_FILE_HEADER:
        raise FormatError("not a credentials file (bad header)")
    out = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise FormatError(f"line {lineno}: expected voter_id<TAB>password")
        out.append(Credential(voter_id=parts[0], password=parts[1]))
    return out


def register_to_text(register: SignedRegister) -> str:
    lines = [REGISTER_FILE_HEADER]
    for r in register.records:
        lines.append(
            "\t".join((r.voter_id, b64(r.pw_hash.value), b64(r.sig_ers.value), b64(r.sig_vs.value)))
        )
    lines.append(f"signature\t{b64(register.register_signature.value)}")
    return "\n".join(lines) + "\n"


def register_from_text(text: str) -> SignedRegister:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines or lines[0] != REGISTER_FILE_HEADER:
        raise FormatError("not a register file (bad header)")
    if len(lines) < 3 or not lines[-1].startswith("signature\t"):
        raise FormatError("register file missing trailing signature line")
    records = []
    for lineno, line in enumerate(lines[1:-1], start=2):
        parts = line.split("\t")
        if len(parts) != 4:
            raise FormatError(f"line {lineno}: expected 4 tab-separated fields")
        records.append(
            CredentialRecord(
                voter_id=parts[0],
                pw_hash=Digest(unb64(parts[1])),
                sig_ers=Signature(unb64(parts[2]), KeyPurpose.COMMUNICATION),
                sig_vs=Signature(unb64(parts[3]), KeyPurpose.COMMUNICATION),
            )
        )
    signature = Signature(unb64(lines[-1].split("\t", 1)[1]), KeyPurpose.COMMUNICATION)
    return SignedRegister(records=tuple(records), register_signature=signature)


def export_credentials(
    credentials: list[Credential], path: Path | None = None
) -> tuple[str, list[CredentialEnvelope]]:
    """Produce the distribution file plus one covered envelope per voter."""
    text = credentials_to_text(credentials)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    cover_key = generate_keypair(KeyPurpose.DATABASE)
    envelopes = []
    for c in credentials:
        sealed = seal(cover_key.public_key(), f"{c.voter_id}\t{c.password}".encode("utf-8"))
        envelopes.append(
            CredentialEnvelope(voter_id=c.voter_id, covered_secret=sealed, _cover_key=cover_key)
        )
    return text, envelopes
