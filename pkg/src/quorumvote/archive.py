"""Signed post-election archive container.

A single file holding named members (tally result, audit logs, database
images, the signed register, the software-verification report) followed
by one detached signature record.  The signature covers every byte from
the file magic through the last member, so any mutation, removal, or
reordering of members is detectable.  A manifest member carries a digest
per member so verification can name exactly which member broke.

Layout:

    magic "QVA1"
    repeat: lp(name utf-8) lp(content)        member records
    lp("__signature__") lp(signature bytes)   trailing record
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

from .crypto import KeyPair, PublicKey, hash_bytes, sign, verify
from .encoding import FormatError, canonical_json_bytes, lp_read, lp_write

ARCHIVE_MAGIC = b"QVA1"
SIGNATURE_MEMBER = "__signature__"
MANIFEST_MEMBER = "manifest.json"


@dataclass(frozen=True)
class ArchiveCheck:
    """Outcome of verifying one archive."""

    ok: bool
    signature_valid: bool
    members: tuple[str, ...]
    broken_members: tuple[str, ...]
    problems: tuple[str, ...]

    def to_wire(self) -> dict:
        return {
            "ok": self.ok,
            "signature_valid": self.signature_valid,
            "members": list(self.members),
            "broken_members": list(self.broken_members),
            "problems": list(self.problems),
        }


def write_archive(path: Path, members: dict[str, bytes], keypair: KeyPair) -> dict:
    """Write all members plus a manifest, sign the stream, return the
    manifest dict.  Member order is the insertion order given, with the
    manifest appended last."""
    if SIGNATURE_MEMBER in members:
        raise FormatError(f"member name is reserved: {SIGNATURE_MEMBER}")
    if MANIFEST_MEMBER in members:
        raise FormatError(f"member name is reserved: {MANIFEST_MEMBER}")
    manifest = {
        "format": ARCHIVE_MAGIC.decode("ascii"),
        "members": {name: hash_bytes(content).hex for name, content in members.items()},
        "signer_key_id": keypair.key_id,
    }
    buffer = io.BytesIO()
    buffer.write(ARCHIVE_MAGIC)
    for name, content in members.items():
        lp_write(buffer, name.encode("utf-8"))
        lp_write(buffer, content)
    lp_write(buffer, MANIFEST_MEMBER.encode("utf-8"))
    lp_write(buffer, canonical_json_bytes(manifest))
    signed_region = buffer.getvalue()
    signature = sign(keypair, signed_region)
    lp_write(buffer, SIGNATURE_MEMBER.encode("utf-8"))
    lp_write(buffer, signature.value)
    path = Path(path)
    with open(path, "wb") as fp:
        fp.write(buffer.getvalue())
        fp.flush()
    return manifest


def read_archive(path: Path) -> tuple[dict[str, bytes], bytes, bytes]:
    """Parse an archive into (members, signature, signed_region).
    Structural damage raises FormatError; signature problems do not,
    they are verify_archive's concern."""
    raw = Path(path).read_bytes()
    if not raw.startswith(ARCHIVE_MAGIC):
        raise FormatError("not an archive: bad magic")
    fp = io.BytesIO(raw)
    fp.read(len(ARCHIVE_MAGIC))
    members: dict[str, bytes] = {}
    signature: bytes | None = None
    signed_end: int | None = None
    while fp.tell() < len(raw):
        record_start = fp.tell()
        name = lp_read(fp).decode("utf-8")
        content = lp_read(fp)
        if name == SIGNATURE_MEMBER:
            signature = content
            signed_end = record_start
            break
        if name in members:
            raise FormatError(f"duplicate member: {name}")
        members[name] = content
    if signature is None or signed_end is None:
        raise FormatError("archive has no signature record")
    return members, signature, raw[:signed_end]


def verify_archive(path: Path, public: PublicKey) -> ArchiveCheck:
    """Check the stream signature and every member digest.  Digest
    comparison runs even when the signature fails, so a single-member
    mutation is reported by name."""
    try:
        members, signature, signed_region = read_archive(path)
    except FormatError as exc:
        return ArchiveCheck(
            ok=False,
            signature_valid=False,
            members=(),
            broken_members=(),
            problems=(str(exc),),
        )
    problems: list[str] = []
    broken: list[str] = []
    signature_valid = verify(public, signed_region, signature)
    if not signature_valid:
        problems.append("archive signature does not verify")

    manifest_raw = members.get(MANIFEST_MEMBER)
    if manifest_raw is None:
        problems.append("manifest member missing")
    else:
        import json

        try:
            manifest = json.loads(manifest_raw.decode("utf-8"))
            expected = dict(manifest.get("members", {}))
        except (ValueError, AttributeError):
            problems.append("manifest member unparseable")
            expected = {}
        for name, digest_hex in expected.items():
            if name not in members:
                broken.append(name)
                problems.append(f"member missing: {name}")
                continue
            if hash_bytes(members[name]).hex != digest_hex:
                broken.append(name)
                problems.append(f"member digest mismatch: {name}")
        for name in members:
            if name != MANIFEST_MEMBER and name not in expected:
                broken.append(name)
                problems.append(f"member not in manifest: {name}")
    return ArchiveCheck(
        ok=signature_valid and not problems,
        signature_valid=signature_valid,
        members=tuple(members),
        broken_members=tuple(broken),
        problems=tuple(problems),
    )
