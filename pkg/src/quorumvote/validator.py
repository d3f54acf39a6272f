"""Validator service: the second half of the two-man rule.

The validator never sees voter ids or passwords.  It receives a
password hash plus the two-signature chain, verifies both signatures
itself (it does not trust the registry's checks), and tracks per
credential whether the signature is unused, reserved by a live voting
session, or permanently used.  A reserve/commit/release protocol lets a
voter cancel and return later while still guaranteeing at most one
committed vote per credential.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .audit import AuditLog
from .clocks import Clock
from .crypto import Digest, KeyPair, PublicKey, Signature, hash_bytes, verify
from .defaults import SESSION_TIMEOUT_SECONDS


class ValidatorError(Exception):
    pass


class ValidatorOfflineError(ValidatorError):
    """Validation requested while the validator is offline."""


class UseStateError(ValidatorError):
    """commit or release against a record not in the reserved state."""


class UseState(str, Enum):
    UNUSED = "unused"
    RESERVED = "reserved"
    USED = "used"


class Verdict(str, Enum):
    APPROVED = "approved"
    REJECTED = "rejected"
    ALREADY_USED = "already_used"


@dataclass
class SignatureUseRecord:
    sig_ers_fingerprint: Digest
    state: UseState = UseState.UNUSED
    reserved_at: float = 0.0
    generation: int = 0  # bumps on each reserve so stale expiries are inert


class Validator:
    """Holds the used-signature store and the VS communication key.

    Trust anchors (the registry's and its own public keys) are pinned at
    construction; callers may echo keys with a request but a mismatch is
    a rejection, never a substitution.
    """

    def __init__(
        self,
        keypair: KeyPair,
        ers_public: PublicKey,
        clock: Clock,
        reservation_timeout: float = SESSION_TIMEOUT_SECONDS,
        journal_path: Path | None = None,
        audit: AuditLog | None = None,
    ) -> None:
        self.keypair = keypair
        self.ers_public = ers_public
        self.clock = clock
        self.reservation_timeout = reservation_timeout
        self.journal_path = Path(journal_path) if journal_path is not None else None
        self.audit = audit if audit is not None else AuditLog(component="validator")
        self.online = True
        self._records: dict[bytes, SignatureUseRecord] = {}
        self._lock = threading.Lock()
        self._seq = 0
        if self.journal_path is not None and self.journal_path.exists():
            self._replay_journal()

    # -- durable transition log -------------------------------------

    def _journal(self, fingerprint: Digest, from_state: UseState, to_state: UseState, reason: str) -> None:
        """Append one transition; called under the lock, before the
        caller sees the new state."""
        self._seq += 1
        if self.journal_path is None:
            return
        entry = {
            "seq": self._seq,
            "timestamp": self.clock.now(),
            "fingerprint": fingerprint.hex,
            "from": from_state.value,
            "to": to_state.value,
            "reason": reason,
        }
        with open(self.journal_path, "a", encoding="utf-8") as fp:
            fp.write(json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n")
            fp.flush()

    def _replay_journal(self) -> None:
        for line in self.journal_path.read_text().splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            fingerprint = Digest(bytes.fromhex(entry["fingerprint"]))
            record = self._records.setdefault(
                fingerprint.value, SignatureUseRecord(sig_ers_fingerprint=fingerprint)
            )
            record.state = UseState(entry["to"])
            record.reserved_at = entry["timestamp"]
            self._seq = max(self._seq, entry["seq"])
        # reservations that survived a restart get a fresh expiry window
        for record in self._records.values():
            if record.state is UseState.RESERVED:
                record.generation += 1
                self._arm_expiry(record)

    # -- reservation expiry ------------------------------------------

    def _arm_expiry(self, record: SignatureUseRecord) -> None:
        generation = record.generation
        fingerprint = record.sig_ers_fingerprint

        def expire() -> None:
            with self._lock:
                current = self._records.get(fingerprint.value)
                if (
                    current is not None
                    and current.state is UseState.RESERVED
                    and current.generation == generation
                ):
                    self._journal(fingerprint, UseState.RESERVED, UseState.UNUSED, "expired")
                    current.state = UseState.UNUSED

        self.clock.schedule(self.reservation_timeout, expire)

    # -- operations ----------------------------------------------------

    def validate_and_reserve(
        self,
        pw_hash: Digest,
        sig_ers: Signature,
        sig_vs: Signature,
        ers_pub: PublicKey | None = None,
        vs_pub: PublicKey | None = None,
    ) -> Verdict:
        if not self.online:
            raise ValidatorOfflineError("validator is offline")
        if ers_pub is not None and ers_pub != self.ers_public:
            return Verdict.REJECTED
        if vs_pub is not None and vs_pub != self.keypair.public_key():
            return Verdict.REJECTED
        if not verify(self.ers_public, pw_hash.value, sig_ers):
            return Verdict.REJECTED
        if not verify(self.keypair.public_key(), sig_ers.value, sig_vs):
            return Verdict.REJECTED
        fingerprint = hash_bytes(sig_ers.value)
        with self._lock:
            record = self._records.setdefault(
                fingerprint.value, SignatureUseRecord(sig_ers_fingerprint=fingerprint)
            )
            if record.state is not UseState.UNUSED:
                return Verdict.ALREADY_USED
            self._journal(fingerprint, UseState.UNUSED, UseState.RESERVED, "validate_and_reserve")
            record.state = UseState.RESERVED
            record.reserved_at = self.clock.now()
            record.generation += 1
            self._arm_expiry(record)
        return Verdict.APPROVED

    def commit_use(self, sig_ers_fingerprint: Digest) -> None:
        """Reserved -> used, the terminal state; runs even offline so an
        in-flight voter can finish."""
        with self._lock:
            record = self._records.get(sig_ers_fingerprint.value)
            if record is None or record.state is not UseState.RESERVED:
                state = record.state.value if record else "unused"
                raise UseStateError(f"commit_use requires a reserved record, found {state}")
            self._journal(sig_ers_fingerprint, UseState.RESERVED, UseState.USED, "commit_use")
            record.state = UseState.USED

    def release_use(self, sig_ers_fingerprint: Digest) -> None:
        """Reserved -> unused; the voter cancelled or the session ended."""
        with self._lock:
            record = self._records.get(sig_ers_fingerprint.value)
            if record is None or record.state is not UseState.RESERVED:
                state = record.state.value if record else "unused"
                raise UseStateError(f"release_use requires a reserved record, found {state}")
            self._journal(sig_ers_fingerprint, UseState.RESERVED, UseState.UNUSED, "release_use")
            record.state = UseState.UNUSED

    def go_offline(self) -> None:
        if not self.online:
            return
        self.online = False
        self.audit.record(self.clock.now(), "poll_stop", state="offline")

    def record_poll_start(self) -> None:
        self.audit.record(self.clock.now(), "poll_start", state="voting")

    def state_of(self, sig_ers_fingerprint: Digest) -> UseState:
        with self._lock:
            record = self._records.get(sig_ers_fingerprint.value)
            return record.state if record is not None else UseState.UNUSED

    def stats(self) -> dict:
        with self._lock:
            counts = {state.value: 0 for state in UseState}
            for record in self._records.values():
                counts[record.state.value] += 1
        counts["online"] = self.online
        return counts


def sig_fingerprint(sig_ers: Signature) -> Digest:
    """The key under which a credential's use is tracked."""
    return hash_bytes(sig_ers.value)
