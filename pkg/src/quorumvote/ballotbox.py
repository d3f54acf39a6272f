"""Ballot box service: tokens in, sealed votes out.

Tokens live only in volatile memory as fingerprints; the durable store
holds sealed envelopes, signatures, and chain seals, never a token
value or a voter id.  A vote becomes real at exactly one point: the
flushed append of its VOTE record.  Everything after that point
(spending the token, telling the registry) is replayable from the
notification outbox, so a crash anywhere inside confirm leaves either
no vote or a fully accounted one.
"""

from __future__ import annotations

import hmac
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .audit import AuditLog
from .authz import SignedAttestation, attestation_valid
from .ballots import Ballot, VoteContent, canonical_vote_bytes, count_votes, validate_vote, vote_from_canonical
from .clocks import Clock
from .crypto import (
    Digest,
    KeyPair,
    PublicKey,
    Signature,
    hash_bytes,
    open_envelope,
    seal,
    sign,
    verify,
)
from .defaults import BLOCK_SIZE, SESSION_TIMEOUT_SECONDS
from .encoding import canonical_json_bytes
from .errors import IllegalStateError
from .faults import NULL_GATE, FaultGate
from .registry import StatusError
from .votestore import (
    BlockSeal,
    ChainReport,
    StoredVote,
    VoteStore,
    block_signature_message,
    verify_chain,
)


class BallotBoxError(Exception):
    pass


class UnknownTokenError(BallotBoxError):
    """Token is absent, expired, or already spent."""


class NoPendingCastError(BallotBoxError):
    pass


class DuplicateTokenError(BallotBoxError):
    pass


class TamperError(BallotBoxError):
    def __init__(self, message: str, report: ChainReport) -> None:
        super().__init__(message)
        self.report = report


class AuthorizationError(BallotBoxError):
    pass


@dataclass
class _TokenEntry:
    fingerprint: bytes
    issued_at: float
    spent: bool = False


@dataclass
class PendingCast:
    vote: VoteContent
    echo_sent_at: float


@dataclass(frozen=True)
class TallyResult:
    contests: dict
    total_votes: int
    result_signature: Signature

    def canonical_body(self) -> bytes:
        return canonical_json_bytes({"contests": self.contests, "total_votes": self.total_votes})

    def verify(self, comm_public: PublicKey) -> bool:
        return verify(comm_public, self.canonical_body(), self.result_signature)

    def to_wire(self) -> dict:
        from .encoding import b64

        return {
            "contests": self.contests,
            "total_votes": self.total_votes,
            "result_signature": b64(self.result_signature.value),
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "TallyResult":
        from .crypto import KeyPurpose
        from .encoding import unb64

        return cls(
            contests=dict(obj["contests"]),
            total_votes=int(obj["total_votes"]),
            result_signature=Signature(unb64(obj["result_signature"]), KeyPurpose.COMMUNICATION),
        )


class BallotBox:
    """Needs both component keys: communication for signing votes,
    blocks, and results; database for sealing vote content at rest."""

    def __init__(
        self,
        comm_keypair: KeyPair,
        db_keypair: KeyPair,
        ballot: Ballot,
        clock: Clock,
        committee_public: PublicKey,
        required_approvals: int = 2,
        store_path: Path | None = None,
        block_size: int = BLOCK_SIZE,
        token_lifetime: float = SESSION_TIMEOUT_SECONDS,
        audit: AuditLog | None = None,
        gate: FaultGate | None = None,
    ) -> None:
        self.comm_keypair = comm_keypair
        self.db_keypair = db_keypair
        self.ballot = ballot
        self.clock = clock
        self.committee_public = committee_public
        self.required_approvals = required_approvals
        self.token_lifetime = token_lifetime
        self.audit = audit if audit is not None else AuditLog(component="ballot_box")
        self.gate = gate if gate is not None else NULL_GATE
        self.store = VoteStore(store_path, block_size=block_size)
        self.registry: Any = None  # attached after construction (mutual wiring)
        self.accepting = False
        self._tokens: list[_TokenEntry] = []
        self._pending: dict[bytes, PendingCast] = {}
        self._lock = threading.RLock()

    # -- token bookkeeping ----------------------------------------------

    def _find(self, token_value: bytes) -> _TokenEntry | None:
        fingerprint = hash_bytes(token_value).value
        found = None
        # scan every entry with a constant-time comparison; no early exit
        for entry in self._tokens:
            if hmac.compare_digest(entry.fingerprint, fingerprint):
                found = entry
        return found

    def _drop_expired(self, fingerprint: bytes) -> None:
        with self._lock:
            for entry in list(self._tokens):
                if entry.fingerprint == fingerprint and not entry.spent:
                    self._tokens.remove(entry)
                    self._pending.pop(fingerprint, None)

    # -- voter-facing operations -------------------------------------------

    def register_token(self, token_value: bytes) -> None:
        with self._lock:
            if not self.accepting:
                raise IllegalStateError("ballot box is not accepting tokens")
            if self._find(token_value) is not None:
                raise DuplicateTokenError("token value already registered")
            fingerprint = hash_bytes(token_value).value
            self._tokens.append(
                _TokenEntry(fingerprint=fingerprint, issued_at=self.clock.now())
            )
            self.clock.schedule(self.token_lifetime, lambda: self._drop_expired(fingerprint))

    def fetch_ballot(self, token_value: bytes) -> Ballot:
        with self._lock:
            entry = self._find(token_value)
            if entry is None or entry.spent:
                raise UnknownTokenError("unknown or spent token")
            return self.ballot

    def submit_vote(self, token_value: bytes, vote: VoteContent) -> bytes:
        """Returns the canonical echo, byte-identical to what confirm
        would store.  Nothing durable happens here."""
        with self._lock:
            if not self.accepting:
                raise IllegalStateError("ballot box is not accepting votes")
            entry = self._find(token_value)
            if entry is None or entry.spent:
                raise UnknownTokenError("unknown or spent token")
            validate_vote(self.ballot, vote)
            echo = canonical_vote_bytes(vote)
            self._pending[entry.fingerprint] = PendingCast(
                vote=vote, echo_sent_at=self.clock.now()
            )
            return echo

    def confirm_vote(self, token_value: bytes) -> dict:
        """The commit protocol.  Steps: lookup, seal, persist, spend,
        notify, ack.  persist is the commit point; later steps are
        recoverable from the outbox."""
        with self._lock:
            self.gate.step("confirm", "lookup")
            if not self.accepting:
                raise IllegalStateError("ballot box is not accepting votes")
            entry = self._find(token_value)
            if entry is None:
                raise UnknownTokenError("unknown token")
            if entry.spent:
                raise UnknownTokenError("token already spent")
            pending = self._pending.get(entry.fingerprint)
            if pending is None:
                raise NoPendingCastError("no pending cast to confirm")

            self.gate.step("confirm", "seal")
            canonical = canonical_vote_bytes(pending.vote)
            envelope = seal(self.db_keypair.public_key(), canonical)
            sequence_no = len(self.store.votes)
            vote = StoredVote(
                sequence_no=sequence_no,
                token_fp=Digest(entry.fingerprint),
                envelope=envelope,
                vote_signature=sign(
                    self.comm_keypair, canonical_json_bytes(envelope.to_wire())
                ),
            )
            block_seal = None
            if (sequence_no + 1) % self.store.block_size == 0:
                block_seal = self._make_seal(
                    self.store.votes + [vote], len(self.store.seals)
                )

            self.gate.step("confirm", "persist")
            self.store.append_commit(vote, block_seal)

            self.gate.step("confirm", "spend")
            entry.spent = True
            self._pending.pop(entry.fingerprint, None)

        self.gate.step("confirm", "notify")
        try:
            self.registry.token_spent(Digest(entry.fingerprint))
        except StatusError:
            # registry has no live session for it; the monitor's count
            # comparison will surface any real divergence
            self.audit.record(
                self.clock.now(),
                "malfunction",
                component="ballot_box",
                reason="spent notification had no matching session",
            )

        self.gate.step("confirm", "ack")
        self.store.append_notified(vote.sequence_no)
        return {"committed": True}

    def cancel(self, token_value: bytes) -> None:
        with self._lock:
            entry = self._find(token_value)
            if entry is None or entry.spent:
                raise UnknownTokenError("unknown or spent token")
            self._pending.pop(entry.fingerprint, None)
            entry.spent = True
        try:
            self.registry.token_cancelled(Digest(entry.fingerprint))
        except StatusError:
            pass

    # -- recovery -----------------------------------------------------------

    def recover(self) -> int:
        """Replay unacknowledged registry notifications after a restart.
        Returns how many were replayed."""
        replayed = 0
        for vote in self.store.unnotified():
            try:
                self.registry.token_spent(vote.token_fp)
            except StatusError:
                # already marked before the crash, or the session is gone
                pass
            self.store.append_notified(vote.sequence_no)
            replayed += 1
        return replayed

    # -- lifecycle ------------------------------------------------------------

    def start_accepting(self) -> None:
        if self.accepting:
            return
        self.accepting = True
        self.audit.record(self.clock.now(), "poll_start", state="voting")

    def stop_accepting(self) -> None:
        """No further casts; the trailing partial block is sealed so
        every stored vote sits in a signed block."""
        with self._lock:
            if not self.accepting:
                return
            self.accepting = False
            self._pending.clear()
            covered = sum(s.count for s in self.store.seals)
            tail = len(self.store.votes) - covered
            if tail > 0:
                self.store.append_seal(self._make_seal(self.store.votes, len(self.store.seals)))
            stored = len(self.store.votes)
        self.audit.record(self.clock.now(), "poll_stop", state="stopped", count=stored)

    def _make_seal(self, votes: list[StoredVote], block_no: int) -> BlockSeal:
        start = block_no * self.store.block_size
        members = votes[start:]
        prev = self.store.seals[-1].block_signature.value if self.store.seals else None
        message = block_signature_message([v.vote_signature.value for v in members], prev)
        return BlockSeal(
            block_no=block_no,
            count=len(members),
            block_signature=sign(self.comm_keypair, message),
        )

    # -- committee-facing operations ----------------------------------------

    def stored_count(self) -> int:
        return len(self.store.votes)

    def verify_chain(self) -> ChainReport:
        return verify_chain(
            self.store.votes,
            self.store.seals,
            self.comm_keypair.public_key(),
            self.store.block_size,
            require_final_seal=not self.accepting and len(self.store.votes) > 0,
        )

    def _check_attestation(self, proof: SignedAttestation, action: str) -> None:
        if not attestation_valid(proof, self.committee_public):
            raise AuthorizationError("attestation signature invalid")
        if proof.payload.get("action") != action:
            raise AuthorizationError(f"attestation is not for {action}")
        if proof.payload.get("state") != "stopped":
            raise AuthorizationError("attestation does not assert a stopped election")
        approvals = proof.payload.get("approvals", [])
        if len(set(approvals)) < self.required_approvals:
            raise AuthorizationError("not enough distinct approvals")

    def tally(self, proof: SignedAttestation) -> TallyResult:
        if self.accepting:
            raise IllegalStateError("intermediate results are forbidden while votes can arrive")
        self._check_attestation(proof, "tally")
        report = self.verify_chain()
        if not report.ok:
            raise TamperError("chain verification failed; tally refused", report)
        votes = [
            vote_from_canonical(open_envelope(self.db_keypair, v.envelope))
            for v in self.store.votes
        ]
        contests = count_votes(self.ballot, votes)
        body = canonical_json_bytes({"contests": contests, "total_votes": len(votes)})
        result = TallyResult(
            contests=contests,
            total_votes=len(votes),
            result_signature=sign(self.comm_keypair, body),
        )
        if self.store.path is not None:
            result_path = self.store.path.with_suffix(".result.json")
            result_path.write_text(
                canonical_json_bytes(result.to_wire()).decode("utf-8") + "\n"
            )
        return result

    def clear_votes(self, proof: SignedAttestation) -> None:
        if self.accepting:
            raise IllegalStateError("cannot clear votes while accepting")
        self._check_attestation(proof, "clear")
        destroyed = len(self.store.votes)
        self.store.clear()
        with self._lock:
            self._tokens.clear()
            self._pending.clear()
        self.audit.record(
            self.clock.now(),
            "poll_start",
            action="clear_votes",
            count=destroyed,
        )

    def stats(self) -> dict:
        with self._lock:
            live = sum(1 for t in self._tokens if not t.spent)
        return {
            "votes_stored": self.stored_count(),
            "blocks": len(self.store.seals),
            "accepting": self.accepting,
            "live_tokens": live,
        }

    def store_image(self) -> bytes:
        """Archive-grade snapshot of the durable store: the raw file when
        one exists, else a canonical JSON image.  Token fingerprints only,
        never token values."""
        if self.store.path is not None and Path(self.store.path).exists():
            return Path(self.store.path).read_bytes()
        from .encoding import b64

        with self._lock:
            image = {
                "votes": [
                    {
                        "sequence_no": v.sequence_no,
                        "token_fp": v.token_fp.hex,
                        "envelope": v.envelope.to_wire(),
                        "vote_signature": b64(v.vote_signature.value),
                    }
                    for v in self.store.votes
                ],
                "seals": [
                    {
                        "block_no": s.block_no,
                        "count": s.count,
                        "block_signature": b64(s.block_signature.value),
                    }
                    for s in self.store.seals
                ],
            }
        return canonical_json_bytes(image)
