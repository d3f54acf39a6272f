"""Durable vote storage: an append-only file of chained, signed records.

Three record kinds share the file.  VOTE records hold one sealed,
signed vote.  SEAL records close a block: the block signature covers the
member vote signatures concatenated with the previous block signature
(32 zero bytes for block zero), which chains every block to all of its
predecessors.  NOTIFIED records are the outbox acknowledgements for the
commit protocol: a vote whose registry notification was delivered gets
one, so recovery after a crash knows which notifications to replay.

The file never contains a token value, a voter id, or plaintext vote
content.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass
from pathlib import Path

from .crypto import Digest, KeyPurpose, PublicKey, SealedEnvelope, Signature, verify
from .encoding import FormatError, canonical_json_bytes, lp_read, lp_write

STORE_MAGIC = b"QVB1"
GENESIS_MARKER = bytes(32)

_VOTE = 0x01
_SEAL = 0x02
_NOTIFIED = 0x03


@dataclass(frozen=True)
class StoredVote:
    sequence_no: int
    token_fp: Digest
    envelope: SealedEnvelope
    vote_signature: Signature

    def envelope_bytes(self) -> bytes:
        return canonical_json_bytes(self.envelope.to_wire())


@dataclass(frozen=True)
class BlockSeal:
    block_no: int
    count: int
    block_signature: Signature


def block_signature_message(vote_signatures: list[bytes], prev_signature: bytes | None) -> bytes:
    return b"".join(vote_signatures) + (prev_signature if prev_signature is not None else GENESIS_MARKER)


class VoteStore:
    """Append-only store; in memory when path is None.

    Every append batch is flushed and fsynced before it returns, so a
    record the caller saw succeed survives a crash.  A torn record at
    the tail (crash mid-write) is detected on open and truncated away.
    """

    def __init__(self, path: Path | None, block_size: int = 30) -> None:
        self.path = Path(path) if path is not None else None
        self.block_size = block_size
        self.votes: list[StoredVote] = []
        self.seals: list[BlockSeal] = []
        self.notified: set[int] = set()
        self.repaired_torn_tail = False
        if self.path is None:
            return
        if self.path.exists() and self.path.stat().st_size > 0:
            self._load()
        else:
            self._write_header()

    # -- file plumbing -------------------------------------------------

    def _write_header(self) -> None:
        with open(self.path, "wb") as fp:
            fp.write(STORE_MAGIC)
            lp_write(fp, canonical_json_bytes({"block_size": self.block_size, "version": 1}))
            fp.flush()
            os.fsync(fp.fileno())

    def _load(self) -> None:
        data = self.path.read_bytes()
        fp = io.BytesIO(data)
        magic = fp.read(4)
        if magic != STORE_MAGIC:
            raise FormatError("not a vote store file")
        import json

        meta = json.loads(lp_read(fp).decode("utf-8"))
        self.block_size = int(meta["block_size"])
        while True:
            record_start = fp.tell()
            kind = fp.read(1)
            if kind == b"":
                break
            try:
                if kind[0] == _VOTE:
                    seq = struct.unpack(">Q", lp_read(fp))[0]
                    token_fp = Digest(lp_read(fp))
                    envelope = SealedEnvelope.from_wire(
                        json.loads(lp_read(fp).decode("utf-8"))
                    )
                    sig = Signature(lp_read(fp), KeyPurpose.COMMUNICATION)
                    self.votes.append(StoredVote(seq, token_fp, envelope, sig))
                elif kind[0] == _SEAL:
                    block_no = struct.unpack(">Q", lp_read(fp))[0]
                    count = struct.unpack(">I", lp_read(fp))[0]
                    sig = Signature(lp_read(fp), KeyPurpose.COMMUNICATION)
                    self.seals.append(BlockSeal(block_no, count, sig))
                elif kind[0] == _NOTIFIED:
                    self.notified.add(struct.unpack(">Q", lp_read(fp))[0])
                else:
                    raise FormatError(f"unknown record type 0x{kind[0]:02x}")
            except FormatError as exc:
                if "unknown record type" in str(exc):
                    raise
                # torn tail from a crash mid-append: drop it
                self.repaired_torn_tail = True
                with open(self.path, "r+b") as out:
                    out.truncate(record_start)
                    out.flush()
                    os.fsync(out.fileno())
                break

    def _append(self, *records: bytes) -> None:
        if self.path is None:
            return
        with open(self.path, "ab") as fp:
            for record in records:
                fp.write(record)
            fp.flush()
            os.fsync(fp.fileno())

    # -- record encoding ------------------------------------------------

    @staticmethod
    def _encode_vote(vote: StoredVote) -> bytes:
        out = io.BytesIO()
        out.write(bytes([_VOTE]))
        lp_write(out, struct.pack(">Q", vote.sequence_no))
        lp_write(out, vote.token_fp.value)
        lp_write(out, vote.envelope_bytes())
        lp_write(out, vote.vote_signature.value)
        return out.getvalue()

    @staticmethod
    def _encode_seal(seal: BlockSeal) -> bytes:
        out = io.BytesIO()
        out.write(bytes([_SEAL]))
        lp_write(out, struct.pack(">Q", seal.block_no))
        lp_write(out, struct.pack(">I", seal.count))
        lp_write(out, seal.block_signature.value)
        return out.getvalue()

    @staticmethod
    def _encode_notified(sequence_no: int) -> bytes:
        out = io.BytesIO()
        out.write(bytes([_NOTIFIED]))
        lp_write(out, struct.pack(">Q", sequence_no))
        return out.getvalue()

    # -- appends ---------------------------------------------------------

    def append_commit(self, vote: StoredVote, seal: BlockSeal | None) -> None:
        """The durable commit point: vote (and block seal, when the vote
        fills a block) hit disk in one flushed write."""
        records = [self._encode_vote(vote)]
        if seal is not None:
            records.append(self._encode_seal(seal))
        self._append(*records)
        self.votes.append(vote)
        if seal is not None:
            self.seals.append(seal)

    def append_seal(self, seal: BlockSeal) -> None:
        self._append(self._encode_seal(seal))
        self.seals.append(seal)

    def append_notified(self, sequence_no: int) -> None:
        self._append(self._encode_notified(sequence_no))
        self.notified.add(sequence_no)

    def unnotified(self) -> list[StoredVote]:
        return [v for v in self.votes if v.sequence_no not in self.notified]

    def clear(self) -> None:
        """Destroy all stored votes (election restart)."""
        self.votes.clear()
        self.seals.clear()
        self.notified.clear()
        if self.path is not None:
            self._write_header()


# -- chain verification ------------------------------------------------------


@dataclass
class ChainReport:
    vote_checks: list[tuple[int, bool]]
    block_checks: list[tuple[int, bool]]
    problems: list[str]

    @property
    def ok(self) -> bool:
        return (
            not self.problems
            and all(ok for _, ok in self.vote_checks)
            and all(ok for _, ok in self.block_checks)
        )

    def to_wire(self) -> dict:
        return {
            "ok": self.ok,
            "vote_checks": [[seq, ok] for seq, ok in self.vote_checks],
            "block_checks": [[no, ok] for no, ok in self.block_checks],
            "problems": list(self.problems),
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "ChainReport":
        return cls(
            vote_checks=[(int(seq), bool(ok)) for seq, ok in obj["vote_checks"]],
            block_checks=[(int(no), bool(ok)) for no, ok in obj["block_checks"]],
            problems=[str(p) for p in obj["problems"]],
        )


def verify_chain(
    votes: list[StoredVote],
    seals: list[BlockSeal],
    comm_public: PublicKey,
    block_size: int,
    require_final_seal: bool = False,
) -> ChainReport:
    vote_checks: list[tuple[int, bool]] = []
    block_checks: list[tuple[int, bool]] = []
    problems: list[str] = []

    for position, vote in enumerate(votes):
        if vote.sequence_no != position:
            problems.append(
                f"sequence break at position {position}: found {vote.sequence_no}"
            )
        vote_checks.append(
            (vote.sequence_no, verify(comm_public, vote.envelope_bytes(), vote.vote_signature))
        )

    prev_signature: bytes | None = None
    covered = 0
    for index, seal in enumerate(seals):
        if seal.block_no != index:
            problems.append(f"block numbering break at {index}: found {seal.block_no}")
        members = votes[covered : covered + seal.count]
        if len(members) != seal.count:
            problems.append(f"block {seal.block_no} claims {seal.count} votes, {len(members)} present")
        if index < len(seals) - 1 and seal.count != block_size:
            problems.append(f"non-final block {seal.block_no} holds {seal.count} votes, expected {block_size}")
        message = block_signature_message([v.vote_signature.value for v in members], prev_signature)
        block_checks.append((seal.block_no, verify(comm_public, message, seal.block_signature)))
        prev_signature = seal.block_signature.value
        covered += seal.count

    if covered > len(votes):
        problems.append("seals cover more votes than stored")
    unsealed = len(votes) - covered
    if require_final_seal and unsealed > 0:
        problems.append(f"{unsealed} trailing votes not sealed into any block")

    return ChainReport(vote_checks=vote_checks, block_checks=block_checks, problems=problems)
