"""Durable vote store: file round trips, torn tails, chain verification."""

import pytest

from quorumvote.ballots import VoteContent, canonical_vote_bytes
from quorumvote.crypto import (
    Digest,
    KeyPurpose,
    generate_keypair,
    hash_bytes,
    seal,
    sign,
)
from quorumvote.encoding import FormatError, canonical_json_bytes
from quorumvote.votestore import (
    GENESIS_MARKER,
    BlockSeal,
    StoredVote,
    VoteStore,
    block_signature_message,
    verify_chain,
)

COMM = generate_keypair(KeyPurpose.COMMUNICATION, seed=b"store-comm")
DB = generate_keypair(KeyPurpose.DATABASE, seed=b"store-db")


def make_vote(seq: int, choice: str = "x") -> StoredVote:
    content = VoteContent.from_dict({"c": [choice]})
    envelope = seal(DB.public_key(), canonical_vote_bytes(content))
    return StoredVote(
        sequence_no=seq,
        token_fp=hash_bytes(f"token-{seq}".encode()),
        envelope=envelope,
        vote_signature=sign(COMM, canonical_json_bytes(envelope.to_wire())),
    )


def make_seal(votes, block_no, count, prev):
    members = votes[block_no * 3 : block_no * 3 + count] if count else []
    message = block_signature_message([v.vote_signature.value for v in members], prev)
    return BlockSeal(block_no=block_no, count=count, block_signature=sign(COMM, message))


def chained(n_votes: int, block_size: int = 3, seal_tail: bool = False):
    votes = [make_vote(i, choice="x" if i % 2 else "y") for i in range(n_votes)]
    seals = []
    prev = None
    full_blocks = n_votes // block_size
    for b in range(full_blocks):
        s = make_seal(votes, b, block_size, prev)
        seals.append(s)
        prev = s.block_signature.value
    tail = n_votes - full_blocks * block_size
    if seal_tail and tail:
        members = votes[full_blocks * block_size :]
        message = block_signature_message([v.vote_signature.value for v in members], prev)
        seals.append(BlockSeal(full_blocks, tail, sign(COMM, message)))
    return votes, seals


def test_store_round_trip(tmp_path):
    path = tmp_path / "votes.qvb"
    store = VoteStore(path, block_size=3)
    votes, seals = chained(4)
    for i, vote in enumerate(votes):
        store.append_commit(vote, seals[0] if i == 2 else None)
    store.append_notified(0)
    store.append_notified(1)

    again = VoteStore(path)
    assert again.block_size == 3
    assert again.votes == votes
    assert again.seals == seals[:1]
    assert again.notified == {0, 1}
    assert [v.sequence_no for v in again.unnotified()] == [2, 3]


def test_store_in_memory_mode():
    store = VoteStore(None, block_size=3)
    store.append_commit(make_vote(0), None)
    assert len(store.votes) == 1


def test_torn_tail_is_repaired(tmp_path):
    path = tmp_path / "votes.qvb"
    store = VoteStore(path, block_size=3)
    store.append_commit(make_vote(0), None)
    store.append_commit(make_vote(1), None)
    size_after_two = path.stat().st_size
    store.append_commit(make_vote(2), None)
    # crash mid-write: chop the last record in half
    data = path.read_bytes()
    cut = size_after_two + (path.stat().st_size - size_after_two) // 2
    path.write_bytes(data[:cut])

    repaired = VoteStore(path)
    assert repaired.repaired_torn_tail
    assert len(repaired.votes) == 2
    # the file is truncated back to a clean state and usable
    repaired.append_commit(make_vote(2), None)
    assert len(VoteStore(path).votes) == 3


def test_unknown_record_type_raises(tmp_path):
    path = tmp_path / "votes.qvb"
    VoteStore(path, block_size=3)
    with open(path, "ab") as fp:
        fp.write(b"\xee")
    with pytest.raises(FormatError):
        VoteStore(path)


def test_non_store_file_rejected(tmp_path):
    path = tmp_path / "votes.qvb"
    path.write_bytes(b"not a store at all")
    with pytest.raises(FormatError):
        VoteStore(path)


def test_clear_destroys_votes(tmp_path):
    path = tmp_path / "votes.qvb"
    store = VoteStore(path, block_size=3)
    store.append_commit(make_vote(0), None)
    store.clear()
    assert store.votes == []
    assert VoteStore(path).votes == []


# -- chain verification -------------------------------------------------------


def test_untampered_chain_verifies():
    votes, seals = chained(7, seal_tail=True)
    report = verify_chain(votes, seals, COMM.public_key(), 3, require_final_seal=True)
    assert report.ok
    assert all(ok for _, ok in report.vote_checks)
    assert all(ok for _, ok in report.block_checks)


def test_genesis_marker_is_32_zero_bytes():
    assert GENESIS_MARKER == b"\x00" * 32
    votes, seals = chained(3)
    message = block_signature_message([v.vote_signature.value for v in votes], None)
    assert message.endswith(b"\x00" * 32)


def test_flipped_vote_signature_flags_vote_and_block():
    votes, seals = chained(6)
    bad_sig = bytearray(votes[1].vote_signature.value)
    bad_sig[0] ^= 0xFF
    votes[1] = StoredVote(
        votes[1].sequence_no,
        votes[1].token_fp,
        votes[1].envelope,
        votes[1].vote_signature.__class__(bytes(bad_sig), votes[1].vote_signature.signer_purpose),
    )
    report = verify_chain(votes, seals, COMM.public_key(), 3)
    assert not report.ok
    assert report.vote_checks[1] == (1, False)
    assert report.block_checks[0] == (0, False)
    # untouched block still verifies
    assert report.block_checks[1] == (1, True)


def test_flipped_envelope_byte_flags_that_vote():
    votes, seals = chained(3)
    wire = votes[0].envelope.to_wire()
    tampered = dict(wire)
    ct = bytearray(votes[0].envelope.ciphertext)
    ct[0] ^= 0x01
    tampered_env = votes[0].envelope.__class__(
        recipient_key_id=votes[0].envelope.recipient_key_id,
        wrapped_key=votes[0].envelope.wrapped_key,
        ciphertext=bytes(ct),
        scheme=votes[0].envelope.scheme,
    )
    votes[0] = StoredVote(0, votes[0].token_fp, tampered_env, votes[0].vote_signature)
    report = verify_chain(votes, seals, COMM.public_key(), 3)
    assert not report.ok
    assert report.vote_checks[0] == (0, False)


def test_dropped_vote_detected():
    votes, seals = chained(6)
    del votes[2]
    report = verify_chain(votes, seals, COMM.public_key(), 3)
    assert not report.ok
    assert any("sequence break" in p for p in report.problems)


def test_reordered_votes_detected():
    votes, seals = chained(6)
    votes[0], votes[1] = votes[1], votes[0]
    report = verify_chain(votes, seals, COMM.public_key(), 3)
    assert not report.ok
    assert any("sequence break" in p for p in report.problems)
    assert report.block_checks[0][1] is False


def test_dropped_block_detected():
    votes, seals = chained(9)
    del seals[1]
    report = verify_chain(votes, seals, COMM.public_key(), 3)
    assert not report.ok


def test_reordered_blocks_detected():
    votes, seals = chained(9)
    seals[0], seals[1] = seals[1], seals[0]
    report = verify_chain(votes, seals, COMM.public_key(), 3)
    assert not report.ok
    assert any("block numbering" in p for p in report.problems)
    assert False in [ok for _, ok in report.block_checks]


def test_unsealed_tail_flagged_only_when_final_seal_required():
    votes, seals = chained(5)  # one full block of 3, tail of 2 unsealed
    open_report = verify_chain(votes, seals, COMM.public_key(), 3, require_final_seal=False)
    assert open_report.ok
    closed_report = verify_chain(votes, seals, COMM.public_key(), 3, require_final_seal=True)
    assert not closed_report.ok
    assert any("not sealed" in p for p in closed_report.problems)
