"""Ballot box: token lifecycle, echo-back confirm, chained storage, tally."""

import json
import secrets

import pytest

from quorumvote.authz import make_attestation
from quorumvote.ballots import (
    INVALID_MARKER,
    Ballot,
    Contest,
    MalformedVoteError,
    VoteContent,
    canonical_vote_bytes,
)
from quorumvote.ballotbox import (
    AuthorizationError,
    BallotBox,
    DuplicateTokenError,
    NoPendingCastError,
    TallyResult,
    TamperError,
    UnknownTokenError,
)
from quorumvote.clocks import SimClock
from quorumvote.crypto import Digest, KeyPurpose, generate_keypair, hash_bytes
from quorumvote.errors import IllegalStateError
from quorumvote.faults import CrashInjected, FaultGate
from quorumvote.registry import StatusError

COMM = generate_keypair(KeyPurpose.COMMUNICATION, seed=b"bb-comm")
DB = generate_keypair(KeyPurpose.DATABASE, seed=b"bb-db")
COMMITTEE = generate_keypair(KeyPurpose.COMMUNICATION, seed=b"bb-committee")

BALLOT = Ballot(
    ballot_id="B1",
    contests=(Contest("council", ("alice", "bob", "carol")),),
)


class RecordingRegistry:
    """Stands in for the registry: remembers notifications, mimics the
    one-shot fingerprint index."""

    def __init__(self):
        self.spent = []
        self.cancelled = []
        self._known = set()

    def expect(self, token: bytes) -> None:
        self._known.add(hash_bytes(token).value)

    def token_spent(self, fp: Digest) -> None:
        if fp.value not in self._known:
            raise StatusError("no session")
        self._known.discard(fp.value)
        self.spent.append(fp.value)

    def token_cancelled(self, fp: Digest) -> None:
        if fp.value not in self._known:
            raise StatusError("no session")
        self._known.discard(fp.value)
        self.cancelled.append(fp.value)


def make_box(tmp_path=None, block_size=3, clock=None, gate=None, accepting=True):
    clock = clock or SimClock()
    box = BallotBox(
        comm_keypair=COMM,
        db_keypair=DB,
        ballot=BALLOT,
        clock=clock,
        committee_public=COMMITTEE.public_key(),
        required_approvals=2,
        store_path=(tmp_path / "votes.qvb") if tmp_path else None,
        block_size=block_size,
        gate=gate,
    )
    registry = RecordingRegistry()
    box.registry = registry
    if accepting:
        box.start_accepting()
    return box, registry, clock


def fresh_token(box, registry) -> bytes:
    token = secrets.token_bytes(32)
    registry.expect(token)
    box.register_token(token)
    return token


def cast(box, registry, choice="alice") -> bytes:
    token = fresh_token(box, registry)
    box.submit_vote(token, VoteContent.from_dict({"council": [choice]}))
    box.confirm_vote(token)
    return token


def stopped_attestation(action="tally", approvals=("officer-1", "officer-2")):
    return make_attestation(
        COMMITTEE, action=action, state="stopped", approvals=list(approvals), election_id="E1"
    )


# -- tokens -------------------------------------------------------------------


def test_register_and_fetch_ballot():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    assert box.fetch_ballot(token) == BALLOT
    # idempotent fetch
    assert box.fetch_ballot(token) == BALLOT


def test_duplicate_token_rejected():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    with pytest.raises(DuplicateTokenError):
        box.register_token(token)


def test_register_when_stopped_rejected():
    box, registry, _ = make_box(accepting=False)
    with pytest.raises(IllegalStateError):
        box.register_token(secrets.token_bytes(32))


def test_unknown_token_has_no_ballot():
    box, _, _ = make_box()
    with pytest.raises(UnknownTokenError):
        box.fetch_ballot(secrets.token_bytes(32))


def test_token_expires():
    clock = SimClock()
    box, registry, _ = make_box(clock=clock)
    token = fresh_token(box, registry)
    clock.advance(901.0)
    with pytest.raises(UnknownTokenError):
        box.fetch_ballot(token)


# -- submit / echo ---------------------------------------------------------------


def test_echo_is_byte_identical_to_canonical_submission():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    vote = VoteContent.from_dict({"council": ["bob"]})
    echo = box.submit_vote(token, vote)
    assert echo == canonical_vote_bytes(vote)
    assert echo == b'{"council":["bob"]}'


def test_resubmit_replaces_pending_cast():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    box.submit_vote(token, VoteContent.from_dict({"council": ["bob"]}))
    echo2 = box.submit_vote(token, VoteContent.from_dict({"council": ["carol"]}))
    assert echo2 == b'{"council":["carol"]}'
    box.confirm_vote(token)
    result = after_stop_tally(box)
    assert result.contests["council"]["options"]["carol"] == 1
    assert result.contests["council"]["options"]["bob"] == 0


def test_submit_without_confirm_stores_nothing():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    box.submit_vote(token, VoteContent.from_dict({"council": ["bob"]}))
    assert box.stored_count() == 0


def test_malformed_vote_rejected():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    with pytest.raises(MalformedVoteError):
        box.submit_vote(token, VoteContent.from_dict({"council": ["nobody"]}))


def test_explicit_invalid_vote_accepted():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    echo = box.submit_vote(token, VoteContent.from_dict({"council": INVALID_MARKER}))
    assert echo == b'{"council":"__invalid__"}'


# -- confirm ---------------------------------------------------------------------


def after_stop_tally(box) -> TallyResult:
    box.stop_accepting()
    return box.tally(stopped_attestation())


def test_confirm_commits_vote_and_spends_token():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    box.submit_vote(token, VoteContent.from_dict({"council": ["alice"]}))
    receipt = box.confirm_vote(token)
    assert receipt == {"committed": True}
    assert box.stored_count() == 1
    assert registry.spent == [hash_bytes(token).value]
    with pytest.raises(UnknownTokenError):
        box.fetch_ballot(token)


def test_confirm_twice_is_already_spent():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    box.submit_vote(token, VoteContent.from_dict({"council": ["alice"]}))
    box.confirm_vote(token)
    with pytest.raises(UnknownTokenError):
        box.confirm_vote(token)
    assert box.stored_count() == 1


def test_confirm_without_pending_cast_fails():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    with pytest.raises(NoPendingCastError):
        box.confirm_vote(token)


def test_blocks_seal_at_block_size():
    box, registry, _ = make_box(block_size=3)
    for i in range(4):
        cast(box, registry)
    assert box.stored_count() == 4
    assert len(box.store.seals) == 1
    assert box.store.seals[0].count == 3
    report = box.verify_chain()
    assert report.ok


def test_stop_seals_partial_block():
    box, registry, _ = make_box(block_size=3)
    for i in range(4):
        cast(box, registry)
    box.stop_accepting()
    assert len(box.store.seals) == 2
    assert box.store.seals[1].count == 1
    assert box.verify_chain().ok


def test_stop_with_exactly_full_blocks_adds_no_empty_seal():
    box, registry, _ = make_box(block_size=3)
    for i in range(3):
        cast(box, registry)
    box.stop_accepting()
    assert len(box.store.seals) == 1
    assert box.verify_chain().ok


def test_receipt_contains_no_vote_content():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    box.submit_vote(token, VoteContent.from_dict({"council": ["alice"]}))
    receipt = box.confirm_vote(token)
    assert "alice" not in json.dumps(receipt)
    assert set(receipt) == {"committed"}


# -- cancel ----------------------------------------------------------------------


def test_cancel_discards_pending_and_releases():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    box.submit_vote(token, VoteContent.from_dict({"council": ["alice"]}))
    box.cancel(token)
    assert box.stored_count() == 0
    assert registry.cancelled == [hash_bytes(token).value]
    with pytest.raises(UnknownTokenError):
        box.confirm_vote(token)


def test_cancel_without_pending_still_releases_session():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    box.cancel(token)
    assert registry.cancelled == [hash_bytes(token).value]


def test_cancel_spent_token_is_error():
    box, registry, _ = make_box()
    token = fresh_token(box, registry)
    box.submit_vote(token, VoteContent.from_dict({"council": ["alice"]}))
    box.confirm_vote(token)
    with pytest.raises(UnknownTokenError):
        box.cancel(token)


# -- crash atomicity ----------------------------------------------------------------


STEPS_BEFORE_COMMIT = ["lookup", "seal", "persist"]
STEPS_AFTER_COMMIT = ["spend", "notify", "ack"]


@pytest.mark.parametrize("step", STEPS_BEFORE_COMMIT)
def test_crash_before_commit_point_leaves_no_trace(tmp_path, step):
    gate = FaultGate()
    box, registry, _ = make_box(tmp_path=tmp_path, gate=gate)
    token = fresh_token(box, registry)
    box.submit_vote(token, VoteContent.from_dict({"council": ["alice"]}))
    gate.arm("confirm", step)
    with pytest.raises(CrashInjected):
        box.confirm_vote(token)

    # process restart: rebuild from the durable store, replay the outbox
    revived = BallotBox(
        comm_keypair=COMM,
        db_keypair=DB,
        ballot=BALLOT,
        clock=SimClock(),
        committee_public=COMMITTEE.public_key(),
        required_approvals=2,
        store_path=tmp_path / "votes.qvb",
        block_size=3,
    )
    revived.registry = registry
    assert revived.recover() == 0
    assert revived.stored_count() == 0
    assert registry.spent == []


@pytest.mark.parametrize("step", STEPS_AFTER_COMMIT)
def test_crash_after_commit_point_recovers_all_effects(tmp_path, step):
    gate = FaultGate()
    box, registry, _ = make_box(tmp_path=tmp_path, gate=gate)
    token = fresh_token(box, registry)
    box.submit_vote(token, VoteContent.from_dict({"council": ["alice"]}))
    gate.arm("confirm", step)
    with pytest.raises(CrashInjected):
        box.confirm_vote(token)

    revived = BallotBox(
        comm_keypair=COMM,
        db_keypair=DB,
        ballot=BALLOT,
        clock=SimClock(),
        committee_public=COMMITTEE.public_key(),
        required_approvals=2,
        store_path=tmp_path / "votes.qvb",
        block_size=3,
    )
    revived.registry = registry
    revived.recover()
    assert revived.stored_count() == 1
    # the registry heard about the spend exactly once, before or after the crash
    assert registry.spent == [hash_bytes(token).value]
    assert revived.store.unnotified() == []


# -- tally --------------------------------------------------------------------------


def test_tally_refused_while_accepting():
    box, registry, _ = make_box()
    with pytest.raises(IllegalStateError):
        box.tally(stopped_attestation())


def test_tally_requires_valid_attestation():
    box, registry, _ = make_box()
    box.stop_accepting()
    rogue = generate_keypair(KeyPurpose.COMMUNICATION, seed=b"rogue")
    forged = make_attestation(rogue, action="tally", state="stopped", approvals=["a", "b"])
    with pytest.raises(AuthorizationError):
        box.tally(forged)
    wrong_action = make_attestation(COMMITTEE, action="clear", state="stopped", approvals=["a", "b"])
    with pytest.raises(AuthorizationError):
        box.tally(wrong_action)
    not_stopped = make_attestation(COMMITTEE, action="tally", state="voting", approvals=["a", "b"])
    with pytest.raises(AuthorizationError):
        box.tally(not_stopped)


def test_empty_box_tallies_to_zero_with_valid_signature():
    box, _, _ = make_box()
    box.stop_accepting()
    result = box.tally(stopped_attestation())
    assert result.total_votes == 0
    assert result.contests["council"]["options"] == {"alice": 0, "bob": 0, "carol": 0}
    assert result.verify(COMM.public_key())


def test_tally_counts_scripted_votes():
    box, registry, _ = make_box(block_size=3)
    for choice in ["alice", "alice", "bob", "alice", "bob", "alice"]:
        cast(box, registry, choice)
    token = fresh_token(box, registry)
    box.submit_vote(token, VoteContent.from_dict({"council": INVALID_MARKER}))
    box.confirm_vote(token)
    result = after_stop_tally(box)
    assert result.total_votes == 7
    assert result.contests["council"]["options"] == {"alice": 4, "bob": 2, "carol": 0}
    assert result.contests["council"]["invalid"] == 1
    assert result.verify(COMM.public_key())


def test_tally_result_wire_round_trip():
    box, registry, _ = make_box()
    cast(box, registry)
    result = after_stop_tally(box)
    assert TallyResult.from_wire(result.to_wire()) == result


def test_tally_writes_result_file(tmp_path):
    box, registry, _ = make_box(tmp_path=tmp_path)
    cast(box, registry)
    result = after_stop_tally(box)
    stored = json.loads((tmp_path / "votes.result.json").read_text())
    assert TallyResult.from_wire(stored) == result


def replace_vote_signature(vote, new_sig_bytes):
    from quorumvote.votestore import StoredVote

    return StoredVote(
        sequence_no=vote.sequence_no,
        token_fp=vote.token_fp,
        envelope=vote.envelope,
        vote_signature=vote.vote_signature.__class__(new_sig_bytes, vote.vote_signature.signer_purpose),
    )


def test_tampered_store_refuses_tally(tmp_path):
    box, registry, _ = make_box(tmp_path=tmp_path, block_size=3)
    for i in range(3):
        cast(box, registry)
    box.stop_accepting()
    # flip one vote signature in memory
    victim = box.store.votes[1]
    bad = bytearray(victim.vote_signature.value)
    bad[3] ^= 0x10
    box.store.votes[1] = replace_vote_signature(victim, bytes(bad))
    with pytest.raises(TamperError) as excinfo:
        box.tally(stopped_attestation())
    assert excinfo.value.report.vote_checks[1][1] is False


def test_stored_count_and_stats_expose_no_content():
    box, registry, _ = make_box()
    cast(box, registry, "bob")
    assert box.stored_count() == 1
    stats = box.stats()
    assert "bob" not in json.dumps(stats)
    assert stats["votes_stored"] == 1


# -- clear ---------------------------------------------------------------------------


def test_clear_requires_enough_distinct_approvals():
    box, registry, _ = make_box()
    cast(box, registry)
    box.stop_accepting()
    one_officer = make_attestation(
        COMMITTEE, action="clear", state="stopped", approvals=["officer-1", "officer-1"]
    )
    with pytest.raises(AuthorizationError):
        box.clear_votes(one_officer)
    assert box.stored_count() == 1


def test_clear_while_accepting_refused():
    box, registry, _ = make_box()
    with pytest.raises(IllegalStateError):
        box.clear_votes(stopped_attestation(action="clear"))


def test_authorized_clear_destroys_votes_and_audits(tmp_path):
    box, registry, _ = make_box(tmp_path=tmp_path)
    cast(box, registry)
    cast(box, registry)
    box.stop_accepting()
    box.clear_votes(stopped_attestation(action="clear"))
    assert box.stored_count() == 0
    events = [e for e in box.audit.events() if e.detail.get("action") == "clear_votes"]
    assert len(events) == 1
    assert events[0].detail["count"] == 2
    # and the on-disk store is empty too
    from quorumvote.votestore import VoteStore

    assert VoteStore(tmp_path / "votes.qvb").votes == []
