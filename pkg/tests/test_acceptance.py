"""Release acceptance checks.

Each test here is one go/no-go criterion for the system as a whole:
credential math, one-voter-one-vote under attack, tally exactness,
tamper evidence, unlinkability, threshold authorization, stop timing,
crash atomicity, self-test discipline, and archive integrity.  The
terminal summary prints one PASS/FAIL line per criterion.
"""

import json
import struct
import threading
import time
from dataclasses import replace
from itertools import combinations
from pathlib import Path
from random import Random
from types import SimpleNamespace

import pytest

from quorumvote.archive import read_archive, verify_archive
from quorumvote.audit import AuditLog
from quorumvote.ballotbox import BallotBox
from quorumvote.ballots import VoteContent, canonical_vote_bytes
from quorumvote.bus import (
    BallotBoxProxy,
    InProcessBus,
    PlannedFault,
    RegistryProxy,
    RemoteHost,
    ValidatorProxy,
    connect_service,
)
from quorumvote.clocks import SimClock
from quorumvote.committee import (
    ALL_SLOT_IDS,
    Committee,
    DuplicateApprovalError,
    LifecycleState,
    SelfTestBusyError,
    make_officer,
)
from quorumvote.credentials import (
    build_signed_register,
    generate_credentials,
    sign_credential,
)
from quorumvote.crypto import (
    KeyPurpose,
    generate_keypair,
    hash_bytes,
    seal,
    sign,
    verify,
)
from quorumvote.encoding import canonical_json_bytes
from quorumvote.errors import IllegalStateError
from quorumvote.faults import FaultGate
from quorumvote.keyceremony import ReadyHost
from quorumvote.registry import KeyboardLayout, Registry
from quorumvote.scenario import parse_scenario, run_scenario
from quorumvote.validator import Validator
from quorumvote.votestore import (
    BlockSeal,
    StoredVote,
    VoteStore,
    block_signature_message,
    verify_chain,
)

from .scenariogen import random_script

# The 200 randomized elections are shared by several criteria; built once.
_RANDOM_RUNS: dict = {}


def random_runs():
    if not _RANDOM_RUNS:
        started = time.perf_counter()
        runs = []
        for seed in range(200):
            script = random_script(seed)
            runs.append((script, run_scenario(script, seed=seed)))
        _RANDOM_RUNS["runs"] = runs
        _RANDOM_RUNS["elapsed"] = time.perf_counter() - started
    return _RANDOM_RUNS["runs"], _RANDOM_RUNS["elapsed"]


def _flip(data: bytes, index: int) -> bytes:
    out = bytearray(data)
    out[index % len(out)] ^= 0x01
    return bytes(out)


# -- criterion: credential signature formula ----------------------------------


def test_credential_formula_holds_and_any_mutation_breaks_it():
    started = time.perf_counter()
    ers = generate_keypair(KeyPurpose.COMMUNICATION, seed=b"acc-ers")
    vs = generate_keypair(KeyPurpose.COMMUNICATION, seed=b"acc-vs")
    ers_pub, vs_pub = ers.public_key(), vs.public_key()
    rng = Random(20260814)

    for credential in generate_credentials(500, seed=41):
        record = sign_credential(credential, ers, vs)
        assert record.pw_hash == hash_bytes(credential.password.encode("utf-8"))
        assert verify(ers_pub, record.pw_hash.value, record.sig_ers)
        assert verify(vs_pub, record.sig_ers.value, record.sig_vs)

        field = rng.choice(("pw_hash", "sig_ers", "sig_vs"))
        index = rng.randrange(0, 2**16)
        if field == "pw_hash":
            pw_hash, sig_ers, sig_vs = (
                _flip(record.pw_hash.value, index),
                record.sig_ers,
                record.sig_vs,
            )
        elif field == "sig_ers":
            pw_hash = record.pw_hash.value
            sig_ers = replace(record.sig_ers, value=_flip(record.sig_ers.value, index))
            sig_vs = record.sig_vs
        else:
            pw_hash, sig_ers = record.pw_hash.value, record.sig_ers
            sig_vs = replace(record.sig_vs, value=_flip(record.sig_vs.value, index))
        ok_ers = verify(ers_pub, pw_hash, sig_ers)
        ok_vs = verify(vs_pub, sig_ers.value, sig_vs)
        assert not (ok_ers and ok_vs), f"mutation of {field} byte {index} went unnoticed"

    assert time.perf_counter() - started < 30.0


# -- criterion: one voter, one vote --------------------------------------------


def test_no_credential_commits_twice_across_randomized_elections():
    runs, elapsed = random_runs()
    assert len(runs) == 200
    bursts = sum(
        1 for script, _ in runs if any(v.startswith("m") for v in script.voters)
    )
    assert bursts >= 40  # plenty of 8-way duplicated-credential storms

    for script, report in runs:
        committed = report.oracle["committed"]
        assert len(committed) == len(set(committed)), script.config.election_id
        inv = report.invariants["one_vote_per_credential"]
        assert inv["ok"], (script.config.election_id, inv)
        assert report.matches_oracle, (script.config.election_id, report.tally)
    assert elapsed < 60.0


# -- criterion: tally equals the plaintext oracle -------------------------------


def _seven_vote_script():
    timeline = []
    choices = (["ann"], ["ann"], ["ann"], ["ann"], ["bob"], ["bob"], "__invalid__")
    for i, choice in enumerate(choices):
        base = 1.0 + i * 3
        timeline += [
            {"at": base, "voter": f"v{i}", "action": "login"},
            {"at": base + 1, "voter": f"v{i}", "action": "submit", "choices": {"mayor": choice}},
            {"at": base + 2, "voter": f"v{i}", "action": "confirm"},
        ]
    return parse_scenario(
        {
            "election": {
                "election_id": "SEVEN",
                "ballot": {
                    "ballot_id": "SEVEN",
                    "contests": [
                        {
                            "contest_id": "mayor",
                            "options": ["ann", "bob"],
                            "min_selections": 1,
                            "max_selections": 1,
                        }
                    ],
                },
                "threshold": 2,
                "officers": [
                    {"id": "o1", "credential": "c1"},
                    {"id": "o2", "credential": "c2"},
                ],
                "low_turnout_threshold": 0,
            },
            "timeline": timeline,
            "expected_tally": {
                "mayor": {"options": {"ann": 4, "bob": 2}, "invalid": 1}
            },
        }
    )


def test_tally_matches_plaintext_count_oracle_exactly():
    report = run_scenario(_seven_vote_script(), seed=3)
    assert report.tally["contests"]["mayor"] == {
        "options": {"ann": 4, "bob": 2},
        "invalid": 1,
    }
    assert report.tally["total_votes"] == 7
    assert report.matches_oracle and report.expected_tally_ok

    runs, _ = random_runs()
    for script, rand_report in runs:
        assert rand_report.tally is not None, script.config.election_id
        assert rand_report.tally["contests"] == rand_report.oracle["contests"]
        assert rand_report.tally["total_votes"] == rand_report.oracle["total_votes"]


# -- criterion: chain tamper detection ------------------------------------------


def _chained_store(n_votes: int, block_size: int):
    comm = generate_keypair(KeyPurpose.COMMUNICATION, seed=b"acc-chain")
    db = generate_keypair(KeyPurpose.DATABASE, seed=b"acc-chain-db")
    votes, seals, pending = [], [], []
    prev = None
    for seq in range(n_votes):
        content = VoteContent.from_dict({"c": ["x" if seq % 2 else "y"]})
        envelope = seal(db.public_key(), canonical_vote_bytes(content))
        vote = StoredVote(
            sequence_no=seq,
            token_fp=hash_bytes(f"token-{seq}".encode()),
            envelope=envelope,
            vote_signature=sign(comm, canonical_json_bytes(envelope.to_wire())),
        )
        votes.append(vote)
        pending.append(vote)
        if len(pending) == block_size:
            message = block_signature_message(
                [v.vote_signature.value for v in pending], prev
            )
            seal_record = BlockSeal(len(seals), block_size, sign(comm, message))
            seals.append(seal_record)
            prev = seal_record.block_signature.value
            pending = []
    return comm.public_key(), votes, seals


def test_every_chain_tamper_class_is_detected():
    public, votes, seals = _chained_store(n_votes=100, block_size=30)
    assert verify_chain(votes, seals, public, block_size=30).ok

    def mutated(kind):
        v, s = list(votes), list(seals)
        if kind == "vote_byte":
            envelope = replace(v[7].envelope, ciphertext=_flip(v[7].envelope.ciphertext, 5))
            v[7] = replace(v[7], envelope=envelope)
        elif kind == "vote_signature":
            sig = v[41].vote_signature
            v[41] = replace(v[41], vote_signature=replace(sig, value=_flip(sig.value, 3)))
        elif kind == "block_signature":
            sig = s[1].block_signature
            s[1] = replace(s[1], block_signature=replace(sig, value=_flip(sig.value, 2)))
        elif kind == "vote_drop":
            del v[10]
        elif kind == "vote_reorder":
            v[4], v[5] = v[5], v[4]
        elif kind == "block_reorder":
            s[0], s[1] = s[1], s[0]
        return v, s

    for kind in (
        "vote_byte",
        "vote_signature",
        "block_signature",
        "vote_drop",
        "vote_reorder",
        "block_reorder",
    ):
        v, s = mutated(kind)
        report = verify_chain(v, s, public, block_size=30)
        assert not report.ok, f"{kind} went undetected"


# -- criterion: unlinkability ----------------------------------------------------


def test_durable_state_never_links_voters_to_votes():
    runs, _ = random_runs()
    scripted = run_scenario(_seven_vote_script(), seed=3)
    for label, report in [("seven", scripted)] + [
        (s.config.election_id, r) for s, r in runs
    ]:
        for name in (
            "tokens_never_at_rest",
            "votes_unlinkable_to_voters",
            "passwords_never_at_rest",
            "audit_logs_hold_no_secrets",
        ):
            assert report.invariants[name]["ok"], (label, name, report.invariants[name])


# -- criterion: threshold authorization ------------------------------------------


def build_election(
    threshold: int = 2,
    n_officers: int = 2,
    grace: float = 2.0,
    n_voters: int = 2,
    artifact_paths: dict | None = None,
    store_path: Path | None = None,
) -> SimpleNamespace:
    clock = SimClock()
    bus = InProcessBus(clock, rng=Random(3))
    names = ("registry", "validator", "ballot_box", "committee")
    comm = {
        n: generate_keypair(KeyPurpose.COMMUNICATION, seed=f"acc:{n}".encode())
        for n in names
    }
    db = {
        n: generate_keypair(KeyPurpose.DATABASE, seed=f"acc-db:{n}".encode())
        for n in names
    }
    publics = {n: kp.public_key() for n, kp in comm.items()}
    creds = generate_credentials(n_voters, seed=5)
    register = build_signed_register(
        [sign_credential(c, comm["registry"], comm["validator"]) for c in creds],
        comm["registry"],
    )
    ballot = {
        "ballot_id": "ACC",
        "contests": [
            {"contest_id": "q", "options": ["a", "b"], "min_selections": 1, "max_selections": 1}
        ],
    }
    from quorumvote.ballots import Ballot

    registry = Registry(
        comm["registry"],
        register,
        ValidatorProxy(bus),
        BallotBoxProxy(bus),
        clock,
        vs_public=publics["validator"],
        db_keypair=db["registry"],
        rng=Random(17),
        audit=AuditLog("registry"),
    )
    validator = Validator(
        comm["validator"], publics["registry"], clock, audit=AuditLog("validator")
    )
    box = BallotBox(
        comm["ballot_box"],
        db["ballot_box"],
        Ballot.from_wire(ballot),
        clock,
        committee_public=publics["committee"],
        required_approvals=threshold,
        store_path=store_path,
        block_size=30,
        audit=AuditLog("ballot_box"),
        gate=FaultGate(),
    )
    box.registry = RegistryProxy(bus)
    hosts = {
        "registry": ReadyHost(registry),
        "validator": ReadyHost(validator),
        "ballot_box": ReadyHost(box),
    }
    for name, host in hosts.items():
        connect_service(bus, name, host, publics[name])
    bus.register_identity("committee", publics["committee"], lambda: comm["committee"])
    committee = Committee(
        [make_officer(f"o{i}", f"pw{i}") for i in range(n_officers)],
        threshold,
        {n: RemoteHost(bus, n) for n in hosts},
        clock,
        comm_keypair=comm["committee"],
        db_keypair=db["committee"],
        election_id="ACC",
        grace_duration=grace,
        low_turnout_threshold=0,
        artifact_paths=artifact_paths,
        audit=AuditLog("committee"),
        rng=Random(23),
    )
    sessions = [committee.officer_login(f"o{i}", f"pw{i}") for i in range(n_officers)]
    return SimpleNamespace(
        clock=clock,
        bus=bus,
        committee=committee,
        sessions=sessions,
        creds=creds,
        registry=registry,
        box=box,
        publics=publics,
    )


def _open_polls(world: SimpleNamespace, threshold: int) -> None:
    world.committee.complete_setup(world.sessions[0])
    for i in range(threshold):
        world.committee.authorize(world.sessions[i], "start")
    for slot in ALL_SLOT_IDS:
        world.committee.enter_passphrase(world.sessions[0], slot, "anything")
    assert world.committee.state is LifecycleState.VOTING


def _cast_vote(world: SimpleNamespace, cred, choice: list) -> None:
    begin = world.bus.voter_call("registry", "begin-login", {})
    layout = KeyboardLayout.from_wire(begin["layout"])
    clicks = [
        (r.x + r.w // 2, r.y + r.h // 2)
        for r in (layout.region_for(c) for c in cred.password)
    ]
    out = world.bus.voter_call(
        "registry",
        "login",
        {"session_id": begin["session_id"], "voter_id": cred.voter_id, "clicks": clicks},
    )
    assert out["result"] == "token_issued"
    world.bus.voter_call(
        "ballot_box", "submit-vote", {"token": out["token"], "vote": {"q": choice}}
    )
    world.bus.voter_call("ballot_box", "confirm-vote", {"token": out["token"]})


def test_threshold_actions_fire_exactly_at_s_distinct_approvals():
    started = time.perf_counter()
    for s, n in ((2, 3), (2, 5), (3, 3), (3, 5)):
        # fewer than S distinct approvals never fire, whoever approves
        for subset in combinations(range(n), s - 1):
            world = build_election(threshold=s, n_officers=n)
            world.committee.complete_setup(world.sessions[0])
            for count, i in enumerate(subset, start=1):
                remaining = world.committee.authorize(world.sessions[i], "start")
                assert remaining == s - count
                assert world.committee.state is LifecycleState.AWAITING_START_AUTHORIZATION

        # any S distinct officers fire the action, exactly on the S-th
        for subset in combinations(range(n), s):
            world = build_election(threshold=s, n_officers=n)
            world.committee.complete_setup(world.sessions[0])
            for i in subset[:-1]:
                world.committee.authorize(world.sessions[i], "start")
                assert world.committee.state is LifecycleState.AWAITING_START_AUTHORIZATION
            world.committee.authorize(world.sessions[subset[-1]], "start")
            assert world.committee.state is LifecycleState.AWAITING_PASSPHRASES

        # the same officer cannot count twice
        world = build_election(threshold=s, n_officers=n)
        world.committee.complete_setup(world.sessions[0])
        world.committee.authorize(world.sessions[0], "start")
        with pytest.raises(DuplicateApprovalError):
            world.committee.authorize(world.sessions[0], "start")
        assert world.committee.approvals_needed("start") == s - 1

        # stop and tally follow the same rule on a live election
        world = build_election(threshold=s, n_officers=n)
        _open_polls(world, s)
        _cast_vote(world, world.creds[0], ["a"])
        for i in range(s - 1):
            world.committee.authorize(world.sessions[i], "stop")
            assert world.committee.state is LifecycleState.VOTING
        world.committee.authorize(world.sessions[s - 1], "stop")
        assert world.committee.state is LifecycleState.GRACE_PERIOD

        # tally is refused while voting is live or winding down
        with pytest.raises(IllegalStateError):
            world.committee.authorize(world.sessions[0], "tally")
        world.clock.advance(3.0)
        assert world.committee.state is LifecycleState.STOPPED

        # stopped never re-enters voting without a cleared ballot box
        with pytest.raises(IllegalStateError):
            world.committee.authorize(world.sessions[0], "start")
        for i in range(s):
            world.committee.authorize(world.sessions[i], "clear")
        assert world.committee.state is LifecycleState.SETUP
        assert world.box.stats()["votes_stored"] == 0
        _open_polls(world, s)
        assert world.committee.state is LifecycleState.VOTING

    # tally also refused mid-vote, before any stop approval
    world = build_election(threshold=2, n_officers=3)
    _open_polls(world, 2)
    with pytest.raises(IllegalStateError):
        world.committee.authorize(world.sessions[0], "tally")

    assert time.perf_counter() - started < 30.0


# -- criterion: stop sequence timing ----------------------------------------------


def test_grace_period_boundary_decides_every_straggler(tmp_path):
    script = parse_scenario(
        {
            "election": {
                "election_id": "STOPSEQ",
                "ballot": {
                    "ballot_id": "STOPSEQ",
                    "contests": [
                        {
                            "contest_id": "q",
                            "options": ["a", "b"],
                            "min_selections": 1,
                            "max_selections": 1,
                        }
                    ],
                },
                "threshold": 2,
                "officers": [
                    {"id": "o1", "credential": "c1"},
                    {"id": "o2", "credential": "c2"},
                ],
                "grace_period": 2.0,
                "low_turnout_threshold": 0,
            },
            "timeline": [
                # confirms inside the 2 s window: counted
                {"at": 1.0, "voter": "inside", "action": "login"},
                {"at": 2.0, "voter": "inside", "action": "submit", "choices": {"q": ["a"]}},
                {"at": 11.0, "voter": "inside", "action": "confirm"},
                # pending at expiry: cancelled, nothing stored
                {"at": 3.0, "voter": "pending", "action": "login"},
                {"at": 4.0, "voter": "pending", "action": "submit", "choices": {"q": ["b"]}},
                # arrives during the grace period: turned away
                {"at": 10.5, "voter": "late", "action": "login"},
            ],
            "stop_at": 10.0,
        }
    )
    report = run_scenario(script, seed=6, artifacts_dir=tmp_path)
    assert report.matches_oracle
    assert report.tally["contests"]["q"] == {"options": {"a": 1, "b": 0}, "invalid": 0}
    assert report.tally["total_votes"] == 1

    outcomes = {o["voter"]: o["outcome"] for o in report.action_outcomes}
    assert outcomes["inside"] == "committed"
    assert outcomes["late"].startswith("error:")

    store = VoteStore(tmp_path / "votes.bin")
    assert len(store.votes) == 1  # the pending voter left no partial record
    assert all(entry["ok"] for entry in report.invariants.values())


# -- criterion: crash atomicity ----------------------------------------------------


def test_confirm_crash_at_every_step_boundary_keeps_the_store_atomic(tmp_path):
    boundaries = ("lookup", "seal", "persist", "spend", "notify", "ack")
    base_timeline = []
    for i, choice in enumerate((["a"], ["b"])):
        base = 1.0 + i * 10
        base_timeline += [
            {"at": base, "voter": f"v{i}", "action": "login"},
            {"at": base + 1, "voter": f"v{i}", "action": "submit", "choices": {"q": choice}},
            {"at": base + 2, "voter": f"v{i}", "action": "confirm"},
        ]
    doc = {
        "election": {
            "election_id": "CRASH",
            "ballot": {
                "ballot_id": "CRASH",
                "contests": [
                    {"contest_id": "q", "options": ["a", "b"], "min_selections": 1, "max_selections": 1}
                ],
            },
            "threshold": 2,
            "officers": [
                {"id": "o1", "credential": "c1"},
                {"id": "o2", "credential": "c2"},
            ],
            "low_turnout_threshold": 0,
        },
        "timeline": base_timeline,
    }

    comm_public = None
    for step in boundaries:
        workdir = tmp_path / step
        fault = PlannedFault(
            operation="confirm-vote", fault="crash", step=step, target="ballot_box"
        )
        report = run_scenario(parse_scenario(doc), (fault,), seed=8, artifacts_dir=workdir)
        assert report.matches_oracle, (step, report.tally, report.oracle)
        assert report.invariants["chain_intact"]["ok"], step
        assert report.invariants["one_vote_per_credential"]["ok"], step
        assert report.invariants["tokens_never_at_rest"]["ok"], step

        store = VoteStore(workdir / "votes.bin")
        assert len(store.votes) == report.oracle["total_votes"], step
        for vote in store.votes:
            # every surviving record is complete and internally signed
            assert vote.envelope.ciphertext and vote.vote_signature.value


# -- criterion: self-test exclusivity and scheduling --------------------------------


def test_selftest_runs_one_at_a_time_and_fires_on_schedule():
    world = build_election()
    _open_polls(world, 2)

    entered = threading.Event()
    release = threading.Event()
    original_counts = world.registry.counts

    def stalled_counts():
        entered.set()
        assert release.wait(10.0)
        return original_counts()

    world.registry.counts = stalled_counts
    outcome: dict = {}

    def run():
        outcome["report"] = world.committee.run_selftest(trigger="officer")

    worker = threading.Thread(target=run)
    worker.start()
    assert entered.wait(10.0)
    with pytest.raises(SelfTestBusyError):
        world.committee.run_selftest(trigger="officer")
    release.set()
    worker.join(10.0)
    world.registry.counts = original_counts

    assert all(c.ok for c in outcome["report"].checks)
    officer_runs = [
        e for e in world.committee.audit.events() if e.category == "selftest_result"
    ]
    assert len(officer_runs) == 1  # the busy rejection never produced a report

    world.committee.schedule_selftests(interval=120.0)
    start = world.clock.now()
    world.clock.advance(360.0)
    scheduled = [
        e
        for e in world.committee.audit.events()
        if e.category == "selftest_result" and e.detail.get("trigger") == "schedule"
    ]
    assert [e.timestamp - start for e in scheduled] == [120.0, 240.0, 360.0]
    world.committee.cancel_scheduled_selftests()


# -- criterion: archive integrity -----------------------------------------------------


def test_archive_verifies_end_to_end_and_flags_any_member_or_baseline_change(tmp_path):
    artifacts = {}
    for name in ("registry_build", "ballot_box_build"):
        path = tmp_path / f"{name}.bin"
        path.write_bytes(f"release artifact {name}".encode() * 40)
        artifacts[name] = path

    world = build_election(
        n_voters=2, artifact_paths=artifacts, store_path=tmp_path / "votes.bin"
    )
    world.committee.record_software_baseline(world.sessions[0])
    _open_polls(world, 2)
    _cast_vote(world, world.creds[0], ["a"])
    _cast_vote(world, world.creds[1], ["b"])
    for i in range(2):
        world.committee.authorize(world.sessions[i], "stop")
    world.clock.advance(3.0)
    for i in range(2):
        world.committee.authorize(world.sessions[i], "tally")

    archive_path = tmp_path / "results.qva"
    world.committee.build_archive(world.sessions[0], archive_path)
    check = verify_archive(archive_path, world.publics["committee"])
    assert check.ok and check.signature_valid and not check.broken_members

    pristine = archive_path.read_bytes()
    members, _, _ = read_archive(archive_path)
    for name, content in members.items():
        if name == "manifest.json" or not content:
            continue
        framed = (
            struct.pack(">I", len(name.encode())) + name.encode()
            + struct.pack(">I", len(content)) + content
        )
        offset = pristine.find(framed)
        assert offset >= 0, name
        body_at = offset + 8 + len(name.encode())
        tampered = bytearray(pristine)
        tampered[body_at + len(content) // 2] ^= 0x01
        archive_path.write_bytes(bytes(tampered))
        damage = verify_archive(archive_path, world.publics["committee"])
        assert not damage.ok, name
        assert name in damage.broken_members, (name, damage.problems)
    archive_path.write_bytes(pristine)

    # one flipped byte in a release artifact breaks the baseline check
    target = artifacts["ballot_box_build"]
    data = bytearray(target.read_bytes())
    data[11] ^= 0x01
    target.write_bytes(bytes(data))
    software = world.committee.verify_software()
    assert software["recorded"] and not software["ok"]
    assert not software["artifacts"]["ballot_box_build"]["ok"]
    assert software["artifacts"]["registry_build"]["ok"]
