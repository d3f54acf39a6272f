"""Scripted elections: one YAML document in, one deterministic report out.

A scenario script names an election config, a timeline of voter actions
(login, submit, confirm, cancel, abandon), and optionally when the
committee stops the poll and what tally to expect.  run_scenario()
stands up all four services connected only through signed wire
envelopes, walks the committee through the full start sequence, replays
the timeline (keyboard clicks are computed from each login's fetched
layout, exactly as a browser would), then stops, tallies, and reports.
Component keys are derived from the seed and held ready rather than
passphrase-encrypted: the slot ceremony itself has its own dedicated
coverage, and a simulation batch cannot afford a memory-hard key
derivation per run.

The report carries three independent checks on the same run:

* the official tally next to a plaintext oracle that recomputes the
  expected outcome from nothing but the timeline rules,
* invariant scans over every durable artifact (no token material at
  rest, no voter identity next to vote content, audit logs free of
  secrets, hash chain intact),
* the per-action outcomes, so a failure names the step that diverged.

Failures never raise out of run_scenario; they are report entries.
Identical (script, faults, seed) yields a byte-identical report.

The oracle additionally models planned faults on the vote-confirmation
path (crashes at step boundaries, dropped requests), because that is
where atomicity matters: a crash before the durable append loses the
vote, a crash after it must not.  Faults outside that path mark the
oracle prediction as inexact rather than guessing.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path
from random import Random
from typing import Any

import yaml

from .audit import AuditEvent, AuditLog
from .ballotbox import BallotBox, TamperError
from .ballots import INVALID_MARKER, Ballot
from .bus import (
    BallotBoxProxy,
    InProcessBus,
    PlannedFault,
    RegistryProxy,
    RemoteHost,
    ValidatorProxy,
    connect_service,
    encode_error,
)
from .clocks import SimClock
from .committee import ALL_SLOT_IDS, Committee, LifecycleState, make_officer
from .config import ConfigError, ElectionConfig, parse_election_config
from .credentials import build_signed_register, generate_credentials, sign_credential
from .crypto import KeyPair, KeyPurpose, generate_keypair
from .encoding import b64, canonical_json_bytes, unb64
from .faults import FaultGate
from .keyceremony import ReadyHost
from .registry import KeyboardLayout, Registry
from .validator import Validator

ACTIONS = ("login", "submit", "confirm", "cancel", "abandon")

# Confirm steps ordered; the durable append happens before "spend", so a
# crash at or after it leaves a counted vote behind.
_STEPS_AFTER_COMMIT = frozenset({"spend", "notify", "ack"})


class ScenarioError(Exception):
    """Raised when a script is unusable; collects every problem."""

    def __init__(self, problems: list[str] | str) -> None:
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class VoterAction:
    """One timeline entry.

    `voter` is a client label; normally it logs in with its own
    credential, but `credential_of` lets a script point several clients
    at one credential (the duplicate-use attack).  An explicit
    `password` replaces the credential's real one, which scripts a
    failed login: generated passwords are random, so a literal can
    never match.
    """

    at: float
    voter: str
    action: str
    choices: dict | None = None
    credential_of: str | None = None
    password: str | None = None

    def to_wire(self) -> dict:
        out: dict = {"at": self.at, "voter": self.voter, "action": self.action}
        if self.choices is not None:
            out["choices"] = self.choices
        if self.credential_of is not None:
            out["credential_of"] = self.credential_of
        if self.password is not None:
            out["password"] = self.password
        return out


@dataclass(frozen=True)
class ScenarioScript:
    config: ElectionConfig
    timeline: tuple[VoterAction, ...]
    voters: tuple[str, ...]
    stop_at: float | None = None
    expected_tally: dict | None = None

    def resolved_stop_at(self) -> float:
        """When the committee authorizes the stop.  Timeline entries at
        exactly this instant still run first."""
        if self.stop_at is not None:
            return self.stop_at
        last = max((a.at for a in self.timeline), default=0.0)
        return last + 1.0


def _parse_action(obj: Any, index: int, known_voters: set | None, problems: list[str]) -> VoterAction | None:
    where = f"timeline[{index}]"
    if not isinstance(obj, dict):
        problems.append(f"{where}: expected a mapping")
        return None
    local: list[str] = []
    at = obj.get("at")
    if not isinstance(at, (int, float)) or isinstance(at, bool) or at < 0:
        local.append("at: expected a number >= 0")
    voter = obj.get("voter")
    if not isinstance(voter, str) or not voter:
        local.append("voter: expected a non-empty string")
    action = obj.get("action")
    if action not in ACTIONS:
        local.append(f"action: expected one of {', '.join(ACTIONS)}")
    choices = obj.get("choices")
    if action == "submit":
        if not isinstance(choices, dict) or not all(isinstance(k, str) for k in choices):
            local.append("choices: submit needs a mapping of contest id to selection")
    elif choices is not None:
        local.append(f"choices: only valid on submit, not {action!r}")
    credential_of = obj.get("credential_of")
    if credential_of is not None:
        if action != "login":
            local.append("credential_of: only valid on login")
        elif not isinstance(credential_of, str) or not credential_of:
            local.append("credential_of: expected a non-empty string")
        elif known_voters is not None and credential_of not in known_voters:
            local.append(f"credential_of: {credential_of!r} is not a declared voter")
    password = obj.get("password")
    if password is not None:
        if action != "login":
            local.append("password: only valid on login")
        elif not isinstance(password, str):
            local.append("password: expected a string")
    if known_voters is not None and isinstance(voter, str) and voter not in known_voters:
        local.append(f"voter: {voter!r} is not a declared voter")
    known = {"at", "voter", "action", "choices", "credential_of", "password"}
    for key in obj:
        if key not in known:
            local.append(f"unknown field: {key}")
    if local:
        problems.extend(f"{where}: {p}" for p in local)
        return None
    return VoterAction(
        at=float(at),
        voter=voter,
        action=action,
        choices=choices,
        credential_of=credential_of,
        password=password,
    )


def parse_scenario(obj: Any) -> ScenarioScript:
    """Validate a decoded YAML document; raises ScenarioError listing
    every problem found, or returns the script."""
    if not isinstance(obj, dict):
        raise ScenarioError("top level must be a mapping")
    problems: list[str] = []

    config = None
    if "election" not in obj:
        problems.append("missing field: election")
    else:
        try:
            config = parse_election_config(obj["election"])
        except ConfigError as exc:
            problems.extend(f"election: {p}" for p in exc.problems)

    declared: set | None = None
    if "voters" in obj:
        raw_voters = obj["voters"]
        if not isinstance(raw_voters, list) or not all(
            isinstance(v, str) and v for v in raw_voters
        ):
            problems.append("voters: expected a list of non-empty strings")
            raw_voters = []
        elif len(set(raw_voters)) != len(raw_voters):
            problems.append("voters: labels must be unique")
        declared = set(raw_voters)

    raw_timeline = obj.get("timeline")
    actions: list[VoterAction] = []
    if not isinstance(raw_timeline, list):
        problems.append("timeline: expected a list")
    else:
        for i, raw in enumerate(raw_timeline):
            action = _parse_action(raw, i, declared, problems)
            if action is not None:
                actions.append(action)

    if declared is None:
        seen: list[str] = []
        for action in actions:
            for label in (action.voter, action.credential_of):
                if label is not None and label not in seen:
                    seen.append(label)
        voters = tuple(seen)
    else:
        voters = tuple(obj["voters"]) if not any(
            p.startswith("voters:") for p in problems
        ) else ()

    stop_at = obj.get("stop_at")
    if stop_at is not None and (
        not isinstance(stop_at, (int, float)) or isinstance(stop_at, bool) or stop_at < 0
    ):
        problems.append("stop_at: expected a number >= 0")

    expected = obj.get("expected_tally")
    if expected is not None and not isinstance(expected, dict):
        problems.append("expected_tally: expected a mapping of contest id to counts")

    known = {"election", "voters", "timeline", "stop_at", "expected_tally"}
    for key in obj:
        if key not in known:
            problems.append(f"unknown field: {key}")

    if not voters and not problems:
        problems.append("no voters: declare some or reference them in the timeline")
    if problems:
        raise ScenarioError(problems)
    return ScenarioScript(
        config=config,
        timeline=tuple(actions),
        voters=voters,
        stop_at=float(stop_at) if stop_at is not None else None,
        expected_tally=expected,
    )


def loads_scenario(text: str) -> ScenarioScript:
    try:
        obj = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"not valid YAML: {exc}") from exc
    return parse_scenario(obj)


def load_scenario(path: Path | str) -> ScenarioScript:
    return loads_scenario(Path(path).read_text(encoding="utf-8"))


# -- the plaintext oracle -----------------------------------------------------
#
# Recomputes the expected tally from the timeline and the plain rules of
# the protocol, with none of the machinery: no crypto, no components, no
# wire.  The run is judged against this.


def _vote_acceptable(ballot: Ballot, choices: Any) -> bool:
    if not isinstance(choices, dict):
        return False
    if set(choices) != {c.contest_id for c in ballot.contests}:
        return False
    for contest in ballot.contests:
        value = choices[contest.contest_id]
        if value == INVALID_MARKER:
            continue
        if not isinstance(value, (list, tuple)):
            return False
        names = [str(v) for v in value]
        if len(set(names)) != len(names):
            return False
        if not set(names) <= set(contest.options):
            return False
        if not contest.min_selections <= len(names) <= contest.max_selections:
            return False
    return True


def _count_plain(ballot: Ballot, votes: list[dict]) -> dict:
    out: dict = {
        c.contest_id: {"options": {o: 0 for o in c.options}, "invalid": 0}
        for c in ballot.contests
    }
    for choices in votes:
        for contest in ballot.contests:
            value = choices[contest.contest_id]
            if value == INVALID_MARKER:
                out[contest.contest_id]["invalid"] += 1
            else:
                for name in value:
                    out[contest.contest_id]["options"][str(name)] += 1
    return out


@dataclass(frozen=True)
class OracleResult:
    contests: dict
    total_votes: int
    committed: tuple[str, ...]
    exact: bool

    def to_wire(self) -> dict:
        return {
            "contests": self.contests,
            "total_votes": self.total_votes,
            "committed": list(self.committed),
            "exact": self.exact,
        }


def plaintext_oracle(
    script: ScenarioScript, faults: tuple[PlannedFault, ...] = ()
) -> OracleResult:
    cfg = script.config
    stop_at = script.resolved_stop_at()
    grace_end = stop_at + cfg.grace_period
    timeout = cfg.session_timeout

    exact = True
    fault_states = []
    for fault in faults:
        if (
            fault.operation == "confirm-vote"
            and fault.fault in ("crash", "drop")
            and fault.target in (None, "ballot_box")
        ):
            fault_states.append({"fault": fault, "seen": 0, "fired": False})
        else:
            exact = False

    state = {label: "eligible" for label in script.voters}
    sessions: dict[str, dict] = {}
    token_ref: dict[str, str] = {}
    votes: list[dict] = []
    committed: list[str] = []

    def expire(t: float) -> None:
        for owner in list(sessions):
            if t >= sessions[owner]["start"] + timeout or t >= grace_end:
                del sessions[owner]
                if state[owner] == "active":
                    state[owner] = "eligible"

    def wipe_volatile() -> None:
        # a ballot box restart loses every unconfirmed token and echo
        for sess in sessions.values():
            sess["token_dead"] = True
            sess["pending"] = None

    def commit(owner: str) -> None:
        votes.append(sessions[owner]["pending"])
        committed.append(owner)
        state[owner] = "voted"
        del sessions[owner]

    ordered = sorted(enumerate(script.timeline), key=lambda e: (e[1].at, e[0]))
    for _, action in ordered:
        t = action.at
        expire(t)
        label = action.voter

        if action.action == "login":
            owner = action.credential_of or label
            if t > stop_at:
                continue  # validator already offline; no token either way
            if state[owner] != "eligible":
                continue
            if action.password is not None:
                continue  # scripted wrong password
            state[owner] = "active"
            sessions[owner] = {
                "start": t,
                "holder": label,
                "pending": None,
                "token_dead": False,
            }
            token_ref[label] = owner
            continue

        if action.action == "abandon":
            token_ref.pop(label, None)
            continue

        owner = token_ref.get(label)
        if owner is None:
            continue  # nothing client-side to act with; no request happens
        sess = sessions.get(owner)
        live = (
            sess is not None
            and sess["holder"] == label
            and not sess["token_dead"]
            and t < grace_end
        )

        if action.action == "submit":
            if live and _vote_acceptable(cfg.ballot, action.choices):
                sess["pending"] = action.choices
            continue

        if action.action == "cancel":
            if live:
                del sessions[owner]
                state[owner] = "eligible"
            continue

        # confirm: replay the fault plan the way the wire would
        dropped = False
        crashed = False
        crash_step = None
        for fs in fault_states:
            if fs["fired"]:
                continue
            fs["seen"] += 1
            if fs["seen"] < fs["fault"].occurrence:
                continue
            fs["fired"] = True
            kind = fs["fault"].fault
            if kind == "drop":
                dropped = True
                break
            if kind == "crash":
                if fs["fault"].step is not None:
                    crash_step = crash_step or fs["fault"].step
                else:
                    crashed = True
        if dropped:
            continue  # request lost before arrival; everything intact
        if crashed:
            wipe_volatile()
            continue
        can_commit = live and sess["pending"] is not None
        if crash_step is not None:
            if not can_commit:
                # the armed crash outlives this request; stop predicting
                exact = False
            elif crash_step in _STEPS_AFTER_COMMIT:
                commit(owner)
                wipe_volatile()
            else:
                wipe_volatile()
            continue
        if can_commit:
            commit(owner)

    return OracleResult(
        contests=_count_plain(cfg.ballot, votes),
        total_votes=len(votes),
        committed=tuple(committed),
        exact=exact,
    )


# -- the report ---------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioReport:
    election_id: str
    seed: int
    final_state: str
    action_outcomes: tuple[dict, ...]
    tally: dict | None
    oracle: dict
    matches_oracle: bool
    expected_tally_ok: bool | None
    invariants: dict
    audit_extract: dict

    def to_wire(self) -> dict:
        return {
            "election_id": self.election_id,
            "seed": self.seed,
            "final_state": self.final_state,
            "action_outcomes": list(self.action_outcomes),
            "tally": self.tally,
            "oracle": self.oracle,
            "matches_oracle": self.matches_oracle,
            "expected_tally_ok": self.expected_tally_ok,
            "invariants": self.invariants,
            "audit_extract": self.audit_extract,
        }

    def canonical_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_wire())

    @property
    def ok(self) -> bool:
        return (
            self.matches_oracle
            and self.expected_tally_ok is not False
            and all(entry["ok"] for entry in self.invariants.values())
        )


def _normalize_expected(ballot: Ballot, expected: dict) -> dict:
    """Zero-fill an author-written expected tally to the full count shape."""
    out: dict = {}
    for contest in ballot.contests:
        given = expected.get(contest.contest_id, {})
        options = given.get("options", {}) if isinstance(given, dict) else {}
        invalid = given.get("invalid", 0) if isinstance(given, dict) else 0
        out[contest.contest_id] = {
            "options": {o: options.get(o, 0) for o in contest.options},
            "invalid": invalid,
        }
    return out


# -- the runner ---------------------------------------------------------------


def _scan_for(patterns: list[bytes], files: list[Path]) -> list[str]:
    hits = []
    for path in files:
        if not path.exists():
            continue
        data = path.read_bytes()
        for pattern in patterns:
            if pattern and pattern in data:
                hits.append(f"{path.name}: {len(pattern)}-byte pattern present")
    return hits


def run_scenario(
    script: ScenarioScript,
    faults: tuple[PlannedFault, ...] = (),
    seed: int = 0,
    artifacts_dir: Path | None = None,
) -> ScenarioReport:
    if artifacts_dir is None:
        with tempfile.TemporaryDirectory(prefix="scenario-") as tmp:
            return _run(script, tuple(faults), seed, Path(tmp))
    artifacts_dir = Path(artifacts_dir)
    artifacts_dir.mkdir(parents=True, exist_ok=True)
    return _run(script, tuple(faults), seed, artifacts_dir)


def _run(
    script: ScenarioScript,
    faults: tuple[PlannedFault, ...],
    seed: int,
    workdir: Path,
) -> ScenarioReport:
    cfg = script.config
    clock = SimClock()
    bus = InProcessBus(clock, rng=Random(seed))
    for fault in faults:
        bus.plan_fault(fault)

    def keys_for(name: str) -> tuple[KeyPair, KeyPair]:
        base = f"{cfg.election_id}:{seed}:{name}".encode()
        return (
            generate_keypair(KeyPurpose.COMMUNICATION, seed=base),
            generate_keypair(KeyPurpose.DATABASE, seed=base),
        )

    ers_comm, ers_db = keys_for("registry")
    vs_comm, vs_db = keys_for("validator")
    bbs_comm, bbs_db = keys_for("ballot_box")
    comm_comm, comm_db = keys_for("committee")

    creds = generate_credentials(len(script.voters), seed=seed)
    creds_by_label = dict(zip(script.voters, creds))
    register = build_signed_register(
        [sign_credential(c, ers_comm, vs_comm) for c in creds], ers_comm
    )

    store_path = workdir / "votes.bin"
    audit_paths = {
        name: workdir / f"audit-{name}.jsonl"
        for name in ("registry", "validator", "ballot_box", "committee")
    }
    registry_journal = workdir / "registry.journal"
    validator_journal = workdir / "validator.journal"

    def build_ballot_box(comm: KeyPair, db: KeyPair) -> BallotBox:
        box = BallotBox(
            comm,
            db,
            cfg.ballot,
            clock,
            committee_public=comm_comm.public_key(),
            required_approvals=cfg.threshold,
            store_path=store_path,
            block_size=cfg.block_size,
            token_lifetime=cfg.session_timeout,
            audit=AuditLog("ballot_box", audit_paths["ballot_box"]),
            gate=FaultGate(),
        )
        box.registry = RegistryProxy(bus)
        return box

    registry = Registry(
        ers_comm,
        register,
        ValidatorProxy(bus),
        BallotBoxProxy(bus),
        clock,
        vs_public=vs_comm.public_key(),
        db_keypair=ers_db,
        session_timeout=cfg.session_timeout,
        journal_path=registry_journal,
        rng=Random(seed + 101),
        audit=AuditLog("registry", audit_paths["registry"]),
    )
    validator = Validator(
        vs_comm,
        ers_comm.public_key(),
        clock,
        reservation_timeout=cfg.session_timeout,
        journal_path=validator_journal,
        audit=AuditLog("validator", audit_paths["validator"]),
    )
    hosts = {
        "registry": ReadyHost(registry),
        "validator": ReadyHost(validator),
        "ballot_box": ReadyHost(build_ballot_box(bbs_comm, bbs_db)),
    }
    publics = {"registry": ers_comm, "validator": vs_comm, "ballot_box": bbs_comm}
    for name, host in hosts.items():
        connect_service(bus, name, host, publics[name].public_key())
    bus.register_identity("committee", comm_comm.public_key(), lambda: comm_comm)

    committee = Committee(
        [make_officer(o.officer_id, o.credential) for o in cfg.officers],
        cfg.threshold,
        {name: RemoteHost(bus, name) for name in hosts},
        clock,
        comm_keypair=comm_comm,
        db_keypair=comm_db,
        election_id=cfg.election_id,
        grace_duration=cfg.grace_period,
        low_turnout_threshold=cfg.low_turnout_threshold,
        audit=AuditLog("committee", audit_paths["committee"]),
        rng=Random(seed ^ 0x51ED),
    )

    officer_sessions: dict[str, str] = {}

    def session_of(index: int) -> str:
        officer = cfg.officers[index]
        if officer.officer_id not in officer_sessions:
            officer_sessions[officer.officer_id] = committee.officer_login(
                officer.officer_id, officer.credential
            )
        return officer_sessions[officer.officer_id]

    lead = session_of(0)
    committee.complete_setup(lead)
    for i in range(cfg.threshold):
        committee.authorize(session_of(i), "start")
    for slot in ALL_SLOT_IDS:
        committee.enter_passphrase(lead, slot, f"open-{slot}")

    def restart_ballot_box() -> None:
        box = build_ballot_box(bbs_comm, bbs_db)
        if committee.state in (LifecycleState.VOTING, LifecycleState.GRACE_PERIOD):
            box.start_accepting()
        hosts["ballot_box"].component = box
        bus.restart("ballot_box")
        box.recover()

    tokens: dict[str, str] = {}
    issued_tokens: list[bytes] = []
    outcomes: list[dict] = []

    def error_outcome(exc: Exception) -> str:
        return "error:" + encode_error(exc)["code"]

    def clicks(layout: KeyboardLayout, password: str) -> list:
        out = []
        for char in password:
            try:
                region = layout.region_for(char)
            except Exception:
                continue  # character not on the keyboard; the click never happens
            out.append((region.x + region.w // 2, region.y + region.h // 2))
        return out

    def execute(action: VoterAction) -> dict:
        label = action.voter
        entry = {"at": action.at, "voter": label, "action": action.action}
        try:
            if action.action == "login":
                cred = creds_by_label[action.credential_of or label]
                begin = bus.voter_call("registry", "begin-login", {})
                layout = KeyboardLayout.from_wire(begin["layout"])
                password = (
                    action.password if action.password is not None else cred.password
                )
                result = bus.voter_call(
                    "registry",
                    "login",
                    {
                        "session_id": begin["session_id"],
                        "voter_id": cred.voter_id,
                        "clicks": clicks(layout, password),
                    },
                )
                entry["outcome"] = result["result"]
                if result["result"] == "token_issued":
                    tokens[label] = result["token"]
                    issued_tokens.append(unb64(result["token"]))
            elif action.action == "abandon":
                tokens.pop(label, None)
                entry["outcome"] = "abandoned"
            else:
                token = tokens.get(label)
                if token is None:
                    entry["outcome"] = "no_token"
                elif action.action == "submit":
                    bus.voter_call(
                        "ballot_box",
                        "submit-vote",
                        {"token": token, "vote": action.choices},
                    )
                    entry["outcome"] = "accepted"
                elif action.action == "confirm":
                    bus.voter_call("ballot_box", "confirm-vote", {"token": token})
                    entry["outcome"] = "committed"
                else:
                    bus.voter_call("ballot_box", "cancel", {"token": token})
                    entry["outcome"] = "cancelled"
        except Exception as exc:
            entry["outcome"] = error_outcome(exc)
        return entry

    stop_at = script.resolved_stop_at()
    events: list[tuple[float, int, VoterAction | None]] = [
        (action.at, i, action) for i, action in enumerate(script.timeline)
    ]
    events.append((stop_at, len(script.timeline), None))
    events.sort(key=lambda e: (e[0], e[1]))

    for at, _, action in events:
        # supervisor duties first: a crashed ballot box comes back before
        # time moves on, so expiry timers never fire against a dead node
        if not bus.node("ballot_box").alive:
            restart_ballot_box()
        if at > clock.now():
            clock.advance(at - clock.now())
        if action is None:
            for i in range(cfg.threshold):
                committee.authorize(session_of(i), "stop")
        else:
            outcomes.append(execute(action))

    if not bus.node("ballot_box").alive:
        restart_ballot_box()
    grace_end = stop_at + cfg.grace_period
    if clock.now() < grace_end:
        clock.advance(grace_end - clock.now())

    tally: dict | None = None
    chain_problem: str | None = None
    try:
        for i in range(cfg.threshold):
            committee.authorize(session_of(i), "tally")
        run = committee.result()
        tally = {
            "contests": run.result.contests,
            "total_votes": run.result.total_votes,
            "low_turnout_warning": run.low_turnout_warning,
        }
    except TamperError as exc:
        chain_problem = "; ".join(exc.report.problems) or "chain verification failed"

    oracle = plaintext_oracle(script, faults)

    # -- invariant scans over everything that hit disk ----------------------

    durable = [store_path, registry_journal, validator_journal, *audit_paths.values()]

    token_patterns: list[bytes] = []
    for token in issued_tokens:
        token_patterns.extend([token, token.hex().encode(), b64(token).encode()])
    token_hits = _scan_for(token_patterns, durable)

    voter_ids = [c.voter_id.encode() for c in creds]
    vote_texts = _vote_plaintext_patterns(script)
    co_occurrences = []
    for path in durable:
        if not path.exists():
            continue
        data = path.read_bytes()
        has_voter = any(v in data for v in voter_ids)
        has_vote = any(v in data for v in vote_texts)
        if has_voter and has_vote:
            co_occurrences.append(path.name)

    password_patterns = [c.password.encode() for c in creds]
    password_hits = _scan_for(password_patterns, durable)

    # audit logs get a stricter rule: no voter identity at all, on top of
    # no tokens, no vote content, no passwords
    audit_files = list(audit_paths.values())
    audit_hits = _scan_for(
        voter_ids + token_patterns + vote_texts + password_patterns, audit_files
    )

    chain_ok = chain_problem is None
    chain_detail = {"ok": chain_ok}
    if chain_problem is not None:
        chain_detail["problem"] = chain_problem

    registry_proxy = RemoteHost(bus, "registry").component
    ballot_proxy = RemoteHost(bus, "ballot_box").component
    voted_count = registry_proxy.counts()[2] if registry_proxy is not None else 0
    stored_count = (
        ballot_proxy.stats()["votes_stored"] if ballot_proxy is not None else 0
    )

    invariants = {
        "tokens_never_at_rest": {
            "ok": not token_hits,
            "tokens_checked": len(issued_tokens),
            "files_scanned": sum(1 for p in durable if p.exists()),
            "hits": token_hits,
        },
        "votes_unlinkable_to_voters": {
            "ok": not co_occurrences,
            "files_with_both": co_occurrences,
        },
        "passwords_never_at_rest": {
            "ok": not password_hits,
            "hits": password_hits,
        },
        "audit_logs_hold_no_secrets": {
            "ok": not audit_hits,
            "hits": audit_hits,
        },
        "chain_intact": chain_detail,
        "one_vote_per_credential": {
            "ok": voted_count == stored_count
            and stored_count == len(set(oracle.committed))
            and len(oracle.committed) == len(set(oracle.committed)),
            "voted_marked": voted_count,
            "votes_stored": stored_count,
        },
    }

    # -- audit extract -------------------------------------------------------

    counts: dict[str, dict[str, int]] = {}
    total_events = 0
    for name, path in audit_paths.items():
        if not path.exists():
            continue
        for line in path.read_text().splitlines():
            if not line.strip():
                continue
            event = AuditEvent.from_json(line)
            per = counts.setdefault(event.component, {})
            per[event.category] = per.get(event.category, 0) + 1
            total_events += 1
    audit_extract = {"event_counts": counts, "total_events": total_events}

    matches = (
        tally is not None
        and tally["contests"] == oracle.contests
        and tally["total_votes"] == oracle.total_votes
    )
    expected_ok: bool | None = None
    if script.expected_tally is not None:
        expected_ok = tally is not None and tally["contests"] == _normalize_expected(
            cfg.ballot, script.expected_tally
        )

    return ScenarioReport(
        election_id=cfg.election_id,
        seed=seed,
        final_state=committee.state.value,
        action_outcomes=tuple(outcomes),
        tally=tally,
        oracle=oracle.to_wire(),
        matches_oracle=matches,
        expected_tally_ok=expected_ok,
        invariants=invariants,
        audit_extract=audit_extract,
    )


def _vote_plaintext_patterns(script: ScenarioScript) -> list[bytes]:
    """Canonical byte forms of every choice set the timeline submits.

    Vote plaintext must never rest on disk, committed or not, so the
    unlinkability scan hunts for all of them.  The stored form seals
    the sorted canonical encoding, which is what a leak would leak."""
    patterns: list[bytes] = []
    for action in script.timeline:
        if action.action != "submit" or not isinstance(action.choices, dict):
            continue
        canonical: dict = {}
        for contest_id, value in action.choices.items():
            if value == INVALID_MARKER:
                canonical[contest_id] = value
            elif isinstance(value, (list, tuple)):
                canonical[contest_id] = sorted(str(v) for v in value)
            else:
                canonical[contest_id] = str(value)
        try:
            patterns.append(canonical_json_bytes(canonical))
        except (TypeError, ValueError):
            continue
    return patterns
