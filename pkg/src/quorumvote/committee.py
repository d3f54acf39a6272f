"""Committee tool: lifecycle state machine, S-of-N authorization,
passphrase ceremony, monitoring, self-tests, audit access, tally
orchestration, and archive generation.

The committee never touches a vote or a voter identity.  It issues
signed state attestations that other components verify independently,
so even a compromised committee process cannot make the ballot box
tally a running election.
"""

from __future__ import annotations

import os
import secrets
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from random import Random
from typing import Any

from .archive import write_archive
from .audit import AuditEvent, AuditLog, merge_events
from .authz import SignedAttestation, make_attestation
from .ballotbox import TamperError
from .clocks import Clock
from .crypto import (
    Digest,
    KeyPair,
    KeyPurpose,
    constant_time_equal,
    hash_bytes,
)
from .defaults import GRACE_PERIOD_SECONDS, SELFTEST_INTERVAL_SECONDS
from .encoding import canonical_json_bytes
from .errors import ComponentLockedError, ComponentUnavailableError, IllegalStateError
from .keyceremony import REMOTE_PURPOSES

COMPONENT_NAMES = ("registry", "validator", "ballot_box")
SELFTEST_CHECKS = (
    "hardware",
    "storage_integrity",
    "system_time",
    "vote_count_anomaly",
    "network",
)
ACTIONS = ("start", "stop", "tally", "clear")

DEFAULT_LOW_TURNOUT_THRESHOLD = 10
CLOCK_SKEW_TOLERANCE_SECONDS = 30.0

_DUMMY_CREDENTIAL_HASH = hash_bytes(b"\x00" * 32)


class CommitteeError(Exception):
    pass


class OfficerAuthError(CommitteeError):
    """Login or session check failed."""


class DuplicateApprovalError(CommitteeError):
    """An officer may authorize each action once and only once."""


class SelfTestBusyError(CommitteeError):
    """Only one self-test routine can run at a time."""


class LifecycleState(str, Enum):
    SETUP = "setup"
    AWAITING_START_AUTHORIZATION = "awaiting_start_authorization"
    AWAITING_PASSPHRASES = "awaiting_passphrases"
    VOTING = "voting"
    GRACE_PERIOD = "grace_period"
    STOPPED = "stopped"
    TALLIED = "tallied"
    ARCHIVED = "archived"


# The only state in which each quorum action may gather approvals.
ACTION_LEGAL_STATE = {
    "start": LifecycleState.AWAITING_START_AUTHORIZATION,
    "stop": LifecycleState.VOTING,
    "tally": LifecycleState.STOPPED,
    "clear": LifecycleState.STOPPED,
}


@dataclass(frozen=True)
class Officer:
    officer_id: str
    credential_hash: Digest


def make_officer(officer_id: str, credential: str) -> Officer:
    return Officer(
        officer_id=officer_id,
        credential_hash=hash_bytes(credential.encode("utf-8")),
    )


@dataclass
class AuthorizationLedger:
    """Approvals gathered toward one privileged action."""

    action: str
    threshold: int
    approvals: list[str] = field(default_factory=list)
    fired: bool = False

    def approve(self, officer_id: str) -> int:
        """Record one approval; returns how many more are needed."""
        if officer_id in self.approvals:
            raise DuplicateApprovalError(
                f"officer {officer_id!r} already authorized {self.action!r}"
            )
        self.approvals.append(officer_id)
        return self.threshold - len(self.approvals)

    @property
    def remaining(self) -> int:
        return max(0, self.threshold - len(self.approvals))


@dataclass(frozen=True)
class MonitoringSnapshot:
    """Counts and health only; the type has no field that could carry
    vote content or a voter identity."""

    timestamp: float
    votes_stored: int | None
    voters_voted: int | None
    voters_session_active: int | None
    voters_eligible: int | None
    component_health: dict[str, str]
    anomaly: bool

    def to_wire(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "votes_stored": self.votes_stored,
            "voters_voted": self.voters_voted,
            "voters_session_active": self.voters_session_active,
            "voters_eligible": self.voters_eligible,
            "component_health": dict(self.component_health),
            "anomaly": self.anomaly,
        }


@dataclass(frozen=True)
class CheckResult:
    name: str
    outcome: str  # "ok" | "failed"
    detail: str

    @property
    def ok(self) -> bool:
        return self.outcome == "ok"


@dataclass(frozen=True)
class SelfTestReport:
    started_by: str
    timestamp: float
    checks: tuple[CheckResult, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def to_wire(self) -> dict:
        return {
            "started_by": self.started_by,
            "timestamp": self.timestamp,
            "ok": self.ok,
            "checks": [
                {"name": c.name, "outcome": c.outcome, "detail": c.detail}
                for c in self.checks
            ],
        }


@dataclass(frozen=True)
class TallyRun:
    """A tally result together with the turnout warning that preceded it."""

    result: Any
    low_turnout_warning: bool

    def to_wire(self) -> dict:
        return {
            "result": self.result.to_wire(),
            "low_turnout_warning": self.low_turnout_warning,
        }


def slot_id(component: str, purpose: KeyPurpose) -> str:
    return f"{component}.{purpose.value}"


ALL_SLOT_IDS = tuple(
    slot_id(name, purpose) for name in COMPONENT_NAMES for purpose in REMOTE_PURPOSES
)


class Committee:
    """The only interface officers use to administer the election.

    `hosts` maps component name to a host object (see keyceremony) with
    `ready`, `component`, `try_unlock(purpose, passphrase)` and
    `relock()`.  The committee's own two keys are either passed in
    unlocked, or supplied encrypted and opened via
    `enter_own_passphrases` before any officer may log in.
    """

    def __init__(
        self,
        officers: list[Officer],
        threshold: int,
        hosts: dict[str, Any],
        clock: Clock,
        comm_keypair: KeyPair | None = None,
        db_keypair: KeyPair | None = None,
        protected_keys: Any = None,
        election_id: str = "election",
        grace_duration: float = GRACE_PERIOD_SECONDS,
        low_turnout_threshold: int = DEFAULT_LOW_TURNOUT_THRESHOLD,
        clock_skew_tolerance: float = CLOCK_SKEW_TOLERANCE_SECONDS,
        artifact_paths: dict[str, Path] | None = None,
        audit: AuditLog | None = None,
        rng: Random | None = None,
    ) -> None:
        if threshold < 2:
            raise CommitteeError("separation of duty requires a threshold above 1")
        ids = [o.officer_id for o in officers]
        if len(set(ids)) != len(ids):
            raise CommitteeError("officer ids must be unique")
        if len(officers) < threshold:
            raise CommitteeError("fewer officers than the approval threshold")
        missing = [name for name in COMPONENT_NAMES if name not in hosts]
        if missing:
            raise CommitteeError(f"hosts missing for: {', '.join(missing)}")
        if comm_keypair is None and protected_keys is None:
            raise CommitteeError("either unlocked keys or protected keys are required")

        self.officers = {o.officer_id: o for o in officers}
        self.threshold = threshold
        self.hosts = dict(hosts)
        self.clock = clock
        self.election_id = election_id
        self.grace_duration = grace_duration
        self.low_turnout_threshold = low_turnout_threshold
        self.clock_skew_tolerance = clock_skew_tolerance
        self.artifact_paths = dict(artifact_paths) if artifact_paths else {}
        self.audit = audit if audit is not None else AuditLog(component="committee")
        self._rng = rng

        self._comm = comm_keypair
        self._db = db_keypair
        self._protected = protected_keys

        self.state = LifecycleState.SETUP
        self._lock = threading.RLock()
        self._selftest_mutex = threading.Lock()
        self._sessions: dict[str, str] = {}
        self._slots: dict[str, bool] = {sid: False for sid in ALL_SLOT_IDS}
        self._ledgers: dict[str, AuthorizationLedger] = self._fresh_ledgers()
        self.notifications: list[str] = []
        self.last_tally: TallyRun | None = None
        self.software_baseline: dict | None = None
        self.last_archive_path: Path | None = None
        self._stop_stage: str | None = None
        self._grace_handle: int | None = None
        self._selftest_schedule_handle: int | None = None
        self._selftest_interval: float | None = None
        self.force_check_failures: set[str] = set()

    # -- committee's own unlock ----------------------------------------

    @property
    def online(self) -> bool:
        return self._comm is not None and (
            self._db is not None or self._protected is None
        )

    def enter_own_passphrases(self, communication: str, database: str) -> bool:
        """Open the committee's own two keys; done at service start,
        before any officer login."""
        if self.online:
            return True
        from .crypto import WrongPassphraseError
        from .crypto import unlock_private_key as _unlock

        try:
            comm = _unlock(
                self._protected.communication,
                communication,
                self._protected.communication_public.value,
            )
            db = _unlock(
                self._protected.database,
                database,
                self._protected.database_public.value,
            )
        except WrongPassphraseError:
            return False
        self._comm = comm
        self._db = db
        return True

    def _require_online(self) -> None:
        if not self.online:
            raise ComponentLockedError(
                "committee keys are still locked; enter its passphrases first"
            )

    @property
    def comm_keypair(self) -> KeyPair:
        self._require_online()
        return self._comm

    # -- officer sessions ----------------------------------------------

    def officer_login(self, officer_id: str, credential: str) -> str:
        self._require_online()
        officer = self.officers.get(officer_id)
        presented = hash_bytes(credential.encode("utf-8"))
        expected = officer.credential_hash if officer is not None else _DUMMY_CREDENTIAL_HASH
        ok = constant_time_equal(presented.value, expected.value) and officer is not None
        if not ok:
            # never echo the attempted id: it may itself be a mistyped secret
            detail = {"success": False}
            if officer is not None:
                detail["officer_id"] = officer_id
            self.audit.record(self.clock.now(), "officer_auth", **detail)
            raise OfficerAuthError("officer login rejected")
        session = self._new_session_id()
        with self._lock:
            self._sessions[session] = officer_id
        self.audit.record(
            self.clock.now(), "officer_auth", success=True, officer_id=officer_id
        )
        return session

    def _new_session_id(self) -> str:
        if self._rng is not None:
            return self._rng.randbytes(16).hex()
        return secrets.token_hex(16)

    def _officer(self, session: str) -> str:
        with self._lock:
            officer_id = self._sessions.get(session)
        if officer_id is None:
            raise OfficerAuthError("unknown or expired officer session")
        return officer_id

    def officer_of(self, session: str) -> str:
        """Resolve a session id to its officer; unknown sessions are
        rejected the same way a failed login is."""
        return self._officer(session)

    # -- lifecycle ------------------------------------------------------

    def _fresh_ledgers(self) -> dict[str, AuthorizationLedger]:
        return {
            action: AuthorizationLedger(action=action, threshold=self.threshold)
            for action in ACTIONS
        }

    def _require_state(self, *allowed: LifecycleState) -> None:
        if self.state not in allowed:
            names = ", ".join(s.value for s in allowed)
            raise IllegalStateError(
                f"operation requires state in ({names}); current state is {self.state.value}"
            )

    def complete_setup(self, session: str) -> None:
        """Declare configuration finished; the election now waits for
        S start authorizations."""
        self._officer(session)
        with self._lock:
            self._require_state(LifecycleState.SETUP)
            self.state = LifecycleState.AWAITING_START_AUTHORIZATION

    def authorize(self, session: str, action: str) -> int:
        """Record one approval toward `action`; returns how many more
        distinct officers must approve.  The action fires exactly when
        the count reaches zero."""
        officer_id = self._officer(session)
        if action not in ACTIONS:
            raise CommitteeError(f"unknown action: {action!r}")
        with self._lock:
            legal = ACTION_LEGAL_STATE[action]
            if self.state is not legal:
                raise IllegalStateError(
                    f"action {action!r} is only legal in state {legal.value}; "
                    f"current state is {self.state.value}"
                )
            ledger = self._ledgers[action]
            remaining = ledger.approve(officer_id)
            if remaining == 0:
                ledger.fired = True
                self._fire(action, ledger)
            return remaining

    def _fire(self, action: str, ledger: AuthorizationLedger) -> None:
        if action == "start":
            self.state = LifecycleState.AWAITING_PASSPHRASES
            self.audit.record(
                self.clock.now(),
                "poll_start",
                action="authorized",
                approvals=len(ledger.approvals),
                state=self.state.value,
            )
        elif action == "stop":
            self._begin_stop_sequence()
        elif action == "tally":
            self._run_tally(ledger)
        elif action == "clear":
            self._run_clear(ledger)

    def approvals_needed(self, action: str) -> int:
        if action not in ACTIONS:
            raise CommitteeError(f"unknown action: {action!r}")
        with self._lock:
            return self._ledgers[action].remaining

    # -- passphrase ceremony ---------------------------------------------

    def passphrase_slots(self) -> list[dict]:
        with self._lock:
            return [
                {"slot": sid, "entered": entered}
                for sid, entered in self._slots.items()
            ]

    def enter_passphrase(self, session: str, slot: str, passphrase: str) -> int:
        """Try one component passphrase; returns how many of the six
        slots are still empty.  A wrong passphrase leaves its slot empty
        and is a normal retry path, not a malfunction."""
        self._officer(session)
        with self._lock:
            self._require_state(LifecycleState.AWAITING_PASSPHRASES)
            if slot not in self._slots:
                raise CommitteeError(f"unknown passphrase slot: {slot!r}")
            component_name, _, purpose_name = slot.partition(".")
            purpose = KeyPurpose(purpose_name)
            if not self._slots[slot]:
                host = self.hosts[component_name]
                if host.try_unlock(purpose, passphrase):
                    self._slots[slot] = True
            remaining = sum(1 for entered in self._slots.values() if not entered)
            if remaining == 0:
                self._activate_components()
            return remaining

    def _activate_components(self) -> None:
        registry = self._component("registry")
        validator = self._component("validator")
        ballot_box = self._component("ballot_box")
        # components built through the unlock ceremony are wired here,
        # once all three exist
        if getattr(registry, "validator", None) is None:
            registry.validator = validator
        if getattr(registry, "ballot_box", None) is None:
            registry.ballot_box = ballot_box
        if getattr(ballot_box, "registry", None) is None:
            ballot_box.registry = registry
        ballot_box.start_accepting()
        registry.record_poll_start()
        validator.record_poll_start()
        self.state = LifecycleState.VOTING
        self.audit.record(self.clock.now(), "poll_start", state=self.state.value)

    # -- components -------------------------------------------------------

    def _component(self, name: str) -> Any:
        host = self.hosts[name]
        if not host.ready or host.component is None:
            raise ComponentUnavailableError(name)
        return host.component

    # -- stop sequence ------------------------------------------------------

    def _begin_stop_sequence(self) -> None:
        self._stop_stage = "validator_offline"
        self._advance_stop_sequence()

    def _advance_stop_sequence(self) -> None:
        with self._lock:
            self._advance_stop_locked()

    def _advance_stop_locked(self) -> None:
        if self._stop_stage == "validator_offline":
            try:
                self._component("validator").go_offline()
            except ComponentUnavailableError:
                self._halt_stop_sequence("validator")
                return
            self.state = LifecycleState.GRACE_PERIOD
            self.audit.record(
                self.clock.now(),
                "poll_stop",
                step="validator_offline",
                state=self.state.value,
            )
            self._stop_stage = "finish"
            self._grace_handle = self.clock.schedule(
                self.grace_duration, self._advance_stop_sequence
            )
        elif self._stop_stage == "finish":
            try:
                self._component("ballot_box").stop_accepting()
                self._component("registry").go_offline()
            except ComponentUnavailableError as exc:
                self._halt_stop_sequence(str(exc) or "component")
                return
            self.state = LifecycleState.STOPPED
            self._stop_stage = None
            self.audit.record(
                self.clock.now(), "poll_stop", step="complete", state=self.state.value
            )

    def _halt_stop_sequence(self, component: str) -> None:
        self.audit.record(
            self.clock.now(),
            "malfunction",
            component=component,
            reason="unreachable during stop sequence",
        )
        self.notifications.append(
            f"stop sequence halted: {component} unreachable; resume when restored"
        )

    def resume_stop_sequence(self, session: str) -> None:
        """Officer-driven retry after a halt during stop."""
        self._officer(session)
        with self._lock:
            if self._stop_stage is None:
                raise IllegalStateError("no halted stop sequence to resume")
            self._advance_stop_sequence()

    # -- tally -----------------------------------------------------------

    def _quorum_attestation(self, action: str, ledger: AuthorizationLedger) -> SignedAttestation:
        return make_attestation(
            self.comm_keypair,
            action=action,
            state="stopped",
            approvals=list(ledger.approvals),
            threshold=self.threshold,
            election_id=self.election_id,
            nonce=secrets.token_hex(8) if self._rng is None else self._rng.randbytes(8).hex(),
            timestamp=self.clock.now(),
        )

    def _run_tally(self, ledger: AuthorizationLedger) -> None:
        ballot_box = self._component("ballot_box")
        stored = ballot_box.stats()["votes_stored"]
        warning = stored < self.low_turnout_threshold
        if warning:
            self.notifications.append(
                f"turnout warning: {stored} votes stored is below the "
                f"threshold of {self.low_turnout_threshold}; anonymity may be reduced"
            )
        proof = self._quorum_attestation("tally", ledger)
        try:
            result = ballot_box.tally(proof)
        except TamperError:
            self.audit.record(
                self.clock.now(),
                "malfunction",
                component="ballot_box",
                reason="vote chain failed verification; tally refused",
            )
            self.notifications.append(
                "tally aborted: stored votes failed chain verification"
            )
            raise
        self.last_tally = TallyRun(result=result, low_turnout_warning=warning)
        self.state = LifecycleState.TALLIED
        self.audit.record(
            self.clock.now(),
            "tally_start_and_result",
            count=result.total_votes,
            warning=warning,
            threshold=self.low_turnout_threshold,
            outcome="ok",
        )

    def result(self) -> TallyRun:
        self._require_state(LifecycleState.TALLIED, LifecycleState.ARCHIVED)
        assert self.last_tally is not None
        return self.last_tally

    # -- restart ------------------------------------------------------------

    def _run_clear(self, ledger: AuthorizationLedger) -> None:
        ballot_box = self._component("ballot_box")
        proof = self._quorum_attestation("clear", ledger)
        ballot_box.clear_votes(proof)
        for host in self.hosts.values():
            host.relock()
        self._slots = {sid: False for sid in ALL_SLOT_IDS}
        self._ledgers = self._fresh_ledgers()
        self.last_tally = None
        self.state = LifecycleState.SETUP
        self.audit.record(
            self.clock.now(),
            "poll_start",
            action="clear_votes",
            state=self.state.value,
            approvals=len(ledger.approvals),
        )

    # -- monitoring ----------------------------------------------------------

    def _polling(self) -> bool:
        return self.state in (
            LifecycleState.VOTING,
            LifecycleState.GRACE_PERIOD,
            LifecycleState.STOPPED,
        )

    def monitor(self) -> MonitoringSnapshot:
        """Counts and per-component health.  A divergence between voters
        marked voted and votes stored that open sessions cannot explain
        is recorded as a malfunction."""
        health: dict[str, str] = {}
        stored = voted = active = eligible = None
        polling = self._polling()

        try:
            counts = self._component("registry").counts()
            eligible, active, voted = counts
            health["registry"] = "up"
        except ComponentUnavailableError:
            health["registry"] = "down" if polling else "not_started"
        try:
            self._component("validator").stats()
            health["validator"] = "up"
        except ComponentUnavailableError:
            health["validator"] = "down" if polling else "not_started"
        try:
            stored = self._component("ballot_box").stats()["votes_stored"]
            health["ballot_box"] = "up"
        except ComponentUnavailableError:
            health["ballot_box"] = "down" if polling else "not_started"

        if polling:
            for name, status in health.items():
                if status == "down":
                    self.audit.record(
                        self.clock.now(),
                        "malfunction",
                        component=name,
                        reason="unreachable",
                    )
                    self.notifications.append(f"component unreachable: {name}")

        anomaly = False
        if stored is not None and voted is not None and active is not None:
            if abs(voted - stored) > active:
                anomaly = True
                self.audit.record(
                    self.clock.now(),
                    "malfunction",
                    check="vote_count_anomaly",
                    votes_stored=stored,
                    voters_voted=voted,
                    session_active=active,
                )
                self.notifications.append(
                    "vote count anomaly: stored votes and voted marks diverge"
                )
        return MonitoringSnapshot(
            timestamp=self.clock.now(),
            votes_stored=stored,
            voters_voted=voted,
            voters_session_active=active,
            voters_eligible=eligible,
            component_health=health,
            anomaly=anomaly,
        )

    # -- self-tests -------------------------------------------------------------

    def run_selftest(self, trigger: str = "officer") -> SelfTestReport:
        """Run the five checks; only one routine may run at once."""
        if not self._selftest_mutex.acquire(blocking=False):
            raise SelfTestBusyError("a self-test routine is already running")
        try:
            started = self.clock.now()
            checks = (
                self._check_hardware(),
                self._check_storage_integrity(),
                self._check_system_time(),
                self._check_vote_count(),
                self._check_network(),
            )
            report = SelfTestReport(started_by=trigger, timestamp=started, checks=checks)
            failures = [c for c in checks if not c.ok]
            self.audit.record(
                self.clock.now(),
                "selftest_result",
                trigger=trigger,
                outcome="ok" if not failures else "failed",
                count=len(failures),
            )
            for check in failures:
                self.audit.record(
                    self.clock.now(),
                    "malfunction",
                    check=check.name,
                    reason=check.detail[:80],
                )
                self.notifications.append(f"self-test failure: {check.name}")
            return report
        finally:
            self._selftest_mutex.release()

    def _forced(self, name: str) -> CheckResult | None:
        if name in self.force_check_failures:
            return CheckResult(name, "failed", "failure injected by operator harness")
        return None

    def _check_hardware(self) -> CheckResult:
        forced = self._forced("hardware")
        if forced:
            return forced
        try:
            usage = os.statvfs(os.getcwd())
            if usage.f_bavail == 0:
                return CheckResult("hardware", "failed", "no free disk blocks")
            scratch = bytearray(1 << 16)
            scratch[0] = scratch[-1] = 1
        except OSError as exc:
            return CheckResult("hardware", "failed", f"platform probe failed: {exc}")
        return CheckResult("hardware", "ok", "disk and memory probes passed")

    def _check_storage_integrity(self) -> CheckResult:
        forced = self._forced("storage_integrity")
        if forced:
            return forced
        try:
            report = self._component("ballot_box").verify_chain()
        except ComponentUnavailableError:
            return CheckResult("storage_integrity", "failed", "ballot box unreachable")
        if not report.ok:
            return CheckResult(
                "storage_integrity", "failed", "; ".join(report.problems) or "chain invalid"
            )
        return CheckResult("storage_integrity", "ok", "vote chain verifies")

    def _check_system_time(self) -> CheckResult:
        forced = self._forced("system_time")
        if forced:
            return forced
        own = self.clock.now()
        worst = 0.0
        worst_component = ""
        for name in COMPONENT_NAMES:
            try:
                theirs = self._component(name).clock.now()
            except ComponentUnavailableError:
                return CheckResult("system_time", "failed", f"{name} unreachable")
            skew = abs(theirs - own)
            if skew > worst:
                worst, worst_component = skew, name
        if worst > self.clock_skew_tolerance:
            return CheckResult(
                "system_time",
                "failed",
                f"clock skew {worst:.1f}s at {worst_component} exceeds tolerance",
            )
        return CheckResult("system_time", "ok", f"max skew {worst:.1f}s within tolerance")

    def _check_vote_count(self) -> CheckResult:
        forced = self._forced("vote_count_anomaly")
        if forced:
            return forced
        try:
            _, active, voted = self._component("registry").counts()
            stored = self._component("ballot_box").stats()["votes_stored"]
        except ComponentUnavailableError:
            return CheckResult("vote_count_anomaly", "failed", "counts unavailable")
        if abs(voted - stored) > active:
            return CheckResult(
                "vote_count_anomaly",
                "failed",
                f"voted marks ({voted}) and stored votes ({stored}) diverge "
                f"beyond open sessions ({active})",
            )
        return CheckResult("vote_count_anomaly", "ok", "counts consistent")

    def _check_network(self) -> CheckResult:
        forced = self._forced("network")
        if forced:
            return forced
        down = []
        for name in COMPONENT_NAMES:
            try:
                component = self._component(name)
                if name == "registry":
                    component.counts()
                else:
                    component.stats()
            except ComponentUnavailableError:
                down.append(name)
        if down:
            return CheckResult("network", "failed", f"unreachable: {', '.join(down)}")
        return CheckResult("network", "ok", "all components reachable")

    def schedule_selftests(self, interval: float = SELFTEST_INTERVAL_SECONDS) -> None:
        """Run the routine every `interval` seconds until the election is
        tallied; a run already in progress makes the scheduled one skip."""
        self.cancel_scheduled_selftests()
        self._selftest_interval = interval
        self._selftest_schedule_handle = self.clock.schedule(interval, self._scheduled_selftest)

    def cancel_scheduled_selftests(self) -> None:
        if self._selftest_schedule_handle is not None:
            self.clock.cancel(self._selftest_schedule_handle)
            self._selftest_schedule_handle = None
        self._selftest_interval = None

    def _scheduled_selftest(self) -> None:
        try:
            self.run_selftest(trigger="schedule")
        except SelfTestBusyError:
            pass
        if self._selftest_interval is not None and self.state not in (
            LifecycleState.TALLIED,
            LifecycleState.ARCHIVED,
        ):
            self._selftest_schedule_handle = self.clock.schedule(
                self._selftest_interval, self._scheduled_selftest
            )

    # -- audit access ----------------------------------------------------------

    def _audit_logs(self) -> list[AuditLog]:
        logs = [self.audit]
        for name in COMPONENT_NAMES:
            host = self.hosts[name]
            if host.ready and host.component is not None:
                log = getattr(host.component, "audit", None)
                if log is not None:
                    logs.append(log)
        return logs

    def get_audit_records(
        self,
        session: str,
        component: str | None = None,
        category: str | None = None,
    ) -> list[AuditEvent]:
        """Merged, time-ordered view over every component's log; each
        event is re-checked against the redaction schema on the way out."""
        self._officer(session)
        return merge_events(self._audit_logs(), component=component, category=category)

    # -- software baseline -------------------------------------------------------

    def record_software_baseline(self, session: str) -> dict:
        """Digest every component artifact and sign the set; only
        meaningful before the election starts."""
        self._officer(session)
        with self._lock:
            self._require_state(LifecycleState.SETUP)
            digests = {}
            for name, path in sorted(self.artifact_paths.items()):
                path = Path(path)
                if not path.exists():
                    raise CommitteeError(f"artifact missing for {name}: {path}")
                digests[name] = hash_bytes(path.read_bytes()).hex
            if not digests:
                raise CommitteeError("no artifact paths configured")
            attestation = make_attestation(
                self.comm_keypair,
                action="software_baseline",
                election_id=self.election_id,
                digests=digests,
            )
            self.software_baseline = {
                "digests": digests,
                "attestation": attestation.to_wire(),
            }
            return dict(digests)

    def verify_software(self) -> dict:
        """Re-hash every artifact against the recorded baseline."""
        if self.software_baseline is None:
            return {"recorded": False, "ok": False, "artifacts": {}}
        artifacts = {}
        all_ok = True
        for name, expected in self.software_baseline["digests"].items():
            path = self.artifact_paths.get(name)
            actual = (
                hash_bytes(Path(path).read_bytes()).hex
                if path is not None and Path(path).exists()
                else None
            )
            ok = actual == expected
            all_ok = all_ok and ok
            artifacts[name] = {"expected": expected, "actual": actual, "ok": ok}
        return {"recorded": True, "ok": all_ok, "artifacts": artifacts}

    # -- archive --------------------------------------------------------------

    def build_archive(self, session: str, path: Path) -> dict:
        """Assemble the signed post-election archive and move the
        lifecycle to its terminal state."""
        self._officer(session)
        with self._lock:
            self._require_state(LifecycleState.TALLIED)
            software = self.verify_software()
            if self.software_baseline is not None and not software["ok"]:
                changed = [
                    name for name, row in software["artifacts"].items() if not row["ok"]
                ]
                for name in changed:
                    self.audit.record(
                        self.clock.now(),
                        "malfunction",
                        component=name,
                        reason="software signature changed since baseline",
                    )
                self.notifications.append(
                    "software verification failed for: " + ", ".join(changed)
                )
            members = self._archive_members(software)
            manifest = write_archive(Path(path), members, self.comm_keypair)
            self.last_archive_path = Path(path)
            self.state = LifecycleState.ARCHIVED
            return manifest

    def _archive_members(self, software: dict) -> dict[str, bytes]:
        assert self.last_tally is not None
        members: dict[str, bytes] = {}
        members["tally/result.json"] = canonical_json_bytes(self.last_tally.to_wire())
        for log in self._audit_logs():
            lines = "".join(event.to_json() + "\n" for event in log.events())
            members[f"audit/{log.component}.jsonl"] = lines.encode("utf-8")
        ballot_box = self._component("ballot_box")
        members["database/ballot_box.bin"] = ballot_box.store_image()
        for name in ("registry", "validator"):
            try:
                component = self._component(name)
            except ComponentUnavailableError:
                continue
            journal = getattr(component, "journal_path", None)
            if journal is not None and Path(journal).exists():
                members[f"database/{name}_journal.jsonl"] = Path(journal).read_bytes()
        registry = self._component("registry")
        from .credentials import register_to_text

        members["register/electoral_register.txt"] = register_to_text(
            registry.register
        ).encode("utf-8")
        members["software/verification.json"] = canonical_json_bytes(software)
        members["election/configuration.json"] = canonical_json_bytes(
            {
                "election_id": self.election_id,
                "threshold": self.threshold,
                "officers": sorted(self.officers),
                "grace_duration": self.grace_duration,
                "low_turnout_threshold": self.low_turnout_threshold,
            }
        )
        return members

    # -- status ----------------------------------------------------------------

    def lifecycle(self) -> dict:
        """Officer dashboard summary; counts and state only."""
        with self._lock:
            return {
                "state": self.state.value,
                "election_id": self.election_id,
                "threshold": self.threshold,
                "approvals": {
                    action: {
                        "count": len(ledger.approvals),
                        "remaining": ledger.remaining,
                        "fired": ledger.fired,
                    }
                    for action, ledger in self._ledgers.items()
                },
                "passphrase_slots_remaining": sum(
                    1 for entered in self._slots.values() if not entered
                ),
                "notifications": list(self.notifications),
                "low_turnout_threshold": self.low_turnout_threshold,
                "grace_duration": self.grace_duration,
            }
