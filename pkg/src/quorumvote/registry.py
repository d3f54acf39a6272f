"""Electoral register service: the voter's point of entry.

Authentication is a two-man rule: the registry checks the password hash
against its signed register row, then the validator independently
verifies the signature chain and reserves it.  Only when both approve
is a voting token minted, registered with the ballot box, and handed to
the voter.  The registry keeps the token fingerprint (never the value)
so the ballot box can report the token spent or cancelled without
either side learning more than it needs.

Login happens through an image-map keyboard: the browser only ever
submits click coordinates, and the layout is reshuffled for every
login attempt.
"""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from random import Random
from typing import Any

from .audit import AuditLog
from .clocks import Clock
from .credentials import PASSWORD_ALPHABET, SignedRegister, verify_register
from .crypto import (
    Digest,
    KeyPair,
    PublicKey,
    constant_time_equal,
    hash_bytes,
    secure_erase,
)
from .defaults import SESSION_TIMEOUT_SECONDS
from .errors import ComponentUnavailableError
from .validator import UseStateError, ValidatorOfflineError, Verdict, sig_fingerprint

KEYBOARD_COLUMNS = 10
KEYBOARD_ROWS = 4
KEY_CELL_PX = 48

LOGIN_WINDOW_SECONDS = 300.0

CAST_NOTICE = "you have voted"

_DUMMY_HASH = hash_bytes(b"\x00")


class RegistryError(Exception):
    pass


class RegistryOfflineError(RegistryError):
    pass


class UnknownSessionError(RegistryError):
    pass


class SessionExpiredError(RegistryError):
    pass


class InvalidClickError(RegistryError):
    """Click landed outside every keyboard region."""


class StatusError(RegistryError):
    """Voter status transition not allowed from the current state."""


class AuthUnavailableError(RegistryError):
    """The validator could not be consulted; authentication fails closed."""


class VoterState(str, Enum):
    ELIGIBLE = "eligible"
    SESSION_ACTIVE = "session_active"
    VOTED = "voted"


class AuthOutcome(str, Enum):
    TOKEN_ISSUED = "token_issued"
    ALREADY_VOTED = "already_voted"
    REJECTED = "rejected"


@dataclass
class AuthResult:
    outcome: AuthOutcome
    token: bytearray | None = None
    notice: str | None = None

    def to_wire(self) -> dict:
        # rejection carries nothing: unknown id, wrong password, and bad
        # signature all serialize to the same bytes
        if self.outcome is AuthOutcome.REJECTED:
            return {"result": "rejected"}
        if self.outcome is AuthOutcome.ALREADY_VOTED:
            return {"result": "already_voted", "notice": self.notice}
        from .encoding import b64

        return {"result": "token_issued", "token": b64(bytes(self.token))}


def rejected() -> AuthResult:
    return AuthResult(outcome=AuthOutcome.REJECTED)


@dataclass(frozen=True)
class KeyRegion:
    x: int
    y: int
    w: int
    h: int
    char: str

    def contains(self, px: int, py: int) -> bool:
        # inclusive left/top edge, exclusive right/bottom edge
        return self.x <= px < self.x + self.w and self.y <= py < self.y + self.h


@dataclass(frozen=True)
class KeyboardLayout:
    regions: tuple[KeyRegion, ...]
    nonce: str

    def char_at(self, px: int, py: int) -> str | None:
        for region in self.regions:
            if region.contains(px, py):
                return region.char
        return None

    def region_for(self, char: str) -> KeyRegion:
        for region in self.regions:
            if region.char == char:
                return region
        raise RegistryError(f"character {char!r} not on the keyboard")

    def to_wire(self) -> dict:
        return {
            "nonce": self.nonce,
            "cell_px": KEY_CELL_PX,
            "columns": KEYBOARD_COLUMNS,
            "rows": KEYBOARD_ROWS,
            "regions": [
                {"x": r.x, "y": r.y, "w": r.w, "h": r.h, "char": r.char} for r in self.regions
            ],
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "KeyboardLayout":
        return cls(
            regions=tuple(
                KeyRegion(int(r["x"]), int(r["y"]), int(r["w"]), int(r["h"]), str(r["char"]))
                for r in obj["regions"]
            ),
            nonce=str(obj["nonce"]),
        )


def generate_layout(rng: Random | None = None, alphabet: str = PASSWORD_ALPHABET) -> KeyboardLayout:
    """Shuffle the alphabet over a 10x4 grid of 48px cells.  Cells beyond
    the alphabet stay dead: clicks there decode to nothing."""
    cell_count = KEYBOARD_COLUMNS * KEYBOARD_ROWS
    if len(alphabet) > cell_count:
        raise RegistryError("alphabet does not fit the keyboard grid")
    cells = [
        (col * KEY_CELL_PX, row * KEY_CELL_PX)
        for row in range(KEYBOARD_ROWS)
        for col in range(KEYBOARD_COLUMNS)
    ]
    if rng is not None:
        rng.shuffle(cells)
        nonce = "%032x" % rng.getrandbits(128)
    else:
        sysrand = secrets.SystemRandom()
        sysrand.shuffle(cells)
        nonce = secrets.token_hex(16)
    regions = tuple(
        KeyRegion(x=x, y=y, w=KEY_CELL_PX, h=KEY_CELL_PX, char=c)
        for (x, y), c in zip(cells, alphabet)
    )
    return KeyboardLayout(regions=regions, nonce=nonce)


@dataclass
class LoginSession:
    session_id: str
    layout: KeyboardLayout
    created_at: float
    expires_at: float


@dataclass
class _ActiveSession:
    voter_id: str
    sig_fp: Digest
    token_fp: Digest
    started_at: float
    generation: int


class Registry:
    """Holds the signed register, voter statuses, and live sessions.

    Collaborators are injected: `validator` must offer
    validate_and_reserve/commit_use/release_use, `ballot_box` must offer
    register_token.  Voter statuses persist through a transition journal;
    sessions and token fingerprints are volatile on purpose.
    """

    def __init__(
        self,
        keypair: KeyPair,
        register: SignedRegister,
        validator: Any,
        ballot_box: Any,
        clock: Clock,
        vs_public: PublicKey,
        db_keypair: KeyPair | None = None,
        session_timeout: float = SESSION_TIMEOUT_SECONDS,
        login_window: float = LOGIN_WINDOW_SECONDS,
        journal_path: Path | None = None,
        rng: Random | None = None,
        audit: AuditLog | None = None,
    ) -> None:
        verification = verify_register(register, keypair.public_key(), vs_public)
        if not verification.ok:
            raise RegistryError("register failed verification; refusing to start")
        self.audit = audit if audit is not None else AuditLog(component="registry")
        self.keypair = keypair
        self.db_keypair = db_keypair
        self.register = register
        self.validator = validator
        self.ballot_box = ballot_box
        self.clock = clock
        self.session_timeout = session_timeout
        self.login_window = login_window
        self.journal_path = Path(journal_path) if journal_path is not None else None
        self._rng = rng
        self.online = True

        self._rows = {record.voter_id: record for record in register.records}
        self._statuses = {voter_id: VoterState.ELIGIBLE for voter_id in self._rows}
        self._sessions: dict[str, _ActiveSession] = {}
        self._token_index: dict[bytes, str] = {}
        self._login_sessions: dict[str, LoginSession] = {}
        self._generation = 0
        self._lock = threading.RLock()
        self._seq = 0
        if self.journal_path is not None and self.journal_path.exists():
            self._replay_journal()

    # -- durable status journal ---------------------------------------

    def _journal(self, voter_id: str, from_state: VoterState, to_state: VoterState, reason: str) -> None:
        self._seq += 1
        if self.journal_path is None:
            return
        entry = {
            "seq": self._seq,
            "timestamp": self.clock.now(),
            "voter_id": voter_id,
            "from": from_state.value,
            "to": to_state.value,
            "reason": reason,
        }
        with open(self.journal_path, "a", encoding="utf-8") as fp:
            fp.write(json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n")
            fp.flush()

    def _replay_journal(self) -> None:
        interrupted = []
        for line in self.journal_path.read_text().splitlines():
            if not line.strip():
                continue
            entry = json.loads(line)
            voter_id = entry["voter_id"]
            if voter_id not in self._statuses:
                continue
            self._statuses[voter_id] = VoterState(entry["to"])
            self._seq = max(self._seq, entry["seq"])
        # sessions are volatile: an interrupted session cannot be resumed,
        # so it resolves to eligible (the reservation expires on its own)
        for voter_id, state in self._statuses.items():
            if state is VoterState.SESSION_ACTIVE:
                interrupted.append(voter_id)
        for voter_id in interrupted:
            self._statuses[voter_id] = VoterState.ELIGIBLE
            self._journal(voter_id, VoterState.SESSION_ACTIVE, VoterState.ELIGIBLE, "recovery")

    # -- login sessions (image-map keyboard) ---------------------------

    def begin_login(self) -> LoginSession:
        if not self.online:
            raise RegistryOfflineError("registry is offline")
        with self._lock:
            now = self.clock.now()
            for sid in [s for s, sess in self._login_sessions.items() if sess.expires_at <= now]:
                del self._login_sessions[sid]
            if self._rng is not None:
                session_id = "%032x" % self._rng.getrandbits(128)
            else:
                session_id = secrets.token_hex(16)
            session = LoginSession(
                session_id=session_id,
                layout=generate_layout(self._rng),
                created_at=now,
                expires_at=now + self.login_window,
            )
            self._login_sessions[session_id] = session
            return session

    def decode_coordinates(self, session_id: str, clicks: list[tuple[int, int]]) -> str:
        with self._lock:
            session = self._login_sessions.get(session_id)
            if session is None:
                raise UnknownSessionError("no such login session")
            if self.clock.now() >= session.expires_at:
                del self._login_sessions[session_id]
                raise SessionExpiredError("login session expired")
            chars = []
            for x, y in clicks:
                char = session.layout.char_at(int(x), int(y))
                if char is None:
                    raise InvalidClickError(f"click ({x},{y}) hit no key")
                chars.append(char)
            return "".join(chars)

    def login(self, session_id: str, voter_id: str, clicks: list[tuple[int, int]]) -> AuthResult:
        """The composed voter-facing step: decode the clicks, consume the
        login session, authenticate.  Decode problems surface as the
        same uniform rejection as credential failures."""
        if not self.online:
            raise RegistryOfflineError("registry is offline")
        try:
            password = self.decode_coordinates(session_id, clicks)
        except (UnknownSessionError, SessionExpiredError, InvalidClickError):
            return rejected()
        with self._lock:
            self._login_sessions.pop(session_id, None)
        return self.authenticate(voter_id, password)

    # -- authentication -------------------------------------------------

    def authenticate(self, voter_id: str, password: str) -> AuthResult:
        if not self.online:
            raise RegistryOfflineError("registry is offline")
        row = self._rows.get(voter_id)
        pw_hash = hash_bytes(password.encode("utf-8"))
        if row is None:
            # burn the same comparison as the known-voter path
            constant_time_equal(pw_hash.value, _DUMMY_HASH.value)
            return rejected()
        with self._lock:
            state = self._statuses[voter_id]
            if state is VoterState.VOTED:
                return AuthResult(outcome=AuthOutcome.ALREADY_VOTED, notice=CAST_NOTICE)
            if state is VoterState.SESSION_ACTIVE:
                return rejected()
        if not constant_time_equal(pw_hash.value, row.pw_hash.value):
            # mismatch short-circuits: the validator is never contacted
            return rejected()
        try:
            verdict = self.validator.validate_and_reserve(row.pw_hash, row.sig_ers, row.sig_vs)
        except (ValidatorOfflineError, ComponentUnavailableError) as exc:
            raise AuthUnavailableError("authentication unavailable") from exc
        if verdict is not Verdict.APPROVED:
            return rejected()

        sig_fp = sig_fingerprint(row.sig_ers)
        if self._rng is not None:
            token = bytearray(self._rng.randbytes(32))
        else:
            token = bytearray(secrets.token_bytes(32))
        token_fp = hash_bytes(bytes(token))
        try:
            self.ballot_box.register_token(bytes(token))
        except Exception as exc:
            self.validator.release_use(sig_fp)
            secure_erase(token)
            raise AuthUnavailableError("authentication unavailable") from exc
        with self._lock:
            if self._statuses[voter_id] is not VoterState.ELIGIBLE:
                # lost a race on this voter; undo the side effects
                self.validator.release_use(sig_fp)
                secure_erase(token)
                return rejected()
            self._generation += 1
            session = _ActiveSession(
                voter_id=voter_id,
                sig_fp=sig_fp,
                token_fp=token_fp,
                started_at=self.clock.now(),
                generation=self._generation,
            )
            self._sessions[voter_id] = session
            self._token_index[token_fp.value] = voter_id
            self._journal(voter_id, VoterState.ELIGIBLE, VoterState.SESSION_ACTIVE, "authenticate")
            self._statuses[voter_id] = VoterState.SESSION_ACTIVE
            self._arm_session_expiry(session)
        return AuthResult(outcome=AuthOutcome.TOKEN_ISSUED, token=token)

    def _arm_session_expiry(self, session: _ActiveSession) -> None:
        generation = session.generation
        voter_id = session.voter_id

        def expire() -> None:
            with self._lock:
                current = self._sessions.get(voter_id)
                if current is None or current.generation != generation:
                    return
            try:
                self.release_session(voter_id, reason="expired")
            except StatusError:
                pass

        self.clock.schedule(self.session_timeout, expire)

    # -- status transitions ---------------------------------------------

    def mark_voted(self, voter_id: str) -> None:
        """Commit point on the registry side: terminal voted status, and
        the validator is told to spend the signature for good."""
        with self._lock:
            if self._statuses.get(voter_id) is not VoterState.SESSION_ACTIVE:
                raise StatusError(f"mark_voted requires an active session for {voter_id}")
            session = self._sessions.pop(voter_id)
            self._token_index.pop(session.token_fp.value, None)
            self._journal(voter_id, VoterState.SESSION_ACTIVE, VoterState.VOTED, "vote_committed")
            self._statuses[voter_id] = VoterState.VOTED
        self.validator.commit_use(session.sig_fp)

    def release_session(self, voter_id: str, reason: str = "cancelled") -> None:
        with self._lock:
            if self._statuses.get(voter_id) is not VoterState.SESSION_ACTIVE:
                raise StatusError(f"release_session requires an active session for {voter_id}")
            session = self._sessions.pop(voter_id)
            self._token_index.pop(session.token_fp.value, None)
            self._journal(voter_id, VoterState.SESSION_ACTIVE, VoterState.ELIGIBLE, reason)
            self._statuses[voter_id] = VoterState.ELIGIBLE
        try:
            self.validator.release_use(session.sig_fp)
        except UseStateError:
            # the validator's own expiry backstop already freed it
            pass

    # -- ballot box callbacks --------------------------------------------

    def token_spent(self, token_fp: Digest) -> None:
        """The ballot box committed a vote for this token."""
        with self._lock:
            voter_id = self._token_index.get(token_fp.value)
        if voter_id is None:
            raise StatusError("spent token matches no active session")
        self.mark_voted(voter_id)

    def token_cancelled(self, token_fp: Digest) -> None:
        """The voter cancelled at the ballot box; free the session."""
        with self._lock:
            voter_id = self._token_index.get(token_fp.value)
        if voter_id is None:
            raise StatusError("cancelled token matches no active session")
        self.release_session(voter_id, reason="cancelled")

    # -- lifecycle ---------------------------------------------------------

    def go_offline(self) -> None:
        """No further logins; every open session is cancelled."""
        if not self.online:
            return
        self.online = False
        with self._lock:
            active = list(self._sessions)
            self._login_sessions.clear()
        for voter_id in active:
            try:
                self.release_session(voter_id, reason="registry_offline")
            except StatusError:
                pass
        self.audit.record(self.clock.now(), "poll_stop", state="offline", count=len(active))

    def record_poll_start(self) -> None:
        self.audit.record(self.clock.now(), "poll_start", state="voting")

    def counts(self) -> tuple[int, int, int]:
        with self._lock:
            eligible = sum(1 for s in self._statuses.values() if s is VoterState.ELIGIBLE)
            active = sum(1 for s in self._statuses.values() if s is VoterState.SESSION_ACTIVE)
            voted = sum(1 for s in self._statuses.values() if s is VoterState.VOTED)
            return (eligible, active, voted)

    def status_of(self, voter_id: str) -> VoterState:
        with self._lock:
            if voter_id not in self._statuses:
                raise RegistryError(f"unknown voter: {voter_id}")
            return self._statuses[voter_id]

    def stats(self) -> dict:
        eligible, active, voted = self.counts()
        return {
            "eligible": eligible,
            "session_active": active,
            "voted": voted,
            "online": self.online,
        }
