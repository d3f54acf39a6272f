"""Signed message transport between the four services.

Every inter-component request crosses the wire as a WireEnvelope: the
payload plus sender, recipient, nonce, and timestamp, signed with the
sender's communication key.  The bus verifies the signature and refuses
replayed nonces before the recipient's handler runs, and the response
goes back signed by the recipient.  Two kinds of traffic are exempt,
deliberately:

- Voters hold no component keys, so voter-facing operations (login,
  ballot fetch, cast, confirm, cancel) arrive unsigned and are only
  accepted on the operations marked for them.
- A component whose keys are still passphrase-locked cannot sign at
  all.  It answers just the bootstrap operations (try-unlock, health,
  relock), unsigned, and refuses everything else.

The in-process bus is single threaded; with a SimClock and a seeded
Random the full exchange, nonces included, replays byte for byte.  The
HTTP front end reuses the same envelope rules so both transports drive
identical component behavior.
"""

from __future__ import annotations

import secrets
from collections import OrderedDict
from dataclasses import dataclass, field
from random import Random
from typing import Any, Callable

from .audit import AuditEvent
from .authz import SignedAttestation
from .ballotbox import (
    AuthorizationError,
    BallotBoxError,
    DuplicateTokenError,
    NoPendingCastError,
    TallyResult,
    TamperError,
    UnknownTokenError,
)
from .ballots import BallotError, MalformedVoteError, VoteContent
from .clocks import Clock, ClockView
from .committee import (
    CommitteeError,
    DuplicateApprovalError,
    OfficerAuthError,
    SelfTestBusyError,
)
from .credentials import register_from_text, register_to_text
from .crypto import (
    Digest,
    KeyPair,
    KeyPurpose,
    PublicKey,
    SealedEnvelope,
    Signature,
    open_envelope,
    seal,
    sign,
    verify,
)
from .defaults import NONCE_WINDOW_ENTRIES, NONCE_WINDOW_SECONDS
from .encoding import b64, canonical_json_bytes, unb64
from .errors import ComponentLockedError, ComponentUnavailableError, IllegalStateError
from .faults import CrashInjected
from .keyceremony import CeremonyError
from .registry import (
    AuthUnavailableError,
    RegistryError,
    RegistryOfflineError,
    StatusError,
)
from .validator import UseStateError, ValidatorError, ValidatorOfflineError, Verdict
from .votestore import ChainReport

VOTER_SENDER = "voter"

# Operations a component answers before its keys are unlocked; the
# responses are necessarily unsigned.
OPEN_OPS = frozenset({"try-unlock", "health", "relock"})


class BusError(Exception):
    pass


class UnknownPeerError(BusError):
    """Sender or recipient name not registered on this bus."""


class SignatureRejected(BusError):
    """Envelope signature missing, invalid, or required but absent."""


class ReplayRejected(BusError):
    """Nonce already seen inside the replay window."""


class UnsupportedOperationError(BusError):
    """The recipient has no handler for the requested operation."""


# -- envelope ----------------------------------------------------------------


def signature_to_wire(sig: Signature) -> dict:
    return {"value": b64(sig.value), "purpose": sig.signer_purpose.value}


def signature_from_wire(obj: dict) -> Signature:
    return Signature(value=unb64(obj["value"]), signer_purpose=KeyPurpose(obj["purpose"]))


@dataclass(frozen=True)
class WireEnvelope:
    sender: str
    recipient: str
    payload: dict
    nonce: str
    timestamp: float
    payload_signature: Signature | None = None

    def signed_body(self) -> bytes:
        """The exact bytes the signature covers: everything but the
        signature itself, canonically encoded."""
        return canonical_json_bytes(
            {
                "sender": self.sender,
                "recipient": self.recipient,
                "payload": self.payload,
                "nonce": self.nonce,
                "timestamp": self.timestamp,
            }
        )

    def to_wire(self) -> dict:
        obj = {
            "sender": self.sender,
            "recipient": self.recipient,
            "payload": self.payload,
            "nonce": self.nonce,
            "timestamp": self.timestamp,
        }
        if self.payload_signature is not None:
            obj["payload_signature"] = signature_to_wire(self.payload_signature)
        return obj

    @classmethod
    def from_wire(cls, obj: dict) -> "WireEnvelope":
        raw_sig = obj.get("payload_signature")
        return cls(
            sender=str(obj["sender"]),
            recipient=str(obj["recipient"]),
            payload=dict(obj["payload"]),
            nonce=str(obj["nonce"]),
            timestamp=float(obj["timestamp"]),
            payload_signature=signature_from_wire(raw_sig) if raw_sig else None,
        )


def sign_envelope(
    keypair: KeyPair,
    sender: str,
    recipient: str,
    payload: dict,
    nonce: str,
    timestamp: float,
) -> WireEnvelope:
    bare = WireEnvelope(
        sender=sender, recipient=recipient, payload=payload, nonce=nonce, timestamp=timestamp
    )
    return WireEnvelope(
        sender=sender,
        recipient=recipient,
        payload=payload,
        nonce=nonce,
        timestamp=timestamp,
        payload_signature=sign(keypair, bare.signed_body()),
    )


def envelope_signature_valid(envelope: WireEnvelope, public: PublicKey) -> bool:
    if envelope.payload_signature is None:
        return False
    return verify(public, envelope.signed_body(), envelope.payload_signature)


# -- error transport -----------------------------------------------------------

# Most specific first: encoding picks the first matching type.
_ERROR_CODES: list[tuple[type, str]] = [
    (RegistryOfflineError, "registry_offline"),
    (AuthUnavailableError, "auth_unavailable"),
    (StatusError, "status"),
    (RegistryError, "registry"),
    (ValidatorOfflineError, "validator_offline"),
    (UseStateError, "use_state"),
    (ValidatorError, "validator"),
    (UnknownTokenError, "unknown_token"),
    (NoPendingCastError, "no_pending_cast"),
    (DuplicateTokenError, "duplicate_token"),
    (AuthorizationError, "authorization"),
    (TamperError, "tamper"),
    (BallotBoxError, "ballot_box"),
    (MalformedVoteError, "malformed_vote"),
    (BallotError, "ballot"),
    (IllegalStateError, "illegal_state"),
    (ComponentLockedError, "locked"),
    (ComponentUnavailableError, "unavailable"),
    (CeremonyError, "ceremony"),
    (OfficerAuthError, "officer_auth"),
    (DuplicateApprovalError, "duplicate_approval"),
    (SelfTestBusyError, "selftest_busy"),
    (CommitteeError, "committee"),
    (UnsupportedOperationError, "unsupported"),
]


def encode_error(exc: Exception) -> dict:
    for etype, code in _ERROR_CODES:
        if isinstance(exc, etype):
            payload = {"code": code, "message": str(exc)}
            if isinstance(exc, TamperError):
                payload["report"] = exc.report.to_wire()
            return payload
    return {"code": "internal", "message": str(exc)}


def raise_wire_error(err: dict) -> None:
    code = err.get("code")
    message = str(err.get("message", ""))
    if code == "tamper":
        raise TamperError(message, ChainReport.from_wire(err["report"]))
    for etype, ecode in _ERROR_CODES:
        if ecode == code:
            raise etype(message)
    raise BusError(f"{code}: {message}")


# -- fault plan ---------------------------------------------------------------


@dataclass
class PlannedFault:
    """One deterministic transport fault.

    operation and target select the delivery, occurrence counts matching
    deliveries (1 = the first).  `crash` kills the recipient, at a named
    protocol step when `step` is set, before delivery otherwise; `drop`
    loses the request; `delay` advances the clock by `amount` before
    delivery; `clock_skew` offsets the recipient's clock from then on.
    """

    operation: str
    fault: str
    target: str | None = None
    step: str | None = None
    amount: float = 0.0
    occurrence: int = 1
    fired: bool = field(default=False, compare=False)
    _seen: int = field(default=0, repr=False, compare=False)


# -- nodes ---------------------------------------------------------------------


@dataclass
class BusNode:
    """A registered receiver: its handler, trust anchor, and hooks the
    bus uses for signing, crash injection, and clock skew."""

    name: str
    handler: Callable[[str, dict], dict]
    public: PublicKey
    signer: Callable[[], KeyPair | None]
    open_ops: frozenset = OPEN_OPS
    voter_ops: frozenset = frozenset()
    alive: bool = True
    arm_crash: Callable[[str, str], None] | None = None
    apply_skew: Callable[[float], None] | None = None
    on_restart: Callable[[], None] | None = None


class InProcessBus:
    """Single-threaded courier enforcing the envelope rules.

    dispatch() is the only door between components: it injects planned
    faults, checks liveness, verifies the sender's signature, refuses
    replayed nonces, runs the recipient handler, and signs the response
    with the recipient's key.
    """

    def __init__(
        self,
        clock: Clock,
        rng: Random | None = None,
        nonce_window: float = NONCE_WINDOW_SECONDS,
        nonce_entries: int = NONCE_WINDOW_ENTRIES,
    ) -> None:
        self.clock = clock
        self._rng = rng
        self._nodes: dict[str, BusNode] = {}
        self._identities: dict[str, tuple[PublicKey, Callable[[], KeyPair | None]]] = {}
        self._seen_nonces: OrderedDict[str, float] = OrderedDict()
        self._window = nonce_window
        self._entries = nonce_entries
        self.faults: list[PlannedFault] = []
        self.deliveries: list[tuple[str, str, str]] = []

    # -- registration -----------------------------------------------------

    def register_node(self, node: BusNode) -> BusNode:
        if node.name in self._nodes:
            raise BusError(f"peer already registered: {node.name}")
        self._nodes[node.name] = node
        self._identities[node.name] = (node.public, node.signer)
        return node

    def register_identity(
        self, name: str, public: PublicKey, signer: Callable[[], KeyPair | None]
    ) -> None:
        """A sender that never receives, such as the committee tool."""
        self._identities[name] = (public, signer)

    def node(self, name: str) -> BusNode:
        try:
            return self._nodes[name]
        except KeyError:
            raise UnknownPeerError(f"unknown peer: {name}") from None

    # -- faults and liveness -----------------------------------------------

    def plan_fault(self, fault: PlannedFault) -> PlannedFault:
        self.faults.append(fault)
        return fault

    def crash(self, name: str) -> None:
        self.node(name).alive = False

    def restart(self, name: str) -> None:
        node = self.node(name)
        node.alive = True
        if node.on_restart is not None:
            node.on_restart()

    def _inject_faults(self, node: BusNode, op: str) -> None:
        for fault in self.faults:
            if fault.fired or fault.operation != op:
                continue
            if fault.target is not None and fault.target != node.name:
                continue
            fault._seen += 1
            if fault._seen < fault.occurrence:
                continue
            fault.fired = True
            if fault.fault == "drop":
                raise ComponentUnavailableError(f"request to {node.name} was lost")
            if fault.fault == "delay":
                advance = getattr(self.clock, "advance", None)
                if advance is not None:
                    advance(fault.amount)
            elif fault.fault == "clock_skew":
                if node.apply_skew is not None:
                    node.apply_skew(fault.amount)
            elif fault.fault == "crash":
                if fault.step is not None and node.arm_crash is not None:
                    node.arm_crash(op, fault.step)
                else:
                    node.alive = False
            else:
                raise BusError(f"unknown fault kind: {fault.fault}")

    # -- the wire -----------------------------------------------------------

    def _nonce(self) -> str:
        if self._rng is not None:
            return "%032x" % self._rng.getrandbits(128)
        return secrets.token_hex(16)

    def _check_replay(self, nonce: str) -> None:
        now = self.clock.now()
        while self._seen_nonces:
            _, oldest_ts = next(iter(self._seen_nonces.items()))
            if now - oldest_ts > self._window or len(self._seen_nonces) >= self._entries:
                self._seen_nonces.popitem(last=False)
            else:
                break
        if nonce in self._seen_nonces:
            raise ReplayRejected("nonce already seen inside the replay window")
        self._seen_nonces[nonce] = now

    def dispatch(self, envelope: WireEnvelope) -> WireEnvelope:
        node = self._nodes.get(envelope.recipient)
        if node is None:
            raise UnknownPeerError(f"unknown recipient: {envelope.recipient}")
        op = str(envelope.payload.get("op", ""))
        args = envelope.payload.get("args") or {}

        self._inject_faults(node, op)
        if not node.alive:
            raise ComponentUnavailableError(f"{node.name} is not reachable")

        # verification happens before the handler can run
        if envelope.sender == VOTER_SENDER:
            if op not in node.voter_ops:
                raise SignatureRejected(f"operation {op!r} requires a signed envelope")
        else:
            identity = self._identities.get(envelope.sender)
            if identity is None:
                raise UnknownPeerError(f"unknown sender: {envelope.sender}")
            if not envelope_signature_valid(envelope, identity[0]):
                raise SignatureRejected(
                    f"envelope from {envelope.sender} failed signature verification"
                )
        self._check_replay(envelope.nonce)

        self.deliveries.append((envelope.sender, envelope.recipient, op))
        try:
            payload: dict = {"ok": node.handler(op, args)}
        except CrashInjected:
            node.alive = False
            raise ComponentUnavailableError(f"{node.name} went down mid-operation") from None
        except Exception as exc:  # noqa: BLE001 - domain errors cross the wire as codes
            payload = {"error": encode_error(exc)}

        keypair = node.signer()
        nonce, now = self._nonce(), self.clock.now()
        if keypair is not None:
            return sign_envelope(keypair, node.name, envelope.sender, payload, nonce, now)
        return WireEnvelope(
            sender=node.name,
            recipient=envelope.sender,
            payload=payload,
            nonce=nonce,
            timestamp=now,
        )

    def call(self, sender: str, recipient: str, op: str, args: dict | None = None) -> dict:
        """Build, sign, dispatch, verify the reply, unpack or raise."""
        identity = self._identities.get(sender)
        if identity is None:
            raise UnknownPeerError(f"unknown sender: {sender}")
        keypair = identity[1]()
        if keypair is None:
            raise ComponentLockedError(f"{sender} has no signing key yet")
        envelope = sign_envelope(
            keypair, sender, recipient, {"op": op, "args": args or {}}, self._nonce(), self.clock.now()
        )
        reply = self.dispatch(envelope)
        responder = self.node(reply.sender)
        if reply.payload_signature is None:
            # a keyless peer may only answer bootstrap ops or refuse as locked
            locked_refusal = reply.payload.get("error", {}).get("code") == "locked"
            if op not in responder.open_ops and not locked_refusal:
                raise SignatureRejected(f"unsigned response to {op!r} from {reply.sender}")
        elif not envelope_signature_valid(reply, responder.public):
            raise SignatureRejected(f"response from {reply.sender} failed signature verification")
        return self._unpack(reply)

    def voter_call(self, recipient: str, op: str, args: dict | None = None) -> dict:
        envelope = WireEnvelope(
            sender=VOTER_SENDER,
            recipient=recipient,
            payload={"op": op, "args": args or {}},
            nonce=self._nonce(),
            timestamp=self.clock.now(),
        )
        return self._unpack(self.dispatch(envelope))

    @staticmethod
    def _unpack(reply: WireEnvelope) -> dict:
        if "error" in reply.payload:
            raise_wire_error(reply.payload["error"])
        return reply.payload["ok"]


# -- service adapters -----------------------------------------------------------

# Wire operation -> the name a component's fault gate uses internally.
_GATE_OPS = {"confirm-vote": "confirm"}


def _host_open_ops(host: Any, op: str, args: dict) -> dict | None:
    if op == "try-unlock":
        unlocked = host.try_unlock(KeyPurpose(args["purpose"]), str(args["passphrase"]))
        return {"unlocked": bool(unlocked), "ready": bool(host.ready)}
    if op == "health":
        return {"ready": bool(host.ready)}
    if op == "relock":
        host.relock()
        return {"ready": bool(host.ready)}
    return None


def _component_of(host: Any, name: str) -> Any:
    if not host.ready or host.component is None:
        raise ComponentLockedError(f"{name} keys are locked")
    return host.component


def _common_ops(component: Any, op: str) -> dict | None:
    if op == "stats":
        return component.stats()
    if op == "go-offline":
        component.go_offline()
        return {}
    if op == "record-poll-start":
        component.record_poll_start()
        return {}
    if op == "audit-events":
        return {"events": [event.to_json() for event in component.audit.events()]}
    if op == "time":
        return {"now": component.clock.now()}
    return None


def _skew_hook(host: Any) -> Callable[[float], None]:
    def apply_skew(offset: float) -> None:
        component = host.component
        if component is not None:
            component.clock = ClockView(component.clock, offset)

    return apply_skew


def registry_node(host: Any, public: PublicKey, name: str = "registry") -> BusNode:
    def handle(op: str, args: dict) -> dict:
        handled = _host_open_ops(host, op, args)
        if handled is not None:
            return handled
        component = _component_of(host, name)
        if op == "begin-login":
            session = component.begin_login()
            return {
                "session_id": session.session_id,
                "layout": session.layout.to_wire(),
                "expires_at": session.expires_at,
            }
        if op == "login":
            clicks = [(int(x), int(y)) for x, y in args["clicks"]]
            return component.login(str(args["session_id"]), str(args["voter_id"]), clicks).to_wire()
        if op == "token-spent":
            component.token_spent(Digest(bytes.fromhex(args["token_fp"])))
            return {}
        if op == "token-cancelled":
            component.token_cancelled(Digest(bytes.fromhex(args["token_fp"])))
            return {}
        if op == "counts":
            eligible, active, voted = component.counts()
            return {"eligible": eligible, "session_active": active, "voted": voted}
        if op == "export-register":
            return {"text": register_to_text(component.register)}
        handled = _common_ops(component, op)
        if handled is not None:
            return handled
        raise UnsupportedOperationError(f"registry does not handle {op!r}")

    return BusNode(
        name=name,
        handler=handle,
        public=public,
        signer=lambda: host.component.keypair if host.component is not None else None,
        voter_ops=frozenset({"begin-login", "login"}),
        apply_skew=_skew_hook(host),
    )


def validator_node(host: Any, public: PublicKey, name: str = "validator") -> BusNode:
    def handle(op: str, args: dict) -> dict:
        handled = _host_open_ops(host, op, args)
        if handled is not None:
            return handled
        component = _component_of(host, name)
        if op == "validate-and-reserve":
            verdict = component.validate_and_reserve(
                Digest(bytes.fromhex(args["pw_hash"])),
                signature_from_wire(args["sig_ers"]),
                signature_from_wire(args["sig_vs"]),
            )
            return {"verdict": verdict.value}
        if op == "commit-use":
            component.commit_use(Digest(bytes.fromhex(args["fingerprint"])))
            return {}
        if op == "release-use":
            component.release_use(Digest(bytes.fromhex(args["fingerprint"])))
            return {}
        handled = _common_ops(component, op)
        if handled is not None:
            return handled
        raise UnsupportedOperationError(f"validator does not handle {op!r}")

    return BusNode(
        name=name,
        handler=handle,
        public=public,
        signer=lambda: host.component.keypair if host.component is not None else None,
        apply_skew=_skew_hook(host),
    )


def ballot_box_node(host: Any, public: PublicKey, name: str = "ballot_box") -> BusNode:
    def handle(op: str, args: dict) -> dict:
        handled = _host_open_ops(host, op, args)
        if handled is not None:
            return handled
        component = _component_of(host, name)
        if op == "register-token":
            token = open_envelope(
                component.comm_keypair, SealedEnvelope.from_wire(args["token_sealed"])
            )
            component.register_token(token)
            return {}
        if op == "fetch-ballot":
            return {"ballot": component.fetch_ballot(unb64(args["token"])).to_wire()}
        if op == "submit-vote":
            echo = component.submit_vote(
                unb64(args["token"]), VoteContent.from_dict(args["vote"])
            )
            return {"echo": b64(echo)}
        if op == "confirm-vote":
            return component.confirm_vote(unb64(args["token"]))
        if op == "cancel":
            component.cancel(unb64(args["token"]))
            return {}
        if op == "verify-chain":
            return {"report": component.verify_chain().to_wire()}
        if op == "tally":
            result = component.tally(SignedAttestation.from_wire(args["proof"]))
            return {"result": result.to_wire()}
        if op == "clear-votes":
            component.clear_votes(SignedAttestation.from_wire(args["proof"]))
            return {}
        if op == "start-accepting":
            component.start_accepting()
            return {}
        if op == "stop-accepting":
            component.stop_accepting()
            return {}
        if op == "store-image":
            return {"image": b64(component.store_image())}
        handled = _common_ops(component, op)
        if handled is not None:
            return handled
        raise UnsupportedOperationError(f"ballot box does not handle {op!r}")

    def arm(op: str, step: str) -> None:
        component = host.component
        if component is not None:
            component.gate.arm(_GATE_OPS.get(op, op), step)

    return BusNode(
        name=name,
        handler=handle,
        public=public,
        signer=lambda: host.component.comm_keypair if host.component is not None else None,
        voter_ops=frozenset({"fetch-ballot", "submit-vote", "confirm-vote", "cancel"}),
        arm_crash=arm,
        apply_skew=_skew_hook(host),
    )


# -- peer proxies ----------------------------------------------------------------


class ValidatorProxy:
    """Registry-side stand-in for the validator."""

    def __init__(self, bus: InProcessBus, sender: str = "registry", target: str = "validator"):
        self._bus = bus
        self._sender = sender
        self._target = target

    def validate_and_reserve(
        self, pw_hash: Digest, sig_ers: Signature, sig_vs: Signature
    ) -> Verdict:
        result = self._bus.call(
            self._sender,
            self._target,
            "validate-and-reserve",
            {
                "pw_hash": pw_hash.hex,
                "sig_ers": signature_to_wire(sig_ers),
                "sig_vs": signature_to_wire(sig_vs),
            },
        )
        return Verdict(result["verdict"])

    def commit_use(self, fingerprint: Digest) -> None:
        self._bus.call(self._sender, self._target, "commit-use", {"fingerprint": fingerprint.hex})

    def release_use(self, fingerprint: Digest) -> None:
        self._bus.call(self._sender, self._target, "release-use", {"fingerprint": fingerprint.hex})


class BallotBoxProxy:
    """Registry-side stand-in for the ballot box; tokens cross the wire
    sealed to the recipient's communication key, never in the clear."""

    def __init__(self, bus: InProcessBus, sender: str = "registry", target: str = "ballot_box"):
        self._bus = bus
        self._sender = sender
        self._target = target

    def register_token(self, token_value: bytes) -> None:
        sealed = seal(self._bus.node(self._target).public, bytes(token_value))
        self._bus.call(
            self._sender, self._target, "register-token", {"token_sealed": sealed.to_wire()}
        )


class RegistryProxy:
    """Ballot-box-side stand-in for the registry's status callbacks."""

    def __init__(self, bus: InProcessBus, sender: str = "ballot_box", target: str = "registry"):
        self._bus = bus
        self._sender = sender
        self._target = target

    def token_spent(self, token_fp: Digest) -> None:
        self._bus.call(self._sender, self._target, "token-spent", {"token_fp": token_fp.hex})

    def token_cancelled(self, token_fp: Digest) -> None:
        self._bus.call(self._sender, self._target, "token-cancelled", {"token_fp": token_fp.hex})


class RemoteAuditView:
    """Read-only view of a peer's audit log, fetched over the wire."""

    def __init__(self, bus: InProcessBus, sender: str, target: str):
        self._bus = bus
        self._sender = sender
        self.component = target

    def events(self) -> list[AuditEvent]:
        rows = self._bus.call(self._sender, self.component, "audit-events", {})["events"]
        return [AuditEvent.from_json(row) for row in rows]


class RemoteTimeView:
    def __init__(self, bus: InProcessBus, sender: str, target: str):
        self._bus = bus
        self._sender = sender
        self._target = target

    def now(self) -> float:
        return float(self._bus.call(self._sender, self._target, "time", {})["now"])


class ComponentProxy:
    """Committee-side method proxy over one peer.  Exposes exactly the
    surface the committee drives: lifecycle switches, counts, chain and
    tally operations, audit and clock reads."""

    def __init__(self, bus: InProcessBus, sender: str, target: str):
        self._bus = bus
        self._sender = sender
        self.name = target
        self.audit = RemoteAuditView(bus, sender, target)
        self.clock = RemoteTimeView(bus, sender, target)

    def _call(self, op: str, args: dict | None = None) -> dict:
        return self._bus.call(self._sender, self.name, op, args or {})

    def counts(self) -> tuple[int, int, int]:
        row = self._call("counts")
        return (int(row["eligible"]), int(row["session_active"]), int(row["voted"]))

    def stats(self) -> dict:
        return self._call("stats")

    def go_offline(self) -> None:
        self._call("go-offline")

    def record_poll_start(self) -> None:
        self._call("record-poll-start")

    def start_accepting(self) -> None:
        self._call("start-accepting")

    def stop_accepting(self) -> None:
        self._call("stop-accepting")

    def verify_chain(self) -> ChainReport:
        return ChainReport.from_wire(self._call("verify-chain")["report"])

    def tally(self, proof: SignedAttestation) -> TallyResult:
        return TallyResult.from_wire(self._call("tally", {"proof": proof.to_wire()})["result"])

    def clear_votes(self, proof: SignedAttestation) -> None:
        self._call("clear-votes", {"proof": proof.to_wire()})

    def store_image(self) -> bytes:
        return unb64(self._call("store-image")["image"])

    @property
    def register(self):
        return register_from_text(self._call("export-register")["text"])


class RemoteHost:
    """Committee-side facade over one peer: health, unlock ceremony,
    relock, and the component proxy once the peer reports ready."""

    def __init__(self, bus: InProcessBus, target: str, sender: str = "committee"):
        self._bus = bus
        self._sender = sender
        self._target = target
        self._proxy = ComponentProxy(bus, sender, target)

    @property
    def ready(self) -> bool:
        try:
            return bool(self._bus.call(self._sender, self._target, "health", {})["ready"])
        except (ComponentUnavailableError, BusError):
            return False

    @property
    def component(self) -> ComponentProxy | None:
        return self._proxy if self.ready else None

    def try_unlock(self, purpose: KeyPurpose, passphrase: str) -> bool:
        row = self._bus.call(
            self._sender,
            self._target,
            "try-unlock",
            {"purpose": purpose.value, "passphrase": passphrase},
        )
        return bool(row["unlocked"])

    def relock(self) -> None:
        self._bus.call(self._sender, self._target, "relock", {})


_NODE_BUILDERS = {
    "registry": registry_node,
    "validator": validator_node,
    "ballot_box": ballot_box_node,
}


def connect_service(bus: InProcessBus, name: str, host: Any, public: PublicKey) -> BusNode:
    """Register one service host under its canonical name."""
    return bus.register_node(_NODE_BUILDERS[name](host, public))
