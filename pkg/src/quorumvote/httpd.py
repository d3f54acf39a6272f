"""HTTP front ends for the four services and the client to match.

Same messages, different carrier.  Every inter-component request that
crosses HTTP is the exact envelope the in-process bus carries: the five
signed fields travel as the request body (canonical JSON, which is also
the byte string the signature covers) and the signature rides in a
dedicated header, base64.  Each service embeds a single-node bus and
feeds inbound envelopes through the same dispatch path as simulation,
so signature checks, the replay window, the voter-operation allowlist,
and error encoding cannot drift between the two transports.

Three surfaces per service node:

- ``POST /v1/message``   signed component-to-component envelopes
- ``POST /v1/voter/<op>``  unsigned voter operations (login, ballot,
  cast, confirm, cancel); the anonymous token, where one is needed,
  arrives in its own header rather than the body
- ``GET /v1/health``     liveness probe, no side effects

The committee tool exposes an officer-facing JSON API instead (login,
state, authorize, passphrase, monitor, selftest, audit, result,
archive download): the committee is the operator console, so its
clients authenticate with officer sessions, not component keys.

Requests are served on a thread each, but dispatch into a component is
serialized under one lock: every operation is atomic, which keeps the
concurrent transport inside the behavior the deterministic simulation
already explores.  ``HttpFabric`` mirrors the bus's calling surface
(``call``, ``voter_call``, ``node``), so the peer proxies built for bus
mode drive the network unchanged.
"""

from __future__ import annotations

import json
import secrets
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from random import Random
from tempfile import TemporaryDirectory
from typing import Any, Callable, Mapping
from urllib import error as urlerror
from urllib import parse as urlparse
from urllib import request as urlrequest

from .bus import (
    OPEN_OPS,
    VOTER_SENDER,
    BusError,
    InProcessBus,
    ReplayRejected,
    SignatureRejected,
    UnknownPeerError,
    WireEnvelope,
    _NODE_BUILDERS,
    encode_error,
    envelope_signature_valid,
    raise_wire_error,
    sign_envelope,
)
from .clocks import Clock, WallClock
from .committee import Committee, LifecycleState
from .crypto import KeyPair, KeyPurpose, PublicKey, Signature
from .encoding import b64, unb64
from .errors import ComponentLockedError, ComponentUnavailableError

SIGNATURE_HEADER = "X-Message-Signature"
SIGNATURE_PURPOSE_HEADER = "X-Message-Signature-Purpose"
TOKEN_HEADER = "X-Vote-Token"
SESSION_HEADER = "X-Officer-Session"

MESSAGE_PATH = "/v1/message"
HEALTH_PATH = "/v1/health"
VOTER_PREFIX = "/v1/voter/"
STATE_PATH = "/v1/state"
OFFICER_PREFIX = "/v1/officer/"

_CORS_HEADERS = {
    "Access-Control-Allow-Origin": "*",
    "Access-Control-Allow-Methods": "GET, POST, OPTIONS",
    "Access-Control-Allow-Headers": ", ".join(
        ("Content-Type", TOKEN_HEADER, SESSION_HEADER, SIGNATURE_HEADER, SIGNATURE_PURPOSE_HEADER)
    ),
    "Access-Control-Expose-Headers": ", ".join((SIGNATURE_HEADER, SIGNATURE_PURPOSE_HEADER)),
}

# Transport-level rejections map to HTTP statuses; everything a
# component itself raises stays inside the payload as an error code.
_TRANSPORT_CODES: list[tuple[type, str]] = [
    (UnknownPeerError, "unknown_peer"),
    (SignatureRejected, "signature_rejected"),
    (ReplayRejected, "replay_rejected"),
    (BusError, "transport"),
]

# Domain error codes that mean "not now" rather than "bad request".
_RETRY_CODES = frozenset(
    {"unavailable", "locked", "registry_offline", "validator_offline", "auth_unavailable"}
)

_OFFICER_STATUS = {
    "officer_auth": 401,
    "duplicate_approval": 409,
    "selftest_busy": 409,
    "illegal_state": 409,
    "tamper": 409,
    "locked": 503,
    "unavailable": 503,
    "internal": 500,
}


class MalformedRequest(ValueError):
    """Request body failed to parse as the expected JSON shape."""


@dataclass(frozen=True)
class HttpPeer:
    """Where a peer listens and the key its envelopes must verify under."""

    url: str
    public: PublicKey


@dataclass(frozen=True)
class ServiceWireConfig:
    """What the HTTP front end needs beyond the service host itself:
    its wire name, its own communication public key, the trust anchors
    of every peer allowed to send to it, and the clock the replay
    window runs on (the component's own clock, so simulated time works
    over HTTP too)."""

    name: str
    public: PublicKey
    peers: Mapping[str, PublicKey]
    clock: Clock


@dataclass
class _Reply:
    status: int
    body: bytes
    content_type: str = "application/json"
    headers: dict = field(default_factory=dict)


def _json_reply(status: int, obj: dict, headers: dict | None = None) -> _Reply:
    return _Reply(
        status=status,
        body=json.dumps(obj).encode("utf-8"),
        headers=dict(headers or {}),
    )


def _error_reply(status: int, code: str, message: str) -> _Reply:
    return _json_reply(status, {"error": {"code": code, "message": message}})


def _transport_reply(exc: BusError) -> _Reply:
    for etype, code in _TRANSPORT_CODES:
        if isinstance(exc, etype):
            return _json_reply(403, {"transport": code, "message": str(exc)})
    return _json_reply(403, {"transport": "transport", "message": str(exc)})


def _raise_transport(obj: dict) -> None:
    code = obj.get("transport")
    if code == "unavailable":
        raise ComponentUnavailableError(str(obj.get("message", "")))
    for etype, ecode in _TRANSPORT_CODES:
        if ecode == code:
            raise etype(str(obj.get("message", "")))
    raise BusError(f"{code}: {obj.get('message', '')}")


def _domain_status(code: str) -> int:
    if code in _RETRY_CODES:
        return 503
    if code == "internal":
        return 500
    return 409


def _signature_from_headers(headers: Any) -> Signature | None:
    raw = headers.get(SIGNATURE_HEADER)
    if raw is None:
        return None
    purpose = headers.get(SIGNATURE_PURPOSE_HEADER) or KeyPurpose.COMMUNICATION.value
    return Signature(value=unb64(raw), signer_purpose=KeyPurpose(purpose))


def _signature_headers(envelope: WireEnvelope) -> dict:
    if envelope.payload_signature is None:
        return {}
    sig = envelope.payload_signature
    return {
        SIGNATURE_HEADER: b64(sig.value),
        SIGNATURE_PURPOSE_HEADER: sig.signer_purpose.value,
    }


def _parse_json_object(raw: bytes) -> dict:
    if not raw:
        return {}
    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedRequest("request body is not valid JSON") from exc
    if not isinstance(obj, dict):
        raise MalformedRequest("request body must be a JSON object")
    return obj


class _HttpHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt: str, *args: Any) -> None:  # noqa: ARG002 - quiet by design
        return

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length) if length > 0 else b""

    def _write(self, reply: _Reply) -> None:
        self.send_response(reply.status)
        self.send_header("Content-Type", reply.content_type)
        self.send_header("Content-Length", str(len(reply.body)))
        for name, value in reply.headers.items():
            self.send_header(name, value)
        for name, value in _CORS_HEADERS.items():
            self.send_header(name, value)
        self.end_headers()
        self.wfile.write(reply.body)

    def _serve(self, method: str) -> None:
        parts = urlparse.urlsplit(self.path)
        try:
            raw = self._read_body() if method == "POST" else b""
            reply = self.server.owner.route(method, parts.path, parts.query, raw, self.headers)
        except Exception as exc:  # noqa: BLE001 - a handler bug must not kill the listener
            reply = _error_reply(500, "internal", str(exc))
        try:
            self._write(reply)
        except (BrokenPipeError, ConnectionResetError):
            pass

    def do_GET(self) -> None:  # noqa: N802 - http.server naming
        self._serve("GET")

    def do_POST(self) -> None:  # noqa: N802
        self._serve("POST")

    def do_OPTIONS(self) -> None:  # noqa: N802
        self._write(_Reply(status=204, body=b""))


class _HttpService:
    """Listener plumbing shared by the service and committee servers:
    bind, serve on a background thread, report the url, stop."""

    def __init__(self, bind: tuple[str, int]) -> None:
        self._httpd = ThreadingHTTPServer(tuple(bind), _HttpHandler)
        self._httpd.owner = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "_HttpService":
        if self._thread is None:
            self._thread = threading.Thread(
                target=self._httpd.serve_forever, kwargs={"poll_interval": 0.05}, daemon=True
            )
            self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None

    def __enter__(self) -> "_HttpService":
        return self.start()

    def __exit__(self, *exc: Any) -> None:
        self.stop()

    def route(self, method: str, path: str, query: str, raw: bytes, headers: Any) -> _Reply:
        raise NotImplementedError


class HttpNodeServer(_HttpService):
    """One service (registry, validator, or ballot box) behind HTTP.

    Inbound envelopes run through an embedded single-node bus, so the
    transport rules are those of simulation verbatim; the lock around
    dispatch makes each operation atomic under concurrent requests.
    """

    def __init__(
        self,
        host: Any,
        config: ServiceWireConfig,
        bind: tuple[str, int] = ("127.0.0.1", 0),
    ) -> None:
        super().__init__(bind)
        self._host = host
        self._config = config
        self._bus = InProcessBus(config.clock)
        self._node = self._bus.register_node(_NODE_BUILDERS[config.name](host, config.public))
        for peer, public in config.peers.items():
            if peer != config.name:
                self._bus.register_identity(peer, public, lambda: None)
        self._lock = threading.RLock()

    @property
    def name(self) -> str:
        return self._config.name

    def route(self, method: str, path: str, query: str, raw: bytes, headers: Any) -> _Reply:
        if method == "POST" and path == MESSAGE_PATH:
            return self._handle_message(raw, headers)
        if method == "POST" and path.startswith(VOTER_PREFIX):
            return self._handle_voter(path[len(VOTER_PREFIX):], raw, headers)
        if method == "GET" and path == HEALTH_PATH:
            return _json_reply(200, {"ready": bool(self._host.ready)})
        return _error_reply(404, "not_found", "unknown endpoint")

    # -- inbound ---------------------------------------------------------

    def _handle_message(self, raw: bytes, headers: Any) -> _Reply:
        try:
            obj = _parse_json_object(raw)
            envelope = WireEnvelope(
                sender=str(obj["sender"]),
                recipient=str(obj["recipient"]),
                payload=dict(obj["payload"]),
                nonce=str(obj["nonce"]),
                timestamp=float(obj["timestamp"]),
                payload_signature=_signature_from_headers(headers),
            )
        except (MalformedRequest, KeyError, TypeError, ValueError):
            self._audit_malformed()
            return _error_reply(400, "malformed_request", "request body is not a valid message")
        if envelope.sender == VOTER_SENDER:
            return _transport_reply(
                SignatureRejected("voter traffic belongs on the voter endpoints")
            )
        return self._dispatch_to_reply(envelope)

    def _handle_voter(self, op: str, raw: bytes, headers: Any) -> _Reply:
        if op not in self._node.voter_ops:
            return _error_reply(404, "unsupported", f"no voter operation {op!r}")
        try:
            args = _parse_json_object(raw)
            token = headers.get(TOKEN_HEADER)
            if token is not None:
                unb64(token)  # reject garbage before it reaches the component
                args["token"] = token
        except (MalformedRequest, ValueError):
            self._audit_malformed()
            return _error_reply(400, "malformed_request", "request body is not a valid message")
        envelope = WireEnvelope(
            sender=VOTER_SENDER,
            recipient=self._config.name,
            payload={"op": op, "args": args},
            nonce=secrets.token_hex(16),
            timestamp=self._config.clock.now(),
        )
        reply = self._dispatch_to_reply(envelope)
        if reply.status != 200:
            return reply
        # voters get plain JSON, not an envelope to verify
        payload = json.loads(reply.body.decode("utf-8"))["payload"]
        if "error" in payload:
            err = payload["error"]
            return _json_reply(_domain_status(str(err.get("code", ""))), {"error": err})
        return _json_reply(200, {"ok": payload["ok"]})

    def _dispatch_to_reply(self, envelope: WireEnvelope) -> _Reply:
        try:
            with self._lock:
                reply = self._bus.dispatch(envelope)
                self._bus.deliveries.clear()
        except ComponentUnavailableError as exc:
            return _json_reply(503, {"transport": "unavailable", "message": str(exc)})
        except BusError as exc:
            return _transport_reply(exc)
        return _Reply(status=200, body=reply.signed_body(), headers=_signature_headers(reply))

    def _audit_malformed(self) -> None:
        component = getattr(self._host, "component", None)
        if component is None:
            return
        component.audit.record(
            self._config.clock.now(),
            "malfunction",
            component=self._config.name,
            reason="malformed http request body",
        )


class CommitteeHttpServer(_HttpService):
    """The committee tool's officer-facing JSON API.

    Officers authenticate by committee session (header), never by
    component key; the dashboard and the CLI are the intended clients.
    State reads that the tool itself leaves unauthenticated stay that
    way here, so the HTTP surface adds no policy the component lacks.
    """

    def __init__(
        self,
        committee: Committee,
        bind: tuple[str, int] = ("127.0.0.1", 0),
        archive_dir: Path | None = None,
    ) -> None:
        super().__init__(bind)
        self._committee = committee
        self._tmp: TemporaryDirectory | None = None
        if archive_dir is None:
            self._tmp = TemporaryDirectory(prefix="committee-archive-")
            archive_dir = Path(self._tmp.name)
        self._archive_dir = Path(archive_dir)

    def stop(self) -> None:
        super().stop()
        if self._tmp is not None:
            self._tmp.cleanup()
            self._tmp = None

    def route(self, method: str, path: str, query: str, raw: bytes, headers: Any) -> _Reply:
        if method == "GET" and path == HEALTH_PATH:
            return _json_reply(200, {"ready": bool(self._committee.online)})
        if method == "GET" and path == STATE_PATH:
            return self._guarded(lambda: _json_reply(200, self._committee.lifecycle()))
        if path.startswith(OFFICER_PREFIX):
            action = path[len(OFFICER_PREFIX):]
            return self._officer_route(method, action, query, raw, headers)
        return _error_reply(404, "not_found", "unknown endpoint")

    def _officer_route(
        self, method: str, action: str, query: str, raw: bytes, headers: Any
    ) -> _Reply:
        session = str(headers.get(SESSION_HEADER) or "")
        try:
            body = _parse_json_object(raw) if method == "POST" else {}
        except MalformedRequest:
            self._audit_malformed()
            return _error_reply(400, "malformed_request", "request body is not a valid message")
        params = urlparse.parse_qs(query)

        def one(name: str) -> str | None:
            values = params.get(name)
            return values[0] if values else None

        committee = self._committee
        try:
            if method == "POST" and action == "login":
                session_id = committee.officer_login(
                    str(body["officer_id"]), str(body["credential"])
                )
                return _json_reply(200, {"session": session_id})
            if method == "POST" and action == "complete-setup":
                committee.complete_setup(session)
                return _json_reply(200, {"state": committee.state.value})
            if method == "POST" and action == "authorize":
                remaining = committee.authorize(session, str(body["action"]))
                return _json_reply(
                    200, {"remaining": remaining, "state": committee.state.value}
                )
            if method == "POST" and action == "passphrase":
                remaining = committee.enter_passphrase(
                    session, str(body["slot"]), str(body["passphrase"])
                )
                return _json_reply(
                    200, {"slots_remaining": remaining, "state": committee.state.value}
                )
            if method == "GET" and action == "slots":
                return _json_reply(200, {"slots": committee.passphrase_slots()})
            if method == "GET" and action == "monitor":
                return _json_reply(200, committee.monitor().to_wire())
            if method == "POST" and action == "selftest":
                committee.officer_of(session)
                return _json_reply(200, committee.run_selftest().to_wire())
            if method == "POST" and action == "resume-stop":
                committee.resume_stop_sequence(session)
                return _json_reply(200, {"state": committee.state.value})
            if method == "GET" and action == "audit":
                records = committee.get_audit_records(
                    session, component=one("component"), category=one("category")
                )
                rows = [json.loads(event.to_json()) for event in records]
                return _json_reply(200, {"records": rows})
            if method == "GET" and action == "result":
                return _json_reply(200, committee.result().to_wire())
            if method == "GET" and action == "archive":
                return self._archive_reply(session)
        except KeyError as exc:
            return _error_reply(400, "malformed_request", f"missing field {exc}")
        except Exception as exc:  # noqa: BLE001 - domain errors cross as codes
            err = encode_error(exc)
            return _json_reply(
                _OFFICER_STATUS.get(str(err.get("code")), 400), {"error": err}
            )
        return _error_reply(404, "not_found", "unknown endpoint")

    def _guarded(self, fn: Callable[[], _Reply]) -> _Reply:
        try:
            return fn()
        except Exception as exc:  # noqa: BLE001
            err = encode_error(exc)
            return _json_reply(_OFFICER_STATUS.get(str(err.get("code")), 400), {"error": err})

    def _archive_reply(self, session: str) -> _Reply:
        committee = self._committee
        path = self._archive_dir / f"{committee.election_id}-archive.bin"
        if committee.state is LifecycleState.ARCHIVED:
            committee.officer_of(session)
            source = committee.last_archive_path or path
        else:
            committee.build_archive(session, path)
            source = path
        return _Reply(
            status=200,
            body=Path(source).read_bytes(),
            content_type="application/octet-stream",
            headers={"Content-Disposition": f'attachment; filename="{path.name}"'},
        )

    def _audit_malformed(self) -> None:
        self._committee.audit.record(
            self._committee.clock.now(),
            "malfunction",
            component="committee",
            reason="malformed http request body",
        )


def serve_http(
    component: Any, bind: tuple[str, int] = ("127.0.0.1", 0), config: Any = None
) -> _HttpService:
    """Start one service's HTTP front end and return the running server.

    A committee instance gets the officer API; anything else is a
    service host and needs a ServiceWireConfig naming it and carrying
    its peers' trust anchors.
    """
    if isinstance(component, Committee):
        server: _HttpService = CommitteeHttpServer(component, bind=bind)
    else:
        if config is None:
            raise ValueError("service hosts need a ServiceWireConfig")
        server = HttpNodeServer(component, config, bind=bind)
    return server.start()


# -- client ----------------------------------------------------------------


class HttpFabric:
    """Network counterpart of the in-process bus's calling surface.

    Exposes ``call``, ``voter_call``, and ``node`` with the same
    semantics, so the registry, ballot box, and committee proxies work
    over HTTP without modification.  Peers a request cannot reach
    surface as ComponentUnavailableError, exactly like a crashed node
    in simulation.
    """

    def __init__(
        self,
        peers: Mapping[str, HttpPeer],
        clock: Clock | None = None,
        rng: Random | None = None,
        timeout: float = 10.0,
    ) -> None:
        self._peers = dict(peers)
        self.clock: Clock = clock if clock is not None else WallClock()
        self._rng = rng
        self._timeout = timeout
        self._identities: dict[str, tuple[PublicKey, Callable[[], KeyPair | None]]] = {}

    def register_identity(
        self, name: str, public: PublicKey, signer: Callable[[], KeyPair | None]
    ) -> None:
        self._identities[name] = (public, signer)

    def add_peer(self, name: str, peer: HttpPeer) -> None:
        """Late peer wiring: services bind ephemeral ports, so addresses
        may only be known after every component is constructed."""
        self._peers[name] = peer

    def node(self, name: str) -> HttpPeer:
        try:
            return self._peers[name]
        except KeyError:
            raise UnknownPeerError(f"unknown peer: {name}") from None

    def _nonce(self) -> str:
        if self._rng is not None:
            return "%032x" % self._rng.getrandbits(128)
        return secrets.token_hex(16)

    def _post(self, url: str, data: bytes, headers: dict) -> tuple[int, bytes, Any]:
        request = urlrequest.Request(
            url, data=data, headers={"Content-Type": "application/json", **headers}, method="POST"
        )
        try:
            with urlrequest.urlopen(request, timeout=self._timeout) as response:
                return response.status, response.read(), response.headers
        except urlerror.HTTPError as exc:
            with exc:
                return exc.code, exc.read(), exc.headers
        except (urlerror.URLError, OSError) as exc:
            raise ComponentUnavailableError(f"no response from {url}: {exc}") from None

    def call(self, sender: str, recipient: str, op: str, args: dict | None = None) -> dict:
        """Build, sign, send, verify the reply, unpack or raise."""
        identity = self._identities.get(sender)
        if identity is None:
            raise UnknownPeerError(f"unknown sender: {sender}")
        keypair = identity[1]()
        if keypair is None:
            raise ComponentLockedError(f"{sender} has no signing key yet")
        peer = self.node(recipient)
        envelope = sign_envelope(
            keypair, sender, recipient, {"op": op, "args": args or {}},
            self._nonce(), self.clock.now(),
        )
        status, body, headers = self._post(
            peer.url + MESSAGE_PATH, envelope.signed_body(), _signature_headers(envelope)
        )
        if status != 200:
            self._raise_for_status(status, body, peer.url)
        obj = json.loads(body.decode("utf-8"))
        reply = WireEnvelope(
            sender=str(obj["sender"]),
            recipient=str(obj["recipient"]),
            payload=dict(obj["payload"]),
            nonce=str(obj["nonce"]),
            timestamp=float(obj["timestamp"]),
            payload_signature=_signature_from_headers(headers),
        )
        responder = self.node(reply.sender)
        if reply.payload_signature is None:
            locked_refusal = reply.payload.get("error", {}).get("code") == "locked"
            if op not in OPEN_OPS and not locked_refusal:
                raise SignatureRejected(f"unsigned response to {op!r} from {reply.sender}")
        elif not envelope_signature_valid(reply, responder.public):
            raise SignatureRejected(
                f"response from {reply.sender} failed signature verification"
            )
        if "error" in reply.payload:
            raise_wire_error(reply.payload["error"])
        return reply.payload["ok"]

    def voter_call(self, recipient: str, op: str, args: dict | None = None) -> dict:
        peer = self.node(recipient)
        args = dict(args or {})
        headers: dict = {}
        token = args.pop("token", None)
        if token is not None:
            headers[TOKEN_HEADER] = str(token)
        status, body, _ = self._post(
            peer.url + VOTER_PREFIX + op, json.dumps(args).encode("utf-8"), headers
        )
        obj = json.loads(body.decode("utf-8")) if body else {}
        if "transport" in obj:
            _raise_transport(obj)
        if "error" in obj:
            raise_wire_error(obj["error"])
        if status != 200:
            raise BusError(f"unexpected http status {status} from {peer.url}")
        return obj["ok"]

    @staticmethod
    def _raise_for_status(status: int, body: bytes, url: str) -> None:
        try:
            obj = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            obj = {}
        if status == 503:
            raise ComponentUnavailableError(str(obj.get("message", f"{url} unavailable")))
        if "transport" in obj:
            _raise_transport(obj)
        if "error" in obj:
            raise_wire_error(obj["error"])
        raise BusError(f"unexpected http status {status} from {url}")


class CommitteeClient:
    """Thin officer-API client used by the CLI and the tests; the web
    dashboard speaks the same routes."""

    def __init__(self, url: str, timeout: float = 10.0) -> None:
        self._url = url.rstrip("/")
        self._timeout = timeout
        self.session: str | None = None

    def _request(
        self,
        method: str,
        path: str,
        body: dict | None = None,
        query: dict | None = None,
    ) -> tuple[dict | bytes, str]:
        url = self._url + path
        if query:
            url += "?" + urlparse.urlencode({k: v for k, v in query.items() if v is not None})
        headers = {"Content-Type": "application/json"}
        if self.session is not None:
            headers[SESSION_HEADER] = self.session
        data = json.dumps(body or {}).encode("utf-8") if method == "POST" else None
        request = urlrequest.Request(url, data=data, headers=headers, method=method)
        try:
            with urlrequest.urlopen(request, timeout=self._timeout) as response:
                raw, kind = response.read(), str(response.headers.get("Content-Type", ""))
        except urlerror.HTTPError as exc:
            with exc:
                raw, kind = exc.read(), str(exc.headers.get("Content-Type", ""))
        except (urlerror.URLError, OSError) as exc:
            raise ComponentUnavailableError(f"no response from {url}: {exc}") from None
        if kind.startswith("application/octet-stream"):
            return raw, kind
        obj = json.loads(raw.decode("utf-8")) if raw else {}
        if "error" in obj:
            raise_wire_error(obj["error"])
        return obj, kind

    def _json(self, method: str, path: str, body: dict | None = None, query: dict | None = None) -> dict:
        obj, _ = self._request(method, path, body=body, query=query)
        assert isinstance(obj, dict)
        return obj

    def login(self, officer_id: str, credential: str) -> str:
        obj = self._json("POST", OFFICER_PREFIX + "login",
                         {"officer_id": officer_id, "credential": credential})
        self.session = str(obj["session"])
        return self.session

    def state(self) -> dict:
        return self._json("GET", STATE_PATH)

    def complete_setup(self) -> dict:
        return self._json("POST", OFFICER_PREFIX + "complete-setup")

    def authorize(self, action: str) -> int:
        return int(self._json("POST", OFFICER_PREFIX + "authorize", {"action": action})["remaining"])

    def enter_passphrase(self, slot: str, passphrase: str) -> int:
        obj = self._json("POST", OFFICER_PREFIX + "passphrase",
                         {"slot": slot, "passphrase": passphrase})
        return int(obj["slots_remaining"])

    def slots(self) -> list:
        return list(self._json("GET", OFFICER_PREFIX + "slots")["slots"])

    def monitor(self) -> dict:
        return self._json("GET", OFFICER_PREFIX + "monitor")

    def run_selftest(self) -> dict:
        return self._json("POST", OFFICER_PREFIX + "selftest")

    def resume_stop(self) -> dict:
        return self._json("POST", OFFICER_PREFIX + "resume-stop")

    def audit_records(self, component: str | None = None, category: str | None = None) -> list:
        obj = self._json("GET", OFFICER_PREFIX + "audit",
                         query={"component": component, "category": category})
        return list(obj["records"])

    def result(self) -> dict:
        return self._json("GET", OFFICER_PREFIX + "result")

    def archive(self) -> bytes:
        raw, kind = self._request("GET", OFFICER_PREFIX + "archive")
        assert isinstance(raw, bytes) and kind.startswith("application/octet-stream")
        return raw
