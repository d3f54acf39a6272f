"""Operator command line.

One election lives in one directory:

    election.yaml      ballot, officers, threshold, timing knobs
    keys/              per-component key files (public + encrypted private)
    credentials.txt    voter id / password pairs for the print shop
    records.json       dual-signed credential records
    register.txt       the signed voting register
    envelopes.json     sealed credential letters
    baseline.json      signed software digests
    markers/           one <step>.done file per finished ceremony step
    data/              runtime state: journals, vote store, audit logs

Ceremony commands refuse to overwrite a finished step unless --force is
given, and destructive commands additionally want --yes.  Passphrases
come from an interactive prompt or from a file descriptor
(--passphrase-fd, one passphrase per line), never from argv.

Exit codes: 0 success, 1 a verification failed, 2 usage or
configuration trouble.
"""

from __future__ import annotations

import argparse
import contextlib
import getpass
import json
import os
import signal
import sys
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .audit import AuditLog
from .authz import make_attestation
from .archive import verify_archive
from .ballotbox import BallotBox
from .bus import BallotBoxProxy, RegistryProxy, RemoteHost, ValidatorProxy
from .clocks import WallClock
from .committee import Committee, CommitteeError, make_officer
from .config import ConfigError, ElectionConfig, load_election_config
from .credentials import (
    Credential,
    CredentialRecord,
    build_signed_register,
    credentials_from_text,
    credentials_to_text,
    export_credentials,
    generate_credentials,
    register_from_text,
    register_to_text,
    sign_credential,
    verify_register,
)
from .crypto import (
    CryptoError,
    Digest,
    KeyPurpose,
    Signature,
    generate_keypair,
    hash_bytes,
    load_encrypted_private_key,
    load_keypair,
    load_public_key,
    protect_private_key,
    save_encrypted_private_key,
    save_public_key,
)
from .encoding import FormatError, b64, unb64
from .errors import ComponentUnavailableError
from .faults import FaultGate
from .httpd import CommitteeHttpServer, HttpFabric, HttpPeer, ServiceWireConfig, serve_http
from .keyceremony import CeremonyError, LockedComponent, ProtectedKeySet
from .registry import Registry
from .scenario import ScenarioError, load_scenario, run_scenario
from .validator import Validator
from .votestore import VoteStore, verify_chain

COMPONENTS = ("registry", "validator", "ballot_box", "committee")
KEY_PURPOSES = (KeyPurpose.HTTPS, KeyPurpose.COMMUNICATION, KeyPurpose.DATABASE)

# serve-role aliases as operators know the services
ROLES = {
    "ers": "registry",
    "vs": "validator",
    "bbs": "ballot_box",
    "committee": "committee",
}
DEFAULT_PORTS = {
    "registry": 7101,
    "validator": 7102,
    "ballot_box": 7103,
    "committee": 7100,
}
# who initiates calls to whom; inbound trust always covers every peer
REQUIRED_PEERS = {
    "registry": ("validator", "ballot_box"),
    "validator": (),
    "ballot_box": ("registry",),
    "committee": ("registry", "validator", "ballot_box"),
}

RECORDS_FORMAT = "quorumvote credential records v1"
ENVELOPES_FORMAT = "quorumvote credential envelopes v1"


class UsageError(Exception):
    """Operator mistake: bad flags, missing files, wrong order of steps."""


# ---------------------------------------------------------------------------
# Election directory
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ElectionDir:
    root: Path

    @property
    def config_path(self) -> Path:
        return self.root / "election.yaml"

    @property
    def keys(self) -> Path:
        return self.root / "keys"

    @property
    def markers(self) -> Path:
        return self.root / "markers"

    @property
    def data(self) -> Path:
        return self.root / "data"

    @property
    def credentials_path(self) -> Path:
        return self.root / "credentials.txt"

    @property
    def records_path(self) -> Path:
        return self.root / "records.json"

    @property
    def register_path(self) -> Path:
        return self.root / "register.txt"

    @property
    def envelopes_path(self) -> Path:
        return self.root / "envelopes.json"

    @property
    def baseline_path(self) -> Path:
        return self.root / "baseline.json"

    def public_path(self, component: str, purpose: KeyPurpose) -> Path:
        return self.keys / f"{component}.{purpose.value}.pub"

    def private_path(self, component: str, purpose: KeyPurpose) -> Path:
        return self.keys / f"{component}.{purpose.value}.key"

    def marker_path(self, step: str) -> Path:
        return self.markers / f"{step}.done"

    def load_config(self) -> ElectionConfig:
        if not self.config_path.exists():
            raise UsageError(f"no election config at {self.config_path}")
        return load_election_config(self.config_path)

    def load_public(self, component: str, purpose: KeyPurpose = KeyPurpose.COMMUNICATION):
        path = self.public_path(component, purpose)
        if not path.exists():
            raise UsageError(f"missing key file {path}; run keygen first")
        return load_public_key(path)


def _election_dir(args) -> ElectionDir:
    return ElectionDir(root=Path(args.dir))


def _write_marker(dirs: ElectionDir, step: str, **summary) -> None:
    dirs.markers.mkdir(parents=True, exist_ok=True)
    record = {"step": step, "completed_at": time.time(), **summary}
    dirs.marker_path(step).write_text(json.dumps(record, sort_keys=True) + "\n")


def _check_step_not_done(dirs: ElectionDir, step: str, force: bool) -> None:
    marker = dirs.marker_path(step)
    if marker.exists() and not force:
        raise UsageError(f"step already completed ({marker}); pass --force to redo it")


# ---------------------------------------------------------------------------
# Passphrases and output
# ---------------------------------------------------------------------------


def _read_passphrases(args, labels: list[str]) -> list[str]:
    """One passphrase per label, from --passphrase-fd or the terminal."""
    fd = getattr(args, "passphrase_fd", None)
    if fd is not None:
        try:
            with os.fdopen(os.dup(fd), "r", encoding="utf-8") as fp:
                lines = fp.read().splitlines()
        except OSError as exc:
            raise UsageError(f"cannot read passphrases from fd {fd}: {exc}") from exc
        if len(lines) < len(labels):
            raise UsageError(
                f"passphrase fd holds {len(lines)} lines, need {len(labels)}: "
                + ", ".join(labels)
            )
        return lines[: len(labels)]
    return [getpass.getpass(f"passphrase for {label}: ") for label in labels]


def _emit(args, payload: dict, lines: Iterable[str]) -> None:
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        for line in lines:
            print(line)


# ---------------------------------------------------------------------------
# Credential record files
# ---------------------------------------------------------------------------


def _records_to_json(records: list[CredentialRecord]) -> str:
    rows = [
        {
            "voter_id": r.voter_id,
            "pw_hash": b64(r.pw_hash.value),
            "sig_ers": b64(r.sig_ers.value),
            "sig_vs": b64(r.sig_vs.value),
        }
        for r in records
    ]
    return json.dumps({"format": RECORDS_FORMAT, "records": rows}, indent=2) + "\n"


def _records_from_json(text: str) -> list[CredentialRecord]:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"not a records file: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("format") != RECORDS_FORMAT:
        raise FormatError("not a records file (bad format marker)")
    out = []
    for row in obj.get("records", []):
        out.append(
            CredentialRecord(
                voter_id=row["voter_id"],
                pw_hash=Digest(unb64(row["pw_hash"])),
                sig_ers=Signature(unb64(row["sig_ers"]), KeyPurpose.COMMUNICATION),
                sig_vs=Signature(unb64(row["sig_vs"]), KeyPurpose.COMMUNICATION),
            )
        )
    return out


def _load_credentials(dirs: ElectionDir) -> list[Credential]:
    if not dirs.credentials_path.exists():
        raise UsageError(
            f"no credentials file at {dirs.credentials_path}; run `credentials generate` first"
        )
    return credentials_from_text(dirs.credentials_path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# keygen
# ---------------------------------------------------------------------------


def _cmd_keygen(args) -> int:
    dirs = _election_dir(args)
    _check_step_not_done(dirs, "keygen", args.force)
    labels = [f"{c} {p.value}" for c in COMPONENTS for p in KEY_PURPOSES]
    passphrases = _read_passphrases(args, labels)
    dirs.keys.mkdir(parents=True, exist_ok=True)

    written = []
    index = 0
    for component in COMPONENTS:
        for purpose in KEY_PURPOSES:
            seed = None
            if args.seed is not None:
                seed = f"{args.seed}:{component}:{purpose.value}".encode("utf-8")
            keypair = generate_keypair(purpose, seed=seed)
            pub_path = dirs.public_path(component, purpose)
            priv_path = dirs.private_path(component, purpose)
            for path in (pub_path, priv_path):
                if path.exists() and not args.force:
                    raise UsageError(f"{path} exists; pass --force to overwrite")
            save_public_key(pub_path, keypair.public_key())
            save_encrypted_private_key(
                priv_path, protect_private_key(keypair, passphrases[index])
            )
            written.extend([str(pub_path), str(priv_path)])
            index += 1

    _write_marker(dirs, "keygen", pairs=len(labels), deterministic=args.seed is not None)
    _emit(
        args,
        {"ok": True, "pairs": len(labels), "files": written},
        [f"generated {len(labels)} key pairs under {dirs.keys}"],
    )
    return 0


# ---------------------------------------------------------------------------
# credentials
# ---------------------------------------------------------------------------


def _cmd_credentials_generate(args) -> int:
    dirs = _election_dir(args)
    _check_step_not_done(dirs, "credentials-generate", args.force)
    if dirs.credentials_path.exists() and not args.force:
        raise UsageError(f"{dirs.credentials_path} exists; pass --force to overwrite")
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    credentials = generate_credentials(args.count, seed=args.seed)
    dirs.root.mkdir(parents=True, exist_ok=True)
    dirs.credentials_path.write_text(credentials_to_text(credentials), encoding="utf-8")
    _write_marker(dirs, "credentials-generate", count=len(credentials))
    _emit(
        args,
        {"ok": True, "count": len(credentials), "path": str(dirs.credentials_path)},
        [f"wrote {len(credentials)} credentials to {dirs.credentials_path}"],
    )
    return 0


def _cmd_credentials_sign(args) -> int:
    dirs = _election_dir(args)
    _check_step_not_done(dirs, "credentials-sign", args.force)
    credentials = _load_credentials(dirs)
    ers_pp, vs_pp = _read_passphrases(
        args, ["registry communication", "validator communication"]
    )
    ers_key = load_keypair(
        dirs.public_path("registry", KeyPurpose.COMMUNICATION),
        dirs.private_path("registry", KeyPurpose.COMMUNICATION),
        ers_pp,
    )
    vs_key = load_keypair(
        dirs.public_path("validator", KeyPurpose.COMMUNICATION),
        dirs.private_path("validator", KeyPurpose.COMMUNICATION),
        vs_pp,
    )
    records = [sign_credential(c, ers_key, vs_key) for c in credentials]
    dirs.records_path.write_text(_records_to_json(records), encoding="utf-8")
    _write_marker(dirs, "credentials-sign", count=len(records))
    _emit(
        args,
        {"ok": True, "count": len(records), "path": str(dirs.records_path)},
        [f"signed {len(records)} credential records into {dirs.records_path}"],
    )
    return 0


def _cmd_credentials_export(args) -> int:
    dirs = _election_dir(args)
    _check_step_not_done(dirs, "credentials-export", args.force)
    credentials = _load_credentials(dirs)
    _, envelopes = export_credentials(credentials)
    rows = [
        {"voter_id": e.voter_id, "covered_secret": e.covered_secret.to_wire()}
        for e in envelopes
    ]
    # the cover key stays with the print shop; only sealed letters are kept
    dirs.envelopes_path.write_text(
        json.dumps({"format": ENVELOPES_FORMAT, "envelopes": rows}, indent=2) + "\n",
        encoding="utf-8",
    )
    _write_marker(dirs, "credentials-export", count=len(rows))
    _emit(
        args,
        {"ok": True, "count": len(rows), "path": str(dirs.envelopes_path)},
        [f"sealed {len(rows)} credential envelopes into {dirs.envelopes_path}"],
    )
    return 0


# ---------------------------------------------------------------------------
# register
# ---------------------------------------------------------------------------


def _cmd_register_build(args) -> int:
    dirs = _election_dir(args)
    _check_step_not_done(dirs, "register-build", args.force)
    if not dirs.records_path.exists():
        raise UsageError(
            f"no records file at {dirs.records_path}; run `credentials sign` first"
        )
    records = _records_from_json(dirs.records_path.read_text(encoding="utf-8"))
    (ers_pp,) = _read_passphrases(args, ["registry communication"])
    ers_key = load_keypair(
        dirs.public_path("registry", KeyPurpose.COMMUNICATION),
        dirs.private_path("registry", KeyPurpose.COMMUNICATION),
        ers_pp,
    )
    register = build_signed_register(records, ers_key)
    dirs.register_path.write_text(register_to_text(register), encoding="utf-8")
    _write_marker(dirs, "register-build", records=len(register.records))
    _emit(
        args,
        {"ok": True, "records": len(register.records), "path": str(dirs.register_path)},
        [f"built register with {len(register.records)} records at {dirs.register_path}"],
    )
    return 0


def _cmd_register_verify(args) -> int:
    dirs = _election_dir(args)
    if not dirs.register_path.exists():
        raise UsageError(f"no register file at {dirs.register_path}")
    register = register_from_text(dirs.register_path.read_text(encoding="utf-8"))
    verification = verify_register(
        register,
        dirs.load_public("registry"),
        dirs.load_public("validator"),
    )
    bad = [
        c.voter_id
        for c in verification.record_checks
        if not (c.ers_signature_ok and c.vs_signature_ok)
    ]
    payload = {
        "ok": verification.ok,
        "register_signature_ok": verification.register_signature_ok,
        "records": len(verification.record_checks),
        "bad_records": bad,
        "malformed": verification.malformed,
    }
    lines = [
        f"register signature: {'ok' if verification.register_signature_ok else 'INVALID'}",
        f"records checked: {len(verification.record_checks)}",
    ]
    if verification.malformed:
        lines.append(f"malformed: {verification.malformed}")
    if bad:
        lines.append("bad records: " + ", ".join(bad))
    lines.append(f"register: {'ok' if verification.ok else 'FAILED'}")
    _emit(args, payload, lines)
    return 0 if verification.ok else 1


# ---------------------------------------------------------------------------
# software baseline
# ---------------------------------------------------------------------------


def _package_artifacts() -> dict[str, Path]:
    """The running service code itself, module by module."""
    package_dir = Path(__file__).resolve().parent
    return {p.name: p for p in sorted(package_dir.glob("*.py"))}


def _cmd_baseline_record(args) -> int:
    dirs = _election_dir(args)
    _check_step_not_done(dirs, "baseline-record", args.force)
    cfg = dirs.load_config()
    (comm_pp,) = _read_passphrases(args, ["committee communication"])
    comm_key = load_keypair(
        dirs.public_path("committee", KeyPurpose.COMMUNICATION),
        dirs.private_path("committee", KeyPurpose.COMMUNICATION),
        comm_pp,
    )
    artifacts = _package_artifacts()
    digests = {name: hash_bytes(path.read_bytes()).hex for name, path in artifacts.items()}
    attestation = make_attestation(
        comm_key,
        action="software_baseline",
        election_id=cfg.election_id,
        digests=digests,
    )
    baseline = {"digests": digests, "attestation": attestation.to_wire()}
    dirs.baseline_path.write_text(json.dumps(baseline, indent=2, sort_keys=True) + "\n")
    _write_marker(dirs, "baseline-record", artifacts=len(digests))
    _emit(
        args,
        {"ok": True, "artifacts": len(digests), "path": str(dirs.baseline_path)},
        [f"recorded digests of {len(digests)} artifacts into {dirs.baseline_path}"],
    )
    return 0


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------


def _parse_bind(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not host:
        raise UsageError(f"--bind wants host:port, got {text!r}")
    try:
        return host, int(port)
    except ValueError as exc:
        raise UsageError(f"--bind port is not a number: {port!r}") from exc


def _parse_peers(pairs: list[str]) -> dict[str, str]:
    peers = {}
    for pair in pairs:
        name, sep, url = pair.partition("=")
        if not sep or not url:
            raise UsageError(f"--peer wants name=url, got {pair!r}")
        if name not in COMPONENTS:
            raise UsageError(f"unknown peer {name!r}; expected one of {', '.join(COMPONENTS)}")
        peers[name] = url
    return peers


def _load_keyset(dirs: ElectionDir, component: str) -> ProtectedKeySet:
    for purpose in (KeyPurpose.COMMUNICATION, KeyPurpose.DATABASE):
        for path in (dirs.public_path(component, purpose), dirs.private_path(component, purpose)):
            if not path.exists():
                raise UsageError(f"missing key file {path}; run keygen first")
    return ProtectedKeySet(
        component=component,
        communication=load_encrypted_private_key(
            dirs.private_path(component, KeyPurpose.COMMUNICATION)
        ),
        database=load_encrypted_private_key(
            dirs.private_path(component, KeyPurpose.DATABASE)
        ),
        communication_public=dirs.load_public(component),
        database_public=dirs.load_public(component, KeyPurpose.DATABASE),
    )


def _build_service_host(
    name: str,
    dirs: ElectionDir,
    cfg: ElectionConfig,
    fabric: HttpFabric,
    clock: WallClock,
    publics: dict,
) -> LockedComponent:
    """A locked host whose factory builds the real component on unlock."""
    dirs.data.mkdir(parents=True, exist_ok=True)
    audit = AuditLog(name, dirs.data / f"audit-{name}.jsonl")

    if name == "registry":
        if not dirs.register_path.exists():
            raise UsageError(f"no register at {dirs.register_path}; run `register build` first")
        register = register_from_text(dirs.register_path.read_text(encoding="utf-8"))

        def factory(comm_kp, db_kp):
            return Registry(
                comm_kp,
                register,
                ValidatorProxy(fabric),
                BallotBoxProxy(fabric),
                clock,
                vs_public=publics["validator"],
                db_keypair=db_kp,
                session_timeout=cfg.session_timeout,
                journal_path=dirs.data / "registry.journal",
                audit=audit,
            )

    elif name == "validator":

        def factory(comm_kp, db_kp):
            return Validator(
                comm_kp,
                publics["registry"],
                clock,
                reservation_timeout=cfg.session_timeout,
                journal_path=dirs.data / "validator.journal",
                audit=audit,
            )

    elif name == "ballot_box":

        def factory(comm_kp, db_kp):
            box = BallotBox(
                comm_kp,
                db_kp,
                cfg.ballot,
                clock,
                committee_public=publics["committee"],
                required_approvals=cfg.threshold,
                store_path=dirs.data / "votes.bin",
                block_size=cfg.block_size,
                token_lifetime=cfg.session_timeout,
                audit=audit,
                gate=FaultGate(),
            )
            box.registry = RegistryProxy(fabric)
            return box

    else:
        raise UsageError(f"not a lockable service: {name}")

    return LockedComponent(_load_keyset(dirs, name), factory)


def _register_outbound_identity(
    fabric: HttpFabric, name: str, public, host: LockedComponent
) -> None:
    # the signer resolves lazily: keys exist only after the unlock ceremony
    if name == "ballot_box":
        signer = lambda: host.component.comm_keypair if host.component else None
    else:
        signer = lambda: host.component.keypair if host.component else None
    fabric.register_identity(name, public, signer)


def _build_committee(
    args, dirs: ElectionDir, cfg: ElectionConfig, fabric: HttpFabric, clock: WallClock
) -> Committee:
    dirs.data.mkdir(parents=True, exist_ok=True)
    committee = Committee(
        [make_officer(o.officer_id, o.credential) for o in cfg.officers],
        cfg.threshold,
        {name: RemoteHost(fabric, name) for name in ("registry", "validator", "ballot_box")},
        clock,
        protected_keys=_load_keyset(dirs, "committee"),
        election_id=cfg.election_id,
        grace_duration=cfg.grace_period,
        low_turnout_threshold=cfg.low_turnout_threshold,
        audit=AuditLog("committee", dirs.data / "audit-committee.jsonl"),
    )
    if dirs.baseline_path.exists():
        committee.artifact_paths = _package_artifacts()
        committee.software_baseline = json.loads(dirs.baseline_path.read_text())
    return committee


def _wait_for_shutdown(server) -> None:
    stop = threading.Event()

    def handler(signum, frame):
        stop.set()

    with contextlib.suppress(ValueError):  # not the main thread
        signal.signal(signal.SIGINT, handler)
        signal.signal(signal.SIGTERM, handler)
    try:
        stop.wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()


def _cmd_serve(args) -> int:
    dirs = _election_dir(args)
    name = ROLES[args.role]
    cfg = dirs.load_config()
    publics = {c: dirs.load_public(c) for c in COMPONENTS}
    clock = WallClock()

    peers = _parse_peers(args.peer or [])
    missing = [p for p in REQUIRED_PEERS[name] if p not in peers]
    if missing:
        raise UsageError(
            f"serve {args.role} needs --peer for: " + ", ".join(missing)
        )
    fabric = HttpFabric({}, clock=clock)
    for peer_name, url in peers.items():
        fabric.add_peer(peer_name, HttpPeer(url, publics[peer_name]))

    bind = _parse_bind(args.bind) if args.bind else ("127.0.0.1", DEFAULT_PORTS[name])

    if name == "committee":
        committee = _build_committee(args, dirs, cfg, fabric, clock)
        if args.check:
            _emit(args, {"ok": True, "role": name}, [f"{name}: configuration ok"])
            return 0
        comm_pp, db_pp = _read_passphrases(
            args, ["committee communication", "committee database"]
        )
        if not committee.enter_own_passphrases(comm_pp, db_pp):
            raise UsageError("committee passphrase rejected")
        fabric.register_identity(
            "committee",
            publics["committee"],
            lambda: committee.comm_keypair if committee.online else None,
        )
        server = CommitteeHttpServer(committee, bind=bind, archive_dir=dirs.data).start()
    else:
        host = _build_service_host(name, dirs, cfg, fabric, clock, publics)
        if args.check:
            _emit(args, {"ok": True, "role": name}, [f"{name}: configuration ok"])
            return 0
        _register_outbound_identity(fabric, name, publics[name], host)
        wire_config = ServiceWireConfig(
            name=name,
            public=publics[name],
            peers={c: pk for c, pk in publics.items() if c != name},
            clock=clock,
        )
        server = serve_http(host, bind=bind, config=wire_config)

    print(f"{name} listening on {server.url}", flush=True)
    _wait_for_shutdown(server)
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    script_path = Path(args.script)
    if not script_path.exists():
        raise UsageError(f"no scenario script at {script_path}")
    script = load_scenario(script_path)
    report = run_scenario(
        script,
        seed=args.seed,
        artifacts_dir=Path(args.artifacts) if args.artifacts else None,
    )

    lines = [
        f"election: {report.election_id}",
        f"final state: {report.final_state}",
    ]
    tally = report.tally or {}
    for contest_id, counts in sorted(tally.get("contests", {}).items()):
        options = " ".join(f"{o}={n}" for o, n in sorted(counts["options"].items()))
        lines.append(f"{contest_id}: {options} invalid={counts['invalid']}")
    if report.oracle:
        lines.append(f"oracle match: {'yes' if report.matches_oracle else 'NO'}")
    if report.expected_tally_ok is not None:
        lines.append(f"expected tally: {'ok' if report.expected_tally_ok else 'MISMATCH'}")
    failed = [name for name, entry in report.invariants.items() if not entry["ok"]]
    lines.append("invariants: " + ("all ok" if not failed else "FAILED " + ", ".join(failed)))
    _emit(args, report.to_wire(), lines)
    return 0 if report.ok else 1


# ---------------------------------------------------------------------------
# offline verification
# ---------------------------------------------------------------------------


def _public_for_check(args, dirs: ElectionDir, component: str):
    if args.public_key:
        return load_public_key(Path(args.public_key))
    return dirs.load_public(component)


def _cmd_verify_archive(args) -> int:
    path = Path(args.archive)
    if not path.exists():
        raise UsageError(f"no archive at {path}")
    dirs = _election_dir(args)
    public = _public_for_check(args, dirs, "committee")
    check = verify_archive(path, public)
    lines = [
        f"signature: {'ok' if check.signature_valid else 'INVALID'}",
        f"members: {len(check.members)}",
    ]
    for member in check.broken_members:
        lines.append(f"broken member: {member}")
    for problem in check.problems:
        lines.append(f"problem: {problem}")
    lines.append(f"archive: {'ok' if check.ok else 'FAILED'}")
    _emit(args, check.to_wire(), lines)
    return 0 if check.ok else 1


def _cmd_verify_chain(args) -> int:
    path = Path(args.store)
    if not path.exists():
        raise UsageError(f"no vote store at {path}")
    dirs = _election_dir(args)
    public = _public_for_check(args, dirs, "ballot_box")
    store = VoteStore(path)
    report = verify_chain(
        store.votes,
        store.seals,
        public,
        block_size=store.block_size,
        require_final_seal=args.require_final_seal,
    )
    bad_votes = [seq for seq, ok in report.vote_checks if not ok]
    bad_blocks = [no for no, ok in report.block_checks if not ok]
    lines = [
        f"votes checked: {len(report.vote_checks)}",
        f"blocks checked: {len(report.block_checks)}",
    ]
    if bad_votes:
        lines.append("bad votes: " + ", ".join(str(s) for s in bad_votes))
    if bad_blocks:
        lines.append("bad blocks: " + ", ".join(str(b) for b in bad_blocks))
    for problem in report.problems:
        lines.append(f"problem: {problem}")
    lines.append(f"chain: {'ok' if report.ok else 'FAILED'}")
    _emit(args, report.to_wire(), lines)
    return 0 if report.ok else 1


# ---------------------------------------------------------------------------
# reset
# ---------------------------------------------------------------------------


def _cmd_reset(args) -> int:
    dirs = _election_dir(args)
    if not args.yes:
        raise UsageError("reset deletes runtime state; pass --yes to confirm")
    removed = []
    if dirs.data.exists():
        for path in sorted(dirs.data.iterdir()):
            if path.is_file():
                path.unlink()
                removed.append(str(path))
    _emit(
        args,
        {"ok": True, "removed": removed},
        [f"removed {len(removed)} runtime files from {dirs.data}"],
    )
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dir", default=".", help="election directory (default: current)")
    common.add_argument("--json", action="store_true", help="structured output")

    secrets_parent = argparse.ArgumentParser(add_help=False)
    secrets_parent.add_argument(
        "--passphrase-fd",
        type=int,
        metavar="FD",
        help="read passphrases from this file descriptor, one per line",
    )

    force_parent = argparse.ArgumentParser(add_help=False)
    force_parent.add_argument(
        "--force", action="store_true", help="redo a step that already completed"
    )

    parser = argparse.ArgumentParser(
        prog="quorumvote",
        description="run and check a remote election",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "keygen",
        parents=[common, secrets_parent, force_parent],
        help="generate every component's key pairs",
        description=(
            "Generates https, communication, and database pairs for the "
            "registry, validator, ballot box, and committee.  Passphrases "
            "are prompted (or read from --passphrase-fd) in that order, "
            "twelve in total."
        ),
    )
    p.add_argument("--seed", help="deterministic key material, for demos and tests")
    p.set_defaults(handler=_cmd_keygen)

    creds = sub.add_parser("credentials", help="voter credential ceremony").add_subparsers(
        dest="subcommand", required=True
    )
    p = creds.add_parser("generate", parents=[common, force_parent], help="mint credentials")
    p.add_argument("--count", type=int, required=True, help="number of voters")
    p.add_argument("--seed", type=int, help="deterministic passwords, for demos and tests")
    p.set_defaults(handler=_cmd_credentials_generate)
    p = creds.add_parser(
        "sign",
        parents=[common, secrets_parent, force_parent],
        help="dual-sign credentials into register records",
    )
    p.set_defaults(handler=_cmd_credentials_sign)
    p = creds.add_parser(
        "export", parents=[common, force_parent], help="seal credential letters"
    )
    p.set_defaults(handler=_cmd_credentials_export)

    reg = sub.add_parser("register", help="the signed voting register").add_subparsers(
        dest="subcommand", required=True
    )
    p = reg.add_parser(
        "build",
        parents=[common, secrets_parent, force_parent],
        help="sign the register over all records",
    )
    p.set_defaults(handler=_cmd_register_build)
    p = reg.add_parser("verify", parents=[common], help="check every signature in the register")
    p.set_defaults(handler=_cmd_register_verify)

    base = sub.add_parser("baseline", help="software baseline").add_subparsers(
        dest="subcommand", required=True
    )
    p = base.add_parser(
        "record",
        parents=[common, secrets_parent, force_parent],
        help="digest and sign the service code",
    )
    p.set_defaults(handler=_cmd_baseline_record)

    p = sub.add_parser(
        "serve",
        parents=[common, secrets_parent],
        help="run one service over HTTP",
        description=(
            "Roles: ers (registry), vs (validator), bbs (ballot box), committee. "
            "Services start locked; the committee opens them during setup."
        ),
    )
    p.add_argument("role", choices=sorted(ROLES))
    p.add_argument("--bind", help="host:port to listen on")
    p.add_argument(
        "--peer",
        action="append",
        metavar="NAME=URL",
        help="base URL of another service (repeatable)",
    )
    p.add_argument(
        "--check", action="store_true", help="validate configuration and exit without serving"
    )
    p.set_defaults(handler=_cmd_serve)

    p = sub.add_parser(
        "simulate", parents=[common], help="run a scripted election in process"
    )
    p.add_argument("script", help="scenario script (YAML)")
    p.add_argument("--seed", type=int, default=0, help="simulation seed")
    p.add_argument("--artifacts", help="keep run artifacts in this directory")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser(
        "verify-archive", parents=[common], help="check a result archive offline"
    )
    p.add_argument("archive", help="archive file")
    p.add_argument("--public-key", help="committee public key file (default: keys dir)")
    p.set_defaults(handler=_cmd_verify_archive)

    p = sub.add_parser(
        "verify-chain", parents=[common], help="check a vote store's hash chain offline"
    )
    p.add_argument("store", help="vote store file")
    p.add_argument("--public-key", help="ballot box public key file (default: keys dir)")
    p.add_argument(
        "--require-final-seal",
        action="store_true",
        help="fail unless the store ends with its closing seal",
    )
    p.set_defaults(handler=_cmd_verify_chain)

    p = sub.add_parser("reset", parents=[common], help="delete runtime state (data directory)")
    p.add_argument("--yes", action="store_true", help="confirm the deletion")
    p.set_defaults(handler=_cmd_reset)

    return parser


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, FormatError, ScenarioError, CeremonyError, CryptoError, CommitteeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ComponentUnavailableError as exc:
        print(f"error: peer unreachable: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
