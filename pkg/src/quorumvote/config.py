"""Election configuration files.

One YAML document describes everything the four services must agree on
before an election can start: the ballot, the officer board and its
approval threshold, and the timing and sizing knobs.  The CLI, the
scenario runner, and the HTTP services all load the same format.

Validation is all-or-nothing and reports every problem it can find in
one pass, so an operator fixes the file once instead of replaying a
chain of single complaints.  Nothing else in the package accepts a
config that did not come out of this module.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .ballots import Ballot, BallotError, Contest
from .committee import DEFAULT_LOW_TURNOUT_THRESHOLD
from .defaults import BLOCK_SIZE, GRACE_PERIOD_SECONDS, SESSION_TIMEOUT_SECONDS


class ConfigError(Exception):
    """Raised when a config file is unusable; collects every problem."""

    def __init__(self, problems: list[str] | str) -> None:
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class OfficerSpec:
    """One committee member as named in the config file."""

    officer_id: str
    credential: str


@dataclass(frozen=True)
class ElectionConfig:
    election_id: str
    ballot: Ballot
    threshold: int
    officers: tuple[OfficerSpec, ...]
    block_size: int = BLOCK_SIZE
    grace_period: float = GRACE_PERIOD_SECONDS
    low_turnout_threshold: int = DEFAULT_LOW_TURNOUT_THRESHOLD
    session_timeout: float = SESSION_TIMEOUT_SECONDS

    def to_wire(self) -> dict:
        return {
            "election_id": self.election_id,
            "ballot": self.ballot.to_wire(),
            "threshold": self.threshold,
            "officers": [
                {"id": o.officer_id, "credential": o.credential}
                for o in self.officers
            ],
            "block_size": self.block_size,
            "grace_period": self.grace_period,
            "low_turnout_threshold": self.low_turnout_threshold,
            "session_timeout": self.session_timeout,
        }


def _want(obj: dict, key: str, kind: type | tuple, problems: list[str]) -> Any:
    """Fetch obj[key] if present and of the right type, else record why."""
    if key not in obj:
        problems.append(f"missing field: {key}")
        return None
    value = obj[key]
    # bool is an int subclass; a bare `true` is never an acceptable number
    if isinstance(value, bool) and kind is not bool:
        problems.append(f"{key}: expected {_kind_name(kind)}, got bool")
        return None
    if not isinstance(value, kind):
        problems.append(f"{key}: expected {_kind_name(kind)}, got {type(value).__name__}")
        return None
    return value


def _kind_name(kind: type | tuple) -> str:
    if isinstance(kind, tuple):
        return " or ".join(k.__name__ for k in kind)
    return kind.__name__


def _parse_contest(obj: Any, index: int, problems: list[str]) -> Contest | None:
    where = f"ballot.contests[{index}]"
    if not isinstance(obj, dict):
        problems.append(f"{where}: expected a mapping")
        return None
    local: list[str] = []
    contest_id = _want(obj, "contest_id", str, local)
    options = _want(obj, "options", list, local)
    min_sel = _want(obj, "min_selections", int, local)
    max_sel = _want(obj, "max_selections", int, local)
    if options is not None and not all(isinstance(o, str) for o in options):
        local.append("options must all be strings")
    if local:
        problems.extend(f"{where}: {p}" for p in local)
        return None
    try:
        return Contest(
            contest_id=contest_id,
            options=tuple(options),
            min_selections=min_sel,
            max_selections=max_sel,
        )
    except BallotError as exc:
        problems.append(f"{where}: {exc}")
        return None


def _parse_ballot(obj: Any, problems: list[str]) -> Ballot | None:
    if not isinstance(obj, dict):
        problems.append("ballot: expected a mapping")
        return None
    local: list[str] = []
    ballot_id = _want(obj, "ballot_id", str, local)
    raw_contests = _want(obj, "contests", list, local)
    if local:
        problems.extend(f"ballot: {p}" for p in local)
        return None
    contests = [
        _parse_contest(raw, i, problems) for i, raw in enumerate(raw_contests)
    ]
    if any(c is None for c in contests):
        return None
    try:
        return Ballot(ballot_id=ballot_id, contests=tuple(contests))
    except BallotError as exc:
        problems.append(f"ballot: {exc}")
        return None


def _parse_officers(obj: Any, problems: list[str]) -> tuple[OfficerSpec, ...]:
    if not isinstance(obj, list):
        problems.append("officers: expected a list")
        return ()
    specs: list[OfficerSpec] = []
    for i, raw in enumerate(obj):
        where = f"officers[{i}]"
        if not isinstance(raw, dict):
            problems.append(f"{where}: expected a mapping")
            continue
        local: list[str] = []
        officer_id = _want(raw, "id", str, local)
        credential = _want(raw, "credential", str, local)
        if officer_id is not None and not officer_id:
            local.append("id must not be empty")
        if credential is not None and not credential:
            local.append("credential must not be empty")
        if local:
            problems.extend(f"{where}: {p}" for p in local)
            continue
        specs.append(OfficerSpec(officer_id=officer_id, credential=credential))
    ids = [s.officer_id for s in specs]
    if len(set(ids)) != len(ids):
        problems.append("officers: ids must be unique")
    return tuple(specs)


def parse_election_config(obj: Any) -> ElectionConfig:
    """Validate a decoded YAML document; raises ConfigError listing every
    problem found, or returns the config."""
    if not isinstance(obj, dict):
        raise ConfigError("top level must be a mapping")
    problems: list[str] = []

    election_id = _want(obj, "election_id", str, problems)
    if election_id is not None and not election_id.strip():
        problems.append("election_id must not be empty")

    ballot = _parse_ballot(obj.get("ballot"), problems) if "ballot" in obj else None
    if "ballot" not in obj:
        problems.append("missing field: ballot")

    threshold = _want(obj, "threshold", int, problems)
    if threshold is not None and threshold < 2:
        problems.append("threshold: separation of duty requires at least 2")

    officers = ()
    if "officers" in obj:
        officers = _parse_officers(obj["officers"], problems)
    else:
        problems.append("missing field: officers")
    if threshold is not None and officers and len(officers) < threshold:
        problems.append(
            f"officers: {len(officers)} named but the threshold is {threshold}"
        )

    block_size = obj.get("block_size", BLOCK_SIZE)
    if not isinstance(block_size, int) or isinstance(block_size, bool) or block_size < 1:
        problems.append("block_size: expected an integer >= 1")

    grace_period = obj.get("grace_period", GRACE_PERIOD_SECONDS)
    if not isinstance(grace_period, (int, float)) or isinstance(grace_period, bool) or grace_period < 0:
        problems.append("grace_period: expected a number >= 0")

    low_turnout = obj.get("low_turnout_threshold", DEFAULT_LOW_TURNOUT_THRESHOLD)
    if not isinstance(low_turnout, int) or isinstance(low_turnout, bool) or low_turnout < 0:
        problems.append("low_turnout_threshold: expected an integer >= 0")

    session_timeout = obj.get("session_timeout", SESSION_TIMEOUT_SECONDS)
    if not isinstance(session_timeout, (int, float)) or isinstance(session_timeout, bool) or session_timeout <= 0:
        problems.append("session_timeout: expected a number > 0")

    known = {
        "election_id", "ballot", "threshold", "officers",
        "block_size", "grace_period", "low_turnout_threshold", "session_timeout",
    }
    for key in obj:
        if key not in known:
            problems.append(f"unknown field: {key}")

    if problems:
        raise ConfigError(problems)
    return ElectionConfig(
        election_id=election_id,
        ballot=ballot,
        threshold=threshold,
        officers=officers,
        block_size=block_size,
        grace_period=float(grace_period),
        low_turnout_threshold=low_turnout,
        session_timeout=float(session_timeout),
    )


def loads_election_config(text: str) -> ElectionConfig:
    try:
        obj = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"not valid YAML: {exc}") from exc
    return parse_election_config(obj)


def load_election_config(path: Path | str) -> ElectionConfig:
    return loads_election_config(Path(path).read_text(encoding="utf-8"))
