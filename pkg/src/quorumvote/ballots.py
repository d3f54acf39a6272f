"""Ballot definitions, vote content, and its canonical byte form.

The canonical form backs three contracts at once: the byte-exact echo a
voter confirms against, the plaintext that gets sealed into the ballot
box, and the message bytes under the vote signature.  Contests sort by
contest id, selections sort by option id, and an intentionally invalid
contest is the reserved marker value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .encoding import canonical_json_bytes

INVALID_MARKER = "__invalid__"


class BallotError(Exception):
    pass


class MalformedVoteError(BallotError):
    """Submitted vote content does not fit the ballot."""


@dataclass(frozen=True)
class Contest:
    contest_id: str
    options: tuple[str, ...]
    min_selections: int = 1
    max_selections: int = 1

    def __post_init__(self) -> None:
        if not self.options:
            raise BallotError(f"contest {self.contest_id!r} has no options")
        if INVALID_MARKER in self.options:
            raise BallotError(f"option id {INVALID_MARKER!r} is reserved")
        if len(set(self.options)) != len(self.options):
            raise BallotError(f"contest {self.contest_id!r} has duplicate options")
        if not (0 <= self.min_selections <= self.max_selections <= len(self.options)):
            raise BallotError(f"contest {self.contest_id!r} has inconsistent selection rules")


@dataclass(frozen=True)
class Ballot:
    ballot_id: str
    contests: tuple[Contest, ...]

    # The explicit invalid choice always exists, in every contest.
    allows_explicit_invalid: bool = field(default=True, init=False)

    def __post_init__(self) -> None:
        if not self.contests:
            raise BallotError("ballot has no contests")
        ids = [c.contest_id for c in self.contests]
        if len(set(ids)) != len(ids):
            raise BallotError("duplicate contest ids")

    def contest(self, contest_id: str) -> Contest:
        for c in self.contests:
            if c.contest_id == contest_id:
                return c
        raise BallotError(f"no such contest: {contest_id!r}")

    def to_wire(self) -> dict:
        return {
            "ballot_id": self.ballot_id,
            "contests": [
                {
                    "contest_id": c.contest_id,
                    "options": list(c.options),
                    "min_selections": c.min_selections,
                    "max_selections": c.max_selections,
                }
                for c in self.contests
            ],
            "allows_explicit_invalid": True,
            "invalid_marker": INVALID_MARKER,
        }

    @classmethod
    def from_wire(cls, obj: dict) -> "Ballot":
        return cls(
            ballot_id=str(obj["ballot_id"]),
            contests=tuple(
                Contest(
                    contest_id=str(c["contest_id"]),
                    options=tuple(str(o) for o in c["options"]),
                    min_selections=int(c["min_selections"]),
                    max_selections=int(c["max_selections"]),
                )
                for c in obj["contests"]
            ),
        )


@dataclass(frozen=True)
class VoteContent:
    """Per contest: either a selection set or the explicit invalid marker.

    `choices` maps contest id to a sorted tuple of option ids, or to
    INVALID_MARKER for an intentionally invalid contest.
    """

    choices: tuple[tuple[str, tuple[str, ...] | str], ...]

    @classmethod
    def from_dict(cls, mapping: dict) -> "VoteContent":
        items = []
        for contest_id in sorted(mapping):
            value = mapping[contest_id]
            if value == INVALID_MARKER:
                items.append((contest_id, INVALID_MARKER))
            elif isinstance(value, (list, tuple, set)):
                items.append((contest_id, tuple(sorted(str(v) for v in value))))
            else:
                raise MalformedVoteError(
                    f"contest {contest_id!r}: expected a selection list or the invalid marker"
                )
        return cls(choices=tuple(items))

    def to_dict(self) -> dict:
        return {
            cid: (value if value == INVALID_MARKER else list(value)) for cid, value in self.choices
        }

    def is_invalid(self, contest_id: str) -> bool:
        return dict(self.choices).get(contest_id) == INVALID_MARKER


def canonical_vote_bytes(vote: VoteContent) -> bytes:
    return canonical_json_bytes(vote.to_dict())


def vote_from_canonical(data: bytes) -> VoteContent:
    import json

    return VoteContent.from_dict(json.loads(data.decode("utf-8")))


def validate_vote(ballot: Ballot, vote: VoteContent) -> None:
    """Raise MalformedVoteError unless the vote fits the ballot: every
    contest covered exactly once, selections within rules or the marker."""
    seen = dict(vote.choices)
    expected = {c.contest_id for c in ballot.contests}
    if set(seen) != expected:
        missing = sorted(expected - set(seen))
        extra = sorted(set(seen) - expected)
        raise MalformedVoteError(f"contest coverage mismatch: missing={missing} extra={extra}")
    for contest in ballot.contests:
        value = seen[contest.contest_id]
        if value == INVALID_MARKER:
            continue
        assert isinstance(value, tuple)
        if len(set(value)) != len(value):
            raise MalformedVoteError(f"contest {contest.contest_id!r}: duplicate selections")
        unknown = sorted(set(value) - set(contest.options))
        if unknown:
            raise MalformedVoteError(f"contest {contest.contest_id!r}: unknown options {unknown}")
        if not (contest.min_selections <= len(value) <= contest.max_selections):
            raise MalformedVoteError(
                f"contest {contest.contest_id!r}: {len(value)} selections outside "
                f"[{contest.min_selections}, {contest.max_selections}]"
            )


def count_votes(ballot: Ballot, votes: list[VoteContent]) -> dict:
    """Plain per-contest counting: option counts plus an invalid count."""
    result: dict = {}
    for contest in ballot.contests:
        result[contest.contest_id] = {
            "options": {option: 0 for option in contest.options},
            "invalid": 0,
        }
    for vote in votes:
        mapping = dict(vote.choices)
        for contest in ballot.contests:
            value = mapping[contest.contest_id]
            if value == INVALID_MARKER:
                result[contest.contest_id]["invalid"] += 1
            else:
                for option in value:
                    result[contest.contest_id]["options"][option] += 1
    return result
