"""Signed archive container: round trips, tamper detection, naming the
broken member."""

import io

import pytest

from quorumvote.archive import (
    ARCHIVE_MAGIC,
    MANIFEST_MEMBER,
    SIGNATURE_MEMBER,
    read_archive,
    verify_archive,
    write_archive,
)
from quorumvote.crypto import KeyPurpose, generate_keypair
from quorumvote.encoding import FormatError, lp_write


@pytest.fixture
def keypair():
    return generate_keypair(KeyPurpose.COMMUNICATION, seed=b"ar" * 16)


@pytest.fixture
def members():
    return {
        "tally/result.json": b'{"total":3}',
        "audit/committee.jsonl": b'{"category":"poll_start"}\n',
        "database/image.bin": bytes(range(256)),
    }


def test_round_trip(tmp_path, keypair, members):
    path = tmp_path / "election.qva"
    manifest = write_archive(path, members, keypair)
    assert set(manifest["members"]) == set(members)
    got, signature, region = read_archive(path)
    for name, content in members.items():
        assert got[name] == content
    assert MANIFEST_MEMBER in got
    assert len(signature) > 0
    assert region.startswith(ARCHIVE_MAGIC)


def test_verify_ok(tmp_path, keypair, members):
    path = tmp_path / "election.qva"
    write_archive(path, members, keypair)
    check = verify_archive(path, keypair.public_key())
    assert check.ok
    assert check.signature_valid
    assert check.broken_members == ()
    assert set(members) <= set(check.members)


def test_wrong_key_fails_signature(tmp_path, keypair, members):
    path = tmp_path / "election.qva"
    write_archive(path, members, keypair)
    other = generate_keypair(KeyPurpose.COMMUNICATION, seed=b"zz" * 16)
    check = verify_archive(path, other.public_key())
    assert not check.ok
    assert not check.signature_valid


def test_mutated_member_is_named(tmp_path, keypair, members):
    path = tmp_path / "election.qva"
    write_archive(path, members, keypair)
    raw = path.read_bytes()
    tampered = raw.replace(b'{"total":3}', b'{"total":9}')
    assert tampered != raw
    path.write_bytes(tampered)
    check = verify_archive(path, keypair.public_key())
    assert not check.ok
    assert not check.signature_valid
    assert "tally/result.json" in check.broken_members
    # the untouched members are not blamed
    assert "database/image.bin" not in check.broken_members


def test_member_appended_after_signing_is_flagged(tmp_path, keypair, members):
    path = tmp_path / "election.qva"
    write_archive(path, members, keypair)
    parsed, signature, region = read_archive(path)
    forged = io.BytesIO()
    forged.write(region)
    lp_write(forged, b"extra/sneaky.txt")
    lp_write(forged, b"inserted later")
    lp_write(forged, SIGNATURE_MEMBER.encode())
    lp_write(forged, signature)
    path.write_bytes(forged.getvalue())
    check = verify_archive(path, keypair.public_key())
    assert not check.ok
    assert "extra/sneaky.txt" in check.broken_members


def test_missing_signature_record(tmp_path, keypair, members):
    path = tmp_path / "election.qva"
    write_archive(path, members, keypair)
    _, _, region = read_archive(path)
    path.write_bytes(region)  # drop the trailing signature record
    with pytest.raises(FormatError):
        read_archive(path)
    check = verify_archive(path, keypair.public_key())
    assert not check.ok
    assert any("signature" in p for p in check.problems)


def test_not_an_archive(tmp_path, keypair):
    path = tmp_path / "noise.bin"
    path.write_bytes(b"definitely not an archive")
    check = verify_archive(path, keypair.public_key())
    assert not check.ok
    assert any("magic" in p for p in check.problems)


def test_reserved_member_names_rejected(tmp_path, keypair):
    with pytest.raises(FormatError):
        write_archive(tmp_path / "a.qva", {SIGNATURE_MEMBER: b"x"}, keypair)
    with pytest.raises(FormatError):
        write_archive(tmp_path / "b.qva", {MANIFEST_MEMBER: b"x"}, keypair)


def test_empty_archive_still_verifies(tmp_path, keypair):
    path = tmp_path / "empty.qva"
    write_archive(path, {}, keypair)
    check = verify_archive(path, keypair.public_key())
    assert check.ok
    assert check.members == (MANIFEST_MEMBER,)


def test_check_wire_shape(tmp_path, keypair, members):
    path = tmp_path / "election.qva"
    write_archive(path, members, keypair)
    wire = verify_archive(path, keypair.public_key()).to_wire()
    assert wire["ok"] is True
    assert isinstance(wire["members"], list)
    assert wire["broken_members"] == []
