"""Signed attestations the committee hands to other components.

The ballot box never trusts a bare claim that the election is stopped
or that enough officers approved a destructive action; it verifies a
statement signed with the committee's communication key.
"""

from __future__ import annotations

from dataclasses import dataclass

from .crypto import KeyPair, PublicKey, Signature, sign, verify
from .encoding import canonical_json_bytes


@dataclass(frozen=True)
class SignedAttestation:
    payload: dict
    signature: Signature

    def to_wire(self) -> dict:
        from .encoding import b64

        return {"payload": self.payload, "signature": b64(self.signature.value)}

    @classmethod
    def from_wire(cls, obj: dict) -> "SignedAttestation":
        from .crypto import KeyPurpose
        from .encoding import unb64

        return cls(
            payload=dict(obj["payload"]),
            signature=Signature(unb64(obj["signature"]), KeyPurpose.COMMUNICATION),
        )


def make_attestation(keypair: KeyPair, **payload) -> SignedAttestation:
    signature = sign(keypair, canonical_json_bytes(payload))
    return SignedAttestation(payload=dict(payload), signature=signature)


def attestation_valid(attestation: SignedAttestation, public: PublicKey) -> bool:
    return verify(public, canonical_json_bytes(attestation.payload), attestation.signature)
