"""Passphrase-gated activation of the three election services.

Each service holds two private keys (communication and database), both
kept passphrase-encrypted at rest.  A service cannot start until the
committee has supplied both passphrases; only then are the keys in
memory and the component constructed.  Public keys are distributed at
setup time and usable before unlock, so trust anchors never wait on
the ceremony.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from .crypto import (
    EncryptedPrivateKey,
    KeyPair,
    KeyPurpose,
    PublicKey,
    WrongPassphraseError,
    protect_private_key,
)
from .crypto import unlock_private_key as _unlock

REMOTE_PURPOSES = (KeyPurpose.COMMUNICATION, KeyPurpose.DATABASE)


class CeremonyError(Exception):
    """A passphrase slot or unlock request that cannot be honored."""


@dataclass(frozen=True)
class ProtectedKeySet:
    """A component's at-rest key material: encrypted privates plus
    the matching cleartext publics."""

    component: str
    communication: EncryptedPrivateKey
    database: EncryptedPrivateKey
    communication_public: PublicKey
    database_public: PublicKey

    def encrypted_for(self, purpose: KeyPurpose) -> EncryptedPrivateKey:
        if purpose is KeyPurpose.COMMUNICATION:
            return self.communication
        if purpose is KeyPurpose.DATABASE:
            return self.database
        raise CeremonyError(f"no passphrase slot for purpose: {purpose.value}")

    def public_for(self, purpose: KeyPurpose) -> PublicKey:
        if purpose is KeyPurpose.COMMUNICATION:
            return self.communication_public
        return self.database_public


def protect_keyset(
    component: str,
    communication: KeyPair,
    database: KeyPair,
    communication_passphrase: str,
    database_passphrase: str,
) -> ProtectedKeySet:
    """Encrypt a component's two private keys under their passphrases."""
    return ProtectedKeySet(
        component=component,
        communication=protect_private_key(communication, communication_passphrase),
        database=protect_private_key(database, database_passphrase),
        communication_public=communication.public_key(),
        database_public=database.public_key(),
    )


class LockedComponent:
    """Host for a not-yet-started service.

    `factory(communication_keypair, database_keypair)` runs exactly once,
    at the moment the second passphrase lands.  Until then `.component`
    is None and `.ready` is False.
    """

    def __init__(
        self,
        keyset: ProtectedKeySet,
        factory: Callable[[KeyPair, KeyPair], Any],
    ) -> None:
        self.keyset = keyset
        self._factory = factory
        self._unlocked: dict[KeyPurpose, KeyPair] = {}
        self.component: Any = None

    @property
    def name(self) -> str:
        return self.keyset.component

    @property
    def ready(self) -> bool:
        return self.component is not None

    def slot_filled(self, purpose: KeyPurpose) -> bool:
        return purpose in self._unlocked

    def try_unlock(self, purpose: KeyPurpose, passphrase: str) -> bool:
        """Attempt one slot.  A wrong passphrase returns False and leaves
        the slot empty; the caller may retry."""
        if purpose not in REMOTE_PURPOSES:
            raise CeremonyError(f"no passphrase slot for purpose: {purpose.value}")
        if purpose in self._unlocked:
            return True
        epk = self.keyset.encrypted_for(purpose)
        public = self.keyset.public_for(purpose)
        try:
            keypair = _unlock(epk, passphrase, public.value)
        except WrongPassphraseError:
            return False
        self._unlocked[purpose] = keypair
        if all(p in self._unlocked for p in REMOTE_PURPOSES) and self.component is None:
            self.component = self._factory(
                self._unlocked[KeyPurpose.COMMUNICATION],
                self._unlocked[KeyPurpose.DATABASE],
            )
        return True

    def relock(self) -> None:
        """Drop the live component and its keys; the next election cycle
        runs the ceremony again from scratch."""
        self._unlocked.clear()
        self.component = None


@dataclass
class ReadyHost:
    """Host wrapper for a service that is already constructed and holds
    its keys in memory; used where no unlock ceremony is wanted."""

    component: Any
    accepted_passphrases: dict[KeyPurpose, str] = field(default_factory=dict)

    @property
    def ready(self) -> bool:
        return self.component is not None

    def slot_filled(self, purpose: KeyPurpose) -> bool:
        return self.component is not None

    def try_unlock(self, purpose: KeyPurpose, passphrase: str) -> bool:
        if self.accepted_passphrases and self.accepted_passphrases.get(purpose) != passphrase:
            return False
        return True

    def relock(self) -> None:
        pass
