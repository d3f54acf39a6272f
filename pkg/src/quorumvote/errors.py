"""Errors shared across components and transports."""


class ComponentUnavailableError(Exception):
    """The target component is offline, crashed, or unreachable."""


class ComponentLockedError(Exception):
    """Operation requested before the component's keys were unlocked."""


class IllegalStateError(Exception):
    """Operation not legal in the current lifecycle state."""
