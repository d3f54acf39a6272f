"""Fault injection points for crash-atomicity testing.

Components call gate.step(operation, step_name) at each internal step
boundary; an armed fault fires exactly once when its boundary is
reached.  A crash is simulated by raising CrashInjected, which the
harness treats as the process dying on the spot: volatile state is
discarded and the component is rebuilt from its durable store.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class CrashInjected(Exception):
    """Simulated process death at a step boundary."""

    def __init__(self, operation: str, step: str) -> None:
        super().__init__(f"crash injected in {operation} before step {step!r}")
        self.operation = operation
        self.step = step


@dataclass
class FaultSpec:
    operation: str
    step: str
    fault: str = "crash"


@dataclass
class FaultGate:
    _armed: list[FaultSpec] = field(default_factory=list)
    fired: list[tuple[str, str, str]] = field(default_factory=list)
    visited: list[tuple[str, str]] = field(default_factory=list)

    def arm(self, operation: str, step: str, fault: str = "crash") -> None:
        self._armed.append(FaultSpec(operation=operation, step=step, fault=fault))

    def step(self, operation: str, step: str) -> None:
        """Called by a component immediately before executing `step`."""
        self.visited.append((operation, step))
        for spec in list(self._armed):
            if spec.operation == operation and spec.step == step:
                self._armed.remove(spec)
                self.fired.append((operation, step, spec.fault))
                if spec.fault == "crash":
                    raise CrashInjected(operation, step)

    def clear(self) -> None:
        self._armed.clear()


# A shared no-op gate for components running without fault injection.
NULL_GATE = FaultGate()
