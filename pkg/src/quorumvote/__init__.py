"""Remote electronic voting services with separation of duty.

Four cooperating services (electoral registry, validator, ballot box,
and committee tool) enforce anonymous token-based vote casting,
tamper-evident chained vote storage, and an S-of-N committee lifecycle.
Runs as an in-process deterministic simulation or as networked services.
"""

__version__ = "0.1.0"
