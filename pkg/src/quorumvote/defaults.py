"""Shared timing and sizing defaults.

The registry session timeout and the validator reservation timeout must
agree, or a voter whose session is still alive could lose the
reservation backing it (or the reverse).  Keeping both as one constant
makes the coupling explicit.
"""

SESSION_TIMEOUT_SECONDS = 900.0

# Between taking the validator offline (no new logins) and taking the
# registry offline (open sessions cancelled).
GRACE_PERIOD_SECONDS = 600.0

# Votes per chained block in the ballot box store.
BLOCK_SIZE = 30

# Committee self-test cadence while the poll is open.
SELFTEST_INTERVAL_SECONDS = 3600.0

# A message nonce is refused as a replay while it is still remembered.
# Memory is bounded two ways: entries older than the wall window are
# evicted, and the table never holds more than the entry cap.
NONCE_WINDOW_SECONDS = 300.0
NONCE_WINDOW_ENTRIES = 1000
