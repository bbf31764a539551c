"""Exception hierarchy shared across the suite.

Authorization misses (KeyUnavailable) are deliberately distinct from tamper
detection (AuthenticityFailure / IntegrityFailure / DecryptionFailure): the
former signals lack of a decryption grant, the latter an attack or corruption.
"""

from __future__ import annotations


class CactusError(Exception):
    """Base class for every error raised by this package."""


# --- key tree ---------------------------------------------------------------

class LevelOverflow(CactusError):
    """Attempted to derive a child of a leaf node."""


class BeforeOrigin(CactusError):
    """Timestamp predates the key tree origin t0."""


class TreeLifespanExceeded(CactusError):
    """Timestamp maps to an epoch beyond the last leaf of the tree."""


class KeyUnavailable(CactusError):
    """No retained ancestor can derive the requested epoch key.

    Carries the first epoch that could not be served.
    """

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"no key material available for epoch {epoch}")


# --- frame crypto -----------------------------------------------------------

class OrderingViolation(CactusError):
    """Frame timestamps are not strictly increasing."""


class AuthenticityFailure(CactusError):
    """Block or frame signature did not verify."""


class IntegrityFailure(CactusError):
    """A recomputed frame MAC disagrees with the stored value."""

    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"frame {index}: MAC mismatch")


class DecryptionFailure(CactusError):
    """AEAD tag verification failed for a frame."""

    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"frame {index}: AEAD decryption failed")


class ChainBroken(CactusError):
    """A one-time-signature chain link failed (gap or severed chain)."""

    def __init__(self, index: int, message: str | None = None):
        self.index = index
        super().__init__(message or f"frame {index}: signature chain broken")


class MalformedMessage(CactusError):
    """Wire bytes do not parse as the expected structure."""


# --- pairing ----------------------------------------------------------------

class PairingAborted(CactusError):
    """A pairing session aborted at a specific protocol step.

    All session secrets are wiped before this is raised.
    """

    def __init__(self, step: int, reason: str = ""):
        self.step = step
        self.reason = reason
        super().__init__(f"pairing aborted at step {step}" + (f": {reason}" if reason else ""))


class ChannelClosed(CactusError):
    """The insecure channel was closed by the peer or a timeout expired."""


# --- escrow / admin ---------------------------------------------------------

class EscrowLocked(CactusError):
    """Escrow blob delivered but the passphrase did not open it."""


class Rejected(CactusError):
    """Admin request signature did not verify against the owner key."""


class ReplayRejected(CactusError):
    """Admin request timestamp is stale, repeated, or outside the freshness window."""


# --- storage ----------------------------------------------------------------

class Conflict(CactusError):
    """A blob already exists under this key (store is append-only)."""


class StorageUnreachable(CactusError):
    """The blob store did not answer; callers may buffer and retry."""
