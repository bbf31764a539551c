"""Desk-scale privacy-preserving smart-camera protocol suite.

An epoch-keyed binary key tree drives rotation, fine-grained delegation,
and cryptographic deletion; frames are end-to-end encrypted and stream-
authenticated; pairing is rooted in a human-verified visual channel; a
passphrase-locked escrow restores access; the blob store is untrusted.
"""

from .errors import (
    AuthenticityFailure,
    BeforeOrigin,
    CactusError,
    ChainBroken,
    ChannelClosed,
    Conflict,
    DecryptionFailure,
    EscrowLocked,
    IntegrityFailure,
    KeyUnavailable,
    LevelOverflow,
    MalformedMessage,
    OrderingViolation,
    PairingAborted,
    Rejected,
    ReplayRejected,
    StorageUnreachable,
    TreeLifespanExceeded,
)
from .keytree import (
    EpochRange,
    KeyTree,
    NodeId,
    NodeKey,
    TreeParams,
    camera_frontier,
    derive_child,
    epoch_of,
    key_for_epoch,
    minimal_cover,
    puncture,
    tree_stats,
)
from .framecrypto import (
    BlockManifest,
    CameraIdentity,
    FrameRecord,
    OtsFrame,
    PlainFrame,
    encrypt_block,
    ots_encrypt_stream,
    ots_verify_stream,
    verify_decrypt_block,
)
from .identity import IdentityBundle, PublicBundle
from .escrow import EscrowMaterial, Passphrase, build_escrow, open_escrow
from .pairing import (
    PairingSession,
    delegation_pairing,
    init_pairing,
    knowledge_proof,
)
from .devices import CameraDevice, OwnerDevice
from .admin import AdminRequest, delete_videos, factory_reset, recover, update_escrow
from .storage import BlobKey, DirectoryBlobStore, MemoryBlobStore, StorageClient

__version__ = "0.1.0"
