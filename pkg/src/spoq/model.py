"""Domain entries, canonical CBOR encoding and address derivation.

Ledger addresses are 35 bytes (3-byte namespace + SHA-256), storage
addresses 32 bytes (2-byte backend descriptor + 30-byte truncated SHA-256)
and user addresses 33-byte compressed public keys.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
from dataclasses import dataclass, field

import cbor2

from . import crypto
from .errors import DecodeError, EmptySeed, InvalidEntry, UnknownBackend

NAMESPACE = hashlib.sha256(b"spoqchain").digest()[:3]
LEDGER_ADDRESS_LEN = 35
STORAGE_ADDRESS_LEN = 32
USER_ADDRESS_LEN = 33
HASH_LEN = 32
ENTRY_NONCE_LEN = 32

CONTENT_ADDRESSED = b"\x00\x01"
HTTP_SERVER = b"\x00\x02"
BACKENDS = {CONTENT_ADDRESSED: "content-addressed", HTTP_SERVER: "http-server"}

BARCODE = b"BRCD"
ZK_PUF = b"ZPUF"
FINGERPRINT_TYPES = {BARCODE: "barcode", ZK_PUF: "zk-puf"}


class AssetKind(str, enum.Enum):
    PRODUCT = "product"
    BATCH = "batch"

    @property
    def code(self):
        return _KIND_CODES[self]


_KIND_CODES = {AssetKind.PRODUCT: 0, AssetKind.BATCH: 1}
_KINDS_BY_CODE = {v: k for k, v in _KIND_CODES.items()}


class AddressKind(str, enum.Enum):
    ASSET = "asset"
    USER = "user"


class Role(str, enum.Enum):
    PRODUCER = "producer"
    INTERMEDIARY = "intermediary"


def encode(obj):
    """Deterministic CBOR: definite lengths, sorted map keys."""
    return cbor2.dumps(obj, canonical=True)


def decode(data):
    try:
        return cbor2.loads(data)
    except Exception as exc:  # cbor2 raises several unrelated types
        raise DecodeError(f"undecodable CBOR: {exc}") from None


def entry_hash(entry_bytes):
    return hashlib.sha256(entry_bytes).digest()


# -- address checks ---------------------------------------------------------

def check_user_address(addr):
    if len(addr) != USER_ADDRESS_LEN or not crypto.is_valid_point(addr):
        raise InvalidEntry("user address must be a 33-byte compressed point")
    return bytes(addr)


def check_ledger_address(addr):
    if len(addr) != LEDGER_ADDRESS_LEN or bytes(addr[:3]) != NAMESPACE:
        raise InvalidEntry("ledger address must be 35 bytes under the platform namespace")
    return bytes(addr)


def check_storage_address(addr):
    if len(addr) != STORAGE_ADDRESS_LEN:
        raise InvalidEntry("storage address must be 32 bytes")
    if bytes(addr[:2]) not in BACKENDS:
        raise UnknownBackend(f"unregistered backend descriptor {bytes(addr[:2]).hex()}")
    return bytes(addr)


def derive_ledger_address(kind, seed):
    if not seed:
        raise EmptySeed("address seed must be non-empty")
    kind = AddressKind(kind)
    return NAMESPACE + hashlib.sha256(kind.value.encode() + b"\x00" + seed).digest()


def derive_storage_address(system, entry_bytes):
    system = bytes(system)
    if system not in BACKENDS:
        raise UnknownBackend(f"unregistered backend descriptor {system.hex()}")
    return system + hashlib.sha256(entry_bytes).digest()[:STORAGE_ADDRESS_LEN - 2]


# -- entries ----------------------------------------------------------------

@dataclass(frozen=True)
class StorageRef:
    address: bytes
    hash: bytes

    def __post_init__(self):
        check_storage_address(self.address)
        if len(self.hash) != HASH_LEN:
            raise InvalidEntry("storage hash must be 32 bytes")

    def to_obj(self):
        return {"address": self.address, "hash": self.hash}

    @classmethod
    def from_obj(cls, obj):
        return cls(bytes(obj["address"]), bytes(obj["hash"]))

    @classmethod
    def for_bytes(cls, system, entry_bytes):
        return cls(derive_storage_address(system, entry_bytes), entry_hash(entry_bytes))


@dataclass(frozen=True)
class AssetEntry:
    kind: AssetKind
    storage: StorageRef
    owners: tuple
    actions: tuple = ()
    parent: bytes | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", AssetKind(self.kind))
        object.__setattr__(self, "owners", tuple(self.owners))
        object.__setattr__(self, "actions", tuple(self.actions))
        if not self.owners:
            raise InvalidEntry("asset entry needs at least one owner")
        if self.parent is not None:
            check_ledger_address(self.parent)

    @property
    def current_owner(self):
        return self.owners[-1]

    def to_obj(self):
        return {
            "kind": self.kind.code,
            "storage": self.storage.to_obj(),
            "owners": list(self.owners),
            "actions": [a.to_obj() for a in self.actions],
            "parent": self.parent,
        }

    @classmethod
    def from_obj(cls, obj):
        parent = obj["parent"]
        return cls(
            kind=_KINDS_BY_CODE[obj["kind"]],
            storage=StorageRef.from_obj(obj["storage"]),
            owners=tuple(bytes(o) for o in obj["owners"]),
            actions=tuple(StorageRef.from_obj(a) for a in obj["actions"]),
            parent=None if parent is None else bytes(parent),
        )


@dataclass(frozen=True)
class UserEntry:
    name: str
    roles: frozenset
    public_key: bytes
    revoked: bool = False

    def __post_init__(self):
        object.__setattr__(self, "roles", frozenset(Role(r) for r in self.roles))
        if not self.roles:
            raise InvalidEntry("registered users need at least one role")
        check_user_address(self.public_key)

    def has_role(self, role):
        return not self.revoked and Role(role) in self.roles

    def to_obj(self):
        return {
            "name": self.name,
            "roles": sorted(r.value for r in self.roles),
            "public_key": self.public_key,
            "revoked": self.revoked,
        }

    @classmethod
    def from_obj(cls, obj):
        return cls(obj["name"], frozenset(obj["roles"]), bytes(obj["public_key"]),
                   bool(obj["revoked"]))


@dataclass(frozen=True)
class Fingerprint:
    header: bytes
    payload: bytes

    def __post_init__(self):
        if bytes(self.header) not in FINGERPRINT_TYPES:
            raise InvalidEntry(f"unregistered fingerprint header {bytes(self.header)!r}")

    def to_obj(self):
        return {"header": self.header, "payload": self.payload}

    @classmethod
    def from_obj(cls, obj):
        return cls(bytes(obj["header"]), bytes(obj["payload"]))


@dataclass(frozen=True, kw_only=True)
class StorageEntry:
    """Fields shared by the product, batch and action payloads."""

    TYPE = ""

    name: str
    author_name: str
    data: bytes = b""
    nonce: bytes = field(default_factory=lambda: crypto.random_bytes(ENTRY_NONCE_LEN))
    signature: bytes | None = None

    def __post_init__(self):
        if len(self.nonce) != ENTRY_NONCE_LEN:
            raise InvalidEntry("storage entry nonce must be 32 bytes")

    def _fields(self):
        return {}

    def to_obj(self, with_signature=True):
        obj = {
            "type": self.TYPE,
            "name": self.name,
            "author_name": self.author_name,
            "data": self.data,
            "nonce": self.nonce,
            **self._fields(),
        }
        if with_signature:
            obj["signature"] = self.signature
        return obj

    def signing_bytes(self):
        return encode(self.to_obj(with_signature=False))

    def signed(self, secret, rng=None):
        return dataclasses.replace(self, signature=crypto.sign(self.signing_bytes(), secret, rng))

    def verify_signature(self, public):
        if self.signature is None:
            return False
        return crypto.verify(self.signature, self.signing_bytes(), public)


@dataclass(frozen=True, kw_only=True)
class ProductEntry(StorageEntry):
    TYPE = "product"

    fingerprint: Fingerprint | None = None
    components: tuple = ()

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "components", tuple(check_ledger_address(c) for c in self.components))

    def _fields(self):
        return {
            "fingerprint": None if self.fingerprint is None else self.fingerprint.to_obj(),
            "components": list(self.components),
        }


@dataclass(frozen=True, kw_only=True)
class BatchEntry(StorageEntry):
    TYPE = "batch"

    components: tuple

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise InvalidEntry("batch entry needs at least one component")

    def _fields(self):
        return {"components": [c.to_obj() for c in self.components]}

    def find_component(self, storage_address):
        for c in self.components:
            if c.address == storage_address:
                return c
        return None


@dataclass(frozen=True, kw_only=True)
class ActionEntry(StorageEntry):
    TYPE = "action"

    asset: bytes

    def __post_init__(self):
        super().__post_init__()
        check_ledger_address(self.asset)

    def _fields(self):
        return {"asset": self.asset}


def _storage_from_obj(obj):
    common = dict(
        name=obj["name"],
        author_name=obj["author_name"],
        data=bytes(obj["data"]),
        nonce=bytes(obj["nonce"]),
        signature=None if obj.get("signature") is None else bytes(obj["signature"]),
    )
    kind = obj["type"]
    if kind == ProductEntry.TYPE:
        fp = obj["fingerprint"]
        return ProductEntry(
            **common,
            fingerprint=None if fp is None else Fingerprint.from_obj(fp),
            components=tuple(bytes(c) for c in obj["components"]),
        )
    if kind == BatchEntry.TYPE:
        return BatchEntry(**common, components=tuple(StorageRef.from_obj(c) for c in obj["components"]))
    if kind == ActionEntry.TYPE:
        return ActionEntry(**common, asset=bytes(obj["asset"]))
    raise InvalidEntry(f"unknown storage entry type {kind!r}")


_DECODERS = {
    AssetEntry: AssetEntry.from_obj,
    UserEntry: UserEntry.from_obj,
    StorageEntry: _storage_from_obj,
}


def canonical_serialize(entry):
    return encode(entry.to_obj())


def deserialize(data, cls):
    """Inverse of :func:`canonical_serialize` for ``cls`` (any StorageEntry
    subclass decodes to the variant named in the payload)."""
    obj = decode(data)
    if issubclass(cls, StorageEntry):
        cls = StorageEntry
    try:
        entry = _DECODERS[cls](obj)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise DecodeError(f"malformed {cls.__name__}: {exc!r}") from None
    return entry
