"""Permissioned-ledger simulator.

A single trusted sequencer appends one block per accepted transaction.  The
transaction processor implements the seven contract functions; every call in
a transaction is applied against a scratch overlay and only committed when
all of them succeed.
"""

from __future__ import annotations

import enum
import hashlib
import io
import logging
import os
import threading
from dataclasses import dataclass, field, replace

import cbor2

from . import crypto
from .errors import (
    AssetNotFound, AuthFailed, DecodeError, DuplicateAddress, DuplicateTransaction,
    DuplicateUser, EmptySplit, MalformedTransaction, NotOwner, ParentNotBatch,
    ParentNotFound, RoleAuthFailed, SpoqError, UserNotFound,
)
from .model import (
    AddressKind, AssetEntry, AssetKind, Role, StorageRef, UserEntry,
    canonical_serialize, check_ledger_address, check_user_address, decode,
    derive_ledger_address, encode,
)

log = logging.getLogger(__name__)

ZERO_HASH = bytes(32)
SALT_LEN = 16
TX_NONCE_LEN = 16


class Function(str, enum.Enum):
    CREATE_ASSET = "create_asset"
    PUBLISH_COMPONENT = "publish_component"
    SPLIT_BATCH = "split_batch"
    LOG_ACTION = "log_action"
    TRANSFER_OWNERSHIP = "transfer_ownership"
    REGISTER_USER = "register_user"
    REVOKE_USER = "revoke_user"


@dataclass(frozen=True)
class FunctionCall:
    function: Function
    args: dict

    def to_obj(self):
        return {"fn": self.function.value, "args": self.args}

    @classmethod
    def from_obj(cls, obj):
        return cls(Function(obj["fn"]), dict(obj["args"]))


# Call constructors.  Arguments are kept CBOR-ready so a call encodes the
# same way before submission and after a reload from disk.

def create_asset(kind, storage, initial_owner, salt=None):
    return FunctionCall(Function.CREATE_ASSET, {
        "kind": AssetKind(kind).value,
        "storage": storage.to_obj(),
        "initial_owner": bytes(initial_owner),
        "salt": salt or crypto.random_bytes(SALT_LEN),
    })


def publish_component(parent, storage, initial_owner, kind=AssetKind.PRODUCT, salt=None):
    return FunctionCall(Function.PUBLISH_COMPONENT, {
        "parent": bytes(parent),
        "kind": AssetKind(kind).value,
        "storage": storage.to_obj(),
        "initial_owner": bytes(initial_owner),
        "salt": salt or crypto.random_bytes(SALT_LEN),
    })


def split_batch(parent, sub_batches, salt=None):
    """``sub_batches`` is a list of ``(StorageRef, initial_owner)`` pairs."""
    return FunctionCall(Function.SPLIT_BATCH, {
        "parent": bytes(parent),
        "sub_batches": [{"storage": ref.to_obj(), "initial_owner": bytes(owner)}
                        for ref, owner in sub_batches],
        "salt": salt or crypto.random_bytes(SALT_LEN),
    })


def log_action(asset, action):
    return FunctionCall(Function.LOG_ACTION, {"asset": bytes(asset), "action": action.to_obj()})


def transfer_ownership(asset, recipient):
    return FunctionCall(Function.TRANSFER_OWNERSHIP, {"asset": bytes(asset), "recipient": bytes(recipient)})


def register_user(name, roles, public_key):
    return FunctionCall(Function.REGISTER_USER, {
        "name": name,
        "roles": sorted(Role(r).value for r in roles),
        "public_key": bytes(public_key),
    })


def revoke_user(user):
    return FunctionCall(Function.REVOKE_USER, {"user": bytes(user)})


def user_address(public_key):
    return derive_ledger_address(AddressKind.USER, bytes(public_key))


# -- authentication ---------------------------------------------------------

@dataclass(frozen=True)
class OwnerAuth:
    signer: bytes
    signature: bytes

    def to_obj(self):
        return {"type": "owner", "signer": self.signer, "sig": self.signature}


@dataclass(frozen=True)
class RoleAuth:
    role: Role
    signature: crypto.RingSignature

    def to_obj(self):
        return {"type": "role", "role": Role(self.role).value, "sig": self.signature.to_obj()}


@dataclass(frozen=True)
class ConsortiumAuth:
    signature: bytes

    def to_obj(self):
        return {"type": "consortium", "sig": self.signature}


def _auth_from_obj(obj):
    kind = obj["type"]
    if kind == "owner":
        return OwnerAuth(bytes(obj["signer"]), bytes(obj["sig"]))
    if kind == "role":
        return RoleAuth(Role(obj["role"]), crypto.RingSignature.from_obj(obj["sig"]))
    if kind == "consortium":
        return ConsortiumAuth(bytes(obj["sig"]))
    raise MalformedTransaction(f"unknown auth type {kind!r}")


@dataclass(frozen=True)
class Transaction:
    """Atomic list of calls plus the credentials that cover its payload hash.

    A transaction may carry several credentials; publishing a component, for
    instance, needs both an Intermediary ring signature and the parent
    owner's signature.
    """

    calls: tuple
    nonce: bytes
    auth: tuple = ()

    @classmethod
    def build(cls, *calls, nonce=None, rng=None):
        if not calls:
            raise MalformedTransaction("a transaction needs at least one call")
        return cls(tuple(calls), nonce or crypto.random_bytes(TX_NONCE_LEN, rng))

    @property
    def payload_hash(self):
        cached = self.__dict__.get("_payload_hash")
        if cached is None:
            payload = encode({"calls": [c.to_obj() for c in self.calls], "nonce": self.nonce})
            cached = hashlib.sha256(payload).digest()
            object.__setattr__(self, "_payload_hash", cached)
        return cached

    def owner_signed(self, keypair, rng=None):
        sig = crypto.sign(self.payload_hash, keypair.secret, rng, keypair.public)
        return replace(self, auth=self.auth + (OwnerAuth(keypair.public, sig),))

    def role_signed(self, role, ring, keypair, rng=None):
        ring = list(ring)
        if keypair.public not in ring:
            # Caller is not in the role ring; it can still try with itself added.
            ring.append(keypair.public)
        sig = crypto.ring_sign(self.payload_hash, ring, keypair.secret,
                               ring.index(keypair.public), rng)
        return replace(self, auth=self.auth + (RoleAuth(Role(role), sig),))

    def consortium_signed(self, keypair, rng=None):
        sig = crypto.sign(self.payload_hash, keypair.secret, rng, keypair.public)
        return replace(self, auth=self.auth + (ConsortiumAuth(sig),))

    def to_obj(self):
        return {
            "calls": [c.to_obj() for c in self.calls],
            "nonce": self.nonce,
            "auth": [a.to_obj() for a in self.auth],
            "payload_hash": self.payload_hash,
        }

    @property
    def encoded(self):
        cached = self.__dict__.get("_encoded")
        if cached is None:
            cached = encode(self.to_obj())
            object.__setattr__(self, "_encoded", cached)
        return cached

    @classmethod
    def from_obj(cls, obj):
        try:
            tx = cls(tuple(FunctionCall.from_obj(c) for c in obj["calls"]),
                     bytes(obj["nonce"]),
                     tuple(_auth_from_obj(a) for a in obj["auth"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedTransaction(f"malformed transaction: {exc!r}") from None
        if bytes(obj["payload_hash"]) != tx.payload_hash:
            raise MalformedTransaction("payload hash does not match calls")
        return tx


# -- blocks -----------------------------------------------------------------

def _array_head(n):
    # canonical CBOR head of a definite-length array (major type 4)
    if n < 24:
        return bytes([0x80 | n])
    for info, width in ((24, 1), (25, 2), (26, 4), (27, 8)):
        if n < 1 << (8 * width):
            return bytes([0x80 | info]) + n.to_bytes(width, "big")
    raise ValueError("array too long")


_EMPTY_MAP = encode({})


def block_hash(height, previous_hash, transactions, meta):
    """SHA-256 over height, previous hash, the canonical transaction list and
    the block metadata."""
    h = hashlib.sha256()
    h.update(height.to_bytes(8, "big"))
    h.update(previous_hash)
    h.update(_array_head(len(transactions)))
    for tx in transactions:
        h.update(tx.encoded)
    h.update(encode(meta) if meta else _EMPTY_MAP)
    return h.digest()


@dataclass(frozen=True)
class Block:
    height: int
    previous_hash: bytes
    transactions: tuple
    block_hash: bytes
    meta: dict = field(default_factory=dict)

    @classmethod
    def make(cls, height, previous_hash, transactions, meta=None):
        meta = meta or {}
        transactions = tuple(transactions)
        return cls(height, previous_hash, transactions,
                   block_hash(height, previous_hash, transactions, meta), meta)

    def recompute_hash(self):
        return block_hash(self.height, self.previous_hash, self.transactions, self.meta)

    def to_obj(self):
        return {
            "height": self.height,
            "previous_hash": self.previous_hash,
            "transactions": [tx.to_obj() for tx in self.transactions],
            "meta": self.meta,
            "block_hash": self.block_hash,
        }

    @classmethod
    def from_obj(cls, obj):
        try:
            return cls(int(obj["height"]), bytes(obj["previous_hash"]),
                       tuple(Transaction.from_obj(t) for t in obj["transactions"]),
                       bytes(obj["block_hash"]), dict(obj["meta"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DecodeError(f"malformed block: {exc!r}") from None


def genesis_block(consortium_key):
    return Block.make(0, ZERO_HASH, (), {"consortium": check_user_address(consortium_key)})


class Metrics:
    """Committed transaction count and total serialized asset-entry bytes.

    Entry sizes are measured lazily: only entries touched since the last read
    of ``asset_bytes`` are re-serialized.
    """

    def __init__(self, assets):
        self.transaction_count = 0
        self._assets = assets
        self._sizes = {}
        self._total = 0
        self._dirty = set()

    def touch(self, addrs):
        self._dirty.update(addrs)

    @property
    def asset_bytes(self):
        for addr in self._dirty:
            size = len(canonical_serialize(self._assets[addr]))
            self._total += size - self._sizes.get(addr, 0)
            self._sizes[addr] = size
        self._dirty.clear()
        return self._total

    def __repr__(self):
        return f"Metrics(transaction_count={self.transaction_count}, asset_bytes={self.asset_bytes})"


@dataclass
class Receipt:
    block_height: int
    results: list


# -- execution --------------------------------------------------------------

class _Overlay:
    """Uncommitted writes of one transaction on top of the ledger maps."""

    def __init__(self, ledger):
        self.ledger = ledger
        self.assets = {}
        self.users = {}

    def asset(self, addr):
        entry = self.assets.get(addr) or self.ledger.assets.get(addr)
        if entry is None:
            raise AssetNotFound(f"no asset at {bytes(addr).hex()}")
        return entry

    def has_asset(self, addr):
        return addr in self.assets or addr in self.ledger.assets

    def user(self, addr):
        entry = self.users.get(addr) or self.ledger.users.get(addr)
        if entry is None:
            raise UserNotFound(f"no user at {bytes(addr).hex()}")
        return entry

    def has_user(self, addr):
        return addr in self.users or addr in self.ledger.users

    def role_keys(self, role):
        if not self.users:
            return self.ledger.role_keys(role)
        merged = dict(self.ledger.users)
        merged.update(self.users)
        return _role_ring(merged.values(), role)


def _role_ring(users, role):
    return tuple(sorted(u.public_key for u in users if u.has_role(role)))


class _Credentials:
    def __init__(self, tx, consortium_key):
        self.owners = set()
        self.consortium = False
        self.rings = {}
        for item in tx.auth:
            if isinstance(item, OwnerAuth):
                try:
                    ok = crypto.verify(item.signature, tx.payload_hash, item.signer)
                except SpoqError:
                    ok = False
                if not ok:
                    raise AuthFailed("owner signature does not verify")
                self.owners.add(item.signer)
            elif isinstance(item, ConsortiumAuth):
                if not crypto.verify(item.signature, tx.payload_hash, consortium_key):
                    raise AuthFailed("consortium signature does not verify")
                self.consortium = True
            elif isinstance(item, RoleAuth):
                self.rings.setdefault(Role(item.role), []).append(item.signature)
        self.payload_hash = tx.payload_hash

    def require_role(self, role, work):
        ring = work.role_keys(role)
        for sig in self.rings.get(Role(role), ()):
            if crypto.ring_verify(sig, self.payload_hash, ring):
                return
        raise RoleAuthFailed(f"no valid {Role(role).value} ring signature over the current ring")

    def require_owner(self, entry):
        if entry.current_owner not in self.owners:
            raise NotOwner("caller is not the asset's current owner")

    def require_consortium(self):
        if not self.consortium:
            raise AuthFailed("call requires the consortium signature")


def _ref(obj):
    return StorageRef.from_obj(obj)


def _new_asset(work, seed, entry):
    addr = derive_ledger_address(AddressKind.ASSET, seed)
    if work.has_asset(addr):
        raise DuplicateAddress(f"asset address {addr.hex()} already taken")
    work.assets[addr] = entry
    return addr


def _parent_batch(work, parent):
    check_ledger_address(parent)
    try:
        entry = work.asset(parent)
    except AssetNotFound:
        raise ParentNotFound(f"no parent asset at {parent.hex()}") from None
    if entry.kind != AssetKind.BATCH:
        raise ParentNotBatch("parent asset is not a batch")
    return entry


def _do_create_asset(work, creds, args):
    creds.require_role(Role.PRODUCER, work)
    storage = _ref(args["storage"])
    owner = check_user_address(args["initial_owner"])
    entry = AssetEntry(AssetKind(args["kind"]), storage, (owner,))
    return _new_asset(work, encode(args["storage"]) + bytes(args["salt"]), entry)


def _do_publish_component(work, creds, args):
    parent = bytes(args["parent"])
    parent_entry = _parent_batch(work, parent)
    creds.require_role(Role.INTERMEDIARY, work)
    creds.require_owner(parent_entry)
    entry = AssetEntry(AssetKind(args["kind"]), _ref(args["storage"]),
                       (check_user_address(args["initial_owner"]),), parent=parent)
    return _new_asset(work, encode(args["storage"]) + bytes(args["salt"]), entry)


def _do_split_batch(work, creds, args):
    parent = bytes(args["parent"])
    parent_entry = _parent_batch(work, parent)
    creds.require_role(Role.INTERMEDIARY, work)
    creds.require_owner(parent_entry)
    subs = args["sub_batches"]
    if not subs:
        raise EmptySplit("split needs at least one sub-batch")
    out = []
    for i, sub in enumerate(subs):
        entry = AssetEntry(AssetKind.BATCH, _ref(sub["storage"]),
                           (check_user_address(sub["initial_owner"]),), parent=parent)
        seed = encode(sub["storage"]) + bytes(args["salt"]) + i.to_bytes(4, "big")
        out.append(_new_asset(work, seed, entry))
    return out


def _do_log_action(work, creds, args):
    addr = bytes(args["asset"])
    entry = work.asset(addr)
    creds.require_owner(entry)
    work.assets[addr] = replace(entry, actions=entry.actions + (_ref(args["action"]),))
    return None


def _do_transfer(work, creds, args):
    addr = bytes(args["asset"])
    entry = work.asset(addr)
    creds.require_owner(entry)
    recipient = check_user_address(args["recipient"])
    work.assets[addr] = replace(entry, owners=entry.owners + (recipient,))
    return None


def _do_register_user(work, creds, args):
    creds.require_consortium()
    entry = UserEntry(args["name"], frozenset(args["roles"]), bytes(args["public_key"]))
    addr = user_address(entry.public_key)
    if work.has_user(addr):
        raise DuplicateUser(f"user key already registered at {addr.hex()}")
    work.users[addr] = entry
    return addr


def _do_revoke_user(work, creds, args):
    creds.require_consortium()
    addr = bytes(args["user"])
    entry = work.user(addr)
    work.users[addr] = replace(entry, revoked=True)
    return None


_HANDLERS = {
    Function.CREATE_ASSET: _do_create_asset,
    Function.PUBLISH_COMPONENT: _do_publish_component,
    Function.SPLIT_BATCH: _do_split_batch,
    Function.LOG_ACTION: _do_log_action,
    Function.TRANSFER_OWNERSHIP: _do_transfer,
    Function.REGISTER_USER: _do_register_user,
    Function.REVOKE_USER: _do_revoke_user,
}


class Ledger:
    """Committed state plus the block chain it was derived from.

    Submits are serialised by an internal lock; queries read the committed
    maps and never observe a half-applied transaction.
    """

    def __init__(self, consortium_key, path=None):
        self.assets = {}
        self.users = {}
        self.chain = [genesis_block(consortium_key)]
        self.metrics = Metrics(self.assets)
        self.consortium_key = bytes(consortium_key)
        self._seen = set()
        self._rings = {}
        self._lock = threading.Lock()
        self.path = path
        if path is not None:
            with open(path, "wb") as fh:
                fh.write(encode(self.chain[0].to_obj()))

    # -- writes --

    def submit(self, tx):
        with self._lock:
            if not tx.calls:
                raise MalformedTransaction("a transaction needs at least one call")
            if tx.payload_hash in self._seen:
                raise DuplicateTransaction("transaction payload already committed")
            creds = _Credentials(tx, self.consortium_key)
            work = _Overlay(self)
            results = []
            for call in tx.calls:
                try:
                    results.append(_HANDLERS[call.function](work, creds, call.args))
                except (KeyError, TypeError, ValueError) as exc:
                    raise MalformedTransaction(f"bad arguments for {call.function.value}: {exc!r}") from None
            block = Block.make(len(self.chain), self.chain[-1].block_hash, (tx,))
            self._commit(work, tx, block)
            return Receipt(block.height, results)

    def _commit(self, work, tx, block):
        self.assets.update(work.assets)
        self.metrics.touch(work.assets)
        if work.users:
            self.users.update(work.users)
            self._rings.clear()
        self.chain.append(block)
        self._seen.add(tx.payload_hash)
        self.metrics.transaction_count += 1
        if self.path is not None:
            with open(self.path, "ab") as fh:
                fh.write(encode(block.to_obj()))
                fh.flush()
                os.fsync(fh.fileno())

    # -- reads --

    def query_asset(self, addr):
        entry = self.assets.get(bytes(addr))
        if entry is None:
            raise AssetNotFound(f"no asset at {bytes(addr).hex()}")
        return entry

    def query_user(self, addr):
        entry = self.users.get(bytes(addr))
        if entry is None:
            raise UserNotFound(f"no user at {bytes(addr).hex()}")
        return entry

    def role_keys(self, role):
        role = Role(role)
        ring = self._rings.get(role)
        if ring is None:
            ring = self._rings[role] = _role_ring(self.users.values(), role)
        return ring

    def users_named(self, name):
        return [u for u in self.users.values() if u.name == name]

    @property
    def height(self):
        return self.chain[-1].height

    def state_bytes(self):
        """Canonical encodings of both maps, for byte-level comparisons."""
        return ({a: canonical_serialize(e) for a, e in self.assets.items()},
                {a: canonical_serialize(e) for a, e in self.users.items()})

    # -- persistence --

    @classmethod
    def load(cls, path):
        """Rebuild a ledger by replaying the chain file at ``path``.

        Raises DecodeError / SpoqError when the file does not replay cleanly;
        use :func:`validate_chain_file` for a diagnostic instead.
        """
        blocks = load_chain(path)
        ledger = replay(blocks)
        ledger.path = path
        return ledger


def replay(blocks):
    """Fresh in-memory ledger rebuilt from ``blocks`` (genesis first)."""
    if not blocks or blocks[0].height != 0 or "consortium" not in blocks[0].meta:
        raise DecodeError("chain does not start with a genesis block")
    ledger = Ledger(bytes(blocks[0].meta["consortium"]))
    for block in blocks[1:]:
        for tx in block.transactions:
            ledger.submit(tx)
    return ledger


def _read_blocks(data):
    """Split a CBOR-sequence chain file into (Block, raw bytes) pairs."""
    fp = io.BytesIO(data)
    out = []
    while fp.tell() < len(data):
        start = fp.tell()
        try:
            obj = cbor2.CBORDecoder(fp).decode()
        except Exception as exc:
            raise DecodeError(f"undecodable block at byte {start}: {exc}") from None
        raw = data[start:fp.tell()]
        block = Block.from_obj(obj)
        if encode(block.to_obj()) != raw:
            raise DecodeError(f"block at byte {start} is not canonically encoded")
        out.append(block)
    return out


def load_chain(path):
    with open(path, "rb") as fh:
        return _read_blocks(fh.read())


@dataclass
class ChainCheck:
    ok: bool
    height: int | None = None
    reason: str = ""

    def __bool__(self):
        return self.ok


def validate_chain(chain, state=None):
    """Check hashes, links and replay of ``chain``.

    ``chain`` is a Ledger or a list of blocks.  When a ledger is given (or
    ``state`` is another ledger) the replayed asset and user maps must match
    it byte for byte.  Returns a falsy ChainCheck naming the first bad block.
    """
    if isinstance(chain, Ledger):
        state = chain if state is None else state
        chain = chain.chain
    if not chain:
        return ChainCheck(False, None, "empty chain")
    prev = ZERO_HASH
    for i, block in enumerate(chain):
        if block.height != i:
            return ChainCheck(False, i, f"height {block.height} at position {i}")
        if block.previous_hash != prev:
            return ChainCheck(False, i, "previous_hash does not link")
        if block.recompute_hash() != block.block_hash:
            return ChainCheck(False, i, "block_hash does not recompute")
        prev = block.block_hash
    genesis = chain[0]
    if genesis.transactions or "consortium" not in genesis.meta:
        return ChainCheck(False, 0, "malformed genesis block")
    for i, block in enumerate(chain[1:], start=1):
        if len(block.transactions) != 1 or block.meta:
            return ChainCheck(False, i, "blocks carry exactly one transaction")
    try:
        replayed = Ledger(bytes(genesis.meta["consortium"]))
    except SpoqError as exc:
        return ChainCheck(False, 0, f"bad consortium key: {exc}")
    for block in chain[1:]:
        try:
            replayed.submit(block.transactions[0])
        except SpoqError as exc:
            return ChainCheck(False, block.height, f"transaction does not replay: {exc.code} {exc}")
        if replayed.chain[-1].block_hash != block.block_hash:
            return ChainCheck(False, block.height, "replayed block differs")
    if state is not None and replayed.state_bytes() != state.state_bytes():
        return ChainCheck(False, len(chain) - 1, "state differs from chain replay")
    return ChainCheck(True, len(chain) - 1)


def validate_chain_file(path):
    try:
        with open(path, "rb") as fh:
            blocks = _read_blocks(fh.read())
    except (OSError, SpoqError) as exc:
        return ChainCheck(False, None, f"unreadable chain: {exc}")
    return validate_chain(blocks)
