"""Access-controlled storage server and its HTTP/CBOR wire protocol.

Reads are gated by one of two challenge-response schemes:

* key mode: the client encrypts a fresh server nonce under the entry's
  32-byte access key, with the requested storage address as associated data;
* owner mode: the client signs a fresh nonce with the key of the governing
  asset's current owner, as recorded on the ledger.

Nonces are 16 bytes, single use, and expire after ``nonce_ttl`` seconds.
"""

from __future__ import annotations

import logging
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .. import crypto, errors
from ..errors import (
    AssetLinkMissing, KeyMismatch, NonceUnknownOrConsumed, NotFound, NotOwner,
    PolicyInvalid, SpoqError, WriteDenied,
)
from ..model import (
    HTTP_SERVER, ActionEntry, StorageEntry, check_ledger_address, check_storage_address,
    decode, derive_storage_address, deserialize, encode, entry_hash,
)

log = logging.getLogger(__name__)

NONCE_LEN = 16
DEFAULT_NONCE_TTL = 60.0


class AccessDenied(SpoqError):
    code = "ACCESS_DENIED"


@dataclass(frozen=True)
class AccessPolicy:
    mode: str
    key: bytes | None = None
    asset: bytes | None = None

    @classmethod
    def public(cls):
        return cls("public")

    @classmethod
    def key_protected(cls, key):
        return cls("key", key=bytes(key))

    @classmethod
    def ownership_protected(cls, asset):
        return cls("owner", asset=bytes(asset))

    def validate(self):
        if self.mode == "public":
            return self
        if self.mode == "key":
            if self.key is None or len(self.key) != crypto.ACCESS_KEY_LEN:
                raise PolicyInvalid("key policy needs a 32-byte access key")
            return self
        if self.mode == "owner":
            try:
                check_ledger_address(self.asset or b"")
            except SpoqError:
                raise PolicyInvalid("owner policy needs a ledger asset address") from None
            return self
        raise PolicyInvalid(f"unknown policy mode {self.mode!r}")

    def to_obj(self):
        obj = {"mode": self.mode}
        if self.key is not None:
            obj["key"] = self.key
        if self.asset is not None:
            obj["asset"] = self.asset
        return obj

    @classmethod
    def from_obj(cls, obj):
        try:
            return cls(obj["mode"], obj.get("key"), obj.get("asset")).validate()
        except (KeyError, TypeError, AttributeError):
            raise PolicyInvalid("malformed policy") from None


def write_message(entry_bytes, policy):
    """Bytes a writer signs to store ``entry_bytes`` under ``policy``."""
    return encode({"entry_hash": entry_hash(entry_bytes), "policy": policy.to_obj()})


def sign_write(entry_bytes, policy, keypair):
    return crypto.sign(write_message(entry_bytes, policy), keypair.secret)


def key_proof(nonce, access_key, address, rng=None):
    return crypto.aead_encrypt(nonce, access_key, bytes(address), rng=rng)


def owner_proof(nonce, keypair):
    return nonce + crypto.sign(nonce, keypair.secret)


@dataclass
class NonceRecord:
    nonce: bytes
    issued_at: float
    consumed: bool = False


class StorageServer:
    """In-process server core; :func:`serve` puts it behind HTTP.

    ``ledger`` only needs ``query_asset``.  With ``public_actions`` any
    current owner may store action entries bound to the asset they own.
    """

    descriptor = HTTP_SERVER

    def __init__(self, ledger, allowlist=(), public_actions=False,
                 nonce_ttl=DEFAULT_NONCE_TTL, clock=time.monotonic, rng=None):
        self.ledger = ledger
        self.allowlist = {bytes(k) for k in allowlist}
        self.public_actions = public_actions
        self.nonce_ttl = nonce_ttl
        self.clock = clock
        self.rng = rng
        self._entries = {}
        self._nonces = {}
        self._lock = threading.Lock()

    def allow_writer(self, public_key):
        self.allowlist.add(bytes(public_key))

    # -- writes --

    def put_entry(self, entry_bytes, policy, writer_pub, writer_sig):
        entry_bytes = bytes(entry_bytes)
        policy = policy.validate()
        try:
            ok = crypto.verify(writer_sig, write_message(entry_bytes, policy), writer_pub)
        except SpoqError:
            ok = False
        if not ok:
            raise WriteDenied("writer signature does not verify")
        if bytes(writer_pub) not in self.allowlist and not self._owner_may_write(entry_bytes, writer_pub):
            raise WriteDenied("writer is not allowed to store entries here")
        address = derive_storage_address(self.descriptor, entry_bytes)
        with self._lock:
            self._entries.setdefault(address, (entry_bytes, policy))
        return address

    def _owner_may_write(self, entry_bytes, writer_pub):
        if not self.public_actions:
            return False
        try:
            entry = deserialize(entry_bytes, StorageEntry)
        except SpoqError:
            return False
        if not isinstance(entry, ActionEntry):
            return False
        try:
            return self.ledger.query_asset(entry.asset).current_owner == bytes(writer_pub)
        except NotFound:
            return False

    # -- nonces --

    def request_nonce(self):
        nonce = crypto.random_bytes(NONCE_LEN, self.rng)
        with self._lock:
            self._expire()
            self._nonces[nonce] = NonceRecord(nonce, self.clock())
        return nonce

    def _expire(self):
        cutoff = self.clock() - self.nonce_ttl
        for n in [n for n, r in self._nonces.items() if r.consumed or r.issued_at < cutoff]:
            del self._nonces[n]

    def _consume(self, nonce):
        """Atomically mark ``nonce`` used; raises if unknown, used or expired."""
        with self._lock:
            rec = self._nonces.get(bytes(nonce))
            if rec is None or rec.consumed:
                raise NonceUnknownOrConsumed("nonce unknown or already used")
            if self.clock() - rec.issued_at > self.nonce_ttl:
                del self._nonces[rec.nonce]
                raise NonceUnknownOrConsumed("nonce expired")
            rec.consumed = True

    # -- reads --

    def _lookup(self, address):
        address = check_storage_address(address)
        found = self._entries.get(address)
        if found is None:
            raise NotFound(f"no entry at {address.hex()}")
        return found

    def read_key_protected(self, address, ciphertext):
        entry_bytes, policy = self._lookup(address)
        if policy.mode != "key":
            raise KeyMismatch("entry is not key protected")
        try:
            nonce = crypto.aead_decrypt(ciphertext, policy.key, bytes(address))
        except SpoqError:
            raise KeyMismatch("challenge does not decrypt under the entry's access key") from None
        if len(nonce) != NONCE_LEN:
            raise KeyMismatch("decrypted challenge is not a nonce")
        self._consume(nonce)
        return entry_bytes

    def read_ownership_protected(self, address, proof):
        entry_bytes, policy = self._lookup(address)
        if policy.mode != "owner":
            raise NotOwner("entry is not ownership protected")
        nonce, signature = bytes(proof[:NONCE_LEN]), bytes(proof[NONCE_LEN:])
        try:
            owner = self.ledger.query_asset(policy.asset).current_owner
        except NotFound:
            raise AssetLinkMissing("governing asset is not on the ledger") from None
        if not crypto.verify(signature, nonce, owner):
            raise NotOwner("nonce not signed by the asset's current owner")
        self._consume(nonce)
        return entry_bytes

    def read_public(self, address):
        entry_bytes, policy = self._lookup(address)
        if policy.mode != "public":
            raise AccessDenied("entry requires a key or ownership proof")
        return entry_bytes

    def read(self, address, mode, proof=b""):
        if mode == "key":
            return self.read_key_protected(address, proof)
        if mode == "owner":
            return self.read_ownership_protected(address, proof)
        if mode == "public":
            return self.read_public(address)
        raise PolicyInvalid(f"unknown read mode {mode!r}")

    def replace_raw(self, address, entry_bytes):
        """Overwrite a stored entry in place; models a dishonest storage manager."""
        with self._lock:
            _, policy = self._entries[bytes(address)]
            self._entries[bytes(address)] = (bytes(entry_bytes), policy)


# -- HTTP wire protocol -----------------------------------------------------

_STATUS = {
    "NOT_FOUND": 404, "WRITE_DENIED": 403, "NOT_OWNER": 403, "KEY_MISMATCH": 403,
    "ACCESS_DENIED": 403, "NONCE_INVALID": 401,
}


def _error_classes():
    table = {}
    for obj in vars(errors).values():
        if isinstance(obj, type) and issubclass(obj, SpoqError):
            table.setdefault(obj.code, obj)
    table["NOT_FOUND"] = NotFound
    table[AccessDenied.code] = AccessDenied
    return table


ERRORS_BY_CODE = _error_classes()


class _Handler(BaseHTTPRequestHandler):
    core: StorageServer = None

    def log_message(self, fmt, *args):
        log.debug("%s " + fmt, self.address_string(), *args)

    def _send(self, status, obj):
        body = encode(obj)
        self.send_response(status)
        self.send_header("Content-Type", "application/cbor")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _fail(self, exc):
        self._send(_STATUS.get(exc.code, 400), {"code": exc.code, "message": str(exc)})

    def _body(self):
        length = int(self.headers.get("Content-Length", 0))
        return decode(self.rfile.read(length))

    def do_GET(self):
        if self.path != "/nonce":
            return self._fail(NotFound(f"no route {self.path}"))
        self._send(200, {"nonce": self.core.request_nonce()})

    def do_POST(self):
        try:
            body = self._body()
            if self.path == "/entries":
                address = self.core.put_entry(
                    body["entry"], AccessPolicy.from_obj(body["policy"]),
                    body["writer_pub"], body["writer_sig"])
                return self._send(200, {"address": address})
            if self.path == "/read":
                entry = self.core.read(body["address"], body["mode"], body.get("proof", b""))
                return self._send(200, {"entry": entry})
            raise NotFound(f"no route {self.path}")
        except SpoqError as exc:
            self._fail(exc)
        except (KeyError, TypeError, ValueError) as exc:
            self._send(400, {"code": "BAD_REQUEST", "message": repr(exc)})


def serve(core, host="127.0.0.1", port=0):
    """Bind a threaded HTTP server for ``core``; caller runs ``serve_forever``."""
    handler = type("Handler", (_Handler,), {"core": core})
    return ThreadingHTTPServer((host, port), handler)


class HttpStorageClient:
    """Wire-protocol client with the same read/write surface as StorageServer."""

    descriptor = HTTP_SERVER

    def __init__(self, base_url, timeout=10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _call(self, method, path, obj=None):
        data = None if obj is None else encode(obj)
        req = urllib.request.Request(self.base_url + path, data=data, method=method,
                                     headers={"Content-Type": "application/cbor"})
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return decode(resp.read())
        except urllib.error.HTTPError as err:
            body = decode(err.read())
            cls = ERRORS_BY_CODE.get(body.get("code"), SpoqError)
            raise cls(body.get("message", "")) from None

    def request_nonce(self):
        return self._call("GET", "/nonce")["nonce"]

    def put_entry(self, entry_bytes, policy, writer_pub, writer_sig):
        return self._call("POST", "/entries", {
            "entry": bytes(entry_bytes), "policy": policy.to_obj(),
            "writer_pub": bytes(writer_pub), "writer_sig": bytes(writer_sig),
        })["address"]

    def read(self, address, mode, proof=b""):
        return self._call("POST", "/read", {"address": bytes(address), "mode": mode,
                                            "proof": bytes(proof)})["entry"]

    def read_key_protected(self, address, ciphertext):
        return self.read(address, "key", ciphertext)

    def read_ownership_protected(self, address, proof):
        return self.read(address, "owner", proof)
