"""Client-side asset verification, origin-trail checking and fingerprints."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

from . import crypto
from .errors import SpoqError, UnknownFingerprintType
from .ledger import user_address
from .model import (
    BARCODE, ZK_PUF, BatchEntry, Fingerprint, ProductEntry, Role, StorageEntry, StorageRef,
    deserialize, encode, entry_hash,
)
from .storage.client import Credentials

log = logging.getLogger(__name__)

PUF_CHALLENGE_LEN = 32


# -- fingerprints -----------------------------------------------------------

class MockPufDevice:
    """Stand-in for a ZK-PUF tag: holds a secret scalar and answers
    challenges with a Schnorr proof of knowledge bound to the challenge."""

    def __init__(self, secret=None, rng=None):
        self.secret = secret if secret is not None else crypto.random_scalar(rng)
        self.commitment = crypto.public_key(self.secret)
        self._rng = rng

    def request(self, challenge):
        k = crypto.random_scalar(self._rng)
        r_point = crypto.public_key(k)
        e = crypto.hash_to_scalar(crypto.TAG_PUF, r_point, self.commitment, bytes(challenge))
        return r_point + crypto.scalar_bytes(k + e * self.secret)


class BarcodeScanner:
    """Device interface for printed codes; the challenge is ignored."""

    def __init__(self, scanned):
        self.scanned = bytes(scanned)

    def request(self, challenge):
        return self.scanned


def fingerprint_enroll(device):
    return Fingerprint(ZK_PUF, device.commitment)


def _verify_puf(payload, device, rng):
    challenge = crypto.random_bytes(PUF_CHALLENGE_LEN, rng)
    proof = bytes(device.request(challenge))
    if len(proof) != crypto.SIGNATURE_LEN:
        return False
    r_bytes, s = proof[:crypto.POINT_LEN], int.from_bytes(proof[crypto.POINT_LEN:], "big")
    if not 0 < s < crypto.N or not crypto.is_valid_point(r_bytes):
        return False
    try:
        commitment = crypto.load_point(payload)
    except SpoqError:
        return False
    e = crypto.hash_to_scalar(crypto.TAG_PUF, r_bytes, bytes(payload), challenge)
    # s*G - e*C must reproduce the device's commitment R
    lhs = crypto.lincomb(s, crypto.N - e, commitment)
    return lhs is not None and lhs.format(compressed=True) == r_bytes


def fingerprint_verify(fp, device, rng=None):
    header = bytes(fp.header)
    if header == ZK_PUF:
        return _verify_puf(fp.payload, device, rng)
    if header == BARCODE:
        return bytes(device.request(b"")) == bytes(fp.payload)
    raise UnknownFingerprintType(f"no verifier for header {header!r}")


# -- reports ----------------------------------------------------------------

class Check(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    SKIPPED = "skipped"


@dataclass
class VerificationReport:
    hash_ok: Check = Check.SKIPPED
    signature_ok: Check = Check.SKIPPED
    role_ok: Check = Check.SKIPPED
    origin_ok: Check = Check.SKIPPED
    fingerprint_ok: Check = Check.SKIPPED
    origin_trail: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    FIELDS = ("hash_ok", "signature_ok", "role_ok", "origin_ok", "fingerprint_ok")

    @property
    def passed(self):
        return all(getattr(self, f) != Check.FAIL for f in self.FIELDS)

    def to_obj(self):
        return {
            **{f: getattr(self, f).value for f in self.FIELDS},
            "verdict": "pass" if self.passed else "fail",
            "origin_trail": [t if isinstance(t, bytes) else t.to_obj() for t in self.origin_trail],
            "diagnostics": list(self.diagnostics),
        }

    def to_cbor(self):
        return encode(self.to_obj())

    def text(self):
        lines = [f"{f:<15} {getattr(self, f).value.upper()}" for f in self.FIELDS]
        lines.append(f"{'verdict':<15} {'PASS' if self.passed else 'FAIL'}")
        for i, item in enumerate(self.origin_trail):
            label = item.hex() if isinstance(item, bytes) else f"storage:{item.address.hex()}"
            lines.append(f"trail[{i}]       {label}")
        lines.extend(f"note: {d}" for d in self.diagnostics)
        return "\n".join(lines)


def _check(flag):
    return Check.PASS if flag else Check.FAIL


# -- origin trail -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrailNode:
    """An asset or batch component: its storage reference and fetched bytes,
    plus its ledger address when it has an on-ledger entry."""

    ref: StorageRef
    data: bytes
    address: bytes | None = None

    @property
    def entry(self):
        cached = self.__dict__.get("_entry")
        if cached is None:
            cached = deserialize(self.data, StorageEntry)
            object.__setattr__(self, "_entry", cached)
        return cached

    @property
    def label(self):
        return self.address if self.address is not None else self.ref


class ComponentIndex:
    """Readable batch entries, searchable by the storage addresses they list."""

    def __init__(self, nodes=()):
        self._by_component = {}
        for node in nodes:
            self.add(node)

    def add(self, node):
        try:
            entry = node.entry
        except SpoqError:
            return
        if isinstance(entry, BatchEntry):
            for comp in entry.components:
                self._by_component.setdefault(comp.address, []).append(node)

    def add_bytes(self, address, data, ledger_address=None):
        self.add(TrailNode(StorageRef(address, entry_hash(data)), data, ledger_address))

    def listing(self, storage_address):
        return list(self._by_component.get(bytes(storage_address), ()))


class OriginVerifier:
    """Origin-trail walk over ledger parent links and batch component lists.

    Parent resolution: a ledger parent link wins; otherwise the first
    readable batch that lists the asset's storage address; otherwise the
    asset is a root.
    """

    def __init__(self, ledger, router, credentials=None, index=None):
        self.ledger = ledger
        self.router = router
        self.credentials = credentials or Credentials()
        self.index = index or ComponentIndex()
        self.diagnostics = []

    def node_for_asset(self, address):
        entry = self.ledger.query_asset(address)
        data = self.router.fetch(entry.storage.address, self.credentials)
        return TrailNode(entry.storage, data, bytes(address))

    def parent(self, node):
        if node.address is not None:
            entry = self.ledger.query_asset(node.address)
            if entry.parent is not None:
                return self.node_for_asset(entry.parent)
        for candidate in self.index.listing(node.ref.address):
            if candidate.ref.address != node.ref.address:
                return candidate
        return None

    def author_key(self, node):
        """Registered public key whose signature covers ``node``'s entry, or None."""
        try:
            entry = node.entry
        except SpoqError as exc:
            self.diagnostics.append(f"undecodable entry {node.ref.address.hex()}: {exc.code}")
            return None
        if entry.signature is None:
            return None
        for user in self.ledger.users_named(entry.author_name):
            if entry.verify_signature(user.public_key):
                return user.public_key
        return None

    def integrity_check(self, node):
        if entry_hash(node.data) != node.ref.hash:
            self.diagnostics.append(f"hash mismatch at {node.ref.address.hex()}")
            return False
        if self.author_key(node) is None:
            self.diagnostics.append(f"no valid author signature at {node.ref.address.hex()}")
            return False
        return True

    def find_component(self, batch, storage_address):
        try:
            entry = batch.entry
        except SpoqError:
            return None
        if not isinstance(entry, BatchEntry):
            return None
        return entry.find_component(storage_address)

    def is_same_producer(self, root, leaf):
        a, b = self.author_key(root), self.author_key(leaf)
        return a is not None and a == b

    def origin(self, a, t=()):
        """Returns ``(True, trail)`` with the trail root first, or ``(False, [])``."""
        t = list(t)
        try:
            p = self.parent(a)
        except SpoqError as exc:
            self.diagnostics.append(f"parent unresolvable: {exc.code} {exc}")
            return False, []
        if p is None:
            if t and not self.is_same_producer(a, t[-1]):
                self.diagnostics.append("leaf asset is not created by the root batch's producer")
                return False, []
            return True, [a] + t
        walked = [a] + t
        if any(p.ref.address == x.ref.address for x in walked):
            self.diagnostics.append("cycle in batch hierarchy")
            return False, []
        if not self.integrity_check(p):
            return False, []
        for item in walked:
            c = self.find_component(p, item.ref.address)
            if c is not None:
                if entry_hash(item.data) == c.hash:
                    return self.origin(p, walked)
                self.diagnostics.append(f"integrity violation in origin trail at {item.ref.address.hex()}")
                return False, []
        self.diagnostics.append("parent batch lists neither the asset nor any part of its trail")
        return False, []


def origin(a, t, ledger, router, credentials=None, index=None):
    return OriginVerifier(ledger, router, credentials, index).origin(a, t)


# -- full pipeline ----------------------------------------------------------

def _role_of(ledger, public_key, role):
    try:
        return ledger.query_user(user_address(public_key)).has_role(role)
    except SpoqError:
        return False


def verify_asset(address, ledger, router, credentials=None, device=None, index=None, rng=None):
    """Run hash, signature, role, origin and fingerprint checks for ``address``."""
    report = VerificationReport()
    diag = report.diagnostics
    verifier = OriginVerifier(ledger, router, credentials, index)

    try:
        asset = ledger.query_asset(address)
    except SpoqError as exc:
        diag.append(f"LedgerUnreachable: {exc.code}")
        for f in ("hash_ok", "signature_ok", "role_ok", "origin_ok"):
            setattr(report, f, Check.FAIL)
        return report
    try:
        data = router.fetch(asset.storage.address, verifier.credentials)
    except SpoqError as exc:
        diag.append(f"StorageUnreadable: {exc}")
        for f in ("hash_ok", "signature_ok", "role_ok", "origin_ok"):
            setattr(report, f, Check.FAIL)
        return report

    node = TrailNode(asset.storage, data, bytes(address))
    report.hash_ok = _check(entry_hash(data) == asset.storage.hash)

    author = verifier.author_key(node)
    report.signature_ok = _check(author is not None)
    if author is None:
        diag.append("storage entry signature does not verify against a registered author")

    ok, trail = verifier.origin(node)
    report.origin_ok = _check(ok)
    report.origin_trail = [n.label for n in trail]

    if ok:
        root_author = author if len(trail) == 1 else verifier.author_key(trail[0])
        report.role_ok = _check(root_author is not None and _role_of(ledger, root_author, Role.PRODUCER))
        if report.role_ok == Check.FAIL:
            diag.append("root entry author does not hold the producer role")
        for n in trail[1:-1]:
            key = verifier.author_key(n)
            state = "intermediary" if key and _role_of(ledger, key, Role.INTERMEDIARY) else "unverified"
            diag.append(f"intermediate batch {n.ref.address.hex()[:16]} author: {state}")
    else:
        report.role_ok = Check.FAIL
        diag.append("no verified root producer")

    try:
        entry = node.entry
    except SpoqError:
        entry = None
    if device is not None and isinstance(entry, ProductEntry) and entry.fingerprint is not None:
        try:
            report.fingerprint_ok = _check(fingerprint_verify(entry.fingerprint, device, rng))
        except SpoqError as exc:
            report.fingerprint_ok = Check.FAIL
            diag.append(f"fingerprint: {exc.code}")
    diag.extend(verifier.diagnostics)
    return report
