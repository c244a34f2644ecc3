"""Client keystore: SQLite file mapping asset addresses to access material."""

from __future__ import annotations

import sqlite3
import threading
from dataclasses import dataclass, field

from ..errors import NotFound
from ..model import check_ledger_address, decode, encode


@dataclass(frozen=True)
class KeystoreRecord:
    asset: bytes
    access_keys: tuple = ()
    encryption_keys: tuple = ()
    domain_hint: str | None = None
    fingerprint_secret: int | None = None
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        check_ledger_address(self.asset)
        object.__setattr__(self, "access_keys", tuple(bytes(k) for k in self.access_keys))
        object.__setattr__(self, "encryption_keys", tuple(bytes(k) for k in self.encryption_keys))

    def to_obj(self):
        return {
            "asset": self.asset,
            "access_keys": list(self.access_keys),
            "encryption_keys": list(self.encryption_keys),
            "domain_hint": self.domain_hint,
            "fingerprint_secret": self.fingerprint_secret,
            "labels": dict(self.labels),
        }

    @classmethod
    def from_obj(cls, obj):
        return cls(bytes(obj["asset"]), tuple(obj["access_keys"]), tuple(obj["encryption_keys"]),
                   obj["domain_hint"], obj["fingerprint_secret"], dict(obj.get("labels", {})))

    def merged(self, other):
        """Union of two records for the same asset; ``other`` wins on scalars."""
        return KeystoreRecord(
            self.asset,
            tuple(dict.fromkeys(self.access_keys + other.access_keys)),
            tuple(dict.fromkeys(self.encryption_keys + other.encryption_keys)),
            other.domain_hint or self.domain_hint,
            other.fingerprint_secret if other.fingerprint_secret is not None else self.fingerprint_secret,
            {**self.labels, **other.labels},
        )


class Keystore:
    def __init__(self, path=":memory:"):
        self.path = str(path)
        self._db = sqlite3.connect(self.path, check_same_thread=False)
        self._db.execute("CREATE TABLE IF NOT EXISTS records (asset BLOB PRIMARY KEY, record BLOB NOT NULL)")
        self._db.commit()
        self._lock = threading.Lock()

    def put(self, record):
        with self._lock:
            self._db.execute("INSERT OR REPLACE INTO records VALUES (?, ?)",
                             (record.asset, encode(record.to_obj())))
            self._db.commit()

    def add(self, record):
        """Insert ``record`` or merge it into the stored one."""
        try:
            record = self.get(record.asset).merged(record)
        except NotFound:
            pass
        self.put(record)
        return record

    def get(self, asset):
        with self._lock:
            row = self._db.execute("SELECT record FROM records WHERE asset = ?",
                                   (bytes(asset),)).fetchone()
        if row is None:
            raise NotFound(f"no keystore record for {bytes(asset).hex()}")
        return KeystoreRecord.from_obj(decode(row[0]))

    def records(self):
        with self._lock:
            rows = self._db.execute("SELECT record FROM records ORDER BY asset").fetchall()
        return [KeystoreRecord.from_obj(decode(r[0])) for r in rows]

    def close(self):
        self._db.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def keystore_put(keystore, record):
    keystore.put(record)


def keystore_get(keystore, asset):
    return keystore.get(asset)
