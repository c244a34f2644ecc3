"""Client-side fetch: pick a backend by address descriptor and try the
credentials the caller holds until one of them opens the entry."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import SpoqError, StorageUnreadable
from ..model import CONTENT_ADDRESSED, HTTP_SERVER
from .local import SEALED_MAGIC
from .server import key_proof, owner_proof


@dataclass
class Credentials:
    access_keys: list = field(default_factory=list)
    encryption_keys: list = field(default_factory=list)
    identities: list = field(default_factory=list)
    domain_hints: list = field(default_factory=list)

    @classmethod
    def from_keystore(cls, keystore, identities=()):
        creds = cls(identities=list(identities))
        for rec in keystore.records():
            creds.access_keys.extend(rec.access_keys)
            creds.encryption_keys.extend(rec.encryption_keys)
            if rec.domain_hint:
                creds.domain_hints.append(rec.domain_hint)
        creds.access_keys = list(dict.fromkeys(creds.access_keys))
        creds.encryption_keys = list(dict.fromkeys(creds.encryption_keys))
        return creds


class StorageRouter:
    """Maps storage addresses to backends.

    ``content_store`` serves the content-addressed descriptor.  ``servers``
    maps a locator hint (domain name, URL, any label) to a StorageServer or
    HttpStorageClient; addresses never carry the locator, so the hint comes
    from the caller's credentials or every known server is tried.
    """

    def __init__(self, content_store=None, servers=None):
        self.content_store = content_store
        self.servers = dict(servers or {})

    def _server_candidates(self, credentials):
        hinted = [self.servers[h] for h in credentials.domain_hints if h in self.servers]
        rest = [s for s in self.servers.values() if s not in hinted]
        return hinted + rest

    def fetch(self, address, credentials=None):
        credentials = credentials or Credentials()
        descriptor = bytes(address[:2])
        if descriptor == CONTENT_ADDRESSED:
            return self._fetch_content(address, credentials)
        if descriptor == HTTP_SERVER:
            return self._fetch_server(address, credentials)
        raise StorageUnreadable(f"no client for backend {descriptor.hex()}")

    def _fetch_content(self, address, credentials):
        if self.content_store is None:
            raise StorageUnreadable("no content-addressed store configured")
        try:
            blob = self.content_store.get_raw(address)
        except SpoqError as exc:
            raise StorageUnreadable(f"content store: {exc.code}") from None
        if not blob.startswith(SEALED_MAGIC):
            return blob
        for key in credentials.encryption_keys:
            try:
                return self.content_store.read(address, key)
            except SpoqError:
                continue
        raise StorageUnreadable("sealed blob and no matching encryption key")

    def _fetch_server(self, address, credentials):
        failures = []
        for server in self._server_candidates(credentials):
            attempts = [("public", lambda s: b"")]
            attempts += [("key", lambda s, k=k: key_proof(s.request_nonce(), k, address))
                         for k in credentials.access_keys]
            attempts += [("owner", lambda s, kp=kp: owner_proof(s.request_nonce(), kp))
                         for kp in credentials.identities]
            for mode, make_proof in attempts:
                try:
                    return server.read(address, mode, make_proof(server))
                except SpoqError as exc:
                    failures.append(exc.code)
                    if exc.code == "NOT_FOUND":
                        break
        raise StorageUnreadable(f"no credential opened the entry ({', '.join(sorted(set(failures))) or 'no servers'})")
