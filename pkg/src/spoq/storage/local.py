"""Local content-addressed backend.

Blobs are addressed by the hash of the stored bytes, so an encrypted blob is
addressed by its ciphertext.  Encrypted blobs start with ``SEALED_MAGIC``.
"""

import os
import threading
from pathlib import Path

from .. import crypto
from ..errors import NotFound
from ..model import CONTENT_ADDRESSED, check_storage_address, derive_storage_address

SEALED_MAGIC = b"SPQ\x01"


class ContentStore:
    descriptor = CONTENT_ADDRESSED

    def __init__(self, root=None):
        self.root = Path(root) if root is not None else None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
        self._blobs = {}
        self._lock = threading.Lock()

    def _path(self, address):
        return self.root / address.hex()

    def put(self, entry_bytes, encryption_key=None, rng=None):
        blob = bytes(entry_bytes)
        if encryption_key is not None:
            blob = SEALED_MAGIC + crypto.aead_encrypt(blob, encryption_key, SEALED_MAGIC, rng=rng)
        address = derive_storage_address(self.descriptor, blob)
        with self._lock:
            if self.root is None:
                self._blobs.setdefault(address, blob)
            else:
                path = self._path(address)
                if not path.exists():
                    tmp = path.with_suffix(".tmp")
                    tmp.write_bytes(blob)
                    os.replace(tmp, path)
        return address

    def get_raw(self, address):
        address = check_storage_address(address)
        if self.root is None:
            blob = self._blobs.get(address)
        else:
            path = self._path(address)
            blob = path.read_bytes() if path.exists() else None
        if blob is None:
            raise NotFound(f"no blob at {address.hex()}")
        return blob

    def replace_raw(self, address, blob):
        """Overwrite a stored blob in place; models a dishonest storage manager."""
        with self._lock:
            if self.root is None:
                self._blobs[address] = blob
            else:
                self._path(address).write_bytes(blob)

    def is_sealed(self, address):
        return self.get_raw(address).startswith(SEALED_MAGIC)

    def read(self, address, decryption_key=None):
        """Stored bytes, decrypted when a key is given and the blob is sealed.

        A wrong key raises AuthFailed.
        """
        blob = self.get_raw(address)
        if decryption_key is None or not blob.startswith(SEALED_MAGIC):
            return blob
        return crypto.aead_decrypt(blob[len(SEALED_MAGIC):], decryption_key, SEALED_MAGIC)

    def __contains__(self, address):
        try:
            self.get_raw(address)
        except NotFound:
            return False
        return True


def read_content_addressed(store, address, decryption_key=None):
    return store.read(address, decryption_key)
