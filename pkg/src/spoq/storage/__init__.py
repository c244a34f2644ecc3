"""Off-chain storage backends, the access-controlled server and the keystore."""

from .client import Credentials, StorageRouter
from .keystore import Keystore, KeystoreRecord, keystore_get, keystore_put
from .local import ContentStore, read_content_addressed
from .server import (
    AccessPolicy, HttpStorageClient, StorageServer, key_proof, owner_proof, serve, sign_write,
)

__all__ = [
    "AccessPolicy", "ContentStore", "Credentials", "HttpStorageClient", "Keystore",
    "KeystoreRecord", "StorageRouter", "StorageServer", "key_proof", "keystore_get",
    "keystore_put", "owner_proof", "read_content_addressed", "serve", "sign_write",
]
