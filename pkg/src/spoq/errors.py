"""Exception hierarchy.

Every error carries a stable ``code`` string; the CLI prints it on failure and
the storage server returns it in error bodies.
"""


class SpoqError(Exception):
    code = "ERROR"


# core-model
class EmptySeed(SpoqError):
    code = "EMPTY_SEED"


class UnknownBackend(SpoqError):
    code = "UNKNOWN_BACKEND"


class DecodeError(SpoqError):
    code = "DECODE_ERROR"


class InvalidEntry(SpoqError):
    code = "INVALID_ENTRY"


# crypto
class InvalidKey(SpoqError):
    code = "INVALID_KEY"


class BadIndex(SpoqError):
    code = "BAD_INDEX"


class EmptyRing(SpoqError):
    code = "EMPTY_RING"


class AuthFailed(SpoqError):
    code = "AUTH_FAILED"


# ledger
class RoleAuthFailed(SpoqError):
    code = "ROLE_AUTH_FAILED"


class NotOwner(SpoqError):
    code = "NOT_OWNER"


class NotFound(SpoqError):
    code = "NOT_FOUND"


class AssetNotFound(NotFound):
    pass


class UserNotFound(NotFound):
    pass


class ParentNotFound(SpoqError):
    code = "PARENT_NOT_FOUND"


class ParentNotBatch(SpoqError):
    code = "PARENT_NOT_BATCH"


class DuplicateAddress(SpoqError):
    code = "DUPLICATE_ADDRESS"


class DuplicateUser(SpoqError):
    code = "DUPLICATE_USER"


class DuplicateTransaction(SpoqError):
    code = "DUPLICATE_TRANSACTION"


class EmptySplit(SpoqError):
    code = "EMPTY_SPLIT"


class MalformedTransaction(SpoqError):
    code = "MALFORMED_TRANSACTION"


# storage
class WriteDenied(SpoqError):
    code = "WRITE_DENIED"


class PolicyInvalid(SpoqError):
    code = "POLICY_INVALID"


class NonceUnknownOrConsumed(SpoqError):
    code = "NONCE_INVALID"


class KeyMismatch(SpoqError):
    code = "KEY_MISMATCH"


class AssetLinkMissing(SpoqError):
    code = "ASSET_LINK_MISSING"


# verification
class UnknownFingerprintType(SpoqError):
    code = "UNKNOWN_FINGERPRINT_TYPE"


class StorageUnreadable(SpoqError):
    code = "STORAGE_UNREADABLE"


# efficiency
class ScenarioInvalid(SpoqError):
    code = "SCENARIO_INVALID"


class EmptyInput(SpoqError):
    code = "EMPTY_INPUT"
