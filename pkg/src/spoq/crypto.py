"""Group arithmetic, Schnorr and AOS ring signatures, AES-256-GCM.

The group is secp256k1 (33-byte compressed points), driven through
libsecp256k1 via coincurve.  Scalars are plain Python ints in [1, N).
Every hash-to-challenge is domain separated by one of the TAG_* strings.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass

from coincurve import PublicKey
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import AuthFailed, BadIndex, EmptyRing, InvalidKey

N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141

TAG_SIG = b"spoq/sig"
TAG_RING = b"spoq/ring"
TAG_ADDR = b"spoq/addr"
TAG_PUF = b"spoq/puf"

POINT_LEN = 33
SCALAR_LEN = 32
SIGNATURE_LEN = POINT_LEN + SCALAR_LEN
AEAD_NONCE_LEN = 12
ACCESS_KEY_LEN = 32


def random_bytes(n, rng=None):
    """``n`` random bytes from ``rng`` (anything with ``randbytes``) or the OS."""
    if rng is None:
        return secrets.token_bytes(n)
    return rng.randbytes(n)


def random_scalar(rng=None):
    while True:
        k = int.from_bytes(random_bytes(SCALAR_LEN, rng), "big")
        if 0 < k < N:
            return k


def scalar_bytes(k):
    return (k % N).to_bytes(SCALAR_LEN, "big")


def tagged_hash(tag, *parts):
    h = hashlib.sha256()
    h.update(len(tag).to_bytes(1, "big") + tag)
    for p in parts:
        h.update(len(p).to_bytes(4, "big"))
        h.update(p)
    return h.digest()


def hash_to_scalar(tag, *parts):
    return int.from_bytes(tagged_hash(tag, *parts), "big") % N


# -- points -----------------------------------------------------------------

def load_point(data):
    try:
        if len(data) != POINT_LEN:
            raise ValueError("bad length")
        return PublicKey(bytes(data))
    except (ValueError, TypeError) as exc:
        raise InvalidKey(f"not a compressed group element: {exc}") from None


def is_valid_point(data):
    try:
        load_point(data)
    except InvalidKey:
        return False
    return True


def base_mul(k):
    return PublicKey.from_secret(scalar_bytes(k))


def lincomb(s, c, point):
    """s*G + c*P, or None when the result is the point at infinity."""
    terms = []
    if s % N:
        terms.append(base_mul(s))
    if c % N:
        terms.append(point.multiply(scalar_bytes(c)))
    if not terms:
        return None
    if len(terms) == 1:
        return terms[0]
    try:
        return PublicKey.combine_keys(terms)
    except ValueError:
        return None


def public_key(secret):
    return base_mul(secret).format(compressed=True)


@dataclass(frozen=True)
class KeyPair:
    secret: int
    public: bytes

    def __repr__(self):
        return f"KeyPair(public={self.public.hex()})"


def keygen(rng=None):
    secret = random_scalar(rng)
    return KeyPair(secret, public_key(secret))


def keypair_from_secret(secret):
    if not 0 < secret < N:
        raise InvalidKey("secret scalar out of range")
    return KeyPair(secret, public_key(secret))


# -- Schnorr signatures -----------------------------------------------------

def sign(message, secret, rng=None, public=None):
    """Schnorr signature ``R || s`` (65 bytes) with s*G = R + e*P.

    ``public`` may be passed to skip recomputing the signer's key.
    """
    pub = public or public_key(secret)
    while True:
        k = hash_to_scalar(TAG_SIG + b"/nonce", scalar_bytes(secret), message,
                           random_bytes(32, rng))
        if k == 0:
            continue
        r_point = public_key(k)
        e = hash_to_scalar(TAG_SIG, r_point, pub, message)
        s = (k + e * secret) % N
        if s:
            return r_point + scalar_bytes(s)


def verify(signature, message, public):
    """True iff ``signature`` was made over ``message`` by the owner of ``public``.

    Raises InvalidKey when ``public`` is not a group element; a malformed
    signature simply fails.
    """
    pub_point = load_point(public)
    if len(signature) != SIGNATURE_LEN:
        return False
    r_bytes, s = signature[:POINT_LEN], int.from_bytes(signature[POINT_LEN:], "big")
    if not 0 < s < N:
        return False
    e = hash_to_scalar(TAG_SIG, r_bytes, bytes(public), message)
    # s*G - e*P must equal R; an R that is not a valid encoding never matches
    lhs = lincomb(s, N - e, pub_point)
    return lhs is not None and lhs.format(compressed=True) == r_bytes


# -- AOS ring signatures ----------------------------------------------------

def canonical_ring(ring):
    return sorted({bytes(k) for k in ring})


def ring_commitment(ring):
    return tagged_hash(TAG_RING + b"/members", *canonical_ring(ring))


@dataclass(frozen=True)
class RingSignature:
    ring_commitment: bytes
    challenge_seed: bytes
    responses: tuple

    def to_obj(self):
        return {
            "ring": self.ring_commitment,
            "c0": self.challenge_seed,
            "s": [scalar_bytes(s) for s in self.responses],
        }

    @classmethod
    def from_obj(cls, obj):
        return cls(bytes(obj["ring"]), bytes(obj["c0"]),
                   tuple(int.from_bytes(s, "big") for s in obj["s"]))


def _ring_challenge(commitment, message, point):
    return hash_to_scalar(TAG_RING, commitment, message,
                          point.format(compressed=True))


def ring_sign(message, ring, secret, signer_index, rng=None):
    """AOS 1-of-n signature over ``message`` for the member set ``ring``.

    ``signer_index`` points into ``ring`` as given; members are deduplicated
    and sorted before signing so the signature does not depend on the order
    the caller listed them in.
    """
    if not ring:
        raise EmptyRing("ring has no members")
    if not 0 <= signer_index < len(ring):
        raise BadIndex(f"signer index {signer_index} outside ring of {len(ring)}")
    me = public_key(secret)
    if bytes(ring[signer_index]) != me:
        raise InvalidKey("ring member at signer_index does not match the secret")
    members = canonical_ring(ring)
    points = [load_point(m) for m in members]
    n = len(members)
    pi = members.index(me)
    commitment = ring_commitment(members)

    while True:
        c = [0] * n
        s = [0] * n
        alpha = random_scalar(rng)
        c[(pi + 1) % n] = _ring_challenge(commitment, message, base_mul(alpha))
        ok = True
        for step in range(1, n):
            i = (pi + step) % n
            s[i] = random_scalar(rng)
            point = lincomb(s[i], c[i], points[i])
            if point is None:
                ok = False
                break
            c[(i + 1) % n] = _ring_challenge(commitment, message, point)
        s[pi] = (alpha - c[pi] * secret) % N
        if ok and s[pi] and c[0]:
            return RingSignature(commitment, scalar_bytes(c[0]), tuple(s))


def ring_verify(sig, message, ring):
    members = canonical_ring(ring)
    if not members or len(sig.responses) != len(members):
        return False
    if sig.ring_commitment != ring_commitment(members):
        return False
    c0 = int.from_bytes(sig.challenge_seed, "big")
    if len(sig.challenge_seed) != SCALAR_LEN or not 0 < c0 < N:
        return False
    try:
        points = [load_point(m) for m in members]
    except InvalidKey:
        return False
    c = c0
    for s_i, p_i in zip(sig.responses, points):
        if not 0 < s_i < N:
            return False
        point = lincomb(s_i, c, p_i)
        if point is None:
            return False
        c = _ring_challenge(sig.ring_commitment, message, point)
    return c == c0


# -- authenticated encryption -----------------------------------------------

def new_access_key(rng=None):
    return random_bytes(ACCESS_KEY_LEN, rng)


def aead_encrypt(plaintext, key, associated_data=b"", nonce=None, rng=None):
    """AES-256-GCM; returns ``nonce || ciphertext || tag``."""
    if len(key) != ACCESS_KEY_LEN:
        raise InvalidKey("AEAD key must be 32 bytes")
    if nonce is None:
        nonce = random_bytes(AEAD_NONCE_LEN, rng)
    return nonce + AESGCM(bytes(key)).encrypt(nonce, plaintext, associated_data)


def aead_decrypt(ciphertext, key, associated_data=b""):
    if len(key) != ACCESS_KEY_LEN:
        raise InvalidKey("AEAD key must be 32 bytes")
    if len(ciphertext) < AEAD_NONCE_LEN + 16:
        raise AuthFailed("ciphertext too short")
    nonce, body = ciphertext[:AEAD_NONCE_LEN], ciphertext[AEAD_NONCE_LEN:]
    try:
        return AESGCM(bytes(key)).decrypt(nonce, body, associated_data)
    except InvalidTag:
        raise AuthFailed("authentication tag mismatch") from None
