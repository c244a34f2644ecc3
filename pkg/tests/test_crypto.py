import hashlib
import random

import pytest
from hypothesis import given, settings, strategies as st

from spoq import crypto
from spoq.errors import AuthFailed, BadIndex, EmptyRing, InvalidKey


def test_sha256_empty_vector():
    assert hashlib.sha256(b"").hexdigest() == (
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855")


def test_aes_gcm_empty_plaintext_vector():
    # McGrew-Viega test case 13: zero key, zero IV, empty plaintext
    out = crypto.aead_encrypt(b"", bytes(32), nonce=bytes(12))
    assert out[12:].hex() == "530f8afbc74536b9a963b4f1c4cb738b"


def test_aes_gcm_one_block_vector():
    # test case 14: one zero block
    out = crypto.aead_encrypt(bytes(16), bytes(32), nonce=bytes(12))
    body = out[12:]
    assert body[:16].hex() == "cea7403d4d606b6e074ec5d3baf39d18"
    assert body[16:].hex() == "d0d1c8a799996bf0265b98b5d48ab919"
    assert crypto.aead_decrypt(out, bytes(32)) == bytes(16)


def test_aead_rejects_wrong_key_and_ad(rng):
    key = crypto.new_access_key(rng)
    ct = crypto.aead_encrypt(b"payload", key, b"addr", rng=rng)
    with pytest.raises(AuthFailed):
        crypto.aead_decrypt(ct, crypto.new_access_key(rng), b"addr")
    with pytest.raises(AuthFailed):
        crypto.aead_decrypt(ct, key, b"other")
    with pytest.raises(AuthFailed):
        crypto.aead_decrypt(ct[:20], key, b"addr")
    with pytest.raises(InvalidKey):
        crypto.aead_encrypt(b"x", b"short")


def test_sign_verify_roundtrip(rng):
    kp = crypto.keygen(rng)
    sig = crypto.sign(b"msg", kp.secret, rng)
    assert len(sig) == crypto.SIGNATURE_LEN
    assert crypto.verify(sig, b"msg", kp.public)
    assert not crypto.verify(sig, b"msh", kp.public)
    assert not crypto.verify(sig, b"msg", crypto.keygen(rng).public)
    assert not crypto.verify(sig[:-1], b"msg", kp.public)


def test_signature_matches_explicit_equation(rng):
    # independent check of s*G == R + e*P using raw group operations
    kp = crypto.keygen(rng)
    sig = crypto.sign(b"m", kp.secret, rng)
    r, s = sig[:33], int.from_bytes(sig[33:], "big")
    e = int.from_bytes(crypto.tagged_hash(crypto.TAG_SIG, r, kp.public, b"m"), "big") % crypto.N
    lhs = crypto.base_mul(s).format()
    from coincurve import PublicKey
    rhs = PublicKey.combine_keys([PublicKey(r), crypto.load_point(kp.public).multiply(e.to_bytes(32, "big"))])
    assert lhs == rhs.format()


def test_verify_rejects_bad_public_key(rng):
    kp = crypto.keygen(rng)
    sig = crypto.sign(b"m", kp.secret, rng)
    with pytest.raises(InvalidKey):
        crypto.verify(sig, b"m", b"\x02" + bytes(32))


def test_keypair_from_secret_range():
    with pytest.raises(InvalidKey):
        crypto.keypair_from_secret(0)
    with pytest.raises(InvalidKey):
        crypto.keypair_from_secret(crypto.N)


def test_tagged_hash_is_domain_separated():
    assert crypto.tagged_hash(b"a", b"x") != crypto.tagged_hash(b"b", b"x")
    # length prefixes keep part boundaries unambiguous
    assert crypto.tagged_hash(b"a", b"ab", b"c") != crypto.tagged_hash(b"a", b"a", b"bc")


@pytest.mark.parametrize("n", [1, 2, 5])
def test_ring_sign_any_member(rng, n):
    keys = [crypto.keygen(rng) for _ in range(n)]
    ring = [k.public for k in keys]
    for i, kp in enumerate(keys):
        sig = crypto.ring_sign(b"tx", ring, kp.secret, i, rng)
        assert crypto.ring_verify(sig, b"tx", ring)
        assert crypto.ring_verify(sig, b"tx", list(reversed(ring)))
        assert not crypto.ring_verify(sig, b"ty", ring)


def test_ring_verify_fails_for_other_ring(rng):
    keys = [crypto.keygen(rng) for _ in range(3)]
    ring = [k.public for k in keys]
    sig = crypto.ring_sign(b"tx", ring, keys[0].secret, 0, rng)
    assert not crypto.ring_verify(sig, b"tx", ring[:2])
    assert not crypto.ring_verify(sig, b"tx", ring + [crypto.keygen(rng).public])


def test_ring_signature_tamper(rng):
    keys = [crypto.keygen(rng) for _ in range(3)]
    ring = [k.public for k in keys]
    sig = crypto.ring_sign(b"tx", ring, keys[1].secret, 1, rng)
    bad = crypto.RingSignature(sig.ring_commitment, sig.challenge_seed,
                               (sig.responses[0] ^ 1,) + sig.responses[1:])
    assert not crypto.ring_verify(bad, b"tx", ring)
    assert crypto.RingSignature.from_obj(sig.to_obj()) == sig


def test_ring_sign_errors(rng):
    kp = crypto.keygen(rng)
    with pytest.raises(EmptyRing):
        crypto.ring_sign(b"m", [], kp.secret, 0)
    with pytest.raises(BadIndex):
        crypto.ring_sign(b"m", [kp.public], kp.secret, 3)
    with pytest.raises(InvalidKey):
        crypto.ring_sign(b"m", [crypto.keygen(rng).public], kp.secret, 0)


def test_non_member_cannot_forge_by_guessing(rng):
    keys = [crypto.keygen(rng) for _ in range(2)]
    outsider = crypto.keygen(rng)
    sig = crypto.ring_sign(b"m", [k.public for k in keys] + [outsider.public], outsider.secret, 2, rng)
    assert not crypto.ring_verify(sig, b"m", [k.public for k in keys])


@settings(max_examples=25, deadline=None)
@given(msg=st.binary(max_size=64), seed=st.integers(0, 2**32))
def test_sign_verify_property(msg, seed):
    r = random.Random(seed)
    kp = crypto.keygen(r)
    assert crypto.verify(crypto.sign(msg, kp.secret, r), msg, kp.public)


@settings(max_examples=25, deadline=None)
@given(data=st.binary(max_size=128), ad=st.binary(max_size=32), seed=st.integers(0, 2**32))
def test_aead_roundtrip_property(data, ad, seed):
    r = random.Random(seed)
    key = crypto.new_access_key(r)
    assert crypto.aead_decrypt(crypto.aead_encrypt(data, key, ad, rng=r), key, ad) == data
