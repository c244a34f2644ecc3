import dataclasses
import hashlib

import pytest
from hypothesis import given, settings, strategies as st

from oracles import sha256 as ref_sha256
from spoq import crypto
from spoq.errors import DecodeError, EmptySeed, InvalidEntry, UnknownBackend
from spoq.model import (
    BARCODE, CONTENT_ADDRESSED, HTTP_SERVER, NAMESPACE, ZK_PUF, ActionEntry, AddressKind,
    AssetEntry, AssetKind, BatchEntry, Fingerprint, ProductEntry, Role, StorageEntry, StorageRef,
    UserEntry, canonical_serialize, derive_ledger_address, derive_storage_address, deserialize,
    entry_hash,
)

PUB = crypto.keypair_from_secret(12345).public
REF = StorageRef.for_bytes(CONTENT_ADDRESSED, b"entry")
LEDGER_ADDR = derive_ledger_address(AddressKind.ASSET, b"seed")

# minimal AssetEntry size, frozen once measured with the canonical encoder
MINIMAL_ASSET_BYTES = 157


def test_oracle_sha256_matches_known_vectors():
    assert ref_sha256(b"").hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    assert ref_sha256(b"abc").hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


def test_entry_hash_empty():
    assert entry_hash(b"").hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


@pytest.mark.parametrize("data", [b"", b"a", b"x" * 55, b"x" * 56, b"y" * 64, bytes(range(200))])
def test_entry_hash_agrees_with_reference(data):
    assert entry_hash(data) == ref_sha256(data)


def test_bit_flip_changes_hash():
    assert entry_hash(b"\x00") != entry_hash(b"\x01")


def test_namespace_constant():
    assert NAMESPACE == ref_sha256(b"spoqchain")[:3]


def test_ledger_address_layout():
    addr = derive_ledger_address(AddressKind.ASSET, b"seed")
    assert len(addr) == 35 and addr[:3] == NAMESPACE
    assert addr == derive_ledger_address("asset", b"seed")
    assert addr[3:] == ref_sha256(b"asset\x00seed")


def test_ledger_address_kinds_differ():
    a = derive_ledger_address(AddressKind.ASSET, b"s")
    u = derive_ledger_address(AddressKind.USER, b"s")
    assert a[3:] != u[3:]
    assert u[3:] == ref_sha256(b"user\x00s")


def test_empty_seed_rejected():
    with pytest.raises(EmptySeed):
        derive_ledger_address(AddressKind.ASSET, b"")


def test_storage_address_layout():
    data = b"fixed test bytes"
    a = derive_storage_address(CONTENT_ADDRESSED, data)
    b = derive_storage_address(HTTP_SERVER, data)
    assert len(a) == 32 and a[:2] == CONTENT_ADDRESSED
    assert a[2:] == b[2:] == ref_sha256(data)[:30]
    assert a[:2] != b[:2]
    with pytest.raises(UnknownBackend):
        derive_storage_address(b"\x99\x99", data)


def test_storage_ref_validation():
    with pytest.raises(InvalidEntry):
        StorageRef(REF.address, b"short")
    with pytest.raises(UnknownBackend):
        StorageRef(b"\x09\x09" + bytes(30), bytes(32))
    with pytest.raises(InvalidEntry):
        StorageRef(b"\x00\x01", bytes(32))


def test_minimal_asset_entry_size():
    entry = AssetEntry(AssetKind.PRODUCT, REF, (PUB,))
    size = len(canonical_serialize(entry))
    assert size == MINIMAL_ASSET_BYTES
    assert abs(size - 182) <= 0.25 * 182


def test_serialization_deterministic():
    entry = AssetEntry(AssetKind.BATCH, REF, (PUB, PUB), (REF,), LEDGER_ADDR)
    assert canonical_serialize(entry) == canonical_serialize(entry)
    assert deserialize(canonical_serialize(entry), AssetEntry) == entry


def test_map_keys_sorted_canonically():
    data = canonical_serialize(AssetEntry(AssetKind.PRODUCT, REF, (PUB,)))
    # canonical CBOR orders keys by encoded length then bytewise: "kind" first
    assert data[1:6] == b"\x64kind"


def test_asset_entry_invariants():
    with pytest.raises(InvalidEntry):
        AssetEntry(AssetKind.PRODUCT, REF, ())
    with pytest.raises(InvalidEntry):
        AssetEntry(AssetKind.PRODUCT, REF, (PUB,), parent=b"bad")
    assert AssetEntry(AssetKind.PRODUCT, REF, (PUB, b"x" * 33)).current_owner == b"x" * 33


def test_user_entry():
    user = UserEntry("AcmeCo", {"producer"}, PUB)
    assert user.has_role(Role.PRODUCER) and not user.has_role(Role.INTERMEDIARY)
    assert not dataclasses.replace(user, revoked=True).has_role(Role.PRODUCER)
    assert deserialize(canonical_serialize(user), UserEntry) == user
    with pytest.raises(InvalidEntry):
        UserEntry("x", set(), PUB)
    with pytest.raises(InvalidEntry):
        UserEntry("x", {"producer"}, b"\x02" + bytes(32))


def test_fingerprint_header_registered():
    Fingerprint(BARCODE, b"123")
    Fingerprint(ZK_PUF, PUB)
    with pytest.raises(InvalidEntry):
        Fingerprint(b"XXXX", b"")


def test_storage_entry_variants_roundtrip():
    entries = [
        ProductEntry(name="p", author_name="a", nonce=bytes(32), fingerprint=Fingerprint(BARCODE, b"1"),
                     components=(LEDGER_ADDR,)),
        BatchEntry(name="b", author_name="a", nonce=bytes(32), components=(REF,)),
        ActionEntry(name="x", author_name="a", nonce=bytes(32), asset=LEDGER_ADDR, data=b"d"),
    ]
    for e in entries:
        assert deserialize(canonical_serialize(e), StorageEntry) == e


def test_storage_entry_invariants():
    with pytest.raises(InvalidEntry):
        ProductEntry(name="p", author_name="a", nonce=bytes(31))
    with pytest.raises(InvalidEntry):
        BatchEntry(name="b", author_name="a", components=())
    assert len(ProductEntry(name="p", author_name="a").nonce) == 32


def test_nonce_makes_entries_distinct():
    a = ProductEntry(name="p", author_name="a", nonce=bytes(32))
    b = ProductEntry(name="p", author_name="a", nonce=b"\x01" + bytes(31))
    assert canonical_serialize(a) != canonical_serialize(b)


def test_signature_covers_all_fields(rng):
    kp = crypto.keygen(rng)
    entry = BatchEntry(name="b", author_name="a", data=b"d", nonce=bytes(32), components=(REF,)).signed(kp.secret, rng)
    assert entry.verify_signature(kp.public)
    for change in ({"name": "c"}, {"author_name": "z"}, {"data": b"e"}, {"nonce": b"\x07" * 32}):
        assert not dataclasses.replace(entry, **change).verify_signature(kp.public)
    assert not dataclasses.replace(entry, signature=None).verify_signature(kp.public)


def test_deserialize_rejects_garbage():
    with pytest.raises(DecodeError):
        deserialize(b"\xff\xff", AssetEntry)
    with pytest.raises(DecodeError):
        deserialize(canonical_serialize(UserEntry("x", {"producer"}, PUB)), AssetEntry)
    with pytest.raises(DecodeError):
        deserialize(b"\xa1\x64type\x63bad", StorageEntry)


def test_sizes_grow_by_fixed_steps():
    base = AssetEntry(AssetKind.PRODUCT, REF, (PUB,))
    one_action = dataclasses.replace(base, actions=(REF,))
    two_owners = dataclasses.replace(base, owners=(PUB, PUB))
    size = lambda e: len(canonical_serialize(e))
    assert size(one_action) - size(base) == 82
    assert size(two_owners) - size(base) == 35
    assert size(dataclasses.replace(base, parent=LEDGER_ADDR)) - size(base) == 36


_bytes32 = st.binary(min_size=32, max_size=32)
_refs = st.builds(lambda b: StorageRef.for_bytes(CONTENT_ADDRESSED, b), st.binary(max_size=16))
_laddr = st.builds(lambda b: derive_ledger_address(AddressKind.ASSET, b), st.binary(min_size=1, max_size=8))


@settings(max_examples=60, deadline=None)
@given(kind=st.sampled_from(AssetKind), storage=_refs, n_owners=st.integers(1, 4),
       actions=st.lists(_refs, max_size=4), parent=st.none() | _laddr)
def test_asset_entry_roundtrip(kind, storage, n_owners, actions, parent):
    entry = AssetEntry(kind, storage, (PUB,) * n_owners, tuple(actions), parent)
    data = canonical_serialize(entry)
    assert deserialize(data, AssetEntry) == entry
    assert canonical_serialize(deserialize(data, AssetEntry)) == data


@settings(max_examples=60, deadline=None)
@given(name=st.text(max_size=12), author=st.text(max_size=12), data=st.binary(max_size=32),
       nonce=_bytes32, comps=st.lists(_refs, min_size=1, max_size=5))
def test_batch_entry_roundtrip(name, author, data, nonce, comps):
    entry = BatchEntry(name=name, author_name=author, data=data, nonce=nonce, components=comps)
    assert deserialize(canonical_serialize(entry), StorageEntry) == entry


@settings(max_examples=40, deadline=None)
@given(seed=st.binary(min_size=1, max_size=40))
def test_ledger_address_matches_reference(seed):
    addr = derive_ledger_address(AddressKind.ASSET, seed)
    assert addr == NAMESPACE + hashlib.sha256(b"asset\x00" + seed).digest()
