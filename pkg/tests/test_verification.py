import random

import pytest

from hierarchy import HierarchyBuilder
from oracles import brute_force_origin
from spoq import crypto
from spoq.errors import UnknownFingerprintType
from spoq.model import BARCODE, ZK_PUF, AssetKind, Fingerprint, derive_ledger_address
from spoq.storage import Credentials
from spoq.verification import (
    BarcodeScanner, Check, ComponentIndex, MockPufDevice, OriginVerifier, TrailNode,
    fingerprint_enroll, fingerprint_verify, origin, verify_asset,
)
from world import World


def test_lifecycle_verifies(world):
    root, sub, product = world.lifecycle()
    report = verify_asset(product, world.ledger, world.router)
    assert report.passed
    assert [report.hash_ok, report.signature_ok, report.role_ok, report.origin_ok] == [Check.PASS] * 4
    assert report.fingerprint_ok == Check.SKIPPED
    assert report.origin_trail == [root, sub, product]


def test_root_batch_verifies(world):
    root, _, _ = world.lifecycle()
    report = verify_asset(root, world.ledger, world.router)
    assert report.passed and report.origin_trail == [root]


def test_split_sub_batch_alone_fails_origin(world):
    # the parent batch lists products, not the freshly written sub-batch entry
    root, sub, _ = world.lifecycle()
    report = verify_asset(sub, world.ledger, world.router)
    assert report.origin_ok == Check.FAIL and report.origin_trail == []


def test_tampered_storage(world):
    _, _, product = world.lifecycle()
    addr = world.ledger.query_asset(product).storage.address
    world.store.replace_raw(addr, world.store.get_raw(addr) + b"\x00")
    report = verify_asset(product, world.ledger, world.router)
    assert report.hash_ok == Check.FAIL and not report.passed


def test_unregistered_signer(world):
    mallory = crypto.keygen(world.rng)
    entry = world.product_entry(author="AcmeCo", signer=mallory)
    asset = world.create(AssetKind.PRODUCT, world.put(entry))
    report = verify_asset(asset, world.ledger, world.router)
    assert report.signature_ok == Check.FAIL
    assert report.role_ok == Check.FAIL


def test_root_author_without_producer_role(world):
    # intermediary-authored batch registered by a producer
    entry = world.batch_entry([world.put(world.product_entry())], author="Shipper", signer=world.intermediary)
    asset = world.create(AssetKind.BATCH, world.put(entry))
    report = verify_asset(asset, world.ledger, world.router)
    assert report.signature_ok == Check.PASS and report.role_ok == Check.FAIL


def test_unknown_asset(world):
    report = verify_asset(derive_ledger_address("asset", b"x"), world.ledger, world.router)
    assert not report.passed and "LedgerUnreachable" in report.diagnostics[0]


def test_unreadable_storage(world):
    key = crypto.new_access_key(world.rng)
    asset = world.create(AssetKind.PRODUCT, world.put(world.product_entry(), key=key))
    report = verify_asset(asset, world.ledger, world.router)
    assert report.hash_ok == Check.FAIL
    assert any("StorageUnreadable" in d for d in report.diagnostics)
    ok = verify_asset(asset, world.ledger, world.router, Credentials(encryption_keys=[key]))
    assert ok.passed


def test_leaf_from_other_producer_fails(world):
    other = world.register("OtherCo", ["producer"])
    foreign = world.put(world.product_entry(author="OtherCo", signer=other))
    batch = world.create(AssetKind.BATCH, world.put(world.batch_entry([foreign])), owner=world.intermediary)
    leaf = world.publish_component(batch, foreign, world.intermediary)
    report = verify_asset(leaf, world.ledger, world.router)
    assert report.origin_ok == Check.FAIL


def test_component_index_resolves_unpublished_parent(world):
    product_ref = world.put(world.product_entry())
    batch_entry = world.batch_entry([product_ref])
    batch_ref = world.put(batch_entry)
    index = ComponentIndex()
    index.add_bytes(batch_ref.address, world.store.get_raw(batch_ref.address))
    node = TrailNode(product_ref, world.store.get_raw(product_ref.address))
    ok, trail = origin(node, [], world.ledger, world.router, index=index)
    assert ok and [n.ref for n in trail] == [batch_ref, product_ref]
    # without the index the product is its own root
    ok, trail = origin(node, [], world.ledger, world.router)
    assert ok and len(trail) == 1


def test_origin_cycle_guard(world):
    # content addressing rules out real cycles; forge an index that has one
    a_ref = world.put(world.product_entry())
    b_ref = world.put(world.batch_entry([a_ref]))
    a = TrailNode(a_ref, world.store.get_raw(a_ref.address))
    b = TrailNode(b_ref, world.store.get_raw(b_ref.address))
    index = ComponentIndex()
    index._by_component = {a_ref.address: [b], b_ref.address: [a]}
    verifier = OriginVerifier(world.ledger, world.router, index=index)
    assert verifier.origin(a) == (False, [])
    assert any("cycle" in d for d in verifier.diagnostics)


def test_report_serialization(world):
    _, _, product = world.lifecycle()
    report = verify_asset(product, world.ledger, world.router)
    obj = report.to_obj()
    assert obj["verdict"] == "pass" and obj["origin_trail"][-1] == product
    assert report.to_cbor()
    assert "verdict         PASS" in report.text()


# -- fingerprints -----------------------------------------------------------

def test_puf_roundtrip(rng):
    device = MockPufDevice(rng=rng)
    fp = fingerprint_enroll(device)
    assert fp.header == ZK_PUF
    assert fingerprint_verify(fp, device, rng)


def test_puf_clone_rejected(rng):
    genuine = MockPufDevice(rng=rng)
    fp = fingerprint_enroll(genuine)
    assert not fingerprint_verify(fp, MockPufDevice(rng=rng), rng)


def test_puf_replayed_proof_rejected(rng):
    device = MockPufDevice(rng=rng)
    fp = fingerprint_enroll(device)
    recorded = device.request(bytes(32))

    class Replayer:
        def request(self, challenge):
            return recorded

    assert not fingerprint_verify(fp, Replayer(), rng)


def test_puf_soundness_structure(rng):
    # an adversary holding only the commitment must guess a 32-byte challenge
    from spoq.verification import PUF_CHALLENGE_LEN
    assert PUF_CHALLENGE_LEN == 32
    device = MockPufDevice(rng=rng)
    seen = []

    class Spy:
        def request(self, challenge):
            seen.append(challenge)
            return device.request(challenge)

    fingerprint_verify(fingerprint_enroll(device), Spy(), random.Random(1))
    fingerprint_verify(fingerprint_enroll(device), Spy(), random.Random(2))
    assert len(seen[0]) == 32 and seen[0] != seen[1]


def test_puf_malformed_proofs(rng):
    device = MockPufDevice(rng=rng)
    fp = fingerprint_enroll(device)
    for junk in (b"", b"\x00" * 65, b"\x02" + bytes(64)):
        assert not fingerprint_verify(fp, BarcodeScanner(junk), rng)


def test_barcode():
    fp = Fingerprint(BARCODE, b"4006381333931")
    assert fingerprint_verify(fp, BarcodeScanner(b"4006381333931"))
    assert not fingerprint_verify(fp, BarcodeScanner(b"4006381333932"))


def test_unknown_fingerprint_type():
    fp = Fingerprint(BARCODE, b"x")
    object.__setattr__(fp, "header", b"ABCD")
    with pytest.raises(UnknownFingerprintType):
        fingerprint_verify(fp, BarcodeScanner(b"x"))


def test_verify_with_fingerprint(world):
    device = MockPufDevice(rng=world.rng)
    entry = world.product_entry(fingerprint=fingerprint_enroll(device))
    asset = world.create(AssetKind.PRODUCT, world.put(entry))
    assert verify_asset(asset, world.ledger, world.router, device=device, rng=world.rng).fingerprint_ok == Check.PASS
    clone = MockPufDevice(rng=world.rng)
    report = verify_asset(asset, world.ledger, world.router, device=clone, rng=world.rng)
    assert report.fingerprint_ok == Check.FAIL and not report.passed


def test_random_hierarchies_agree_with_oracle():
    w = World(seed=11)
    builder = HierarchyBuilder(w, random.Random(11))
    for _ in range(60):
        truth, addrs = builder.build()
        for nid, addr in addrs.items():
            v = OriginVerifier(w.ledger, w.router)
            ok, trail = v.origin(v.node_for_asset(addr))
            assert ok == brute_force_origin(nid, truth)
            assert (trail == []) == (not ok)
