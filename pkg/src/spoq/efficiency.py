"""Transaction and storage cost of batch-based vs product-wise tracing.

Two routes to the same numbers: closed-form counts plus a calibrated byte
model, and a simulation that drives a real ledger through the lifecycle and
reads its metrics.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

from . import crypto
from . import ledger as lg
from .errors import EmptyInput, ScenarioInvalid
from .model import (
    CONTENT_ADDRESSED, ActionEntry, AddressKind, AssetEntry, AssetKind, BatchEntry,
    ProductEntry, Role, StorageRef, canonical_serialize, decode, derive_ledger_address, encode,
)
from .storage.local import ContentStore

TABLE3_PRODUCTS = (50, 100, 150, 200)


class Mode(str, enum.Enum):
    PRODUCT_WISE = "product-wise"
    BATCHED = "batched"


class Source(str, enum.Enum):
    ANALYTIC = "analytic"
    MEASURED = "measured"


@dataclass(frozen=True)
class LifecycleScenario:
    p: int = 50
    b1: int = 1
    b2: int = 10
    a1: int = 10
    o1: int = 10
    a2: int = 10
    o2: int = 10

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or v < 0:
                raise ScenarioInvalid(f"{f.name} must be a non-negative integer, got {v!r}")
        if self.b2 > 0 and self.p < self.b2:
            raise ScenarioInvalid(f"cannot split {self.p} products into {self.b2} non-empty sub-batches")

    def with_(self, **changes):
        return LifecycleScenario(**{**asdict(self), **changes})

    def to_obj(self):
        return asdict(self)

    def to_cbor(self):
        return encode(self.to_obj())

    @classmethod
    def from_obj(cls, obj):
        unknown = set(obj) - {f.name for f in fields(cls)}
        if unknown:
            raise ScenarioInvalid(f"unknown scenario keys {sorted(unknown)}")
        return cls(**{k: int(v) for k, v in obj.items()})

    @classmethod
    def from_text(cls, text):
        """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
        obj = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ScenarioInvalid(f"expected key=value, got {line!r}")
            try:
                obj[key.strip()] = int(value.strip())
            except ValueError:
                raise ScenarioInvalid(f"{key.strip()} is not an integer") from None
        return cls.from_obj(obj)

    @classmethod
    def from_bytes(cls, data):
        try:
            obj = decode(data)
        except Exception:
            obj = None
        if isinstance(obj, dict):
            return cls.from_obj(obj)
        return cls.from_text(data.decode("utf-8"))


# -- closed-form counts -----------------------------------------------------

def tx_ex(s):
    return s.p * (1 + s.a1 + s.o1 + s.a2 + s.o2)


def tx_spoq(s):
    head = s.b1 * (1 + s.a1 + s.o1)
    if s.b2 != 0:
        return head + s.b2 * (1 + s.a2 + s.o2)
    return head + s.b1 * (s.a2 + s.o2)


# -- storage model ----------------------------------------------------------

def cbor_head_len(n):
    """Bytes taken by a CBOR major-type head carrying length ``n``."""
    if n < 24:
        return 1
    if n < 0x100:
        return 2
    if n < 0x10000:
        return 3
    if n < 0x100000000:
        return 5
    return 9


@dataclass(frozen=True)
class Calibration:
    """Per-item asset-entry sizes measured from the canonical encoder."""

    base_product: int
    base_batch: int
    parent_extra: int
    action: int
    owner: int

    @classmethod
    def measure(cls):
        owner = crypto.keygen().public
        ref = StorageRef.for_bytes(CONTENT_ADDRESSED, b"calibration")
        parent = derive_ledger_address(AddressKind.ASSET, b"calibration")

        def size(kind=AssetKind.PRODUCT, actions=0, owners=1, with_parent=False):
            entry = AssetEntry(kind, ref, (owner,) * owners, (ref,) * actions,
                               parent if with_parent else None)
            return len(canonical_serialize(entry))

        base = size()
        return cls(
            base_product=base,
            base_batch=size(AssetKind.BATCH),
            parent_extra=size(with_parent=True) - base,
            action=size(actions=1) - base,
            owner=size(owners=2) - base,
        )

    def entry_size(self, kind, n_actions, n_owners, with_parent=False):
        base = self.base_batch if AssetKind(kind) == AssetKind.BATCH else self.base_product
        return (base
                + (self.parent_extra if with_parent else 0)
                + n_actions * self.action + cbor_head_len(n_actions) - cbor_head_len(0)
                + (n_owners - 1) * self.owner + cbor_head_len(n_owners) - cbor_head_len(1))


_CALIBRATION = None


def default_calibration():
    global _CALIBRATION
    if _CALIBRATION is None:
        _CALIBRATION = Calibration.measure()
    return _CALIBRATION


def storage_model(s, calib=None):
    """(stor_ex, stor_spoq) in bytes at the end of the lifecycle."""
    calib = calib or default_calibration()
    stor_ex = s.p * calib.entry_size(AssetKind.PRODUCT, s.a1 + s.a2, 1 + s.o1 + s.o2)
    if s.b2 == 0:
        root = calib.entry_size(AssetKind.BATCH, s.a1 + s.a2, 1 + s.o1 + s.o2)
        return stor_ex, s.b1 * root
    root = calib.entry_size(AssetKind.BATCH, s.a1, 1 + s.o1)
    sub = calib.entry_size(AssetKind.BATCH, s.a2, 1 + s.o2, with_parent=True)
    return stor_ex, s.b1 * root + s.b2 * sub


# -- reports ----------------------------------------------------------------

@dataclass(frozen=True)
class CostReport:
    scenario: LifecycleScenario
    tx_ex: int
    tx_spoq: int
    stor_ex: int
    stor_spoq: int
    source: Source = Source.ANALYTIC
    label: str = ""

    @property
    def factor_tx(self):
        return Fraction(self.tx_ex, self.tx_spoq) if self.tx_spoq else None

    @property
    def factor_stor(self):
        return Fraction(self.stor_ex, self.stor_spoq) if self.stor_spoq else None


def analytic_report(s, calib=None):
    stor_ex, stor_spoq = storage_model(s, calib)
    return CostReport(s, tx_ex(s), tx_spoq(s), stor_ex, stor_spoq, Source.ANALYTIC)


# -- lifecycle schedule -----------------------------------------------------

def _interleave(actions, transfers):
    """Alternate actions and transfers, starting with an action."""
    out = []
    while actions or transfers:
        if actions:
            out.append("action")
            actions -= 1
        if transfers:
            out.append("transfer")
            transfers -= 1
    return out


def lifecycle_events(s):
    """Logical events in time order; the x-axis of the cumulative curves."""
    events = ["register"] + _interleave(s.a1, s.o1)
    if s.b2:
        events.append("split")
    return events + _interleave(s.a2, s.o2)


def cumulative_series(s, calib=None):
    """One analytic CostReport per lifecycle event, accumulated."""
    calib = calib or default_calibration()
    tx = [0, 0]
    # entry groups: n entries, each with "a" actions and "o" owners
    ex = {"n": s.p, "a": 0, "o": 1}
    root = {"n": s.b1, "a": 0, "o": 1}
    sub = {"n": s.b2, "a": 0, "o": 1}
    split_done = False
    out = []
    for i, ev in enumerate(lifecycle_events(s)):
        if ev == "register":
            tx[0] += s.p
            tx[1] += s.b1
        elif ev == "split":
            tx[1] += s.b2
            split_done = True
        else:
            key = "a" if ev == "action" else "o"
            ex[key] += 1
            tx[0] += s.p
            target = sub if split_done else root
            target[key] += 1
            tx[1] += target["n"]
        stor_ex = s.p * calib.entry_size(AssetKind.PRODUCT, ex["a"], ex["o"])
        stor_spoq = s.b1 * calib.entry_size(AssetKind.BATCH, root["a"], root["o"])
        if split_done:
            stor_spoq += s.b2 * calib.entry_size(AssetKind.BATCH, sub["a"], sub["o"], with_parent=True)
        out.append(CostReport(s, tx[0], tx[1], stor_ex, stor_spoq, Source.ANALYTIC, f"{i}:{ev}"))
    return out


# -- simulation -------------------------------------------------------------

@dataclass
class Measurement:
    mode: Mode
    transactions: int
    storage_bytes: int
    ledger: lg.Ledger


class _Sim:
    def __init__(self, rng=None):
        self.rng = rng
        self.consortium = crypto.keygen(rng)
        self.ledger = lg.Ledger(self.consortium.public)
        self.store = ContentStore()
        self.producer = crypto.keygen(rng)
        self.intermediary = crypto.keygen(rng)
        self._submit(lg.Transaction.build(
            lg.register_user("producer", [Role.PRODUCER], self.producer.public),
            lg.register_user("intermediary", [Role.INTERMEDIARY], self.intermediary.public),
            rng=rng).consortium_signed(self.consortium, rng))

    def _submit(self, tx):
        return self.ledger.submit(tx)

    def put(self, entry):
        data = canonical_serialize(entry)
        self.store.put(data)
        return StorageRef.for_bytes(CONTENT_ADDRESSED, data)

    def keys(self, n):
        return [crypto.keygen(self.rng) for _ in range(n)]

    def create(self, kind, ref, owner):
        tx = lg.Transaction.build(lg.create_asset(kind, ref, owner.public), rng=self.rng)
        tx = tx.role_signed(Role.PRODUCER, self.ledger.role_keys(Role.PRODUCER), self.producer, self.rng)
        return self._submit(tx).results[0]

    def split(self, parent, ref, owner, parent_owner):
        tx = lg.Transaction.build(lg.split_batch(parent, [(ref, owner.public)]), rng=self.rng)
        tx = tx.role_signed(Role.INTERMEDIARY, self.ledger.role_keys(Role.INTERMEDIARY),
                            self.intermediary, self.rng)
        return self._submit(tx.owner_signed(parent_owner, self.rng)).results[0][0]

    def run_events(self, asset, events, owners, start):
        """Apply ``events`` to ``asset`` owned by ``owners[start]``; returns new index."""
        idx = start
        for ev in events:
            if ev == "action":
                entry = ActionEntry(name="event", author_name="owner", asset=asset,
                                    nonce=crypto.random_bytes(32, self.rng))
                call = lg.log_action(asset, self.put(entry))
                tx = lg.Transaction.build(call, rng=self.rng).owner_signed(owners[idx], self.rng)
            else:
                call = lg.transfer_ownership(asset, owners[idx + 1].public)
                tx = lg.Transaction.build(call, rng=self.rng).owner_signed(owners[idx], self.rng)
                idx += 1
            self._submit(tx)
        return idx


def _owner_chain(sim, transfers):
    return sim.keys(transfers + 1)


def _product_entries(sim, n):
    return [ProductEntry(name=f"product {i}", author_name="producer",
                         nonce=crypto.random_bytes(32, sim.rng)).signed(sim.producer.secret, sim.rng)
            for i in range(n)]


def run_simulation(s, mode, rng=None):
    """Drive a fresh ledger through the lifecycle of ``s`` in ``mode``.

    Each logical event is its own transaction.  The returned counts cover
    the lifecycle only; user registration is excluded.
    """
    mode = Mode(mode)
    if s.b1 < 1 or s.p < s.b1 or (s.b2 and s.p < s.b2):
        raise ScenarioInvalid("scenario needs b1 >= 1 and enough products for every batch")
    sim = _Sim(rng)
    start_tx = sim.ledger.metrics.transaction_count
    phase1 = _interleave(s.a1, s.o1)
    phase2 = _interleave(s.a2, s.o2)
    products = [sim.put(e) for e in _product_entries(sim, s.p)]

    if mode == Mode.PRODUCT_WISE:
        owners = _owner_chain(sim, s.o1 + s.o2)
        for ref in products:
            addr = sim.create(AssetKind.PRODUCT, ref, owners[0])
            idx = sim.run_events(addr, phase1, owners, 0)
            sim.run_events(addr, phase2, owners, idx)
    else:
        roots = []
        groups = [products[i::s.b1] for i in range(s.b1)]
        for i, group in enumerate(groups):
            batch = BatchEntry(name=f"batch {i}", author_name="producer", components=group,
                               nonce=crypto.random_bytes(32, sim.rng)).signed(sim.producer.secret, sim.rng)
            owners = _owner_chain(sim, s.o1 + (s.o2 if not s.b2 else 0))
            # the owner at split time must be the registered intermediary
            owners[s.o1] = sim.intermediary
            addr = sim.create(AssetKind.BATCH, sim.put(batch), owners[0])
            idx = sim.run_events(addr, phase1, owners, 0)
            roots.append((addr, group, owners, idx))
        if s.b2 == 0:
            for addr, _, owners, idx in roots:
                sim.run_events(addr, phase2, owners, idx)
        else:
            for j in range(s.b2):
                addr, group, owners, idx = roots[j % s.b1]
                siblings = len(range(j % s.b1, s.b2, s.b1))
                share = group[j // s.b1::siblings]
                sub_entry = BatchEntry(name=f"sub-batch {j}", author_name="intermediary",
                                       components=share, nonce=crypto.random_bytes(32, sim.rng))
                sub_entry = sub_entry.signed(sim.intermediary.secret, sim.rng)
                sub_owners = _owner_chain(sim, s.o2)
                sub = sim.split(addr, sim.put(sub_entry), sub_owners[0], owners[idx])
                sim.run_events(sub, phase2, sub_owners, 0)

    m = sim.ledger.metrics
    return Measurement(mode, m.transaction_count - start_tx, m.asset_bytes, sim.ledger)


def measured_report(s, rng=None, ex=None):
    """Measured costs of ``s``.

    ``ex`` may carry an earlier product-wise Measurement of the same
    lifecycle; that mode ignores b2, so sweeps over b2 can share it.
    """
    ex = ex or run_simulation(s, Mode.PRODUCT_WISE, rng)
    spoq = run_simulation(s, Mode.BATCHED, rng)
    return CostReport(s, ex.transactions, spoq.transactions, ex.storage_bytes,
                      spoq.storage_bytes, Source.MEASURED)


# -- sweeps and CSV ---------------------------------------------------------

def table3(source=Source.ANALYTIC, products=TABLE3_PRODUCTS, base=None, rng=None):
    """Reports for every (p, b2) cell of the efficiency table."""
    base = base or LifecycleScenario()
    out = []
    product_wise = {}
    for b2 in (10, 0):
        for p in products:
            s = base.with_(p=p, b2=b2)
            if Source(source) == Source.MEASURED:
                if p not in product_wise:
                    product_wise[p] = run_simulation(s, Mode.PRODUCT_WISE, rng)
                out.append(measured_report(s, rng, product_wise[p]))
            else:
                out.append(analytic_report(s))
    return out


def figure6(products=TABLE3_PRODUCTS, base=None):
    """Cumulative per-event curves for each product volume."""
    base = base or LifecycleScenario()
    out = []
    for p in products:
        out.extend(cumulative_series(base.with_(p=p)))
    return out


def figure7(products=TABLE3_PRODUCTS, actions=range(0, 51), base=None):
    """End-of-lifecycle costs as a function of x = a1 = a2."""
    base = base or LifecycleScenario()
    out = []
    for p in products:
        for b2 in (10, 0):
            for x in actions:
                s = base.with_(p=p, b2=b2, a1=x, a2=x)
                r = analytic_report(s)
                out.append(CostReport(s, r.tx_ex, r.tx_spoq, r.stor_ex, r.stor_spoq,
                                      r.source, f"x={x}"))
    return out


def _fmt(frac):
    return "" if frac is None else f"{float(frac):.6f}"


CSV_COLUMNS = ["event_index", "event", "p", "b1", "b2", "a1", "o1", "a2", "o2", "source",
               "tx_ex", "tx_spoq", "stor_ex", "stor_spoq", "factor_tx", "factor_stor"]


def emit_report(reports):
    """CSV (RFC 4180, UTF-8, header row) for a list of CostReports."""
    reports = list(reports)
    if not reports:
        raise EmptyInput("no reports to emit")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        index, _, event = r.label.partition(":") if ":" in r.label else ("", "", r.label)
        s = r.scenario
        writer.writerow([index, event, s.p, s.b1, s.b2, s.a1, s.o1, s.a2, s.o2,
                         Source(r.source).value, r.tx_ex, r.tx_spoq, r.stor_ex, r.stor_spoq,
                         _fmt(r.factor_tx), _fmt(r.factor_stor)])
    return buf.getvalue().encode("utf-8")
