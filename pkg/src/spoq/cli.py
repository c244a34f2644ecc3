"""Command-line front end.

Every subcommand is a thin wrapper over one library operation.  State lives
in three places: the ledger chain file, a content-addressed blob directory,
and the client keystore.  Secrets (identity scalars, access keys, PUF
secrets) are only ever read from files named on the command line or in the
environment, never from argv itself.

Exit codes: 0 success, 1 domain error (the stable error code is printed on
stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, crypto
from . import efficiency as eff
from . import ledger as lg
from .errors import InvalidKey, NotFound, SpoqError
from .model import (
    BARCODE, CONTENT_ADDRESSED, ActionEntry, AssetKind, BatchEntry, Fingerprint, ProductEntry,
    Role, StorageEntry, StorageRef, canonical_serialize, check_ledger_address,
    check_storage_address, deserialize, encode, entry_hash,
)
from .storage import (
    AccessPolicy, ContentStore, Credentials, HttpStorageClient, Keystore, KeystoreRecord,
    StorageRouter, StorageServer, serve, sign_write,
)
from .verification import (
    BarcodeScanner, ComponentIndex, MockPufDevice, fingerprint_enroll, verify_asset,
)

DEFAULT_LEDGER = "spoq-ledger.cbor"
DEFAULT_KEYSTORE = "spoq-keystore.sqlite"
DEFAULT_STORE = "spoq-store"


class CliError(SpoqError):
    code = "CLI_ERROR"


class VerificationFailed(SpoqError):
    code = "VERIFICATION_FAILED"


# -- key material -----------------------------------------------------------

def _read_text(path):
    try:
        return Path(path).read_text().strip()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None


def _hex(text, what):
    try:
        return bytes.fromhex(text.strip())
    except ValueError:
        raise CliError(f"{what} is not valid hex") from None


def load_identity(path):
    """KeyPair from a file holding the secret scalar as hex."""
    secret = int.from_bytes(_hex(_read_text(path), "identity file"), "big")
    return crypto.keypair_from_secret(secret)


def write_identity(path, keypair):
    path = Path(path)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "w") as fh:
        fh.write(crypto.scalar_bytes(keypair.secret).hex() + "\n")
    pub = path.with_name(path.name + ".pub")
    pub.write_text(keypair.public.hex() + "\n")
    return pub


def parse_public_key(value):
    """Hex public key, or a path to a file containing one."""
    text = _read_text(value) if Path(value).is_file() else value
    key = _hex(text, "public key")
    if not crypto.is_valid_point(key):
        raise InvalidKey("not a compressed secp256k1 public key")
    return key


def _secret_bytes(path, length, what):
    data = _hex(_read_text(path), what)
    if len(data) != length:
        raise CliError(f"{what} must be {length} bytes")
    return data


def _ledger_addr(text):
    return check_ledger_address(_hex(text, "ledger address"))


def _storage_addr(text):
    return check_storage_address(_hex(text, "storage address"))


# -- context ----------------------------------------------------------------

class Context:
    """Resolved paths plus lazily opened ledger, store and keystore."""

    def __init__(self, args):
        self.args = args
        self.ledger_path = args.ledger or os.environ.get("SPOQ_LEDGER") or DEFAULT_LEDGER
        self.keystore_path = args.keystore or os.environ.get("SPOQ_KEYSTORE") or DEFAULT_KEYSTORE
        self.store_path = args.store or os.environ.get("SPOQ_STORE") or DEFAULT_STORE
        self.identity_path = args.identity or os.environ.get("SPOQ_IDENTITY")
        self.server_url = args.server or os.environ.get("SPOQ_SERVER")
        self._ledger = None
        self._keystore = None

    @property
    def ledger(self):
        if self._ledger is None:
            if not Path(self.ledger_path).exists():
                raise NotFound(f"no ledger at {self.ledger_path}; run 'spoq consortium init' first")
            self._ledger = lg.Ledger.load(self.ledger_path)
        return self._ledger

    @property
    def keystore(self):
        if self._keystore is None:
            self._keystore = Keystore(self.keystore_path)
        return self._keystore

    @property
    def store(self):
        return ContentStore(self.store_path)

    def identity(self):
        if not self.identity_path:
            raise CliError("no identity: pass --identity FILE or set SPOQ_IDENTITY")
        return load_identity(self.identity_path)

    def author_name(self, keypair):
        for user in self.ledger.users.values():
            if user.public_key == keypair.public:
                return user.name
        raise CliError("identity is not a registered user")

    def credentials(self, identity=True):
        idents = [self.identity()] if identity and self.identity_path else []
        return Credentials.from_keystore(self.keystore, idents)

    def router(self):
        servers = {self.server_url: HttpStorageClient(self.server_url)} if self.server_url else {}
        return StorageRouter(self.store, servers)

    def close(self):
        if self._keystore is not None:
            self._keystore.close()


def _submit(ctx, tx):
    receipt = ctx.ledger.submit(tx)
    return receipt.results


def _put_entry(ctx, entry_bytes, keypair, encrypt=False, policy=None):
    """Store ``entry_bytes``; returns (StorageRef, encryption key or None)."""
    if ctx.server_url and policy is not None:
        client = HttpStorageClient(ctx.server_url)
        address = client.put_entry(entry_bytes, policy, keypair.public,
                                   sign_write(entry_bytes, policy, keypair))
        return StorageRef(address, entry_hash(entry_bytes)), None
    key = crypto.new_access_key() if encrypt else None
    address = ctx.store.put(entry_bytes, key)
    return StorageRef(address, entry_hash(entry_bytes)), key


def _policy(args):
    mode = getattr(args, "policy", None)
    if mode is None:
        return None
    if mode == "public":
        return AccessPolicy.public()
    if mode == "key":
        if not args.access_key_file:
            raise CliError("--policy key needs --access-key-file")
        return AccessPolicy.key_protected(_secret_bytes(args.access_key_file, 32, "access key"))
    if not args.policy_asset:
        raise CliError("--policy owner needs --policy-asset")
    return AccessPolicy.ownership_protected(_ledger_addr(args.policy_asset)).validate()


def _remember(ctx, asset, key, fingerprint_secret=None):
    if key is None and fingerprint_secret is None:
        return
    ctx.keystore.add(KeystoreRecord(asset, encryption_keys=(key,) if key else (),
                                    fingerprint_secret=fingerprint_secret))


def _fetch_entry(ctx, ref, creds):
    data = ctx.router().fetch(ref.address, creds)
    return data, deserialize(data, StorageEntry)


def _role_tx(ctx, tx, role, keypair):
    return tx.role_signed(role, ctx.ledger.role_keys(role), keypair)


# -- consortium -------------------------------------------------------------

def cmd_keygen(ctx, args):
    kp = crypto.keygen()
    pub = write_identity(args.out, kp)
    return {"public_key": kp.public, "identity_file": str(args.out), "public_file": str(pub)}


def cmd_consortium_init(ctx, args):
    key = parse_public_key(args.key) if args.key else ctx.identity().public
    if Path(ctx.ledger_path).exists() and not args.force:
        raise CliError(f"{ctx.ledger_path} already exists")
    ledger = lg.Ledger(key, ctx.ledger_path)
    return {"ledger": ctx.ledger_path, "genesis": ledger.chain[0].block_hash}


def cmd_consortium_register(ctx, args):
    key = parse_public_key(args.key)
    tx = lg.Transaction.build(lg.register_user(args.name, args.role, key))
    (addr,) = _submit(ctx, tx.consortium_signed(ctx.identity()))
    return {"user": addr}


def cmd_consortium_revoke(ctx, args):
    user = lg.user_address(parse_public_key(args.key))
    _submit(ctx, lg.Transaction.build(lg.revoke_user(user)).consortium_signed(ctx.identity()))
    return {"revoked": user}


# -- producer ---------------------------------------------------------------

def _fingerprint(args):
    if args.barcode:
        return Fingerprint(BARCODE, args.barcode.encode()), None
    if args.puf_secret_file:
        secret = int.from_bytes(_secret_bytes(args.puf_secret_file, 32, "PUF secret"), "big")
        return fingerprint_enroll(MockPufDevice(secret)), secret
    return None, None


def _read_data(path):
    if not path:
        return b""
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None


def cmd_publish_product(ctx, args):
    kp = ctx.identity()
    fp, puf_secret = _fingerprint(args)
    entry = ProductEntry(name=args.name, author_name=ctx.author_name(kp),
                         data=_read_data(args.data_file), fingerprint=fp).signed(kp.secret)
    ref, key = _put_entry(ctx, canonical_serialize(entry), kp, args.encrypt, _policy(args))
    owner = parse_public_key(args.owner) if args.owner else kp.public
    tx = lg.Transaction.build(lg.create_asset(AssetKind.PRODUCT, ref, owner))
    (addr,) = _submit(ctx, _role_tx(ctx, tx, Role.PRODUCER, kp))
    _remember(ctx, addr, key, puf_secret)
    return {"asset": addr, "storage": ref.address}


def cmd_publish_batch(ctx, args):
    kp = ctx.identity()
    author = ctx.author_name(kp)
    components = []
    for text in args.component or ():
        address = _storage_addr(text)
        data = ctx.router().fetch(address, ctx.credentials())
        components.append(StorageRef(address, entry_hash(data)))
    for i in range(args.products):
        product = ProductEntry(name=f"{args.name} item {i}", author_name=author).signed(kp.secret)
        components.append(_put_entry(ctx, canonical_serialize(product), kp)[0])
    if not components:
        raise CliError("a batch needs --component or --products")
    entry = BatchEntry(name=args.name, author_name=author, data=_read_data(args.data_file),
                       components=components).signed(kp.secret)
    ref, key = _put_entry(ctx, canonical_serialize(entry), kp, args.encrypt, _policy(args))
    owner = parse_public_key(args.owner) if args.owner else kp.public
    tx = lg.Transaction.build(lg.create_asset(AssetKind.BATCH, ref, owner))
    (addr,) = _submit(ctx, _role_tx(ctx, tx, Role.PRODUCER, kp))
    _remember(ctx, addr, key)
    return {"asset": addr, "storage": ref.address, "components": [c.address for c in components]}


# -- intermediary -----------------------------------------------------------

def _parent_components(ctx, parent, addresses):
    entry = ctx.ledger.query_asset(parent)
    _, batch = _fetch_entry(ctx, entry.storage, ctx.credentials())
    if not isinstance(batch, BatchEntry):
        raise CliError("parent storage entry is not a batch")
    refs = []
    for text in addresses:
        ref = batch.find_component(_storage_addr(text))
        if ref is None:
            raise CliError(f"{text} is not a component of the parent batch")
        refs.append(ref)
    return refs


def cmd_split(ctx, args):
    kp = ctx.identity()
    parent = _ledger_addr(args.parent)
    share = _parent_components(ctx, parent, args.component)
    entry = BatchEntry(name=args.name, author_name=ctx.author_name(kp),
                       components=share).signed(kp.secret)
    ref, key = _put_entry(ctx, canonical_serialize(entry), kp, args.encrypt, _policy(args))
    owner = parse_public_key(args.owner) if args.owner else kp.public
    tx = lg.Transaction.build(lg.split_batch(parent, [(ref, owner)]))
    tx = _role_tx(ctx, tx, Role.INTERMEDIARY, kp).owner_signed(kp)
    (subs,) = _submit(ctx, tx)
    _remember(ctx, subs[0], key)
    return {"asset": subs[0], "storage": ref.address}


def cmd_publish_component(ctx, args):
    kp = ctx.identity()
    parent = _ledger_addr(args.parent)
    (ref,) = _parent_components(ctx, parent, [args.component])
    owner = parse_public_key(args.owner) if args.owner else kp.public
    tx = lg.Transaction.build(lg.publish_component(parent, ref, owner, AssetKind(args.kind)))
    tx = _role_tx(ctx, tx, Role.INTERMEDIARY, kp).owner_signed(kp)
    (addr,) = _submit(ctx, tx)
    return {"asset": addr, "storage": ref.address}


# -- owner ------------------------------------------------------------------

def cmd_transfer(ctx, args):
    asset = _ledger_addr(args.asset)
    recipient = parse_public_key(args.to)
    _submit(ctx, lg.Transaction.build(lg.transfer_ownership(asset, recipient)).owner_signed(ctx.identity()))
    return {"asset": asset, "owner": recipient}


def cmd_log_action(ctx, args):
    kp = ctx.identity()
    asset = _ledger_addr(args.asset)
    ctx.ledger.query_asset(asset)
    entry = ActionEntry(name=args.name, author_name=args.author or ctx.author_name(kp),
                        data=_read_data(args.data_file), asset=asset).signed(kp.secret)
    ref, _ = _put_entry(ctx, canonical_serialize(entry), kp, policy=_policy(args))
    _submit(ctx, lg.Transaction.build(lg.log_action(asset, ref)).owner_signed(kp))
    return {"asset": asset, "action": ref.address}


# -- user -------------------------------------------------------------------

def _component_index(ctx, router, creds):
    index = ComponentIndex()
    for addr, entry in ctx.ledger.assets.items():
        if entry.kind != AssetKind.BATCH:
            continue
        try:
            index.add_bytes(entry.storage.address, router.fetch(entry.storage.address, creds), addr)
        except SpoqError:
            continue
    return index


def _device(ctx, args, asset):
    if args.scan is not None:
        return BarcodeScanner(args.scan.encode())
    if args.puf_secret_file:
        secret = int.from_bytes(_secret_bytes(args.puf_secret_file, 32, "PUF secret"), "big")
        return MockPufDevice(secret)
    try:
        secret = ctx.keystore.get(asset).fingerprint_secret
    except NotFound:
        return None
    return MockPufDevice(secret) if secret is not None else None


def cmd_verify(ctx, args):
    asset = _ledger_addr(args.asset)
    router = ctx.router()
    creds = ctx.credentials()
    report = verify_asset(asset, ctx.ledger, router, creds, _device(ctx, args, asset),
                          _component_index(ctx, router, creds))
    return report


def cmd_show(ctx, args):
    asset = _ledger_addr(args.asset)
    entry = ctx.ledger.query_asset(asset)
    out = {"asset": asset, **entry.to_obj(), "kind": entry.kind.value,
           "current_owner": entry.current_owner}
    try:
        _, stored = _fetch_entry(ctx, entry.storage, ctx.credentials())
        out["entry"] = stored.to_obj()
    except SpoqError as exc:
        out["entry"] = None
        out["entry_error"] = exc.code
    return out


# -- storage ----------------------------------------------------------------

class _LedgerFile:
    """Read-only ledger view that reloads the chain file when it changes."""

    def __init__(self, path):
        self.path = path
        self._stamp = None
        self._ledger = None

    def query_asset(self, addr):
        stamp = os.stat(self.path).st_mtime_ns
        if stamp != self._stamp:
            self._ledger, self._stamp = lg.Ledger.load(self.path), stamp
        return self._ledger.query_asset(addr)


def cmd_storage_serve(ctx, args):
    allow = [parse_public_key(k) for k in args.allow or ()]
    core = StorageServer(_LedgerFile(ctx.ledger_path), allow, public_actions=args.public_actions)
    httpd = serve(core, args.host, args.port)
    host, port = httpd.server_address[:2]
    print(f"serving on http://{host}:{port}", file=sys.stderr, flush=True)
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
    return None


def cmd_storage_put(ctx, args):
    data = _read_data(args.file)
    policy = _policy(args)
    if ctx.server_url:
        ref, _ = _put_entry(ctx, data, ctx.identity(), policy=policy or AccessPolicy.public())
        return {"storage": ref.address, "hash": ref.hash}
    if args.encryption_key_file:
        key = _secret_bytes(args.encryption_key_file, 32, "encryption key")
    else:
        key = None
    address = ctx.store.put(data, key)
    return {"storage": address, "hash": entry_hash(data)}


def cmd_storage_get(ctx, args):
    creds = ctx.credentials()
    if args.encryption_key_file:
        creds.encryption_keys.append(_secret_bytes(args.encryption_key_file, 32, "encryption key"))
    data = ctx.router().fetch(_storage_addr(args.address), creds)
    if args.out:
        Path(args.out).write_bytes(data)
        return {"storage": _storage_addr(args.address), "bytes": len(data)}
    return data


# -- eval -------------------------------------------------------------------

def _source(args):
    return eff.Source.MEASURED if args.measured else eff.Source.ANALYTIC


def cmd_eval_table3(ctx, args):
    return eff.emit_report(eff.table3(_source(args)))


def cmd_eval_figures(ctx, args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "figure6.csv").write_bytes(eff.emit_report(eff.figure6()))
    (out / "figure7.csv").write_bytes(eff.emit_report(eff.figure7()))
    return {"figure6": str(out / "figure6.csv"), "figure7": str(out / "figure7.csv")}


def cmd_eval_scenario(ctx, args):
    scenario = eff.LifecycleScenario.from_bytes(_read_data(args.file))
    report = (eff.measured_report(scenario) if args.measured else eff.analytic_report(scenario))
    return eff.emit_report([report])


# -- keystore ---------------------------------------------------------------

def cmd_keystore_add(ctx, args):
    access = [_secret_bytes(p, 32, "access key") for p in args.access_key_file or ()]
    enc = [_secret_bytes(p, 32, "encryption key") for p in args.encryption_key_file or ()]
    rec = ctx.keystore.add(KeystoreRecord(_ledger_addr(args.asset), tuple(access), tuple(enc),
                                          args.domain_hint))
    return {"asset": rec.asset, "access_keys": len(rec.access_keys),
            "encryption_keys": len(rec.encryption_keys), "domain_hint": rec.domain_hint}


def cmd_keystore_list(ctx, args):
    # key material itself is never printed
    return [{"asset": r.asset, "access_keys": len(r.access_keys),
             "encryption_keys": len(r.encryption_keys), "domain_hint": r.domain_hint,
             "fingerprint": r.fingerprint_secret is not None}
            for r in ctx.keystore.records()]


# -- output -----------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, bytes):
        return obj.hex()
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _text(obj, indent=""):
    if isinstance(obj, dict):
        lines = []
        for k, v in obj.items():
            if isinstance(v, (dict, list)) and v:
                lines.append(f"{indent}{k}:")
                lines.append(_text(v, indent + "  "))
            else:
                lines.append(f"{indent}{k}: {_jsonable(v) if v != [] else ''}")
        return "\n".join(lines)
    if isinstance(obj, list):
        return "\n".join(_text(v, indent) if isinstance(v, dict) else f"{indent}{_jsonable(v)}"
                         for v in obj)
    return f"{indent}{_jsonable(obj)}"


def _write_bytes(stdout, data, as_text):
    buf = getattr(stdout, "buffer", None)
    if buf is not None:
        stdout.flush()
        buf.write(data)
        buf.flush()
    else:
        # text-only stream (e.g. an in-memory capture)
        stdout.write(data.decode("utf-8") if as_text else data.hex() + "\n")


def emit(result, fmt, stdout):
    if result is None:
        return
    if isinstance(result, bytes):
        _write_bytes(stdout, result, as_text=result.isascii())
        return
    if hasattr(result, "to_obj"):
        obj = result.to_obj()
        text = result.text()
    else:
        obj = result
        text = _text(obj)
    if fmt == "cbor":
        _write_bytes(stdout, encode(obj), as_text=False)
    elif fmt == "json-text":
        stdout.write(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    else:
        stdout.write(text + "\n")


# -- parser -----------------------------------------------------------------

def _add_policy_flags(p):
    p.add_argument("--policy", choices=["public", "key", "owner"],
                   help="store on the --server under this access policy")
    p.add_argument("--access-key-file", help="file with the hex 32-byte access key (key policy)")
    p.add_argument("--policy-asset", help="governing asset address (owner policy)")


def build_parser():
    parser = argparse.ArgumentParser(prog="spoq", description="Batch-aware supply-chain tracing.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--ledger", help=f"chain file (env SPOQ_LEDGER, default {DEFAULT_LEDGER})")
    parser.add_argument("--keystore", help=f"keystore file (env SPOQ_KEYSTORE, default {DEFAULT_KEYSTORE})")
    parser.add_argument("--store", help=f"content-addressed blob directory (env SPOQ_STORE, default {DEFAULT_STORE})")
    parser.add_argument("--identity", help="file holding the caller's hex secret key (env SPOQ_IDENTITY)")
    parser.add_argument("--server", help="storage server base URL (env SPOQ_SERVER)")
    parser.add_argument("--format", choices=["text", "cbor", "json-text"], default="text",
                        help="output encoding (default text)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("keygen", help="create an identity key file and its .pub companion")
    p.add_argument("out", help="path of the secret key file to create")
    p.set_defaults(func=cmd_keygen)

    cons = sub.add_parser("consortium", help="ledger setup and user management")
    csub = cons.add_subparsers(dest="action", required=True, metavar="ACTION")
    p = csub.add_parser("init", help="create a ledger whose genesis names the consortium key")
    p.add_argument("--key", help="consortium public key (hex or file); default: the identity's")
    p.add_argument("--force", action="store_true", help="overwrite an existing chain file")
    p.set_defaults(func=cmd_consortium_init)
    p = csub.add_parser("register", help="register a user with one or more roles")
    p.add_argument("--name", required=True)
    p.add_argument("--role", required=True, action="append", choices=[r.value for r in Role])
    p.add_argument("--key", required=True, help="user public key (hex or .pub file)")
    p.set_defaults(func=cmd_consortium_register)
    p = csub.add_parser("revoke", help="revoke a registered user")
    p.add_argument("--key", required=True, help="user public key (hex or .pub file)")
    p.set_defaults(func=cmd_consortium_revoke)

    prod = sub.add_parser("producer", help="publish products and batches")
    psub = prod.add_subparsers(dest="action", required=True, metavar="ACTION")
    p = psub.add_parser("publish-product", help="store a signed product entry and create its asset")
    p.add_argument("--name", required=True)
    p.add_argument("--data-file")
    p.add_argument("--owner", help="initial owner public key; default: the identity")
    p.add_argument("--barcode", help="printed code to bind as the fingerprint")
    p.add_argument("--puf-secret-file", help="file with the hex secret of a mock ZK-PUF tag")
    p.add_argument("--encrypt", action="store_true", help="seal the entry; key goes to the keystore")
    _add_policy_flags(p)
    p.set_defaults(func=cmd_publish_product)
    p = psub.add_parser("publish-batch", help="store a signed batch entry and create its asset")
    p.add_argument("--name", required=True)
    p.add_argument("--component", action="append", help="storage address of a stored entry")
    p.add_argument("--products", type=int, default=0, help="generate this many product entries")
    p.add_argument("--data-file")
    p.add_argument("--owner")
    p.add_argument("--encrypt", action="store_true")
    _add_policy_flags(p)
    p.set_defaults(func=cmd_publish_batch)

    inter = sub.add_parser("intermediary", help="split batches and publish their components")
    isub = inter.add_subparsers(dest="action", required=True, metavar="ACTION")
    p = isub.add_parser("split", help="split a sub-batch off a batch you own")
    p.add_argument("parent", help="parent batch ledger address")
    p.add_argument("--component", required=True, action="append",
                   help="storage address from the parent's component list")
    p.add_argument("--name", default="sub-batch")
    p.add_argument("--owner")
    p.add_argument("--encrypt", action="store_true")
    _add_policy_flags(p)
    p.set_defaults(func=cmd_split)
    p = isub.add_parser("publish-component", help="give a batch component its own asset entry")
    p.add_argument("parent", help="parent batch ledger address")
    p.add_argument("--component", required=True, help="storage address from the parent's list")
    p.add_argument("--kind", choices=[k.value for k in AssetKind], default="product")
    p.add_argument("--owner")
    p.set_defaults(func=cmd_publish_component)

    own = sub.add_parser("owner", help="current-owner operations")
    osub = own.add_subparsers(dest="action", required=True, metavar="ACTION")
    p = osub.add_parser("transfer", help="hand an asset to a new owner")
    p.add_argument("asset")
    p.add_argument("--to", required=True, help="recipient public key (hex or .pub file)")
    p.set_defaults(func=cmd_transfer)
    p = osub.add_parser("log-action", help="record a signed action entry against an asset")
    p.add_argument("asset")
    p.add_argument("--name", required=True)
    p.add_argument("--data-file")
    p.add_argument("--author", help="author name stored in the entry; default: registered name")
    _add_policy_flags(p)
    p.set_defaults(func=cmd_log_action)

    def add_verify(p):
        p.add_argument("asset")
        p.add_argument("--scan", help="scanned barcode contents")
        p.add_argument("--puf-secret-file", help="mock ZK-PUF tag secret (hex file)")
        p.set_defaults(func=cmd_verify)

    user = sub.add_parser("user", help="inspect and verify assets")
    usub = user.add_subparsers(dest="action", required=True, metavar="ACTION")
    add_verify(usub.add_parser("verify", help="run the full verification pipeline"))
    p = usub.add_parser("show", help="print an asset entry and its storage entry")
    p.add_argument("asset")
    p.set_defaults(func=cmd_show)
    add_verify(sub.add_parser("verify", help="shorthand for 'user verify'"))

    stor = sub.add_parser("storage", help="storage backends")
    ssub = stor.add_subparsers(dest="action", required=True, metavar="ACTION")
    p = ssub.add_parser("serve", help="run the access-controlled HTTP storage server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8470)
    p.add_argument("--allow", action="append", help="writer public key (hex or .pub file)")
    p.add_argument("--public-actions", action="store_true",
                   help="let current owners store action entries")
    p.set_defaults(func=cmd_storage_serve)
    p = ssub.add_parser("put", help="store a file's bytes")
    p.add_argument("file")
    p.add_argument("--encryption-key-file", help="seal with this hex 32-byte key (local store)")
    _add_policy_flags(p)
    p.set_defaults(func=cmd_storage_put)
    p = ssub.add_parser("get", help="fetch an entry with the credentials you hold")
    p.add_argument("address")
    p.add_argument("--out", help="write the bytes here instead of stdout")
    p.add_argument("--encryption-key-file")
    p.set_defaults(func=cmd_storage_get)

    ev = sub.add_parser("eval", help="efficiency model and sweeps (CSV on stdout)")
    esub = ev.add_subparsers(dest="action", required=True, metavar="ACTION")
    p = esub.add_parser("table3", help="transaction and storage factors for p in 50..200")
    p.add_argument("--measured", action="store_true", help="drive real ledgers instead of the model")
    p.set_defaults(func=cmd_eval_table3)
    p = esub.add_parser("figures", help="write figure6.csv and figure7.csv")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_eval_figures)
    p = esub.add_parser("scenario", help="costs of one scenario file (key=value lines or CBOR)")
    p.add_argument("file")
    p.add_argument("--measured", action="store_true")
    p.set_defaults(func=cmd_eval_scenario)

    ks = sub.add_parser("keystore", help="client key material")
    ksub = ks.add_subparsers(dest="action", required=True, metavar="ACTION")
    p = ksub.add_parser("add", help="attach keys or a server hint to an asset")
    p.add_argument("asset")
    p.add_argument("--access-key-file", action="append")
    p.add_argument("--encryption-key-file", action="append")
    p.add_argument("--domain-hint")
    p.set_defaults(func=cmd_keystore_add)
    p = ksub.add_parser("list", help="list assets with stored key material")
    p.set_defaults(func=cmd_keystore_list)
    return parser


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    ctx = Context(args)
    try:
        result = args.func(ctx, args)
        emit(result, args.format, stdout)
        if args.func is cmd_verify and not result.passed:
            raise VerificationFailed("asset failed verification")
        return 0
    except SpoqError as exc:
        print(f"error: {exc.code}: {exc}", file=stderr)
        return 1
    finally:
        ctx.close()


if __name__ == "__main__":
    sys.exit(main())
