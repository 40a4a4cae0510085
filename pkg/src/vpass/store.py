"""Account store shared by the auth server and the recovery flows, and its JSON file form."""

from __future__ import annotations

import base64
import json
import os
import tempfile
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable

from vpass.core import ALPHABETS, Alphabet, ContractError, CredentialError, SecretCredential, format_digits, parse_digits
from vpass.envelope import KeyPair, format_timestamp, parse_timestamp

FORMAT_VERSION = 1
SCHEMES = ("ORIG", "ORIG-ENC-C", "MOD")
TOKEN_KINDS = ("RESET-SECOND-PASSWORD", "RESET-PRIMARY-CREDENTIAL")


class StoreError(Exception):
    pass


class StoreFormatError(StoreError):
    """The store file is malformed; ``where`` names the offending field or line."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


class StoreVersionError(StoreError):
    pass


def utc_now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


@dataclass
class CUsageEntry:
    c: int
    used_at: datetime


@dataclass
class ResetToken:
    token: str
    kind: str
    issued_at: datetime
    used: bool = False


@dataclass
class OutboxMessage:
    to: str
    token: str
    kind: str
    sent_at: datetime


@dataclass
class RecoveryFields:
    secondary_email: str | None = None
    second_password: str | None = None
    pending_tokens: list[ResetToken] = field(default_factory=list)

    @property
    def configured(self) -> bool:
        return self.secondary_email is not None


@dataclass
class AccountRecord:
    username: str
    credential: SecretCredential
    alphabet_id: str
    scheme: str
    c_history: list[CUsageEntry] = field(default_factory=list)
    recovery: RecoveryFields = field(default_factory=RecoveryFields)
    outbox: list[OutboxMessage] = field(default_factory=list)


@dataclass
class SessionState:
    session_id: str
    username: str
    issued_salt: tuple[int, ...] | None
    issued_at: datetime
    consumed: bool = False


class Store:
    """In-memory state plus a single-writer lock.

    Mutating operations take ``lock`` for their whole check-and-commit and
    then call :meth:`commit`, which runs the persistence hook if any.
    """

    def __init__(self, alphabets: dict[str, str] | None = None, server_key: KeyPair | None = None):
        self.alphabets = dict(alphabets) if alphabets is not None else {k: a.symbols for k, a in ALPHABETS.items()}
        self.accounts: dict[str, AccountRecord] = {}
        self.server_key = server_key
        self.sessions: dict[str, SessionState] = {}
        self.lock = threading.RLock()
        self.response_computations = 0
        self.on_commit: Callable[[Store], None] | None = None

    def alphabet(self, alphabet_id: str) -> Alphabet:
        try:
            return Alphabet(self.alphabets[alphabet_id])
        except KeyError:
            raise ContractError(f"unknown alphabet {alphabet_id!r}") from None

    def account(self, username: str) -> AccountRecord:
        try:
            return self.accounts[username]
        except KeyError:
            raise KeyError(username) from None

    def commit(self):
        if self.on_commit is not None:
            self.on_commit(self)

    def persistent_state(self) -> dict:
        """Everything save/load round-trips; used for equality checks."""
        return to_document(self)

    def replace_persistent(self, other: "Store"):
        """Adopt ``other``'s persistent fields, keeping live sessions and hooks."""
        with self.lock:
            self.alphabets = other.alphabets
            self.accounts = other.accounts
            self.server_key = other.server_key


# -- file form -------------------------------------------------------------

def _ts(d: datetime) -> str:
    return format_timestamp(d)


def to_document(store: Store) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "alphabets": dict(store.alphabets),
        "accounts": [],
    }
    if store.server_key is not None:
        k = store.server_key
        doc["server_key"] = {
            "cipher_id": k.cipher_id,
            "public": base64.b64encode(k.public_part).decode("ascii"),
            "private": base64.b64encode(k.private_part).decode("ascii"),
        }
    for acct in store.accounts.values():
        rec = acct.recovery
        doc["accounts"].append({
            "username": acct.username,
            "alphabet_id": acct.alphabet_id,
            "scheme": acct.scheme,
            "credential": {
                "digits": format_digits(acct.credential.digits),
                "multiplier": acct.credential.multiplier,
            },
            "c_history": [{"c": e.c, "used_at": _ts(e.used_at)} for e in acct.c_history],
            "recovery": {
                "secondary_email": rec.secondary_email,
                "second_password": rec.second_password,
                "pending_tokens": [
                    {"token": t.token, "kind": t.kind, "issued_at": _ts(t.issued_at), "used": t.used}
                    for t in rec.pending_tokens
                ],
            },
            "outbox": [
                {"to": m.to, "token": m.token, "kind": m.kind, "sent_at": _ts(m.sent_at)} for m in acct.outbox
            ],
        })
    return doc


def dumps(store: Store) -> str:
    return json.dumps(to_document(store), indent=2, sort_keys=False) + "\n"


def save_store(store: Store, path) -> None:
    """Write atomically: temp file in the same directory, then rename."""
    text = dumps(store)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".store-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_store(path) -> Store:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())


def loads(text: str) -> Store:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StoreFormatError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return from_document(doc)


class _Reader:
    def __init__(self, obj, where):
        if not isinstance(obj, dict):
            raise StoreFormatError(where, "expected an object")
        self.obj, self.where = obj, where

    def get(self, key, kind, optional=False):
        where = f"{self.where}.{key}" if self.where else key
        if key not in self.obj:
            if optional:
                return None
            raise StoreFormatError(where, "missing field")
        value = self.obj[key]
        if value is None and optional:
            return None
        if kind is int and isinstance(value, bool) or not isinstance(value, kind):
            raise StoreFormatError(where, f"expected {kind.__name__}")
        return value

    def sub(self, key):
        return _Reader(self.get(key, dict), f"{self.where}.{key}" if self.where else key)


def _parse_ts(text, where) -> datetime:
    try:
        return parse_timestamp(text)
    except ValueError as exc:
        raise StoreFormatError(where, str(exc)) from None


def from_document(doc) -> Store:
    top = _Reader(doc, "")
    version = top.get("format_version", int)
    if version != FORMAT_VERSION:
        raise StoreVersionError(f"unsupported format_version {version} (expected {FORMAT_VERSION})")
    alphabets = top.get("alphabets", dict)
    for name, symbols in alphabets.items():
        if not isinstance(symbols, str):
            raise StoreFormatError(f"alphabets.{name}", "expected string")
        try:
            Alphabet(symbols)
        except ContractError as exc:
            raise StoreFormatError(f"alphabets.{name}", str(exc)) from None
    server_key = None
    if top.get("server_key", dict, optional=True) is not None:
        sk = top.sub("server_key")
        try:
            server_key = KeyPair(
                base64.b64decode(sk.get("public", str), validate=True),
                base64.b64decode(sk.get("private", str), validate=True),
                sk.get("cipher_id", str),
            )
        except ValueError:
            raise StoreFormatError("server_key", "invalid base64") from None
    store = Store(alphabets, server_key)
    accounts = top.get("accounts", list)
    for i, raw in enumerate(accounts):
        acct = _read_account(_Reader(raw, f"accounts[{i}]"), alphabets)
        if acct.username in store.accounts:
            raise StoreFormatError(f"accounts[{i}].username", f"duplicate username {acct.username!r}")
        store.accounts[acct.username] = acct
    return store


def _read_account(r: _Reader, alphabets) -> AccountRecord:
    username = r.get("username", str)
    alphabet_id = r.get("alphabet_id", str)
    if alphabet_id not in alphabets:
        raise StoreFormatError(f"{r.where}.alphabet_id", f"unknown alphabet {alphabet_id!r}")
    scheme = r.get("scheme", str)
    if scheme not in SCHEMES:
        raise StoreFormatError(f"{r.where}.scheme", f"unknown scheme {scheme!r}")
    cr = r.sub("credential")
    try:
        digits = parse_digits(cr.get("digits", str))
    except ValueError as exc:
        raise StoreFormatError(f"{cr.where}.digits", str(exc)) from None
    try:
        credential = SecretCredential(digits, cr.get("multiplier", int), len(alphabets[alphabet_id]))
    except CredentialError as exc:
        raise StoreFormatError(cr.where, str(exc)) from None
    history = []
    for j, e in enumerate(r.get("c_history", list)):
        er = _Reader(e, f"{r.where}.c_history[{j}]")
        c = er.get("c", int)
        if not 0 <= c < credential.modulus:
            raise StoreFormatError(f"{er.where}.c", f"{c} outside [0, {credential.modulus})")
        history.append(CUsageEntry(c, _parse_ts(er.get("used_at", str), f"{er.where}.used_at")))
    rr = r.sub("recovery")
    recovery = RecoveryFields(rr.get("secondary_email", str, optional=True), rr.get("second_password", str, optional=True))
    if (recovery.secondary_email is None) != (recovery.second_password is None):
        raise StoreFormatError(rr.where, "secondary_email and second_password must be set together")
    for j, t in enumerate(rr.get("pending_tokens", list)):
        tr = _Reader(t, f"{rr.where}.pending_tokens[{j}]")
        kind = tr.get("kind", str)
        if kind not in TOKEN_KINDS:
            raise StoreFormatError(f"{tr.where}.kind", f"unknown token kind {kind!r}")
        recovery.pending_tokens.append(
            ResetToken(tr.get("token", str), kind, _parse_ts(tr.get("issued_at", str), f"{tr.where}.issued_at"), tr.get("used", bool))
        )
    outbox = []
    for j, m in enumerate(r.get("outbox", list)):
        mr = _Reader(m, f"{r.where}.outbox[{j}]")
        outbox.append(OutboxMessage(
            mr.get("to", str), mr.get("token", str), mr.get("kind", str),
            _parse_ts(mr.get("sent_at", str), f"{mr.where}.sent_at"),
        ))
    return AccountRecord(username, credential, alphabet_id, scheme, history, recovery, outbox)
