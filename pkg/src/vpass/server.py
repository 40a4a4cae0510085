"""Authentication service: registration, challenges, the three login paths and the c ledger.

Reason codes returned in :class:`LoginOutcome` are the wire protocol's
``REJECT`` reasons.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime, timedelta

from vpass.core import (
    ContractError,
    Response,
    Salt,
    SecretCredential,
    compute_response_original,
    random_salt,
    verify_modified,
    verify_original,
)
from vpass.envelope import (
    EnvelopeError,
    PayloadError,
    decode_c_payload,
    decode_salt_payload,
    open_envelope,
)
from vpass.store import SCHEMES, AccountRecord, CUsageEntry, RecoveryFields, SessionState, Store, utc_now

log = logging.getLogger(__name__)

FRESHNESS_WINDOW = timedelta(seconds=120)
SESSION_LIFETIME = timedelta(minutes=10)

BAD_SESSION = "BAD-SESSION"
BAD_RESPONSE = "BAD-RESPONSE"
BAD_ENVELOPE = "BAD-ENVELOPE"
STALE_TIMESTAMP = "STALE-TIMESTAMP"
REPLAYED_C = "REPLAYED-C"


class AuthError(Exception):
    """Domain error with a stable code, e.g. ``DUPLICATE-USER``."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


@dataclass
class LoginOutcome:
    accepted: bool
    reason: str | None = None
    c: int | None = None
    computations: int = 0
    detail: str = ""
    # ledger length before this login's own entry; set on accept
    prior_entries: int | None = None


def _reject(reason, detail="", computations=0):
    return LoginOutcome(False, reason, None, computations, detail)


def register(
    store: Store,
    username: str,
    credential: SecretCredential,
    alphabet_id: str,
    scheme: str,
    secondary_email: str | None = None,
    second_password: str | None = None,
) -> AccountRecord:
    if scheme not in SCHEMES:
        raise AuthError("BAD-SCHEME", f"scheme must be one of {', '.join(SCHEMES)}")
    if (secondary_email is None) != (second_password is None):
        raise AuthError("BAD-RECOVERY", "secondary email and second password are chosen together")
    alphabet = store.alphabet(alphabet_id)
    if credential.modulus != alphabet.size:
        raise AuthError("INVALID-CREDENTIAL", f"credential modulus {credential.modulus} != alphabet size {alphabet.size}")
    with store.lock:
        if username in store.accounts:
            raise AuthError("DUPLICATE-USER", username)
        acct = AccountRecord(username, credential, alphabet_id, scheme,
                             recovery=RecoveryFields(secondary_email, second_password))
        store.accounts[username] = acct
        store.commit()
    return acct


def _new_session_id(store: Store, rng) -> str:
    while True:
        sid = f"{rng.getrandbits(64):016x}"
        if sid not in store.sessions:
            return sid


def _prune_sessions(store: Store, now: datetime):
    dead = [sid for sid, s in store.sessions.items() if s.consumed or now - s.issued_at > SESSION_LIFETIME]
    for sid in dead:
        del store.sessions[sid]


def issue_challenge(store: Store, username: str, rng, clock=utc_now) -> SessionState:
    with store.lock:
        acct = store.accounts.get(username)
        if acct is None:
            raise AuthError("UNKNOWN-USER", username)
        now = clock()
        _prune_sessions(store, now)
        salt = None
        if acct.scheme != "MOD":
            salt = random_salt(acct.credential.n, store.alphabet(acct.alphabet_id), rng).digits
        session = SessionState(_new_session_id(store, rng), username, salt, now)
        store.sessions[session.session_id] = session
    return session


def _claim_session(store: Store, session_id: str, now: datetime, scheme: str):
    """Consume a live session of the given scheme; returns (session, account) or None."""
    session = store.sessions.get(session_id)
    if session is None or session.consumed:
        return None
    session.consumed = True
    if now - session.issued_at > SESSION_LIFETIME:
        return None
    acct = store.accounts.get(session.username)
    if acct is None or acct.scheme != scheme:
        return None
    return session, acct


def _used(acct: AccountRecord, c: int) -> bool:
    return any(e.c == c for e in acct.c_history)


def _record(store: Store, acct: AccountRecord, c: int, now: datetime):
    acct.c_history.append(CUsageEntry(c, now))
    store.commit()


def _response_or_none(acct: AccountRecord, digits) -> Response | None:
    cred = acct.credential
    if len(digits) != cred.n:
        return None
    try:
        return Response(tuple(digits), cred.modulus)
    except ContractError:
        return None


def verify_login_original(store: Store, session_id: str, response_digits, clock=utc_now) -> LoginOutcome:
    """Original scheme: scan all c, then refuse a c already in the ledger."""
    with store.lock:
        now = clock()
        claimed = _claim_session(store, session_id, now, "ORIG")
        if claimed is None:
            return _reject(BAD_SESSION)
        session, acct = claimed
        response = _response_or_none(acct, response_digits)
        if response is None:
            return _reject(BAD_RESPONSE, "length or range")
        cred = acct.credential
        verdict = verify_original(cred, Salt(session.issued_salt, cred.modulus), response)
        store.response_computations += verdict.computations
        if not verdict.accepted:
            return _reject(BAD_RESPONSE, computations=verdict.computations)
        if _used(acct, verdict.c):
            return _reject(REPLAYED_C, computations=verdict.computations)
        prior = len(acct.c_history)
        _record(store, acct, verdict.c, now)
        log.info("ORIG login accepted for %s", acct.username)
        return LoginOutcome(True, None, verdict.c, verdict.computations, prior_entries=prior)


def verify_login_enc_c(store: Store, session_id: str, response_digits, envelope, clock=utc_now) -> LoginOutcome:
    """Original scheme with c sealed alongside a timestamp: one computation, no scan."""
    with store.lock:
        now = clock()
        claimed = _claim_session(store, session_id, now, "ORIG-ENC-C")
        if claimed is None:
            return _reject(BAD_SESSION)
        session, acct = claimed
        cred = acct.credential
        if envelope is None or store.server_key is None:
            return _reject(BAD_ENVELOPE, "missing envelope")
        try:
            payload = decode_c_payload(open_envelope(store.server_key, envelope), cred.modulus)
        except (EnvelopeError, PayloadError) as exc:
            return _reject(BAD_ENVELOPE, str(exc))
        response = _response_or_none(acct, response_digits)
        if response is None:
            return _reject(BAD_RESPONSE, "length or range")
        if abs(now - payload.timestamp) > FRESHNESS_WINDOW:
            return _reject(STALE_TIMESTAMP)
        if _used(acct, payload.c):
            return _reject(REPLAYED_C)
        expected = compute_response_original(cred, Salt(session.issued_salt, cred.modulus), payload.c)
        store.response_computations += 1
        if expected != response:
            return _reject(BAD_RESPONSE, computations=1)
        prior = len(acct.c_history)
        _record(store, acct, payload.c, now)
        log.info("ORIG-ENC-C login accepted for %s", acct.username)
        return LoginOutcome(True, None, payload.c, 1, prior_entries=prior)


def verify_login_modified(store: Store, session_id: str, response_digits, envelope, clock=utc_now) -> LoginOutcome:
    with store.lock:
        now = clock()
        claimed = _claim_session(store, session_id, now, "MOD")
        if claimed is None:
            return _reject(BAD_SESSION)
        _, acct = claimed
        cred = acct.credential
        if envelope is None or store.server_key is None:
            return _reject(BAD_ENVELOPE, "missing envelope")
        try:
            salt = decode_salt_payload(open_envelope(store.server_key, envelope), cred.n, cred.modulus)
        except (EnvelopeError, PayloadError) as exc:
            return _reject(BAD_ENVELOPE, str(exc))
        response = _response_or_none(acct, response_digits)
        if response is None:
            return _reject(BAD_RESPONSE, "length or range")
        store.response_computations += 1
        if not verify_modified(cred, salt, response):
            return _reject(BAD_RESPONSE, computations=1)
        log.info("MOD login accepted for %s", acct.username)
        return LoginOutcome(True, None, None, 1, prior_entries=len(acct.c_history))


def verify_login(store: Store, session_id: str, response_digits, envelope=None, clock=utc_now) -> LoginOutcome:
    """Dispatch on the scheme of the account that owns ``session_id``."""
    with store.lock:
        session = store.sessions.get(session_id)
        acct = store.accounts.get(session.username) if session else None
        if acct is None:
            return _reject(BAD_SESSION)
        if acct.scheme == "ORIG":
            if envelope is not None:
                session.consumed = True
                return _reject(BAD_ENVELOPE, "ORIG logins carry no envelope")
            return verify_login_original(store, session_id, response_digits, clock)
        if acct.scheme == "ORIG-ENC-C":
            return verify_login_enc_c(store, session_id, response_digits, envelope, clock)
        return verify_login_modified(store, session_id, response_digits, envelope, clock)


def c_history(store: Store, username: str, authenticated: bool) -> list[CUsageEntry]:
    if not authenticated:
        raise AuthError("UNAUTHENTICATED", "history is only available after login")
    with store.lock:
        acct = store.accounts.get(username)
        if acct is None:
            raise AuthError("UNKNOWN-USER", username)
        return list(acct.c_history)
