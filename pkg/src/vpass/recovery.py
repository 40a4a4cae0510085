"""Two-password recovery: a second password guards the secondary email.

Reset tokens for either credential are mailed to the secondary email through
a per-account outbox that stands in for real delivery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import timedelta

from vpass.core import ContractError, CredentialError, SecretCredential
from vpass.store import OutboxMessage, ResetToken, Store, utc_now

TOKEN_LIFETIME = timedelta(hours=24)

RESET_SECOND = "RESET-SECOND-PASSWORD"
RESET_PRIMARY = "RESET-PRIMARY-CREDENTIAL"


class RecoveryError(Exception):
    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code


def _account(store: Store, username: str):
    acct = store.accounts.get(username)
    if acct is None:
        raise RecoveryError("UNKNOWN-USER", username)
    return acct


def _configured(store: Store, username: str):
    acct = _account(store, username)
    if not acct.recovery.configured:
        raise RecoveryError("NO-RECOVERY-CONFIGURED", username)
    return acct


def set_recovery(store: Store, username: str, secondary_email: str, second_password: str):
    """Configure recovery on an account that has none; both values at once."""
    if not secondary_email or not second_password:
        raise RecoveryError("BAD-RECOVERY", "secondary email and second password are both required")
    with store.lock:
        acct = _account(store, username)
        if acct.recovery.configured:
            raise RecoveryError("RECOVERY-ALREADY-CONFIGURED", username)
        acct.recovery.secondary_email = secondary_email
        acct.recovery.second_password = second_password
        store.commit()


def change_secondary_email(store: Store, username: str, presented_second_password: str, new_email: str) -> str:
    with store.lock:
        acct = _configured(store, username)
        if presented_second_password != acct.recovery.second_password:
            raise RecoveryError("WRONG-SECOND-PASSWORD")
        acct.recovery.secondary_email = new_email
        store.commit()
        return new_email


def _new_token(store: Store, rng) -> str:
    taken = {t.token for a in store.accounts.values() for t in a.recovery.pending_tokens}
    while True:
        token = f"{rng.getrandbits(128):032x}"
        if token not in taken:
            return token


def _mail_token(store: Store, username: str, kind: str, rng, clock) -> OutboxMessage:
    with store.lock:
        acct = _configured(store, username)
        now = clock()
        token = ResetToken(_new_token(store, rng), kind, now)
        acct.recovery.pending_tokens.append(token)
        message = OutboxMessage(acct.recovery.secondary_email, token.token, kind, now)
        acct.outbox.append(message)
        store.commit()
        return message


def request_second_password_reset(store: Store, username: str, rng, clock=utc_now) -> OutboxMessage:
    return _mail_token(store, username, RESET_SECOND, rng, clock)


def request_primary_reset(store: Store, username: str, rng, clock=utc_now) -> OutboxMessage:
    return _mail_token(store, username, RESET_PRIMARY, rng, clock)


def _find_token(store: Store, token: str, kind: str, now):
    for acct in store.accounts.values():
        for t in acct.recovery.pending_tokens:
            if t.token == token:
                if t.kind != kind:
                    raise RecoveryError("WRONG-KIND", f"token is {t.kind}")
                if t.used:
                    raise RecoveryError("TOKEN-USED")
                if now - t.issued_at > TOKEN_LIFETIME:
                    raise RecoveryError("TOKEN-EXPIRED")
                return acct, t
    raise RecoveryError("UNKNOWN-TOKEN")


def complete_second_password_reset(store: Store, token: str, new_second_password: str, clock=utc_now) -> str:
    """Consume a second-password token; returns the username it belonged to."""
    if not new_second_password:
        raise RecoveryError("BAD-RECOVERY", "second password must not be empty")
    with store.lock:
        acct, t = _find_token(store, token, RESET_SECOND, clock())
        t.used = True
        acct.recovery.second_password = new_second_password
        store.commit()
        return acct.username


def complete_primary_reset(store: Store, token: str, new_credential: SecretCredential, clock=utc_now) -> str:
    """Consume a primary-reset token and install ``new_credential``.

    The credential is validated before the token is touched; the c ledger
    and any live sessions of the account are dropped with the old key.
    """
    with store.lock:
        acct, t = _find_token(store, token, RESET_PRIMARY, clock())
        size = len(store.alphabets[acct.alphabet_id])
        if new_credential.modulus != size:
            raise RecoveryError("INVALID-CREDENTIAL", f"credential modulus {new_credential.modulus} != alphabet size {size}")
        t.used = True
        acct.credential = new_credential
        acct.c_history.clear()
        for sid in [s for s, st in store.sessions.items() if st.username == acct.username]:
            del store.sessions[sid]
        store.commit()
        return acct.username


def credential_from_parts(digits, multiplier: int, modulus: int) -> SecretCredential:
    """Build and validate a credential, mapping failures to ``INVALID-CREDENTIAL``."""
    try:
        return SecretCredential(tuple(digits), multiplier, modulus)
    except CredentialError as exc:
        raise RecoveryError("INVALID-CREDENTIAL", str(exc)) from None


def mailbox(store: Store, address: str) -> list[OutboxMessage]:
    """Every outbox message addressed to ``address``, oldest first."""
    with store.lock:
        msgs = [m for a in store.accounts.values() for m in a.outbox if m.to == address]
    return sorted(msgs, key=lambda m: m.sent_at)


@dataclass
class ScenarioReport:
    applicable: bool
    secondary_change_blocked: bool | None = None
    primary_takeover_succeeded: bool | None = None
    notes: list[str] = field(default_factory=list)

    def render(self) -> str:
        lines = [f"applicable: {'yes' if self.applicable else 'no'}"]
        if self.secondary_change_blocked is not None:
            lines.append(f"(a) change secondary email with primary credential only: "
                         f"{'BLOCKED' if self.secondary_change_blocked else 'ALLOWED'}")
        if self.primary_takeover_succeeded is not None:
            lines.append(f"(b) primary reset through controlled mailbox: "
                         f"{'SUCCEEDED' if self.primary_takeover_succeeded else 'FAILED'}")
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def chained_compromise_scenario(
    store: Store,
    clock=utc_now,
    *,
    victim: str,
    controlled_mailboxes,
    attacker_credential: SecretCredential,
    rng,
    second_password_guess: str = "guess",
) -> ScenarioReport:
    """Play out the attack on a fixture store where the attacker knows the victim's primary credential.

    (a) the attacker tries to redirect the secondary email without the second
    password; (b) the attacker requests a primary reset and, if the mailbox it
    is delivered to is in ``controlled_mailboxes``, completes it with
    ``attacker_credential``.  The store is mutated; pass a fixture copy.
    """
    acct = store.accounts.get(victim)
    if acct is None or not acct.recovery.configured:
        return ScenarioReport(False, notes=[f"{victim!r} has no secondary email; scenario inapplicable"])
    report = ScenarioReport(True)
    before = acct.recovery.secondary_email
    try:
        change_secondary_email(store, victim, second_password_guess, "attacker@evil.example")
        report.secondary_change_blocked = False
    except RecoveryError as exc:
        report.secondary_change_blocked = exc.code == "WRONG-SECOND-PASSWORD" and acct.recovery.secondary_email == before
        report.notes.append(f"secondary email change refused: {exc.code}")

    message = request_primary_reset(store, victim, rng, clock)
    if message.to not in set(controlled_mailboxes):
        report.primary_takeover_succeeded = False
        report.notes.append(f"reset token went to {message.to}, which the attacker does not control")
        return report
    token = next(m.token for m in reversed(mailbox(store, message.to)) if m.kind == RESET_PRIMARY)
    try:
        complete_primary_reset(store, token, attacker_credential, clock)
    except (RecoveryError, ContractError) as exc:
        report.primary_takeover_succeeded = False
        report.notes.append(f"reset completion failed: {exc}")
        return report
    report.primary_takeover_succeeded = store.accounts[victim].credential == attacker_credential
    report.notes.append(f"mailbox {message.to} compromise let the attacker replace {victim}'s primary credential")
    return report
