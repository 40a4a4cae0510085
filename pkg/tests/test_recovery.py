import random

import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, rule

from vpass.core import SecretCredential, Salt, compute_response_original
from vpass.envelope import generate_keypair
from vpass.recovery import (
    RESET_PRIMARY,
    RESET_SECOND,
    RecoveryError,
    chained_compromise_scenario,
    change_secondary_email,
    complete_primary_reset,
    complete_second_password_reset,
    credential_from_parts,
    mailbox,
    request_primary_reset,
    request_second_password_reset,
    set_recovery,
)
from vpass.server import issue_challenge, register, verify_login_original
from vpass.store import Store

from conftest import FakeClock

NEW = SecretCredential((1, 1), 7, 10)


def code_of(fn, *args, **kw):
    with pytest.raises(RecoveryError) as info:
        fn(*args, **kw)
    return info.value.code


class TestConfiguration:
    def test_set_once(self, demo_store):
        set_recovery(demo_store, "orig", "o@mail.example", "pw")
        assert demo_store.accounts["orig"].recovery.secondary_email == "o@mail.example"
        assert code_of(set_recovery, demo_store, "orig", "x@mail.example", "pw") == "RECOVERY-ALREADY-CONFIGURED"

    def test_both_required(self, demo_store):
        assert code_of(set_recovery, demo_store, "orig", "o@mail.example", "") == "BAD-RECOVERY"

    def test_unknown_user(self, demo_store):
        assert code_of(set_recovery, demo_store, "ghost", "g@mail.example", "pw") == "UNKNOWN-USER"


class TestSecondaryEmailGate:
    def test_correct_second_password(self, demo_store):
        change_secondary_email(demo_store, "mod", "s3cond", "new@mail.example")
        assert demo_store.accounts["mod"].recovery.secondary_email == "new@mail.example"

    def test_wrong_second_password_changes_nothing(self, demo_store):
        assert code_of(change_secondary_email, demo_store, "mod", "s3cond!", "evil@x") == "WRONG-SECOND-PASSWORD"
        assert demo_store.accounts["mod"].recovery.secondary_email == "mod-backup@mail.example"

    def test_not_configured(self, demo_store):
        assert code_of(change_secondary_email, demo_store, "orig", "", "x@y") == "NO-RECOVERY-CONFIGURED"
        assert code_of(request_primary_reset, demo_store, "orig", random.Random(0)) == "NO-RECOVERY-CONFIGURED"


class TestTokens:
    def test_second_password_reset(self, demo_store, clock, rng):
        msg = request_second_password_reset(demo_store, "mod", rng, clock)
        assert msg.to == "mod-backup@mail.example" and msg.kind == RESET_SECOND and len(msg.token) == 32
        assert mailbox(demo_store, msg.to) == [msg]
        assert complete_second_password_reset(demo_store, msg.token, "fresh", clock) == "mod"
        change_secondary_email(demo_store, "mod", "fresh", "z@mail.example")
        assert code_of(complete_second_password_reset, demo_store, msg.token, "again", clock) == "TOKEN-USED"

    def test_expired_after_25h(self, demo_store, clock, rng):
        msg = request_second_password_reset(demo_store, "mod", rng, clock)
        clock.advance(hours=25)
        assert code_of(complete_second_password_reset, demo_store, msg.token, "x", clock) == "TOKEN-EXPIRED"

    def test_valid_at_exactly_24h(self, demo_store, clock, rng):
        msg = request_second_password_reset(demo_store, "mod", rng, clock)
        clock.advance(hours=24)
        complete_second_password_reset(demo_store, msg.token, "x", clock)

    def test_wrong_kind(self, demo_store, clock, rng):
        msg = request_primary_reset(demo_store, "mod", rng, clock)
        assert code_of(complete_second_password_reset, demo_store, msg.token, "x", clock) == "WRONG-KIND"
        other = request_second_password_reset(demo_store, "mod", rng, clock)
        assert code_of(complete_primary_reset, demo_store, other.token, NEW, clock) == "WRONG-KIND"

    def test_unknown_token(self, demo_store, clock):
        assert code_of(complete_primary_reset, demo_store, "f" * 32, NEW, clock) == "UNKNOWN-TOKEN"

    def test_tokens_are_seeded(self, demo_store, clock):
        a = request_primary_reset(demo_store, "mod", random.Random(3), clock).token
        b = request_second_password_reset(demo_store, "mod", random.Random(3), clock).token
        assert a != b  # collision with an issued token forces a redraw


class TestPrimaryReset:
    def _login(self, store, user, cred, clock, rng):
        s = issue_challenge(store, user, rng, clock)
        k = compute_response_original(cred, Salt(s.issued_salt, 10), rng.randrange(10)).digits
        return verify_login_original(store, s.session_id, k, clock).accepted

    def test_old_fails_new_works(self, store, clock, rng):
        old = SecretCredential((3, 7), 3, 10)
        register(store, "u", old, "decimal", "ORIG", "u@mail.example", "pw")
        assert self._login(store, "u", old, clock, rng)
        pending = issue_challenge(store, "u", rng, clock)
        msg = request_primary_reset(store, "u", rng, clock)
        assert msg.kind == RESET_PRIMARY
        complete_primary_reset(store, msg.token, NEW, clock)
        assert store.accounts["u"].c_history == []
        assert pending.session_id not in store.sessions
        assert not self._login(store, "u", old, clock, rng)
        assert self._login(store, "u", NEW, clock, rng)

    def test_invalid_credential_keeps_token(self, demo_store, clock, rng):
        msg = request_primary_reset(demo_store, "mod", rng, clock)
        assert code_of(credential_from_parts, (1, 2), 5, 10) == "INVALID-CREDENTIAL"
        assert code_of(complete_primary_reset, demo_store, msg.token, SecretCredential((1, 2), 3, 7), clock) == "INVALID-CREDENTIAL"
        complete_primary_reset(demo_store, msg.token, credential_from_parts((1, 2), 9, 10), clock)
        assert demo_store.accounts["mod"].credential.multiplier == 9


class TestScenario:
    def test_inapplicable_without_secondary(self, demo_store, rng):
        report = chained_compromise_scenario(demo_store, victim="orig", controlled_mailboxes=[], attacker_credential=NEW, rng=rng)
        assert not report.applicable
        assert report.render().startswith("applicable: no")

    def test_mailbox_controlled(self, demo_store, clock, rng):
        report = chained_compromise_scenario(
            demo_store, clock, victim="mod", controlled_mailboxes=["mod-backup@mail.example"], attacker_credential=NEW, rng=rng)
        assert report.applicable and report.secondary_change_blocked and report.primary_takeover_succeeded
        assert demo_store.accounts["mod"].credential == NEW
        assert "BLOCKED" in report.render() and "SUCCEEDED" in report.render()

    def test_mailbox_not_controlled(self, demo_store, clock, rng):
        report = chained_compromise_scenario(
            demo_store, clock, victim="mod", controlled_mailboxes=["other@mail.example"], attacker_credential=NEW, rng=rng)
        assert report.secondary_change_blocked and report.primary_takeover_succeeded is False
        assert demo_store.accounts["mod"].credential != NEW

    def test_lucky_guess_is_reported(self, demo_store, clock, rng):
        report = chained_compromise_scenario(
            demo_store, clock, victim="mod", controlled_mailboxes=[], attacker_credential=NEW, rng=rng,
            second_password_guess="s3cond")
        assert report.secondary_change_blocked is False


class RecoveryGate(RuleBasedStateMachine):
    """The secondary email moves only when the current second password is presented."""

    def __init__(self):
        super().__init__()
        self.clock = FakeClock()
        self.rng = random.Random(0)
        self.store = Store(server_key=generate_keypair("test-transparent", random.Random(1)))
        register(self.store, "v", SecretCredential((3, 7), 3, 10), "decimal", "MOD", "v@mail.example", "pw0")
        self.email, self.second = "v@mail.example", "pw0"
        self.tokens = []

    @rule(guess=st.sampled_from(["pw0", "pw1", "wrong", ""]), new=st.sampled_from(["a@x", "b@x"]))
    def change_email(self, guess, new):
        try:
            change_secondary_email(self.store, "v", guess, new)
            assert guess == self.second
            self.email = new
        except RecoveryError as exc:
            assert exc.code == "WRONG-SECOND-PASSWORD" and guess != self.second

    @rule(kind=st.sampled_from([RESET_SECOND, RESET_PRIMARY]))
    def request(self, kind):
        fn = request_second_password_reset if kind == RESET_SECOND else request_primary_reset
        msg = fn(self.store, "v", self.rng, self.clock)
        assert msg.to == self.email
        self.tokens.append((msg.token, kind))

    @rule(idx=st.integers(0, 20), value=st.sampled_from(["pw0", "pw1"]))
    def complete_second(self, idx, value):
        if not self.tokens:
            return
        token, _ = self.tokens[idx % len(self.tokens)]
        try:
            complete_second_password_reset(self.store, token, value, self.clock)
            self.second = value
        except RecoveryError as exc:
            assert exc.code in ("WRONG-KIND", "TOKEN-USED", "TOKEN-EXPIRED")

    @rule(hours=st.integers(0, 30))
    def wait(self, hours):
        self.clock.advance(hours=hours)

    @invariant()
    def email_matches_model(self):
        assert self.store.accounts["v"].recovery.secondary_email == self.email
        assert self.store.accounts["v"].recovery.second_password == self.second


TestRecoveryGate = RecoveryGate.TestCase
TestRecoveryGate.settings = settings(max_examples=60, stateful_step_count=25, deadline=None)
