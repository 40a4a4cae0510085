import random
from datetime import datetime, timedelta, timezone

import pytest

from vpass import kernels
from vpass.core import SecretCredential
from vpass.envelope import generate_keypair
from vpass.server import register
from vpass.store import Store

T0 = datetime(2010, 6, 1, 12, 0, 0, tzinfo=timezone.utc)


class FakeClock:
    def __init__(self, start=T0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, **kw):
        self.now += timedelta(**kw)


def ref_response(X, a, Y, c, Z):
    """Literal 1-based transcription of the recurrence, independent of the kernels."""
    n = len(X)
    x = {i + 1: v for i, v in enumerate(X)}
    y = {i + 1: v for i, v in enumerate(Y)}
    k = {1: (a * x[1] + y[1] + x[2] + c) % Z}
    for i in range(2, n + 1):
        succ = (i % n) + 1
        k[i] = (a * k[i - 1] + y[i] + x[i] + c + x[succ]) % Z
    return tuple(k[i] for i in range(1, n + 1))


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def rng():
    return random.Random(1234)


@pytest.fixture(params=sorted(kernels.backends()))
def backend(request):
    return kernels.backends()[request.param]


@pytest.fixture
def store():
    return Store(server_key=generate_keypair("test-transparent", random.Random(1)))


@pytest.fixture
def demo_store(store):
    """One account per scheme, all with X=(3,7), a=3 over the decimal alphabet."""
    cred = SecretCredential((3, 7), 3, 10)
    register(store, "orig", cred, "decimal", "ORIG")
    register(store, "encc", cred, "decimal", "ORIG-ENC-C")
    register(store, "mod", cred, "decimal", "MOD", "mod-backup@mail.example", "s3cond")
    return store


def random_store(rng: random.Random, accounts: int = 3) -> Store:
    """A populated store with arbitrary history, tokens and outbox entries."""
    from vpass.core import units
    from vpass.store import AccountRecord, CUsageEntry, OutboxMessage, RecoveryFields, ResetToken, SCHEMES, TOKEN_KINDS

    cipher = rng.choice(["test-transparent", "x25519-chacha20poly1305"])
    st = Store(server_key=generate_keypair(cipher, rng) if rng.random() < 0.8 else None)
    names = sorted(st.alphabets)
    for i in range(accounts):
        alpha = rng.choice(names)
        z = len(st.alphabets[alpha])
        n = rng.randrange(2, 9)
        cred = SecretCredential(tuple(rng.randrange(z) for _ in range(n)), rng.choice(units(z)), z)
        when = T0 + timedelta(seconds=rng.randrange(10**6))
        history = [CUsageEntry(c, when + timedelta(seconds=j)) for j, c in enumerate(rng.sample(range(z), rng.randrange(4)))]
        rec = RecoveryFields()
        outbox = []
        if rng.random() < 0.6:
            rec = RecoveryFields(f"user{i}@mail.example", "pw \"quoted\" é " + str(rng.random()))
            for _ in range(rng.randrange(3)):
                tok = ResetToken(f"{rng.getrandbits(128):032x}", rng.choice(TOKEN_KINDS), when, rng.random() < 0.5)
                rec.pending_tokens.append(tok)
                outbox.append(OutboxMessage(rec.secondary_email, tok.token, tok.kind, when))
        st.accounts[f"user{i}"] = AccountRecord(f"user{i}", cred, alpha, rng.choice(SCHEMES), history, rec, outbox)
    return st


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def demo_store_factory():
    def build():
        st = Store(server_key=generate_keypair("test-transparent", random.Random(1)))
        cred = SecretCredential((3, 7), 3, 10)
        register(st, "orig", cred, "decimal", "ORIG")
        register(st, "encc", cred, "decimal", "ORIG-ENC-C")
        register(st, "mod", cred, "decimal", "MOD", "mod-backup@mail.example", "s3cond")
        return st
    return build
