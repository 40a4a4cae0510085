"""Known-transcript key recovery against the original scheme.

With K observed, every k(i-1) in the recurrence is a known constant, so once
the multiplier ``a`` and the nonce ``c`` are guessed the response equations
are linear in the fixed digits::

    a*x1 + x2          = k1 - y1 - c
    xi + x(succ i)     = ki - a*k(i-1) - yi - c          2 <= i <= n

Forward substitution writes ``xj = alpha_j + beta_j * x1`` with
``beta_j = (-1)**(j+1) * a`` for j >= 2, and the wrap equation leaves a single
congruence ``(1 - (-1)**n * a) * x1 = rhs (mod Z)``.  Enumerating the
``phi(Z) * Z`` guesses on the first transcript and filtering by the rest
gives the exact candidate set.

Note that one transcript is n equations in the n+1 unknowns (X, c), and the
free direction does not depend on the salt, so every key has at least Z
twins that no number of transcripts separates.  :func:`equivalent` tests
for that relation.
"""

from __future__ import annotations

import math
from itertools import product
from dataclasses import dataclass, field
from statistics import fmean
from typing import NamedTuple, Sequence

from vpass import kernels
from vpass.core import ContractError, Response, Salt, SecretCredential, compute_response_original, units

ORACLE_LIMIT = 10**6


@dataclass(frozen=True)
class Transcript:
    salt: Salt
    response: Response

    def __post_init__(self):
        if self.salt.modulus != self.response.modulus or len(self.salt.digits) != len(self.response.digits):
            raise ContractError("transcript salt and response disagree in length or modulus")

    @property
    def n(self) -> int:
        return len(self.salt.digits)

    @property
    def modulus(self) -> int:
        return self.salt.modulus


class CandidateKey(NamedTuple):
    digits: tuple[int, ...]
    multiplier: int

    def __str__(self):
        return f"X={','.join(map(str, self.digits))} a={self.multiplier}"


@dataclass
class AttackReport:
    candidates: list[CandidateKey]
    per_transcript_counts: list[int] = field(default_factory=list)
    work: int = 0


def solve_linear_congruence(coeff: int, rhs: int, modulus: int) -> list[int]:
    """All x in [0, modulus) with ``coeff * x == rhs (mod modulus)``, ascending."""
    coeff %= modulus
    rhs %= modulus
    g = math.gcd(coeff, modulus)  # gcd(0, m) == m
    if rhs % g:
        return []
    m = modulus // g
    if m == 1:
        return list(range(modulus))
    x0 = (rhs // g) * pow(coeff // g, -1, m) % m
    return [x0 + t * m for t in range(g)]


def solution_count(a: int, modulus: int, n: int) -> int:
    """Size of a non-empty :func:`solve_single` result for multiplier ``a``."""
    return math.gcd((1 - (-1) ** n * a) % modulus, modulus)


def solve_single(t: Transcript, a: int, c: int, modulus: int, n: int) -> list[tuple[int, ...]]:
    """Every X for which ``(X, a)`` with nonce ``c`` reproduces transcript ``t``."""
    if math.gcd(a, modulus) != 1:
        raise ContractError(f"multiplier {a} is not a unit mod {modulus}")
    if n < 2 or t.n != n or t.modulus != modulus:
        raise ContractError("transcript does not match (Z, n)")
    ys, ks = t.salt.digits, t.response.digits
    z = modulus
    d = [(ks[0] - ys[0] - c) % z]
    d += [(ks[i] - a * ks[i - 1] - ys[i] - c) % z for i in range(1, n)]

    # x_j = alpha[j] + beta[j] * x_1  (0-based j)
    alpha = [0, d[0]]
    beta = [1, -a]
    for j in range(2, n):
        alpha.append(d[j - 1] - alpha[j - 1])
        beta.append(-beta[j - 1])
    # wrap equation: x_n + x_1 = d_n
    roots = solve_linear_congruence(beta[n - 1] + 1, d[n - 1] - alpha[n - 1], z)
    return [tuple((alpha[j] + beta[j] * x1) % z for j in range(n)) for x1 in roots]


def _nonce_for(key: CandidateKey, t: Transcript, z: int) -> int:
    x, a = key.digits, key.multiplier
    return (t.response.digits[0] - a * x[0] - t.salt.digits[0] - x[1]) % z


def _check_batch(transcripts: Sequence[Transcript], modulus: int, n: int):
    if not transcripts:
        raise ContractError("at least one transcript is required")
    for t in transcripts:
        if t.n != n or t.modulus != modulus:
            raise ContractError(f"transcript length/modulus ({t.n}, {t.modulus}) != ({n}, {modulus})")


def attack(transcripts: Sequence[Transcript], modulus: int, n: int) -> AttackReport:
    """Exact candidate set for the observed transcripts (sorted)."""
    _check_batch(transcripts, modulus, n)
    z = modulus
    first, rest = transcripts[0], transcripts[1:]
    report = AttackReport([])
    found = set()
    for a in units(z):
        for c in range(z):
            report.work += 1
            for xs in solve_single(first, a, c, z, n):
                found.add(CandidateKey(xs, a))
    report.per_transcript_counts.append(len(found))
    for t in rest:
        kept = set()
        for key in found:
            # k1 pins c down, so one (a, c) pair per candidate
            c = _nonce_for(key, t, z)
            report.work += 1
            if kernels.response(key.digits, key.multiplier, t.salt.digits, c, z) == t.response.digits:
                kept.add(key)
        found = kept
        report.per_transcript_counts.append(len(found))
    report.candidates = sorted(found)
    return report


def _oracle_guard(modulus: int, n: int):
    if modulus**n > ORACLE_LIMIT:
        raise ContractError(f"oracle refuses Z**n = {modulus}**{n} > {ORACLE_LIMIT}")


def oracle_enumerate(transcripts: Sequence[Transcript], modulus: int, n: int) -> list[CandidateKey]:
    """Brute force: every unit ``a`` and every X, scanning all c per transcript."""
    _check_batch(transcripts, modulus, n)
    _oracle_guard(modulus, n)
    keys = kernels.consistent_keys(
        units(modulus), n, modulus,
        [t.salt.digits for t in transcripts], [t.response.digits for t in transcripts],
    )
    return sorted(CandidateKey(tuple(x), a) for x, a in keys)


def attack_modified(responses: Sequence[Response], modulus: int, n: int) -> list[CandidateKey]:
    """Keys consistent with modified-scheme responses when the salt stays sealed.

    Given (X, a) and K the salt is recovered digit by digit from the
    recurrence, so every key survives; the response alone eliminates nothing.
    """
    if not responses:
        raise ContractError("at least one response is required")
    z = modulus
    found = []
    for a in units(z):
        for xs in product(range(z), repeat=n):
            if all(kernels.response(xs, a, _recover_salt(xs, a, r.digits, z), 0, z) == r.digits for r in responses):
                found.append(CandidateKey(xs, a))
    return sorted(found)


def _recover_salt(xs, a, ks, z) -> tuple[int, ...]:
    n = len(xs)
    ys = [(ks[0] - a * xs[0] - xs[1]) % z]
    for i in range(1, n):
        j = i + 1 if i + 1 < n else 0
        ys.append((ks[i] - a * ks[i - 1] - xs[i] - xs[j]) % z)
    return tuple(ys)


def oracle_modified(responses: Sequence[Response], modulus: int, n: int) -> list[CandidateKey]:
    """Brute force over all salts: keys that can produce every response."""
    if not responses:
        raise ContractError("at least one response is required")
    _oracle_guard(modulus, n)
    keys = kernels.reachable_keys_modified(units(modulus), n, modulus, [r.digits for r in responses])
    return sorted(CandidateKey(tuple(x), a) for x, a in keys)


def equivalent(k1: CandidateKey, k2: CandidateKey, modulus: int) -> bool:
    """True when the two keys produce identical responses for every salt up to a shift of c.

    That holds iff the multipliers agree and the digit difference ``v`` makes
    every left-hand side of the response equations equal.
    """
    if k1.multiplier != k2.multiplier or len(k1.digits) != len(k2.digits):
        return False
    z, a = modulus, k1.multiplier
    v = [(p - q) % z for p, q in zip(k1.digits, k2.digits)]
    n = len(v)
    lhs = {(a * v[0] + v[1]) % z}
    lhs.update((v[i] + v[(i + 1) % n]) % z for i in range(1, n))
    return len(lhs) == 1


def honest_transcripts(cred: SecretCredential, count: int, rng) -> list[Transcript]:
    z, n = cred.modulus, cred.n
    out = []
    for _ in range(count):
        salt = Salt(tuple(rng.randrange(z) for _ in range(n)), z)
        out.append(Transcript(salt, compute_response_original(cred, salt, rng.randrange(z))))
    return out


def random_credential(modulus: int, n: int, rng) -> SecretCredential:
    return SecretCredential(tuple(rng.randrange(modulus) for _ in range(n)), rng.choice(units(modulus)), modulus)


@dataclass
class ExperimentResult:
    modulus: int
    n: int
    transcripts: int
    trials: int
    unique_rate: float
    mean_candidates: float
    work: int
    true_key_rate: float
    class_unique_rate: float

    CSV_HEADER = "Z,n,transcripts,trials,unique_rate,mean_candidates,work"

    def csv_row(self) -> str:
        return (
            f"{self.modulus},{self.n},{self.transcripts},{self.trials},"
            f"{self.unique_rate:.4f},{self.mean_candidates:.4f},{self.work}"
        )


def attack_success_experiment(modulus: int, n: int, trials: int, transcripts_per_trial: int, rng) -> ExperimentResult:
    """Run the attack on ``trials`` random keys.

    ``unique_rate`` is the fraction of trials whose candidate set is exactly
    the true key.  ``class_unique_rate`` is the fraction where every
    candidate is :func:`equivalent` to the true key, i.e. the attacker can
    impersonate the user without any remaining ambiguity.
    """
    if transcripts_per_trial < 1:
        raise ContractError("need at least one transcript per trial")
    if trials < 1 or n < 2 or modulus < 2:
        raise ContractError("trials >= 1, n >= 2 and Z >= 2 required")
    unique = hit = class_unique = work = 0
    sizes = []
    for _ in range(trials):
        cred = random_credential(modulus, n, rng)
        truth = CandidateKey(cred.digits, cred.multiplier)
        report = attack(honest_transcripts(cred, transcripts_per_trial, rng), modulus, n)
        work += report.work
        sizes.append(len(report.candidates))
        unique += report.candidates == [truth]
        hit += truth in report.candidates
        class_unique += bool(report.candidates) and all(equivalent(k, truth, modulus) for k in report.candidates)
    return ExperimentResult(
        modulus, n, transcripts_per_trial, trials,
        unique / trials, fmean(sizes), work, hit / trials, class_unique / trials,
    )
