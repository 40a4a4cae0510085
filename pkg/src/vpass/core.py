"""Randomized-linear-function virtual passwords over the residues mod Z.

A user and a server share a fixed digit string ``X = x1..xn`` and a unit
multiplier ``a``.  For each login a salt ``Y`` is drawn and the user answers
with ``K = k1..kn``::

    k1 = (a*x1 + y1 + x2 + c) mod Z
    ki = (a*k(i-1) + yi + xi + c + x(succ i)) mod Z      2 <= i <= n

where ``succ(n) = 1``.  The *original* scheme blinds ``K`` with a random
``c`` that the server recovers by scanning all residues; the *modified*
scheme drops ``c`` and relies on a salt the user draws and seals for the
server.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from vpass import kernels


class ContractError(ValueError):
    """An operation was called outside its precondition."""


class CredentialError(ContractError):
    """Credential digits or multiplier violate the scheme's constraints."""


class PasswordEncodingError(ValueError):
    """A password character is not in the alphabet."""

    def __init__(self, position: int, char: str):
        super().__init__(f"character {char!r} at position {position} is not in the alphabet")
        self.position = position
        self.char = char


@dataclass(frozen=True)
class Alphabet:
    """Ordered password symbols; residue ``i`` is ``symbols[i]``."""

    symbols: str

    def __post_init__(self):
        if len(self.symbols) < 2:
            raise ContractError("alphabet needs at least 2 symbols")
        if len(set(self.symbols)) != len(self.symbols):
            raise ContractError("alphabet symbols must be distinct")
        if not all(ch.isprintable() for ch in self.symbols):
            raise ContractError("alphabet symbols must be printable")

    @property
    def size(self) -> int:
        return len(self.symbols)

    def residue_of(self, symbol: str) -> int:
        idx = self.symbols.find(symbol)
        if len(symbol) != 1 or idx < 0:
            raise ValueError(f"{symbol!r} is not a symbol of this alphabet")
        return idx

    def symbol_of(self, residue: int) -> str:
        if not 0 <= residue < self.size:
            raise ValueError(f"residue {residue} outside [0, {self.size})")
        return self.symbols[residue]


ALPHABETS = {
    "decimal": Alphabet(string.digits),
    "alnum36": Alphabet(string.digits + string.ascii_lowercase),
    "printable95": Alphabet("".join(chr(i) for i in range(32, 127))),
}


def _check_digits(digits: Sequence[int], modulus: int, what: str) -> tuple[int, ...]:
    out = tuple(int(d) for d in digits)
    for i, d in enumerate(out, 1):
        if not 0 <= d < modulus:
            raise ContractError(f"{what} digit {i} = {d} outside [0, {modulus})")
    return out


@dataclass(frozen=True)
class SecretCredential:
    """The long-term shared key: fixed digits X and multiplier a, mod ``modulus``."""

    digits: tuple[int, ...]
    multiplier: int
    modulus: int

    def __post_init__(self):
        if self.modulus < 2:
            raise CredentialError("modulus must be at least 2")
        if len(self.digits) < 2:
            raise CredentialError("fixed password needs at least 2 digits")
        try:
            object.__setattr__(self, "digits", _check_digits(self.digits, self.modulus, "password"))
        except ContractError as exc:
            raise CredentialError(str(exc)) from None
        if not 0 <= self.multiplier < self.modulus:
            raise CredentialError(f"multiplier {self.multiplier} outside [0, {self.modulus})")
        if not is_valid_multiplier(self.multiplier, self.modulus):
            raise CredentialError(
                f"gcd(multiplier, Z) must be 1; gcd({self.multiplier}, {self.modulus}) = "
                f"{math.gcd(self.multiplier, self.modulus)}"
            )

    @property
    def n(self) -> int:
        return len(self.digits)


@dataclass(frozen=True)
class Salt:
    digits: tuple[int, ...]
    modulus: int

    def __post_init__(self):
        object.__setattr__(self, "digits", _check_digits(self.digits, self.modulus, "salt"))


@dataclass(frozen=True)
class Response:
    digits: tuple[int, ...]
    modulus: int

    def __post_init__(self):
        object.__setattr__(self, "digits", _check_digits(self.digits, self.modulus, "response"))


class OriginalVerdict(NamedTuple):
    accepted: bool
    c: int | None
    computations: int


def format_digits(digits: Sequence[int]) -> str:
    """Comma form used in files and on the wire, e.g. ``3,7``."""
    return ",".join(str(int(d)) for d in digits)


def parse_digits(text: str) -> tuple[int, ...]:
    """Inverse of :func:`format_digits`.  Rejects whitespace, signs and empty items."""
    parts = text.split(",")
    if not text or not all(p.isascii() and p.isdigit() for p in parts):
        raise ValueError(f"malformed digit list {text!r}")
    return tuple(int(p) for p in parts)


def wrap_index(i: int, n: int) -> int:
    """1-based cyclic successor: ``wrap_index(n, n) == 1``."""
    if n < 2 or not 1 <= i <= n:
        raise ContractError(f"position {i} outside [1, {n}] (n >= 2 required)")
    return (i % n) + 1


def is_valid_multiplier(a: int, modulus: int) -> bool:
    return math.gcd(a, modulus) == 1


def units(modulus: int) -> list[int]:
    """Residues coprime to ``modulus``, ascending."""
    return [a for a in range(1, modulus) if math.gcd(a, modulus) == 1]


def encode_password(text: str, alphabet: Alphabet) -> tuple[int, ...]:
    out = []
    for pos, ch in enumerate(text, 1):
        idx = alphabet.symbols.find(ch)
        if idx < 0:
            raise PasswordEncodingError(pos, ch)
        out.append(idx)
    return tuple(out)


def decode_password(digits: Sequence[int], alphabet: Alphabet) -> str:
    return "".join(alphabet.symbol_of(d) for d in digits)


def _check_pair(cred: SecretCredential, salt: Salt):
    if salt.modulus != cred.modulus:
        raise ContractError(f"salt modulus {salt.modulus} != credential modulus {cred.modulus}")
    if len(salt.digits) != cred.n:
        raise ContractError(f"salt length {len(salt.digits)} != credential length {cred.n}")


def _check_response(cred: SecretCredential, response: Response):
    if response.modulus != cred.modulus or len(response.digits) != cred.n:
        raise ContractError("response length or modulus does not match the credential")


def compute_response_original(cred: SecretCredential, salt: Salt, c: int) -> Response:
    _check_pair(cred, salt)
    if not 0 <= c < cred.modulus:
        raise ContractError(f"nonce {c} outside [0, {cred.modulus})")
    ks = kernels.response(cred.digits, cred.multiplier, salt.digits, c, cred.modulus)
    return Response(ks, cred.modulus)


def verify_original(cred: SecretCredential, salt: Salt, response: Response) -> OriginalVerdict:
    """Scan c = 0..Z-1; accept with the smallest c that reproduces ``response``.

    ``computations`` counts how many candidate responses were computed.
    """
    _check_pair(cred, salt)
    _check_response(cred, response)
    c, tried = kernels.scan_c(cred.digits, cred.multiplier, salt.digits, response.digits, cred.modulus)
    if c < 0:
        return OriginalVerdict(False, None, tried)
    return OriginalVerdict(True, c, tried)


def compute_response_modified(cred: SecretCredential, salt: Salt) -> Response:
    _check_pair(cred, salt)
    return Response(kernels.response(cred.digits, cred.multiplier, salt.digits, 0, cred.modulus), cred.modulus)


def verify_modified(cred: SecretCredential, salt: Salt, response: Response) -> bool:
    _check_response(cred, response)
    return compute_response_modified(cred, salt) == response


def random_salt(n: int, alphabet: Alphabet, rng) -> Salt:
    """Uniform salt of length ``n`` drawn from ``rng`` (a :class:`random.Random`)."""
    if n < 2:
        raise ContractError("salt length must be at least 2")
    z = alphabet.size
    return Salt(tuple(rng.randrange(z) for _ in range(n)), z)


def random_nonce(alphabet: Alphabet, rng) -> int:
    return rng.randrange(alphabet.size)
