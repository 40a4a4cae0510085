"""Sealing salts and (c, timestamp) payloads for the server's public key.

Two ciphers are registered:

``test-transparent``
    Deterministic, reversible tagged encoding with a SHA-256 checksum.  It
    provides integrity against accidental damage only and is NOT
    confidential; it exists for tests and byte-exact golden transcripts.

``x25519-chacha20poly1305``
    Ephemeral X25519 agreement, HKDF-SHA256, ChaCha20-Poly1305.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import os
from dataclasses import dataclass
from datetime import datetime, timezone

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from vpass.core import Salt


class EnvelopeError(Exception):
    """Base class for sealing/opening failures."""


class UnknownCipherError(EnvelopeError):
    pass


class MalformedEnvelopeError(EnvelopeError):
    """The envelope text or key material could not be parsed at all."""


class IntegrityError(EnvelopeError):
    """Ciphertext was tampered with or sealed for a different key."""


class PayloadError(ValueError):
    """Base class for payload decoding failures."""


class PayloadTagError(PayloadError):
    pass


class PayloadLengthError(PayloadError):
    pass


class PayloadRangeError(PayloadError):
    pass


class PayloadTimestampError(PayloadError):
    pass


@dataclass(frozen=True)
class KeyPair:
    public_part: bytes
    private_part: bytes
    cipher_id: str


@dataclass(frozen=True)
class Envelope:
    cipher_id: str
    ciphertext: bytes

    def to_wire(self) -> str:
        return f"{self.cipher_id}:{base64.b64encode(self.ciphertext).decode('ascii')}"

    @classmethod
    def from_wire(cls, text: str) -> "Envelope":
        cipher_id, sep, body = text.partition(":")
        if not sep or not cipher_id:
            raise MalformedEnvelopeError("envelope must look like <cipher_id>:<base64>")
        try:
            raw = base64.b64decode(body.encode("ascii"), validate=True)
        except (binascii.Error, UnicodeEncodeError):
            raise MalformedEnvelopeError("envelope body is not valid base64") from None
        return cls(cipher_id, raw)


@dataclass(frozen=True)
class CPayload:
    c: int
    timestamp: datetime


def _randbytes(rng, n: int) -> bytes:
    if rng is None:
        return os.urandom(n)
    return rng.getrandbits(8 * n).to_bytes(n, "big")


class TransparentCipher:
    cipher_id = "test-transparent"
    _tag = b"TT1"

    def generate_keypair(self, rng) -> KeyPair:
        key_id = _randbytes(rng, 8)
        return KeyPair(key_id, key_id, self.cipher_id)

    def seal(self, public_part: bytes, payload: bytes, rng=None) -> bytes:
        if len(public_part) != 8:
            raise MalformedEnvelopeError("test-transparent keys are 8 bytes")
        body = self._tag + public_part + payload
        return body + hashlib.sha256(body).digest()[:8]

    def open(self, private_part: bytes, ciphertext: bytes) -> bytes:
        if len(private_part) != 8:
            raise MalformedEnvelopeError("test-transparent keys are 8 bytes")
        if len(ciphertext) < 19:
            raise IntegrityError("ciphertext too short")
        body, check = ciphertext[:-8], ciphertext[-8:]
        if hashlib.sha256(body).digest()[:8] != check:
            raise IntegrityError("checksum mismatch")
        if body[:3] != self._tag or body[3:11] != private_part:
            raise IntegrityError("sealed for a different key")
        return body[11:]


class X25519Cipher:
    cipher_id = "x25519-chacha20poly1305"
    _info = b"vpass envelope v1"

    def generate_keypair(self, rng) -> KeyPair:
        priv = X25519PrivateKey.from_private_bytes(_randbytes(rng, 32))
        return KeyPair(self._raw_public(priv.public_key()), _raw_private(priv), self.cipher_id)

    @staticmethod
    def _raw_public(pub: X25519PublicKey) -> bytes:
        return pub.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)

    def _key(self, shared: bytes, eph_pub: bytes, recipient_pub: bytes) -> bytes:
        hkdf = HKDF(algorithm=hashes.SHA256(), length=32, salt=eph_pub + recipient_pub, info=self._info)
        return hkdf.derive(shared)

    def seal(self, public_part: bytes, payload: bytes, rng=None) -> bytes:
        try:
            recipient = X25519PublicKey.from_public_bytes(public_part)
        except ValueError:
            raise MalformedEnvelopeError("bad X25519 public key") from None
        eph = X25519PrivateKey.from_private_bytes(_randbytes(rng, 32))
        eph_pub = self._raw_public(eph.public_key())
        key = self._key(eph.exchange(recipient), eph_pub, public_part)
        # fresh key per envelope, so a fixed nonce is safe
        return eph_pub + ChaCha20Poly1305(key).encrypt(bytes(12), payload, None)

    def open(self, private_part: bytes, ciphertext: bytes) -> bytes:
        try:
            priv = X25519PrivateKey.from_private_bytes(private_part)
        except ValueError:
            raise MalformedEnvelopeError("bad X25519 private key") from None
        if len(ciphertext) < 32 + 16:
            raise IntegrityError("ciphertext too short")
        eph_pub, body = ciphertext[:32], ciphertext[32:]
        try:
            shared = priv.exchange(X25519PublicKey.from_public_bytes(eph_pub))
        except ValueError:
            raise IntegrityError("bad ephemeral key") from None
        key = self._key(shared, eph_pub, self._raw_public(priv.public_key()))
        try:
            return ChaCha20Poly1305(key).decrypt(bytes(12), body, None)
        except InvalidTag:
            raise IntegrityError("authentication tag mismatch") from None


def _raw_private(priv: X25519PrivateKey) -> bytes:
    return priv.private_bytes(
        serialization.Encoding.Raw, serialization.PrivateFormat.Raw, serialization.NoEncryption()
    )


CIPHERS = {c.cipher_id: c for c in (TransparentCipher(), X25519Cipher())}


def get_cipher(cipher_id: str):
    try:
        return CIPHERS[cipher_id]
    except KeyError:
        raise UnknownCipherError(f"unknown cipher {cipher_id!r}") from None


def generate_keypair(cipher_id: str, rng=None) -> KeyPair:
    return get_cipher(cipher_id).generate_keypair(rng)


def seal(cipher_id: str, public_part: bytes, payload: bytes, rng=None) -> Envelope:
    return Envelope(cipher_id, get_cipher(cipher_id).seal(public_part, payload, rng))


def open_envelope(keypair: KeyPair, envelope: Envelope) -> bytes:
    if envelope.cipher_id != keypair.cipher_id:
        raise IntegrityError(f"envelope cipher {envelope.cipher_id!r} does not match key cipher {keypair.cipher_id!r}")
    return get_cipher(keypair.cipher_id).open(keypair.private_part, envelope.ciphertext)


# -- payload codecs ---------------------------------------------------------

def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_timestamp(text: str) -> datetime:
    try:
        ts = datetime.strptime(text, "%Y-%m-%dT%H:%M:%SZ")
    except ValueError:
        raise PayloadTimestampError(f"malformed timestamp {text!r}") from None
    return ts.replace(tzinfo=timezone.utc)


def _ascii(data: bytes) -> str:
    try:
        return data.decode("ascii")
    except UnicodeDecodeError:
        raise PayloadTagError("payload is not ASCII") from None


def encode_salt_payload(salt: Salt) -> bytes:
    return ("S|" + ",".join(str(d) for d in salt.digits)).encode("ascii")


def decode_salt_payload(data: bytes, n: int, modulus: int) -> Salt:
    text = _ascii(data)
    if not text.startswith("S|"):
        raise PayloadTagError("salt payload must start with 'S|'")
    parts = text[2:].split(",")
    if not all(p.isdigit() for p in parts):
        raise PayloadTagError(f"malformed salt digits {text[2:]!r}")
    if len(parts) != n:
        raise PayloadLengthError(f"salt has {len(parts)} digits, expected {n}")
    digits = tuple(int(p) for p in parts)
    for i, d in enumerate(digits, 1):
        if d >= modulus:
            raise PayloadRangeError(f"salt digit {i} = {d} outside [0, {modulus})")
    return Salt(digits, modulus)


def encode_c_payload(payload: CPayload) -> bytes:
    return f"C|{payload.c}|{format_timestamp(payload.timestamp)}".encode("ascii")


def decode_c_payload(data: bytes, modulus: int) -> CPayload:
    fields = _ascii(data).split("|")
    if len(fields) != 3 or fields[0] != "C":
        raise PayloadTagError("c payload must look like C|<c>|<timestamp>")
    if not fields[1].isdigit():
        raise PayloadRangeError(f"malformed c {fields[1]!r}")
    c = int(fields[1])
    if c >= modulus:
        raise PayloadRangeError(f"c = {c} outside [0, {modulus})")
    return CPayload(c, parse_timestamp(fields[2]))
