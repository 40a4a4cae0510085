"""Line-based TCP protocol between login clients and the auth server.

One command per ``\\n``-terminated UTF-8 line, fields separated by single
spaces::

    C: HELLO v1 <username>
    S: CHALLENGE <sid> <y1,..,yn> | SALTREQ <sid> | ERR UNKNOWN-USER
    C: RESPONSE <sid> <k1,..,kn> [<cipher_id>:<base64>]
    S: ACCEPT <sid> | REJECT <sid> <reason>
    C: HISTORY <sid>
    S: CUSED <c> <timestamp> ... END

Anything unparseable gets ``ERR MALFORMED`` and the connection is closed.
"""

from __future__ import annotations

import logging
import socket
import socketserver
from dataclasses import dataclass, field

from vpass import server as auth
from vpass.core import (
    Salt,
    SecretCredential,
    compute_response_modified,
    compute_response_original,
    format_digits,
    parse_digits,
)
from vpass.envelope import (
    CPayload,
    Envelope,
    EnvelopeError,
    encode_c_payload,
    encode_salt_payload,
    format_timestamp,
    seal,
)
from vpass.store import Store, utc_now

log = logging.getLogger(__name__)

MALFORMED = "ERR MALFORMED"


class ProtocolHandler:
    """Server side of one connection, independent of the transport."""

    def __init__(self, store: Store, rng, clock=utc_now):
        self.store = store
        self.rng = rng
        self.clock = clock
        # sid -> (username, ledger entries that predate this login)
        self.accepted: dict[str, tuple[str, int]] = {}

    def handle_line(self, line: str) -> tuple[list[str], bool]:
        """Replies to one received line (without its newline) and whether to close."""
        parts = line.split(" ")
        if any(not p for p in parts):
            return [MALFORMED], True
        cmd, args = parts[0], parts[1:]
        if cmd == "HELLO" and len(args) == 2 and args[0] == "v1":
            return [self._hello(args[1])], False
        if cmd == "RESPONSE" and len(args) in (2, 3):
            try:
                digits = parse_digits(args[1])
            except ValueError:
                return [MALFORMED], True
            return [self._response(args[0], digits, args[2] if len(args) == 3 else None)], False
        if cmd == "HISTORY" and len(args) == 1:
            return self._history(args[0]), False
        return [MALFORMED], True

    def _hello(self, username: str) -> str:
        try:
            session = auth.issue_challenge(self.store, username, self.rng, self.clock)
        except auth.AuthError:
            return "ERR UNKNOWN-USER"
        if session.issued_salt is None:
            return f"SALTREQ {session.session_id}"
        return f"CHALLENGE {session.session_id} {format_digits(session.issued_salt)}"

    def _response(self, sid: str, digits, envelope_text: str | None) -> str:
        envelope = None
        if envelope_text is not None:
            try:
                envelope = Envelope.from_wire(envelope_text)
            except EnvelopeError:
                with self.store.lock:
                    session = self.store.sessions.get(sid)
                    if session is None or session.consumed:
                        return f"REJECT {sid} {auth.BAD_SESSION}"
                    session.consumed = True
                return f"REJECT {sid} {auth.BAD_ENVELOPE}"
        with self.store.lock:
            session = self.store.sessions.get(sid)
            username = session.username if session else None
        outcome = auth.verify_login(self.store, sid, digits, envelope, self.clock)
        if outcome.accepted:
            self.accepted[sid] = (username, outcome.prior_entries)
            return f"ACCEPT {sid}"
        return f"REJECT {sid} {outcome.reason}"

    def _history(self, sid: str) -> list[str]:
        if sid not in self.accepted:
            return ["ERR UNAUTHENTICATED"]
        username, prior = self.accepted[sid]
        try:
            entries = auth.c_history(self.store, username, authenticated=True)[:prior]
        except auth.AuthError:
            return ["ERR UNKNOWN-USER"]
        return [f"CUSED {e.c} {format_timestamp(e.used_at)}" for e in entries] + ["END"]


class _RequestHandler(socketserver.StreamRequestHandler):
    def handle(self):
        proto = ProtocolHandler(self.server.store, self.server.rng, self.server.clock)
        while True:
            raw = self.rfile.readline()
            if not raw:
                return
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                line = None
            if line is None or not line.endswith("\n"):
                replies, close = [MALFORMED], True
            else:
                if self.server.before_command is not None:
                    self.server.before_command()
                replies, close = proto.handle_line(line[:-1])
            self.wfile.write("".join(r + "\n" for r in replies).encode("utf-8"))
            self.wfile.flush()
            if close:
                return


class AuthTCPServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, store: Store, rng, clock=utc_now, before_command=None):
        self.store = store
        self.rng = rng
        self.clock = clock
        self.before_command = before_command
        super().__init__(address, _RequestHandler)


# -- client ------------------------------------------------------------------

class ProtocolError(Exception):
    """The server sent something the client did not expect."""


class SocketChannel:
    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.rfile = self.sock.makefile("rb")

    def send(self, line: str):
        self.sock.sendall((line + "\n").encode("utf-8"))

    def recv(self) -> str:
        raw = self.rfile.readline()
        if not raw.endswith(b"\n"):
            raise ProtocolError("connection closed by server")
        return raw.decode("utf-8")[:-1]

    def close(self):
        self.rfile.close()
        self.sock.close()


class LoopbackChannel:
    """In-process channel straight into a :class:`ProtocolHandler`."""

    def __init__(self, handler: ProtocolHandler):
        self.handler = handler
        self.pending: list[str] = []
        self.closed = False

    def send(self, line: str):
        if self.closed:
            raise ProtocolError("connection closed by server")
        replies, close = self.handler.handle_line(line)
        self.pending.extend(replies)
        self.closed = close

    def recv(self) -> str:
        if not self.pending:
            raise ProtocolError("connection closed by server")
        return self.pending.pop(0)

    def close(self):
        self.closed = True


@dataclass
class ServerKey:
    """What a client knows about the server: cipher and public key."""

    cipher_id: str
    public_part: bytes

    @classmethod
    def from_text(cls, text: str) -> "ServerKey":
        """Parse the ``<cipher_id>:<base64>`` form printed by ``vpass pubkey``."""
        env = Envelope.from_wire(text.strip())
        return cls(env.cipher_id, env.ciphertext)

    @classmethod
    def from_keypair(cls, kp) -> "ServerKey":
        return cls(kp.cipher_id, kp.public_part)

    def to_text(self) -> str:
        return Envelope(self.cipher_id, self.public_part).to_wire()


@dataclass
class LoginResult:
    accepted: bool
    verdict: str
    session_id: str | None
    transcript: list[str] = field(default_factory=list)

    @property
    def reason(self) -> str | None:
        parts = self.verdict.split(" ")
        return parts[2] if parts[0] == "REJECT" and len(parts) > 2 else (parts[1] if parts[0] == "ERR" else None)


class ClientSession:
    """Client side of one connection; records every line exchanged."""

    def __init__(self, channel):
        self.channel = channel
        self.transcript: list[str] = []

    def send(self, line: str):
        self.transcript.append(f"C: {line}")
        self.channel.send(line)

    def recv(self) -> str:
        line = self.channel.recv()
        self.transcript.append(f"S: {line}")
        return line

    def login(self, username: str, credential: SecretCredential, scheme: str, rng,
              server_key: ServerKey | None = None, clock=utc_now, c: int | None = None) -> LoginResult:
        z, n = credential.modulus, credential.n
        self.send(f"HELLO v1 {username}")
        reply = self.recv()
        parts = reply.split(" ")
        if parts[0] == "ERR":
            return LoginResult(False, reply, None, list(self.transcript))
        if parts[0] == "CHALLENGE" and len(parts) == 3 and scheme in ("ORIG", "ORIG-ENC-C"):
            sid = parts[1]
            salt = Salt(parse_digits(parts[2]), z)
            nonce = rng.randrange(z) if c is None else c
            k = compute_response_original(credential, salt, nonce)
            line = f"RESPONSE {sid} {format_digits(k.digits)}"
            if scheme == "ORIG-ENC-C":
                payload = encode_c_payload(CPayload(nonce, clock()))
                line += " " + self._seal(server_key, payload, rng).to_wire()
        elif parts[0] == "SALTREQ" and len(parts) == 2 and scheme == "MOD":
            sid = parts[1]
            salt = Salt(tuple(rng.randrange(z) for _ in range(n)), z)
            k = compute_response_modified(credential, salt)
            line = f"RESPONSE {sid} {format_digits(k.digits)} " + self._seal(server_key, encode_salt_payload(salt), rng).to_wire()
        else:
            raise ProtocolError(f"unexpected reply {reply!r} for scheme {scheme}")
        self.send(line)
        verdict = self.recv()
        return LoginResult(verdict.startswith("ACCEPT "), verdict, sid, list(self.transcript))

    @staticmethod
    def _seal(server_key: ServerKey | None, payload: bytes, rng) -> Envelope:
        if server_key is None:
            raise ProtocolError("this scheme needs the server's public key")
        return seal(server_key.cipher_id, server_key.public_part, payload, rng)

    def history(self, session_id: str) -> list[str]:
        """Raw ``CUSED`` lines for an accepted session."""
        self.send(f"HISTORY {session_id}")
        lines = []
        while True:
            line = self.recv()
            if line == "END":
                return lines
            if not line.startswith("CUSED "):
                raise ProtocolError(line)
            lines.append(line)
