"""Command-line entry point: server, user helper, attacker and recovery roles.

Exit codes: 0 success, 1 rejection or domain error, 2 usage error, 3 I/O or
network error.  Secrets are read from prompts or files, never from argv.
"""

from __future__ import annotations

import argparse
import getpass
import json
import logging
import os
import random
import sys

from filelock import FileLock

from vpass import cryptanalysis, recovery
from vpass import server as auth
from vpass.core import (
    ALPHABETS,
    ContractError,
    PasswordEncodingError,
    Response,
    Salt,
    SecretCredential,
    compute_response_modified,
    compute_response_original,
    encode_password,
    format_digits,
    parse_digits,
)
from vpass.envelope import (
    CIPHERS,
    CPayload,
    EnvelopeError,
    encode_c_payload,
    encode_salt_payload,
    format_timestamp,
    generate_keypair,
    parse_timestamp,
    seal,
)
from vpass.store import SCHEMES, Store, StoreError, load_store, save_store, utc_now
from vpass.wire import AuthTCPServer, ClientSession, ProtocolError, ServerKey, SocketChannel

log = logging.getLogger("vpass")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

DEFAULTS = {
    "store": "vpass-store.json",
    "listen": "127.0.0.1:7070",
    "alphabet": "decimal",
    "cipher": "x25519-chacha20poly1305",
    "scheme": "MOD",
}


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_DOMAIN):
        super().__init__(message)
        self.code = code


# -- configuration -----------------------------------------------------------

def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON file with default values for long flags")
    p.add_argument("--store", help="store file path")
    p.add_argument("--listen", help="server address host:port")
    p.add_argument("--alphabet", help=f"alphabet id ({', '.join(ALPHABETS)})")
    p.add_argument("--cipher", help=f"envelope cipher ({', '.join(CIPHERS)})")
    p.add_argument("--seed", type=int, help="RNG seed (needs --insecure-deterministic)")
    p.add_argument("--clock", help="fixed ISO-8601 UTC instant (needs --insecure-deterministic)")
    p.add_argument("--insecure-deterministic", action="store_true",
                   help="honor --seed/--clock; for tests and golden transcripts only")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _resolve(args):
    """Fill unset flags from the config file, then from built-in defaults."""
    config = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}", EXIT_IO) from None
    for key, default in DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, config.get(key, default))
    for key in ("seed", "clock"):
        if getattr(args, key) is None and key in config:
            setattr(args, key, config[key])


def _rng(args):
    if args.insecure_deterministic and args.seed is not None:
        return random.Random(args.seed)
    if args.seed is not None:
        print("warning: --seed ignored without --insecure-deterministic", file=sys.stderr)
    return random.SystemRandom()


def _clock(args):
    if args.insecure_deterministic and args.clock:
        try:
            fixed = parse_timestamp(args.clock)
        except ValueError:
            raise CliError(f"--clock must look like 2010-06-01T12:00:00Z, got {args.clock!r}", EXIT_USAGE) from None
        return lambda: fixed
    if args.clock:
        print("warning: --clock ignored without --insecure-deterministic", file=sys.stderr)
    return utc_now


def _address(text: str):
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise CliError(f"address must be host:port, got {text!r}", EXIT_USAGE)
    return host or "127.0.0.1", int(port)


def _alphabet(args):
    if args.alphabet not in ALPHABETS:
        raise CliError(f"unknown alphabet {args.alphabet!r}", EXIT_USAGE)
    return ALPHABETS[args.alphabet]


# -- secrets -------------------------------------------------------------------

def _parse_key_text(text: str, alphabet) -> SecretCredential:
    fields = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"key file line {lineno}: expected key=value")
        fields[key.strip()] = value.strip()
    try:
        if "digits" in fields:
            digits = parse_digits(fields["digits"])
        elif "password" in fields:
            digits = encode_password(fields["password"], alphabet)
        else:
            raise CliError("key file needs digits= or password=")
        return SecretCredential(digits, int(fields.get("multiplier", "")), alphabet.size)
    except (ValueError, PasswordEncodingError) as exc:
        raise CliError(f"invalid credential: {exc}") from None


def _read_credential(args, alphabet, flag="key_file") -> SecretCredential:
    path = getattr(args, flag, None)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                return _parse_key_text(fh.read(), alphabet)
        except OSError as exc:
            raise CliError(f"cannot read key file: {exc}", EXIT_IO) from None
    password = getpass.getpass("Fixed password: ")
    multiplier = getpass.getpass("Multiplier: ")
    return _parse_key_text(f"password={password}\nmultiplier={multiplier}", alphabet)


def _read_secret(path, prompt) -> str:
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                return fh.readline().rstrip("\r\n")
        except OSError as exc:
            raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None
    return getpass.getpass(prompt)


# -- store access --------------------------------------------------------------

def _load(path) -> Store:
    try:
        return load_store(path)
    except FileNotFoundError:
        raise CliError(f"store {path} does not exist (use serve --init)", EXIT_IO) from None
    except (OSError, StoreError) as exc:
        raise CliError(f"store {path}: {exc}", EXIT_IO) from None


class _StoreEdit:
    """Load, mutate and save the store file under its cross-process lock."""

    def __init__(self, path):
        self.path = path
        self.lock = FileLock(f"{path}.lock")

    def __enter__(self) -> Store:
        self.lock.acquire()
        try:
            self.store = _load(self.path)
        except BaseException:
            self.lock.release()
            raise
        return self.store

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                save_store(self.store, self.path)
        finally:
            self.lock.release()
        return False


# -- subcommands -----------------------------------------------------------------

def cmd_serve(args):
    path = args.store
    rng = _rng(args)
    clock = _clock(args)
    if args.init:
        if os.path.exists(path):
            raise CliError(f"refusing to overwrite existing store {path}", EXIT_IO)
        if args.cipher not in CIPHERS:
            raise CliError(f"unknown cipher {args.cipher!r}", EXIT_USAGE)
        store = Store(server_key=generate_keypair(args.cipher, rng))
        try:
            save_store(store, path)
        except OSError as exc:
            raise CliError(f"cannot create store: {exc}", EXIT_IO) from None
    store = _load(path)
    if store.server_key is None:
        store.server_key = generate_keypair(args.cipher, rng)
        save_store(store, path)
    file_lock = FileLock(f"{path}.lock")
    state = {"mtime": os.stat(path).st_mtime_ns}

    def persist(s: Store):
        with file_lock:
            save_store(s, path)
            state["mtime"] = os.stat(path).st_mtime_ns

    def refresh():
        # pick up offline edits (register, recovery commands) made since our last save
        with file_lock:
            mtime = os.stat(path).st_mtime_ns
            if mtime != state["mtime"]:
                store.replace_persistent(load_store(path))
                state["mtime"] = mtime

    store.on_commit = persist
    try:
        srv = AuthTCPServer(_address(args.listen), store, rng, clock, before_command=refresh)
    except OSError as exc:
        raise CliError(f"cannot listen on {args.listen}: {exc}", EXIT_IO) from None
    host, port = srv.server_address[:2]
    print(f"listening on {host}:{port}", flush=True)
    try:
        srv.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        srv.server_close()
    return EXIT_OK


def cmd_pubkey(args):
    store = _load(args.store)
    if store.server_key is None:
        raise CliError("store has no server key")
    print(ServerKey.from_keypair(store.server_key).to_text())
    return EXIT_OK


def _server_key(args) -> ServerKey:
    if args.public_key:
        try:
            return ServerKey.from_text(args.public_key)
        except EnvelopeError as exc:
            raise CliError(f"bad --public-key: {exc}", EXIT_USAGE) from None
    store = _load(args.store)
    if store.server_key is None:
        raise CliError("store has no server key")
    return ServerKey.from_keypair(store.server_key)


def cmd_respond(args):
    alphabet = _alphabet(args)
    rng = _rng(args)
    cred = _read_credential(args, alphabet)
    z = alphabet.size
    try:
        if args.salt is not None:
            salt = Salt(parse_digits(args.salt), z)
        elif args.scheme == "MOD":
            salt = Salt(tuple(rng.randrange(z) for _ in range(cred.n)), z)
        else:
            raise CliError("--salt is required for this scheme", EXIT_USAGE)
        if len(salt.digits) != cred.n:
            raise CliError(f"salt has {len(salt.digits)} digits, key has {cred.n}")
        if args.scheme == "MOD":
            k = compute_response_modified(cred, salt)
            print(format_digits(k.digits))
            key = _server_key(args)
            print(seal(key.cipher_id, key.public_part, encode_salt_payload(salt), rng).to_wire())
            return EXIT_OK
        c = args.c if args.c is not None else rng.randrange(z)
        k = compute_response_original(cred, salt, c)
    except ContractError as exc:
        raise CliError(str(exc)) from None
    except ValueError as exc:
        raise CliError(f"invalid salt: {exc}") from None
    print(format_digits(k.digits))
    if args.scheme == "ORIG-ENC-C":
        key = _server_key(args)
        print(seal(key.cipher_id, key.public_part, encode_c_payload(CPayload(c, _clock(args)())), rng).to_wire())
    return EXIT_OK


def _connect_and_login(args):
    alphabet = _alphabet(args)
    cred = _read_credential(args, alphabet)
    key = _server_key(args) if args.scheme != "ORIG" else None
    host, port = _address(args.listen)
    try:
        channel = SocketChannel(host, port)
    except OSError as exc:
        raise CliError(f"cannot connect to {args.listen}: {exc}", EXIT_IO) from None
    session = ClientSession(channel)
    try:
        result = session.login(args.username, cred, args.scheme, _rng(args), key, _clock(args))
    except (OSError, ProtocolError) as exc:
        channel.close()
        raise CliError(f"network error: {exc}", EXIT_IO) from None
    return channel, session, result


def cmd_login(args):
    channel, session, result = _connect_and_login(args)
    channel.close()
    if args.show_transcript:
        print("\n".join(result.transcript))
    else:
        print(result.verdict)
    return EXIT_OK if result.accepted else EXIT_DOMAIN


def cmd_history(args):
    channel, session, result = _connect_and_login(args)
    try:
        if not result.accepted:
            print(result.verdict)
            return EXIT_DOMAIN
        try:
            lines = session.history(result.session_id)
        except (OSError, ProtocolError) as exc:
            raise CliError(f"network error: {exc}", EXIT_IO) from None
    finally:
        channel.close()
    for line in lines:
        print(line)
    return EXIT_OK


def _read_transcripts(path, z, n):
    try:
        with open(path, encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None
    out = []
    for lineno, line in enumerate(raw_lines, 1):
        if not line.strip():
            continue
        try:
            ys, sep, ks = line.strip().partition(";")
            if not sep:
                raise ValueError("expected Y-digits;K-digits")
            t = cryptanalysis.Transcript(Salt(parse_digits(ys), z), Response(parse_digits(ks), z))
            if t.n != n:
                raise ValueError(f"length {t.n} != n={n}")
        except ValueError as exc:
            raise CliError(f"{path}:{lineno}: malformed transcript: {exc}") from None
        out.append(t)
    if not out:
        raise CliError(f"{path}: no transcripts")
    return out


def cmd_attack(args):
    transcripts = _read_transcripts(args.transcripts, args.Z, args.n)
    try:
        report = cryptanalysis.attack(transcripts, args.Z, args.n)
    except ContractError as exc:
        raise CliError(str(exc)) from None
    print(f"transcripts: {len(transcripts)}")
    print(f"counts: {','.join(map(str, report.per_transcript_counts))}")
    print(f"candidates: {len(report.candidates)}")
    for key in report.candidates[: args.cap]:
        print(str(key))
    if len(report.candidates) > args.cap:
        print(f"... {len(report.candidates) - args.cap} more")
    print(f"work: {report.work}")
    return EXIT_OK


def cmd_attack_experiment(args):
    rng = _rng(args)
    try:
        per_trial = [int(t) for t in args.transcripts.split(",")]
    except ValueError:
        raise CliError("--transcripts must be a comma list of integers", EXIT_USAGE) from None
    print(cryptanalysis.ExperimentResult.CSV_HEADER)
    for z in args.Z:
        for t in per_trial:
            try:
                result = cryptanalysis.attack_success_experiment(z, args.n, args.trials, t, rng)
            except ContractError as exc:
                raise CliError(str(exc)) from None
            print(result.csv_row(), flush=True)
    return EXIT_OK


def cmd_register(args):
    if args.scheme not in SCHEMES:
        raise CliError(f"unknown scheme {args.scheme!r}", EXIT_USAGE)
    with _StoreEdit(args.store) as store:
        alphabet = store.alphabet(args.alphabet) if args.alphabet in store.alphabets else _alphabet(args)
        cred = _read_credential(args, alphabet)
        second = None
        if args.secondary_email:
            second = _read_secret(args.second_password_file, "Second password: ")
        auth.register(store, args.username, cred, args.alphabet, args.scheme, args.secondary_email, second)
    print(f"registered {args.username} ({args.scheme}, n={cred.n}, Z={cred.modulus})")
    return EXIT_OK


def cmd_set_recovery(args):
    second = _read_secret(args.second_password_file, "Second password: ")
    with _StoreEdit(args.store) as store:
        recovery.set_recovery(store, args.username, args.secondary_email, second)
    print(f"recovery configured for {args.username}")
    return EXIT_OK


def cmd_change_secondary_email(args):
    second = _read_secret(args.second_password_file, "Second password: ")
    with _StoreEdit(args.store) as store:
        recovery.change_secondary_email(store, args.username, second, args.new_email)
    print(f"secondary email for {args.username} changed")
    return EXIT_OK


_KINDS = {"second-password": recovery.RESET_SECOND, "primary": recovery.RESET_PRIMARY}


def cmd_request_reset(args):
    rng, clock = _rng(args), _clock(args)
    with _StoreEdit(args.store) as store:
        if args.kind == "primary":
            msg = recovery.request_primary_reset(store, args.username, rng, clock)
        else:
            msg = recovery.request_second_password_reset(store, args.username, rng, clock)
    print(f"reset link sent to {msg.to}")
    return EXIT_OK


def cmd_complete_reset(args):
    clock = _clock(args)
    if args.kind == "second-password":
        new_second = _read_secret(args.second_password_file, "New second password: ")
        with _StoreEdit(args.store) as store:
            user = recovery.complete_second_password_reset(store, args.token, new_second, clock)
    else:
        with _StoreEdit(args.store) as store:
            owner = next((a for a in store.accounts.values()
                          for t in a.recovery.pending_tokens if t.token == args.token), None)
            alphabet = store.alphabet(owner.alphabet_id) if owner else _alphabet(args)
            cred = _read_credential(args, alphabet)
            user = recovery.complete_primary_reset(store, args.token, cred, clock)
    print(f"{args.kind} reset completed for {user}")
    return EXIT_OK


def cmd_outbox(args):
    store = _load(args.store)
    msgs = [m for a in store.accounts.values() for m in a.outbox if args.to is None or m.to == args.to]
    for m in sorted(msgs, key=lambda m: m.sent_at):
        print(f"{format_timestamp(m.sent_at)} To: {m.to} Kind: {m.kind} Link: reset?token={m.token}")
    if not msgs:
        print("(no mail)")
    return EXIT_OK


# -- wiring ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="vpass", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, parents=[common], help=help)
        p.set_defaults(func=func)
        return p

    def credential_flags(p):
        p.add_argument("--key-file", help="file with digits=... or password=..., and multiplier=...")

    def scheme_flag(p):
        p.add_argument("--scheme", choices=SCHEMES)

    p = add("serve", cmd_serve, "run the authentication server")
    p.add_argument("--init", action="store_true", help="create a new empty store first")

    add("pubkey", cmd_pubkey, "print the server public key")

    p = add("respond", cmd_respond, "compute a virtual password for a salt")
    scheme_flag(p)
    credential_flags(p)
    p.add_argument("--salt", help="salt digits, e.g. 2,9")
    p.add_argument("--c", type=int, help="fixed nonce c (original schemes)")
    p.add_argument("--public-key", help="server public key <cipher_id>:<base64>; else read from --store")

    for name, func, help in (("login", cmd_login, "log in over the wire"),
                             ("history", cmd_history, "log in, then list previously used c values")):
        p = add(name, func, help)
        p.add_argument("--username", required=True)
        scheme_flag(p)
        credential_flags(p)
        p.add_argument("--public-key", help="server public key <cipher_id>:<base64>; else read from --store")
        if name == "login":
            p.add_argument("--show-transcript", action="store_true", help="print every exchanged line")

    p = add("attack", cmd_attack, "recover keys from observed transcripts")
    p.add_argument("--transcripts", required=True, help="file with one 'Y-digits;K-digits' per line")
    p.add_argument("--Z", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--cap", type=int, default=50, help="max candidates printed")

    p = add("attack-experiment", cmd_attack_experiment, "measure key recovery on random keys (CSV)")
    p.add_argument("--Z", type=int, nargs="+", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--transcripts", default="1,2", help="transcripts per trial, comma list")

    p = add("register", cmd_register, "add an account to the store")
    p.add_argument("--username", required=True)
    scheme_flag(p)
    credential_flags(p)
    p.add_argument("--secondary-email")
    p.add_argument("--second-password-file")

    p = add("set-recovery", cmd_set_recovery, "configure secondary email and second password")
    p.add_argument("--username", required=True)
    p.add_argument("--secondary-email", required=True)
    p.add_argument("--second-password-file")

    p = add("change-secondary-email", cmd_change_secondary_email, "change the secondary email")
    p.add_argument("--username", required=True)
    p.add_argument("--new-email", required=True)
    p.add_argument("--second-password-file")

    p = add("request-reset", cmd_request_reset, "mail a reset link to the secondary email")
    p.add_argument("--username", required=True)
    p.add_argument("--kind", choices=sorted(_KINDS), required=True)

    p = add("complete-reset", cmd_complete_reset, "redeem a reset link")
    p.add_argument("--token", required=True)
    p.add_argument("--kind", choices=sorted(_KINDS), required=True)
    credential_flags(p)
    p.add_argument("--second-password-file")

    p = add("outbox", cmd_outbox, "show the mock mailbox")
    p.add_argument("--to", help="only mail for this address")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        _resolve(args)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (auth.AuthError, recovery.RecoveryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
