import json
import random
import subprocess
import sys

import pytest

from vpass.cli import main
from vpass.envelope import generate_keypair
from vpass.store import Store, save_store

DET = ["--insecure-deterministic", "--seed", "7", "--clock", "2010-06-01T12:00:00Z"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def keyfile(tmp_path):
    path = tmp_path / "alice.key"
    path.write_text("# fixed password and multiplier\ndigits=3,7\nmultiplier=3\n")
    return str(path)


@pytest.fixture
def store_path(tmp_path):
    # serve --init would also start listening, so build the file directly
    path = str(tmp_path / "store.json")
    save_store(Store(server_key=generate_keypair("test-transparent", random.Random(1))), path)
    return path


class TestRespond:
    def test_orig(self, capsys, keyfile):
        code, out, _ = run(capsys, "respond", "--scheme", "ORIG", "--key-file", keyfile, "--salt", "2,9", "--c", "4")
        assert code == 0 and out == "2,9\n"

    def test_mod_prints_envelope(self, capsys, keyfile, store_path):
        code, out, _ = run(capsys, "respond", "--scheme", "MOD", "--key-file", keyfile, "--salt", "2,9", "--store", store_path)
        lines = out.splitlines()
        assert code == 0 and lines[0] == "8,3" and lines[1].startswith("test-transparent:")

    def test_encc_uses_public_key_flag(self, capsys, keyfile, store_path):
        _, pub, _ = run(capsys, "pubkey", "--store", store_path)
        code, out, _ = run(capsys, "respond", "--scheme", "ORIG-ENC-C", "--key-file", keyfile, "--salt", "2,9",
                           "--c", "4", "--public-key", pub.strip(), *DET)
        assert code == 0 and out.splitlines()[0] == "2,9"

    def test_password_key_file(self, capsys, tmp_path):
        kf = tmp_path / "k"
        kf.write_text("password=37\nmultiplier=3\n")
        assert run(capsys, "respond", "--scheme", "ORIG", "--key-file", str(kf), "--salt", "2,9", "--c", "4")[1] == "2,9\n"

    def test_salt_length_mismatch(self, capsys, keyfile):
        code, _, err = run(capsys, "respond", "--scheme", "ORIG", "--key-file", keyfile, "--salt", "2,9,1", "--c", "0")
        assert code == 1 and "salt" in err

    def test_bad_multiplier(self, capsys, tmp_path):
        kf = tmp_path / "k"
        kf.write_text("digits=3,7\nmultiplier=5\n")
        code, _, err = run(capsys, "respond", "--scheme", "ORIG", "--key-file", str(kf), "--salt", "2,9", "--c", "0")
        assert code == 1 and "gcd" in err

    def test_missing_salt_for_orig(self, capsys, keyfile):
        assert run(capsys, "respond", "--scheme", "ORIG", "--key-file", keyfile)[0] == 2

    def test_unknown_subcommand_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 2


class TestAttack:
    def _file(self, tmp_path, lines):
        path = tmp_path / "t.txt"
        path.write_text("\n".join(lines) + "\n")
        return str(path)

    def test_two_transcripts(self, capsys, tmp_path):
        code, out, _ = run(capsys, "attack", "--transcripts", self._file(tmp_path, ["0,1,2;0,2,1", "4,4,0;1,4,0"]),
                           "--Z", "5", "--n", "3")
        assert code == 0
        assert "X=1,2,3 a=2" in out.splitlines()
        assert "candidates: 5" in out and out.splitlines()[-1].startswith("work: ")

    def test_single_transcript_more_candidates(self, capsys, tmp_path):
        _, one, _ = run(capsys, "attack", "--transcripts", self._file(tmp_path, ["0,1,2;0,2,1"]), "--Z", "5", "--n", "3")
        count = int(next(l for l in one.splitlines() if l.startswith("candidates:")).split()[1])
        assert count > 5
        _, capped, _ = run(capsys, "attack", "--transcripts", self._file(tmp_path, ["0,1,2;0,2,1"]), "--Z", "5", "--n", "3", "--cap", "3")
        assert f"... {count - 3} more" in capped

    def test_empty_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "attack", "--transcripts", self._file(tmp_path, [""]), "--Z", "5", "--n", "3")
        assert code == 1 and "no transcripts" in err

    def test_malformed_line_numbered(self, capsys, tmp_path):
        code, _, err = run(capsys, "attack", "--transcripts", self._file(tmp_path, ["0,1,2;0,2,1", "0,1;0,2"]),
                           "--Z", "5", "--n", "3")
        assert code == 1 and ":2:" in err

    def test_experiment_csv_deterministic(self, capsys):
        argv = ["attack-experiment", "--Z", "5", "--n", "3", "--trials", "5", "--transcripts", "1,2", *DET]
        code, out, _ = run(capsys, *argv)
        assert code == 0 and out.splitlines()[0] == "Z,n,transcripts,trials,unique_rate,mean_candidates,work"
        assert len(out.splitlines()) == 3 and run(capsys, *argv)[1] == out


class TestRecoveryCommands:
    def test_flow(self, capsys, tmp_path, keyfile, store_path):
        pw = tmp_path / "pw"
        pw.write_text("s3cond\n")
        wrong = tmp_path / "wrong"
        wrong.write_text("nope\n")
        s = ["--store", store_path]
        assert run(capsys, "register", "--username", "alice", "--scheme", "ORIG", "--key-file", keyfile, *s)[0] == 0
        assert run(capsys, "set-recovery", "--username", "alice", "--secondary-email", "a@mail.example",
                   "--second-password-file", str(pw), *s)[0] == 0
        code, _, err = run(capsys, "change-secondary-email", "--username", "alice", "--new-email", "evil@x",
                           "--second-password-file", str(wrong), *s)
        assert code == 1 and "WRONG-SECOND-PASSWORD" in err
        assert run(capsys, "change-secondary-email", "--username", "alice", "--new-email", "b@mail.example",
                   "--second-password-file", str(pw), *s)[0] == 0

        code, out, _ = run(capsys, "request-reset", "--username", "alice", "--kind", "primary", *s, *DET)
        assert code == 0 and "b@mail.example" in out
        _, mail, _ = run(capsys, "outbox", "--to", "b@mail.example", *s)
        token = mail.strip().rsplit("token=", 1)[1]
        newkey = tmp_path / "new.key"
        newkey.write_text("digits=1,1\nmultiplier=7\n")
        assert run(capsys, "complete-reset", "--kind", "primary", "--token", token, "--key-file", str(newkey), *s, *DET)[0] == 0
        code, _, err = run(capsys, "complete-reset", "--kind", "primary", "--token", token, "--key-file", str(newkey), *s, *DET)
        assert code == 1 and "TOKEN-USED" in err
        doc = json.loads(open(store_path).read())
        assert doc["accounts"][0]["credential"] == {"digits": "1,1", "multiplier": 7}

    def test_duplicate_register(self, capsys, keyfile, store_path):
        args = ["register", "--username", "bob", "--scheme", "MOD", "--key-file", keyfile, "--store", store_path]
        assert run(capsys, *args)[0] == 0
        code, _, err = run(capsys, *args)
        assert code == 1 and "DUPLICATE-USER" in err

    def test_outbox_empty(self, capsys, store_path):
        assert run(capsys, "outbox", "--store", store_path)[1] == "(no mail)\n"


def test_missing_store_is_io_error(capsys, tmp_path):
    code, _, err = run(capsys, "pubkey", "--store", str(tmp_path / "nope.json"))
    assert code == 3 and "serve --init" in err


def test_corrupt_store_names_field(capsys, store_path, keyfile):
    run(capsys, "register", "--username", "alice", "--scheme", "ORIG", "--key-file", keyfile, "--store", store_path)
    doc = json.loads(open(store_path).read())
    doc["accounts"][0]["credential"]["multiplier"] = "three"
    open(store_path, "w").write(json.dumps(doc))
    code, _, err = run(capsys, "pubkey", "--store", store_path)
    assert code == 3 and "accounts[0].credential.multiplier" in err


def test_config_file_supplies_defaults(capsys, tmp_path, keyfile, store_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"store": store_path}))
    assert run(capsys, "pubkey", "--config", str(cfg))[1].startswith("test-transparent:")


def test_seed_without_flag_warns(capsys, keyfile):
    code, _, err = run(capsys, "respond", "--scheme", "ORIG", "--key-file", keyfile, "--salt", "2,9", "--seed", "1")
    assert code == 0 and "ignored" in err


# -- against a live server process -------------------------------------------------

@pytest.fixture
def live_server(tmp_path, keyfile):
    store = str(tmp_path / "live.json")
    cmd = [sys.executable, "-m", "vpass", "serve", "--init", "--store", store, "--listen", "127.0.0.1:0",
           "--cipher", "test-transparent", "--insecure-deterministic", "--seed", "7"]
    proc = subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    line = proc.stdout.readline()
    assert line.startswith("listening on "), proc.stderr.read()
    yield store, line.split()[-1]
    proc.terminate()
    proc.wait(timeout=10)


@pytest.mark.slow
class TestLiveServer:
    def test_second_bind_fails(self, live_server):
        store, address = live_server
        proc = subprocess.run([sys.executable, "-m", "vpass", "serve", "--store", store, "--listen", address],
                              capture_output=True, text=True, timeout=30)
        assert proc.returncode == 3 and "cannot listen" in proc.stderr

    def test_init_refuses_existing(self, live_server):
        store, _ = live_server
        proc = subprocess.run([sys.executable, "-m", "vpass", "serve", "--init", "--store", store, "--listen", "127.0.0.1:0"],
                              capture_output=True, text=True, timeout=30)
        assert proc.returncode == 3

    @pytest.mark.parametrize("scheme", ["ORIG", "ORIG-ENC-C", "MOD"])
    def test_login_and_history(self, capsys, live_server, keyfile, tmp_path, scheme):
        store, address = live_server
        common = ["--store", store, "--listen", address]
        assert run(capsys, "register", "--username", "alice", "--scheme", scheme, "--key-file", keyfile, *common)[0] == 0
        for seed in ("1", "2"):
            code, out, _ = run(capsys, "login", "--username", "alice", "--scheme", scheme, "--key-file", keyfile,
                               *common, "--insecure-deterministic", "--seed", seed)
            assert code == 0 and out.startswith("ACCEPT ")
        code, out, _ = run(capsys, "history", "--username", "alice", "--scheme", scheme, "--key-file", keyfile,
                           *common, "--insecure-deterministic", "--seed", "3")
        assert code == 0
        expected = 0 if scheme == "MOD" else 2
        assert len([l for l in out.splitlines() if l.startswith("CUSED ")]) == expected

    def test_wrong_key_rejected(self, capsys, live_server, keyfile, tmp_path):
        store, address = live_server
        common = ["--store", store, "--listen", address]
        run(capsys, "register", "--username", "bob", "--scheme", "MOD", "--key-file", keyfile, *common)
        bad = tmp_path / "bad.key"
        bad.write_text("digits=3,8\nmultiplier=3\n")
        code, out, _ = run(capsys, "login", "--username", "bob", "--scheme", "MOD", "--key-file", str(bad), *common)
        assert code == 1 and out.startswith("REJECT ") and "BAD-RESPONSE" in out

    def test_transcript_is_deterministic(self, capsys, live_server, keyfile):
        store, address = live_server
        common = ["--store", store, "--listen", address]
        run(capsys, "register", "--username", "carol", "--scheme", "MOD", "--key-file", keyfile, *common)
        argv = ["login", "--username", "carol", "--scheme", "MOD", "--key-file", keyfile, "--show-transcript",
                *common, *DET]
        _, first, _ = run(capsys, *argv)
        _, second, _ = run(capsys, *argv)
        # same client seed and clock: the only difference is the server-issued session id
        strip = lambda t: [l.replace(l.split(" ")[2], "<sid>") if len(l.split(" ")) > 2 else l for l in t.splitlines()]
        assert strip(first) == strip(second) and first.count("\n") == 4
