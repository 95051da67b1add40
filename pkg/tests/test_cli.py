import io
import json
import subprocess
import sys

import pytest

from fuzzdivide.cli import run_cli
from fuzzdivide.corpus import ALLOWLIST_NAME, export_instance

from conftest import make_record, seed_name

SIM = ["simulate", "--instances", "2", "--epochs", "5", "--policy", "edge",
       "--rng-seed", "7", "--repeats", "2", "--blocks", "60"]


def cli(*argv, env=None):
    out, err = io.StringIO(), io.StringIO()
    code = run_cli(list(argv), env=env or {}, out=out, err=err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture
def sync(tmp_path):
    root = tmp_path / "sync"
    shared = [(1, 2, 0), (2, 3, 0)]
    for i in range(2):
        seeds = [make_record(seed_name(10 * i), i, 10 * i, shared),
                 make_record(seed_name(10 * i + 1), i, 10 * i + 1, shared + [(3, 4 + i, 0)])]
        export_instance(root / f"f{i}", seeds,
                        {s.name: f"{i}{s.name}".encode() for s in seeds})
    return root


def test_no_arguments():
    code, _, err = cli()
    assert code == 1
    assert "usage:" in err


def test_unknown_flag():
    code, _, err = cli("distribute", "--bogus")
    assert code == 1 and "usage:" in err


def test_missing_sync_dir(tmp_path):
    code, _, err = cli("distribute", "--sync-dir", str(tmp_path / "missing"))
    assert code == 2
    assert str(tmp_path / "missing") in err


def test_distribute_and_report(sync, tmp_path):
    report = tmp_path / "r.json"
    code, out, _ = cli("distribute", "--sync-dir", str(sync), "--rng-seed", "3",
                       "--report", str(report))
    assert code == 0
    assert "2 instances" in out
    data = json.loads(report.read_text())
    assert data["schema_version"] == "1" and data["rng_seed"] == 3
    for d in ("f0", "f1"):
        assert (sync / d / ALLOWLIST_NAME).exists()


def test_distribute_watch_with_zero_waits(sync):
    code, out, _ = cli("distribute", "--sync-dir", str(sync), "--watch",
                       "--warmup", "0", "--poll", "0", "--max-polls", "2")
    assert code == 0
    assert "stopped after 1 round(s)" in out


def test_integrity_exit_code(sync, monkeypatch):
    from fuzzdivide import distributor

    monkeypatch.setattr(distributor, "_covers_leaf", lambda seed, into: False)
    code, _, err = cli("distribute", "--sync-dir", str(sync))
    assert code == 3
    assert "inconsistent" in err


def test_bad_trace_exit_two(tmp_path):
    bad = tmp_path / "t.trace"
    bad.write_bytes(b"0000000000000001 0000000000000002 1\nxyz\n")
    code, _, err = cli("inspect", "--trace", str(bad))
    assert code == 2
    assert "line 2" in err


def test_inspect_trace_and_dump(sync, tmp_path):
    trace = sync / "f0" / "queue" / (seed_name(1) + ".trace")
    dot = tmp_path / "cfg.dot"
    code, out, _ = cli("inspect", "--trace", str(trace), "--dump-cfg", str(dot))
    assert code == 0
    assert "3 edges" in out
    assert dot.read_text().count("->") == 3


def test_inspect_sync_dir(sync, tmp_path):
    dot = tmp_path / "shared.dot"
    code, out, _ = cli("inspect", "--sync-dir", str(sync), "--dump-cfg", str(dot))
    assert code == 0
    assert "shared edges: 2" in out
    assert dot.read_text().count("->") == 2


def test_distill_json(sync):
    code, out, _ = cli("distill", "--instance-dir", str(sync / "f0"), "--algo", "unweighted")
    assert code == 0
    data = json.loads(out)
    assert data["algorithm"] == "unweighted"
    assert data["picked"] == [seed_name(1)]
    assert data["edge_count"] == 3


def test_distill_time_without_meta_is_input_error(tmp_path):
    export_instance(tmp_path / "i", [make_record(seed_name(0), 0, 0, [(1, 2, 0)])], write_meta=False)
    code, _, err = cli("distill", "--instance-dir", str(tmp_path / "i"), "--algo", "time")
    assert code == 2
    assert "execution time" in err


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli(*SIM, "--report", str(a))[0] == 0
    assert cli(*SIM, "--report", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    data = json.loads(a.read_text())
    assert data["config"]["rng_seed"] == 7
    assert len(data["runs"]) == 2


def test_simulate_invalid_value():
    code, _, err = cli("simulate", "--instances", "0", "--repeats", "1")
    assert code == 2
    assert "instances" in err


def test_help_lists_defaults(capsys):
    code, _, _ = cli("simulate", "--help")
    assert code == 0
    text = capsys.readouterr().out
    for flag in ("--instances", "--epochs", "--policy", "--blocks", "--threshold", "--rng-seed"):
        assert flag in text
    assert "(default: 30)" in text and "(default: edge)" in text


def test_config_file_merges_and_flags_win(tmp_path, sync):
    conf = tmp_path / "c.conf"
    conf.write_text(f"sync-dir = {sync}\nrng_seed = 4\n")
    report = tmp_path / "r.json"
    code, _, _ = cli("distribute", "--config", str(conf), "--report", str(report))
    assert code == 0
    assert json.loads(report.read_text())["rng_seed"] == 4
    code, _, _ = cli("distribute", "--config", str(conf), "--rng-seed", "9", "--report", str(report))
    assert json.loads(report.read_text())["rng_seed"] == 9


def test_config_unknown_key(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("nonsense = 1\n")
    code, _, err = cli("simulate", "--config", str(conf))
    assert code == 1 and "nonsense" in err


def test_log_level_from_env(sync):
    code, _, _ = cli("distribute", "--sync-dir", str(sync), env={"FUZZ_DIVIDE_LOG": "debug"})
    assert code == 0
    code, _, err = cli("distribute", "--sync-dir", str(sync), env={"FUZZ_DIVIDE_LOG": "loud"})
    assert code == 1 and "loud" in err.lower()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fuzzdivide"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "usage:" in proc.stderr
