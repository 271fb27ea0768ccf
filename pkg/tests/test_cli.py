import csv
import io
import json
import math
from fractions import Fraction

import pytest

from detbcast.cli import SEED_ENV, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def jsonl(text):
    return [json.loads(x) for x in text.splitlines()]


def test_run_honest_example(capsys):
    code, out, _ = run(capsys, "run", "--strategy", "none", "--n", "300", "--xs", "1", "--trials", "200")
    lines = jsonl(out)
    assert code == 0
    assert lines[0]["config"]["n"] == 300 and lines[0]["config"]["t"] == 30 and lines[0]["seed"] == 0
    assert lines[-1]["counts"] == {"all_decided_1": 200}


def test_run_equivocation_example(capsys):
    code, out, _ = run(capsys, "run", "--strategy", "sender-equivocate", "--trials", "1000")
    assert code == 0
    assert jsonl(out)[-1]["counts"] == {"all_honest_aborted": 1000}


def test_run_forgery_example(capsys):
    trials = 100_000
    code, out, _ = run(capsys, "run", "--strategy", "receiver-forge", "--forge-size", "3", "--trials", str(trials))
    assert code == 0
    row = jsonl(out)[1]
    p = 1 / 8
    assert abs(row["forgery_membership_rate"] - p) <= 3 * math.sqrt(p * (1 - p) / trials)


def test_run_final_split_exits_1(capsys):
    code, out, _ = run(capsys, "run", "--strategy", "final-split", "--target", "R1", "--trials", "20")
    assert code == 1 and jsonl(out)[-1]["ok"] is False


def test_run_csv_and_adversarial_dealer(capsys):
    code, out, _ = run(capsys, "run", "--dealer", "adversarial", "--violations", "0,1,2,3,4,5,6,7,8,9",
                       "--n", "40", "--t", "20", "--trials", "50", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rows[0]["strategy"] == "none" and int(rows[0]["sample_test_aborts"]) > 40


def test_same_seed_same_bytes(tmp_path, capsys):
    paths = [tmp_path / f"s{i}.jsonl" for i in range(3)]
    for p, seed in zip(paths, (5, 5, 6)):
        assert main(["run", "--strategy", "receiver-forge", "--n", "90", "--trials", "50",
                     "--seed", str(seed), "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes() != paths[2].read_bytes()


def test_env_seed_and_config_file(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(SEED_ENV, "77")
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# demo\nn = 60\ntheta=0.3\ntrials = 7\nstrategy = sender-silent\n")
    code, out, _ = run(capsys, "--config", str(cfg), "run")
    head = jsonl(out)[0]
    assert code == 0
    assert head["seed"] == 77 and head["trials"] == 7
    assert head["config"]["n"] == 60 and head["config"]["theta"] == 0.3
    assert head["config"]["strategy"]["name"] == "sender-silent"
    # explicit flags beat the file
    code, out, _ = run(capsys, "--config", str(cfg), "run", "--n", "80", "--seed", "1")
    head = jsonl(out)[0]
    assert head["config"]["n"] == 80 and head["seed"] == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--strategy", "bogus"],
        ["run", "--n", "0"],
        ["run", "--theta", "0.5"],
        ["run", "--xs", "2"],
        ["run", "--trials", "0"],
        ["run", "--dealer", "adversarial"],
        ["run", "--dealer", "adversarial", "--violations", "999"],
        ["run", "--n", "notanumber"],
        ["sweep-detection", "--n", "5", "--m", "7"],
        ["modelcheck", "5", "S"],
        ["modelcheck", "3", "R7"],
        ["frobnicate"],
    ],
)
def test_config_errors_exit_2(argv, capsys):
    code, _, err = run(capsys, *argv)
    assert code == 2 and "detbcast:" in err


def test_bad_env_seed_exit_2(monkeypatch, capsys):
    monkeypatch.setenv(SEED_ENV, "abc")
    assert run(capsys, "run", "--trials", "1")[0] == 2


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("flavour = strange\n")
    assert run(capsys, "--config", str(cfg), "run")[0] == 2
    assert run(capsys, "--config", str(tmp_path / "missing.cfg"), "run")[0] == 3


def test_io_errors_exit_3(tmp_path, capsys):
    assert run(capsys, "replay", str(tmp_path / "nope.jsonl"))[0] == 3
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json}\n")
    assert run(capsys, "replay", str(bad))[0] == 3
    assert run(capsys, "run", "--trials", "1", "--out", str(tmp_path / "no" / "dir" / "x"))[0] == 3


def test_sweep_detection(capsys):
    code, out, _ = run(capsys, "sweep-detection", "--n", "10", "--m", "0,5", "--t", "0,2,10", "--trials", "100000")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out.split("\n", 1)[1])))
    cell = {(int(r["m"]), int(r["t"])): r for r in rows}
    assert Fraction(cell[5, 2]["analytic_exact"]) == Fraction(7, 9)
    assert abs(float(cell[5, 2]["z"])) <= 3
    assert all(float(cell[0, t]["empirical"]) == 0 for t in (0, 2, 10))
    assert float(cell[5, 10]["empirical"]) == 1.0


def test_verify_quantum(capsys):
    code, out, _ = run(capsys, "verify-quantum")
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 3 and all(x.startswith("PASS") for x in lines)
    for x in lines:
        assert float(x.rsplit("=", 1)[1]) < 1e-12


def test_verify_quantum_negative_control(capsys):
    code, out, _ = run(capsys, "verify-quantum", "--perturb", "1e-3")
    assert code == 1
    assert any(x.startswith("FAIL marginal_equals_singlet_mixture") for x in out.splitlines())


def test_modelcheck_exit_codes(capsys):
    code, out, _ = run(capsys, "modelcheck", "2", "R0", "--consistent-final")
    assert code == 0 and json.loads(out.splitlines()[0])["ok"] is True
    code, out, _ = run(capsys, "modelcheck", "2", "r0")
    summary = json.loads(out.splitlines()[0])
    assert code == 1 and summary["forbidden"] == ["disagreement"]
    assert "round 6" in out


def test_transcripts_replay(tmp_path, capsys):
    tr = tmp_path / "t.jsonl"
    assert main(["run", "--strategy", "receiver-forge", "--n", "60", "--trials", "30",
                 "--transcripts", str(tr), "--out", str(tmp_path / "s.jsonl")]) == 0
    code, out, _ = run(capsys, "replay", str(tr))
    assert code == 0 and jsonl(out)[-1] == {"type": "total", "transcripts": 30, "mismatched": 0}
    lines = tr.read_text().splitlines()
    d = json.loads(lines[0])
    d["outcomes"]["S"] = "aborted" if d["outcomes"]["S"] != "aborted" else "decided:0"
    lines[0] = json.dumps(d, sort_keys=True, separators=(",", ":"))
    tr.write_text("\n".join(lines) + "\n")
    code, out, _ = run(capsys, "replay", str(tr))
    assert code == 1 and jsonl(out)[-1]["mismatched"] == 1
