import csv
import json

import pytest
from hypothesis import given, strategies as st

from ppmsim.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, UsageError, main, parse_config, parse_seeds


def _config(tmp_path, text, name="c.txt"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _rows(out):
    with open(out / "report.csv") as fh:
        return list(csv.DictReader(fh))


def test_parse_config_types_and_comments():
    cfg = parse_config("P=4  # processors\n\n# full line\nf = 0.05\nstrategy=seeded-random\nMp=0x1000\n")
    assert cfg == {"P": 4, "f": 0.05, "strategy": "seeded-random", "Mp": 4096}


@pytest.mark.parametrize("text", ["P", "P=two", "colour=red", "P=1\nP=2", "f=0.1\ncf=0.2"])
def test_parse_config_rejects(text):
    with pytest.raises(UsageError):
        parse_config(text)


@given(st.integers(-50, 50), st.integers(0, 60))
def test_seed_ranges(a, k):
    assert parse_seeds(f"{a}..{a + k}") == list(range(a, a + k + 1))


def test_seed_forms():
    assert parse_seeds("3,1,2") == [3, 1, 2]
    assert parse_seeds("7") == [7]
    for bad in ("5..2", "x..3", "a"):
        with pytest.raises(UsageError):
            parse_seeds(bad)


def test_fault_free_prefix_row(tmp_path):
    cfg = _config(tmp_path, "n=1024\nf=0\nB=4\n")
    out = tmp_path / "o"
    assert main(["--config", cfg, "--workload", "prefix_sum", "--seeds", "1..1", "--out", str(out)]) == EXIT_OK
    (row,) = _rows(out)
    assert row["W"] == row["Wf"]
    assert (out / "trace-1.jsonl").stat().st_size > 0
    got = list(map(int, (out / "output-1.txt").read_text().split()))
    import random
    rng = random.Random(0)
    vals = [rng.randrange(1 << 20) for _ in range(1024)]
    acc, want = 0, []
    for v in vals:
        acc += v
        want.append(acc)
    assert got == want


def test_same_config_twice_is_byte_identical(tmp_path):
    cfg = _config(tmp_path, "P=3\nstrategy=seeded-random\nf=0.02\nhard_fraction=0.3\nforks=31\n")
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["--config", cfg, "--workload", "tree", "--seeds", "0..2", "--out", str(out)]) == EXIT_OK
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    for n in names:
        assert (outs[0] / n).read_bytes() == (outs[1] / n).read_bytes(), n


def test_hundred_seed_inflation(tmp_path):
    cfg = _config(tmp_path, "P=2\ncf=0.25\nforks=31\ntrace=0\n")
    out = tmp_path / "o"
    assert main(["--config", cfg, "--workload", "tree", "--seeds", "1..100", "--out", str(out)]) == EXIT_OK
    rows = _rows(out)
    assert len(rows) == 100
    mean = sum(int(r["Wf"]) / int(r["W"]) for r in rows) / 100
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mean_inflation"] == pytest.approx(mean)
    assert mean <= (4 / 3) * 1.1


@pytest.mark.parametrize("workload,extra", [("merge", "n=300\n"), ("sort", "n=300\n"),
                                            ("matmul", "n=8\n"), ("ram", ""), ("em", ""),
                                            ("ic", "program=" + "__first__")])
def test_every_workload_runs(tmp_path, workload, extra):
    from ppmsim.simulations.programs import IC_CORPUS
    extra = extra.replace("__first__", IC_CORPUS[1].name)
    cfg = _config(tmp_path, "P=2\nf=0.01\n" + extra)
    out = tmp_path / "o"
    assert main(["--config", cfg, "--workload", workload, "--seeds", "0..1", "--out", str(out)]) == EXIT_OK
    assert len(_rows(out)) == 2


def test_input_file(tmp_path):
    data = tmp_path / "in.txt"
    data.write_text("5 1 4\n2 3\n")
    cfg = _config(tmp_path, f"input={data}\n")
    out = tmp_path / "o"
    assert main(["--config", cfg, "--workload", "sort", "--out", str(out)]) == EXIT_OK
    assert (out / "output-0.txt").read_text().split() == ["1", "2", "3", "4", "5"]


def test_usage_errors(tmp_path, capsys):
    assert main(["--workload", "nope"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    assert main(["--bogus"]) == EXIT_USAGE
    assert main(["--config", str(tmp_path / "missing"), "--workload", "tree"]) == EXIT_USAGE
    assert main(["--config", _config(tmp_path, "P=1\nwhat\n"), "--workload", "tree"]) == EXIT_USAGE
    assert main(["--config", _config(tmp_path, "f=0.9\n", "hi.txt"), "--workload", "tree",
                 "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert main(["--verify", "nonsense"]) == EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_oracle_mismatch_exits_one(tmp_path, monkeypatch):
    import ppmsim.algorithms as alg
    real = alg.multiply
    monkeypatch.setattr(alg, "multiply", lambda a, b: [[v + 1 for v in row] for row in real(a, b)])
    out = tmp_path / "o"
    assert main(["--config", _config(tmp_path, "n=2\n"), "--workload", "matmul", "--out", str(out)]) == EXIT_FAIL


def test_verify_suite_exit_status(capsys):
    assert main(["--verify", "idempotence"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert all(line.startswith("PASS") for line in lines[:-1])
    assert lines[-1].startswith("idempotence:")


def test_model_error_fails_the_seed(tmp_path, capsys):
    # a pool far too small for the input breaks the run, not the batch
    cfg = _config(tmp_path, "n=2000\nMp=20000\n")
    out = tmp_path / "o"
    assert main(["--config", cfg, "--workload", "sort", "--seeds", "0..1", "--out", str(out)]) == EXIT_FAIL
    assert capsys.readouterr().out.count("OutOfMemory") == 2


def test_input_over_address_space_is_usage_error(tmp_path):
    cfg = _config(tmp_path, "n=40000\nM=64\ntrace=0\n")
    assert main(["--config", cfg, "--workload", "sort", "--out", str(tmp_path / "o")]) == EXIT_USAGE
