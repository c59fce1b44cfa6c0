import csv
import math
import os
import subprocess
import sys

import pytest

from recantsm.cli import BOUND_COLUMNS, RANKING_COLUMNS, main, rank_codebooks
from recantsm.config import parse_config_text
from recantsm.montecarlo import BER_COLUMNS

QUICK = """
[experiment]
n_r = 1
constellation = bpsk
snr_db = 0, 10, 20
max_trials = 20000
target_errors = 300
block_size = 5000
seed = 3

[channel]
aod_theta = laplacian 45 17
aod_phi = vonmises 0 4

[patterns]
resolution_deg = 2
p0 = excitation A
p1 = excitation C

[optimize]
choose = 2
"""


@pytest.fixture
def config(tmp_path):
    def write(text=QUICK, name="c.ini"):
        path = tmp_path / name
        path.write_text(text)
        return path

    return write


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_simulate_is_deterministic_and_leaves_no_temp_files(config, tmp_path):
    cfg = config()
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "-q"]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "b"), "-q"]) == 0
    a = (tmp_path / "a" / "ber.csv").read_bytes()
    assert a == (tmp_path / "b" / "ber.csv").read_bytes()
    rows = read_csv(tmp_path / "a" / "ber.csv")
    assert tuple(rows[0]) == BER_COLUMNS and len(rows) == 3
    assert os.listdir(tmp_path / "a") == ["ber.csv"]


def test_seed_and_thread_overrides(config, tmp_path, monkeypatch):
    cfg = config()
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s3"), "-q"])
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s4"), "--seed", "4", "-q"])
    monkeypatch.setenv("RECANT_THREADS", "2")
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "t2"), "-q"])
    base = (tmp_path / "s3" / "ber.csv").read_bytes()
    assert base != (tmp_path / "s4" / "ber.csv").read_bytes()
    assert base == (tmp_path / "t2" / "ber.csv").read_bytes()


def test_bad_thread_env_is_a_config_error(config, tmp_path, monkeypatch):
    monkeypatch.setenv("RECANT_THREADS", "many")
    assert main(["simulate", "--config", str(config()), "--out", str(tmp_path)]) == 2


def test_analyze_csv(config, tmp_path):
    assert main(["analyze", "--config", str(config()), "--out", str(tmp_path), "--pairs", "-q"]) == 0
    rows = read_csv(tmp_path / "bounds.csv")
    assert tuple(rows[0]) == BOUND_COLUMNS
    assert len(rows) == 4 * 3
    by_kind = {}
    for r in rows:
        by_kind.setdefault(r["bound_kind"], []).append(float(r["abep"]))
    for vals in by_kind.values():
        assert all(a > b for a, b in zip(vals, vals[1:]))
    pairs = read_csv(tmp_path / "pairs.csv")
    assert len(pairs) == 4 * 3 * 12


def test_optimize_ranks_every_subset(config, tmp_path):
    text = QUICK.replace("p1 = excitation C", "p1 = excitation C\np2 = excitation B\np3 = excitation D")
    assert main(["optimize", "--config", str(config(text)), "--out", str(tmp_path), "-q"]) == 0
    rows = read_csv(tmp_path / "ranking.csv")
    assert tuple(rows[0]) == RANKING_COLUMNS
    assert len(rows) == math.comb(4, 2)
    vals = [float(r["abep"]) for r in rows]
    assert vals == sorted(vals)
    assert [int(r["rank"]) for r in rows] == list(range(1, 7))


def test_duplicates_rank_last_under_ssk():
    text = QUICK.replace("constellation = bpsk", "constellation = ssk").replace(
        "p1 = excitation C", "p1 = excitation C\np2 = excitation A\np3 = excitation B"
    )
    for kind in ("asymptotic", "exact"):
        ranking = rank_codebooks(parse_config_text(text), kind)
        assert len(ranking) == 6
        assert ranking.worst == ((0, 2), math.inf)
        assert all(math.isfinite(v) for _, v in ranking.entries[:-1])


def test_ties_break_lexicographically():
    # A and E = -A have identical gain patterns, so pairs against C tie under BPSK
    text = QUICK.replace("p1 = excitation C", "p1 = excitation E\np2 = excitation C\np3 = excitation C")
    ranking = rank_codebooks(parse_config_text(text))
    seen = {}
    for subset, v in ranking.entries:
        seen.setdefault(v, []).append(subset)
    for subsets in seen.values():
        assert subsets == sorted(subsets)


def test_validate_passes_on_two_pattern_link(config, tmp_path):
    text = QUICK.replace("snr_db = 0, 10, 20", "snr_db = 10, 20, 30").replace("max_trials = 20000", "max_trials = 60000")
    status = main(["validate", "--config", str(config(text)), "--out", str(tmp_path), "-q"])
    assert status == 0
    checks = {r["check"]: r["result"] for r in read_csv(tmp_path / "checks.csv")}
    assert set(checks.values()) == {"pass"}
    table = read_csv(tmp_path / "validate.csv")
    assert [r["snr_db"] for r in table] == ["10", "20", "30"]
    assert {"exact", "asymptotic", "below_exact"} <= set(table[0])
    assert (tmp_path / "ber.csv").exists() and (tmp_path / "bounds.csv").exists()


def test_optimize_without_choose_fails(config, tmp_path):
    text = QUICK.replace("choose = 2", "choose = 0")
    assert main(["optimize", "--config", str(config(text)), "--out", str(tmp_path)]) == 2


def test_evaluator_error_exits_nonzero(config, tmp_path):
    text = QUICK.replace("constellation = bpsk", "constellation = ssk").replace("excitation C", "excitation A")
    text += "\n[analysis]\nkinds = asymptotic_high_snr\n"
    assert main(["analyze", "--config", str(config(text)), "--out", str(tmp_path)]) == 1
    assert not (tmp_path / "bounds.csv").exists()


def test_missing_config_exits_nonzero(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.ini"), "--out", str(tmp_path)]) == 2


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["fly", "--config", "x", "--out", "y"])
    assert exc.value.code != 0
    with pytest.raises(SystemExit) as exc:
        main(["simulate"])
    assert exc.value.code != 0


def test_console_entry_point(config, tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "recantsm.cli", "analyze", "--config", str(config()), "--out", str(tmp_path), "-q"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "bounds.csv").exists()
