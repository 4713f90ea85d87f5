import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from wdrsl.cli import CSV_HEADER, EXIT_DIVERGED, EXIT_IO, EXIT_USAGE, load_config, main, passes_to, summarize
from wdrsl.data import SynthSpec, read_dataset, synth_generate


@pytest.fixture(autouse=True)
def cache_env(tmp_path, monkeypatch):
    monkeypatch.setenv("WDRSL_CACHE_DIR", str(tmp_path / "cache"))


def write_cfg(path, algo="spprr", **solver):
    solver = {"algo": algo, "eta": "0.1", "max_passes": "4", **solver}
    body = "[dataset]\nsynth_n = 300\nsynth_d = 8\nsynth_seed = 2\n\n[params]\ndelta = 0.1\nkappa = 1.0\n\n[solver]\n"
    body += "".join(f"{k} = {v}\n" for k, v in solver.items())
    path.write_text(body)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# ---------------------------------------------------------------- datagen

def test_datagen_deterministic_and_round_trips(tmp_path, capsys):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    assert main(["datagen", "--n", "500", "--d", "100", "--seed", "7", "--out", str(a)]) == 0
    assert "d=100" in capsys.readouterr().out
    assert main(["datagen", "--n", "500", "--d", "100", "--seed", "7", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().split("\n", 1)[0].split()[:2] == ["500", "100"]
    expect, _ = synth_generate(SynthSpec(500, 100, noise_var=0.2, seed=7))
    assert read_dataset(a).equals(expect)


# ---------------------------------------------------------------- run

@pytest.mark.parametrize("algo, extra", [
    ("spprr", {}), ("sevr", {"batch": "8", "epochs": "3"}), ("gda", {}), ("extragda", {}),
    ("sgda", {"eta0": "0.1"}), ("extrasgda", {"eta0": "0.1"}), ("ssg", {"eta0": "0.1"}), ("sg", {"eta0": "0.1"}),
])
def test_run_emits_schema(tmp_path, algo, extra):
    cfg = write_cfg(tmp_path / "c.cfg", algo, **extra)
    out = tmp_path / "t.csv"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    header, rows = read_csv(out)
    assert header == CSV_HEADER
    assert rows and all(r[0] == algo.upper() or r[0].lower() == algo for r in rows)
    passes = [float(r[3]) for r in rows]
    assert all(b > a for a, b in zip(passes, passes[1:]))
    for r in rows:
        assert float(r[3]) == int(r[4]) / 300
        float(r[5])


def test_run_is_deterministic_except_wall_clock(tmp_path):
    cfg = write_cfg(tmp_path / "c.cfg", "sevr", batch="8")
    outs = [tmp_path / "1.csv", tmp_path / "2.csv"]
    for o in outs:
        assert main(["run", str(cfg), "--out", str(o)]) == 0
    (_, a), (_, b) = read_csv(outs[0]), read_csv(outs[1])
    assert [r[:-1] for r in a] == [r[:-1] for r in b]


def test_numbers_round_trip_at_17_digits(tmp_path):
    cfg = write_cfg(tmp_path / "c.cfg")
    out = tmp_path / "t.csv"
    main(["run", str(cfg), "--out", str(out)])
    _, rows = read_csv(out)
    for r in rows:
        x = float(r[5])
        assert format(x, ".17g") == r[5]


def test_overrides_take_effect(tmp_path):
    cfg = write_cfg(tmp_path / "c.cfg")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["run", str(cfg), "--out", str(a)])
    main(["run", str(cfg), "--out", str(b), "--seed", "5", "--max-passes=2"])
    _, ra = read_csv(a)
    _, rb = read_csv(b)
    assert rb[0][1] == "5" and float(rb[-1][3]) <= 2.0 < float(ra[-1][3])
    c = load_config(cfg, {"kappa": "2.5", "synth_n": "40"})
    assert c.params().kappa == 2.5 and c.dataset().n == 40


def test_iterate_out_and_eval_robust(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.cfg")
    it = tmp_path / "beta.txt"
    assert main(["run", str(cfg), "--out", str(tmp_path / "t.csv"), "--iterate-out", str(it)]) == 0
    capsys.readouterr()
    assert main(["eval-robust", str(cfg), "--iterate", str(it), "--deltas", "0,0.1,0.2"]) == 0
    out = capsys.readouterr().out
    table = list(csv.reader(io.StringIO(out.split("error_rate")[0])))
    assert table[0] == ["delta", "robust_loss", "argmin_lambda"]
    vals = [float(r[1]) for r in table[1:]]
    assert len(vals) == 3 and vals == sorted(vals)
    assert "error_rate=" in out and "mean_loss=" in out


# ---------------------------------------------------------------- compare

def test_compare_single_config_matches_run(tmp_path):
    d = tmp_path / "cfgs"
    d.mkdir()
    cfg = write_cfg(d / "one.cfg")
    main(["run", str(cfg), "--out", str(tmp_path / "run.csv")])
    assert main(["compare", str(d), "--out", str(tmp_path / "cmp.csv")]) == 0
    _, run_rows = read_csv(tmp_path / "run.csv")
    _, cmp_rows = read_csv(tmp_path / "cmp.csv")
    assert [r[:-1] for r in run_rows] == [r[:-1] for r in cmp_rows]
    assert (tmp_path / "cmp.summary.csv").exists()


def test_compare_merges_and_summarizes(tmp_path, capsys):
    d = tmp_path / "cfgs"
    d.mkdir()
    write_cfg(d / "a.cfg", "spprr")
    write_cfg(d / "b.cfg", "sgda", eta0="0.1")
    summary = tmp_path / "s.csv"
    assert main(["compare", str(d), "--out", str(tmp_path / "m.csv"), "--summary", str(summary),
                 "--jobs", "2"]) == 0
    _, rows = read_csv(tmp_path / "m.csv")
    assert {r[0] for r in rows} == {"SPPRR", "SGDA"}
    header, srows = read_csv(summary)
    assert header == ["algo", "seed", "passes_to_1e-3", "final_subopt"]
    assert len(srows) == 2


def test_passes_to_is_first_crossing():
    rows = [["A", "0", "0", "0.5", "1", "1e-2", "", "0"], ["A", "0", "0", "1", "2", "1e-3", "", "0"],
            ["A", "0", "0", "1.5", "3", "2e-3", "", "0"], ["A", "0", "0", "2", "4", "1e-4", "", "0"]]
    assert passes_to(rows) == 1.0
    assert passes_to(rows[:1]) is None
    assert "A,0,1,1e-4" in summarize([("A", "0", rows)])


# ---------------------------------------------------------------- reference

def test_reference_second_call_is_cached(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.cfg")
    assert main(["reference", str(cfg)]) == 0
    first = capsys.readouterr().out
    assert "cached" not in first and "f_star=" in first
    assert main(["reference", str(cfg)]) == 0
    second = capsys.readouterr().out
    assert second.startswith("cached") and first.strip() in second


def test_reference_on_dataset_file(tmp_path, capsys):
    data = tmp_path / "d.txt"
    main(["datagen", "--n", "200", "--d", "5", "--out", str(data)])
    capsys.readouterr()
    assert main(["reference", "--data", str(data)]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    fields = dict(kv.split("=") for kv in line.split())
    assert float(fields["tolerance"]) <= 1e-10


# ---------------------------------------------------------------- errors and exit codes

def test_exit_codes(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.cfg")]) == EXIT_IO
    bad = tmp_path / "bad.cfg"
    bad.write_text("[solver]\nalgo = nope\n[dataset]\nsynth_n = 10\n")
    assert main(["run", str(bad)]) == EXIT_USAGE
    two = write_cfg(tmp_path / "two.cfg")
    assert main(["run", str(two), "--path", "x.txt"]) == EXIT_USAGE
    assert main(["run", str(two), "--eta"]) == EXIT_USAGE
    assert main(["run", str(two), "stray"]) == EXIT_USAGE
    assert main(["bogus"]) == EXIT_USAGE
    div = write_cfg(tmp_path / "div.cfg", "sevr", eta="1e14", batch="4", max_passes="10")
    assert main(["run", str(div)]) == EXIT_DIVERGED
    garbage = tmp_path / "g.txt"
    garbage.write_text("+1 1:x\n")
    assert main(["reference", "--libsvm", str(garbage)]) == EXIT_IO
    assert "line 1" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    out = tmp_path / "d.txt"
    res = subprocess.run([sys.executable, "-m", "wdrsl", "datagen", "--n", "20", "--d", "3", "--out", str(out)],
                         capture_output=True, text=True)
    assert res.returncode == 0 and out.exists()
    res = subprocess.run([sys.executable, "-m", "wdrsl", "run"], capture_output=True, text=True)
    assert res.returncode == EXIT_USAGE


# ---------------------------------------------------------------- desk-scale pipeline

@pytest.mark.slow
def test_spprr_pipeline_on_desk_scale_data(tmp_path):
    cfg = tmp_path / "s.cfg"
    eta = 1 / (2 * 2.25)
    cfg.write_text(f"[dataset]\nsynth_n = 5000\nsynth_d = 100\n[solver]\nalgo = spprr\neta = {eta!r}\nmax_passes = 20\n")
    out = tmp_path / "t.csv"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    _, rows = read_csv(out)
    assert float(rows[-1][3]) <= 20
    final = float(rows[-1][5])
    assert np.isfinite(final) and final >= -1e-9
    # documented shortfall: from the default start the averaged iterate sits near 1e-1, not 1e-3
    print(f"SPPRR final subopt at 20 passes: {final:.3e}")
