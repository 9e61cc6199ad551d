import csv
import math

import numpy as np
import pytest

from dgmm.cli import build_parser, int_list, int_range, main, read_labels
from dgmm.data import load_csv
from dgmm.serialize import load_params


@pytest.fixture(scope="module")
def smiley_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert main(["generate", "smiley", "--n", "300", "--seed", "1", "--out", str(out)]) == 0
    return out / "smiley.csv"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_label_file(path, labels, name="class"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([name])
        w.writerows([v] for v in labels)


def test_flag_grammar():
    assert int_list("4,1") == (4, 1)
    assert int_range("1..5") == (1, 2, 3, 4, 5)
    assert int_range("3") == (3,)
    assert int_range("1,3") == (1, 3)
    for bad in ("5..1", "a..b"):
        with pytest.raises(Exception):
            int_range(bad)
    with pytest.raises(Exception):
        int_list("4,x")


def test_generate_smiley(tmp_path, capsys):
    code, out, _ = run(["generate", "smiley", "--n", "1000", "--seed", "1", "--out", tmp_path], capsys)
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "smiley.csv")))
    assert rows[0] == ["x1", "x2", "x3", "class"]
    assert len(rows) == 1001 and all(len(r) == 4 for r in rows)
    assert (tmp_path / "manifest.txt").exists()


def test_fit_writes_artifacts(smiley_csv, tmp_path, capsys):
    argv = ["fit", "--data", smiley_csv, "--labels", "class", "--h", "2", "--k", "4,1", "--r", "2,1",
            "--starts", "2", "--iters", "40", "--seed", "7", "--out", tmp_path]
    code, out, _ = run(argv, capsys)
    assert code == 0
    for name in ("params.txt", "labels.csv", "trace.csv", "manifest.txt"):
        assert (tmp_path / name).exists()
    assert "ARI:" in out and "BIC:" in out and "log-likelihood:" in out
    params = load_params(tmp_path / "params.txt")
    assert params.spec.k == (4, 1) and params.spec.r == (2, 1)
    manifest = dict(ln.rstrip("\n").split(" = ", 1) for ln in open(tmp_path / "manifest.txt"))
    for key in ("library_version", "kernel_backend", "dataset", "config.seed", "wall_seconds"):
        assert key in manifest
    trace = list(csv.reader(open(tmp_path / "trace.csv")))
    assert trace[0] == ["iteration", "loglik"] and len(trace) > 1


def test_fit_rerun_is_byte_identical(smiley_csv, tmp_path, capsys):
    argv = ["fit", "--data", smiley_csv, "--labels", "class", "--k", "4,1", "--r", "2,1",
            "--starts", "2", "--iters", "30", "--seed", "7", "--out"]
    assert run(argv + [tmp_path / "a"], capsys)[0] == 0
    assert run(argv + [tmp_path / "b"], capsys)[0] == 0
    for name in ("labels.csv", "params.txt", "trace.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_fit_rejects_bad_chain(smiley_csv, tmp_path, capsys):
    code, _, err = run(["fit", "--data", smiley_csv, "--labels", "class", "--k", "4,1", "--r", "1,2",
                        "--out", tmp_path], capsys)
    assert code == 2
    assert "p > r1 > ... > rh >= 1" in err


def test_fit_usage_errors(smiley_csv, tmp_path, capsys):
    assert run(["fit", "--data", tmp_path / "missing.csv", "--k", "1", "--r", "1", "--out", tmp_path],
               capsys)[0] == 2
    assert run(["fit", "--data", smiley_csv, "--labels", "class", "--h", "3", "--k", "4,1", "--r", "2,1",
                "--out", tmp_path], capsys)[0] == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n3,oops\n")
    code, _, err = run(["fit", "--data", bad, "--k", "1", "--r", "1", "--out", tmp_path], capsys)
    assert code == 2 and "row" in err


def test_predict_matches_fit_labels(smiley_csv, tmp_path, capsys):
    assert run(["fit", "--data", smiley_csv, "--labels", "class", "--k", "4,1", "--r", "2,1",
                "--starts", "1", "--iters", "30", "--standardize", "--out", tmp_path / "fit"], capsys)[0] == 0
    code, out, _ = run(["predict", "--data", smiley_csv, "--labels", "class",
                        "--params", tmp_path / "fit" / "params.txt", "--out", tmp_path / "pred"], capsys)
    assert code == 0 and "ARI:" in out
    assert (tmp_path / "pred" / "labels.csv").read_bytes() == (tmp_path / "fit" / "labels.csv").read_bytes()


def test_predict_rejects_bad_parameter_file(smiley_csv, tmp_path, capsys):
    bogus = tmp_path / "p.txt"
    bogus.write_text("hello\n")
    assert run(["predict", "--data", smiley_csv, "--labels", "class", "--params", bogus,
                "--out", tmp_path], capsys)[0] == 2


def test_select_dry_run_three_dims(smiley_csv, capsys):
    code, out, _ = run(["select", "--data", smiley_csv, "--labels", "class", "--k1", "4", "--h", "2",
                        "--dry-run"], capsys)
    assert code == 0
    assert "grid size: 5" in out
    assert out.splitlines()[1:] == [f"h=2 k=(4,{k}) r=(2,1)" for k in range(1, 6)]


def test_select_grid_size_seven_dims(tmp_path, capsys):
    rng = np.random.default_rng(0)
    path = tmp_path / "p7.csv"
    np.savetxt(path, rng.standard_normal((30, 7)), delimiter=",", header=",".join(f"v{i}" for i in range(7)),
               comments="")
    code, out, _ = run(["select", "--data", path, "--k1", "2", "--h", "1..3", "--k2", "1..2", "--dry-run"],
                       capsys)
    hand = sum(math.comb(6, h) * 2 ** (h - 1) for h in (1, 2, 3))
    assert code == 0 and f"grid size: {hand}" in out
    assert len(out.strip().splitlines()) == hand + 1


def test_select_empty_grid(smiley_csv, capsys):
    code, _, err = run(["select", "--data", smiley_csv, "--labels", "class", "--k1", "4", "--h", "3",
                        "--dry-run"], capsys)
    assert code == 2 and "empty grid" in err


def test_select_smiley_table(smiley_csv, tmp_path, capsys):
    code, out, _ = run(["select", "--data", smiley_csv, "--labels", "class", "--k1", "4", "--h", "2",
                        "--k2", "1..5", "--r", "2,1", "--starts", "1", "--iters", "25", "--out", tmp_path],
                       capsys)
    assert code == 0 and "candidates: 5" in out
    rows = list(csv.reader(open(tmp_path / "scores.csv")))
    assert rows[0] == ["h", "k", "r", "loglik", "n_params", "bic", "ari", "runtime_s"]
    assert len(rows) == 6
    assert sorted(r[1] for r in rows[1:]) == [f"4-{k}" for k in range(1, 6)]
    bics = [float(r[5]) for r in rows[1:]]
    assert bics == sorted(bics)
    assert (tmp_path / "params.txt").exists()


def test_evaluate_identical(smiley_csv, capsys):
    code, out, _ = run(["evaluate", "--true", smiley_csv, "--pred", smiley_csv], capsys)
    assert code == 0
    assert "ARI: 1.000000" in out and "misclassification rate: 0.000000" in out


def test_evaluate_hand_example(tmp_path, capsys):
    write_label_file(tmp_path / "t.csv", [0, 0, 1, 1])
    write_label_file(tmp_path / "p.csv", [0, 1, 0, 1], name="label")
    code, out, _ = run(["evaluate", "--true", tmp_path / "t.csv", "--pred", tmp_path / "p.csv"], capsys)
    assert code == 0
    assert "ARI: -0.500000" in out and "misclassification rate: 0.500000" in out


def test_evaluate_length_mismatch(tmp_path, capsys):
    write_label_file(tmp_path / "t.csv", [0, 0, 1])
    write_label_file(tmp_path / "p.csv", [0, 1])
    code, _, err = run(["evaluate", "--true", tmp_path / "t.csv", "--pred", tmp_path / "p.csv"], capsys)
    assert code == 2 and "length" in err


def test_read_labels_column_choice(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,class,b\n1,x,2\n3,y,4\n")
    assert read_labels(path) == ["x", "y"]
    assert read_labels(path, "b") == ["2", "4"]


def test_reproduce_single_small_replicate(tmp_path, capsys):
    code, out, _ = run(["reproduce", "smiley", "--replicates", "1", "--starts", "1", "--n", "150",
                        "--out", tmp_path], capsys)
    assert code == 0 and "replicate   0" in out
    rows = list(csv.reader(open(tmp_path / "replicates.csv")))
    assert len(rows) == 2 and rows[0][:3] == ["replicate", "k2", "ari"]


def test_inputs_are_not_modified(smiley_csv, tmp_path, capsys):
    before = smiley_csv.read_bytes()
    run(["fit", "--data", smiley_csv, "--labels", "class", "--k", "2", "--r", "1", "--starts", "1",
         "--iters", "25", "--out", tmp_path], capsys)
    assert smiley_csv.read_bytes() == before
    assert load_csv(smiley_csv, label_column="class").n == 300


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
