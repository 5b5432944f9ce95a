"""CLI behaviour: reports, exit codes, byte stability, flag coverage."""

import numpy as np
import pytest

from heinfer.cli import main


@pytest.fixture(scope="module")
def tiny_weights(tmp_path_factory):
    path = tmp_path_factory.mktemp("weights") / "tiny.hews"
    assert main(["make-weights", "--model", "tiny", "-o", str(path), "--seed", "4"]) == 0
    return str(path)


VM = ["--vm-n", "32", "--depth-budget", "200"]


def test_infer_report_structure(tiny_weights, capsys):
    rc = main(["infer", "--weights", tiny_weights, "--random-input", "--seed", "2", *VM])
    assert rc == 0
    out = capsys.readouterr().out
    for label in ("Convolution", "Linear", "OpenAI Gym Library Blackbox", "Total"):
        assert label in out
    assert "action:" in out


def test_infer_reads_csv_input(tiny_weights, tmp_path, capsys):
    grid = np.random.default_rng(0).uniform(0, 1, size=(10, 12))
    path = tmp_path / "input.csv"
    np.savetxt(path, grid, delimiter=",")
    assert main(["infer", "--weights", tiny_weights, "--input", str(path), *VM]) == 0
    assert "action:" in capsys.readouterr().out


def test_infer_wrong_input_shape_exits_2(tiny_weights, tmp_path, capsys):
    path = tmp_path / "bad.csv"
    np.savetxt(path, np.ones((3, 3)), delimiter=",")
    assert main(["infer", "--weights", tiny_weights, "--input", str(path), *VM]) == 2


def test_infer_oracle_mode(tiny_weights, capsys):
    assert main(["infer", "--weights", tiny_weights, "--random-input", "--seed", "2",
                 "--oracle"]) == 0
    assert "action:" in capsys.readouterr().out


def test_corrupted_weights_exit_2(tiny_weights, tmp_path, capsys):
    blob = bytearray(open(tiny_weights, "rb").read())
    blob[len(blob) // 2] ^= 0x01
    bad = tmp_path / "bad.hews"
    bad.write_bytes(bytes(blob))
    assert main(["infer", "--weights", str(bad), "--random-input", *VM]) == 2
    assert "checksum" in capsys.readouterr().err


def test_depth_budget_exhaustion_exit_3(tiny_weights, capsys):
    rc = main(["infer", "--weights", tiny_weights, "--random-input",
               "--vm-n", "32", "--depth-budget", "5"])
    assert rc == 3
    err = capsys.readouterr().err
    assert "conv1" in err


def test_compare_with_check(tiny_weights, capsys):
    rc = main(["compare", "--weights", tiny_weights, "--num-inputs", "3",
               "--seed", "5", "--check", *VM])
    assert rc == 0
    out = capsys.readouterr().out
    assert "action R^2" in out
    assert "check passed" in out


def test_compare_reports_are_byte_stable(tiny_weights, tmp_path, capsys):
    outs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        rc = main(["compare", "--weights", tiny_weights, "--num-inputs", "2",
                   "--seed", "7", "--csv", str(path), *VM])
        assert rc == 0
        outs.append(path.read_bytes())
    capsys.readouterr()
    assert outs[0] == outs[1]


def test_sweep_filters_rows_and_monotonicity(tmp_path, capsys):
    path = tmp_path / "sweep.csv"
    rc = main(["sweep-filters", "--filters", "2,4", "--input-hw", "12x16",
               "--csv", str(path), "--seed", "3", "--vm-n", "64", "--depth-budget", "250"])
    assert rc == 0
    rows = path.read_text().strip().splitlines()
    assert len(rows) == 3  # header + one row per filter count
    counts = [int(r.split(",")[1]) for r in rows[1:]]
    assert counts[0] < counts[1]  # ct-mults grow with the filter count


def test_sweep_embeds_reference_measurements(tmp_path, capsys):
    path = tmp_path / "sweep16.csv"
    rc = main(["sweep-filters", "--filters", "16", "--input-hw", "12x16",
               "--csv", str(path), "--seed", "3", "--vm-n", "64", "--depth-budget", "250"])
    capsys.readouterr()
    assert rc == 0
    header, row = path.read_text().strip().splitlines()
    assert "reference_seconds" in header
    assert "4205.1" in row  # the published 16-filter timing


def test_approx_report_spot_values(tmp_path, capsys):
    path = tmp_path / "approx.csv"
    rc = main(["approx-report", "--csv", str(path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "rel err at x=1.0: 0.002549" in out
    assert "rel err at x=2.0: 0.005884" in out
    assert "limit x->0+: 0.012347" in out
    assert path.exists()


def test_make_weights_all_models(tmp_path):
    for model in ("student2",):
        path = tmp_path / f"{model}.hews"
        assert main(["make-weights", "--model", model, "-o", str(path), "--seed", "1"]) == 0
        assert path.stat().st_size > 0


def test_threads_env_does_not_change_results(tiny_weights, tmp_path, monkeypatch, capsys):
    paths = []
    for threads, name in (("1", "t1.csv"), ("3", "t3.csv")):
        monkeypatch.setenv("HEINFER_THREADS", threads)
        path = tmp_path / name
        rc = main(["compare", "--weights", tiny_weights, "--num-inputs", "3",
                   "--seed", "9", "--csv", str(path), *VM])
        assert rc == 0
        paths.append(path.read_bytes())
    capsys.readouterr()
    assert paths[0] == paths[1]


def test_literal_rotate_sum_flag_changes_rotation_count(tiny_weights, tmp_path, capsys):
    counts = []
    for extra, name in (([], "tree.csv"), (["--literal-rotate-sum"], "lit.csv")):
        path = tmp_path / name
        rc = main(["infer", "--weights", tiny_weights, "--random-input", "--seed", "2",
                   "--csv", str(path), *VM, *extra])
        assert rc == 0
        total_row = path.read_text().strip().splitlines()[-1].split(",")
        counts.append(int(total_row[3]))  # rotations column
    capsys.readouterr()
    assert counts[1] > counts[0]  # N-1 single-step rotations vs the log tree
