import csv

import numpy as np
import pytest

from extremal_range import io
from extremal_range.cli import parse_and_dispatch
from extremal_range.geometry import ExcursionMask
from extremal_range.randfield import GridSpec


def run(argv, capsys):
    code = parse_and_dispatch([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


class TestBasics:
    def test_theory_value(self, capsys):
        code, out, _ = run(["theory", "--gaussian-slope", "--u", 0, "--nu", 2.5, "--ell", 0.1],
                           capsys)
        assert code == 0 and out.strip() == "12.910"

    def test_theory_quantile(self, capsys):
        code, out, _ = run(["theory", "--mixture-slope", "--p", 0.99, "--digits", 6], capsys)
        assert code == 0 and float(out) > 0

    def test_unknown_subcommand(self, capsys):
        code, _, err = run(["paint"], capsys)
        assert code == 1 and "usage" in err

    def test_unknown_flag(self, capsys):
        code, _, err = run(["theory", "--gaussian-slope", "--u", 0, "--colour"], capsys)
        assert code == 1 and "usage" in err

    def test_seed_required(self, capsys, tmp_path):
        code, _, err = run(["fig3", "--out", tmp_path], capsys)
        assert code == 1 and "--seed" in err

    def test_selftest(self, capsys):
        code, out, _ = run(["selftest"], capsys)
        assert code == 0 and out.count("PASS") == 3


class TestFilePipeline:
    def test_simulate_is_deterministic(self, capsys, tmp_path):
        for name in ("a.grid", "b.grid"):
            code, _, _ = run(["simulate", "--model", "gaussian", "--n", 21, "--seed", 7,
                              "--out", tmp_path / name], capsys)
            assert code == 0
        assert (tmp_path / "a.grid").read_bytes() == (tmp_path / "b.grid").read_bytes()

    def test_mask_and_edt(self, capsys, tmp_path):
        run(["simulate", "--n", 15, "--seed", 1, "--u", 0.5, "--out", tmp_path / "f.grid"], capsys)
        code, _, _ = run(["mask", "--in", tmp_path / "f.grid", "--u", 0.5,
                          "--out", tmp_path / "f.mask"], capsys)
        assert code == 0
        mask, _ = io.read_mask(tmp_path / "f.mask")
        assert mask.bits[7, 7]
        code, out, _ = run(["edt", "--in", tmp_path / "f.mask"], capsys)
        d = np.array([[float(v) for v in line.split()] for line in out.splitlines()])
        assert code == 0 and d.shape == (15, 15) and d[7, 7] > 0

    def test_edt_all_false(self, capsys, tmp_path):
        m = ExcursionMask(GridSpec(5, 0.1), np.zeros((5, 5), bool), 0.0)
        io.write_mask(tmp_path / "z.mask", m)
        code, out, _ = run(["edt", "--in", tmp_path / "z.mask"], capsys)
        assert code == 0 and set(out.split()) == {"0.0"}

    def test_cdf_from_masks(self, capsys, tmp_path):
        paths = []
        for k in range(3):
            run(["simulate", "--n", 15, "--seed", k, "--u", 1.0, "--out", tmp_path / f"{k}.grid"],
                capsys)
            run(["mask", "--in", tmp_path / f"{k}.grid", "--u", 1.0,
                 "--out", tmp_path / f"{k}.mask"], capsys)
            paths.append(tmp_path / f"{k}.mask")
        code, out, _ = run(["cdf", "--in", *paths, "--nboot", 20, "--radii-max", 0.1], capsys)
        rows = list(csv.DictReader(out.splitlines()))
        assert code == 0 and rows[0].keys() == {"r", "cdf", "ci_low", "ci_high"}

    def test_slope_simulated(self, capsys):
        code, out, _ = run(["slope", "--n", 21, "--u", 1.0, "--nreps", 100, "--nboot", 20,
                            "--seed", 3], capsys)
        assert code == 0 and out.startswith("slope=")

    def test_chi_simulated(self, capsys):
        code, out, err = run(["chi", "--n", 21, "--p", 0.9, "--nreps", 60, "--nboot", 20,
                              "--seed", 3, "--radii-max", 0.1], capsys)
        assert code == 0 and out.startswith("r,phi") and "f_prime_at_0=" in err


class TestErrors:
    def test_bad_config(self, capsys, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("nreps = -5\n")
        code, _, err = run(["fig3", "--seed", 1, "--config", cfg], capsys)
        assert code == 1 and "bad.cfg:1" in err

    def test_missing_input(self, capsys, tmp_path):
        code, _, _ = run(["mask", "--in", tmp_path / "none.grid", "--u", 0,
                          "--out", tmp_path / "x"], capsys)
        assert code == 1

    def test_even_grid(self, capsys, tmp_path):
        code, _, _ = run(["simulate", "--n", 20, "--seed", 1, "--out", tmp_path / "f"], capsys)
        assert code == 1

    def test_numeric_failure(self, capsys, tmp_path):
        # conditioning far beyond double-precision tail probabilities
        code, _, err = run(["simulate", "--n", 5, "--seed", 1, "--u", 60,
                            "--out", tmp_path / "f"], capsys)
        assert code == 2 and "numerical failure" in err


class TestExperiments:
    def test_fig3_writes_into_out(self, capsys, tmp_path):
        cfg = tmp_path / "small.cfg"
        cfg.write_text("nside = 21\nnreps = 60\nnboot = 20\nradii_max = 0.1\nthreads = 2\n")
        out_dir = tmp_path / "res"
        code, out, _ = run(["fig3", "--seed", 5, "--config", cfg, "--thresholds", "1",
                            "--out", out_dir], capsys)
        assert code == 0
        written = sorted(p.name for p in out_dir.iterdir())
        assert written == ["fig3_cdf.csv", "fig3_manifest.json", "fig3_slope.csv"]
        assert all(str(out_dir) in line for line in out.splitlines())

    def test_counterexample(self, capsys, tmp_path):
        code, _, err = run(["counterexample", "--seed", 2, "--nreps", 30, "--levels", "2,4",
                            "--out", tmp_path], capsys)
        assert code == 0 and "bound=" in err
        assert (tmp_path / "counterexample.csv").exists()
