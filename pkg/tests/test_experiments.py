import json
import math

import numpy as np
import pytest

from extremal_range.exceptions import ConfigError, NumericalError
from extremal_range.experiments import (ExperimentConfig, ResultRow, derived_seed,
                                        run_counterexample, run_fig3, run_fig4, run_fig6,
                                        run_rv_stability, theory_slope, with_overrides)
from extremal_range.randfield import make_model

SMALL = dict(n_side=31, n_replicates=80, n_bootstrap=50, oracle_replicates=100,
             radii_max=10 / 60, seed=11)


@pytest.fixture(scope="module")
def fig3_small():
    return run_fig3(ExperimentConfig(models=("gaussian", "chisq"), thresholds=(1.0, 2.0), **SMALL))


class TestConfig:
    def test_too_few_replicates(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(thresholds=(1.0,), n_replicates=0).validate()

    def test_both_modes(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(thresholds=(1.0,), quantiles=(0.9,)).validate()

    def test_no_levels(self):
        with pytest.raises(ConfigError):
            ExperimentConfig().validate()

    @pytest.mark.parametrize("p", [0.0, 1.0, 1.2])
    def test_quantile_range(self, p):
        with pytest.raises(ConfigError):
            ExperimentConfig(quantiles=(p,)).validate()

    def test_radii_inside_window(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(thresholds=(1.0,), n_side=11, radii_max=0.5).validate()

    def test_overrides(self):
        cfg = with_overrides(ExperimentConfig(), seed=5, threads=None)
        assert cfg.seed == 5 and cfg.threads == 1

    def test_derived_seed(self):
        assert derived_seed(1, 2) == derived_seed(1, 2) != derived_seed(1, 3)
        assert 0 <= derived_seed(2 ** 64 - 1, 7) < 2 ** 64


def test_row_interval_must_bracket():
    with pytest.raises(NumericalError):
        ResultRow("gaussian", "absolute", 1.0, 1.0, 1.0, "slope", 2.0, 0.0, 1.0, 1.0, 0.0, 50, 0)


class TestFig3:
    def test_rows(self, fig3_small):
        recs = fig3_small.tables["slope"].records()
        assert len(recs) == 8
        assert {r["kind"] for r in recs} == {"slope", "lkc_ratio"}
        for r in recs:
            assert r["ci_low"] <= r["value"] <= r["ci_high"]
            assert math.isfinite(r["theory"])

    def test_oracle_se(self, fig3_small):
        recs = fig3_small.tables["slope"].records()
        assert all(r["theory_se"] == 0 for r in recs if r["model"] == "gaussian")
        assert all(r["theory_se"] > 0 for r in recs if r["model"] == "chisq")

    def test_cdf_table(self, fig3_small):
        t = fig3_small.tables["cdf"]
        for (m, lvl), grp in _groups(t.records()).items():
            p = [r["cdf"] for r in grp]
            assert np.all(np.diff(p) >= 0)

    def test_requires_absolute(self):
        with pytest.raises(ConfigError):
            run_fig3(ExperimentConfig(quantiles=(0.9,), **SMALL))

    def test_polkadot_rejected(self):
        with pytest.raises(ConfigError):
            run_fig3(ExperimentConfig(models=("polkadot",), thresholds=(1.0,), **SMALL))

    def test_write(self, fig3_small, tmp_path):
        paths = fig3_small.write(tmp_path)
        names = sorted(p.name for p in paths)
        assert names == ["fig3_cdf.csv", "fig3_manifest.json", "fig3_slope.csv"]
        manifest = json.loads((tmp_path / "fig3_manifest.json").read_text())
        assert manifest["seed"] == 11 and manifest["config"]["n_side"] == 31
        header = (tmp_path / "fig3_slope.csv").read_text().splitlines()[0]
        assert header.startswith("model,mode,level,threshold,abscissa,kind,value")


def _groups(recs):
    out = {}
    for r in recs:
        out.setdefault((r["model"], r["level"]), []).append(r)
    return out


@pytest.fixture(scope="module")
def fig4():
    return run_fig4(ExperimentConfig(models=("gaussian", "mixture"), quantiles=(0.9, 0.99),
                                     **SMALL))


class TestQuantileRunners:
    def test_abscissa(self, fig4):
        for r in fig4.tables["slope"].records():
            assert r["abscissa"] == pytest.approx(-math.log1p(-r["level"]))
            assert r["mode"] == "quantile"

    def test_gaussian_theory_increasing(self, fig4):
        th = [r["theory"] for r in fig4.tables["slope"].records() if r["model"] == "gaussian"]
        assert th[1] > th[0]

    def test_fig6_theory_identity(self, fig4):
        f6 = run_fig6(ExperimentConfig(models=("gaussian", "mixture"), quantiles=(0.9, 0.99),
                                       **SMALL))
        t4 = {(r["model"], r["level"]): r["theory"] for r in fig4.tables["slope"].records()}
        for r in f6.tables["fprime"].records():
            assert r["theory"] == -t4[(r["model"], r["level"])] / math.pi
            assert r["value"] < 0

    def test_prop3_table(self, fig4):
        oks = fig4.tables["prop3"].column("ok")
        assert fig4.summary["prop3_ok"] and all(v == 1 for v in oks)

    def test_theory_slope_mixture(self):
        cfg = ExperimentConfig()
        v, se = theory_slope(make_model("mixture"), 2.0, cfg, cfg.grid())
        assert se == 0 and v > 0


class TestCounterexample:
    def test_bound_and_trend(self):
        res = run_counterexample(200, (2.0, 8.0), seed=3)
        recs = res.tables["ranges"].records()
        assert all(r["max_range"] < math.sqrt(2) / r["threshold"] for r in recs)
        assert recs[1]["median_range"] < recs[0]["median_range"]
        assert res.summary["median_decreasing"]

    def test_zero_replicates(self):
        with pytest.raises(ConfigError):
            run_counterexample(0)

    def test_levels_positive(self):
        with pytest.raises(ConfigError):
            run_counterexample(10, (0.0, 1.0))


class TestRvStability:
    def test_single_level(self):
        with pytest.raises(ConfigError):
            run_rv_stability(ExperimentConfig(models=("mixture",), quantiles=(0.95,), **SMALL))

    def test_pairs(self):
        cfg = ExperimentConfig(models=("mixture",), quantiles=(0.95, 0.99, 0.995), **SMALL)
        res = run_rv_stability(cfg)
        pairs = res.tables["pairs"].records()
        assert len(pairs) == 3
        assert res.summary["stable"]["mixture"] == all(p["within_bands"] for p in pairs)


def test_thread_count_does_not_change_results():
    cfg = ExperimentConfig(models=("gaussian",), thresholds=(0.5, 1.5), **SMALL)
    a = run_fig3(cfg).tables["slope"].rows
    b = run_fig3(with_overrides(cfg, threads=3)).tables["slope"].rows
    assert a == b
