import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from extremal_range import io
from extremal_range.config import dump_config, load_config, normalize_config, parse_config
from extremal_range.exceptions import ConfigError, DomainError
from extremal_range.experiments import ExperimentConfig, Table
from extremal_range.geometry import ExcursionMask, distance_transform
from extremal_range.randfield import GridField, GridSpec


class TestConfigParsing:
    def test_empty_gives_defaults(self):
        assert parse_config("") == ExperimentConfig()
        assert parse_config("# only a comment\n\n") == ExperimentConfig()

    def test_values(self):
        cfg = parse_config("models = gaussian, mixture\nquantiles = 0.9, 0.99  # two\n"
                           "nreps = 200\nlattice = false\nrmax = 0.05\n")
        assert cfg.models == ("gaussian", "mixture")
        assert cfg.quantiles == (0.9, 0.99)
        assert cfg.n_replicates == 200 and cfg.lattice_correction is False
        assert cfg.r_max == 0.05

    def test_negative_reps_names_line(self):
        with pytest.raises(ConfigError, match=r"cfg:2: nreps = -5"):
            parse_config("seed = 1\nnreps = -5\n", "cfg")

    @pytest.mark.parametrize("text, pattern", [
        ("colour = red", "unknown key"),
        ("seed 3", "expected 'key = value'"),
        ("seed = 1\nseed = 2", "duplicate key"),
        ("nside = abc", "invalid value"),
        ("nside = 60", "odd"),
        ("thresholds = 1\nquantiles = 0.9", "either thresholds or quantiles"),
        ("quantiles = 0.5, 1.5", r"\(0, 1\)"),
    ])
    def test_errors(self, text, pattern):
        with pytest.raises(ConfigError, match=pattern):
            parse_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.cfg")

    def test_load(self, tmp_path):
        p = tmp_path / "a.cfg"
        p.write_text("seed = 42\n")
        assert load_config(p).seed == 42


configs = st.builds(
    ExperimentConfig,
    models=st.lists(st.sampled_from(["gaussian", "student", "chisq", "mixture"]), min_size=1,
                    max_size=3, unique=True).map(tuple),
    n_side=st.integers(1, 60).map(lambda k: 2 * k + 1),
    spacing=st.floats(1e-4, 1.0),
    ell=st.floats(1e-3, 10.0),
    alpha=st.floats(0.1, 10.0),
    quantiles=st.lists(st.floats(0.001, 0.999), max_size=4).map(tuple),
    n_replicates=st.integers(50, 10 ** 6),
    seed=st.integers(0, 2 ** 64 - 1),
    r_max=st.none() | st.floats(1e-3, 1.0),
    lattice_correction=st.booleans(),
    slope_method=st.sampled_from(["polynomial", "spline"]),
    threads=st.integers(1, 64),
)


@settings(max_examples=100)
@given(configs)
def test_config_round_trip(cfg):
    text = dump_config(cfg)
    assert parse_config(text) == cfg
    assert normalize_config(text) == text


def test_normalize_matches_dump():
    raw = "# sample\nseed=3\n  models =  gaussian ,chisq\nnreps = 100\n"
    assert normalize_config(raw) == dump_config(parse_config(raw))


class TestFiles:
    def test_grid_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        vals = rng.standard_normal((7, 7)) * 10.0 ** rng.integers(-300, 300, (7, 7))
        f = GridField(GridSpec(7, 1 / 60), vals, "student", 2 ** 63 + 5)
        g = io.read_grid(io.write_grid(tmp_path / "f.grid", f))
        np.testing.assert_array_equal(g.values, vals)
        assert (g.model, g.seed, g.spec) == ("student", 2 ** 63 + 5, f.spec)

    def test_grid_header(self, tmp_path):
        f = GridField(GridSpec(3, 0.5), np.zeros((3, 3)), "gaussian", 7)
        lines = io.write_grid(tmp_path / "f.grid", f).read_text().splitlines()
        assert lines[:4] == ["nside=3", "spacing=0.5", "model=gaussian", "seed=7"]

    def test_grid_errors(self, tmp_path):
        p = tmp_path / "bad.grid"
        p.write_text("nside=3\nspacing=0.5\nmodel=gaussian\nseed=1\n1 2 3\n")
        with pytest.raises(DomainError, match="expected 9 values"):
            io.read_grid(p)
        p.write_text("nside=3\nmodel=gaussian\n")
        with pytest.raises(DomainError):
            io.read_grid(p)

    def test_mask_round_trip(self, tmp_path):
        bits = np.random.default_rng(1).random((9, 9)) < 0.5
        m = ExcursionMask(GridSpec(9, 0.1), bits, 1.25)
        path = io.write_mask(tmp_path / "m.mask", m, "chisq", 3)
        back, head = io.read_mask(path)
        np.testing.assert_array_equal(back.bits, bits)
        assert back.threshold == 1.25 and head["model"] == "chisq"
        assert path.read_text().splitlines()[5] == "".join("1" if b else "0" for b in bits[0])

    def test_mask_bad_character(self, tmp_path):
        p = tmp_path / "m.mask"
        p.write_text("nside=1\nspacing=1.0\nmodel=g\nseed=0\nthreshold=0.0\n2\n")
        with pytest.raises(DomainError):
            io.read_mask(p)

    def test_distance_file(self, tmp_path):
        m = ExcursionMask(GridSpec(3, 1.0), np.ones((3, 3), bool))
        text = io.write_distance(tmp_path / "d.txt", distance_transform(m, "ignore")).read_text()
        assert text.split() == ["inf"] * 9

    def test_table(self, tmp_path):
        t = Table("t", ("a", "b"), [(0.1, 1), (1 / 3, 2)])
        rows = io.read_table(io.write_table(tmp_path / "t.csv", t))
        assert float(rows[1]["a"]) == 1 / 3 and rows[0]["b"] == "1"
