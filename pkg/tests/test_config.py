import pytest

from dickescar.errors import ConfigError
from dickescar.models import GridSpec, Parity, RunConfig
from dickescar.models.run_config import DEFAULT_ALPHAS


def test_defaults():
    config = RunConfig()
    assert config.parity is Parity.POSITIVE
    assert config.alphas == DEFAULT_ALPHAS
    assert config.alphas[0] == 0.0 and config.alphas[-1] == 4.0
    assert config.window_bounds == pytest.approx((-0.65, -0.35))
    assert config.grid_spec == GridSpec(n_Q=101, n_P=101)


def test_window_sets_center_and_width():
    config = RunConfig(window="-1.2, 0.0")
    assert config.window_center == pytest.approx(-0.6)
    assert config.window_width == pytest.approx(1.2)
    assert config.window_bounds == pytest.approx((-1.2, 0.0))


def test_comma_separated_lists():
    config = RunConfig(alphas="0, 0.5,2", states="E3,center", orbits="O1")
    assert config.alphas == [0.0, 0.5, 2.0]
    assert config.states == ["E3", "center"]
    assert config.orbits == ["O1"]


@pytest.mark.parametrize("field, value", [
    ("alphas", "1,-2"),
    ("alphas", ""),
    ("window", "0.5,0.1"),
    ("parity", "mixed"),
    ("shell_scheme", "grid"),
    ("samples", 0),
    ("omega", -1.0),
])
def test_invalid_values_raise_config_error(field, value):
    with pytest.raises(ConfigError):
        RunConfig.from_file(None, **{field: value})


def test_from_file_with_overrides(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("j=6\ngamma=0.8\nparity=both\nalphas=1,2\n# comment\nwindow=-1,-0.5\n")
    config = RunConfig.from_file(path, gamma=1.3, seed=None)
    assert config.j == 6.0
    assert config.gamma == 1.3
    assert config.parity is Parity.BOTH
    assert config.alphas == [1.0, 2.0]
    assert config.seed == 12345
    assert config.window_bounds == pytest.approx((-1.0, -0.5))


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("j=6\ncoupling=2\n")
    with pytest.raises(ConfigError, match="coupling"):
        RunConfig.from_file(path)


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        RunConfig.from_file("/nonexistent/run.env")


def test_model_params():
    params = RunConfig(omega=2.0, omega0=0.5, gamma=0.7, j=4).model_params()
    assert (params.omega, params.omega0, params.gamma, params.j) == (2.0, 0.5, 0.7, 4.0)


def test_config_hash_ignores_runtime_knobs(tmp_path):
    a = RunConfig(j=4, threads=1, out_dir=str(tmp_path / "a"))
    b = RunConfig(j=4, threads=8, out_dir=str(tmp_path / "b"), images=True)
    c = RunConfig(j=5)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert len(a.config_hash()) == 16


def test_ensure_dirs(tmp_path):
    config = RunConfig(cache_dir=str(tmp_path / "c" / "d"), out_dir=str(tmp_path / "o"))
    config.ensure_dirs()
    assert (tmp_path / "c" / "d").is_dir()
    assert (tmp_path / "o").is_dir()
