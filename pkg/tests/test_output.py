import numpy as np
import pytest

from dickescar.errors import ConfigError
from dickescar.models import GridSpec, HusimiGrid, OrbitCatalog, ScarMeasurement
from dickescar.services.output_service import OutputService, safe_name


@pytest.fixture
def output(tmp_path):
    return OutputService(str(tmp_path / "out"), "abc123")


def _grid():
    Q_axis, P_axis = GridSpec(n_Q=9, n_P=9).axes()
    QQ, PP = np.meshgrid(Q_axis, P_axis)
    values = np.where(QQ ** 2 + PP ** 2 < 4, np.exp(-(QQ ** 2 + PP ** 2)), np.nan)
    return HusimiGrid(Q_axis=Q_axis, P_axis=P_axis, values=values,
                      unconverged=np.zeros(values.shape, dtype=bool), label="E7", alpha=2.0, eps=-0.5)


def test_safe_name():
    assert safe_name("tube:O1") == "tube_O1"
    assert safe_name("E12") == "E12"
    assert safe_name("") == "unnamed"


def test_table_header(output):
    path = output.write_table("t/values.txt", ['a', 'b'], np.array([[1.0, 2.5], [3.0, 4.0]]),
                              comments=["eps=-0.5"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# dicke-scar format_version=1"
    assert lines[1] == "# config_hash=abc123"
    assert lines[2] == "# eps=-0.5"
    assert lines[3] == "# columns: a b"
    assert np.allclose(np.loadtxt(path), [[1.0, 2.5], [3.0, 4.0]])


def test_grid_file_keeps_nan_cells(output):
    path = output.write_grid(_grid())
    assert path.name == "E7_alpha2.txt"
    data = np.loadtxt(path)
    assert data.shape == (81, 4)
    assert np.isnan(data[:, 2]).any()
    assert not (output.root / "grids" / "E7_alpha2.png").exists()


def test_grid_image(tmp_path):
    output = OutputService(str(tmp_path / "out"), "abc123", images=True)
    output.write_grid(_grid())
    image = output.root / "grids" / "E7_alpha2.png"
    assert image.is_file()
    assert image.read_bytes()[:4] == b"\x89PNG"


def test_catalog_round_trip(output, boson_orbit):
    scar = {'O1': ScarMeasurement(state_label="E4", orbit_id="O1", eps=boson_orbit.energy, value=3.5,
                                  error=0.1, lyapunov=0.0, period=boson_orbit.period,
                                  numerator=0.7, denominator=0.2)}
    output.write_catalog(OrbitCatalog(orbits=[boson_orbit]), n_points=50, scar=scar)
    rows = output.read_catalog()
    assert len(rows) == 1
    row = rows[0]
    assert row['id'] == "O1"
    assert float(row['T']) == boson_orbit.period
    assert float(row['q']) == boson_orbit.x0.q
    assert float(row['P_k']) == 3.5
    path = np.loadtxt(output.root / "orbits" / "O1.txt")
    assert path.shape == (50, 5)


def test_catalog_without_scar_columns(output, boson_orbit):
    output.write_catalog(OrbitCatalog(orbits=[boson_orbit]), n_points=20)
    assert 'P_k' not in output.read_catalog()[0]


def test_missing_catalog(output):
    with pytest.raises(ConfigError, match="orbit-hunt"):
        output.read_catalog()


def test_scar_table_note(output):
    measurement = ScarMeasurement(state_label="E4", orbit_id="O2", eps=-0.5, value=1.7, error=0.05,
                                  lyapunov=0.3, period=5.0, numerator=0.34, denominator=0.2,
                                  note="state eps differs")
    path = output.write_scar_table([measurement])
    rows = [line for line in path.read_text().splitlines() if not line.startswith('#')]
    assert rows[0].split('\t')[-1] == "note"
    fields = rows[1].split('\t')
    assert fields[:2] == ["E4", "O2"]
    assert float(fields[4]) == pytest.approx(1.5)
    assert fields[-1] == "state eps differs"
