import asyncio
import json
from pathlib import Path

import numpy as np
import pytest

from dickescar.main import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, build_parser, exit_code, load_config, main, run_command
from dickescar.services.hamiltonian import default_n_max


def run(command, config):
    return asyncio.run(run_command(command, config))


def test_spectrum(run_config):
    envelope = run("spectrum", run_config)
    assert envelope['success'], envelope
    data = envelope['data']
    assert data['n_max'] >= default_n_max(run_config.model_params(), 0.0)
    assert data['sector_dims']['+1'] == data['dim']
    assert sum(data['sector_dims'].values()) == (data['n_max'] + 1) * 7
    assert data['converged_in_window']['+1'] > 0
    assert data['window_converged']
    assert data['ground_energy'] <= -2.125 + 1e-8
    assert not data['cache_hit']

    out = run_config.out_dir
    table = np.loadtxt(f"{out}/spectrum.txt")
    assert table.shape == (data['dim'], 5)
    assert np.all(np.diff(table[:, 1]) >= 0)
    assert "converged_in_window" in open(f"{out}/spectrum_summary.txt").read()

    assert run("spectrum", run_config)['data']['cache_hit']


def test_manifest_records_every_run(run_config):
    run("spectrum", run_config)
    bad = run_config.model_copy(update={'states': ['X9']})
    run("occupations", bad)
    with open(f"{run_config.out_dir}/run_manifest.jsonl") as handle:
        records = [json.loads(line) for line in handle]
    assert [r['command'] for r in records] == ["spectrum", "occupations"]
    assert records[0]['outcome'] == "success"
    assert records[0]['inputs']['config_hash'] == run_config.config_hash()
    assert records[1]['outcome'] == "error"
    assert "numpy" in records[0]['versions']


def test_dos(run_config):
    envelope = run("dos", run_config)
    assert envelope['success'], envelope
    data = envelope['data']
    assert data['points'] == 200
    assert data['plateau'] == pytest.approx(18.0)
    assert data['staircase']
    dos = np.loadtxt(f"{run_config.out_dir}/dos.txt")
    assert dos[0, 0] == pytest.approx(-2.125)
    assert np.all(np.diff(dos[:, 3]) >= 0)
    assert set(np.unique(dos[:, 2])) == {0.0, 1.0, 2.0}
    staircase = np.loadtxt(f"{run_config.out_dir}/dos_staircase.txt")
    assert np.all(np.diff(staircase[:, 1]) >= 0)


def test_occupations(run_config):
    envelope = run("occupations", run_config)
    assert envelope['success'], envelope
    data = envelope['data']
    assert len(data['states']) == 1
    assert data['states'][0].startswith("E")
    assert data['crossings'] == 0
    assert len(data['baseline_mean']) == len(run_config.alphas)
    assert data['baseline_mean'][0] == pytest.approx(1.0)

    out = run_config.out_dir
    curve = np.loadtxt(f"{out}/occupations/{data['states'][0]}.txt")
    assert curve.shape == (5, 5)
    assert len(list((Path(out) / "occupations" / "random").glob("*.txt"))) == 2
    summary = open(f"{out}/occupations/summary.txt").read()
    assert "random_mean" in summary


def test_husimi_grid(run_config):
    config = run_config.model_copy(update={'alphas': [0.0, 2.0]})
    envelope = run("husimi-grid", config)
    assert envelope['success'], envelope
    data = envelope['data']
    label = data['states'][0]
    assert data['contrast'][label]['0'] == pytest.approx(1.0)
    assert data['contrast'][label]['2'] > 1.0
    grid = np.loadtxt(f"{config.out_dir}/grids/{label}_alpha2.txt")
    assert grid.shape == (21 * 21, 4)


def test_random_state_selector(run_config):
    config = run_config.model_copy(update={'states': ['R5'], 'alphas': [1.0]})
    envelope = run("husimi-grid", config)
    assert envelope['success'], envelope
    assert envelope['data']['states'] == ["R5"]


@pytest.mark.parametrize("selector", ["X9", "E999"])
def test_bad_selector(run_config, selector):
    config = run_config.model_copy(update={'states': [selector]})
    envelope = run("occupations", config)
    assert not envelope['success']
    assert envelope['error']['code'] == "CONFIG_ERROR"
    assert exit_code(envelope) == EXIT_CONFIG


def test_scar_measure_without_catalog(run_config):
    envelope = run("scar-measure", run_config)
    assert envelope['error']['code'] == "CONFIG_ERROR"
    assert "orbit-hunt" in envelope['error']['message']


def test_exit_codes():
    assert exit_code({'success': True, 'data': {}}) == EXIT_OK
    assert exit_code({'success': False, 'error': {'code': 'NEWTON_DIVERGED'}}) == EXIT_NUMERICAL
    assert exit_code({'success': False, 'error': {'code': 'EMPTY_WINDOW'}}) == EXIT_NUMERICAL
    assert exit_code({'success': False, 'error': {'code': 'INTERNAL_ERROR'}}) == 1


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text("j=6\nsamples=500\n")
    args = build_parser().parse_args(["occupations", "--config", str(path), "--samples", "900",
                                      "--alpha", "1,2", "--states", "E3,R7"])
    config = load_config(args)
    assert config.j == 6.0
    assert config.samples == 900
    assert config.alphas == [1.0, 2.0]
    assert config.states == ["E3", "R7"]
    assert not config.images


def _dirs(tmp_path):
    return ["--cache-dir", str(tmp_path / "cache"), "--out-dir", str(tmp_path / "out")]


def test_main_success(tmp_path, capsys):
    code = asyncio.run(main(["spectrum", "--j", "2", "--window", "-1", "0", *_dirs(tmp_path)]))
    assert code == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data['window_converged']
    assert data['converged_in_window']['+1'] > 0


def test_explicit_cutoff_is_used_as_given(tmp_path, capsys):
    code = asyncio.run(main(["spectrum", "--j", "2", "--n-max", "60", "--window", "-1", "0", *_dirs(tmp_path)]))
    assert code == EXIT_OK
    assert json.loads(capsys.readouterr().out)['n_max'] == 60


def test_negative_window_flag():
    args = build_parser().parse_args(["spectrum", "--window", "-0.65", "-0.35"])
    config = load_config(args)
    assert config.window_bounds == pytest.approx((-0.65, -0.35))
    with pytest.raises(SystemExit):
        build_parser().parse_args(["spectrum", "--window", "-0.65"])


def test_main_domain_error_exit_code(tmp_path):
    code = asyncio.run(main(["spectrum", "--j", "1.3", "--n-max", "10", *_dirs(tmp_path)]))
    assert code == EXIT_NUMERICAL


def test_main_config_error_exit_code(tmp_path):
    assert asyncio.run(main(["occupations", "--samples", "0", *_dirs(tmp_path)])) == EXIT_CONFIG
    assert asyncio.run(main(["spectrum", "--config", str(tmp_path / "none.env"), *_dirs(tmp_path)])) == EXIT_CONFIG
