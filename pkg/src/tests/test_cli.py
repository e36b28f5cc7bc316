import json
from pathlib import Path

import pytest

from vlcakit import cli
from vlcakit.config import ToolkitConfig
from vlcakit.errors import ConfigInvalid
from vlcakit.validation.config_validator import ConfigValidator

SCENARIOS = Path(__file__).resolve().parents[2] / 'scenarios'


@pytest.fixture()
def write_config(tmp_path: Path):
    def write(text: str, name: str = 'run.cfg') -> str:
        path = tmp_path / name
        path.write_text(text, encoding='utf-8')
        return str(path)
    return write


def test_run_margins(write_config, tmp_path: Path, capsys) -> None:
    config = write_config("scenario = margins\n")

    code = cli.main(['run', config, '--out', str(tmp_path / 'out')])

    assert code == cli.EXIT_OK
    manifest = json.loads((tmp_path / 'out' / 'margins' / 'manifest.json').read_text(encoding='utf-8'))
    assert manifest['status'] == 'ok'
    assert 'manifest.json' in capsys.readouterr().out


def test_output_root_follows_environment(write_config, tmp_path: Path, monkeypatch) -> None:
    monkeypatch.setattr(ToolkitConfig, 'OUTPUT_ROOT', str(tmp_path / 'env_out'))

    assert cli.main(['run', write_config("scenario = impact\n")]) == cli.EXIT_OK
    assert (tmp_path / 'env_out' / 'impact' / 'manifest.json').exists()


def test_validate_ok(write_config) -> None:
    assert cli.main(['validate', write_config("scenario = osc\ngains.delay_T = 0.001\n")]) == cli.EXIT_OK


def test_config_errors_exit_with_two(write_config, capsys) -> None:
    assert cli.main(['validate', write_config("scenario = margins\nactuator.k_r = -1\n")]) == cli.EXIT_CONFIG
    assert 'actuator.k_r: must be positive' in capsys.readouterr().err
    assert cli.main(['validate', write_config("")]) == cli.EXIT_CONFIG
    assert 'scenario' in capsys.readouterr().err


def test_validate_prints_every_diagnostic(write_config, capsys) -> None:
    config = write_config("scenario = margins\nactuator.k_r = -1\ngains.kp_typo = 1\n")

    assert cli.main(['validate', config]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert 'actuator.k_r: must be positive' in err
    assert 'gains.kp_typo: unknown key' in err


def test_set_overrides_file_values(write_config) -> None:
    path = write_config("scenario = margins\ngains.k_p = 4\n")
    assert cli.main(['validate', path, '--set', 'gains.kp_typo=1']) == cli.EXIT_CONFIG


def test_missing_file_is_a_config_error(tmp_path: Path) -> None:
    assert cli.main(['validate', str(tmp_path / 'absent.cfg')]) == cli.EXIT_CONFIG


def test_scenario_failure_exits_with_three(write_config, tmp_path: Path) -> None:
    config = write_config("scenario = materials\nweights.min_damping_Ns_per_m = 1e9\n")
    assert cli.main(['run', config, '--out', str(tmp_path / 'out')]) == cli.EXIT_SCENARIO


def test_sweep_values() -> None:
    assert cli.sweep_values('0.00025:0.001:0.00025') == [0.00025, 0.0005, 0.00075, 0.001]
    assert cli.sweep_values('0.001') is None
    assert cli.sweep_values('ideal_torque') is None
    with pytest.raises(ConfigInvalid):
        cli.sweep_values('1:0:0.5')


def test_sweep_configs_get_isolated_directories(tmp_path: Path) -> None:
    entries = {'scenario': 'margins', 'gains.delay_T': '0.0005:0.001:0.0005', 'gains.k_p': '3:4:1'}

    runs = cli.sweep_configs(entries, ConfigValidator(), str(tmp_path))

    assert len(runs) == 4
    names = [name for name, _, _ in runs]
    assert len(set(names)) == 4
    assert all('=' not in name and '/' not in name for name in names)
    _, assignment, config = runs[-1]
    assert assignment == {'gains.delay_T': 0.001, 'gains.k_p': 4.0}
    assert config.overrides['gains.delay_T'] == '0.001'
    assert config.output_dir.startswith(str(tmp_path))


def test_sweep_writes_summary(write_config, tmp_path: Path) -> None:
    config = write_config("scenario = margins\n")
    out = tmp_path / 'out'

    code = cli.main(['sweep', config, '--out', str(out), '--set', 'gains.delay_T=0.0005:0.001:0.0005'])

    assert code == cli.EXIT_OK
    lines = (out / 'margins' / 'sweep.csv').read_text(encoding='utf-8').splitlines()
    assert lines[0] == 'run,gains.delay_T,status'
    assert len(lines) == 3
    for line in lines[1:]:
        name = line.split(',')[0]
        assert (out / 'margins' / name / 'manifest.json').exists()


def test_sweep_without_range(write_config) -> None:
    assert cli.main(['sweep', write_config("scenario = margins\n")]) == cli.EXIT_CONFIG


@pytest.mark.parametrize('path', sorted(SCENARIOS.glob('*.cfg')), ids=lambda p: p.stem)
def test_shipped_scenarios_validate(path: Path) -> None:
    assert cli.main(['validate', str(path)]) == cli.EXIT_OK
