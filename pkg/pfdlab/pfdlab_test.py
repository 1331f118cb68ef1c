import json
import os

import pytest

from pfdlab.pfdlab import main


BAD_NETLIST = b"""* broken
.supply vdd vdd
.supply gnd gnd
.input in
M1 out in vdd PMOS
.end
"""


def _read(path):
  with open(path, 'rb') as fp:
    return fp.read()


def test_parse_error_exits_with_line(tmp_path, capsys):
  netlist = tmp_path / 'bad.net'
  netlist.write_bytes(BAD_NETLIST)
  assert main(['parse', str(netlist), '-o', str(tmp_path / 'out')]) == 1
  assert 'line 5' in capsys.readouterr().err


def test_parse_reference(tmp_path, capsys):
  out = str(tmp_path / 'out')
  assert main(['parse', '-o', out]) == 0
  assert '20 devices' in capsys.readouterr().out
  assert json.loads(_read(os.path.join(out, 'netlist.json')).decode('utf-8'))['components'] == 4
  assert os.path.isfile(os.path.join(out, 'pfdlab_log.txt'))


def test_validate_reference(tmp_path, capsys):
  assert main(['validate', '-o', str(tmp_path)]) == 0
  assert capsys.readouterr().out.strip().endswith('ok')


def test_deadzone_prints_picoseconds(tmp_path, capsys):
  assert main(['deadzone', '--model', 'behavioral', '--tsetup', '40ps', '--freq', '1e9', '-o', str(tmp_path)]) == 0
  assert capsys.readouterr().out.strip() == '40.0 ps'


def test_blindzone_comparison_preset(tmp_path, capsys):
  assert main(['blindzone', '--preset', 'comparison', '--threads', '1', '-o', str(tmp_path)]) == 0
  assert capsys.readouterr().out.strip() == '100.0 ps'


def test_montecarlo_is_reproducible(tmp_path):
  args = ['montecarlo', '--samples', '20', '--sigma', '0.10', '--phi', '0.2pi', '--freq', '1e9', '--seed', '7']
  first, second = str(tmp_path / 'a'), str(tmp_path / 'b')
  assert main(args + ['-o', first]) == 0
  assert main(args + ['--threads', '3', '-o', second]) == 0
  for name in ('montecarlo.csv', 'montecarlo.json', 'histogram_up.csv', 'histogram_down.csv'):
    assert _read(os.path.join(first, name)) == _read(os.path.join(second, name))
  assert _read(os.path.join(first, 'histogram_up.csv')).startswith(b'bin_lo_fs,bin_hi_fs,count\n')


def test_run_writes_vcd(tmp_path):
  assert main(['run', '--format', 'vcd', '--cycles', '2', '-o', str(tmp_path)]) == 0
  assert b'$timescale 1 fs $end' in _read(str(tmp_path / 'waveform.vcd'))


def test_dennard(tmp_path, capsys):
  assert main(['dennard', '--power', '1', '--from-node', '180', '--to-node', '28', '-o', str(tmp_path)]) == 0
  assert capsys.readouterr().out.strip() == '0.0241975 W'


def test_config_file_overrides_defaults(tmp_path, capsys):
  config = tmp_path / 'run.json'
  config.write_text(json.dumps({'pfd': {'t_setup': 10000}}))
  assert main(['deadzone', '--config', str(config), '-o', str(tmp_path)]) == 0
  assert capsys.readouterr().out.strip() == '10.0 ps'
  # flags win over the config file
  assert main(['deadzone', '--config', str(config), '--tsetup', '20ps', '-o', str(tmp_path)]) == 0
  assert capsys.readouterr().out.strip() == '20.0 ps'


def test_lock_runs(tmp_path):
  assert main(['lock', '--max-cycles', '300', '-o', str(tmp_path)]) == 0
  assert _read(str(tmp_path / 'lock_trace.csv')).startswith(b'time_fs,v_ctrl\n')


def test_usage_errors_exit_2():
  assert main(['deadzone', '--no-such-flag']) == 2
  assert main([]) == 2


@pytest.mark.parametrize('command', ['parse', 'validate', 'run', 'transfer', 'deadzone', 'blindzone', 'montecarlo',
                                     'pvt', 'lock', 'dennard', 'activity'])
def test_help_exits_0(command):
  assert main([command, '--help']) == 0


def test_config_frequency_below_flags(tmp_path, capsys):
  config = tmp_path / 'run.json'
  config.write_text(json.dumps({'measure': {'freq': 2e9}}))
  assert main(['blindzone', '--preset', 'comparison', '--threads', '1', '--config', str(config),
               '-o', str(tmp_path)]) == 0
  assert capsys.readouterr().out.strip() == '50.0 ps'
  assert main(['blindzone', '--preset', 'comparison', '--threads', '1', '--config', str(config), '--freq', '1e9',
               '-o', str(tmp_path)]) == 0
  assert capsys.readouterr().out.strip() == '100.0 ps'


def test_model_default_is_per_command(tmp_path):
  assert main(['deadzone', '-o', str(tmp_path)]) == 0
  assert json.loads(_read(str(tmp_path / 'deadzone.json')).decode('utf-8'))['model'] == 'behavioral'
  assert main(['montecarlo', '--samples', '4', '--threads', '1', '-o', str(tmp_path)]) == 0
  assert os.path.isfile(str(tmp_path / 'montecarlo.json'))
