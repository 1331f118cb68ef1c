import numpy as np
import pytest

from pfdlab.core.netlist import build_reference_pfd, channel_connected_components, parse_netlist
from pfdlab.core.switch_sim import Level, LogicValue, NetlistValidationError, OscillationError, Origin, Stimulus, \
  StimulusError, clock_stimulus, compile_model, edge_stimulus, run, sample, solve_ccc
from pfdlab.utils.waveform_io import export_waveform, parse_waveform_csv


D = 10000

INVERTER = b"""* inverter
.supply vdd vdd
.supply gnd gnd
.input in
.output out
Mp out in vdd PMOS
Mn out in gnd NMOS
.end
"""

RING = b"""* three stage ring
.supply vdd vdd
.supply gnd gnd
.net a b c
Mp1 b a vdd PMOS
Mn1 b a gnd NMOS
Mp2 c b vdd PMOS
Mn2 c b gnd NMOS
Mp3 a c vdd PMOS
Mn3 a c gnd NMOS
.end
"""


def _states(netlist, **values):
  states = {name: LogicValue(Level.UNKNOWN, Origin.STORED) for name in netlist.net_names()}
  states[netlist.supply_high] = LogicValue(Level.ONE)
  states[netlist.supply_low] = LogicValue(Level.ZERO)
  for name, value in values.items():
    states[name] = value if isinstance(value, LogicValue) else LogicValue(Level(value))
  return states


def test_compile_default_and_override_delays():
  model = compile_model(build_reference_pfd())
  assert len(model.delays) == 20
  assert set(model.delays.values()) == {D}

  model = compile_model(build_reference_pfd(), delays={'N4': 0})
  assert model.delays['N4'] == 0 and model.delays['P4'] == D


def test_compile_rejects_invalid_netlist():
  netlist = parse_netlist(INVERTER)
  netlist.nets = [net for net in netlist.nets if net.kind != 'supply_low']
  with pytest.raises(NetlistValidationError):
    compile_model(netlist)


def test_solve_inverter():
  netlist = parse_netlist(INVERTER)
  comp = channel_connected_components(netlist)[0]
  assert solve_ccc(comp, _states(netlist, **{'in': 0}), netlist)['out'] == LogicValue(Level.ONE, Origin.DRIVEN)
  assert solve_ccc(comp, _states(netlist, **{'in': 1}), netlist)['out'] == LogicValue(Level.ZERO, Origin.DRIVEN)
  assert solve_ccc(comp, _states(netlist, **{'in': 2}), netlist)['out'].value == Level.UNKNOWN


def test_solve_isolated_node_keeps_charge():
  netlist = build_reference_pfd()
  comp = [c for c in channel_connected_components(netlist) if 'W2' in c.nets][0]
  # W1=1 turns P3 off, Ref=0 turns N3 off, Div=0 and X=0 cut b1 from Y: W2 is isolated
  states = _states(netlist, Ref=0, Div=0, X=0, W1=1, W2=LogicValue(Level.ZERO, Origin.DRIVEN))
  result = solve_ccc(comp, states, netlist)
  assert result['W2'] == LogicValue(Level.ZERO, Origin.STORED)


def test_solve_reference_precharges_w1():
  netlist = build_reference_pfd()
  comp = [c for c in channel_connected_components(netlist) if 'W1' in c.nets][0]
  result = solve_ccc(comp, _states(netlist, Ref=0, Div=0), netlist)
  assert result['W1'] == LogicValue(Level.ONE, Origin.DRIVEN)


def test_zero_delay_device_switches_instantly():
  model = compile_model(parse_netlist(INVERTER), delays={'p': 0, 'n': 0})
  waveform = run(model, edge_stimulus({'in': [(50000, 1)]}), 100000)
  assert waveform.transitions('out')[-1] == (50000, Level.ZERO)


def test_all_zero_inputs_settle():
  model = compile_model(build_reference_pfd())
  waveform = run(model, Stimulus(), 1000000)
  assert sample(waveform, ('W1', 'W3', 'a1', 'c2'), 1000000) == (Level.ONE,) * 4
  # no input edge yet: the state nets keep their power-on value
  assert sample(waveform, ('X', 'Y', 'W2', 'W4'), 1000000) == (Level.UNKNOWN,) * 4
  for net in waveform.traces:
    assert waveform.transitions(net)[-1][0] <= 3 * D
    assert waveform.transitions(net)[0][0] == 0


def test_first_edges_define_every_net():
  model = compile_model(build_reference_pfd())
  waveform = run(model, clock_stimulus(1000000, 100000, 400000), 3000000)
  for net in waveform.traces:
    assert waveform.value_at(net, 2100000) != Level.UNKNOWN, net
  assert waveform.value_at('X', 50000) == Level.UNKNOWN


def _cycles(t_ref, t_div, t_fall):
  return edge_stimulus({'Ref': [(t_ref, 1), (t_ref + t_fall, 0)], 'Div': [(t_div, 1), (t_div + t_fall, 0)]})


def test_cycle1_ref_rise_sets_x():
  model = compile_model(build_reference_pfd())
  t0 = 100000
  waveform = run(model, edge_stimulus({'Ref': [(t0, 1)]}), 400000)
  assert waveform.transitions('X')[-1] == (t0 + 2 * D, Level.ONE)
  # X set discharges Y through N10 and N3
  assert waveform.transitions('Y')[-1] == (t0 + 3 * D, Level.ZERO)
  assert sample(waveform, ('W1', 'W2', 'Y'), 400000) == (Level.ONE, Level.ZERO, Level.ZERO)
  # causality: nothing moves between settling and the Ref edge
  for net in ('X', 'Y', 'W2'):
    assert all(t < 4 * D or t > t0 for t, _ in waveform.transitions(net))


def test_lagging_div_clears_x_one_delay_later():
  model = compile_model(build_reference_pfd())
  waveform = run(model, _cycles(100000, 180000, 200000), 600000)
  assert waveform.transitions('X')[-2:] == [(120000, Level.ONE), (190000, Level.ZERO)]
  assert all(v == Level.ZERO for t, v in waveform.transitions('Y') if t > 100000)
  assert sample(waveform, ('X', 'Y', 'W1', 'W2', 'W3', 'W4'), 600000) == (Level.ZERO, Level.ZERO) + (Level.ONE,) * 4


def test_cycle2_div_rise_after_ref_fall_sets_y_then_clears_x():
  model = compile_model(build_reference_pfd())
  t_ref, t_div = 100000, 400000
  waveform = run(model, _cycles(t_ref, t_div, 150000), 1000000)
  x, y = waveform.transitions('X'), waveform.transitions('Y')
  # X holds through the interval with both inputs low
  assert waveform.value_at('X', t_div - 1) == Level.ONE
  y_rise = [t for t, v in y if v == Level.ONE and t > t_div][0]
  x_fall = [t for t, v in x if v == Level.ZERO and t > t_div][0]
  assert y_rise == t_div + 2 * D
  assert x_fall == t_div + 3 * D
  # Y waits for the next Ref edge
  assert sample(waveform, ('X', 'Y', 'W1', 'W3'), 1000000) == (Level.ZERO, Level.ONE, Level.ONE, Level.ONE)


def test_supplies_never_change():
  model = compile_model(build_reference_pfd())
  waveform = run(model, clock_stimulus(333333, 0, 80000), 3000000)
  assert waveform.transitions('vdd') == [(0, Level.ONE)]
  assert waveform.transitions('gnd') == [(0, Level.ZERO)]


def test_run_is_deterministic():
  model = compile_model(build_reference_pfd())
  stim = clock_stimulus(1000000, 0, 70000)
  first = export_waveform(run(model, stim, 5000000), 'csv')
  second = export_waveform(run(model, stim, 5000000), 'csv')
  assert first == second


def test_times_strictly_increase():
  model = compile_model(build_reference_pfd(), default_delay=3000)
  waveform = run(model, clock_stimulus(500000, 0, 260000), 4000000)
  for trace in waveform.traces.values():
    times = [t for t, _ in trace]
    assert times == sorted(set(times))


def test_oscillation_guard():
  start = {name: LogicValue(Level.ONE, Origin.STORED) for name in ('a', 'b', 'c')}
  model = compile_model(parse_netlist(RING), default_delay=0, initial_state=start, oscillation_bound=50)
  with pytest.raises(OscillationError):
    run(model, Stimulus(), 1000)


def test_ring_with_delay_oscillates_without_error():
  start = {name: LogicValue(Level(value), Origin.STORED) for name, value in (('a', 1), ('b', 0), ('c', 1))}
  model = compile_model(parse_netlist(RING), default_delay=1000, initial_state=start)
  waveform = run(model, Stimulus(), 60000)
  assert len(waveform.transitions('a')) > 5


def test_stimulus_errors():
  model = compile_model(build_reference_pfd())
  with pytest.raises(StimulusError):
    run(model, edge_stimulus({'X': [(1000, 1)]}), 10000)
  with pytest.raises(StimulusError):
    run(model, edge_stimulus({'Ref': [(1000, 1), (1000, 0)]}), 10000)
  with pytest.raises(StimulusError):
    run(model, clock_stimulus(1000, duty=1.0), 10000)


def test_csv_export_cycle1():
  model = compile_model(build_reference_pfd())
  waveform = run(model, edge_stimulus({'Ref': [(100000, 1)]}), 300000)
  rows = export_waveform(waveform, 'csv').decode('utf-8').splitlines()
  assert rows[0] == 'time_fs,net,value'
  x_one = rows.index('120000,X,1')
  # Y is discharged one delay after X rises
  assert [row for row in rows[x_one:] if row.split(',')[1] == 'Y'] == ['130000,Y,0']


def test_csv_roundtrip():
  model = compile_model(build_reference_pfd())
  waveform = run(model, clock_stimulus(1000000, 0, 120000), 3000000)
  parsed = parse_waveform_csv(export_waveform(waveform, 'csv'), horizon=waveform.horizon)
  assert parsed == waveform


def test_empty_waveform_csv_is_header_only():
  from pfdlab.core.switch_sim import WaveformSet
  assert export_waveform(WaveformSet(), 'csv') == b'time_fs,net,value\n'


def test_vcd_layout():
  model = compile_model(parse_netlist(INVERTER))
  waveform = run(model, edge_stimulus({'in': [(50000, 1)]}), 100000)
  lines = export_waveform(waveform, 'vcd').decode('utf-8').splitlines()
  assert '$timescale 1 fs $end' in lines
  assert sum(1 for line in lines if line.startswith('$var wire 1 ')) == 4
  assert '#50000' in lines and '#60000' in lines
  assert lines.index('$dumpvars') > lines.index('$enddefinitions $end')
  assert lines.index('#50000') < lines.index('#60000')


def _random_stimulus(rng, cycles):
  """ cycles starting with both inputs low: the leading input rises, the lagging one rises while the leader is still
  high, then both fall in either order; every edge lies 5 to 20 device delays after the previous one """
  edges = {'Ref': [], 'Div': []}
  times = []
  t = 10 * D
  gap = lambda: int(rng.integers(5 * D, 20 * D + 1))
  for _ in range(cycles):
    lead, lag = ('Ref', 'Div') if rng.random() < 0.5 else ('Div', 'Ref')
    first_fall = lead if rng.random() < 0.5 else lag
    for net, value in ((lead, 1), (lag, 1), (first_fall, 0), (lag if first_fall == lead else lead, 0)):
      t += gap()
      edges[net].append((t, value))
      times.append(t)
  return edges, times


def _assert_matches_behavioral(model, edges, times):
  from pfdlab.core.pfd_model import PfdConfig, simulate_pfd

  # the switch-level detector rises two delays after the leading edge, and the lagging edge clears it one delay
  # later with no exclusive pulse on the lagging output
  cfg = PfdConfig(t_setup=0, t_out_rise=2 * D, t_reset=0, t_out_fall=D)
  t_end = times[-1] + 8 * D
  waveform = run(model, edge_stimulus(edges), t_end)
  rises = {net: [t for t, v in items if v == 1] for net, items in edges.items()}
  trace = simulate_pfd(cfg, rises['Ref'], rises['Div'], t_end)
  for t in times:
    sample_at = t + 4 * D
    switch_levels = (int(waveform.value_at('X', sample_at)), int(waveform.value_at('Y', sample_at)))
    assert switch_levels == (trace.level('up', sample_at), trace.level('down', sample_at)), sample_at


def test_matches_behavioral_model():
  model = compile_model(build_reference_pfd())
  rng = np.random.default_rng(2024)
  for _ in range(1000):
    edges, times = _random_stimulus(rng, 3)
    _assert_matches_behavioral(model, edges, times)


def test_matches_behavioral_model_at_3ghz():
  model = compile_model(build_reference_pfd())
  period, t0, cycles = 333333, 10 * D, 6
  stim_rng = np.random.default_rng(3)
  for _ in range(300):
    # a constant phase error per stimulus, the lagging input rising before the leader falls
    dt = int(stim_rng.integers(5 * D, period // 2 - 5 * D + 1))
    offsets = (t0, t0 + dt) if stim_rng.random() < 0.5 else (t0 + dt, t0)
    t_end = t0 + dt + cycles * period
    per_net = clock_stimulus(period, *offsets).edges(t_end)
    edges = {net: [(t, int(v)) for t, v in items] for net, items in per_net.items()}
    times = sorted(t for items in edges.values() for t, _ in items)
    _assert_matches_behavioral(model, edges, times)
