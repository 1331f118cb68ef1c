import math

import numpy as np
import pytest

from pfdlab.core.pfd_model import EventKind, Mode, OutputTransition, PfdConfig, PfdContractError, PfdState, \
  comparison_preset, net_charge_per_cycle, pfd_step, simulate_pfd


CFG = PfdConfig(t_setup=40000, t_reset=30000, t_out_rise=10000, t_out_fall=10000)


def test_ref_edge_asserts_up():
  state, out = pfd_step(PfdState(), CFG, EventKind.REF_EDGE, 1000)
  assert state.mode == Mode.UP_ACTIVE and state.up and not state.down
  assert out == [OutputTransition(11000, 'up', 1)]


def test_div_edge_while_up_schedules_reset():
  state, _ = pfd_step(PfdState(), CFG, EventKind.REF_EDGE, 0)
  state, out = pfd_step(state, CFG, EventKind.DIV_EDGE, 100000)
  assert state.mode == Mode.RESETTING and state.up and state.down
  assert out == [OutputTransition(110000, 'down', 1)]

  state, out = pfd_step(state, CFG, EventKind.TIMER, state.pending_reset_at)
  assert state.mode == Mode.NULL and not state.up and not state.down
  falls = {tr.net: tr.time for tr in out}
  # both outputs overlap for exactly t_reset
  assert falls['up'] == falls['down'] == 110000 + CFG.t_reset


def test_out_of_order_event_is_rejected():
  state, _ = pfd_step(PfdState(), CFG, EventKind.REF_EDGE, 5000)
  with pytest.raises(PfdContractError):
    pfd_step(state, CFG, EventKind.DIV_EDGE, 4000)


def test_negative_config_is_rejected():
  with pytest.raises(PfdContractError):
    PfdConfig(t_reset=-1)


@pytest.mark.parametrize('rise, fall', [(10000, 10000), (5000, 25000), (25000, 5000), (0, 0)])
def test_resetting_lasts_t_reset(rise, fall):
  cfg = PfdConfig(t_reset=30000, t_out_rise=rise, t_out_fall=fall)
  state, _ = pfd_step(PfdState(), cfg, EventKind.REF_EDGE, 0)
  state, _ = pfd_step(state, cfg, EventKind.DIV_EDGE, 100000)
  assert state.mode == Mode.RESETTING and state.pending_reset_at == 130000
  state, out = pfd_step(state, cfg, EventKind.TIMER, 130000)
  assert state.mode == Mode.NULL
  assert {tr.time for tr in out} == {max(130000 + fall, 100000 + rise)}


def test_slow_fall_keeps_deferred_rise_after_release():
  cfg = PfdConfig(t_setup=0, t_reset=10000, t_out_rise=1000, t_out_fall=20000)
  trace = simulate_pfd(cfg, [0, 105000], [100000])
  ups = [(tr.time, tr.value) for tr in trace.transitions if tr.net == 'up']
  assert ups == [(1000, 1), (130000, 0), (130000, 1)]


def test_instant_reset_leaves_lagging_output_low():
  cfg = PfdConfig(t_setup=0, t_reset=0, t_out_rise=0, t_out_fall=0)
  trace = simulate_pfd(cfg, [0], [50000], 100000)
  downs = [(tr.time, tr.value) for tr in trace.transitions if tr.net == 'down']
  assert downs == [(50000, 1), (50000, 0)]
  assert trace.level('down', 60000) == 0 and trace.level('up', 60000) == 0
  assert [pulse.exclusive_width for pulse in trace.pulses_of('up')] == [50000]


def test_close_edges_are_sub_threshold():
  trace = simulate_pfd(CFG, [100000], [110000])
  up = trace.pulses_of('up')[0]
  assert up.exclusive_width == 10000
  assert up.sub_threshold
  assert trace.pulses_of('down')[0].sub_threshold


def test_wide_pulse_is_visible():
  trace = simulate_pfd(CFG, [100000], [160000])
  up = trace.pulses_of('up')[0]
  assert up.exclusive_width == 60000 and not up.sub_threshold
  assert up.width == 60000 + CFG.t_reset


def test_dead_zone_exactness():
  period = 1000000
  for separation in (0, 1, 39999, 40000, 40001, 250000):
    phi = 2 * math.pi * separation / period
    trace = simulate_pfd(CFG, [200000], [200000 + separation])
    leading = trace.pulses_of('up')[0]
    assert leading.sub_threshold == (abs(phi) / (2 * math.pi) * period < CFG.t_setup - 1e-6)


def test_min_effective_pulse_raises_threshold():
  cfg = PfdConfig(t_setup=40000, min_effective_pulse=60000)
  assert cfg.threshold == 60000
  assert simulate_pfd(cfg, [0], [50000]).pulses_of('up')[0].sub_threshold


def test_net_charge_examples():
  assert net_charge_per_cycle(CFG, 0.0, 1e9, 50e-6) == 0.0
  no_dead_zone = PfdConfig(t_setup=0)
  # 0.1 pi at 1 GHz is a 50 ps pulse
  assert net_charge_per_cycle(no_dead_zone, 0.1 * math.pi, 1e9, 1.0) == pytest.approx(50e-12)
  assert net_charge_per_cycle(CFG, 0.5 * math.pi, 1e9, 50e-6) == pytest.approx(12.5e-15)
  assert net_charge_per_cycle(CFG, 0.05 * math.pi, 1e9, 50e-6) == 0.0


def test_net_charge_antisymmetry():
  for phi in np.linspace(-math.pi, math.pi, 41):
    assert net_charge_per_cycle(CFG, -phi, 2e9, 1e-4) == -net_charge_per_cycle(CFG, phi, 2e9, 1e-4)


def _random_edges(rng, count, period):
  ref = np.cumsum(rng.integers(period // 2, 2 * period, size=count))
  div = np.cumsum(rng.integers(period // 2, 2 * period, size=count))
  return ref.tolist(), div.tolist()


def _intervals(trace, net):
  return [(p.rise, p.fall) for p in trace.pulses_of(net)]


def test_mutual_exclusion_randomized():
  rng = np.random.default_rng(1234)
  for _ in range(200):
    ref, div = _random_edges(rng, 30, 100000)
    trace = simulate_pfd(CFG, ref, div)
    downs = _intervals(trace, 'down')
    for rise, fall in _intervals(trace, 'up'):
      overlap = sum(max(0, min(fall, d_fall) - max(rise, d_rise)) for d_rise, d_fall in downs)
      assert overlap <= CFG.t_reset + CFG.t_out_rise


def test_no_missed_edges_without_blind_window():
  rng = np.random.default_rng(99)
  for _ in range(100):
    ref, div = _random_edges(rng, 40, 50000)
    assert simulate_pfd(CFG, ref, div).missed == 0

  # edges 1 fs apart are still both acted upon
  trace = simulate_pfd(CFG, [100000, 100001 + 200000], [100001, 300000])
  assert trace.missed == 0
  assert len(trace.pulses_of('up')) == 2


def test_comparison_preset_misses_edges_in_blind_window():
  cfg = comparison_preset(1e9)
  assert cfg.blind_window == 100000
  # a REF edge 50 ps after the reset starts is lost
  trace = simulate_pfd(cfg, [0, 60000], [10000])
  assert trace.missed == 1
  assert len(trace.pulses_of('up')) == 1


def test_edge_during_reset_is_deferred():
  trace = simulate_pfd(CFG, [0, 15000], [10000, 200000])
  assert trace.missed == 0
  ups = trace.pulses_of('up')
  assert len(ups) == 2
  assert ups[1].rise >= ups[0].fall


def _duty(trace, net, t_end):
  return sum(min(p.fall, t_end) - p.rise for p in trace.pulses_of(net)) / float(t_end)


def test_frequency_detection():
  t_end = 150 * 1000000
  fast = [k * 1000000 for k in range(150)]
  slow = [k * 1100000 for k in range(137)]
  forward = simulate_pfd(CFG, fast, slow, t_end)
  assert _duty(forward, 'up', t_end) - _duty(forward, 'down', t_end) > 0

  backward = simulate_pfd(CFG, slow, fast, t_end)
  assert _duty(backward, 'up', t_end) - _duty(backward, 'down', t_end) < 0


def test_simulate_is_deterministic():
  rng = np.random.default_rng(5)
  ref, div = _random_edges(rng, 50, 80000)
  assert simulate_pfd(CFG, ref, div) == simulate_pfd(CFG, ref, div)
