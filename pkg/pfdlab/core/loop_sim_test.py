import json
import math

import numpy as np
import pytest

from pfdlab.core.loop_sim import DelayLine, FilterTrajectory, LoopConfig, LoopFilter, export_lock_report, \
  initial_state, integrate_fixed_step, loop_advance, run_lock
from pfdlab.core.pfd_model import PfdConfig


NO_DEAD_ZONE = PfdConfig(t_setup=0)


def test_zero_current_keeps_voltage():
  traj = FilterTrajectory(LoopFilter(), 0.3, 0.3, 0.0, 1e-9)
  assert traj.state_at(1e-9) == (0.3, 0.3)


def test_up_pulse_charges_c1():
  # 100 ps at 50 uA into 10 pF
  traj = FilterTrajectory(LoopFilter(r=10e3, c1=10e-12), 0.2, 0.2, 50e-6, 100e-12)
  vc1, v = traj.state_at(100e-12)
  assert vc1 - 0.2 == pytest.approx(0.5e-3, abs=1e-12)
  assert v == pytest.approx(vc1 + 10e3 * 50e-6, abs=1e-12)


def test_second_pole_conserves_charge():
  filt = LoopFilter(r=5e3, c1=10e-12, c2=1e-12)
  traj = FilterTrajectory(filt, 0.2, 0.25, 40e-6, 300e-12)
  vc1, v = traj.state_at(300e-12)
  injected = 40e-6 * 300e-12
  assert filt.c1 * (vc1 - 0.2) + filt.c2 * (v - 0.25) == pytest.approx(injected, abs=1e-9 * injected)


def test_second_pole_settles_to_proportional_step():
  filt = LoopFilter(r=5e3, c1=10e-12, c2=1e-12)
  traj = FilterTrajectory(filt, 0.2, 0.2, 10e-6, 1e-6)
  vc1, v = traj.state_at(1e-6)
  tau_step = 10e-6 * filt.r * filt.c1 / (filt.c1 + filt.c2)
  assert v - vc1 == pytest.approx(tau_step, abs=1e-9)


def test_rail_stops_integration():
  # 50 uA into 10 pF needs 2 ns to lift C1 from 0.99 V to the 1 V rail
  traj = FilterTrajectory(LoopFilter(), 0.99, 0.99, 50e-6, 3e-9, 0.0, 1.0)
  assert not traj.saturated_within(1.5e-9)
  assert traj.saturated_within(3e-9)
  vc1, v = traj.state_at(3e-9)
  assert vc1 == pytest.approx(1.0, abs=1e-12)
  assert v == 1.0


def test_crossing_matches_integral():
  for filt in (LoopFilter(), LoopFilter(r=5e3, c1=10e-12, c2=1e-12)):
    traj = FilterTrajectory(filt, 0.2, 0.2, 50e-6, 2e-9, 0.0, 1.0)
    vco = LoopConfig().vco
    s = traj.first_crossing(vco, 1.0, 2e-9)
    assert s is not None
    assert traj.cycles(vco, s) == pytest.approx(1.0, abs=1e-9)


def test_charge_bookkeeping_with_leakage():
  cfg = LoopConfig(icp_up=50e-6, icp_down=50e-6, leakage=1e-6, v_init=0.5)
  state = initial_state(cfg)
  for _ in range(400):
    before = state
    state = loop_advance(state, cfg)
    if state.clamped or before.clamped:
      continue
    current = 0.0 - cfg.leakage
    if before.up and before.up_visible:
      current += cfg.icp_up
    if before.down and before.down_visible:
      current -= cfg.icp_down
    dq = cfg.filter.c1 * (state.vc1 - before.vc1)
    assert dq == pytest.approx(current * (state.t - before.t) * 1e-15, rel=1e-9, abs=1e-24)


def test_pll_locks_near_reference():
  report = run_lock(LoopConfig(), 5000)
  assert report.locked
  assert abs(report.final_freq - 1e9) < 1e-3 * 1e9
  assert report.lock_time is not None and report.lock_time > 0


def test_open_loop_never_locks():
  cfg = LoopConfig(icp_up=0.0, icp_down=0.0, v_init=0.1)
  report = run_lock(cfg, 300)
  assert not report.locked
  assert report.cycles == 300
  assert all(v == 0.1 for _, v in report.v_ctrl_trace)


def test_dll_locks_within_dead_zone():
  cfg = LoopConfig(mode='DLL', filter=LoopFilter(r=0.0, c1=1e-12), delay_line=DelayLine(d0=1.2e-9, kdl=0.5e-9))
  report = run_lock(cfg, 3000)
  assert report.locked
  assert abs(report.steady_phase_error) < cfg.dead_zone_phase
  assert report.final_freq == pytest.approx(1e9, rel=1e-3)


def test_matched_pump_stops_drifting():
  cfg = LoopConfig(pfd=NO_DEAD_ZONE, lock_tolerance=0.05, settle_cycles=2000)
  report = run_lock(cfg, 6000)
  assert report.locked
  volts = [v for _, v in report.v_ctrl_trace[-101:]]
  assert abs(volts[-1] - volts[0]) / 100.0 < 1e-6


def test_pump_mismatch_sets_static_offset_sign():
  for icp_up, icp_down in ((60e-6, 40e-6), (40e-6, 60e-6)):
    cfg = LoopConfig(pfd=NO_DEAD_ZONE, icp_up=icp_up, icp_down=icp_down, lock_tolerance=0.3, settle_cycles=1500)
    report = run_lock(cfg, 5000)
    assert report.locked
    assert np.sign(report.steady_phase_error) == np.sign(icp_down - icp_up)


def test_matches_fixed_step_reference():
  cfg = LoopConfig(pfd=NO_DEAD_ZONE, settle_cycles=10000)
  report = run_lock(cfg, 500)
  reference = integrate_fixed_step(cfg, report.v_ctrl_trace[-1][0] + 1.0, step=1000.0)
  count = min(len(reference), len(report.v_ctrl_trace))
  assert count > 400
  exact = np.array([v for _, v in report.v_ctrl_trace[:count]])
  stepped = np.array([v for _, v in reference[:count]])
  assert np.max(np.abs(exact - stepped)) < 1e-3 * np.max(np.abs(exact))


def test_run_lock_is_deterministic_and_exports():
  cfg = LoopConfig()
  first, second = run_lock(cfg, 400), run_lock(cfg, 400)
  assert first == second

  csv_bytes, json_bytes = export_lock_report(first)
  assert csv_bytes.decode('utf-8').splitlines()[0] == 'time_fs,v_ctrl'
  summary = json.loads(json_bytes.decode('utf-8'))
  assert summary['locked'] == first.locked
  assert 'v_ctrl_trace' not in summary
  assert export_lock_report(second) == (csv_bytes, json_bytes)


def test_invalid_config_is_rejected():
  with pytest.raises(ValueError):
    LoopConfig(filter=LoopFilter(c1=0.0))
  with pytest.raises(ValueError):
    LoopConfig(divider_n=0)
  with pytest.raises(ValueError):
    LoopConfig(mode='FLL')


def test_lock_needs_enough_cycles():
  with pytest.raises(AssertionError):
    run_lock(LoopConfig(), 10)


def test_steady_error_is_finite_phase():
  report = run_lock(LoopConfig(), 2000)
  assert math.isfinite(report.steady_phase_error)
  assert abs(report.steady_phase_error) <= math.pi
