""" Event-driven phase-domain simulation of a charge-pump PLL or DLL built around the behavioral detector.

Between two events the charge-pump current is constant, so the loop filter and the VCO phase are advanced in closed
form. Times are femtoseconds (float), filter quantities SI units.
"""

import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd
from scipy.optimize import brentq

from pfdlab.core.pfd_model import EventKind, Mode, PfdConfig, PfdState, pfd_step
from pfdlab.utils.units import fs_to_phase


logger = logging.getLogger('pfdlab.loop_sim')

FS = 1e-15
ACTIVE_MODES = (Mode.UP_ACTIVE, Mode.DOWN_ACTIVE)


@dataclass(frozen=True)
class LoopFilter:
    r: float = 10e3
    c1: float = 10e-12
    c2: float = None


@dataclass(frozen=True)
class Vco:
    f0: float = 0.9e9
    kvco: float = 500e6


@dataclass(frozen=True)
class DelayLine:
    d0: float = 1.2e-9
    kdl: float = 0.5e-9


@dataclass(frozen=True)
class LoopConfig:
    mode: str = 'PLL'
    f_ref: float = 1e9
    divider_n: int = 1
    icp_up: float = 50e-6
    icp_down: float = 50e-6
    leakage: float = 0.0
    filter: LoopFilter = field(default_factory=LoopFilter)
    vco: Vco = field(default_factory=Vco)
    delay_line: DelayLine = field(default_factory=DelayLine)
    v_init: float = 0.0
    vdd_nominal: float = 1.0
    pfd: PfdConfig = field(default_factory=PfdConfig)
    lock_cycles: int = 50
    lock_tolerance: float = 0.05
    settle_cycles: int = 100

    def __post_init__(self):
        if self.mode not in ('PLL', 'DLL'):
            raise ValueError('loop mode must be PLL or DLL, got {}'.format(self.mode))
        if self.f_ref <= 0:
            raise ValueError('f_ref must be positive')
        if self.filter.c1 <= 0:
            raise ValueError('C1 must be positive')
        if self.filter.c2 is not None and (self.filter.c2 <= 0 or self.filter.r <= 0):
            raise ValueError('a second pole needs C2 > 0 and R > 0')
        if int(self.divider_n) != self.divider_n or self.divider_n < 1:
            raise ValueError('divider_n must be a positive integer')
        if self.icp_up < 0 or self.icp_down < 0:
            raise ValueError('charge pump currents must be >= 0')

    @property
    def period(self):
        """ reference period in fs """
        return 1e15 / self.f_ref

    @property
    def dead_zone_phase(self):
        return fs_to_phase(self.pfd.threshold, self.f_ref)

    @staticmethod
    def from_dict(values):
        """ build a LoopConfig from a (possibly nested) dictionary such as the easydict run configuration """
        values = dict(values)
        nested = {'filter': LoopFilter, 'vco': Vco, 'delay_line': DelayLine}
        for key, cls in nested.items():
            if key in values and isinstance(values[key], dict):
                values[key] = cls(**values[key])
        if 'pfd' in values and isinstance(values['pfd'], dict):
            values['pfd'] = PfdConfig.from_dict(values['pfd'])
        keys = LoopConfig.__dataclass_fields__.keys()
        return LoopConfig(**{key: value for key, value in values.items() if key in keys})


class FilterTrajectory(object):
    """ Loop filter response to a constant current over [0, horizon] seconds, starting from (vc1, v).

    Without C2 the integrating capacitor charges linearly until it reaches a rail, and the control voltage is the
    capacitor voltage plus the R*I step, clipped to [v_min, v_max]; the control voltage is then piecewise linear
    between a few knots. With C2 the difference u = v - vc1 relaxes exponentially with tau = R*C1*C2/(C1+C2) while
    the total charge grows linearly, and the whole filter state is held once v reaches a rail.
    """

    def __init__(self, filt, vc1, v, current, horizon, v_min=-math.inf, v_max=math.inf):
        self.filt = filt
        self.current = current
        self.horizon = horizon
        self.v_min, self.v_max = v_min, v_max
        self.hit, self.bound = None, None
        if filt.c2 is None:
            self._init_linear(vc1)
        else:
            self._init_relaxing(vc1, v)

    def _clip(self, value):
        return min(max(value, self.v_min), self.v_max)

    def _init_linear(self, vc1):
        self.vc1_0 = vc1
        self.slope = self.current / self.filt.c1
        self.step = self.filt.r * self.current

        end = self.horizon
        if self.slope != 0:
            bound = self.v_max if self.slope > 0 else self.v_min
            s = (bound - vc1) / self.slope
            if 0 <= s < self.horizon:
                self.hit, self.bound, end = s, bound, s

        knots = {0.0, self.horizon, end}
        if self.slope != 0:
            for level in (self.v_min, self.v_max):
                s = (level - self.step - vc1) / self.slope
                if 0 < s < end:
                    knots.add(s)
        self.knots = sorted(knots)

    def _init_relaxing(self, vc1, v):
        filt = self.filt
        self.ctot = filt.c1 + filt.c2
        self.tau = filt.r * filt.c1 * filt.c2 / self.ctot
        self.u_inf = self.current * filt.r * filt.c1 / self.ctot
        self.u_0 = v - vc1
        self.charge = filt.c1 * vc1 + filt.c2 * v

        if v < self.v_min or v > self.v_max:
            self.hit, self.bound = 0.0, self._clip(v)
        elif self.horizon > 0:
            end = self._raw_v(self.horizon)
            if end < self.v_min or end > self.v_max:
                bound = self.v_min if end < self.v_min else self.v_max
                self.hit = brentq(lambda s: self._raw_v(s) - bound, 0.0, self.horizon, xtol=1e-24)
                self.bound = bound

    def _u(self, s):
        return self.u_inf + (self.u_0 - self.u_inf) * math.exp(-s / self.tau)

    def _raw_vc1(self, s):
        return (self.charge + self.current * s - self.filt.c2 * self._u(s)) / self.ctot

    def _raw_v(self, s):
        return (self.charge + self.current * s + self.filt.c1 * self._u(s)) / self.ctot

    def _raw_integral(self, s):
        relax = (self.u_0 - self.u_inf) * self.tau * (1.0 - math.exp(-s / self.tau))
        return (self.charge * s + self.current * s * s / 2.0 + self.filt.c1 * (self.u_inf * s + relax)) / self.ctot

    def saturated_within(self, s):
        """ whether the filter reached a rail within [0, s] """
        return self.hit is not None and self.hit <= s

    def state_at(self, s):
        """ (vc1, v) after s seconds """
        if self.filt.c2 is None:
            vc1 = self.vc1_0 + self.slope * (min(s, self.hit) if self.hit is not None else s)
            return vc1, self._clip(vc1 + self.step)
        if self.saturated_within(s):
            return self._raw_vc1(self.hit), self.bound
        return self._raw_vc1(s), self._raw_v(s)

    def _segments(self, s):
        """ (start, end, v_start, v_end) pieces of the clipped linear control voltage covering [0, s] """
        points = [k for k in self.knots if k < s] + [s]
        return [(a, b, self.state_at(a)[1], self.state_at(b)[1]) for a, b in zip(points, points[1:])]

    def integral(self, s):
        """ integral of the control voltage over [0, s] (V*s) """
        if self.filt.c2 is None:
            return sum(0.5 * (va + vb) * (b - a) for a, b, va, vb in self._segments(s))
        if self.saturated_within(s):
            return self._raw_integral(self.hit) + self.bound * (s - self.hit)
        return self._raw_integral(s)

    def cycles(self, vco, s):
        """ VCO cycles accumulated over [0, s] """
        return vco.f0 * s + vco.kvco * self.integral(s)

    def first_crossing(self, vco, delta, horizon):
        """ the earliest s in [0, horizon] at which the VCO has advanced by delta cycles, None if it does not """
        if delta <= 0:
            return 0.0
        if self.filt.c2 is not None:
            if self.cycles(vco, horizon) < delta:
                return None
            return brentq(lambda s: self.cycles(vco, s) - delta, 0.0, horizon, xtol=1e-24)

        done = 0.0
        for a, b, va, vb in self._segments(horizon):
            length = b - a
            gained = vco.f0 * length + vco.kvco * 0.5 * (va + vb) * length
            if done + gained >= delta and length > 0:
                # cycles within the piece: beta*x + alpha*x^2
                rest = delta - done
                alpha = vco.kvco * (vb - va) / (2.0 * length)
                beta = vco.f0 + vco.kvco * va
                root = math.sqrt(max(beta * beta + 4.0 * alpha * rest, 0.0))
                return a + min(2.0 * rest / (beta + root), length)
            done += gained
        return None


@dataclass(frozen=True)
class LoopState:
    t: float = 0.0
    vc1: float = 0.0
    v_ctrl: float = 0.0
    vco_phase: float = 0.0
    next_ref_edge: float = 0.0
    ref_count: int = 0
    pfd_state: PfdState = field(default_factory=PfdState)
    pending: tuple = ()
    scheduled_div: tuple = ()
    up: bool = False
    down: bool = False
    up_visible: bool = False
    down_visible: bool = False
    cycle_visible: bool = True
    clamped: bool = False
    clamp_events: int = 0
    event: str = None
    last_error: float = None

    @property
    def next_div_edge(self):
        """ the earliest delay-line edge in flight (DLL); PLL edges follow from the VCO phase """
        return self.scheduled_div[0] if self.scheduled_div else None


@dataclass
class LockReport:
    locked: bool
    lock_time: float
    steady_phase_error: float
    final_freq: float
    v_ctrl_trace: list = field(default_factory=list)
    cycles: int = 0
    jitter_rms: float = 0.0
    jitter_pp: float = 0.0
    clamp_events: int = 0
    phase_errors: list = field(default_factory=list)


def initial_state(cfg):
    return LoopState(vc1=cfg.v_init, v_ctrl=cfg.v_init, next_ref_edge=cfg.period)


def pump_current(state, cfg):
    """ net current into the loop filter: visible up/down pulses minus leakage """
    current = -cfg.leakage
    if state.up and state.up_visible:
        current += cfg.icp_up
    if state.down and state.down_visible:
        current -= cfg.icp_down
    return current


def smooth_voltage(state, cfg):
    """ the control voltage without the proportional R*I step: the integrating node without C2, v with C2 """
    return state.vc1 if cfg.filter.c2 is None else state.v_ctrl


def _trajectory(state, cfg, current, horizon):
    return FilterTrajectory(cfg.filter, state.vc1, state.v_ctrl, current, horizon, 0.0, cfg.vdd_nominal)


def _predict_visible(state, cfg):
    """ Whether the pulse started by the leading edge at state.t reaches the charge-pump threshold, predicting the
    opposite edge as if no pump current flowed. """
    threshold = cfg.pfd.threshold
    if threshold == 0:
        return True

    if state.pfd_state.mode == Mode.DOWN_ACTIVE:
        return state.next_ref_edge - state.t >= threshold

    if cfg.mode == 'DLL':
        return state.next_div_edge is None or state.next_div_edge - state.t >= threshold

    traj = _trajectory(state, cfg, -cfg.leakage, threshold * FS)
    crossing = traj.first_crossing(cfg.vco, cfg.divider_n - state.vco_phase, threshold * FS)
    return crossing is None or crossing >= threshold * FS


def _feed_pfd(state, cfg, event):
    was_active = state.pfd_state.mode in ACTIVE_MODES
    pfd, transitions = pfd_step(state.pfd_state, cfg.pfd, event, state.t)
    state = replace(state, pfd_state=pfd)
    if pfd.mode in ACTIVE_MODES and not was_active:
        state = replace(state, cycle_visible=_predict_visible(state, cfg))

    pending = list(state.pending)
    for tr in transitions:
        pending.append((tr.time, tr.value, tr.net, state.cycle_visible))
    pending.sort(key=lambda item: (item[0], item[1], item[2]))
    return replace(state, pending=tuple(pending))


def _apply_output(state, cfg):
    _, value, net, visible = state.pending[0]
    updates = {net: bool(value)}
    if value:
        updates[net + '_visible'] = visible
    state = replace(state, pending=state.pending[1:], **updates)
    if cfg.filter.c2 is None:
        v = state.vc1 + cfg.filter.r * pump_current(state, cfg)
        state = replace(state, v_ctrl=min(max(v, 0.0), cfg.vdd_nominal))
    return state


def loop_advance(state, cfg):
    """ Advance the loop to its next event: a detector output transition, the detector reset timer, a reference
    edge or a feedback edge.
    :param state: the current LoopState
    :param cfg: the LoopConfig
    :return: the LoopState right after the event, with `event` naming it
    """
    candidates = [(state.next_ref_edge, 2, 'ref')]
    if state.pending:
        candidates.append((state.pending[0][0], 0, 'output'))
    if state.pfd_state.pending_reset_at is not None:
        candidates.append((state.pfd_state.pending_reset_at, 1, 'timer'))
    if state.scheduled_div:
        candidates.append((state.scheduled_div[0], 3, 'div'))
    time, _, kind = min(candidates)

    horizon = max(0.0, (time - state.t) * FS)
    traj = _trajectory(state, cfg, pump_current(state, cfg), horizon)
    if cfg.mode == 'PLL':
        crossing = traj.first_crossing(cfg.vco, cfg.divider_n - state.vco_phase, horizon)
        if crossing is not None and crossing < horizon:
            horizon, kind = crossing, 'div'
            time = state.t + crossing / FS

    vc1, v = traj.state_at(horizon)
    phase = state.vco_phase + traj.cycles(cfg.vco, horizon) if cfg.mode == 'PLL' else state.vco_phase
    clamped = traj.saturated_within(horizon)
    clamp_events = state.clamp_events
    if clamped and not state.clamped:
        clamp_events += 1
        logger.warning('loop filter saturated at %.3f V at t=%.0f fs', traj.bound, state.t + traj.hit / FS)

    state = replace(state, t=time, vc1=vc1, v_ctrl=v, vco_phase=phase, clamped=clamped, clamp_events=clamp_events,
                    event=kind, last_error=None)

    if kind == 'output':
        return _apply_output(state, cfg)

    if kind == 'timer':
        before = state.pfd_state
        error = fs_to_phase(before.down_edge - before.up_edge, cfg.f_ref)
        return replace(_feed_pfd(state, cfg, EventKind.TIMER), last_error=error)

    if kind == 'ref':
        count = state.ref_count + 1
        state = replace(state, ref_count=count, next_ref_edge=cfg.period * (count + 1))
        if cfg.mode == 'DLL':
            delay = max(0.0, cfg.delay_line.d0 - cfg.delay_line.kdl * smooth_voltage(state, cfg)) / FS
            state = replace(state, scheduled_div=tuple(sorted(state.scheduled_div + (time + delay,))))
        return _feed_pfd(state, cfg, EventKind.REF_EDGE)

    if cfg.mode == 'PLL':
        state = replace(state, vco_phase=state.vco_phase - cfg.divider_n)
    else:
        state = replace(state, scheduled_div=state.scheduled_div[1:])
    return _feed_pfd(state, cfg, EventKind.DIV_EDGE)


def _jitter(div_times, count):
    periods = np.diff(np.asarray(div_times[-(count + 2):], dtype=np.float64))
    if len(periods) < 2:
        return 0.0, 0.0
    c2c = np.diff(periods)
    return float(np.std(c2c)), float(np.ptp(c2c))


def run_lock(cfg, max_cycles=5000):
    """ Run the loop until it locks and settles, or until max_cycles reference cycles have passed
    :param cfg: the LoopConfig
    :param max_cycles: the reference cycle budget (>= 100)
    :return: a LockReport; a loop that never locks reports locked=False
    """
    assert max_cycles >= 100, 'max_cycles must be at least 100, got {}'.format(max_cycles)

    tolerance = max(cfg.dead_zone_phase, cfg.lock_tolerance)
    state = initial_state(cfg)
    trace, errors, div_times = [(0.0, smooth_voltage(state, cfg))], [], []
    streak, streak_start, lock_time, lock_cycle = 0, None, None, None

    while state.ref_count < max_cycles:
        state = loop_advance(state, cfg)
        if state.event == 'ref':
            trace.append((state.t, smooth_voltage(state, cfg)))
            if lock_cycle is not None and state.ref_count >= lock_cycle + cfg.settle_cycles:
                break
        elif state.event == 'div':
            div_times.append(state.t)
        elif state.last_error is not None:
            errors.append(state.last_error)
            if lock_cycle is None:
                if abs(state.last_error) < tolerance:
                    streak += 1
                    if streak == 1:
                        streak_start = state.t
                else:
                    streak = 0
                if streak >= cfg.lock_cycles:
                    lock_cycle, lock_time = state.ref_count, streak_start

    window = errors[-cfg.lock_cycles:]
    steady = float(np.mean(window)) if window else float('nan')
    spacing = np.diff(np.asarray(div_times[-(cfg.lock_cycles + 1):], dtype=np.float64))
    final_freq = 1e15 / float(np.mean(spacing)) if len(spacing) else float('nan')
    jitter_rms, jitter_pp = _jitter(div_times, cfg.settle_cycles)

    report = LockReport(locked=lock_cycle is not None, lock_time=lock_time, steady_phase_error=steady,
                        final_freq=final_freq, v_ctrl_trace=trace, cycles=state.ref_count, jitter_rms=jitter_rms,
                        jitter_pp=jitter_pp, clamp_events=state.clamp_events, phase_errors=errors)
    logger.debug('%s run: locked=%s after %d cycles, steady error %.4g rad', cfg.mode, report.locked,
                 report.cycles, steady)
    return report


def integrate_fixed_step(cfg, t_end, step=1000.0):
    """ Fixed-step reference integrator for the same loop (test oracle). The filter is stepped with forward Euler,
    the VCO phase with the trapezoidal rule and feedback edges are placed by linear interpolation inside a step.
    Every detector pulse drives the pump, so the detector threshold must be zero.
    :param cfg: the LoopConfig
    :param t_end: simulated time in fs
    :param step: integration step in fs
    :return: list of (reference edge time fs, control voltage) samples as in LockReport.v_ctrl_trace
    """
    assert cfg.pfd.threshold == 0, 'the fixed-step reference needs a detector without dead zone'

    filt = cfg.filter
    state = initial_state(cfg)
    vc1, v = state.vc1, state.v_ctrl
    phase, pfd, pending, scheduled = 0.0, PfdState(), [], []
    up = down = False
    ref_count, t = 0, 0.0
    samples = [(0.0, vc1 if filt.c2 is None else v)]

    def current():
        return (cfg.icp_up if up else 0.0) - (cfg.icp_down if down else 0.0) - cfg.leakage

    def voltage(vc1_now, v_now):
        if filt.c2 is None:
            return min(max(vc1_now + filt.r * current(), 0.0), cfg.vdd_nominal)
        return v_now

    def feed(kind, time):
        nonlocal pfd
        pfd, transitions = pfd_step(pfd, cfg.pfd, kind, time)
        pending.extend((tr.time, tr.value, tr.net) for tr in transitions)
        pending.sort()

    while t < t_end:
        t_step = min(t + step, t_end)
        while t < t_step:
            events = [(cfg.period * (ref_count + 1), 2, 'ref')]
            if pending:
                events.append((pending[0][0], 0, 'output'))
            if pfd.pending_reset_at is not None:
                events.append((pfd.pending_reset_at, 1, 'timer'))
            if scheduled:
                events.append((scheduled[0], 3, 'div'))
            ev_time, _, kind = min(events)
            t_next = min(ev_time, t_step)

            dt = (t_next - t) * FS
            v_start = voltage(vc1, v)
            i_now = current()
            if filt.c2 is None:
                vc1 = min(max(vc1 + i_now * dt / filt.c1, 0.0), cfg.vdd_nominal)
            else:
                flow = (v - vc1) / filt.r
                vc1, v = vc1 + flow * dt / filt.c1, min(max(v + (i_now - flow) * dt / filt.c2, 0.0), cfg.vdd_nominal)
            v_end = voltage(vc1, v)

            if cfg.mode == 'PLL':
                f_start, f_end = cfg.vco.f0 + cfg.vco.kvco * v_start, cfg.vco.f0 + cfg.vco.kvco * v_end
                advance = 0.5 * (f_start + f_end) * dt
                if phase + advance >= cfg.divider_n and advance > 0:
                    crossing = t + (cfg.divider_n - phase) / advance * (t_next - t)
                    phase = phase + advance - cfg.divider_n
                    feed(EventKind.DIV_EDGE, crossing)
                else:
                    phase += advance
            t = t_next

            if t == ev_time:
                if kind == 'output':
                    _, value, net = pending.pop(0)
                    if net == 'up':
                        up = bool(value)
                    else:
                        down = bool(value)
                elif kind == 'timer':
                    feed(EventKind.TIMER, t)
                elif kind == 'ref':
                    ref_count += 1
                    samples.append((t, vc1 if filt.c2 is None else v))
                    if cfg.mode == 'DLL':
                        delay = max(0.0, cfg.delay_line.d0 - cfg.delay_line.kdl * (vc1 if filt.c2 is None else v))
                        scheduled.append(t + delay / FS)
                        scheduled.sort()
                    feed(EventKind.REF_EDGE, t)
                else:
                    scheduled.pop(0)
                    feed(EventKind.DIV_EDGE, t)
    return samples


def export_lock_report(report):
    """ Serialize a lock report
    :return: (csv bytes with columns time_fs,v_ctrl, json summary bytes)
    """
    frame = pd.DataFrame(report.v_ctrl_trace, columns=['time_fs', 'v_ctrl'])
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False)

    summary = asdict(report)
    del summary['v_ctrl_trace']
    del summary['phase_errors']
    summary = {key: (None if isinstance(value, float) and math.isnan(value) else value) for key, value in summary.items()}
    return buffer.getvalue().encode('utf-8'), (json.dumps(summary, indent=2, sort_keys=True) + '\n').encode('utf-8')
