""" Behavioral tri-state phase frequency detector.

The detector is a pure state machine over REF/DIV edges and its own reset timer. A reference edge raises up, a
feedback edge raises down; the second edge puts the detector in RESETTING for exactly t_reset, after which both
outputs are cleared together. A pulse whose exclusive width (time one output is high without the other) is below the
setup limit is still emitted but flagged as invisible to the charge pump.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from pfdlab.utils.units import period_fs


class PfdContractError(ValueError):
    pass


class Mode(Enum):
    NULL = 'null'
    UP_ACTIVE = 'up_active'
    DOWN_ACTIVE = 'down_active'
    RESETTING = 'resetting'


class EventKind(Enum):
    REF_EDGE = 'ref'
    DIV_EDGE = 'div'
    TIMER = 'timer'


@dataclass(frozen=True)
class PfdConfig:
    t_setup: int = 40000
    t_reset: int = 30000
    t_out_rise: int = 10000
    t_out_fall: int = 10000
    blind_window: int = 0
    min_effective_pulse: int = 0

    def __post_init__(self):
        for name in ('t_setup', 't_reset', 't_out_rise', 't_out_fall', 'blind_window', 'min_effective_pulse'):
            if getattr(self, name) < 0:
                raise PfdContractError('{} must be >= 0, got {}'.format(name, getattr(self, name)))

    @property
    def threshold(self):
        """ the smallest exclusive pulse width the charge pump responds to """
        return max(self.t_setup, self.min_effective_pulse)

    @staticmethod
    def from_dict(values):
        keys = PfdConfig.__dataclass_fields__.keys()
        return PfdConfig(**{key: int(values[key]) for key in keys if key in values})


@dataclass(frozen=True)
class PfdState:
    mode: Mode = Mode.NULL
    up: bool = False
    down: bool = False
    pending_reset_at: int = None
    last_time: int = None
    up_edge: int = None
    down_edge: int = None
    reset_edge: int = None
    deferred: tuple = ()
    missed: int = 0


@dataclass(frozen=True)
class OutputTransition:
    time: int
    net: str
    value: int
    sub_threshold: bool = False


@dataclass(frozen=True)
class PfdPulse:
    net: str
    rise: int
    fall: int
    exclusive_width: int
    sub_threshold: bool

    @property
    def width(self):
        return self.fall - self.rise


@dataclass
class PfdTrace:
    transitions: list = field(default_factory=list)
    pulses: list = field(default_factory=list)
    missed: int = 0
    t_end: int = 0

    def level(self, net, time):
        """ output level (0/1) of 'up' or 'down' at time """
        value = 0
        for tr in self.transitions:
            if tr.time > time:
                break
            if tr.net == net:
                value = tr.value
        return value

    def pulses_of(self, net):
        return [pulse for pulse in self.pulses if pulse.net == net]


def _edge(state, cfg, kind, time):
    # blind window: edges shortly after a reset start are lost, even once the reset is over
    if state.reset_edge is not None and time - state.reset_edge < cfg.blind_window:
        return replace(state, missed=state.missed + 1), []

    rise = time + cfg.t_out_rise
    if state.mode == Mode.NULL:
        if kind == EventKind.REF_EDGE:
            return replace(state, mode=Mode.UP_ACTIVE, up=True, up_edge=time), [OutputTransition(rise, 'up', 1)]
        return replace(state, mode=Mode.DOWN_ACTIVE, down=True, down_edge=time), [OutputTransition(rise, 'down', 1)]

    if state.mode in (Mode.UP_ACTIVE, Mode.DOWN_ACTIVE):
        leading = EventKind.REF_EDGE if state.mode == Mode.UP_ACTIVE else EventKind.DIV_EDGE
        if kind == leading:
            return state, []
        net = 'down' if kind == EventKind.DIV_EDGE else 'up'
        timer = time + cfg.t_reset
        updates = {'down_edge': time} if net == 'down' else {'up_edge': time}
        state = replace(state, mode=Mode.RESETTING, up=True, down=True, reset_edge=time, pending_reset_at=timer,
                        **updates)
        return state, [OutputTransition(rise, net, 1)]

    # resetting
    if kind in state.deferred:
        return state, []
    return replace(state, deferred=state.deferred + (kind,)), []


def _release(state, cfg, time):
    # a fall never precedes the rise of the lagging output
    fall = max(time + cfg.t_out_fall, max(state.up_edge, state.down_edge) + cfg.t_out_rise)
    # the lagging output has no exclusive width
    up_width = max(0, state.down_edge - state.up_edge)
    down_width = max(0, state.up_edge - state.down_edge)
    transitions = [OutputTransition(fall, 'up', 0, up_width < cfg.threshold),
                   OutputTransition(fall, 'down', 0, down_width < cfg.threshold)]

    deferred = state.deferred
    state = PfdState(last_time=time, missed=state.missed, reset_edge=state.reset_edge)
    for kind in deferred:
        state, emitted = _edge(state, cfg, kind, time)
        # outputs re-rise only once the release has reached them
        transitions.extend(replace(tr, time=max(tr.time, fall)) for tr in emitted)
    return state, transitions


def pfd_step(state, cfg, event, time):
    """ Advance the detector by one event
    :param state: the current PfdState
    :param cfg: the PfdConfig
    :param event: an EventKind
    :param time: event time in fs, not earlier than the previous event
    :return: (new state, list of OutputTransition)
    """
    if state.last_time is not None and time < state.last_time:
        raise PfdContractError('event at t={} fs delivered after t={} fs'.format(time, state.last_time))

    if event == EventKind.TIMER:
        if state.pending_reset_at != time:
            raise PfdContractError('timer at t={} fs does not match the pending reset at {}'.format(
                time, state.pending_reset_at))
        return _release(state, cfg, time)

    if state.pending_reset_at is not None and time > state.pending_reset_at:
        raise PfdContractError('edge at t={} fs skips the pending reset at {} fs'.format(time, state.pending_reset_at))

    state, transitions = _edge(state, cfg, event, time)
    return replace(state, last_time=time), transitions


def _pulses(transitions):
    pulses, open_rise = [], {}
    for tr in transitions:
        if tr.value == 1:
            open_rise[tr.net] = tr.time
        elif tr.net in open_rise:
            pulses.append((tr.net, open_rise.pop(tr.net), tr.time, tr.sub_threshold))
    return pulses


def simulate_pfd(cfg, ref_edges, div_edges, t_end=None):
    """ Run the detector over rising-edge lists of REF and DIV
    :param cfg: the PfdConfig
    :param ref_edges: REF rising edge times (fs), nondecreasing
    :param div_edges: DIV rising edge times (fs), nondecreasing
    :param t_end: ignore events after this time; defaults to the last event
    :return: a PfdTrace
    """
    events = [(int(t), 0, EventKind.REF_EDGE) for t in ref_edges] + [(int(t), 1, EventKind.DIV_EDGE) for t in div_edges]
    events.sort(key=lambda ev: (ev[0], ev[1]))
    if t_end is None:
        t_end = events[-1][0] + max(cfg.t_out_rise, cfg.t_reset + cfg.t_out_fall) if events else 0

    state, transitions = PfdState(), []
    idx = 0
    while True:
        timer = state.pending_reset_at
        next_edge = events[idx][0] if idx < len(events) else None
        if timer is not None and (next_edge is None or timer <= next_edge):
            if timer > t_end:
                break
            state, emitted = pfd_step(state, cfg, EventKind.TIMER, timer)
        elif next_edge is not None and next_edge <= t_end:
            state, emitted = pfd_step(state, cfg, events[idx][2], next_edge)
            idx += 1
        else:
            break
        transitions.extend(emitted)

    # stable on time alone: at equal times the emission order is the causal order
    transitions.sort(key=lambda tr: tr.time)
    transitions = [tr for tr in transitions if tr.time <= t_end]

    raw = _pulses(transitions)
    pulses = []
    for net, rise, fall, flagged in raw:
        overlap = sum(max(0, min(fall, o_fall) - max(rise, o_rise)) for o_net, o_rise, o_fall, _ in raw if o_net != net)
        pulses.append(PfdPulse(net, rise, fall, fall - rise - overlap, flagged))
    return PfdTrace(transitions=transitions, pulses=pulses, missed=state.missed, t_end=t_end)


def net_charge_per_cycle(cfg, delta_phi, freq, icp):
    """ Charge delivered in one cycle for a constant phase error
    :param delta_phi: phase error in radians, |delta_phi| <= pi, positive when REF leads
    :param freq: input frequency in Hz
    :param icp: charge pump current in A
    :return: signed charge in coulombs
    """
    assert abs(delta_phi) <= math.pi + 1e-12, 'phase error must be within [-pi, pi], got {}'.format(delta_phi)
    assert freq > 0, 'frequency must be positive'
    width = abs(delta_phi) / (2 * math.pi) * period_fs(freq)
    if width == 0 or width < cfg.threshold:
        return 0.0
    return math.copysign(width * 1e-15 * icp, delta_phi)


def comparison_preset(freq, **overrides):
    """ The conventional detector used for comparison: edges are missed during the first tenth of a period after
    reset starts. """
    values = dict(blind_window=int(round(period_fs(freq) / 10.0)))
    values.update(overrides)
    return PfdConfig(**values)
