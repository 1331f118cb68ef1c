""" Implementation handles: a uniform way to drive the behavioral detector or a switch-level netlist with the same
REF/DIV stimulus and read back up/down pulses. The measurement harness only talks to handles. """

import logging
from dataclasses import dataclass, field, replace

from pfdlab.core.pfd_model import PfdConfig, PfdPulse, simulate_pfd
from pfdlab.core.switch_sim import Level, SimModel, WaveformSet, edge_stimulus, run
from pfdlab.utils.stats import high_intervals, overlap


logger = logging.getLogger('pfdlab.pfd_handle')


@dataclass
class PfdResponse:
    waveform: WaveformSet
    up_net: str
    down_net: str
    pulses: list = field(default_factory=list)
    rise_times: dict = field(default_factory=dict)

    def pulses_of(self, net):
        return [pulse for pulse in self.pulses if pulse.net == net]

    def rises(self, net):
        """ times at which the 'up' or 'down' output goes high """
        return list(self.rise_times.get(net, []))


def _rising(edges):
    return [t for t, value in edges if int(value) == 1]


def _trace(transitions, net):
    trace = [(0, Level.ZERO)]
    for tr in transitions:
        if tr.net != net:
            continue
        if trace[-1][0] == tr.time:
            trace[-1] = (tr.time, Level(tr.value))
        else:
            trace.append((tr.time, Level(tr.value)))
    return trace


class BehavioralHandle(object):
    """ the tri-state state machine of pfd_model """

    kind = 'behavioral'

    def __init__(self, cfg=None):
        self.cfg = cfg or PfdConfig()

    @property
    def threshold(self):
        return self.cfg.threshold

    @property
    def delay_count(self):
        return 3

    def respond(self, ref_edges, div_edges, t_end):
        """
        drive the detector
        :param ref_edges: list of (time fs, 0|1) on REF; only rising edges matter
        :param div_edges: list of (time fs, 0|1) on DIV
        :param t_end: horizon in fs
        :return: a PfdResponse
        """
        trace = simulate_pfd(self.cfg, _rising(ref_edges), _rising(div_edges), t_end)
        waveform = WaveformSet({'up': _trace(trace.transitions, 'up'), 'down': _trace(trace.transitions, 'down')},
                               int(t_end))
        rise_times = {net: [tr.time for tr in trace.transitions if tr.net == net and tr.value == 1]
                      for net in ('up', 'down')}
        return PfdResponse(waveform, 'up', 'down', list(trace.pulses), rise_times)

    def scaled(self, factor):
        """ every internal delay multiplied by factor; the charge pump setup time is left alone """
        return self.varied([factor] * self.delay_count)

    def varied(self, factors):
        t_reset, t_rise, t_fall = (int(round(value * max(0.0, f))) for value, f in
                                   zip((self.cfg.t_reset, self.cfg.t_out_rise, self.cfg.t_out_fall), factors))
        return BehavioralHandle(replace(self.cfg, t_reset=t_reset, t_out_rise=t_rise, t_out_fall=t_fall))


# exclusive width the charge pump behind the switch-level detector needs before it conducts (fs)
PUMP_SETUP = 37700


class SwitchHandle(object):
    """ a compiled switch-level netlist; the charge pump sees an output pulse once its exclusive width reaches
    t_setup """

    kind = 'switch'

    def __init__(self, model, t_setup=PUMP_SETUP, ref='Ref', div='Div'):
        self.model = model
        names = set(model.netlist.net_names())
        self.up, self.down = ('Up', 'Down') if {'Up', 'Down'} <= names else ('X', 'Y')
        self.ref, self.div = ref, div
        self.t_setup = int(t_setup)

    @property
    def threshold(self):
        return self.t_setup

    @property
    def delay_count(self):
        return len(self.model.delays)

    def respond(self, ref_edges, div_edges, t_end):
        waveform = run(self.model, edge_stimulus({self.ref: list(ref_edges), self.div: list(div_edges)}), t_end)
        intervals = {'up': high_intervals(waveform.traces[self.up]), 'down': high_intervals(waveform.traces[self.down])}
        pulses = []
        for net, other in (('up', 'down'), ('down', 'up')):
            for rise, fall in intervals[net]:
                exclusive = fall - rise - overlap((rise, fall), intervals[other])
                pulses.append(PfdPulse(net, rise, fall, exclusive, exclusive < self.t_setup))
        pulses.sort(key=lambda pulse: (pulse.rise, pulse.net))
        rise_times = {}
        for net, name in (('up', self.up), ('down', self.down)):
            trace = waveform.traces[name]
            rise_times[net] = [t for (t, v), (_, prev) in zip(trace[1:], trace) if v == Level.ONE and prev != Level.ONE]
        logger.debug('switch response: %d up, %d down pulses', len(intervals['up']), len(intervals['down']))
        return PfdResponse(waveform, self.up, self.down, pulses, rise_times)

    def scaled(self, factor):
        return self.varied([factor] * self.delay_count)

    def varied(self, factors):
        """ a handle whose device delays (sorted by device name) are multiplied by factors """
        names = sorted(self.model.delays)
        assert len(factors) == len(names), 'expected {} delay factors, got {}'.format(len(names), len(factors))
        delays = {name: int(round(self.model.delays[name] * max(0.0, f))) for name, f in zip(names, factors)}
        return SwitchHandle(replace(self.model, delays=delays), self.t_setup, self.ref, self.div)


def as_handle(obj):
    """ wrap a PfdConfig or a SimModel into a handle; handles pass through """
    if isinstance(obj, (BehavioralHandle, SwitchHandle)):
        return obj
    if isinstance(obj, PfdConfig):
        return BehavioralHandle(obj)
    if isinstance(obj, SimModel):
        return SwitchHandle(obj)
    raise TypeError('cannot build a detector handle from {}'.format(type(obj).__name__))
