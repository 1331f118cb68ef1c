""" Event-driven switch-level simulation of MOS netlists.

Every channel-connected component is resolved as a switch graph: a net is driven to the rail it reaches through
conducting devices, and keeps its stored charge when no conducting path exists. Net changes are scheduled after the
slowest device on the fastest conducting path (inertial: a pending change is cancelled when the net is resolved back
to its current value before the change matures).
"""

import heapq
import logging
from dataclasses import dataclass, field
from enum import Enum, IntEnum

from pfdlab.core.netlist import channel_connected_components, validate


logger = logging.getLogger('pfdlab.switch_sim')

DEFAULT_DEVICE_DELAY = 10000
DEFAULT_OSCILLATION_BOUND = 1000


class Level(IntEnum):
    ZERO = 0
    ONE = 1
    UNKNOWN = 2

    @property
    def char(self):
        return 'X' if self == Level.UNKNOWN else str(int(self))

    @staticmethod
    def from_char(char):
        if char in ('x', 'X'):
            return Level.UNKNOWN
        return Level(int(char))


class Origin(Enum):
    DRIVEN = 'driven'
    STORED = 'stored'


@dataclass(frozen=True)
class LogicValue:
    value: Level
    origin: Origin = Origin.DRIVEN


STORED_UNKNOWN = LogicValue(Level.UNKNOWN, Origin.STORED)


class NetlistValidationError(ValueError):
    pass


class StimulusError(ValueError):
    pass


class OscillationError(RuntimeError):
    """ Too many zero-delay iterations at one timestamp """

    def __init__(self, time, nets, bound):
        super(OscillationError, self).__init__(
            'oscillation at t={} fs: more than {} zero-delay iterations, still changing: {}'.format(
                time, bound, ', '.join(sorted(nets))))
        self.time = time
        self.nets = nets


@dataclass(frozen=True)
class SimModel:
    netlist: object
    delays: dict
    initial_state: dict
    components: tuple
    gate_fanout: dict
    channel_fanout: dict
    oscillation_bound: int = DEFAULT_OSCILLATION_BOUND

    @property
    def max_delay(self):
        return max(self.delays.values()) if self.delays else 0


@dataclass(frozen=True)
class Clock:
    net: str
    period: int
    offset: int = 0
    duty: float = 0.5


@dataclass
class Stimulus:
    clocks: list = field(default_factory=list)
    explicit_edges: list = field(default_factory=list)

    def edges(self, t_end):
        """ Merge clocks and explicit edges into per-net time-ordered (time, Level) lists up to t_end """
        per_net = {}
        for clock in self.clocks:
            assert clock.period > 0, 'clock period must be positive'
            if not 0.0 < clock.duty < 1.0:
                raise StimulusError('duty of clock {} must be within (0, 1), got {}'.format(clock.net, clock.duty))
            if clock.offset < 0:
                raise StimulusError('clock {} has a negative offset'.format(clock.net))
            high = int(round(clock.duty * clock.period))
            edges = per_net.setdefault(clock.net, [])
            start = clock.offset
            while start <= t_end:
                edges.append((start, Level.ONE))
                if start + high <= t_end:
                    edges.append((start + high, Level.ZERO))
                start += clock.period

        for net, time, value in self.explicit_edges:
            per_net.setdefault(net, []).append((int(time), Level(value)))

        for net, edges in per_net.items():
            edges.sort(key=lambda edge: edge[0])
            for (t0, _), (t1, _) in zip(edges, edges[1:]):
                if t1 <= t0:
                    raise StimulusError('edge times of {} are not strictly increasing at t={} fs'.format(net, t1))
        return per_net


@dataclass
class WaveformSet:
    traces: dict = field(default_factory=dict)
    horizon: int = 0

    def value_at(self, net, time):
        """ the level of a net at a given time (last transition at or before time) """
        result = Level.UNKNOWN
        for t, value in self.traces[net]:
            if t > time:
                break
            result = value
        return result

    def transitions(self, net):
        return list(self.traces.get(net, []))


def compile_model(netlist, delays=None, default_delay=DEFAULT_DEVICE_DELAY, initial_state=None,
                  oscillation_bound=DEFAULT_OSCILLATION_BOUND):
    """ Compile a netlist into an immutable simulation model
    :param netlist: a netlist passing validate()
    :param delays: per-device delay overrides in fs (override > netlist attribute > default_delay)
    :param default_delay: the global default device delay in fs
    :param initial_state: map net -> LogicValue replacing the STORED UNKNOWN power-on value of a net
    :param oscillation_bound: zero-delay iterations allowed at one timestamp
    :return: a SimModel
    """
    report = validate(netlist)
    if not report.ok:
        raise NetlistValidationError('netlist failed validation: ' + '; '.join(report.violations))

    delays = delays or {}
    resolved = {}
    for dev in netlist.devices:
        if dev.name in delays:
            delay = delays[dev.name]
        elif dev.delay is not None:
            delay = dev.delay
        else:
            delay = default_delay
        assert delay >= 0, 'negative delay for device {}'.format(dev.name)
        resolved[dev.name] = int(delay)

    init = dict(initial_state or {})

    components = tuple(channel_connected_components(netlist))
    gate_fanout, channel_fanout = {}, {}
    for idx, comp in enumerate(components):
        for name in comp.devices:
            dev = netlist.device(name)
            gate_fanout.setdefault(dev.gate, set()).add(idx)
        for net in comp.boundary:
            channel_fanout.setdefault(net, set()).add(idx)

    freeze = lambda fanout: {net: tuple(sorted(idxs)) for net, idxs in fanout.items()}
    return SimModel(netlist, resolved, init, components, freeze(gate_fanout), freeze(channel_fanout),
                    oscillation_bound)


def _rail_level(netlist, net, net_states):
    kind = netlist.kind_of(net)
    if kind == 'supply_high':
        return Level.ONE
    if kind == 'supply_low':
        return Level.ZERO
    return net_states[net].value


def _minimax_reach(sources, edges, rails):
    """ For every net reachable from sources through the given channel edges, the smallest achievable
    maximum device delay along a path (bottleneck shortest path). Paths never pass through a rail. """
    best = {}
    heap = [(0, net) for net in sorted(sources)]
    adjacency = {}
    for a, b, delay in edges:
        adjacency.setdefault(a, []).append((b, delay))
        adjacency.setdefault(b, []).append((a, delay))

    while heap:
        cost, net = heapq.heappop(heap)
        if net in best:
            continue
        best[net] = cost
        for nxt, delay in adjacency.get(net, ()):
            if nxt not in best and nxt not in rails:
                heapq.heappush(heap, (max(cost, delay), nxt))
    return best


def _resolve(component, net_states, netlist, delays):
    rails = component.boundary
    definite, possible = [], []
    for name in component.devices:
        dev = netlist.device(name)
        gate = net_states[dev.gate].value
        edge = (dev.drain, dev.source, delays.get(name, 0) if delays else 0)
        if gate == Level.UNKNOWN:
            possible.append(edge)
        elif dev.conducts(int(gate)):
            definite.append(edge)
            possible.append(edge)

    by_level = {Level.ONE: set(), Level.ZERO: set(), Level.UNKNOWN: set()}
    for rail in rails:
        by_level[_rail_level(netlist, rail, net_states)].add(rail)

    reach = {}
    for mode, edges in (('definite', definite), ('possible', possible)):
        reach[mode] = {level: _minimax_reach(sources, edges, rails) for level, sources in by_level.items()}

    results = {}
    for net in component.nets:
        prev = net_states[net]

        def outcome(mode):
            hits = [level for level in (Level.ONE, Level.ZERO, Level.UNKNOWN) if net in reach[mode][level]]
            if not hits:
                return LogicValue(prev.value, Origin.STORED), None
            if hits == [Level.ONE] or hits == [Level.ZERO]:
                return LogicValue(hits[0], Origin.DRIVEN), reach[mode][hits[0]][net]
            return LogicValue(Level.UNKNOWN, Origin.DRIVEN), min(reach[mode][level][net] for level in hits)

        def_value, def_delay = outcome('definite')
        pos_value, pos_delay = outcome('possible')
        # a possibly conducting path makes the net driven, whatever its value
        if def_value.value == pos_value.value:
            value = LogicValue(def_value.value, pos_value.origin)
            delay = def_delay if def_delay is not None else pos_delay
        else:
            value, delay = LogicValue(Level.UNKNOWN, Origin.DRIVEN), pos_delay

        # storage soundness
        if value.origin == Origin.STORED:
            assert all(net not in reach['possible'][level] for level in reach['possible']), \
                'net {} reported STORED while a conducting path exists'.format(net)

        results[net] = (value, 0 if delay is None else delay)
    return results


def solve_ccc(component, net_states, netlist, delays=None):
    """ Resolve the nets of one channel-connected component from the gate values of its devices.

    A net reaching only the high rail through conducting devices is driven ONE, only the low rail ZERO, both
    (or an unknown rail) UNKNOWN; with no path it keeps its previous value as STORED. A device with an UNKNOWN
    gate is treated as possibly on: when including it changes the outcome the net becomes UNKNOWN.

    :param component: a Component from channel_connected_components()
    :param net_states: map net -> LogicValue covering gates, rails and the component nets
    :param netlist: the netlist owning the component
    :param delays: optional map device -> fs, used only for event timing
    :return: map net -> LogicValue
    """
    return {net: value for net, (value, _) in _resolve(component, net_states, netlist, delays).items()}


class _Run(object):
    """ private mutable state of one simulation run """

    def __init__(self, model, stim, t_end):
        self.model = model
        self.netlist = model.netlist
        self.t_end = t_end
        self.values = {}
        self.pending = {}
        self.heap = []
        self.seq = 0
        self.traces = {}
        self.event_count = 0

        inputs = set(self.netlist.inputs)
        edges = stim.edges(t_end)
        for net in edges:
            if net not in inputs:
                raise StimulusError('stimulus drives {} which is not a declared input'.format(net))

        for net in self.netlist.net_names():
            kind = self.netlist.kind_of(net)
            if kind == 'supply_high':
                self.values[net] = LogicValue(Level.ONE)
            elif kind == 'supply_low':
                self.values[net] = LogicValue(Level.ZERO)
            elif kind == 'input':
                self.values[net] = LogicValue(Level.ZERO)
            else:
                self.values[net] = model.initial_state.get(net, STORED_UNKNOWN)

        self.input_events = []
        for net, net_edges in edges.items():
            for time, level in net_edges:
                if time == 0:
                    self.values[net] = LogicValue(level)
                else:
                    self.input_events.append((time, net, level))
        self.input_events.sort(key=lambda ev: (ev[0], ev[1]))

        for net, value in self.values.items():
            self.traces[net] = [(0, value.value)]

    def push(self, time, net, value):
        self.pending[net] = (time, value)
        self.seq += 1
        heapq.heappush(self.heap, (time, net, self.seq))

    def evaluate(self, indices, now):
        """ re-solve components, schedule or cancel resulting net changes; returns nets scheduled at now """
        immediate = set()
        delays = self.model.delays
        for idx in sorted(indices):
            results = _resolve(self.model.components[idx], self.values, self.netlist, delays)
            for net, (value, delay) in results.items():
                current = self.values[net]
                if value.value == current.value:
                    self.values[net] = value
                    self.pending.pop(net, None)
                    continue
                pending = self.pending.get(net)
                if pending is not None and pending[1].value == value.value:
                    continue
                self.push(now + delay, net, value)
                if delay == 0:
                    immediate.add(net)
        return immediate

    def affected(self, nets):
        indices = set()
        for net in nets:
            indices.update(self.model.gate_fanout.get(net, ()))
            indices.update(self.model.channel_fanout.get(net, ()))
        return indices

    def apply(self, time, updates):
        changed = []
        for net in sorted(updates):
            value = updates[net]
            if self.values[net].value != value.value:
                changed.append(net)
                trace = self.traces[net]
                # zero-delay glitches collapse into one entry per timestamp
                if trace[-1][0] == time:
                    trace[-1] = (time, value.value)
                    if len(trace) > 1 and trace[-2][1] == value.value:
                        trace.pop()
                else:
                    trace.append((time, value.value))
            self.values[net] = value
        self.event_count += len(updates)
        return changed

    def run(self):
        self.evaluate(range(len(self.model.components)), 0)
        self.settle(0)

        cursor = 0
        while True:
            next_input = self.input_events[cursor][0] if cursor < len(self.input_events) else None
            next_internal = self.heap[0][0] if self.heap else None
            candidates = [t for t in (next_input, next_internal) if t is not None]
            if not candidates:
                break
            now = min(candidates)
            if now > self.t_end:
                break

            updates = {}
            while cursor < len(self.input_events) and self.input_events[cursor][0] == now:
                _, net, level = self.input_events[cursor]
                updates[net] = LogicValue(level)
                cursor += 1
            updates.update(self.pop_due(now))

            changed = self.apply(now, updates)
            self.evaluate(self.affected(changed), now)
            self.settle(now)

        return WaveformSet(traces=self.traces, horizon=self.t_end)

    def pop_due(self, now):
        due = {}
        while self.heap and self.heap[0][0] == now:
            _, net, _ = heapq.heappop(self.heap)
            pending = self.pending.get(net)
            if pending is not None and pending[0] == now:
                due[net] = pending[1]
                del self.pending[net]
        return due

    def settle(self, now):
        """ run zero-delay iterations at the current timestamp """
        rounds = 0
        while self.heap and self.heap[0][0] == now:
            rounds += 1
            if rounds > self.model.oscillation_bound:
                raise OscillationError(now, [net for _, net, _ in self.heap if self.pending.get(net, (None,))[0] == now],
                                       self.model.oscillation_bound)
            changed = self.apply(now, self.pop_due(now))
            self.evaluate(self.affected(changed), now)


def run(model, stim, t_end):
    """ Simulate a compiled model under a stimulus up to t_end (fs, inclusive)
    :param model: a SimModel
    :param stim: a Stimulus whose nets are declared inputs
    :param t_end: the horizon in fs
    :return: a WaveformSet with a t=0 entry for every net
    """
    assert t_end > 0, 't_end must be positive'
    sim = _Run(model, stim, int(t_end))
    waveform = sim.run()
    logger.debug('simulated %s up to %d fs: %d events', model.netlist.metadata.get('name', 'netlist'),
                 t_end, sim.event_count)
    return waveform


def clock_stimulus(period, ref_offset=0, div_offset=0, duty=0.5, ref='Ref', div='Div', div_period=None):
    """ Two free-running clocks on the reference and feedback inputs """
    return Stimulus(clocks=[Clock(ref, period, ref_offset, duty),
                            Clock(div, div_period or period, div_offset, duty)])


def edge_stimulus(edges):
    """ Explicit edges given as a map net -> list of (time fs, 0|1) """
    explicit = [(net, time, value) for net, items in sorted(edges.items()) for time, value in items]
    return Stimulus(explicit_edges=explicit)


def sample(waveform, net, time):
    """ the level of a net at a time, or the level of every listed net when net is a sequence """
    if isinstance(net, str):
        return waveform.value_at(net, time)
    return tuple(waveform.value_at(name, time) for name in net)
