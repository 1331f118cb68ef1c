""" Measurements on phase frequency detectors: transfer characteristic, dead zone, blind zone, pulse widths,
Monte-Carlo delay variation, PVT sweep and a toggle count activity proxy.

Every measurement drives an implementation handle (see pfd_handle) with REF/DIV edge lists. Independent points are
evaluated by a thread pool and reduced in their submission order, so results never depend on scheduling.
"""

import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy.optimize import least_squares

from pfdlab.core.netlist import build_reference_pfd
from pfdlab.core.pfd_handle import PUMP_SETUP, SwitchHandle, as_handle
from pfdlab.core.switch_sim import Level, OscillationError, WaveformSet, compile_model
from pfdlab.utils.stats import exclusive_intervals, high_intervals, histogram, width_stats
from pfdlab.utils.units import period_fs, phase_to_fs


logger = logging.getLogger('pfdlab.measure')


@dataclass
class TransferCurve:
    points: list
    freq: float
    aborted: list = field(default_factory=list)
    normalization: str = 'duty'

    @property
    def phases(self):
        return [phi for phi, _ in self.points]

    @property
    def outputs(self):
        return [out for _, out in self.points]


@dataclass
class McReport:
    samples: int
    mean_up: float
    mean_down: float
    std_up: float
    std_down: float
    histogram_up: list = field(default_factory=list)
    histogram_down: list = field(default_factory=list)
    up_widths: list = field(default_factory=list)
    down_widths: list = field(default_factory=list)


@dataclass(frozen=True)
class PvtModel:
    """ delay scale s(V, T) = (1 + a dV) (1 + b dT), dV = V - v_nominal, dT = T - t_nominal

    width_gain is the measured nominal pulse width over the ideal one; it multiplies reported widths only.
    """
    a: float = 0.0
    b: float = 0.0
    width_gain: float = 1.0
    v_nominal: float = 1.0
    t_nominal: float = 25.0
    temp_range: tuple = (-25.0, 125.0)
    vdd_range: tuple = (0.9, 1.1)

    def scale(self, vdd, temp):
        dv, dt = vdd - self.v_nominal, temp - self.t_nominal
        return (1.0 + self.a * dv) * (1.0 + self.b * dt)

    def width(self, ideal, vdd, temp):
        """ the pulse width reported at a corner for an ideal (nominal delay) width """
        return self.width_gain * self.scale(vdd, temp) * ideal

    @staticmethod
    def from_config(model_cfg):
        return PvtModel(a=float(model_cfg.a), b=float(model_cfg.b), width_gain=float(model_cfg.width_gain),
                        v_nominal=float(model_cfg.v_nominal), t_nominal=float(model_cfg.t_nominal),
                        temp_range=tuple(model_cfg.temp_range), vdd_range=tuple(model_cfg.vdd_range))



@dataclass
class PvtGrid:
    temps: list
    vdds: list
    widths: list

    def width(self, temp, vdd):
        return self.widths[self.temps.index(temp)][self.vdds.index(vdd)]


@dataclass
class ActivityReport:
    counts: dict
    total: float


def worker_count(threads=None):
    """ workers for independent points: an explicit count, else PFDLAB_THREADS, else the cpu count """
    if threads:
        return max(1, int(threads))
    env = os.environ.get('PFDLAB_THREADS')
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map_ordered(fn, items, threads=None):
    items = list(items)
    workers = min(worker_count(threads), max(1, len(items)))
    if workers == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(fn, item) for item in items]
        return [future.result() for future in futures]


def clock_edges(freq, dt, cycles, offset=None):
    """
    REF and DIV as 50% duty clocks, DIV lagging REF by dt
    :return: (ref edges, div edges, first REF rise, period) with edges as (time fs, 0|1)
    """
    period = period_fs(freq)
    base = period if offset is None else offset
    ref, div = [], []
    for k in range(cycles):
        ref += [(base + k * period, 1), (base + k * period + period // 2, 0)]
        div += [(base + dt + k * period, 1), (base + dt + k * period + period // 2, 0)]
    return ref, div, base, period


def transfer_point(pfd, freq, phi, cycles=16, warmup=4):
    """ normalized detector output at one phase error; phases beyond +-pi are wrapped into (-pi, pi] first """
    handle = as_handle(pfd)
    dt = phase_to_fs(math.remainder(phi, 2 * math.pi), freq)
    ref, div, base, period = clock_edges(freq, dt, warmup + cycles + 1)
    lo, hi = base + warmup * period, base + (warmup + cycles) * period
    try:
        response = handle.respond(ref, div, base + (warmup + cycles + 1) * period)
    except OscillationError as err:
        logger.warning('transfer point phi=%.4f rad aborted: %s', phi, err)
        return None

    charge = 0
    for pulse in response.pulses:
        if pulse.sub_threshold or not lo <= pulse.rise < hi:
            continue
        charge += pulse.exclusive_width if pulse.net == 'up' else -pulse.exclusive_width
    duty = charge / float(hi - lo)
    # the ideal detector reaches a duty of 0.5 at +-pi
    return duty / 0.5


def transfer_sweep(pfd, freq, points=201, cycles=16, warmup=4, threads=None):
    """
    Detector output against phase error over [-pi, pi]
    :param pfd: a handle, a PfdConfig or a SimModel
    :param freq: input frequency in Hz
    :param points: odd number of phase points (>= 3)
    :param cycles: settled cycles averaged per point (>= 16)
    :param warmup: cycles discarded before averaging
    :return: a TransferCurve; points whose simulation does not settle hold nan and are listed in aborted
    """
    assert points >= 3 and points % 2 == 1, 'points must be odd and >= 3, got {}'.format(points)
    assert cycles >= 16, 'at least 16 settled cycles per point, got {}'.format(cycles)
    handle = as_handle(pfd)
    phases = [float(phi) for phi in np.linspace(-math.pi, math.pi, points)]
    outputs = _map_ordered(lambda phi: transfer_point(handle, freq, phi, cycles, warmup), phases, threads)

    curve = TransferCurve([], freq)
    for phi, out in zip(phases, outputs):
        if out is None:
            curve.aborted.append(phi)
            out = math.nan
        curve.points.append((phi, out))
    logger.info('transfer sweep at %.3g Hz: %d points, %d aborted', freq, points, len(curve.aborted))
    return curve


def _detects_pulse(handle, freq, dt):
    ref, div, base, period = clock_edges(freq, dt, 1)
    response = handle.respond(ref, div, base + dt + period)
    return any(not pulse.sub_threshold for pulse in response.pulses_of('up'))


def measure_dead_zone(pfd, freq, resolution=1):
    """
    Smallest REF-to-DIV separation in (0, period/4] that produces a charge-pump visible pulse
    :param pfd: a handle, a PfdConfig or a SimModel
    :param freq: input frequency in Hz
    :param resolution: bisection resolution in fs (>= 1)
    :return: dead zone in fs, 0 when a 1 fs separation is already detected
    """
    assert resolution >= 1, 'resolution must be >= 1 fs, got {}'.format(resolution)
    handle = as_handle(pfd)
    lo, hi = 1, period_fs(freq) // 4
    if _detects_pulse(handle, freq, lo):
        return 0
    if not _detects_pulse(handle, freq, hi):
        logger.warning('no visible pulse up to a quarter period (%d fs)', hi)
        return hi

    while hi - lo > resolution:
        mid = (lo + hi) // 2
        if _detects_pulse(handle, freq, mid):
            hi = mid
        else:
            lo = mid
    logger.info('dead zone at %.3g Hz: %d fs', freq, hi)
    return hi


def _second_ref_missed(handle, freq, offset):
    """ REF leads DIV by almost a full period; the next REF edge arrives offset fs after the DIV edge. The edge is
    missed when the up/down outputs are the same with and without it. """
    period = period_fs(freq)
    half = period // 2
    t0 = period
    first = [(t0, 1), (t0 + half, 0)]
    div_edge = t0 + period - offset
    div = [(div_edge, 1), (div_edge + half, 0)]
    t_end = t0 + 2 * period
    with_edge = handle.respond(first + [(t0 + period, 1), (t0 + period + half, 0)], div, t_end)
    without = handle.respond(first, div, t_end)
    return all(with_edge.waveform.traces[net] == without.waveform.traces[net]
               for net in (with_edge.up_net, with_edge.down_net))


def _boundary(missed, a, b, resolution):
    """ first position after a whose outcome differs from the outcome at a """
    state = missed(a)
    while b - a > resolution:
        mid = (a + b) // 2
        if missed(mid) == state:
            a = mid
        else:
            b = mid
    return b


def measure_blind_zone(pfd, freq, resolution=1, steps=200, threads=None):
    """
    Total length of the window after a reset starts in which a new REF edge is lost. The phase error is taken close
    to 2 pi: DIV lags REF by almost a period so that the following REF edge lands inside the reset.
    :param pfd: a handle, a PfdConfig or a SimModel
    :param freq: input frequency in Hz
    :param resolution: boundary resolution in fs
    :param steps: scan positions over the first quarter period after the reset starts; later edges approach the
        +-pi wrap of the detector rather than its reset
    :return: blind zone in fs
    """
    assert freq > 0, 'frequency must be positive'
    handle = as_handle(pfd)
    quarter = period_fs(freq) // 4
    positions = sorted(set(int(x) for x in np.linspace(1, quarter, steps)))
    missed = lambda offset: _second_ref_missed(handle, freq, offset)
    outcomes = _map_ordered(missed, positions, threads)

    total, idx = 0, 0
    while idx < len(positions):
        if not outcomes[idx]:
            idx += 1
            continue
        end_idx = idx
        while end_idx + 1 < len(positions) and outcomes[end_idx + 1]:
            end_idx += 1
        # the window opens with the reset edge itself
        start = 0 if idx == 0 else _boundary(missed, positions[idx - 1], positions[idx], resolution)
        if end_idx + 1 < len(positions):
            end = _boundary(missed, positions[end_idx], positions[end_idx + 1], resolution)
        else:
            end = quarter
        total += end - start
        idx = end_idx + 1
    logger.info('blind zone at %.3g Hz: %d fs', freq, total)
    return total


def _intervals_trace(intervals):
    trace = [(0, Level.ZERO)]
    for lo, hi in intervals:
        for time, level in ((lo, Level.ONE), (hi, Level.ZERO)):
            if trace[-1][0] == time:
                trace[-1] = (time, level)
            else:
                trace.append((time, level))
    return trace


def effective_pulses(waveform, up, down):
    """
    Add the nets the charge pump integrates: UPEFF = up and not down, DNEFF = down and not up
    :param waveform: a WaveformSet holding the up and down nets
    :return: a new WaveformSet with UPEFF and DNEFF traces
    """
    ups = high_intervals(waveform.traces[up], waveform.horizon)
    downs = high_intervals(waveform.traces[down], waveform.horizon)
    traces = dict(waveform.traces)
    traces['UPEFF'] = _intervals_trace(exclusive_intervals(ups, downs))
    traces['DNEFF'] = _intervals_trace(exclusive_intervals(downs, ups))
    return WaveformSet(traces, waveform.horizon)


def pulse_width_stats(waveform, nets, warmup=0):
    """
    Widths of the completed high pulses of each net
    :param waveform: a WaveformSet
    :param nets: net names present in the waveform
    :param warmup: pulses rising before this time (fs) are ignored
    :return: dict net -> (mean fs, std fs, count)
    """
    stats = {}
    for net in nets:
        assert net in waveform.traces, 'net {} is not in the waveform'.format(net)
        widths = [hi - lo for lo, hi in high_intervals(waveform.traces[net]) if lo >= warmup]
        stats[net] = width_stats(widths)
    return stats


def pulse_widths(pfd, phi, freq, cycles=4, warmup=1):
    """ exclusive width of the leading output in each cycle for a constant phase error (positive phi: REF leads, up
    pulses). Only the widest exclusive interval of a cycle counts, so slivers left when the two outputs fall a few fs
    apart never enter the statistics. """
    handle = as_handle(pfd)
    dt = phase_to_fs(abs(phi), freq)
    ref, div, base, period = clock_edges(freq, dt, cycles)
    if phi < 0:
        ref, div = div, ref
    response = handle.respond(ref, div, base + dt + cycles * period)
    waveform = effective_pulses(response.waveform, response.up_net, response.down_net)
    intervals = high_intervals(waveform.traces['UPEFF' if phi >= 0 else 'DNEFF'])
    widths = []
    for k in range(warmup, cycles):
        start = base + k * period
        in_cycle = [hi - lo for lo, hi in intervals if start <= lo < start + period]
        if in_cycle:
            widths.append(max(in_cycle))
    return widths


def _mc_sample(handle, rel_sigma, seed, index, phi, freq, cycles):
    rng = np.random.default_rng(seed ^ index)
    # the relative variation is a 3 sigma bound
    factors = rng.normal(1.0, rel_sigma / 3.0, size=handle.delay_count)
    varied = handle.varied(factors)
    up = pulse_widths(varied, abs(phi), freq, cycles)
    down = pulse_widths(varied, -abs(phi), freq, cycles)
    return float(np.mean(up)) if up else math.nan, float(np.mean(down)) if down else math.nan


def monte_carlo(model, rel_sigma, samples, seed, phi, freq, cycles=4, bins=50, threads=None):
    """
    Pulse widths under independent Gaussian device delay variation
    :param model: a handle, a PfdConfig or a SimModel
    :param rel_sigma: relative delay variation at 3 sigma (0.1 for +-10%)
    :param samples: number of samples (>= 1); sample i draws from seed ^ i
    :param seed: base seed
    :param phi: phase error in radians; up widths are taken with REF leading, down widths with DIV leading
    :param freq: input frequency in Hz
    :return: an McReport
    """
    assert samples >= 1, 'samples must be >= 1, got {}'.format(samples)
    assert rel_sigma >= 0, 'rel_sigma must be >= 0, got {}'.format(rel_sigma)
    handle = as_handle(model)
    results = _map_ordered(lambda idx: _mc_sample(handle, rel_sigma, seed, idx, phi, freq, cycles),
                           range(samples), threads)

    up = [width for width, _ in results]
    down = [width for _, width in results]
    mean_up, std_up, _ = width_stats([w for w in up if not math.isnan(w)])
    mean_down, std_down, _ = width_stats([w for w in down if not math.isnan(w)])
    logger.info('monte carlo (%d samples, %.1f%% at 3 sigma): up %.1f +- %.2f fs, down %.1f +- %.2f fs', samples,
                100 * rel_sigma, mean_up, std_up, mean_down, std_down)
    return McReport(samples, mean_up, mean_down, std_up, std_down, histogram(up, bins), histogram(down, bins), up, down)


def pvt_sweep(model, pvt, temps, vdds, phi, freq, threads=None):
    """
    Mean leading pulse width over a temperature x supply grid
    :param model: a handle, a PfdConfig or a SimModel
    :param pvt: a PvtModel
    :param temps: temperatures in degree C
    :param vdds: supply voltages in V
    :return: a PvtGrid with widths[i][j] in fs for temps[i], vdds[j]
    """
    assert temps and vdds, 'the PVT grid must not be empty'
    handle = as_handle(model)
    corners = [(temp, vdd) for temp in temps for vdd in vdds]

    def corner_width(corner):
        widths = pulse_widths(handle.scaled(pvt.scale(corner[1], corner[0])), phi, freq)
        # the output stage slows down with s, and so does the width the pump sees
        return pvt.width(float(np.mean(widths)), corner[1], corner[0]) if widths else math.nan

    values = _map_ordered(corner_width, corners, threads)
    widths = [values[i * len(vdds):(i + 1) * len(vdds)] for i in range(len(temps))]
    return PvtGrid(list(temps), list(vdds), widths)


def fit_pvt_model(anchors):
    """
    Least-squares fit of the PVT scale to measured anchors, each residual weighted by its tolerance
    :param anchors: mapping with voltage_ratio, temp_ratio (100 C over 25 C), nominal_width, the corners
                    corner_low / corner_high given as [temperature, vdd, width fs] and the matching *_tol entries
    :return: a PvtModel, monotone in V and T since a and b are bounded below by zero
    """
    low, high = anchors['corner_low'], anchors['corner_high']
    nominal = float(anchors['nominal_width'])
    corner_tol = float(anchors['corner_tol'])

    def residuals(x):
        model = PvtModel(*x)
        return [(model.scale(1.1, 25.0) / model.scale(0.9, 25.0) - anchors['voltage_ratio'])
                / anchors['voltage_ratio_tol'],
                (model.scale(1.0, 100.0) / model.scale(1.0, 25.0) - anchors['temp_ratio']) / anchors['temp_ratio_tol'],
                (model.width(nominal, low[1], low[0]) - low[2]) / corner_tol,
                (model.width(nominal, high[1], high[0]) - high[2]) / corner_tol]

    # a below 10 keeps 1 + a dV positive over +-10% supply
    result = least_squares(residuals, np.array([0.1, 1e-4, 1.0]), bounds=([0.0, 0.0, 0.0], [9.0, np.inf, np.inf]),
                           xtol=1e-14, ftol=1e-14, gtol=1e-14)
    a, b, gain = (float(value) for value in result.x)
    logger.debug('pvt fit: a=%.6g b=%.6g width gain=%.6g, cost %.3g', a, b, gain, result.cost)
    return PvtModel(a, b, gain)


def dennard_scale(power, from_node, to_node):
    """ power scaled between technology nodes with the square of the feature size ratio """
    assert from_node > 0 and to_node > 0, 'technology nodes must be positive'
    return power * (float(to_node) / from_node) ** 2


def activity_report(waveform, weights=None):
    """
    Toggle count proxy of switching activity
    :param waveform: a WaveformSet
    :param weights: per-net weights, missing nets weigh 1
    :return: an ActivityReport with 0<->1 transition counts per net and their weighted total
    """
    weights = weights or {}
    counts = {}
    for net in sorted(waveform.traces):
        trace = waveform.traces[net]
        counts[net] = sum(1 for (_, prev), (_, value) in zip(trace, trace[1:])
                          if {int(prev), int(value)} == {0, 1})
    total = float(sum(count * weights.get(net, 1.0) for net, count in counts.items()))
    return ActivityReport(counts, total)


def calibrated_switch_handle(delay, output_buffers=False, t_setup=PUMP_SETUP):
    """ the reference detector with every device delay set to delay fs, driving a pump with the given setup """
    model = compile_model(build_reference_pfd(output_buffers), default_delay=int(delay))
    return SwitchHandle(model, t_setup)


def calibrate_switch_delay(target_dead_zone=40000, freq=1e9, lo=1000, hi=100000, resolution=1, t_setup=PUMP_SETUP):
    """
    Bisection on the uniform device delay of the reference detector
    :param target_dead_zone: the dead zone to reach (fs)
    :return: the smallest delay (fs) whose measured dead zone reaches the target
    """
    measure = lambda delay: measure_dead_zone(calibrated_switch_handle(delay, t_setup=t_setup), freq, resolution)
    assert measure(hi) >= target_dead_zone, 'target dead zone {} fs is out of reach'.format(target_dead_zone)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if measure(mid) >= target_dead_zone:
            hi = mid
        else:
            lo = mid
    logger.info('calibrated device delay: %d fs', hi)
    return hi


def _clean(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, dict):
        return {key: _clean(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(item) for item in value]
    return value


def to_json(report):
    """ a report (dataclass or dict) as deterministic json bytes, nan written as null """
    data = asdict(report) if hasattr(report, '__dataclass_fields__') else dict(report)
    return (json.dumps(_clean(data), indent=2, sort_keys=True) + '\n').encode('utf-8')


def _frame_bytes(frame):
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False)
    return buffer.getvalue().encode('utf-8')


def to_csv(report):
    """ the tabular part of a report as csv bytes """
    if isinstance(report, TransferCurve):
        frame = pd.DataFrame(report.points, columns=['phi_rad', 'output'])
    elif isinstance(report, McReport):
        frame = pd.DataFrame({'sample': range(report.samples), 'up_width_fs': report.up_widths,
                              'down_width_fs': report.down_widths})
    elif isinstance(report, PvtGrid):
        rows = [(temp, vdd, report.widths[i][j]) for i, temp in enumerate(report.temps)
                for j, vdd in enumerate(report.vdds)]
        frame = pd.DataFrame(rows, columns=['temp_c', 'vdd_v', 'width_fs'])
    elif isinstance(report, ActivityReport):
        frame = pd.DataFrame(sorted(report.counts.items()), columns=['net', 'toggles'])
    else:
        raise TypeError('no tabular form for {}'.format(type(report).__name__))
    return _frame_bytes(frame)


def histogram_csv(bins):
    """ histogram bins as csv with columns bin_lo_fs,bin_hi_fs,count """
    return _frame_bytes(pd.DataFrame(bins, columns=['bin_lo_fs', 'bin_hi_fs', 'count']))
