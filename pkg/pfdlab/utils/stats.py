import math

import numpy as np


def high_intervals(trace, horizon=None):
    """
    closed high intervals of a net trace
    :param trace: time ordered list of (time fs, level) with levels 0/1 (anything else counts as low)
    :param horizon: if given, a pulse still high at the horizon is closed there; otherwise it is dropped
    :return: list of (rise, fall) in fs
    """
    intervals, rise = [], None
    for time, level in trace:
        if int(level) == 1 and rise is None:
            rise = time
        elif int(level) != 1 and rise is not None:
            intervals.append((rise, time))
            rise = None
    if rise is not None and horizon is not None and horizon > rise:
        intervals.append((rise, horizon))
    return intervals


def overlap(interval, others):
    """ total time interval shares with a list of intervals """
    lo, hi = interval
    return sum(max(0, min(hi, o_hi) - max(lo, o_lo)) for o_lo, o_hi in others)


def exclusive_intervals(intervals, others):
    """ the parts of intervals not covered by others (both lists time ordered, each non overlapping) """
    result = []
    for lo, hi in intervals:
        start = lo
        for o_lo, o_hi in others:
            if o_hi <= start or o_lo >= hi:
                continue
            if o_lo > start:
                result.append((start, o_lo))
            start = max(start, o_hi)
        if start < hi:
            result.append((start, hi))
    return result


def width_stats(widths):
    """
    mean, population std and count of pulse widths
    :return: (mean fs, std fs, count); (nan, nan, 0) for an empty list
    """
    if len(widths) == 0:
        return math.nan, math.nan, 0
    values = np.asarray(widths, dtype=np.float64)
    return float(values.mean()), float(values.std()), int(values.size)


def histogram(values, bins=50):
    """
    fixed bin histogram
    :param values: samples in fs
    :param bins: number of bins
    :return: list of (bin_lo_fs, bin_hi_fs, count)
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return []
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        # a degenerate distribution still gets one bin of 1 fs
        hi = lo + 1.0
        bins = 1
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]
