import math
import re


FS_PER_UNIT = {'fs': 1, 'ps': 1000, 'ns': 1000000, 'us': 1000000000}

_TIME_PATTERN = re.compile(r'^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(fs|ps|ns|us)?\s*$')
_PHASE_PATTERN = re.compile(r'^\s*([-+]?[0-9]*\.?[0-9]*(?:[eE][-+]?[0-9]+)?)\s*\*?\s*pi\s*$')


def parse_time(text, default_unit='fs'):
    """ Parse a time argument such as '40ps', '1.5ns' or '13334' into integer femtoseconds
    :param text: the time string, or a number already expressed in the default unit
    :param default_unit: the unit used when the string carries no suffix
    :return: time in fs (int)
    """
    if isinstance(text, (int, float)):
        return int(round(text * FS_PER_UNIT[default_unit]))

    match = _TIME_PATTERN.match(str(text))
    if match is None:
        raise ValueError('Invalid time value: {}'.format(text))

    value, unit = float(match.group(1)), match.group(2) or default_unit
    return int(round(value * FS_PER_UNIT[unit]))


def parse_phase(text):
    """ Parse a phase argument: '<x>pi' (e.g. '0.2pi', '-pi') or plain radians
    :param text: the phase string or number
    :return: phase in radians
    """
    if isinstance(text, (int, float)):
        return float(text)

    match = _PHASE_PATTERN.match(str(text))
    if match is not None:
        factor = match.group(1)
        if factor in ('', '+'):
            factor = 1.0
        elif factor == '-':
            factor = -1.0
        return float(factor) * math.pi

    try:
        return float(text)
    except ValueError:
        raise ValueError('Invalid phase value: {}'.format(text))


def period_fs(freq):
    """ Period of a clock in fs, rounded to the nearest femtosecond """
    assert freq > 0, 'frequency must be positive'
    return int(round(1e15 / freq))


def phase_to_fs(phi, freq):
    """ Convert a phase difference (radians) at frequency freq (Hz) into an edge separation in fs """
    return int(round(phi / (2.0 * math.pi) * 1e15 / freq))


def fs_to_phase(dt, freq):
    """ Convert an edge separation (fs) into a phase difference (radians) """
    return 2.0 * math.pi * dt * 1e-15 * freq
