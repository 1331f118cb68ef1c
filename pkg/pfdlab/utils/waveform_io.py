import io

import pandas as pd
from vcd import VCDWriter

from pfdlab.core.switch_sim import Level, WaveformSet


CSV_HEADER = 'time_fs,net,value'
VCD_TIMESCALE = '1 fs'


def _rows(waveform):
    rows = []
    for net, trace in waveform.traces.items():
        for time, value in trace:
            rows.append((time, net, value))
    rows.sort(key=lambda row: (row[0], row[1]))
    return rows


def waveform_to_csv(waveform):
    lines = [CSV_HEADER]
    for time, net, value in _rows(waveform):
        lines.append('{},{},{}'.format(time, net, Level(value).char))
    return ('\n'.join(lines) + '\n').encode('utf-8')


def waveform_to_vcd(waveform, module='pfdlab'):
    fp = io.StringIO()
    # no date, identical runs give identical files
    with VCDWriter(fp, timescale=VCD_TIMESCALE, date='', version='pfdlab') as writer:
        variables = {net: writer.register_var(module, net, 'wire', size=1) for net in sorted(waveform.traces)}
        for time, net, value in _rows(waveform):
            writer.change(variables[net], time, 'x' if value == Level.UNKNOWN else int(value))
    return fp.getvalue().encode('utf-8')


def export_waveform(waveform, fmt='csv'):
    """ Serialize a waveform set
    :param waveform: a WaveformSet
    :param fmt: 'csv' (rows time_fs,net,value sorted by time then net) or 'vcd' (1 fs timescale)
    :return: bytes
    """
    if fmt == 'csv':
        return waveform_to_csv(waveform)
    elif fmt == 'vcd':
        return waveform_to_vcd(waveform)
    else:
        raise ValueError('unknown waveform format: {}'.format(fmt))


def parse_waveform_csv(data, horizon=None):
    """ Read a waveform CSV produced by export_waveform
    :param data: csv bytes or str
    :param horizon: the simulated horizon in fs, defaults to the last recorded time
    :return: a WaveformSet
    """
    if isinstance(data, bytes):
        data = data.decode('utf-8')
    frame = pd.read_csv(io.StringIO(data), dtype={'time_fs': 'int64', 'net': str, 'value': str},
                        keep_default_na=False)
    assert list(frame.columns) == CSV_HEADER.split(','), 'unexpected waveform header: {}'.format(list(frame.columns))

    traces = {}
    for time, net, value in frame.itertuples(index=False, name=None):
        traces.setdefault(net, []).append((int(time), Level.from_char(value)))

    if horizon is None:
        horizon = int(frame['time_fs'].max()) if len(frame) else 0
    return WaveformSet(traces=traces, horizon=horizon)
