import re
from dataclasses import dataclass, field

import networkx as nx


NET_KINDS = ('signal', 'supply_high', 'supply_low', 'input', 'output')
POLARITIES = ('PMOS', 'NMOS')
RAIL_KINDS = ('supply_high', 'supply_low', 'input')
KIND_ORDER = ('supply_high', 'supply_low', 'input', 'output', 'signal')

_TOKEN_PATTERN = re.compile(r'\S+')
_NAME_PATTERN = re.compile(r'^[A-Za-z_][A-Za-z0-9_\[\]\.]*$')
_DELAY_PATTERN = re.compile(r'^delay=([0-9]+)fs$', re.IGNORECASE)


class NetlistParseError(ValueError):
    """ Syntax or structural error in netlist text, located by line and column (1-based) """

    def __init__(self, message, line, column=1):
        super(NetlistParseError, self).__init__('line {}, column {}: {}'.format(line, column, message))
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Net:
    name: str
    kind: str = 'signal'


@dataclass(frozen=True)
class Device:
    name: str
    polarity: str
    drain: str
    gate: str
    source: str
    delay: int = None

    def conducts(self, gate_value):
        """ whether the channel is on for a definite gate value (0 or 1) """
        return gate_value == 1 if self.polarity == 'NMOS' else gate_value == 0


@dataclass
class Netlist:
    nets: list = field(default_factory=list)
    devices: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def net_names(self):
        return [net.name for net in self.nets]

    def kind_of(self, name):
        for net in self.nets:
            if net.name == name:
                return net.kind
        raise KeyError(name)

    def names_of_kind(self, kind):
        return [net.name for net in self.nets if net.kind == kind]

    @property
    def supply_high(self):
        names = self.names_of_kind('supply_high')
        return names[0] if names else None

    @property
    def supply_low(self):
        names = self.names_of_kind('supply_low')
        return names[0] if names else None

    @property
    def inputs(self):
        return self.names_of_kind('input')

    @property
    def outputs(self):
        return self.names_of_kind('output')

    def rails(self):
        """ nets whose value is imposed from outside the channel graph: supplies and inputs """
        return [net.name for net in self.nets if net.kind in RAIL_KINDS]

    def device(self, name):
        for dev in self.devices:
            if dev.name == name:
                return dev
        raise KeyError(name)


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self):
        return len(self.violations) == 0

    def is_empty(self):
        return not self.violations and not self.warnings


@dataclass(frozen=True)
class Component:
    """ A channel-connected component: devices joined through source/drain nets """
    devices: tuple
    nets: tuple
    boundary: tuple


def _tokens(line):
    return [(m.group(0), m.start() + 1) for m in _TOKEN_PATTERN.finditer(line)]


def parse_netlist(text):
    """ Parse the SPICE-subset netlist grammar

    .supply vdd <net> / .supply gnd <net>
    .input <net> [<net> ...] / .output <net> [...] / .net <net> [...]
    .meta <key> <value ...>
    M<name> <drain> <gate> <source> <PMOS|NMOS> [delay=<int>fs]
    .end

    :param text: the netlist as bytes or str
    :return: a structurally valid Netlist
    """
    if isinstance(text, bytes):
        text = text.decode('utf-8')

    kinds, order = {}, []
    devices, device_lines = [], {}
    metadata = {}
    line_no = 0

    def declare(name, kind, line, column):
        if not _NAME_PATTERN.match(name):
            raise NetlistParseError('invalid net name "{}"'.format(name), line, column)
        if name in kinds:
            if kinds[name] != kind:
                raise NetlistParseError('net "{}" redeclared as {} (was {})'.format(name, kind, kinds[name]),
                                        line, column)
            return
        kinds[name] = kind
        order.append(name)

    for line_no, raw in enumerate(text.splitlines(), start=1):
        tokens = _tokens(raw)
        if not tokens or tokens[0][0].startswith('*'):
            continue

        keyword, column = tokens[0]
        lowered = keyword.lower()

        if lowered == '.end':
            break

        elif lowered == '.supply':
            if len(tokens) != 3 or tokens[1][0].lower() not in ('vdd', 'gnd'):
                raise NetlistParseError('expected ".supply vdd|gnd <net>"', line_no, column)
            kind = 'supply_high' if tokens[1][0].lower() == 'vdd' else 'supply_low'
            declare(tokens[2][0], kind, line_no, tokens[2][1])

        elif lowered in ('.input', '.output', '.net'):
            if len(tokens) < 2:
                raise NetlistParseError('{} needs at least one net'.format(keyword), line_no, column)
            kind = {'.input': 'input', '.output': 'output', '.net': 'signal'}[lowered]
            for name, col in tokens[1:]:
                declare(name, kind, line_no, col)

        elif lowered == '.meta':
            if len(tokens) < 2:
                raise NetlistParseError('.meta needs a key', line_no, column)
            metadata[tokens[1][0]] = ' '.join(tok for tok, _ in tokens[2:])

        elif keyword[0] in ('M', 'm') and not keyword.startswith('.'):
            devices.append(_parse_device(tokens, line_no, device_lines))

        else:
            raise NetlistParseError('unknown statement "{}"'.format(keyword), line_no, column)

    for kind, label in (('supply_high', 'vdd'), ('supply_low', 'gnd')):
        count = sum(1 for k in kinds.values() if k == kind)
        if count != 1:
            raise NetlistParseError('expected exactly one ".supply {}" declaration, found {}'.format(label, count),
                                    max(line_no, 1))

    for dev in devices:
        line, cols = device_lines[dev.name]
        for terminal in ('drain', 'gate', 'source'):
            name = getattr(dev, terminal)
            if name not in kinds:
                raise NetlistParseError('device M{} references undeclared net "{}"'.format(dev.name, name),
                                        line, cols[terminal])

    # canonical order: supplies, inputs, outputs, internal signals; declaration order within a kind
    nets = sorted((Net(name, kinds[name]) for name in order), key=lambda net: KIND_ORDER.index(net.kind))
    return Netlist(nets=nets, devices=devices, metadata=metadata)


def _parse_device(tokens, line_no, device_lines):
    keyword, column = tokens[0]
    if len(tokens) not in (5, 6):
        raise NetlistParseError('expected "M<name> <drain> <gate> <source> <PMOS|NMOS> [delay=<int>fs]"',
                                line_no, column)

    name = keyword[1:]
    if not name or not _NAME_PATTERN.match(name):
        raise NetlistParseError('invalid device name "{}"'.format(keyword), line_no, column)
    if name in device_lines:
        raise NetlistParseError('duplicate device name "{}" (first defined on line {})'.format(
            keyword, device_lines[name][0]), line_no, column)

    polarity = tokens[4][0].upper()
    if polarity not in POLARITIES:
        raise NetlistParseError('unknown polarity "{}"'.format(tokens[4][0]), line_no, tokens[4][1])

    drain, gate, source = tokens[1][0], tokens[2][0], tokens[3][0]
    if drain == gate:
        raise NetlistParseError('device {} has its drain tied to its gate'.format(keyword), line_no, tokens[2][1])

    delay = None
    if len(tokens) == 6:
        match = _DELAY_PATTERN.match(tokens[5][0])
        if match is None:
            raise NetlistParseError('invalid delay attribute "{}"'.format(tokens[5][0]), line_no, tokens[5][1])
        delay = int(match.group(1))

    device_lines[name] = (line_no, {'drain': tokens[1][1], 'gate': tokens[2][1], 'source': tokens[3][1]})
    return Device(name, polarity, drain, gate, source, delay)


def serialize_netlist(netlist):
    """ Serialize a netlist into the text grammar accepted by parse_netlist
    :param netlist: the netlist
    :return: utf-8 bytes
    """
    lines = ['* {}'.format(netlist.metadata.get('name', 'netlist'))]
    lines.append('.supply vdd {}'.format(netlist.supply_high))
    lines.append('.supply gnd {}'.format(netlist.supply_low))

    for directive, kind in (('.input', 'input'), ('.output', 'output'), ('.net', 'signal')):
        names = netlist.names_of_kind(kind)
        if names:
            lines.append('{} {}'.format(directive, ' '.join(names)))

    for key in sorted(netlist.metadata):
        value = netlist.metadata[key]
        lines.append('.meta {} {}'.format(key, value).rstrip())

    for dev in netlist.devices:
        line = 'M{} {} {} {} {}'.format(dev.name, dev.drain, dev.gate, dev.source, dev.polarity)
        if dev.delay is not None:
            line += ' delay={}fs'.format(dev.delay)
        lines.append(line)

    lines.append('.end')
    return ('\n'.join(lines) + '\n').encode('utf-8')


def mirror_map(netlist):
    """ The net relabeling that maps one half of a symmetric netlist onto the other, from `.meta mirror` """
    pairs = {}
    for item in netlist.metadata.get('mirror', '').split():
        left, right = item.split(':')
        pairs[left] = right
        pairs[right] = left
    return pairs


def _half_graph(netlist, device_names, pairs):
    graph = nx.MultiGraph()
    for name in device_names:
        dev = netlist.device(name)
        graph.add_node(('dev', name), label=dev.polarity)
        for terminal in ('drain', 'gate', 'source'):
            net = getattr(dev, terminal)
            label = '|'.join(sorted((net, pairs[net]))) if net in pairs else net
            graph.add_node(('net', net), label=label)
            graph.add_edge(('dev', name), ('net', net), kind='gate' if terminal == 'gate' else 'channel')
    return graph


def check_symmetry(netlist):
    """ Check that the two halves named by `.meta half.up` / `.meta half.down` are isomorphic once every net
    is identified with its mirror partner.
    :return: None when symmetric (or when the netlist declares no halves), otherwise a message
    """
    up = netlist.metadata.get('half.up', '').split()
    down = netlist.metadata.get('half.down', '').split()
    if not up or not down:
        return None

    pairs = mirror_map(netlist)
    try:
        up_graph = _half_graph(netlist, up, pairs)
        down_graph = _half_graph(netlist, down, pairs)
    except KeyError as err:
        return 'symmetry: half lists unknown device {}'.format(err)

    node_match = lambda a, b: a['label'] == b['label']
    edge_match = lambda a, b: sorted(e['kind'] for e in a.values()) == sorted(e['kind'] for e in b.values())
    if not nx.is_isomorphic(up_graph, down_graph, node_match=node_match, edge_match=edge_match):
        return 'symmetry: half.up and half.down are not isomorphic under the mirror relabeling'
    return None


def validate(netlist):
    """ Report structural problems of a netlist; an empty report means the netlist is valid
    :param netlist: a parsed netlist
    :return: a ValidationReport
    """
    report = ValidationReport()
    names = set(netlist.net_names())

    for kind, label in (('supply_high', 'vdd'), ('supply_low', 'gnd')):
        count = len(netlist.names_of_kind(kind))
        if count != 1:
            report.violations.append('missing supply: expected exactly one {} net, found {}'.format(label, count))

    channel_nets = set()
    seen = set()
    for dev in netlist.devices:
        if dev.name in seen:
            report.violations.append('duplicate device {}'.format(dev.name))
        seen.add(dev.name)
        for terminal in ('drain', 'gate', 'source'):
            if getattr(dev, terminal) not in names:
                report.violations.append('device {} references undeclared net {}'.format(dev.name, getattr(dev, terminal)))
        channel_nets.update((dev.drain, dev.source))

    rails = set(netlist.rails())
    for dev in netlist.devices:
        if dev.gate not in rails and dev.gate not in channel_nets:
            report.violations.append('floating gate: net {} (gate of {}) has no driver'.format(dev.gate, dev.name))

    for name in netlist.outputs:
        if name not in channel_nets:
            report.violations.append('undriven output: net {}'.format(name))

    message = check_symmetry(netlist)
    if message is not None:
        report.warnings.append(message)

    return report


def channel_connected_components(netlist):
    """ Partition devices into channel-connected components. Devices meet through drain/source nets;
    gates and rails (supplies, inputs) never merge components.
    :param netlist: a valid netlist
    :return: a list of Component, ordered by the first device of each component in netlist order
    """
    rails = set(netlist.rails())
    graph = nx.Graph()
    for dev in netlist.devices:
        graph.add_node(('dev', dev.name))
        for net in (dev.drain, dev.source):
            if net not in rails:
                graph.add_edge(('dev', dev.name), ('net', net))

    device_order = {dev.name: idx for idx, dev in enumerate(netlist.devices)}
    net_order = {name: idx for idx, name in enumerate(netlist.net_names())}

    components = []
    for nodes in nx.connected_components(graph):
        devs = sorted((name for kind, name in nodes if kind == 'dev'), key=device_order.get)
        nets = sorted((name for kind, name in nodes if kind == 'net'), key=net_order.get)
        boundary = set()
        for name in devs:
            dev = netlist.device(name)
            boundary.update(net for net in (dev.drain, dev.source) if net in rails)
        components.append(Component(tuple(devs), tuple(nets), tuple(sorted(boundary, key=net_order.get))))

    components.sort(key=lambda comp: device_order[comp.devices[0]])
    return components


REFERENCE_DEVICES = (
    # X half: W1 is armed while Ref=0 and Div=0, lost when Div rises first
    ('P1', 'PMOS', 'a1', 'Div', 'vdd'),
    ('P2', 'PMOS', 'W1', 'Ref', 'a1'),
    ('N1', 'NMOS', 'W1', 'Div', 'gnd'),
    ('P3', 'PMOS', 'W2', 'W1', 'vdd'),
    ('N2', 'NMOS', 'W2', 'W1', 'b1'),
    ('N3', 'NMOS', 'b1', 'Ref', 'gnd'),
    # P5 holds X while Div=0, N4 clears it once Div follows Ref, N5 once Y is set
    ('P5', 'PMOS', 'c1', 'Div', 'vdd'),
    ('P4', 'PMOS', 'X', 'W2', 'c1'),
    ('N4', 'NMOS', 'X', 'Ref', 'b2'),
    ('N5', 'NMOS', 'X', 'Y', 'b2'),
    # Y half
    ('P6', 'PMOS', 'a2', 'Ref', 'vdd'),
    ('P7', 'PMOS', 'W3', 'Div', 'a2'),
    ('N6', 'NMOS', 'W3', 'Ref', 'gnd'),
    ('P8', 'PMOS', 'W4', 'W3', 'vdd'),
    ('N7', 'NMOS', 'W4', 'W3', 'b2'),
    ('N8', 'NMOS', 'b2', 'Div', 'gnd'),
    ('P10', 'PMOS', 'c2', 'Ref', 'vdd'),
    ('P9', 'PMOS', 'Y', 'W4', 'c2'),
    ('N9', 'NMOS', 'Y', 'Div', 'b1'),
    ('N10', 'NMOS', 'Y', 'X', 'b1'),
)

BUFFER_DEVICES = (
    ('P11', 'PMOS', 'Xb', 'X', 'vdd'),
    ('N11', 'NMOS', 'Xb', 'X', 'gnd'),
    ('P12', 'PMOS', 'Up', 'Xb', 'vdd'),
    ('N12', 'NMOS', 'Up', 'Xb', 'gnd'),
    ('P13', 'PMOS', 'Yb', 'Y', 'vdd'),
    ('N13', 'NMOS', 'Yb', 'Y', 'gnd'),
    ('P14', 'PMOS', 'Down', 'Yb', 'vdd'),
    ('N14', 'NMOS', 'Down', 'Yb', 'gnd'),
)


def build_reference_pfd(output_buffers=False):
    """ Build the 20-transistor TSPC phase frequency detector.

    Two mirrored dynamic halves generate X (Up) and Y (Down). Both inputs low precharge the arm nodes W1/W3. A
    rising input evaluates its half when the arm is still up and raises its output; the lagging input clears it.
    Cross-coupling keeps the outputs apart: X=1 discharges Y through N10 and Y=1 discharges X through N5.
    Nothing is preset: from an all-unknown power-on state the first input edge defines every net.

    :param output_buffers: drive Up/Down from X/Y through an inverter pair each (28 devices)
    :return: a Netlist
    """
    devices = [Device(*row) for row in REFERENCE_DEVICES]
    signals = ['W1', 'W2', 'W3', 'W4', 'a1', 'a2', 'b1', 'b2', 'c1', 'c2']
    mirror = ['Ref:Div', 'X:Y', 'W1:W3', 'W2:W4', 'a1:a2', 'b1:b2', 'c1:c2']
    half_up = ['P1', 'P2', 'N1', 'P3', 'N2', 'N3', 'P5', 'P4', 'N4', 'N5']
    half_down = ['P6', 'P7', 'N6', 'P8', 'N7', 'N8', 'P10', 'P9', 'N9', 'N10']

    if output_buffers:
        devices.extend(Device(*row) for row in BUFFER_DEVICES)
        signals = signals[:4] + ['X', 'Y', 'Xb', 'Yb'] + signals[4:]
        outputs = ['Up', 'Down']
        mirror += ['Xb:Yb', 'Up:Down']
        half_up += ['P11', 'N11', 'P12', 'N12']
        half_down += ['P13', 'N13', 'P14', 'N14']
    else:
        outputs = ['X', 'Y']

    nets = [Net('vdd', 'supply_high'), Net('gnd', 'supply_low'), Net('Ref', 'input'), Net('Div', 'input')]
    nets += [Net(name, 'output') for name in outputs]
    nets += [Net(name, 'signal') for name in signals]

    metadata = {
        'name': 'tspc_pfd' if not output_buffers else 'tspc_pfd_buffered',
        'mirror': ' '.join(mirror),
        'half.up': ' '.join(half_up),
        'half.down': ' '.join(half_down),
        'up': outputs[0],
        'down': outputs[1],
    }
    return Netlist(nets=nets, devices=devices, metadata=metadata)
