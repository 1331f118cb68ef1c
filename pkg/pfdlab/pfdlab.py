import argparse
import json
import os
import sys

from pfdlab.config.pvt_config import cfg as pvt_cfg
from pfdlab.config.run_config import cfg as default_cfg
from pfdlab.core.loop_sim import DelayLine, LoopConfig, LoopFilter, Vco, export_lock_report, run_lock
from pfdlab.core.measure import PvtModel, activity_report, dennard_scale, histogram_csv, measure_blind_zone, \
    measure_dead_zone, monte_carlo, pvt_sweep, to_csv, to_json, transfer_sweep
from pfdlab.core.netlist import build_reference_pfd, channel_connected_components, parse_netlist, \
    serialize_netlist, validate
from pfdlab.core.pfd_handle import BehavioralHandle, SwitchHandle
from pfdlab.core.pfd_model import PfdConfig, comparison_preset
from pfdlab.core.switch_sim import clock_stimulus, compile_model, run
from pfdlab.utils.file_io import load_config, merge_config, setup_logger, write_artifact
from pfdlab.utils.units import parse_phase, parse_time, period_fs, phase_to_fs
from pfdlab.utils.waveform_io import export_waveform


def _dump(data):
    return (json.dumps(data, indent=2, sort_keys=True) + '\n').encode('utf-8')


def _load_netlist(path, cfg):
    if path is None:
        return build_reference_pfd(cfg.sim.output_buffers)
    with open(path, 'rb') as fp:
        return parse_netlist(fp.read())


def _pfd_config(args, cfg):
    values = dict(cfg.pfd)
    for key, flag in (('t_setup', 'tsetup'), ('t_reset', 'treset'), ('blind_window', 'blind')):
        if getattr(args, flag, None) is not None:
            values[key] = parse_time(getattr(args, flag))
    if getattr(args, 'preset', 'proposed') == 'comparison':
        values.pop('blind_window', None)
        return comparison_preset(args.freq, **{key: int(value) for key, value in values.items()})
    return PfdConfig.from_dict(values)


def _handle(args, cfg, default_model='behavioral'):
    args.model = args.model or default_model
    if args.model == 'behavioral':
        return BehavioralHandle(_pfd_config(args, cfg))
    delay = parse_time(args.delay) if args.delay is not None else cfg.sim.calibrated_delay
    model = compile_model(_load_netlist(args.netlist, cfg), default_delay=delay,
                          oscillation_bound=cfg.sim.oscillation_bound)
    return SwitchHandle(model, cfg.sim.pump_setup)


def _fill_from_config(args, cfg):
    """ flags left unset take the configuration value, so flags win over the config file """
    if getattr(args, 'freq', 0) is None:
        args.freq = cfg.measure.freq
    if getattr(args, 'phi', 0) is None:
        args.phi = cfg.measure.pvt_phi if args.command == 'pvt' else cfg.measure.phi


def _loop_config(args, cfg):
    loop = cfg.loop
    return LoopConfig(mode=args.mode or loop.mode, f_ref=args.fref or loop.f_ref, divider_n=args.n or loop.divider_n,
                      icp_up=args.icp if args.icp is not None else loop.icp_up,
                      icp_down=args.icp if args.icp is not None else loop.icp_down, leakage=loop.leakage,
                      filter=LoopFilter(loop.r, loop.c1, loop.c2), vco=Vco(loop.f0, loop.kvco),
                      delay_line=DelayLine(loop.d0, loop.kdl), v_init=loop.v_init, pfd=PfdConfig.from_dict(cfg.pfd),
                      lock_cycles=loop.lock_cycles, lock_tolerance=loop.lock_tolerance,
                      settle_cycles=loop.settle_cycles)


def _clock_waveform(args, cfg):
    netlist = _load_netlist(args.netlist, cfg)
    delay = parse_time(args.delay) if args.delay is not None else cfg.sim.default_delay
    model = compile_model(netlist, default_delay=delay, oscillation_bound=cfg.sim.oscillation_bound)
    period = period_fs(args.freq)
    dt = phase_to_fs(parse_phase(args.phi), args.freq)
    stim = clock_stimulus(period, ref_offset=period, div_offset=period + dt)
    return run(model, stim, (args.cycles + 2) * period)


def cmd_parse(args, cfg, logger):
    netlist = _load_netlist(args.netlist, cfg)
    summary = {'devices': len(netlist.devices), 'nets': len(netlist.nets),
               'components': len(channel_connected_components(netlist)), 'metadata': dict(netlist.metadata)}
    write_artifact(os.path.join(args.output, 'netlist.sp'), serialize_netlist(netlist))
    write_artifact(os.path.join(args.output, 'netlist.json'), _dump(summary))
    print('{} devices, {} nets, {} channel-connected components'.format(
        summary['devices'], summary['nets'], summary['components']))
    return 0


def cmd_validate(args, cfg, logger):
    report = validate(_load_netlist(args.netlist, cfg))
    write_artifact(os.path.join(args.output, 'validation.json'),
                   _dump({'ok': report.ok, 'violations': list(report.violations), 'warnings': list(report.warnings)}))
    for message in report.violations:
        print('error: ' + message)
    for message in report.warnings:
        print('warning: ' + message)
    if not report.ok:
        logger.error('netlist failed validation with %d violation(s)', len(report.violations))
        return 1
    print('ok')
    return 0


def cmd_run(args, cfg, logger):
    waveform = _clock_waveform(args, cfg)
    fmt = args.format or cfg.sim.waveform_format
    write_artifact(os.path.join(args.output, 'waveform.' + fmt), export_waveform(waveform, fmt))
    logger.info('simulated %d nets up to %d fs', len(waveform.traces), waveform.horizon)
    return 0


def cmd_transfer(args, cfg, logger):
    curve = transfer_sweep(_handle(args, cfg), args.freq, args.points or cfg.measure.points, cfg.measure.cycles,
                           cfg.measure.warmup, args.threads or cfg.general.threads)
    write_artifact(os.path.join(args.output, 'transfer.csv'), to_csv(curve))
    write_artifact(os.path.join(args.output, 'transfer.json'), to_json(curve))
    return 0


def cmd_deadzone(args, cfg, logger):
    resolution = parse_time(args.resolution) if args.resolution is not None else cfg.measure.resolution
    dead_zone = measure_dead_zone(_handle(args, cfg), args.freq, resolution)
    write_artifact(os.path.join(args.output, 'deadzone.json'),
                   _dump({'dead_zone_fs': dead_zone, 'freq': args.freq, 'model': args.model}))
    print('{:.1f} ps'.format(dead_zone / 1000.0))
    return 0


def cmd_blindzone(args, cfg, logger):
    blind_zone = measure_blind_zone(_handle(args, cfg), args.freq, cfg.measure.resolution, cfg.measure.blind_steps,
                                    args.threads or cfg.general.threads)
    write_artifact(os.path.join(args.output, 'blindzone.json'),
                   _dump({'blind_zone_fs': blind_zone, 'freq': args.freq, 'model': args.model}))
    print('{:.1f} ps'.format(blind_zone / 1000.0))
    return 0


def cmd_montecarlo(args, cfg, logger):
    seed = args.seed if args.seed is not None else cfg.general.seed
    report = monte_carlo(_handle(args, cfg, 'switch'), args.sigma if args.sigma is not None else cfg.measure.sigma,
                         args.samples or cfg.measure.samples, seed, parse_phase(args.phi),
                         args.freq, bins=cfg.measure.bins, threads=args.threads or cfg.general.threads)
    write_artifact(os.path.join(args.output, 'montecarlo.csv'), to_csv(report))
    write_artifact(os.path.join(args.output, 'montecarlo.json'), to_json(report))
    write_artifact(os.path.join(args.output, 'histogram_up.csv'), histogram_csv(report.histogram_up))
    write_artifact(os.path.join(args.output, 'histogram_down.csv'), histogram_csv(report.histogram_down))
    print('up {:.2f} ps (std {:.3f}), down {:.2f} ps (std {:.3f})'.format(
        report.mean_up / 1000.0, report.std_up / 1000.0, report.mean_down / 1000.0, report.std_down / 1000.0))
    return 0


def cmd_pvt(args, cfg, logger):
    grid = pvt_sweep(_handle(args, cfg), PvtModel.from_config(pvt_cfg.model), cfg.measure.temps, cfg.measure.vdds,
                     parse_phase(args.phi), args.freq, args.threads or cfg.general.threads)
    write_artifact(os.path.join(args.output, 'pvt.csv'), to_csv(grid))
    write_artifact(os.path.join(args.output, 'pvt.json'), to_json(grid))
    return 0


def cmd_lock(args, cfg, logger):
    report = run_lock(_loop_config(args, cfg), args.max_cycles or cfg.loop.max_cycles)
    trace_csv, summary = export_lock_report(report)
    write_artifact(os.path.join(args.output, 'lock_trace.csv'), trace_csv)
    write_artifact(os.path.join(args.output, 'lock.json'), summary)
    print('locked' if report.locked else 'not locked')
    return 0


def cmd_dennard(args, cfg, logger):
    scaled = dennard_scale(args.power, args.from_node, args.to_node)
    write_artifact(os.path.join(args.output, 'dennard.json'),
                   _dump({'power_w': args.power, 'from_nm': args.from_node, 'to_nm': args.to_node, 'scaled_w': scaled}))
    print('{:.6g} W'.format(scaled))
    return 0


def cmd_activity(args, cfg, logger):
    report = activity_report(_clock_waveform(args, cfg), dict(cfg.measure.activity_weights))
    write_artifact(os.path.join(args.output, 'activity.csv'), to_csv(report))
    write_artifact(os.path.join(args.output, 'activity.json'), to_json(report))
    print('{:g} weighted toggles'.format(report.total))
    return 0


def _parser():
    long_description = 'Simulation lab for phase frequency detectors: switch-level and behavioral models, ' \
                       'PLL/DLL loops and dead-zone, blind-zone, Monte-Carlo and PVT measurements.'

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=None, help='python or json configuration overriding the defaults')
    common.add_argument('--seed', type=int, default=None, help='seed of every random draw (default 0)')
    common.add_argument('-o', '--output', default=None, help='output folder for artifacts and the log file')
    common.add_argument('--threads', type=int, default=None, help='worker threads (default PFDLAB_THREADS or cpus)')

    netlist = argparse.ArgumentParser(add_help=False)
    netlist.add_argument('netlist', nargs='?', default=None, help='netlist file, the reference detector if omitted')

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument('--model', choices=['behavioral', 'switch'], default=None,
                       help='detector fidelity, behavioral unless the command says otherwise')
    model.add_argument('--netlist', default=None, help='switch-level netlist, the reference detector if omitted')
    model.add_argument('--delay', default=None, help='uniform device delay, e.g. 2.3ps (switch model)')
    model.add_argument('--tsetup', default=None, help='charge pump setup time, e.g. 40ps (behavioral model)')
    model.add_argument('--treset', default=None, help='reset overlap, e.g. 30ps (behavioral model)')
    model.add_argument('--blind', default=None, help='blind window after reset (behavioral model)')
    model.add_argument('--preset', choices=['proposed', 'comparison'], default='proposed',
                       help='comparison: blind window of a tenth of the period')
    model.add_argument('--freq', type=float, default=None, help='input frequency in Hz (default 1 GHz)')

    clocks = argparse.ArgumentParser(add_help=False)
    clocks.add_argument('--freq', type=float, default=None, help='clock frequency in Hz (default 1 GHz)')
    clocks.add_argument('--phi', default=None,
                        help='phase error, <x>pi or radians; positive: Ref leads (default 0.2pi)')
    clocks.add_argument('--cycles', type=int, default=4, help='clock cycles to simulate')
    clocks.add_argument('--delay', default=None, help='default device delay, e.g. 10ps')

    parser = argparse.ArgumentParser(prog='pfdlab', description=long_description)
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    sub.add_parser('parse', parents=[common, netlist], help='parse and normalize a netlist').set_defaults(func=cmd_parse)
    sub.add_parser('validate', parents=[common, netlist], help='structural netlist checks').set_defaults(
        func=cmd_validate)

    p = sub.add_parser('run', parents=[common, netlist, clocks], help='switch-level simulation under two clocks')
    p.add_argument('--format', choices=['csv', 'vcd'], default=None, help='waveform format')
    p.set_defaults(func=cmd_run)

    p = sub.add_parser('transfer', parents=[common, model], help='output against phase error over [-pi, pi]')
    p.add_argument('--points', type=int, default=None, help='odd number of phase points')
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser('deadzone', parents=[common, model], help='dead zone measurement')
    p.add_argument('--resolution', default=None, help='bisection resolution, e.g. 1fs')
    p.set_defaults(func=cmd_deadzone)

    sub.add_parser('blindzone', parents=[common, model], help='blind zone measurement').set_defaults(
        func=cmd_blindzone)

    p = sub.add_parser('montecarlo', parents=[common, model],
                       help='pulse widths under delay variation, switch model unless --model is given')
    p.add_argument('--samples', type=int, default=None, help='number of samples')
    p.add_argument('--sigma', type=float, default=None, help='relative delay variation at 3 sigma, e.g. 0.10')
    p.add_argument('--phi', default=None, help='phase error, default 0.2pi')
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser('pvt', parents=[common, model], help='pulse width over temperature and supply')
    p.add_argument('--phi', default=None, help='phase error, default 0.1pi')
    p.set_defaults(func=cmd_pvt)

    p = sub.add_parser('lock', parents=[common], help='PLL/DLL lock simulation')
    p.add_argument('--mode', choices=['PLL', 'DLL'], default=None, help='loop type')
    p.add_argument('--fref', type=float, default=None, help='reference frequency in Hz')
    p.add_argument('--n', type=int, default=None, help='feedback divider')
    p.add_argument('--icp', type=float, default=None, help='charge pump current in A (both directions)')
    p.add_argument('--max-cycles', dest='max_cycles', type=int, default=None, help='reference cycle budget')
    p.set_defaults(func=cmd_lock)

    p = sub.add_parser('dennard', parents=[common], help='power scaled between technology nodes')
    p.add_argument('--power', type=float, required=True, help='power in W')
    p.add_argument('--from-node', dest='from_node', type=float, required=True, help='source node in nm')
    p.add_argument('--to-node', dest='to_node', type=float, required=True, help='target node in nm')
    p.set_defaults(func=cmd_dennard)

    sub.add_parser('activity', parents=[common, netlist, clocks], help='toggle count activity proxy').set_defaults(
        func=cmd_activity)
    return parser


def main(argv=None):
    """ command line entry; returns 0 on success, 1 on a domain error and 2 on a usage error """
    try:
        args = _parser().parse_args(argv)
    except SystemExit as err:
        return err.code

    cfg = default_cfg
    if args.config is not None:
        try:
            cfg = merge_config(default_cfg, load_config(args.config))
        except (AssertionError, ValueError, OSError) as err:
            sys.stderr.write('pfdlab: cannot load config {}: {}\n'.format(args.config, err))
            return 1
    args.output = args.output or cfg.general.output
    _fill_from_config(args, cfg)

    logger = setup_logger(os.path.join(args.output, 'pfdlab_log.txt'), 'pfdlab')
    logger.debug('pfdlab %s: %s', args.command, vars(args))
    try:
        return args.func(args, cfg, logger)
    except (ValueError, AssertionError, RuntimeError, OSError) as err:
        logger.error('%s failed: %s', args.command, err)
        sys.stderr.write('pfdlab {}: {}\n'.format(args.command, err))
        return 1


if __name__ == '__main__':
    sys.exit(main())
