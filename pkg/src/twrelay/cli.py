"""
Command-line front end of the Monte-Carlo harness.

Every subcommand builds an `ExperimentSpec` from its defaults, then an
optional JSON spec file (``--config``), then the command-line flags, with
later sources taking precedence. Rows (or the outage table) are written
as CSV to ``--out`` or standard output; diagnostics go to standard error.
"""

import argparse
import sys

from .balanced import GAMMA_GRID
from .errors import ConfigError
from .harness import (ExperimentSpec, load_spec_dict, outage_curve,
                      outage_to_csv, rows_to_csv, run_experiment, write_csv)

__all__ = ['main', 'build_parser', 'spec_from_args', 'COMMANDS']

_SNR_POINTS = [0, 5, 10, 15, 20, 25, 30]

# sweep variable, default values, default spec fields
COMMANDS = {
    'single': ('none', [], {'trials': 1}),
    'sweep-gamma': ('gamma', [float(g) for g in GAMMA_GRID],
                    {'schemes': ['balanced'], 'trials': 1000}),
    'sweep-nr': ('n_r', [2, 3, 4, 5, 6], {'trials': 1000}),
    'sweep-nu': ('n_u', [1, 2, 3, 4],
                 {'trials': 1000,
                  'base': {'n_b': 4, 'n_r': 4, 'p_b': 4.0, 'p_r': 4.0}}),
    'sweep-snr': ('snr_db', _SNR_POINTS, {'trials': 1000}),
    'outage': ('snr_db', _SNR_POINTS,
               {'trials': 10000, 'outage_threshold': 2.0}),
}

_HELP = {
    'single': "all schemes on one (or --trials) channel realizations",
    'sweep-gamma': "balanced scheme over the balancing factor",
    'sweep-nr': "sweep the number of RS antennas",
    'sweep-nu': "sweep the number of users (n_b = n_r = 4)",
    'sweep-snr': "sweep the transmit SNR in dB",
    'outage': "outage probability versus SNR",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _csv_list(text):
    return [s.strip() for s in text.split(',') if s.strip()]


def _number_list(text):
    try:
        return [float(s) for s in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"not a list of numbers: {text!r}") from None


def build_parser():
    parser = _Parser(prog='twrelay',
                     description="Monte-Carlo simulator for interference-"
                                 "free two-way relay transceivers.")
    sub = parser.add_subparsers(dest='command', metavar='command',
                                parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, help=_HELP[name], description=_HELP[name])
        p.add_argument('--config', metavar='PATH',
                       help="JSON experiment spec; flags override it")
        p.add_argument('--seed', type=int, metavar='N',
                       help="master seed (unsigned 64-bit)")
        p.add_argument('--trials', type=int, metavar='N',
                       help="channel realizations per swept value")
        p.add_argument('--out', metavar='PATH',
                       help="CSV output file (default: standard output)")
        p.add_argument('--schemes', type=_csv_list, metavar='LIST',
                       help="comma-separated subset of balanced,zf,sa,altopt")
        p.add_argument('--snr-db', type=float, metavar='DB',
                       help="transmit SNR of the base system")
        p.add_argument('--starts', type=int, metavar='K',
                       help="random starts per trial for altopt")
        if COMMANDS[name][0] != 'none':
            p.add_argument('--values', type=_number_list, metavar='LIST',
                           help="comma-separated values of the swept "
                                "variable")
        if name == 'outage':
            p.add_argument('--threshold', type=float, metavar='R',
                           help="outage sum-rate threshold in bit/s/Hz")
    return parser


def spec_from_args(args):
    """Merge subcommand defaults, the config file and the flags."""
    variable, values, defaults = COMMANDS[args.command]
    d = {'sweep': {'variable': variable, 'values': list(values)}}
    d.update({k: v for k, v in defaults.items() if k != 'base'})
    base = dict(defaults.get('base', {}))

    if args.config is not None:
        raw = load_spec_dict(args.config)
        sweep = raw.get('sweep', {'variable': 'none'})
        if sweep['variable'] not in ('none', variable):
            raise ConfigError(f"{args.config}: sweep variable "
                              f"{sweep['variable']!r} does not match "
                              f"command {args.command!r}")
        if sweep['variable'] == variable and sweep.get('values'):
            d['sweep']['values'] = list(sweep['values'])
        for key in ('schemes', 'trials', 'master_seed',
                    'altopt_random_starts', 'outage_threshold'):
            if key in raw:
                d[key] = raw[key]
        file_base = raw.get('base', {})
        if 'n0' in file_base or 'snr_db' in file_base:
            base.pop('n0', None)
            base.pop('snr_db', None)
        base.update(file_base)

    flags = {'master_seed': args.seed, 'trials': args.trials,
             'schemes': args.schemes, 'altopt_random_starts': args.starts,
             'outage_threshold': getattr(args, 'threshold', None)}
    d.update({k: v for k, v in flags.items() if v is not None})
    if getattr(args, 'values', None) is not None:
        d['sweep']['values'] = args.values
    if args.snr_db is not None:
        base.pop('n0', None)
        base['snr_db'] = args.snr_db
    d['base'] = base
    return ExperimentSpec.from_dict(d)


def run(args):
    spec = spec_from_args(args)
    if args.command == 'outage':
        table = outage_curve(spec)
        text = outage_to_csv(table)
        what = f"{len(table)} outage points"
    else:
        rows = run_experiment(spec)
        text = rows_to_csv(rows)
        what = f"{len(rows)} rows"
    write_csv(text, args.out, sys.stdout)
    if args.out is not None:
        print(f"twrelay: wrote {what} to {args.out}", file=sys.stderr)


def main(argv=None):
    """Entry point; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        run(args)
    except ConfigError as exc:
        print(f"twrelay: error: {exc}", file=sys.stderr)
        return 1
    return 0
