#!/usr/bin/env python
# -*- encoding: utf-8 -*-
# PYTHON_ARGCOMPLETE_OK

import argparse
import sys
from functools import partial
from typing import NamedTuple, Type, Optional

import argcomplete

import magrec.exception
from magrec.solver import METHOD_FISTA, METHOD_IN_CROWD

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NON_CONVERGENCE = 4
EXIT_CERTIFICATE = 5


class _ExceptionMapping(NamedTuple):
    exception: Type[BaseException]
    exit_code: int
    include_stacktrace: bool


def completion(shell: str) -> None:
    print(argcomplete.shellcode(sys.argv[0], shell=shell))


def integer_range(minimum: int, maximum: Optional[int], arg: str) -> Optional[int]:
    if arg is None:
        return None

    try:
        value = int(arg)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err))

    if value < minimum or (maximum is not None and value > maximum):
        raise argparse.ArgumentTypeError('Expected a value between {} and {}, got {}.'.format(minimum, maximum, value))

    return value


def positive_float(arg: str) -> float:
    try:
        value = float(arg)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err))
    if not value > 0:
        raise argparse.ArgumentTypeError('Expected a positive value, got {}.'.format(arg))
    return value


def main():
    if sys.hexversion < 0x030605F0:
        raise magrec.exception.InternalError('magrec only supports Python 3.6.5 or above.')

    parser = argparse.ArgumentParser(formatter_class=argparse.ArgumentDefaultsHelpFormatter, allow_abbrev=False)

    parser.add_argument('-c', '--config-file', default=None, type=str, help='Specify a non-default configuration file')
    parser.add_argument('-m',
                        '--machine-output',
                        action='store_true',
                        default=False,
                        help='Enable machine-readable JSON output')
    parser.add_argument('--log-level',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        default='INFO',
                        help='Only log messages of this level or above on the console')
    parser.add_argument('--no-color',
                        action='store_true',
                        default=False,
                        help='Disable colorization of console logging')
    parser.add_argument('--threads',
                        type=partial(integer_range, 1, None),
                        default=None,
                        help='Number of threads for operator evaluation (overrides the configuration)')
    parser.add_argument('--physical',
                        action='store_true',
                        default=False,
                        help='Use physical units (kappa = 1e-7) for newly generated scenarios')

    subparsers_root = parser.add_subparsers(title='commands')

    # GEN
    p = subparsers_root.add_parser('gen',
                                   help='Generate a scenario bundle',
                                   formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument('-p', '--preset', default=None, help='Built-in scenario preset')
    p.add_argument('-f', '--scenario-file', default=None, help='Scenario specification file')
    p.add_argument('-s', '--seed', type=partial(integer_range, 0, None), default=None, help='Override the seed')
    p.add_argument('-o', '--out', default=None, help='Bundle directory (default: output root/name-s<seed>)')
    p.set_defaults(func='gen')

    # SOLVE
    p = subparsers_root.add_parser('solve',
                                   help='Solve a bundle for one or more lambdas',
                                   formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument('-l',
                   '--lambdas',
                   type=positive_float,
                   nargs='+',
                   default=None,
                   help='Strictly decreasing lambdas (default: the lambdas of the bundle)')
    p.add_argument('--method', choices=[METHOD_IN_CROWD, METHOD_FISTA], default=None, help='Solver method')
    p.add_argument('-o', '--out', default=None, help='Output directory (default: <bundle>/solve)')
    p.add_argument('bundle', help='Scenario bundle directory')
    p.set_defaults(func='solve')

    # SWEEP
    p = subparsers_root.add_parser('sweep',
                                   help='Warm-started lambda sweep with recovery metrics',
                                   formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    group = p.add_mutually_exclusive_group()
    group.add_argument('-l', '--lambdas', type=positive_float, nargs='*', default=None, help='Strictly decreasing lambdas')
    group.add_argument('--schedule',
                       type=positive_float,
                       nargs=3,
                       metavar=('START', 'STOP', 'COUNT'),
                       default=None,
                       help='Geometric lambda schedule')
    p.add_argument('--noise-ratio', type=float, default=None, help='Per lambda noise with norm ratio * sqrt(lambda)')
    p.add_argument('--noise-seed',
                   type=partial(integer_range, 0, None),
                   default=None,
                   help='Seed of the noise draws (default: the bundle seed)')
    p.add_argument('--radius', type=positive_float, default=None, help='Local mass radius (default: 3 * spacing)')
    p.add_argument('--method', choices=[METHOD_IN_CROWD, METHOD_FISTA], default=None, help='Solver method')
    p.add_argument('-o', '--out', default=None, help='Output directory (default: <bundle>/sweep)')
    p.add_argument('bundle', help='Scenario bundle directory')
    p.set_defaults(func='sweep')

    # CERTIFY
    p = subparsers_root.add_parser('certify',
                                   help='Check the optimality certificate of a result',
                                   formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument('-t', '--tol', type=positive_float, default=None, help='Certificate tolerance')
    p.add_argument('-o', '--out', default=None, help='Write the certificate to this file')
    p.add_argument('bundle', help='Scenario bundle directory')
    p.add_argument('result', help='Result file')
    p.set_defaults(func='certify')

    # PRESETS
    p = subparsers_root.add_parser('presets', help='List the built-in scenario presets')
    p.set_defaults(func='presets')

    # VERSION-INFO
    p = subparsers_root.add_parser('version-info', help='Program version information')
    p.set_defaults(func='version_info')

    # COMPLETION
    p = subparsers_root.add_parser('completion', help='Emit autocompletion script')
    p.add_argument('shell', choices=['bash', 'tcsh'], help='Shell')
    p.set_defaults(func='completion')

    argcomplete.autocomplete(parser)
    args = parser.parse_args()

    if not hasattr(args, 'func'):
        parser.print_usage()
        sys.exit(EXIT_USAGE)

    if args.func == 'completion':
        completion(args.shell)
        sys.exit(EXIT_OK)

    from magrec.config import Config
    from magrec.logging import logger, setup_logging

    console_formatter = 'console-colored'
    if args.machine_output:
        console_formatter = 'json'
    elif args.no_color:
        console_formatter = 'console-plain'

    try:
        if args.config_file is not None and args.config_file != '':
            config = Config(sources=[args.config_file])
        else:
            config = Config()
    except magrec.exception.ConfigurationError as exception:
        setup_logging(console_level=args.log_level, console_formatter=console_formatter)
        logger.error('{}: {}'.format(exception.__class__.__name__, exception))
        sys.exit(EXIT_USAGE)

    setup_logging(logfile=config.get('logFile', types=(str, type(None))),
                  console_level=args.log_level,
                  console_formatter=console_formatter)

    if args.threads is not None:
        config.set('threads', args.threads)
    if args.physical:
        config.set('kappaMode', 'physical')

    from magrec.commands import Commands
    commands = Commands(args.machine_output, config)
    func = getattr(commands, args.func)

    # Pass over to function
    func_args = dict(args._get_kwargs())
    del func_args['config_file']
    del func_args['func']
    del func_args['log_level']
    del func_args['machine_output']
    del func_args['no_color']
    del func_args['threads']
    del func_args['physical']

    # From most specific to least specific
    # yapf: disable
    exception_mappings = [
        _ExceptionMapping(exception=magrec.exception.UsageError, exit_code=EXIT_USAGE, include_stacktrace=False),
        _ExceptionMapping(exception=magrec.exception.ConfigurationError, exit_code=EXIT_USAGE, include_stacktrace=False),
        _ExceptionMapping(exception=magrec.exception.InputDataError, exit_code=EXIT_DATA, include_stacktrace=False),
        _ExceptionMapping(exception=magrec.exception.NonConvergenceError, exit_code=EXIT_NON_CONVERGENCE, include_stacktrace=False),
        _ExceptionMapping(exception=magrec.exception.CertificateError, exit_code=EXIT_CERTIFICATE, include_stacktrace=False),
        _ExceptionMapping(exception=magrec.exception.PackingError, exit_code=EXIT_USAGE, include_stacktrace=False),
        _ExceptionMapping(exception=magrec.exception.InternalError, exit_code=EXIT_INTERNAL, include_stacktrace=True),
        _ExceptionMapping(exception=FileNotFoundError, exit_code=EXIT_DATA, include_stacktrace=False),
        _ExceptionMapping(exception=OSError, exit_code=EXIT_DATA, include_stacktrace=True),
        _ExceptionMapping(exception=KeyboardInterrupt, exit_code=EXIT_INTERNAL, include_stacktrace=False),
        _ExceptionMapping(exception=BaseException, exit_code=EXIT_INTERNAL, include_stacktrace=True),
    ]
    # yapf: enable

    try:
        logger.debug('commands.{0}(**{1!r})'.format(args.func, func_args))
        func(**func_args)
        sys.exit(EXIT_OK)
    except SystemExit:
        raise
    except BaseException as exception:
        for case in exception_mappings:
            if isinstance(exception, case.exception):
                message = str(exception)
                if message:
                    message = '{}: {}'.format(exception.__class__.__name__, message)
                else:
                    message = '{} exception occurred.'.format(exception.__class__.__name__)
                if case.include_stacktrace:
                    logger.error(message, exc_info=True)
                else:
                    logger.debug(message, exc_info=True)
                    logger.error(message)
                sys.exit(case.exit_code)


if __name__ == '__main__':
    main()
