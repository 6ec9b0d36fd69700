from simpc.config import RunConfig
from simpc.errors import ConfigError
from simpc.utils import setThreadCount


def addCommonOptions(parser):
    """
    Add the global command-line options to an argument parser.

    @param parser: An C{ArgumentParser} instance.
    """
    parser.add_argument(
        '--config', metavar='PATH',
        help=('An INI run configuration. Settings not given in it take '
              'their default values.'))

    parser.add_argument(
        '--seed', type=int,
        help='The run seed (overrides [train] seed in the configuration).')

    parser.add_argument(
        '--threads', type=int,
        help=('The number of threads for k-NN and metric kernels (overrides '
              '[runtime] threads). Results do not depend on this.'))

    parser.add_argument(
        '--out', metavar='DIR',
        help=('A directory that relative data, checkpoint and report paths '
              'are resolved against.'))

    parser.add_argument(
        '--verbose', type=int,
        help=('The verbosity level for progress output on standard error '
              '(overrides [runtime] verbose).'))


def parseCommonOptions(args):
    """
    Build the run configuration from the options added by
    C{addCommonOptions} and apply the thread count.

    @param args: The result of calling C{parse_args} on an C{ArgumentParser}
        instance.
    @raise ConfigError: If the configuration file cannot be read or a flag
        value is invalid.
    @return: A C{RunConfig}.
    """
    if args.config:
        try:
            config = RunConfig.fromFile(args.config, outDir=args.out)
        except (IOError, OSError) as e:
            raise ConfigError('Could not read config file %r: %s' %
                              (args.config, e))
    else:
        config = RunConfig(outDir=args.out)

    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ConfigError('--seed must be an unsigned 64-bit integer '
                              '(got %d).' % args.seed)
        config.set('train', 'seed', args.seed)
    if args.threads is not None:
        config.set('runtime', 'threads', args.threads)
    if args.verbose is not None:
        config.set('runtime', 'verbose', args.verbose)
    config.validate()

    setThreadCount(config.get('runtime', 'threads'))
    return config
