"""Command-line interface."""

import logging
import sys

from appdirs import user_cache_dir
import click

from blap import harness
from blap.config import ExperimentConfig, load_defaults
from blap.errors import (ContractViolation, InvalidConfigError,
                         InvalidInputError, SolverError)


EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


@click.group()
def cli():
    pass


def _common_options(func):
    func = click.option('-v', '--verbose', count=True,
                        help='Increase log verbosity (-v info, -vv debug).')(func)
    func = click.option('-o', '--output-dir', type=click.Path(dir_okay=True),
                        default=None, help='Output directory.')(func)
    func = click.option('-s', '--set', 'overrides', multiple=True,
                        type=click.STRING,
                        help='Override a key (section.key=value).')(func)
    func = click.option('-c', '--config', 'config_path', default=None,
                        type=click.Path(exists=True, dir_okay=False),
                        help='Experiment configuration (INI file).')(func)
    return func


def _setup_logging(verbose):
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(
        level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def _run(command, config_path, overrides, output_dir, verbose):
    """Resolve the configuration, run a command and exit with its status."""
    _setup_logging(verbose)
    overrides = list(overrides) + ['run.command=%s' % command]
    if output_dir:
        overrides.append('output.directory=%s' % output_dir)
    try:
        if config_path:
            config = ExperimentConfig.from_file(config_path, overrides)
        else:
            config = ExperimentConfig.from_string('', overrides)
        report = harness.run(config)
    except (InvalidConfigError, InvalidInputError) as err:
        click.echo('Invalid configuration: {}'.format(err), err=True)
        sys.exit(EXIT_CONFIG)
    except SolverError as err:
        click.echo('Solver failure: {}'.format(err), err=True)
        sys.exit(EXIT_SOLVER)
    except ContractViolation as err:
        click.echo('Contract violation: {}'.format(err), err=True)
        sys.exit(EXIT_FAILED)

    for check in report.checks:
        if not check.passed:
            click.echo('FAIL {}: {:.3e} (threshold {:.1e}) {}'.format(
                check.name, check.value, check.threshold, check.detail))
    for flag in report.flags:
        click.echo('Note: {}.'.format(flag))
    passed = sum(c.passed for c in report.checks)
    click.echo('{} on {}: {}/{} checks passed. Report in {}.'.format(
        command, config.kind, passed, len(report.checks), config.directory))
    sys.exit(0 if report.passed else EXIT_FAILED)


@click.command(name='identities')
@_common_options
def identities(config_path, overrides, output_dir, verbose):
    """Check adjointness, trace and curvature identities of the operators."""
    _run('identities', config_path, overrides, output_dir, verbose)


@click.command(name='spectrum')
@_common_options
def spectrum(config_path, overrides, output_dir, verbose):
    """Compute the lowest eigenvalues and compare them with the oracle."""
    _run('spectrum', config_path, overrides, output_dir, verbose)


@click.command(name='bounds')
@_common_options
def bounds(config_path, overrides, output_dir, verbose):
    """Check the eigenvalue lower bounds on the computed spectrum."""
    _run('bounds', config_path, overrides, output_dir, verbose)


@click.command(name='convergence')
@_common_options
def convergence(config_path, overrides, output_dir, verbose):
    """Measure the eigenvalue error over a list of resolutions."""
    _run('convergence', config_path, overrides, output_dir, verbose)


@click.command(name='codazzi')
@_common_options
def codazzi(config_path, overrides, output_dir, verbose):
    """Classify the field battery as harmonic, Codazzi or neither."""
    _run('codazzi', config_path, overrides, output_dir, verbose)


@click.command(name='print-cache-dir')
def print_cachedir():
    """Print user cache directory where operator matrices are stored."""
    click.echo(user_cache_dir(appname='blap'))


@click.command(name='list-manifolds')
def list_manifolds():
    """Print supported manifold kinds."""
    click.echo(', '.join(load_defaults()['manifold'].keys()))


@click.command(name='list-battery')
@click.argument('kind', type=click.STRING)
def list_battery(kind):
    """Print the default Codazzi battery of a manifold kind."""
    batteries = load_defaults()['batteries']
    if kind not in batteries:
        raise click.BadArgumentUsage('Manifold kind not supported.')
    click.echo(', '.join(batteries[kind]))


cli.add_command(identities)
cli.add_command(spectrum)
cli.add_command(bounds)
cli.add_command(convergence)
cli.add_command(codazzi)
cli.add_command(print_cachedir)
cli.add_command(list_manifolds)
cli.add_command(list_battery)


if __name__ == '__main__':
    cli()
