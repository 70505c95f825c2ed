"""Tests for cli module."""

import json
import os
from pkg_resources import resource_filename
from tempfile import TemporaryDirectory

from click.testing import CliRunner
import pytest

from blap import cli, harness
from blap.errors import ContractViolation, SolverError


@pytest.fixture
def torus_ini():
    return resource_filename(__name__, 'data/torus.ini')


def test_identities(torus_ini):
    runner = CliRunner()
    with TemporaryDirectory(prefix='blap_') as tmp_dir:
        result = runner.invoke(
            cli.cli, ['identities', '-c', torus_ini, '-o', tmp_dir])
        with open(os.path.join(tmp_dir, 'report.json')) as f:
            data = json.load(f)
    assert result.exit_code == 0
    assert 'checks passed' in result.output
    assert data['command'] == 'identities'


def test_spectrum_with_overrides(torus_ini):
    runner = CliRunner()
    with TemporaryDirectory(prefix='blap_') as tmp_dir:
        result = runner.invoke(cli.cli, [
            'spectrum', '-c', torus_ini, '-o', tmp_dir,
            '--set', 'run.subspace=trace-part', '-s', 'run.count=6'])
        assert os.path.isfile(os.path.join(tmp_dir, 'spectrum.csv'))
    assert result.exit_code == 0


def test_invalid_configuration(torus_ini):
    runner = CliRunner()
    with TemporaryDirectory(prefix='blap_') as tmp_dir:
        result = runner.invoke(cli.cli, [
            'spectrum', '-c', torus_ini, '-o', tmp_dir, '-s', 'run.count=0'])
    assert result.exit_code == cli.EXIT_CONFIG
    result = runner.invoke(cli.cli, [
        'convergence', '-c', torus_ini, '-s', 'manifold.resolutions=8,8'])
    assert result.exit_code == cli.EXIT_CONFIG


def test_failed_check_exit_code(torus_ini, monkeypatch):
    def failing(config):
        report = harness.RunReport(config)
        report.add_check('broken identity', 1.0, 1e-12)
        return report

    monkeypatch.setattr(harness, 'run', failing)
    result = CliRunner().invoke(cli.cli, ['identities', '-c', torus_ini])
    assert result.exit_code == cli.EXIT_FAILED
    assert 'FAIL broken identity' in result.output


def test_solver_error_exit_code(torus_ini, monkeypatch):
    def failing(config):
        raise SolverError('Lanczos did not converge.')

    monkeypatch.setattr(harness, 'run', failing)
    result = CliRunner().invoke(cli.cli, ['spectrum', '-c', torus_ini])
    assert result.exit_code == cli.EXIT_SOLVER


def test_contract_violation_exit_code(torus_ini, monkeypatch):
    def failing(config):
        raise ContractViolation('Operator is not symmetric.')

    monkeypatch.setattr(harness, 'run', failing)
    result = CliRunner().invoke(cli.cli, ['spectrum', '-c', torus_ini])
    assert result.exit_code == cli.EXIT_FAILED
    assert 'Contract violation' in result.output


def test_list_commands():
    runner = CliRunner()
    result = runner.invoke(cli.cli, ['list-manifolds'])
    assert 'round-sphere-3' in result.output
    result = runner.invoke(cli.cli, ['list-battery', 'flat-torus'])
    assert 'hessian_sin_x' in result.output
    result = runner.invoke(cli.cli, ['list-battery', 'klein-bottle'])
    assert result.exit_code != 0
    result = runner.invoke(cli.cli, ['print-cache-dir'])
    assert result.exit_code == 0
    assert 'blap' in result.output
