"""Tests for harness module."""

import csv
import json
import os
from pkg_resources import resource_filename
from tempfile import TemporaryDirectory

import numpy as np
import pytest

from blap import harness, spectral
from blap.config import ExperimentConfig
from blap.errors import ContractViolation, InvalidConfigError, SolverError
from blap.manifold import SPHERE2, SPHERE3, TORUS, build_sphere3


def _config(*overrides):
    fpath = resource_filename(__name__, 'data/torus.ini')
    return ExperimentConfig.from_file(fpath, list(overrides), environ={})


def _sphere_config(*overrides):
    text = '[manifold]\nkind = round-sphere-2\nresolution = 8,16\n'
    return ExperimentConfig.from_string(text, list(overrides), environ={})


def test_build_model():
    model = harness.build_model(_config())
    assert model.kind == TORUS and model.resolution == (8, 8)
    assert harness.build_model(_sphere_config()).kind == SPHERE2
    with pytest.raises(InvalidConfigError):
        harness.build_model(_sphere_config('manifold.resolution=8,16,16'))


def test_identities_torus():
    report = harness.cmd_identities(_config())
    names = [c.name for c in report.checks]
    assert 'adjointness dnabla' in names
    assert 'assembly agreement' in names
    assert 'integral formula' in names
    assert 'lichnerowicz shift' in names
    failed = [c for c in report.checks if not c.passed]
    assert not failed
    assert report.passed
    assert 'identities' in report.timings


def test_spectrum_torus():
    report = harness.cmd_spectrum(_config('run.command=spectrum'))
    assert report.passed
    spectrum = report.spectra[0]
    assert spectrum['oracle'] == 'torus-fourier'
    assert spectrum['kernel_dimension'] == 3
    rows = spectrum['rows']
    assert len(rows) == 12
    assert rows[5]['oracle_value'] == 1.0
    assert rows[5]['rel_error'] < 1e-10
    assert rows[0]['multiplicity'] == 3


def test_spectrum_torus_trace_part():
    report = harness.cmd_spectrum(
        _config('run.command=spectrum', 'run.subspace=trace-part'))
    assert report.passed
    check = [c for c in report.checks if c.name == 'kernel dimension'][0]
    assert 'expected 1' in check.detail


def test_spectrum_torus_tt():
    report = harness.cmd_spectrum(
        _config('run.command=spectrum', 'run.subspace=TT', 'run.count=4'))
    assert report.passed
    assert any(c.name == 'TT divergence' for c in report.checks)


def test_bounds_torus():
    report = harness.cmd_bounds(_config('run.command=bounds'))
    assert report.passed
    assert report.bounds['yang_bound'] == pytest.approx(0.5)
    assert len(report.bounds['checks']) == 9
    with pytest.raises(InvalidConfigError):
        harness.cmd_bounds(_config('run.operator=function-laplacian'))


def test_convergence_torus():
    report = harness.cmd_convergence(_config('run.command=convergence'))
    assert report.passed
    rows = report.convergence['rows']
    assert [r['resolution'] for r in rows] == ['8x8', '12x12']
    assert all(r['oracle_value'] == 1.0 for r in rows)
    assert report.convergence['order'] is None


def test_convergence_needs_two_resolutions():
    with pytest.raises(InvalidConfigError):
        harness.cmd_convergence(_config('manifold.resolutions=8,8'))


def test_codazzi_torus():
    report = harness.cmd_codazzi(_config('run.command=codazzi'))
    assert report.passed
    details = {c.name: c.detail for c in report.checks}
    assert details['class hessian_sin_x'].startswith('codazzi')
    assert details['class parallel_diag12'].startswith('harmonic')
    assert details['class random'].startswith('neither')
    assert 'codazzi trace hessian_cos_2y' in details


def test_codazzi_sphere():
    report = harness.cmd_codazzi(_sphere_config('run.command=codazzi'))
    assert report.passed
    with pytest.raises(InvalidConfigError):
        harness.cmd_codazzi(_sphere_config('run.battery=hessian_sin_x'))


def test_codazzi_empty_battery():
    with pytest.raises(InvalidConfigError):
        harness.cmd_codazzi(_config('run.battery='))


def test_classify():
    assert harness.classify(1e-12, 1e-12, 1e-6) == 'harmonic'
    assert harness.classify(1e-12, 1.0, 1e-6) == 'codazzi'
    assert harness.classify(1.0, 1e-12, 1e-6) == 'neither'


def test_oracle_selection():
    model = build_sphere3(1.0, [8, 8, 8])
    oracle = harness.oracle_for(model, 'bourguignon', spectral.TT, 10)
    assert oracle.values[:2] == [9.0, 16.0]
    oracle = harness.oracle_for(model, 'lichnerowicz', spectral.TT, 10)
    assert oracle.values[0] == 12.0
    oracle = harness.oracle_for(model, 'bourguignon', spectral.TRACE_PART, 10)
    assert oracle.values[:2] == [0.0, 3.0]
    assert sum(oracle.multiplicities) >= 10
    assert harness.oracle_for(model, 'rough', spectral.TT, 10) is None
    torus = harness.build_model(_config())
    assert harness.oracle_for(torus, 'bourguignon', spectral.TRACELESS, 10) \
        is None


def test_expected_kernel():
    torus = harness.build_model(_config())
    assert harness.expected_kernel(torus, 'bourguignon', spectral.FULL) == 3
    assert harness.expected_kernel(torus, 'rough', spectral.TRACELESS) == 2
    sphere = harness.build_model(_sphere_config())
    assert harness.expected_kernel(sphere, 'bourguignon', spectral.FULL) == 1
    assert harness.expected_kernel(sphere, 'bourguignon',
                                   spectral.TRACELESS) == 0
    assert harness.expected_kernel(sphere, 'function-laplacian',
                                   spectral.FULL) == 1


def test_fit_order():
    spacings = [0.4, 0.2, 0.1]
    errors = [3 * h ** 4 for h in spacings]
    assert harness.fit_order(spacings, errors) == pytest.approx(4.0)
    assert harness.fit_order(spacings, [1e-15, 1e-16, None]) is None


def test_run_writes_outputs():
    with TemporaryDirectory(prefix='blap_') as tmp_dir:
        config = _config('run.command=spectrum', 'output.directory=%s' % tmp_dir,
                         'output.formats=json,csv,fields')
        report = harness.run(config)
        with open(os.path.join(tmp_dir, 'report.json')) as f:
            data = json.load(f)
        with open(os.path.join(tmp_dir, 'spectrum.csv')) as f:
            header = next(csv.reader(f))
        assert os.path.isfile(os.path.join(tmp_dir, 'field_eigen_0.csv'))
    assert report.passed
    assert data['schema'] == 'blap-report/1'
    assert data['command'] == 'spectrum'
    assert data['config_hash'] == config.hash
    assert data['model']['resolution'] == [8, 8]
    assert data['passed'] is True
    assert data['environment']['threads'] == 1
    assert header == harness.SPECTRUM_COLUMNS


def test_run_writes_convergence_plot():
    with TemporaryDirectory(prefix='blap_') as tmp_dir:
        config = _config('run.command=convergence',
                         'output.directory=%s' % tmp_dir,
                         'output.formats=json,csv,svg')
        harness.run(config)
        assert os.path.isfile(os.path.join(tmp_dir, 'convergence.csv'))
        assert os.path.isfile(os.path.join(tmp_dir, 'convergence.svg'))


def test_run_reports_solver_error(monkeypatch):
    def failing(config, report):
        raise SolverError('no convergence', diagnostics={'matvecs': 7})

    monkeypatch.setitem(harness.COMMANDS, 'spectrum', failing)
    with TemporaryDirectory(prefix='blap_') as tmp_dir:
        config = _config('run.command=spectrum', 'output.directory=%s' % tmp_dir)
        with pytest.raises(SolverError):
            harness.run(config)
        with open(os.path.join(tmp_dir, 'report.json')) as f:
            data = json.load(f)
    assert data['passed'] is False
    assert data['error']['diagnostics'] == {'matvecs': 7}


def test_report_add_check():
    report = harness.RunReport(_config())
    assert report.add_check('small', 1e-13, 1e-12).passed
    assert not report.add_check('large', 1.0, 1e-12).passed
    assert not report.passed
    assert np.isclose(report.checks[0].value, 1e-13)
    assert report.to_dict()['model'] is None


def test_run_reports_contract_violation(monkeypatch):
    def failing(config, report):
        raise ContractViolation('Operator is not symmetric.')

    monkeypatch.setitem(harness.COMMANDS, 'spectrum', failing)
    with TemporaryDirectory(prefix='blap_') as tmp_dir:
        config = _config('run.command=spectrum', 'output.directory=%s' % tmp_dir)
        with pytest.raises(ContractViolation):
            harness.run(config)
        with open(os.path.join(tmp_dir, 'report.json')) as f:
            data = json.load(f)
    assert data['passed'] is False
    assert data['error']['type'] == 'ContractViolation'
    assert data['error']['diagnostics'] == {}


def test_spectrum_splitting_checks():
    report = harness.cmd_spectrum(_config('run.command=spectrum'))
    checks = {c.name: c for c in report.checks}
    assert checks['full spectrum splitting'].passed
    assert checks['trace part spectrum'].passed
    assert checks['full spectrum splitting'].value < 1e-10
    report = harness.cmd_spectrum(
        _config('run.command=spectrum', 'run.subspace=TT', 'run.count=4'))
    assert any(c.name == 'TT lichnerowicz shift' and c.passed
               for c in report.checks)


def test_spectrum_gap():
    assert harness.spectrum_gap([1.0, 2.0], [1.0, 2.0, 3.0]) == 0.0
    assert harness.spectrum_gap([0.0, 4.2], [0.0, 4.0]) == pytest.approx(0.05)
    assert harness.spectrum_gap([], [1.0]) == 0.0


def test_spectrum_sphere_trace_part():
    report = harness.cmd_spectrum(_sphere_config(
        'run.command=spectrum', 'manifold.resolution=12,24',
        'run.subspace=trace-part', 'run.count=9'))
    assert report.passed
    checks = {c.name: c for c in report.checks}
    assert checks['oracle agreement'].value < 1e-8
    assert checks['trace part spectrum'].value < 1e-8


def test_spectrum_sphere_tt_trivial():
    report = harness.cmd_spectrum(_sphere_config(
        'run.command=spectrum', 'manifold.resolution=12,24',
        'run.subspace=TT', 'run.count=4'))
    assert report.passed
    assert spectral.TT_TRIVIAL in report.flags
    ratios = report.spectra[0]['metadata']['tt_sample_ratios']
    assert max(ratios) <= spectral.TT_FLOOR


def test_bounds_slack_recorded():
    report = harness.cmd_bounds(_sphere_config(
        'run.command=bounds', 'manifold.resolution=12,24',
        'run.subspace=trace-part', 'run.count=4'))
    assert report.passed
    assert report.bounds['slack'] <= 1e-6
    assert set(report.bounds['slack_sources']) == {'assembly_gap', 'residual'}


def test_convergence_sphere_rounding_level():
    report = harness.cmd_convergence(_sphere_config(
        'run.command=convergence', 'manifold.resolutions=12,24;16,32',
        'run.subspace=trace-part', 'run.count=4'))
    assert report.passed
    check = [c for c in report.checks if c.name == 'rounding-level errors'][0]
    assert check.value <= harness.ROUNDING_LEVEL
    assert all(r['oracle_value'] == 2.0 for r in report.convergence['rows'])


def test_codazzi_sphere3():
    text = '[manifold]\nkind = round-sphere-3\nresolution = 8,8,8\n'
    config = ExperimentConfig.from_string(text, ['run.command=codazzi'],
                                          environ={})
    report = harness.cmd_codazzi(config)
    assert report.passed
    details = {c.name: c.detail for c in report.checks}
    assert details['class metric'].startswith('harmonic')
    assert details['class diag_constant'].startswith('neither')
