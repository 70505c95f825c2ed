"""Check suites and run reports.

Every command takes a resolved `ExperimentConfig`, fills a `RunReport` with
pass/fail checks, spectra and bound evaluations, and `run` persists it to
the output directory, also when a solver fails halfway.
"""

from contextlib import contextmanager
from dataclasses import asdict, dataclass
import json
import logging
import os
import platform
import time

import numpy as np
import scipy
from tqdm import tqdm

import blap
from blap import fields, operators, spectral
from blap.config import load_defaults
from blap.errors import BlapError, InvalidConfigError
from blap.fields import (SCALAR, SYM2, LAMBDA2, COT_SYM2, ONE_FORM,
                         inner_product_global as inner, sample_field)
from blap.manifold import (SPHERE2, TORUS, build_sphere2,
                           build_sphere3, build_torus, curvature_constant)
from blap.oracles import (OracleSpectrum, oracle_constant_curvature_pointwise,
                          oracle_sphere_lich_tt, oracle_sphere_scalar,
                          oracle_sphere_tt, oracle_torus_spectrum)
from blap.utils import loglog_svg, to_csv


logger = logging.getLogger(__name__)

SCHEMA = 'blap-report/1'
MIN_ORDER = 3.5
ROUNDING_LEVEL = 1e-9
SPECTRUM_COLUMNS = ['index', 'eigenvalue', 'multiplicity', 'residual',
                    'subspace', 'oracle_value', 'rel_error']


@dataclass
class Check:
    """Outcome of one measured quantity against its threshold."""
    name: str
    value: float
    threshold: float
    passed: bool
    detail: str = ''


class RunReport:
    """Results of one command run."""

    def __init__(self, config, model=None):
        self.config = config
        self.model = model
        self.checks = []
        self.spectra = []
        self.bounds = None
        self.convergence = None
        self.flags = []
        self.timings = {}
        self.fields = {}
        self.error = None

    def add_check(self, name, value, threshold, passed=None, detail=''):
        value = float(value)
        if passed is None:
            passed = bool(value <= threshold)
        check = Check(name, value, float(threshold), bool(passed), detail)
        self.checks.append(check)
        logger.info('%-36s %.3e (threshold %.1e) %s', name, value, threshold,
                    'pass' if passed else 'FAIL')
        return check

    @property
    def passed(self):
        return self.error is None and all(c.passed for c in self.checks)

    @contextmanager
    def timer(self, name):
        start = time.perf_counter()
        yield
        self.timings[name] = time.perf_counter() - start

    def to_dict(self):
        return {
            'schema': SCHEMA,
            'command': self.config.command,
            'config': self.config.values,
            'config_ini': self.config.to_ini(),
            'config_hash': self.config.hash,
            'model': self.model.describe() if self.model is not None else None,
            'model_hash': self.model.config_hash if self.model is not None else None,
            'passed': self.passed,
            'checks': [asdict(c) for c in self.checks],
            'spectra': self.spectra,
            'bounds': self.bounds,
            'convergence': self.convergence,
            'flags': self.flags,
            'timings': self.timings,
            'error': self.error,
            'environment': {
                'threads': self.config.threads,
                'build': blap.__version__,
                'python': platform.python_version(),
                'numpy': np.__version__,
                'scipy': scipy.__version__,
            },
        }


def thresholds(kind):
    return load_defaults()['thresholds'][kind]


def build_model(config, resolution=None):
    """Build the manifold model described by a configuration."""
    resolution = resolution or config.resolution
    if config.kind == TORUS:
        return build_torus(config.dimension, config.periods, resolution)
    if config.kind == SPHERE2:
        if len(resolution) != 2:
            raise InvalidConfigError('S2 needs 2 resolutions, got %s.'
                                     % resolution)
        return build_sphere2(config.radius, *resolution)
    return build_sphere3(config.radius, resolution)


def _max_ratio(pairs):
    """Largest |a - b| / scale over (a, b, scale) triples."""
    worst = 0.0
    for a, b, scale in pairs:
        worst = max(worst, abs(a - b) / scale if scale > 0 else abs(a - b))
    return worst


def cmd_identities(config, report=None):
    """Run the operator identity suite on the configured manifold."""
    model = build_model(config)
    report = report or RunReport(config, model)
    report.model = model
    limits = thresholds(model.kind)
    rng = np.random.default_rng(config.seed)
    kmax = limits['identity_wavenumber']
    n = model.dimension

    def rand(rank):
        return fields.random_field(model, rank, rng, max_wavenumber=kmax)

    with report.timer('assembly'):
        nabla = operators.op_covariant_derivative(model)
        d1, delta2 = operators.op_dnabla(model, 1), operators.op_delta_nabla(model, 2)
        d0, delta1 = operators.op_dnabla(model, 0), operators.op_delta_nabla(model, 1)
        b_op, k_op = operators.op_weitzenboeck_B(model), operators.op_weitzenboeck_K(model)
        weitz = operators.op_bourguignon(model, operators.WEITZENBOECK)
        comp = operators.op_bourguignon(model, operators.COMPOSITION)
        lich = operators.op_lichnerowicz(model)
        lap = operators.op_function_laplacian(model)

    samples = [rand(SYM2) for _ in range(config.samples)]
    g = fields.metric_field(model)

    with report.timer('identities'):
        pairs = []
        for phi in samples:
            omega = rand(LAMBDA2)
            pairs.append((inner(d1(phi), omega), inner(phi, delta2(omega)),
                          d1(phi).norm() * omega.norm()))
        report.add_check('adjointness dnabla', _max_ratio(pairs),
                         limits['adjointness'])
        pairs = []
        nabla_star = nabla.adjoint()
        for phi in samples:
            sigma = rand(COT_SYM2)
            pairs.append((inner(nabla(phi), sigma),
                          inner(phi, nabla_star(sigma)),
                          nabla(phi).norm() * sigma.norm()))
        report.add_check('adjointness nabla', _max_ratio(pairs),
                         limits['adjointness'])
        pairs = []
        for phi in samples:
            omega = rand(ONE_FORM)
            pairs.append((inner(d0(omega), phi), inner(omega, delta1(phi)),
                          d0(omega).norm() * phi.norm()))
        report.add_check('adjointness dnabla0', _max_ratio(pairs),
                         limits['adjointness'])

        report.add_check('nabla g', nabla(g).norm() / g.norm(),
                         limits['pointwise'])
        report.add_check('B g', b_op(g).norm() / g.norm(), limits['pointwise'])
        report.add_check('K g', k_op(g).norm() / g.norm(), limits['pointwise'])
        for name, op in (('trace B', b_op), ('trace K', k_op)):
            worst = max(
                np.max(np.abs(fields.trace_field(op(phi)).values))
                / np.max(np.abs(phi.values)) for phi in samples)
            report.add_check(name + ' pointwise', worst, limits['pointwise'])

        energies = [inner(comp(phi), phi) for phi in samples]
        pairs = [(e, d1(phi).norm() ** 2 + delta1(phi).norm() ** 2, abs(e))
                 for e, phi in zip(energies, samples)]
        report.add_check('integral formula', _max_ratio(pairs),
                         limits['integral_formula'])
        lowest = min(min(e, inner(weitz(phi), phi)) / phi.norm() ** 2
                     for e, phi in zip(energies, samples))
        report.add_check('nonnegativity', max(0.0, -lowest), 1e-12)

        worst = max((fields.trace_field(weitz(phi))
                     - lap(fields.trace_field(phi))).norm() / phi.norm()
                    for phi in samples)
        report.add_check('trace identity', worst, limits['trace_identity'])
        worst = 0.0
        for phi in samples:
            free = fields.tracefree_part(phi)
            worst = max(worst, fields.trace_field(weitz(free)).norm() / free.norm())
        report.add_check('traceless invariance', worst, limits['trace_identity'])
        worst = 0.0
        for _ in range(config.samples):
            f = rand(SCALAR)
            lhs = weitz(fields.pure_trace(f))
            worst = max(worst, (lhs - fields.pure_trace(lap(f))).norm()
                        / max(lhs.norm(), f.norm()))
        report.add_check('pure trace action', worst, limits['trace_identity'])

        worst = max((comp(phi) - weitz(phi)).norm() / phi.norm()
                    for phi in samples)
        report.add_check('assembly agreement', worst,
                         limits['assembly_agreement'])

        pairs = []
        for phi in samples:
            a, b = operators.K_quadratic_form_check(model, phi)
            pairs.append((a, b, abs(a)))
        report.add_check('K quadratic form', _max_ratio(pairs),
                         limits['quadratic_form'])
        pairs = [(inner(b_op(phi), phi), 0.5 * inner(k_op(phi), phi),
                  abs(inner(k_op(phi), phi))) for phi in samples]
        report.add_check('B half K quadratic form', _max_ratio(pairs),
                         limits['quadratic_form'])

        worst = 0.0
        for _ in range(config.samples):
            values = rng.standard_normal(n)
            lhs, rhs = operators.traceless_diagonal_identity(values - values.mean())
            worst = max(worst, abs(lhs - rhs) / lhs)
        report.add_check('traceless diagonal identity', worst, 1e-12)

        _constant_curvature_checks(report, model, samples, limits, rng,
                                   b_op, k_op, weitz, lich)
    return report


def _constant_curvature_checks(report, model, samples, limits, rng, b_op,
                               k_op, weitz, lich):
    """Closed-form curvature actions and the Lichnerowicz shift."""
    n, c = model.dimension, curvature_constant(model)
    worst = 0.0
    for phi in samples:
        node = rng.integers(model.node_count)
        full = phi.full()[node]
        b_ref, k_ref, _ = oracle_constant_curvature_pointwise(n, c, full)
        b_at = b_op(phi).full()[node]
        k_at = k_op(phi).full()[node]
        scale = max(np.abs(full).max(), 1e-300) * max(abs(c), 1.0)
        worst = max(worst, np.abs(b_at - b_ref).max() / scale,
                    np.abs(k_at - k_ref).max() / scale)
    report.add_check('constant curvature closed forms', worst,
                     limits['pointwise'])
    worst = 0.0
    for phi in samples:
        free = fields.tracefree_part(phi)
        diff = lich(free) - weitz(free) - free * (n * c)
        worst = max(worst, diff.norm() / free.norm())
    report.add_check('lichnerowicz shift', worst, limits['trace_identity'])


def expected_kernel(model, operator, subspace):
    """Kernel dimension predicted for the catalog manifolds."""
    n = model.dimension
    if operator == 'function-laplacian' or subspace == spectral.TRACE_PART:
        return 1
    parallel = n * (n + 1) // 2 if model.kind == TORUS else 1
    if subspace == spectral.FULL:
        return parallel
    if subspace == spectral.TRACELESS:
        return parallel - 1
    return None


def oracle_for(model, operator, subspace, count):
    """Reference spectrum matching an operator and subspace, or None."""
    n = model.dimension
    if model.kind == TORUS:
        if subspace == spectral.FULL:
            rank = SCALAR if operator == 'function-laplacian' else SYM2
            return oracle_torus_spectrum(model.periods, count, rank)
        if subspace == spectral.TRACE_PART:
            return oracle_torus_spectrum(model.periods, count, SCALAR)
        return None
    if operator == 'function-laplacian' or subspace == spectral.TRACE_PART:
        l_max = 0
        while sum(oracle_sphere_scalar(n, l_max).multiplicities) < count:
            l_max += 1
        return oracle_sphere_scalar(n, l_max + 1, model.radius)
    if subspace == spectral.TT and operator in ('bourguignon', 'lichnerowicz'):
        oracle = (oracle_sphere_tt if operator == 'bourguignon'
                  else oracle_sphere_lich_tt)(n, 6)
        scale = curvature_constant(model)
        return OracleSpectrum(oracle.source, [v * scale for v in oracle.values])
    return None


def compare_with_oracle(result, oracle):
    """Per-eigenvalue oracle value and error |lambda - o| / max(1, |o|)."""
    count = len(result.eigenvalues)
    refs = [None] * count
    if oracle is not None and oracle.multiplicities is not None:
        expanded = oracle.expanded()
        refs = [expanded[i] if i < len(expanded) else None for i in range(count)]
    elif oracle is not None:
        for j, cluster in enumerate(result.clusters):
            if j < len(oracle.values):
                for i in range(cluster.start, cluster.start + cluster.multiplicity):
                    refs[i] = oracle.values[j]
    errors = [None if o is None else abs(v - o) / max(1.0, abs(o))
              for v, o in zip(result.eigenvalues, refs)]
    return refs, errors


def spectrum_rows(result, refs, errors):
    mult = {}
    for cluster in result.clusters:
        for i in range(cluster.start, cluster.start + cluster.multiplicity):
            mult[i] = cluster.multiplicity
    return [{'index': i, 'eigenvalue': float(v), 'multiplicity': mult.get(i),
             'residual': float(r), 'subspace': result.subspace,
             'oracle_value': o, 'rel_error': e}
            for i, (v, r, o, e) in enumerate(zip(
                result.eigenvalues, result.residuals, refs, errors))]


def _solve(config, model, operator=None, subspace=None, count=None):
    operator = operator or config.operator
    op = operators.build_operator(model, operator, config.mode)
    matrix = None
    if config.cache and op.domain.size <= spectral.DENSE_LIMIT:
        matrix = operators.cached_matrix(op, config.mode)
    result = spectral.eigensolve(
        op, count or config.count, subspace or config.subspace, tol=config.tol,
        seed=config.seed, tt_shift=config.tt_shift, matrix=matrix)
    if config.cluster_tol is not None:
        result.clusters = spectral.cluster_multiplicities(
            result.eigenvalues, config.cluster_tol)
    return result


def cmd_spectrum(config, report=None, model=None):
    """Eigensolve, compare with the matching oracle and check the kernel."""
    model = model or build_model(config)
    report = report or RunReport(config, model)
    report.model = model
    limits = thresholds(model.kind)
    with report.timer('spectrum'):
        result = _solve(config, model)
    report.flags.extend(result.flags)

    oracle = oracle_for(model, config.operator, config.subspace, config.count)
    refs, errors = compare_with_oracle(result, oracle)
    rows = spectrum_rows(result, refs, errors)
    report.spectra.append({
        'operator': result.operator, 'subspace': result.subspace,
        'oracle': oracle.source if oracle is not None else None,
        'eigenvalues': result.eigenvalues.tolist(),
        'clusters': [c._asdict() for c in result.clusters],
        'residuals': result.residuals.tolist(),
        'kernel_dimension': result.kernel_dimension(config.kernel_threshold),
        'metadata': result.metadata, 'rows': rows,
    })

    if len(result.residuals):
        scale = max(1.0, np.max(np.abs(result.eigenvalues)))
        report.add_check('eigen residuals', np.max(result.residuals) / scale,
                         max(1e3 * config.tol, 1e-8))
    if result.eigenvectors is not None:
        for i in range(min(3, len(result.eigenvalues))):
            report.fields['eigen_%d' % i] = result.eigenfield(i)
    tolerance = load_defaults()['oracle_tolerance'][model.kind]
    known = [e for e in errors if e is not None]
    if known:
        report.add_check('oracle agreement', max(known), tolerance)
    if oracle is not None and oracle.multiplicities is not None:
        _multiplicity_check(report, result, oracle)

    if config.subspace == spectral.TT:
        _tt_checks(report, result, model)
    elif config.subspace in (spectral.FULL, spectral.TRACE_PART):
        expected = expected_kernel(model, config.operator, config.subspace)
        found = result.kernel_dimension(config.kernel_threshold)
        report.add_check('kernel dimension', abs(found - expected), 0,
                         detail='found %d, expected %d' % (found, expected))
        if result.rank == SYM2:
            _kernel_vector_checks(report, result, found, limits)
    if result.rank == SYM2:
        with report.timer('splitting'):
            _splitting_checks(report, config, model, result, limits)
    return report


def spectrum_gap(values, reference):
    """Largest |a - b| / max(1, |b|) over the common leading eigenvalues."""
    count = min(len(values), len(reference))
    if not count:
        return 0.0
    a, b = np.asarray(values[:count]), np.asarray(reference[:count])
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def _splitting_checks(report, config, model, result, limits):
    """Spectral consequences of the trace / traceless splitting.

    The full spectrum is the union of the trace-part and traceless ones, the
    trace part of the Bourguignon Laplacian has the spectrum of the function
    Laplacian, and on TT forms the Bourguignon and Lichnerowicz eigenvalues
    differ by n c pairwise.
    """
    count = len(result.eigenvalues)
    tolerance = limits['splitting']
    if config.subspace == spectral.FULL:
        trace = _solve(config, model, subspace=spectral.TRACE_PART)
        free = _solve(config, model, subspace=spectral.TRACELESS)
        union = np.sort(np.concatenate([trace.eigenvalues, free.eigenvalues]))
        report.add_check('full spectrum splitting',
                         spectrum_gap(result.eigenvalues, union[:count]),
                         tolerance)
    if config.operator == 'bourguignon' and config.subspace in (
            spectral.FULL, spectral.TRACE_PART):
        if config.subspace == spectral.TRACE_PART:
            trace = result
        scalar = _solve(config, model, operator='function-laplacian',
                        subspace=spectral.FULL)
        report.add_check('trace part spectrum',
                         spectrum_gap(trace.eigenvalues, scalar.eigenvalues),
                         tolerance)
    if config.subspace == spectral.TT and config.operator == 'bourguignon' \
            and spectral.TT_TRIVIAL not in result.flags:
        lich = _solve(config, model, operator='lichnerowicz',
                      subspace=spectral.TT)
        shift = model.dimension * curvature_constant(model)
        report.add_check('TT lichnerowicz shift',
                         spectrum_gap(result.eigenvalues + shift,
                                      lich.eigenvalues),
                         tolerance)


def _multiplicity_check(report, result, oracle):
    # the last cluster may be cut by the eigenpair count
    mismatches = 0
    for j, cluster in enumerate(result.clusters[:-1]):
        if j < len(oracle.multiplicities) and \
                cluster.multiplicity != oracle.multiplicities[j]:
            mismatches += 1
    report.add_check('multiplicities', mismatches, 0,
                     detail=' '.join('%.6g x%d' % (c.value, c.multiplicity)
                                     for c in result.clusters))


def _tt_checks(report, result, model):
    if spectral.TT_TRIVIAL in result.flags:
        ratios = result.metadata.get('tt_sample_ratios', [])
        report.add_check('TT space trivial', max(ratios) if ratios else 0.0,
                         spectral.TT_FLOOR, passed=model.kind == SPHERE2,
                         detail=spectral.TT_TRIVIAL)
        return
    div = operators.op_divergence(model)
    worst = 0.0
    for i in range(len(result.eigenvalues)):
        phi = result.eigenfield(i)
        worst = max(worst, div(phi).norm() / phi.norm())
    report.add_check('TT divergence', worst, 1e-8)


def _kernel_vector_checks(report, result, found, limits):
    worst_codazzi = worst_trace = 0.0
    model = result.model
    for i in range(found):
        phi = result.eigenfield(i)
        worst_codazzi = max(worst_codazzi, operators.codazzi_residual(phi))
        tr = fields.trace_field(phi)
        mean = np.sum(model.weights * tr.values) / np.sum(model.weights)
        spread = tr - fields.ScalarField(model, np.full(model.node_count, mean))
        worst_trace = max(worst_trace, spread.norm() / phi.norm())
    report.add_check('kernel codazzi residual', worst_codazzi,
                     limits['kernel_vector'])
    report.add_check('kernel trace spread', worst_trace, limits['kernel_vector'])


def cmd_bounds(config, report=None):
    """Evaluate the eigenvalue lower bounds on a sym2 spectrum."""
    if config.operator == 'function-laplacian':
        raise InvalidConfigError('Bounds apply to sym2 operators, not %s.'
                                 % config.operator)
    model = build_model(config)
    report = report or RunReport(config, model)
    report.model = model
    limits = thresholds(model.kind)
    with report.timer('spectrum'):
        result = _solve(config, model)
    report.flags.extend(result.flags)
    bounds = spectral.bounds_report(
        result, model, kernel_threshold=config.kernel_threshold)
    report.bounds = dict(asdict(bounds), passed=bounds.passed)

    for check in bounds.checks:
        name = '%s bound [%d]' % (check.classification, check.index)
        report.add_check(name, check.eigenvalue, check.bound,
                         passed=check.passed, detail=check.note)
        if check.transfer_residual is not None:
            report.add_check('trace transfer [%d]' % check.index,
                             check.transfer_residual, limits['transfer'])
        if check.energy_residual is not None:
            report.add_check('energy identity [%d]' % check.index,
                             check.energy_residual, limits['lichnerowicz_shift'])
        if check.lichnerowicz_residual is not None:
            report.add_check('lichnerowicz eigenvalue [%d]' % check.index,
                             check.lichnerowicz_residual,
                             limits['lichnerowicz_shift'])
    if not bounds.checks:
        report.flags.append('no positive eigenpairs to check')
    return report


def fit_order(spacings, errors):
    """Slope of log(error) against log(spacing), None below two usable points."""
    pts = [(h, e) for h, e in zip(spacings, errors) if e is not None and e > 1e-13]
    if len(pts) < 2:
        return None
    slope, _ = np.polyfit(np.log([p[0] for p in pts]),
                          np.log([p[1] for p in pts]), 1)
    return float(slope)


def convergence_subspace(config, model):
    """Subspace whose first nonzero eigenvalue is tracked.

    Falls back to the trace part (function Laplacian spectrum) when the
    configured subspace has no closed-form spectrum or a trivial TT space.
    """
    subspace = config.subspace
    if subspace == spectral.TT and model.kind == SPHERE2:
        return spectral.TRACE_PART
    if oracle_for(model, config.operator, subspace, config.count) is None:
        return spectral.TRACE_PART
    return subspace


def cmd_convergence(config, report=None):
    """First nonzero eigenvalue error across a list of resolutions.

    Passes when every error is at rounding level, or when the errors
    decrease monotonically with an observed order of at least MIN_ORDER.
    """
    resolutions = config.resolutions
    if len(resolutions) < 2:
        raise InvalidConfigError(
            'A convergence study needs at least two resolutions, got %d.'
            % len(resolutions))
    report = report or RunReport(config)
    rows = []
    subspace = None
    for resolution in tqdm(resolutions, desc='resolutions', unit='grid'):
        model = build_model(config, resolution)
        report.model = model
        if subspace is None:
            subspace = convergence_subspace(config, model)
            if subspace != config.subspace:
                report.flags.append('convergence tracked on %s' % subspace)
        label = 'x'.join(map(str, resolution))
        with report.timer('spectrum %s' % label):
            result = _solve(config, model, subspace=subspace)
        report.flags.extend(f for f in result.flags if f not in report.flags)
        oracle = oracle_for(model, config.operator, subspace, config.count)
        row = {'resolution': label, 'spacing': float(max(model.spacing)),
               'eigenvalue': None, 'oracle_value': None, 'error': None}
        kernel = result.kernel_dimension(config.kernel_threshold)
        if kernel < len(result.eigenvalues):
            ref = min(v for v in oracle.values if v > 0)
            lam = float(result.eigenvalues[kernel])
            row.update(eigenvalue=lam, oracle_value=ref,
                       error=abs(lam - ref) / ref)
        rows.append(row)

    errors = [r['error'] for r in rows]
    order = fit_order([r['spacing'] for r in rows], errors)
    report.convergence = {'subspace': subspace, 'rows': rows, 'order': order}
    known = [e for e in errors if e is not None]
    if not known:
        report.add_check('convergence errors', float('nan'), 0, passed=False,
                         detail='no nonzero eigenvalue found')
    elif config.kind == TORUS or max(known) <= ROUNDING_LEVEL:
        report.add_check('rounding-level errors', max(known), ROUNDING_LEVEL)
    else:
        report.add_check('observed order', order if order is not None else 0.0,
                         MIN_ORDER, passed=order is not None and order >= MIN_ORDER)
        decreasing = all(b < a for a, b in zip(known, known[1:]))
        report.add_check('monotone decrease', 0.0 if decreasing else 1.0, 0)
    return report


def battery_field(model, name, rng):
    """Named field of the Codazzi battery."""
    n = model.dimension
    comps = fields.components(SYM2, n)

    def from_full(entries):
        return sample_field(model, [entries.get(c, 0.0) for c in comps], SYM2)

    if name == 'metric':
        return fields.metric_field(model)
    if name == 'scaled_metric':
        return fields.metric_field(model) * 2.5
    if name == 'random':
        return fields.random_field(model, SYM2, rng)
    if name == 'diag_constant':
        if model.kind == TORUS:
            raise InvalidConfigError('diag_constant is parallel on a torus.')
        return from_full({(0, 0): 1.0, (1, 1): -1.0})
    if model.kind != TORUS:
        raise InvalidConfigError('Battery field %s is defined on tori only.'
                                 % name)
    if name == 'parallel_diag12':
        return from_full({(0, 0): 1.0, (1, 1): 2.0})
    if name == 'hessian_sin_x':
        return from_full({(0, 0): lambda *x: -np.sin(x[0])})
    if name == 'hessian_sin_x_sin_y':
        return from_full({
            (0, 0): lambda *x: -np.sin(x[0]) * np.sin(x[1]),
            (0, 1): lambda *x: np.cos(x[0]) * np.cos(x[1]),
            (1, 1): lambda *x: -np.sin(x[0]) * np.sin(x[1])})
    if name == 'hessian_cos_2y':
        return from_full({(1, 1): lambda *x: -4 * np.cos(2 * x[1])})
    raise InvalidConfigError('Unknown battery field %s.' % name)


def classify(codazzi, delta, threshold):
    if codazzi <= threshold and delta <= threshold:
        return 'harmonic'
    if codazzi <= threshold:
        return 'codazzi'
    return 'neither'


def cmd_codazzi(config, report=None):
    """Codazzi / harmonic classification of the field battery."""
    battery = config.battery
    if not battery:
        raise InvalidConfigError('The Codazzi battery is empty.')
    model = build_model(config)
    report = report or RunReport(config, model)
    report.model = model
    limits = thresholds(model.kind)
    expected = load_defaults()['expected_classes']
    rng = np.random.default_rng(config.seed)
    grad = operators.op_gradient(model)
    delta1 = operators.op_delta_nabla(model, 1)
    for name in battery:
        phi = battery_field(model, name, rng)
        report.fields[name] = phi
        codazzi, delta = operators.harmonic_residual(phi)
        found = classify(codazzi, delta, limits['classification'])
        report.add_check(
            'class %s' % name, codazzi, limits['classification'],
            passed=found == expected.get(name, found),
            detail='%s (codazzi %.2e, delta %.2e)' % (found, codazzi, delta))
        if found != 'neither':
            residual = (delta1(phi) + grad(fields.trace_field(phi))).norm()
            report.add_check('codazzi trace %s' % name, residual / phi.norm(),
                             limits['codazzi_trace'])
    return report


COMMANDS = {
    'identities': cmd_identities,
    'spectrum': cmd_spectrum,
    'bounds': cmd_bounds,
    'convergence': cmd_convergence,
    'codazzi': cmd_codazzi,
}


def write_outputs(report, directory=None, formats=None):
    """Write report.json and the CSV / SVG / field outputs requested."""
    directory = directory or report.config.directory
    formats = formats if formats is not None else report.config.formats
    os.makedirs(directory, exist_ok=True)
    written = []
    if 'json' in formats:
        fpath = os.path.join(directory, 'report.json')
        with open(fpath, 'w') as f:
            json.dump(report.to_dict(), f, indent=2, default=_jsonable)
        written.append(fpath)
    if 'csv' in formats and report.spectra:
        rows = [row for spectrum in report.spectra for row in spectrum['rows']]
        written.append(to_csv(rows, os.path.join(directory, 'spectrum.csv'),
                              SPECTRUM_COLUMNS))
    if report.convergence is not None:
        rows = report.convergence['rows']
        if 'csv' in formats:
            written.append(to_csv(rows, os.path.join(directory,
                                                     'convergence.csv')))
        if 'svg' in formats:
            pts = [(r['spacing'], r['error']) for r in rows
                   if r['error'] is not None]
            written.append(loglog_svg({report.config.kind: pts},
                                      os.path.join(directory, 'convergence.svg')))
    if 'fields' in formats:
        for name, field in report.fields.items():
            fpath = os.path.join(directory, 'field_%s.csv' % name)
            fields.dump_field_csv(field, fpath)
            written.append(fpath)
    return written


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError('%s is not JSON serializable' % type(obj).__name__)


def run(config):
    """Run the configured command and persist its report.

    The report is written even when the command fails with a blap error; the
    error is recorded in the report and re-raised afterwards.
    """
    report = RunReport(config)
    try:
        COMMANDS[config.command](config, report)
    except BlapError as err:
        report.error = {'type': type(err).__name__, 'message': str(err),
                        'diagnostics': getattr(err, 'diagnostics', {})}
        write_outputs(report)
        raise
    write_outputs(report)
    return report
