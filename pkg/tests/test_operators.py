"""Tests for operators module."""

from tempfile import TemporaryDirectory

import numpy as np
import pytest

from blap import fields, operators
from blap.errors import InvalidInputError, UndefinedResidualError
from blap.fields import inner_product_global as inner
from blap.manifold import build_sphere2, build_sphere3, build_torus
from blap.oracles import oracle_constant_curvature_pointwise


@pytest.fixture(scope='module')
def torus():
    return build_torus(2, [2 * np.pi, 2 * np.pi], [8, 8])


@pytest.fixture(scope='module')
def torus3():
    return build_torus(3, [2 * np.pi, 2 * np.pi, 4 * np.pi], [6, 6, 8])


@pytest.fixture(scope='module')
def sphere2():
    return build_sphere2(1.0, 12, 24)


@pytest.fixture(scope='module')
def sphere3():
    return build_sphere3(1.0, [8, 8, 8])


def _rand(model, rank, seed=0):
    return fields.random_field(model, rank, np.random.default_rng(seed),
                               max_wavenumber=2)


def test_fourier_derivative():
    x = np.arange(16) * (2 * np.pi / 16)
    deriv = operators.fourier_derivative(16, 2 * np.pi)
    assert np.allclose(deriv @ np.sin(3 * x), 3 * np.cos(3 * x), atol=1e-12)
    assert np.allclose(deriv @ np.ones(16), 0, atol=1e-12)
    # no spurious null mode besides the constants
    second = deriv.T @ deriv
    assert np.sum(np.linalg.eigvalsh(second) < 1e-9) == 1


def test_covariant_derivative_of_metric(torus, sphere2, sphere3):
    for model in (torus, sphere2, sphere3):
        g = fields.metric_field(model)
        nabla_g = operators.op_covariant_derivative(model)(g)
        assert nabla_g.norm() / g.norm() < 1e-12


@pytest.mark.parametrize('name', ['torus', 'sphere2', 'sphere3'])
def test_adjointness(name, request):
    model = request.getfixturevalue(name)
    pairs = [
        (operators.op_dnabla(model, 1), fields.SYM2, fields.LAMBDA2),
        (operators.op_dnabla(model, 0), fields.ONE_FORM, fields.SYM2),
        (operators.op_covariant_derivative(model), fields.SYM2,
         fields.COT_SYM2),
    ]
    for op, dom, cod in pairs:
        u, w = _rand(model, dom, 1), _rand(model, cod, 2)
        lhs, rhs = inner(op(u), w), inner(u, op.adjoint()(w))
        assert abs(lhs - rhs) <= 1e-12 * op(u).norm() * w.norm()


def test_delta_nabla_adjoint_of_dnabla(torus):
    phi, omega = _rand(torus, fields.SYM2, 3), _rand(torus, fields.LAMBDA2, 4)
    delta2 = operators.op_delta_nabla(torus, 2)
    d1 = operators.op_dnabla(torus, 1)
    assert inner(d1(phi), omega) == pytest.approx(inner(phi, delta2(omega)),
                                                  rel=1e-12)
    with pytest.raises(InvalidInputError):
        operators.op_delta_nabla(torus, 3)


def test_flat_curvature_terms_vanish(torus3):
    phi = _rand(torus3, fields.SYM2)
    assert operators.op_weitzenboeck_B(torus3)(phi).norm() == 0.0
    assert operators.op_weitzenboeck_K(torus3)(phi).norm() == 0.0


def test_torus_assemblies_agree(torus, torus3):
    for model in (torus, torus3):
        phi = _rand(model, fields.SYM2, 5)
        comp = operators.op_bourguignon(model, operators.COMPOSITION)(phi)
        weitz = operators.op_bourguignon(model, operators.WEITZENBOECK)(phi)
        assert (comp - weitz).norm() / phi.norm() < 1e-10


def test_torus_rough_laplacian_on_modes(torus):
    phi = fields.sample_field(
        torus, [lambda x, y: np.cos(2 * x + y), 0.0, lambda x, y: np.sin(y)],
        fields.SYM2)
    expected = fields.sample_field(
        torus, [lambda x, y: 5 * np.cos(2 * x + y), 0.0, lambda x, y: np.sin(y)],
        fields.SYM2)
    out = operators.op_bourguignon(torus)(phi)
    assert np.allclose(out.values, expected.values, atol=1e-11)


def test_integral_formula(sphere2):
    phi = _rand(sphere2, fields.SYM2, 6)
    lap = operators.op_bourguignon(sphere2, operators.COMPOSITION)
    d1 = operators.op_dnabla(sphere2, 1)
    delta1 = operators.op_delta_nabla(sphere2, 1)
    energy = d1(phi).norm() ** 2 + delta1(phi).norm() ** 2
    assert inner(lap(phi), phi) == pytest.approx(energy, rel=1e-10)


def test_trace_identity(sphere2, sphere3):
    for model in (sphere2, sphere3):
        phi = _rand(model, fields.SYM2, 7)
        lap_b = operators.op_bourguignon(model)
        lap = operators.op_function_laplacian(model)
        diff = (fields.trace_field(lap_b(phi))
                - lap(fields.trace_field(phi)))
        assert diff.norm() / phi.norm() < 1e-8
        free = fields.tracefree_part(phi)
        assert fields.trace_field(lap_b(free)).norm() / free.norm() < 1e-8


def test_pure_trace_action(sphere2):
    f = _rand(sphere2, fields.SCALAR, 8)
    lhs = operators.op_bourguignon(sphere2)(fields.pure_trace(f))
    rhs = fields.pure_trace(operators.op_function_laplacian(sphere2)(f))
    assert (lhs - rhs).norm() / lhs.norm() < 1e-8


def test_constant_curvature_actions(sphere2, sphere3):
    for model in (sphere2, sphere3):
        n = model.dimension
        phi = _rand(model, fields.SYM2, 9)
        b_full = operators.op_weitzenboeck_B(model)(phi).full()
        k_full = operators.op_weitzenboeck_K(model)(phi).full()
        for node in (0, model.node_count // 2, model.node_count - 1):
            b_ref, k_ref, _ = oracle_constant_curvature_pointwise(
                n, 1.0, phi.full()[node])
            assert np.allclose(b_full[node], b_ref, atol=1e-12)
            assert np.allclose(k_full[node], k_ref, atol=1e-12)
        g = fields.metric_field(model)
        assert operators.op_weitzenboeck_B(model)(g).norm() < 1e-12


def test_lichnerowicz_shift_on_traceless(sphere3):
    free = fields.tracefree_part(_rand(sphere3, fields.SYM2, 10))
    diff = (operators.op_lichnerowicz(sphere3)(free)
            - operators.op_bourguignon(sphere3)(free) - 3.0 * free)
    assert diff.norm() / free.norm() < 1e-10


@pytest.mark.parametrize('model', [
    build_sphere2(1.0, 24, 48), build_sphere3(1.0, [12, 12, 12])])
def test_sphere_assemblies_agree(model):
    phi = fields.random_field(model, fields.SYM2, np.random.default_rng(11),
                              max_wavenumber=1)
    comp = operators.op_bourguignon(model, operators.COMPOSITION)(phi)
    weitz = operators.op_bourguignon(model, operators.WEITZENBOECK)(phi)
    assert (comp - weitz).norm() / weitz.norm() < 1e-8


def test_sphere_metric_harmonic(sphere2):
    g = fields.metric_field(sphere2)
    assert operators.op_delta_nabla(sphere2, 1)(g).norm() < 1e-10 * g.norm()
    assert max(operators.harmonic_residual(g * 2.5)) <= 1e-10


@pytest.mark.parametrize('name', ['sphere2', 'sphere3'])
@pytest.mark.parametrize('sign', [1.0, -1.0])
def test_continued_derivative_skew(name, sign, request):
    model = request.getfixturevalue(name)
    deriv = operators._continued_axis_derivative(model, sign).toarray()
    weighted = model.weights[:, np.newaxis] * deriv
    skew = weighted + weighted.T
    off = skew - np.diag(np.diag(skew))
    assert np.abs(off).max() < 1e-12 * np.abs(weighted).max()


def test_continued_derivative_exact(sphere2):
    theta = sphere2.coordinates[:, 0]
    deriv = operators._continued_axis_derivative(sphere2, 1.0)
    assert np.allclose(deriv @ np.cos(theta), -np.sin(theta), atol=1e-12)
    assert np.allclose(deriv @ np.cos(2 * theta), -2 * np.sin(2 * theta),
                       atol=1e-12)


def test_fourier_derivative_antisymmetric():
    deriv = operators.fourier_derivative(12, 2 * np.pi, nyquist=False)
    assert np.allclose(deriv, -deriv.T, atol=1e-13)
    x = np.arange(12) * (2 * np.pi / 12)
    assert np.allclose(deriv @ np.cos(2 * x), -2 * np.sin(2 * x), atol=1e-12)


def test_operator_symmetry(sphere2):
    op = operators.op_bourguignon(sphere2)
    weighted = (op.matrix.T.multiply(op.domain_mass)).T.toarray()
    assert np.allclose(weighted, weighted.T, atol=1e-9 * np.abs(weighted).max())
    assert op.symmetric


def test_codazzi_residuals(torus):
    hess = fields.sample_field(
        torus, [lambda x, y: -np.sin(x), 0.0, 0.0], fields.SYM2)
    codazzi, delta = operators.harmonic_residual(hess)
    assert codazzi < 1e-12
    assert delta > 0.1
    g = fields.metric_field(torus)
    assert max(operators.harmonic_residual(g)) < 1e-12
    with pytest.raises(UndefinedResidualError):
        operators.codazzi_residual(fields.zeros(torus, fields.SYM2))


def test_K_quadratic_form(sphere2, torus):
    phi = _rand(sphere2, fields.SYM2, 12)
    assembled, principal = operators.K_quadratic_form_check(sphere2, phi)
    assert assembled == pytest.approx(principal, rel=1e-10)
    assert operators.K_quadratic_form_check(torus, _rand(torus, fields.SYM2)) \
        == (0.0, 0.0)


def test_traceless_diagonal_identity():
    lhs, rhs = operators.traceless_diagonal_identity([1.0, -3.0, 2.0])
    assert lhs == pytest.approx(14.0)
    assert rhs == pytest.approx(14.0)
    with pytest.raises(InvalidInputError):
        operators.traceless_diagonal_identity([1.0, 1.0])
    with pytest.raises(InvalidInputError):
        operators.traceless_diagonal_identity([0.0])


def test_build_operator(torus):
    assert operators.build_operator(torus, 'rough').name == 'rough'
    assert operators.build_operator(torus, 'bourguignon').name == 'bourguignon'
    with pytest.raises(InvalidInputError):
        operators.build_operator(torus, 'hodge')


def test_cached_matrix(torus):
    op = operators.op_lichnerowicz(torus)
    with TemporaryDirectory(prefix='blap_') as tmp_dir:
        first = operators.cached_matrix(op, 'weitzenboeck', tmp_dir)
        again = operators.cached_matrix(op, 'weitzenboeck', tmp_dir)
        assert operators.cache_path(op, 'weitzenboeck', tmp_dir).startswith(
            tmp_dir)
    assert abs(first - again).max() == 0
    assert abs(again - op.matrix).max() == 0
