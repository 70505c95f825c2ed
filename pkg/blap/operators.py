"""Sparse differential and curvature operators on tensor fields.

Every operator maps a field layout to another one and is stored as a sum of
products of scipy sparse matrices acting on node-major value vectors. Products
are applied factor by factor and only materialized on request: on S3 the
explicit product of two frame derivatives is dense in the two periodic angles.

Adjoints are taken against the diagonal mass matrices of both layouts,

    adjoint(A) = M_dom^-1 A^T M_cod,

so that <A u, w> = <u, adjoint(A) w> holds to rounding for every pair of
fields. Conventions (frame components, orthonormal frame e_k) :

  * (nabla_k T)_I = e_k(T_I) - sum_slots sum_m Gamma[k, I_s, m] T_(I, s -> m)
  * (d phi)_ijk = (nabla_i phi)_jk - (nabla_j phi)_ik, stored for i < j
  * (d omega)_ij = ((nabla_i omega)_j + (nabla_j omega)_i) / 2 on one-forms
  * (Rring phi)_ab = sum_i,m R_iamb phi_mi, so Rring phi = c (tr phi g - phi)
    at constant curvature c
  * B phi = (phi Ric + Ric phi) / 2 - Rring phi
  * K phi = Ric phi + phi Ric - 2 Rring phi
"""

from dataclasses import dataclass
from functools import cached_property, lru_cache
import logging
import os

from appdirs import user_cache_dir
import numpy as np
from scipy import sparse

from blap import fields
from blap.errors import InvalidInputError, UndefinedResidualError
from blap.fields import (SCALAR, ONE_FORM, SYM2, LAMBDA2, COT_SYM2,
                         COT_ONE_FORM, layout_for, mass_weights, make_field,
                         sym_index)
from blap.manifold import curvature_data
from blap.utils import compute_sha256, read_matrix, write_matrix


logger = logging.getLogger(__name__)

DERIVATIVE_RANK = {SCALAR: ONE_FORM, ONE_FORM: COT_ONE_FORM, SYM2: COT_SYM2}

COMPOSITION = 'composition'
WEITZENBOECK = 'weitzenboeck'
MODES = (COMPOSITION, WEITZENBOECK)


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Linear map between two field layouts on a manifold model.

    Attributes
    ----------
    name : str
        Operator name, used in logs, reports and cache keys.
    domain : DofLayout
        Layout of the input fields.
    codomain : DofLayout
        Layout of the output fields.
    model : ManifoldModel
        Model whose mass weights define the inner products.
    terms : tuple of tuple of sparse matrices
        The operator is the sum over terms of the product of their factors.
    symmetric : bool
        Whether the operator is self-adjoint in the weighted inner product.
    """
    name: str
    domain: fields.DofLayout
    codomain: fields.DofLayout
    model: object
    terms: tuple
    symmetric: bool = False

    def __repr__(self):
        return 'SparseOperator(%s: %s -> %s, %s)' % (
            self.name, self.domain.rank, self.codomain.rank, self.model.kind)

    @property
    def shape(self):
        return (self.codomain.size, self.domain.size)

    @cached_property
    def domain_mass(self):
        return mass_weights(self.model, self.domain)

    @cached_property
    def codomain_mass(self):
        return mass_weights(self.model, self.codomain)

    @cached_property
    def layout_hash(self):
        text = '%s:%d:%d|%s:%d:%d' % (
            self.domain.rank, self.domain.dimension, self.domain.node_count,
            self.codomain.rank, self.codomain.dimension,
            self.codomain.node_count)
        return compute_sha256(text)

    def matvec(self, x):
        """Apply the operator to a raw value vector."""
        out = np.zeros(self.codomain.size)
        for term in self.terms:
            y = x
            for factor in reversed(term):
                y = factor @ y
            out += y
        return out

    def apply(self, field):
        """Apply the operator to a field of the domain layout."""
        if field.layout != self.domain or field.model is not self.model:
            raise InvalidInputError(
                'Operator %s expects a %s field on this model, got %s.'
                % (self.name, self.domain.rank, field.layout.rank))
        return make_field(self.model, self.codomain.rank,
                          self.matvec(field.values))

    __call__ = apply

    @cached_property
    def matrix(self):
        """Materialized CSR matrix (sum of the term products)."""
        total = sparse.csr_matrix(self.shape)
        for term in self.terms:
            product = term[0]
            for factor in term[1:]:
                product = product @ factor
            total = total + product
        total = sparse.csr_matrix(total)
        total.sum_duplicates()
        logger.debug('Materialized %s: shape %s, nnz %d.', self.name,
                     total.shape, total.nnz)
        return total

    @property
    def nnz(self):
        return self.matrix.nnz

    def entries(self):
        """(row, col, value) arrays of the materialized matrix."""
        coo = self.matrix.tocoo()
        return coo.row, coo.col, coo.data

    def rows(self, index):
        """Selected rows as a CSR matrix, without materializing the rest."""
        index = np.asarray(index)
        if 'matrix' in self.__dict__:
            return self.matrix[index]
        select = sparse.csr_matrix(
            (np.ones(index.size), (np.arange(index.size), index)),
            shape=(index.size, self.codomain.size))
        total = sparse.csr_matrix((index.size, self.domain.size))
        for term in self.terms:
            product = select
            for factor in term:
                product = product @ factor
            total = total + product
        return sparse.csr_matrix(total)

    def adjoint(self, name=None):
        """Adjoint with respect to the mass-weighted inner products."""
        left = sparse.diags(1 / self.domain_mass)
        right = sparse.diags(self.codomain_mass)
        terms = []
        for term in self.terms:
            factors = [f.T.tocsr() for f in reversed(term)]
            if len(factors) == 1:
                factors = [sparse.csr_matrix(left @ factors[0] @ right)]
            else:
                factors[0] = sparse.csr_matrix(left @ factors[0])
                factors[-1] = sparse.csr_matrix(factors[-1] @ right)
            terms.append(tuple(factors))
        return SparseOperator(
            name=name or '%s*' % self.name, domain=self.codomain,
            codomain=self.domain, model=self.model, terms=tuple(terms),
            symmetric=self.symmetric)

    def compose(self, other, name=None, symmetric=False):
        """The operator self o other."""
        if other.codomain != self.domain:
            raise InvalidInputError(
                'Cannot compose %s after %s.' % (self.name, other.name))
        terms = tuple(a + b for a in self.terms for b in other.terms)
        return SparseOperator(
            name=name or '%s.%s' % (self.name, other.name),
            domain=other.domain, codomain=self.codomain, model=self.model,
            terms=terms, symmetric=symmetric)

    def plus(self, other, name=None, scale=1.0, symmetric=None):
        """The operator self + scale * other."""
        if other.domain != self.domain or other.codomain != self.codomain:
            raise InvalidInputError(
                'Cannot add %s and %s.' % (self.name, other.name))
        if symmetric is None:
            symmetric = self.symmetric and other.symmetric
        scaled = tuple((scale * t[0],) + t[1:] for t in other.terms)
        return SparseOperator(
            name=name or '%s+%s' % (self.name, other.name),
            domain=self.domain, codomain=self.codomain, model=self.model,
            terms=self.terms + scaled, symmetric=symmetric)


def _single(name, model, domain_rank, codomain_rank, matrix, symmetric=False):
    op = SparseOperator(
        name=name, domain=layout_for(model, domain_rank),
        codomain=layout_for(model, codomain_rank), model=model,
        terms=((sparse.csr_matrix(matrix),),), symmetric=symmetric)
    logger.debug('Assembled %s: shape %s.', name, op.shape)
    return op


def fourier_derivative(count, length, nyquist=True):
    """Dense spectral first-derivative matrix on a uniform periodic grid.

    With `nyquist`, on even grids the Nyquist mode is mapped to
    (count / 2) (2 pi / length) times itself instead of zero, so D^T D is the
    spectral second derivative and carries no spurious null mode. Without
    it the matrix is exactly antisymmetric.
    """
    freqs = np.fft.fftfreq(count, d=length / count) * 2 * np.pi
    if count % 2 == 0:
        freqs[count // 2] = 0.0
    dft = np.fft.fft(np.eye(count), axis=0)
    deriv = np.real(np.fft.ifft(1j * freqs[:, np.newaxis] * dft, axis=0))
    if nyquist and count % 2 == 0:
        alt = (-1.0) ** np.arange(count)
        deriv += (np.pi / length) * np.outer(alt, alt)
    return deriv


def _periodic_axis_derivative(model, axis):
    deriv = sparse.csr_matrix(fourier_derivative(
        model.resolution[axis], model.lengths[axis]))
    before = int(np.prod(model.resolution[:axis]))
    after = int(np.prod(model.resolution[axis + 1:]))
    return sparse.kron(sparse.kron(sparse.identity(before), deriv),
                       sparse.identity(after)).tocsr()


def _continued_axis_derivative(model, sign):
    """Derivative along axis 0 in skew form on the full great circle.

    Circle positions are folded back onto grid nodes by the continuation
    rule. With s the signed volume density along the circle and D its
    spectral derivative, row i is

        (d u)_i = (sum_p (s_i + s_p) D_ip u_p - (D s)_i u_i) / (2 s_i)

    so that W d + d^T W is diagonal for the weights W ~ s on the grid, and
    the mass-weighted transpose stays consistent across the poles.
    """
    cont = model.continuation
    n0 = model.resolution[0]
    step = model.spacing[0]
    count = cont.circle * n0
    density = model.axis_density((np.arange(count) + 0.5) * step)
    kernel = fourier_derivative(count, count * step, nyquist=False)[:n0]
    slope = kernel @ density
    index = np.arange(model.node_count).reshape(model.shape)
    rows, cols, vals = [], [], []
    for p in range(count):
        source, shifts, factor = cont.fold(p, n0, sign)
        target = index[source]
        for axis, shift in shifts:
            target = np.roll(target, -shift, axis=axis - 1)
        for i in range(n0):
            if i == p:
                continue
            weight = 0.5 * (density[i] + density[p]) * kernel[i, p] / density[i]
            rows.append(index[i].ravel())
            cols.append(target.ravel())
            vals.append(np.full(target.size, factor * weight))
    for i in range(n0):
        rows.append(index[i].ravel())
        cols.append(index[i].ravel())
        vals.append(np.full(index[i].size, -0.5 * slope[i] / density[i]))
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(model.node_count, model.node_count))


@lru_cache(maxsize=64)
def frame_derivatives(model, sign=1.0):
    """Scalar derivative matrices e_a(.) for every frame vector.

    Parameters
    ----------
    model : ManifoldModel
    sign : float
        Continuation sign of the differentiated components (+-1).

    Returns
    -------
    derivatives : tuple of sparse matrices (node_count x node_count)
    """
    axis_derivs = []
    for axis, periodic in enumerate(model.periodic):
        if periodic:
            axis_derivs.append(_periodic_axis_derivative(model, axis))
        else:
            axis_derivs.append(_continued_axis_derivative(model, sign))
    derivs = []
    for a in range(model.dimension):
        total = sparse.csr_matrix((model.node_count, model.node_count))
        for mu in range(model.dimension):
            coef = model.frame[:, a, mu]
            if np.any(coef):
                total = total + sparse.diags(coef) @ axis_derivs[mu]
        derivs.append(total.tocsr())
    return tuple(derivs)


def _pointwise(blocks):
    """Block-diagonal sparse matrix from per-node (rows x cols) blocks."""
    count, nrows, ncols = blocks.shape
    p, r, c = np.nonzero(blocks)
    return sparse.csr_matrix(
        (blocks[p, r, c], (p * nrows + r, p * ncols + c)),
        shape=(count * nrows, count * ncols))


def _constant(model, block):
    """The same small matrix applied at every node."""
    return sparse.kron(sparse.identity(model.node_count),
                       sparse.csr_matrix(block)).tocsr()


def _reduced(rank, index):
    """Stored component tuple of a full index tuple."""
    index = tuple(index)
    if rank == SYM2:
        return (min(index), max(index))
    return index


@lru_cache(maxsize=64)
def op_covariant_derivative(model, rank=SYM2):
    """Levi-Civita covariant derivative nabla: rank -> cotangent (x) rank.

    Parameters
    ----------
    model : ManifoldModel
    rank : str
        One of scalar, one-form, sym2.

    Returns
    -------
    op : SparseOperator
    """
    if rank not in DERIVATIVE_RANK:
        raise InvalidInputError('Covariant derivative of %s not supported.'
                                % rank)
    n = model.dimension
    in_layout = layout_for(model, rank)
    out_rank = DERIVATIVE_RANK[rank]
    in_comps = in_layout.components
    out_comps = fields.components(out_rank, n)
    per_node = in_layout.per_node

    sign = 1.0
    if model.continuation is not None:
        sign = model.continuation.sign(in_layout.order)
    derivs = frame_derivatives(model, sign)
    deriv_part = sparse.csr_matrix((model.node_count * len(out_comps),
                                    in_layout.size))
    for k in range(n):
        select = sparse.csr_matrix(
            (np.ones(per_node),
             (k * per_node + np.arange(per_node), np.arange(per_node))),
            shape=(n * per_node, per_node))
        deriv_part = deriv_part + sparse.kron(derivs[k], select)

    gamma = curvature_data(model).connection
    blocks = np.zeros((model.node_count, len(out_comps), per_node))
    for o, comp in enumerate(out_comps):
        k, index = comp[0], comp[1:]
        for slot in range(len(index)):
            for m in range(n):
                full = list(index)
                full[slot] = m
                c = in_comps.index(_reduced(rank, full))
                blocks[:, o, c] -= gamma[:, k, index[slot], m]
    matrix = deriv_part + _pointwise(blocks)
    return _single('covariant-derivative', model, rank, out_rank, matrix)


def op_gradient(model):
    """Differential of functions, df = sum_k e_k(f) e^k."""
    return op_covariant_derivative(model, SCALAR)


@lru_cache(maxsize=64)
def op_dnabla(model, degree=1):
    """Exterior covariant differential.

    degree=1 maps sym2 to lambda2-otimes-cotangent,
    (d phi)_ijk = (nabla_i phi)_jk - (nabla_j phi)_ik for i < j.
    degree=0 maps one-forms to sym2, the symmetrized covariant derivative.
    """
    n = model.dimension
    if degree == 1:
        nabla = op_covariant_derivative(model, SYM2)
        in_comps = fields.components(COT_SYM2, n)
        out_comps = fields.components(LAMBDA2, n)
        block = np.zeros((len(out_comps), len(in_comps)))
        for o, (i, j, k) in enumerate(out_comps):
            block[o, in_comps.index((i, min(j, k), max(j, k)))] += 1.0
            block[o, in_comps.index((j, min(i, k), max(i, k)))] -= 1.0
        return _single('dnabla', model, SYM2, LAMBDA2,
                       _constant(model, block) @ nabla.matrix)
    if degree == 0:
        nabla = op_covariant_derivative(model, ONE_FORM)
        in_comps = fields.components(COT_ONE_FORM, n)
        out_comps = fields.components(SYM2, n)
        block = np.zeros((len(out_comps), len(in_comps)))
        for o, (i, j) in enumerate(out_comps):
            block[o, in_comps.index((i, j))] += 0.5
            block[o, in_comps.index((j, i))] += 0.5
        return _single('dnabla0', model, ONE_FORM, SYM2,
                       _constant(model, block) @ nabla.matrix)
    raise InvalidInputError('dnabla of degree %s not supported.' % degree)


@lru_cache(maxsize=64)
def op_delta_nabla(model, degree=2):
    """Formal adjoint of op_dnabla(model, degree - 1).

    degree=2 maps lambda2-otimes-cotangent to sym2, degree=1 maps sym2 to
    one-forms. On smooth fields the degree-1 map is minus the divergence.
    """
    if degree not in (1, 2):
        raise InvalidInputError('delta_nabla of degree %s not supported.'
                                % degree)
    name = 'delta-nabla' if degree == 2 else 'delta-nabla1'
    return op_dnabla(model, degree - 1).adjoint(name=name)


@lru_cache(maxsize=64)
def op_rough(model, rank=SYM2):
    """Rough Laplacian nabla* nabla, symmetric positive semidefinite."""
    nabla = op_covariant_derivative(model, rank)
    return nabla.adjoint().compose(nabla, name='rough', symmetric=True)


def _curvature_action(model, kind):
    """Per-node (C x C) blocks of B or K on the sym2 layout."""
    n = model.dimension
    cd = curvature_data(model)
    delta = np.eye(n)
    # (T phi)_ab = sum_xy action[:, a, b, x, y] phi_xy over full components
    phi_ric = np.einsum('ax,nyb->nabxy', delta, cd.ricci)
    ric_phi = np.einsum('nax,yb->nabxy', cd.ricci, delta)
    ring = np.einsum('nyaxb->nabxy', cd.riemann)
    if kind == 'B':
        action = 0.5 * (phi_ric + ric_phi) - ring
    else:
        action = phi_ric + ric_phi - 2 * ring

    comps = fields.components(SYM2, n)
    blocks = np.zeros((model.node_count, len(comps), len(comps)))
    for o, (a, b) in enumerate(comps):
        for x in range(n):
            for y in range(n):
                blocks[:, o, sym_index(n, x, y)] += action[:, a, b, x, y]
    return blocks


@lru_cache(maxsize=64)
def op_weitzenboeck_B(model):
    """Curvature term of the Bourguignon Laplacian (pointwise)."""
    return _single('weitzenboeck-B', model, SYM2, SYM2,
                   _pointwise(_curvature_action(model, 'B')), symmetric=True)


@lru_cache(maxsize=64)
def op_weitzenboeck_K(model):
    """Curvature term of the Lichnerowicz Laplacian (pointwise)."""
    return _single('weitzenboeck-K', model, SYM2, SYM2,
                   _pointwise(_curvature_action(model, 'K')), symmetric=True)


@lru_cache(maxsize=64)
def op_bourguignon(model, mode=WEITZENBOECK):
    """Bourguignon Laplacian on symmetric bilinear forms.

    Parameters
    ----------
    model : ManifoldModel
    mode : str
        'composition' assembles delta d + d delta, 'weitzenboeck' assembles
        nabla* nabla + B. Both are self-adjoint; they agree up to the
        discretization error of the derivatives.
    """
    if mode == COMPOSITION:
        d1, delta2 = op_dnabla(model, 1), op_delta_nabla(model, 2)
        d0, delta1 = op_dnabla(model, 0), op_delta_nabla(model, 1)
        return delta2.compose(d1).plus(
            d0.compose(delta1), name='bourguignon', symmetric=True)
    if mode == WEITZENBOECK:
        return op_rough(model).plus(op_weitzenboeck_B(model),
                                    name='bourguignon')
    raise InvalidInputError('Unknown assembly mode %s.' % mode)


@lru_cache(maxsize=64)
def op_lichnerowicz(model):
    """Lichnerowicz Laplacian nabla* nabla + K."""
    return op_rough(model).plus(op_weitzenboeck_K(model), name='lichnerowicz')


@lru_cache(maxsize=64)
def op_function_laplacian(model):
    """Laplacian on functions, -div grad, positive semidefinite."""
    grad = op_gradient(model)
    return grad.adjoint().compose(grad, name='function-laplacian',
                                  symmetric=True)


@lru_cache(maxsize=64)
def op_divergence(model, rank=SYM2):
    """Divergence (div phi)_j = sum_i (nabla_i phi)_ij.

    rank=sym2 maps to one-forms, rank=one-form maps to functions.
    """
    n = model.dimension
    if rank == SYM2:
        in_comps = fields.components(COT_SYM2, n)
        block = np.zeros((n, len(in_comps)))
        for j in range(n):
            for i in range(n):
                block[j, in_comps.index((i, min(i, j), max(i, j)))] += 1.0
        out_rank = ONE_FORM
    elif rank == ONE_FORM:
        in_comps = fields.components(COT_ONE_FORM, n)
        block = np.zeros((1, len(in_comps)))
        for i in range(n):
            block[0, in_comps.index((i, i))] = 1.0
        out_rank = SCALAR
    else:
        raise InvalidInputError('Divergence of %s not supported.' % rank)
    nabla = op_covariant_derivative(model, rank)
    return _single('divergence', model, rank, out_rank,
                   _constant(model, block) @ nabla.matrix)


def build_operator(model, name, mode=WEITZENBOECK):
    """Operator by its configuration name."""
    if name == 'bourguignon':
        return op_bourguignon(model, mode)
    if name == 'lichnerowicz':
        return op_lichnerowicz(model)
    if name == 'rough':
        return op_rough(model)
    if name == 'function-laplacian':
        return op_function_laplacian(model)
    raise InvalidInputError('Unknown operator %s.' % name)


def _relative(numerator, phi):
    norm = phi.norm()
    if norm == 0:
        raise UndefinedResidualError('Residual of a zero field is undefined.')
    return numerator / norm


def codazzi_residual(phi):
    """|d phi| / |phi|; zero exactly for Codazzi tensors."""
    return _relative(op_dnabla(phi.model, 1)(phi).norm(), phi)


def harmonic_residual(phi):
    """(|d phi| / |phi|, |delta phi| / |phi|) with delta on one-form values."""
    codazzi = codazzi_residual(phi)
    return codazzi, _relative(op_delta_nabla(phi.model, 1)(phi).norm(), phi)


def K_quadratic_form_check(model, phi):
    """Two evaluations of the integral of g(K phi, phi).

    Returns
    -------
    assembled : float
        <K phi, phi> through op_weitzenboeck_K.
    principal : float
        Integral of sum_{i != j} sec(v_i ^ v_j) (l_i - l_j)^2 where l_i, v_i
        are the pointwise eigenvalues / eigenvectors of phi.
    """
    assembled = fields.inner_product_global(op_weitzenboeck_K(model)(phi), phi)
    lam, vec = np.linalg.eigh(phi.full())
    riemann = curvature_data(model).riemann
    sec = np.einsum('nabcd,nai,nbj,nci,ndj->nij', riemann, vec, vec, vec, vec,
                    optimize=True)
    gaps = (lam[:, :, np.newaxis] - lam[:, np.newaxis, :]) ** 2
    pointwise = np.sum(sec * gaps, axis=(1, 2))
    return assembled, float(np.sum(model.weights * pointwise))


def traceless_diagonal_identity(values):
    """Both sides of sum l_i^2 = (1/n) sum_{i<j} (l_i - l_j)^2.

    Parameters
    ----------
    values : sequence of float
        Principal values of a traceless form at one point.
    """
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 2:
        raise InvalidInputError('At least two principal values are required.')
    if abs(values.sum()) > 1e-12 * max(1.0, np.abs(values).sum()):
        raise InvalidInputError('Principal values %s are not traceless.'
                                % values.tolist())
    gaps = sum((values[i] - values[j]) ** 2
               for i in range(n) for j in range(i + 1, n))
    return float(np.sum(values ** 2)), float(gaps / n)


def cache_path(op, mode='', cache_dir=None):
    """Path of the matrix cache file of an operator."""
    cache_dir = cache_dir or user_cache_dir(appname='blap')
    key = compute_sha256('%s|%s|%s' % (op.model.config_hash, op.name, mode))
    return os.path.join(cache_dir, key + '.blap1')


def cached_matrix(op, mode='', cache_dir=None):
    """Materialized matrix of an operator, read from or written to the cache.

    A cache file whose layout hash or shape does not match is rebuilt.
    """
    fpath = cache_path(op, mode, cache_dir)
    if os.path.isfile(fpath):
        try:
            layout_hash, shape, rows, cols, vals = read_matrix(fpath)
        except ValueError as err:
            logger.warning('Ignoring matrix cache %s: %s', fpath, err)
        else:
            if layout_hash == op.layout_hash and shape == op.shape:
                logger.debug('Loaded %s from %s.', op.name, fpath)
                return sparse.csr_matrix((vals, (rows, cols)), shape=shape)
            logger.warning('Stale matrix cache %s.', fpath)
    rows, cols, vals = op.entries()
    write_matrix(fpath, op.layout_hash, op.shape, rows, cols, vals)
    logger.debug('Cached %s in %s.', op.name, fpath)
    return op.matrix
