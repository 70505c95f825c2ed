"""Discrete tensor fields and the global L2 inner product.

Fields store frame components at every node in a deterministic node-major
layout. Only the independent components are stored :

  * sym2 : (i, j) with i <= j
  * lambda2-otimes-cotangent : (i, j, k) with i < j in the antisymmetric pair
  * cotangent-sym2 : (k, i, j) with i <= j (the covariant derivative of sym2)
  * cotangent-one-form : (k, j) (the covariant derivative of a one-form)

The inner product weights every stored component by its multiplicity so that
it reproduces the full contraction of symmetric slots. The antisymmetric pair
is weighted as a 2-form (sum over i < j), the normalization under which the
integral formula <Delta_B phi, phi> = |d phi|^2 + |delta phi|^2 and the
Weitzenboeck formula hold together.
"""

import csv
from dataclasses import dataclass
from functools import lru_cache
import itertools

import numpy as np

from blap.errors import InvalidInputError
from blap.manifold import ambient_frame
from blap.utils import compute_file_sha256


SCALAR = 'scalar'
ONE_FORM = 'one-form'
SYM2 = 'sym2'
LAMBDA2 = 'lambda2-otimes-cotangent'
COT_SYM2 = 'cotangent-sym2'
COT_ONE_FORM = 'cotangent-one-form'
RANKS = (SCALAR, ONE_FORM, SYM2, LAMBDA2, COT_SYM2, COT_ONE_FORM)

# number of tensor indices, used for continuation signs
ORDER = {SCALAR: 0, ONE_FORM: 1, SYM2: 2, LAMBDA2: 3, COT_SYM2: 3,
         COT_ONE_FORM: 2}


@lru_cache(maxsize=None)
def components(rank, n):
    """Ordered component index tuples of a rank in dimension n."""
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    if rank == SCALAR:
        return ((),)
    if rank == ONE_FORM:
        return tuple((i,) for i in range(n))
    if rank == SYM2:
        return tuple(pairs)
    if rank == LAMBDA2:
        return tuple((i, j, k) for i in range(n) for j in range(i + 1, n)
                     for k in range(n))
    if rank == COT_SYM2:
        return tuple((k,) + p for k in range(n) for p in pairs)
    if rank == COT_ONE_FORM:
        return tuple((k, j) for k in range(n) for j in range(n))
    raise InvalidInputError('Rank %s not supported.' % rank)


def sym_index(n, i, j):
    """Position of the sym2 component (i, j) in the reduced ordering."""
    return components(SYM2, n).index((min(i, j), max(i, j)))


def _multiplicity(rank, comp):
    if rank == SYM2 and comp[0] != comp[1]:
        return 2.0
    if rank == COT_SYM2 and comp[1] != comp[2]:
        return 2.0
    return 1.0


@dataclass(frozen=True)
class DofLayout:
    """Degree-of-freedom layout of a field.

    Index of component `c` at node `p` is `p * per_node + c`.
    """
    rank: str
    dimension: int
    node_count: int

    def __post_init__(self):
        if self.rank not in RANKS:
            raise InvalidInputError('Rank %s not supported.' % self.rank)

    @property
    def components(self):
        return components(self.rank, self.dimension)

    @property
    def per_node(self):
        return len(self.components)

    @property
    def size(self):
        return self.node_count * self.per_node

    @property
    def order(self):
        return ORDER[self.rank]

    @property
    def multiplicities(self):
        """Inner-product multiplicity of every component (per node)."""
        return np.array([_multiplicity(self.rank, c) for c in self.components])

    def index(self, node, comp):
        """Global index of a component tuple at a node."""
        return node * self.per_node + self.components.index(tuple(comp))

    def labels(self):
        """Human-readable component labels, e.g. 'phi_01'."""
        return ['c' + ''.join(str(i) for i in comp) if comp else 'f'
                for comp in self.components]


def layout_for(model, rank):
    return DofLayout(rank, model.dimension, model.node_count)


def mass_weights(model, layout):
    """Diagonal of the mass matrix: node weight times multiplicity."""
    return np.kron(model.weights, layout.multiplicities)


class Field:
    """Tensor field on a manifold model.

    Attributes
    ----------
    model : ManifoldModel
        Model the field lives on.
    layout : DofLayout
        Component layout.
    values : 1d array
        Frame components, node-major.
    """
    rank = None

    def __init__(self, model, values, layout=None):
        self.model = model
        self.layout = layout or layout_for(model, self.rank)
        values = np.asarray(values, dtype=float)
        if values.shape != (self.layout.size,):
            raise InvalidInputError(
                'Expected %d values for a %s field, got %s.'
                % (self.layout.size, self.layout.rank, values.shape))
        self.values = values

    def __repr__(self):
        return '%s(%s, nodes=%d)' % (type(self).__name__, self.model.kind,
                                     self.layout.node_count)

    @property
    def nodal(self):
        """Values as a (nodes, components) array view."""
        return self.values.reshape(self.layout.node_count, self.layout.per_node)

    def norm(self):
        return np.sqrt(inner_product_global(self, self))

    def _like(self, values):
        return make_field(self.model, self.layout.rank, values)

    def __add__(self, other):
        _check_compatible(self, other)
        return self._like(self.values + other.values)

    def __sub__(self, other):
        _check_compatible(self, other)
        return self._like(self.values - other.values)

    def __mul__(self, scalar):
        return self._like(scalar * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)


class ScalarField(Field):
    rank = SCALAR


class OneFormField(Field):
    rank = ONE_FORM


class SymFormField(Field):
    rank = SYM2

    def full(self):
        """Full symmetric (nodes, n, n) component array."""
        n = self.model.dimension
        full = np.zeros((self.layout.node_count, n, n))
        for c, (i, j) in enumerate(self.layout.components):
            full[:, i, j] = full[:, j, i] = self.nodal[:, c]
        return full


class TStar2FormField(Field):
    """T*M-valued 2-form, i.e. a section of Lambda^2 M (x) T*M.

    Full components follow omega_jik = -omega_ijk.
    """
    rank = LAMBDA2

    def full(self):
        n = self.model.dimension
        full = np.zeros((self.layout.node_count, n, n, n))
        for c, (i, j, k) in enumerate(self.layout.components):
            full[:, i, j, k] = self.nodal[:, c]
            full[:, j, i, k] = -self.nodal[:, c]
        return full


class CotangentSymField(Field):
    rank = COT_SYM2


class CotangentOneFormField(Field):
    rank = COT_ONE_FORM


_CLASSES = {cls.rank: cls for cls in (ScalarField, OneFormField, SymFormField,
                                      TStar2FormField, CotangentSymField,
                                      CotangentOneFormField)}


def make_field(model, rank, values):
    """Wrap a value vector into the field class of a rank."""
    if rank not in _CLASSES:
        raise InvalidInputError('Rank %s not supported.' % rank)
    return _CLASSES[rank](model, values)


def zeros(model, rank):
    return make_field(model, rank, np.zeros(layout_for(model, rank).size))


def _check_compatible(u, w):
    if u.model is not w.model:
        raise InvalidInputError('Fields live on different manifold models.')
    if u.layout != w.layout:
        raise InvalidInputError(
            'Layout mismatch: %s vs %s.' % (u.layout.rank, w.layout.rank))


def sample_field(model, component_functions, rank):
    """Evaluate component functions at the nodes of a model.

    Parameters
    ----------
    model : ManifoldModel
        Manifold to sample on.
    component_functions : list
        One entry per stored component, in layout order. Each entry is a
        callable taking the node coordinates (one array per axis) or a
        constant.
    rank : str
        Rank of the field.

    Returns
    -------
    field : Field
    """
    layout = layout_for(model, rank)
    if len(component_functions) != layout.per_node:
        raise InvalidInputError(
            'A %s field needs %d component functions, got %d.'
            % (rank, layout.per_node, len(component_functions)))
    coords = model.coordinates.T
    nodal = np.empty((model.node_count, layout.per_node))
    for c, func in enumerate(component_functions):
        value = func(*coords) if callable(func) else func
        nodal[:, c] = np.broadcast_to(value, (model.node_count,))
    return make_field(model, rank, nodal.ravel())


def metric_field(model):
    """The metric g (frame components delta_ij)."""
    n = model.dimension
    funcs = [1.0 if i == j else 0.0 for i, j in components(SYM2, n)]
    return sample_field(model, funcs, SYM2)


def inner_product_global(u, w):
    """Global L2 product <u, w> = sum_x weight(x) sum_c m_c u_c(x) w_c(x).

    The reduction is numpy's pairwise summation over a contiguous array, a
    fixed-order tree for a given layout.
    """
    _check_compatible(u, w)
    return float(np.sum(mass_weights(u.model, u.layout) * u.values * w.values))


def trace_field(phi):
    """Pointwise trace_g phi = sum_i phi_ii."""
    if phi.layout.rank != SYM2:
        raise InvalidInputError('Trace is defined on sym2 fields only.')
    diag = [c for c, (i, j) in enumerate(phi.layout.components) if i == j]
    return ScalarField(phi.model, phi.nodal[:, diag].sum(axis=1))


def pure_trace(f):
    """The sym2 field f * g of a scalar field f."""
    n = f.model.dimension
    nodal = np.zeros((f.model.node_count, len(components(SYM2, n))))
    for c, (i, j) in enumerate(components(SYM2, n)):
        if i == j:
            nodal[:, c] = f.values
    return SymFormField(f.model, nodal.ravel())


def tracefree_part(phi):
    """phi - (trace_g phi / n) g."""
    tr = trace_field(phi)
    return phi - pure_trace(tr * (1.0 / phi.model.dimension))


def trace_norm_ratio(phi):
    """|trace_g phi| / |phi|, used to classify eigentensors."""
    norm = phi.norm()
    if norm == 0:
        return 0.0
    return trace_field(phi).norm() / norm


def random_field(model, rank, rng, max_wavenumber=None, modes=6):
    """Random band-limited field.

    On tori every component is a random combination of `modes` grid
    harmonics with wavenumbers at most `max_wavenumber` (default: a quarter
    of the smallest resolution). On spheres the field is the restriction of
    a random ambient tensor whose entries are polynomials of degree at most
    `max_wavenumber` in the ambient coordinates, so it is smooth across the
    poles / degenerate circles.
    """
    layout = layout_for(model, rank)
    if max_wavenumber is None:
        max_wavenumber = max(1, min(model.resolution) // 4)
    nodal = np.zeros((model.node_count, layout.per_node))
    if model.continuation is None:
        for c in range(layout.per_node):
            for _ in range(modes):
                nodal[:, c] += rng.standard_normal() * _harmonic(
                    model, rng, max_wavenumber)
        return make_field(model, rank, nodal.ravel())

    points, vectors = ambient_frame(model)
    slots = list(itertools.product(range(points.shape[1]), repeat=layout.order))
    ambient = {s: _ambient_polynomial(points, rng, max_wavenumber, modes)
               for s in slots}
    for c, comp in enumerate(layout.components):
        for s in slots:
            coef = ambient[s].copy()
            for a, k in zip(comp, s):
                coef *= vectors[:, a, k]
            nodal[:, c] += coef
    return make_field(model, rank, nodal.ravel())


def _harmonic(model, rng, kmax):
    """One random periodic grid harmonic."""
    value = np.ones(model.node_count)
    for axis in range(model.dimension):
        k = rng.integers(0, kmax + 1)
        phase = rng.uniform(0, 2 * np.pi)
        value = value * np.cos(2 * np.pi * k * model.coordinates[:, axis]
                               / model.lengths[axis] + phase)
    return value


def _ambient_polynomial(points, rng, degree, modes):
    """Random polynomial of the unit ambient coordinates."""
    unit = points / np.linalg.norm(points, axis=1, keepdims=True)
    dim = unit.shape[1]
    value = np.zeros(len(unit))
    for _ in range(modes):
        powers = rng.multinomial(rng.integers(0, degree + 1), [1 / dim] * dim)
        value += rng.standard_normal() * np.prod(unit ** powers, axis=1)
    return value


def dump_field_csv(field, fpath):
    """Write a field to CSV: node_index, coordinates..., component_label, value.

    Returns the SHA-256 digest of the written file.
    """
    axes = ['x%d' % i for i in range(field.model.dimension)]
    labels = field.layout.labels()
    with open(fpath, 'w', newline='') as dst:
        writer = csv.writer(dst)
        writer.writerow(['node_index'] + axes + ['component_label', 'value'])
        for node, row in enumerate(field.nodal):
            coords = list(field.model.coordinates[node])
            for label, value in zip(labels, row):
                writer.writerow([node] + coords + [label, repr(float(value))])
    return compute_file_sha256(fpath)
