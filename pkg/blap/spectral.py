"""Symmetric eigenproblems, multiplicity clustering and lower bounds.

Eigenproblems are solved in mass-scaled coordinates y = M^(1/2) x, in which
an operator that is self-adjoint for the weighted inner product becomes a
symmetric matrix. Subspaces are realized by per-node isometries in those
coordinates (trace-part, traceless). The TT space is the null space of the
divergence constraint, taken blockwise when the model has a translation
symmetry, or enforced by an orthogonal projector inside Lanczos iterations.
"""

from collections import namedtuple
from dataclasses import dataclass, field
import logging
import time

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import (ArpackNoConvergence, LinearOperator, cg,
                                 eigsh)

from blap import fields
from blap.errors import ContractViolation, InvalidInputError, SolverError
from blap.fields import SYM2, ONE_FORM, layout_for, make_field, mass_weights
from blap.manifold import (TORUS, curvature_constant, curvature_data,
                           shift_permutation, translation_symmetry)
from blap.operators import (COMPOSITION, WEITZENBOECK, op_bourguignon,
                            op_covariant_derivative, op_divergence,
                            op_function_laplacian, op_lichnerowicz,
                            op_weitzenboeck_B)


logger = logging.getLogger(__name__)

FULL = 'full'
TRACE_PART = 'trace-part'
TRACELESS = 'traceless'
TT = 'TT'
SUBSPACES = (FULL, TRACE_PART, TRACELESS, TT)

DENSE_LIMIT = 3000
BLOCK_LIMIT = 4000
SHIFT = -1.0
MAX_COUNT = 200
SYMMETRY_TOL = 1e-10
TT_FLOOR = 1e-6
SLACK_FLOOR = 1e-9
TT_TRIVIAL = 'TT space numerically trivial'

Cluster = namedtuple('Cluster', ['value', 'multiplicity', 'start'])


@dataclass
class SpectrumResult:
    """Smallest eigenpairs of an operator on a subspace.

    Attributes
    ----------
    operator : str
        Operator name.
    subspace : str
        One of `SUBSPACES`.
    eigenvalues : 1d array
        Sorted ascending.
    clusters : list of Cluster
        Clustered multiplicities.
    residuals : 1d array
        |A phi - lambda phi| / |phi| of every pair in the solved problem.
    eigenvectors : 2d array or None
        Physical field values, one column per eigenpair.
    metadata : dict
        Solver method, dimension, matrix-vector products, seed, resolution.
    flags : list of str
        Conditions worth reporting, e.g. a trivial TT space.
    """
    operator: str
    subspace: str
    eigenvalues: np.ndarray
    clusters: list
    residuals: np.ndarray
    eigenvectors: np.ndarray = None
    metadata: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    model: object = None
    rank: str = SYM2

    def eigenfield(self, i):
        """Eigenvector `i` as a field."""
        if self.eigenvectors is None:
            raise InvalidInputError('Eigenvectors were not retained.')
        return make_field(self.model, self.rank, self.eigenvectors[:, i])

    def kernel_dimension(self, threshold=1e-6):
        """Number of eigenvalues below threshold * max |eigenvalue|."""
        if not len(self.eigenvalues):
            return 0
        scale = np.max(np.abs(self.eigenvalues))
        return int(np.sum(self.eigenvalues < threshold * scale))


def cluster_multiplicities(eigenvalues, rel_tol):
    """Group sorted eigenvalues into clusters.

    Consecutive values join the current cluster while their gap is at most
    rel_tol * max(1, |previous value|). Chains are resolved greedily from
    left to right, so a run of small gaps forms one cluster even if its ends
    are further apart than the tolerance.

    Returns
    -------
    clusters : list of Cluster
        Mean value, multiplicity and index of the first member.
    """
    values = np.asarray(eigenvalues, dtype=float)
    clusters = []
    start = 0
    for i in range(1, len(values) + 1):
        if i < len(values):
            gap = values[i] - values[i - 1]
            if gap <= rel_tol * max(1.0, abs(values[i - 1])):
                continue
        clusters.append(Cluster(float(values[start:i].mean()), i - start,
                                start))
        start = i
    return clusters


def default_cluster_tol(model):
    return 1e-8 if model.kind == TORUS else 1e-2


def subspace_basis(model, layout, subspace):
    """Isometry from subspace coordinates into scaled layout coordinates.

    Returns None for the full space.
    """
    if subspace == FULL:
        return None
    if layout.rank != SYM2:
        raise InvalidInputError('Subspace %s requires a sym2 operator.'
                                % subspace)
    n = model.dimension
    comps = layout.components
    diag = [c for c, (i, j) in enumerate(comps) if i == j]
    off = [c for c, (i, j) in enumerate(comps) if i != j]
    if subspace == TRACE_PART:
        block = np.zeros((len(comps), 1))
        block[diag, 0] = 1 / np.sqrt(n)
    else:
        block = np.zeros((len(comps), len(comps) - 1))
        # Helmert basis of the diagonal vectors with zero sum
        for k in range(1, n):
            norm = np.sqrt(k * (k + 1))
            block[diag[:k], k - 1] = 1 / norm
            block[diag[k], k - 1] = -k / norm
        for col, c in enumerate(off, start=n - 1):
            block[c, col] = 1.0
    return sparse.kron(sparse.identity(model.node_count),
                       sparse.csr_matrix(block)).tocsr()


def tt_constraint(model):
    """Divergence of traceless forms in scaled coordinates.

    Maps traceless subspace coordinates of sym2 fields to mass-scaled
    one-form values; its kernel is the TT space.
    """
    layout = layout_for(model, SYM2)
    basis = subspace_basis(model, layout, TRACELESS)
    scale_sym = np.sqrt(mass_weights(model, layout))
    scale_one = np.sqrt(mass_weights(model, layout_for(model, ONE_FORM)))
    div = op_divergence(model, SYM2).matrix
    return sparse.csr_matrix(
        sparse.diags(scale_one) @ div @ sparse.diags(1 / scale_sym) @ basis)


class TTProjector:
    """Orthogonal projector onto divergence-free traceless forms.

    Acts on traceless subspace coordinates. With C the divergence constraint
    in scaled coordinates, P = I - C^T (C C^T)^+ C, the pseudo-inverse being
    applied by Jacobi-preconditioned conjugate gradients on the normal
    equations. Residuals are measured against the scale |C| |x| of the
    constraint, so vectors that are already divergence free come back
    unchanged.
    """

    def __init__(self, model, rtol=1e-10, maxiter=None):
        self.model = model
        self.rtol = rtol
        self.maxiter = maxiter
        self.basis = subspace_basis(model, layout_for(model, SYM2), TRACELESS)
        self.constraint = tt_constraint(model)
        self.constraint_t = self.constraint.T.tocsr()
        self.normal = sparse.csr_matrix(self.constraint @ self.constraint_t)
        diagonal = self.normal.diagonal()
        # largest row norm, a lower bound of |C|
        self.norm = float(np.sqrt(diagonal.max()))
        self.preconditioner = sparse.diags(
            1 / np.where(diagonal > 0, diagonal, 1.0))
        self.solves = 0
        self.cg_iterations = 0

    @property
    def size(self):
        return self.constraint.shape[1]

    def apply(self, x):
        """P x."""
        rhs = self.constraint @ x
        atol = self.rtol * self.norm * np.linalg.norm(x)
        if np.linalg.norm(rhs) <= atol:
            return x.copy()
        iterations = []
        y, info = cg(self.normal, rhs, rtol=self.rtol, atol=atol,
                     maxiter=self.maxiter, M=self.preconditioner,
                     callback=lambda _: iterations.append(1))
        self.solves += 1
        self.cg_iterations += len(iterations)
        if info != 0:
            residual = np.linalg.norm(self.normal @ y - rhs) / np.linalg.norm(rhs)
            raise SolverError(
                'Conjugate gradients did not converge on the TT constraint.',
                diagnostics={'iterations': len(iterations),
                             'relative_residual': float(residual),
                             'rtol': self.rtol, 'atol': float(atol),
                             'info': int(info),
                             'constraint_shape': list(self.constraint.shape)})
        return x - self.constraint_t @ y

    __call__ = apply

    def divergence_ratio(self, x):
        """|C x| / |x|."""
        return float(np.linalg.norm(self.constraint @ x) / np.linalg.norm(x))


def tt_projector(model, rtol=1e-10, maxiter=None):
    return TTProjector(model, rtol=rtol, maxiter=maxiter)


def traceless_samples(model, rng, samples=8):
    """Band-limited traceless fields in scaled traceless coordinates.

    Returns
    -------
    samples : (size, samples) array
    """
    layout = layout_for(model, SYM2)
    basis = subspace_basis(model, layout, TRACELESS)
    scale = np.sqrt(mass_weights(model, layout))
    columns = []
    for _ in range(samples):
        phi = fields.tracefree_part(fields.random_field(model, SYM2, rng))
        columns.append(basis.T @ (scale * phi.values))
    return np.column_stack(columns)


def tt_dimension_estimate(projector, rng, samples=8, floor=TT_FLOOR):
    """Count band-limited traceless samples that keep a TT component.

    Returns
    -------
    count : int
        Number of samples with |P phi| / |phi| > floor.
    ratios : list of float
    """
    ratios = [float(np.linalg.norm(projector(x)) / np.linalg.norm(x))
              for x in traceless_samples(projector.model, rng, samples).T]
    count = sum(1 for r in ratios if r > floor)
    logger.info('TT samples: %d of %d above %.1e.', count, samples, floor)
    return count, ratios


class ShiftBlocks:
    """Fourier blocks of operators commuting with a cyclic node shift.

    The shift T splits the nodes into orbits of `order` nodes, `members[d, r]`
    being the node reached from representative r after d shifts. A vector
    with x(T^d r) = w^(m d) u(r), w = exp(2 i pi / order), is mapped by such
    an operator to a vector of the same form, so the operator splits into
    Hermitian blocks acting on u, one per frequency m. Frequencies m and
    order - m give conjugate blocks; only m <= order / 2 are formed.
    """

    def __init__(self, model, shifts=None, order=1):
        count = model.node_count
        if order == 1:
            orbits = np.arange(count)[np.newaxis]
        else:
            orbits = np.stack([shift_permutation(model, shifts, d)
                               for d in range(order)])
        reps = np.flatnonzero(orbits.min(axis=0) == np.arange(count))
        self.model = model
        self.order = order
        self.members = orbits[:, reps]
        self.step = orbits[1] if order > 1 else orbits[0]
        if np.unique(self.members).size != count:
            raise ContractViolation(
                'Shift %s of order %d does not act freely on the nodes.'
                % (shifts, order))
        self.rep_of = np.empty(count, dtype=int)
        self.power_of = np.empty(count, dtype=int)
        for d in range(order):
            self.rep_of[self.members[d]] = np.arange(len(reps))
            self.power_of[self.members[d]] = d

    @classmethod
    def for_model(cls, model):
        shifts, order = translation_symmetry(model)
        return cls(model, shifts, order)

    @property
    def rep_count(self):
        return self.members.shape[1]

    @property
    def frequencies(self):
        return range(self.order // 2 + 1)

    def is_real(self, m):
        return m == 0 or 2 * m == self.order

    def local_index(self, per_node):
        """Global coordinates of the representative nodes."""
        return (self.members[0][:, np.newaxis] * per_node
                + np.arange(per_node)).ravel()

    def commutes(self, matvec, per_node, rng, tol=SYMMETRY_TOL):
        """Whether a matrix-vector product commutes with the shift."""
        def shift(y):
            return y.reshape(-1, per_node)[self.step].ravel()
        y = rng.standard_normal(self.model.node_count * per_node)
        ay = matvec(y)
        gap = np.linalg.norm(matvec(shift(y)) - shift(ay))
        return bool(gap <= tol * max(np.linalg.norm(ay), 1e-300))

    def blocks(self, rows, per_col):
        """Yield (m, dense block) from the representative rows of a matrix."""
        coo = rows.tocoo()
        node, comp = np.divmod(coo.col, per_col)
        local = self.rep_of[node] * per_col + comp
        power = self.power_of[node]
        shape = (rows.shape[0], self.rep_count * per_col)
        for m in self.frequencies:
            if self.is_real(m):
                data = coo.data * (-1.0) ** (power * (m > 0))
            else:
                data = coo.data * np.exp(2j * np.pi * m * power / self.order)
            yield m, sparse.coo_matrix(
                (data, (coo.row, local)), shape=shape).toarray()

    def expand(self, m, u, per_node):
        """Orthonormal real global vectors spanned by a Fourier vector."""
        phase = np.exp(2j * np.pi * m * np.arange(self.order) / self.order)
        full = np.empty((self.model.node_count, per_node), dtype=complex)
        full[self.members] = (phase[:, np.newaxis, np.newaxis]
                              * u.reshape(self.rep_count, per_node))
        full = full.ravel()
        if self.is_real(m):
            return [full.real / np.sqrt(self.order)]
        norm = np.sqrt(2.0 / self.order)
        return [norm * full.real, norm * full.imag]


class _Counter:
    """Matrix-vector product wrapper counting applications."""

    def __init__(self, func):
        self.func = func
        self.count = 0

    def __call__(self, x):
        self.count += 1
        return self.func(np.ravel(x))


def _check_symmetry(matvec, size, rng):
    x, y = rng.standard_normal(size), rng.standard_normal(size)
    ax, ay = matvec(x), matvec(y)
    lhs, rhs = float(ax @ y), float(x @ ay)
    scale = max(np.linalg.norm(ax) * np.linalg.norm(y), 1e-300)
    if abs(lhs - rhs) > SYMMETRY_TOL * scale:
        raise ContractViolation(
            'Operator is not symmetric: <Ax, y> = %.6e, <x, Ay> = %.6e.'
            % (lhs, rhs))


def eigensolve(op, count, subspace=FULL, tol=1e-10, seed=0, tt_shift=None,
               samples=8, keep_vectors=True, matrix=None):
    """Smallest eigenpairs of a self-adjoint operator on a subspace.

    Small problems are solved densely. Larger ones are split into the
    Fourier blocks of the translation symmetry of the model and every block
    is solved densely; TT spaces are then the null spaces of the divergence
    blocks. Lanczos iteration with a projected, deflated operator is the
    fallback when the blocks are too large or the symmetry check fails.

    Parameters
    ----------
    op : SparseOperator
        Operator with identical domain and codomain layouts.
    count : int
        Number of eigenpairs (at most 200).
    subspace : str
        One of full, trace-part, traceless, TT.
    tol : float
        Eigensolver tolerance (at least 1e-12).
    seed : int
        Seed of the start vector, symmetry checks and TT samples.
    tt_shift : float, optional
        Value given to the complement of the TT space by Lanczos (default
        1000 / r^2).
    samples : int
        Band-limited traceless fields used to detect a trivial TT space.
    keep_vectors : bool
        Retain eigenvectors in the result.
    matrix : sparse matrix, optional
        Materialized operator matrix (e.g. from the matrix cache).

    Returns
    -------
    result : SpectrumResult
    """
    if subspace not in SUBSPACES:
        raise InvalidInputError('Unknown subspace %s.' % subspace)
    if not 1 <= count <= MAX_COUNT:
        raise InvalidInputError('Eigenpair count %s not in [1, %d].'
                                % (count, MAX_COUNT))
    if tol < 1e-12:
        raise InvalidInputError('Tolerance %.1e is below 1e-12.' % tol)
    if op.domain != op.codomain:
        raise ContractViolation('Operator %s is not an endomorphism.' % op.name)

    started = time.perf_counter()
    model = op.model
    rng = np.random.default_rng(seed)
    scale = np.sqrt(op.domain_mass)
    basis = subspace_basis(model, op.domain, subspace)
    apply_op = op.matvec if matrix is None else (lambda x: matrix @ x)

    def scaled(y):
        if basis is None:
            return scale * apply_op(y / scale)
        return basis.T @ (scale * apply_op((basis @ y) / scale))

    size = op.domain.size if basis is None else basis.shape[1]
    per_node = size // model.node_count
    _check_symmetry(scaled, size, rng)
    metadata = {'seed': seed, 'tol': tol, 'resolution': list(model.resolution),
                'dimension': size}
    flags = []

    if size <= DENSE_LIMIT:
        blocks, method = ShiftBlocks(model), 'dense'
    else:
        blocks, method = ShiftBlocks.for_model(model), 'fourier-blocks'
        if blocks.rep_count * per_node > BLOCK_LIMIT:
            blocks, method = None, 'lanczos'
        elif not blocks.commutes(scaled, per_node, rng):
            logger.warning('%s does not commute with the translation symmetry '
                           'of %s; falling back to Lanczos.', op.name,
                           model.kind)
            blocks, method = None, 'lanczos'
    metadata['method'] = method

    if blocks is not None:
        sample_vectors = None
        if subspace == TT:
            sample_vectors = traceless_samples(model, rng, samples)
        values, vectors, residuals, tt_info = _block_solve(
            op, blocks, basis, scale, matrix, count, sample_vectors)
        metadata['blocks'] = len(blocks.frequencies)
        metadata['block_size'] = blocks.rep_count * per_node
        if tt_info is not None:
            metadata['tt_null_dimension'] = tt_info['null_dimension']
            metadata['tt_sample_ratios'] = tt_info['sample_ratios']
            if max(tt_info['sample_ratios']) <= TT_FLOOR:
                flags.append(TT_TRIVIAL)
                values, vectors, residuals = (
                    np.empty(0), np.empty((size, 0)), np.empty(0))
        else:
            residuals = np.array([
                np.linalg.norm(scaled(v) - lam * v) / np.linalg.norm(v)
                for lam, v in zip(values, vectors.T)])
    else:
        projector = None
        if subspace == TT:
            projector = tt_projector(model)
            found, ratios = tt_dimension_estimate(projector, rng, samples)
            metadata['tt_sample_ratios'] = ratios
            if found == 0:
                flags.append(TT_TRIVIAL)
            if tt_shift is None:
                tt_shift = 1000 * (curvature_constant(model) or 1.0)
            metadata['tt_shift'] = tt_shift
        if TT_TRIVIAL in flags:
            values, vectors, residuals = (
                np.empty(0), np.empty((size, 0)), np.empty(0))
        else:
            values, vectors, residuals, matvecs = _lanczos_solve(
                scaled, size, count, tol, rng, projector, tt_shift)
            metadata['matvecs'] = matvecs
            metadata['shift'] = SHIFT
            if projector is not None:
                metadata['cg_iterations'] = projector.cg_iterations
    if TT_TRIVIAL in flags:
        logger.info('%s on %s: %s.', op.name, model.kind, TT_TRIVIAL)

    physical = None
    if keep_vectors:
        full = vectors if basis is None else basis @ vectors
        physical = full / scale[:, np.newaxis]

    metadata['seconds'] = time.perf_counter() - started
    clusters = cluster_multiplicities(values, default_cluster_tol(model))
    logger.info('%s on %s (%s): %d eigenvalues, method %s, size %d, %.1f s.',
                op.name, model.kind, subspace, len(values), method, size,
                metadata['seconds'])
    return SpectrumResult(
        operator=op.name, subspace=subspace, eigenvalues=values,
        clusters=clusters, residuals=residuals, eigenvectors=physical,
        metadata=metadata, flags=flags, model=model, rank=op.domain.rank)


def _scaled_rows(op, blocks, basis, scale, matrix):
    """Rows of the scaled subspace operator at the representative nodes."""
    model = op.model
    index = blocks.local_index(op.domain.per_node)
    rows = matrix[index] if matrix is not None else op.rows(index)
    rows = sparse.diags(scale[index]) @ rows @ sparse.diags(1 / scale)
    if basis is None:
        return sparse.csr_matrix(rows)
    local = blocks.local_index(basis.shape[1] // model.node_count)
    return sparse.csr_matrix(basis[index][:, local].T @ rows @ basis)


def _block_solve(op, blocks, basis, scale, matrix, count, samples=None):
    """Lowest eigenpairs from the dense Fourier blocks of the operator.

    With `samples` (scaled traceless coordinates, one column per sample) the
    problem is restricted to the TT space, blockwise the null space of the
    divergence constraint.

    Returns
    -------
    values, vectors, residuals : arrays
        Vectors are global scaled subspace coordinates; residuals are
        measured in the blocks.
    tt : dict or None
        Null space dimension of the constraint and |P sample| / |sample| for
        every sample (TT problems only).
    """
    model = op.model
    per_node = op.domain.size // model.node_count if basis is None \
        else basis.shape[1] // model.node_count
    operator_blocks = blocks.blocks(
        _scaled_rows(op, blocks, basis, scale, matrix), per_node)
    tt = samples is not None
    if tt:
        constraint = tt_constraint(model)
        per_row = constraint.shape[0] // model.node_count
        constraint_rows = constraint[blocks.local_index(per_row)]
        sigma_max = max(
            np.linalg.svd(c, compute_uv=False).max()
            for _, c in blocks.blocks(constraint_rows, per_node))
        constraint_blocks = blocks.blocks(constraint_rows, per_node)
        # orbit Fourier coefficients, sum_d w^(-m d) x(T^d r) / sqrt(order)
        orbit = samples.reshape(model.node_count, per_node, -1)[blocks.members]
        spectra = np.fft.fft(orbit, axis=0) / np.sqrt(blocks.order)
        spectra = spectra.reshape(blocks.order, -1, samples.shape[1])
        captured = np.zeros(samples.shape[1])
        null_dimension = 0
    candidates = []
    for m, a in operator_blocks:
        if tt:
            _, c = next(constraint_blocks)
            _, sigma, vh = np.linalg.svd(c, full_matrices=True)
            rank = int(np.sum(sigma > TT_FLOOR * sigma_max))
            null = vh[rank:].conj().T
            weight = 1 if blocks.is_real(m) else 2
            null_dimension += weight * null.shape[1]
            if not null.shape[1]:
                continue
            captured += weight * np.sum(
                np.abs(null.conj().T @ spectra[m]) ** 2, axis=0)
            a = null.conj().T @ a @ null
        a = 0.5 * (a + a.conj().T)
        w, u = np.linalg.eigh(a)
        for i in range(min(count, len(w))):
            residual = np.linalg.norm(a @ u[:, i] - w[i] * u[:, i])
            vec = null @ u[:, i] if tt else u[:, i]
            candidates.append((w[i], m, vec, residual))
    candidates.sort(key=lambda item: item[0])

    values, vectors, residuals = [], [], []
    for lam, m, vec, residual in candidates:
        for v in blocks.expand(m, vec, per_node):
            if len(values) < count:
                values.append(lam)
                vectors.append(v)
                residuals.append(residual)
    size = model.node_count * per_node
    vectors = np.column_stack(vectors) if vectors else np.empty((size, 0))
    info = None
    if tt:
        ratios = np.sqrt(captured) / np.linalg.norm(samples, axis=0)
        info = {'null_dimension': int(null_dimension),
                'sample_ratios': [float(r) for r in ratios]}
    return np.array(values), vectors, np.array(residuals), info


def _lanczos_solve(scaled, size, count, tol, rng, projector, tt_shift):
    if projector is None:
        func = scaled
    else:
        def func(x):
            px = projector(x)
            return projector(scaled(px)) + tt_shift * (x - px)
    counter = _Counter(lambda x: func(x) - SHIFT * x)
    shifted = LinearOperator((size, size), matvec=counter, dtype=float)
    k = min(count + (count // 2 if projector is not None else 0), size - 2)
    try:
        values, vectors = eigsh(shifted, k=k, which='SA', tol=tol,
                                v0=rng.standard_normal(size),
                                ncv=min(size, max(2 * k + 1, 20)))
    except ArpackNoConvergence as err:
        raise SolverError(
            'Lanczos did not converge for %d eigenpairs.' % k,
            diagnostics={'converged': len(err.eigenvalues), 'requested': k,
                         'matvecs': counter.count, 'size': size})
    order = np.argsort(values)
    values, vectors = values[order] + SHIFT, vectors[:, order]
    if projector is not None:
        # drop pairs living in the deflated complement
        inside = np.array([np.linalg.norm(projector(v)) > 0.5
                           for v in vectors.T], dtype=bool)
        values, vectors = values[inside], vectors[:, inside]
    values, vectors = values[:count], vectors[:, :count]
    residuals = np.empty(len(values))
    for i, (lam, v) in enumerate(zip(values, vectors.T)):
        av = scaled(v)
        if projector is not None:
            av = projector(av)
        residuals[i] = np.linalg.norm(av - lam * v) / np.linalg.norm(v)
    return values, vectors, residuals, counter.count


@dataclass
class EigenpairCheck:
    """Bound evaluation of one eigenpair."""
    index: int
    eigenvalue: float
    trace_ratio: float
    classification: str
    bound: float
    passed: bool
    transfer_residual: float = None
    energy_residual: float = None
    lichnerowicz_residual: float = None
    note: str = ''


@dataclass
class BoundsReport:
    """Lower bounds of the spectrum and their evaluation.

    Attributes
    ----------
    n : int
    k : float
        Ricci lower bound constant, Ric >= (n - 1) k g.
    k_min : float
        Minimum sectional curvature.
    diameter : float
    lichnerowicz_bound : float
        n k.
    yang_bound : float
        (n - 1) k / 4 + pi^2 / D^2.
    traceless_bound : float
        n K_min.
    checks : list of EigenpairCheck
    slack : float
        Relative tolerance of every comparison, value >= bound - slack
        max(1, |bound|).
    slack_sources : dict
        Measurements the slack was derived from (empty when given).
    """
    n: int
    k: float
    k_min: float
    diameter: float
    lichnerowicz_bound: float
    yang_bound: float
    traceless_bound: float
    checks: list
    slack: float
    slack_sources: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def violations(self):
        return [c for c in self.checks if not c.passed]


def discretization_slack(spectrum, model, seed=0):
    """Tolerance of the bound comparisons, measured on the discretization.

    Ten times the sum of the largest relative eigen residual and the gap
    between the composition and Weitzenboeck assemblies of the Bourguignon
    Laplacian on a band-limited field, floored at SLACK_FLOOR.

    Returns
    -------
    slack : float
    sources : dict
        The measured residual and assembly gap.
    """
    phi = fields.random_field(model, SYM2, np.random.default_rng(seed))
    weitz = op_bourguignon(model, WEITZENBOECK)(phi)
    comp = op_bourguignon(model, COMPOSITION)(phi)
    gap = (comp - weitz).norm() / weitz.norm()
    residual = 0.0
    if len(spectrum.residuals):
        residual = float(np.max(spectrum.residuals)
                         / max(1.0, np.max(np.abs(spectrum.eigenvalues))))
    slack = max(10 * (gap + residual), SLACK_FLOOR)
    return slack, {'assembly_gap': float(gap), 'residual': residual}


def bounds_report(spectrum, model, trace_threshold=1e-6, kernel_threshold=1e-6,
                  slack=None):
    """Check positive eigenpairs of a sym2 spectrum against the lower bounds.

    Nonzero-trace pairs are checked against n k and the Yang bound, and their
    trace must be an eigenfunction of the function Laplacian with the same
    eigenvalue; a constant nonzero trace is a violation. Traceless pairs are
    checked against n K_min; for the Bourguignon operator the energy identity
    lambda |phi|^2 = <B phi, phi> + |nabla phi|^2 is evaluated and, on
    spheres, the Lichnerowicz Rayleigh quotient must equal lambda + n / r^2.
    """
    if spectrum.eigenvectors is None:
        raise InvalidInputError('Bounds need the eigenvectors of the spectrum.')
    if spectrum.rank != SYM2:
        raise InvalidInputError('Bounds apply to sym2 spectra only.')
    n = model.dimension
    cd = curvature_data(model)
    k, k_min = max(cd.ricci_lower, 0.0), cd.k_min
    sources = {}
    if slack is None:
        slack, sources = discretization_slack(spectrum, model)
    report = BoundsReport(
        n=n, k=k, k_min=k_min, diameter=model.diameter,
        lichnerowicz_bound=n * k,
        yang_bound=0.25 * (n - 1) * k + np.pi ** 2 / model.diameter ** 2,
        traceless_bound=n * k_min, checks=[], slack=slack,
        slack_sources=sources)

    values = spectrum.eigenvalues
    scale = np.max(np.abs(values)) if len(values) else 0.0
    laplacian = op_function_laplacian(model)
    c = curvature_constant(model)
    for i, lam in enumerate(values):
        if lam < kernel_threshold * scale:
            continue
        phi = spectrum.eigenfield(i)
        ratio = fields.trace_norm_ratio(phi)
        if ratio > trace_threshold:
            bound = max(report.lichnerowicz_bound, report.yang_bound)
            check = EigenpairCheck(i, float(lam), ratio, 'nonzero-trace', bound,
                                   _holds(lam, bound, slack))
            tr = fields.trace_field(phi)
            check.transfer_residual = (
                (laplacian(tr) - lam * tr).norm() / (lam * tr.norm()))
            mean = np.sum(model.weights * tr.values) / np.sum(model.weights)
            spread = (tr - fields.ScalarField(model, np.full(
                model.node_count, mean))).norm()
            if spread <= 1e-6 * tr.norm():
                check.passed = False
                check.note = 'constant nonzero trace'
        else:
            bound = report.traceless_bound
            check = EigenpairCheck(i, float(lam), ratio, 'traceless', bound,
                                   _holds(lam, bound, slack))
            if spectrum.operator == 'bourguignon':
                _traceless_identities(check, phi, lam, model, c)
        report.checks.append(check)
    logger.info('Bounds on %s: %d checks, %d violations.', model.kind,
                len(report.checks), len(report.violations))
    return report


def _holds(value, bound, slack):
    return bool(value >= bound - slack * max(1.0, abs(bound)))


def _traceless_identities(check, phi, lam, model, c):
    inner = fields.inner_product_global
    norm2 = inner(phi, phi)
    nabla = op_covariant_derivative(model, SYM2)(phi)
    energy = inner(op_weitzenboeck_B(model)(phi), phi) + inner(nabla, nabla)
    check.energy_residual = abs(lam * norm2 - energy) / (lam * norm2)
    if c > 0:
        mu = inner(op_lichnerowicz(model)(phi), phi) / norm2
        expected = lam + model.dimension * c
        check.lichnerowicz_residual = abs(mu - expected) / expected
