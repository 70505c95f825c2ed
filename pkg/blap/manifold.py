"""Catalog of discretized compact Riemannian manifolds.

Three kinds of manifolds are supported: flat tori of dimension 2 and 3, the
round 2-sphere on a latitude-longitude grid and the round 3-sphere on a
Hopf-coordinate grid. Metric, frame, connection and curvature are analytic;
only derivatives of tensor components are discretized (see `blap.operators`).

Glossary of the grid vocabulary used below :

  * axis 0 of a sphere grid is the non-periodic one (theta on S2, eta on S3);
    its nodes are offset half a step from the poles / degenerate circles
  * axis 0 is one arc of a great circle; the continuation rule folds every
    position of that circle back onto the grid (reflection on axis 0 plus a
    half-turn on a periodic axis)
  * the translation symmetry is a cyclic shift of the periodic axes that
    leaves the frame unchanged, so every operator commutes with it
"""

from dataclasses import dataclass
from functools import lru_cache
import hashlib
import itertools
import json
import logging
import math

import numpy as np

from blap.errors import InvalidConfigError


logger = logging.getLogger(__name__)

TORUS = 'flat-torus'
SPHERE2 = 'round-sphere-2'
SPHERE3 = 'round-sphere-3'
KINDS = (TORUS, SPHERE2, SPHERE3)


@dataclass(frozen=True)
class Continuation:
    """Continuation rule across both ends of axis 0.

    Axis 0 is one arc of a great circle made of `circle` copies of it; every
    position of that circle maps back onto a grid node by reflecting across
    the ends of axis 0 and shifting the periodic axes.

    Attributes
    ----------
    lower_shifts : tuple of (int, int)
        (axis, index shift) pairs applied when crossing the lower end.
    upper_shifts : tuple of (int, int)
        (axis, index shift) pairs applied when crossing the upper end.
    parity : bool
        If True, frame components pick up a factor -1 per tensor index when
        continued (the polar frame reverses across a pole).
    circle : int
        Number of axis-0 arcs in the great circle through both ends.
    """
    lower_shifts: tuple
    upper_shifts: tuple
    parity: bool
    circle: int = 2

    def sign(self, order):
        """Sign factor of a tensor component of the given order."""
        if self.parity and order % 2:
            return -1.0
        return 1.0

    def fold(self, position, count, sign=1.0):
        """Grid index, periodic shifts and sign of a circle position.

        Parameters
        ----------
        position : int
            Node index along the circle; 0 .. count - 1 are the grid nodes.
        count : int
            Number of nodes along axis 0.
        sign : float
            Factor picked up at every reflection.
        """
        source, shifts, factor = position, (), 1.0
        while not 0 <= source < count:
            if source < 0:
                source, shifts = -1 - source, shifts + self.lower_shifts
            else:
                source, shifts = 2 * count - 1 - source, shifts + self.upper_shifts
            factor *= sign
        return source, shifts, factor


@dataclass(frozen=True, eq=False)
class ManifoldModel:
    """Discretized compact Riemannian manifold.

    Models are immutable and hashed by identity, so that operators assembled
    for a model can be memoized.

    Attributes
    ----------
    kind : str
        One of `KINDS`.
    dimension : int
        Manifold dimension n.
    periods : tuple of float
        Torus periods (empty for spheres).
    radius : float
        Sphere radius (None for tori).
    resolution : tuple of int
        Number of nodes along each axis.
    axes : tuple of 1d arrays
        Node coordinates along each axis.
    periodic : tuple of bool
        Whether each axis is periodic.
    lengths : tuple of float
        Coordinate period of each periodic axis, coordinate extent of the
        non-periodic one.
    coordinates : (N, n) array
        Coordinates of every node, node-major (C order over the axes).
    weights : (N,) array
        Exact quadrature weight of every node (volume units).
    frame : (N, n, n) array
        `frame[:, a, mu]` is the coefficient of the coordinate partial
        d/dx^mu in the orthonormal frame vector e_a.
    diameter : float
        Analytic diameter D(M).
    continuation : Continuation or None
        Ghost-node rule for the non-periodic axis (spheres only).
    """
    kind: str
    dimension: int
    periods: tuple
    radius: float
    resolution: tuple
    axes: tuple
    periodic: tuple
    lengths: tuple
    coordinates: np.ndarray
    weights: np.ndarray
    frame: np.ndarray
    diameter: float
    continuation: Continuation = None

    @property
    def node_count(self):
        return self.coordinates.shape[0]

    @property
    def shape(self):
        return tuple(self.resolution)

    @property
    def volume(self):
        """Analytic volume of the manifold."""
        if self.kind == TORUS:
            return float(np.prod(self.periods))
        if self.kind == SPHERE2:
            return 4 * np.pi * self.radius ** 2
        return 2 * np.pi ** 2 * self.radius ** 3

    @property
    def spacing(self):
        """Grid spacing along each axis."""
        return tuple(l / n for l, n in zip(self.lengths, self.resolution))

    def axis_density(self, t):
        """Signed volume density along the great circle through axis 0.

        Odd under the reflections of `Continuation.fold`; proportional to
        the node weights on the grid itself.
        """
        if self.kind == SPHERE2:
            return np.sin(t)
        if self.kind == SPHERE3:
            return np.sin(t) * np.cos(t)
        return np.ones_like(t)

    def describe(self):
        """JSON-serializable description of the build parameters."""
        return {
            'kind': self.kind,
            'dimension': self.dimension,
            'periods': list(self.periods),
            'radius': self.radius,
            'resolution': list(self.resolution),
        }

    @property
    def config_hash(self):
        """Hexadecimal SHA-256 of the build parameters."""
        text = json.dumps(self.describe(), sort_keys=True)
        return hashlib.sha256(text.encode('utf-8')).hexdigest()


@dataclass(frozen=True, eq=False)
class CurvatureData:
    """Analytic connection and curvature in the orthonormal frame.

    Attributes
    ----------
    connection : (N, n, n, n) array
        `connection[:, k, j, m]` is the frame component m of the covariant
        derivative of e_j along e_k.
    riemann : (N, n, n, n, n) array
        `riemann[:, i, j, k, l]` is g(R(e_i, e_j) e_l, e_k), with
        R(X, Y) = [nabla_X, nabla_Y] - nabla_[X, Y]. With this storage
        sec(e_i ^ e_j) = R_ijij.
    ricci : (N, n, n) array
        Ricci tensor, Ric_jk = sum_i R_ijik.
    sectional : (N, n, n) array
        Sectional curvature of every frame plane (zero on the diagonal).
    k_min : float
        Minimum sectional curvature over the manifold.
    ricci_lower : float
        Largest k with Ric >= (n - 1) k g.
    """
    connection: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    sectional: np.ndarray
    k_min: float
    ricci_lower: float


def _check_resolution(resolution, minimum):
    for res in resolution:
        if int(res) != res or res < minimum:
            raise InvalidConfigError(
                'Resolution %s is invalid: at least %d nodes per axis are '
                'required.' % (res, minimum))


def _grid(axes):
    """Node-major coordinates of the tensor-product grid."""
    mesh = np.meshgrid(*axes, indexing='ij')
    return np.stack([m.ravel() for m in mesh], axis=1)


def build_torus(n, periods, resolution):
    """Build a flat torus with a uniform periodic grid.

    Parameters
    ----------
    n : int
        Dimension (2 or 3).
    periods : list of float
        Period L_i of every axis.
    resolution : list of int
        Number of nodes N_i along every axis (at least 4).

    Returns
    -------
    model : ManifoldModel
    """
    if n not in (2, 3):
        raise InvalidConfigError('Torus dimension %s is not supported.' % n)
    if len(periods) != n or len(resolution) != n:
        raise InvalidConfigError(
            'A %d-torus needs %d periods and %d resolutions.' % (n, n, n))
    if any(p <= 0 for p in periods):
        raise InvalidConfigError('Torus periods must be positive.')
    _check_resolution(resolution, 4)
    periods = tuple(float(p) for p in periods)
    resolution = tuple(int(r) for r in resolution)

    axes = tuple(np.arange(res) * (per / res)
                 for per, res in zip(periods, resolution))
    coordinates = _grid(axes)
    count = coordinates.shape[0]
    weight = float(np.prod([p / r for p, r in zip(periods, resolution)]))
    frame = np.broadcast_to(np.eye(n), (count, n, n)).copy()
    model = ManifoldModel(
        kind=TORUS,
        dimension=n,
        periods=periods,
        radius=None,
        resolution=resolution,
        axes=axes,
        periodic=(True,) * n,
        lengths=periods,
        coordinates=coordinates,
        weights=np.full(count, weight),
        frame=frame,
        diameter=0.5 * float(np.sqrt(np.sum(np.square(periods)))),
    )
    logger.debug('Built %d-torus with %d nodes.', n, count)
    return model


def build_sphere2(radius, res_theta, res_phi):
    """Build the round 2-sphere on a latitude-longitude grid.

    Theta nodes sit half a step away from both poles; phi is periodic.
    Weights are exact cell integrals r^2 (cos theta_lower - cos theta_upper)
    dphi, so the total equals 4 pi r^2 to rounding. The frame is
    e_1 = (1/r) d/dtheta, e_2 = 1/(r sin theta) d/dphi.
    """
    if radius <= 0:
        raise InvalidConfigError('Sphere radius must be positive.')
    _check_resolution((res_theta, res_phi), 8)
    if res_phi % 2:
        raise InvalidConfigError(
            'res_phi must be even for the cross-pole continuation, got %d.'
            % res_phi)
    radius = float(radius)
    dtheta, dphi = np.pi / res_theta, 2 * np.pi / res_phi
    theta = (np.arange(res_theta) + 0.5) * dtheta
    phi = np.arange(res_phi) * dphi
    coordinates = _grid((theta, phi))
    count = coordinates.shape[0]

    edges = np.arange(res_theta + 1) * dtheta
    cell = radius ** 2 * (np.cos(edges[:-1]) - np.cos(edges[1:])) * dphi
    weights = np.repeat(cell, res_phi)

    sin_t = np.sin(coordinates[:, 0])
    frame = np.zeros((count, 2, 2))
    frame[:, 0, 0] = 1 / radius
    frame[:, 1, 1] = 1 / (radius * sin_t)

    half = res_phi // 2
    return ManifoldModel(
        kind=SPHERE2,
        dimension=2,
        periods=(),
        radius=radius,
        resolution=(int(res_theta), int(res_phi)),
        axes=(theta, phi),
        periodic=(False, True),
        lengths=(np.pi, 2 * np.pi),
        coordinates=coordinates,
        weights=weights,
        frame=frame,
        diameter=np.pi * radius,
        continuation=Continuation(
            lower_shifts=((1, half),), upper_shifts=((1, half),), parity=True),
    )


def build_sphere3(radius, resolution):
    """Build the round 3-sphere on a Hopf-coordinate grid.

    The metric is r^2 (deta^2 + cos^2 eta dxi1^2 + sin^2 eta dxi2^2) with
    eta in (0, pi/2). Tensor components live in the left-invariant frame of
    S3 = SU(2), in which the connection coefficients are constant; only scalar
    component functions are continued across the degenerate circles.
    """
    if radius <= 0:
        raise InvalidConfigError('Sphere radius must be positive.')
    if len(resolution) != 3:
        raise InvalidConfigError('S3 needs 3 resolutions (eta, xi1, xi2).')
    _check_resolution(resolution, 8)
    if resolution[1] % 2 or resolution[2] % 2:
        raise InvalidConfigError(
            'Periodic S3 resolutions must be even, got %s.' % (resolution,))
    radius = float(radius)
    res_eta, res_1, res_2 = (int(r) for r in resolution)
    deta = 0.5 * np.pi / res_eta
    eta = (np.arange(res_eta) + 0.5) * deta
    xi1 = np.arange(res_1) * (2 * np.pi / res_1)
    xi2 = np.arange(res_2) * (2 * np.pi / res_2)
    coordinates = _grid((eta, xi1, xi2))
    count = coordinates.shape[0]

    edges = np.arange(res_eta + 1) * deta
    cell = 0.5 * radius ** 3 * (np.sin(edges[1:]) ** 2 - np.sin(edges[:-1]) ** 2)
    weights = np.repeat(cell, res_1 * res_2) * (2 * np.pi / res_1) * (2 * np.pi / res_2)

    e, psi = coordinates[:, 0], coordinates[:, 1] - coordinates[:, 2]
    tan_e, cot_e = np.tan(e), 1 / np.tan(e)
    frame = np.zeros((count, 3, 3))
    # q -> q.i, q.j, q.k on the unit quaternions
    frame[:, 0, 1] = 1.0
    frame[:, 0, 2] = -1.0
    frame[:, 1, 0] = np.cos(psi)
    frame[:, 1, 1] = np.sin(psi) * tan_e
    frame[:, 1, 2] = np.sin(psi) * cot_e
    frame[:, 2, 0] = -np.sin(psi)
    frame[:, 2, 1] = np.cos(psi) * tan_e
    frame[:, 2, 2] = np.cos(psi) * cot_e
    frame /= radius

    return ManifoldModel(
        kind=SPHERE3,
        dimension=3,
        periods=(),
        radius=radius,
        resolution=(res_eta, res_1, res_2),
        axes=(eta, xi1, xi2),
        periodic=(False, True, True),
        lengths=(0.5 * np.pi, 2 * np.pi, 2 * np.pi),
        coordinates=coordinates,
        weights=weights,
        frame=frame,
        diameter=np.pi * radius,
        # eta -> -eta with xi2 + pi, eta -> pi - eta with xi1 + pi
        continuation=Continuation(
            lower_shifts=((2, res_2 // 2),),
            upper_shifts=((1, res_1 // 2),),
            parity=False, circle=4),
    )


def coordinate_metric(model):
    """Coordinate components g_{mu nu} of the metric at every node."""
    n, count = model.dimension, model.node_count
    metric = np.zeros((count, n, n))
    if model.kind == TORUS:
        metric[:] = np.eye(n)
    elif model.kind == SPHERE2:
        metric[:, 0, 0] = model.radius ** 2
        metric[:, 1, 1] = (model.radius * np.sin(model.coordinates[:, 0])) ** 2
    else:
        eta = model.coordinates[:, 0]
        metric[:, 0, 0] = 1.0
        metric[:, 1, 1] = np.cos(eta) ** 2
        metric[:, 2, 2] = np.sin(eta) ** 2
        metric *= model.radius ** 2
    return metric


def frame_gram(model):
    """g(e_a, e_b) at every node; the identity for an orthonormal frame."""
    return np.einsum('nam,nmk,nbk->nab', model.frame,
                     coordinate_metric(model), model.frame)


def translation_symmetry(model):
    """Cyclic node shift that commutes with every operator of the model.

    Returns
    -------
    shifts : tuple of int
        Index shift along every axis (0 on axis 0 of a sphere).
    order : int
        Number of distinct powers of the shift.
    """
    res = model.resolution
    if model.kind == SPHERE3:
        # equal angles on both circles keep xi1 - xi2, hence the frame
        order = math.gcd(res[1], res[2])
        return (0, res[1] // order, res[2] // order), order
    shifts = [0] * model.dimension
    shifts[-1] = 1
    return tuple(shifts), res[-1]


def shift_permutation(model, shifts, power=1):
    """`perm[i]` is the node reached from node i by `power` shifts."""
    index = np.arange(model.node_count).reshape(model.shape)
    for axis, shift in enumerate(shifts):
        if shift:
            index = np.roll(index, -shift * power, axis=axis)
    return index.ravel()


def ambient_frame(model):
    """Embedding of a sphere model in Euclidean space.

    Returns
    -------
    points : (N, n + 1) array
        Node positions on the sphere of radius r.
    vectors : (N, n, n + 1) array
        Ambient components of the frame vectors e_a.
    """
    if model.kind == TORUS:
        raise InvalidConfigError('A flat torus has no round embedding.')
    x, r = model.coordinates, model.radius
    if model.kind == SPHERE2:
        t, p = x[:, 0], x[:, 1]
        points = r * np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p),
                               np.cos(t)], axis=1)
        partials = r * np.stack([
            np.stack([np.cos(t) * np.cos(p), np.cos(t) * np.sin(p),
                      -np.sin(t)], axis=1),
            np.stack([-np.sin(t) * np.sin(p), np.sin(t) * np.cos(p),
                      np.zeros_like(t)], axis=1)], axis=1)
    else:
        e, a, b = x[:, 0], x[:, 1], x[:, 2]
        zero = np.zeros_like(e)
        points = r * np.stack([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a),
                               np.sin(e) * np.cos(b), np.sin(e) * np.sin(b)],
                              axis=1)
        partials = r * np.stack([
            np.stack([-np.sin(e) * np.cos(a), -np.sin(e) * np.sin(a),
                      np.cos(e) * np.cos(b), np.cos(e) * np.sin(b)], axis=1),
            np.stack([-np.cos(e) * np.sin(a), np.cos(e) * np.cos(a),
                      zero, zero], axis=1),
            np.stack([zero, zero, -np.sin(e) * np.sin(b),
                      np.sin(e) * np.cos(b)], axis=1)], axis=1)
    return points, np.einsum('nam,nmk->nak', model.frame, partials)


def levi_civita(n):
    """Totally antisymmetric symbol of order n."""
    eps = np.zeros((n,) * n)
    for perm in itertools.permutations(range(n)):
        inversions = sum(1 for i in range(n) for j in range(i + 1, n)
                         if perm[i] > perm[j])
        eps[perm] = -1.0 if inversions % 2 else 1.0
    return eps


def constant_curvature_tensor(n, c):
    """R_ijkl = c (delta_ik delta_jl - delta_il delta_jk)."""
    delta = np.eye(n)
    return c * (np.einsum('ik,jl->ijkl', delta, delta)
                - np.einsum('il,jk->ijkl', delta, delta))


def curvature_constant(model):
    """Constant sectional curvature of a catalog manifold (0 or 1/r^2)."""
    if model.kind == TORUS:
        return 0.0
    return 1.0 / model.radius ** 2


@lru_cache(maxsize=32)
def curvature_data(model):
    """Analytic connection and curvature of a catalog manifold.

    Parameters
    ----------
    model : ManifoldModel

    Returns
    -------
    curvature : CurvatureData
    """
    n, count = model.dimension, model.node_count
    c = curvature_constant(model)

    connection = np.zeros((count, n, n, n))
    if model.kind == SPHERE2:
        cot = 1 / np.tan(model.coordinates[:, 0]) / model.radius
        connection[:, 1, 0, 1] = cot    # nabla_e2 e1 = cot/r e2
        connection[:, 1, 1, 0] = -cot   # nabla_e2 e2 = -cot/r e1
    elif model.kind == SPHERE3:
        # bi-invariant metric: nabla_X Y = [X, Y] / 2 on left-invariant fields
        connection[:] = levi_civita(3) / model.radius

    riemann = np.broadcast_to(
        constant_curvature_tensor(n, c), (count,) + (n,) * 4).copy()
    ricci = np.einsum('nijik->njk', riemann)
    sectional = np.einsum('nijij->nij', riemann)
    return CurvatureData(
        connection=connection,
        riemann=riemann,
        ricci=ricci,
        sectional=sectional,
        k_min=c,
        ricci_lower=c,
    )
