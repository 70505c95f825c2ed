"""Closed-form reference spectra and pointwise curvature actions.

Nothing here touches the operator assembly. Eigenvalues are computed with
exact rational arithmetic whenever the input allows it (tori with periods
that are integer multiples of 2 pi, spheres of rational radius).
"""

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
import itertools
from math import factorial

import numpy as np

from blap.errors import InvalidInputError
from blap.fields import SCALAR, SYM2


TORUS_FOURIER = 'torus-fourier'
SPHERE_TT = 'sphere-tt'
SPHERE_LICH_TT = 'sphere-lich-tt'
SPHERE_SCALAR = 'sphere-scalar'
CONSTANT_CURVATURE = 'constant-curvature-pointwise'


@dataclass
class OracleSpectrum:
    """Reference eigenvalues.

    Attributes
    ----------
    source : str
        Oracle tag.
    values : list of float
        Distinct eigenvalues, ascending.
    multiplicities : list of int or None
        Multiplicity of every value, None when unknown.
    """
    source: str
    values: list
    multiplicities: list = None

    def expanded(self, count=None):
        """Eigenvalues repeated by multiplicity, ascending."""
        if self.multiplicities is None:
            raise InvalidInputError('Oracle %s has no multiplicities.'
                                    % self.source)
        out = [v for v, m in zip(self.values, self.multiplicities)
               for _ in range(m)]
        return out[:count] if count is not None else out

    def nearest(self, value):
        """Oracle value closest to a computed eigenvalue."""
        values = np.asarray(self.values, dtype=float)
        return float(values[np.argmin(np.abs(values - value))])


def _two_pi_multiple(length):
    """Integer q with length = q * 2 pi, or None."""
    q = length / (2 * np.pi)
    if q > 0 and abs(q - round(q)) < 1e-12 and round(q) > 0:
        return int(round(q))
    return None


def _component_count(rank, n):
    if rank == SCALAR:
        return 1
    if rank == SYM2:
        return n * (n + 1) // 2
    raise InvalidInputError('Torus oracle supports scalar and sym2, not %s.'
                            % rank)


def oracle_torus_spectrum(periods, count, rank=SYM2):
    """Lowest eigenvalues of the flat Laplacian on a torus.

    Modes k in Z^n carry the eigenvalue sum (2 pi k_i / L_i)^2. The lattice
    box is grown until every eigenvalue below the largest one returned is
    enumerated completely.

    Parameters
    ----------
    periods : list of float
    count : int
        Number of eigenvalues (with multiplicity) to cover.
    rank : str
        scalar or sym2.
    """
    n = len(periods)
    comps = _component_count(rank, n)
    multiples = [_two_pi_multiple(L) for L in periods]
    exact = all(q is not None for q in multiples)

    def eigenvalue(k):
        if exact:
            return sum(Fraction(ki * ki, q * q) for ki, q in zip(k, multiples))
        # sorted terms: permuted modes give bitwise equal keys
        return sum(sorted((2 * np.pi * ki / L) ** 2
                          for ki, L in zip(k, periods)))

    radius = 1
    while True:
        counts = Counter(
            eigenvalue(k) for k in itertools.product(
                range(-radius, radius + 1), repeat=n))
        values = sorted(counts)
        total, cut = 0, len(values)
        for i, v in enumerate(values):
            total += counts[v] * comps
            if total >= count:
                cut = i + 1
                break
        # complete while the box sphere covers the largest value kept
        ceiling = min((2 * np.pi * (radius + 1) / L) ** 2 for L in periods)
        if total >= count and float(values[cut - 1]) < ceiling:
            break
        radius *= 2
    values = values[:cut]
    return OracleSpectrum(
        source=TORUS_FOURIER, values=[float(v) for v in values],
        multiplicities=[counts[v] * comps for v in values])


def oracle_sphere_tt(n, a_max):
    """Bourguignon TT eigenvalues a(n - 1 + a) + (n - 2) on the unit sphere."""
    _check_sphere_args(n, a_max)
    return OracleSpectrum(
        source=SPHERE_TT,
        values=[float(a * (n - 1 + a) + (n - 2)) for a in range(2, a_max + 1)])


def oracle_sphere_lich_tt(n, a_max):
    """Lichnerowicz TT eigenvalues a(n - 1 + a) + 2(n - 1) on the unit sphere."""
    _check_sphere_args(n, a_max)
    return OracleSpectrum(
        source=SPHERE_LICH_TT,
        values=[float(a * (n - 1 + a) + 2 * (n - 1))
                for a in range(2, a_max + 1)])


def _check_sphere_args(n, a_max):
    if n < 2 or a_max < 2:
        raise InvalidInputError('Sphere TT oracle needs n >= 2 and a_max >= 2.')


def oracle_sphere_scalar(n, l_max, radius=1.0):
    """Spherical harmonic spectrum l(l + n - 1) / r^2 with multiplicities."""
    if l_max < 0:
        raise InvalidInputError('l_max must be nonnegative.')
    r2 = Fraction(radius) ** 2
    values, mults = [], []
    for l in range(l_max + 1):
        values.append(float(Fraction(l * (l + n - 1)) / r2))
        mults.append((2 * l + n - 1) * factorial(l + n - 2)
                     // (factorial(l) * factorial(n - 1)))
    return OracleSpectrum(source=SPHERE_SCALAR, values=values,
                          multiplicities=mults)


def oracle_constant_curvature_pointwise(n, c, phi):
    """Closed-form curvature actions at a point of constant curvature c.

    Parameters
    ----------
    n : int
    c : float
        Sectional curvature.
    phi : (n, n) array
        Symmetric matrix of frame components.

    Returns
    -------
    b_phi, k_phi, ring_phi : (n, n) arrays
        c (n phi - tr phi g), c (2n phi - 2 tr phi g), c (tr phi g - phi).
    """
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (n, n):
        raise InvalidInputError('Expected an %dx%d matrix.' % (n, n))
    trace_g = np.trace(phi) * np.eye(n)
    ring = c * (trace_g - phi)
    return c * (n * phi - trace_g), 2 * c * (n * phi - trace_g), ring
