"""Wave-vector lattice geometry on the anisotropic torus.

Wave vectors live on ``L = kx Z x ky Z x kz Z``. A :class:`WaveVector` keeps
its integer index and the scaling, and all inner products are formed from
``kappa_i**2 * index_i * index'_i`` so they stay exact for rational kappa.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ._exact import Number, all_exact, as_number, compare, cross

__all__ = [
    "DomainScaling",
    "WaveVector",
    "PrincipalDomain",
    "UnstableEllipsoid",
    "cross_matrix",
    "principal_representative",
    "ellipsoid_lattice_points",
    "is_collinear",
    "cube_indices",
    "as_wave_vector",
]


def cross_matrix(v) -> np.ndarray:
    """Antisymmetric matrix ``hat(v)`` with ``hat(v) @ b == np.cross(v, b)``."""
    x, y, z = (float(c) for c in v)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class DomainScaling:
    """Reciprocal side lengths ``(kx, ky, kz)`` of the periodic box."""

    kappa: tuple = (Fraction(1), Fraction(1), Fraction(1))

    def __post_init__(self):
        kappa = tuple(as_number(k) for k in self.kappa)
        if len(kappa) != 3:
            raise ValueError("kappa must have three components")
        if any(k <= 0 for k in kappa):
            raise ValueError(f"kappa components must be positive, got {kappa}")
        object.__setattr__(self, "kappa", kappa)

    @property
    def exact(self) -> bool:
        return all_exact(self.kappa)

    @property
    def K(self) -> np.ndarray:
        return np.diag([float(k) for k in self.kappa])

    @property
    def kappa_sq(self) -> tuple:
        return tuple(k * k for k in self.kappa)

    def vector(self, index: Sequence[int]) -> "WaveVector":
        return WaveVector(tuple(int(i) for i in index), self)


ISOTROPIC = DomainScaling()


@dataclass(frozen=True)
class WaveVector:
    index: tuple
    scaling: DomainScaling = ISOTROPIC

    def __post_init__(self):
        idx = tuple(int(i) for i in self.index)
        if len(idx) != 3:
            raise ValueError("wave vectors have three components")
        object.__setattr__(self, "index", idx)

    @property
    def embedded(self) -> tuple:
        return tuple(k * i for k, i in zip(self.scaling.kappa, self.index))

    @property
    def vec(self) -> np.ndarray:
        return np.array([float(c) for c in self.embedded])

    @property
    def is_zero(self) -> bool:
        return self.index == (0, 0, 0)

    def dot(self, other: "WaveVector") -> Number:
        self._check_same(other)
        return sum(
            (k2 * i * j for k2, i, j in zip(self.scaling.kappa_sq, self.index, other.index)),
            Fraction(0),
        )

    @property
    def norm_sq(self) -> Number:
        return self.dot(self)

    @property
    def norm(self) -> float:
        return math.sqrt(self.norm_sq)

    def cross(self, other: "WaveVector") -> tuple:
        self._check_same(other)
        return cross(self.embedded, other.embedded)

    def __add__(self, other: "WaveVector") -> "WaveVector":
        self._check_same(other)
        return WaveVector(tuple(a + b for a, b in zip(self.index, other.index)), self.scaling)

    def __sub__(self, other: "WaveVector") -> "WaveVector":
        self._check_same(other)
        return WaveVector(tuple(a - b for a, b in zip(self.index, other.index)), self.scaling)

    def __neg__(self) -> "WaveVector":
        return WaveVector(tuple(-a for a in self.index), self.scaling)

    def __mul__(self, n: int) -> "WaveVector":
        if not isinstance(n, (int, np.integer)):
            return NotImplemented
        return WaveVector(tuple(int(n) * a for a in self.index), self.scaling)

    __rmul__ = __mul__

    def _check_same(self, other: "WaveVector") -> None:
        if other.scaling != self.scaling:
            raise ValueError("wave vectors live on different lattices")

    def __repr__(self) -> str:
        return f"WaveVector({self.index})"


def is_collinear(a: WaveVector, p: WaveVector) -> bool:
    # K is diagonal and positive, so collinearity is decided on the indices
    ai, pi = a.index, p.index
    return cross(ai, pi) == (0, 0, 0)


@dataclass(frozen=True)
class PrincipalDomain:
    """Class leaders ``a`` with ``-|p|^2/2 < a.p <= |p|^2/2``."""

    p: WaveVector

    def __post_init__(self):
        if self.p.is_zero:
            raise ValueError("p must be nonzero")

    def __contains__(self, a: WaveVector) -> bool:
        p2 = self.p.norm_sq
        ap = a.dot(self.p)
        half = p2 / 2
        scale = float(p2)
        return compare(ap, -half, scale) > 0 and compare(ap, half, scale) <= 0


@dataclass(frozen=True)
class UnstableEllipsoid:
    """Open ball ``|x| < |p|`` in embedded coordinates."""

    p: WaveVector

    @property
    def radius(self) -> float:
        return self.p.norm

    def location(self, x: WaveVector) -> str:
        """``"interior"``, ``"boundary"`` or ``"exterior"``."""
        c = compare(x.norm_sq, self.p.norm_sq, float(self.p.norm_sq))
        return {-1: "interior", 0: "boundary", 1: "exterior"}[c]

    def __contains__(self, x: WaveVector) -> bool:
        return self.location(x) == "interior"


def principal_representative(j: WaveVector, p: WaveVector) -> tuple[WaveVector, int]:
    """Split ``j = a + n p`` with ``a`` in the principal domain."""
    if p.is_zero:
        raise ValueError("p must be nonzero")
    p2 = p.norm_sq
    t = j.dot(p) / p2
    if all_exact((t,)):
        n = math.ceil(Fraction(t) - Fraction(1, 2))
    else:
        # boundary a.p == |p|^2/2 belongs to the domain
        n = math.ceil(t - 0.5 - 1e-12)
    a = j - n * p
    return a, int(n)


def _box_indices(bounds: Sequence[int]) -> np.ndarray:
    axes = [np.arange(-b, b + 1) for b in bounds]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return grid.reshape(-1, 3)


def ellipsoid_lattice_points(
    p: WaveVector,
    leaders_only: bool = False,
    include_boundary: bool = False,
) -> list[WaveVector]:
    """Nonzero lattice points strictly inside the unstable ellipsoid of ``p``.

    With ``leaders_only`` the result is restricted to class leaders: points of
    the principal domain that are not collinear with ``p``. With
    ``include_boundary`` points with ``|x| == |p|`` are returned as well.
    """
    if p.is_zero:
        raise ValueError("p must be nonzero")
    scaling = p.scaling
    radius = p.norm
    bounds = [math.ceil(radius / float(k)) for k in scaling.kappa]
    ell = UnstableEllipsoid(p)
    dom = PrincipalDomain(p)
    out = []
    for idx in _box_indices(bounds):
        if not idx.any():
            continue
        x = WaveVector(tuple(int(i) for i in idx), scaling)
        loc = ell.location(x)
        if loc == "exterior" or (loc == "boundary" and not include_boundary):
            continue
        if leaders_only and (is_collinear(x, p) or x not in dom):
            continue
        out.append(x)
    return out


def cube_indices(cutoff: int, exclude_zero: bool = True) -> np.ndarray:
    """Integer points of the cube ``|index_i| <= cutoff`` in C order."""
    idx = _box_indices([cutoff] * 3)
    if exclude_zero:
        idx = idx[np.any(idx != 0, axis=1)]
    return idx


def as_wave_vector(v, scaling: DomainScaling | None = None) -> WaveVector:
    if isinstance(v, WaveVector):
        if scaling is not None and v.scaling != scaling:
            return WaveVector(v.index, scaling)
        return v
    return WaveVector(tuple(int(i) for i in v), scaling or ISOTROPIC)
