"""Linearised class operators around the sinusoidal shear flow.

The equilibrium has vorticity modes ``omega_{+-p} = Gamma``. Linearising the
Fourier-mode vorticity equation couples ``j`` only to ``j +- p``, so the modes
``a + n p`` form independent classes. Each class is reduced to the rotation
invariant parameters ``(a_tilde_x, a_tilde_y, theta)``, projected onto the
divergence-free subspace and assembled as a truncated block operator

    M = [[M1 sin(theta), M3 cos(theta)],
         [0,             M2 sin(theta)]]

acting on the ``(y, z)`` components of the rotated modes ``n = -N..N``. The
physical generator is ``|Gamma| * a_tilde_y * M``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from ._exact import Number, all_exact, as_number, cross, dot, is_exact
from .lattice import (
    DomainScaling,
    WaveVector,
    as_wave_vector,
    cross_matrix,
    cube_indices,
    is_collinear,
)

__all__ = [
    "NILPOTENT_TOL",
    "NEAR_NILPOTENT_TOL",
    "TrivialClassError",
    "NilpotentClassError",
    "ShearFlowParams",
    "ReducedClassParams",
    "AlphaRhoSequence",
    "ClassOperator",
    "A_matrix",
    "chi_pm",
    "reduce_parameters",
    "alpha_rho",
    "projection_rotation",
    "reduced_chi",
    "chi_reduced_basis",
    "assemble_class_operator",
    "toeplitz_B",
    "lax_generator",
    "similarity",
    "jacobian_block",
    "full_jacobian",
]

NILPOTENT_TOL = 1e-12
NEAR_NILPOTENT_TOL = 1e-3


class TrivialClassError(ValueError):
    """Raised for class leaders collinear with ``p`` (constant modes only)."""


class NilpotentClassError(ValueError):
    """Raised when an operation needs ``sin(theta) != 0``."""


def A_matrix(j, k, x) -> np.ndarray:
    """``x (k x j)^T - (k.x) hat(k)``, the bilinear kernel of the mode equation."""
    j, k, x = (np.asarray(v, dtype=float) for v in (j, k, x))
    return np.outer(x, np.cross(k, j)) - np.dot(k, x) * cross_matrix(k)


def chi_pm(j, p, gamma, sign: int) -> np.ndarray:
    """Coupling matrix ``chi_+`` (``sign=+1``) or ``chi_-`` (``sign=-1``).

    The linearised equations read
    ``mu_j' = chi_+(j+p) mu_{j+p} + chi_-(j-p) mu_{j-p}``.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    j, p, gamma = (np.asarray(v, dtype=float) for v in (j, p, gamma))
    j2 = j @ j
    if j2 == 0:
        raise ValueError("chi is undefined for j = 0")
    p2 = p @ p
    chi_a = -(j @ gamma) / j2 * cross_matrix(j) - np.outer(np.cross(p, gamma), p) / p2
    chi_b = np.outer(gamma, np.cross(j, p)) / j2 + (gamma @ np.cross(p, j)) / p2 * np.eye(3)
    return chi_a + sign * chi_b


@dataclass(frozen=True)
class ShearFlowParams:
    """Steady state ``omega_{+-p} = Gamma`` on the lattice of ``p``."""

    p: WaveVector
    gamma: tuple

    def __post_init__(self):
        gamma = tuple(as_number(g) for g in self.gamma)
        if len(gamma) != 3:
            raise ValueError("Gamma must have three components")
        object.__setattr__(self, "gamma", gamma)
        if self.p.is_zero:
            raise ValueError("p must be nonzero")
        if all(g == 0 for g in gamma):
            raise ValueError("Gamma must be nonzero")
        pg = dot(self.p.embedded, gamma)
        if is_exact(pg):
            ok = pg == 0
        else:
            ok = abs(pg) <= 1e-12 * self.p.norm * self.gamma_norm
        if not ok:
            raise ValueError(f"divergence condition violated: p.Gamma = {float(pg):.3g}")

    @classmethod
    def from_indices(cls, p, gamma, kappa=(1, 1, 1)) -> "ShearFlowParams":
        return cls(WaveVector(tuple(p), DomainScaling(tuple(kappa))), tuple(gamma))

    @property
    def scaling(self) -> DomainScaling:
        return self.p.scaling

    @property
    def exact(self) -> bool:
        return self.scaling.exact and all_exact(self.gamma)

    @property
    def gamma_vec(self) -> np.ndarray:
        return np.array([float(g) for g in self.gamma])

    @property
    def gamma_norm(self) -> float:
        return float(np.linalg.norm(self.gamma_vec))

    @property
    def axis(self) -> Optional[int]:
        """Index of the coordinate axis ``p`` is aligned with, if any."""
        nz = [i for i, c in enumerate(self.p.index) if c != 0]
        return nz[0] if len(nz) == 1 else None

    @property
    def psi(self) -> Optional[float]:
        """Angle of Gamma in the plane orthogonal to an axis-aligned ``p``.

        For ``p`` along x this is ``Gamma = |Gamma| (0, cos psi, sin psi)``;
        other axes use the cyclic successor pair.
        """
        ax = self.axis
        if ax is None:
            return None
        g = self.gamma_vec
        u, v = (ax + 1) % 3, (ax + 2) % 3
        return math.atan2(g[v], g[u])

    def wave(self, index) -> WaveVector:
        return as_wave_vector(index, self.scaling)

    def reduce(self, a) -> "ReducedClassParams":
        return reduce_parameters(self.wave(a), self.p, self.gamma)


@dataclass(frozen=True)
class ReducedClassParams:
    p_norm: float
    a_tilde_x: Number
    a_tilde_y: float
    gamma_norm: float
    theta: float
    sin_theta: float
    cos_theta: float
    a_tilde_y_sq: Number = None
    triple_product: float = float("nan")
    tier: str = "none"
    basis: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.a_tilde_y_sq is None:
            object.__setattr__(self, "a_tilde_y_sq", float(self.a_tilde_y) ** 2)

    @classmethod
    def from_values(cls, a_tilde_x, a_tilde_y, theta, gamma_norm=1.0, p_norm=1.0):
        """Build a class directly from reduced coordinates (no lattice)."""
        s, c = math.sin(theta), math.cos(theta)
        tier = _tier(abs(s))
        if tier == "exact":
            s, c = 0.0, math.copysign(1.0, c)
        return cls(
            p_norm=float(p_norm),
            a_tilde_x=a_tilde_x,
            a_tilde_y=float(a_tilde_y),
            gamma_norm=float(gamma_norm),
            theta=math.atan2(s, c) % (2 * math.pi),
            sin_theta=s,
            cos_theta=c,
            a_tilde_y_sq=float(a_tilde_y) ** 2,
            triple_product=abs(s),
            tier=tier,
        )

    @property
    def nilpotent(self) -> bool:
        return self.tier == "exact"

    @property
    def near_nilpotent(self) -> bool:
        return self.tier == "near"

    @property
    def eta(self) -> Optional[float]:
        """``cot(theta)``; ``None`` for nilpotent classes."""
        if self.nilpotent:
            return None
        return self.cos_theta / self.sin_theta

    @property
    def scale(self) -> float:
        """Time scale ``|Gamma| a_tilde_y`` of the physical class generator."""
        return self.gamma_norm * self.a_tilde_y

    @property
    def exact(self) -> bool:
        return all_exact((self.a_tilde_x, self.a_tilde_y_sq))


def _tier(normalized: float) -> str:
    if normalized < NILPOTENT_TOL:
        return "exact"
    if normalized < NEAR_NILPOTENT_TOL:
        return "near"
    return "none"


def reduce_parameters(a: WaveVector, p: WaveVector, gamma) -> ReducedClassParams:
    """Rotation invariant parameters of the class led by ``a``.

    Builds the orthonormal frame ``e_x ~ p``, ``e_y ~ a - (a.p/p.p) p``,
    ``e_z ~ p x a`` and checks that ``p``, ``a`` and ``Gamma`` take the
    normal form ``(|p|,0,0)``, ``|p|(ax, ay, 0)``, ``|Gamma|(0, cos, sin)``.
    """
    gamma = tuple(as_number(g) for g in gamma)
    if is_collinear(a, p):
        raise TrivialClassError(f"class leader {a.index} is collinear with p={p.index}: trivial class")
    p2 = p.norm_sq
    ap = a.dot(p)
    a2 = a.norm_sq
    a_tilde_x = ap / p2
    # Lagrange identity keeps |a x p|^2 exact
    axp_sq = a2 * p2 - ap * ap
    a_tilde_y_sq = axp_sq / (p2 * p2)
    a_tilde_y = math.sqrt(a_tilde_y_sq)
    pv, av, gv = p.vec, a.vec, np.array([float(g) for g in gamma])
    gnorm = float(np.linalg.norm(gv))
    pxa_exact = cross(p.embedded, a.embedded)
    triple = dot(gamma, pxa_exact)
    pxa_norm = math.sqrt(axp_sq)
    normalized = abs(float(triple)) / (gnorm * pxa_norm)
    if is_exact(triple) and triple == 0:
        tier = "exact"
    else:
        tier = _tier(normalized)
    sin_t = float(triple) / (gnorm * pxa_norm)
    cos_t = float(dot(gamma, a.embedded)) * math.sqrt(p2) / (gnorm * pxa_norm)
    if tier == "exact":
        sin_t, cos_t = 0.0, math.copysign(1.0, cos_t)
    theta = math.atan2(sin_t, cos_t) % (2 * math.pi)

    vy = av - float(a_tilde_x) * pv
    e_x = pv / np.linalg.norm(pv)
    e_y = vy / np.linalg.norm(vy)
    pxa = np.cross(pv, av)
    e_z = pxa / np.linalg.norm(pxa)
    basis = np.column_stack([e_x, e_y, e_z])
    return ReducedClassParams(
        p_norm=math.sqrt(p2),
        a_tilde_x=a_tilde_x,
        a_tilde_y=a_tilde_y,
        gamma_norm=gnorm,
        theta=theta,
        sin_theta=sin_t,
        cos_theta=cos_t,
        a_tilde_y_sq=a_tilde_y_sq,
        triple_product=normalized,
        tier=tier,
        basis=basis,
    )


@dataclass(frozen=True)
class AlphaRhoSequence:
    """``alpha_n = |a + n p| / |p|`` and ``rho_n = 1 - 1/alpha_n^2``.

    Entries cover ``n = -N-1 .. N+1``; ``alpha_sq`` and ``rho`` hold exact
    Fractions when the class parameters are exact.
    """

    N: int
    alpha_sq: tuple
    rho: tuple

    @property
    def indices(self) -> range:
        return range(-self.N - 1, self.N + 2)

    def _pos(self, n: int) -> int:
        if not -self.N - 1 <= n <= self.N + 1:
            raise IndexError(f"n={n} outside [-{self.N + 1}, {self.N + 1}]")
        return n + self.N + 1

    def rho_at(self, n: int) -> Number:
        return self.rho[self._pos(n)]

    def alpha_sq_at(self, n: int) -> Number:
        return self.alpha_sq[self._pos(n)]

    def alpha_at(self, n: int) -> float:
        return math.sqrt(self.alpha_sq_at(n))

    @property
    def alpha(self) -> np.ndarray:
        return np.sqrt(np.array([float(x) for x in self.alpha_sq]))

    @property
    def rho_array(self) -> np.ndarray:
        return np.array([float(x) for x in self.rho])


def alpha_rho(params: ReducedClassParams, N: int) -> AlphaRhoSequence:
    if N < 1:
        raise ValueError("truncation N must be >= 1")
    if not params.a_tilde_y_sq > 0:
        raise TrivialClassError("a_tilde_y must be positive")
    ax, ay2 = params.a_tilde_x, params.a_tilde_y_sq
    alpha_sq = tuple((ax + n) ** 2 + ay2 for n in range(-N - 1, N + 2))
    one = Fraction(1) if params.exact else 1.0
    rho = tuple(one - one / s for s in alpha_sq)
    return AlphaRhoSequence(N=N, alpha_sq=alpha_sq, rho=rho)


def projection_rotation(params: ReducedClassParams, n: int) -> np.ndarray:
    """Rotation ``R(n)`` whose first column is the unit vector along ``a + n p``.

    Coordinates are those of the reduced frame. The divergence-free
    condition for mode ``n`` becomes ``(R(n)^T mu_n)_x = 0``.
    """
    ax, ay = float(params.a_tilde_x) + n, params.a_tilde_y
    al = math.hypot(ax, ay)
    return np.array([[ax / al, -ay / al, 0.0], [ay / al, ax / al, 0.0], [0.0, 0.0, 1.0]])


def chi_reduced_basis(params: ReducedClassParams, n: int, sign: int) -> np.ndarray:
    """``chi_{+-}(a + n p)`` evaluated in the reduced frame (3x3)."""
    P = params.p_norm
    p = np.array([P, 0.0, 0.0])
    a = P * np.array([float(params.a_tilde_x), params.a_tilde_y, 0.0])
    g = params.gamma_norm * np.array([0.0, params.cos_theta, params.sin_theta])
    return chi_pm(a + n * p, p, g, sign)


def reduced_chi(params: ReducedClassParams, n: int, sign: int) -> np.ndarray:
    """2x2 coupling of the ``(y, z)`` rotated components of a class."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    ax, ay = float(params.a_tilde_x), params.a_tilde_y
    al_n = math.hypot(ax + n, ay)
    al_m = math.hypot(ax + n - sign, ay)
    s, c = params.sin_theta, params.cos_theta
    diag = np.array([[sign * al_n * al_m, 0.0], [0.0, sign * (al_n**2 - 1.0)]])
    upper = np.array([[0.0, al_m], [0.0, 0.0]])
    return params.gamma_norm * ay / al_n**2 * (diag * s + upper * c)


FORMS = ("raw", "tilde_eta", "tilde_zero")


@dataclass(frozen=True, eq=False)
class ClassOperator:
    """Truncated class operator on modes ``n = -N..N``.

    ``M1``, ``M2``, ``M3`` are the raw blocks for ``form="raw"`` and the
    transformed blocks (constant ``+-1`` block, ``rho`` block, ``2/alpha^2``
    coupling) for the tilde forms. ``assembled`` excludes the time scale
    ``scale = |Gamma| a_tilde_y``; ``physical`` includes it.
    """

    params: ReducedClassParams
    N: int
    form: str
    M1: np.ndarray
    M2: np.ndarray
    M3: np.ndarray
    assembled: np.ndarray
    eta: Optional[float]
    scale: float

    @property
    def physical(self) -> np.ndarray:
        return self.scale * self.assembled

    @property
    def size(self) -> int:
        return 2 * self.N + 1

    @property
    def nilpotent(self) -> bool:
        return self.params.nilpotent


def _tridiag(sub, sup) -> np.ndarray:
    return np.diag(sup, 1) + np.diag(sub, -1)


def assemble_class_operator(
    params: ReducedClassParams,
    N: int,
    form: str = "raw",
    eta: Optional[float] = None,
) -> ClassOperator:
    """Assemble the truncated class operator.

    ``form="raw"`` is the projected operator itself. ``"tilde_eta"`` is its
    conjugate by ``[[T, eta T], [0, I]]`` with ``T = diag(alpha_n)``, which
    leaves a constant antisymmetric block and a coupling ``eta * M3``;
    ``"tilde_zero"`` drops the coupling. ``eta`` defaults to ``cot(theta)``
    and may be overridden to trace the isospectral family at fixed
    ``sin(theta)``. Couplings to modes outside ``-N..N`` are dropped.
    """
    if form not in FORMS:
        raise ValueError(f"form must be one of {FORMS}")
    seq = alpha_rho(params, N)
    al = seq.alpha[1:-1]  # n = -N..N
    rho = 1.0 - 1.0 / al**2
    m = 2 * N + 1
    s, c = params.sin_theta, params.cos_theta
    Z = np.zeros((m, m))
    if form == "raw":
        M1 = _tridiag(-al[1:] / al[:-1], al[:-1] / al[1:])
        M2 = _tridiag(-rho[:-1], rho[1:])
        M3 = _tridiag(al[1:] / al[:-1] ** 2, al[:-1] / al[1:] ** 2)
        assembled = np.block([[M1 * s, M3 * c], [Z, M2 * s]])
        used_eta = params.eta
    else:
        if params.nilpotent:
            raise NilpotentClassError("nilpotent class: tilde form undefined")
        M1 = _tridiag(-np.ones(m - 1), np.ones(m - 1))
        M2 = _tridiag(-rho[:-1], rho[1:])
        M3 = np.diag(2.0 / al[1:] ** 2, 1)
        used_eta = params.eta if eta is None else float(eta)
        coupling = used_eta if form == "tilde_eta" else 0.0
        assembled = np.block([[M1, coupling * M3], [Z, M2]]) * s
    return ClassOperator(
        params=params,
        N=N,
        form=form,
        M1=M1,
        M2=M2,
        M3=M3,
        assembled=assembled,
        eta=used_eta,
        scale=params.scale,
    )


def toeplitz_B(N: int) -> np.ndarray:
    """Toeplitz matrix ``B_ij = b_{j-i}`` with ``b_{2k} = +1`` (k > 0),
    ``b_{2k} = -1`` (k <= 0) and zero at odd offsets."""
    if N < 1:
        raise ValueError("N must be >= 1")
    m = 2 * N + 1
    d = np.subtract.outer(np.arange(m), np.arange(m)).T  # d[i, j] = j - i
    B = np.where(d % 2 == 0, np.where(d > 0, 1.0, -1.0), 0.0)
    return B


def lax_generator(N: int) -> np.ndarray:
    """Block generator ``[[0, B], [0, 0]]`` of the eta-deformation."""
    m = 2 * N + 1
    Z = np.zeros((m, m))
    return np.block([[Z, toeplitz_B(N)], [Z, Z]])


def similarity(eta: float, N: int) -> np.ndarray:
    """``exp(eta * lax_generator(N)) = [[I, eta B], [0, I]]`` (nilpotent series)."""
    m = 2 * N + 1
    I, Z = np.eye(m), np.zeros((m, m))
    return np.block([[I, eta * toeplitz_B(N)], [Z, I]])


def jacobian_block(j, k, flow: ShearFlowParams) -> np.ndarray:
    """Block ``d(omega_j')/d(omega_k)`` of the full linearisation at the equilibrium."""
    j, k = flow.wave(j), flow.wave(k)
    if k.is_zero or j.is_zero:
        return np.zeros((3, 3))
    d = k - j
    if d == flow.p:
        return chi_pm(k.vec, flow.p.vec, flow.gamma_vec, +1)
    if d == -flow.p:
        return chi_pm(k.vec, flow.p.vec, flow.gamma_vec, -1)
    return np.zeros((3, 3))


def full_jacobian(flow: ShearFlowParams, cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense linearisation on the cube ``|index_i| <= cutoff`` without mode 0.

    Returns ``(indices, J)``; mode ``m`` occupies rows ``3m:3m+3`` and the
    ordering matches :func:`eulerstab.dynamics.mode_indices`.
    """
    idx = cube_indices(cutoff)
    pos = {tuple(map(int, r)): m for m, r in enumerate(idx)}
    J = np.zeros((3 * len(idx), 3 * len(idx)))
    pidx = np.array(flow.p.index)
    for m, row in enumerate(idx):
        for sign in (1, -1):
            k = tuple(int(x) for x in row + sign * pidx)
            col = pos.get(k)
            if col is None:
                continue
            J[3 * m : 3 * m + 3, 3 * col : 3 * col + 3] = jacobian_block(tuple(row), k, flow)
    return idx, J
