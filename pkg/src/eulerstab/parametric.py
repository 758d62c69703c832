"""Coplanar (nilpotent) classes and how closely a flow sits to one.

A class is nilpotent when ``Gamma``, ``p`` and ``a`` are coplanar. Whether a
flow has such a class depends on whether the plane ``n . a = 0`` with
``n = Gamma x p`` holds a lattice point independent of ``p``, which in turn
depends on the rationality of the direction of ``Gamma``. Floats cannot
certify irrationality, so every statement here is bounded by a search box or
a denominator cap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from ._exact import all_exact, as_number, cross, dot, is_exact
from .lattice import (
    WaveVector,
    _box_indices,
    as_wave_vector,
    is_collinear,
    principal_representative,
)
from .linearization import NEAR_NILPOTENT_TOL, NILPOTENT_TOL, ShearFlowParams

__all__ = [
    "CoplanarityResult",
    "PlaneLattice",
    "RationalityResult",
    "ParametricWitness",
    "DiophantineEstimate",
    "WitnessSearchError",
    "coplanarity_test",
    "plane_lattice_rank",
    "rationality",
    "parametric_witness",
    "approximability",
    "near_nilpotent_growth",
]

PLANE_TOL = 1e-10
DEFAULT_DENOMINATOR_BOUND = 10**6


@dataclass(frozen=True)
class CoplanarityResult:
    tier: str  # "exact", "near" or "none"
    value: float


def coplanarity_test(a: WaveVector, p: WaveVector, gamma, tol: float = NILPOTENT_TOL,
                     near_tol: float = NEAR_NILPOTENT_TOL) -> CoplanarityResult:
    """Normalised triple product ``|Gamma.(p x a)| / (|Gamma| |p x a|)`` with a tier tag."""
    if is_collinear(a, p):
        raise ValueError(f"class leader {a.index} is collinear with p: trivial class")
    gamma = tuple(as_number(g) for g in gamma)
    pxa = cross(p.embedded, a.embedded)
    triple = dot(gamma, pxa)
    gn = math.sqrt(sum(float(g) ** 2 for g in gamma))
    value = abs(float(triple)) / (gn * math.sqrt(sum(float(c) ** 2 for c in pxa)))
    if (is_exact(triple) and triple == 0) or value < tol:
        return CoplanarityResult("exact", value if not is_exact(triple) else 0.0)
    if value < near_tol:
        return CoplanarityResult("near", value)
    return CoplanarityResult("none", value)


@dataclass(frozen=True)
class PlaneLattice:
    """Lattice solutions of ``n . a = 0`` found in ``|index_i| <= box``.

    ``basis`` always starts with ``p``; rank 2 adds the shortest solution
    independent of ``p``. ``certified`` is true when the decision was made
    in exact arithmetic.
    """

    normal: tuple
    rank: int
    basis: tuple
    box: int
    certified: bool
    residual: float = 0.0

    @property
    def witness(self) -> Optional[tuple]:
        return self.basis[1] if self.rank == 2 else None


def _integer_coefficients(coeffs) -> Optional[list]:
    """Scale exact rational coefficients to coprime integers."""
    if not all_exact(coeffs):
        return None
    fr = [Fraction(c) for c in coeffs]
    lcm = 1
    for f in fr:
        lcm = lcm * f.denominator // math.gcd(lcm, f.denominator)
    ints = [int(f * lcm) for f in fr]
    g = 0
    for v in ints:
        g = math.gcd(g, abs(v))
    return [v // g for v in ints] if g else ints


def _order_key(idx: np.ndarray) -> np.ndarray:
    # shortest first (max-norm, then squared length), ties broken lexicographically
    return np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0], (idx**2).sum(1), np.abs(idx).max(1)))


def plane_lattice_rank(p: WaveVector, gamma, box: int) -> PlaneLattice:
    """Rank of the lattice of coplanar class leaders within ``|index_i| <= box``."""
    if box < 1:
        raise ValueError("box must be >= 1")
    gamma = tuple(as_number(g) for g in gamma)
    n = cross(gamma, p.embedded)
    # n . (K a) = sum (n_i kappa_i) a_i
    coeffs = [ni * ki for ni, ki in zip(n, p.scaling.kappa)]
    idx = _box_indices([box] * 3)
    pidx = np.array(p.index)
    indep = np.any(np.cross(idx, pidx) != 0, axis=1)
    ints = _integer_coefficients(coeffs)
    if ints is not None and max(abs(v) for v in ints) * box * 3 < 2**62:
        vals = idx @ np.array(ints, dtype=np.int64)
        hit = (vals == 0) & indep
        certified = True
        residual = 0.0
    else:
        cf = np.array([float(c) for c in coeffs])
        emb = idx * np.array([float(k) for k in p.scaling.kappa])
        lhs = np.abs(idx @ cf)
        scale = np.linalg.norm(cf / np.array([float(k) for k in p.scaling.kappa])) * np.linalg.norm(emb, axis=1)
        hit = (lhs < PLANE_TOL * scale) & indep
        certified = False
        residual = float(np.min(lhs[indep] / scale[indep])) if indep.any() else float("inf")
    basis = (tuple(int(x) for x in pidx),)
    if hit.any():
        cand = idx[hit]
        best = cand[_order_key(cand)[0]]
        basis = basis + (tuple(int(x) for x in best),)
    return PlaneLattice(
        normal=tuple(float(x) for x in n),
        rank=len(basis),
        basis=basis,
        box=box,
        certified=certified,
        residual=residual if not hit.any() else 0.0,
    )


@dataclass(frozen=True)
class RationalityResult:
    """``status`` is ``"rational"`` or ``"irrational at bound"``; never a bare bool."""

    status: str
    bound: int
    approximation: Fraction
    error: float

    @property
    def rational(self) -> bool:
        return self.status == "rational"

    def describe(self) -> str:
        if self.rational:
            return f"rational ({self.approximation})"
        return f"irrational at bound {self.bound}"


def rationality(x, bound: int = DEFAULT_DENOMINATOR_BOUND) -> RationalityResult:
    """Continued-fraction rationality test with denominator cap ``bound``.

    Exact input is rational by construction. A float counts as rational only
    if a fraction with denominator <= ``bound`` reproduces it to a few ulps.
    """
    if bound < 1:
        raise ValueError("bound must be >= 1")
    x = as_number(x)
    if is_exact(x):
        return RationalityResult("rational", bound, Fraction(x), 0.0)
    if not math.isfinite(x):
        raise ValueError("rationality test needs a finite number")
    approx = Fraction(x).limit_denominator(bound)
    err = abs(x - float(approx))
    if err <= 4 * np.finfo(float).eps * max(abs(x), 1.0):
        return RationalityResult("rational", bound, approx, err)
    return RationalityResult("irrational at bound", bound, approx, err)


class WitnessSearchError(RuntimeError):
    def __init__(self, message: str, best: Optional["ParametricWitness"] = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class ParametricWitness:
    """Nearby steady state with a coplanar class.

    ``direction`` is an exact (when the lattice scaling is rational) vector
    along ``Gamma'``; ``gamma_perturbed`` has the same norm as ``Gamma``.
    ``denominator`` is the max-norm shell of the search where the witness
    was found.
    """

    gamma: tuple
    gamma_perturbed: tuple
    direction: tuple
    witness: tuple
    delta: float
    epsilon: float
    denominator: int
    box: int

    def perturbed_flow(self, flow: ShearFlowParams) -> ShearFlowParams:
        """Flow along the exact direction (its norm does not affect coplanarity)."""
        return ShearFlowParams(flow.p, self.direction)


def _coplanar_direction(p: WaveVector, a_emb) -> tuple:
    # component of K a orthogonal to p, scaled by |p|^2: p (p.Ka) - Ka |p|^2
    pe = p.embedded
    pa = dot(pe, a_emb)
    p2 = dot(pe, pe)
    return tuple(pi * pa - ai * p2 for pi, ai in zip(pe, a_emb))


def parametric_witness(flow: ShearFlowParams, epsilon: float, box: int = 200) -> ParametricWitness:
    """Closest-shell steady state within ``epsilon * |Gamma|`` that has a coplanar class.

    Shells ``max|index| = s`` are scanned for ``s = 1..box``; in the first
    shell holding an admissible class the one minimising ``|Gamma' - Gamma|``
    wins. Only the direction of ``Gamma`` inside ``p``-perp changes.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    p = flow.p
    gv = flow.gamma_vec
    gn = flow.gamma_norm
    lattice = plane_lattice_rank(p, flow.gamma, min(box, 8))
    if lattice.rank == 2:
        a, _ = principal_representative(as_wave_vector(lattice.witness, p.scaling), p)
        return ParametricWitness(
            gamma=tuple(float(g) for g in gv),
            gamma_perturbed=tuple(float(g) for g in gv),
            direction=flow.gamma,
            witness=a.index,
            delta=0.0,
            epsilon=epsilon,
            denominator=max(abs(c) for c in lattice.witness),
            box=lattice.box,
        )
    kap = np.array([float(k) for k in p.scaling.kappa])
    pv = p.vec
    p2 = pv @ pv
    pidx = np.array(p.index)
    best = None
    tol = epsilon * gn
    for s in range(1, box + 1):
        idx = _box_indices([s] * 3)
        idx = idx[np.abs(idx).max(1) == s]
        idx = idx[np.any(np.cross(idx, pidx) != 0, axis=1)]
        if len(idx) == 0:
            continue
        emb = idx * kap
        g = np.outer(emb @ pv, pv) - emb * p2
        g /= np.linalg.norm(g, axis=1)[:, None]
        g *= np.where(g @ gv >= 0, 1.0, -1.0)[:, None]
        delta = np.linalg.norm(gn * g - gv, axis=1)
        order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0], delta))
        k = order[0]
        if best is None or delta[k] < best[0]:
            best = (float(delta[k]), tuple(int(x) for x in idx[k]), gn * g[k], s)
        if delta[k] <= tol:
            return _make_witness(flow, best, epsilon, box)
    raise WitnessSearchError(
        f"no coplanar class within epsilon={epsilon} in box {box}",
        _make_witness(flow, best, epsilon, box) if best else None,
    )


def _make_witness(flow: ShearFlowParams, best, epsilon: float, box: int) -> ParametricWitness:
    delta, a_idx, gp, s = best
    p = flow.p
    a = as_wave_vector(a_idx, p.scaling)
    direction = _coplanar_direction(p, a.embedded)
    if dot(direction, flow.gamma) < 0:
        direction = tuple(-d for d in direction)
    lead, _ = principal_representative(a, p)
    return ParametricWitness(
        gamma=tuple(float(g) for g in flow.gamma_vec),
        gamma_perturbed=tuple(float(x) for x in gp),
        direction=direction,
        witness=lead.index,
        delta=delta,
        epsilon=epsilon,
        denominator=s,
        box=box,
    )


@dataclass(frozen=True)
class DiophantineEstimate:
    """Scan of ``q^2 |x - p/q|`` over ``q_min <= q <= q_max``.

    ``best`` is the closest fraction over ``1 <= q <= q_max``.
    """

    x: float
    q_max: int
    q_min: int
    best: tuple  # (p, q, |x - p/q|)
    c_estimate: float
    c_argmin: int = field(default=0)

    @property
    def growth_rate(self) -> float:
        return math.inf if self.c_estimate == 0 else 1.0 / self.c_estimate


def approximability(x, q_max: int, q_min: int = 10) -> DiophantineEstimate:
    """Estimate ``c(x) = liminf q^2 |x - p/q|`` with ``p`` the nearest integer to ``q x``.

    Small ``q`` is excluded (``q_min``) because the liminf is a tail
    quantity; small denominators can sit far below it (the golden ratio has
    ``1^2 |x - 2| = 0.382 < 1/sqrt(5)``).
    """
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    q_min = max(1, min(q_min, q_max))
    xv = as_number(x)
    if is_exact(xv):
        fr = Fraction(xv)
        if fr.denominator <= q_max:
            return DiophantineEstimate(float(fr), q_max, q_min, (fr.numerator, fr.denominator, 0.0), 0.0,
                                       fr.denominator)
        # keep the exact value only long enough to do the scan in floats
    xf = float(xv)
    q = np.arange(1, q_max + 1, dtype=np.float64)
    pn = np.rint(q * xf)
    err = np.abs(xf - pn / q)
    b = int(np.argmin(err))
    scaled = q**2 * err
    tail = scaled[q_min - 1:]
    c_arg = int(np.argmin(tail))
    c = float(tail[c_arg])
    if np.any(err == 0):
        z = int(np.flatnonzero(err == 0)[0])
        c, c_arg = 0.0, z - (q_min - 1)
    return DiophantineEstimate(
        x=xf,
        q_max=q_max,
        q_min=q_min,
        best=(int(pn[b]), int(q[b]), float(err[b])),
        c_estimate=c,
        c_argmin=c_arg + q_min,
    )


def near_nilpotent_growth(flow: ShearFlowParams, a) -> dict:
    """Exploratory rate ``|eta| / (a_y^2 + a_z^2)`` for a class of an x-aligned flow.

    Returned together with ``1/c`` style quantities for comparison only;
    the relation between them is heuristic and is never asserted.
    """
    if flow.axis != 0:
        raise ValueError("growth diagnostic is defined for p along the first axis")
    a = flow.wave(a)
    params = flow.reduce(a.index)
    _, ay, az = a.index
    eta = params.eta
    rate = math.inf if eta is None else abs(eta) / (ay * ay + az * az)
    return {"eta": eta, "rate": rate, "a": a.index, "sin_theta": params.sin_theta}
