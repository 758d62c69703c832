"""Spectra of class operators and stability verdicts for whole flows."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._exact import is_exact
from .lattice import (
    WaveVector,
    ellipsoid_lattice_points,
    is_collinear,
    principal_representative,
)
from .linearization import (
    AlphaRhoSequence,
    ClassOperator,
    ShearFlowParams,
    TrivialClassError,
    alpha_rho,
    assemble_class_operator,
)
from .parametric import (
    DEFAULT_DENOMINATOR_BOUND,
    PlaneLattice,
    RationalityResult,
    plane_lattice_rank,
    rationality,
)

log = logging.getLogger(__name__)

__all__ = [
    "EigenSolverError",
    "SpectrumReport",
    "FlowVerdict",
    "Nonnormality",
    "CLASSIFICATIONS",
    "VERDICTS",
    "UNSTABLE_THRESHOLD",
    "eigenvalues",
    "classify_class",
    "lambda_star",
    "flow_verdict",
    "commutator_nonnormality",
    "witness_ball",
]

CLASSIFICATIONS = (
    "imaginary_diagonalisable",
    "real_pair",
    "two_real_pairs",
    "complex_quadruplet",
    "nilpotent",
    "boundary",
)
VERDICTS = (
    "linearly_stable",
    "spectrally_stable_linearly_unstable",
    "hyperbolically_unstable",
    "undetermined",
)
UNSTABLE_THRESHOLD = math.sqrt(3) + 1.5


class EigenSolverError(RuntimeError):
    pass


def eigenvalues(matrix, vectors: bool = False, residual_tol: float = 1e-10):
    """Eigenvalues of a dense real matrix (LAPACK Hessenberg QR).

    With ``vectors=True`` returns ``(w, V)`` and checks the backward error
    ``|M v - w v| / |M|`` of every pair against ``residual_tol``.
    """
    M = np.asarray(matrix, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"square matrix required, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    try:
        if not vectors:
            return np.linalg.eigvals(M)
        w, V = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"eigensolver did not converge for {M.shape} matrix: {exc}") from exc
    norm = max(np.linalg.norm(M, 2), np.finfo(float).tiny)
    res = np.linalg.norm(M @ V - V * w, axis=0) / norm
    if res.size and res.max() > residual_tol:
        raise EigenSolverError(f"eigenpair residual {res.max():.3g} exceeds {residual_tol:g}")
    return w, V


def lambda_star(rho: AlphaRhoSequence) -> Optional[float]:
    """Lower bound ``sqrt(-rho_1 (rho_0 + rho_2))`` on the hyperbolic eigenvalue of the rho block.

    Requires ``rho_0 < 0`` and ``rho_k > 0`` for every other ``k`` in range.
    The mirrored expression is used when only ``rho_0 + rho_{-2} < 0``.
    """
    r = {n: rho.rho_at(n) for n in rho.indices}
    if not r[0] < 0:
        return None
    if any(not v > 0 for n, v in r.items() if n != 0):
        return None
    for s in (1, -1):
        if r[0] + r[2 * s] < 0:
            return math.sqrt(-r[s] * (r[0] + r[2 * s]))
    return None


@dataclass(frozen=True)
class Nonnormality:
    commutator_norm: float
    leading_coefficient: float  # |M3 M3^T|_F sin^2(theta), multiplies eta^2
    eta: float


def commutator_nonnormality(op: ClassOperator) -> Nonnormality:
    """Frobenius norm of ``[M, M^T]`` for the assembled operator."""
    M = op.assembled
    C = M @ M.T - M.T @ M
    s = op.params.sin_theta
    lead = float(np.linalg.norm(op.M3 @ op.M3.T) * s * s)
    eta = op.eta if op.eta is not None else float("nan")
    return Nonnormality(float(np.linalg.norm(C)), lead, eta)


@dataclass
class SpectrumReport:
    a: tuple
    p: tuple
    gamma: tuple
    kappa: tuple
    N: int
    eigenvalues: np.ndarray
    classification: str
    max_real_part: float
    convergence_delta: float
    threshold: float
    lower_bound_lambda_star: Optional[float] = None
    physical_bound: Optional[float] = None
    nonnormality_commutator_norm: float = 0.0
    a_tilde_x: float = 0.0
    a_tilde_y: float = 0.0
    sin_theta: float = 0.0
    hyperbolic_count: int = 0
    conjectured: Optional[str] = None
    rho_signs: str = ""

    @property
    def class_id(self) -> tuple:
        return (self.a, self.p, self.gamma, self.kappa)

    @property
    def hyperbolic(self) -> bool:
        return self.max_real_part > self.threshold

    def to_dict(self) -> dict:
        return {
            "a": list(self.a),
            "p": list(self.p),
            "gamma": [str(g) for g in self.gamma],
            "kappa": [str(k) for k in self.kappa],
            "N": self.N,
            "classification": self.classification,
            "max_real_part": self.max_real_part,
            "convergence_delta": self.convergence_delta,
            "threshold": self.threshold,
            "lower_bound_lambda_star": self.lower_bound_lambda_star,
            "physical_bound": self.physical_bound,
            "nonnormality_commutator_norm": self.nonnormality_commutator_norm,
            "a_tilde_x": self.a_tilde_x,
            "a_tilde_y": self.a_tilde_y,
            "sin_theta": self.sin_theta,
            "hyperbolic_count": self.hyperbolic_count,
            "conjectured": self.conjectured,
            "rho_signs": self.rho_signs,
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpectrumReport":
        d = dict(d)
        ev = np.array([complex(r, i) for r, i in d.pop("eigenvalues")])
        for key in ("a", "p", "gamma", "kappa"):
            d[key] = tuple(d[key])
        return cls(eigenvalues=ev, **d)


def _hausdorff(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) == 0 and len(y) == 0:
        return 0.0
    if len(x) == 0 or len(y) == 0:
        z = x if len(x) else y
        return float(np.max(np.abs(z.real)))
    d = np.abs(x[:, None] - y[None, :])
    return float(max(d.min(1).max(), d.min(0).max()))


def _as_flow(p, gamma, kappa) -> ShearFlowParams:
    if isinstance(p, WaveVector):
        return ShearFlowParams(p, tuple(gamma))
    return ShearFlowParams.from_indices(p, gamma, kappa if kappa is not None else (1, 1, 1))


def _conjectured_tag(rho: AlphaRhoSequence) -> Optional[str]:
    neg = [n for n in rho.indices if rho.rho_at(n) < 0]
    if not neg:
        return "imaginary_diagonalisable"
    if neg == [0]:
        return "real_pair"
    if len(neg) == 2:
        return "two_real_pairs or complex_quadruplet"
    return None


def classify_class(a, p, gamma=None, kappa=None, N: int = 30, tol: float = 1e-8,
                   flow: Optional[ShearFlowParams] = None) -> SpectrumReport:
    """Classify one class by its truncated spectrum at ``N``, checked against ``2N``.

    Eigenvalues are of the physically scaled operator. A coplanar class is
    tagged nilpotent without an eigensolve.
    """
    if flow is None:
        flow = _as_flow(p, gamma, kappa)
    a = flow.wave(a.index if isinstance(a, WaveVector) else a)
    if is_collinear(a, flow.p):
        raise TrivialClassError(f"class leader {a.index} is collinear with p: trivial class")
    params = flow.reduce(a.index)
    common = dict(
        a=a.index,
        p=flow.p.index,
        gamma=flow.gamma,
        kappa=flow.scaling.kappa,
        N=N,
        a_tilde_x=float(params.a_tilde_x),
        a_tilde_y=params.a_tilde_y,
        sin_theta=params.sin_theta,
    )
    if params.nilpotent:
        return SpectrumReport(
            eigenvalues=np.zeros(1, dtype=complex),
            classification="nilpotent",
            max_real_part=0.0,
            convergence_delta=0.0,
            threshold=tol,
            nonnormality_commutator_norm=commutator_nonnormality(
                assemble_class_operator(params, N, "raw")).commutator_norm,
            **common,
        )
    seq = alpha_rho(params, N)
    ops = [assemble_class_operator(params, n, "tilde_zero") for n in (N, 2 * N)]
    evs = [op.scale * eigenvalues(op.assembled) for op in ops]
    cand = [e[np.abs(e.real) > tol] for e in evs]
    delta = _hausdorff(*cand)
    thr = max(tol, 10 * delta)
    ev = evs[0]
    hyp = ev[np.abs(ev.real) > thr]
    if len(hyp) == 0:
        rho = seq.rho
        if any(r == 0 if is_exact(r) else abs(r) < tol for r in rho) and all(r >= 0 for r in rho):
            label = "boundary"
        else:
            label = "imaginary_diagonalisable"
    elif np.any(np.abs(hyp.imag) > thr):
        label = "complex_quadruplet"
    elif len(hyp) <= 2:
        label = "real_pair"
    else:
        label = "two_real_pairs"
    lam = lambda_star(seq)
    phys = None if lam is None else params.scale * abs(params.sin_theta) * lam
    conj = _conjectured_tag(seq)
    if conj is not None and label not in conj and label != "boundary":
        log.info("class %s: observed %s, expected %s", a.index, label, conj)
    tilde = assemble_class_operator(params, N, "tilde_eta")
    return SpectrumReport(
        eigenvalues=ev,
        classification=label,
        max_real_part=float(ev.real.max()),
        convergence_delta=delta,
        threshold=thr,
        lower_bound_lambda_star=lam,
        physical_bound=phys,
        nonnormality_commutator_norm=commutator_nonnormality(tilde).commutator_norm,
        hyperbolic_count=int(len(hyp)),
        conjectured=conj,
        rho_signs="".join("-" if r < 0 else ("0" if r == 0 else "+") for r in seq.rho),
        **common,
    )


@dataclass
class FlowVerdict:
    flow: ShearFlowParams
    verdict: str
    witnesses: list = field(default_factory=list)  # (class leader, reason)
    ellipsoid_census: int = 0
    rule: str = ""
    rationality: Optional[RationalityResult] = None
    plane: Optional[PlaneLattice] = None
    reports: list = field(default_factory=list)

    @property
    def rationality_status(self) -> Optional[str]:
        return None if self.rationality is None else self.rationality.describe()


def witness_ball(flow: ShearFlowParams) -> tuple[np.ndarray, float]:
    """Center ``(Gamma_hat x p)/sqrt(3)`` and radius ``(2/sqrt(3) - 1)|p|``.

    Every point of this ball lies in the unstable ellipsoid while all its
    shifts by nonzero multiples of ``p`` lie outside it.
    """
    g = flow.gamma_vec / flow.gamma_norm
    c = np.cross(g, flow.p.vec) / math.sqrt(3)
    return c, (2 / math.sqrt(3) - 1) * flow.p.norm


def _ball_candidates(flow: ShearFlowParams) -> list[tuple]:
    c, r = witness_ball(flow)
    kap = np.array([float(k) for k in flow.scaling.kappa])
    lo = np.floor((c - r) / kap).astype(int)
    hi = np.ceil((c + r) / kap).astype(int)
    axes = [np.arange(l, h + 1) for l, h in zip(lo, hi)]
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
    dist = np.linalg.norm(idx * kap - c, axis=1)
    keep = dist < r
    idx, dist = idx[keep], dist[keep]
    order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0], dist))
    return [tuple(int(x) for x in idx[i]) for i in order]


def _axis_ratio(flow: ShearFlowParams):
    ax = flow.axis
    u, v = (ax + 1) % 3, (ax + 2) % 3
    k, g = flow.scaling.kappa, flow.gamma
    if g[u] == 0 or g[v] == 0:
        return 0
    return (k[v] * g[u]) / (k[u] * g[v])


def _stable_hypotheses(flow: ShearFlowParams) -> bool:
    ax = flow.axis
    if ax is None:
        return False
    k = flow.scaling.kappa
    reach = k[ax] * abs(flow.p.index[ax])
    return all(k[j] > reach for j in range(3) if j != ax)


def _direction_rationality(flow: ShearFlowParams, bound: int) -> RationalityResult:
    """Rationality of the plane normal ``K (Gamma x p)`` up to scale."""
    from ._exact import cross

    n = cross(flow.gamma, flow.p.embedded)
    c = [ni * ki for ni, ki in zip(n, flow.scaling.kappa)]
    lead = max(range(3), key=lambda i: abs(float(c[i])))
    worst = None
    for i in range(3):
        if i == lead or c[i] == 0:
            continue
        r = rationality(c[i] / c[lead], bound)
        if not r.rational:
            return r
        worst = r
    return worst or rationality(1, bound)


def flow_verdict(flow: ShearFlowParams, N: int = 30, tol: float = 1e-8,
                 q_max: int = DEFAULT_DENOMINATOR_BOUND, box: int = 50, jobs: int = 1,
                 max_ball_attempts: int = 25) -> FlowVerdict:
    """Stability verdict for the whole flow.

    Order of rules: the anisotropic stable-flow hypotheses, the large ``|p|``
    witness ball, then a census of every class leader in the unstable
    ellipsoid together with the coplanar-plane rank.
    """
    census = len(ellipsoid_lattice_points(flow.p))

    if _stable_hypotheses(flow):
        rat = rationality(_axis_ratio(flow), q_max)
        plane = plane_lattice_rank(flow.p, flow.gamma, box)
        if not rat.rational:
            return FlowVerdict(flow, "linearly_stable", [], census,
                               "axis-aligned p, transverse scales exceed |p|, irrational Gamma slope",
                               rat, plane)
        wit = []
        if plane.rank == 2:
            lead, _ = principal_representative(flow.wave(plane.witness), flow.p)
            wit = [(lead.index, "coplanar class (nilpotent block)")]
        return FlowVerdict(flow, "spectrally_stable_linearly_unstable", wit, census,
                           "axis-aligned p, transverse scales exceed |p|, rational Gamma slope",
                           rat, plane)

    if flow.p.norm > UNSTABLE_THRESHOLD:
        for idx in _ball_candidates(flow)[:max_ball_attempts]:
            a, _ = principal_representative(flow.wave(idx), flow.p)
            if a.is_zero or is_collinear(a, flow.p):
                continue
            rep = classify_class(a, None, flow=flow, N=N, tol=tol)
            if rep.hyperbolic:
                return FlowVerdict(flow, "hyperbolically_unstable",
                                   [(a.index, "|p| > sqrt(3)+3/2, witness in inner ball")],
                                   census, "|p| > sqrt(3) + 3/2", None, None, [rep])
        log.info("no confirmed witness in the inner ball; falling back to the census")

    leaders = ellipsoid_lattice_points(flow.p, leaders_only=True)
    run = lambda a: classify_class(a, None, flow=flow, N=N, tol=tol)  # noqa: E731
    if jobs > 1 and len(leaders) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(run, leaders))
    else:
        reports = [run(a) for a in leaders]
    reports.sort(key=lambda r: r.a)
    plane = plane_lattice_rank(flow.p, flow.gamma, box)
    hyper = [r for r in reports if r.hyperbolic and r.classification != "nilpotent"]
    if hyper:
        return FlowVerdict(flow, "hyperbolically_unstable",
                           [(r.a, f"{r.classification}, max Re = {r.max_real_part:.6g}") for r in hyper],
                           census, "class census in the unstable ellipsoid", None, plane, reports)
    if plane.rank == 2:
        lead, _ = principal_representative(flow.wave(plane.witness), flow.p)
        return FlowVerdict(flow, "spectrally_stable_linearly_unstable",
                           [(lead.index, "coplanar class (nilpotent block)")],
                           census, "coplanar lattice plane has rank 2", None, plane, reports)
    rat = _direction_rationality(flow, q_max)
    interior = [r for r in reports if r.classification != "nilpotent"]
    if not interior and not rat.rational:
        return FlowVerdict(flow, "linearly_stable", [], census,
                           "no class leaders in the unstable ellipsoid, irrational Gamma direction",
                           rat, plane, reports)
    return FlowVerdict(flow, "undetermined", [], census,
                       "imaginary census spectra are not a stability proof", rat, plane, reports)
