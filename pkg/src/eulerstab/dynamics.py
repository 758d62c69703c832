"""Time evolution: the truncated nonlinear vorticity system and linear class flows.

State arrays have shape ``(n, n, n, 3)`` with ``n = 2*cutoff + 1`` and mode
``index`` stored at ``index + cutoff``; a leading batch axis is allowed for
the right-hand side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.fft
import scipy.linalg

from .lattice import DomainScaling, ISOTROPIC, cube_indices
from .linearization import A_matrix, ClassOperator, ShearFlowParams

__all__ = [
    "IntegrationError",
    "TruncatedState",
    "Trajectory",
    "Envelope",
    "mode_indices",
    "wave_grid",
    "equilibrium_state",
    "random_state",
    "nonlinear_rhs",
    "nonlinear_rhs_direct",
    "project_state",
    "integrate",
    "integrate_nonlinear",
    "class_trajectory",
    "nilpotent_solution",
    "transient_envelope",
]


class IntegrationError(FloatingPointError):
    def __init__(self, message: str, t_last_good: float):
        super().__init__(message)
        self.t_last_good = t_last_good


def mode_indices(cutoff: int) -> np.ndarray:
    """Nonzero modes of the cube in storage (C) order."""
    return cube_indices(cutoff)


def wave_grid(cutoff: int, scaling: DomainScaling = ISOTROPIC) -> np.ndarray:
    """Embedded wave vectors on the storage grid, shape ``(n, n, n, 3)``."""
    r = np.arange(-cutoff, cutoff + 1)
    idx = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1)
    return idx * np.array([float(k) for k in scaling.kappa])


@dataclass
class TruncatedState:
    omega: np.ndarray
    cutoff: int
    scaling: DomainScaling = ISOTROPIC

    def __post_init__(self):
        n = 2 * self.cutoff + 1
        self.omega = np.asarray(self.omega, dtype=complex)
        if self.omega.shape != (n, n, n, 3):
            raise ValueError(f"omega must have shape {(n, n, n, 3)}, got {self.omega.shape}")

    @classmethod
    def zeros(cls, cutoff: int, scaling: DomainScaling = ISOTROPIC) -> "TruncatedState":
        n = 2 * cutoff + 1
        return cls(np.zeros((n, n, n, 3), dtype=complex), cutoff, scaling)

    def __getitem__(self, index) -> np.ndarray:
        c = self.cutoff
        i, j, k = (int(x) + c for x in index)
        return self.omega[i, j, k]

    def __setitem__(self, index, value) -> None:
        c = self.cutoff
        i, j, k = (int(x) + c for x in index)
        self.omega[i, j, k] = value

    @property
    def modes(self) -> dict:
        return {tuple(int(x) for x in idx): self[idx] for idx in mode_indices(self.cutoff)}

    @property
    def k(self) -> np.ndarray:
        return wave_grid(self.cutoff, self.scaling)

    def to_vector(self) -> np.ndarray:
        """Nonzero modes stacked in :func:`mode_indices` order (length ``3 (n^3 - 1)``)."""
        return _pack(self.omega, self.cutoff)

    @classmethod
    def from_vector(cls, vec, cutoff: int, scaling: DomainScaling = ISOTROPIC) -> "TruncatedState":
        return cls(_unpack(vec, cutoff), cutoff, scaling)

    def divergence_defect(self) -> float:
        return float(np.abs(np.einsum("...i,...i->...", self.k, self.omega)).max())

    def reality_defect(self) -> float:
        return float(np.abs(self.omega - np.conj(self.omega[::-1, ::-1, ::-1])).max())

    def copy(self) -> "TruncatedState":
        return TruncatedState(self.omega.copy(), self.cutoff, self.scaling)


def _pack(omega: np.ndarray, cutoff: int) -> np.ndarray:
    n = 2 * cutoff + 1
    flat = omega.reshape(n**3, 3)
    centre = (n**3) // 2
    return np.concatenate([flat[:centre], flat[centre + 1:]]).ravel()


def _unpack(vec, cutoff: int) -> np.ndarray:
    n = 2 * cutoff + 1
    rows = np.asarray(vec).reshape(-1, 3)
    centre = (n**3) // 2
    full = np.zeros((n**3, 3), dtype=complex)
    full[:centre] = rows[:centre]
    full[centre + 1:] = rows[centre:]
    return full.reshape(n, n, n, 3)


def equilibrium_state(flow: ShearFlowParams, cutoff: int) -> TruncatedState:
    """Steady state ``omega_{+-p} = Gamma`` with every other mode zero."""
    if max(abs(i) for i in flow.p.index) > cutoff:
        raise ValueError(f"p={flow.p.index} lies outside cutoff {cutoff}")
    st = TruncatedState.zeros(cutoff, flow.scaling)
    st[flow.p.index] = flow.gamma_vec
    st[tuple(-i for i in flow.p.index)] = flow.gamma_vec
    return st


def random_state(cutoff: int, scaling: DomainScaling = ISOTROPIC, seed: int = 0,
                 amplitude: float = 1.0, decay: float = 1.0) -> TruncatedState:
    """Real, divergence-free random state with spectrum ``~ exp(-decay |k|)``."""
    rng = np.random.default_rng(seed)
    n = 2 * cutoff + 1
    w = rng.normal(size=(n, n, n, 3)) + 1j * rng.normal(size=(n, n, n, 3))
    k = wave_grid(cutoff, scaling)
    w *= amplitude * np.exp(-decay * np.linalg.norm(k, axis=-1))[..., None]
    st = TruncatedState(w, cutoff, scaling)
    st.omega, _ = project_state(st.omega, k)
    return st


def _spatial_axes(x: np.ndarray) -> tuple:
    return (x.ndim - 4, x.ndim - 3, x.ndim - 2)


def nonlinear_rhs(omega: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Truncated vorticity right-hand side by zero-padded FFT convolution.

    With ``u_k = (k x omega_k)/|k|^2`` the mode equation is
    ``omega_j' = sum_k (j.u_k) omega_{j-k} - (k.omega_{j-k}) u_k`` over
    ``k`` and ``j-k`` inside the cube. ``omega`` may carry a leading batch axis.
    """
    n = k.shape[0]
    c = (n - 1) // 2
    L = scipy.fft.next_fast_len(2 * n - 1)
    axes = _spatial_axes(omega)
    k2 = np.einsum("...i,...i->...", k, k)
    k2[c, c, c] = 1.0
    u = np.cross(k, omega) / k2[..., None]
    u[..., c, c, c, :] = 0.0
    shape = (L, L, L)

    def fwd(x):
        return scipy.fft.fftn(x, s=shape, axes=axes, workers=-1)

    def inv(x):
        y = scipy.fft.ifftn(x, s=shape, axes=axes, workers=-1)
        sl = [slice(None)] * y.ndim
        for ax in axes:
            sl[ax] = slice(c, 3 * c + 1)  # linear-convolution index of mode j is j + 2c
        return y[tuple(sl)]

    Fw = fwd(omega)
    Fu = fwd(u)
    # conv(u_m, omega_i) weighted by j_m after inversion
    P = inv(Fu[..., :, None] * Fw[..., None, :])
    term1 = np.einsum("...m,...mi->...i", k, P)
    # sum_m conv(k_m u_i, omega_m)
    Q = fwd(k[..., :, None] * u[..., None, :])
    term2 = inv(np.einsum("...mi,...m->...i", Q, Fw))
    out = term1 - term2
    out[..., c, c, c, :] = 0.0  # mean vorticity is not a degree of freedom
    return out


def nonlinear_rhs_direct(state: TruncatedState) -> TruncatedState:
    """Literal double sum ``sum_k A(j, k, omega_{j+k}) omega_{-k} / |k|^2``.

    Quadratic in the number of modes; meant as an oracle at small cutoff.
    """
    c = state.cutoff
    idx = cube_indices(c)
    kap = np.array([float(x) for x in state.scaling.kappa])
    out = TruncatedState.zeros(c, state.scaling)
    for j in idx:
        acc = np.zeros(3, dtype=complex)
        jv = j * kap
        for kk in idx:
            jk = j + kk
            if np.abs(jk).max() > c:
                continue
            kv = kk * kap
            w_jk = state[jk]
            if not np.any(w_jk):
                continue
            w_mk = state[-kk]
            # A is linear in its third argument
            A = A_matrix(jv, kv, w_jk.real) + 1j * A_matrix(jv, kv, w_jk.imag)
            acc += (A @ w_mk) / (kv @ kv)
        out[j] = acc
    return out


def project_state(omega: np.ndarray, k: np.ndarray) -> tuple[np.ndarray, dict]:
    """Symmetrise reality, remove ``j.omega_j`` and zero ``omega_0``.

    Returns the projected array and the size of each correction.
    """
    c = (k.shape[0] - 1) // 2
    mirror = np.conj(omega[::-1, ::-1, ::-1])
    reality = float(np.abs(omega - mirror).max())
    w = 0.5 * (omega + mirror)
    k2 = np.einsum("...i,...i->...", k, k)
    k2[c, c, c] = 1.0
    div = np.einsum("...i,...i->...", k, w)
    divergence = float((np.abs(div) / np.sqrt(k2)).max())
    w = w - (div / k2)[..., None] * k
    zero_mode = float(np.abs(w[c, c, c]).max())
    w[c, c, c] = 0.0
    return w, {"reality": reality, "divergence": divergence, "zero_mode": zero_mode}


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    norms: np.ndarray
    corrections: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")


def integrate(y0, rhs: Callable, t_end: float, dt: float,
              project: Optional[Callable] = None, store_every: int = 1,
              t0: float = 0.0) -> Trajectory:
    """Classical fixed-step RK4.

    ``project(y) -> (y, corrections)`` runs after every step and its
    corrections are recorded per step. Non-finite values abort with the last
    good time.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end < t0:
        raise ValueError("t_end must not precede t0")
    steps = int(round((t_end - t0) / dt))
    if not math.isclose(t0 + steps * dt, t_end, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"dt={dt} does not divide the interval [{t0}, {t_end}]")
    y = np.array(y0, dtype=np.result_type(np.asarray(y0).dtype, float), copy=True)
    times, states, norms, corr = [t0], [y.copy()], [float(np.linalg.norm(y))], []
    for s in range(1, steps + 1):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y_new = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y_new)):
            raise IntegrationError(f"non-finite state at t={t0 + s * dt:.6g}", t0 + (s - 1) * dt)
        if project is not None:
            y_new, c = project(y_new)
            corr.append(c)
        y = y_new
        if s % store_every == 0 or s == steps:
            times.append(t0 + s * dt)
            states.append(y.copy())
            norms.append(float(np.linalg.norm(y)))
    return Trajectory(np.array(times), states, np.array(norms), corr)


def integrate_nonlinear(state: TruncatedState, t_end: float, dt: float,
                        store_every: int = 1, project: bool = True) -> Trajectory:
    k = state.k
    proj = (lambda w: project_state(w, k)) if project else None
    return integrate(state.omega, lambda w: nonlinear_rhs(w, k), t_end, dt, proj, store_every)


def class_trajectory(op: ClassOperator, x0, t_end: float, dt: float,
                     store_every: int = 1) -> Trajectory:
    """RK4 flow of the physically scaled class operator."""
    M = op.physical
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (M.shape[0],):
        raise ValueError(f"x0 must have length {M.shape[0]}")
    return integrate(x0, lambda x: M @ x, t_end, dt, store_every=store_every)


def nilpotent_solution(op: ClassOperator, x0, t) -> np.ndarray:
    """Closed form ``(I + t M) x0`` of a coplanar class (``M^2 = 0``).

    ``t`` may be a scalar or an array; rows of the result follow ``t``.
    """
    if op.form != "raw" or not op.nilpotent:
        raise ValueError("closed form needs the raw operator of a nilpotent class")
    M = op.physical
    x0 = np.asarray(x0, dtype=float)
    t = np.asarray(t, dtype=float)
    return x0 + np.multiply.outer(t, M @ x0)


@dataclass(frozen=True)
class Envelope:
    times: np.ndarray
    values: np.ndarray

    @property
    def max(self) -> float:
        return float(self.values.max())

    @property
    def argmax(self) -> float:
        return float(self.times[int(np.argmax(self.values))])


def transient_envelope(op, t_grid) -> Envelope:
    """``|exp(M t)|_2`` on ``t_grid`` for a ClassOperator (physical scale) or a matrix."""
    M = op.physical if isinstance(op, ClassOperator) else np.asarray(op, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    if np.any(t < 0) or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be nonnegative and increasing")
    vals = np.array([np.linalg.norm(scipy.linalg.expm(M * ti), 2) for ti in t])
    return Envelope(t, vals)
