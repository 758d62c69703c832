import numpy as np
import pytest
from scipy.linalg import expm

from eulerstab.lattice import DomainScaling, WaveVector
from eulerstab.linearization import (
    ReducedClassParams,
    ShearFlowParams,
    assemble_class_operator,
    full_jacobian,
    reduce_parameters,
)
from eulerstab.dynamics import (
    IntegrationError,
    TruncatedState,
    _pack,
    _unpack,
    class_trajectory,
    equilibrium_state,
    integrate,
    integrate_nonlinear,
    nilpotent_solution,
    nonlinear_rhs,
    nonlinear_rhs_direct,
    random_state,
    transient_envelope,
)

FLOW = ShearFlowParams.from_indices((1, 0, 0), (0, 1, 1))


def velocity_form_rhs(state: TruncatedState) -> np.ndarray:
    """Independent oracle from omega_t = curl(v x omega), v_j = i (j x omega_j)/|j|^2."""
    c = state.cutoff
    k = state.k
    n = 2 * c + 1
    k2 = np.einsum("...i,...i->...", k, k)
    k2[c, c, c] = 1
    v = 1j * np.cross(k, state.omega) / k2[..., None]
    v[c, c, c] = 0
    out = np.zeros_like(state.omega)
    idx = [np.array(t) for t in np.ndindex(n, n, n)]
    for a in idx:
        for b in idx:
            j = a + b - c  # storage index of a + b
            if np.any(j < 0) or np.any(j >= n):
                continue
            # Fourier transform of v x omega is the convolution of v and omega
            out[tuple(j)] += np.cross(v[tuple(a)], state.omega[tuple(b)])
    return 1j * np.cross(k, out)


def test_rhs_matches_literal_sum_and_velocity_form():
    st = random_state(2, seed=5)
    fast = nonlinear_rhs(st.omega, st.k)
    assert np.abs(fast - nonlinear_rhs_direct(st).omega).max() < 1e-13
    assert np.abs(fast - velocity_form_rhs(st)).max() < 1e-13


def test_rhs_anisotropic_matches_literal_sum():
    st = random_state(2, DomainScaling((1, 1.3, 0.7)), seed=2)
    assert np.abs(nonlinear_rhs(st.omega, st.k) - nonlinear_rhs_direct(st).omega).max() < 1e-13


def test_rhs_batched_equals_single():
    a, b = random_state(2, seed=1), random_state(2, seed=2)
    batch = nonlinear_rhs(np.stack([a.omega, b.omega]), a.k)
    assert np.allclose(batch[0], nonlinear_rhs(a.omega, a.k))
    assert np.allclose(batch[1], nonlinear_rhs(b.omega, b.k))


def test_equilibrium_is_steady():
    st = equilibrium_state(ShearFlowParams.from_indices((1, 2, 0), (2, -1, 3)), 3)
    assert np.abs(nonlinear_rhs(st.omega, st.k)).max() < 1e-14


def test_single_mode_self_interaction_vanishes():
    st = TruncatedState.zeros(3)
    st[(1, 2, 0)] = [2 + 1j, -1 - 0.5j, 0.4j]
    st[(-1, -2, 0)] = np.conj(st[(1, 2, 0)])
    assert np.abs(nonlinear_rhs(st.omega, st.k)).max() < 1e-14


def test_two_dimensional_state_stays_planar():
    st = TruncatedState.zeros(3)
    rng = np.random.default_rng(0)
    for j in [(1, 0, 0), (0, 1, 0), (1, 1, 0), (2, -1, 0)]:
        w = rng.normal() + 1j * rng.normal()
        st[j] = [0, 0, w]
        st[tuple(-x for x in j)] = [0, 0, np.conj(w)]
    d = nonlinear_rhs(st.omega, st.k)
    assert np.abs(d[..., :2]).max() < 1e-14
    c = st.cutoff
    assert np.abs(d[:, :, [i for i in range(2 * c + 1) if i != c]]).max() < 1e-14


def test_rhs_preserves_reality_and_tangency():
    st = random_state(3, seed=9)
    d = TruncatedState(nonlinear_rhs(st.omega, st.k), 3)
    assert d.reality_defect() < 1e-13
    assert d.divergence_defect() < 1e-13


def test_pack_roundtrip():
    st = random_state(2, seed=3)
    assert np.array_equal(_unpack(_pack(st.omega, 2), 2), st.omega)


def test_jacobian_matches_finite_differences_small():
    C = 2
    eq = equilibrium_state(FLOW, C)
    x0 = eq.to_vector()
    _, J = full_jacobian(FLOW, C)
    h = 1e-5
    n = len(x0)
    E = np.eye(n) * h
    Wp = np.stack([_unpack(x0 + e, C) for e in E])
    Wm = np.stack([_unpack(x0 - e, C) for e in E])
    Fp, Fm = nonlinear_rhs(Wp, eq.k), nonlinear_rhs(Wm, eq.k)
    FD = np.stack([(_pack(a, C) - _pack(b, C)) / (2 * h) for a, b in zip(Fp, Fm)], axis=1)
    assert np.abs(FD - J).max() / np.abs(J).max() < 1e-6


def test_integrate_equilibrium_constant():
    eq = equilibrium_state(FLOW, 2)
    tr = integrate_nonlinear(eq, 1.0, 1e-2)
    assert np.abs(tr.states[-1] - eq.omega).max() < 1e-12


def test_integrate_linear_matches_expm():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(6, 6))
    A = A - A.T + 0.1 * np.diag(rng.normal(size=6))
    x0 = rng.normal(size=6)
    tr = integrate(x0, lambda x: A @ x, 1.0, 1e-3)
    assert np.abs(tr.states[-1] - expm(A) @ x0).max() < 1e-8


def test_rk4_fourth_order():
    A = np.array([[0.0, 1.0], [-4.0, -0.3]])
    x0 = np.array([1.0, 0.0])
    exact = expm(2.0 * A) @ x0
    e1 = np.abs(integrate(x0, lambda x: A @ x, 2.0, 0.1).states[-1] - exact).max()
    e2 = np.abs(integrate(x0, lambda x: A @ x, 2.0, 0.05).states[-1] - exact).max()
    assert e1 / e2 == pytest.approx(16, rel=0.15)


def test_integrate_aborts_on_nonfinite():
    with pytest.raises(IntegrationError) as info, np.errstate(over="ignore", invalid="ignore"):
        integrate(np.array([1.0]), lambda x: x**3, 2.0, 0.1)
    assert info.value.t_last_good < 2.0


def test_integrate_rejects_bad_step():
    with pytest.raises(ValueError):
        integrate(np.zeros(2), lambda x: x, 1.0, 0.0)


def test_class_trajectory_matches_expm():
    r = ReducedClassParams.from_values(0.1, 0.6, 1.2, gamma_norm=1.5)
    op = assemble_class_operator(r, 5, "raw")
    x0 = np.random.default_rng(2).normal(size=22)
    tr = class_trajectory(op, x0, 1.0, 1e-3)
    assert np.abs(tr.states[-1] - expm(op.physical) @ x0).max() < 1e-8


def test_nilpotent_closed_form():
    r = reduce_parameters(WaveVector((0, 2, 0)), WaveVector((1, 0, 0)), (0, 1, 0))
    op = assemble_class_operator(r, 6, "raw")
    m = 13
    rng = np.random.default_rng(4)
    upper = np.concatenate([rng.normal(size=m), np.zeros(m)])
    t = np.linspace(0, 5, 6)
    assert np.allclose(nilpotent_solution(op, upper, t), upper)
    lower = np.concatenate([np.zeros(m), rng.normal(size=m)])
    X = nilpotent_solution(op, lower, t)
    growth = r.scale * op.M3 @ lower[m:] * r.cos_theta
    assert np.allclose(np.linalg.norm(X, axis=1) ** 2, lower @ lower + t**2 * (growth @ growth))
    tr = class_trajectory(op, lower, 10.0, 1e-2, store_every=100)
    assert np.abs(np.array(tr.states) - nilpotent_solution(op, lower, tr.times)).max() < 1e-8


def test_nilpotent_solution_rejects_general_class():
    op = assemble_class_operator(ReducedClassParams.from_values(0.0, 1.0, 1.0), 3, "raw")
    with pytest.raises(ValueError):
        nilpotent_solution(op, np.zeros(14), 1.0)


def test_envelope_normal_is_flat():
    A = np.array([[0.0, 2.0], [-2.0, 0.0]])
    env = transient_envelope(A, np.linspace(0, 5, 11))
    assert np.abs(env.values - 1).max() < 1e-10


def test_envelope_nilpotent_grows_linearly():
    r = reduce_parameters(WaveVector((0, 2, 0)), WaveVector((1, 0, 0)), (0, 1, 0))
    op = assemble_class_operator(r, 6, "raw")
    t = np.array([10.0, 20.0, 40.0])
    env = transient_envelope(op, t).values
    assert env[2] > env[1] > env[0]
    assert (env[2] - env[1]) / (env[1] - env[0]) == pytest.approx(2.0, rel=0.05)


def test_envelope_near_nilpotent_exceeds_decoupled():
    near = ReducedClassParams.from_values(0.3, 0.8, 1e-3)
    op_eta = assemble_class_operator(near, 10, "tilde_eta")
    op_0 = assemble_class_operator(near, 10, "tilde_zero")
    a = transient_envelope(op_eta, [10.0]).values[0]
    b = transient_envelope(op_0, [10.0]).values[0]
    assert a / b > 10


@pytest.mark.slow
def test_linearisation_consistency():
    C = 3
    eq = equilibrium_state(FLOW, C)
    pert = random_state(C, seed=11)
    _, J = full_jacobian(FLOW, C)
    lin = (expm(0.5 * J) @ pert.to_vector())
    defects = []
    for eps in (1e-2, 1e-3):
        st = eq.copy()
        st.omega = st.omega + eps * pert.omega
        tr = integrate_nonlinear(st, 0.5, 1e-2)
        diff = (_pack(tr.states[-1], C) - eq.to_vector()) / eps
        defects.append(np.abs(diff - lin).max())
    assert defects[1] < defects[0] / 5
