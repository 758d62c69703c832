import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from eulerstab.lattice import WaveVector, cross_matrix
from eulerstab.linearization import (
    A_matrix,
    NilpotentClassError,
    ReducedClassParams,
    ShearFlowParams,
    TrivialClassError,
    alpha_rho,
    assemble_class_operator,
    chi_pm,
    chi_reduced_basis,
    full_jacobian,
    jacobian_block,
    lax_generator,
    projection_rotation,
    reduce_parameters,
    reduced_chi,
    similarity,
    toeplitz_B,
)

RNG = np.random.default_rng(20260101)
vec = st.tuples(*[st.floats(-3, 3)] * 3).map(np.array)


def random_class(rng, theta=None):
    th = rng.uniform(0.05, 2 * math.pi - 0.05) if theta is None else theta
    return ReducedClassParams.from_values(
        rng.uniform(-0.5, 0.5), rng.uniform(0.1, 2.0), th, gamma_norm=rng.uniform(0.5, 2), p_norm=rng.uniform(0.5, 3)
    )


# --- kernels -----------------------------------------------------------------

def test_A_collinear_arguments_leave_hat_term():
    k = np.array([1.0, 2.0, -1.0])
    x = np.array([0.3, -0.2, 0.7])
    assert np.allclose(A_matrix(k, k, x), -(k @ x) * cross_matrix(k))


def test_A_and_chi_equivariant_under_rotations():
    rots = Rotation.random(100, random_state=3).as_matrix()
    for R in rots:
        j, k, x = RNG.normal(size=(3, 3))
        assert np.abs(A_matrix(R @ j, R @ k, R @ x) - R @ A_matrix(j, k, x) @ R.T).max() < 1e-12
        p = RNG.normal(size=3)
        g = np.cross(p, RNG.normal(size=3))
        for s in (1, -1):
            lhs = chi_pm(R @ j, R @ p, R @ g, s)
            assert np.abs(lhs - R @ chi_pm(j, p, g, s) @ R.T).max() < 1e-12


@given(vec, vec, vec)
def test_A_row_annihilation(j, k, x):
    s = j + k
    if s @ s < 1e-6:
        return
    x = x - (s @ x) / (s @ s) * s  # enforce (j + k).x = 0
    A = A_matrix(j, k, x)
    assert np.abs(j @ A).max() < 1e-10 * (1 + np.abs(A).max() * np.linalg.norm(j))


def test_chi_collinear_form():
    p = np.array([1.0, 2.0, 1.0])
    g = np.array([1.0, 0.0, -1.0])
    expect = -np.outer(np.cross(p, g), p) / (p @ p)
    for q in (2.0, -3.0):
        assert np.allclose(chi_pm(q * p, p, g, 1), expect)
        assert np.allclose(chi_pm(q * p, p, g, -1), expect)


def test_chi_row_annihilation():
    # on divergence-free inputs mu (with (j+-p).mu = 0) the output is tangent to j
    def tangent(v):
        return np.eye(3) - np.outer(v, v) / (v @ v)

    for _ in range(50):
        j, p = RNG.normal(size=(2, 3))
        g = np.cross(p, RNG.normal(size=3))
        assert np.abs(j @ chi_pm(j + p, p, g, 1) @ tangent(j + p)).max() < 1e-12
        assert np.abs(j @ chi_pm(j - p, p, g, -1) @ tangent(j - p)).max() < 1e-12


def test_chi_rejects_zero_mode():
    with pytest.raises(ValueError):
        chi_pm((0, 0, 0), (1, 0, 0), (0, 1, 0), 1)


# --- flow and reduced parameters -----------------------------------------------

def test_flow_rejects_divergent_gamma():
    with pytest.raises(ValueError, match="divergence condition violated"):
        ShearFlowParams.from_indices((1, 0, 0), (1, 1, 0))
    with pytest.raises(ValueError):
        ShearFlowParams.from_indices((0, 0, 0), (1, 1, 0))
    with pytest.raises(ValueError):
        ShearFlowParams.from_indices((1, 0, 0), (0, 0, 0))


def test_flow_psi():
    f = ShearFlowParams.from_indices((1, 0, 0), (0, 1, 1))
    assert f.psi == pytest.approx(math.pi / 4)
    assert ShearFlowParams.from_indices((1, 1, 0), (0, 0, 1)).psi is None


def test_reduce_tilted_class():
    p = WaveVector((1, 2, 1))
    a = WaveVector((-1, 1, 1))
    g = (1, 0, -1)
    r = reduce_parameters(a, p, g)
    assert r.a_tilde_x == Fraction(1, 3)
    assert r.a_tilde_y_sq == Fraction(14, 36)
    assert r.a_tilde_y == pytest.approx(math.sqrt(14) / 6)
    # read the coordinates back from the constructed frame
    E = r.basis
    assert np.allclose(E.T @ E, np.eye(3))
    assert np.allclose(E.T @ p.vec, [p.norm, 0, 0])
    assert np.allclose(E.T @ a.vec, p.norm * np.array([1 / 3, math.sqrt(14) / 6, 0]))
    gv = np.array(g, float)
    assert np.allclose(E.T @ gv, np.linalg.norm(gv) * np.array([0, r.cos_theta, r.sin_theta]))


def test_reduce_orthogonal_case():
    r = reduce_parameters(WaveVector((0, 1, 0)), WaveVector((1, 0, 0)), (0, 0, 1))
    assert r.a_tilde_x == 0 and r.a_tilde_y == 1
    assert r.theta == pytest.approx(math.pi / 2)
    assert not r.nilpotent


def test_reduce_coplanar_is_flagged():
    r = reduce_parameters(WaveVector((0, 2, 0)), WaveVector((1, 0, 0)), (0, 1, 0))
    assert r.nilpotent and r.theta == 0.0 and r.eta is None


def test_reduce_near_coplanar_tier():
    r = reduce_parameters(WaveVector((0, 1, 1)), WaveVector((1, 0, 0)), (0, 1, 1.0001))
    assert r.near_nilpotent


def test_reduce_collinear_raises():
    with pytest.raises(TrivialClassError, match="trivial class"):
        reduce_parameters(WaveVector((2, 0, 0)), WaveVector((1, 0, 0)), (0, 1, 0))


def test_reduce_quotients_reproduced():
    p = WaveVector((2, 1, 0))
    g = np.array([1.0, -2.0, 0.7])
    for a_idx in [(0, 1, 1), (1, -1, 2), (3, 0, -1)]:
        a = WaveVector(a_idx)
        r = reduce_parameters(a, p, tuple(g))
        pxa = np.cross(p.vec, a.vec)
        cos_q = (g @ a.vec) * p.norm / (np.linalg.norm(g) * np.linalg.norm(pxa))
        sin_q = (g @ pxa) / (np.linalg.norm(g) * np.linalg.norm(pxa))
        assert abs(math.cos(r.theta) - cos_q) < 1e-12
        assert abs(math.sin(r.theta) - sin_q) < 1e-12


# --- alpha / rho -------------------------------------------------------------------

def test_alpha_rho_unit_case():
    s = alpha_rho(ReducedClassParams.from_values(Fraction(0), 1.0, 1.0), 2)
    assert s.alpha_at(0) == pytest.approx(1.0) and s.rho_at(0) == pytest.approx(0.0)
    assert s.alpha_at(1) == pytest.approx(math.sqrt(2)) and s.rho_at(1) == pytest.approx(0.5)


def test_alpha_rho_exact_example():
    f = ShearFlowParams.from_indices((2, 0, 0), (0, 0, 1))
    s = alpha_rho(f.reduce((0, 1, 0)), 3)
    assert (s.rho_at(0), s.rho_at(1), s.rho_at(2)) == (Fraction(-3), Fraction(1, 5), Fraction(13, 17))
    assert s.rho_at(-1) == s.rho_at(1)


@pytest.mark.parametrize("p", [(1, 0, 0), (1, 2, 1)])
def test_rho_sign_matches_ellipsoid(p):
    pw = WaveVector(p)
    for a in np.ndindex(7, 7, 7):
        a = WaveVector(tuple(x - 3 for x in a))
        if a.is_zero or a.cross(pw) == (0, 0, 0):
            continue
        r = reduce_parameters(a, pw, np.cross(p, (1, 1, 1)) if np.any(np.cross(p, (1, 1, 1))) else (0, 0, 1))
        s = alpha_rho(r, 3)
        for k in range(-3, 4):
            inside = (a + k * pw).norm_sq < pw.norm_sq
            assert (s.rho_at(k) < 0) == inside
            assert s.rho_at(k) < 1


def test_alpha_rho_requires_positive_truncation():
    with pytest.raises(ValueError):
        alpha_rho(ReducedClassParams.from_values(0, 1, 1), 0)


# --- projection ------------------------------------------------------------------

def test_rotation_pure_y_case():
    R = projection_rotation(ReducedClassParams.from_values(-2.0, 0.7, 1.0), 2)
    assert np.allclose(R, [[0, -1, 0], [1, 0, 0], [0, 0, 1]])


def test_rotation_is_special_orthogonal():
    for _ in range(20):
        r = random_class(RNG)
        for n in range(-3, 4):
            R = projection_rotation(r, n)
            assert np.abs(R.T @ R - np.eye(3)).max() < 1e-12
            assert abs(np.linalg.det(R) - 1) < 1e-12


def test_projected_coupling_decouples_normal_component():
    for _ in range(50):
        r = random_class(RNG)
        for n in range(-3, 4):
            for s in (1, -1):
                S = projection_rotation(r, n - s).T @ chi_reduced_basis(r, n, s) @ projection_rotation(r, n)
                assert abs(S[0, 1]) < 1e-12 and abs(S[0, 2]) < 1e-12
                assert np.abs(S[1:, 1:] - reduced_chi(r, n, s)).max() < 1e-12


def test_reduced_chi_limits():
    r = ReducedClassParams.from_values(0.2, 0.9, math.pi / 2)
    m = reduced_chi(r, 1, 1)
    assert abs(m[0, 1]) < 1e-15 and abs(m[1, 0]) == 0
    r0 = ReducedClassParams.from_values(0.2, 0.9, 0.0)
    m0 = reduced_chi(r0, 1, 1)
    al1, al0 = math.hypot(1.2, 0.9), math.hypot(0.2, 0.9)
    assert np.allclose(m0, [[0, 0.9 * al0 / al1**2], [0, 0]])


# --- assembled operators -------------------------------------------------------------

def test_raw_operator_matches_reduced_chi():
    r = random_class(RNG)
    N = 4
    op = assemble_class_operator(r, N, "raw")
    m = 2 * N + 1
    P = op.physical
    for i, n in enumerate(range(-N, N + 1)):
        for s, off in ((1, 1), (-1, -1)):
            j = i + off
            if 0 <= j < m:
                blk = P[np.ix_([i, m + i], [j, m + j])]
                assert np.abs(blk - reduced_chi(r, n + off, s)).max() < 1e-12


def test_band_structure():
    r = random_class(RNG)
    raw = assemble_class_operator(r, 5, "raw")
    til = assemble_class_operator(r, 5, "tilde_eta")
    for M in (raw.M1, raw.M2, til.M1, raw.M3):
        assert np.all(np.diag(M) == 0)
        assert np.all(np.triu(M, 2) == 0) and np.all(np.tril(M, -2) == 0)
    assert np.count_nonzero(til.M3 - np.diag(np.diag(til.M3, 1), 1)) == 0
    s = r.sin_theta
    m = 11
    assert np.allclose(til.assembled[:m, m:], s * r.eta * til.M3, rtol=1e-14, atol=0)


def test_tilde_is_diagonal_similarity_of_raw():
    r = random_class(RNG)
    N = 6
    raw = assemble_class_operator(r, N, "raw")
    til = assemble_class_operator(r, N, "tilde_eta")
    al = alpha_rho(r, N).alpha[1:-1]
    m = 2 * N + 1
    T = np.block([[np.diag(al), r.eta * np.diag(al)], [np.zeros((m, m)), np.eye(m)]])
    # the coupling survives truncation except in the last row of the upper block
    D = np.linalg.solve(T, raw.assembled @ T) - til.assembled
    assert np.abs(D[: m - 1]).max() < 1e-12 and np.abs(D[m:]).max() < 1e-12


def test_tilde_zero_spectrum_is_block_union():
    r = random_class(RNG)
    op = assemble_class_operator(r, 10, "tilde_zero")
    ev = np.sort_complex(np.linalg.eigvals(op.assembled))
    parts = np.sort_complex(np.concatenate([
        np.linalg.eigvals(op.M1 * r.sin_theta), np.linalg.eigvals(op.M2 * r.sin_theta)]))
    assert np.abs(ev - parts).max() < 1e-10


def test_nilpotent_raw_squares_to_zero():
    r = reduce_parameters(WaveVector((0, 2, 0)), WaveVector((1, 0, 0)), (0, 1, 0))
    M = assemble_class_operator(r, 10, "raw").assembled
    assert np.abs(M @ M).max() == 0.0


def test_tilde_form_refused_for_nilpotent():
    r = ReducedClassParams.from_values(0.0, 1.0, 0.0)
    with pytest.raises(NilpotentClassError, match="nilpotent class: tilde form undefined"):
        assemble_class_operator(r, 3, "tilde_eta")


def test_theta_to_zero_converges_to_nilpotent():
    ref = assemble_class_operator(ReducedClassParams.from_values(0.3, 0.8, 0.0), 6, "raw").assembled
    errs = [
        np.abs(assemble_class_operator(ReducedClassParams.from_values(0.3, 0.8, th), 6, "raw").assembled - ref).max()
        for th in (1e-1, 1e-2, 1e-3)
    ]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 2e-3


def test_constant_block_spectrum_in_band():
    op = assemble_class_operator(random_class(RNG), 10, "tilde_zero")
    ev = np.linalg.eigvals(op.M1)
    assert np.abs(ev.real).max() < 1e-10 and np.abs(ev.imag).max() <= 2 + 1e-10
    assert np.array_equal(op.M1, -op.M1.T)


# --- deformation generator -------------------------------------------------------------

def test_toeplitz_B_small():
    assert np.array_equal(toeplitz_B(1), [[-1, 0, 1], [0, -1, 0], [-1, 0, -1]])
    B = toeplitz_B(6)
    d = np.subtract.outer(np.arange(13), np.arange(13))
    assert np.all(B[d % 2 == 1] == 0)
    assert np.all(np.diag(B) == -1)
    with pytest.raises(ValueError):
        toeplitz_B(0)


def test_similarity_inverse_and_exponential():
    from scipy.linalg import expm

    N, eta = 4, 0.7
    S = similarity(eta, N)
    assert np.allclose(S @ similarity(-eta, N), np.eye(2 * (2 * N + 1)))
    assert np.allclose(expm(eta * lax_generator(N)), S)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(0.1, 2.0), st.floats(0.05, 3.09))
def test_deformation_identity_interior(ax, ay, th):
    # the orientation that holds with this B: M3 = B M2 - M1 B
    r = ReducedClassParams.from_values(ax, ay, th)
    N = 20
    op = assemble_class_operator(r, N, "tilde_eta")
    B = toeplitz_B(N)
    R = op.M3 - (B @ op.M2 - op.M1 @ B)
    assert np.abs(R[2:-2, 2:-2]).max() < 1e-12


def test_explicit_similarity_on_interior():
    r = random_class(RNG)
    N = 20
    m = 2 * N + 1
    for eta in (0.1, 1.0, 10.0):
        Mt = assemble_class_operator(r, N, "tilde_eta", eta=eta).assembled
        M0 = assemble_class_operator(r, N, "tilde_zero").assembled
        conj = similarity(-eta, N) @ Mt @ similarity(eta, N)
        D = conj - M0
        inner = np.r_[2:m - 2, m + 2:2 * m - 2]
        assert np.abs(D[np.ix_(inner, inner)]).max() < 1e-12 * max(1, eta)


# --- full-lattice linearisation ------------------------------------------------------------

def test_jacobian_block_cases():
    f = ShearFlowParams.from_indices((1, 0, 0), (0, 1, 1))
    j = (0, 1, 2)
    assert np.all(jacobian_block(j, (0, 1, 1), f) == 0)
    assert np.allclose(jacobian_block(j, (1, 1, 2), f), chi_pm((1, 1, 2), (1, 0, 0), (0, 1, 1), 1))
    assert np.allclose(jacobian_block(j, (-1, 1, 2), f), chi_pm((-1, 1, 2), (1, 0, 0), (0, 1, 1), -1))


def test_full_jacobian_shape_and_sparsity():
    f = ShearFlowParams.from_indices((1, 0, 0), (0, 1, 1))
    idx, J = full_jacobian(f, 2)
    assert J.shape == (3 * len(idx), 3 * len(idx))
    blocks = J.reshape(len(idx), 3, len(idx), 3).any(axis=(1, 3))
    assert blocks.sum(axis=1).max() <= 2
