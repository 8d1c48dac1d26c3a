import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molbattery.errors import ContractViolation, InputError
from molbattery.linalg import (
    choi_matrix,
    dag,
    devec,
    expm,
    herm_eig,
    is_cptp,
    jacobi_eigh,
    kron,
    partial_trace,
    random_density,
    random_hermitian,
    random_unitary,
    sandwich,
    trace_distance,
    trace_norm,
    vec,
    von_neumann_entropy,
)


def test_herm_eig_trivial_cases():
    w, V = herm_eig(np.eye(3))
    assert np.allclose(w, [1, 1, 1])
    w, _ = herm_eig(np.array([[0, 1], [1, 0]]))
    assert np.allclose(w, [-1, 1])


@pytest.mark.parametrize("d", [8, 64, 256])
def test_herm_eig_reconstruction(rng, d):
    H = random_hermitian(d, rng)
    w, V = herm_eig(H)
    assert np.all(np.diff(w) >= 0)
    assert np.max(np.abs((V * w) @ dag(V) - H)) <= 1e-11 * np.max(np.abs(H))
    assert np.max(np.abs(dag(V) @ V - np.eye(d))) <= 1e-11


def test_jacobi_matches_lapack(rng):
    H = random_hermitian(12, rng)
    w_j, V_j = jacobi_eigh(H)
    w_l, _ = herm_eig(H)
    assert np.allclose(np.sort(w_j), w_l, atol=1e-11)
    assert np.max(np.abs((V_j * w_j) @ dag(V_j) - H)) < 1e-11


def test_herm_eig_rejects_bad_input():
    with pytest.raises(ContractViolation):
        herm_eig(np.ones((2, 3)))
    with pytest.raises(ContractViolation):
        herm_eig(np.array([[0, 1], [0, 0]]))


def test_expm_trivial():
    assert np.allclose(expm(np.zeros((3, 3))), np.eye(3))
    assert np.allclose(expm(np.diag([0.3, -1.2])), np.diag(np.exp([0.3, -1.2])))


def test_expm_vs_taylor(rng):
    M = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    M /= np.linalg.norm(M, 2)
    term = np.eye(5, dtype=complex)
    series = term.copy()
    for k in range(1, 31):
        term = term @ M / k
        series += term
    assert np.max(np.abs(expm(M) - series)) < 1e-12


def test_expm_commuting_product(rng):
    H = random_hermitian(4, rng)
    A, B = 0.7j * H, -0.2j * H @ H
    assert np.allclose(expm(A + B), expm(A) @ expm(B), atol=1e-10)


def test_expm_rejects_nonfinite():
    with pytest.raises(InputError):
        expm(np.array([[np.nan, 0], [0, 1]]))


def test_partial_trace_product(rng):
    rho, sigma = random_density(2, rng), random_density(3, rng)
    out = partial_trace(kron(rho, 2.0 * sigma), [2, 3], keep=[0])
    assert np.allclose(out, rho * 2.0)
    M = kron(rho, sigma)
    assert np.allclose(partial_trace(M, [2, 3], keep=[0, 1]), M)


def test_partial_trace_trace(rng):
    rho = random_density(12, rng)
    for keep in ([0], [1], [2], [0, 2]):
        out = partial_trace(rho, [2, 3, 2], keep=keep)
        assert abs(np.trace(out) - np.trace(rho)) < 1e-12
    with pytest.raises(InputError):
        partial_trace(rho, [2, 2], keep=[0])


def test_trace_norm(rng):
    assert math.isclose(trace_norm(random_density(4, rng)), 1.0, abs_tol=1e-12)
    assert math.isclose(trace_norm(np.diag([1.0, -1.0])), 2.0)
    M = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    U, V = random_unitary(5, rng), random_unitary(5, rng)
    assert abs(trace_norm(M) - trace_norm(U @ M @ V)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_trace_distance_range(d, seed):
    rng = np.random.default_rng(seed)
    D = trace_distance(random_density(d, rng), random_density(d, rng))
    assert -1e-12 <= D <= 1 + 1e-12


def test_entropy_cases():
    psi = np.array([1, 1j]) / math.sqrt(2)
    assert abs(von_neumann_entropy(np.outer(psi, psi.conj()))) < 1e-12
    assert math.isclose(von_neumann_entropy(np.eye(5) / 5), math.log(5), rel_tol=1e-12)


def test_entropy_thermal_oscillator():
    b, N = 10.0, 40
    p = np.exp(-b * np.arange(N))
    p /= p.sum()
    closed = b / math.expm1(b) - math.log1p(-math.exp(-b))
    assert abs(von_neumann_entropy(np.diag(p)) - closed) < 1e-10


def test_vectorization_contract(rng):
    A, B, X = (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(3))
    assert np.allclose(devec(sandwich(A, B) @ vec(X)), A @ X @ B)
    assert np.allclose(sandwich(A, B), np.kron(B.T, A))


def test_choi_identity_and_transpose():
    d = 2
    C = choi_matrix(np.eye(d * d))
    omega = np.zeros(d * d)
    omega[[0, 3]] = 1
    assert np.allclose(C, np.outer(omega, omega))
    assert is_cptp(np.eye(4))
    T = np.zeros((4, 4))
    for i in range(2):
        for j in range(2):
            T[j + 2 * i, i + 2 * j] = 1  # vec(X^T)
    assert not is_cptp(T)
