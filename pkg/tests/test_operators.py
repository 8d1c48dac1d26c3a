import math

import numpy as np
import pytest

from molbattery.errors import ContractViolation, ResourceError, TruncationError
from molbattery.linalg import dag, expm, herm_eig, kron
from molbattery.operators import (
    BatteryParams,
    FermionRegister,
    FockSpace,
    battery_hamiltonian,
    battery_operators,
    boson_annihilator,
    check_truncation,
    electronic_transition,
    fermion_mode_ops,
    number_operator,
    polaron_transform,
    weyl,
    weyl_normal_ordered,
)


def test_fock_space_min_size():
    with pytest.raises(ContractViolation):
        FockSpace(1)


def test_annihilator():
    assert np.allclose(boson_annihilator(2), [[0, 1], [0, 0]])
    N = 6
    A = boson_annihilator(N)
    comm = A @ A.T - A.T @ A
    expect = np.eye(N)
    expect[-1, -1] = -(N - 1)
    assert np.allclose(comm, expect)
    assert np.allclose(np.linalg.eigvalsh(A.T @ A), np.arange(N))


def test_weyl_basic():
    assert np.allclose(weyl(0, 5), np.eye(5))
    alpha = 0.7 - 0.4j
    N = int(4 * abs(alpha) ** 2 + 20)
    W = weyl(alpha, N)
    n = dag(W) @ number_operator(N) @ W
    assert abs(n[0, 0] - abs(alpha) ** 2) < 1e-8
    assert np.max(np.abs(W @ weyl(-alpha, N) - np.eye(N))) < 1e-8


def test_weyl_normal_ordered_oracle():
    alpha, N = 0.9, 60
    W, Wn = weyl(alpha, N), weyl_normal_ordered(alpha, N)
    k = 20
    assert np.max(np.abs(W[:k, :k] - Wn[:k, :k])) < 1e-9


def test_weyl_warns_for_large_displacement():
    with pytest.warns(UserWarning):
        weyl(3.0, 20)


def test_battery_hamiltonian_undisplaced():
    p = BatteryParams(xi0=0.0, N=8)
    A = boson_annihilator(8)
    expect = kron(np.eye(2), 0.1 * A.T @ A) + kron(np.diag([0, 1.0]), np.eye(8))
    assert np.allclose(battery_hamiltonian(p), expect)


def test_battery_spectrum_two_ladders():
    p = BatteryParams(xi0=1.5, omega0=0.1, E_el=1.0, N=40)
    w = np.sort(herm_eig(battery_hamiltonian(p))[0])
    n = np.arange(p.N)
    exact = np.sort(np.concatenate([0.1 * n, 1.0 + 0.1 * n]))
    skip = math.ceil(p.xi0**2) + 6
    # pair each clean eigenvalue with the nearest exact level below the polluted top
    clean = exact[exact < 0.1 * (p.N - skip)]
    for e in clean:
        assert np.min(np.abs(w - e)) < 1e-9


def test_polaron_diagonalizes():
    p = BatteryParams(xi0=0.8, N=40)
    U = polaron_transform(p)
    D = dag(U) @ battery_hamiltonian(p) @ U
    k = p.N // 2  # truncation pollution of W(xi0) reaches down from the top
    idx = np.r_[0:k, p.N:p.N + k]
    block = D[np.ix_(idx, idx)]
    assert np.max(np.abs(block - np.diag(np.diag(block)))) < 1e-9


def test_polaron_structure():
    assert np.allclose(polaron_transform(BatteryParams(xi0=0.0, N=5)), np.eye(10))
    p = BatteryParams(xi0=0.6, N=30)
    U = polaron_transform(p)
    assert np.max(np.abs(dag(U) @ U - np.eye(2 * p.N))) < 1e-9
    lhs = U @ kron(electronic_transition(1, 0), np.eye(p.N)) @ dag(U)
    assert np.max(np.abs(lhs - kron(electronic_transition(1, 0), weyl(p.xi0, p.N)))) < 1e-9
    ops = battery_operators(p)
    A = kron(np.eye(2), boson_annihilator(p.N))
    k = p.N - 8
    diff = (U @ A @ dag(U) - ops["B"])[:k, :k]
    assert np.max(np.abs(diff)) < 1e-9


def test_heisenberg_displaced_coordinate():
    p = BatteryParams(xi0=0.8, N=40)
    H = battery_hamiltonian(p)
    ops = battery_operators(p)
    A = kron(np.eye(2), boson_annihilator(p.N))
    B, P1 = ops["B"], ops["P1"]
    # compare on low-lying states only
    w, V = herm_eig(H)
    low = V[:, w < 1.5]
    for t in np.array([0.3, 1.7, 5.0]) / p.omega0:
        Ut = expm(-1j * H * t)
        lhs = dag(Ut) @ (A + dag(A)) @ Ut
        rhs = np.exp(-1j * p.omega0 * t) * B + np.exp(1j * p.omega0 * t) * dag(B) + 2 * p.xi0 * P1
        assert np.max(np.abs(dag(low) @ (lhs - rhs) @ low)) < 1e-8


def test_heisenberg_electronic_transition():
    p = BatteryParams(xi0=0.8, N=40)
    H = battery_hamiltonian(p)
    w, V = herm_eig(H)
    low = V[:, w < 1.5]
    sigma = kron(electronic_transition(1, 0), np.eye(p.N))
    for t in np.array([0.3, 1.7, 5.0]) / p.omega0:
        Ut = expm(-1j * H * t)
        lhs = dag(Ut) @ sigma @ Ut
        osc = weyl(p.xi0, p.N) @ dag(weyl(np.exp(1j * p.omega0 * t) * p.xi0, p.N))
        rhs = np.exp(1j * p.E_el * t) * kron(electronic_transition(1, 0), osc)
        assert np.max(np.abs(dag(low) @ (lhs - rhs) @ low)) < 1e-8


def test_truncation_guard():
    with pytest.raises(TruncationError):
        check_truncation(BatteryParams(xi0=2.0, N=12))
    assert check_truncation(BatteryParams()) < 1e-12


def test_fermion_single_mode():
    (c, cd), = fermion_mode_ops(1)
    assert np.allclose(c, [[0, 1], [0, 0]])


def test_fermion_anticommutators():
    ops = fermion_mode_ops(4)
    I = np.eye(16)
    for i, (ci, cdi) in enumerate(ops):
        for j, (cj, cdj) in enumerate(ops):
            assert np.array_equal(ci @ cdj + cdj @ ci, I * (i == j))
            assert np.array_equal(ci @ cj + cj @ ci, 0 * I)


def test_fermion_number_is_popcount():
    ops = fermion_mode_ops(3)
    Ntot = sum(cd @ c for c, cd in ops)
    assert np.array_equal(np.diag(Ntot), [bin(i).count("1") for i in range(8)])


def test_fermion_register_limit():
    with pytest.raises(ResourceError):
        FermionRegister.from_bands(range(7), range(-7, 0))


def test_register_ordering():
    reg = FermionRegister.from_bands([2.0, 1.0], [-1.0, -2.0])
    assert reg.labels == (("A", 1.0), ("A", 2.0), ("B", -2.0), ("B", -1.0))
