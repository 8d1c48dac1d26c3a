import math

import numpy as np
import pytest

from molbattery.davies import generator_superop
from molbattery.errors import ContractViolation, ExtrapolationError
from molbattery.linalg import (
    apply_superop,
    dag,
    devec,
    expm,
    gibbs_state,
    is_cptp,
    random_density,
    random_hermitian,
    trace_norm,
    vec,
)
from molbattery.rwc import (
    ExponentialCorrelation,
    TabulatedCorrelation,
    cumulant_k2,
    davies_limit,
    kernel_coefficients,
    kossakowski_min_eigenvalue,
    markov_compare,
    rwc_map,
    superop_distance,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)


def qubit(omega=1.0):
    return np.diag([0.0, omega]).astype(complex), SX


def dyson_apply(H, S, F, t, rho, n=80):
    """Second-order Dyson term on ``rho`` by Gauss-Legendre on the triangle ``0 < u < s < t``.

    ``conj F(tau)`` plays the role of ``<R(tau) R>``; interaction picture
    ``S(s) = exp(iHs) S exp(-iHs)``.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1)
    w = 0.5 * w
    e, V = np.linalg.eigh(H)

    def S_at(s):
        U = (V * np.exp(1j * e * s)) @ dag(V)
        return U @ S @ dag(U)

    out = np.zeros_like(rho, dtype=complex)
    for i in range(n):
        s = t * x[i]
        Ss = S_at(s)
        for j in range(n):
            u = s * x[j]
            Su = S_at(u)
            C = complex(np.conj(F(s - u)))
            Cb = np.conj(C)
            out += t * w[i] * s * w[j] * (C * (Su @ rho @ Ss - Ss @ Su @ rho) + Cb * (Ss @ rho @ Su - rho @ Su @ Ss))
    return out


# --------------------------------------------------------------------------


def test_exponential_spectrum_is_lorentzian():
    F = ExponentialCorrelation.single(0.3, 0.7, 0.4)
    for w in (-2.0, 0.1, 1.3):
        tau = np.linspace(-80, 80, 400001)
        G = np.trapezoid(F(tau) * np.exp(-1j * w * tau), tau).real
        assert abs(G - float(F.spectrum(w))) < 1e-5


def test_closed_form_coefficients_match_quadrature():
    F = ExponentialCorrelation((0.4, 0.15), (0.8, 1.3), (0.3, -0.9))
    freqs = np.array([-1.1, 0.0, 0.7, 2.0])
    for t in (0.3, 2.5, 11.0):
        g1, a1 = kernel_coefficients(F, freqs, t, "closed")
        g2, a2 = kernel_coefficients(F, freqs, t, "quadrature")
        scale = max(np.abs(g1).max(), 1.0)
        assert np.abs(g1 - g2).max() < 1e-9 * scale
        assert np.abs(a1 - a2).max() < 1e-9 * scale


def test_zero_correlation_gives_zero_cumulant():
    H, S = qubit()
    F = ExponentialCorrelation.single(0.0, 1.0)
    k2 = cumulant_k2(H, S, F, 3.0)
    assert np.abs(k2.total).max() == 0.0


def test_kossakowski_psd_and_lamb_shift_hermitian(rng):
    F = ExponentialCorrelation((0.5, 0.2), (1.0, 0.4), (0.5, -1.5))
    for _ in range(5):
        H, S = random_hermitian(4, rng), random_hermitian(4, rng)
        for t in (0.5, 4.0, 30.0):
            k2 = cumulant_k2(H, S, F, t)
            assert kossakowski_min_eigenvalue(k2) > -1e-10 * np.abs(k2.kossakowski).max()
            assert np.abs(k2.lamb_shift - dag(k2.lamb_shift)).max() < 1e-12


def test_cumulant_matches_dyson_oracle(rng):
    F = ExponentialCorrelation((0.6, 0.25), (0.9, 1.7), (0.4, -1.2))
    H = random_hermitian(3, rng)
    S = random_hermitian(3, rng)
    t = 1.7
    k2 = cumulant_k2(H, S, F, t)
    for _ in range(3):
        rho = random_density(3, rng)
        # cumulant is in the interaction picture already
        ref = dyson_apply(H, S, F, t, rho, n=60)
        got = apply_superop(k2.total, rho)
        assert np.abs(got - ref).max() < 1e-9


def test_short_time_quadratic():
    H, S = qubit()
    F = ExponentialCorrelation.single(0.5, 1.0, 0.2)
    n1 = np.linalg.norm(cumulant_k2(H, S, F, 1e-3).total)
    n2 = np.linalg.norm(cumulant_k2(H, S, F, 2e-3).total)
    assert abs(n2 / n1 - 4.0) < 1e-2


def test_zero_coupling_and_zero_time_are_identity():
    H, S = qubit()
    F = ExponentialCorrelation.single(0.5, 1.0)
    k2 = cumulant_k2(H, S, F, 5.0)
    assert np.abs(rwc_map(0.0, k2) - np.eye(4)).max() == 0.0
    k0 = cumulant_k2(H, S, F, 0.0)
    assert np.abs(rwc_map(0.3, k0) - np.eye(4)).max() == 0.0


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_refined_map_cptp_qubit(t):
    H, S = qubit(1.3)
    F = ExponentialCorrelation.kms_pair(0.4, 0.2, 1.3, 0.5)
    for lamb in (False, True):
        Phi = rwc_map(0.5, cumulant_k2(H, S, F, t), lamb_shift=lamb)
        assert is_cptp(Phi, tol=1e-9)


def test_refined_map_cptp_random(rng):
    F = ExponentialCorrelation((0.3, 0.1), (0.7, 1.1), (0.2, -0.8))
    for d in (3, 5):
        H, S = random_hermitian(d, rng), random_hermitian(d, rng)
        for t in (0.1, 1.0, 10.0):
            Phi = rwc_map(0.4, cumulant_k2(H, S, F, t), lamb_shift=True)
            assert is_cptp(Phi, tol=1e-9)


def test_cumulant_rate_converges_to_davies():
    H, S = qubit(1.0)
    F = ExponentialCorrelation.single(0.5, 1.0, 0.3)
    lam = 0.1
    L = generator_superop(davies_limit(H, S, F, lam))
    errs = []
    for t in (20.0, 200.0):
        k2 = cumulant_k2(H, S, F, t)
        errs.append(superop_distance(lam**2 * k2.dissipator / t, L))
    assert errs[1] < 1e-3
    assert errs[1] < errs[0]


def test_markov_compare_limits():
    H, S = qubit(1.0)
    F = ExponentialCorrelation.single(0.5, 1.0, 0.3)
    rho0 = np.array([[0.3, 0.2 - 0.1j], [0.2 + 0.1j, 0.7]])
    rows = markov_compare(H, S, F, 0.2, [0.0, 1.0, 100.0], rho0)
    assert rows[0] == (0.0, 0.0)
    assert rows[1][1] > rows[2][1] or rows[1][1] < 1e-2
    assert rows[2][1] < 1e-2


def test_kms_pair_balance_and_gibbs_fixed_point():
    Om, T = 1.2, 0.4
    F = ExponentialCorrelation.kms_pair(0.3, 0.05, Om, T)
    assert abs(F.spectrum(-Om) / F.spectrum(Om) - math.exp(-Om / T)) < 1e-12
    H, S = qubit(Om)
    rho_b = gibbs_state(H, 1 / T)
    L = generator_superop(davies_limit(H, S, F, 0.3))
    assert trace_norm(devec(L @ vec(rho_b))) < 1e-12
    # K2(t) rho_b saturates (transient only), so the rate K2(t)/t leaves rho_b fixed as 1/t
    res = [trace_norm(devec(cumulant_k2(H, S, F, t).dissipator @ vec(rho_b))) for t in (1600.0, 6400.0)]
    assert abs(res[1] - res[0]) < 1e-8
    rate_scale = float(F.spectrum(Om))
    assert res[1] / 6400.0 < 1e-4 * rate_scale


def test_tabulated_correlation_matches_exponential():
    F = ExponentialCorrelation.single(0.5, 1.0, 0.3)
    tau = np.linspace(0, 40, 40001)
    Ft = TabulatedCorrelation(tuple(tau), tuple(F(tau)))
    freqs = np.array([-1.0, 1.0])
    g1, _ = kernel_coefficients(F, freqs, 3.0)
    g2, _ = kernel_coefficients(Ft, freqs, 3.0, epsabs=1e-10, epsrel=1e-8)
    assert np.abs(g1 - g2).max() < 1e-6
    with pytest.raises(ExtrapolationError):
        kernel_coefficients(Ft, freqs, 50.0)


def test_contracts():
    H, _ = qubit()
    F = ExponentialCorrelation.single(0.5, 1.0)
    with pytest.raises(ContractViolation):
        cumulant_k2(H, np.array([[0, 1], [0, 0]], dtype=complex), F, 1.0)
    with pytest.raises(ContractViolation):
        ExponentialCorrelation.single(0.5, -1.0)
    with pytest.raises(ContractViolation):
        kernel_coefficients(F, [0.0], -1.0)
