"""Refined weak coupling: second-order cumulant K2(t), its Lamb-shift part,
the completely positive map exp(lambda^2 K2(t)) and comparison with the
Davies semigroup.

Everything here lives in the interaction picture generated by the
(renormalized) Hamiltonian ``H``.  With the Bohr decomposition
``S(s) = sum_w exp(-i w s) S_w`` the cumulant becomes

    K2(t) rho = sum_{w,w'} Gamma_{w w'}(t) (S_w rho S_w'^+ - 1/2 {S_w'^+ S_w, rho})
                - i [H_L(t), rho]

with ``Gamma_{w w'}(t) = int_0^t int_0^t F(s-u) exp(-i w s + i w' u) ds du``,
a positive semidefinite matrix, so every K2(t) is a GKLS generator.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .davies import GKLSGenerator, bohr_decompose
from .errors import ContractViolation, ExtrapolationError, NumericalFailure
from .linalg import dag, devec, expm, trace_distance, vec
from .spectra import CouplingSpectrum


# --------------------------------------------------------------------------
# Bath correlation functions F(tau) = Tr(rho_R R(tau) R)
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentialCorrelation:
    """``F(tau) = sum_j c_j exp(-kappa_j |tau|) exp(-i Omega_j tau)``, real ``c_j``.

    The spectrum is a sum of Lorentzians
    ``G(w) = sum_j 2 c_j kappa_j / (kappa_j^2 + (w + Omega_j)^2)``.
    """

    c: tuple
    kappa: tuple
    Omega: tuple

    def __post_init__(self):
        c, k, W = (tuple(np.atleast_1d(np.asarray(x, dtype=float)).tolist()) for x in (self.c, self.kappa, self.Omega))
        if not (len(c) == len(k) == len(W)) or len(c) == 0:
            raise ContractViolation("c, kappa, Omega must have equal non-zero length")
        if any(x <= 0 for x in k):
            raise ContractViolation("decay rates kappa must be positive")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "kappa", k)
        object.__setattr__(self, "Omega", W)

    @classmethod
    def single(cls, c, kappa, Omega=0.0):
        return cls((c,), (kappa,), (Omega,))

    @classmethod
    def kms_pair(cls, c, kappa, Omega, T):
        """Two Lorentzians centred at ``w = -Omega`` and ``w = +Omega`` whose
        weights make ``G(-Omega) = exp(-Omega/T) G(Omega)`` hold exactly at
        the resonance frequency ``Omega``.

        Suitable as a thermal bath for a system whose only Bohr frequencies
        are ``+-Omega``.
        """
        # G(w) = 2 c+ k/(k^2+(w-W)^2) + 2 c- k/(k^2+(w+W)^2) with c+ at w = +W
        lor = lambda x: 2 * kappa / (kappa**2 + x**2)  # noqa: E731
        r = math.exp(-Omega / T)
        # G(W) = c+ L(0) + c- L(2W),  G(-W) = c+ L(2W) + c- L(0)
        # G(-W) = r G(W)  =>  c- (L0 - r L2) = c+ (r L0 - L2)
        L0, L2 = lor(0.0), lor(2 * Omega)
        ratio = (r * L0 - L2) / (L0 - r * L2)
        if ratio < 0:
            raise ContractViolation("kms_pair needs kappa small compared to Omega for positive weights")
        cp = c / (1 + ratio)
        cm = c - cp
        # term exp(-i Omega_j tau) is centred at w = -Omega_j
        return cls((cp, cm), (kappa, kappa), (-Omega, Omega))

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        out = np.zeros(tau.shape, dtype=complex)
        for c, k, W in zip(self.c, self.kappa, self.Omega):
            out += c * np.exp(-k * np.abs(tau) - 1j * W * tau)
        return out

    def spectrum(self, omega):
        w = np.asarray(omega, dtype=float)
        out = np.zeros(w.shape)
        for c, k, W in zip(self.c, self.kappa, self.Omega):
            out += 2 * c * k / (k**2 + (w + W) ** 2)
        return out

    def half_transform(self, omega):
        """``int_0^inf F(-v) exp(i w v) dv``; real part is ``G(w)/2``."""
        w = np.asarray(omega, dtype=float)
        out = np.zeros(w.shape, dtype=complex)
        for c, k, W in zip(self.c, self.kappa, self.Omega):
            out += c / (k - 1j * (W + w))
        return out

    @property
    def max_time(self):
        return math.inf


@dataclass(frozen=True, eq=False)
class TabulatedCorrelation:
    """Samples of ``F`` on ``tau >= 0`` (complex); ``F(-tau) = conj F(tau)``.

    Linear interpolation of real and imaginary parts.  Quadrature-based
    spectra integrate over the sampled window only.
    """

    tau: tuple
    values: tuple

    def __post_init__(self):
        t = np.asarray(self.tau, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ContractViolation("tabulated correlation needs equal-length 1-D samples")
        if t[0] != 0 or np.any(np.diff(t) <= 0):
            raise ContractViolation("tau samples must start at 0 and increase strictly")
        if abs(v[0].imag) > 1e-12 * max(abs(v[0]), 1e-300):
            raise ContractViolation("F(0) must be real for a Hermitian correlation")
        object.__setattr__(self, "tau", t)
        object.__setattr__(self, "values", v)

    @property
    def max_time(self):
        return float(self.tau[-1])

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        a = np.abs(tau)
        if np.any(a > self.tau[-1] * (1 + 1e-12)):
            raise ExtrapolationError(f"|tau| beyond tabulated range {self.tau[-1]}")
        re = np.interp(a, self.tau, self.values.real)
        im = np.interp(a, self.tau, self.values.imag)
        return np.where(tau >= 0, re + 1j * im, re - 1j * im)

    def spectrum(self, omega, **quad_kw):
        out = []
        for w in np.atleast_1d(omega):
            # G(w) = 2 Re int_0^tmax F(tau) exp(-i w tau) dtau
            val = _cquad(lambda x: self(x) * np.exp(-1j * w * x), 0.0, self.max_time, **quad_kw)
            out.append(2 * val.real)
        out = np.array(out)
        return float(out[0]) if np.ndim(omega) == 0 else out

    @classmethod
    def from_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        if data.shape[1] == 2:
            return cls(tuple(data[:, 0]), tuple(data[:, 1].astype(complex)))
        return cls(tuple(data[:, 0]), tuple(data[:, 1] + 1j * data[:, 2]))


class CorrelationSpectrum(CouplingSpectrum):
    """``omega -> scale * G(omega)`` for a correlation function ``F``."""

    law = "correlation"

    def __init__(self, correlation, scale=1.0):
        self.correlation = correlation
        self.scale = float(scale)

    def _evaluate(self, w):
        return self.scale * np.asarray(self.correlation.spectrum(w), dtype=float)


# --------------------------------------------------------------------------
# Time integrals
# --------------------------------------------------------------------------

def _E(p, t):
    """``(exp(p t) - 1) / p`` with the ``p -> 0`` limit ``t``."""
    p = np.asarray(p, dtype=complex)
    x = p * t
    small = np.abs(x) < 1e-6
    safe = np.where(small, 1.0, p)
    big = np.expm1(np.where(small, 0.0, x)) / safe
    series = t * (1 + x / 2 + x * x / 6)
    return np.where(small, series, big)


def _closed_form_coefficients(F, freqs, t):
    """``Gamma[w, w']`` and ``a[w', w]`` for an exponential correlation."""
    w = np.asarray(freqs, dtype=float)
    wi = w[:, None]   # omega
    wj = w[None, :]   # omega'
    gamma = np.zeros((w.size, w.size), dtype=complex)
    a = np.zeros((w.size, w.size), dtype=complex)  # a[w', w]
    for c, k, Om in zip(F.c, F.kappa, F.Omega):
        delta = wj - wi   # omega' - omega
        # region s > u (tau = s - u > 0)
        w1 = -k - 1j * (Om + wj)
        # region u > s
        w2 = -k + 1j * (Om + wi)
        e0 = _E(1j * delta, t)
        gamma += (c / w1) * (_E(1j * delta + w1, t) - e0)
        gamma += (c / w2) * (_E(1j * delta + w2, t) - e0)
        # a_{w' w}: rows indexed by w', columns by w
        z = -k + 1j * (Om + wj)              # depends on omega (column index)
        dlt = wi - wj                         # omega'(row) - omega(col)
        a += (c / z) * (_E(1j * dlt + z, t) - _E(1j * dlt, t))
    return gamma, a


def _cquad(f, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=400, points=None):
    vals = []
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for part in (lambda x: f(x).real, lambda x: f(x).imag):
            try:
                v, err = integrate.quad(part, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=limit, points=points)
            except integrate.IntegrationWarning as exc:
                raise NumericalFailure("quadrature did not converge", interval=(lo, hi), detail=str(exc)) from None
            vals.append(v)
    return complex(vals[0], vals[1])


def _window_integral(delta, lo, hi):
    """``int_lo^hi exp(i delta u) du``."""
    if hi <= lo:
        return 0.0
    if abs(delta) * (hi - lo) < 1e-8:
        return (hi - lo) * (1 + 0.5j * delta * (hi + lo))
    return (np.exp(1j * delta * hi) - np.exp(1j * delta * lo)) / (1j * delta)


def _quadrature_coefficients(F, freqs, t, **quad_kw):
    """Same coefficients as ``_closed_form_coefficients`` by 1-D quadrature."""
    w = np.asarray(freqs, dtype=float)
    n = w.size
    gamma = np.zeros((n, n), dtype=complex)
    a = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            om, omp = w[i], w[j]
            dl = omp - om

            def g_int(tau, om=om, dl=dl):
                lo, hi = max(0.0, -tau), min(t, t - tau)
                return F(tau) * np.exp(-1j * om * tau) * _window_integral(dl, lo, hi)

            gamma[i, j] = _cquad(g_int, -t, t, points=[0.0], **quad_kw)
            # a[w', w] with w' = w[i], w = w[j]
            omp2, om2 = w[i], w[j]
            dl2 = omp2 - om2

            def a_int(v, om2=om2, dl2=dl2):
                return F(-v) * np.exp(1j * om2 * v) * _window_integral(dl2, v, t)

            a[i, j] = _cquad(a_int, 0.0, t, **quad_kw)
    return gamma, a


def kernel_coefficients(F, freqs, t, method="auto", **quad_kw):
    """Time-integral coefficient matrices ``(Gamma, a)`` on a frequency list.

    ``Gamma[i, j] = int int_{[0,t]^2} F(s-u) exp(-i w_i s + i w_j u)`` and
    ``a[i, j] = int_0^t ds int_0^s du F(u-s) exp(i w_i s - i w_j u)``.
    """
    if t < 0:
        raise ContractViolation("t must be non-negative")
    if t > getattr(F, "max_time", math.inf):
        raise ExtrapolationError("t exceeds the tabulated correlation window")
    if method == "auto":
        method = "closed" if isinstance(F, ExponentialCorrelation) else "quadrature"
    if method == "closed":
        if not isinstance(F, ExponentialCorrelation):
            raise ContractViolation("closed-form coefficients need an exponential correlation")
        return _closed_form_coefficients(F, freqs, t)
    if method == "quadrature":
        return _quadrature_coefficients(F, freqs, t, **quad_kw)
    raise ContractViolation(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# Cumulant superoperator
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CumulantK2:
    """Second cumulant split into its dissipative and Hamiltonian parts.

    ``dissipator`` : d^2 x d^2 superoperator (column stacking)
    ``lamb_shift`` : Hermitian ``H_L(t)``
    ``kossakowski`` : ``Gamma`` over the Bohr frequencies in ``frequencies``
    """

    t: float
    frequencies: np.ndarray
    kossakowski: np.ndarray
    dissipator: np.ndarray
    lamb_shift: np.ndarray

    @property
    def total(self):
        H = self.lamb_shift
        d = H.shape[0]
        I = np.eye(d)
        return self.dissipator - 1j * (np.kron(I, H) - np.kron(H.T, I))

    def superop(self, lamb_shift=False):
        return self.total if lamb_shift else self.dissipator


def _assemble(dec, gamma, a):
    """Superoperator and Lamb shift in the original basis from coefficients."""
    V = dec.basis
    S = dec.S_eig
    d = S.shape[0]
    f = np.where(dec.freq_index < 0, 0, dec.freq_index)
    # sandwich part in the eigenbasis: T[a,k,b,l] = Gamma[f(a,k), f(b,l)] S[a,k] conj(S[b,l])
    # maps rho[k,l] to out[a,b]; row index a + d*b, column k + d*l
    G4 = gamma[f[:, :, None, None], f[None, None, :, :]]
    T = G4 * S[:, :, None, None] * np.conj(S)[None, None, :, :]
    M = T.transpose(2, 0, 3, 1).reshape(d * d, d * d)
    # X = A + A^+ = sum Gamma_{w w'} S_w'^+ S_w ;  X[c,k] = sum_a Gamma[f(a,k), f(a,c)] conj(S[a,c]) S[a,k]
    Gx = gamma[f[:, None, :], f[:, :, None]]          # [a, c, k] -> Gamma[f(a,k), f(a,c)]
    X = np.einsum("ack,ac,ak->ck", Gx, np.conj(S), S)
    # A = sum a_{w' w} S_w'^+ S_w ;  A[c,k] = sum_a a[f(a,c), f(a,k)] conj(S[a,c]) S[a,k]
    Ax = a[f[:, :, None], f[:, None, :]]              # [a, c, k] -> a[f(a,c), f(a,k)]
    A = np.einsum("ack,ac,ak->ck", Ax, np.conj(S), S)
    I = np.eye(d)
    M = M - 0.5 * (np.kron(I, X) + np.kron(X.T, I))
    HL = -0.5j * (A - dag(A))
    HL = 0.5 * (HL + dag(HL))
    # back to the original basis: vec(V r V^+) = kron(conj V, V) vec(r)
    U = np.kron(np.conj(V), V)
    return U @ M @ dag(U), V @ HL @ dag(V)


def cumulant_k2(H, S, F, t, method="auto", cluster_tol=None, **quad_kw):
    """Second-order cumulant ``K2(t)`` (without the factor lambda^2).

    ``S`` must be Hermitian.  The returned ``dissipator`` is the double-
    integral term; ``lamb_shift`` is the Hermitian ``H_L(t)``.
    """
    S = np.asarray(S, dtype=complex)
    if np.max(np.abs(S - dag(S))) > 1e-10 * max(np.max(np.abs(S)), 1e-300):
        raise ContractViolation("cumulant_k2 requires a Hermitian coupling operator")
    dec = bohr_decompose(H, S, cluster_tol)
    d = S.shape[0]
    if len(dec.frequencies) == 0 or t == 0:
        z = np.zeros((d * d, d * d), dtype=complex)
        n = len(dec.frequencies)
        return CumulantK2(float(t), dec.frequencies, np.zeros((n, n), complex), z, np.zeros((d, d), complex))
    gamma, a = kernel_coefficients(F, dec.frequencies, t, method, **quad_kw)
    gamma = 0.5 * (gamma + dag(gamma))
    M, HL = _assemble(dec, gamma, a)
    return CumulantK2(float(t), dec.frequencies, gamma, M, HL)


def kossakowski_min_eigenvalue(k2):
    if k2.kossakowski.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(k2.kossakowski).min())


def rwc_map(lam, k2, lamb_shift=False, check=True, tol=1e-8):
    """``exp(lambda^2 K2(t))`` as a superoperator.

    With ``check`` the Choi matrix is tested and a failure raises
    ``NumericalFailure`` (it can only come from an assembly error).
    """
    from .linalg import is_cptp

    K = k2.superop(lamb_shift) if isinstance(k2, CumulantK2) else np.asarray(k2)
    Phi = expm((lam**2) * K)
    if check:
        ok, info = is_cptp(Phi, tol=tol, return_details=True)
        if not ok:
            raise NumericalFailure("refined map is not CPTP", **info)
    return Phi


# --------------------------------------------------------------------------
# Markovian limit
# --------------------------------------------------------------------------

def asymptotic_lamb_shift(H, S, F, cluster_tol=None):
    """``H_LS = sum_w Im(int_0^inf F(-v) e^{i w v} dv) S_w^+ S_w`` (no lambda^2)."""
    dec = bohr_decompose(H, S, cluster_tol)
    out = np.zeros_like(dec.S_eig)
    if not hasattr(F, "half_transform"):
        raise ContractViolation("asymptotic Lamb shift needs an analytic correlation")
    for w, Sw in zip(dec.frequencies, dec.components):
        out = out + np.imag(F.half_transform(w)) * (dag(Sw) @ Sw)
    return 0.5 * (out + dag(out))


def davies_limit(H, S, F, lam, frame="interaction", lamb_shift=False, cluster_tol=None):
    """Davies generator with rates ``lambda^2 G(w)``.

    ``frame="interaction"`` drops ``H`` (the generator then compares
    directly with ``lambda^2 K2(t) / t``); ``"schroedinger"`` keeps it.
    """
    dec = bohr_decompose(H, S, cluster_tol)
    G = np.asarray(F.spectrum(dec.frequencies), dtype=float)
    if np.any(G < -1e-14):
        raise NumericalFailure("bath spectrum negative at a Bohr frequency")
    channels = tuple((lam**2 * max(g, 0.0), Sw) for g, Sw in zip(G, dec.components) if g > 0)
    H = np.asarray(H, dtype=complex)
    Hgen = np.zeros_like(H) if frame == "interaction" else H.copy()
    if lamb_shift:
        Hgen = Hgen + lam**2 * asymptotic_lamb_shift(H, S, F, cluster_tol)
    return GKLSGenerator(Hgen, channels)


def markov_compare(H, S, F, lam, t_grid, rho0, lamb_shift=False, method="auto"):
    """Trace distance between the refined map and the Davies semigroup.

    Both evolutions are taken in the interaction picture; since the
    Davies dissipator commutes with the free evolution this equals the
    Schroedinger-picture distance.
    """
    from .davies import generator_superop

    L = generator_superop(davies_limit(H, S, F, lam, lamb_shift=lamb_shift))
    rho0 = np.asarray(rho0, dtype=complex)
    d = rho0.shape[0]
    rows = []
    for t in t_grid:
        if t == 0:
            rows.append((0.0, 0.0))
            continue
        k2 = cumulant_k2(H, S, F, t, method=method)
        r_rwc = devec(rwc_map(lam, k2, lamb_shift=lamb_shift, check=False) @ vec(rho0), d)
        r_dav = devec(expm(t * L) @ vec(rho0), d)
        rows.append((float(t), trace_distance(0.5 * (r_rwc + dag(r_rwc)), 0.5 * (r_dav + dag(r_dav)))))
    return rows


def superop_distance(A, B):
    """Spectral-norm distance between two superoperators."""
    return float(np.linalg.norm(np.asarray(A) - np.asarray(B), 2))
