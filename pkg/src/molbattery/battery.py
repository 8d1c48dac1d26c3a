"""Molecular battery: a two-level molecule with a displaced reaction
coordinate, thermalized by a heat bath, charged by an excitonic bath and
discharged by ambient fluctuations.

Sideband convention: ``V_m`` moves the molecule from ``|1>`` (oscillator
level ``n`` of the displaced ladder) to ``|0>`` (level ``n + m``), so it
oscillates at the Bohr frequency ``E_el - m * omega0``.
"""
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import expit, gammaln

from .davies import GKLSGenerator, apply_generator, combine, stationary_state
from .errors import ContractViolation
from .linalg import dag, kron, trace_distance, trace_norm
from .operators import (
    battery_hamiltonian,
    battery_operators,
    check_truncation,
    conditioned_gibbs,
    boson_annihilator,
    electronic_projector,
    electronic_transition,
    polaron_transform,
    thermal_populations,
    weyl,
)
from .spectra import Chemical, GapGaussian

SIDEBAND_CUTOFF = 1e-14


# --------------------------------------------------------------------------
# Polaron-frame truncation
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PolaronFrame:
    """Battery operators truncated in the polaron frame.

    ``H = U (omega0 A^+A + E_el |1><1|) U^+`` and ``B = U A U^+`` agree
    with ``omega0 (A^+ - xi0|1><1|)(A - xi0|1><1|) + E_el|1><1|`` and
    ``A - xi0|1><1|`` except near the Fock edge, but keep exact ladder
    spectra, so ``U`` is an exact eigenbasis.
    """

    U: np.ndarray
    energies: np.ndarray
    H: np.ndarray
    B: np.ndarray
    P1: np.ndarray

    @property
    def basis(self):
        return self.energies, self.U


def polaron_frame(p):
    N = p.N
    U = polaron_transform(p)
    n = np.arange(N, dtype=float)
    energies = np.concatenate([p.omega0 * n, p.E_el + p.omega0 * n])
    H = (U * energies[None, :]) @ dag(U)
    H = 0.5 * (H + dag(H))
    A = kron(np.eye(2), boson_annihilator(N))
    B = U @ A @ dag(U)
    P1 = kron(electronic_projector(1), np.eye(N))
    return PolaronFrame(U, energies, H, B, P1)


# --------------------------------------------------------------------------
# Thermalization of the reaction coordinate
# --------------------------------------------------------------------------

def thermal_rc_generator(p, guard=True, frame=None):
    """Damped displaced oscillator plus pure electronic dephasing.

    Channels ``(gamma, B)``, ``(gamma exp(-omega0/T), B^+)`` and
    ``(Gamma, |1><1|)`` with ``B = A - xi0 |1><1|`` (polaron-frame
    truncation, see ``PolaronFrame``).
    """
    if guard:
        check_truncation(p)
    fr = polaron_frame(p) if frame is None else frame
    up = 0.0 if p.T == 0 else p.gamma * math.exp(-p.omega0 / p.T)
    channels = ((p.gamma, fr.B), (up, dag(fr.B)), (p.dephasing_rate, fr.P1))
    return GKLSGenerator(fr.H, channels)


# --------------------------------------------------------------------------
# Franck-Condon sidebands
# --------------------------------------------------------------------------

def _hermite_functions(x, n):
    """Normalized oscillator eigenfunctions ``psi_k(x)``, ``k < n``; shape ``(n, len(x))``."""
    out = np.empty((n, x.size))
    out[0] = math.pi**-0.25 * np.exp(-0.5 * x * x)
    if n > 1:
        out[1] = math.sqrt(2.0) * x * out[0]
    for k in range(1, n - 1):
        out[k + 1] = math.sqrt(2.0 / (k + 1)) * x * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


@lru_cache(maxsize=32)
def _fc_block(xi, size):
    """``D[a, b] = <a| W(xi) |b>`` of the untruncated displacement, ``a, b < size``.

    ``W(xi)`` shifts position by ``c = sqrt(2) xi``, so ``D[a, b]`` is the
    overlap of ``psi_a(x)`` with ``psi_b(x - c)``.  The product is a
    Gaussian centred at ``c/2`` times a polynomial of degree ``a + b``,
    integrated exactly by Gauss-Hermite with ``size + 1`` nodes.  Absolute
    errors stay at roundoff level for every entry, unlike the Laguerre
    closed form or the ladder recurrence, which both cancel
    catastrophically at large degree.
    """
    c = math.sqrt(2.0) * xi
    y, w = np.polynomial.hermite.hermgauss(size + 1)
    wt = w * np.exp(y * y)
    left = _hermite_functions(y + 0.5 * c, size)
    right = _hermite_functions(y - 0.5 * c, size)
    D = (left * wt) @ right.T
    D.setflags(write=False)
    return D


def fc_amplitude(m, n, xi):
    """``<n+m| W(xi) |n>`` for real ``xi`` (zero when ``n + m < 0``)."""
    n = np.asarray(n)
    out = np.zeros(n.shape, dtype=float)
    valid = (n >= 0) & (n + m >= 0)
    if not np.any(valid):
        return out
    nv = n[valid]
    out[valid] = fc_table(xi, int(nv.max() + max(m, 0)) + 1)[nv + m, nv]
    return out


def fc_table(xi, size):
    """Franck-Condon block with at least ``size`` rows (sizes bucketed for caching)."""
    bucket = 64 * ((int(size) + 63) // 64)
    return _fc_block(float(xi), bucket)


def sideband_matrix(m, p):
    """``v_m`` on Fock(N): ``<n+m| v_m |n> = <n+m| W(xi0) |n>``."""
    N = p.N
    v = np.zeros((N, N))
    n = np.arange(N)
    keep = (n + m >= 0) & (n + m < N)
    v[(n + m)[keep], n[keep]] = fc_amplitude(m, n[keep], p.xi0)
    return v


def sideband_frequency(m, p):
    return p.E_el - m * p.omega0


@dataclass(frozen=True, eq=False)
class VmOperator:
    m: int
    frequency: float
    matrix: np.ndarray


def vm_operator(m, p, _W_dag=None):
    """``V_m = |0><1| (x) v_m W(xi0)^+`` on C^2 (x) Fock(N)."""
    m = int(m)
    if abs(m) > p.N - 2:
        raise ContractViolation(f"sideband index {m} outside |m| <= N-2 = {p.N - 2}")
    W_dag = dag(weyl(p.xi0, p.N)) if _W_dag is None else _W_dag
    V = kron(electronic_transition(0, 1), sideband_matrix(m, p) @ W_dag)
    return VmOperator(m, sideband_frequency(m, p), V)


def sideband_operators(p):
    W_dag = dag(weyl(p.xi0, p.N))
    return [vm_operator(m, p, W_dag) for m in range(-(p.N - 2), p.N - 1)]


def _electronic_generator(p, spectrum, cutoff=SIDEBAND_CUTOFF, frame=None):
    H = (polaron_frame(p) if frame is None else frame).H
    channels = []
    for V in sideband_operators(p):
        weight = float(np.sum(np.abs(V.matrix) ** 2))
        if weight == 0:
            continue
        down = float(spectrum(V.frequency))
        up = float(spectrum(-V.frequency))
        channels.append((down, V.matrix, weight))
        channels.append((up, dag(V.matrix), weight))
    if not channels or max(r * w for r, _, w in channels) == 0:
        warnings.warn("coupling spectrum vanishes on every sideband; electronic generator is empty",
                      RuntimeWarning, stacklevel=3)
        return GKLSGenerator(H, ())
    top = max(r * w for r, _, w in channels)
    kept = tuple((r, L) for r, L, w in channels if r * w > cutoff * top)
    return GKLSGenerator(H, kept)


def default_charging_spectrum(p, gap=None, width=0.2):
    """Gap-supported line shape with the excitonic balance law at ``T, delta_mu``."""
    if not p.T > 0:
        raise ContractViolation("the excitonic balance law needs T > 0")
    gap = p.E_el - 0.5 * p.omega0 if gap is None else gap
    return Chemical(GapGaussian(p.gamma_ex, gap, width), p.T, p.delta_mu)


def charging_generator(p, spectrum=None, cutoff=SIDEBAND_CUTOFF, frame=None):
    """Sideband channels ``(G3(w_m), V_m)`` and ``(G3(-w_m), V_m^+)``."""
    spectrum = default_charging_spectrum(p) if spectrum is None else spectrum
    return _electronic_generator(p, spectrum, cutoff, frame)


def discharge_generator(p, spectrum, cutoff=SIDEBAND_CUTOFF, frame=None):
    """Same channel structure with the ambient-temperature spectrum."""
    return _electronic_generator(p, spectrum, cutoff, frame)


@dataclass(frozen=True, eq=False)
class BatteryGenerator:
    thermal_rc: GKLSGenerator
    electronic: GKLSGenerator
    decoherence_rate: float
    frame: PolaronFrame

    @property
    def total(self):
        return combine(self.thermal_rc, self.electronic)

    def stationary_state(self, **kw):
        return stationary_state(self.total, basis=self.frame.basis, **kw)


def battery_generator(p, spectrum=None, mode="charging", guard=True):
    fr = polaron_frame(p)
    rc = thermal_rc_generator(p, guard=guard, frame=fr)
    if mode == "charging":
        el = charging_generator(p, spectrum, frame=fr)
    elif mode == "discharging":
        el = discharge_generator(p, spectrum, frame=fr)
    else:
        raise ContractViolation("mode must be 'charging' or 'discharging'")
    return BatteryGenerator(rc, el, p.dephasing_rate, fr)


# --------------------------------------------------------------------------
# Stationary state
# --------------------------------------------------------------------------

def charged_fraction(p):
    """Excited-branch weight ``1 / (1 + exp((E_el - delta_mu)/T))``."""
    x = p.E_el - p.delta_mu
    if p.T == 0:
        return 0.0 if x > 0 else (1.0 if x < 0 else 0.5)
    return float(expit(-x / p.T))


def stationary_closed_form(p):
    q = charged_fraction(p)
    return (1 - q) * conditioned_gibbs(p, 0) + q * conditioned_gibbs(p, 1)


@dataclass(frozen=True)
class SteadyReport:
    trace_distance: float
    p1_numeric: float
    p1_closed: float
    residual_closed: float
    truncation_tail: float


def steady_state_report(p, spectrum=None):
    tail = check_truncation(p)
    bg = battery_generator(p, spectrum)
    g = bg.total
    rho = bg.stationary_state()
    ref = stationary_closed_form(p)
    P1 = battery_operators(p)["P1"]
    return rho, SteadyReport(
        trace_distance=trace_distance(rho, ref),
        p1_numeric=float(np.trace(P1 @ rho).real),
        p1_closed=charged_fraction(p),
        residual_closed=trace_norm(apply_generator(g, ref)),
        truncation_tail=tail,
    )


# --------------------------------------------------------------------------
# Discharge rate
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DischargeRates:
    direct: float
    closed: float
    poisson: float
    asymptotic: float


def _rate_closed(p, spectrum, n_max=None, m_extra=None):
    """``sum_n p_n sum_m G(E_el - m w0) |<n+m|W|n>|^2`` on untruncated levels."""
    S = p.S
    beta_w = math.inf if p.T == 0 else p.omega0 / p.T
    if n_max is None:
        if math.isinf(beta_w):
            n_max = 1
        else:
            # thermal weight below 1e-18
            n_max = max(1, int(math.ceil(41.5 / beta_w)) + 1)
    n = np.arange(n_max)
    if math.isinf(beta_w):
        pn = (n == 0).astype(float)
    else:
        pn = (1 - math.exp(-beta_w)) * np.exp(-beta_w * n)
    spread = int(math.ceil(S + 12 * math.sqrt(S + 1) + 40)) if m_extra is None else m_extra
    D = fc_table(p.xi0, 2 * n_max + spread + 1)
    total = 0.0
    for ni, pw in zip(n, pn):
        if pw == 0:
            continue
        ms = np.arange(-ni, ni + spread + 1)
        amps = D[ni + ms, ni]
        G = np.asarray(spectrum(sideband_frequency(ms, p)), dtype=float)
        total += pw * float(np.sum(G * amps**2))
    return total


def _rate_poisson(p, spectrum):
    S = p.S
    m_max = int(math.ceil(S + 12 * math.sqrt(S + 1) + 40))
    m = np.arange(m_max + 1)
    if S == 0:
        w = (m == 0).astype(float)
    else:
        w = np.exp(m * math.log(S) - S - gammaln(m + 1))
    G = np.asarray(spectrum(sideband_frequency(m, p)), dtype=float)
    return float(np.sum(w * G))


def _rate_direct(p, spectrum):
    g = discharge_generator(p, spectrum, cutoff=0.0)
    rho1 = conditioned_gibbs(p, 1)
    P0 = battery_operators(p)["P0"]
    diss = GKLSGenerator(np.zeros_like(g.hamiltonian), g.channels)
    return float(np.trace(P0 @ apply_generator(diss, rho1)).real)


def discharge_rate(p, spectrum, guard=True):
    """Initial probability flow out of the excited conditioned Gibbs state.

    ``direct``: ``Tr(|0><0| L1 rho1)`` by generator application;
    ``closed``: Franck-Condon sum over thermal oscillator levels;
    ``poisson``: zero-temperature Poisson sum with the same spectrum;
    ``asymptotic``: ``G(E_el - S omega0)``.
    """
    if guard:
        check_truncation(p)
    return DischargeRates(
        direct=_rate_direct(p, spectrum),
        closed=_rate_closed(p, spectrum),
        poisson=_rate_poisson(p, spectrum),
        asymptotic=float(spectrum(p.E_el - p.S * p.omega0)),
    )


def sideband_completeness(p):
    """``sum_m Tr(rho1_osc |<n+m|W|n>|^2)`` over the truncated sidebands (flat G check)."""
    pn = thermal_populations(p.beta * p.omega0, p.N)
    total = 0.0
    for m in range(-(p.N - 1), p.N):
        v = sideband_matrix(m, p)
        total += float(np.sum(pn * np.sum(v**2, axis=0)))
    return total
