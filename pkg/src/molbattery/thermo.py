"""Work extraction: passive states, ergotropy, bounded ergotropy and the
closed-form entropies of the battery stationary state."""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ContractViolation, NumericalFailure
from .linalg import as_square, dag, hermitize, herm_eig, von_neumann_entropy
from .operators import check_truncation

BETA_BRACKET = (1e-12, 1e6)
BISECTION_ITERS = 200
ENTROPY_TOL = 1e-10


def passive_state(rho, H):
    """Populations of ``rho`` sorted descending, placed on ascending levels of ``H``.

    Degenerate levels keep the eigenvector order returned by the solver.
    """
    rho = hermitize(as_square(rho, "rho"))
    if rho.shape != np.shape(H):
        raise ContractViolation("rho and H must have equal shapes")
    e, V = herm_eig(H)
    order = np.argsort(e, kind="stable")
    V = V[:, order]
    r = np.sort(np.linalg.eigvalsh(rho))[::-1]
    sigma = (V * r) @ dag(V)
    return hermitize(sigma)


def energy(rho, H):
    return float(np.real(np.trace(np.asarray(rho) @ np.asarray(H))))


def ergotropy(rho, H):
    """``Tr(rho H) - Tr(sigma_rho H)``, clipped at zero against roundoff."""
    w = energy(rho, H) - energy(passive_state(rho, H), H)
    return max(w, 0.0)


# --------------------------------------------------------------------------
# Gibbs entropy as a function of beta
# --------------------------------------------------------------------------

def _gibbs_weights(e, beta):
    x = -beta * (e - e.min())
    p = np.exp(x)
    return p / p.sum()


def gibbs_entropy(e, beta):
    """Entropy of ``exp(-beta H)/Z`` from the spectrum ``e``."""
    e = np.asarray(e, dtype=float)
    if math.isinf(beta):
        g = int(np.sum(e - e.min() <= 1e-12 * max(1.0, abs(e.min()))))
        return math.log(g)
    p = _gibbs_weights(e, beta)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def gibbs_entropy_derivative(e, beta):
    """``dS/dbeta = -beta Var(E)``; strictly negative for non-trivial spectra."""
    e = np.asarray(e, dtype=float)
    p = _gibbs_weights(e, beta)
    mean = float(np.sum(p * e))
    return -beta * float(np.sum(p * (e - mean) ** 2))


def gibbs_energy(e, beta):
    e = np.asarray(e, dtype=float)
    if math.isinf(beta):
        return float(e.min())
    return float(np.sum(_gibbs_weights(e, beta) * e))


def solve_beta_bar(e, S, tol=ENTROPY_TOL, bracket=BETA_BRACKET, max_iter=BISECTION_ITERS):
    """Positive ``beta`` with ``S(Gibbs(beta)) = S`` by bisection in ``log beta``.

    Returns ``inf`` when ``S`` lies below the entropy at the upper end of
    the bracket and ``0`` when it lies above the entropy at the lower end.
    """
    e = np.asarray(e, dtype=float)
    lo, hi = math.log(bracket[0]), math.log(bracket[1])
    if S >= gibbs_entropy(e, bracket[0]) - tol:
        return 0.0
    if S <= gibbs_entropy(e, bracket[1]) + tol:
        return math.inf
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        s_mid = gibbs_entropy(e, math.exp(mid))
        if abs(s_mid - S) <= tol:
            return math.exp(mid)
        if s_mid > S:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    b = math.exp(0.5 * (lo + hi))
    if abs(gibbs_entropy(e, b) - S) > 10 * tol:
        raise NumericalFailure(f"beta_bar bisection stalled at entropy gap {gibbs_entropy(e, b) - S:.2e}")
    return b


@dataclass(frozen=True)
class ErgotropyReport:
    W_max: float
    W_bar_max: float
    beta_bar: float
    S_state: float
    S_gibbs: float
    edge: str = ""  # "", "pure" or "maximally_mixed"


def bound_ergotropy(rho, H, tol=ENTROPY_TOL):
    """Energy above the Gibbs state that has the entropy of ``rho``."""
    rho = hermitize(as_square(rho, "rho"))
    e = np.sort(herm_eig(H)[0])
    d = len(e)
    S = von_neumann_entropy(rho)
    E = energy(rho, H)
    W = ergotropy(rho, H)
    if S >= math.log(d) - 1e-12:
        return ErgotropyReport(W, E - float(np.mean(e)), 0.0, S, math.log(d), "maximally_mixed")
    beta_bar = solve_beta_bar(e, S, tol)
    if beta_bar == 0.0:
        return ErgotropyReport(W, E - float(np.mean(e)), 0.0, S, math.log(d), "maximally_mixed")
    if math.isinf(beta_bar):
        return ErgotropyReport(W, E - float(e[0]), math.inf, S, gibbs_entropy(e, math.inf), "pure")
    return ErgotropyReport(W, E - gibbs_energy(e, beta_bar), beta_bar, S, gibbs_entropy(e, beta_bar))


# --------------------------------------------------------------------------
# Battery closed forms
# --------------------------------------------------------------------------

def binary_entropy(x):
    if x <= 0 or x >= 1:
        return 0.0
    return -x * math.log(x) - (1 - x) * math.log1p(-x)


def oscillator_entropy(beta_omega):
    """``b/(e^b - 1) - ln(1 - e^{-b})`` for ``b = beta * omega0``."""
    b = beta_omega
    if b > 700:
        return 0.0
    return b / math.expm1(b) - math.log1p(-math.exp(-b))


def oscillator_energy(beta_omega, omega0):
    if beta_omega > 700:
        return 0.0
    return omega0 / math.expm1(beta_omega)


def fermi_occupation(x):
    """``1 / (e^x + 1)`` without overflow."""
    if math.isinf(x):
        return 0.0 if x > 0 else 1.0
    return float(expit(-x))


def _charged_fraction(p):
    x = p.E_el - p.delta_mu
    if p.T == 0:
        return 0.0 if x > 0 else (1.0 if x < 0 else 0.5)
    return fermi_occupation(x / p.T)


def battery_entropy_closed_form(p, which="stationary", beta_bar=None, guard=True):
    """Entropy of the stationary state, or of the battery Gibbs state at ``beta_bar``.

    Oscillator term plus binary entropy of the excited-state occupancy;
    the stationary occupancy is ``1/(e^{(E_el - delta_mu)/T} + 1)``.
    """
    if guard:
        check_truncation(p)
    if which == "stationary":
        return oscillator_entropy(p.beta * p.omega0) + binary_entropy(_charged_fraction(p))
    if which == "gibbs":
        if beta_bar is None or not beta_bar > 0:
            raise ContractViolation("Gibbs entropy needs beta_bar > 0")
        return oscillator_entropy(beta_bar * p.omega0) + binary_entropy(fermi_occupation(beta_bar * p.E_el))
    raise ContractViolation("which must be 'stationary' or 'gibbs'")


def battery_bound_ergotropy_closed_form(p, beta_bar):
    """Oscillator energy drop plus ``E_el`` times the occupancy drop, both at ``beta`` vs ``beta_bar``."""
    osc = oscillator_energy(p.beta * p.omega0, p.omega0) - oscillator_energy(beta_bar * p.omega0, p.omega0)
    el = _charged_fraction(p) - fermi_occupation(beta_bar * p.E_el)
    return osc + p.E_el * el


def battery_beta_bar_closed_form(p):
    """Root of the closed-form entropy balance (bisection in ``log beta``)."""
    S = battery_entropy_closed_form(p, "stationary")
    lo, hi = math.log(BETA_BRACKET[0]), math.log(BETA_BRACKET[1])
    f = lambda lb: battery_entropy_closed_form(p, "gibbs", math.exp(lb), guard=False) - S
    if f(hi) >= 0:
        return math.inf
    for _ in range(BISECTION_ITERS):
        mid = 0.5 * (lo + hi)
        v = f(mid)
        if abs(v) <= 1e-13:
            break
        if v > 0:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


def battery_state_and_hamiltonian(p):
    """Constructed ``rho_st`` and the polaron-frame battery Hamiltonian."""
    from .battery import polaron_frame, stationary_closed_form

    return stationary_closed_form(p), polaron_frame(p).H


def battery_ergotropy(p):
    rho, H = battery_state_and_hamiltonian(p)
    return bound_ergotropy(rho, H)


@dataclass(frozen=True)
class ZeroTWork:
    value: float       # E_el * step(delta_mu - E_el), or the computed value at the step
    computed: float    # bound ergotropy of rho_st at p.T
    boundary: bool


def zero_T_work(p, rel_tol=1e-12):
    """Low-temperature bounded ergotropy against the step ``E_el * step(delta_mu - E_el)``."""
    computed = battery_ergotropy(p).W_bar_max
    gap = p.delta_mu - p.E_el
    if abs(gap) <= rel_tol * max(1.0, abs(p.E_el)):
        return ZeroTWork(computed, computed, True)
    return ZeroTWork(p.E_el if gap > 0 else 0.0, computed, False)
