"""Concrete operators: boson ladders, Weyl operators, the battery
Hamiltonian with its polaron transform, and Jordan-Wigner fermions.

Tensor order for the battery is electronic factor first, oscillator
second (C^2 (x) Fock(N)).
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, ResourceError, TruncationError
from .linalg import dag, expm, kron

MAX_FERMION_MODES = 12


@dataclass(frozen=True)
class FockSpace:
    N: int

    def __post_init__(self):
        if int(self.N) < 2:
            raise ContractViolation(f"Fock truncation N must be >= 2, got {self.N}")


@dataclass(frozen=True)
class BatteryParams:
    """Parameters of the two-level molecule with one reaction coordinate.

    Energies, temperature and rates share one unit (hbar = k_B = 1).
    ``S = xi0**2`` is the Huang-Rhys factor.
    """

    omega0: float = 0.1
    xi0: float = 0.8
    E_el: float = 1.0
    T: float = 0.01
    delta_mu: float = 1.0
    N: int = 40
    gamma: float = 1e-2
    G1_at_0: float = 1e-3
    G2_at_0: float = 1e-3
    gamma_ex: float = 1e-2

    def __post_init__(self):
        if not self.omega0 > 0:
            raise ContractViolation("omega0 must be positive")
        if int(self.N) < 2:
            raise ContractViolation("N must be >= 2")
        if self.T < 0:
            raise ContractViolation("T must be >= 0")
        for name in ("gamma", "G1_at_0", "G2_at_0", "gamma_ex"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be >= 0")

    @property
    def S(self):
        return self.xi0**2

    @property
    def beta(self):
        return math.inf if self.T == 0 else 1.0 / self.T

    @property
    def dim(self):
        return 2 * self.N

    @property
    def dephasing_rate(self):
        """Pure decoherence rate ``4 xi0^2 G1(0) + G2(0)``."""
        return 4.0 * self.xi0**2 * self.G1_at_0 + self.G2_at_0

    def replace(self, **changes):
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return BatteryParams(**data)


# --------------------------------------------------------------------------
# Bosons
# --------------------------------------------------------------------------

def boson_annihilator(N):
    """Truncated ladder operator with ``<n-1|A|n> = sqrt(n)``."""
    N = FockSpace(N).N
    return np.diag(np.sqrt(np.arange(1, N, dtype=float)), k=1).astype(complex)


def number_operator(N):
    return np.diag(np.arange(N, dtype=float)).astype(complex)


def weyl(alpha, N):
    """Displacement ``W(alpha) = exp(alpha A^dagger - conj(alpha) A)``."""
    N = FockSpace(N).N
    if abs(alpha) ** 2 > N / 4:
        warnings.warn(
            f"|alpha|^2 = {abs(alpha) ** 2:.3g} exceeds N/4 = {N / 4:.3g}; "
            "truncation error may be visible",
            stacklevel=2,
        )
    A = boson_annihilator(N)
    return expm(alpha * dag(A) - np.conj(alpha) * A)


def weyl_normal_ordered(alpha, N):
    """``exp(-|a|^2/2) exp(a A^dag) exp(-conj(a) A)``; test oracle only."""
    A = boson_annihilator(N)
    return (
        math.exp(-abs(alpha) ** 2 / 2)
        * expm(alpha * dag(A))
        @ expm(-np.conj(alpha) * A)
    )


def thermal_populations(beta_omega, N):
    """Fock populations of the truncated thermal state."""
    n = np.arange(N, dtype=float)
    if math.isinf(beta_omega):
        p = (n == 0).astype(float)
    else:
        p = np.exp(-beta_omega * n)
    return p / p.sum()


def oscillator_thermal_state(beta_omega, N):
    return np.diag(thermal_populations(beta_omega, N)).astype(complex)


# --------------------------------------------------------------------------
# Battery operators
# --------------------------------------------------------------------------

def electronic_projector(i):
    P = np.zeros((2, 2), dtype=complex)
    P[i, i] = 1.0
    return P


def electronic_transition(i, j):
    """``|i><j|`` on the electronic factor."""
    E = np.zeros((2, 2), dtype=complex)
    E[i, j] = 1.0
    return E


def battery_operators(p):
    """Dictionary of the standard operators on C^2 (x) Fock(N)."""
    N = p.N
    A1 = boson_annihilator(N)
    I2 = np.eye(2)
    IN = np.eye(N)
    A = kron(I2, A1)
    P1 = kron(electronic_projector(1), IN)
    P0 = kron(electronic_projector(0), IN)
    B = A - p.xi0 * P1
    return {
        "A": A,
        "B": B,
        "P0": P0,
        "P1": P1,
        "sigma_minus": kron(electronic_transition(0, 1), IN),
        "sigma_plus": kron(electronic_transition(1, 0), IN),
        "sigma_x": kron(electronic_transition(0, 1) + electronic_transition(1, 0), IN),
    }


def battery_hamiltonian(p):
    """``omega0 (A^dag - xi0 P1)(A - xi0 P1) + E_el P1``."""
    ops = battery_operators(p)
    B, P1 = ops["B"], ops["P1"]
    H = p.omega0 * dag(B) @ B + p.E_el * P1
    return 0.5 * (H + dag(H))


def polaron_transform(p):
    """``U = exp(xi0 (A^dag - A) |1><1|)``: identity on |0>, W(xi0) on |1>."""
    N = p.N
    U = np.zeros((2 * N, 2 * N), dtype=complex)
    U[:N, :N] = np.eye(N)
    U[N:, N:] = weyl(p.xi0, N) if p.xi0 != 0 else np.eye(N)
    return U


def conditioned_gibbs(p, branch):
    """Conditioned Gibbs state rho^(0) or rho^(1) on C^2 (x) Fock(N).

    ``rho^(1)`` is the displaced thermal state W(xi0) rho_th W(xi0)^dag,
    built directly rather than by propagation.
    """
    N = p.N
    rho_th = oscillator_thermal_state(p.beta * p.omega0, N)
    if branch == 0:
        osc = rho_th
    elif branch == 1:
        W = weyl(p.xi0, N) if p.xi0 != 0 else np.eye(N)
        osc = W @ rho_th @ dag(W)
        osc = 0.5 * (osc + dag(osc))
        osc /= np.trace(osc).real
    else:
        raise ContractViolation("branch must be 0 or 1")
    return kron(electronic_projector(branch), osc)


def displaced_thermal_tail(p, margin=40):
    """Fock population of levels >= N-1 for both conditioned Gibbs states,
    evaluated in an enlarged space of ``N + margin`` levels."""
    big = p.replace(N=p.N + margin)
    tails = []
    for branch in (0, 1):
        rho = conditioned_gibbs(big, branch)
        d = big.N
        block = rho[branch * d:(branch + 1) * d, branch * d:(branch + 1) * d]
        pops = np.real(np.diag(block))
        tails.append(float(np.sum(pops[p.N - 1:])))
    return max(tails)


def check_truncation(p, tol=1e-12):
    """Raise TruncationError when the conditioned Gibbs tails are too heavy."""
    tail = displaced_thermal_tail(p)
    if tail >= tol:
        raise TruncationError(
            f"thermal tail above level N-2 is {tail:.2e} >= {tol:.0e} at N={p.N}; raise N"
        )
    return tail


# --------------------------------------------------------------------------
# Fermions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FermionRegister:
    """Ordered fermionic modes: band A ascending in energy, then band B."""

    labels: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if len(self.labels) > MAX_FERMION_MODES:
            raise ResourceError(
                f"{len(self.labels)} fermionic modes exceed the limit of {MAX_FERMION_MODES}"
            )

    @classmethod
    def from_bands(cls, band_a, band_b):
        a = sorted(float(e) for e in band_a)
        b = sorted(float(e) for e in band_b)
        return cls(tuple([("A", e) for e in a] + [("B", e) for e in b]))

    @property
    def n_modes(self):
        return len(self.labels)

    @property
    def dim(self):
        return 2**self.n_modes


def fermion_mode_ops(reg):
    """Jordan-Wigner ``(c_j, c_j^dagger)`` pairs.

    Mode 0 is the most significant tensor factor; basis state index bits
    read the occupations in mode order.
    """
    if isinstance(reg, int):
        reg = FermionRegister(tuple(("A", 0.0) for _ in range(reg)))
    n = reg.n_modes
    if n > MAX_FERMION_MODES:
        raise ResourceError(f"{n} modes exceed the limit of {MAX_FERMION_MODES}")
    lower = np.array([[0.0, 1.0], [0.0, 0.0]])
    Z = np.diag([1.0, -1.0])
    I = np.eye(2)
    pairs = []
    for j in range(n):
        factors = [Z] * j + [lower] + [I] * (n - j - 1)
        c = np.array([[1.0]])
        for f in factors:
            c = np.kron(c, f)
        pairs.append((c, c.T.copy()))
    return pairs
