"""Two-band exciton factory: fermionic master equation with intraband
thermalization and pumped interband transitions, grand-canonical ansatz,
trace-norm residual and the optimal exciton chemical potential.

Modes are ordered band A ascending in energy, then band B ascending
(Jordan-Wigner order, mode 0 most significant bit of the basis index).
"""
import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy import optimize
from scipy.sparse.linalg import spsolve

from .davies import GKLSGenerator, stationary_state
from .errors import ContractViolation, InputError, ResourceError
from .linalg import trace_norm
from .operators import MAX_FERMION_MODES, FermionRegister, fermion_mode_ops
from .spectra import fermi_dirac, fermi_hole

MAX_GENERATOR_MODES = 8


# --------------------------------------------------------------------------
# Parameters
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class HotTemperature:
    """Piecewise-linear ``eps -> T[eps]``; constant beyond the end points."""

    eps: tuple
    T: tuple

    def __post_init__(self):
        e = np.atleast_1d(np.asarray(self.eps, dtype=float))
        t = np.atleast_1d(np.asarray(self.T, dtype=float))
        if e.shape != t.shape or e.ndim != 1 or e.size == 0:
            raise ContractViolation("hot temperature table needs matching eps and T columns")
        if np.any(np.diff(e) <= 0):
            raise ContractViolation("hot temperature eps values must increase strictly")
        if np.any(t <= 0):
            raise ContractViolation("hot temperatures must be positive")
        object.__setattr__(self, "eps", tuple(e.tolist()))
        object.__setattr__(self, "T", tuple(t.tolist()))

    @classmethod
    def constant(cls, T):
        return cls((0.0,), (float(T),))

    def __call__(self, eps):
        if len(self.eps) == 1:
            return np.full_like(np.asarray(eps, dtype=float), self.T[0])
        return np.interp(eps, self.eps, self.T)


def _as_hot(hot_T):
    if isinstance(hot_T, HotTemperature):
        return hot_T
    if np.isscalar(hot_T):
        return HotTemperature.constant(hot_T)
    eps, T = zip(*hot_T)
    return HotTemperature(eps, T)


def _matrix(value, shape, name):
    M = np.asarray(value, dtype=float)
    if M.ndim == 0:
        M = np.full(shape, float(M))
    if M.shape != shape:
        raise ContractViolation(f"{name} must have shape {shape}, got {M.shape}")
    if np.any(M < 0) or not np.all(np.isfinite(M)):
        raise ContractViolation(f"{name} must be finite and non-negative")
    return M


@dataclass(frozen=True, eq=False)
class ExcitonFactoryParams:
    """Two-band model.  Rates may be scalars (uniform) or full matrices
    indexed in the order the energies are given; bands are re-sorted
    ascending internally and the matrices permuted along."""

    band_a: tuple
    band_b: tuple
    Gamma_a: object = 1.0
    Gamma_b: object = 1.0
    gamma_inter: object = 1e-2
    T: float = 0.01
    hot_T: object = 0.01
    delta_g: float = 0.0

    def __post_init__(self):
        Ea = np.asarray(self.band_a, dtype=float).ravel()
        Eb = np.asarray(self.band_b, dtype=float).ravel()
        if Ea.size == 0 or Eb.size == 0:
            raise ContractViolation("both bands need at least one mode")
        if Ea.size + Eb.size > MAX_FERMION_MODES:
            raise ResourceError(f"{Ea.size + Eb.size} modes exceed the limit of {MAX_FERMION_MODES}")
        if not self.T > 0:
            raise ContractViolation("ambient temperature must be positive")
        ia = np.argsort(Ea, kind="stable")
        ib = np.argsort(Eb, kind="stable")
        Ga = _matrix(self.Gamma_a, (Ea.size, Ea.size), "Gamma_a")[np.ix_(ia, ia)]
        Gb = _matrix(self.Gamma_b, (Eb.size, Eb.size), "Gamma_b")[np.ix_(ib, ib)]
        gi = _matrix(self.gamma_inter, (Ea.size, Eb.size), "gamma_inter")[np.ix_(ia, ib)]
        if Ea.min() - Eb.max() <= 0:
            raise ContractViolation("band A must lie strictly above band B (positive gap)")
        object.__setattr__(self, "band_a", tuple(Ea[ia].tolist()))
        object.__setattr__(self, "band_b", tuple(Eb[ib].tolist()))
        object.__setattr__(self, "Gamma_a", Ga)
        object.__setattr__(self, "Gamma_b", Gb)
        object.__setattr__(self, "gamma_inter", gi)
        object.__setattr__(self, "hot_T", _as_hot(self.hot_T))

    @property
    def n_a(self):
        return len(self.band_a)

    @property
    def n_b(self):
        return len(self.band_b)

    @property
    def n_modes(self):
        return self.n_a + self.n_b

    @property
    def gap(self):
        return min(self.band_a) - max(self.band_b)

    @property
    def eps(self):
        """``eps[k, l] = E_a(k) - E_b(l)``."""
        return np.subtract.outer(np.asarray(self.band_a), np.asarray(self.band_b))

    @property
    def energies(self):
        return np.concatenate([self.band_a, self.band_b])

    def register(self):
        return FermionRegister.from_bands(self.band_a, self.band_b)

    def replace(self, **changes):
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(changes)
        return ExcitonFactoryParams(**data)


def load_mode_table(path):
    """Read ``band,energy`` rows (band is ``A`` or ``B``)."""
    band_a, band_b = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#") or row[0].strip().lower() == "band":
                continue
            band = row[0].strip().upper()
            try:
                energy = float(row[1])
            except (IndexError, ValueError):
                raise InputError(f"{path}:{lineno}: expected 'band,energy'") from None
            if band == "A":
                band_a.append(energy)
            elif band == "B":
                band_b.append(energy)
            else:
                raise InputError(f"{path}:{lineno}: unknown band {row[0]!r}")
    return band_a, band_b


# --------------------------------------------------------------------------
# Channels and generator
# --------------------------------------------------------------------------

def _mode_index(p, band, i):
    return i if band == "a" else p.n_a + i


def channel_list(p):
    """Symbolic channels ``(part, src_mode, dst_mode, rate)``: an electron
    hops from ``src`` to ``dst`` (jump ``c_src c_dst^+`` up to sign)."""
    out = []
    T = p.T
    for band, E, G in (("a", p.band_a, p.Gamma_a), ("b", p.band_b, p.Gamma_b)):
        n = len(E)
        for k in range(n):
            for kp in range(n):
                if k == kp or E[k] - E[kp] < 0 or G[k, kp] == 0:
                    continue
                src, dst = _mode_index(p, band, k), _mode_index(p, band, kp)
                out.append(("intra", src, dst, float(G[k, kp])))
                out.append(("intra", dst, src, float(G[k, kp] * math.exp(-(E[k] - E[kp]) / T))))
    eps = p.eps
    for k in range(p.n_a):
        for l in range(p.n_b):
            g = p.gamma_inter[k, l]
            e = eps[k, l]
            if g == 0 or e < 0:
                continue
            Th = float(p.hot_T(e))
            src, dst = _mode_index(p, "a", k), _mode_index(p, "b", l)
            out.append(("inter", src, dst, float(g)))
            out.append(("inter", dst, src, float(g * math.exp(-(e - p.delta_g) / Th))))
    return out


def factory_hamiltonian(p, ops=None):
    ops = fermion_mode_ops(p.register()) if ops is None else ops
    d = 2**p.n_modes
    H = np.zeros((d, d), dtype=complex)
    for E, (c, cd) in zip(p.energies, ops):
        H += E * (cd @ c)
    return H


def build_factory_generator(p, parts=("intra", "inter")):
    """GKLS generator of the exciton factory on the 2^n fermionic Fock space.

    ``parts`` selects the intraband and/or interband dissipators.
    """
    if p.n_modes > MAX_GENERATOR_MODES:
        raise ResourceError(
            f"{p.n_modes} modes exceed the generator limit of {MAX_GENERATOR_MODES}; "
            "use classical_reduction"
        )
    ops = fermion_mode_ops(p.register())
    channels = []
    for part, src, dst, rate in channel_list(p):
        if part not in parts or rate == 0:
            continue
        L = ops[src][0] @ ops[dst][1]
        channels.append((rate, L))
    return GKLSGenerator(factory_hamiltonian(p, ops), tuple(channels))


def number_operator(p, band=None):
    ops = fermion_mode_ops(p.register())
    idx = range(p.n_modes)
    if band == "a":
        idx = range(p.n_a)
    elif band == "b":
        idx = range(p.n_a, p.n_modes)
    d = 2**p.n_modes
    N = np.zeros((d, d), dtype=complex)
    for i in idx:
        c, cd = ops[i]
        N += cd @ c
    return N


# --------------------------------------------------------------------------
# Occupation-basis helpers
# --------------------------------------------------------------------------

def occupations(n_modes):
    """``occ[x, i]``: occupation of mode ``i`` in basis state ``x``."""
    x = np.arange(2**n_modes)
    shifts = n_modes - 1 - np.arange(n_modes)
    return (x[:, None] >> shifts[None, :]) & 1


def sector_indices(n_modes, n_electrons):
    return np.flatnonzero(occupations(n_modes).sum(axis=1) == n_electrons)


def restrict_generator(g, idx):
    """Restriction of a generator to an invariant subspace spanned by basis vectors."""
    idx = np.asarray(idx)
    H = g.hamiltonian[np.ix_(idx, idx)]
    chans = tuple((r, L[np.ix_(idx, idx)]) for r, L in g.channels)
    chans = tuple((r, L) for r, L in chans if np.any(L != 0))
    return GKLSGenerator(H, chans)


def factory_stationary_state(p, n_electrons=None, parts=("intra", "inter")):
    """Stationary state of the full generator in a fixed electron-number sector.

    Every channel conserves the total electron number, so the kernel has
    one dimension per sector; the sector fixes it.  Returns the full
    ``2^n x 2^n`` matrix (zero outside the sector).
    """
    n_electrons = p.n_modes // 2 if n_electrons is None else int(n_electrons)
    g = build_factory_generator(p, parts)
    idx = sector_indices(p.n_modes, n_electrons)
    rho_s = stationary_state(restrict_generator(g, idx))
    d = 2**p.n_modes
    rho = np.zeros((d, d), dtype=complex)
    rho[np.ix_(idx, idx)] = rho_s
    return rho


def mode_occupations(rho, n_modes):
    """``<c_i^+ c_i>`` from the diagonal of ``rho``."""
    pops = np.real(np.diag(rho))
    return pops @ occupations(n_modes)


# --------------------------------------------------------------------------
# Classical reduction
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClassicalChain:
    """Continuous-time Markov chain ``dp/dt = W p`` on occupation strings."""

    rates: object  # dense or sparse (d, d); column sums vanish
    n_modes: int

    def stationary(self, n_electrons=None):
        W = sp.csr_matrix(self.rates)
        d = W.shape[0]
        idx = np.arange(d) if n_electrons is None else sector_indices(self.n_modes, n_electrons)
        Ws = W[idx][:, idx].tolil()
        # replace the last balance equation by normalization
        Ws[len(idx) - 1, :] = np.ones(len(idx))
        rhs = np.zeros(len(idx))
        rhs[-1] = 1.0
        ps = spsolve(Ws.tocsc(), rhs)
        p = np.zeros(d)
        p[idx] = np.real(ps)
        return p


def classical_reduction(source):
    """Population chain of the factory.

    ``source`` is either ``ExcitonFactoryParams`` (rates assembled
    directly on bit strings, sparse, up to 12 modes) or a ``GKLSGenerator``
    with diagonal Hamiltonian and monomial jump operators, for which
    ``W[y, x] = sum_j rate_j |L_j[y, x]|^2``.
    """
    if isinstance(source, ExcitonFactoryParams):
        p = source
        E = p.energies
        if np.unique(E).size != E.size:
            raise ContractViolation("classical reduction refuses degenerate single-particle energies")
        n = p.n_modes
        d = 2**n
        occ = occupations(n).astype(bool)
        rows, cols, vals = [], [], []
        states = np.arange(d)
        for _, src, dst, rate in channel_list(p):
            if rate == 0:
                continue
            ok = occ[:, src] & ~occ[:, dst]
            x = states[ok]
            y = x - (1 << (n - 1 - src)) + (1 << (n - 1 - dst))
            rows.append(y)
            cols.append(x)
            vals.append(np.full(x.size, rate))
        rows = np.concatenate(rows) if rows else np.zeros(0, int)
        cols = np.concatenate(cols) if cols else np.zeros(0, int)
        vals = np.concatenate(vals) if vals else np.zeros(0)
        W = sp.csr_matrix((vals, (rows, cols)), shape=(d, d))
        out = np.asarray(W.sum(axis=0)).ravel()
        W = (W - sp.diags(out)).tocsr()
        return ClassicalChain(W, n)
    g = source
    H = g.hamiltonian
    if np.any(np.abs(H - np.diag(np.diag(H))) > 0):
        raise ContractViolation("classical reduction needs a Hamiltonian diagonal in the occupation basis")
    d = g.dim
    W = np.zeros((d, d))
    for rate, L in g.channels:
        nz = np.abs(L) > 0
        if np.any(nz.sum(axis=0) > 1) or np.any(nz.sum(axis=1) > 1):
            raise ContractViolation("classical reduction needs monomial jump operators")
        W += rate * np.abs(L) ** 2
    np.fill_diagonal(W, 0.0)
    W -= np.diag(W.sum(axis=0))
    n = int(round(math.log2(d)))
    return ClassicalChain(W, n)


# --------------------------------------------------------------------------
# Grand-canonical ansatz
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GrandCanonicalAnsatz:
    mu_a: float
    mu_b: float
    T: float

    @property
    def delta_mu(self):
        return self.mu_a - self.mu_b


def ansatz_occupations(ansatz, p):
    fa = fermi_dirac(np.asarray(p.band_a), ansatz.mu_a, ansatz.T)
    fb = fermi_dirac(np.asarray(p.band_b), ansatz.mu_b, ansatz.T)
    return fa, fb


def ansatz_holes(ansatz, p):
    ha = fermi_hole(np.asarray(p.band_a), ansatz.mu_a, ansatz.T)
    hb = fermi_hole(np.asarray(p.band_b), ansatz.mu_b, ansatz.T)
    return ha, hb


def grand_canonical_populations(ansatz, p):
    """Diagonal of the product Fermi-Dirac state in the occupation basis."""
    f = np.concatenate(ansatz_occupations(ansatz, p))
    h = np.concatenate(ansatz_holes(ansatz, p))
    occ = occupations(p.n_modes)
    return np.prod(np.where(occ == 1, f[None, :], h[None, :]), axis=1)


def grand_canonical_state(ansatz, p):
    return np.diag(grand_canonical_populations(ansatz, p)).astype(complex)


def mu_b_for_filling(p, delta_mu, filling=None, T=None):
    """``mu_b`` such that the ansatz holds ``filling`` electrons on average
    (default: half of the modes)."""
    T = p.T if T is None else T
    filling = p.n_modes / 2 if filling is None else float(filling)
    if not 0 < filling < p.n_modes:
        raise ContractViolation("filling must lie strictly between 0 and the mode count")
    Ea, Eb = np.asarray(p.band_a), np.asarray(p.band_b)

    def excess(mu_b):
        return fermi_dirac(Ea, mu_b + delta_mu, T).sum() + fermi_dirac(Eb, mu_b, T).sum() - filling

    E_all = np.concatenate([Ea - delta_mu, Eb])
    span = 60 * T + abs(delta_mu) + 1.0
    lo, hi = E_all.min() - span, E_all.max() + span
    return optimize.brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def ansatz_for(p, delta_mu, filling=None):
    mu_b = mu_b_for_filling(p, delta_mu, filling)
    return GrandCanonicalAnsatz(mu_b + delta_mu, mu_b, p.T)


# --------------------------------------------------------------------------
# Interband residual
# --------------------------------------------------------------------------

def _XY(ansatz, p):
    eps = p.eps
    X = (eps - ansatz.delta_mu) / ansatz.T
    Y = (eps - p.delta_g) / p.hot_T(eps)
    return X, Y


def _sparse_ops(p):
    ops = fermion_mode_ops(p.register())
    return [(sp.csr_matrix(c), sp.csr_matrix(cd)) for c, cd in ops]


def interband_residual(ansatz, p, _ops=None):
    """``(exact, bound)``: trace norm of the interband dissipator applied to
    the ansatz state, and its termwise upper bound."""
    if p.n_modes > MAX_GENERATOR_MODES:
        raise ResourceError(f"exact residual limited to {MAX_GENERATOR_MODES} modes")
    ops = _sparse_ops(p) if _ops is None else _ops
    rho = sp.diags(grand_canonical_populations(ansatz, p)).tocsr()
    out = sp.csr_matrix(rho.shape, dtype=float)
    for part, src, dst, rate in channel_list(p):
        if part != "inter" or rate == 0:
            continue
        L = ops[src][0] @ ops[dst][1]
        Ld = L.T.conj()
        LdL = Ld @ L
        out = out + rate * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))
    out = out.tocoo()
    offdiag = np.abs(out.data[out.row != out.col])
    if offdiag.size and offdiag.max() > 0:
        exact = trace_norm(out.toarray())
    else:
        exact = float(np.sum(np.abs(out.diagonal())))
    return exact, interband_bound(ansatz, p)


def _bound_terms(ansatz, p):
    X, Y = _XY(ansatz, p)
    fa, fb = ansatz_occupations(ansatz, p)
    ha, hb = ansatz_holes(ansatz, p)
    fa, fb, ha, hb = fa[:, None], fb[None, :], ha[:, None], hb[None, :]
    mask = (p.eps >= 0) & (p.gamma_inter > 0)
    w = p.gamma_inter * (np.exp(-X) * ha * fb + fa * hb)
    return np.where(mask, w, 0.0), np.where(mask, np.abs(1 - np.exp(X - Y)), 0.0)


def interband_bound(ansatz, p):
    w, factor = _bound_terms(ansatz, p)
    return float(np.sum(w * factor))


# --------------------------------------------------------------------------
# Optimal chemical potential
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DeltaMuResult:
    delta_mu: float
    residual: float
    bound: float
    mu_b: float
    effective_gap: float
    predicted: float


class GridEdgeError(ContractViolation):
    """The residual minimum sits on the boundary of the search grid."""


def predicted_delta_mu(E_g_eff, T, T_hot, delta_g):
    if not T_hot > 0:
        raise ContractViolation("T_hot must be positive")
    r = T / T_hot
    return (1 - r) * E_g_eff + r * delta_g


def effective_gap(p, ansatz):
    """Mean of ``eps_kl`` weighted by the bound's occupation factors."""
    w, _ = _bound_terms(ansatz, p)
    if w.sum() <= 0:
        return float(p.gap)
    return float(np.sum(w * p.eps) / np.sum(w))


def default_grid(p, num=241):
    eps = p.eps[p.gamma_inter > 0] if np.any(p.gamma_inter > 0) else p.eps.ravel()
    lo = min(0.0, p.delta_g, eps.min()) - 0.5 * abs(eps.max())
    hi = max(eps.max(), p.delta_g) + 0.5 * abs(eps.max())
    return np.linspace(lo, hi, num)


def optimal_delta_mu(p, grid=None, filling=None, xtol=1e-10):
    """Minimize the exact interband residual over ``delta_mu``.

    Grid scan followed by bounded golden-section (Brent) refinement in
    the bracketing grid cell pair.
    """
    grid = default_grid(p) if grid is None else np.asarray(grid, dtype=float)
    ops = _sparse_ops(p)

    def resid(dm):
        return interband_residual(ansatz_for(p, dm, filling), p, ops)[0]

    values = np.array([resid(dm) for dm in grid])
    i = int(np.argmin(values))
    if i == 0 or i == len(grid) - 1:
        raise GridEdgeError(f"residual minimum at grid edge delta_mu={grid[i]:.6g}; widen the grid")
    res = optimize.minimize_scalar(
        resid, bounds=(grid[i - 1], grid[i + 1]), method="bounded", options={"xatol": xtol, "maxiter": 500}
    )
    dm = float(res.x) if res.fun <= values[i] else float(grid[i])
    ans = ansatz_for(p, dm, filling)
    exact, bound = interband_residual(ans, p, ops)
    Eg = effective_gap(p, ans)
    Th = float(p.hot_T(Eg))
    return DeltaMuResult(dm, exact, bound, ans.mu_b, Eg, predicted_delta_mu(Eg, p.T, Th, p.delta_g))


# --------------------------------------------------------------------------
# Fermi-Dirac fit of a stationary state
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FermiDiracFit:
    mu_a: float
    mu_b: float
    T: float
    residual: float


def fit_fermi_dirac(p, occ, fixed_T=False):
    """Least-squares fit of mode occupations to two Fermi-Dirac curves
    with a common temperature (held at the ambient ``p.T`` if ``fixed_T``)."""
    occ = np.asarray(occ, dtype=float)
    Ea, Eb = np.asarray(p.band_a), np.asarray(p.band_b)

    def model(x):
        T = p.T if fixed_T else math.exp(x[2])
        return np.concatenate([fermi_dirac(Ea, x[0], T), fermi_dirac(Eb, x[1], T)])

    x0 = [float(np.mean(Ea)), float(np.mean(Eb))] + ([] if fixed_T else [math.log(p.T)])
    sol = optimize.least_squares(lambda x: model(x) - occ, x0, xtol=1e-14, ftol=1e-14, gtol=1e-14)
    T = p.T if fixed_T else float(math.exp(sol.x[2]))
    return FermiDiracFit(float(sol.x[0]), float(sol.x[1]), T, float(np.linalg.norm(sol.fun)))
