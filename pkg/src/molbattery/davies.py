"""Weak-coupling (Davies) generators: Bohr decomposition, assembly of GKLS
generators from coupling spectra, superoperators, stationary states and
time propagation.

Rates handed to generators are the physical ``lambda^2 G(omega)``
products; the coupling constant is not tracked separately here.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import expm_multiply

from .errors import (
    ContractViolation,
    InvariantViolation,
    NonErgodic,
    NumericalFailure,
    ResourceError,
)
from .linalg import (
    as_square,
    commutator_superop,
    dag,
    devec,
    expm,
    herm_eig,
    hermitize,
    is_hermitian,
    trace_norm,
    vec,
)

SPARSE_DROP = 1e-14
MAX_DENSE_BLOCK = 3000


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GKLSGenerator:
    """``rho -> -i[H, rho] + sum_j rate_j (L_j rho L_j^+ - {L_j^+ L_j, rho}/2)``."""

    hamiltonian: np.ndarray
    channels: tuple = field(default_factory=tuple)

    def __post_init__(self):
        H = as_square(np.asarray(self.hamiltonian, dtype=complex), "hamiltonian")
        if not is_hermitian(H):
            raise ContractViolation("generator Hamiltonian must be Hermitian")
        object.__setattr__(self, "hamiltonian", H)
        chans = []
        for rate, L in self.channels:
            rate = float(rate)
            if rate < 0 or not np.isfinite(rate):
                raise InvariantViolation(f"channel rate {rate!r} is negative or non-finite")
            L = np.asarray(L, dtype=complex)
            if L.shape != H.shape:
                raise ContractViolation(f"jump operator shape {L.shape} != {H.shape}")
            chans.append((rate, L))
        object.__setattr__(self, "channels", tuple(chans))

    @property
    def dim(self):
        return self.hamiltonian.shape[0]

    def apply(self, rho):
        return apply_generator(self, rho)

    def dissipator(self):
        """Same channels, zero Hamiltonian."""
        return GKLSGenerator(np.zeros_like(self.hamiltonian), self.channels)

    def max_rate(self):
        return max((r * np.linalg.norm(L, 2) ** 2 for r, L in self.channels), default=0.0)


def combine(*generators):
    """Sum of generators sharing one Hamiltonian."""
    H = generators[0].hamiltonian
    channels = []
    for g in generators:
        if g.hamiltonian.shape != H.shape or not np.allclose(g.hamiltonian, H, atol=1e-12, rtol=0):
            raise ContractViolation("combined generators must share the same Hamiltonian")
        channels.extend(g.channels)
    return GKLSGenerator(H, tuple(channels))


def apply_generator(g, rho):
    rho = np.asarray(rho, dtype=complex)
    H = g.hamiltonian
    out = -1j * (H @ rho - rho @ H)
    for rate, L in g.channels:
        if rate == 0:
            continue
        Ld = dag(L)
        LdL = Ld @ L
        out += rate * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))
    return out


def generator_superop(g, sparse=False):
    """Matrix of the generator on column-stacked ``vec(rho)``."""
    d = g.dim
    if sparse:
        return _sparse_superop(g.hamiltonian, [(r, L) for r, L in g.channels])
    I = np.eye(d)
    M = commutator_superop(g.hamiltonian)
    chans = [(r, L) for r, L in g.channels if r != 0]
    if not chans:
        return M
    rates = np.array([r for r, _ in chans])
    Ls = np.stack([L for _, L in chans])
    K = np.einsum("c,cji,cjk->ik", rates, Ls.conj(), Ls)
    # sum_c r_c kron(conj L_c, L_c): entry (i d + j, k d + l) = sum_c r_c conj(L_c[i,k]) L_c[j,l]
    flat = Ls.reshape(len(chans), d * d)
    J = ((rates[:, None] * flat.conj()).T @ flat).reshape(d, d, d, d).transpose(0, 2, 1, 3)
    return M + J.reshape(d * d, d * d) - 0.5 * (np.kron(I, K) + np.kron(K.T, I))


def _sparsify(M, rel=SPARSE_DROP):
    M = np.array(M, dtype=complex)
    scale = np.max(np.abs(M)) if M.size else 0.0
    M[np.abs(M) <= rel * scale] = 0.0
    return sp.csr_matrix(M)


def _sparse_superop(H, channels):
    d = H.shape[0]
    I = sp.identity(d, dtype=complex, format="csr")
    Hs = _sparsify(H)
    K = sp.csr_matrix((d, d), dtype=complex)
    rows, cols, vals = [], [], []
    for rate, L in channels:
        if rate == 0:
            continue
        Ls = _sparsify(L).tocoo()
        if Ls.nnz == 0:
            continue
        K = K + rate * (Ls.conj().T @ Ls)
        # kron(conj L, L): entry (a + d b, k + d l) = conj(L[b, l]) L[a, k]
        a, k, v = Ls.row, Ls.col, Ls.data
        rows.append((a[None, :] + d * a[:, None]).ravel())
        cols.append((k[None, :] + d * k[:, None]).ravel())
        vals.append(rate * (np.conj(v)[:, None] * v[None, :]).ravel())
    M = -1j * (sp.kron(I, Hs) - sp.kron(Hs.T, I)) - 0.5 * (sp.kron(I, K) + sp.kron(K.T, I))
    if rows:
        J = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(d * d, d * d))
        M = M + J
    return M.tocsr()


def _eigenframe(g, basis=None):
    """Generator expressed in the eigenbasis of its Hamiltonian.

    ``basis=(w, V)`` supplies a known eigen-decomposition (checked).
    """
    if basis is None:
        w, V = herm_eig(g.hamiltonian)
    else:
        w, V = np.asarray(basis[0], dtype=float), np.asarray(basis[1], dtype=complex)
        err = np.max(np.abs(g.hamiltonian @ V - V * w[None, :]))
        if err > 1e-10 * max(1.0, np.max(np.abs(w))):
            raise ContractViolation(f"supplied eigenbasis does not diagonalize H (error {err:.2e})")
    Vd = dag(V)
    chans = [(r, Vd @ L @ V) for r, L in g.channels if r != 0]
    return w, V, np.diag(w).astype(complex), chans


# --------------------------------------------------------------------------
# Bohr decomposition
# --------------------------------------------------------------------------

def _cluster(values, tol):
    """Group sorted-by-value entries whose consecutive gaps are <= tol.

    Returns (labels aligned with ``values``, representative value per label).
    """
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="stable")
    sv = values[order]
    breaks = np.concatenate([[True], np.diff(sv) > tol])
    ids_sorted = np.cumsum(breaks) - 1
    labels = np.empty(values.size, dtype=int)
    labels[order] = ids_sorted
    n = ids_sorted[-1] + 1 if values.size else 0
    reps = np.array([sv[ids_sorted == k].mean() for k in range(n)])
    return labels, reps


@dataclass(frozen=True, eq=False)
class BohrDecomposition:
    """``S = sum_omega S_omega`` with ``exp(iHt) S exp(-iHt) = sum e^{-i omega t} S_omega``.

    ``energies``/``basis`` hold the eigen-decomposition of ``H``;
    ``freq_index[l, k]`` is the index (into ``frequencies``) of the Bohr
    frequency ``e_k - e_l`` carried by the eigenbasis matrix element
    ``S_eig[l, k]``.
    """

    frequencies: np.ndarray
    components: tuple
    energies: np.ndarray
    basis: np.ndarray
    S_eig: np.ndarray
    freq_index: np.ndarray

    @property
    def terms(self):
        return list(zip(self.frequencies.tolist(), self.components))

    def component(self, omega, atol=1e-9):
        i = int(np.argmin(np.abs(self.frequencies - omega)))
        if abs(self.frequencies[i] - omega) > atol:
            return np.zeros_like(self.components[0])
        return self.components[i]

    def reconstruct(self):
        return sum(self.components, np.zeros_like(self.S_eig))


def default_cluster_tol(energies):
    spread = float(np.max(energies) - np.min(energies)) if len(energies) else 0.0
    return 1e-9 * max(spread, 1.0)


def bohr_decompose(H, S, cluster_tol=None, drop=1e-15):
    """Split ``S`` into parts oscillating at the Bohr frequencies of ``H``.

    Eigenvalues closer than ``cluster_tol`` are treated as degenerate and
    frequencies closer than ``cluster_tol`` are merged (secular grouping).
    Components whose largest entry is below ``drop * max|S|`` are omitted.
    """
    H = as_square(np.asarray(H, dtype=complex), "H")
    S = np.asarray(S, dtype=complex)
    if S.shape != H.shape:
        raise ContractViolation(f"coupling shape {S.shape} != Hamiltonian shape {H.shape}")
    w, V = herm_eig(H)
    tol = default_cluster_tol(w) if cluster_tol is None else float(cluster_tol)
    level_labels, level_E = _cluster(w, tol)
    e = level_E[level_labels]
    S_eig = dag(V) @ S @ V
    # element (l, k) carries frequency e_k - e_l
    omega = e[None, :] - e[:, None]
    labels, reps = _cluster(omega.ravel(), tol)
    labels = labels.reshape(omega.shape)
    scale = np.max(np.abs(S_eig)) if S.size else 0.0
    freqs, comps, keep_index = [], [], {}
    for k, wk in enumerate(reps):
        mask = labels == k
        block = np.where(mask, S_eig, 0.0)
        if np.max(np.abs(block)) <= drop * scale:
            continue
        keep_index[k] = len(freqs)
        freqs.append(wk)
        comps.append(V @ block @ dag(V))
    freq_index = np.full(labels.shape, -1)
    for old, new in keep_index.items():
        freq_index[labels == old] = new
    return BohrDecomposition(
        frequencies=np.array(freqs),
        components=tuple(comps),
        energies=w,
        basis=V,
        S_eig=np.where(freq_index >= 0, S_eig, 0.0),
        freq_index=freq_index,
    )


# --------------------------------------------------------------------------
# Davies assembly
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Coupling:
    """One system-bath coupling term.

    ``rwa=False``: Hermitian ``op`` coupled as ``op (x) R``; channels
    ``(G(w), S_w)`` for every Bohr frequency ``w`` of either sign.

    ``rwa=True``: ``op`` is the lowering part ``S^-`` of
    ``S^- (x) R^+ + S^+ (x) R^-``; channels ``(G(w), S^-_w)`` and
    ``(G(-w), (S^-_w)^+)``.
    """

    op: np.ndarray
    spectrum: object
    rwa: bool = False


def _as_coupling(c):
    if isinstance(c, Coupling):
        return c
    op, spec = c[0], c[1]
    rwa = bool(c[2]) if len(c) > 2 else False
    return Coupling(np.asarray(op, dtype=complex), spec, rwa)


def assemble_davies(H, couplings, cluster_tol=None, rate_cutoff=0.0):
    """Davies generator of ``H`` weakly coupled through ``couplings``.

    Parameters
    ----------
    H : Hermitian array
    couplings : iterable of ``Coupling`` or ``(S, spectrum[, rwa])`` tuples
    cluster_tol : float, optional
        Degeneracy / secular grouping tolerance.
    rate_cutoff : float
        Drop channels with ``rate * ||L||^2`` below ``rate_cutoff`` times the
        largest channel weight.
    """
    H = np.asarray(H, dtype=complex)
    channels = []
    for c in couplings:
        c = _as_coupling(c)
        if not c.rwa and not is_hermitian(c.op, rtol=1e-10):
            raise ContractViolation("non-Hermitian coupling must be marked rwa=True (lowering part)")
        dec = bohr_decompose(H, c.op, cluster_tol)
        if len(dec.frequencies) == 0:
            continue
        rates_down = np.asarray(c.spectrum(dec.frequencies), dtype=float)
        if np.any(rates_down < 0):
            raise InvariantViolation("coupling spectrum is negative at a Bohr frequency")
        for rate, Sw in zip(rates_down, dec.components):
            channels.append((float(rate), Sw))
        if c.rwa:
            rates_up = np.asarray(c.spectrum(-dec.frequencies), dtype=float)
            for rate, Sw in zip(rates_up, dec.components):
                channels.append((float(rate), dag(Sw)))
    channels = [(r, L) for r, L in channels if r > 0]
    if rate_cutoff > 0 and channels:
        weights = np.array([r * np.linalg.norm(L) ** 2 for r, L in channels])
        keep = weights >= rate_cutoff * weights.max()
        channels = [ch for ch, k in zip(channels, keep) if k]
    return GKLSGenerator(H, tuple(channels))


# --------------------------------------------------------------------------
# Stationary states
# --------------------------------------------------------------------------

def _kernel_by_blocks(M, tol):
    """Null vectors of a sparse square matrix via its connected components."""
    n = M.shape[0]
    pattern = (abs(M) + abs(M).T).tocsr()
    ncomp, labels = connected_components(pattern, directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(ncomp + 1))
    kernel = []
    smallest_nonzero = np.inf
    Mc = M.tocsc()
    for c in range(ncomp):
        idx = order[bounds[c]:bounds[c + 1]]
        if idx.size > MAX_DENSE_BLOCK:
            raise ResourceError(
                f"superoperator block of size {idx.size} exceeds dense limit {MAX_DENSE_BLOCK}"
            )
        block = Mc[:, idx][idx, :].toarray()
        if idx.size == 1:
            s = np.abs(block[0])
            vh = np.ones((1, 1), dtype=complex)
        else:
            _, s, vh = np.linalg.svd(block)
        null = s < tol
        if np.any(~null):
            smallest_nonzero = min(smallest_nonzero, float(s[~null].min()))
        for row in vh[null]:
            v = np.zeros(n, dtype=complex)
            v[idx] = np.conj(row)
            kernel.append(v)
    return kernel, smallest_nonzero


def stationary_state(g, tol=1e-9, residual_tol=1e-9, basis=None):
    """Unique stationary state of a GKLS generator.

    The superoperator is built sparsely in the eigenbasis of the
    Hamiltonian, split into its decoupled blocks, and each block's kernel
    is read off its singular values (``sigma < tol``).  Raises
    ``NonErgodic`` if the total kernel dimension exceeds one.
    ``basis=(w, V)`` skips the eigensolver when the eigenbasis is known.
    """
    w, V, Hd, chans = _eigenframe(g, basis)
    M = _sparse_superop(Hd, chans)
    kernel, gap = _kernel_by_blocks(M, tol)
    if len(kernel) == 0:
        raise NumericalFailure("no stationary state within tolerance", tol=tol, smallest_singular=gap)
    if len(kernel) > 1:
        raise NonErgodic(len(kernel), smallest_nonzero_singular=gap)
    rho_e = devec(kernel[0], g.dim)
    rho = V @ rho_e @ dag(V)
    tr = np.trace(rho)
    if abs(tr) < 1e-300:
        raise NumericalFailure("stationary kernel vector is traceless")
    rho = hermitize(rho / tr)
    ev, U = np.linalg.eigh(rho)
    if ev.min() < -1e-10:
        raise NumericalFailure("stationary state is not positive", min_eigenvalue=float(ev.min()))
    ev = np.clip(ev, 0.0, None)
    rho = (U * ev) @ dag(U)
    rho /= np.trace(rho).real
    residual = trace_norm(apply_generator(g, rho))
    if residual > residual_tol:
        raise NumericalFailure(
            f"stationary residual {residual:.3e} exceeds {residual_tol:.0e}", residual=residual
        )
    return rho


def kernel_dimension(g, tol=1e-9, basis=None):
    _, _, Hd, chans = _eigenframe(g, basis)
    kernel, _ = _kernel_by_blocks(_sparse_superop(Hd, chans), tol)
    return len(kernel)


# --------------------------------------------------------------------------
# Propagation
# --------------------------------------------------------------------------

DENSE_PROPAGATION_DIM = 24


def propagate(g, rho0, t, trace_tol=1e-9, basis=None):
    """``exp(t L) rho0`` for ``t >= 0``; ``basis`` as in ``stationary_state``."""
    if t < 0:
        raise ContractViolation("propagation time must be non-negative")
    rho0 = np.asarray(rho0, dtype=complex)
    if t == 0:
        return rho0.copy()
    if g.dim <= DENSE_PROPAGATION_DIM:
        rho = devec(expm(t * generator_superop(g)) @ vec(rho0), g.dim)
    else:
        w, V, Hd, chans = _eigenframe(g, basis)
        M = _sparse_superop(Hd, chans)
        r0 = dag(V) @ rho0 @ V
        rho = V @ devec(expm_multiply(t * M, vec(r0)), g.dim) @ dag(V)
    rho = hermitize(rho)
    drift = abs(np.trace(rho) - np.trace(rho0))
    if drift > trace_tol:
        raise NumericalFailure(f"trace drift {drift:.3e} during propagation", drift=float(drift))
    return rho


def propagate_series(g, rho0, times, basis=None):
    """States at each time in ``times`` (non-decreasing)."""
    times = np.asarray(times, dtype=float)
    out = []
    rho, t_prev = np.asarray(rho0, dtype=complex), 0.0
    for t in times:
        rho = propagate(g, rho, t - t_prev, basis=basis)
        out.append(rho)
        t_prev = t
    return out
