"""Dense complex linear algebra for operators on truncated Hilbert spaces.

Conventions
-----------
Operators are plain ``numpy`` complex arrays.  Vectorization is column
stacking, ``vec(X) = X.reshape(-1, order="F")``, so the superoperator of
``X -> A @ X @ B`` is ``kron(B.T, A)``.
"""
import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ContractViolation, InputError

HERMITIAN_RTOL = 1e-12
CLIP_TOL = 1e-10
ENTROPY_DROP = 1e-14


def as_square(M, name="matrix"):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ContractViolation(f"{name} must be square, got shape {M.shape}")
    return M


def is_hermitian(H, rtol=HERMITIAN_RTOL):
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        return False
    scale = np.max(np.abs(H)) if H.size else 0.0
    return np.max(np.abs(H - H.conj().T), initial=0.0) <= rtol * max(scale, 1e-300)


def dag(M):
    return np.conj(np.transpose(M))


def hermitize(M):
    return 0.5 * (M + dag(M))


# --------------------------------------------------------------------------
# Eigendecomposition
# --------------------------------------------------------------------------

def jacobi_eigh(H, tol=None, max_sweeps=60):
    """Cyclic Jacobi eigensolver for a complex Hermitian matrix.

    Each rotation first removes the phase of the pivot ``H[p, q]`` with a
    diagonal unitary and then applies the real symmetric 2x2 rotation.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending.
    """
    A = np.array(H, dtype=complex)
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    if n == 1:
        return A.real.diagonal().copy(), V
    norm = np.linalg.norm(A)
    if tol is None:
        tol = np.finfo(float).eps * max(norm, 1e-300)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                app = A[p, p].real
                aqq = A[q, q].real
                theta = 0.5 * np.arctan2(2.0 * mag, aqq - app)
                c, s = np.cos(theta), np.sin(theta)
                # J = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                J = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                idx = [p, q]
                A[:, idx] = A[:, idx] @ J
                A[idx, :] = dag(J) @ A[idx, :]
                A[p, q] = A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
                V[:, idx] = V[:, idx] @ J
    else:  # pragma: no cover - depends on pathological input
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off > 1e3 * tol:
            raise InputError(f"Jacobi did not converge (off-norm {off:.3e})")
    w = A.real.diagonal().copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def _blocks(H):
    """Connected components of the exact nonzero pattern of ``H``."""
    pattern = csr_matrix(np.abs(H) > 0)
    ncomp, labels = connected_components(pattern, directed=False)
    return ncomp, labels


def herm_eig(H, method="lapack", check=True):
    """Eigendecomposition ``H = V diag(w) V^dagger`` of a Hermitian matrix.

    The matrix is split into the connected components of its nonzero
    pattern first, so exactly block-diagonal inputs produce eigenvectors
    that respect the block structure even inside degenerate eigenspaces.

    Parameters
    ----------
    H : (n, n) array_like
        Hermitian matrix.
    method : {"lapack", "jacobi"}
        Dense kernel used on each block.
    check : bool
        Verify Hermiticity to ``1e-12 * max|H|``.

    Returns
    -------
    w : (n,) float array, ascending
    V : (n, n) complex unitary array, eigenvectors as columns
    """
    H = as_square(H, "H")
    if check and not is_hermitian(H):
        raise ContractViolation("herm_eig requires a Hermitian matrix")
    if not np.all(np.isfinite(H)):
        raise InputError("herm_eig: non-finite entries")
    n = H.shape[0]
    H = hermitize(H.astype(complex))
    kernel = {"lapack": np.linalg.eigh, "jacobi": jacobi_eigh}[method]
    ncomp, labels = _blocks(H)
    if ncomp == 1:
        w, V = kernel(H)
        return np.asarray(w, dtype=float), np.asarray(V, dtype=complex)
    w = np.empty(n)
    V = np.zeros((n, n), dtype=complex)
    col = 0
    for c in range(ncomp):
        idx = np.flatnonzero(labels == c)
        wb, Vb = kernel(H[np.ix_(idx, idx)])
        k = len(idx)
        w[col:col + k] = wb
        V[idx, col:col + k] = Vb
        col += k
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


# --------------------------------------------------------------------------
# Matrix functions
# --------------------------------------------------------------------------

def expm(M):
    """Matrix exponential (Pade scaling and squaring)."""
    M = as_square(M, "M")
    if not np.all(np.isfinite(M)):
        raise InputError("expm: NaN or Inf entries")
    return scipy.linalg.expm(M)


def trace_norm(M):
    """Sum of singular values."""
    M = as_square(M, "M")
    if is_hermitian(M, rtol=1e-13):
        return float(np.sum(np.abs(np.linalg.eigvalsh(hermitize(M)))))
    return float(np.sum(np.linalg.svd(M, compute_uv=False)))


def trace_distance(rho, sigma):
    return 0.5 * trace_norm(np.asarray(rho) - np.asarray(sigma))


def clip_spectrum(w, tol=CLIP_TOL):
    w = np.asarray(w, dtype=float).copy()
    w[(w < 0) & (w >= -tol)] = 0.0
    return w


def von_neumann_entropy(rho):
    """Entropy ``-Tr rho ln rho`` in nats."""
    rho = as_square(rho, "rho")
    w = clip_spectrum(np.linalg.eigvalsh(hermitize(rho)))
    w = w[w > ENTROPY_DROP]
    return float(-np.sum(w * np.log(w)))


def check_density(rho, tol=CLIP_TOL):
    """Raise ContractViolation unless ``rho`` is a valid density matrix."""
    rho = as_square(rho, "rho")
    if not is_hermitian(rho, rtol=1e-9):
        raise ContractViolation("density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise ContractViolation(f"density matrix trace {tr!r} != 1")
    wmin = np.linalg.eigvalsh(hermitize(rho)).min()
    if wmin < -tol:
        raise ContractViolation(f"density matrix has eigenvalue {wmin:.3e} < 0")
    return rho


def gibbs_state(H, beta):
    """``exp(-beta H) / Z`` computed in the eigenbasis."""
    w, V = herm_eig(H)
    if np.isinf(beta):
        p = (np.abs(w - w[0]) <= 1e-12 * max(1.0, abs(w[0]))).astype(float)
    else:
        p = np.exp(-beta * (w - w[0]))
    p /= p.sum()
    return (V * p) @ dag(V)


# --------------------------------------------------------------------------
# Tensor products and partial trace
# --------------------------------------------------------------------------

def kron(*ops):
    out = np.array([[1.0 + 0j]])
    for op in ops:
        out = np.kron(out, op)
    return out


def partial_trace(M, dims, keep):
    """Trace out every subsystem not listed in ``keep``.

    ``dims`` lists subsystem dimensions in tensor order; ``keep`` is an
    iterable of subsystem indices.  The kept factors stay in their
    original order.
    """
    M = as_square(M, "M")
    dims = [int(d) for d in dims]
    if int(np.prod(dims)) != M.shape[0]:
        raise InputError(f"dims {dims} do not match matrix dimension {M.shape[0]}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise InputError(f"keep indices {keep} out of range")
    n = len(dims)
    T = M.reshape(dims + dims)
    trace_out = [i for i in range(n) if i not in keep]
    # contract pairs from the highest index down so axis numbers stay valid
    current = n
    for i in sorted(trace_out, reverse=True):
        T = np.trace(T, axis1=i, axis2=i + current)
        current -= 1
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return T.reshape(dk, dk)


# --------------------------------------------------------------------------
# Vectorization and superoperators
# --------------------------------------------------------------------------

def vec(X):
    return np.asarray(X).reshape(-1, order="F")


def devec(v, d=None):
    v = np.asarray(v)
    if d is None:
        d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise InputError(f"vector of length {v.size} is not a vectorized square matrix")
    return v.reshape(d, d, order="F")


def sandwich(A, B):
    """Superoperator of ``X -> A X B``."""
    return np.kron(np.transpose(B), A)


def spre(A):
    return sandwich(A, np.eye(A.shape[0]))


def spost(B):
    return sandwich(np.eye(B.shape[0]), B)


def commutator_superop(H):
    """Superoperator of ``X -> -i [H, X]``."""
    return -1j * (spre(H) - spost(H))


def apply_superop(Phi, X):
    X = np.asarray(X)
    return devec(Phi @ vec(X), X.shape[0])


def choi_matrix(Phi):
    """Choi matrix ``sum_ij E_ij (x) Phi(E_ij)``, input factor first."""
    Phi = as_square(Phi, "Phi")
    d = int(round(np.sqrt(Phi.shape[0])))
    if d * d != Phi.shape[0]:
        raise InputError("superoperator dimension is not a perfect square")
    # Phi[a + d*b, i + d*j] -> C[(i, a), (j, b)]
    P4 = Phi.reshape(d, d, d, d)  # [b, a, j, i]
    return P4.transpose(3, 1, 2, 0).reshape(d * d, d * d)


def is_cptp(Phi, tol=1e-9, return_details=False):
    """Complete positivity and trace preservation via the Choi matrix."""
    C = choi_matrix(Phi)
    d = int(round(np.sqrt(C.shape[0])))
    herm_err = np.max(np.abs(C - dag(C)))
    min_eig = float(np.linalg.eigvalsh(hermitize(C)).min())
    tp_err = float(np.max(np.abs(partial_trace(C, [d, d], keep=[0]) - np.eye(d))))
    ok = bool(min_eig >= -tol and tp_err <= tol and herm_err <= tol)
    if return_details:
        return ok, {"min_eig": min_eig, "tp_err": tp_err, "herm_err": float(herm_err)}
    return ok


# --------------------------------------------------------------------------
# Random instances (seeded; used by tests and the verify path)
# --------------------------------------------------------------------------

def random_hermitian(d, rng, scale=1.0):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * hermitize(X)


def random_unitary(d, rng):
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    Q, R = np.linalg.qr(X)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def random_density(d, rng, rank=None):
    rank = d if rank is None else rank
    X = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = X @ dag(X)
    return rho / np.trace(rho).real
