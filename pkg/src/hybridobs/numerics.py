"""Dense linear-algebra primitives.

Subspaces are represented by ``n x k`` arrays with orthonormal columns
(``k`` may be zero).  Every function here is pure and works on plain
``numpy`` arrays.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InfeasibleError, InputError, PlacementError


@dataclass(frozen=True)
class Tolerance:
    """Numerical thresholds.

    rank_tol : singular values ``<= rank_tol * sigma_max`` count as zero.
    spec_tol : slack allowed on spectral post-checks.
    """

    rank_tol: float = 1e-9
    spec_tol: float = 1e-9

    def __post_init__(self):
        if not (self.rank_tol > 0 and self.spec_tol > 0):
            raise InputError("tolerances must be strictly positive")


DEFAULT_TOL = Tolerance()

# Scale factor applied to a discrete radius target before the DARE.
DISCRETE_MARGIN = 0.995


def as_matrix(M, name="matrix"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{name} has non-finite entries")
    return M


def _square(M, name):
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise InputError(f"{name} must be square, got shape {M.shape}")
    return M


def empty_basis(n):
    return np.zeros((n, 0))


def kernel_basis(M, tol=DEFAULT_TOL):
    """Orthonormal basis of ``{x : M x = 0}``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError("kernel_basis: non-finite input")
    n = M.shape[1]
    if n == 0:
        return empty_basis(0)
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    rank = _numerical_rank(s, tol)
    return vt[rank:].T.copy()


def image_basis(M, tol=DEFAULT_TOL):
    """Orthonormal basis of the column space of ``M``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise InputError(f"expected a 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError("image_basis: non-finite input")
    n = M.shape[0]
    if M.shape[1] == 0 or n == 0:
        return empty_basis(n)
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    rank = _numerical_rank(s, tol)
    return u[:, :rank].copy()


def _numerical_rank(s, tol):
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol.rank_tol * s[0]))


def orthogonal_complement(U, n=None):
    U = np.asarray(U, dtype=float)
    n = U.shape[0] if n is None else n
    if U.shape[1] == 0:
        return np.eye(n)
    return kernel_basis(U.T)


def subspace_intersection(U, V, tol=DEFAULT_TOL):
    """Orthonormal basis of ``im(U) ∩ im(V)``.

    Computed as the kernel of ``[I - U U^T; I - V V^T]``; ``U`` and ``V``
    must have orthonormal columns.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.shape[0] != V.shape[0]:
        raise InputError(
            f"ambient dimension mismatch: {U.shape[0]} vs {V.shape[0]}")
    n = U.shape[0]
    if U.shape[1] == 0 or V.shape[1] == 0:
        return empty_basis(n)
    eye = np.eye(n)
    stacked = np.vstack([eye - U @ U.T, eye - V @ V.T])
    # singular values are sqrt(sin^2 + sin^2) of principal angles, so the
    # threshold is absolute; a relative one misfires when U = V = R^n
    _, s, vt = np.linalg.svd(stacked, full_matrices=True)
    rank = int(np.sum(s > tol.rank_tol * 2.0))
    return vt[rank:].T.copy()


def subspace_distance(U, V):
    """Spectral norm of the difference of orthogonal projectors."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    return float(np.linalg.norm(U @ U.T - V @ V.T, 2)) if U.shape[0] else 0.0


def matrix_exponential(A, t=1.0):
    """``exp(A t)`` by scaling and squaring with Pade approximants."""
    A = _square(A, "A")
    if A.shape[0] == 0:
        return A.copy()
    return sla.expm(A * float(t))


def eigvals(A):
    A = _square(A, "A")
    if A.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    try:
        return np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise InfeasibleError(f"eigensolver failed: {exc}") from exc


def spectral_abscissa(A):
    """Largest real part among the eigenvalues; ``-inf`` for an empty matrix."""
    ev = eigvals(A)
    return float(np.max(ev.real)) if ev.size else -np.inf


def spectral_radius(A):
    """Largest eigenvalue modulus; ``0`` for an empty matrix."""
    ev = eigvals(A)
    return float(np.max(np.abs(ev))) if ev.size else 0.0


def _outputs(H, n, name):
    H = np.asarray(H, dtype=float)
    if H.ndim < 2:
        H = H.reshape(1, -1) if H.size else np.zeros((0, n))
    if H.ndim != 2 or H.shape[1] != n:
        raise InputError(f"{name} must have {n} columns, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise InputError(f"{name} has non-finite entries")
    return H


def _unobservable_witness(F, H, threshold, discrete):
    """Eigenvalue of ``F`` failing the PBH test and lying outside the target."""
    n = F.shape[0]
    for lam in eigvals(F):
        bad = abs(lam) > threshold if discrete else lam.real > threshold
        if not bad:
            continue
        pbh = np.vstack([F - lam * np.eye(n), H.astype(complex)])
        if np.linalg.matrix_rank(pbh, tol=1e-8 * max(1.0, np.linalg.norm(pbh))) < n:
            return complex(lam)
    return None


def place_continuous(F, H, target_abscissa, tol=DEFAULT_TOL):
    """Observer gain ``L`` with ``spectral_abscissa(F - L H) <= target``.

    Solves the CARE of the dual pair shifted by ``-target_abscissa``, so the
    shifted closed loop is Hurwitz.  Identity weights.
    """
    F = _square(F, "F")
    n = F.shape[0]
    H = _outputs(H, n, "H")
    m = H.shape[0]
    if n == 0:
        return np.zeros((0, m))
    shifted = F - target_abscissa * np.eye(n)
    try:
        if m == 0:
            raise np.linalg.LinAlgError("no outputs")
        X = sla.solve_continuous_are(shifted.T, H.T, np.eye(n), np.eye(m))
        L = X @ H.T
        ok = np.all(np.isfinite(L))
    except (np.linalg.LinAlgError, ValueError):
        L, ok = np.zeros((n, m)), False
    achieved = spectral_abscissa(F - L @ H) if ok else np.inf
    if achieved > target_abscissa + tol.spec_tol:
        lam = _unobservable_witness(F, H, target_abscissa, discrete=False)
        raise PlacementError(
            f"cannot place continuous spectrum below {target_abscissa}: "
            f"offending eigenvalue {lam}", eigenvalue=lam)
    return L


def place_discrete(E, Cbar, target_radius, tol=DEFAULT_TOL):
    """Gain ``Nbar`` with ``spectral_radius(E - Nbar Cbar) <= target_radius``.

    ``Cbar`` must have full column rank.  A zero target gives the deadbeat
    gain ``E Cbar^+``; otherwise the DARE of the dual pair scaled by
    ``1 / (DISCRETE_MARGIN * target_radius)`` is solved.
    """
    E = _square(E, "E")
    n = E.shape[0]
    Cbar = _outputs(Cbar, n, "Cbar")
    m = Cbar.shape[0]
    if not 0.0 <= target_radius < 1.0:
        raise InputError(f"target radius must lie in [0, 1), got {target_radius}")
    if n == 0:
        return np.zeros((0, m))
    if image_basis(Cbar.T, tol).shape[1] < n:
        raise PlacementError(
            f"stacked neighbour matrix is rank deficient (shape {Cbar.shape}, "
            f"needs column rank {n})")
    if target_radius == 0.0:
        Nbar = E @ np.linalg.pinv(Cbar)
    else:
        r = DISCRETE_MARGIN * target_radius
        Es = E / r
        X = sla.solve_discrete_are(Es.T, Cbar.T, np.eye(n), np.eye(m))
        K = np.linalg.solve(np.eye(m) + Cbar @ X @ Cbar.T, Cbar @ X @ Es.T)
        Nbar = r * K.T
    achieved = spectral_radius(E - Nbar @ Cbar)
    if achieved > target_radius + tol.spec_tol:
        raise PlacementError(
            f"discrete placement missed target {target_radius}: radius {achieved}")
    return Nbar


def solve_discrete_lyapunov(mono, s):
    """``P > 0`` solving ``mono^T P mono - s^2 P = -I``."""
    mono = _square(mono, "mono")
    n = mono.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    rho = spectral_radius(mono)
    if not rho < s:
        raise InfeasibleError(
            f"spectral radius {rho} is not below the contraction factor {s}")
    scaled = mono / s
    P = sla.solve_discrete_lyapunov(scaled.T, np.eye(n) / s**2)
    P = 0.5 * (P + P.T)
    residual = mono.T @ P @ mono - s**2 * P + np.eye(n)
    if np.linalg.norm(residual) > 1e-9 * max(np.linalg.norm(P), 1.0):
        # polish once with the direct Kronecker solve
        K = np.kron(scaled.T, scaled.T) - np.eye(n * n)
        P = np.linalg.solve(K, -np.eye(n).ravel() / s**2).reshape(n, n)
        P = 0.5 * (P + P.T)
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError as exc:
        raise InfeasibleError("Lyapunov solution is not positive definite") from exc
    return P
