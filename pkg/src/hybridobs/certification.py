"""Hybrid error system and its ISS certificate.

The transformed error ``eps`` stacks the per-agent coordinates
``eps_{i,rho} = W_{i,rho}^T (x - xhat_i)`` hop by hop, highest hop first and
agents in ascending order within a hop.  With this ordering the flow and
jump matrices are block upper triangular.

Disturbances are stacked as ``d = (d_0, d_1, ..., d_p)`` and
``w = (w_{i,j})`` over agents ``i`` ascending, then ``j in N_i`` ascending.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConsistencyError, InfeasibleError
from .numerics import eigvals, matrix_exponential, solve_discrete_lyapunov, spectral_radius


@dataclass(frozen=True)
class ErrorLayout:
    """Coordinate bookkeeping for ``eps``, ``d`` and ``w``."""

    n: int
    blocks: dict       # (i, rho) -> slice into eps
    order: tuple       # (i, rho) in stacking order
    d_slices: tuple    # d_0, d_1, ..., d_p
    w_slices: dict     # (i, j) -> slice into w

    @property
    def size(self):
        return sum(s.stop - s.start for s in self.blocks.values())

    @property
    def d_dim(self):
        return self.d_slices[-1].stop if self.d_slices else 0

    @property
    def w_dim(self):
        return max((s.stop for s in self.w_slices.values()), default=0)

    def hop_of(self, index):
        for key, s in self.blocks.items():
            if s.start <= index < s.stop:
                return key[1]
        raise IndexError(index)


def error_layout(decomp, plant, graph):
    order, blocks, pos = [], {}, 0
    for rho in range(decomp.max_hop, -1, -1):
        for i in range(decomp.p):
            if rho <= decomp.hop_depths[i] + 1:
                k = decomp.dim(i, rho)
                blocks[(i, rho)] = slice(pos, pos + k)
                order.append((i, rho))
                pos += k
    d_slices, pos = [slice(0, plant.n)], plant.n
    for i in range(plant.p):
        d_slices.append(slice(pos, pos + plant.m(i)))
        pos += plant.m(i)
    w_slices, pos = {}, 0
    for i in range(plant.p):
        for j in graph.in_neighbors(i):
            w_slices[(i, j)] = slice(pos, pos + plant.n)
            pos += plant.n
    return ErrorLayout(plant.n, blocks, tuple(order), tuple(d_slices), w_slices)


def to_error_coordinates(decomp, layout, x, xhat):
    """``eps`` from plant state ``x`` and estimates ``xhat`` (p x n)."""
    eps = np.empty(layout.size)
    for (i, rho), s in layout.blocks.items():
        eps[s] = decomp.W(i, rho).T @ (x - xhat[i])
    return eps


@dataclass(frozen=True)
class ErrorSystem:
    """``eps' = A_eps eps + R d`` on flows, ``eps+ = J_eps eps + S w`` every ``T``."""

    A: np.ndarray
    J: np.ndarray
    R: np.ndarray
    S: np.ndarray
    T: float
    layout: ErrorLayout

    @property
    def n_eps(self):
        return self.A.shape[0]

    @property
    def block_index(self):
        return self.layout.blocks


def assemble_error_system(decomp, plant, gains, graph, T):
    """Build ``A_eps, J_eps, R, S`` by expanding the observer error dynamics.

    Each agent's error ``e_i`` is mapped to its coordinates through the
    orthogonal ``W_i``; the per-agent flow and jump maps are conjugated
    exactly and then scattered into the hop-major layout.
    """
    layout = error_layout(decomp, plant, graph)
    n, p = plant.n, plant.p
    N_eps = layout.size
    if N_eps != n * p:
        raise ConsistencyError(f"error dimension {N_eps} != n p = {n * p}",
                               check="dimension")
    A_eps = np.zeros((N_eps, N_eps))
    J_eps = np.zeros((N_eps, N_eps))
    R = np.zeros((N_eps, layout.d_dim))
    S = np.zeros((N_eps, layout.w_dim))

    def rows(i):
        # agent i's coordinates in eps, in hop order 0..l_i+1, and the matching W_i
        idx = np.concatenate([
            np.arange(layout.blocks[(i, r)].start, layout.blocks[(i, r)].stop)
            for r in range(decomp.hop_depths[i] + 2)]).astype(int)
        return idx, decomp.stacked(i)

    coords = [rows(i) for i in range(p)]
    d0 = layout.d_slices[0]
    for i in range(p):
        idx, Wi = coords[i]
        W0 = decomp.W(i, 0)
        Li = gains.local[i]
        flow = plant.A - W0 @ Li @ plant.outputs[i]
        A_eps[np.ix_(idx, idx)] = Wi.T @ flow @ Wi
        R[idx, d0] = Wi.T
        R[idx, layout.d_slices[i + 1]] = -Wi.T @ W0 @ Li

        G_total = np.zeros((n, n))
        for j in graph.in_neighbors(i):
            G_ij = np.zeros((n, n))
            for r in range(1, decomp.hop_depths[i] + 1):
                G_ij += decomp.W(i, r) @ gains.N(i, j, r, decomp) @ decomp.W(j, r - 1).T
            G_total += G_ij
            jdx, Wj = coords[j]
            J_eps[np.ix_(idx, jdx)] += Wi.T @ G_ij @ Wj
            S[idx, layout.w_slices[(i, j)]] = -Wi.T @ G_ij
        J_eps[np.ix_(idx, idx)] += Wi.T @ (np.eye(n) - G_total) @ Wi
    return ErrorSystem(A_eps, J_eps, R, S, float(T), layout)


def hop_boundaries(es):
    """Index ranges of each hop level in ``eps`` (highest hop first)."""
    spans = {}
    for (i, rho), s in es.layout.blocks.items():
        lo, hi = spans.get(rho, (s.start, s.stop))
        spans[rho] = (min(lo, s.start), max(hi, s.stop))
    return [spans[r] for r in sorted(spans, reverse=True)]


def below_diagonal_max(M, es):
    """Largest magnitude strictly below the hop-level block diagonal."""
    worst = 0.0
    for lo, hi in hop_boundaries(es):
        block = M[hi:, lo:hi]
        if block.size:
            worst = max(worst, float(np.max(np.abs(block))))
    return worst


def monodromy_families(es):
    """Per-(agent, hop) diagonal blocks of ``exp(A_eps T) J_eps``.

    By block triangularity these are ``exp(A_b T) J_b`` for each diagonal
    block ``b``; they cover the local, consensus and unobservable families.
    """
    fams = {}
    for key, s in es.layout.blocks.items():
        if s.stop > s.start:
            fams[key] = matrix_exponential(es.A[s, s], es.T) @ es.J[s, s]
    return fams


def _match_spectra(a, b, cluster_gap=1e-2, spread=1e-3):
    """Mismatch between the multisets ``a`` (computed) and ``b`` (reference).

    Eigenvalues repeated across coupled blocks are only determined to about
    ``eps^(1/k)`` individually (k the multiplicity), and their neighbours
    inherit part of that sensitivity.  The mean of a well separated group is
    well conditioned, so groups of ``b`` (single linkage at ``cluster_gap``)
    are compared through their means; no single eigenvalue may move by more
    than ``spread``.
    """
    a, b = np.asarray(a, dtype=complex), np.asarray(b, dtype=complex)
    if a.size != b.size:
        return np.inf
    if a.size == 0:
        return 0.0
    cost = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(cost)
    matched = np.empty_like(b)
    matched[c] = a[r]
    dev = np.abs(matched - b)
    if dev.max() > spread:
        return float(dev.max())
    label = np.arange(b.size)
    for i in range(b.size):
        for j in range(i):
            if abs(b[i] - b[j]) <= cluster_gap:
                label[label == label[i]] = label[j]
    return float(max(abs(matched[label == g].mean() - b[label == g].mean())
                     for g in np.unique(label)))


def monodromy(es, atol=1e-8):
    """``(exp(A_eps T) J_eps, spectral radius)``.

    Also checks that its spectrum equals the union of the diagonal block
    families; a mismatch means the triangular structure is broken.
    """
    M = matrix_exponential(es.A, es.T) @ es.J
    ev = eigvals(M)
    families = monodromy_families(es)
    union = np.concatenate([eigvals(F) for F in families.values()]) if families \
        else np.zeros(0, dtype=complex)
    mismatch = _match_spectra(ev, union)
    if mismatch > atol:
        raise ConsistencyError(
            f"monodromy spectrum differs from block families by {mismatch:.3g}",
            check="eigen_union")
    return M, (float(np.max(np.abs(ev))) if ev.size else 0.0)


ETA_INFLATION = 1e-6
DEFAULT_GRID = 1001


@dataclass(frozen=True)
class ISSCertificate:
    P: np.ndarray
    eta: float
    eta_raw: float
    c1: float
    c2: float
    M: float
    c_C: float
    c_D: float
    kappa: float
    gamma_C: float
    gamma_D: float
    alpha_achieved: float
    grid_points: int

    def to_json_dict(self):
        return {
            "p_matrix": self.P.tolist(),
            "eta": self.eta,
            "c1": self.c1,
            "c2": self.c2,
            "grad_bound": self.M,
            "c_flow": self.c_C,
            "c_jump": self.c_D,
            "kappa": self.kappa,
            "gamma_c": self.gamma_C,
            "gamma_d": self.gamma_D,
            "alpha_achieved": self.alpha_achieved,
        }

    def dumps(self):
        return json.dumps(self.to_json_dict(), indent=2)


def exp_norm_extrema(A, T, grid_points):
    """``min_s 1/|exp(-A s)|`` and ``max_s |exp(A s)|`` over ``s`` in ``[0, T]``.

    Uniform grid; powers of the one-step exponential are accumulated.
    """
    n = A.shape[0]
    if n == 0:
        return 1.0, 1.0
    step = T / (grid_points - 1)
    fwd_step = matrix_exponential(A, step)
    bwd_step = matrix_exponential(-A, step)
    fwd, bwd = np.eye(n), np.eye(n)
    max_fwd, max_bwd = 1.0, 1.0
    for _ in range(grid_points - 1):
        fwd = fwd @ fwd_step
        bwd = bwd @ bwd_step
        max_fwd = max(max_fwd, np.linalg.norm(fwd, 2))
        max_bwd = max(max_bwd, np.linalg.norm(bwd, 2))
    return 1.0 / max_bwd, max_fwd


def compute_certificate(es, alpha, grid_points=DEFAULT_GRID):
    """Constants of the ISS bound for the quadratic-in-flow Lyapunov function.

    ``V(eps, tau) = sqrt(eps' exp(A'(T - tau)) P exp(A (T - tau)) eps)`` with
    ``M' P M - eta^2 P = -I`` for the monodromy ``M``.  When the target rate
    is not met the certificate is issued for the rate that is.
    """
    M_mono, eta_raw = monodromy(es)
    if not eta_raw < 1.0:
        raise InfeasibleError(
            f"monodromy spectral radius {eta_raw:.6g} >= 1: error system not certified")
    target = math.exp(-alpha * es.T)
    # the largest admissible eta keeps P well conditioned; the inflation
    # keeps eta strictly above eta_raw when the requested rate is (nearly) missed
    eta = max(target, eta_raw * (1 + ETA_INFLATION), np.nextafter(eta_raw, 1.0))
    eta = float(min(eta, np.nextafter(1.0, 0.0)))
    alpha_achieved = -math.log(eta) / es.T
    P = solve_discrete_lyapunov(M_mono, eta)
    lam = np.linalg.eigvalsh(P) if P.size else np.array([1.0])
    lam_m, lam_M = float(lam[0]), float(lam[-1])
    th1, th2 = exp_norm_extrema(es.A, es.T, grid_points)
    c1 = math.sqrt(lam_m) * th1
    c2 = math.sqrt(lam_M) * th2
    M = lam_M * th2 / (math.sqrt(lam_m) * th1)
    c_C = M * float(np.linalg.norm(es.R, 2) if es.R.size else 0.0)
    c_D = M * float(np.linalg.norm(es.S, 2) if es.S.size else 0.0)
    return ISSCertificate(
        P=P, eta=eta, eta_raw=eta_raw, c1=c1, c2=c2, M=M, c_C=c_C, c_D=c_D,
        kappa=(c2 / c1) * math.exp(alpha_achieved * es.T),
        gamma_C=es.T * c_C / (c1 * (1 - eta)),
        gamma_D=c_D / (c1 * (1 - eta)),
        alpha_achieved=alpha_achieved,
        grid_points=grid_points,
    )


def lyapunov_value(es, P, eps, tau):
    E = matrix_exponential(es.A, es.T - tau)
    z = E @ eps
    return math.sqrt(max(float(z @ P @ z), 0.0))


@dataclass(frozen=True)
class ISSBoundReport:
    ok: bool
    worst_margin: float
    worst_time: float
    samples: int


def check_iss_bound(traj, cert, d_bound, w_bound, rel_floor=1e-10):
    """Pointwise check of the ISS envelope along a simulated trajectory.

    Violations smaller than ``rel_floor`` times the state magnitude are
    rounding noise (an estimate started on the state drifts off it by a few
    ulps) and do not count.
    """
    err = traj.total_error_norm()
    rhs = (cert.kappa * np.exp(-cert.alpha_achieved * traj.t) * err[0]
           + cert.gamma_C * d_bound + cert.gamma_D * w_bound)
    margin = rhs - err
    k = int(np.argmin(margin))
    floor = rel_floor * max(1.0, float(np.max(np.abs(traj.x))) if traj.x.size else 1.0)
    return ISSBoundReport(bool(np.all(margin >= -floor)), float(margin[k]),
                          float(traj.t[k]), int(err.size))
