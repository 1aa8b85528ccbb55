"""Multi-hop observability decomposition.

Agents are indexed ``0 .. p-1`` in the Python API.  Everywhere a stack over
an in-neighbourhood appears, neighbours are taken in ascending index order.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError, InputError
from .numerics import (
    DEFAULT_TOL,
    as_matrix,
    eigvals,
    empty_basis,
    image_basis,
    orthogonal_complement,
    subspace_intersection,
)


@dataclass(frozen=True)
class PlantModel:
    """``xdot = A x + d_0``, ``y_i = C_i x + d_i``."""

    A: np.ndarray
    outputs: tuple

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = np.zeros((0, 0))
        A = as_matrix(A, "A") if A.size else A
        if A.shape[0] != A.shape[1]:
            raise InputError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        outs = []
        for i, C in enumerate(self.outputs):
            C = np.asarray(C, dtype=float)
            if C.size == 0:
                C = np.zeros((0, n))
            elif C.ndim == 1:
                C = C.reshape(1, -1)
            if C.ndim != 2 or C.shape[1] != n:
                raise InputError(f"C_{i} must have {n} columns, got shape {C.shape}")
            if C.shape[0] > n:
                raise InputError(f"C_{i} has {C.shape[0]} rows, more than n = {n}")
            if not np.all(np.isfinite(C)):
                raise InputError(f"C_{i} has non-finite entries")
            outs.append(C)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "outputs", tuple(outs))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p(self):
        return len(self.outputs)

    def m(self, i):
        return self.outputs[i].shape[0]


@dataclass(frozen=True)
class SensorGraph:
    """Directed graph; an edge ``(j, i)`` means agent ``j`` transmits to ``i``."""

    p: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        edges = frozenset((int(j), int(i)) for j, i in self.edges)
        for j, i in edges:
            if not (0 <= j < self.p and 0 <= i < self.p):
                raise InputError(f"edge ({j}, {i}) references an unknown agent")
            if i == j:
                raise InputError(f"self-loop on agent {i} is not allowed")
        object.__setattr__(self, "edges", edges)

    def in_neighbors(self, i):
        return sorted(j for j, k in self.edges if k == i)


def multihop_output(plant, graph, i, rho):
    """``C_{i,rho}``: own rows stacked over neighbours' ``(rho-1)``-hop matrices."""
    if not 0 <= i < plant.p:
        raise InputError(f"unknown agent {i}")
    if rho < 0:
        raise InputError("hop must be non-negative")
    return _multihop_levels(plant, graph, rho)[rho][i]


def _multihop_levels(plant, graph, rho_max):
    levels = [list(plant.outputs)]
    for _ in range(rho_max):
        prev = levels[-1]
        levels.append([
            np.vstack([prev[i]] + [prev[j] for j in graph.in_neighbors(i)])
            for i in range(plant.p)
        ])
    return levels


def observability_matrix(C, A):
    """``[C; C A; ...; C A^{n-1}]`` (brute force, used as an oracle)."""
    n = A.shape[0]
    blocks, M = [], np.asarray(C, dtype=float)
    for _ in range(n):
        blocks.append(M)
        M = M @ A
    return np.vstack(blocks) if blocks else np.zeros((0, 0))


def observable_subspace(C, A, tol=DEFAULT_TOL):
    """Orthonormal basis of the observable subspace of ``(C, A)``.

    This is the row space of the observability matrix, grown as the smallest
    ``A^T``-invariant subspace containing ``rowspace(C)``; each new Krylov
    block is orthogonalised against the current basis before its rank is
    decided, which keeps the basis accurate when powers of ``A`` are badly
    scaled.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    C = np.asarray(C, dtype=float)
    if C.size == 0:
        C = np.zeros((0, n))
    elif C.ndim < 2:
        C = C.reshape(1, -1)
    if C.ndim != 2 or C.shape[1] != n:
        raise InputError(f"C has {C.shape[1]} columns, A is {n} x {n}")
    basis = image_basis(C.T, tol)
    if basis.shape[1] == 0:
        return basis
    scale = max(np.linalg.norm(A, 2), np.finfo(float).tiny)
    new = basis
    while new.shape[1] and basis.shape[1] < n:
        Z = A.T @ new
        for _ in range(2):
            Z = Z - basis @ (basis.T @ Z)
        u, s, _ = np.linalg.svd(Z, full_matrices=False)
        keep = s > tol.rank_tol * scale
        new = u[:, keep]
        basis = np.hstack([basis, new])
    q, _ = np.linalg.qr(basis)
    return q[:, :basis.shape[1]]


def unobservable_subspace(C, A, tol=DEFAULT_TOL):
    n = np.asarray(A).shape[0]
    return orthogonal_complement(observable_subspace(C, A, tol), n)


def is_alpha_detectable(C, A, alpha, tol=DEFAULT_TOL):
    """Check that every unobservable mode has real part ``<= -alpha``.

    Returns ``(ok, witness)`` where ``witness`` is the slowest offending
    eigenvalue, or ``None``.
    """
    if alpha <= 0:
        raise InputError("alpha must be positive")
    A = np.asarray(A, dtype=float)
    Wbar = unobservable_subspace(C, A, tol)
    ev = eigvals(Wbar.T @ A @ Wbar)
    bad = ev[ev.real > -alpha + tol.spec_tol]
    if bad.size == 0:
        return True, None
    return False, complex(bad[np.argmax(bad.real)])


@dataclass(frozen=True)
class HopDepthResult:
    """Minimal hop depths, or the agents for which none exists up to the cap."""

    depths: tuple
    witnesses: dict

    @property
    def ok(self):
        return not self.witnesses

    @property
    def failed_agents(self):
        return sorted(self.witnesses)


def find_hop_depths(plant, graph, alpha, max_hops=None, tol=DEFAULT_TOL):
    """Smallest ``l_i`` such that ``(C_{i,l_i}, A)`` is alpha-detectable.

    ``max_hops`` defaults to ``p - 1``.  Agents with no admissible depth get
    ``None`` in ``depths`` and their slowest unobservable eigenvalue at the
    cap in ``witnesses``.
    """
    max_hops = max(plant.p - 1, 0) if max_hops is None else max_hops
    if max_hops < 0:
        raise InputError("max_hops must be non-negative")
    levels = _multihop_levels(plant, graph, max_hops)
    depths, witnesses = [], {}
    for i in range(plant.p):
        found = None
        for rho in range(max_hops + 1):
            ok, witness = is_alpha_detectable(levels[rho][i], plant.A, alpha, tol)
            if ok:
                found = rho
                break
        depths.append(found)
        if found is None:
            witnesses[i] = witness
    return HopDepthResult(tuple(depths), witnesses)


@dataclass(frozen=True)
class MultiHopDecomposition:
    """Per-agent innovation bases ``W_{i,0..l_i+1}`` and hop output matrices."""

    n: int
    hop_depths: tuple
    innovation: tuple
    multihop_outputs: tuple

    @property
    def p(self):
        return len(self.hop_depths)

    @property
    def max_hop(self):
        """``max_i (l_i + 1)``."""
        return max((l + 1 for l in self.hop_depths), default=0)

    def W(self, i, rho):
        if 0 <= rho < len(self.innovation[i]):
            return self.innovation[i][rho]
        return empty_basis(self.n)

    def dim(self, i, rho):
        return self.W(i, rho).shape[1]

    def stacked(self, i):
        return np.hstack(self.innovation[i]) if self.n else np.zeros((0, 0))


def build_decomposition(plant, graph, hop_depths, tol=DEFAULT_TOL, check=True):
    """Innovation bases from observable/unobservable subspaces of every hop."""
    if len(hop_depths) != plant.p:
        raise InputError("one hop depth per agent is required")
    if any(l is None or l < 0 for l in hop_depths):
        raise InputError(f"invalid hop depths {hop_depths}")
    n = plant.n
    levels = _multihop_levels(plant, graph, max(hop_depths, default=0))
    innovation = []
    for i, ell in enumerate(hop_depths):
        prev_unobs = np.eye(n)
        Ws = []
        for rho in range(ell + 1):
            obs = observable_subspace(levels[rho][i], plant.A, tol)
            Ws.append(subspace_intersection(prev_unobs, obs, tol))
            prev_unobs = orthogonal_complement(obs, n)
        Ws.append(prev_unobs)
        innovation.append(tuple(Ws))
    decomp = MultiHopDecomposition(
        n=n,
        hop_depths=tuple(int(l) for l in hop_depths),
        innovation=tuple(innovation),
        multihop_outputs=tuple(
            tuple(levels[rho][i] for rho in range(ell + 1))
            for i, ell in enumerate(hop_depths)),
    )
    if check:
        check_decomposition(decomp, plant, graph, tol)
    return decomp


def check_decomposition(decomp, plant, graph, tol=DEFAULT_TOL, atol=1e-9):
    """Raise :class:`ConsistencyError` naming the first violated invariant."""
    n = decomp.n
    for i in range(decomp.p):
        Wi = decomp.stacked(i)
        if Wi.shape != (n, n):
            raise ConsistencyError(
                f"agent {i}: innovation bases have {Wi.shape[1]} columns, expected {n}",
                check="dimension")
        if n and np.linalg.norm(Wi.T @ Wi - np.eye(n)) > atol:
            raise ConsistencyError(f"agent {i}: stacked W_i is not orthogonal",
                                   check="orthogonality")
        ell = decomp.hop_depths[i]
        for rho in range(ell + 1):
            W = decomp.W(i, rho)
            if W.shape[1] == 0:
                continue
            obs = observable_subspace(decomp.multihop_outputs[i][rho], plant.A, tol)
            if np.linalg.norm(W - obs @ (obs.T @ W)) > atol:
                raise ConsistencyError(
                    f"agent {i}, hop {rho}: innovation leaves the observable subspace",
                    check="containment")
            if rho >= 1:
                prev = observable_subspace(
                    decomp.multihop_outputs[i][rho - 1], plant.A, tol)
                if np.linalg.norm(prev.T @ W) > atol:
                    raise ConsistencyError(
                        f"agent {i}, hop {rho}: innovation not unobservable at hop {rho - 1}",
                        check="containment")
                Cbar = neighbor_projection(decomp, graph, i, rho)
                if image_basis(Cbar.T, tol).shape[1] < W.shape[1]:
                    raise ConsistencyError(
                        f"agent {i}, hop {rho}: neighbour projection is rank deficient",
                        check="q_recovery")


def neighbor_projection(decomp, graph, i, rho):
    """``col_{j in N_i}(W_{j,rho-1}^T) W_{i,rho}``."""
    W = decomp.W(i, rho)
    blocks = [decomp.W(j, rho - 1).T @ W for j in graph.in_neighbors(i)]
    return np.vstack(blocks) if blocks else np.zeros((0, W.shape[1]))
