"""Observer gain synthesis.

Local gains ``L_i`` act on the locally observable coordinates ``W_{i,0}``;
consensus gains ``N_{i,j,rho}`` correct hop ``rho`` from neighbour ``j``'s
hop ``rho - 1`` estimate at every communication instant.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .decomposition import neighbor_projection
from .errors import ConsistencyError, InputError, PlacementError
from .numerics import (
    DEFAULT_TOL,
    eigvals,
    matrix_exponential,
    place_continuous,
    place_discrete,
    spectral_abscissa,
    spectral_radius,
)


@dataclass(frozen=True)
class GainTargets:
    """Rate ``alpha``, period ``T`` and the two spectral targets.

    ``abar`` defaults to ``-5 alpha`` and ``bbar`` to ``exp(-alpha T)``.
    """

    alpha: float
    T: float
    abar: float = None
    bbar: float = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise InputError(f"alpha must be positive, got {self.alpha}")
        if not self.T > 0:
            raise InputError(f"T must be positive, got {self.T}")
        if self.abar is None:
            object.__setattr__(self, "abar", -5.0 * self.alpha)
        if self.bbar is None:
            object.__setattr__(self, "bbar", math.exp(-self.alpha * self.T))
        if self.abar > -self.alpha:
            raise InputError(f"abar = {self.abar} must not exceed -alpha = {-self.alpha}")
        if not 0.0 <= self.bbar <= math.exp(-self.alpha * self.T) * (1 + 1e-12):
            raise InputError(
                f"bbar = {self.bbar} must lie in [0, exp(-alpha T)] = "
                f"[0, {math.exp(-self.alpha * self.T)}]")


@dataclass(frozen=True)
class BlockCheck:
    agent: int
    hop: int
    kind: str  # "local", "consensus" or "unobservable"
    value: float
    target: float
    ok: bool


@dataclass(frozen=True)
class GainCheckReport:
    checks: tuple = ()

    @property
    def passed(self):
        return all(c.ok for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.ok]

    def table(self):
        lines = [f"{'agent':>5} {'hop':>3} {'kind':<12} {'value':>12} {'target':>12}  ok"]
        for c in self.checks:
            lines.append(f"{c.agent + 1:>5} {c.hop:>3} {c.kind:<12} "
                         f"{c.value:>12.6g} {c.target:>12.6g}  {'yes' if c.ok else 'NO'}")
        return "\n".join(lines)


@dataclass(frozen=True)
class ObserverGains:
    """``local[i]`` is ``L_i``; ``consensus[(i, j, rho)]`` is ``N_{i,j,rho}``."""

    local: tuple
    consensus: dict = field(default_factory=dict)
    report: GainCheckReport = None

    def N(self, i, j, rho, decomp=None):
        key = (i, j, rho)
        if key in self.consensus:
            return self.consensus[key]
        if decomp is None:
            raise KeyError(key)
        return np.zeros((decomp.dim(i, rho), decomp.dim(j, rho - 1)))


def design_local_gain(decomp, plant, i, targets, tol=DEFAULT_TOL):
    """``L_i`` making ``(W_{i,0}^T A - L_i C_i) W_{i,0}`` faster than ``abar``."""
    W0 = decomp.W(i, 0)
    m = plant.m(i)
    if W0.shape[1] == 0:
        return np.zeros((0, m))
    F = W0.T @ plant.A @ W0
    H = plant.outputs[i] @ W0
    try:
        return place_continuous(F, H, targets.abar, tol)
    except PlacementError as exc:
        raise ConsistencyError(
            f"agent {i}: local pair is not observable on W_{{i,0}} ({exc})",
            check="local_placement") from exc


def consensus_matrices(decomp, plant, graph, i, rho, T):
    """``E_{i,rho}`` and the stacked neighbour projection ``Cbar_{i,rho}``."""
    W = decomp.W(i, rho)
    E = matrix_exponential(W.T @ plant.A @ W, T)
    return E, neighbor_projection(decomp, graph, i, rho)


def design_consensus_gains(decomp, plant, graph, i, rho, targets, tol=DEFAULT_TOL):
    """Gains ``{j: N_{i,j,rho}}`` placing the hop-``rho`` jump matrix.

    ``Nbar = place_discrete(E, Cbar, bbar)`` is mapped back to the raw gains
    through ``[N_{i,j1} N_{i,j2} ...] = E^{-1} Nbar``.
    """
    if not 1 <= rho <= decomp.hop_depths[i]:
        raise InputError(f"hop {rho} outside 1..{decomp.hop_depths[i]} for agent {i}")
    neighbors = graph.in_neighbors(i)
    W = decomp.W(i, rho)
    if W.shape[1] == 0:
        return {}
    E, Cbar = consensus_matrices(decomp, plant, graph, i, rho, targets.T)
    try:
        Nbar = place_discrete(E, Cbar, targets.bbar, tol)
    except PlacementError as exc:
        raise ConsistencyError(
            f"agent {i}, hop {rho}: {exc}", check="consensus_placement") from exc
    raw = np.linalg.solve(E, Nbar)
    widths = [decomp.dim(j, rho - 1) for j in neighbors]
    splits = np.cumsum(widths)[:-1]
    gains = dict(zip(neighbors, np.split(raw, splits, axis=1)))
    radius = spectral_radius(jump_block(decomp, plant, graph, gains, i, rho, targets.T))
    if radius > targets.bbar + tol.spec_tol:
        raise ConsistencyError(
            f"agent {i}, hop {rho}: radius {radius} above {targets.bbar}",
            check="consensus_postcheck")
    return gains


def jump_block(decomp, plant, graph, gains_i, i, rho, T):
    """``exp(W^T A W T) (I - sum_j N_{i,j,rho} W_{j,rho-1}^T W)``."""
    W = decomp.W(i, rho)
    k = W.shape[1]
    corr = np.zeros((k, k))
    for j in graph.in_neighbors(i):
        Nij = gains_i.get(j)
        if Nij is not None:
            corr += Nij @ decomp.W(j, rho - 1).T @ W
    return matrix_exponential(W.T @ plant.A @ W, T) @ (np.eye(k) - corr)


def synthesize(decomp, plant, graph, targets, tol=DEFAULT_TOL):
    """All gains, with the block verification report attached."""
    local = tuple(design_local_gain(decomp, plant, i, targets, tol)
                  for i in range(decomp.p))
    consensus = {}
    for i in range(decomp.p):
        for rho in range(1, decomp.hop_depths[i] + 1):
            for j, Nij in design_consensus_gains(
                    decomp, plant, graph, i, rho, targets, tol).items():
                consensus[(i, j, rho)] = Nij
    gains = ObserverGains(local, consensus)
    report = verify_property1(decomp, plant, graph, gains, targets, tol)
    return ObserverGains(local, consensus, report)


def verify_property1(decomp, plant, graph, gains, targets, tol=DEFAULT_TOL):
    """Spectral check of every local, consensus and unobservable block."""
    checks = []
    decay = math.exp(-targets.alpha * targets.T)
    for i in range(decomp.p):
        W0 = decomp.W(i, 0)
        if W0.shape[1]:
            closed = (W0.T @ plant.A - gains.local[i] @ plant.outputs[i]) @ W0
            value = spectral_abscissa(closed)
            checks.append(BlockCheck(i, 0, "local", value, targets.abar,
                                     value <= targets.abar + tol.spec_tol))
        ell = decomp.hop_depths[i]
        for rho in range(1, ell + 1):
            if decomp.dim(i, rho) == 0:
                continue
            gains_i = {j: gains.N(i, j, rho, decomp) for j in graph.in_neighbors(i)}
            value = spectral_radius(jump_block(decomp, plant, graph, gains_i, i, rho, targets.T))
            checks.append(BlockCheck(i, rho, "consensus", value, targets.bbar,
                                     value <= targets.bbar + tol.spec_tol))
        Wu = decomp.W(i, ell + 1)
        if Wu.shape[1]:
            ev = eigvals(Wu.T @ plant.A @ Wu)
            value = float(np.max(np.exp(ev.real * targets.T)))
            checks.append(BlockCheck(i, ell + 1, "unobservable", value, decay,
                                     value <= decay + tol.spec_tol))
    return GainCheckReport(tuple(checks))
