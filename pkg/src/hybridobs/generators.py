"""Random collectively detectable instances for property tests and sweeps."""

from dataclasses import dataclass

import numpy as np
from scipy.stats import ortho_group

from .decomposition import PlantModel, SensorGraph
from .synthesis import GainTargets


@dataclass(frozen=True)
class RandomInstance:
    plant: PlantModel
    graph: SensorGraph
    targets: GainTargets
    seed: int


def _modal_blocks(rng, n, alpha, hidden):
    """Real modal blocks: oscillators, slow real modes and hidden stable modes."""
    blocks, visible = [], []
    freqs = iter(rng.permutation(np.linspace(0.5, 3.0, 11)))
    size = 0
    while size < n:
        room = n - size
        is_hidden = hidden and size == 0 and room > 1
        if room >= 2 and rng.random() < 0.6:
            w = next(freqs)
            sigma = -alpha - 1.0 - rng.random() if is_hidden else rng.uniform(-0.5, 0.3)
            blk = np.array([[sigma, w], [-w, sigma]])
        else:
            lam = -alpha - 1.0 - rng.random() if is_hidden else rng.uniform(-0.5, 0.5)
            blk = np.array([[lam]])
        blocks.append(blk)
        visible.append(not is_hidden)
        size += blk.shape[0]
    # distinct real eigenvalues keep sums of modes observable generically
    return blocks, visible


def random_instance(seed, n_max=8, p_max=5, alpha=1.0, T=0.1, hidden=None):
    """Random plant and strongly connected graph that is collectively detectable.

    Every visible mode is measured by at least one agent and the graph
    contains a directed ring, so every agent reaches every measurement.
    Hidden modes are measured by nobody and decay faster than ``alpha``.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    p = int(rng.integers(1, p_max + 1))
    if hidden is None:
        hidden = bool(rng.random() < 0.3)
    blocks, visible = _modal_blocks(rng, n, alpha, hidden)
    offsets = np.cumsum([0] + [b.shape[0] for b in blocks])
    A0 = np.zeros((n, n))
    for b, k in zip(blocks, offsets):
        A0[k:k + b.shape[0], k:k + b.shape[0]] = b
    seen = [k for k, v in enumerate(visible) if v]
    owners = {k: set() for k in seen}
    for k in seen:
        owners[k].add(int(rng.integers(p)))
        for i in range(p):
            if rng.random() < 0.25:
                owners[k].add(i)
    rows = [[] for _ in range(p)]
    for k in seen:
        lo, hi = offsets[k], offsets[k + 1]
        for i in owners[k]:
            r = np.zeros(n)
            r[lo:hi] = rng.standard_normal(hi - lo)
            rows[i].append(r)
    Q = ortho_group.rvs(n, random_state=rng) if n > 1 else np.eye(1)
    A = Q @ A0 @ Q.T
    outputs = tuple(
        (np.array(r) @ Q.T) if r else np.zeros((0, n)) for r in rows)
    edges = {(i, (i + 1) % p) for i in range(p)} if p > 1 else set()
    for j in range(p):
        for i in range(p):
            if i != j and rng.random() < 0.2:
                edges.add((j, i))
    return RandomInstance(PlantModel(A, outputs), SensorGraph(p, frozenset(edges)),
                          GainTargets(alpha, T), seed)
