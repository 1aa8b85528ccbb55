"""End-to-end glue: scenario file -> decomposition -> gains -> certificate -> runs."""

from dataclasses import dataclass

import numpy as np

from .certification import assemble_error_system, compute_certificate
from .decomposition import build_decomposition, find_hop_depths
from .errors import HybridObsError
from .numerics import DEFAULT_TOL
from .simulator import DisturbanceSpec, Scenario
from .synthesis import synthesize


class DetectabilityError(HybridObsError):
    """Collective alpha-detectability fails; ``result`` holds the witnesses."""

    def __init__(self, result):
        agents = ", ".join(str(i + 1) for i in result.failed_agents)
        super().__init__(f"not collectively alpha-detectable (agents {agents})")
        self.result = result


@dataclass(frozen=True)
class Design:
    scenario: object
    hops: object
    decomp: object
    gains: object


def analyze(sf, tol=DEFAULT_TOL):
    hops = find_hop_depths(sf.plant, sf.graph, sf.targets.alpha, tol=tol)
    decomp = build_decomposition(sf.plant, sf.graph, hops.depths, tol) if hops.ok else None
    return hops, decomp


def design(sf, tol=DEFAULT_TOL):
    hops, decomp = analyze(sf, tol)
    if not hops.ok:
        raise DetectabilityError(hops)
    gains = synthesize(decomp, sf.plant, sf.graph, sf.targets, tol)
    return Design(sf, hops, decomp, gains)


def certify(sf, decomp, gains, grid_points=1001):
    es = assemble_error_system(decomp, sf.plant, gains, sf.graph, sf.targets.T)
    return es, compute_certificate(es, sf.targets.alpha, grid_points)


def build_scenario(sf, decomp, gains, **overrides):
    """Simulation scenario from the file's ``sim`` block plus overrides.

    Recognised overrides: ``t_final, h, seed, variant, eps_tau, delta,
    noise`` (bool), ``x0, xhat0``.
    """
    sim = sf.sim
    x0, xhat0 = sf.initial_conditions()
    x0 = overrides.get("x0", x0)
    xhat0 = overrides.get("xhat0", xhat0)
    seed = overrides.get("seed", sim.seed)
    seed = sim.seed if seed is None else seed
    noise = overrides.get("noise")
    kind = sim.kind if noise is None else (sim.kind if noise else "zero")
    if noise and kind == "zero":
        kind = "clipped_gaussian"
    dist = DisturbanceSpec(sim.d_inf, sim.w_inf, seed, kind)

    def pick(name, default):
        v = overrides.get(name)
        return default if v is None else v

    return Scenario(
        plant=sf.plant, graph=sf.graph, gains=gains, decomp=decomp,
        T=sf.targets.T, alpha=sf.targets.alpha,
        t_final=pick("t_final", sim.t_final),
        h=pick("h", sim.h),
        x0=np.asarray(x0, float), xhat0=np.asarray(xhat0, float),
        disturbance=dist,
        variant=pick("variant", sim.variant),
        eps_tau=pick("eps_tau", sim.eps_tau),
        delta=pick("delta", sim.delta),
    )
