"""JSON scenario, gains and certificate documents.

Agent indices are 1-based in every document and 0-based in the Python API.
"""

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .decomposition import PlantModel, SensorGraph
from .errors import InputError
from .simulator import KINDS, VARIANTS, DisturbanceSpec
from .synthesis import GainTargets, ObserverGains

BUNDLED = {"ring4": "ring4.json"}


@dataclass(frozen=True)
class SimConfig:
    t_final: float = 10.0
    h: float = None
    x0: tuple = None
    xhat0: object = "zero"
    seed: int = 0
    d_inf: float = 0.0
    w_inf: float = 0.0
    kind: str = "zero"
    variant: str = "nominal"
    eps_tau: float = 0.0
    delta: float = 0.0

    @property
    def disturbance(self):
        return DisturbanceSpec(self.d_inf, self.w_inf, self.seed, self.kind)


@dataclass(frozen=True)
class ScenarioFile:
    plant: PlantModel
    graph: SensorGraph
    targets: GainTargets
    sim: SimConfig = field(default_factory=SimConfig)
    raw: dict = field(default_factory=dict, compare=False)

    def initial_conditions(self):
        n, p = self.plant.n, self.plant.p
        x0 = np.zeros(n) if self.sim.x0 is None else np.asarray(self.sim.x0, float)
        if isinstance(self.sim.xhat0, str):
            xhat0 = np.zeros((p, n))
        else:
            xhat0 = np.asarray(self.sim.xhat0, float)
        return x0, xhat0


def _matrix(value, path, cols=None):
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: not a numeric nested array") from exc
    if M.size == 0:
        return np.zeros((0, cols if cols is not None else 0))
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if M.ndim != 2:
        raise InputError(f"{path}: expected a 2-D nested array, got {M.ndim}-D")
    if cols is not None and M.shape[1] != cols:
        raise InputError(f"{path}: expected {cols} columns, got {M.shape[1]}")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{path}: non-finite entries")
    return M


def _vector(value, path, length):
    try:
        v = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: not a numeric vector") from exc
    if v.shape != (length,):
        raise InputError(f"{path}: expected a vector of length {length}, got shape {v.shape}")
    return v


def _number(obj, key, path, default=None, cast=float):
    if not isinstance(obj, dict):
        raise InputError(f"{path}: must be an object")
    if key not in obj:
        if default is None:
            raise InputError(f"{path}.{key}: missing")
        return default
    try:
        return cast(obj[key])
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}.{key}: expected a number") from exc


def _require(obj, key, path):
    if not isinstance(obj, dict) or key not in obj:
        raise InputError(f"{path}.{key}: missing")
    return obj[key]


def parse_scenario(doc):
    """Validate a scenario document and build the typed objects."""
    if not isinstance(doc, dict):
        raise InputError("scenario: top level must be an object")
    plant_doc = _require(doc, "plant", "scenario")
    A = _matrix(_require(plant_doc, "a", "plant"), "plant.a")
    if A.shape[0] != A.shape[1]:
        raise InputError(f"plant.a: must be square, got {A.shape[0]}x{A.shape[1]}")
    n = A.shape[0]
    outputs_doc = _require(plant_doc, "outputs", "plant")
    graph_doc = _require(doc, "graph", "scenario")
    p = _number(graph_doc, "p", "graph", cast=int)
    if p < 0:
        raise InputError("graph.p: must be non-negative")
    outputs = [None] * p
    if not isinstance(outputs_doc, list):
        raise InputError("plant.outputs: must be a list")
    for idx, entry in enumerate(outputs_doc):
        path = f"plant.outputs[{idx}]"
        agent = _number(entry, "agent", path, cast=int)
        if not 1 <= agent <= p:
            raise InputError(f"{path}.agent: {agent} outside 1..{p}")
        if outputs[agent - 1] is not None:
            raise InputError(f"{path}.agent: duplicate agent {agent}")
        C = _matrix(_require(entry, "c", path), f"{path}.c", cols=n)
        if C.shape[0] > n:
            raise InputError(f"{path}.c: {C.shape[0]} rows exceed n = {n}")
        outputs[agent - 1] = C
    for i, C in enumerate(outputs):
        if C is None:
            raise InputError(f"plant.outputs: no entry for agent {i + 1}")
    plant = PlantModel(A, tuple(outputs))
    edges = []
    for idx, e in enumerate(graph_doc.get("edges", [])):
        if not (isinstance(e, (list, tuple)) and len(e) == 2):
            raise InputError(f"graph.edges[{idx}]: expected a pair [j, i]")
        try:
            j, i = int(e[0]), int(e[1])
        except (TypeError, ValueError) as exc:
            raise InputError(f"graph.edges[{idx}]: agents must be integers") from exc
        if not (1 <= j <= p and 1 <= i <= p):
            raise InputError(f"graph.edges[{idx}]: agent outside 1..{p}")
        if i == j:
            raise InputError(f"graph.edges[{idx}]: self-loop on agent {i}")
        edges.append((j - 1, i - 1))
    graph = SensorGraph(p, frozenset(edges))

    tdoc = _require(doc, "targets", "scenario")
    alpha = _number(tdoc, "alpha", "targets")
    T = _number(tdoc, "t_period", "targets")
    abar = tdoc.get("abar")
    bbar = tdoc.get("bbar")
    targets = GainTargets(alpha, T,
                          None if abar is None else float(abar),
                          None if bbar is None else float(bbar))

    sdoc = doc.get("sim", {})
    if not isinstance(sdoc, dict):
        raise InputError("sim: must be an object")
    x0 = sdoc.get("x0")
    if x0 is not None:
        x0 = tuple(_vector(x0, "sim.x0", n))
    xhat0 = sdoc.get("xhat0", "zero")
    if isinstance(xhat0, str):
        if xhat0 != "zero":
            raise InputError('sim.xhat0: expected "zero" or per-agent vectors')
    else:
        xhat0 = _matrix(xhat0, "sim.xhat0", cols=n)
        if xhat0.shape[0] != p:
            raise InputError(f"sim.xhat0: expected {p} agent vectors, got {xhat0.shape[0]}")
        xhat0 = tuple(map(tuple, xhat0))
    kind = sdoc.get("kind", "zero")
    if kind not in KINDS:
        raise InputError(f"sim.kind: expected one of {KINDS}, got {kind!r}")
    variant = sdoc.get("variant", "nominal")
    if variant not in VARIANTS:
        raise InputError(f"sim.variant: expected one of {VARIANTS}, got {variant!r}")
    h = sdoc.get("h")
    sim = SimConfig(
        t_final=_number(sdoc, "t_final", "sim", 10.0),
        h=None if h is None else float(h),
        x0=x0,
        xhat0=xhat0,
        seed=_number(sdoc, "seed", "sim", 0, cast=int),
        d_inf=_number(sdoc, "d_inf", "sim", 0.0),
        w_inf=_number(sdoc, "w_inf", "sim", 0.0),
        kind=kind,
        variant=variant,
        eps_tau=_number(sdoc, "eps_tau", "sim", 0.0),
        delta=_number(sdoc, "delta", "sim", 0.0),
    )
    return ScenarioFile(plant, graph, targets, sim, raw=doc)


def load_scenario(path):
    """Parse a scenario file; the names in ``BUNDLED`` resolve to package data."""
    path = str(path)
    if path in BUNDLED and not Path(path).exists():
        text = resources.files("hybridobs.data").joinpath(BUNDLED[path]).read_text()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InputError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc
    return parse_scenario(doc)


def scenario_to_dict(sf):
    """Inverse of :func:`parse_scenario`."""
    plant, graph, tg, sim = sf.plant, sf.graph, sf.targets, sf.sim
    doc = {
        "plant": {
            "a": plant.A.tolist(),
            "outputs": [{"agent": i + 1, "c": C.tolist()} for i, C in enumerate(plant.outputs)],
        },
        "graph": {"p": graph.p, "edges": sorted([j + 1, i + 1] for j, i in graph.edges)},
        "targets": {"alpha": tg.alpha, "t_period": tg.T, "abar": tg.abar, "bbar": tg.bbar},
        "sim": {
            "t_final": sim.t_final, "seed": sim.seed, "d_inf": sim.d_inf,
            "w_inf": sim.w_inf, "kind": sim.kind, "variant": sim.variant,
            "eps_tau": sim.eps_tau, "delta": sim.delta,
            "xhat0": sim.xhat0 if isinstance(sim.xhat0, str) else [list(r) for r in sim.xhat0],
        },
    }
    if sim.h is not None:
        doc["sim"]["h"] = sim.h
    if sim.x0 is not None:
        doc["sim"]["x0"] = list(sim.x0)
    return doc


def gains_to_dict(gains):
    return {
        "l": [L.tolist() for L in gains.local],
        "n": [
            {"i": i + 1, "j": j + 1, "rho": rho, "matrix": N.tolist()}
            for (i, j, rho), N in sorted(gains.consensus.items())
        ],
    }


def gains_from_dict(doc, decomp, plant):
    """Rebuild gains; shapes are checked against the decomposition."""
    try:
        local_docs = doc["l"]
        n_docs = doc.get("n", [])
    except (KeyError, TypeError) as exc:
        raise InputError("gains: expected keys 'l' and 'n'") from exc
    if len(local_docs) != decomp.p:
        raise InputError(f"gains.l: expected {decomp.p} entries, got {len(local_docs)}")
    local = []
    for i, L in enumerate(local_docs):
        M = _matrix(L, f"gains.l[{i}]", cols=plant.m(i))
        if M.shape[0] != decomp.dim(i, 0) and not (M.size == 0 and decomp.dim(i, 0) == 0):
            raise InputError(f"gains.l[{i}]: expected {decomp.dim(i, 0)} rows, got {M.shape[0]}")
        local.append(M.reshape(decomp.dim(i, 0), plant.m(i)))
    consensus = {}
    for idx, entry in enumerate(n_docs):
        path = f"gains.n[{idx}]"
        i, j, rho = (_number(entry, k, path, cast=int) for k in ("i", "j", "rho"))
        i, j = i - 1, j - 1
        if not (0 <= i < decomp.p and 0 <= j < decomp.p):
            raise InputError(f"{path}: agent outside 1..{decomp.p}")
        if not 1 <= rho <= decomp.hop_depths[i]:
            raise InputError(f"{path}.rho: {rho} outside 1..{decomp.hop_depths[i]}")
        shape = (decomp.dim(i, rho), decomp.dim(j, rho - 1))
        M = _matrix(_require(entry, "matrix", path), f"{path}.matrix", cols=shape[1])
        if M.size == 0:
            M = np.zeros(shape)
        if M.shape != shape:
            raise InputError(f"{path}.matrix: expected shape {shape}, got {M.shape}")
        consensus[(i, j, rho)] = M
    return ObserverGains(tuple(local), consensus)


def certificate_from_dict(doc):
    """Parse a certificate document into plain Python values."""
    keys = ("p_matrix", "eta", "c1", "c2", "grad_bound", "c_flow", "c_jump",
            "kappa", "gamma_c", "gamma_d", "alpha_achieved")
    missing = [k for k in keys if k not in doc]
    if missing:
        raise InputError(f"certificate: missing {missing}")
    out = {k: float(doc[k]) for k in keys if k != "p_matrix"}
    out["p_matrix"] = np.asarray(doc["p_matrix"], dtype=float)
    return out


def bundled_ring4():
    return load_scenario("ring4")


def ring4_document():
    """The bundled four-agent ring example as a dictionary."""
    A = [[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 2], [0, 0, -2, 0]]
    return {
        "plant": {
            "a": A,
            "outputs": [{"agent": i + 1, "c": [[1.0 if k == i else 0.0 for k in range(4)]]}
                        for i in range(4)],
        },
        "graph": {"p": 4, "edges": [[1, 2], [2, 3], [3, 4], [4, 1]]},
        "targets": {"alpha": 1.0, "t_period": 0.1, "abar": -5.0, "bbar": math.exp(-0.1)},
        "sim": {
            "t_final": 10.0, "h": 0.001, "x0": [1.0, 0.5, -0.5, 1.0], "xhat0": "zero",
            "seed": 0, "d_inf": 0.04, "w_inf": 0.02, "kind": "clipped_gaussian",
            "variant": "nominal", "eps_tau": 0.01, "delta": 0.005,
        },
    }
