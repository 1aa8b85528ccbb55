"""Hybrid-time simulation of the plant and the network of observers.

Flows are propagated exactly: the disturbance ``d`` is held constant over
each integration step of length ``h`` and the state is advanced with the
exponential of the augmented ``(state, held input)`` matrix.  Communication
events apply the impulsive consensus correction.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .certification import error_layout, to_error_coordinates
from .errors import DivergenceError, InputError
from .numerics import matrix_exponential

VARIANTS = ("nominal", "jitter", "delay")
KINDS = ("zero", "clipped_gaussian", "uniform_ball")

# event times closer than this to a grid point are snapped onto it
_SNAP = 1e-12


@dataclass(frozen=True)
class DisturbanceSpec:
    """Euclidean sup-norm bounds on the stacked ``d(t)`` and ``w(k)``."""

    d_inf: float = 0.0
    w_inf: float = 0.0
    seed: int = 0
    kind: str = "zero"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown disturbance kind {self.kind!r}")
        if self.d_inf < 0 or self.w_inf < 0:
            raise InputError("disturbance bounds must be non-negative")


@dataclass(frozen=True)
class Disturbances:
    """``d[s]`` is held on step ``s``; ``w[k-1]`` is used at the ``k``-th cycle."""

    d: np.ndarray
    w: np.ndarray


def _enforce_bound(z, bound):
    # radial scaling can overshoot by an ulp; shrink until the bound holds exactly
    over = np.linalg.norm(z, axis=1) > bound
    while np.any(over):
        z[over] *= np.nextafter(1.0, 0.0)
        over = np.linalg.norm(z, axis=1) > bound
    return z


def _draw(rng, count, dim, bound, kind):
    if kind == "zero" or bound == 0 or dim == 0:
        return np.zeros((count, dim))
    if kind == "clipped_gaussian":
        z = rng.normal(scale=bound / math.sqrt(dim), size=(count, dim))
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        return _enforce_bound(z * np.minimum(1.0, bound / np.maximum(norms, 1e-300)), bound)
    z = rng.normal(size=(count, dim))
    z /= np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-300)
    radius = bound * rng.uniform(size=(count, 1)) ** (1.0 / dim)
    return _enforce_bound(z * radius, bound)


def generate_disturbances(spec, t_final, h, T, d_dim, w_dim):
    """Seeded, bound-respecting samples of ``d`` (per step) and ``w`` (per cycle)."""
    n_steps = int(round(t_final / h))
    n_cycles = int(math.floor(t_final / T + 1e-9)) + 1
    d_seq, w_seq = np.random.SeedSequence(spec.seed).spawn(2)
    d = _draw(np.random.default_rng(d_seq), n_steps, d_dim, spec.d_inf, spec.kind)
    w = _draw(np.random.default_rng(w_seq), n_cycles, w_dim, spec.w_inf, spec.kind)
    return Disturbances(d, w)


@dataclass(frozen=True)
class Scenario:
    plant: object
    graph: object
    gains: object
    decomp: object
    T: float
    alpha: float
    t_final: float = 10.0
    h: float = None
    x0: np.ndarray = None
    xhat0: np.ndarray = None
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    variant: str = "nominal"
    eps_tau: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        n, p = self.plant.n, self.plant.p
        h = self.T / 100 if self.h is None else float(self.h)
        object.__setattr__(self, "h", h)
        ratio = self.T / h
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise InputError(f"step h = {h} must divide the period T = {self.T}")
        x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float)
        xhat0 = np.zeros((p, n)) if self.xhat0 is None else np.asarray(self.xhat0, dtype=float)
        if x0.shape != (n,):
            raise InputError(f"x0 must have length {n}")
        if xhat0.shape != (p, n):
            raise InputError(f"xhat0 must have shape ({p}, {n})")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "xhat0", xhat0)
        if self.variant not in VARIANTS:
            raise InputError(f"unknown variant {self.variant!r}")
        if not 0 <= self.delta < self.T:
            raise InputError("delay must satisfy 0 <= delta < T")
        if not 0 <= self.eps_tau < self.T / 2:
            raise InputError("jitter must satisfy 0 <= eps_tau < T/2")

    @property
    def steps_per_period(self):
        return int(round(self.T / self.h))

    @property
    def n_steps(self):
        return int(round(self.t_final / self.h))

    def replace(self, **changes):
        from dataclasses import replace
        return replace(self, **changes)


@dataclass(frozen=True)
class HybridTrajectory:
    """Samples over hybrid time; a jump contributes a pre- and a post-jump row."""

    t: np.ndarray
    k: np.ndarray
    x: np.ndarray       # (N, n)
    xhat: np.ndarray    # (N, p, n)
    eps: np.ndarray     # (N, n_eps)
    jump_times: np.ndarray

    def agent_error_norms(self):
        return np.linalg.norm(self.xhat - self.x[:, None, :], axis=2)

    def total_error_norm(self):
        return np.linalg.norm((self.xhat - self.x[:, None, :]).reshape(len(self.t), -1), axis=1)

    def eps_norm(self):
        return np.linalg.norm(self.eps, axis=1)

    def pre_jump_mask(self):
        """Rows immediately followed by a jump at the same time."""
        mask = np.zeros(len(self.t), dtype=bool)
        same = (self.t[1:] == self.t[:-1]) & (self.k[1:] > self.k[:-1])
        mask[:-1] = same
        return mask


def _flow_matrices(scn):
    plant, decomp, gains = scn.plant, scn.decomp, scn.gains
    n, p = plant.n, plant.p
    m = [plant.m(i) for i in range(p)]
    dz = n * (p + 1)
    dd = n + sum(m)
    F = np.zeros((dz, dz))
    G = np.zeros((dz, dd))
    F[:n, :n] = plant.A
    G[:n, :n] = np.eye(n)
    col = n
    for i in range(p):
        r = slice(n * (i + 1), n * (i + 2))
        inj = decomp.W(i, 0) @ gains.local[i]          # n x m_i
        Ci = plant.outputs[i]
        F[r, r] = plant.A - inj @ Ci
        F[r, :n] = inj @ Ci
        G[r, col:col + m[i]] = inj
        col += m[i]
    return F, G


class _Propagator:
    """Exact ZOH propagation ``z(t + dt) = Phi z + Gamma d``; cached by ``dt``."""

    def __init__(self, F, G):
        self.F, self.G = F, G
        self._cache = {}

    def __call__(self, z, d, dt):
        if dt <= 0:
            return z
        key = float(dt)
        if key not in self._cache:
            nz, nd = self.G.shape
            aug = np.zeros((nz + nd, nz + nd))
            aug[:nz, :nz] = self.F
            aug[:nz, nz:] = self.G
            E = matrix_exponential(aug, dt)
            self._cache[key] = (E[:nz, :nz], E[:nz, nz:])
        Phi, Gam = self._cache[key]
        return Phi @ z + Gam @ d


def _consensus_operators(scn):
    """``G_ij = sum_rho W_{i,rho} N_{i,j,rho} W_{j,rho-1}^T`` for every edge."""
    decomp, gains, graph = scn.decomp, scn.gains, scn.graph
    ops = {}
    for i in range(decomp.p):
        for j in graph.in_neighbors(i):
            G = np.zeros((decomp.n, decomp.n))
            for rho in range(1, decomp.hop_depths[i] + 1):
                G += decomp.W(i, rho) @ gains.N(i, j, rho, decomp) @ decomp.W(j, rho - 1).T
            ops[(i, j)] = G
    return ops


@dataclass(order=True)
class _Event:
    time: float
    order: int
    action: str = field(compare=False)     # "jump", "sample" or "apply"
    agents: tuple = field(compare=False)
    cycle: int = field(compare=False)


def _events(scn, rng):
    T, t_end = scn.T, scn.t_final + _SNAP
    K = int(math.floor(scn.t_final / T + 1e-9))
    all_agents = tuple(range(scn.plant.p))
    events = []
    if scn.variant == "nominal":
        for k in range(1, K + 1):
            events.append(_Event(k * T, 0, "jump", all_agents, k))
    elif scn.variant == "delay":
        for k in range(1, K + 1):
            events.append(_Event(k * T, 0, "sample", all_agents, k))
            if k * T + scn.delta <= t_end:
                events.append(_Event(k * T + scn.delta, 1, "apply", all_agents, k))
    else:
        offsets = rng.uniform(-scn.eps_tau, scn.eps_tau, size=(K + 1, scn.plant.p))
        by_time = {}
        for k in range(1, K + 2):
            for i in all_agents:
                off = offsets[k - 1, i] if scn.eps_tau > 0 else 0.0
                t = k * T + off
                if t <= t_end:
                    by_time.setdefault(t, []).append(i)
        for t, agents in by_time.items():
            cycle = int(round(t / T))
            events.append(_Event(t, 0, "jump", tuple(sorted(agents)), cycle))
    events.sort()
    # snap onto the integration grid
    h = scn.h
    for ev in events:
        s = round(ev.time / h)
        if abs(ev.time - s * h) <= _SNAP * max(1.0, ev.time):
            ev.time = s * h
    return events


def simulate(scn, disturbances=None):
    """Simulate plant and observers for the scenario's variant."""
    plant = scn.plant
    n, p = plant.n, plant.p
    layout = error_layout(scn.decomp, plant, scn.graph)
    if disturbances is None:
        disturbances = generate_disturbances(
            scn.disturbance, scn.t_final, scn.h, scn.T, layout.d_dim, layout.w_dim)
    if disturbances.d.shape[0] < scn.n_steps:
        raise InputError("disturbance realisation shorter than the run")
    jitter_rng = np.random.default_rng(np.random.SeedSequence(scn.disturbance.seed).spawn(3)[2])
    events = _events(scn, jitter_rng)
    propagate = _Propagator(*_flow_matrices(scn))
    ops = _consensus_operators(scn)
    w_slices = layout.w_slices

    z = np.concatenate([scn.x0, scn.xhat0.ravel()])
    ts, ks, zs, jumps = [0.0], [0], [z.copy()], []
    k = 0
    pending = {}

    def correct(z, agents, samples, cycle):
        xh = z[n:].reshape(p, n)
        new = xh.copy()
        wk = disturbances.w[cycle - 1]
        for i in agents:
            for j in scn.graph.in_neighbors(i):
                y = samples[j] + wk[w_slices[(i, j)]]
                new[i] += ops[(i, j)] @ (y - xh[i])
        out = z.copy()
        out[n:] = new.ravel()
        return out

    ev_idx, n_ev = 0, len(events)
    h = scn.h
    for s in range(scn.n_steps):
        t_now, t_end = s * h, (s + 1) * h
        d = disturbances.d[s]
        while ev_idx < n_ev and events[ev_idx].time <= t_end:
            ev = events[ev_idx]
            ev_idx += 1
            if ev.time < t_now:
                continue
            z = propagate(z, d, ev.time - t_now)
            t_now = ev.time
            if ev.action == "sample":
                pending[ev.cycle] = z[n:].reshape(p, n).copy()
                continue
            if ts[-1] != t_now:
                ts.append(t_now), ks.append(k), zs.append(z.copy())
            if ev.action == "apply":
                z = correct(z, ev.agents, pending.pop(ev.cycle), ev.cycle)
            else:
                z = correct(z, ev.agents, z[n:].reshape(p, n).copy(), ev.cycle)
            k += 1
            jumps.append(t_now)
            ts.append(t_now), ks.append(k), zs.append(z.copy())
        z = propagate(z, d, t_end - t_now)
        if not np.all(np.isfinite(z)):
            raise DivergenceError(f"non-finite state at t = {t_end}", time=t_end)
        if ts[-1] != t_end:
            ts.append(t_end), ks.append(k), zs.append(z.copy())

    Z = np.array(zs)
    x = Z[:, :n]
    xhat = Z[:, n:].reshape(-1, p, n)
    eps = np.column_stack([
        (x - xhat[:, i, :]) @ scn.decomp.W(i, rho) for (i, rho) in layout.order
    ]) if layout.size else np.zeros((len(ts), 0))
    return HybridTrajectory(np.array(ts), np.array(ks), x, xhat, eps, np.array(jumps))


def simulate_jitter(scn, eps_tau, disturbances=None):
    return simulate(scn.replace(variant="jitter", eps_tau=eps_tau), disturbances)


def simulate_delay(scn, delta, disturbances=None):
    return simulate(scn.replace(variant="delay", delta=delta), disturbances)


@dataclass(frozen=True)
class ErrorTrajectory:
    t: np.ndarray
    k: np.ndarray
    eps: np.ndarray

    def eps_norm(self):
        return np.linalg.norm(self.eps, axis=1)


def simulate_error_system(es, eps0, disturbances, t_final, h):
    """Integrate ``eps`` directly with the same ZOH scheme and jump schedule."""
    T = es.T
    spp = int(round(T / h))
    if abs(T / h - spp) > 1e-9 * spp:
        raise InputError(f"step h = {h} must divide the period T = {T}")
    n_steps = int(round(t_final / h))
    propagate = _Propagator(es.A, es.R)
    e = np.asarray(eps0, dtype=float).copy()
    ts, ks, es_rows = [0.0], [0], [e.copy()]
    k = 0
    for s in range(n_steps):
        e = propagate(e, disturbances.d[s], h)
        if not np.all(np.isfinite(e)):
            raise DivergenceError(f"non-finite error at t = {(s + 1) * h}", time=(s + 1) * h)
        t = (s + 1) * h
        ts.append(t), ks.append(k), es_rows.append(e.copy())
        if (s + 1) % spp == 0:
            k += 1
            e = es.J @ e + es.S @ disturbances.w[k - 1]
            ts.append(t), ks.append(k), es_rows.append(e.copy())
    return ErrorTrajectory(np.array(ts), np.array(ks), np.array(es_rows))


def initial_error(scn):
    layout = error_layout(scn.decomp, scn.plant, scn.graph)
    return to_error_coordinates(scn.decomp, layout, scn.x0, scn.xhat0)


@dataclass(frozen=True)
class DecayEstimate:
    rate: float
    defined: bool
    reason: str = ""
    t_end: float = float("nan")


def _noise_floor(traj, rel):
    if hasattr(traj, "x"):
        scale = max(np.max(np.abs(traj.x)), np.max(np.abs(traj.xhat)))
        return rel * scale
    return 0.0


def measure_decay_rate(traj, window=(0.5, 1.0), rel_floor=1e-8):
    """Least-squares exponential rate of ``|eps|`` over the tail window.

    Fits ``log|eps|`` against time on pre-jump samples (every sample when the
    trajectory has no jumps).  Samples whose error is below ``rel_floor``
    times the state magnitude carry only cancellation error, so the window
    is taken relative to the last resolvable time instead of ``t_final``.
    """
    t = np.asarray(traj.t)
    norms = traj.eps_norm()
    if norms.size == 0 or norms[0] == 0:
        return DecayEstimate(float("nan"), False, "zero initial error")
    floor = _noise_floor(traj, rel_floor)
    resolvable = np.nonzero(norms > floor)[0]
    if resolvable.size < 2:
        return DecayEstimate(float("nan"), False, "error below the noise floor")
    t_end = t[resolvable[-1]]
    sel = (t >= window[0] * t_end) & (t <= window[1] * t_end) & (norms > floor)
    pre = np.zeros(len(t), dtype=bool)
    pre[:-1] = (t[1:] == t[:-1]) & (np.asarray(traj.k)[1:] > np.asarray(traj.k)[:-1])
    if np.count_nonzero(sel & pre) >= 2:
        sel &= pre
    if np.count_nonzero(sel) < 2:
        return DecayEstimate(float("nan"), False, "too few samples in window", t_end)
    slope = np.polyfit(t[sel], np.log(norms[sel]), 1)[0]
    return DecayEstimate(float(-slope), True, "", float(t_end))


def write_csv(traj, path):
    """``t,k,x_*,xhat_<i>_*,err_norm_<i>,eps_norm``; one row per sample."""
    n = traj.x.shape[1]
    p = traj.xhat.shape[1]
    header = ["t", "k"] + [f"x_{a + 1}" for a in range(n)]
    for i in range(p):
        header += [f"xhat_{i + 1}_{a + 1}" for a in range(n)]
    header += [f"err_norm_{i + 1}" for i in range(p)] + ["eps_norm"]
    errs = traj.agent_error_norms()
    eps = traj.eps_norm()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in range(len(traj.t)):
            row = [repr(float(traj.t[r])), str(int(traj.k[r]))]
            row += [repr(float(v)) for v in traj.x[r]]
            row += [repr(float(v)) for v in traj.xhat[r].ravel()]
            row += [repr(float(v)) for v in errs[r]]
            row.append(repr(float(eps[r])))
            writer.writerow(row)


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return header, np.array(rows)
