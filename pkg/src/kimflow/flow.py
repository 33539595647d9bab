"""Reverse probability-flow ODE  dX/dt = X + grad log q_{T-t}(X),  t in [0, T].

Score oracles are callables ``score(tau, y)`` where tau = T - t is the OU
time; ``EvolvedScore`` from :mod:`kimflow.ou` is the exact one.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConstructionError, DomainError, IntegrationDiverged, UnsupportedOperation
from .measures import (SamplerSeed, TargetMeasure, as_seed, draw_variates,
                       standard_gaussian)
from .ou import EvolvedMeasure, EvolvedScore, evolved_score_generic

ScoreFn = Callable[[float, np.ndarray], np.ndarray]

SCHEMES = ("rk4", "heun", "euler")
SCHEDULES = ("uniform_t", "geometric_tail")
INIT_MODES = ("shared_gamma", "exact_qT")


@dataclass(frozen=True)
class FlowConfig:
    T: float = 10.0
    steps: int = 400
    scheme: str = "rk4"
    schedule: str = "uniform_t"
    init_mode: str = "shared_gamma"

    def __post_init__(self):
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ConstructionError("horizon T must be positive and finite")
        if self.steps < 10:
            raise ConstructionError("need at least 10 steps")
        if self.scheme not in SCHEMES:
            raise ConstructionError(f"scheme must be one of {SCHEMES}")
        if self.schedule not in SCHEDULES:
            raise ConstructionError(f"schedule must be one of {SCHEDULES}")
        if self.init_mode not in INIT_MODES:
            raise ConstructionError(f"init_mode must be one of {INIT_MODES}")

    def time_grid(self) -> np.ndarray:
        T, n = self.T, self.steps
        if self.schedule == "uniform_t":
            grid = np.linspace(0.0, T, n + 1)
        else:
            # remaining time T - t shrinks geometrically down to tau_min, then one last step to 0
            tau_min = min(1e-3, T / n)
            tau = np.geomspace(T, tau_min, n)
            grid = np.concatenate([T - tau, [T]])
        return grid

    def describe(self) -> dict:
        return {"T": self.T, "steps": self.steps, "scheme": self.scheme,
                "schedule": self.schedule, "init_mode": self.init_mode}


class Trajectory(NamedTuple):
    times: np.ndarray
    states: np.ndarray      # (steps + 1, d) or (steps + 1, n, d)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


def _step(score: ScoreFn, T: float, t: float, h: float, x: np.ndarray, scheme: str) -> np.ndarray:
    def f(s, y):
        return y + score(T - s, y)

    if scheme == "euler":
        return x + h * f(t, x)
    if scheme == "heun":
        k1 = f(t, x)
        k2 = f(t + h, x + h * k1)
        return x + 0.5 * h * (k1 + k2)
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _run(score: ScoreFn, x0: np.ndarray, cfg: FlowConfig, keep_path: bool):
    grid = cfg.time_grid()
    T = cfg.T
    x = np.array(x0, dtype=float)
    path = [x.copy()] if keep_path else None
    for t0, t1 in zip(grid[:-1], grid[1:]):
        # the last node is pinned to T so tau never goes negative
        x = _step(score, T, t0, t1 - t0, x, cfg.scheme)
        if not np.all(np.isfinite(x)):
            idx = None
            if x.ndim > 1:
                idx = int(np.argmax(~np.all(np.isfinite(x), axis=1)))
            raise IntegrationDiverged(float(t1), idx)
        if keep_path:
            path.append(x.copy())
    return grid, (np.stack(path) if keep_path else x)


def integrate(score: ScoreFn, x0, cfg: FlowConfig = FlowConfig()) -> Trajectory:
    """Integrate one point (shape (d,)) or a batch (shape (n, d)) and keep the full path."""
    x0 = np.asarray(x0, dtype=float)
    if not np.all(np.isfinite(x0)):
        raise DomainError("initial point must be finite")
    grid, states = _run(score, x0, cfg, keep_path=True)
    return Trajectory(grid, states)


def score_source(m: TargetMeasure, *, generic_n: int = 4096, seed: int = 0) -> ScoreFn:
    """Exact evolved score for Gaussian/mixture targets, importance-sampled otherwise."""
    try:
        EvolvedMeasure(m, 0.0)
    except UnsupportedOperation:
        def generic(tau, y):
            # deterministic per call; tau = 0 uses the base score
            if tau <= 0:
                return m.score(y)
            return evolved_score_generic(m, tau, y, generic_n, seed).estimate
        return generic
    return EvolvedScore(m)


def flow_map_batch(m: TargetMeasure, cfg: FlowConfig, points, *, workers: int = 1,
                   chunk: int | None = None) -> np.ndarray:
    """Terminal points of the flow started at each row of ``points``.

    With ``workers > 1`` the rows are split into chunks integrated on a thread
    pool; every chunk writes into its own slice, so output order and values do
    not depend on scheduling.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != m.dim:
        raise DomainError(f"points must have dimension {m.dim}")
    if not np.all(np.isfinite(pts)):
        raise DomainError("initial points must be finite")
    out = np.empty_like(pts)
    n = pts.shape[0]
    if workers <= 1 or n < 2:
        chunks = [(0, n)]
    else:
        size = chunk or -(-n // workers)
        chunks = [(i, min(i + size, n)) for i in range(0, n, size)]

    def work(bounds):
        lo, hi = bounds
        try:
            _, out[lo:hi] = _run(score_source(m), pts[lo:hi], cfg, keep_path=False)
        except IntegrationDiverged as exc:
            raise IntegrationDiverged(exc.time, None if exc.index is None else lo + exc.index) from None

    if len(chunks) == 1:
        work(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, chunks))
    return out


class CoupledDistance(NamedTuple):
    l2: float
    linf: float
    distances: np.ndarray
    l2_se: float            # delta-method standard error of l2


def initial_points(mu: TargetMeasure, nu: TargetMeasure, cfg: FlowConfig, n: int,
                   seed: SamplerSeed | int) -> tuple[np.ndarray, np.ndarray]:
    """Coupled starting points for the mu- and nu-flows.

    shared_gamma: one standard-Gaussian draw used for both.
    exact_qT: draws from mu Q_T and nu Q_T built from the same uniforms and
    normals (common random numbers).
    """
    d = mu.dim
    u, z = draw_variates(seed, n, d)
    if cfg.init_mode == "shared_gamma":
        x = standard_gaussian(d).sample_from_variates(u, z)
        return x, x
    return (EvolvedMeasure(mu, cfg.T).measure.sample_from_variates(u, z),
            EvolvedMeasure(nu, cfg.T).measure.sample_from_variates(u, z))


def coupled_distance(mu: TargetMeasure, nu: TargetMeasure, cfg: FlowConfig, n: int,
                     seed: SamplerSeed | int, *, workers: int = 1) -> CoupledDistance:
    if mu.dim != nu.dim:
        raise DomainError("mu and nu must have the same dimension")
    x0, y0 = initial_points(mu, nu, cfg, n, as_seed(seed))
    xT = flow_map_batch(mu, cfg, x0, workers=workers)
    yT = flow_map_batch(nu, cfg, y0, workers=workers)
    dist = np.linalg.norm(xT - yT, axis=1)
    sq = dist**2
    l2 = float(np.sqrt(sq.mean()))
    se_sq = float(sq.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    l2_se = se_sq / (2.0 * l2) if l2 > 0 else 0.0
    return CoupledDistance(l2, float(dist.max()), dist, l2_se)
