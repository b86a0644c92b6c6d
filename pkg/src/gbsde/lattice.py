"""Backward induction for Markovian G-BSDEs on a time x space lattice.

State dynamics ``dX = b dt + l d<B> + sigma_coef dB`` with terminal payoff
``phi``, drivers ``f`` (dt) and ``g`` (d<B>) and an optional lower obstacle
``h``. Three rollback modes share one continuation step:

* ``plain``      Y = C
* ``penalized``  Y solves Y = C + n (Y - h)^- dt  (closed form)
* ``projected``  Y = max(C, h), dA = (h - C)^+
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, ConvergenceError, ProblemInputError, UnsupportedCaseError
from .gcore import (
    SpaceGrid,
    Stencil,
    TimeGrid,
    VolatilityBand,
    VolatilityControl,
    normal_variates,
    sup_expectation,
)

PICARD_TOL = 1e-12
PICARD_MAX_ITER = 50

MODES = ("plain", "penalized", "projected")


def _zero_tx(t, x):
    return 0.0


def _one_tx(t, x):
    return 1.0


def _zero_txyz(t, x, y, z):
    return 0.0


def evaluate(fn, shape, *args) -> np.ndarray:
    """Call a coefficient and broadcast its result to ``shape``."""
    out = np.asarray(fn(*args), dtype=float)
    if out.shape != shape:
        out = np.broadcast_to(out, shape).copy()
    return out


@dataclass
class MarkovianProblem:
    """Coefficients of the forward state and data of the (reflected) BSDE.

    Callables are vectorized over ``x``: ``b, l, sigma_coef, h`` take
    ``(t, x)``, ``f, g`` take ``(t, x, y, z)`` and ``phi`` takes ``x``.
    ``h=None`` means no obstacle. ``obstacle_bound`` declares the constant
    c of the bounded-above obstacle assumption, when it is the one relied on.
    """

    band: VolatilityBand
    phi: Callable
    b: Callable = _zero_tx
    l: Callable = _zero_tx
    sigma_coef: Callable = _one_tx
    f: Callable = _zero_txyz
    g: Callable = _zero_txyz
    h: Optional[Callable] = None
    lipschitz: float = 0.0
    obstacle_bound: Optional[float] = None
    name: str = "problem"

    @property
    def has_obstacle(self) -> bool:
        return self.h is not None

    def obstacle(self, t, x) -> np.ndarray:
        if self.h is None:
            return np.full(np.shape(x), -np.inf)
        return evaluate(self.h, np.shape(x), t, x)

    def fingerprint(self, time_grid: TimeGrid, space_grid: SpaceGrid) -> str:
        """Hash of the problem data sampled on the grid."""
        digest = hashlib.sha256()
        x = space_grid.points
        t_pts = time_grid.points
        digest.update(np.asarray([time_grid.t0, time_grid.T, time_grid.steps, space_grid.x_min, space_grid.x_max, space_grid.nodes, self.band.sigma_low, self.band.sigma_high], dtype=float).tobytes())
        digest.update(evaluate(self.phi, x.shape, x).tobytes())
        y = np.linspace(-1.0, 1.0, x.size)
        for t in (t_pts[0], t_pts[-1]):
            for fn in (self.b, self.l, self.sigma_coef):
                digest.update(evaluate(fn, x.shape, t, x).tobytes())
            for fn in (self.f, self.g):
                digest.update(evaluate(fn, x.shape, t, x, y, y).tobytes())
            digest.update(self.obstacle(t, x).tobytes())
        return digest.hexdigest()[:16]


def depends_on(fn: Callable, which: str, t: float, x: np.ndarray, seed: int = 7) -> bool:
    """Probe whether driver ``fn(t, x, y, z)`` varies with ``y`` or ``z``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    shape = x.shape
    y1, y2 = rng.normal(size=shape), rng.normal(size=shape) * 3.0 + 1.0
    z1, z2 = rng.normal(size=shape), rng.normal(size=shape) * 3.0 - 1.0
    if which == "y":
        a = evaluate(fn, shape, t, x, y1, z1)
        b = evaluate(fn, shape, t, x, y2, z1)
    else:
        a = evaluate(fn, shape, t, x, y1, z1)
        b = evaluate(fn, shape, t, x, y1, z2)
    return not np.array_equal(a, b)


def check_problem(problem: MarkovianProblem, time_grid: TimeGrid, space_grid: SpaceGrid, samples: int = 32, seed: int = 0) -> None:
    """Sampled checks of the standing assumptions; raises ProblemInputError."""
    x = space_grid.points
    T = time_grid.T
    rng = np.random.Generator(np.random.PCG64(seed))
    L = problem.lipschitz
    for t in time_grid.points[:: max(1, time_grid.steps // 4)]:
        for name, fn in (("f", problem.f), ("g", problem.g)):
            for _ in range(max(1, samples // 8)):
                y1, y2, z1, z2 = (rng.normal(scale=10.0, size=x.shape) for _ in range(4))
                lhs = np.abs(evaluate(fn, x.shape, t, x, y1, z1) - evaluate(fn, x.shape, t, x, y2, z2))
                rhs = L * (np.abs(y1 - y2) + np.abs(z1 - z2))
                if np.any(lhs > rhs * (1 + 1e-9) + 1e-12):
                    raise ProblemInputError(f"driver {name} is not Lipschitz with constant L={L} in (y, z)")
    if problem.has_obstacle:
        phi = evaluate(problem.phi, x.shape, x)
        hT = problem.obstacle(T, x)
        j = int(np.argmax(hT - phi))
        if hT[j] > phi[j] + 1e-12 * (1.0 + abs(phi[j])):
            raise ProblemInputError(f"terminal obstacle exceeds payoff at x={x[j]}: h(T,x)={hT[j]} > phi(x)={phi[j]}")
        if problem.obstacle_bound is not None:
            for t in time_grid.points:
                if np.any(problem.obstacle(t, x) > problem.obstacle_bound):
                    raise ProblemInputError(f"obstacle exceeds declared bound {problem.obstacle_bound} at t={t}")


@dataclass
class SolutionSurface:
    """Nodewise solution: arrays are indexed ``[i, j]`` for ``(t_i, x_j)``."""

    t: np.ndarray
    x: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    dA: np.ndarray
    sigma_star: np.ndarray
    mode: str
    meta: dict = field(default_factory=dict)
    obstacle: Optional[np.ndarray] = None  # h sampled on the lattice, None without obstacle

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def value_at(self, x0: float, i: int = 0) -> float:
        """Y at ``(t_i, x0)``, linear interpolation between nodes."""
        return float(np.interp(x0, self.x, self.Y[i]))

    def node_of(self, x0: float) -> int:
        return int(np.argmin(np.abs(self.x - x0)))

    def reflection_mass(self, j: Optional[int] = None) -> float:
        """Sum of reflection increments along the fixed-state line ``j``."""
        if j is None:
            j = len(self.x) // 2
        return float(self.dA[:, j].sum())


@dataclass
class PenalizedSurface(SolutionSurface):
    dL: np.ndarray = None
    dK: np.ndarray = None
    penalty: float = 0.0


def centered_z(values: np.ndarray, sigma_coef: np.ndarray, dx: float) -> np.ndarray:
    """sigma_coef * dY/dx with centered differences, one-sided at the ends."""
    d = np.empty_like(values)
    d[1:-1] = (values[2:] - values[:-2]) / (2.0 * dx)
    d[0] = (values[1] - values[0]) / dx
    d[-1] = (values[-1] - values[-2]) / dx
    return sigma_coef * d


def picard(c0: np.ndarray, driver: Callable[[np.ndarray], np.ndarray], dt: float, start: np.ndarray) -> np.ndarray:
    """Solve ``y = c0 + driver(y) dt`` nodewise by fixed-point iteration."""
    y = start
    for _ in range(PICARD_MAX_ITER):
        y_new = c0 + driver(y) * dt
        if np.max(np.abs(y_new - y), initial=0.0) <= PICARD_TOL:
            return y_new
        y = y_new
    raise ConvergenceError(f"Picard iteration did not reach {PICARD_TOL} in {PICARD_MAX_ITER} iterations")


def check_picard(problem: MarkovianProblem, dt: float) -> None:
    if problem.lipschitz * dt >= 1.0:
        raise ConfigurationError(
            f"Picard contraction needs L*dt < 1, got L={problem.lipschitz}, dt={dt} (L*dt={problem.lipschitz * dt:.4g})"
        )


def layer_stencil(problem: MarkovianProblem, t: float, x: np.ndarray, dt: float, dx: float) -> Stencil:
    shape = x.shape
    stencil = Stencil(
        problem.band,
        dt,
        dx,
        drift=evaluate(problem.b, shape, t, x),
        qv_drift=evaluate(problem.l, shape, t, x),
        diffusion=evaluate(problem.sigma_coef, shape, t, x),
        n=x.size,
    )
    stencil.check_cfl()
    return stencil


@dataclass
class Continuation:
    value: np.ndarray
    sigma_star: np.ndarray
    dK: np.ndarray


def continuation(problem: MarkovianProblem, t: float, x: np.ndarray, next_values: np.ndarray, dt: float, dx: float) -> Continuation:
    """One backward step without reflection: worst-case expectation, the
    d<B> driver inside the volatility maximization, then the dt driver
    solved implicitly with z frozen at the next layer."""
    stencil = layer_stencil(problem, t, x, dt, dx)
    z = centered_z(next_values, stencil.diffusion, dx)
    g_val = evaluate(problem.g, x.shape, t, x, next_values, z)
    layer = sup_expectation(next_values, stencil, source=g_val)
    value = picard(layer.value, lambda y: evaluate(problem.f, x.shape, t, x, y, z), dt, next_values)
    # decrement of K under the less favourable endpoint measure (<= 0)
    dK = np.minimum(layer.low, layer.high) - layer.value
    return Continuation(value, layer.sigma_star, dK)


def _resolve_mode(mode, penalty):
    if isinstance(mode, tuple):
        mode, penalty = mode
    if mode not in MODES:
        raise ProblemInputError(f"unknown rollback mode {mode!r}; expected one of {MODES}")
    if mode == "penalized":
        if penalty is None or not penalty >= 1:
            raise ProblemInputError(f"penalized mode needs a penalty n >= 1, got {penalty}")
    return mode, penalty


def rollback(problem: MarkovianProblem, time_grid: TimeGrid, space_grid: SpaceGrid, mode="plain", penalty=None) -> SolutionSurface:
    """Backward induction over the lattice.

    ``mode`` is ``"plain"``, ``"projected"`` or ``"penalized"`` (with
    ``penalty=n``); ``("penalized", n)`` is accepted as well.
    """
    mode, penalty = _resolve_mode(mode, penalty)
    if mode != "plain" and not problem.has_obstacle:
        raise ProblemInputError(f"{mode} rollback needs an obstacle h")
    dt, dx = time_grid.dt, space_grid.dx
    check_picard(problem, dt)
    t_pts, x = time_grid.points, space_grid.points
    N, n_x = time_grid.steps, x.size

    Y = np.empty((N + 1, n_x))
    Z = np.zeros((N + 1, n_x))
    dA = np.zeros((N + 1, n_x))
    sig = np.full((N + 1, n_x), problem.band.sigma_high)
    dK = np.zeros((N + 1, n_x))
    H = np.vstack([problem.obstacle(t, x) for t in t_pts]) if problem.has_obstacle else None
    Y[N] = evaluate(problem.phi, x.shape, x)
    Z[N] = centered_z(Y[N], evaluate(problem.sigma_coef, x.shape, t_pts[N], x), dx)

    for i in range(N - 1, -1, -1):
        t = t_pts[i]
        cont = continuation(problem, t, x, Y[i + 1], dt, dx)
        c = cont.value
        if mode == "plain":
            y = c
        elif mode == "projected":
            h = H[i]
            y = np.maximum(c, h)
            dA[i] = np.maximum(h - c, 0.0)
        else:
            h = H[i]
            gap = np.maximum(h - c, 0.0)
            deficit = gap / (1.0 + penalty * dt)
            y = np.where(c < h, h - deficit, c)
            dA[i] = penalty * dt * deficit
        Y[i] = y
        sig[i] = cont.sigma_star
        dK[i] = cont.dK
        Z[i] = centered_z(y, evaluate(problem.sigma_coef, x.shape, t, x), dx)

    meta = {
        "problem": problem.name,
        "hash": problem.fingerprint(time_grid, space_grid),
        "steps": N,
        "nodes": n_x,
        "dt": dt,
        "dx": dx,
    }
    common = dict(t=t_pts, x=x, Y=Y, Z=Z, dA=dA, sigma_star=sig, mode=mode, meta=meta, obstacle=H)
    if mode == "penalized":
        return PenalizedSurface(**common, dL=dA.copy(), dK=dK, penalty=float(penalty))
    return SolutionSurface(**common)


def obstacle_layers(surface: SolutionSurface, problem: Optional[MarkovianProblem] = None) -> np.ndarray:
    if surface.obstacle is not None:
        return surface.obstacle
    if problem is None or not problem.has_obstacle:
        raise ProblemInputError("surface carries no obstacle and no problem with one was given")
    return np.vstack([problem.obstacle(t, surface.x) for t in surface.t])


def complementarity_residual(surface: SolutionSurface, problem: Optional[MarkovianProblem] = None) -> float:
    """max over nodes of (Y - h) dA / dt; zero for a perfect reflection."""
    if not np.any(surface.dA):
        return 0.0
    h = obstacle_layers(surface, problem)
    prod = (surface.Y - h) * surface.dA / surface.dt
    return float(np.max(np.abs(prod)))


@dataclass
class MonteCarloEstimate:
    value: float
    stderr: float
    n_paths: int


def monte_carlo_lower_bound(problem: MarkovianProblem, control: VolatilityControl, time_grid: TimeGrid, x0: float, n_paths: int, seed: int) -> MonteCarloEstimate:
    """Expectation under one volatility control by Euler simulation.

    Any single control gives a value no larger than the worst-case one.
    Only obstacle-free problems with drivers independent of (y, z).
    """
    if problem.has_obstacle:
        raise UnsupportedCaseError("Monte Carlo lower bound is for obstacle-free problems")
    probe_x = np.linspace(x0 - 1.0, x0 + 1.0, 5)
    for name, fn in (("f", problem.f), ("g", problem.g)):
        for arg in ("y", "z"):
            if depends_on(fn, arg, time_grid.t0, probe_x):
                raise UnsupportedCaseError(f"driver {name} depends on {arg}; Monte Carlo bound needs a plain expectation")
    if len(control) != time_grid.steps:
        raise ProblemInputError(f"control has {len(control)} entries, grid has {time_grid.steps} steps")
    control.check(problem.band)

    dt = time_grid.dt
    sq = math.sqrt(dt)
    normals = normal_variates(seed, (n_paths, time_grid.steps))
    X = np.full(n_paths, float(x0))
    running = np.zeros(n_paths)
    dummy = np.zeros(n_paths)
    for i, t in enumerate(time_grid.points[:-1]):
        s = control.sigmas[i]
        var = s * s
        running += (evaluate(problem.f, X.shape, t, X, dummy, dummy) + evaluate(problem.g, X.shape, t, X, dummy, dummy) * var) * dt
        dX = (evaluate(problem.b, X.shape, t, X) + evaluate(problem.l, X.shape, t, X) * var) * dt
        dX += evaluate(problem.sigma_coef, X.shape, t, X) * s * sq * normals[:, i]
        X = X + dX
    payoff = evaluate(problem.phi, X.shape, X) + running
    stderr = float(payoff.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return MonteCarloEstimate(float(payoff.mean()), stderr, n_paths)
