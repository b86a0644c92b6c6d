"""Optimal-stopping view of the reflected solution.

The dynamic programme ``V_N = phi``, ``V_i = max(h_i, sup_sigma E_sigma[V_{i+1}] + f dt)``
gives the value of stopping under the worst-case volatility. For tiny
lattices the same value is recovered by enumerating every Markov stopping
rule jointly with every endpoint volatility control.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ProblemInputError, SizeError, UnsupportedCaseError
from .gcore import SpaceGrid, TimeGrid
from .lattice import (
    PICARD_MAX_ITER,
    PICARD_TOL,
    MarkovianProblem,
    SolutionSurface,
    check_picard,
    continuation,
    depends_on,
    evaluate,
    layer_stencil,
)

CONTACT_TOL = 1e-10
MAX_STEPS = 4
MAX_INTERVALS = 5
MAX_COMBINATIONS = 3**14
_CHUNK = 3**9


def contact_tol(obstacle: np.ndarray) -> float:
    finite = obstacle[np.isfinite(obstacle)]
    scale = 1.0 + (float(np.max(np.abs(finite))) if finite.size else 0.0)
    return CONTACT_TOL * scale


@dataclass
class StoppingPolicy:
    """``stop_region`` is the contact set {Y - h <= tol} (true at T);
    ``exercise_region`` is where stopping is strictly better than
    continuing (interior nodes only), and ``boundary`` gives its extent in x per time step
    (nan when empty). ``D_estimate[j]`` is the first contact time along the
    state line x_j."""

    t: np.ndarray
    x: np.ndarray
    stop_region: np.ndarray
    exercise_region: np.ndarray
    boundary: np.ndarray
    D_estimate: np.ndarray
    tol: float
    values: np.ndarray = field(repr=False, default=None)


def _policy(t, x, Y, H, dA) -> StoppingPolicy:
    tol = contact_tol(H)
    stop = (Y - H) <= tol
    stop[-1] = True
    exercise = dA > tol
    exercise[-1] = False
    # the two edge nodes carry the far-field closure, not a real exercise decision
    exercise[:, 0] = exercise[:, -1] = False
    boundary = np.full((len(t), 2), np.nan)
    for i in range(len(t)):
        xs = x[exercise[i]]
        if xs.size:
            boundary[i] = xs.min(), xs.max()
    first = np.argmax(stop, axis=0)  # stop[-1] is all true, so argmax is defined
    return StoppingPolicy(t, x, stop, exercise, boundary, t[first], tol, Y)


def policy_from_surface(surface: SolutionSurface) -> StoppingPolicy:
    if surface.obstacle is None:
        raise ProblemInputError("a stopping policy needs a surface with an obstacle")
    return _policy(surface.t, surface.x, surface.Y, surface.obstacle, surface.dA)


def _require_z_free(problem: MarkovianProblem, t: float, x: np.ndarray) -> None:
    for name, fn in (("f", problem.f), ("g", problem.g)):
        if depends_on(fn, "z", t, x):
            raise UnsupportedCaseError(
                f"driver {name} depends on z; the stopping recursion does not close, use lattice.rollback instead"
            )


def optimal_stopping_value(problem: MarkovianProblem, time_grid: TimeGrid, space_grid: SpaceGrid, x0=None):
    """Returns ``(value at (t0, x0), StoppingPolicy)``; ``x0`` defaults to
    node M // 2, the start node of the brute-force oracle."""
    if not problem.has_obstacle:
        raise ProblemInputError("optimal stopping needs an obstacle")
    x = space_grid.points
    _require_z_free(problem, time_grid.t0, x)
    dt, dx = time_grid.dt, space_grid.dx
    check_picard(problem, dt)
    t_pts = time_grid.points
    N = time_grid.steps
    V = np.empty((N + 1, x.size))
    H = np.vstack([problem.obstacle(t, x) for t in t_pts])
    gain = np.zeros_like(V)
    V[N] = evaluate(problem.phi, x.shape, x)
    for i in range(N - 1, -1, -1):
        c = continuation(problem, t_pts[i], x, V[i + 1], dt, dx).value
        V[i] = np.maximum(H[i], c)
        gain[i] = np.maximum(H[i] - c, 0.0)
    if x0 is None:
        x0 = x[space_grid.M // 2]
    return float(np.interp(x0, x, V[0])), _policy(t_pts, x, V, H, gain)


def _reachable(j0: int, i: int, M: int) -> range:
    return range(max(0, j0 - i), min(M, j0 + i) + 1)


def brute_force_oracle(problem: MarkovianProblem, time_grid: TimeGrid, space_grid: SpaceGrid, j0=None) -> float:
    """Exact double supremum by enumeration on a tiny lattice.

    Every reachable non-terminal node gets one of three labels: stop,
    continue under sigma_low, continue under sigma_high. Each labelling is a
    Markov stopping rule together with a volatility control; its value is
    computed by a linear backward pass and the maximum over all labellings
    is returned for the start node ``j0`` (default: centre).
    """
    if not problem.has_obstacle:
        raise ProblemInputError("the oracle needs an obstacle")
    N, M = time_grid.steps, space_grid.M
    if N > MAX_STEPS or M > MAX_INTERVALS:
        raise SizeError(f"brute force is limited to {MAX_STEPS} steps and {MAX_INTERVALS} intervals, got {N} and {M}")
    x = space_grid.points
    _require_z_free(problem, time_grid.t0, x)
    dt, dx = time_grid.dt, space_grid.dx
    check_picard(problem, dt)
    if j0 is None:
        j0 = M // 2
    t_pts = time_grid.points
    lo_var, hi_var = problem.band.variances

    nodes = [(i, j) for i in range(N) for j in _reachable(j0, i, M)]
    K = len(nodes)
    total = 3**K
    if total > MAX_COMBINATIONS:
        raise SizeError(f"{K} decision nodes give {total} labellings, above the limit {MAX_COMBINATIONS}")

    # per-node constants: weights for both variances and the obstacle
    layer = {}
    for i in range(N):
        st = layer_stencil(problem, t_pts[i], x, dt, dx)
        layer[i] = (st, st.weights(lo_var), st.weights(hi_var), problem.obstacle(t_pts[i], x))
    phi = evaluate(problem.phi, x.shape, x)
    pos = {node: k for k, node in enumerate(nodes)}
    powers = 3 ** np.arange(K, dtype=np.int64)

    best = -np.inf
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        m = idx.size
        codes = (idx[:, None] // powers[None, :]) % 3
        W = np.broadcast_to(phi, (m, x.size)).copy()
        for i in range(N - 1, -1, -1):
            st, w_lo, w_hi, h = layer[i]
            Wn = W
            W = np.zeros_like(Wn)
            for j in _reachable(j0, i, M):
                code = codes[:, pos[(i, j)]]
                nb_lo = Wn[:, j - 1] if j > 0 else Wn[:, j]
                nb_hi = Wn[:, j + 1] if j < M else Wn[:, j]
                if 0 < j < M:
                    d = (Wn[:, j + 1] - Wn[:, j - 1]) / (2.0 * dx)
                elif j == 0:
                    d = (Wn[:, 1] - Wn[:, 0]) / dx
                else:
                    d = (Wn[:, M] - Wn[:, M - 1]) / dx
                z = st.diffusion[j] * d
                xj = np.full(m, x[j])
                gj = evaluate(problem.g, (m,), t_pts[i], xj, Wn[:, j], z)
                e_lo = w_lo[0][j] * nb_lo + w_lo[1][j] * Wn[:, j] + w_lo[2][j] * nb_hi + gj * (lo_var * dt)
                e_hi = w_hi[0][j] * nb_lo + w_hi[1][j] * Wn[:, j] + w_hi[2][j] * nb_hi + gj * (hi_var * dt)
                c0 = np.where(code == 1, e_lo, e_hi)
                c = _picard_vec(problem, t_pts[i], xj, c0, z, dt, Wn[:, j])
                W[:, j] = np.where(code == 0, h[j], c)
        best = max(best, float(np.max(W[:, j0])))
    return best


def _picard_vec(problem, t, x, c0, z, dt, start):
    y = start
    for _ in range(PICARD_MAX_ITER):
        y_new = c0 + evaluate(problem.f, c0.shape, t, x, y, z) * dt
        if np.max(np.abs(y_new - y)) <= PICARD_TOL:
            return y_new
        y = y_new
    return y_new


@dataclass
class OptionalStoppingReport:
    max_violation: float
    passed: bool
    tol: float
    hitting_layers: dict  # threshold n -> first step index with Y - h < 1/n, per state node


def optional_stopping_check(surface: SolutionSurface, policy: StoppingPolicy = None, thresholds=(1, 10, 100)) -> OptionalStoppingReport:
    """Reflection must not act strictly above the obstacle: dA = 0 wherever
    Y > h + tol. Also reports the discrete hitting times of {Y - h < 1/n}."""
    if surface.obstacle is None:
        raise ProblemInputError("optional stopping check needs a surface with an obstacle")
    H = surface.obstacle
    tol = policy.tol if policy is not None else contact_tol(H)
    strict = (surface.Y - H) > tol
    violation = float(np.max(np.where(strict, surface.dA, 0.0)))
    layers = {}
    for n in thresholds:
        hit = (surface.Y - H) < 1.0 / n
        hit[-1] = True  # D^n is capped at T
        layers[n] = np.argmax(hit, axis=0)
    return OptionalStoppingReport(violation, violation <= CONTACT_TOL, tol, layers)
