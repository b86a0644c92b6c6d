"""Explicit finite differences for the fully nonlinear obstacle problem

    min(-u_t - F(u_xx, u_x, u, x, t), u - h) = 0,   u(T, .) = phi,

    F = G(H) + b u_x + f(t, x, u, sigma_coef u_x)
    H = sigma_coef^2 u_xx + 2 l u_x + 2 g(t, x, u, sigma_coef u_x)

and for its penalized versions with F_n = F + n (u - h)^-. Used as an
independent route to the lattice surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ProblemInputError
from .gcore import SpaceGrid, TimeGrid, g_eval
from .lattice import (
    MarkovianProblem,
    SolutionSurface,
    centered_z,
    evaluate,
    layer_stencil,
    rollback,
)


@dataclass
class PDEProblem:
    problem: MarkovianProblem
    time_grid: TimeGrid
    space_grid: SpaceGrid
    boundary: str = "linear"

    def cfl_number(self) -> float:
        """dt (sigma_high^2 max sigma_coef^2 / dx^2 + max|b| / dx); the
        explicit scheme is monotone when this is at most 1."""
        x = self.space_grid.points
        dt, dx = self.time_grid.dt, self.space_grid.dx
        sc2, drift = 0.0, 0.0
        hi = self.problem.band.sigma_high**2
        for t in self.time_grid.points:
            sc2 = max(sc2, float(np.max(evaluate(self.problem.sigma_coef, x.shape, t, x) ** 2)))
            beta = evaluate(self.problem.b, x.shape, t, x) + evaluate(self.problem.l, x.shape, t, x) * hi
            drift = max(drift, float(np.max(np.abs(beta))))
        return dt * (hi * sc2 / dx**2 + drift / dx)


def assemble_FH(uxx, ux, u, x, t, problem: MarkovianProblem, z=None):
    """F(u_xx, u_x, u, x, t). ``z`` overrides sigma_coef * u_x as the
    driver argument (the solvers pass a centered difference)."""
    uxx = np.asarray(uxx, dtype=float)
    shape = np.broadcast(uxx, np.asarray(x, dtype=float)).shape
    sc = evaluate(problem.sigma_coef, shape, t, x)
    if z is None:
        z = sc * ux
    H = sc**2 * uxx + 2.0 * evaluate(problem.l, shape, t, x) * ux + 2.0 * evaluate(problem.g, shape, t, x, u, z)
    F = g_eval(problem.band, H) + evaluate(problem.b, shape, t, x) * ux + evaluate(problem.f, shape, t, x, u, z)
    return float(F) if np.ndim(F) == 0 else F


def _march(problem: MarkovianProblem, time_grid: TimeGrid, space_grid: SpaceGrid, reflection: str, penalty=None) -> SolutionSurface:
    dt, dx = time_grid.dt, space_grid.dx
    t_pts, x = time_grid.points, space_grid.points
    N = time_grid.steps
    U = np.empty((N + 1, x.size))
    Z = np.zeros_like(U)
    dA = np.zeros_like(U)
    sig = np.full_like(U, problem.band.sigma_high)
    H = np.vstack([problem.obstacle(t, x) for t in t_pts]) if problem.has_obstacle else None
    U[N] = evaluate(problem.phi, x.shape, x)
    Z[N] = centered_z(U[N], evaluate(problem.sigma_coef, x.shape, t_pts[N], x), dx)
    lo, hi = problem.band.sigma_low, problem.band.sigma_high

    for i in range(N - 1, -1, -1):
        t = t_pts[i]
        u = U[i + 1]
        stencil = layer_stencil(problem, t, x, dt, dx)
        uxx, ux = stencil.differences(u)
        z = centered_z(u, stencil.diffusion, dx)
        F = assemble_FH(uxx, ux, u, x, t, problem, z=z)
        w = u + dt * (F + stencil.nu * uxx)
        if reflection == "none":
            new = w
        elif reflection == "obstacle":
            new = np.maximum(w, H[i])
            dA[i] = np.maximum(H[i] - w, 0.0)
        else:
            # penalty taken implicitly so that large n dt stays monotone
            deficit = np.maximum(H[i] - w, 0.0) / (1.0 + penalty * dt)
            new = np.where(w < H[i], H[i] - deficit, w)
            dA[i] = penalty * dt * deficit
        U[i] = new
        Hmat = stencil.half_sc2 * 2.0 * uxx + 2.0 * stencil.qv_drift * ux + 2.0 * evaluate(problem.g, x.shape, t, x, u, z)
        sig[i] = np.where(Hmat >= 0.0, hi, lo)
        Z[i] = centered_z(new, stencil.diffusion, dx)

    mode = {"none": "pde", "obstacle": "pde-obstacle", "penalty": "pde-penalized"}[reflection]
    meta = {
        "problem": problem.name,
        "hash": problem.fingerprint(time_grid, space_grid),
        "steps": N,
        "nodes": x.size,
        "dt": dt,
        "dx": dx,
    }
    if penalty is not None:
        meta["penalty"] = float(penalty)
    return SolutionSurface(t_pts, x, U, Z, dA, sig, mode, meta, obstacle=H)


def solve_pde(problem: MarkovianProblem, time_grid: TimeGrid, space_grid: SpaceGrid) -> SolutionSurface:
    """The equation without obstacle."""
    return _march(problem, time_grid, space_grid, "none")


def solve_penalized_pde(problem: MarkovianProblem, time_grid: TimeGrid, space_grid: SpaceGrid, n) -> SolutionSurface:
    if not problem.has_obstacle:
        raise ProblemInputError("penalized PDE needs an obstacle")
    if not n >= 1:
        raise ProblemInputError(f"penalty must be >= 1, got {n}")
    return _march(problem, time_grid, space_grid, "penalty", penalty=n)


def solve_obstacle_pde(problem: MarkovianProblem, time_grid: TimeGrid, space_grid: SpaceGrid) -> SolutionSurface:
    if not problem.has_obstacle:
        raise ProblemInputError("obstacle PDE needs an obstacle")
    return _march(problem, time_grid, space_grid, "obstacle")


@dataclass
class CrossValidationReport:
    levels: list = field(default_factory=list)  # (steps, nodes, dt, dx, max |lattice - pde|)
    penalties: tuple = ()
    lattice_monotone: bool = True
    pde_monotone: bool = True
    lattice_below: bool = True
    pde_below: bool = True

    @property
    def max_diffs(self):
        return [row[-1] for row in self.levels]

    @property
    def shrinking(self) -> bool:
        d = self.max_diffs
        return all(b < a for a, b in zip(d, d[1:]))

    @property
    def penalized_ok(self) -> bool:
        return self.lattice_monotone and self.pde_monotone and self.lattice_below and self.pde_below


def _increasing_below(surfaces, limit, tol=1e-12):
    mono = all(np.all(b.Y >= a.Y - tol) for a, b in zip(surfaces, surfaces[1:]))
    below = all(np.all(s.Y <= limit.Y + tol) for s in surfaces)
    return bool(mono), bool(below)


def cross_validate(problem: MarkovianProblem, grids, penalties=(16, 64, 256)) -> CrossValidationReport:
    """Compare the projected lattice with the obstacle PDE on each grid pair
    in ``grids`` and check u_n increasing to u on the first pair."""
    if not problem.has_obstacle:
        raise ProblemInputError("cross validation needs an obstacle")
    if isinstance(grids, tuple) and len(grids) == 2 and isinstance(grids[0], TimeGrid):
        grids = [grids]
    report = CrossValidationReport(penalties=tuple(penalties))
    for k, (tg, sg) in enumerate(grids):
        lat = rollback(problem, tg, sg, "projected")
        pde = solve_obstacle_pde(problem, tg, sg)
        report.levels.append((tg.steps, sg.nodes, tg.dt, sg.dx, float(np.max(np.abs(lat.Y - pde.Y)))))
        if k == 0 and penalties:
            lat_n = [rollback(problem, tg, sg, "penalized", n) for n in penalties]
            pde_n = [solve_penalized_pde(problem, tg, sg, n) for n in penalties]
            report.lattice_monotone, report.lattice_below = _increasing_below(lat_n, lat)
            report.pde_monotone, report.pde_below = _increasing_below(pde_n, pde)
    return report
