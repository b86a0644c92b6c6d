"""Penalization ladder for reflected G-BSDEs.

Runs penalized rollbacks for an increasing schedule of penalties, tracks the
per-level statistics that the uniform estimates bound, and returns the last
level as the reflected solution once consecutive levels agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConvergenceError, ProblemInputError
from .gcore import SpaceGrid, TimeGrid
from .lattice import MarkovianProblem, SolutionSurface, obstacle_layers, rollback

MONOTONE_TOL = 1e-12
GROWTH_LIMIT = 0.05


@dataclass(frozen=True)
class LadderConfig:
    penalties: tuple = tuple(2**k for k in range(11))
    stop_tol: float = 1e-3
    min_levels: int = 3

    def __post_init__(self):
        pens = tuple(float(p) for p in self.penalties)
        if not pens:
            raise ProblemInputError("ladder needs at least one penalty")
        if any(b <= a for a, b in zip(pens, pens[1:])) or pens[0] < 1:
            raise ProblemInputError(f"penalties must be >= 1 and strictly increasing, got {self.penalties}")
        if not self.stop_tol > 0:
            raise ProblemInputError("stop_tol must be positive")


@dataclass
class LevelStats:
    penalty: float
    diff: float  # sup |Y^n - Y^m| against the previous level (nan at level 0)
    deficit: float  # sup (Y^n - h)^-
    L_T: float  # max over state lines of the total penalty mass
    Y_sup: float
    Z_norm: float  # sup over x of the l2-in-time norm of Z
    monotone: bool


@dataclass
class PenalizationLadder:
    config: LadderConfig
    levels: list = field(default_factory=list)
    converged: bool = False

    @property
    def penalties(self):
        return [lv.penalty for lv in self.levels]


def obstacle_deficit(surface: SolutionSurface, problem: Optional[MarkovianProblem] = None) -> float:
    """max over nodes of (Y - h)^-."""
    h = obstacle_layers(surface, problem)
    return float(np.max(np.maximum(h - surface.Y, 0.0)))


def _z_norm(surface: SolutionSurface) -> float:
    return float(np.max(np.sqrt(np.sum(surface.Z[:-1] ** 2, axis=0) * surface.dt)))


def run_ladder(problem: MarkovianProblem, time_grid: TimeGrid, space_grid: SpaceGrid, config: LadderConfig = LadderConfig()):
    """Penalized solves for increasing n until consecutive levels agree.

    Returns ``(surface, ladder)``; the surface is the last penalized level
    relabelled as the reflected solution, with dA taken from its penalty
    increments.
    """
    if not problem.has_obstacle:
        raise ProblemInputError("the penalization ladder needs an obstacle")
    ladder = PenalizationLadder(config)
    prev = None
    for n in config.penalties:
        surf = rollback(problem, time_grid, space_grid, "penalized", n)
        if prev is None:
            diff, monotone = math.nan, True
        else:
            diff = float(np.max(np.abs(surf.Y - prev.Y)))
            monotone = bool(np.all(surf.Y >= prev.Y - MONOTONE_TOL))
        ladder.levels.append(
            LevelStats(
                penalty=n,
                diff=diff,
                deficit=obstacle_deficit(surf),
                L_T=float(np.max(surf.dL.sum(axis=0))),
                Y_sup=float(np.max(np.abs(surf.Y))),
                Z_norm=_z_norm(surf),
                monotone=monotone,
            )
        )
        if not monotone:
            raise ConvergenceError(f"penalized solutions decreased between n={prev.penalty} and n={n}", ladder)
        prev = surf
        if len(ladder.levels) >= max(2, config.min_levels) and diff < config.stop_tol:
            ladder.converged = True
            break
    if not ladder.converged:
        raise ConvergenceError(
            f"ladder exhausted at n={config.penalties[-1]} without consecutive difference < {config.stop_tol}"
            f" (last {ladder.levels[-1].diff:.3g}); refine the grid or extend the ladder",
            ladder,
        )
    result = SolutionSurface(
        t=prev.t,
        x=prev.x,
        Y=prev.Y,
        Z=prev.Z,
        dA=prev.dL,
        sigma_star=prev.sigma_star,
        mode="reflected",
        meta={**prev.meta, "penalty": prev.penalty, "levels": len(ladder.levels)},
        obstacle=prev.obstacle,
    )
    return result, ladder


@dataclass
class BoundReport:
    Y_sup: float
    L_T_sup: float
    Z_sup: float
    growth: dict
    violation: bool
    rows: list


def uniform_bound_report(ladder: PenalizationLadder) -> BoundReport:
    """Sup over levels of the three uniformly bounded quantities, flagging
    any that still grows by more than 5% between the last two levels."""
    levels = ladder.levels
    if len(levels) < 3:
        raise ProblemInputError(f"bound report needs at least 3 ladder levels, got {len(levels)}")
    growth = {}
    for key in ("Y_sup", "L_T", "Z_norm"):
        a, b = getattr(levels[-2], key), getattr(levels[-1], key)
        growth[key] = (b - a) / abs(a) if a != 0 else (0.0 if b == 0 else math.inf)
    rows = [(lv.penalty, lv.Y_sup, lv.L_T, lv.Z_norm) for lv in levels]
    return BoundReport(
        Y_sup=max(lv.Y_sup for lv in levels),
        L_T_sup=max(lv.L_T for lv in levels),
        Z_sup=max(lv.Z_norm for lv in levels),
        growth=growth,
        violation=any(g > GROWTH_LIMIT for g in growth.values()),
        rows=rows,
    )
