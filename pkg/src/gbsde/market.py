"""American claims in a market with uncertain volatility.

Bond ``d gamma = r gamma dt`` and stock ``dS = r S dt + S dB`` with B a
G-Brownian motion. The superhedging price of an American claim is Y_0 of
the reflected equation with obstacle = payoff. Pricing runs in
``x = log S`` on the discounted problem (zero driver, obstacle
``exp(-r t) payoff``), so no driver fixed point is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.stats import norm

from .errors import ProblemInputError, UnsupportedCaseError
from .gcore import SpaceGrid, TimeGrid, VolatilityBand
from .lattice import MarkovianProblem, SolutionSurface, rollback
from .pde import solve_obstacle_pde
from .stopping import StoppingPolicy, optimal_stopping_value, policy_from_surface

METHODS = ("lattice", "pde", "stopping")
CLAIM_KINDS = ("put", "call", "custom")
DEFAULT_WIDTH = 6.0


@dataclass(frozen=True)
class MarketModel:
    r: float
    s0: float
    band: VolatilityBand
    T: float

    def __post_init__(self):
        if not self.s0 > 0:
            raise ProblemInputError(f"s0 must be positive, got {self.s0}")
        if not self.r >= 0:
            raise ProblemInputError(f"r must be >= 0, got {self.r}")
        if not self.T > 0:
            raise ProblemInputError(f"T must be positive, got {self.T}")


@dataclass(frozen=True)
class ClaimSpec:
    """Payoff of the claim as a function of the stock price. The American
    obstacle defaults to the payoff itself; ``obstacle(t, s)`` overrides it."""

    kind: str
    strike: float = 0.0
    payoff: Optional[Callable] = None
    obstacle: Optional[Callable] = None

    def __post_init__(self):
        if self.kind not in CLAIM_KINDS:
            raise ProblemInputError(f"unknown claim kind {self.kind!r}; expected one of {CLAIM_KINDS}")
        if self.kind == "custom" and self.payoff is None:
            raise ProblemInputError("custom claims need a payoff function")

    def value(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind == "put":
            return np.maximum(self.strike - s, 0.0)
        if self.kind == "call":
            return np.maximum(s - self.strike, 0.0)
        return np.asarray(self.payoff(s), dtype=float) * np.ones_like(s)

    def exercise_value(self, t, s):
        if self.obstacle is not None:
            return np.asarray(self.obstacle(t, s), dtype=float) * np.ones_like(np.asarray(s, dtype=float))
        return self.value(s)


def market_grids(model: MarketModel, steps: int, intervals: int, width: float = DEFAULT_WIDTH):
    """Log-price grid centred on log(s0) spanning +/- width * sigma_high * sqrt(T)."""
    tg = TimeGrid(0.0, model.T, steps)
    sg = SpaceGrid.centered(math.log(model.s0), width * model.band.sigma_high * math.sqrt(model.T), intervals)
    return tg, sg


def fitted_log_coefficients(r: float, dt: float, dx: float):
    """Drift b and d<B>-drift l for log-price making the three-point stencil
    reproduce E[S_{t+dt}] = exp(r dt) S_t exactly; they tend to r and -1/2."""
    ratio = dx / math.sinh(dx)
    b = math.expm1(r * dt) / dt * ratio
    l = -(math.cosh(dx) - 1.0) / dx**2 * ratio
    return b, l


def build_problem(model: MarketModel, claim: ClaimSpec, time_grid: TimeGrid, space_grid: SpaceGrid, american: bool = True) -> MarkovianProblem:
    """Discounted reflected problem in log-price coordinates."""
    r = model.r
    b_fit, l_fit = fitted_log_coefficients(r, time_grid.dt, space_grid.dx)
    T = model.T

    def phi(x):
        return math.exp(-r * T) * claim.value(np.exp(x))

    def h(t, x):
        return math.exp(-r * t) * claim.exercise_value(t, np.exp(x))

    return MarkovianProblem(
        band=model.band,
        phi=phi,
        b=lambda t, x: b_fit,
        l=lambda t, x: l_fit,
        h=h if american else None,
        obstacle_bound=claim.strike if claim.kind == "put" and claim.obstacle is None else None,
        name=f"{'american' if american else 'european'}-{claim.kind}",
    )


def raw_problem(model: MarketModel, claim: ClaimSpec) -> MarkovianProblem:
    """Undiscounted form: driver -r y, obstacle = payoff, exact log drift."""
    r = model.r
    return MarkovianProblem(
        band=model.band,
        phi=lambda x: claim.value(np.exp(x)),
        b=lambda t, x: r,
        l=lambda t, x: -0.5,
        f=lambda t, x, y, z: -r * y,
        h=lambda t, x: claim.exercise_value(t, np.exp(x)),
        lipschitz=r,
        name=f"raw-american-{claim.kind}",
    )


@dataclass
class PriceResult:
    h_up: float
    surface: SolutionSurface
    policy: StoppingPolicy
    method: str
    time_grid: TimeGrid
    space_grid: SpaceGrid


def _tag(surface: SolutionSurface, model: MarketModel, claim: ClaimSpec) -> SolutionSurface:
    surface.meta.update(rate=model.r, strike=claim.strike, discounted=True, coordinate="log-price")
    return surface


def price_american(model: MarketModel, claim: ClaimSpec, time_grid=None, space_grid=None, method: str = "lattice", steps: int = 500, intervals: int = 200) -> PriceResult:
    """Superhedging price h_up = Y_0 at s0, with surface and stopping policy.

    The surface is discounted (values in time-0 money); the hedge ratio is
    unaffected by the discounting.
    """
    if method not in METHODS:
        raise ProblemInputError(f"unknown pricing method {method!r}; expected one of {METHODS}")
    if time_grid is None or space_grid is None:
        time_grid, space_grid = market_grids(model, steps, intervals)
    problem = build_problem(model, claim, time_grid, space_grid)
    x0 = math.log(model.s0)
    if method == "pde":
        surface = solve_obstacle_pde(problem, time_grid, space_grid)
        policy = policy_from_surface(surface)
        price = surface.value_at(x0)
    elif method == "lattice":
        surface = rollback(problem, time_grid, space_grid, "projected")
        policy = policy_from_surface(surface)
        price = surface.value_at(x0)
    else:
        price, policy = optimal_stopping_value(problem, time_grid, space_grid, x0)
        surface = rollback(problem, time_grid, space_grid, "projected")
    return PriceResult(price, _tag(surface, model, claim), policy, method, time_grid, space_grid)


def price_european(model: MarketModel, claim: ClaimSpec, time_grid=None, space_grid=None, steps: int = 500, intervals: int = 200):
    """Worst-case European value: plain rollback of the discounted payoff."""
    if time_grid is None or space_grid is None:
        time_grid, space_grid = market_grids(model, steps, intervals)
    problem = build_problem(model, claim, time_grid, space_grid, american=False)
    surface = rollback(problem, time_grid, space_grid, "plain")
    return surface.value_at(math.log(model.s0)), _tag(surface, model, claim)


def extract_hedge(surface: SolutionSurface, strike: Optional[float] = None):
    """Portfolio fraction pi = Z / Y and consumption increments C = dA.

    pi is nan where |Y| <= 1e-8 (1 + |K|). Consumption is reported in
    undiscounted money when the surface carries a rate.
    """
    K = surface.meta.get("strike", 0.0) if strike is None else strike
    eps = 1e-8 * (1.0 + abs(K))
    pi = np.full_like(surface.Y, np.nan)
    ok = np.abs(surface.Y) > eps
    pi[ok] = surface.Z[ok] / surface.Y[ok]
    rate = surface.meta.get("rate", 0.0) if surface.meta.get("discounted") else 0.0
    C = surface.dA * np.exp(rate * surface.t)[:, None]
    return pi, C


def crr_american_oracle(sigma: float, r: float, s0: float, T: float, claim: ClaimSpec, steps: int) -> float:
    """Cox-Ross-Rubinstein binomial tree with early exercise."""
    if not sigma > 0:
        raise ProblemInputError("CRR oracle needs sigma > 0")
    dt = T / steps
    u = math.exp(sigma * math.sqrt(dt))
    d = 1.0 / u
    disc = math.exp(-r * dt)
    p = (math.exp(r * dt) - d) / (u - d)
    k = np.arange(steps + 1)
    values = claim.value(s0 * u ** (steps - k) * d**k)
    for n in range(steps - 1, -1, -1):
        k = np.arange(n + 1)
        s = s0 * u ** (n - k) * d**k
        cont = disc * (p * values[:-1] + (1.0 - p) * values[1:])
        values = np.maximum(cont, claim.exercise_value(n * dt, s))
    return float(values[0])


def bs_closed_form(sigma: float, r: float, s0: float, T: float, claim: ClaimSpec) -> float:
    """Black-Scholes European price for puts and calls."""
    if claim.kind not in ("put", "call"):
        raise UnsupportedCaseError("closed form is available for puts and calls only")
    K = claim.strike
    df = math.exp(-r * T)
    if sigma * math.sqrt(T) < 1e-12 or K <= 0:
        fwd = s0 - K * df
        return max(fwd, 0.0) if claim.kind == "call" else max(-fwd, 0.0)
    vol = sigma * math.sqrt(T)
    d1 = (math.log(s0 / K) + (r + 0.5 * sigma**2) * T) / vol
    d2 = d1 - vol
    if claim.kind == "call":
        return float(s0 * norm.cdf(d1) - K * df * norm.cdf(d2))
    return float(K * df * norm.cdf(-d2) - s0 * norm.cdf(-d1))
