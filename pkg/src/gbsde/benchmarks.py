"""Reference problems used by the validation suites, the CLI presets and the tests."""

from __future__ import annotations

import math

import numpy as np

from .gcore import SpaceGrid, TimeGrid, VolatilityBand
from .lattice import MarkovianProblem
from .market import ClaimSpec, MarketModel, build_problem, market_grids, raw_problem

DEFAULT_BAND = VolatilityBand(0.5, 1.0)
NEVER_BINDING = -1e6


def zero_minus_one(band: VolatilityBand = DEFAULT_BAND) -> MarkovianProblem:
    """Terminal value 0, driver -1, obstacle 0: the reflected solution is
    Y = 0, Z = 0, A_t = t."""
    return MarkovianProblem(
        band=band,
        phi=lambda x: np.zeros_like(x),
        f=lambda t, x, y, z: -1.0,
        h=lambda t, x: 0.0,
        obstacle_bound=0.0,
        name="zero-minus-one",
    )


def zero_minus_one_grids(steps: int = 200, intervals: int = 200, T: float = 1.0, half_width: float = 10.0):
    return TimeGrid(0.0, T, steps), SpaceGrid(-half_width, half_width, intervals + 1)


def never_binding(problem: MarkovianProblem) -> MarkovianProblem:
    """Same data with an obstacle far below everything."""
    return MarkovianProblem(
        band=problem.band,
        phi=problem.phi,
        b=problem.b,
        l=problem.l,
        sigma_coef=problem.sigma_coef,
        f=problem.f,
        g=problem.g,
        h=lambda t, x: NEVER_BINDING,
        lipschitz=problem.lipschitz,
        obstacle_bound=NEVER_BINDING,
        name=problem.name + "-never-binding",
    )


def put_market(band: VolatilityBand = VolatilityBand(0.15, 0.25)):
    return MarketModel(r=0.05, s0=100.0, band=band, T=1.0), ClaimSpec("put", 100.0)


def put_benchmark(steps: int = 400, intervals: int = 200, band: VolatilityBand = VolatilityBand(0.15, 0.25)):
    """Discounted American put in log-price: ``(problem, time_grid, space_grid)``."""
    model, claim = put_market(band)
    tg, sg = market_grids(model, steps, intervals)
    return build_problem(model, claim, tg, sg), tg, sg


def raw_put_benchmark(band: VolatilityBand = VolatilityBand(0.15, 0.25)) -> MarkovianProblem:
    model, claim = put_market(band)
    return raw_problem(model, claim)


def put_refinement_grids(levels: int = 3, steps: int = 100, intervals: int = 50, band=VolatilityBand(0.15, 0.25)):
    """Parabolic refinement: dx halves and dt quarters per level."""
    model, _ = put_market(band)
    return [market_grids(model, steps * 4**k, intervals * 2**k) for k in range(levels)]


def _tiny_grids(steps: int, intervals: int, T: float = 1.0, half_width: float = 1.0):
    return TimeGrid(0.0, T, steps), SpaceGrid(-half_width, half_width, intervals + 1)


def tiny_corpus():
    """Small lattices (at most 4 steps, 5 intervals) for exhaustive checks.

    Returns a list of ``(name, problem, time_grid, space_grid)``.
    """
    band = VolatilityBand(0.3, 0.6)
    wide = VolatilityBand(0.2, 0.7)
    put = lambda K: (lambda x: np.maximum(K - x, 0.0))
    corpus = []

    def add(name, problem, steps, intervals, **kw):
        corpus.append((name, problem, *_tiny_grids(steps, intervals, **kw)))

    add("square-1step", MarkovianProblem(band, phi=lambda x: x**2, h=lambda t, x: NEVER_BINDING), 1, 4, T=0.5)
    add("put-2step", MarkovianProblem(band, phi=put(0.2), h=lambda t, x: np.maximum(0.2 - x, 0.0)), 2, 4)
    add("put-3step", MarkovianProblem(band, phi=put(0.1), h=lambda t, x: np.maximum(0.1 - x, 0.0)), 3, 4)
    add("put-4step-wide", MarkovianProblem(wide, phi=put(0.0), h=lambda t, x: np.maximum(-x, 0.0)), 4, 4, half_width=1.6)
    add("zero-minus-one", MarkovianProblem(band, phi=lambda x: 0 * x, f=lambda t, x, y, z: -1.0, h=lambda t, x: 0.0), 3, 4)
    add("immediate", MarkovianProblem(band, phi=lambda x: x, h=lambda t, x: x + 1.0 * (t < 1.0)), 2, 4)
    add(
        "discount-driver",
        MarkovianProblem(band, phi=put(0.3), f=lambda t, x, y, z: -0.5 * y, h=lambda t, x: np.maximum(0.3 - x, 0.0), lipschitz=0.5),
        3,
        4,
    )
    add(
        "qv-driver",
        MarkovianProblem(band, phi=lambda x: np.sin(3 * x), g=lambda t, x, y, z: 0.4 * np.cos(x), h=lambda t, x: np.sin(3 * x) - 0.05 * (1.2 - t)),
        3,
        4,
    )
    add(
        "drifted-straddle",
        MarkovianProblem(band, phi=lambda x: np.abs(x), b=lambda t, x: 0.2, l=lambda t, x: -0.5, h=lambda t, x: np.abs(x) - 0.05 * (1 - t)),
        3,
        4,
        half_width=1.2,
    )
    add(
        "time-obstacle",
        MarkovianProblem(band, phi=lambda x: -(x**2), f=lambda t, x, y, z: 0.3 * np.cos(x) + 0.2 * y, h=lambda t, x: -(x**2) - 0.2 * (1 - t) ** 2, lipschitz=0.2),
        3,
        4,
    )
    add(
        "state-diffusion",
        MarkovianProblem(band, phi=lambda x: np.maximum(x, 0.0), sigma_coef=lambda t, x: 1.0 + 0.3 * np.cos(x), h=lambda t, x: 0.8 * np.maximum(x, 0.0)),
        3,
        5,
        half_width=1.25,
    )
    add("call-5int", MarkovianProblem(wide, phi=lambda x: np.maximum(x - 0.1, 0.0), h=lambda t, x: np.maximum(x - 0.1, 0.0)), 2, 5, half_width=1.25)
    return corpus


def random_ordered_pair(rng: np.random.Generator, band: VolatilityBand = VolatilityBand(0.3, 0.6)):
    """Two problems with phi1 <= phi2, f1 <= f2, g1 <= g2, h1 <= h2 sharing
    the forward coefficients. Grids: ``TimeGrid(0, 1, 50)`` on [-3, 3]."""
    T = 1.0
    A, om, B = rng.uniform(-1, 1), rng.uniform(0.5, 2.0), rng.uniform(-0.5, 0.5)
    d0, d1 = rng.uniform(0, 0.5), rng.uniform(0, 0.1)
    a_y, k_z, c_f = rng.uniform(-0.5, 0.5), rng.uniform(-0.15, 0.15), rng.uniform(-1, 1)
    df = rng.uniform(0, 0.5)
    g_y, c_g, dg = rng.uniform(-0.3, 0.3), rng.uniform(-1, 1), rng.uniform(0, 0.5)
    k1, k2, rho, dh = rng.uniform(0, 0.5), rng.uniform(0, 0.3), rng.uniform(0, 1), rng.uniform(0, 0.3)
    drift, qv, amp = rng.uniform(-0.2, 0.2), rng.uniform(-0.5, 0.2), rng.uniform(0, 0.2)
    L = abs(a_y) + abs(k_z) + abs(g_y)

    def phi1(x):
        return A * np.sin(om * x) + B * x

    def make(phi, f_shift, g_shift, h_shift, name):
        return MarkovianProblem(
            band=band,
            phi=phi,
            b=lambda t, x: drift,
            l=lambda t, x: qv,
            sigma_coef=lambda t, x: 1.0 + amp * np.sin(x),
            f=lambda t, x, y, z: a_y * y + k_z * z + c_f * np.cos(x) + f_shift,
            g=lambda t, x, y, z: g_y * y + c_g * np.sin(2 * x) + g_shift,
            h=lambda t, x: phi1(x) - k1 * (T - t) - k2 + h_shift,
            lipschitz=L,
            name=name,
        )

    p1 = make(phi1, 0.0, 0.0, 0.0, "lower")
    p2 = make(lambda x: phi1(x) + d0 + d1 * x**2, df, dg, min(dh, rho * d0), "upper")
    return p1, p2, TimeGrid(0.0, T, 50), SpaceGrid(-3.0, 3.0, 41)


def cfl_safe_put_grids(model: MarketModel, steps: int):
    """Largest even interval count keeping the log-price scheme monotone."""
    half = 6.0 * model.band.sigma_high * math.sqrt(model.T)
    dt = model.T / steps
    dx_min = model.band.sigma_high * math.sqrt(dt) * 1.25
    M = int(2 * half / dx_min) // 2 * 2
    return market_grids(model, steps, max(M, 4))
