"""INI run configurations for the command line.

Coefficients are written as a built-in name followed by numbers, e.g.
``phi = put 0``, ``f = constant -1``, ``sigma = linear 1 0.1`` or
``h = table -1:0 0:0.5 1:0``. See README.md for the full grammar.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .gcore import SpaceGrid, TimeGrid, VolatilityBand
from .lattice import MarkovianProblem, evaluate
from .market import ClaimSpec, MarketModel
from .rbsde import LadderConfig

SOLVE_MODES = ("plain", "projected", "penalized", "ladder", "pde", "pde-obstacle", "pde-penalized")
PRESETS = ("zero_minus_one",)
DEFAULT_WIDTH = 6.0


class ConfigError(ConfigurationError):
    """Malformed or inconsistent configuration file."""


def _numbers(name: str, args: list, count: Optional[int] = None, minimum: int = 0) -> list:
    try:
        values = [float(a) for a in args]
    except ValueError:
        raise ConfigError(f"built-in {name!r} expects numeric arguments, got {' '.join(args)!r}") from None
    if count is not None and len(values) != count:
        raise ConfigError(f"built-in {name!r} takes {count} argument(s), got {len(values)}")
    if len(values) < minimum:
        raise ConfigError(f"built-in {name!r} takes at least {minimum} argument(s)")
    return values


def _table(args: list):
    pts = []
    for item in args:
        try:
            a, b = item.split(":")
            pts.append((float(a), float(b)))
        except ValueError:
            raise ConfigError(f"table entries are x:y pairs, got {item!r}") from None
    if len(pts) < 2:
        raise ConfigError("table needs at least two x:y pairs")
    xs = np.array([p[0] for p in pts])
    if np.any(np.diff(xs) <= 0):
        raise ConfigError("table abscissae must be strictly increasing")
    ys = np.array([p[1] for p in pts])
    return lambda x: np.interp(x, xs, ys)


def parse_builtin(spec: str):
    """Turn ``"name a b ..."`` into a vectorized function of one variable."""
    parts = spec.split()
    if not parts:
        raise ConfigError("empty coefficient specification")
    name, args = parts[0].lower(), parts[1:]
    if name == "constant":
        (c,) = _numbers(name, args, 1)
        return lambda x: np.full(np.shape(x), c)
    if name == "linear":
        a, b = _numbers(name, args, 2)
        return lambda x: a + b * np.asarray(x, dtype=float)
    if name == "poly":
        coef = _numbers(name, args, minimum=1)
        return lambda x: np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), coef)
    if name in ("put", "call", "logput", "logcall"):
        (K,) = _numbers(name, args, 1)
        log = name.startswith("log")
        sign = -1.0 if name.endswith("put") else 1.0

        def payoff(x):
            s = np.exp(x) if log else np.asarray(x, dtype=float)
            return np.maximum(sign * (s - K), 0.0)

        return payoff
    if name == "table":
        return _table(args)
    raise ConfigError(f"unknown built-in {name!r}; expected constant, linear, poly, put, call, logput, logcall, logdrift or table")


def _tx(fn):
    return lambda t, x: fn(x)


@dataclass
class RunConfig:
    kind: str  # "solve" or "price"
    mode: str = "projected"
    penalty: Optional[float] = None
    problem: Optional[MarkovianProblem] = None
    time_grid: Optional[TimeGrid] = None
    space_grid: Optional[SpaceGrid] = None
    x0: float = 0.0
    ladder: LadderConfig = field(default_factory=LadderConfig)
    model: Optional[MarketModel] = None
    claim: Optional[ClaimSpec] = None
    method: str = "lattice"
    steps: int = 500
    intervals: int = 200
    width: float = DEFAULT_WIDTH
    seed: int = 0
    mc_paths: int = 0
    suites: tuple = ()
    expected_fail: tuple = ()
    samples: int = 1000
    pairs: int = 20
    oracle_kind: str = "auto"
    oracle_sigma: Optional[float] = None
    oracle_steps: Optional[int] = None
    source: dict = field(default_factory=dict)


def read_config(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return cp


def _get(cp, section, key, cast=str, default=None, required=False):
    if not cp.has_option(section, key):
        if required:
            raise ConfigError(f"missing [{section}] {key}")
        return default
    raw = cp.get(section, key).strip()
    try:
        return cast(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {cast.__name__}") from None


def _band(cp) -> VolatilityBand:
    lo = _get(cp, "band", "sigma_low", float, required=True)
    hi = _get(cp, "band", "sigma_high", float, default=lo)
    try:
        return VolatilityBand(lo, hi)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _refine(steps: int, intervals: int, refine: int, time_factor: int):
    return steps * time_factor**refine, intervals * 2**refine


def _driver(cp, key: str):
    """``key`` holds the x-part; ``key_y`` and ``key_z`` give linear terms."""
    base = parse_builtin(_get(cp, "problem", key, default="constant 0"))
    ky = _get(cp, "problem", f"{key}_y", float, 0.0)
    kz = _get(cp, "problem", f"{key}_z", float, 0.0)

    def driver(t, x, y, z):
        return base(x) + ky * y + kz * z

    return driver, abs(ky) + abs(kz)


def _problem(cp, band) -> MarkovianProblem:
    preset = _get(cp, "problem", "preset")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; expected one of {PRESETS}")
    defaults = {}
    if preset == "zero_minus_one":
        defaults = {"phi": "constant 0", "f": "constant -1", "h": "constant 0"}
    for key, value in defaults.items():
        if not cp.has_option("problem", key):
            cp.set("problem", key, value)
    phi = parse_builtin(_get(cp, "problem", "phi", required=True))
    b_spec = _get(cp, "problem", "b", default="constant 0")
    l_spec = _get(cp, "problem", "l")
    if b_spec.split()[0].lower() == "logdrift":
        # log-price drift: b = r and l = -1/2 unless l is set explicitly
        (r,) = _numbers("logdrift", b_spec.split()[1:], 1)
        b = lambda x: np.full(np.shape(x), r)
        l = parse_builtin(l_spec) if l_spec else (lambda x: np.full(np.shape(x), -0.5))
    else:
        b = parse_builtin(b_spec)
        l = parse_builtin(l_spec or "constant 0")
    sig = parse_builtin(_get(cp, "problem", "sigma", default="constant 1"))
    f, Lf = _driver(cp, "f")
    g, Lg = _driver(cp, "g")
    h_spec = _get(cp, "problem", "h", default="none")
    h = None if h_spec.lower() == "none" else _tx(parse_builtin(h_spec))
    lip = _get(cp, "problem", "lipschitz", default="auto")
    L = max(Lf, Lg) if lip == "auto" else _get(cp, "problem", "lipschitz", float)
    return MarkovianProblem(
        band=band,
        phi=phi,
        b=_tx(b),
        l=_tx(l),
        sigma_coef=_tx(sig),
        f=f,
        g=g,
        h=h,
        lipschitz=L,
        obstacle_bound=_get(cp, "problem", "obstacle_bound", float),
        name=_get(cp, "problem", "name", default=preset or "problem"),
    )


def _solve_grids(cp, problem: MarkovianProblem, refine: int):
    T = _get(cp, "grid", "T", float, 1.0)
    t0 = _get(cp, "grid", "t0", float, 0.0)
    steps = _get(cp, "grid", "steps", int, required=True)
    intervals = _get(cp, "grid", "intervals", int, required=True)
    steps, intervals = _refine(steps, intervals, refine, _get(cp, "grid", "time_factor", int, 2))
    x0 = _get(cp, "grid", "x0", float, 0.0)
    domain = _get(cp, "grid", "domain", default="auto")
    if domain == "auto":
        # x0 +/- width * sigma_eff * sqrt(T) with sigma_eff = sigma_high * max |sigma_coef|
        probe = x0 + np.linspace(-5.0, 5.0, 201)
        sc = float(np.max(np.abs(evaluate(problem.sigma_coef, probe.shape, t0, probe))))
        half = _get(cp, "grid", "width", float, DEFAULT_WIDTH) * problem.band.sigma_high * sc * math.sqrt(T - t0)
        if intervals % 2:
            raise ConfigError("auto domain needs an even interval count so that x0 is a node")
        sg = SpaceGrid.centered(x0, half, intervals)
    else:
        try:
            lo, hi = (float(v) for v in domain.split())
        except ValueError:
            raise ConfigError(f"[grid] domain must be 'auto' or two numbers, got {domain!r}") from None
        sg = SpaceGrid(lo, hi, intervals + 1)
    try:
        tg = TimeGrid(t0, T, steps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return tg, sg, x0


def _ladder(cp) -> LadderConfig:
    if not cp.has_section("ladder"):
        return LadderConfig()
    pens = _get(cp, "ladder", "penalties")
    kw = {}
    if pens:
        try:
            kw["penalties"] = tuple(float(p) for p in pens.replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"[ladder] penalties must be numbers, got {pens!r}") from None
    kw["stop_tol"] = _get(cp, "ladder", "stop_tol", float, 1e-3)
    kw["min_levels"] = _get(cp, "ladder", "min_levels", int, 3)
    return LadderConfig(**kw)


def _claim(cp) -> ClaimSpec:
    kind = _get(cp, "claim", "kind", required=True)
    strike = _get(cp, "claim", "strike", float, 0.0)
    payoff = _get(cp, "claim", "payoff")
    obstacle = _get(cp, "claim", "obstacle")
    return ClaimSpec(
        kind,
        strike,
        payoff=parse_builtin(payoff) if payoff else None,
        obstacle=_tx(parse_builtin(obstacle)) if obstacle else None,
    )


def _ensure(cp, *sections):
    for s in sections:
        if not cp.has_section(s):
            cp.add_section(s)


def load_solve(cp, refine: int = 0, seed: Optional[int] = None) -> RunConfig:
    _ensure(cp, "problem", "grid", "run")
    band = _band(cp)
    problem = _problem(cp, band)
    tg, sg, x0 = _solve_grids(cp, problem, refine)
    mode = _get(cp, "run", "mode", default="projected")
    if mode not in SOLVE_MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {SOLVE_MODES}")
    penalty = _get(cp, "run", "penalty", float)
    if mode in ("penalized", "pde-penalized") and penalty is None:
        raise ConfigError(f"mode {mode} needs [run] penalty")
    return RunConfig(
        kind="solve",
        mode=mode,
        penalty=penalty,
        problem=problem,
        time_grid=tg,
        space_grid=sg,
        x0=x0,
        ladder=_ladder(cp),
        seed=seed if seed is not None else _get(cp, "run", "seed", int, 0),
        mc_paths=_get(cp, "run", "mc_paths", int, 0),
    )


def load_price(cp, refine: int = 0, seed: Optional[int] = None) -> RunConfig:
    _ensure(cp, "market", "claim", "grid", "run")
    band = _band(cp)
    try:
        model = MarketModel(
            r=_get(cp, "market", "r", float, 0.0),
            s0=_get(cp, "market", "s0", float, required=True),
            band=band,
            T=_get(cp, "market", "T", float, 1.0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    steps = _get(cp, "grid", "steps", int, 500)
    intervals = _get(cp, "grid", "intervals", int, 200)
    steps, intervals = _refine(steps, intervals, refine, _get(cp, "grid", "time_factor", int, 2))
    if cp.has_section("oracle"):
        kind = _get(cp, "oracle", "kind", default="auto")
        sigma = _get(cp, "oracle", "sigma", float)
        o_steps = _get(cp, "oracle", "steps", int)
    else:
        kind, sigma, o_steps = "auto", None, None
    return RunConfig(
        kind="price",
        model=model,
        claim=_claim(cp),
        method=_get(cp, "run", "method", default="lattice"),
        steps=steps,
        intervals=intervals,
        width=_get(cp, "grid", "width", float, DEFAULT_WIDTH),
        seed=seed if seed is not None else _get(cp, "run", "seed", int, 0),
        oracle_kind=kind,
        oracle_sigma=sigma,
        oracle_steps=o_steps,
    )


def _names(raw: Optional[str]) -> tuple:
    if not raw:
        return ()
    return tuple(s.strip() for s in raw.replace(",", " ").split() if s.strip())


def load_validate(cp, seed: Optional[int] = None) -> RunConfig:
    _ensure(cp, "validate")
    return RunConfig(
        kind="validate",
        suites=_names(_get(cp, "validate", "suites")),
        expected_fail=_names(_get(cp, "validate", "expected_fail")),
        samples=_get(cp, "validate", "samples", int, 1000),
        pairs=_get(cp, "validate", "pairs", int, 20),
        seed=seed if seed is not None else _get(cp, "validate", "seed", int, 0),
    )
