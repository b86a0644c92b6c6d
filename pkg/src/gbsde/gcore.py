"""Sublinear-expectation kernel.

Everything the solvers need to evaluate a worst-case conditional expectation
under volatility uncertainty on a uniform grid: the G-function of a
volatility band, the grids, a monotone three-point transition stencil, and
path simulation under a fixed volatility control.

The stencil for variance ``s`` at node ``j`` is::

    E_s[V](j) = p_down(s) V[j-1] + p_mid(s) V[j] + p_up(s) V[j+1]
    p_up/down = (a(s) + nu) dt/dx^2 +/- beta(s) dt/(2 dx)
    a(s) = s sigma_coef^2 / 2,   beta(s) = b + l s

``nu`` is an s-independent numerical viscosity, zero unless the centered
drift would break monotonicity at one of the band endpoints. Because every
weight is affine in ``s``, the supremum over the whole band is attained at
``sigma_low`` or ``sigma_high``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ConfigurationError, ProblemInputError

# weights below this are treated as a CFL violation rather than roundoff
_WEIGHT_FLOOR = -1e-13


@dataclass(frozen=True)
class VolatilityBand:
    sigma_low: float
    sigma_high: float

    def __post_init__(self):
        if not (self.sigma_low > 0 and math.isfinite(self.sigma_low)):
            raise ProblemInputError(f"sigma_low must be > 0, got {self.sigma_low}")
        if not (self.sigma_high >= self.sigma_low and math.isfinite(self.sigma_high)):
            raise ProblemInputError(
                f"sigma_high ({self.sigma_high}) must be >= sigma_low ({self.sigma_low})"
            )

    @property
    def variances(self) -> tuple[float, float]:
        return self.sigma_low**2, self.sigma_high**2

    @property
    def degenerate(self) -> bool:
        return self.sigma_low == self.sigma_high

    def G(self, p):
        return g_eval(self, p)


def g_eval(band: VolatilityBand, p):
    """G(p) = (sigma_high^2 p^+ - sigma_low^2 p^-) / 2, elementwise."""
    arr = np.asarray(p, dtype=float)
    out = 0.5 * (band.sigma_high**2 * np.maximum(arr, 0.0) - band.sigma_low**2 * np.maximum(-arr, 0.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    steps: int

    def __post_init__(self):
        if not self.T > self.t0:
            raise ProblemInputError(f"time grid needs T > t0, got t0={self.t0}, T={self.T}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ProblemInputError(f"time grid needs steps >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return (self.T - self.t0) / self.steps

    @property
    def points(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.steps + 1)

    def refine(self, k: int = 1, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t0, self.T, self.steps * factor**k)


@dataclass(frozen=True)
class SpaceGrid:
    x_min: float
    x_max: float
    nodes: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ProblemInputError(f"space grid needs x_max > x_min, got [{self.x_min}, {self.x_max}]")
        if int(self.nodes) != self.nodes or self.nodes < 3:
            raise ProblemInputError(f"space grid needs at least 3 nodes (M >= 2), got {self.nodes}")

    @classmethod
    def centered(cls, x0: float, half_width: float, M: int) -> "SpaceGrid":
        """Grid with ``M`` intervals (M even) placing ``x0`` on the middle node."""
        if M % 2:
            raise ProblemInputError(f"centered grid needs an even number of intervals, got {M}")
        return cls(x0 - half_width, x0 + half_width, M + 1)

    @property
    def M(self) -> int:
        return self.nodes - 1

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.M

    @property
    def points(self) -> np.ndarray:
        pts = self.x_min + self.dx * np.arange(self.nodes)
        pts[-1] = self.x_max
        if self.M % 2 == 0:
            # keep the centre node exact so centered grids hit x0
            pts[self.M // 2] = 0.5 * (self.x_min + self.x_max)
        return pts

    def refine(self, k: int = 1) -> "SpaceGrid":
        return SpaceGrid(self.x_min, self.x_max, self.M * 2**k + 1)


@dataclass(frozen=True)
class VolatilityControl:
    """One volatility per time step; the discrete stand-in for one measure."""

    sigmas: tuple

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))

    @classmethod
    def constant(cls, sigma: float, steps: int) -> "VolatilityControl":
        return cls((sigma,) * steps)

    def check(self, band: VolatilityBand) -> None:
        slack = 1e-12 * band.sigma_high
        for i, s in enumerate(self.sigmas):
            if not (band.sigma_low - slack <= s <= band.sigma_high + slack):
                raise ProblemInputError(
                    f"control step {i}: sigma={s} outside band [{band.sigma_low}, {band.sigma_high}]"
                )

    def __len__(self):
        return len(self.sigmas)


def _as_layer(value, n: int) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    return np.broadcast_to(arr, (n,)).astype(float, copy=False)


def _shift_down(values: np.ndarray) -> np.ndarray:
    # out[j] = values[j-1]; out[0] carries a zero weight
    out = np.empty_like(values)
    out[1:] = values[:-1]
    out[0] = values[0]
    return out


def _shift_up(values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values)
    out[:-1] = values[1:]
    out[-1] = values[-1]
    return out


class Stencil:
    """Monotone three-point transition for one time layer.

    ``drift``, ``qv_drift`` and ``diffusion`` are the coefficients b, l and
    sigma_coef sampled on the layer. Boundary nodes use a zero second
    difference; the drift there is kept (one-sided, inward) only when it
    points into the domain at both band endpoints.
    """

    def __init__(self, band: VolatilityBand, dt: float, dx: float, drift=0.0, qv_drift=0.0, diffusion=1.0, n=None):
        if n is None:
            n = max(np.size(drift), np.size(qv_drift), np.size(diffusion))
        if n < 3:
            raise ProblemInputError("a stencil needs at least 3 nodes")
        self.band = band
        self.dt = float(dt)
        self.dx = float(dx)
        self.n = n
        self.drift = _as_layer(drift, n)
        self.qv_drift = _as_layer(qv_drift, n)
        self.diffusion = _as_layer(diffusion, n)
        self.half_sc2 = 0.5 * self.diffusion**2

        lo, hi = band.variances
        beta_lo = self.drift + self.qv_drift * lo
        beta_hi = self.drift + self.qv_drift * hi
        nu = np.maximum(0.0, 0.5 * np.abs(beta_lo) * dx - self.half_sc2 * lo)
        nu = np.maximum(nu, 0.5 * np.abs(beta_hi) * dx - self.half_sc2 * hi)
        nu[0] = nu[-1] = 0.0
        self.nu = nu
        self.keep_left = bool(beta_lo[0] >= 0 and beta_hi[0] >= 0)
        self.keep_right = bool(beta_lo[-1] <= 0 and beta_hi[-1] <= 0)

    def weights(self, s: float):
        """(p_down, p_mid, p_up) for variance ``s``."""
        dt, dx = self.dt, self.dx
        a = self.half_sc2 * s + self.nu
        beta = self.drift + self.qv_drift * s
        diff = a * (dt / dx**2)
        adv = beta * (dt / (2.0 * dx))
        p_up = diff + adv
        p_down = diff - adv
        p_down[0] = 0.0
        p_up[0] = beta[0] * dt / dx if self.keep_left else 0.0
        p_up[-1] = 0.0
        p_down[-1] = -beta[-1] * dt / dx if self.keep_right else 0.0
        p_mid = 1.0 - p_up - p_down
        return p_down, p_mid, p_up

    def check_cfl(self) -> None:
        for sigma, s in zip((self.band.sigma_low, self.band.sigma_high), self.band.variances):
            for name, w in zip(("p_down", "p_mid", "p_up"), self.weights(s)):
                j = int(np.argmin(w))
                if w[j] < _WEIGHT_FLOOR:
                    raise ConfigurationError(
                        f"CFL violation: {name}={w[j]:.3g} < 0 at node {j} for sigma={sigma}, "
                        f"dt={self.dt}, dx={self.dx}; need dt*(sigma_high^2*sigma_coef^2/dx^2 + |drift|/dx) <= 1"
                    )

    def expectation(self, values: np.ndarray, s: float) -> np.ndarray:
        p_down, p_mid, p_up = self.weights(s)
        return p_down * _shift_down(values) + p_mid * values + p_up * _shift_up(values)

    def differences(self, values: np.ndarray):
        """Second and first differences with the stencil's boundary conventions."""
        dx = self.dx
        d2 = np.zeros_like(values)
        d1 = np.zeros_like(values)
        d2[1:-1] = (values[2:] - 2.0 * values[1:-1] + values[:-2]) / dx**2
        d1[1:-1] = (values[2:] - values[:-2]) / (2.0 * dx)
        if self.keep_left:
            d1[0] = (values[1] - values[0]) / dx
        if self.keep_right:
            d1[-1] = (values[-1] - values[-2]) / dx
        return d2, d1

    def variance_slope(self, values: np.ndarray) -> np.ndarray:
        """d E_s[V] / ds divided by dt; the sign picks the maximizing endpoint."""
        d2, d1 = self.differences(values)
        return self.half_sc2 * d2 + self.qv_drift * d1


@dataclass
class LayerExpectation:
    value: np.ndarray
    sigma_star: np.ndarray
    low: np.ndarray
    high: np.ndarray


def sup_expectation(values: np.ndarray, stencil: Stencil, source=None) -> LayerExpectation:
    """Worst-case one-step expectation of ``values`` plus ``source * s * dt``.

    ``source`` is the coefficient of d<B> (the g driver); ties in the
    maximization go to sigma_high.
    """
    band = stencil.band
    lo, hi = band.variances
    e_lo = stencil.expectation(values, lo)
    e_hi = stencil.expectation(values, hi)
    slope = stencil.variance_slope(values)
    if source is not None:
        src = _as_layer(source, len(values))
        e_lo = e_lo + src * (lo * stencil.dt)
        e_hi = e_hi + src * (hi * stencil.dt)
        slope = slope + src
    value = np.maximum(e_lo, e_hi)
    sigma_star = np.where(slope >= 0.0, band.sigma_high, band.sigma_low)
    return LayerExpectation(value, sigma_star, e_lo, e_hi)


def step_sup_expectation(values, node: int, drift: float, band: VolatilityBand, dt: float, dx: float):
    """Scalar form: worst-case expectation at one node with unit diffusion.

    Returns ``(value, sigma_star)``.
    """
    values = np.asarray(values, dtype=float)
    stencil = Stencil(band, dt, dx, drift=drift, n=len(values))
    stencil.check_cfl()
    layer = sup_expectation(values, stencil)
    return float(layer.value[node]), float(layer.sigma_star[node])


@dataclass
class ControlPaths:
    t: np.ndarray
    B: np.ndarray  # (n_paths, steps + 1)
    qv: np.ndarray  # quadratic variation, same shape
    increments: np.ndarray  # dB, (n_paths, steps)


def normal_variates(seed: int, shape) -> np.ndarray:
    """Standard normals from a PCG64 stream by inverse CDF."""
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random(shape)
    # random() is on [0, 1); keep ndtri finite
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return ndtri(u)


def simulate_control_paths(band: VolatilityBand, control: VolatilityControl, grid: TimeGrid, n_paths: int, seed: int) -> ControlPaths:
    if len(control) != grid.steps:
        raise ProblemInputError(f"control has {len(control)} entries, grid has {grid.steps} steps")
    control.check(band)
    sig = np.asarray(control.sigmas)
    dt = grid.dt
    dB = normal_variates(seed, (n_paths, grid.steps)) * (sig * math.sqrt(dt))
    B = np.zeros((n_paths, grid.steps + 1))
    np.cumsum(dB, axis=1, out=B[:, 1:])
    qv_row = np.concatenate([[0.0], np.cumsum(sig**2 * dt)])
    qv = np.broadcast_to(qv_row, B.shape).copy()
    return ControlPaths(grid.points, B, qv, dB)
