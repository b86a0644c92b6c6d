"""Invariant suites run by ``gbsde validate``.

Each suite returns a list of :class:`Check` rows carrying the measured
quantity, its tolerance and the verdict.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import benchmarks as bm
from .errors import ConfigurationError
from .gcore import Stencil, VolatilityBand, sup_expectation
from .lattice import MarkovianProblem, complementarity_residual, depends_on, rollback
from .market import ClaimSpec, MarketModel, crr_american_oracle, price_american
from .pde import cross_validate
from .stopping import brute_force_oracle, optimal_stopping_value, optional_stopping_check

AXIOM_TOL = 1e-12
COMPARISON_TOL = 1e-12
ORACLE_TOL = 1e-12
SUITES = ("axioms", "comparison", "complementarity", "oracle", "cross_validate")
FIXTURES = ("comparison_reversed",)


@dataclass
class Check:
    suite: str
    name: str
    measured: float
    tol: float
    passed: bool
    expected_fail: bool = False

    @property
    def status(self) -> str:
        if self.expected_fail:
            return "XPASS" if self.passed else "XFAIL"
        return "PASS" if self.passed else "FAIL"

    @property
    def ok(self) -> bool:
        return self.status in ("PASS", "XFAIL")


def _below(suite, name, measured, tol, expected_fail=False):
    return Check(suite, name, float(measured), float(tol), bool(measured <= tol), expected_fail)


def axioms_suite(rng: np.random.Generator, samples: int = 1000):
    """Monotonicity, constant preservation and translation, sub-additivity
    and positive homogeneity of the one-step worst-case expectation."""
    worst = dict.fromkeys(("monotonicity", "constants", "translation", "subadditivity", "homogeneity"), 0.0)
    for _ in range(samples):
        lo = rng.uniform(0.05, 0.5)
        band = VolatilityBand(lo, lo + rng.uniform(0.0, 0.5))
        n = int(rng.integers(3, 12))
        dx = rng.uniform(0.5, 1.0)
        dt = 0.9 * dx**2 / band.sigma_high**2 * rng.uniform(0.1, 1.0)
        drift = rng.uniform(-0.5, 0.5, n) * band.sigma_low**2 / dx
        st = Stencil(band, dt, dx, drift=drift, n=n)
        st.check_cfl()
        E = lambda v: sup_expectation(v, st).value
        X, Y = rng.normal(size=n), rng.normal(size=n)
        c, lam = rng.normal(), rng.uniform(0.0, 10.0)
        worst["monotonicity"] = max(worst["monotonicity"], float(np.max(E(X) - E(X + np.abs(Y)))))
        worst["constants"] = max(worst["constants"], float(np.max(np.abs(E(np.full(n, c)) - c))))
        worst["translation"] = max(worst["translation"], float(np.max(np.abs(E(X + c) - E(X) - c))))
        worst["subadditivity"] = max(worst["subadditivity"], float(np.max(E(X + Y) - E(X) - E(Y))))
        worst["homogeneity"] = max(worst["homogeneity"], float(np.max(np.abs(E(lam * X) - lam * E(X)))))
    return [_below("axioms", k, v, AXIOM_TOL) for k, v in worst.items()]


def _reversed(problem: MarkovianProblem, bump: float = 0.5) -> MarkovianProblem:
    phi = problem.phi
    return MarkovianProblem(
        band=problem.band,
        phi=lambda x: phi(x) + bump,
        b=problem.b,
        l=problem.l,
        sigma_coef=problem.sigma_coef,
        f=problem.f,
        g=problem.g,
        h=problem.h,
        lipschitz=problem.lipschitz,
        name=problem.name + "-bumped",
    )


def comparison_suite(rng: np.random.Generator, pairs: int = 20, expected_fail=()):
    """Projected solutions of ordered data stay ordered nodewise."""
    worst = 0.0
    first = None
    for _ in range(pairs):
        p1, p2, tg, sg = bm.random_ordered_pair(rng)
        if first is None:
            first = (p1, p2, tg, sg)
        y1 = rollback(p1, tg, sg, "projected").Y
        y2 = rollback(p2, tg, sg, "projected").Y
        worst = max(worst, float(np.max(y1 - y2)))
    checks = [_below("comparison", f"ordered_pairs[{pairs}]", worst, COMPARISON_TOL)]
    if "comparison_reversed" in expected_fail and first is not None:
        # phi1 raised above phi2: the ordering must break
        p1, p2, tg, sg = first
        y1 = rollback(_reversed(p1), tg, sg, "projected").Y
        y2 = rollback(p2, tg, sg, "projected").Y
        checks.append(_below("comparison", "comparison_reversed", float(np.max(y1 - y2)), COMPARISON_TOL, expected_fail=True))
    return checks


def _projected_cases():
    cases = [(name, p, tg, sg) for name, p, tg, sg in bm.tiny_corpus()]
    cases.append(("zero-minus-one", bm.zero_minus_one(), *bm.zero_minus_one_grids()))
    cases.append(("put", *bm.put_benchmark(200, 100)))
    return cases


def complementarity_suite():
    checks = []
    for name, p, tg, sg in _projected_cases():
        s = rollback(p, tg, sg, "projected")
        rep = optional_stopping_check(s)
        checks.append(_below("complementarity", f"{name}:dA_off_contact", rep.max_violation, 0.0))
        checks.append(Check("complementarity", f"{name}:residual", complementarity_residual(s), math.inf, True))
    return checks


def oracle_suite():
    checks = []
    for name, p, tg, sg in _projected_cases():
        if depends_on(p.f, "z", tg.t0, sg.points) or depends_on(p.g, "z", tg.t0, sg.points):
            continue
        value, _ = optimal_stopping_value(p, tg, sg)
        y0 = float(rollback(p, tg, sg, "projected").Y[0][sg.M // 2])
        checks.append(_below("oracle", f"{name}:dp_vs_projected", abs(value - y0), ORACLE_TOL))
    for name, p, tg, sg in bm.tiny_corpus():
        value, _ = optimal_stopping_value(p, tg, sg)
        checks.append(_below("oracle", f"{name}:brute_force", abs(brute_force_oracle(p, tg, sg) - value), ORACLE_TOL))
    model = MarketModel(0.05, 100.0, VolatilityBand(0.2, 0.2), 1.0)
    claim = ClaimSpec("put", 100.0)
    h_up = price_american(model, claim, steps=500, intervals=200).h_up
    crr = crr_american_oracle(0.2, 0.05, 100.0, 1.0, claim, 500)
    checks.append(_below("oracle", "degenerate_put_vs_crr_rel", abs(h_up - crr) / crr, 1e-3))
    return checks


def cross_validate_suite():
    rep = cross_validate(bm.raw_put_benchmark(), bm.put_refinement_grids(3))
    diffs = rep.max_diffs
    checks = [Check("cross_validate", f"level{k}:max_abs_diff", d, math.inf, True) for k, d in enumerate(diffs)]
    ratio = max(b / a for a, b in zip(diffs, diffs[1:]))
    checks.append(Check("cross_validate", "shrinking:max_ratio", ratio, 1.0, rep.shrinking))
    checks.append(Check("cross_validate", "penalized_monotone_below", 0.0 if rep.penalized_ok else 1.0, 0.0, rep.penalized_ok))
    return checks


def run_suites(suites, seed: int = 0, samples: int = 1000, pairs: int = 20, expected_fail=()):
    if not suites:
        raise ConfigurationError("no validation suite selected; choose from " + ", ".join(SUITES))
    unknown = [s for s in suites if s not in SUITES]
    if unknown:
        raise ConfigurationError(f"unknown suite(s) {unknown}; expected a subset of {SUITES}")
    bad = [f for f in expected_fail if f not in FIXTURES]
    if bad:
        raise ConfigurationError(f"unknown expected-fail fixture(s) {bad}; expected a subset of {FIXTURES}")
    rng = np.random.Generator(np.random.PCG64(seed))
    checks = []
    for suite in suites:
        if suite == "axioms":
            checks += axioms_suite(rng, samples)
        elif suite == "comparison":
            checks += comparison_suite(rng, pairs, expected_fail)
        elif suite == "complementarity":
            checks += complementarity_suite()
        elif suite == "oracle":
            checks += oracle_suite()
        else:
            checks += cross_validate_suite()
    return checks
