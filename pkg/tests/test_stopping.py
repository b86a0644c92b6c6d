import math

import numpy as np
import pytest

from gbsde import benchmarks as bm
from gbsde.errors import ProblemInputError, SizeError, UnsupportedCaseError
from gbsde.gcore import SpaceGrid, TimeGrid, VolatilityBand
from gbsde.lattice import MarkovianProblem, rollback
from gbsde.market import ClaimSpec, MarketModel, price_american
from gbsde.stopping import (
    brute_force_oracle,
    optimal_stopping_value,
    optional_stopping_check,
    policy_from_surface,
)

FAST = [c for c in bm.tiny_corpus() if c[2].steps <= 3]


@pytest.mark.parametrize("name, problem, tg, sg", bm.tiny_corpus(), ids=[c[0] for c in bm.tiny_corpus()])
def test_dp_equals_projected(name, problem, tg, sg):
    value, policy = optimal_stopping_value(problem, tg, sg)
    assert value == pytest.approx(rollback(problem, tg, sg, "projected").Y[0, sg.M // 2], abs=1e-12)
    assert policy.stop_region[-1].all()


@pytest.mark.parametrize("name, problem, tg, sg", FAST, ids=[c[0] for c in FAST])
def test_brute_force_equals_dp(name, problem, tg, sg):
    value, _ = optimal_stopping_value(problem, tg, sg)
    assert brute_force_oracle(problem, tg, sg) == pytest.approx(value, abs=1e-12)


def test_brute_force_hand_example():
    # one step, three nodes, put struck at 0: by hand the centre value is
    # max(h = 0, sup_s (p_up * 0 + p_mid * 0 + p_down * 1)) = sigma_high^2 dt / (2 dx^2)
    band = VolatilityBand(0.3, 0.6)
    p = MarkovianProblem(band, phi=lambda x: np.maximum(-x, 0.0), h=lambda t, x: np.maximum(-x, 0.0))
    tg, sg = TimeGrid(0, 0.5, 1), SpaceGrid(-1, 1, 3)
    assert brute_force_oracle(p, tg, sg) == pytest.approx(0.36 * 0.5 / 2, abs=1e-15)


def test_size_limits():
    p = bm.zero_minus_one(VolatilityBand(0.3, 0.6))
    with pytest.raises(SizeError):
        brute_force_oracle(p, TimeGrid(0, 1, 5), SpaceGrid(-2, 2, 5))
    with pytest.raises(SizeError):
        brute_force_oracle(p, TimeGrid(0, 1, 4), SpaceGrid(-2, 2, 8))


def test_z_dependent_driver_rejected():
    p = MarkovianProblem(VolatilityBand(0.3, 0.6), phi=lambda x: x, f=lambda t, x, y, z: 0.1 * z, h=lambda t, x: x, lipschitz=0.1)
    with pytest.raises(UnsupportedCaseError):
        optimal_stopping_value(p, TimeGrid(0, 1, 3), SpaceGrid(-1, 1, 5))
    with pytest.raises(ProblemInputError):
        optimal_stopping_value(MarkovianProblem(VolatilityBand(0.3, 0.6), phi=lambda x: x), TimeGrid(0, 1, 3), SpaceGrid(-1, 1, 5))


def test_put_policy():
    model = MarketModel(0.05, 100.0, VolatilityBand(0.15, 0.25), 1.0)
    res = price_american(model, ClaimSpec("put", 100.0), steps=200, intervals=100)
    pol = res.policy
    upper = np.exp(pol.boundary[:-1, 1])
    assert np.all(np.isfinite(upper))
    assert np.all((upper > 60) & (upper < 100))
    # the exercise boundary rises towards the strike as expiry approaches
    assert upper[-1] >= upper[0]
    assert pol.D_estimate.shape == pol.x.shape
    assert np.all(pol.stop_region[pol.exercise_region])


def test_call_without_rate_never_exercised():
    model = MarketModel(0.0, 100.0, VolatilityBand(0.1, 0.3), 1.0)
    res = price_american(model, ClaimSpec("call", 100.0), steps=200, intervals=100)
    assert np.all(np.isnan(res.policy.boundary[:-1]))
    assert not res.policy.exercise_region.any()


def test_optional_stopping_check():
    p, tg, sg = bm.put_benchmark(100, 50)
    s = rollback(p, tg, sg, "projected")
    rep = optional_stopping_check(s, policy_from_surface(s))
    assert rep.passed and rep.max_violation == 0.0
    assert set(rep.hitting_layers) == {1, 10, 100}
    # the 1/n-level sets shrink as n grows, so the hitting times move later
    assert np.all(rep.hitting_layers[1] <= rep.hitting_layers[100])
    j = int(np.argmax(s.Y[0] - s.obstacle[0]))
    s.dA[0, j] = 1e-3
    assert not optional_stopping_check(s).passed


def test_stopping_method_prices_like_lattice():
    model = MarketModel(0.05, 100.0, VolatilityBand(0.15, 0.25), 1.0)
    a = price_american(model, ClaimSpec("put", 100.0), method="stopping", steps=100, intervals=50).h_up
    b = price_american(model, ClaimSpec("put", 100.0), method="lattice", steps=100, intervals=50).h_up
    assert a == pytest.approx(b, abs=1e-12)
    assert math.isfinite(a)
