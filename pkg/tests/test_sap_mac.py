import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import optimize

from sapcr.channel import NetworkParams, Regime
from sapcr.config import dbm_to_watt
from sapcr.errors import DomainError, InfeasibleProtectionError, ParameterError
from sapcr.geometry import BlockageModel
from sapcr.op_analysis import op_at
from sapcr.sap_mac import (SapPolicy, access_probability, ase, beta_min, c_star, expected_op,
                           high_op_limit_beta, mean_value_constant, nearest_moments,
                           optimal_beta, primary_outage, reduced_ase_curve, reduced_objective,
                           stationarity)

P1, P2 = dbm_to_watt(43.0), dbm_to_watt(23.0)
FIG6B = NetworkParams(8e-5, 1.6e-2, P1, P2, 4.0, 3.0)
BLK = NetworkParams(8e-5, 1.6e-2, P1, P2, 2.7, 5.0, regime=Regime.BLOCKAGE,
                    blockage=BlockageModel.from_xi(0.04, 15.0, 10.0))


def test_beta_min_hits_the_cap():
    for p in (FIG6B, BLK, FIG6B.replace(tau=0.9995, gamma=0.05)):
        assert primary_outage(p, beta_min(p)) == pytest.approx(p.tau, abs=1e-10)


def test_beta_min_reference_value():
    # frozen reference for the below-6 ASE setting with the default protection pair
    assert beta_min(FIG6B) == pytest.approx(1.9587928017711604, rel=1e-9)


def test_outage_decreases_with_beta():
    out = [primary_outage(FIG6B, b) for b in np.geomspace(0.1, 100, 30)]
    assert np.all(np.diff(out) < 0)


def test_tight_cap_is_infeasible_and_loose_cap_frees_beta():
    with pytest.raises(InfeasibleProtectionError):
        beta_min(FIG6B.replace(gamma=1.0, tau=0.1))
    assert beta_min(FIG6B.replace(tau=1 - 1e-12)) < beta_min(FIG6B) * 1e-3


def test_expected_op_against_sampling():
    rng = np.random.default_rng(0)
    lam = FIG6B.lambda1
    R = np.sqrt(rng.exponential(1.0, 3000) / (math.pi * lam))
    R.sort()
    vals = np.array([op_at(r, FIG6B, 2.0).value for r in R[::3]])
    assert expected_op(FIG6B, 2.0) == pytest.approx(vals.mean(), abs=3 * vals.std() / math.sqrt(1000))


def test_moments_ordering():
    m1, m2 = nearest_moments(FIG6B, 2.0)
    assert 0 < m2 <= m1 <= 1
    assert m1 * m1 <= m2 + 1e-15


def test_c_star_and_access():
    m1 = expected_op(FIG6B, 4.0)
    c = c_star(FIG6B, 4.0, m1)
    pol = SapPolicy(4.0, c, beta_min(FIG6B), 1.0, None, Regime.BELOW6)
    assert pol.theta == pol.beta
    assert access_probability(0.5, pol) == pytest.approx(min(1.0, min(c, 1) * 0.5))
    assert np.all(access_probability(np.linspace(0, 1, 11), pol) <= 1.0)
    with pytest.raises(ParameterError):
        access_probability(1.5, pol)
    with pytest.raises(DomainError):
        c_star(FIG6B, 4.0, 0.0)
    with pytest.raises(ParameterError):
        SapPolicy(0.1, c, beta_min(FIG6B), 1.0, None, Regime.BELOW6)


def test_ase_matches_its_definition():
    b = 5.0
    m1, m2 = nearest_moments(FIG6B, b)
    c = c_star(FIG6B, b, m1)
    expected = math.exp(-min(1, 1 / c)) * math.log1p(b) * min(c, 1) * FIG6B.lambda2 * m2
    r = ase(FIG6B, b)
    assert r.ase == pytest.approx(expected, rel=1e-12)
    assert r.feasible == (r.constraint_outage <= FIG6B.tau)


@given(st.floats(2.2, 8.0))
def test_high_op_limit(alpha):
    b = high_op_limit_beta(alpha)
    ref = optimize.brentq(lambda x: x / ((1 + x) * math.log1p(x)) - 2 / alpha, 1e-6, 1e9)
    assert b == pytest.approx(ref, rel=1e-8)


def test_stationarity_is_the_derivative_of_the_reduced_objective():
    C, a = 0.7, 4.0
    for b in (0.3, 1.0, 4.0):
        h = 1e-6 * b
        num = (np.log(reduced_objective(b + h, C, a)) - np.log(reduced_objective(b - h, C, a))) / (2 * h)
        # d/d beta of the log objective times alpha * beta * ln(1 + beta)
        assert num * a * b * math.log1p(b) == pytest.approx(float(stationarity(b, C, a)), rel=1e-5)


def test_optimal_beta_below6():
    pol = optimal_beta(FIG6B)
    assert pol.beta >= pol.beta_min
    assert pol.beta_root == pytest.approx(3.8708009078801524, rel=1e-6)
    assert pol.s > 0 and pol.s_tilde is None
    grid = np.geomspace(1e-2, 1e2, 2001)
    arg = grid[np.argmax(reduced_ase_curve(FIG6B, grid, pol.s))]
    assert abs(math.log(arg / pol.beta_root)) < math.log(grid[1] / grid[0])


def test_optimal_beta_blockage_clamps_to_beta_min():
    pol = optimal_beta(BLK)
    assert pol.beta == pytest.approx(max(pol.beta_root, pol.beta_min))
    assert pol.s_tilde is not None and math.isnan(pol.s)


def test_mean_value_radius():
    b = 3.0
    s = mean_value_constant(FIG6B, b)
    m1, m2 = nearest_moments(FIG6B, b)
    assert op_at(s, FIG6B, b).value == pytest.approx(m2 / m1, rel=1e-9)


def test_no_primaries_uses_the_limit_root():
    p = FIG6B.replace(lambda1=0.0)
    assert optimal_beta(p).beta_root == pytest.approx(high_op_limit_beta(4.0))
    grid = np.geomspace(0.1, 10, 5)
    assert np.allclose(reduced_ase_curve(p, grid), reduced_objective(grid, 0.0, 4.0))
