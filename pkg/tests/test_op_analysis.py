import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

import oracles
from sapcr.channel import NetworkParams, Regime
from sapcr.config import dbm_to_watt
from sapcr.errors import NumericError, ParameterError
from sapcr.geometry import BlockageModel
from sapcr.op_analysis import (aggregate_exponent, asymptotic_floor, beta_placement_diagnostic,
                               empty_ball_radius, empty_ball_radius_alpha2,
                               empty_ball_radius_alpha4, empty_ball_residual, op_at, op_below6,
                               op_blockage, op_from_interference, op_mmw, rho, rho0,
                               solve_empty_ball, unit_integral, unit_integral_inf)

P1, P2 = dbm_to_watt(43.0), dbm_to_watt(23.0)
BELOW6 = NetworkParams(5e-4, 0.0, P1, P2, 4.0, 2.0)
BLK = NetworkParams(8e-5, 1.6e-2, P1, P2, 2.7, 5.0, regime=Regime.BLOCKAGE,
                    blockage=BlockageModel.from_xi(0.04, 15.0, 10.0), axis_length=120.0)
MMW = BLK.replace(regime=Regime.MMW, omega=math.pi / 18)

# frozen from tests/oracles.py (TX-centred brute-force quadrature)
FROZEN_BELOW6 = [
    (0.5, 1.0, 4.0, 0.01117440933894673),
    (3.0, 0.1, 4.0, 0.43347587195197607),
    (10.0, 1.0, 4.0, 0.8269178704866057),
    (25.0, 10.0, 4.0, 0.9219752955613012),
    (1.0, 1.0, 3.0, 0.011075229691123355),
    (8.0, 3.0, 3.0, 0.10471221640873907),
]


@pytest.mark.parametrize("R,beta,alpha,ref", FROZEN_BELOW6)
def test_below6_matches_frozen_oracle(R, beta, alpha, ref):
    p = BELOW6.replace(alpha=alpha)
    assert op_below6(R, p, beta).value == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("R,upper", [(4.0, 60.0), (20.0, 30.0), (2.0, 100.0), (7.0, math.inf)])
def test_truncated_aggregate_matches_oracle(R, upper):
    c = P1 * 5.0 ** 2.7 / P2
    ref = oracles.aggregate_exponent(R, 5.0, c, 2.7, upper)
    assert aggregate_exponent(R, 5.0, c, 2.7, upper)[0] == pytest.approx(ref, rel=1e-8)


def _ellipse_angle(R, L, d):
    f = lambda nu: R + math.sqrt(R * R + d * d - 2 * R * d * math.cos(nu)) - L
    if f(math.pi) <= 0:
        return math.pi
    if f(0.0) > 0:
        return 0.0
    return optimize.brentq(f, 0.0, math.pi, xtol=1e-14)


@pytest.mark.parametrize("R", [3.0, 30.0, 58.0, 61.0, 80.0])
def test_blockage_nearest_term_matches_oracle(R):
    beta = 1.0
    c = beta * P1 * BLK.d ** BLK.alpha / P2
    hi = _ellipse_angle(R, BLK.L, BLK.d)
    res = op_blockage(R, BLK.L, BLK, beta)
    assert res.nearest_factor == pytest.approx(oracles.nearest_factor(R, BLK.d, c, BLK.alpha, hi),
                                               abs=1e-9)
    agg = oracles.aggregate_exponent(R, BLK.d, c, BLK.alpha, BLK.r_los)
    assert res.aggregate_factor == pytest.approx(math.exp(-BLK.lambda1 * agg), rel=1e-8)


def test_mmw_nearest_term_by_monte_carlo():
    rng = np.random.default_rng(2)
    R, beta, w, d = 8.0, 1.0, MMW.omega, MMW.d
    c = beta * P1 * d ** MMW.alpha / P2
    nu = rng.uniform(0, math.pi, 400_000)
    p = R * np.column_stack((np.cos(nu), np.sin(nu)))
    # beam already covers the TX; does it also cover the RX at (d, 0)?
    to_tx = np.arctan2(-p[:, 1], -p[:, 0])
    az = to_tx + rng.uniform(-w / 2, w / 2, len(nu))
    to_rx = np.arctan2(-p[:, 1], d - p[:, 0])
    covers = np.abs((to_rx - az + math.pi) % (2 * math.pi) - math.pi) <= w / 2
    dist = np.hypot(p[:, 0] - d, p[:, 1])
    success = np.where(covers, 1 / (1 + c * dist ** -MMW.alpha), 1.0)
    res = op_mmw(R, MMW.L, MMW, beta)
    assert res.nearest_factor == pytest.approx(success.mean(), abs=2e-3)


def test_unit_integral_pieces():
    assert unit_integral_inf(4.0) == pytest.approx(math.pi / 2)
    for t in (0.3, 1.0, 7.0, 1e4):
        v, _ = unit_integral(t, 3.0)
        assert 0 < v < unit_integral_inf(3.0)
    assert rho0(4.0, math.inf, 4.0) == pytest.approx(math.pi)
    assert rho(1.0, math.inf, 4.0) == pytest.approx(math.pi / 4)
    assert rho0(0.0, 5.0, 4.0) == 0.0


@given(st.floats(1e-12, 1e3), st.floats(2.3, 6.0), st.sampled_from([math.inf, 30.0, 300.0]))
def test_empty_ball_root_solves_relation(I, alpha, r_l):
    k = 2 * math.pi * BELOW6.lambda1
    R = solve_empty_ball(I, P1, k, alpha, r_l)
    # relative to the size of the competing terms
    scale = 1.0 + (I / P1) * R ** alpha
    assert abs(empty_ball_residual(R, I, P1, k, alpha, r_l)) < 1e-9 * scale


def test_unbracketable_root_raises():
    # alpha close to 2 without a LOS cutoff puts the root near 1e93 m
    with pytest.raises(NumericError):
        solve_empty_ball(1e-12, P1, 2 * math.pi * 5e-4, 2.125)


def test_empty_ball_closed_forms():
    k = 2 * math.pi * 8e-5
    for I in np.geomspace(1e-10, 10, 20):
        assert solve_empty_ball(I, P1, k, 4.0) == pytest.approx(
            empty_ball_radius_alpha4(I, P1, k), rel=1e-12)
        assert solve_empty_ball(I, P1, k, 4.0, 30.0) == pytest.approx(
            empty_ball_radius_alpha4(I, P1, k, 30.0), rel=1e-12)
        assert solve_empty_ball(I, P1, k, 2.0 + 1e-12, 30.0) == pytest.approx(
            empty_ball_radius_alpha2(I, P1, k, 30.0), rel=1e-9)


def test_radius_decreases_with_interference():
    I = np.geomspace(1e-9, 1e2, 60)
    for p in (BELOW6, BLK, MMW):
        R = [empty_ball_radius(x, p) for x in I]
        assert np.all(np.diff(R) < 0)


def test_op_bounds_and_monotonicity_in_beta():
    for p in (BELOW6, BLK, MMW):
        vals = [op_at(10.0, p, b).value for b in (0.01, 0.1, 1, 10, 100)]
        assert all(0 <= v <= 1 for v in vals)
        assert np.all(np.diff(vals) <= 1e-12)


def test_op_grows_with_empty_ball_below6():
    vals = [op_below6(R, BELOW6, 1.0).value for R in np.geomspace(0.01, 200, 40)]
    assert np.all(np.diff(vals) >= -1e-12)


def test_floor_at_vanishing_empty_ball():
    for b in (0.1, 1.0, 10.0):
        assert op_below6(1e-6, BELOW6, b).value == pytest.approx(asymptotic_floor(BELOW6, b),
                                                                rel=1e-6)
        assert asymptotic_floor(BELOW6, b) > 0


def test_blockage_reduces_to_below6_without_blockages():
    tiny = BLK.replace(blockage=BlockageModel(1e-12, 15.0, 10.0), axis_length=None)
    ref = BLK.replace(regime=Regime.BELOW6)
    for R in (1.0, 10.0, 100.0):
        assert op_blockage(R, math.inf, tiny, 1.0).value == pytest.approx(
            op_below6(R, ref, 1.0).value, abs=1e-6)


def test_full_beam_mmw_equals_blockage():
    wide = MMW.replace(omega=2 * math.pi)
    for R in (2.0, 40.0, 70.0):
        assert op_mmw(R, wide.L, wide, 1.0).value == pytest.approx(
            op_blockage(R, BLK.L, BLK, 1.0).value, rel=1e-9)


def test_case_split_and_pair_beyond_los():
    assert op_blockage(10.0, 120.0, BLK, 1.0).metadata["case"] == 1
    assert op_blockage(60.0, 120.0, BLK, 1.0).metadata["case"] == 2
    assert op_blockage(80.0, 120.0, BLK, 1.0).metadata["case"] == 3
    far = BLK.replace(d=BLK.r_los * 1.1, axis_length=BLK.r_los * 3)
    assert op_at(5.0, far, 1.0).value == 0.0


def test_literal_form_is_a_distinct_placement():
    diag = beta_placement_diagnostic(5.0, BELOW6, 4.0)
    assert diag["difference"] != 0.0
    assert op_at(5.0, BELOW6, 1.0, "literal").value == pytest.approx(
        op_at(5.0, BELOW6, 1.0).value, rel=1e-12)


def test_errors():
    with pytest.raises(ParameterError):
        op_below6(-1.0, BELOW6, 1.0)
    with pytest.raises(ParameterError):
        op_below6(1.0, BELOW6, 1.0, form="other")
    with pytest.raises(ParameterError):
        op_blockage(1.0, 1.0, BLK, 1.0)
    with pytest.raises(ParameterError):
        solve_empty_ball(0.0, P1, 1.0, 4.0)
    with pytest.raises(ParameterError):
        op_from_interference(-1.0, BELOW6, 1.0)


def test_no_primaries_gives_certain_access():
    empty = BELOW6.replace(lambda1=0.0)
    assert op_from_interference(0.0, empty, 1.0).value == 1.0


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-8, 1e-1))
def test_op_from_interference_round_trip(I):
    R = empty_ball_radius(I, BELOW6)
    assert op_from_interference(I, BELOW6, 1.0).value == pytest.approx(
        op_below6(R, BELOW6, 1.0).value, rel=1e-12)
