import math

import numpy as np
import pytest

from sapcr.channel import NetworkParams, Regime, path_gain, sense_interference, sir_at
from sapcr.errors import NumericError, ParameterError
from sapcr.geometry import BlockageModel, Deployment


def _params(**kw):
    base = dict(lambda1=1e-4, lambda2=1e-3, p1=20.0, p2=0.2, alpha=4.0, d=3.0)
    base.update(kw)
    return NetworkParams(**base)


def test_parameter_validation():
    with pytest.raises(ParameterError):
        _params(alpha=2.0)
    with pytest.raises(ParameterError):
        _params(lambda1=-1.0)
    with pytest.raises(ParameterError):
        _params(tau=1.0)
    with pytest.raises(ParameterError):
        _params(regime=Regime.MMW)
    with pytest.raises(ParameterError):
        _params(axis_length=1.0)


def test_regime_dependent_properties():
    p = _params()
    assert p.r_los == math.inf and p.L == math.inf and p.thinning == 1.0
    b = BlockageModel.from_xi(0.04, 15.0, 10.0)
    m = _params(regime="mmw", blockage=b, omega=math.pi / 6)
    assert m.regime is Regime.MMW
    assert m.thinning == pytest.approx(1 / 12)
    assert math.isfinite(m.r_los)
    assert m.replace(axis_length=50.0).L == 50.0
    # the beam only thins primaries in the mmW regime
    assert m.replace(regime=Regime.BLOCKAGE).thinning == 1.0


def test_path_gain_cutoff():
    p = _params()
    assert path_gain(2.0, p) == pytest.approx(2.0 ** -4)
    b = _params(regime=Regime.BLOCKAGE, blockage=BlockageModel.from_xi(0.04, 15, 10))
    assert path_gain(b.r_los * 1.01, b) == 0.0
    with pytest.raises(NumericError):
        path_gain(0.0, p)


def _deployment(rects=None):
    return Deployment(primary_txs=[[10.0, 0.0], [0.0, -20.0]], primary_beams=[math.pi, 0.0],
                      secondary_txs=[[0.0, 0.0], [5.0, 5.0]],
                      secondary_rxs=[[3.0, 0.0], [8.0, 5.0]],
                      blockages=np.zeros((0, 5)) if rects is None else rects)


def test_sense_interference_sum():
    p = _params()
    dep = _deployment()
    expected = p.p1 * (10.0 ** -4 + 20.0 ** -4)
    assert sense_interference([0.0, 0.0], dep, p) == pytest.approx(expected)
    with pytest.raises(ParameterError):
        sense_interference([0.0, 0.0], dep, p, mode="peak")


def test_blockage_and_beam_cut_sensing():
    blk = BlockageModel.from_xi(0.01, 4.0, 4.0)
    wall = np.array([[0.0, -10.0, 4.0, 4.0, 0.0]])
    p = _params(regime=Regime.BLOCKAGE, blockage=blk)
    dep = _deployment(wall)
    assert sense_interference([0.0, 0.0], dep, p) == pytest.approx(p.p1 * 10.0 ** -4)
    # the first primary beams west towards the origin, the second beams east
    m = p.replace(regime=Regime.MMW, omega=math.pi / 6)
    assert sense_interference([0.0, 0.0], _deployment(), m) == pytest.approx(p.p1 * 10.0 ** -4)


def test_sir_without_fading():
    p = _params()
    dep = _deployment()
    sir = sir_at([3.0, 0.0], [0.0, 0.0], dep, [True, True], p)
    sig = p.p2 * 3.0 ** -4
    interf = (p.p1 * (7.0 ** -4 + math.hypot(3, 20) ** -4)
              + p.p2 * math.hypot(2, 5) ** -4)
    assert sir == pytest.approx(sig / interf)
    quiet = sir_at([3.0, 0.0], [0.0, 0.0], dep, [True, False], p,
                   primary_active=[False, False])
    assert quiet == math.inf


def test_sir_fading_mean():
    p = _params()
    dep = Deployment(primary_txs=[[10.0, 0.0]], primary_beams=[0.0],
                     secondary_txs=[[0.0, 0.0]], secondary_rxs=[[3.0, 0.0]])
    c = 1.0 * p.p1 * 3.0 ** 4 / (p.p2 * 7.0 ** 4)
    hits = [sir_at([3.0, 0.0], [0.0, 0.0], dep, [True], p, fading_seed=s) >= 1.0
            for s in range(4000)]
    # Rayleigh desired and interfering links: P(SIR >= 1) = 1 / (1 + c)
    assert np.mean(hits) == pytest.approx(1 / (1 + c), abs=0.025)
