"""Network parameters, path loss, Rayleigh fading and SIR evaluation on a Deployment."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NumericError, ParameterError
from .geometry import (BlockageModel, Deployment, axis_length_from_blockage_factor,
                       avg_los_distance, beam_covers, make_rng, segments_blocked)


class Regime(str, Enum):
    BELOW6 = "below6"
    BLOCKAGE = "blockage"
    MMW = "mmw"


@dataclass(frozen=True)
class NetworkParams:
    """Scalar model parameters in SI units (1/m^2, W, m, rad).

    ``axis_length`` overrides the published ``L(xi)`` fit when set. The default
    protection pair ``(gamma, tau)`` is loose because the closed-form primary outage
    is conservative: tighter caps are infeasible at the reference densities.
    """

    lambda1: float
    lambda2: float
    p1: float
    p2: float
    alpha: float
    d: float
    omega: float = 2 * math.pi
    gamma: float = 0.1
    tau: float = 0.999
    regime: Regime = Regime.BELOW6
    blockage: BlockageModel | None = None
    axis_length: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ParameterError("densities must be non-negative")
        if not (self.p1 > 0 and self.p2 > 0):
            raise ParameterError("powers must be positive")
        if not self.alpha > 2:
            raise ParameterError("path-loss exponent must exceed 2")
        if not self.d > 0:
            raise ParameterError("pair distance must be positive")
        if not 0 < self.omega <= 2 * math.pi + 1e-12:
            raise ParameterError("beamwidth must lie in (0, 2 pi]")
        if not self.gamma > 0:
            raise ParameterError("primary decoding threshold must be positive")
        if not 0 < self.tau < 1:
            raise ParameterError("outage cap must lie in (0, 1)")
        if self.regime is not Regime.BELOW6 and self.blockage is None:
            raise ParameterError(f"regime {self.regime.value} requires a blockage model")
        if self.axis_length is not None and not self.axis_length >= self.d:
            raise ParameterError("axis length must be at least the pair distance")

    def replace(self, **changes) -> "NetworkParams":
        return dataclasses.replace(self, **changes)

    @property
    def r_los(self) -> float:
        """Average LOS distance; ``inf`` below 6 GHz or without blockages."""
        if self.regime is Regime.BELOW6 or self.blockage is None:
            return math.inf
        return avg_los_distance(self.blockage)

    @property
    def L(self) -> float:
        """Joint-unblocked axis length; ``inf`` below 6 GHz or without blockages."""
        if self.regime is Regime.BELOW6:
            return math.inf
        if self.axis_length is not None:
            return float(self.axis_length)
        if self.blockage is None or self.blockage.lambda_b == 0:
            return math.inf
        return axis_length_from_blockage_factor(self.blockage.xi).value

    @property
    def beamwidth(self) -> float:
        """Effective primary beamwidth: only the mmW regime beamforms."""
        return self.omega if self.regime is Regime.MMW else 2 * math.pi

    @property
    def thinning(self) -> float:
        return self.beamwidth / (2 * math.pi)


def path_gain(dist, params: NetworkParams, r_l: float | None = None):
    """Power-law gain with a hard LOS cutoff at ``r_l`` outside the below-6 regime."""
    dist = np.asarray(dist, dtype=float)
    if np.any(dist <= 0):
        raise NumericError("path gain is singular at zero distance")
    g = dist ** (-params.alpha)
    if params.regime is not Regime.BELOW6:
        cut = params.r_los if r_l is None else r_l
        g = np.where(dist <= cut, g, 0.0)
    return g if g.ndim else float(g)


def draw_fading(shape, rng: np.random.Generator) -> np.ndarray:
    """Unit-mean exponential power fading."""
    return rng.exponential(1.0, size=shape)


def _fading(n, fading_seed):
    if fading_seed is None:
        return np.ones(n)
    return draw_fading(n, make_rng(fading_seed))


def _visible_primaries(point, deployment: Deployment, params: NetworkParams) -> np.ndarray:
    prim = deployment.primary_txs
    vis = np.ones(len(prim), dtype=bool)
    if len(prim) == 0:
        return vis
    if params.regime is Regime.MMW:
        vis &= beam_covers(prim, deployment.primary_beams, np.asarray(point, float),
                           params.omega)
    if params.regime is not Regime.BELOW6 and len(deployment.blockages):
        vis &= ~segments_blocked(prim, np.asarray(point, float), deployment.blockages)
    return vis


def sense_interference(tx, deployment: Deployment, params: NetworkParams, fading_seed=None,
                       mode: str = "averaged") -> float:
    """Aggregate primary power seen at ``tx`` while all secondaries are silent.

    ``mode="averaged"`` models a sensing window long enough to average out fast
    fading; ``"instantaneous"`` applies one fading draw per primary link. Links are
    cut by exact blockage geometry and, in the mmW regime, by beam sectors.
    """
    if mode not in ("averaged", "instantaneous"):
        raise ParameterError(f"unknown sensing mode {mode!r}")
    prim = deployment.primary_txs
    if len(prim) == 0:
        return 0.0
    tx = np.asarray(tx, dtype=float)
    dist = np.hypot(*(prim - tx).T)
    vis = _visible_primaries(tx, deployment, params) & (dist > 0)
    h = _fading(len(prim), fading_seed) if mode == "instantaneous" else np.ones(len(prim))
    return float(np.sum(params.p1 * h[vis] * dist[vis] ** (-params.alpha)))


def sir_at(rx, serving_tx, deployment: Deployment, active_flags, params: NetworkParams,
           fading_seed=None, serving_power: float | None = None, primary_active=None) -> float:
    """SIR at ``rx`` from ``serving_tx`` against active primaries and secondaries.

    ``active_flags`` marks which secondary TXs transmit; ``primary_active`` defaults to
    all primaries. The transmitter located at ``serving_tx`` is never its own
    interferer. Fading draws: index 0 is the desired link, then primaries, then
    secondaries. ``fading_seed=None`` pins every gain to 1. Returns ``inf`` when no
    interference reaches ``rx``.
    """
    rx = np.asarray(rx, dtype=float)
    serving_tx = np.asarray(serving_tx, dtype=float)
    prim = deployment.primary_txs
    sec = deployment.secondary_txs
    active = np.asarray(active_flags, dtype=bool).reshape(-1)
    if len(active) != len(sec):
        raise ParameterError("one activity flag per secondary TX")
    p_act = (np.ones(len(prim), bool) if primary_active is None
             else np.asarray(primary_active, dtype=bool).reshape(-1))
    h = _fading(1 + len(prim) + len(sec), fading_seed)
    power = params.p2 if serving_power is None else serving_power
    signal = power * h[0] * float(np.hypot(*(rx - serving_tx))) ** (-params.alpha)

    p_use = p_act & _visible_primaries(rx, deployment, params)
    p_use &= np.any(prim != serving_tx, axis=1) if len(prim) else p_use
    s_use = active & (np.any(sec != serving_tx, axis=1) if len(sec) else active)
    if params.regime is not Regime.BELOW6 and len(deployment.blockages) and s_use.any():
        s_use[s_use] &= ~segments_blocked(sec[s_use], rx, deployment.blockages)

    interference = 0.0
    if p_use.any():
        dp = np.hypot(*(prim[p_use] - rx).T)
        interference += float(np.sum(params.p1 * h[1:1 + len(prim)][p_use] * dp ** (-params.alpha)))
    if s_use.any():
        ds = np.hypot(*(sec[s_use] - rx).T)
        interference += float(np.sum(params.p2 * h[1 + len(prim):][s_use] * ds ** (-params.alpha)))
    if interference == 0.0:
        return math.inf
    return signal / interference
