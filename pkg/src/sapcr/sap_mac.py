"""Sense-and-predict access policy: linear OP-to-access mapping, coverage, primary
protection and the ASE-optimal decoding target."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .channel import NetworkParams, Regime
from .errors import DomainError, InfeasibleProtectionError, NumericError, ParameterError
from .op_analysis import (DEFAULT_NUMERICS, NumericsConfig, aggregate_exponent, op_at, rho,
                          rho0, unit_integral)

log = logging.getLogger(__name__)

OUTER_REL_TOL = 1e-9


@dataclass(frozen=True)
class SapPolicy:
    """Optimised policy. ``c_star > 1`` is kept as computed and flagged infeasible;
    the applied scale is then clamped to 1."""

    beta: float
    c_star: float
    beta_min: float
    s: float
    s_tilde: float | None
    regime: Regime
    expected_op: float = math.nan
    beta_root: float = math.nan
    trace: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError("beta must be positive")
        if self.beta < self.beta_min * (1 - 1e-12):
            raise ParameterError("beta below the minimum decoding target")

    @property
    def theta(self) -> float:
        """Access threshold; always equal to the decoding target."""
        return self.beta

    @property
    def feasible(self) -> bool:
        return self.c_star <= 1.0

    @property
    def scale(self) -> float:
        return min(self.c_star, 1.0)


@dataclass(frozen=True)
class AseResult:
    ase: float
    beta_used: float
    constraint_outage: float
    feasible: bool
    c_star: float = math.nan


def _upper(params: NetworkParams) -> float:
    return math.inf if params.regime is Regime.BELOW6 else params.r_los


def c_star(params: NetworkParams, beta: float, expected_op: float) -> float:
    """Scale of the optimal linear map from OP to access probability."""
    if not 0 < expected_op <= 1 + 1e-12:
        raise DomainError("expected OP must lie in (0, 1]")
    if params.lambda2 == 0:
        return math.inf
    val = 1.0 / (math.pi * params.lambda2 * params.d ** 2
                 * rho0(beta, _upper(params), params.alpha) * expected_op)
    if val > 1:
        log.info("c* = %.4g exceeds 1: linear mapping is outside its optimality regime", val)
    return val


def access_probability(op_value, policy: SapPolicy):
    op_value = np.asarray(op_value, dtype=float)
    if np.any((op_value < 0) | (op_value > 1 + 1e-12)):
        raise ParameterError("OP must lie in [0, 1]")
    out = np.minimum(1.0, policy.scale * op_value)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# expectations over the nearest-primary distance


def _nearest_law(params: NetworkParams):
    """``(k, t_max)``: the nearest distance ``r`` has ``t = k r^2`` exponential, truncated at ``t_max``."""
    k = 0.5 * params.beamwidth * params.lambda1
    r_l = _upper(params)
    return k, (k * r_l * r_l if math.isfinite(r_l) else math.inf)


def _breakpoints(params: NetworkParams) -> list[float]:
    pts = [params.d]
    L = params.L
    if math.isfinite(L):
        pts += [L / 2 - params.d / 2, L / 2 + params.d / 2]
    return [p for p in pts if p > 0]


def nearest_moments(params: NetworkParams, beta: float, powers=(1, 2),
                    cfg: NumericsConfig = DEFAULT_NUMERICS) -> tuple[float, ...]:
    """``E[OP(R)^p]`` for each ``p`` with ``R`` the nearest-primary distance.

    Outside the below-6 regime ``R`` is conditioned on lying within the LOS distance.
    """
    if params.lambda1 == 0:
        return tuple(1.0 for _ in powers)
    k, t_max = _nearest_law(params)
    cache = {}

    def op_t(t):
        if t not in cache:
            cache[t] = op_at(math.sqrt(t / k), params, beta, cfg=cfg).value
        return cache[t]

    pts = sorted(k * r * r for r in _breakpoints(params))
    norm = -math.expm1(-t_max) if math.isfinite(t_max) else 1.0
    out = []
    for p in powers:
        def f(t):
            return op_t(t) ** p * math.exp(-t)
        if math.isfinite(t_max):
            v, _ = integrate.quad(f, 0.0, t_max, points=[x for x in pts if x < t_max] or None,
                                  epsabs=1e-12, epsrel=OUTER_REL_TOL, limit=200)
        else:
            cut = max(60.0, 2 * max(pts, default=0.0))
            v1, _ = integrate.quad(f, 0.0, cut, points=[x for x in pts if x < cut] or None,
                                   epsabs=1e-12, epsrel=OUTER_REL_TOL, limit=200)
            v2, _ = integrate.quad(f, cut, math.inf, epsabs=1e-14, epsrel=OUTER_REL_TOL)
            v = v1 + v2
        out.append(v / norm)
    return tuple(out)


def expected_op(params: NetworkParams, beta: float, cfg: NumericsConfig = DEFAULT_NUMERICS) -> float:
    if not beta > 0:
        raise ParameterError("beta must be positive")
    return nearest_moments(params, beta, (1,), cfg)[0]


def secondary_coverage(params: NetworkParams, beta: float, R: float,
                       c_value: float | None = None,
                       cfg: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """Coverage with thinned secondary interferers: ``OP * exp(-min(1, 1/c*))``.

    With ``c* <= 1`` the secondary factor is exactly ``exp(-1)``.
    """
    if c_value is None:
        c_value = c_star(params, beta, expected_op(params, beta, cfg))
    return op_at(R, params, beta, cfg=cfg).value * math.exp(-min(1.0, 1.0 / c_value))


# ---------------------------------------------------------------------------
# primary protection


def primary_outage(params: NetworkParams, beta: float) -> float:
    """Primary outage probability with the secondary network at its optimal density."""
    if not beta > 0:
        raise ParameterError("beta must be positive")
    a, t = params.alpha, _upper(params)
    q1 = params.p1 ** (2 / a)
    q2 = params.p2 ** (2 / a)
    g = params.gamma
    lam1 = params.lambda1
    sec = rho0(g, t, a) * q1 / (math.pi * params.d ** 2 * rho0(beta, t, a))
    den = sec + lam1 * q2 * (rho(g, t, a) + 1.0)
    return 1.0 - lam1 * q2 / den


def beta_min(params: NetworkParams, variant: str = "inverse") -> float:
    """Smallest decoding target keeping the primary outage at or below ``tau``.

    ``"inverse"`` is the exact preimage of :func:`primary_outage` at ``tau``;
    ``"printed"`` is the alternative closed form offered for the blockage regimes,
    kept for comparison.
    """
    a, t, tau, g = params.alpha, _upper(params), params.tau, params.gamma
    r = rho(g, t, a)
    bracket = tau + r * tau - r
    if bracket <= 0:
        raise InfeasibleProtectionError(
            f"primary outage exceeds tau={tau} for every beta (bracket {bracket:.3g})")
    q1 = params.p1 ** (2 / a)
    q2 = params.p2 ** (2 / a)
    if params.lambda1 == 0:
        return 0.0
    if variant == "inverse":
        F = unit_integral(t, a)[0]
        val = (q1 * rho0(g, t, a) * (1 - tau)
               / (math.pi * params.d ** 2 * F * params.lambda1 * q2 * bracket))
    elif variant == "printed":
        val = (math.pi * params.d ** 2 * params.lambda1 * q2 * bracket
               / (q1 * g ** (2 / a) * (1 - tau)))
    else:
        raise ParameterError(f"unknown variant {variant!r}")
    return val ** (a / 2)


# ---------------------------------------------------------------------------
# ASE and its optimisation


def mean_value_constant(params: NetworkParams, beta: float,
                        cfg: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """Radius ``s`` with ``OP(s) = E[OP^2] / E[OP]`` (first crossing from the origin)."""
    m1, m2 = nearest_moments(params, beta, (1, 2), cfg)
    if m1 <= 0:
        raise NumericError("expected OP vanished")
    target = m2 / m1
    r_hi = _upper(params)
    if not math.isfinite(r_hi):
        r_hi = 10.0 / math.sqrt(max(params.lambda1, 1e-30))

    def g(r):
        return op_at(r, params, beta, cfg=cfg).value - target

    grid = np.concatenate(([0.0], np.geomspace(params.d * 1e-3, r_hi, 200)))
    vals = [g(r) for r in grid]
    if abs(vals[0]) < 1e-14:
        return 0.0
    for k in range(len(grid) - 1):
        if vals[k] == 0:
            return float(grid[k])
        if vals[k] * vals[k + 1] < 0:
            return optimize.brentq(g, grid[k], grid[k + 1], xtol=1e-12, rtol=1e-12)
    raise NumericError("OP never reaches its weighted mean on the search range",
                       estimate=target)


def interference_constant(params: NetworkParams, s: float,
                          cfg: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """Aggregate exponent at ``beta = 1`` for an empty ball of radius ``s``."""
    c = params.p1 * params.d ** params.alpha / params.p2
    val, _ = aggregate_exponent(s, params.d, c, params.alpha, _upper(params), cfg)
    return params.lambda1 * params.thinning * val


def stationarity(beta, C: float, alpha: float):
    """Derivative condition of the reduced ASE objective (zero at the interior optimum)."""
    beta = np.asarray(beta, dtype=float)
    lg = np.log1p(beta)
    return -2.0 * C * beta ** (2 / alpha) * lg + alpha * beta / (1 + beta) - 2.0 * lg


def reduced_objective(beta, C: float, alpha: float):
    """``ln(1+beta) beta^(-2/alpha) exp(-C beta^(2/alpha))``."""
    beta = np.asarray(beta, dtype=float)
    return np.log1p(beta) * beta ** (-2 / alpha) * np.exp(-C * beta ** (2 / alpha))


def solve_stationarity(C: float, alpha: float) -> float:
    lo, hi = 1e-9, 1.0
    while stationarity(hi, C, alpha) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise NumericError("optimal decoding target not bracketed")
    return optimize.brentq(lambda b: float(stationarity(b, C, alpha)), lo, hi, xtol=1e-14,
                           rtol=1e-14)


def high_op_limit_beta(alpha: float) -> float:
    """Root of ``beta / ((1 + beta) ln(1 + beta)) = 2 / alpha``."""
    return solve_stationarity(0.0, alpha)


def reduced_ase_curve(params: NetworkParams, beta_grid, s: float | None = None,
                      cfg: NumericsConfig = DEFAULT_NUMERICS) -> np.ndarray:
    """The reduced objective the optimiser differentiates, on a grid of targets.

    With ``s`` given the interference constant is frozen at that radius; otherwise
    the mean-value radius is recomputed at every grid point.
    """
    grid = np.asarray(beta_grid, dtype=float)
    if params.lambda1 * params.thinning == 0:
        return reduced_objective(grid, 0.0, params.alpha)
    out = np.empty_like(grid)
    for i, b in enumerate(grid):
        r = s if s is not None else mean_value_constant(params, float(b), cfg)
        out[i] = reduced_objective(b, interference_constant(params, r, cfg), params.alpha)
    return out


def optimal_beta(params: NetworkParams, damping: float = 0.5, max_iter: int = 100,
                 tol: float = 1e-6, cfg: NumericsConfig = DEFAULT_NUMERICS) -> SapPolicy:
    """ASE-optimal decoding target ``max(beta_root, beta_min)``.

    ``beta_root`` solves the stationarity condition with the interference constant
    evaluated at the mean-value radius ``s``; ``s`` and ``beta`` are iterated to a
    damped fixed point.
    """
    bmin = beta_min(params)
    lam_eff = params.lambda1 * params.thinning
    if lam_eff == 0:
        b = high_op_limit_beta(params.alpha)
        s = math.inf
        trace = ((s, b),)
    else:
        s = 0.5 / math.sqrt(lam_eff)
        if math.isfinite(_upper(params)):
            s = min(s, 0.5 * _upper(params))
        b_prev = None
        trace = []
        for _ in range(max_iter):
            b = solve_stationarity(interference_constant(params, s, cfg), params.alpha)
            trace.append((s, b))
            if b_prev is not None and abs(b - b_prev) / b < tol:
                break
            b_prev = b
            s = (1 - damping) * s + damping * mean_value_constant(params, b, cfg)
        else:
            raise NumericError("beta/s fixed point did not converge", trace=tuple(trace))
        trace = tuple(trace)
    beta = max(b, bmin)
    m1 = expected_op(params, beta, cfg)
    cs = c_star(params, beta, m1)
    s_below = s if params.regime is Regime.BELOW6 else math.nan
    s_tilde = None if params.regime is Regime.BELOW6 else s
    return SapPolicy(beta, cs, bmin, s_below, s_tilde, params.regime, m1, b, trace)


def ase(params: NetworkParams, beta: float, cfg: NumericsConfig = DEFAULT_NUMERICS) -> AseResult:
    """Area spectral efficiency in nats/s/Hz/m^2 under the optimal linear mapping."""
    if not beta > 0:
        raise ParameterError("beta must be positive")
    m1, m2 = nearest_moments(params, beta, (1, 2), cfg)
    cs = c_star(params, beta, m1) if m1 > 0 else math.inf
    c = min(cs, 1.0)
    sec = math.exp(-min(1.0, 1.0 / cs)) if cs > 0 else 1.0
    value = sec * math.log1p(beta) * c * params.lambda2 * m2
    out = primary_outage(params, beta)
    return AseResult(value, beta, out, out <= params.tau, cs)
