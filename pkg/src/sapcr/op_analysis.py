"""Opportunistic probability (OP) of a secondary link given the empty-ball radius,
and the empty-ball radius implied by a sensed interference level.

The OP factors into a nearest-interferer term and an aggregate term for the primaries
outside the empty ball. The decoding target ``beta`` enters both terms through the
interference-to-signal scale ``beta * P1 * d^alpha / P2``; ``form="literal"`` instead
keeps ``beta`` out of the nearest term and raises the unit-``beta`` aggregate term to
the power ``beta^(2/alpha)``, which is only offered for comparison.

Full-ring contributions to the aggregate exponent are evaluated in closed form via
``int_a^b 2 pi y / (1 + y^alpha / c) dy = pi c^(2/alpha) [F(b^2 c^(-2/alpha)) - F(a^2 c^(-2/alpha))]``
with ``F(x) = int_0^x du / (1 + u^(alpha/2))``, so no truncation of infinite ranges is
needed; only the partial-ring (arccos) piece is integrated adaptively.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special

from .channel import NetworkParams, Regime
from .errors import DomainError, NumericError, ParameterError
from .geometry import common_interfering_prob, interior_angle, safe_arccos


@dataclass(frozen=True)
class NumericsConfig:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_subdivisions: int = 200
    # kept for configuration compatibility; full-ring tails are integrated in closed form
    infinite_cutoff_multiplier: float = 1e3
    root_bracket_growth: float = 2.0
    max_bracket_growths: int = 200

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ParameterError("tolerances must be positive")
        if self.root_bracket_growth <= 1:
            raise ParameterError("bracket growth factor must exceed 1")

    def halved(self) -> "NumericsConfig":
        return NumericsConfig(self.abs_tol / 2, self.rel_tol / 2, 2 * self.max_subdivisions,
                              self.infinite_cutoff_multiplier, self.root_bracket_growth,
                              self.max_bracket_growths)


DEFAULT_NUMERICS = NumericsConfig()


@dataclass(frozen=True)
class OpResult:
    value: float
    regime: Regime
    r_used: float
    l_used: float | None
    nearest_factor: float
    aggregate_factor: float
    quadrature_error_estimate: float
    metadata: dict = field(default_factory=dict, compare=False)


def _quad(f, a, b, cfg: NumericsConfig, points=None, **kw):
    if b <= a:
        return 0.0, 0.0
    pts = None
    if points is not None:
        pts = sorted(p for p in points if a < p < b)
        pts = pts or None
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
                                      limit=cfg.max_subdivisions, points=pts, **kw)
        except integrate.IntegrationWarning as exc:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, err = integrate.quad(f, a, b, epsabs=cfg.abs_tol, epsrel=cfg.rel_tol,
                                          limit=cfg.max_subdivisions, points=pts, **kw)
            if err > 1e-6 * max(1.0, abs(val)):
                raise NumericError(f"quadrature did not converge: {exc}", estimate=err) from exc
    return val, err


# ---------------------------------------------------------------------------
# rho-type integrals


def unit_integral_inf(alpha: float) -> float:
    """``int_0^inf du / (1 + u^(alpha/2))`` = (2 pi / alpha) / sin(2 pi / alpha)."""
    if not alpha > 2:
        raise ParameterError("integral diverges for alpha <= 2")
    x = 2 * math.pi / alpha
    return x / math.sin(x)


def unit_integral(t: float, alpha: float, cfg: NumericsConfig = DEFAULT_NUMERICS):
    """``F(t) = int_0^t du / (1 + u^(alpha/2))`` and its error estimate."""
    if not alpha > 2:
        raise ParameterError("integral diverges for alpha <= 2")
    if t <= 0:
        return 0.0, 0.0
    if math.isinf(t):
        return unit_integral_inf(alpha), 0.0
    a = alpha / 2
    if t <= 1:
        return _quad(lambda u: 1.0 / (1.0 + u ** a), 0.0, t, cfg)
    # complement on the reciprocal scale: int_t^inf = int_0^(1/t) v^(a-2) / (1 + v^a) dv
    tail, err = _quad(lambda v: 1.0 / (1.0 + v ** a), 0.0, 1.0 / t, cfg,
                      weight="alg", wvar=(a - 2.0, 0.0))
    return unit_integral_inf(alpha) - tail, err


def rho0(beta: float, t: float, alpha: float, cfg: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """``beta^(2/alpha) * int_0^t du / (1 + u^(alpha/2))``."""
    if beta < 0:
        raise ParameterError("beta must be non-negative")
    if beta == 0:
        return 0.0
    return beta ** (2 / alpha) * unit_integral(t, alpha, cfg)[0]


def rho(a: float, t: float, alpha: float, cfg: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """``a^(2/alpha) * int_(a^(-2/alpha))^t du / (1 + u^(alpha/2))``."""
    if not a > 0:
        raise ParameterError("a must be positive")
    lo = a ** (-2 / alpha)
    if t <= lo:
        return 0.0
    return a ** (2 / alpha) * (unit_integral(t, alpha, cfg)[0] - unit_integral(lo, alpha, cfg)[0])


# ---------------------------------------------------------------------------
# building blocks


def _scale(params: NetworkParams, beta: float) -> float:
    """``P1 d^alpha / P2`` times ``beta``: interference-to-signal scale at the RX."""
    return beta * params.p1 * params.d ** params.alpha / params.p2


def _link_success(nu, R: float, d: float, c: float, alpha: float):
    """``P2 / (P2 + beta P1 d^alpha D^(-alpha/2))`` for the nearest primary at angle ``nu``."""
    dist2 = R * R - 2.0 * d * R * np.cos(nu) + d * d
    if np.ndim(dist2) == 0:
        if dist2 <= 0.0:
            return 0.0
        return 1.0 / (1.0 + c * dist2 ** (-alpha / 2))
    out = np.zeros_like(dist2)
    pos = dist2 > 0
    out[pos] = 1.0 / (1.0 + c * dist2[pos] ** (-alpha / 2))
    return out


def _ring_fraction(y, R: float, d: float):
    """Angle of the ring of radius ``y`` around the RX lying outside the empty ball."""
    if y <= abs(R - d) or y > R + d:
        return 2 * math.pi if (y > R + d or R < d) else 0.0
    x = (R * R - d * d - y * y) / (2.0 * d * y)
    if abs(x) > 1.0 + 1e-12:
        safe_arccos(x)
    return 2.0 * math.acos(min(1.0, max(-1.0, x)))


def _full_ring(a: float, b: float, c: float, alpha: float, cfg: NumericsConfig):
    """``int_a^b 2 pi y / (1 + y^alpha / c) dy`` in closed form."""
    if b <= a:
        return 0.0, 0.0
    s = c ** (2 / alpha)
    hi, e1 = unit_integral(b * b / s if math.isfinite(b) else math.inf, alpha, cfg)
    lo, e2 = unit_integral(a * a / s, alpha, cfg)
    return math.pi * s * (hi - lo), math.pi * s * (e1 + e2)


def aggregate_exponent(R: float, d: float, c: float, alpha: float, upper: float,
                       cfg: NumericsConfig = DEFAULT_NUMERICS):
    """``int_[R-d]+^upper theta(y) y / (1 + y^alpha / c) dy`` per unit primary density.

    ``theta(y)`` is the part of the ring of radius ``y`` about the RX outside the
    empty ball of radius ``R`` about the TX.
    """
    lo = max(R - d, 0.0)
    a_mid, b_mid = abs(R - d), R + d
    total, err = 0.0, 0.0
    if R < d:
        v, e = _full_ring(lo, min(a_mid, upper), c, alpha, cfg)
        total += v
        err += e
    if upper > b_mid:
        v, e = _full_ring(b_mid, upper, c, alpha, cfg)
        total += v
        err += e
    top = min(b_mid, upper)
    if top > a_mid:
        # y = m - h cos(phi) smooths the square-root behaviour at both ring edges
        m, h = 0.5 * (top + a_mid), 0.5 * (top - a_mid)

        def f(phi):
            y = m - h * math.cos(phi)
            return _ring_fraction(y, R, d) * y / (1.0 + y ** alpha / c) * h * math.sin(phi)
        v, e = _quad(f, 0.0, math.pi, cfg)
        total += v
        err += e
    return total, err


def _nearest_uniform(R: float, d: float, c: float, alpha: float, hi: float,
                     cfg: NumericsConfig):
    """``(1/pi) int_0^hi`` of the nearest-link success probability."""
    if R == 0:
        return hi / math.pi / (1.0 + c * d ** (-alpha)), 0.0
    v, e = _quad(lambda nu: _link_success(nu, R, d, c, alpha), 0.0, hi, cfg)
    return v / math.pi, e / math.pi


def _psi_crossings(R: float, d: float, omega: float, hi: float):
    """Angles in (0, hi) where the interior angle crosses ``omega``."""
    grid = np.linspace(0.0, hi, 513)
    g = interior_angle(grid, R, d) - omega
    out = []
    for k in range(len(grid) - 1):
        if g[k] == 0.0:
            out.append(grid[k])
        elif g[k] * g[k + 1] < 0:
            out.append(optimize.brentq(lambda x: interior_angle(x, R, d) - omega,
                                       grid[k], grid[k + 1], xtol=1e-14))
    return [x for x in out if 0.0 < x < hi]


def _nearest_beamformed(R: float, d: float, c: float, alpha: float, omega: float, hi: float,
                        cfg: NumericsConfig):
    """``(1/pi) int_0^hi [(1 - p_c) + p_c * success] d nu``."""
    if R == 0:
        return hi / math.pi / (1.0 + c * d ** (-alpha)), 0.0

    def f(nu):
        pc = common_interfering_prob(nu, R, d, omega)
        return (1.0 - pc) + pc * _link_success(nu, R, d, c, alpha)

    v, e = _quad(f, 0.0, hi, cfg, points=_psi_crossings(R, d, omega, hi))
    return v / math.pi, e / math.pi


def exposure_angle(R: float, L: float, d: float) -> float:
    """Angle ``u`` at which the nearest primary leaves the joint-unblocked ellipse."""
    return safe_arccos((d * d + 2.0 * L * R - L * L) / (2.0 * d * R))


def printed_sector_angle(R: float, d: float, omega: float) -> float:
    """``arccos((R sin^2 w - |cos w| sqrt(d^2 - R^2 sin^2 w)) / d)``; nan when undefined."""
    s2 = math.sin(omega) ** 2
    rad = d * d - R * R * s2
    if rad < 0:
        return math.nan
    arg = (R * s2 - abs(math.cos(omega)) * math.sqrt(rad)) / d
    if abs(arg) > 1.0 + 1e-12:
        return math.nan
    return math.acos(max(-1.0, min(1.0, arg)))


# ---------------------------------------------------------------------------
# OP evaluation


def _check_form(form: str):
    if form not in ("appendix", "literal"):
        raise ParameterError(f"unknown OP form {form!r}")


def _op_general(R: float, L: float, upper: float, params: NetworkParams, beta: float,
                omega: float | None, form: str, cfg: NumericsConfig,
                regime: Regime) -> OpResult:
    _check_form(form)
    if R < 0:
        raise ParameterError("R must be non-negative")
    if beta < 0:
        raise ParameterError("beta must be non-negative")
    d, alpha = params.d, params.alpha
    meta = {"form": form, "upper_limit": upper}
    if d > upper:
        return OpResult(0.0, regime, R, None if math.isinf(L) else L, 0.0, 1.0, 0.0,
                        {**meta, "case": "no_los"})
    if beta == 0:
        return OpResult(1.0, regime, R, None if math.isinf(L) else L, 1.0, 1.0, 0.0, meta)

    thin = 1.0 if omega is None else omega / (2 * math.pi)
    c_near = _scale(params, beta) if form == "appendix" else _scale(params, 1.0)

    # nearest interferer
    if R <= L / 2 - d / 2:
        case, hi = 1, math.pi
    elif R <= L / 2 + d / 2:
        case, hi = 2, exposure_angle(R, L, d)
    else:
        case, hi = 3, 0.0
    meta["case"] = case
    if case == 3:
        near, near_err = 1.0, 0.0
    else:
        if omega is None:
            near, near_err = _nearest_uniform(R, d, c_near, alpha, hi, cfg)
        else:
            near, near_err = _nearest_beamformed(R, d, c_near, alpha, omega, hi, cfg)
        near += (math.pi - hi) / math.pi
    if case == 2:
        meta["u"] = hi
    if omega is not None and R > 0:
        nu_w = printed_sector_angle(R, d, omega)
        meta["nu_omega"] = nu_w
        if case == 2:
            meta["mu"] = min(nu_w, hi) if not math.isnan(nu_w) else hi

    # aggregate of the remaining primaries
    if params.lambda1 == 0:
        agg, agg_err = 1.0, 0.0
    else:
        if form == "appendix":
            expo, e = aggregate_exponent(R, d, _scale(params, beta), alpha, upper, cfg)
            expo *= params.lambda1 * thin
        else:
            expo, e = aggregate_exponent(R, d, _scale(params, 1.0), alpha, upper, cfg)
            expo *= params.lambda1 * thin * beta ** (2 / alpha)
        e *= params.lambda1 * thin * (1.0 if form == "appendix" else beta ** (2 / alpha))
        agg = math.exp(-expo)
        agg_err = agg * e
        meta["aggregate_exponent"] = expo
    near = min(max(near, 0.0), 1.0)
    value = near * agg
    return OpResult(value, regime, R, None if math.isinf(L) else L, near, agg,
                    near_err * agg + agg_err * near, meta)


def op_below6(R: float, params: NetworkParams, beta: float, form: str = "appendix",
              cfg: NumericsConfig = DEFAULT_NUMERICS) -> OpResult:
    """OP with an empty ball of radius ``R`` in an unobstructed plane."""
    return _op_general(R, math.inf, math.inf, params, beta, None, form, cfg, Regime.BELOW6)


def op_blockage(R: float, L: float, params: NetworkParams, beta: float, form: str = "appendix",
                cfg: NumericsConfig = DEFAULT_NUMERICS, r_l: float | None = None) -> OpResult:
    """OP with blockages: aggregate cut at the LOS distance, nearest term gated by the ellipse."""
    if L < params.d:
        raise ParameterError("axis length shorter than the pair distance")
    upper = params.r_los if r_l is None else r_l
    return _op_general(R, L, upper, params, beta, None, form, cfg, Regime.BLOCKAGE)


def op_mmw(R: float, L: float, params: NetworkParams, beta: float, form: str = "appendix",
           cfg: NumericsConfig = DEFAULT_NUMERICS, r_l: float | None = None) -> OpResult:
    """OP with blockages and primary beams of width ``params.omega``.

    The nearest primary hits the RX with the common interfering probability; the
    remaining primaries are thinned by ``omega / 2 pi``.
    """
    if L < params.d:
        raise ParameterError("axis length shorter than the pair distance")
    upper = params.r_los if r_l is None else r_l
    return _op_general(R, L, upper, params, beta, params.omega, form, cfg, Regime.MMW)


def op_at(R: float, params: NetworkParams, beta: float, form: str = "appendix",
          cfg: NumericsConfig = DEFAULT_NUMERICS) -> OpResult:
    """Dispatch on ``params.regime`` using the configured axis length."""
    if params.regime is Regime.BELOW6:
        return op_below6(R, params, beta, form, cfg)
    if params.regime is Regime.BLOCKAGE:
        return op_blockage(R, params.L, params, beta, form, cfg)
    return op_mmw(R, params.L, params, beta, form, cfg)


def op_from_interference(I: float, params: NetworkParams, beta: float, form: str = "appendix",
                         cfg: NumericsConfig = DEFAULT_NUMERICS) -> OpResult:
    """OP evaluated at the empty-ball radius implied by the sensed interference ``I``."""
    if params.lambda1 == 0 or I <= 0:
        R = math.inf
        if params.lambda1 == 0:
            return OpResult(1.0 if params.d <= params.r_los else 0.0, params.regime, R,
                            None, 1.0, 1.0, 0.0, {"form": form})
        raise ParameterError("sensed interference must be positive")
    return op_at(empty_ball_radius(I, params, cfg), params, beta, form, cfg)


def asymptotic_floor(params: NetworkParams, beta: float) -> float:
    """Below-6 OP as the empty ball shrinks to zero (large sensed interference)."""
    p1, p2, d, a = params.p1, params.p2, params.d, params.alpha
    expo = math.pi * params.lambda1 * (p1 * beta * d ** a / p2) ** (2 / a) * unit_integral_inf(a)
    return p2 * math.exp(-expo) / (p2 + p1 * beta)


def beta_placement_diagnostic(R: float, params: NetworkParams, beta: float,
                              cfg: NumericsConfig = DEFAULT_NUMERICS) -> dict:
    """Compare the two placements of ``beta`` in the OP product."""
    a = op_at(R, params, beta, "appendix", cfg)
    b = op_at(R, params, beta, "literal", cfg)
    return {"appendix": a.value, "literal": b.value, "difference": a.value - b.value,
            "nearest_difference": a.nearest_factor - b.nearest_factor,
            "aggregate_difference": a.aggregate_factor - b.aggregate_factor}


# ---------------------------------------------------------------------------
# empty-ball radius


def _density_factor(params: NetworkParams) -> float:
    """``2 pi lambda1`` thinned by the beam fraction in the mmW regime."""
    return params.beamwidth * params.lambda1


def empty_ball_residual(R: float, I: float, p1: float, k: float, alpha: float,
                        r_l: float = math.inf) -> float:
    """``(I/P1 + k R_L^(2-alpha)/(alpha-2)) R^alpha - k R^2/(alpha-2) - 1``.

    Written as ``(I/P1) R^alpha + k R^2 ((R/R_L)^(alpha-2) - 1)/(alpha-2) - 1`` so that
    it stays accurate as ``alpha -> 2``.
    """
    if math.isinf(r_l):
        ring = -k * R * R / (alpha - 2)
    else:
        ring = k * R * R * math.expm1((alpha - 2) * math.log(R / r_l)) / (alpha - 2)
    return (I / p1) * R ** alpha + ring - 1.0


def solve_empty_ball(I: float, p1: float, k: float, alpha: float, r_l: float = math.inf,
                     cfg: NumericsConfig = DEFAULT_NUMERICS) -> float:
    """Positive root of :func:`empty_ball_residual` by bracketed root finding."""
    if not I > 0:
        raise ParameterError("interference must be positive")
    if not alpha > 2:
        raise ParameterError("alpha must exceed 2")
    if not r_l > 0:
        raise ParameterError("LOS distance must be positive")

    def f(R):
        return empty_ball_residual(R, I, p1, k, alpha, r_l)

    lo, hi = 1e-6, 1.0
    grow = cfg.root_bracket_growth
    for _ in range(cfg.max_bracket_growths):
        flo, fhi = f(lo), f(hi)
        if flo < 0 < fhi:
            break
        if flo >= 0:
            lo /= grow
        if fhi <= 0:
            hi *= grow
    else:
        raise NumericError("could not bracket the empty-ball radius", estimate=(lo, hi))
    return optimize.brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def empty_ball_radius_below6(I: float, params: NetworkParams,
                             cfg: NumericsConfig = DEFAULT_NUMERICS) -> float:
    return solve_empty_ball(I, params.p1, 2 * math.pi * params.lambda1, params.alpha,
                            math.inf, cfg)


def empty_ball_radius_blockage(I: float, params: NetworkParams, r_l: float,
                               cfg: NumericsConfig = DEFAULT_NUMERICS) -> float:
    return solve_empty_ball(I, params.p1, 2 * math.pi * params.lambda1, params.alpha, r_l, cfg)


def empty_ball_radius_mmw(I: float, params: NetworkParams, r_l: float,
                          cfg: NumericsConfig = DEFAULT_NUMERICS) -> float:
    return solve_empty_ball(I, params.p1, params.omega * params.lambda1, params.alpha, r_l, cfg)


def empty_ball_radius(I: float, params: NetworkParams,
                      cfg: NumericsConfig = DEFAULT_NUMERICS) -> float:
    if params.regime is Regime.BELOW6:
        return empty_ball_radius_below6(I, params, cfg)
    if params.regime is Regime.BLOCKAGE:
        return empty_ball_radius_blockage(I, params, params.r_los, cfg)
    return empty_ball_radius_mmw(I, params, params.r_los, cfg)


def empty_ball_radius_alpha4(I: float, p1: float, k: float, r_l: float = math.inf) -> float:
    """Closed-form root at ``alpha = 4``; ``k = 2 pi lambda1`` (or ``omega lambda1``)."""
    if not I > 0:
        raise ParameterError("interference must be positive")
    h = 0.5 * k * p1
    a = I + (0.0 if math.isinf(r_l) else h / (r_l * r_l))
    return math.sqrt((h + math.sqrt(h * h + 4.0 * p1 * a)) / (2.0 * a))


def empty_ball_radius_alpha2(I: float, p1: float, k: float, r_l: float,
                             form: str = "exact") -> float:
    """Limit of the root as ``alpha -> 2+`` with a finite LOS distance.

    ``"exact"`` solves ``R^2 (I/P1 - k ln R_L + k ln R) = 1``; ``"printed"`` drops the
    ``k ln R`` term and needs ``I/P1 > k ln R_L``.
    """
    if not I > 0:
        raise ParameterError("interference must be positive")
    if not (r_l > 0 and math.isfinite(r_l)):
        raise ParameterError("a finite LOS distance is required")
    A = I / p1 - k * math.log(r_l)
    if form == "printed":
        if A <= 0:
            raise DomainError("I/P1 must exceed k ln(R_L) for the truncated limit")
        return A ** -0.5
    if form != "exact":
        raise ParameterError(f"unknown form {form!r}")
    if k == 0:
        if A <= 0:
            raise DomainError("no positive root without primaries when I/P1 <= 0")
        return A ** -0.5
    # with z = 2 / (k R^2): z + ln z = ln(2/k) + 2A/k, i.e. z = W(exp(rhs))
    rhs = math.log(2.0 / k) + 2.0 * A / k
    if rhs < 700:
        z = float(special.lambertw(math.exp(rhs)).real)
    else:
        z = rhs - math.log(rhs)
        for _ in range(50):
            step = (z + math.log(z) - rhs) / (1.0 + 1.0 / z)
            z -= step
            if abs(step) < 1e-16 * z:
                break
    return math.sqrt(2.0 / (k * z))
