"""Spatial model: Poisson point processes, Boolean rectangle blockages, LOS statistics
and directional-beam geometry.

Lengths are in metres and densities in 1/m^2 throughout.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .errors import NumericError, ParameterError

#: ``L(xi)`` fit of the optimal joint-unblocked axis length, highest power first.
PUBLISHED_AXIS_FIT = (2.051e8, -4.729e7, 3.847e6, -1.118e5, -1318.0, 176.0)
#: Blockage-factor interval (1/m) over which the published fit is monotone.
AXIS_FIT_RANGE = (0.0, 0.08)

ARCCOS_TOL = 1e-12


def make_rng(seed) -> np.random.Generator:
    """Return a PCG64 generator from an int, a SeedSequence or a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ParameterError("an explicit seed is required")
    return np.random.Generator(np.random.PCG64(seed))


def safe_arccos(x):
    """arccos with excursions of up to 1e-12 outside [-1, 1] clamped.

    Larger excursions signal a geometry bug and raise NumericError.
    """
    x = np.asarray(x, dtype=float)
    bad = np.abs(x) > 1.0 + ARCCOS_TOL
    if np.any(bad):
        raise NumericError(f"arccos argument out of range: {x[bad].ravel()[:3]}")
    out = np.arccos(np.clip(x, -1.0, 1.0))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Region:
    """Square observation window ``[-half_width, half_width]^2`` with a simulated border."""

    half_width: float
    guard_margin: float = 0.0

    def __post_init__(self):
        if not self.half_width > 0:
            raise ParameterError("half_width must be positive")
        if not self.guard_margin >= 0:
            raise ParameterError("guard_margin must be non-negative")

    @property
    def outer_half_width(self) -> float:
        return self.half_width + self.guard_margin

    @property
    def area(self) -> float:
        return (2.0 * self.half_width) ** 2

    @property
    def outer_area(self) -> float:
        return (2.0 * self.outer_half_width) ** 2

    def inside(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return np.all(np.abs(pts) <= self.half_width, axis=1)


@dataclass(frozen=True)
class BlockageModel:
    """Boolean model of rectangular blockages with fixed length and width.

    ``lambda_b = 0`` is allowed and means an unobstructed plane.
    """

    lambda_b: float
    d_len: float
    d_wid: float

    def __post_init__(self):
        if self.lambda_b < 0:
            raise ParameterError("lambda_b must be non-negative")
        if not (self.d_len > 0 and self.d_wid > 0):
            raise ParameterError("blockage length and width must be positive")

    @property
    def xi(self) -> float:
        """Blockage factor ``lambda_b * (d_len + d_wid)`` in 1/m."""
        return self.lambda_b * (self.d_len + self.d_wid)

    @classmethod
    def from_xi(cls, xi: float, d_len: float, d_wid: float) -> "BlockageModel":
        return cls(xi / (d_len + d_wid), d_len, d_wid)


@dataclass(frozen=True)
class Deployment:
    """One sampled topology. Arrays are read-only after construction.

    ``blockages`` rows are ``(cx, cy, length, width, azimuth)``.
    """

    primary_txs: np.ndarray
    primary_beams: np.ndarray
    secondary_txs: np.ndarray
    secondary_rxs: np.ndarray
    blockages: np.ndarray = field(default_factory=lambda: np.zeros((0, 5)))

    def __post_init__(self):
        for name in ("primary_txs", "primary_beams", "secondary_txs", "secondary_rxs", "blockages"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.secondary_txs.shape != self.secondary_rxs.shape:
            raise ParameterError("every secondary TX needs exactly one RX")
        if len(self.primary_beams) != len(self.primary_txs):
            raise ParameterError("one beam azimuth per primary TX")

    @property
    def frames(self) -> np.ndarray:
        return rect_frames(self.blockages)


def sample_ppp(density: float, region: Region, seed) -> np.ndarray:
    """Homogeneous PPP on the window including its guard border, as an ``(n, 2)`` array."""
    if density < 0:
        raise ParameterError("density must be non-negative")
    rng = make_rng(seed)
    h = region.outer_half_width
    n = rng.poisson(density * region.outer_area)
    return rng.uniform(-h, h, size=(n, 2))


def sample_ppp_disk(density: float, radius: float, rng: np.random.Generator) -> np.ndarray:
    n = rng.poisson(density * math.pi * radius * radius)
    r = radius * np.sqrt(rng.random(n))
    t = 2.0 * math.pi * rng.random(n)
    return np.column_stack((r * np.cos(t), r * np.sin(t)))


def sample_blockages(model: BlockageModel | None, region: Region, seed) -> np.ndarray:
    """Rectangle centres from a PPP, azimuths uniform on [0, pi)."""
    if model is None or model.lambda_b == 0:
        return np.zeros((0, 5))
    rng = make_rng(seed)
    reach = 0.5 * math.hypot(model.d_len, model.d_wid)
    grown = Region(region.outer_half_width + reach)
    centres = sample_ppp(model.lambda_b, grown, rng)
    n = len(centres)
    return np.column_stack((centres, np.full(n, model.d_len), np.full(n, model.d_wid),
                            rng.uniform(0.0, math.pi, n)))


def rect_frames(rects) -> np.ndarray:
    rects = np.asarray(rects, dtype=float).reshape(-1, 5)
    return np.column_stack((rects[:, 0], rects[:, 1], 0.5 * rects[:, 2], 0.5 * rects[:, 3],
                            np.cos(rects[:, 4]), np.sin(rects[:, 4])))


def points_in_blockages(points, blockages) -> np.ndarray:
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    return _kernels.points_in_frames(pts, rect_frames(blockages))


def is_blocked(p, q, blockages) -> bool:
    """True iff the closed segment ``pq`` touches any rectangle."""
    p = np.asarray(p, dtype=float).reshape(1, 2)
    q = np.asarray(q, dtype=float).reshape(1, 2)
    return bool(_kernels.segments_blocked_brute(p, q, rect_frames(blockages))[0])


def segments_blocked(p, q, blockages, cell: float | None = None) -> np.ndarray:
    """Vectorised ``is_blocked`` over paired endpoint arrays.

    With ``cell`` set, rectangles are bucketed on a grid of that pitch first.
    """
    p = np.ascontiguousarray(np.asarray(p, dtype=float).reshape(-1, 2))
    q = np.ascontiguousarray(np.asarray(q, dtype=float).reshape(-1, 2))
    p, q = np.broadcast_arrays(p, q)
    p = np.ascontiguousarray(p)
    q = np.ascontiguousarray(q)
    frames = rect_frames(blockages)
    if cell is None:
        return _kernels.segments_blocked_brute(p, q, frames)
    return _kernels.segments_blocked_grid(p, q, frames, float(cell))


def link_blocked_matrix(rx, tx, blockages, max_range=np.inf, cell: float = 25.0) -> np.ndarray:
    """Blocking flags for every receiver/transmitter pair; links beyond ``max_range`` count as blocked."""
    rx = np.ascontiguousarray(np.asarray(rx, dtype=float).reshape(-1, 2))
    tx = np.ascontiguousarray(np.asarray(tx, dtype=float).reshape(-1, 2))
    return _kernels.pair_matrix_blocked(rx, tx, rect_frames(blockages), float(cell),
                                        float(max_range))


def avg_los_distance(b: BlockageModel) -> float:
    """Mean LOS distance of the LOS-ball model; ``inf`` when there are no blockages."""
    if b.lambda_b == 0:
        return math.inf
    return (math.pi * math.sqrt(2.0 * math.exp(-b.lambda_b * b.d_len * b.d_wid))
            / (2.0 * b.lambda_b * (b.d_len + b.d_wid)))


def unblocked_prob(dist, b: BlockageModel):
    dist = np.asarray(dist, dtype=float)
    if np.any(dist < 0):
        raise ParameterError("distance must be non-negative")
    out = np.exp(-2.0 * b.xi * dist / math.pi)
    return out if out.ndim else float(out)


def joint_unblocked_prob(rt, rr, b: BlockageModel):
    """Joint probability that both links are unblocked, assuming independence."""
    rt = np.asarray(rt, dtype=float)
    rr = np.asarray(rr, dtype=float)
    if np.any(rt < 0) or np.any(rr < 0):
        raise ParameterError("distances must be non-negative")
    out = np.exp(-2.0 * b.xi * (rt + rr) / math.pi)
    return out if out.ndim else float(out)


def in_joint_unblocked_ellipse(primary, tx, rx, L: float):
    """Membership of ``primary`` in the ellipse with foci ``tx``/``rx`` and major axis ``L``."""
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    if L < np.hypot(*(tx - rx)):
        raise ParameterError("major axis shorter than the focal distance")
    pts = np.asarray(primary, dtype=float)
    s = np.hypot(*np.moveaxis(pts - tx, -1, 0)) + np.hypot(*np.moveaxis(pts - rx, -1, 0))
    out = s <= L
    return out if out.ndim else bool(out)


class AxisLength(NamedTuple):
    value: float
    in_fit_range: bool


def axis_length_from_blockage_factor(xi: float, coeffs=PUBLISHED_AXIS_FIT,
                                     fit_range=AXIS_FIT_RANGE) -> AxisLength:
    """Evaluate the quintic ``L(xi)`` fit (xi in 1/m, L in m) by Horner's rule."""
    value = 0.0
    for c in coeffs:
        value = value * xi + c
    ok = fit_range[0] <= xi <= fit_range[1]
    if not ok:
        warnings.warn(f"blockage factor {xi} outside the fitted range {fit_range}", stacklevel=2)
    return AxisLength(float(value), ok)


def interior_angle(nu, R, d):
    """Angle at the interferer between the directions to TX and RX.

    TX sits at the origin, RX at distance ``d`` along angle 0 and the interferer at
    distance ``R`` along angle ``nu``. Computed with ``atan2`` so that it stays
    accurate when the interferer is close to the RX.
    """
    nu = np.asarray(nu, dtype=float)
    out = np.arctan2(d * np.abs(np.sin(nu)), R - d * np.cos(nu))
    return out if out.ndim else float(out)


def common_interfering_prob(nu, R: float, d: float, omega: float):
    """Probability that a beam already covering the TX also covers the RX.

    Beam azimuths are uniform. For ``omega <= pi`` this is ``max(0, omega - psi) / omega``;
    wider beams add the wrap-around overlap so that ``omega = 2 pi`` gives 1.
    """
    if not (0 < omega <= 2 * math.pi):
        raise ParameterError("beamwidth must lie in (0, 2 pi]")
    if R <= 0 or d <= 0:
        raise ParameterError("R and d must be positive")
    psi = interior_angle(nu, R, d)
    overlap = np.maximum(omega - psi, 0.0) + np.maximum(omega - 2 * math.pi + psi, 0.0)
    out = np.minimum(overlap / omega, 1.0)
    return out if np.ndim(out) else float(out)


def beam_covers(src, azimuth, target, omega: float):
    """True where ``target`` lies inside the sector of width ``omega`` centred on ``azimuth``."""
    src = np.asarray(src, dtype=float)
    target = np.asarray(target, dtype=float)
    v = target - src
    ang = np.arctan2(v[..., 1], v[..., 0])
    off = np.abs((ang - azimuth + math.pi) % (2 * math.pi) - math.pi)
    return off <= 0.5 * omega + 1e-15


def drop_covering_blockages(blockages, points) -> np.ndarray:
    """Remove rectangles that contain any of ``points``."""
    rects = np.asarray(blockages, dtype=float).reshape(-1, 5)
    if len(rects) == 0:
        return rects
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    fr = rect_frames(rects)
    keep = np.ones(len(rects), dtype=bool)
    for x, y in pts:
        dx = x - fr[:, 0]
        dy = y - fr[:, 1]
        u = dx * fr[:, 4] + dy * fr[:, 5]
        v = -dx * fr[:, 5] + dy * fr[:, 4]
        keep &= ~((np.abs(u) <= fr[:, 2]) & (np.abs(v) <= fr[:, 3]))
    return rects[keep]


def _redraw_outside(points, region: Region, blockages, rng, max_rounds=200):
    pts = np.array(points, dtype=float)
    h = region.outer_half_width
    for _ in range(max_rounds):
        bad = points_in_blockages(pts, blockages)
        if not bad.any():
            return pts
        pts[bad] = rng.uniform(-h, h, size=(bad.sum(), 2))
    raise NumericError("could not place nodes outside blockages")


def sample_deployment(region: Region, lambda1: float, lambda2: float, d: float, seed,
                      blockage: BlockageModel | None = None) -> Deployment:
    """Draw primaries, secondary pairs, beam azimuths and blockages.

    Nodes are never placed inside a blockage; a node that lands in one is redrawn
    uniformly, which keeps the point counts Poisson.
    """
    rng = make_rng(seed)
    prim = sample_ppp(lambda1, region, rng)
    beams = rng.uniform(0.0, 2 * math.pi, len(prim))
    stx = sample_ppp(lambda2, region, rng)
    heading = rng.uniform(0.0, 2 * math.pi, len(stx))
    rects = sample_blockages(blockage, region, rng)
    if len(rects):
        prim = _redraw_outside(prim, region, rects, rng)
        for _ in range(200):
            srx = stx + d * np.column_stack((np.cos(heading), np.sin(heading)))
            bad = points_in_blockages(stx, rects) | points_in_blockages(srx, rects)
            if not bad.any():
                break
            h = region.outer_half_width
            stx[bad] = rng.uniform(-h, h, size=(bad.sum(), 2))
            heading[bad] = rng.uniform(0.0, 2 * math.pi, bad.sum())
        else:
            raise NumericError("could not place secondary pairs outside blockages")
    srx = stx + d * np.column_stack((np.cos(heading), np.sin(heading)))
    return Deployment(prim, beams, stx, srx, rects)
