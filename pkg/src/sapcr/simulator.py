"""Monte Carlo oracle: typical-pair conditional OP, full-network slot simulation with
several MACs under common random numbers, hidden/exposed-node census and the
axis-length fitting procedure.

Work is split into fixed chunks (typical-pair samples) or topologies, each seeded by a
child of one ``SeedSequence``; results are therefore identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import sparse
from scipy.interpolate import PchipInterpolator
from scipy.spatial import cKDTree
from statsmodels.stats.proportion import proportion_confint

from . import _kernels
from .channel import NetworkParams, Regime, _visible_primaries, sense_interference, sir_at
from .errors import NumericError, ParameterError
from .geometry import (PUBLISHED_AXIS_FIT, BlockageModel, Region, _redraw_outside,
                       link_blocked_matrix, points_in_blockages, rect_frames,
                       sample_blockages, sample_ppp, segments_blocked)
from .op_analysis import empty_ball_radius, op_at, op_blockage, op_from_interference
from .sap_mac import SapPolicy, c_star, expected_op

CHUNK = 2000


class MacKind(str, Enum):
    SAP = "sap"
    NO_PREDICTION = "no_prediction"
    TX_THRESHOLD = "tx_threshold"
    RX_GENIE = "rx_genie"
    SAP_BELOW6_OP = "sap_below6_op"


class Mapping(str, Enum):
    LINEAR = "linear"
    STEP = "step"
    QUADRATIC = "quadratic"


def wilson_interval(hits, n, alpha: float = 0.05):
    """Wilson score interval, elementwise; empty bins give ``(nan, nan)``."""
    hits = np.asarray(hits, dtype=float)
    n = np.asarray(n, dtype=float)
    safe = np.maximum(n, 1)
    lo, hi = proportion_confint(hits, safe, alpha=alpha, method="wilson")
    lo = np.where(n > 0, lo, np.nan)
    hi = np.where(n > 0, hi, np.nan)
    return lo, hi


def mean_ci(samples, z: float = 1.96):
    """Sample mean and normal-approximation half width."""
    x = np.asarray(samples, dtype=float)
    if len(x) < 2:
        return float(x.mean()) if len(x) else math.nan, math.nan
    return float(x.mean()), float(z * x.std(ddof=1) / math.sqrt(len(x)))


def _map(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# typical pair sampling


def default_radius(params: NetworkParams, tail: float = 2e-3) -> float:
    """Disk radius around the typical TX beyond which primaries are ignored.

    Chosen so the mean interference beyond it is ``tail`` times the nearest-primary
    scale; outside the below-6 regime the exact blocking makes far links LOS with
    probability below ``exp(-6)``.
    """
    lam = params.lambda1 * params.thinning
    if lam == 0:
        return 10.0 * params.d
    r0 = 1.0 / math.sqrt(math.pi * lam)
    a = params.alpha
    r = r0 * (tail * (a - 2) / 2) ** (-1 / (a - 2))
    r = min(r, 60.0 * r0)
    if params.regime is not Regime.BELOW6 and params.blockage.lambda_b > 0:
        r = min(r, 3 * math.pi / params.blockage.xi)
    return max(r, 4.0 * params.d)


@dataclass(frozen=True)
class TypicalPairSamples:
    """Per-sample sensed interference at the TX and SIR at the RX (secondaries silent)."""

    interference: np.ndarray
    rx_sir: np.ndarray
    nearest_distance: np.ndarray
    radius: float
    seed: int


def _place_outside(px, py, poff, frames, roff, radius, rng):
    for _ in range(200):
        bad = _kernels.points_in_frames_segmented(px, py, poff, frames, roff)
        nb = int(bad.sum())
        if nb == 0:
            return px, py
        r = radius * np.sqrt(rng.random(nb))
        t = 2 * math.pi * rng.random(nb)
        px[bad] = r * np.cos(t)
        py[bad] = r * np.sin(t)
    raise NumericError("could not place primaries outside blockages")


def _typical_chunk(task):
    """Sample ``n`` typical pairs: TX at the origin, RX at ``(d, 0)``."""
    params, n, seq, radius, sensing, keep, r_min = task
    rng = np.random.Generator(np.random.PCG64(seq))
    a, d = params.alpha, params.d
    # with r_min set, one primary sits at exactly r_min and the rest form a PPP outside it
    counts = rng.poisson(params.lambda1 * math.pi * (radius * radius - r_min * r_min), size=n)
    if r_min > 0:
        counts = counts + 1
    total = int(counts.sum())
    poff = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    r = np.sqrt(r_min * r_min + (radius * radius - r_min * r_min) * rng.random(total))
    if r_min > 0:
        r[poff[:-1]] = r_min
    t = 2 * math.pi * rng.random(total)
    px = r * np.cos(t)
    py = r * np.sin(t)
    beams = rng.uniform(0.0, 2 * math.pi, total)
    idx = np.repeat(np.arange(n), counts)
    vis_tx = np.ones(total, bool)
    vis_rx = np.ones(total, bool)

    if params.regime is not Regime.BELOW6 and params.blockage.lambda_b > 0:
        b = params.blockage
        reach = 0.5 * math.hypot(b.d_len, b.d_wid)
        rb = radius + reach
        nr = rng.poisson(b.lambda_b * math.pi * rb * rb, size=n)
        tr = int(nr.sum())
        rr = rb * np.sqrt(rng.random(tr))
        tt = 2 * math.pi * rng.random(tr)
        rects = np.column_stack((rr * np.cos(tt), rr * np.sin(tt), np.full(tr, b.d_len),
                                 np.full(tr, b.d_wid), rng.uniform(0, math.pi, tr)))
        frames = rect_frames(rects)
        # rectangles covering the pair's own nodes are removed
        keep_r = np.ones(tr, bool)
        for x0 in (0.0, d):
            dx = x0 - frames[:, 0]
            dy = -frames[:, 1]
            u = dx * frames[:, 4] + dy * frames[:, 5]
            v = -dx * frames[:, 5] + dy * frames[:, 4]
            keep_r &= ~((np.abs(u) <= frames[:, 2]) & (np.abs(v) <= frames[:, 3]))
        owner = np.repeat(np.arange(n), nr)[keep_r]
        frames = np.ascontiguousarray(frames[keep_r])
        roff = np.concatenate(([0], np.cumsum(np.bincount(owner, minlength=n)))).astype(np.int64)
        px, py = _place_outside(px, py, poff, frames, roff, radius, rng)
        blk_tx, blk_rx = _kernels.typical_pair_blocking(px, py, poff, frames, roff, d)
        vis_tx &= ~blk_tx
        vis_rx &= ~blk_rx

    dist_tx = np.hypot(px, py)
    dist_rx = np.hypot(px - d, py)
    if params.regime is Regime.MMW:
        half = 0.5 * params.omega
        off_tx = np.abs((np.arctan2(-py, -px) - beams + math.pi) % (2 * math.pi) - math.pi)
        off_rx = np.abs((np.arctan2(-py, d - px) - beams + math.pi) % (2 * math.pi) - math.pi)
        vis_tx &= off_tx <= half
        vis_rx &= off_rx <= half

    h_sense = rng.exponential(size=total) if sensing == "instantaneous" else np.ones(total)
    h_rx = rng.exponential(size=total)
    h0 = rng.exponential(size=n)
    p1 = params.p1
    with np.errstate(divide="ignore"):
        I_tx = np.bincount(idx, p1 * h_sense * dist_tx ** (-a) * vis_tx, minlength=n)
        I_rx = np.bincount(idx, p1 * h_rx * dist_rx ** (-a) * vis_rx, minlength=n)
        sir = np.where(I_rx > 0, params.p2 * h0 * d ** (-a) / np.where(I_rx > 0, I_rx, 1.0),
                       np.inf)
    nearest = np.full(n, np.inf)
    np.minimum.at(nearest, idx, dist_tx)
    out = {"I": I_tx, "sir": sir, "nearest": nearest}
    if keep:
        out.update(idx=idx, dist_tx=dist_tx, vis_tx=vis_tx, vis_rx=vis_rx, beams=beams,
                   px=px, py=py)
    return out


def _chunk_tasks(params, n_samples, seed, radius, sensing, keep, r_min=0.0):
    n_chunks = max(1, math.ceil(n_samples / CHUNK))
    seqs = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [CHUNK] * (n_chunks - 1) + [n_samples - CHUNK * (n_chunks - 1)]
    return [(params, s, q, radius, sensing, keep, r_min) for s, q in zip(sizes, seqs)]


def sample_typical_pairs(params: NetworkParams, n_samples: int, seed: int,
                         radius: float | None = None, sensing: str = "averaged",
                         workers: int = 1, nearest: float | None = None) -> TypicalPairSamples:
    """Draw independent typical-pair scenes.

    ``nearest`` conditions on the empty-ball radius: one primary is placed at that
    distance from the TX (uniform bearing) and no other primary lies closer. This is
    how the rare high-interference tail is reached.

    ``sensing="averaged"`` measures the fading-averaged interference at the TX (a
    sensing window long enough to average out fast fading); ``"instantaneous"`` uses
    one fading draw per link.
    """
    if n_samples < 1:
        raise ParameterError("n_samples must be positive")
    if sensing not in ("averaged", "instantaneous"):
        raise ParameterError(f"unknown sensing mode {sensing!r}")
    radius = default_radius(params) if radius is None else radius
    r_min = 0.0 if nearest is None else float(nearest)
    if not 0 <= r_min < radius:
        raise ParameterError("nearest distance must lie inside the sampling disk")
    parts = _map(_typical_chunk,
                 _chunk_tasks(params, n_samples, seed, radius, sensing, False, r_min), workers)
    return TypicalPairSamples(np.concatenate([p["I"] for p in parts]),
                              np.concatenate([p["sir"] for p in parts]),
                              np.concatenate([p["nearest"] for p in parts]), radius, seed)


@dataclass(frozen=True)
class ConditionalOpTable:
    """Empirical ``Pr[SIR_RX >= beta | I in bin]`` over log-spaced interference bins."""

    beta: float
    edges: np.ndarray
    centers: np.ndarray
    counts: np.ndarray
    hits: np.ndarray
    prob: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    underfilled: np.ndarray
    n_total: int
    n_binned: int
    overall_hits: int

    @property
    def overall_prob(self) -> float:
        return self.overall_hits / self.n_total


def bin_conditional(samples: TypicalPairSamples, beta: float, bins: int = 40,
                    min_count: int = 100, edges=None) -> ConditionalOpTable:
    I = samples.interference
    pos = I > 0
    if edges is None:
        lo, hi = np.percentile(I[pos], [1, 99])
        edges = np.geomspace(lo, hi, bins + 1)
    edges = np.asarray(edges, float)
    which = np.searchsorted(edges, I, side="right") - 1
    inside = pos & (which >= 0) & (which < len(edges) - 1) & (I <= edges[-1])
    which = np.where(inside, np.minimum(which, len(edges) - 2), 0)
    nb = len(edges) - 1
    hit = samples.rx_sir >= beta
    counts = np.bincount(which[inside], minlength=nb)
    hits = np.bincount(which[inside], weights=hit[inside], minlength=nb)
    logsum = np.bincount(which[inside], weights=np.log(I[inside]), minlength=nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        centers = np.where(counts > 0, np.exp(logsum / np.maximum(counts, 1)),
                           np.sqrt(edges[:-1] * edges[1:]))
        prob = np.where(counts > 0, hits / np.maximum(counts, 1), np.nan)
    lo, hi = wilson_interval(hits, counts)
    return ConditionalOpTable(float(beta), edges, centers, counts, hits, prob, lo, hi,
                              counts < min_count, len(I), int(counts.sum()), int(hit.sum()))


def conditional_op_oracle(params: NetworkParams, beta, n_samples: int, bins: int = 40,
                          seed: int = 0, radius: float | None = None,
                          sensing: str = "averaged", workers: int = 1, min_count: int = 100):
    """Conditional OP by simulation; a sequence of ``beta`` reuses the same scenes."""
    samples = sample_typical_pairs(params, n_samples, seed, radius, sensing, workers)
    if np.ndim(beta) == 0:
        return bin_conditional(samples, float(beta), bins, min_count)
    return [bin_conditional(samples, float(b), bins, min_count) for b in beta]


def analytic_on_bins(table: ConditionalOpTable, params: NetworkParams, form: str = "appendix"):
    """Analytical OP at each bin's log-mean interference."""
    return np.array([op_from_interference(float(I), params, table.beta, form).value
                     for I in table.centers])


def naive_op(I, params: NetworkParams, beta: float):
    """Coverage predicted as if the RX saw the TX's interference (Rayleigh desired link)."""
    I = np.asarray(I, dtype=float)
    return np.exp(-beta * I * params.d ** params.alpha / params.p2)


# ---------------------------------------------------------------------------
# hidden / exposed node census


@dataclass(frozen=True)
class CensusReport:
    n_samples: int
    common: int
    exposed: int
    hidden: int
    exposed_rate: float
    hidden_rate: float
    nearest_bins: np.ndarray
    nearest_exposed_rate: np.ndarray
    nearest_counts: np.ndarray


def node_problem_census(params: NetworkParams, beta: float, n_samples: int, seed: int,
                        radius: float | None = None, r_bins=None,
                        workers: int = 1) -> CensusReport:
    """Classify every primary as common, exposed (TX only) or hidden (RX only).

    Visibility does not depend on ``beta``; it is accepted so census runs can be keyed
    by the same target as the OP curves they accompany.

    Rates are conditional: exposed among primaries visible to the TX, hidden among
    those visible to the RX. The nearest primary's exposed rate is binned by distance.
    """
    if params.regime is Regime.BELOW6:
        raise ParameterError("the census needs the blockage or mmW regime")
    radius = default_radius(params) if radius is None else radius
    parts = _map(_typical_chunk, _chunk_tasks(params, n_samples, seed, radius, "averaged", True),
                 workers)
    common = exposed = hidden = 0
    near_r, near_exp, near_vis = [], [], []
    for p in parts:
        vt, vr = p["vis_tx"], p["vis_rx"]
        common += int(np.sum(vt & vr))
        exposed += int(np.sum(vt & ~vr))
        hidden += int(np.sum(~vt & vr))
        idx, dist = p["idx"], p["dist_tx"]
        if len(idx):
            order = np.lexsort((dist, idx))
            first = order[np.r_[True, idx[order][1:] != idx[order][:-1]]]
            near_r.append(dist[first])
            near_exp.append(vt[first] & ~vr[first])
            near_vis.append(vt[first])
    near_r = np.concatenate(near_r) if near_r else np.zeros(0)
    near_exp = np.concatenate(near_exp) if near_exp else np.zeros(0, bool)
    near_vis = np.concatenate(near_vis) if near_vis else np.zeros(0, bool)
    if r_bins is None:
        r_bins = np.linspace(0.0, float(np.percentile(near_r, 99)) if len(near_r) else 1.0, 11)
    r_bins = np.asarray(r_bins, float)
    w = np.clip(np.searchsorted(r_bins, near_r, side="right") - 1, 0, len(r_bins) - 2)
    cnt = np.bincount(w[near_vis], minlength=len(r_bins) - 1)
    ex = np.bincount(w[near_vis], weights=near_exp[near_vis], minlength=len(r_bins) - 1)
    with np.errstate(invalid="ignore"):
        rate = np.where(cnt > 0, ex / np.maximum(cnt, 1), np.nan)
    vis_tx_total = common + exposed
    vis_rx_total = common + hidden
    return CensusReport(n_samples, common, exposed, hidden,
                        exposed / vis_tx_total if vis_tx_total else 0.0,
                        hidden / vis_rx_total if vis_rx_total else 0.0,
                        r_bins, rate, cnt)


# ---------------------------------------------------------------------------
# axis length fitting


@dataclass(frozen=True)
class AxisFitPoint:
    xi: float
    l_star: float
    gap: float
    flat: bool
    unbounded: bool
    lambda_b: float
    d_len: float
    d_wid: float


@dataclass(frozen=True)
class AxisFitResult:
    points: tuple
    coeffs: np.ndarray | None
    sse: float
    published_sse: float


def axis_gap_curve(params: NetworkParams, table: ConditionalOpTable, L_grid,
                   min_count: int = 1000, weighting: str = "mass"):
    """Absolute gap between simulation and the blockage OP for each candidate ``L``.

    ``weighting="mass"`` integrates the gap against the empirical law of the sensed
    interference (bins weighted by their counts); ``"uniform"`` weights every
    qualifying bin equally, i.e. integrates over ``log I``.
    """
    if weighting not in ("mass", "uniform"):
        raise ParameterError(f"unknown weighting {weighting!r}")
    q = table.counts >= min_count
    if not q.any():
        raise NumericError("no bin has enough samples for the gap criterion")
    R = [empty_ball_radius(float(I), params) for I in table.centers[q]]
    emp = table.prob[q]
    w = table.counts[q] if weighting == "mass" else np.ones(int(q.sum()))
    gaps = []
    for L in L_grid:
        model = np.array([op_blockage(r, float(L), params, table.beta).value for r in R])
        gaps.append(float(np.average(np.abs(model - emp), weights=w)))
    return np.asarray(gaps)


def fit_axis_length(params: NetworkParams, xi_grid, beta: float, seed: int,
                    n_samples: int = 50_000, L_grid=None, shapes=((15.0, 10.0),),
                    min_count: int = 1000, flat_tol: float = 1e-3, degree: int = 5,
                    weighting: str = "mass", workers: int = 1) -> AxisFitResult:
    """Scan ``L`` per blockage factor to minimise the simulation/analysis OP gap, then
    fit a polynomial ``L(xi)``.

    Each ``(d_len, d_wid)`` in ``shapes`` gives one point per ``xi`` so that the
    dependence on the factor alone can be checked.
    """
    if params.regime is not Regime.BLOCKAGE:
        raise ParameterError("axis-length fitting runs in the blockage regime")
    xi_grid = np.asarray(xi_grid, float)
    seeds = np.random.SeedSequence(seed).spawn(len(xi_grid) * len(shapes))
    pts = []
    k = 0
    for xi in xi_grid:
        for dl, dw in shapes:
            blk = BlockageModel.from_xi(float(xi), dl, dw)
            p = params.replace(blockage=blk, axis_length=None)
            grid = (np.asarray(L_grid, float) if L_grid is not None
                    else np.unique(np.concatenate((np.arange(p.d, 400.0, 2.0),
                                                   np.geomspace(400.0, 1e5, 10)))))
            seq_seed = int(seeds[k].generate_state(1)[0])
            k += 1
            if xi == 0:
                pts.append(AxisFitPoint(0.0, math.inf, math.nan, True, True, 0.0, dl, dw))
                continue
            table = conditional_op_oracle(p, beta, n_samples, 40, seq_seed, workers=workers,
                                          min_count=min_count)
            gaps = axis_gap_curve(p, table, grid, min_count, weighting)
            j = int(np.argmin(gaps))
            flat = bool(gaps.max() - gaps.min() < flat_tol)
            pts.append(AxisFitPoint(float(xi), float(grid[j]), float(gaps[j]), flat,
                                    bool(j == len(grid) - 1), blk.lambda_b, dl, dw))
    usable = [q for q in pts if not (q.flat or q.unbounded)]
    coeffs, sse, pub = None, math.nan, math.nan
    if len({q.xi for q in usable}) > degree:
        x = np.array([q.xi for q in usable])
        y = np.array([q.l_star for q in usable])
        coeffs = np.polyfit(x, y, degree)
        sse = float(np.sum((np.polyval(coeffs, x) - y) ** 2))
        pub = float(np.sum((np.polyval(PUBLISHED_AXIS_FIT, x) - y) ** 2))
    return AxisFitResult(tuple(pts), coeffs, sse, pub)


# ---------------------------------------------------------------------------
# full-network slot simulation


@dataclass(frozen=True)
class SlotConfig:
    """Geometry and MAC options for :func:`run_slots` / :func:`compare_macs`.

    ``guard`` defaults to five mean nearest-primary distances; ``interference_radius``
    bounds secondary-to-receiver links (their tail is negligible for ``alpha = 4``).
    """

    half_width: float = 150.0
    guard: float | None = None
    interference_radius: float | None = None
    primary_rx_distance: float | None = None
    primary_rx_mode: str = "fixed"
    probes_per_primary: int = 1
    sensing: str = "averaged"
    theta_grid: tuple = tuple(np.geomspace(1e-3, 1e2, 16))
    mappings: tuple = (Mapping.LINEAR, Mapping.STEP, Mapping.QUADRATIC)

    def resolved(self, params: NetworkParams):
        lam = params.lambda1 * params.thinning
        guard = self.guard
        if guard is None:
            guard = 5 * 0.5 / math.sqrt(lam) if lam > 0 else 0.0
        r_int = self.interference_radius
        if r_int is None:
            a = params.alpha
            lam2 = max(params.lambda2, 1e-12)
            r_int = (2 * math.pi * lam2 * params.d ** a / ((a - 2) * 2e-3)) ** (1 / (a - 2))
            cap = 500.0
            if params.regime is not Regime.BELOW6 and params.blockage.lambda_b > 0:
                cap = min(cap, 3 * math.pi / params.blockage.xi)
            r_int = float(min(max(r_int, 4 * params.d), cap))
        rx_d = self.primary_rx_distance if self.primary_rx_distance is not None else params.d
        return guard, r_int, rx_d


@dataclass(frozen=True)
class SimReport:
    mac_label: str
    beta: float
    n_topologies: int
    n_slots: int
    ase_estimate: float
    ase_ci: float
    coverage: float
    coverage_ci: float
    access_rate: float
    primary_outage: float
    primary_outage_ci: float
    primary_samples: int
    per_topology_ase: np.ndarray = field(repr=False)
    per_topology_coverage: np.ndarray = field(repr=False)
    threshold: float | None = None
    conditional_op: ConditionalOpTable | None = None
    notes: tuple = ()


@dataclass(frozen=True)
class SlotOutcome:
    """One slot on an explicit deployment, evaluated link by link."""

    sensed_i: np.ndarray
    op_estimate: np.ndarray
    accessed: np.ndarray
    rx_sir: np.ndarray
    covered: np.ndarray
    primary_sir: np.ndarray
    primary_outage: np.ndarray
    hidden_node_events: int
    exposed_node_events: int


def simulate_slot(deployment, params: NetworkParams, policy: SapPolicy, rng,
                  fading: bool = True, primary_rx=None) -> SlotOutcome:
    """Sense, predict, access and evaluate SIRs for one slot.

    ``primary_rx`` holds one reference receiver per primary (default: distance ``d``
    along the primary's beam azimuth). With ``fading=False`` every gain is 1 and the
    access draws are the only randomness.
    """
    if policy.regime is not params.regime:
        raise ParameterError("policy regime does not match the network parameters")
    rng = np.random.default_rng(rng)
    stx, srx, prim = deployment.secondary_txs, deployment.secondary_rxs, deployment.primary_txs
    I = np.array([sense_interference(t, deployment, params) for t in stx])
    op = np.array([op_from_interference(float(x), params, policy.beta).value for x in I])
    accessed = rng.random(len(stx)) < np.minimum(1.0, policy.scale * op)
    seeds = rng.integers(0, 2**63, size=len(stx) + len(prim)) if fading else [None] * (len(stx) + len(prim))
    sir = np.array([sir_at(srx[i], stx[i], deployment, accessed & (np.arange(len(stx)) != i),
                           params, None if seeds[i] is None else int(seeds[i]))
                    for i in range(len(stx))])
    covered = accessed & (sir >= policy.beta)
    if primary_rx is None:
        primary_rx = prim + params.d * np.column_stack((np.cos(deployment.primary_beams),
                                                        np.sin(deployment.primary_beams)))
    psir = np.array([sir_at(primary_rx[k], prim[k], deployment, accessed, params,
                            None if seeds[len(stx) + k] is None else int(seeds[len(stx) + k]),
                            serving_power=params.p1)
                     for k in range(len(prim))])
    hidden = exposed = 0
    for t, r in zip(stx, srx):
        vt = _visible_primaries(t, deployment, params)
        vr = _visible_primaries(r, deployment, params)
        exposed += int(np.sum(vt & ~vr))
        hidden += int(np.sum(~vt & vr))
    return SlotOutcome(I, op, accessed, sir, covered, psir, psir < params.gamma, hidden, exposed)


def policy_for_beta(params: NetworkParams, beta: float) -> SapPolicy:
    """Linear-mapping policy at a given decoding target (no minimum enforced)."""
    m1 = expected_op(params, beta)
    return SapPolicy(beta, c_star(params, beta, m1), 0.0, math.nan, None, params.regime, m1)


class OpInterpolant:
    """Fast ``I -> OP`` map for many transmitters.

    Nodes are placed on ``R`` (log grid plus the case boundaries) and mapped to ``I``
    through the empty-ball relation, which is monotone; a shape-preserving cubic in
    ``log I`` interpolates between them. Picklable, so it can be shipped to workers.
    """

    def __init__(self, params: NetworkParams, beta: float, n_nodes: int = 600):
        self.trivial = params.lambda1 == 0
        if self.trivial:
            return
        a, d = params.alpha, params.d
        k = params.beamwidth * params.lambda1
        r_l = params.r_los
        R = np.geomspace(1e-3 * d, 50.0 / math.sqrt(params.lambda1), n_nodes)
        kinks = [d]
        if math.isfinite(params.L):
            kinks += [params.L / 2 - d / 2, params.L / 2 + d / 2]
        if math.isfinite(r_l):
            kinks += [r_l, r_l - d, r_l + d]
        kinks = np.array([x for x in kinks if R[0] < x < R[-1]])
        R = np.unique(np.concatenate((R, kinks, kinks * (1 - 1e-9), kinks * (1 + 1e-9))))
        tail = 0.0 if math.isinf(r_l) else r_l ** (2 - a)
        I = params.p1 * (R ** (-a) + k * (R ** (2 - a) - tail) / (a - 2))
        ok = I > 0
        R, I = R[ok], I[ok]
        self.vals = np.array([op_at(float(r), params, beta).value for r in R])
        self.i_lo, self.i_hi = I[-1], I[0]
        self.interp = PchipInterpolator(np.log(I[::-1]), self.vals[::-1], extrapolate=False)

    def __call__(self, x):
        x = np.asarray(x, float)
        if self.trivial:
            return np.ones_like(x)
        out = np.empty_like(x)
        small = x <= self.i_lo
        large = x >= self.i_hi
        mid = ~(small | large)
        out[small] = self.vals[-1]
        out[large] = self.vals[0]
        out[mid] = self.interp(np.log(x[mid]))
        return np.clip(out, 0.0, 1.0)


def op_interpolant(params: NetworkParams, beta: float, n_nodes: int = 600) -> OpInterpolant:
    return OpInterpolant(params, beta, n_nodes)


def analytic_bin_average(samples: TypicalPairSamples, table: ConditionalOpTable,
                         params: NetworkParams, n_nodes: int = 600):
    """Analytical OP averaged over the sensed values that fell in each bin."""
    f = op_interpolant(params, table.beta, n_nodes)
    I = samples.interference
    w = np.searchsorted(table.edges, I, side="right") - 1
    ok = (I > 0) & (w >= 0) & (I <= table.edges[-1])
    w = np.minimum(w[ok], len(table.counts) - 1)
    tot = np.bincount(w, f(I[ok]), minlength=len(table.counts))
    with np.errstate(invalid="ignore"):
        return np.where(table.counts > 0, tot / np.maximum(table.counts, 1), np.nan)


@dataclass
class _Variant:
    label: str
    kind: MacKind
    mapping: Mapping | None = None
    threshold: float | None = None


def _variants(cfg: SlotConfig, macs):
    out = []
    for m in macs:
        m = MacKind(m)
        if m is MacKind.SAP:
            for mp in cfg.mappings:
                out.append(_Variant(f"sap_{Mapping(mp).value}", m, Mapping(mp)))
        elif m in (MacKind.NO_PREDICTION, MacKind.SAP_BELOW6_OP):
            out.append(_Variant(m.value, m))
        else:
            for th in cfg.theta_grid:
                out.append(_Variant(f"{m.value}@{th:.6g}", m, threshold=float(th)))
    return out


def _normalised_access(op, target_mean, mapping: Mapping):
    """Access probabilities from ``op`` with mean ``target_mean`` under each mapping."""
    op = np.asarray(op, float)
    if len(op) == 0:
        return op
    if mapping is Mapping.LINEAR:
        m = op.mean()
        return np.minimum(1.0, op * (target_mean / m if m > 0 else 0.0))
    if mapping is Mapping.QUADRATIC:
        m = np.mean(op ** 2)
        return np.minimum(1.0, op ** 2 * (target_mean / m if m > 0 else 0.0))
    # deterministic step: the top fraction of TXs by OP always accesses
    q = min(max(target_mean, 0.0), 1.0)
    order = np.argsort(-op, kind="stable")
    k_full = int(math.floor(q * len(op)))
    out = np.zeros(len(op))
    out[order[:k_full]] = 1.0
    if k_full < len(op):
        out[order[k_full]] = q * len(op) - k_full
    return out


def _topology_task(task):
    (params, beta, policy, cfg, variants, seq, slots, op_nodes, below6) = task
    scale = policy.scale
    guard, r_int, rx_d = cfg.resolved(params)
    W = cfg.half_width
    s_dep, s_slot = seq.spawn(2)
    rng = np.random.Generator(np.random.PCG64(s_dep))
    a, d = params.alpha, params.d
    prim_region = Region(W, guard)
    sec_region = Region(W, r_int)
    blk = params.blockage if params.regime is not Regime.BELOW6 else None
    big = Region(W, max(guard, r_int))
    rects = sample_blockages(blk, big, rng)
    prim = sample_ppp(params.lambda1, prim_region, rng)
    beams = rng.uniform(0, 2 * math.pi, len(prim))
    stx = sample_ppp(params.lambda2, sec_region, rng)
    head = rng.uniform(0, 2 * math.pi, len(stx))
    if len(rects):
        prim = _redraw_outside(prim, prim_region, rects, rng)
        for _ in range(200):
            srx = stx + d * np.column_stack((np.cos(head), np.sin(head)))
            bad = points_in_blockages(stx, rects) | points_in_blockages(srx, rects)
            if not bad.any():
                break
            h = sec_region.outer_half_width
            stx[bad] = rng.uniform(-h, h, size=(bad.sum(), 2))
            head[bad] = rng.uniform(0, 2 * math.pi, bad.sum())
    srx = stx + d * np.column_stack((np.cos(head), np.sin(head)))
    inner = np.all(np.abs(stx) <= W, axis=1)
    ns, npri = len(stx), len(prim)
    blocked_world = params.regime is not Regime.BELOW6 and len(rects) > 0

    def prim_gain(targets):
        """Primary -> target gains with exact blocking and beam sectors."""
        if npri == 0 or len(targets) == 0:
            return np.zeros((len(targets), npri))
        diff = targets[:, None, :] - prim[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        g = dist ** (-a)
        if params.regime is Regime.MMW:
            ang = np.arctan2(diff[..., 1], diff[..., 0])
            off = np.abs((ang - beams[None, :] + math.pi) % (2 * math.pi) - math.pi)
            g = np.where(off <= 0.5 * params.omega, g, 0.0)
        if blocked_world:
            g = np.where(link_blocked_matrix(targets, prim, rects), 0.0, g)
        return g

    # sensing at every secondary TX (secondaries silent)
    G_tx = prim_gain(stx)
    I_sense = params.p1 * G_tx.sum(axis=1)
    op = op_nodes(I_sense)
    op_nv = naive_op(I_sense, params, beta)
    target_mean = float(np.mean(np.minimum(1.0, scale * op))) if ns else 0.0

    rx_in = srx[inner]
    idx_in = np.flatnonzero(inner)
    n_in = len(idx_in)
    G_rx = prim_gain(rx_in)

    # secondary -> secondary RX links within the interference radius
    if ns and n_in:
        pairs = cKDTree(rx_in).sparse_distance_matrix(cKDTree(stx), r_int, output_type="coo_matrix")
        rows, cols, dist = pairs.row, pairs.col, pairs.data
        own = cols == idx_in[rows]
        rows, cols, dist = rows[~own], cols[~own], dist[~own]
        dist = np.maximum(dist, 1e-9)
        if blocked_world and len(rows):
            keep = ~segments_blocked(rx_in[rows], stx[cols], rects, cell=25.0)
            rows, cols, dist = rows[keep], cols[keep], dist[keep]
        g_ss = dist ** (-a)
    else:
        rows = cols = np.zeros(0, int)
        g_ss = np.zeros(0)

    # primary reference receivers, one per primary inside the inner window
    p_in = np.flatnonzero(np.all(np.abs(prim) <= W, axis=1)) if npri else np.zeros(0, int)
    m = int(cfg.probes_per_primary)
    if m < 1:
        raise ParameterError("probes_per_primary must be at least 1")
    if cfg.primary_rx_mode == "fixed":
        # reference receivers at rx_d from their primary, inside its beam in the mmW regime
        p_serv = np.repeat(p_in, m)
        if params.regime is Regime.MMW:
            ang = beams[p_serv] + params.omega * (rng.random(len(p_serv)) - 0.5)
        else:
            ang = rng.uniform(0, 2 * math.pi, len(p_serv))
        prx = prim[p_serv] + rx_d * np.column_stack((np.cos(ang), np.sin(ang)))
    elif cfg.primary_rx_mode == "nearest":
        # probe points uniform in the inner window, served by the nearest primary
        prx = rng.uniform(-W, W, size=(m * len(p_in), 2))
        p_serv = cKDTree(prim).query(prx)[1] if npri else np.zeros(0, int)
    else:
        raise ParameterError(f"unknown primary RX mode {cfg.primary_rx_mode!r}")
    n_pr = len(prx)
    G_prx = prim_gain(prx) if n_pr else np.zeros((0, npri))
    if n_pr:
        sig_p = G_prx[np.arange(n_pr), p_serv].copy()
        if cfg.primary_rx_mode == "fixed":
            sig_p = np.full(n_pr, rx_d ** (-a))
        G_prx[np.arange(n_pr), p_serv] = 0.0
        pp = cKDTree(prx).sparse_distance_matrix(cKDTree(stx), r_int, output_type="coo_matrix") \
            if ns else sparse.coo_matrix((n_pr, 0))
        prow, pcol, pdist = pp.row, pp.col, np.maximum(pp.data, 1e-9)
        if blocked_world and len(prow):
            keep = ~segments_blocked(prx[prow], stx[pcol], rects, cell=25.0)
            prow, pcol, pdist = prow[keep], pcol[keep], pdist[keep]
        g_ps = pdist ** (-a)
    else:
        prow = pcol = np.zeros(0, int)
        g_ps = np.zeros(0)
        sig_p = np.zeros(0)

    nv = len(variants)
    succ = np.zeros(nv)
    acc = np.zeros(nv)
    p_out = np.zeros(nv)
    srng = np.random.Generator(np.random.PCG64(s_slot))
    static_prob = {}
    for j, v in enumerate(variants):
        if v.kind is MacKind.SAP and v.mapping is Mapping.LINEAR:
            static_prob[j] = np.minimum(1.0, scale * op)
        elif v.kind is MacKind.SAP:
            static_prob[j] = _normalised_access(op, target_mean, v.mapping)
        elif v.kind is MacKind.NO_PREDICTION:
            # same scaling rule, with the naive OP's mean estimated from this topology
            m_nv = float(op_nv.mean()) if ns else 0.0
            c_nv = policy.c_star * policy.expected_op / m_nv if m_nv > 0 else math.inf
            static_prob[j] = np.minimum(1.0, min(c_nv, 1.0) * op_nv)
        elif v.kind is MacKind.SAP_BELOW6_OP:
            pol6, nodes6 = below6
            static_prob[j] = np.minimum(1.0, pol6.scale * nodes6(I_sense))
        elif v.kind is MacKind.TX_THRESHOLD:
            with np.errstate(divide="ignore"):
                proxy = np.where(I_sense > 0, params.p2 * d ** (-a) / np.where(I_sense > 0, I_sense, 1), np.inf)
            static_prob[j] = (proxy >= v.threshold).astype(float)
    sig_const = params.p2 * d ** (-a)
    for _ in range(slots):
        U = srng.random(ns)
        h0 = srng.exponential(size=n_in)
        h_pr = srng.exponential(size=G_rx.shape)
        h_ss = srng.exponential(size=len(g_ss))
        h_p0 = srng.exponential(size=n_pr)
        h_pp = srng.exponential(size=G_prx.shape)
        h_ps = srng.exponential(size=len(g_ps))
        I_prim_rx = params.p1 * np.sum(G_rx * h_pr, axis=1)
        # per-TX primary-only SIR at its RX (genie knowledge), for all TXs with an inner RX
        genie_sir = np.full(ns, -np.inf)
        with np.errstate(divide="ignore"):
            genie_sir[idx_in] = np.where(I_prim_rx > 0, sig_const * h0 / np.where(I_prim_rx > 0, I_prim_rx, 1), np.inf)
        A = np.empty((ns, nv))
        for j, v in enumerate(variants):
            if v.kind is MacKind.RX_GENIE:
                # outside the tallied window the genie is approximated by the TX proxy
                A[:, j] = genie_sir >= v.threshold
                outside = ~inner
                if outside.any():
                    with np.errstate(divide="ignore"):
                        proxy = np.where(I_sense[outside] > 0, sig_const / np.where(I_sense[outside] > 0, I_sense[outside], 1), np.inf)
                    A[outside, j] = proxy >= v.threshold
            else:
                A[:, j] = U < static_prob[j]
        W_ss = sparse.csr_matrix((params.p2 * g_ss * h_ss, (rows, cols)), shape=(n_in, ns))
        I_sec = W_ss @ A
        sir_ok = (sig_const * h0)[:, None] >= beta * (I_prim_rx[:, None] + I_sec)
        mine = A[idx_in]
        succ += np.sum(mine * sir_ok, axis=0)
        acc += mine.sum(axis=0)
        if n_pr:
            I_pp = params.p1 * np.sum(G_prx * h_pp, axis=1)
            W_ps = sparse.csr_matrix((params.p2 * g_ps * h_ps, (prow, pcol)), shape=(n_pr, ns))
            I_ps = W_ps @ A
            s_p = params.p1 * sig_p * h_p0
            p_out += np.sum(s_p[:, None] < params.gamma * (I_pp[:, None] + I_ps), axis=0)
    area = (2 * W) ** 2
    return {"succ": succ, "acc": acc, "n_in": n_in, "slots": slots, "area": area,
            "p_out": p_out, "n_pr": n_pr}


def default_macs(params: NetworkParams) -> tuple:
    if params.regime is Regime.BELOW6:
        return tuple(m for m in MacKind if m is not MacKind.SAP_BELOW6_OP)
    return tuple(MacKind)


def compare_macs(params: NetworkParams, beta_grid, macs=None, n_topologies: int = 20,
                 slots_per_topology: int = 20, seed: int = 0, cfg: SlotConfig = SlotConfig(),
                 workers: int = 1, policies: dict | None = None) -> dict:
    """ASE per MAC and decoding target with shared topologies, fading and access draws.

    Returns ``{beta: {label: SimReport}}``. Threshold MACs report the grid-optimised
    threshold under their kind's label; every variant is also listed individually.
    ``sap_below6_op`` runs the same protocol with the OP (and its scaling) computed as
    if there were no blockages or beams.
    """
    macs = default_macs(params) if macs is None else tuple(MacKind(m) for m in macs)
    results = {}
    topo_seeds = np.random.SeedSequence(seed).spawn(n_topologies)
    for beta in beta_grid:
        beta = float(beta)
        pol = (policies or {}).get(beta) or policy_for_beta(params, beta)
        nodes = op_interpolant(params, beta)
        variants = _variants(cfg, macs)
        below6 = None
        if MacKind.SAP_BELOW6_OP in macs:
            p6 = params.replace(regime=Regime.BELOW6)
            below6 = (policy_for_beta(p6, beta), op_interpolant(p6, beta))
        tasks = [(params, beta, pol, cfg, variants, s, slots_per_topology, nodes, below6)
                 for s in topo_seeds]
        outs = _map(_topology_task, tasks, workers)
        results[beta] = _summarise(params, beta, variants, outs)
    return results


def _summarise(params, beta, variants, outs):
    rate = math.log1p(beta)
    per_ase = np.array([o["succ"] * rate / (o["slots"] * o["area"]) for o in outs])
    per_cov = np.array([o["succ"] / max(o["n_in"] * o["slots"], 1) for o in outs])
    n_in = sum(o["n_in"] * o["slots"] for o in outs)
    acc = np.sum([o["acc"] for o in outs], axis=0)
    p_out = np.sum([o["p_out"] for o in outs], axis=0)
    n_pr = sum(o["n_pr"] * o["slots"] for o in outs)
    slots = outs[0]["slots"] if outs else 0
    reports = {}
    for j, v in enumerate(variants):
        m, ci = mean_ci(per_ase[:, j])
        c, cci = mean_ci(per_cov[:, j])
        if n_pr:
            lo, hi = wilson_interval(p_out[j], n_pr)
            po, poci = p_out[j] / n_pr, float((hi - lo) / 2)
        else:
            po, poci = math.nan, math.nan
        reports[v.label] = SimReport(v.label, beta, len(outs), slots, m, ci, c, cci,
                                     acc[j] / max(n_in, 1), po, poci, n_pr, per_ase[:, j],
                                     per_cov[:, j], v.threshold,
                                     notes=() if n_pr else ("primary_outage_undefined",))
    for kind in (MacKind.TX_THRESHOLD, MacKind.RX_GENIE):
        cands = [v.label for v in variants if v.kind is kind]
        if cands:
            best = max(cands, key=lambda k: reports[k].ase_estimate)
            reports[kind.value] = reports[best]
    if "sap_linear" in reports:
        reports[MacKind.SAP.value] = reports["sap_linear"]
    return reports


def run_slots(params: NetworkParams, policy: SapPolicy, mac: MacKind | str, n_topologies: int,
              slots_per_topology: int, seed: int, cfg: SlotConfig = SlotConfig(),
              workers: int = 1) -> SimReport:
    """Slot simulation of a single MAC at the policy's decoding target."""
    if policy.regime is not params.regime:
        raise ParameterError("policy regime does not match the network parameters")
    mac = MacKind(mac)
    res = compare_macs(params, [policy.beta], (mac,), n_topologies, slots_per_topology, seed, cfg,
                       workers, {policy.beta: policy})
    return res[policy.beta][mac.value]


def paired_difference(a: SimReport, b: SimReport, z: float = 1.96, metric: str = "ase"):
    """Mean per-topology difference ``a - b`` (ASE or coverage) and its half width."""
    if metric == "ase":
        return mean_ci(a.per_topology_ase - b.per_topology_ase, z)
    if metric == "coverage":
        return mean_ci(a.per_topology_coverage - b.per_topology_coverage, z)
    raise ParameterError(f"unknown metric {metric!r}")
