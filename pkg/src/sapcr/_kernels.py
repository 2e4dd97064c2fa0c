"""Compiled geometry kernels: segment/rectangle intersection and point containment.

Rectangles are passed as "frames": rows of (cx, cy, half_length, half_width, cos, sin).
"""

import numpy as np
from numba import njit

_EPS = 1e-12


@njit(cache=True)
def seg_hits_frame(px, py, qx, qy, cx, cy, hl, hw, c, s):
    # closed slab clipping in the rectangle's own frame
    ax = (px - cx) * c + (py - cy) * s
    ay = -(px - cx) * s + (py - cy) * c
    bx = (qx - cx) * c + (qy - cy) * s
    by = -(qx - cx) * s + (qy - cy) * c
    dx = bx - ax
    dy = by - ay
    t0 = 0.0
    t1 = 1.0
    if abs(dx) < _EPS:
        if ax < -hl or ax > hl:
            return False
    else:
        ta = (-hl - ax) / dx
        tb = (hl - ax) / dx
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return False
    if abs(dy) < _EPS:
        if ay < -hw or ay > hw:
            return False
    else:
        ta = (-hw - ay) / dy
        tb = (hw - ay) / dy
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return False
    return True


@njit(cache=True)
def _frame_extent(hl, hw, c, s):
    return hl * abs(c) + hw * abs(s), hl * abs(s) + hw * abs(c)


@njit(cache=True)
def _seg_blocked_range(px, py, qx, qy, frames, lo, hi):
    xmin = min(px, qx)
    xmax = max(px, qx)
    ymin = min(py, qy)
    ymax = max(py, qy)
    for k in range(lo, hi):
        cx = frames[k, 0]
        cy = frames[k, 1]
        ex, ey = _frame_extent(frames[k, 2], frames[k, 3], frames[k, 4], frames[k, 5])
        if cx + ex < xmin or cx - ex > xmax or cy + ey < ymin or cy - ey > ymax:
            continue
        if seg_hits_frame(px, py, qx, qy, cx, cy, frames[k, 2], frames[k, 3],
                          frames[k, 4], frames[k, 5]):
            return True
    return False


@njit(cache=True)
def segments_blocked_brute(p, q, frames):
    m = p.shape[0]
    out = np.zeros(m, dtype=np.bool_)
    n = frames.shape[0]
    for i in range(m):
        out[i] = _seg_blocked_range(p[i, 0], p[i, 1], q[i, 0], q[i, 1], frames, 0, n)
    return out


@njit(cache=True)
def points_in_frames(pts, frames):
    n = pts.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        x = pts[i, 0]
        y = pts[i, 1]
        for k in range(frames.shape[0]):
            dx = x - frames[k, 0]
            dy = y - frames[k, 1]
            u = dx * frames[k, 4] + dy * frames[k, 5]
            v = -dx * frames[k, 5] + dy * frames[k, 4]
            if abs(u) <= frames[k, 2] and abs(v) <= frames[k, 3]:
                out[i] = True
                break
    return out


@njit(cache=True)
def build_grid(frames, cell):
    """Bucket rectangles by the grid cells their bounding boxes overlap."""
    n = frames.shape[0]
    if n == 0:
        return 0.0, 0.0, 1, 1, np.zeros(2, np.int64), np.zeros(0, np.int64)
    x0 = np.inf
    y0 = np.inf
    x1 = -np.inf
    y1 = -np.inf
    for k in range(n):
        ex, ey = _frame_extent(frames[k, 2], frames[k, 3], frames[k, 4], frames[k, 5])
        x0 = min(x0, frames[k, 0] - ex)
        y0 = min(y0, frames[k, 1] - ey)
        x1 = max(x1, frames[k, 0] + ex)
        y1 = max(y1, frames[k, 1] + ey)
    x0 -= 1e-6
    y0 -= 1e-6
    nx = int((x1 - x0) / cell) + 1
    ny = int((y1 - y0) / cell) + 1
    counts = np.zeros(nx * ny + 1, np.int64)
    for pass_ in range(2):
        if pass_ == 1:
            for c in range(nx * ny):
                counts[c + 1] += counts[c]
            items = np.empty(counts[nx * ny], np.int64)
            fill = counts.copy()
        for k in range(n):
            ex, ey = _frame_extent(frames[k, 2], frames[k, 3], frames[k, 4], frames[k, 5])
            i0 = max(int((frames[k, 0] - ex - 1e-9 - x0) / cell), 0)
            i1 = min(int((frames[k, 0] + ex + 1e-9 - x0) / cell), nx - 1)
            j0 = max(int((frames[k, 1] - ey - 1e-9 - y0) / cell), 0)
            j1 = min(int((frames[k, 1] + ey + 1e-9 - y0) / cell), ny - 1)
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    c = i * ny + j
                    if pass_ == 0:
                        counts[c + 1] += 1
                    else:
                        items[fill[c]] = k
                        fill[c] += 1
    return x0, y0, nx, ny, counts, items


@njit(cache=True)
def _seg_blocked_grid(px, py, qx, qy, frames, x0, y0, cell, nx, ny, start, items,
                      stamp, qid):
    xmin = min(px, qx)
    xmax = max(px, qx)
    ymin = min(py, qy)
    ymax = max(py, qy)
    i0 = max(int((xmin - x0) / cell), 0)
    i1 = min(int((xmax - x0) / cell), nx - 1)
    j0 = max(int((ymin - y0) / cell), 0)
    j1 = min(int((ymax - y0) / cell), ny - 1)
    if xmax < x0 or ymax < y0 or i0 > nx - 1 or j0 > ny - 1 or i1 < 0 or j1 < 0:
        return False
    dx = qx - px
    dy = qy - py
    length = np.hypot(dx, dy)
    for i in range(i0, i1 + 1):
        for j in range(j0, j1 + 1):
            if length > 0.0:
                # skip cells whose centre is farther from the line than the half diagonal
                ccx = x0 + (i + 0.5) * cell
                ccy = y0 + (j + 0.5) * cell
                dist = abs((ccx - px) * dy - (ccy - py) * dx) / length
                if dist > 0.7072 * cell + 1e-9:
                    continue
            c = i * ny + j
            for t in range(start[c], start[c + 1]):
                k = items[t]
                if stamp[k] == qid:
                    continue
                stamp[k] = qid
                cx = frames[k, 0]
                cy = frames[k, 1]
                ex, ey = _frame_extent(frames[k, 2], frames[k, 3], frames[k, 4], frames[k, 5])
                if cx + ex < xmin or cx - ex > xmax or cy + ey < ymin or cy - ey > ymax:
                    continue
                if seg_hits_frame(px, py, qx, qy, cx, cy, frames[k, 2], frames[k, 3],
                                  frames[k, 4], frames[k, 5]):
                    return True
    return False


@njit(cache=True)
def segments_blocked_grid(p, q, frames, cell):
    m = p.shape[0]
    out = np.zeros(m, dtype=np.bool_)
    if frames.shape[0] == 0:
        return out
    x0, y0, nx, ny, start, items = build_grid(frames, cell)
    stamp = np.full(frames.shape[0], -1, np.int64)
    for i in range(m):
        out[i] = _seg_blocked_grid(p[i, 0], p[i, 1], q[i, 0], q[i, 1], frames, x0, y0,
                                   cell, nx, ny, start, items, stamp, i)
    return out


@njit(cache=True)
def pair_matrix_blocked(rx, tx, frames, cell, max_range):
    """Blocking flags for every (rx, tx) link shorter than ``max_range``.

    Links longer than ``max_range`` are reported as blocked.
    """
    nr = rx.shape[0]
    nt = tx.shape[0]
    out = np.ones((nr, nt), dtype=np.bool_)
    if frames.shape[0] == 0:
        for a in range(nr):
            for b in range(nt):
                if np.hypot(rx[a, 0] - tx[b, 0], rx[a, 1] - tx[b, 1]) <= max_range:
                    out[a, b] = False
        return out
    x0, y0, nx, ny, start, items = build_grid(frames, cell)
    stamp = np.full(frames.shape[0], -1, np.int64)
    qid = 0
    for a in range(nr):
        for b in range(nt):
            if np.hypot(rx[a, 0] - tx[b, 0], rx[a, 1] - tx[b, 1]) > max_range:
                continue
            out[a, b] = _seg_blocked_grid(rx[a, 0], rx[a, 1], tx[b, 0], tx[b, 1], frames,
                                          x0, y0, cell, nx, ny, start, items, stamp, qid)
            qid += 1
    return out


@njit(cache=True)
def typical_pair_blocking(px, py, poff, frames, roff, d):
    """Blocking of primary links to a typical pair with TX at the origin, RX at (d, 0).

    Sample ``b`` owns primaries ``poff[b]:poff[b+1]`` and rectangles ``roff[b]:roff[b+1]``.
    """
    n = px.shape[0]
    blk_tx = np.zeros(n, dtype=np.bool_)
    blk_rx = np.zeros(n, dtype=np.bool_)
    for b in range(poff.shape[0] - 1):
        lo = roff[b]
        hi = roff[b + 1]
        for i in range(poff[b], poff[b + 1]):
            blk_tx[i] = _seg_blocked_range(0.0, 0.0, px[i], py[i], frames, lo, hi)
            blk_rx[i] = _seg_blocked_range(d, 0.0, px[i], py[i], frames, lo, hi)
    return blk_tx, blk_rx


@njit(cache=True)
def points_in_frames_segmented(px, py, poff, frames, roff):
    n = px.shape[0]
    out = np.zeros(n, dtype=np.bool_)
    for b in range(poff.shape[0] - 1):
        for i in range(poff[b], poff[b + 1]):
            for k in range(roff[b], roff[b + 1]):
                dx = px[i] - frames[k, 0]
                dy = py[i] - frames[k, 1]
                u = dx * frames[k, 4] + dy * frames[k, 5]
                v = -dx * frames[k, 5] + dy * frames[k, 4]
                if abs(u) <= frames[k, 2] and abs(v) <= frames[k, 3]:
                    out[i] = True
                    break
    return out
