"""Brute-force references, deliberately computed in a different coordinate system
from the library (polar about the TX rather than rings about the RX)."""

import math

import numpy as np
from scipy import integrate


def nearest_factor(R, d, c, alpha, hi=math.pi, n=200_001):
    nu = np.linspace(0.0, hi, n)
    dist2 = R * R + d * d - 2 * R * d * np.cos(nu)
    f = 1.0 / (1.0 + c * np.maximum(dist2, 1e-300) ** (-alpha / 2))
    return integrate.simpson(f, x=nu) / math.pi + (math.pi - hi) / math.pi


def aggregate_exponent(R, d, c, alpha, upper=math.inf):
    """int over {|x| > R, |x - rx| <= upper} of c / (c + |x - rx|^alpha) dx."""

    def inner(r):
        if math.isinf(upper):
            phimax = math.pi
        else:
            x = (r * r + d * d - upper * upper) / (2 * r * d)
            if x >= 1:
                return 0.0
            phimax = math.acos(max(-1.0, x))

        def g(phi):
            D2 = r * r + d * d - 2 * r * d * math.cos(phi)
            return c / (c + D2 ** (alpha / 2))
        return 2 * r * integrate.quad(g, 0.0, phimax, epsabs=1e-13, epsrel=1e-11, limit=200)[0]

    top = upper + d if math.isfinite(upper) else math.inf
    pts = [p for p in (d, abs(d - R) + R, R + 2 * d) if R < p < top] if math.isfinite(top) else None
    if math.isfinite(top):
        return integrate.quad(inner, R, top, points=pts, epsabs=1e-13, epsrel=1e-10,
                              limit=400)[0]
    mid = R + 50 * d + 10 * c ** (1 / alpha)
    a = integrate.quad(inner, R, mid, points=[x for x in (R + d, R + 2 * d) if x < mid],
                       epsabs=1e-13, epsrel=1e-10, limit=400)[0]
    b = integrate.quad(inner, mid, math.inf, epsabs=1e-14, epsrel=1e-10, limit=400)[0]
    return a + b


def op_below6(R, lambda1, p1, p2, alpha, d, beta):
    c = beta * p1 * d ** alpha / p2
    return nearest_factor(R, d, c, alpha) * math.exp(-lambda1 * aggregate_exponent(R, d, c, alpha))
