"""Gauss-Legendre rules and panel-pair integration of log-singular kernels."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from slmg.errors import DomainError, NoSharedVertex, NotCollinear, UnsupportedOrder

MAX_ORDER = 32


@dataclass(frozen=True)
class GaussRule:
    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, f: Callable, a: float = -1.0, b: float = 1.0) -> float:
        x = 0.5 * (b - a) * self.nodes + 0.5 * (a + b)
        return 0.5 * (b - a) * np.sum(self.weights * f(x))


def _legendre(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """P_n(x) and P_n'(x) by the three-term recurrence."""
    p0, p1 = np.ones_like(x), x.copy()
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    return p1, n * (x * p1 - p0) / (x * x - 1)


@lru_cache(maxsize=None)
def gauss_rule(n: int) -> GaussRule:
    """n-point Gauss-Legendre rule on [-1, 1] via Newton iteration."""
    if not 1 <= n <= MAX_ORDER:
        raise UnsupportedOrder(f"Gauss order must be in [1, {MAX_ORDER}], got {n}")
    i = np.arange(1, n + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        p, dp = _legendre(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-16:
            break
    _, dp = _legendre(n, x)
    w = 2.0 / ((1 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    # exact symmetry about 0
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return GaussRule(n, x, w)


def _g(t):
    # second antiderivative of ln|t|, G(0) = 0
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    nz = t != 0
    tt = t[nz]
    out[nz] = 0.5 * tt * tt * np.log(np.abs(tt)) - 0.75 * tt * tt
    return out


def log_double_integral_1d(a0, a1, b0, b1):
    """Exact int_{a0}^{a1} int_{b0}^{b1} ln|x - y| dy dx on a line (vectorised)."""
    return -(_g(np.subtract(a1, b1)) - _g(np.subtract(a1, b0)) - _g(np.subtract(a0, b1)) + _g(np.subtract(a0, b0)))


def log_double_integral(panel_a, panel_b, tol: float = 1e-10) -> float:
    """Exact double integral of ln|x-y| over two collinear segments.

    Segments are given as ``(start, end)`` pairs of 2D points.
    """
    a0, a1 = (np.asarray(p, dtype=float) for p in panel_a)
    b0, b1 = (np.asarray(p, dtype=float) for p in panel_b)
    d = a1 - a0
    la = np.linalg.norm(d)
    e = d / la
    scale = max(la, np.linalg.norm(b1 - b0), np.linalg.norm(b0 - a0))
    for p in (b0, b1):
        if abs(e[0] * (p - a0)[1] - e[1] * (p - a0)[0]) > tol * scale:
            raise NotCollinear("panels do not lie on a common line")
    sa = (0.0, la)
    sb = sorted((float(e @ (b0 - a0)), float(e @ (b1 - a0))))
    return float(log_double_integral_1d(sa[0], sa[1], sb[0], sb[1]))


def graded_points(start, end, depth: int, order: int):
    """Gauss points on ``[start, end]`` graded geometrically toward ``start``.

    Pieces are ``[0, 2^-depth], [2^-depth, 2^(1-depth)], ..., [1/2, 1]`` in
    the normalised parameter.  Returns points ``(M, 2)`` and weights ``(M,)``.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    rule = gauss_rule(order)
    breaks = np.concatenate([[0.0], 2.0 ** -np.arange(depth, -1, -1)])
    lo, hi = breaks[:-1], breaks[1:]
    t = (lo[:, None] + 0.5 * (hi - lo)[:, None] * (rule.nodes + 1)).ravel()
    w = (0.5 * (hi - lo)[:, None] * rule.weights).ravel()
    length = np.linalg.norm(end - start)
    return start + t[:, None] * (end - start), w * length


def shared_vertex(panel_a, panel_b, tol: float = 1e-12):
    """Return ``(vertex, far_a, far_b)`` for two segments meeting at an endpoint."""
    a = [np.asarray(p, dtype=float) for p in panel_a]
    b = [np.asarray(p, dtype=float) for p in panel_b]
    scale = max(np.linalg.norm(a[1] - a[0]), np.linalg.norm(b[1] - b[0]))
    for i in range(2):
        for j in range(2):
            if np.linalg.norm(a[i] - b[j]) <= tol * scale:
                return a[i], a[1 - i], b[1 - j]
    raise NoSharedVertex("panels do not share an endpoint")


def corner_pair_integral(panel_a, panel_b, kernel: Callable, depth: int = 12, order: int = 8):
    """int_a int_b kernel(x, y) for segments sharing one vertex.

    Both segments are graded geometrically toward the shared vertex, which
    resolves the integrable singularity there.  ``kernel(x, y)`` receives
    broadcastable point arrays with trailing dimension 2.
    """
    v, fa, fb = shared_vertex(panel_a, panel_b)
    xa, wa = graded_points(v, fa, depth, order)
    xb, wb = graded_points(v, fb, depth, order)
    vals = kernel(xa[:, None, :], xb[None, :, :])
    return wa @ vals @ wb


def split_log_singularity(t):
    """Split ``log(1 - cos t) = log(t^2) + f_a(t)`` into singular and smooth parts.

    Returns ``(f_s, f_a)``.  For ``|t| < 0.5`` the smooth part uses the series
    ``-log 2 + log(1 - 2t^2/4! + 2t^4/6! - ...)``.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t == 0) or np.any(np.abs(t) >= np.pi):
        raise DomainError("split_log_singularity needs 0 < |t| < pi")
    fs = np.log(t * t)
    small = np.abs(t) < 0.5
    fa = np.empty_like(t)
    ts = t[small] ** 2
    # (1 - cos t) / (t^2/2) = 1 + sum_{n>=1} 2 (-t^2)^n / (2n+2)!
    series = np.zeros_like(ts)
    term = np.ones_like(ts)
    for n in range(1, 12):
        term = term * (-ts) / ((2 * n + 1) * (2 * n + 2))
        series += term
    fa[small] = -np.log(2.0) + np.log1p(series)
    tl = t[~small]
    fa[~small] = np.log(1 - np.cos(tl)) - np.log(tl * tl)
    return fs, fa
