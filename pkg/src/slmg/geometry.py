"""Boundary curves, nested panel meshes and intergrid transfer matrices.

A boundary is either a simple closed polygon or a circle.  Meshes consist of
piecewise-constant panels (straight segments on polygons, equal-angle arcs on
circles); each refinement halves every panel, so the panel ``i`` of level
``k`` has children ``2i`` and ``2i+1`` on level ``k+1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sps

from slmg.errors import (
    DegenerateEdge,
    GeometryError,
    LevelMismatch,
    RadiusTooLarge,
    SelfIntersection,
    TooCoarse,
    TooFewVertices,
)
from slmg.quadrature import gauss_rule

MIN_COARSE_PANELS = 3


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _segments_intersect(p1, p2, q1, q2, tol=0.0) -> bool:
    d1 = _cross(p2 - p1, q1 - p1)
    d2 = _cross(p2 - p1, q2 - p1)
    d3 = _cross(q2 - q1, p1 - q1)
    d4 = _cross(q2 - q1, p2 - q1)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and (
        (d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)
    ):
        return True

    def on_segment(a, b, c, d):
        # c collinear with a-b and inside its bounding box
        return abs(d) <= tol and min(a[0], b[0]) - tol <= c[0] <= max(a[0], b[0]) + tol and \
            min(a[1], b[1]) - tol <= c[1] <= max(a[1], b[1]) + tol

    return (
        on_segment(p1, p2, q1, d1)
        or on_segment(p1, p2, q2, d2)
        or on_segment(q1, q2, p1, d3)
        or on_segment(q1, q2, p2, d4)
    )


def segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean distance from each point to the segment ``[a, b]``."""
    points = np.atleast_2d(points)
    d = b - a
    t = np.clip(((points - a) @ d) / (d @ d), 0.0, 1.0)
    proj = a + t[:, None] * d
    return np.linalg.norm(points - proj, axis=1)


@dataclass(frozen=True, eq=False)
class PolygonBoundary:
    """Simple closed polygon with counterclockwise vertices."""

    vertices: np.ndarray

    kind = "polygon"

    @property
    def n_edges(self) -> int:
        return len(self.vertices)

    @property
    def edges(self) -> list[tuple[np.ndarray, np.ndarray]]:
        v = self.vertices
        return [(v[j], v[(j + 1) % len(v)]) for j in range(len(v))]

    @property
    def edge_lengths(self) -> np.ndarray:
        v = self.vertices
        return np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)

    @property
    def total_length(self) -> float:
        return float(self.edge_lengths.sum())

    @property
    def diameter(self) -> float:
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)))

    @property
    def signed_area(self) -> float:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        return 0.5 * float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))

    @property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        c = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        a = 0.5 * c.sum()
        return np.array([np.sum((v[:, 0] + w[:, 0]) * c), np.sum((v[:, 1] + w[:, 1]) * c)]) / (6 * a)

    def contains(self, points) -> np.ndarray:
        """Even-odd point-in-polygon test (boundary points count as inside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        x, y = pts[:, 0:1], pts[:, 1:2]
        crosses = ((v[:, 1] > y) != (w[:, 1] > y)) & (
            x < (w[:, 0] - v[:, 0]) * (y - v[:, 1]) / (w[:, 1] - v[:, 1] + 1e-300) + v[:, 0]
        )
        inside = np.count_nonzero(crosses, axis=1) % 2 == 1
        return inside | (self.distance(pts) < 1e-14)

    def distance(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.min([segment_distance(pts, a, b) for a, b in self.edges], axis=0)

    def scaled(self, factor: float) -> "PolygonBoundary":
        return PolygonBoundary(self.vertices * factor)


@dataclass(frozen=True, eq=False)
class CircleBoundary:
    radius: float
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))

    kind = "circle"

    def __post_init__(self):
        if not 0 < self.radius < 0.5:
            raise RadiusTooLarge(f"circle radius must lie in (0, 1/2), got {self.radius}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    @property
    def total_length(self) -> float:
        return 2 * np.pi * self.radius

    @property
    def diameter(self) -> float:
        return 2 * self.radius

    @property
    def centroid(self) -> np.ndarray:
        return self.center

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.linalg.norm(pts - self.center, axis=1) <= self.radius

    def distance(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.abs(np.linalg.norm(pts - self.center, axis=1) - self.radius)


Boundary = PolygonBoundary | CircleBoundary


def build_polygon(vertices: Sequence[Sequence[float]]) -> PolygonBoundary:
    """Validate a vertex list and return a counterclockwise polygon.

    Clockwise input is reversed.  Raises ``TooFewVertices``,
    ``DegenerateEdge`` (zero-length edge) or ``SelfIntersection``.
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2:
        raise GeometryError("vertices must be a list of 2D points")
    n = len(v)
    if n < 3:
        raise TooFewVertices(f"need at least 3 vertices, got {n}")
    w = np.roll(v, -1, axis=0)
    lengths = np.linalg.norm(w - v, axis=1)
    scale = float(np.max(lengths))
    if np.any(lengths <= 1e-14 * max(scale, 1e-300)):
        raise DegenerateEdge("polygon has a zero-length edge (repeated vertex)")

    tol = 1e-13 * scale
    for i in range(n):
        a0, a1 = v[i], w[i]
        # adjacent edge folding back onto this one
        nxt = w[(i + 1) % n]
        e0, e1 = a1 - a0, nxt - a1
        if abs(_cross(e0, e1)) <= tol * scale and np.dot(e0, e1) < 0:
            raise SelfIntersection(f"edges {i} and {(i + 1) % n} overlap")
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_intersect(a0, a1, v[j], w[j], tol=tol * scale):
                raise SelfIntersection(f"edges {i} and {j} intersect")

    poly = PolygonBoundary(v)
    if poly.signed_area < 0:
        poly = PolygonBoundary(v[::-1].copy())
    if poly.signed_area <= 0:
        raise SelfIntersection("polygon has zero area")
    return poly


@dataclass(frozen=True, eq=False)
class MeshLevel:
    """Piecewise-constant panel mesh on one refinement level.

    Panel ``i`` runs from ``starts[i]`` to ``ends[i]``; ``ends[i] ==
    starts[i+1]`` cyclically.  ``edge_ids`` records which polygon edge each
    panel lies on (``-1`` on circles); ``angles`` holds arc end angles on
    circles.
    """

    level: int
    boundary: Boundary
    starts: np.ndarray
    ends: np.ndarray
    lengths: np.ndarray
    edge_ids: np.ndarray
    angles: np.ndarray | None = None

    @property
    def kind(self) -> str:
        return self.boundary.kind

    @property
    def n_panels(self) -> int:
        return len(self.lengths)

    @property
    def h(self) -> float:
        return float(self.lengths.max())

    @property
    def nodes(self) -> np.ndarray:
        return self.starts

    @property
    def is_uniform(self) -> bool:
        return bool(np.ptp(self.lengths) <= 1e-12 * self.h)

    @property
    def midpoints(self) -> np.ndarray:
        if self.angles is not None:
            mid = 0.5 * (self.angles[:, 0] + self.angles[:, 1])
            return self.boundary.center + self.boundary.radius * np.c_[np.cos(mid), np.sin(mid)]
        return 0.5 * (self.starts + self.ends)

    @property
    def tangents(self) -> np.ndarray:
        d = self.ends - self.starts
        return d / np.linalg.norm(d, axis=1)[:, None]

    @property
    def normals(self) -> np.ndarray:
        """Unit normals pointing out of the enclosed region (polygons)."""
        t = self.tangents
        return np.c_[t[:, 1], -t[:, 0]]

    @property
    def arclength_starts(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.lengths)[:-1]])

    @property
    def arclength_midpoints(self) -> np.ndarray:
        return self.arclength_starts + 0.5 * self.lengths

    def quadrature(self, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
        """Gauss points ``(N, q, 2)`` and weights ``(N, q)`` (with Jacobian)."""
        rule = gauss_rule(order)
        t = 0.5 * (rule.nodes + 1.0)
        if self.angles is not None:
            th = self.angles[:, :1] + t[None, :] * (self.angles[:, 1:] - self.angles[:, :1])
            pts = self.boundary.center + self.boundary.radius * np.stack([np.cos(th), np.sin(th)], axis=-1)
        else:
            pts = self.starts[:, None, :] + t[None, :, None] * (self.ends - self.starts)[:, None, :]
        wts = 0.5 * rule.weights[None, :] * self.lengths[:, None]
        return pts, wts


@dataclass(frozen=True, eq=False)
class MeshHierarchy:
    boundary: Boundary
    levels: list[MeshLevel]
    restrictions: list[sps.csr_matrix]

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def level(self, k: int) -> MeshLevel:
        """Level ``k`` counted from 1 (coarsest)."""
        return self.levels[k - 1]

    def restriction(self, k: int) -> sps.csr_matrix:
        """``C_k``: the ``N_k x N_{k+1}`` 0/1 matrix, ``k = 1..J-1``."""
        return self.restrictions[k - 1]


def restriction_matrix(n_coarse: int) -> sps.csr_matrix:
    rows = np.repeat(np.arange(n_coarse), 2)
    cols = np.arange(2 * n_coarse)
    return sps.csr_matrix((np.ones(2 * n_coarse), (rows, cols)), shape=(n_coarse, 2 * n_coarse))


def _polygon_coarse(boundary: PolygonBoundary, divisions) -> MeshLevel:
    n_edges = boundary.n_edges
    divs = [int(divisions)] * n_edges if np.isscalar(divisions) else [int(d) for d in divisions]
    if len(divs) != n_edges:
        raise GeometryError(f"need one division count per edge ({n_edges}), got {len(divs)}")
    if min(divs) < 1:
        raise TooCoarse("every edge needs at least one panel")
    starts, ends, ids = [], [], []
    for j, ((a, b), m) in enumerate(zip(boundary.edges, divs)):
        t = np.linspace(0.0, 1.0, m + 1)
        p = a + t[:, None] * (b - a)
        p[-1] = b
        starts.append(p[:-1])
        ends.append(p[1:])
        ids.append(np.full(m, j))
    starts, ends = np.vstack(starts), np.vstack(ends)
    return MeshLevel(1, boundary, starts, ends, np.linalg.norm(ends - starts, axis=1), np.concatenate(ids))


def _circle_level(boundary: CircleBoundary, n: int, level: int) -> MeshLevel:
    th = 2 * np.pi * np.arange(n + 1) / n
    angles = np.c_[th[:-1], th[1:]]
    c, r = boundary.center, boundary.radius
    starts = c + r * np.c_[np.cos(th[:-1]), np.sin(th[:-1])]
    ends = c + r * np.c_[np.cos(th[1:]), np.sin(th[1:])]
    ends[-1] = starts[0]
    lengths = np.full(n, r * 2 * np.pi / n)
    return MeshLevel(level, boundary, starts, ends, lengths, np.full(n, -1), angles)


def _refine(mesh: MeshLevel) -> MeshLevel:
    n = mesh.n_panels
    if mesh.angles is not None:
        return _circle_level(mesh.boundary, 2 * n, mesh.level + 1)
    mids = 0.5 * (mesh.starts + mesh.ends)
    starts = np.empty((2 * n, 2))
    ends = np.empty((2 * n, 2))
    starts[0::2], starts[1::2] = mesh.starts, mids
    ends[0::2], ends[1::2] = mids, mesh.ends
    lengths = np.repeat(0.5 * mesh.lengths, 2)
    return MeshLevel(mesh.level + 1, mesh.boundary, starts, ends, lengths, np.repeat(mesh.edge_ids, 2))


def build_hierarchy(boundary: Boundary, coarse_divisions, n_levels: int) -> MeshHierarchy:
    """Build ``n_levels`` nested meshes by repeated halving.

    ``coarse_divisions`` is the panel count per polygon edge (scalar or one
    entry per edge); for circles it is the total number of coarse arcs.
    """
    if n_levels < 1:
        raise GeometryError("need at least one level")
    if boundary.kind == "circle":
        n1 = int(np.sum(coarse_divisions))
        if n1 < MIN_COARSE_PANELS:
            raise TooCoarse(f"coarsest mesh needs >= {MIN_COARSE_PANELS} panels, got {n1}")
        coarse = _circle_level(boundary, n1, 1)
    else:
        coarse = _polygon_coarse(boundary, coarse_divisions)
        if coarse.n_panels < MIN_COARSE_PANELS:
            raise TooCoarse(f"coarsest mesh needs >= {MIN_COARSE_PANELS} panels, got {coarse.n_panels}")
    levels = [coarse]
    for _ in range(n_levels - 1):
        levels.append(_refine(levels[-1]))
    restrictions = [restriction_matrix(m.n_panels) for m in levels[:-1]]
    return MeshHierarchy(boundary, levels, restrictions)


def coefficient_map(values, mesh: MeshLevel) -> np.ndarray:
    """Coefficient vector of a piecewise-constant function on ``mesh``.

    For per-panel values this is the identity (the basis is made of
    orthogonal indicator functions); callables are reduced to their panel
    averages, i.e. the L2 projection onto the panel space.
    """
    if callable(values):
        return panel_average(values, mesh)
    v = np.asarray(values)
    if v.shape != (mesh.n_panels,):
        raise LevelMismatch(f"expected {mesh.n_panels} panel values, got shape {v.shape}")
    return v.copy()


def panel_average(func: Callable[[np.ndarray], np.ndarray], mesh: MeshLevel, order: int = 16) -> np.ndarray:
    pts, wts = mesh.quadrature(order)
    vals = np.asarray(func(pts.reshape(-1, 2))).reshape(pts.shape[:2])
    return np.sum(vals * wts, axis=1) / mesh.lengths


def prolongate(coarse: np.ndarray, restriction: sps.csr_matrix) -> np.ndarray:
    return restriction.T @ coarse
